from .kernel import BACKEND, KernelResult, solve
from .problem import CompiledProgram, ConvexProgram

__all__ = ["BACKEND", "KernelResult", "solve", "ConvexProgram", "CompiledProgram"]
