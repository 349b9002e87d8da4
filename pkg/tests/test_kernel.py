import numpy as np
import pytest

from coopsim.solver import kernel
from coopsim.solver.kernel import ConvexProgram, KernelError, solve
from coopsim.solver.problem import CompiledProgram


def _lp_box():
    # min x0 + 2*x1  s.t.  x0 >= 1, x1 >= 2, x <= 10  ->  optimum (1, 2).
    prog = ConvexProgram(2, [1.0, 2.0])
    prog.add_box(0, lower=1.0, upper=10.0)
    prog.add_box(1, lower=2.0, upper=10.0)
    return prog


def test_lp_box_optimum():
    res = solve(_lp_box())
    assert res.status == "optimal"
    assert res.x == pytest.approx([1.0, 2.0], abs=1e-6)
    assert res.objective == pytest.approx(5.0, abs=1e-5)


def test_exp2_constraint_analytic():
    # min x  s.t.  2^(-x) - 0.25 <= 0  ->  x = 2.
    prog = ConvexProgram(1, [1.0])
    prog.add_constraint(offset=-0.25, exp2=[(1.0, [-1.0], 0.0)])
    prog.add_box(0, upper=100.0)
    res = solve(prog)
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(2.0, abs=1e-6)


def test_inverse_constraint_analytic():
    # min x0 + x1  s.t.  1/x0 <= 1/a, 1/x1 <= 1/b  ->  (a, b).
    a, b = 3.0, 0.5
    prog = ConvexProgram(2, [1.0, 1.0])
    prog.add_constraint(offset=-1.0 / a, inv=[(1.0, 0)])
    prog.add_constraint(offset=-1.0 / b, inv=[(1.0, 1)])
    prog.add_box(0, upper=100.0)
    prog.add_box(1, upper=100.0)
    res = solve(prog, x0=[50.0, 50.0])
    assert res.status == "optimal"
    assert res.x == pytest.approx([a, b], rel=1e-6)


def test_quadratic_constraint_analytic():
    # min -x  s.t.  (x - 1)^2 <= 4  ->  x = 3.
    prog = ConvexProgram(1, [-1.0])
    prog.add_constraint(offset=-4.0, quad=[(1.0, [1.0], -1.0)])
    res = solve(prog)
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(3.0, abs=1e-6)


def test_mixed_terms_projection():
    # min x0+x1  s.t.  2^(1-x0) <= 1, 4/x1 <= 2  ->  (1, 2).
    prog = ConvexProgram(2, [1.0, 1.0])
    prog.add_constraint(offset=-1.0, exp2=[(1.0, [-1.0, 0.0], 1.0)])
    prog.add_constraint(offset=-2.0, inv=[(4.0, 1)])
    prog.add_box(0, upper=50.0)
    prog.add_box(1, upper=50.0)
    res = solve(prog)
    assert res.status == "optimal"
    assert res.x == pytest.approx([1.0, 2.0], rel=1e-5)


def test_phase1_detects_infeasibility():
    # x >= 2 and x <= 1 cannot both hold.
    prog = ConvexProgram(1, [1.0])
    prog.add_box(0, lower=2.0, upper=1.0)
    res = solve(prog)
    assert res.status == "infeasible"
    assert res.x is None and res.objective == np.inf


def test_phase1_finds_interior_from_bad_hint():
    prog = _lp_box()
    res = solve(prog, x0=[0.0, 0.0])  # infeasible hint -> phase-I recovers
    assert res.status == "optimal"
    assert res.x == pytest.approx([1.0, 2.0], abs=1e-6)


def test_unconstrained_program_rejected():
    prog = ConvexProgram(1, [1.0])
    with pytest.raises(KernelError):
        solve(prog)


def test_backends_agree():
    backends = ["python"]
    try:
        kernel.get_backend("compiled")
        backends.append("compiled")
    except KernelError:
        pass
    progs = [_lp_box()]
    p2 = ConvexProgram(1, [1.0])
    p2.add_constraint(offset=-0.25, exp2=[(1.0, [-1.0], 0.0)])
    p2.add_box(0, upper=100.0)
    progs.append(p2)
    for prog in progs:
        compiled = prog.compile()
        sols = [solve(compiled, backend=b) for b in backends]
        for res in sols:
            assert res.status == "optimal"
        if len(sols) == 2:
            assert sols[0].x == pytest.approx(sols[1].x, rel=1e-8, abs=1e-10)
            assert sols[0].objective == pytest.approx(sols[1].objective,
                                                      rel=1e-8, abs=1e-10)


def test_backend_eval_parity_on_random_points():
    try:
        cy = kernel.get_backend("compiled")
    except KernelError:
        pytest.skip("compiled backend not built")
    py = kernel.get_backend("python")
    rng = np.random.default_rng(0)
    prog = ConvexProgram(3, [1.0, 1.0, 1.0])
    prog.add_constraint(row=[1.0, -0.5, 0.0], offset=-3.0,
                        exp2=[(0.7, [0.2, -0.1, 0.3], 0.1)],
                        inv=[(1.3, 2)],
                        quad=[(0.4, [0.5, 0.5, -0.2], 0.3)])
    prog.add_box(0, lower=0.1, upper=5.0)
    prog.add_box(1, lower=0.1, upper=5.0)
    prog.add_box(2, lower=0.1, upper=5.0)
    compiled = prog.compile()
    for _ in range(50):
        x = rng.uniform(0.15, 4.5, size=3)
        ok_p, f_p, phi_p, g_p, H_p = py.eval_barrier(compiled, x)
        ok_c, f_c, phi_c, g_c, H_c = cy.eval_barrier(compiled, x)
        assert ok_p == ok_c
        if not ok_p:
            continue
        assert np.allclose(f_p, f_c, rtol=1e-12, atol=1e-14)
        assert phi_p == pytest.approx(phi_c, rel=1e-12)
        assert np.allclose(g_p, g_c, rtol=1e-10, atol=1e-12)
        assert np.allclose(H_p, H_c, rtol=1e-10, atol=1e-12)


def test_normalization_keeps_solution():
    # The same constraint with huge coefficients still solves cleanly.
    prog = ConvexProgram(1, [1.0])
    prog.add_constraint(row=[-1e9], offset=2e9)  # x >= 2
    prog.add_box(0, upper=100.0)
    res = solve(prog)
    assert res.status == "optimal"
    assert res.x[0] == pytest.approx(2.0, rel=1e-6)


def test_phase1_shape():
    prog = _lp_box().compile()
    aug = prog.phase1()
    assert isinstance(aug, CompiledProgram)
    assert aug.n == prog.n + 1 and aug.m == prog.m
    assert aug.cost[-1] == 1.0 and np.all(aug.cost[:-1] == 0.0)
    assert np.all(aug.A[:, -1] == -1.0)
