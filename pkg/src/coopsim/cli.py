"""Command-line front end: config parsing, figure presets, CSV/JSON output.

Config files are flat ``key = value`` text in friendly units (dBm, bytes,
ms, MHz, GHz); parsing converts to SI exactly once.  Results are plot data
(per-trial CSV plus a summary JSON), never images.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .campaign import run_campaign, sweep as run_sweep
from .config import ConfigError, ScenarioConfig
from .optimizer import (allocate_bandwidth_maxmin_df, brute_force_oracle,
                        minimize_power)
from .protocol import MODES
from .scenario import sample_channels, sample_topology

CSV_HEADER = "trial,mode,n1h,n2h,total_power_dbm,feasible,overflow,outage,iterations"

PRESETS = ("fig5", "fig6", "fig7a", "fig7b", "fig9", "fig10", "fig11",
           "fig12", "fig13", "fig14", "fig15", "fig16", "fig17")


# ---------------------------------------------------------------------------
# Config text <-> ScenarioConfig
# ---------------------------------------------------------------------------

def _dbm_to_watts(v: float) -> float:
    return 10.0 ** ((v - 30.0) / 10.0)


def _watts_to_dbm(w: float) -> float:
    return 10.0 * math.log10(w) + 30.0


# schema key -> (config field, parse conversion, render conversion)
_SCHEMA = {
    "area_m": ("area_side", float, float),
    "n_devices": ("n_devices", int, int),
    "n_helpers": ("n_helpers", int, int),
    "ris_elements": ("ris_elements", int, int),
    "payload_bytes": ("payload_bits", lambda v: float(v) * 8.0, lambda x: x / 8.0),
    "cycle_ms": ("cycle_time", lambda v: float(v) * 1e-3, lambda x: x * 1e3),
    "bandwidth_mhz": ("bandwidth", lambda v: float(v) * 1e6, lambda x: x / 1e6),
    "carrier_ghz": ("carrier_freq", lambda v: float(v) * 1e9, lambda x: x / 1e9),
    "pmax_dbm": ("p_max", lambda v: _dbm_to_watts(float(v)), _watts_to_dbm),
    "noise_psd_dbm_hz": ("noise_psd", lambda v: _dbm_to_watts(float(v)), _watts_to_dbm),
    "shadow_std_db": ("shadow_std_db", float, float),
    "rician_k": ("rician_k", float, float),
    "theta": ("theta", float, float),
    "pilots": ("pilots", int, int),
    "csi": ("csi_mode", str, str),
    "seed": ("master_seed", int, int),
}


def _parse_kv(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else (":" if ":" in line else None)
        if sep is None:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split(sep, 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = val
    return out


def parse_config(text: str) -> ScenarioConfig:
    """Build a validated ScenarioConfig from flat key-value text.

    Unknown keys are an error (``sweep.param`` / ``sweep.values`` are
    allowed and read separately by ``parse_sweep``); missing keys take the
    documented defaults.
    """
    kv = _parse_kv(text)
    fields = {}
    for key, val in kv.items():
        if key.startswith("sweep."):
            continue
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        name, conv, _ = _SCHEMA[key]
        try:
            fields[name] = conv(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {val!r} ({exc})") from exc
    return ScenarioConfig(**fields)      # range checks live in validate()


def parse_sweep(text: str):
    """(parameter, values) from the sweep.param / sweep.values pair, or None."""
    kv = _parse_kv(text)
    if "sweep.param" not in kv and "sweep.values" not in kv:
        return None
    if "sweep.param" not in kv or "sweep.values" not in kv:
        raise ConfigError("sweep.param and sweep.values must appear together")
    values = [float(v) for v in kv["sweep.values"].replace(",", " ").split()]
    if not values:
        raise ConfigError("sweep.values is empty")
    return kv["sweep.param"], values


def _nudge(s: float, inv, target: float) -> float:
    """Adjust s by ulps until inv(s) == target (render/parse exactness)."""
    if inv(s) == target:
        return s
    up = dn = s
    for _ in range(100):
        up = math.nextafter(up, math.inf)
        if inv(up) == target:
            return up
        dn = math.nextafter(dn, -math.inf)
        if inv(dn) == target:
            return dn
    return s


def render(config: ScenarioConfig) -> str:
    """Config text that parses back to an equal ScenarioConfig."""
    lines = []
    for key, (name, conv, render_conv) in _SCHEMA.items():
        target = getattr(config, name)
        val = render_conv(target)
        if isinstance(val, float):
            val = _nudge(val, lambda s, c=conv: c(repr(s)), target)
            lines.append(f"{key} = {val!r}")
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def config_echo(config: ScenarioConfig) -> dict:
    return {key: getattr(config, name) for key, (name, _, _) in _SCHEMA.items()}


# ---------------------------------------------------------------------------
# Run specifications and presets
# ---------------------------------------------------------------------------

@dataclass
class Variant:
    label: str
    mode: str
    overrides: dict = field(default_factory=dict)
    classifier: str = "auto"
    ris_phase_mode: str = "optimized"


@dataclass
class RunSpec:
    config: ScenarioConfig
    mode: str = "df-tdma"
    trials: int = 500
    seed: int = 0
    out: str = "results"
    sweep_param: str = None
    sweep_values: list = None
    preset: str = None
    variants: list = None
    screen_only: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")


def preset(name: str) -> RunSpec:
    """Desk-scale experiment definitions, one per reproduced figure."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    base = ScenarioConfig()

    def cdf(config, variants, trials=500):
        return RunSpec(config=config, mode=variants[0].mode, trials=trials,
                       out=f"results/{name}", preset=name, variants=variants)

    def th_sweep(config, mode, trials=2000, values=(0.5, 0.6, 0.7, 0.8, 0.9)):
        return RunSpec(config=config, mode=mode, trials=trials,
                       out=f"results/{name}", preset=name,
                       sweep_param="theta", sweep_values=list(values),
                       screen_only=True)

    if name == "fig5":
        cfg = base.replace(payload_bits=32 * 8.0, p_max=_dbm_to_watts(20.0))
        return cdf(cfg, [
            Variant("1h", "single-hop"),
            Variant("1of1", "df-tdma", {"n_helpers": 1}),
            Variant("1of2", "df-tdma", {"n_helpers": 2}),
            Variant("1of4", "df-tdma", {"n_helpers": 4}),
        ])
    if name == "fig6":
        cfg = base.replace(payload_bits=32 * 8.0, p_max=_dbm_to_watts(20.0),
                           n_helpers=1)
        return cdf(cfg, [
            Variant("algorithm", "df-tdma"),
            Variant("random", "df-tdma", classifier="random"),
            Variant("all-1h", "df-tdma", classifier="all-1h"),
            Variant("all-2h", "df-tdma", classifier="all-2h"),
        ])
    if name in ("fig7a", "fig7b"):
        bits = (64 if name == "fig7a" else 256) * 8.0
        cfg = base.replace(payload_bits=bits, n_helpers=2,
                           p_max=_dbm_to_watts(20.0))
        return cdf(cfg, [
            Variant("df-tdma", "df-tdma"),
            Variant("af-tdma", "af-tdma"),
            Variant("df-fdma", "df-fdma"),
            Variant("af-fdma", "af-fdma"),
        ])
    if name == "fig9":
        cfg = base.replace(n_helpers=2, csi_mode="imperfect", theta=0.9, pilots=4)
        return RunSpec(config=cfg, mode="df-tdma", trials=2000,
                       out=f"results/{name}", preset=name,
                       sweep_param="p_max",
                       sweep_values=[_dbm_to_watts(d) for d in range(0, 35, 5)],
                       screen_only=True)
    if name == "fig10":
        cfg = base.replace(n_helpers=2, csi_mode="imperfect", pilots=4,
                           p_max=_dbm_to_watts(25.0))
        return th_sweep(cfg, "df-tdma")
    if name == "fig11":
        cfg = base.replace(ris_elements=16, n_helpers=1,
                           p_max=_dbm_to_watts(20.0))
        return cdf(cfg, [
            Variant("1-ris", "ris-tdma"),
            Variant("4-ris", "ris-tdma", {"n_helpers": 4}),
            Variant("4-ris-random", "ris-tdma", {"n_helpers": 4},
                    ris_phase_mode="random"),
        ])
    if name == "fig12":
        cfg = base.replace(n_helpers=4, p_max=_dbm_to_watts(20.0))
        return cdf(cfg, [
            Variant("1h", "single-hop", {"n_helpers": 0, "ris_elements": 0}),
            Variant("4-ris-16", "ris-tdma", {"ris_elements": 16}),
            Variant("4-ris-64", "ris-tdma", {"ris_elements": 64}),
        ])
    if name == "fig13":
        cfg = base.replace(p_max=_dbm_to_watts(20.0))
        return cdf(cfg, [
            Variant("1of1", "df-tdma", {"n_helpers": 1}),
            Variant("1of4", "df-tdma", {"n_helpers": 4}),
            Variant("1-ris-64", "ris-tdma", {"n_helpers": 1, "ris_elements": 64}),
            Variant("4-ris-64", "ris-tdma", {"n_helpers": 4, "ris_elements": 64}),
        ])
    if name in ("fig14", "fig15"):
        cfg = base.replace(n_helpers=4, ris_elements=16, pilots=17,
                           csi_mode="imperfect", p_max=_dbm_to_watts(23.0))
        return th_sweep(cfg, "ris-tdma")
    # fig16 / fig17
    cfg = base.replace(n_helpers=4, ris_elements=64, pilots=65,
                       csi_mode="imperfect", p_max=_dbm_to_watts(23.0),
                       cycle_time=1e-3)
    return th_sweep(cfg, "ris-tdma")


# ---------------------------------------------------------------------------
# Execution and output
# ---------------------------------------------------------------------------

def format_csv(outcomes) -> str:
    rows = [CSV_HEADER]
    for o in outcomes:
        rows.append(
            f"{o.trial_index},{o.mode},{o.n_one_hop},{o.n_two_hop},"
            f"{o.total_power_dbm:.6f},{int(o.feasible)},{int(o.overflow)},"
            f"{int(o.outage)},{o.solver_iterations}"
        )
    return "\n".join(rows) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run(spec: RunSpec) -> int:
    """Execute a RunSpec; returns a process exit status."""
    base = Path(spec.out)
    cfg = spec.config.replace(master_seed=spec.seed)
    if spec.sweep_param is not None:
        summaries = run_sweep(cfg, spec.mode, spec.sweep_param,
                              spec.sweep_values, spec.trials,
                              screen_only=spec.screen_only)
        payload = {
            "version": __version__,
            "config": config_echo(cfg),
            "mode": spec.mode,
            "trials": spec.trials,
            "sweep": {
                "param": spec.sweep_param,
                "values": list(spec.sweep_values),
                "summaries": [s.to_dict() for s in summaries],
            },
        }
        _write(base.with_suffix(".json"), json.dumps(payload, indent=2) + "\n")
        return 0

    variants = spec.variants or [Variant("run", spec.mode)]
    single = len(variants) == 1
    for var in variants:
        vcfg = cfg.replace(**var.overrides)
        outcomes, summary = run_campaign(
            vcfg, var.mode, spec.trials,
            classifier=var.classifier, ris_phase_mode=var.ris_phase_mode,
            screen_only=spec.screen_only,
        )
        stem = base if single else base.parent / f"{base.name}_{var.label}"
        _write(stem.with_suffix(".csv"), format_csv(outcomes))
        payload = {
            "version": __version__,
            "config": config_echo(vcfg),
            "mode": var.mode,
            "label": var.label,
            "trials": spec.trials,
            "summary": summary.to_dict(),
        }
        _write(stem.with_suffix(".json"), json.dumps(payload, indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Tiny-instance oracle suite
# ---------------------------------------------------------------------------

def oracle_instances(n_instances: int, seed: int = 0):
    """Tiny 2-device scenarios (one single-hop, one two-hop; 3 power vars)."""
    from .classify import Schedule

    # Payload sized so optima land inside the oracle's [-40 dBm, p_max] grid.
    cfg = ScenarioConfig(n_devices=2, n_helpers=1, payload_bits=24000.0,
                         master_seed=seed)
    made = 0
    trial = 0
    while made < n_instances and trial < 50 * n_instances:
        topo = sample_topology(cfg, trial)
        ch = sample_channels(topo, cfg, trial)
        schedule = Schedule(one_hop=(0,), two_hop=(1,), relay_of={1: 0})
        trial += 1
        yield cfg, schedule, ch
        made += 1


def oracle_deviations(mode: str, n_instances: int = 5, seed: int = 0):
    """|SPCA - grid| deviations in dB over ``n_instances`` tiny instances.

    Instances that are infeasible for both methods are skipped and replaced,
    so the comparison always covers ``n_instances`` solvable cases.
    """
    devs = []
    for cfg, schedule, ch in oracle_instances(20 * n_instances, seed):
        if len(devs) >= n_instances:
            break
        report = minimize_power(mode, schedule, ch, cfg)
        if report.allocation is None:
            continue
        if mode == "df-fdma":
            ref = brute_force_oracle(mode, schedule, ch, cfg,
                                     beta=report.allocation.beta,
                                     beta_s=report.allocation.beta_s)
        elif mode == "af-fdma":
            ref = brute_force_oracle(mode, schedule, ch, cfg,
                                     beta=report.allocation.beta)
        else:
            ref = brute_force_oracle(mode, schedule, ch, cfg)
        if not np.isfinite(ref):
            continue
        devs.append(abs(10.0 * np.log10(report.objective_watts / ref)))
    return devs


def oracle_check(n_instances: int = 5, seed: int = 0) -> int:
    worst = 0.0
    for mode in ("df-tdma", "df-fdma", "af-tdma", "af-fdma"):
        devs = oracle_deviations(mode, n_instances, seed)
        mx = max(devs) if devs else float("nan")
        print(f"{mode}: max deviation {mx:.4f} dB over {len(devs)} instances")
        if devs:
            worst = max(worst, mx)
    print(f"overall max deviation: {worst:.4f} dB")
    return 0 if worst <= 0.3 else 1


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(prog="coopsim",
                                description="Cooperative subnetwork power simulator")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("--config", help="path to key-value config file")
        sp.add_argument("--mode", default="df-tdma", choices=MODES)
        sp.add_argument("--trials", type=int, default=500)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default="results")

    common(sub.add_parser("run", help="one Monte Carlo campaign"))
    common(sub.add_parser("sweep", help="parameter sweep (sweep.* keys in config)"))
    sp = sub.add_parser("preset", help="run a predefined figure experiment")
    sp.add_argument("--preset", required=True)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp = sub.add_parser("oracle-check", help="tiny-instance grid-oracle suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--instances", type=int, default=5)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "oracle-check":
            return oracle_check(args.instances, args.seed)
        if args.verb == "preset":
            spec = preset(args.preset)
            if args.trials is not None:
                spec.trials = args.trials
            spec.seed = args.seed
            if args.out is not None:
                spec.out = args.out
            return run(spec)

        cfg = ScenarioConfig()
        sweep_desc = None
        if args.config:
            text = Path(args.config).read_text()
            cfg = parse_config(text)
            sweep_desc = parse_sweep(text)
        spec = RunSpec(config=cfg, mode=args.mode, trials=args.trials,
                       seed=args.seed, out=args.out)
        if args.verb == "sweep":
            if sweep_desc is None:
                raise ConfigError("sweep verb needs sweep.param / sweep.values "
                                  "in the config file")
            spec.sweep_param, spec.sweep_values = sweep_desc
        return run(spec)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
