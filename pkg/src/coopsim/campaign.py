"""Monte Carlo campaign engine: independent trials, deterministic aggregation.

A trial is a pure function of (config, mode, trial_index) plus the knobs
below, so trials can run on any number of workers and still aggregate to
identical results.  Channel realizations are keyed by trial and entity only
(not by mode), which pairs draws across modes and helper counts.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classify import Schedule, all_single_hop, classify_af, classify_df
from .config import ScenarioConfig
from .optimizer import feasible_at_pmax, minimize_power, optimize_phases
from .protocol import Allocation, outage_check, total_time
from .scenario import (_stream, apply_estimation_error, sample_channels,
                       sample_topology, training_budget)

CLASSIFIERS = ("auto", "random", "all-1h", "all-2h")
PHASE_MODES = ("optimized", "random")


@dataclass
class TrialOutcome:
    trial_index: int
    mode: str
    n_one_hop: int
    n_two_hop: int
    total_power_watts: float
    total_power_dbm: float
    feasible: bool
    overflow: bool
    outage: bool
    solver_iterations: int
    wall_time: float


@dataclass
class MetricsSummary:
    cdf_points: list                  # sorted (power_dbm, probability)
    overflow_rate: float
    outage_rate: float
    trial_count: int
    percentiles: dict                 # p5 / p50 / p95 of non-overflow dBm
    mean_iterations: float
    overflow_display: str = ""
    outage_display: str = ""

    def to_dict(self):
        return {
            "cdf": [[float(x), float(p)] for x, p in self.cdf_points],
            "overflow_rate": self.overflow_rate,
            "outage_rate": self.outage_rate,
            "overflow_display": self.overflow_display,
            "outage_display": self.outage_display,
            "trial_count": self.trial_count,
            "percentiles": self.percentiles,
            "mean_iterations": self.mean_iterations,
        }


def watts_to_dbm(w: float) -> float:
    if w <= 0:
        return -np.inf
    return 10.0 * np.log10(w * 1e3)


def rate_display(count: int, n: int) -> str:
    """Exact trial fraction, with sub-resolution rates flagged as '< 1/n'."""
    if count == 0:
        return f"< 1/{n}"
    return f"{count}/{n}"


def _random_schedule(channels, mode, config, trial_index) -> Schedule:
    """Uniform single/two-hop assignment with a uniform relay choice."""
    rng = _stream(config.master_seed, trial_index, f"classifier:{mode}")
    N, K = channels.n_devices, channels.n_helpers
    one, two, relay = [], [], {}
    for n in range(N):
        if K and rng.random() < 0.5:
            two.append(n)
            relay[n] = int(rng.integers(K))
        else:
            one.append(n)
    return Schedule(one_hop=tuple(one), two_hop=tuple(two), relay_of=relay)


def _best_relay_all_2h(channels) -> Schedule:
    N, K = channels.n_devices, channels.n_helpers
    if K == 0:
        return all_single_hop(N)
    ga = np.abs(channels.h_a_hat) ** 2
    gs = np.abs(channels.h_s_hat) ** 2
    metric = np.minimum(ga[None, :], gs)
    relay = {n: int(np.argmax(metric[n])) for n in range(N)}
    return Schedule(one_hop=(), two_hop=tuple(range(N)), relay_of=relay)


def _make_schedule(mode, channels, config, trial_index, classifier) -> Schedule:
    if classifier == "random":
        return _random_schedule(channels, mode, config, trial_index)
    if classifier == "all-1h":
        return all_single_hop(channels.n_devices)
    if classifier == "all-2h":
        return _best_relay_all_2h(channels)
    if classifier != "auto":
        raise ValueError(f"unknown classifier {classifier!r}")
    if mode in ("single-hop", "ris-tdma"):
        return all_single_hop(channels.n_devices)
    if mode.startswith("df"):
        return classify_df(channels)
    return classify_af(channels, config.p_max, config)


def _pmax_policy_power(schedule: Schedule, config: ScenarioConfig) -> float:
    """Worst-case accounting: p_max for every scheduled transmission."""
    if config.payload_bits <= 0:
        return 0.0
    return config.p_max * (schedule.n_devices + len(schedule.two_hop))


def run_trial(config: ScenarioConfig, mode: str, trial_index: int, *,
              classifier: str = "auto", ris_phase_mode: str = "optimized",
              screen_only: bool = False) -> TrialOutcome:
    """One full Monte Carlo trial; see the module docstring for the pipeline.

    ``screen_only`` skips the power optimization and reports feasibility,
    overflow, and outage at the maximum-power policy (used for large
    overflow/outage sweeps where power values are not collected).
    """
    t_start = time.perf_counter()
    topo = sample_topology(config, trial_index)
    ch_true = sample_channels(topo, config, trial_index)
    if config.csi_mode == "imperfect":
        ch = apply_estimation_error(ch_true, config, trial_index)
    else:
        ch = ch_true
    t_prime, _ = training_budget(config)
    schedule = _make_schedule(mode, ch, config, trial_index, classifier)

    phases = None
    if mode == "ris-tdma":
        if ris_phase_mode == "random":
            rng = _stream(config.master_seed, trial_index, "ris-random-phase")
            phases = optimize_phases(ch, method="random", rng=rng)
        elif ris_phase_mode == "optimized":
            phases = optimize_phases(ch)
        else:
            raise ValueError(f"unknown ris_phase_mode {ris_phase_mode!r}")

    alloc = None
    iterations = 0
    feasible = False
    if screen_only:
        try:
            feasible = feasible_at_pmax(mode, schedule, ch, config, phases=phases)
        except Exception:
            feasible = False
    else:
        try:
            report = minimize_power(mode, schedule, ch, config, phases=phases)
        except Exception:
            report = None
        if report is not None and report.allocation is not None:
            iterations = report.iterations
            total = total_time(mode, schedule, report.allocation, ch, config)
            if total <= t_prime * (1.0 + 1e-12):
                feasible = True
                alloc = report.allocation

    overflow = not feasible
    if feasible and not screen_only:
        power_w = float(np.sum(alloc.p_dev) + np.sum(alloc.p_relay))
    else:
        power_w = _pmax_policy_power(schedule, config)
        N = schedule.n_devices
        alloc = Allocation(p_dev=np.full(N, config.p_max),
                           p_relay=np.where(
                               [n in schedule.two_hop for n in range(N)],
                               config.p_max, 0.0))
        if mode == "ris-tdma":
            alloc.ris_phases = phases

    if config.csi_mode == "imperfect":
        outage = outage_check(mode, schedule, alloc, ch_true, ch, config)
    else:
        outage = False

    return TrialOutcome(
        trial_index=trial_index,
        mode=mode,
        n_one_hop=len(schedule.one_hop),
        n_two_hop=len(schedule.two_hop),
        total_power_watts=power_w,
        total_power_dbm=watts_to_dbm(power_w),
        feasible=feasible,
        overflow=overflow,
        outage=outage,
        solver_iterations=iterations,
        wall_time=time.perf_counter() - t_start,
    )


def empirical_cdf(values) -> list:
    """Right-continuous step CDF as sorted (value, cumulative prob) pairs."""
    values = list(values)
    if not values:
        raise ValueError("empirical_cdf needs at least one value")
    xs, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    probs = np.cumsum(counts) / len(values)
    return list(zip(xs.tolist(), probs.tolist()))


def summarize(outcomes) -> MetricsSummary:
    n = len(outcomes)
    overflow = sum(1 for o in outcomes if o.overflow)
    outage = sum(1 for o in outcomes if o.outage)
    dbm = [o.total_power_dbm for o in outcomes if not o.overflow]
    if dbm:
        cdf = empirical_cdf(dbm)
        p5, p50, p95 = np.percentile(dbm, [5.0, 50.0, 95.0])
        pct = {"p5": float(p5), "p50": float(p50), "p95": float(p95)}
    else:
        cdf = []
        pct = {"p5": float("nan"), "p50": float("nan"), "p95": float("nan")}
    return MetricsSummary(
        cdf_points=cdf,
        overflow_rate=overflow / n,
        outage_rate=outage / n,
        trial_count=n,
        percentiles=pct,
        mean_iterations=float(np.mean([o.solver_iterations for o in outcomes])),
        overflow_display=rate_display(overflow, n),
        outage_display=rate_display(outage, n),
    )


def _trial_star(args):
    config, mode, idx, classifier, phase_mode, screen_only = args
    return run_trial(config, mode, idx, classifier=classifier,
                     ris_phase_mode=phase_mode, screen_only=screen_only)


def default_workers() -> int:
    return max(1, int(os.environ.get("COOPSIM_WORKERS", "1")))


def run_campaign(config: ScenarioConfig, mode: str, n_trials: int, *,
                 classifier: str = "auto", ris_phase_mode: str = "optimized",
                 screen_only: bool = False, workers: int = None):
    """Run ``n_trials`` independent trials; returns (outcomes, summary).

    Outcomes are sorted by trial index, so the aggregation is independent
    of worker count and scheduling order.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if workers is None:
        workers = default_workers()
    jobs = [(config, mode, i, classifier, ris_phase_mode, screen_only)
            for i in range(n_trials)]
    if workers <= 1:
        outcomes = [_trial_star(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, n_trials // (4 * workers))
            outcomes = list(pool.map(_trial_star, jobs, chunksize=chunk))
    outcomes.sort(key=lambda o: o.trial_index)
    return outcomes, summarize(outcomes)


_SWEEP_FIELDS = {
    "p_max": "p_max",
    "theta": "theta",
    "K": "n_helpers",
    "J": "ris_elements",
    "B": "payload_bits",
    "L": "pilots",
}


def sweep(config: ScenarioConfig, mode: str, parameter: str, values, n_trials: int,
          **kwargs):
    """One campaign per parameter value with shared per-trial seeding.

    The channel streams are keyed by entity indices, so sweeping K or J
    extends realizations instead of reshuffling them and the campaigns stay
    paired across values.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if parameter not in _SWEEP_FIELDS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; "
                         f"expected one of {sorted(_SWEEP_FIELDS)}")
    fld = _SWEEP_FIELDS[parameter]
    out = []
    for v in values:
        cfg = config.replace(**{fld: type(getattr(config, fld))(v)})
        _, summary = run_campaign(cfg, mode, n_trials, **kwargs)
        out.append(summary)
    return out
