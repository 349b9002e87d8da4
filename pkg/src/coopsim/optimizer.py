"""Transmit-power minimization under the cycle-time budget.

Each relaying mode is handled by a sequential convex approximation (SPCA)
driver that builds structured convex subproblems for the barrier kernel.
The DF and RIS reformulations are convex outright (the exponential-type
link constraints are exact), so their drivers converge in one pass; the AF
drivers iterate because the bilinear SNR constraint is linearized around
the previous iterate with upper/lower product envelopes.

Powers are optimized in units of p_max for conditioning; reported values
are watts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .classify import Schedule, all_single_hop
from .config import ScenarioConfig
from .protocol import Allocation, rate_report, total_time
from .scenario import ChannelSet, training_budget
from .solver import ConvexProgram, solve as kernel_solve
from .solver.kernel import STATUS_OPTIMAL

SPCA_TOL = 1e-6
SPCA_MAX_ITER = 50
_SHRINK = 1.0 - 1e-6     # pull analytic warm starts strictly inside


@dataclass
class SolveReport:
    allocation: Allocation
    status: str                  # optimal | max_iter | infeasible_at_pmax
    iterations: int
    objective_watts: float
    kkt_residual: float = np.nan
    objective_trace: list = field(default_factory=list)


def theta_lower(x, y, x_anchor, y_anchor):
    """Concave lower envelope of the product x*y, tight at the anchor."""
    s_a = x_anchor + y_anchor
    return 0.5 * s_a * (x + y) - 0.25 * s_a ** 2 - 0.25 * (x - y) ** 2


def theta_upper(x, y, x_anchor, y_anchor):
    """Convex upper envelope of the product x*y, tight at the anchor."""
    d_a = x_anchor - y_anchor
    return 0.25 * (x + y) ** 2 + 0.25 * d_a ** 2 - 0.5 * d_a * (x - y)


def closed_form_single_device(payload_bits, budget, gain_over_noise):
    """Optimal power for one device alone: the delay constraint held tight."""
    return (2.0 ** (payload_bits / budget) - 1.0) / gain_over_noise


def _gains(schedule: Schedule, channels: ChannelSet, config: ScenarioConfig):
    """Per-device channel-power/noise ratios from the estimated channels."""
    sigma0 = config.noise_power
    gd = np.abs(channels.h_d_hat) ** 2 / sigma0
    gs = np.zeros(schedule.n_devices)
    ga = np.zeros(schedule.n_devices)
    for n in schedule.two_hop:
        k = schedule.relay_of[n]
        gs[n] = np.abs(channels.h_s_hat[n, k]) ** 2 / sigma0
        ga[n] = np.abs(channels.h_a_hat[k]) ** 2 / sigma0
    return gd, gs, ga


def sanitize_schedule(schedule: Schedule, channels: ChannelSet,
                      config: ScenarioConfig) -> Schedule:
    """Reclassify two-hop devices whose relay link is degenerate (zero gain)."""
    _, gs, ga = _gains(schedule, channels, config)
    bad = [n for n in schedule.two_hop if gs[n] <= 0.0 or ga[n] <= 0.0]
    if not bad:
        return schedule
    one = tuple(sorted(set(schedule.one_hop) | set(bad)))
    two = tuple(n for n in schedule.two_hop if n not in bad)
    relay = {n: schedule.relay_of[n] for n in two}
    return Schedule(one_hop=one, two_hop=two, relay_of=relay)


def _budget(config: ScenarioConfig) -> tuple[float, float]:
    """(T', T' * W * theta) — the delay budget in seconds and in bit-slots."""
    t_prime, _ = training_budget(config)
    return t_prime, t_prime * config.bandwidth * config.effective_theta


# ---------------------------------------------------------------------------
# Feasibility screening at maximum power
# ---------------------------------------------------------------------------

def _df_fdma_alpha_window(schedule, gd, gs, ga, beta, beta_s, config, p):
    """Feasible range of the DF-FDMA time split at fixed powers, or None."""
    t_prime, budget = _budget(config)
    B = float(config.payload_bits)
    for n in schedule.one_hop:
        if B > 0:
            r = beta[n] * np.log2(1.0 + p * gd[n] / beta[n])
            if r <= 0 or B > budget * r:
                return None
    lo, hi = 0.0, 1.0 - config.processing_fraction
    for n in schedule.two_hop:
        if B <= 0:
            continue
        r1 = np.log2(1.0 + p * gs[n] / beta[n])
        r2 = np.log2(1.0 + p * ga[n] / beta_s[n])
        if r1 <= 0 or r2 <= 0:
            return None
        lo = max(lo, B / (beta[n] * r1 * budget))
        hi = min(hi, 1.0 - config.processing_fraction - B / (beta_s[n] * r2 * budget))
    if lo > hi:
        return None
    return lo, hi


def feasible_at_pmax(mode: str, schedule: Schedule, channels_est: ChannelSet,
                     config: ScenarioConfig, *, phases=None) -> bool:
    """True iff the cycle fits when every node transmits at p_max.

    FDMA modes are screened at uniform bandwidth first and, on failure,
    rechecked with the max-min allocation.
    """
    t_prime, budget = _budget(config)
    p = config.p_max
    N = schedule.n_devices
    if mode in ("single-hop", "df-tdma", "af-tdma", "ris-tdma"):
        alloc = Allocation(p_dev=np.full(N, p), p_relay=np.full(N, p))
        if mode == "ris-tdma":
            alloc.ris_phases = optimize_phases(channels_est) if phases is None else phases
        total = total_time(mode, schedule, alloc, channels_est, config)
        return total <= t_prime
    gd, gs, ga = _gains(schedule, channels_est, config)
    if mode == "df-fdma":
        uni = np.full(N, 1.0 / N)
        if _df_fdma_alpha_window(schedule, gd, gs, ga, uni, uni, config, p):
            return True
        beta, beta_s, _ = allocate_bandwidth_maxmin_df(schedule, channels_est, p, config)
        return _df_fdma_alpha_window(schedule, gd, gs, ga, beta, beta_s, config, p) is not None
    if mode == "af-fdma":
        for bvec in (np.full(N, 1.0 / N),
                     allocate_bandwidth_maxmin_af(schedule, channels_est, p, config)):
            alloc = Allocation(p_dev=np.full(N, p), p_relay=np.full(N, p), beta=bvec)
            if total_time(mode, schedule, alloc, channels_est, config) <= t_prime:
                return True
        return False
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# DF drivers
# ---------------------------------------------------------------------------

def _infeasible_report():
    return SolveReport(allocation=None, status="infeasible_at_pmax",
                       iterations=0, objective_watts=np.inf)


def minimize_power_df_tdma(schedule: Schedule, channels_est: ChannelSet,
                           config: ScenarioConfig) -> SolveReport:
    """DF-TDMA power minimization (also used for plain single-hop TDMA)."""
    schedule = sanitize_schedule(schedule, channels_est, config)
    if not feasible_at_pmax("df-tdma" if schedule.two_hop else "single-hop",
                            schedule, channels_est, config):
        return _infeasible_report()
    _, budget = _budget(config)
    B = float(config.payload_bits)
    pmax = config.p_max
    gd, gs, ga = _gains(schedule, channels_est, config)

    one = [n for n in schedule.one_hop if B > 0]
    two = [n for n in schedule.two_hop if B > 0]
    N = schedule.n_devices
    if not one and not two:
        return SolveReport(Allocation(p_dev=np.zeros(N)), "optimal", 1, 0.0,
                           objective_trace=[0.0])

    # Variable layout: powers, relay powers, then the rate auxiliaries.
    idx_p = {n: i for i, n in enumerate(one + two)}
    off = len(idx_p)
    idx_ps = {n: off + i for i, n in enumerate(two)}
    off += len(two)
    idx_gd = {n: off + i for i, n in enumerate(one)}
    off += len(one)
    idx_g1 = {n: off + i for i, n in enumerate(two)}
    off += len(two)
    idx_g2 = {n: off + i for i, n in enumerate(two)}
    nv = off + len(two)

    cost = np.zeros(nv)
    for n in idx_p.values():
        cost[n] = 1.0
    for n in idx_ps.values():
        cost[n] = 1.0
    prog = ConvexProgram(nv, cost)

    inv_terms = [(B, idx_gd[n]) for n in one]
    inv_terms += [(B, idx_g1[n]) for n in two] + [(B, idx_g2[n]) for n in two]
    prog.add_constraint(offset=-budget, inv=inv_terms)

    def link(g_idx, rows):
        e = np.zeros(nv)
        e[g_idx] = 1.0
        row = np.zeros(nv)
        for j, coef in rows:
            row[j] = -coef
        prog.add_constraint(row=row, offset=-1.0, exp2=[(1.0, e, 0.0)])

    for n in one:
        link(idx_gd[n], [(idx_p[n], gd[n] * pmax)])
    for n in two:
        link(idx_g1[n], [(idx_p[n], gs[n] * pmax)])
        link(idx_g2[n], [(idx_ps[n], ga[n] * pmax), (idx_p[n], gd[n] * pmax)])
    for j in list(idx_p.values()) + list(idx_ps.values()):
        prog.add_box(j, lower=0.0, upper=1.0)

    x0 = np.zeros(nv)
    p0 = _SHRINK
    for j in list(idx_p.values()) + list(idx_ps.values()):
        x0[j] = p0
    for n in one:
        x0[idx_gd[n]] = _SHRINK * np.log2(1.0 + gd[n] * pmax * p0)
    for n in two:
        x0[idx_g1[n]] = _SHRINK * np.log2(1.0 + gs[n] * pmax * p0)
        x0[idx_g2[n]] = _SHRINK * np.log2(1.0 + (ga[n] + gd[n]) * pmax * p0)

    res = kernel_solve(prog, x0=x0)
    if res.status != STATUS_OPTIMAL:
        if res.x is None:
            return _infeasible_report()
    p_dev = np.zeros(N)
    p_rel = np.zeros(N)
    for n, j in idx_p.items():
        p_dev[n] = pmax * res.x[j]
    for n, j in idx_ps.items():
        p_rel[n] = pmax * res.x[j]
    obj = float(np.sum(p_dev) + np.sum(p_rel))
    return SolveReport(Allocation(p_dev=p_dev, p_relay=p_rel),
                       "optimal" if res.status == STATUS_OPTIMAL else "max_iter",
                       1, obj, res.kkt_residual, objective_trace=[obj])


def _min_beta(c: float, target: float):
    """Smallest beta with beta*log2(1 + c/beta) >= target, or None."""
    if target <= 0:
        return 0.0
    cap = c / np.log(2.0)
    if c <= 0 or target >= cap * (1.0 - 1e-12):
        return None

    def g(b):
        return b * np.log2(1.0 + c / b) - target

    if g(1.0) < 0:
        return None
    lo = 1e-14
    while g(lo) > 0:      # pathological tiny targets
        lo *= 0.1
        if lo < 1e-300:
            return 0.0
    return brentq(g, lo, 1.0, xtol=1e-15, rtol=1e-14)


def _distribute(beta_min, beta_s_min, two_hop):
    """Turn per-device minimum fractions into an exact unit simplex point."""
    beta = np.array(beta_min, dtype=float)
    beta_s = np.array(beta_s_min, dtype=float)
    slack = 1.0 - beta.sum()
    if slack < -1e-9:
        raise ValueError("bandwidth minimums exceed the band")
    slack = max(slack, 0.0)
    need = max(0.0, beta_s.sum() - sum(beta[n] for n in two_hop))
    if two_hop and need > 0:
        add = min(slack, need)
        for n in two_hop:
            beta[n] += add / len(two_hop)
        slack -= add
    if slack > 0:
        beta += slack / beta.size
    beta[np.argmax(beta)] += 1.0 - beta.sum()   # absorb float residue exactly
    return beta, beta_s


def allocate_bandwidth_maxmin_df(schedule: Schedule, channels_est: ChannelSet,
                                 p_fixed: float, config: ScenarioConfig):
    """Max-min rate bandwidth split for DF-FDMA at fixed powers.

    Solved by bisection on the common rate with per-device monotone
    inversion of beta*log2(1 + c/beta).  Returns (beta, beta_s, r_min) with
    rates normalized by W.
    """
    if p_fixed <= 0:
        raise ValueError("p_fixed must be positive")
    gd, gs, ga = _gains(schedule, channels_est, config)
    N = schedule.n_devices
    cd, cs, ca = p_fixed * gd, p_fixed * gs, p_fixed * ga
    two = list(schedule.two_hop)

    def mins(r):
        bmin = np.zeros(N)
        bsmin = np.zeros(N)
        for n in schedule.one_hop:
            b = _min_beta(cd[n], r)
            if b is None:
                return None
            bmin[n] = b
        for n in two:
            b1 = _min_beta(cs[n], 2.0 * r)
            b2 = _min_beta(ca[n], 2.0 * r)
            if b1 is None or b2 is None:
                return None
            bmin[n], bsmin[n] = b1, b2
        return bmin, bsmin

    def feasible(r):
        got = mins(r)
        if got is None:
            return False
        bmin, bsmin = got
        used_1h = sum(bmin[n] for n in schedule.one_hop)
        used_2h = max(sum(bmin[n] for n in two), bsmin.sum())
        return used_1h + used_2h <= 1.0

    r_hi = min(
        [np.log2(1.0 + cd[n]) for n in schedule.one_hop]
        + [0.5 * min(np.log2(1.0 + cs[n]), np.log2(1.0 + ca[n])) for n in two]
    )
    lo, hi = 0.0, max(r_hi, 1e-300)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    got = mins(lo)
    if got is None:
        got = mins(0.0)
    bmin, bsmin = got
    beta, beta_s = _distribute(bmin, bsmin, two)
    return beta, beta_s, lo


def minimize_power_df_fdma(schedule: Schedule, channels_est: ChannelSet,
                           config: ScenarioConfig) -> SolveReport:
    """Two-stage DF-FDMA: max-min bandwidth, then convex power/time-split."""
    schedule = sanitize_schedule(schedule, channels_est, config)
    if not feasible_at_pmax("df-fdma", schedule, channels_est, config):
        return _infeasible_report()
    t_prime, budget = _budget(config)
    B = float(config.payload_bits)
    pmax = config.p_max
    gd, gs, ga = _gains(schedule, channels_est, config)
    beta, beta_s, _ = allocate_bandwidth_maxmin_df(schedule, channels_est, pmax, config)
    window = _df_fdma_alpha_window(schedule, gd, gs, ga, beta, beta_s, config, pmax)
    if window is None:
        # Max-min split can be worse than uniform when payloads are zero-ish;
        # fall back to uniform if it screens feasible there.
        N = schedule.n_devices
        beta = np.full(N, 1.0 / N)
        beta_s = beta.copy()
        window = _df_fdma_alpha_window(schedule, gd, gs, ga, beta, beta_s, config, pmax)
        if window is None:
            return _infeasible_report()

    one = [n for n in schedule.one_hop if B > 0]
    two = [n for n in schedule.two_hop if B > 0]
    N = schedule.n_devices
    if not one and not two:
        return SolveReport(Allocation(p_dev=np.zeros(N), beta=beta, beta_s=beta_s,
                                      alpha=0.5), "optimal", 1, 0.0,
                           objective_trace=[0.0])

    idx_p = {n: i for i, n in enumerate(one + two)}
    off = len(idx_p)
    idx_ps = {n: off + i for i, n in enumerate(two)}
    off += len(two)
    idx_alpha = off
    off += 1
    idx_gd = {n: off + i for i, n in enumerate(one)}
    off += len(one)
    idx_g1 = {n: off + i for i, n in enumerate(two)}
    off += len(two)
    idx_g2 = {n: off + i for i, n in enumerate(two)}
    nv = off + len(two)

    cost = np.zeros(nv)
    for j in list(idx_p.values()) + list(idx_ps.values()):
        cost[j] = 1.0
    prog = ConvexProgram(nv, cost)

    ap = config.processing_fraction
    for n in one:
        prog.add_constraint(offset=-beta[n] * budget, inv=[(B, idx_gd[n])])
    for n in two:
        row = np.zeros(nv)
        row[idx_alpha] = -budget
        prog.add_constraint(row=row, inv=[(B / beta[n], idx_g1[n])])
        row = np.zeros(nv)
        row[idx_alpha] = budget
        prog.add_constraint(row=row, offset=(ap - 1.0) * budget,
                            inv=[(B / beta_s[n], idx_g2[n])])

    def link(g_idx, rows):
        e = np.zeros(nv)
        e[g_idx] = 1.0
        row = np.zeros(nv)
        for j, coef in rows:
            row[j] = -coef
        prog.add_constraint(row=row, offset=-1.0, exp2=[(1.0, e, 0.0)])

    for n in one:
        link(idx_gd[n], [(idx_p[n], gd[n] * pmax / beta[n])])
    for n in two:
        link(idx_g1[n], [(idx_p[n], gs[n] * pmax / beta[n])])
        link(idx_g2[n], [(idx_ps[n], ga[n] * pmax / beta_s[n])])
    for j in list(idx_p.values()) + list(idx_ps.values()):
        prog.add_box(j, lower=0.0, upper=1.0)
    prog.add_box(idx_alpha, lower=0.0, upper=1.0)

    x0 = np.zeros(nv)
    p0 = _SHRINK
    for j in list(idx_p.values()) + list(idx_ps.values()):
        x0[j] = p0
    for n in one:
        x0[idx_gd[n]] = _SHRINK * np.log2(1.0 + gd[n] * pmax * p0 / beta[n])
    lo_a, hi_a = 0.0, 1.0 - ap
    for n in two:
        x0[idx_g1[n]] = _SHRINK * np.log2(1.0 + gs[n] * pmax * p0 / beta[n])
        x0[idx_g2[n]] = _SHRINK * np.log2(1.0 + ga[n] * pmax * p0 / beta_s[n])
        lo_a = max(lo_a, B / (beta[n] * x0[idx_g1[n]] * budget))
        hi_a = min(hi_a, 1.0 - ap - B / (beta_s[n] * x0[idx_g2[n]] * budget))
    if two:
        x0[idx_alpha] = 0.5 * (lo_a + hi_a) if lo_a < hi_a else 0.5 * (1.0 - ap)
    else:
        x0[idx_alpha] = 0.5

    res = kernel_solve(prog, x0=x0)
    if res.status != STATUS_OPTIMAL and res.x is None:
        return _infeasible_report()
    p_dev = np.zeros(N)
    p_rel = np.zeros(N)
    for n, j in idx_p.items():
        p_dev[n] = pmax * res.x[j]
    for n, j in idx_ps.items():
        p_rel[n] = pmax * res.x[j]
    obj = float(np.sum(p_dev) + np.sum(p_rel))
    alloc = Allocation(p_dev=p_dev, p_relay=p_rel, beta=beta, beta_s=beta_s,
                       alpha=float(res.x[idx_alpha]))
    return SolveReport(alloc,
                       "optimal" if res.status == STATUS_OPTIMAL else "max_iter",
                       1, obj, res.kkt_residual, objective_trace=[obj])


# ---------------------------------------------------------------------------
# AF drivers
# ---------------------------------------------------------------------------

def _af_gaf(p, ps, gs, ga, beta):
    """AF relayed SNR in noise-normalized units (c = P*|h|^2/sigma0)."""
    cs, ca = p * gs, ps * ga
    return cs * ca / (cs + ca + beta)


def _af_program(one, two, gd, gs, ga, beta, B, budget, pmax, anchors,
                per_device_delay):
    """Convex AF subproblem around the given anchors.

    ``anchors`` maps n -> (lambda, P, Ps) in physical units for two-hop
    devices.  ``per_device_delay`` switches between the TDMA sum constraint
    and the FDMA per-device constraints.
    """
    idx_p = {n: i for i, n in enumerate(one + two)}
    off = len(idx_p)
    idx_ps = {n: off + i for i, n in enumerate(two)}
    off += len(two)
    idx_gd = {n: off + i for i, n in enumerate(one)}
    off += len(one)
    idx_gaf = {n: off + i for i, n in enumerate(two)}
    off += len(two)
    idx_l = {n: off + i for i, n in enumerate(two)}
    nv = off + len(two)

    lam_scale = {n: max(anchors[n][0], 1e-12) for n in two}

    cost = np.zeros(nv)
    for j in list(idx_p.values()) + list(idx_ps.values()):
        cost[j] = 1.0
    prog = ConvexProgram(nv, cost)

    if per_device_delay:
        for n in one:
            prog.add_constraint(offset=-budget, inv=[(B, idx_gd[n])])
        for n in two:
            prog.add_constraint(offset=-budget, inv=[(2.0 * B, idx_gaf[n])])
    else:
        inv_terms = [(B, idx_gd[n]) for n in one]
        inv_terms += [(2.0 * B, idx_gaf[n]) for n in two]
        prog.add_constraint(offset=-budget, inv=inv_terms)

    for n in one:
        e = np.zeros(nv)
        e[idx_gd[n]] = 1.0 / beta[n]
        row = np.zeros(nv)
        row[idx_p[n]] = -gd[n] * pmax / beta[n]
        prog.add_constraint(row=row, offset=-1.0, exp2=[(1.0, e, 0.0)])

    sigma_unit = 1.0   # gains are already noise-normalized; sigma0 folds out
    for n in two:
        e = np.zeros(nv)
        e[idx_gaf[n]] = 1.0 / beta[n]
        row = np.zeros(nv)
        row[idx_l[n]] = -lam_scale[n]
        prog.add_constraint(row=row, offset=-1.0, exp2=[(1.0, e, 0.0)])

        # Linearized bilinear SNR constraint (noise-normalized units):
        # beta*(Tu(l,P)gs + Tu(l,Ps)ga + l*beta) <= Tl(P,Ps)*ga*(gd+gs)
        #   + Tl(P,P)*gd*gs + P*gd*beta
        la, Pa, Psa = anchors[n]
        b_n = beta[n]
        row = np.zeros(nv)
        offset = 0.0
        quads = []
        eps = 1e-30

        # Both envelopes are applied in anchor-normalized coordinates
        # (x/xa, y/ya) so the paired quantities have comparable magnitude;
        # the bounds stay tight (value and gradient) at the anchor but do
        # not degenerate when, e.g., an SNR is paired with a power in watts.
        def tu(coef, xj, xs, yj, ys, xa, ya):
            # coef * x * y <= coef*xa*ya * (1/4)(x/xa + y/ya)^2
            cx, cy = max(xa, eps), max(ya, eps)
            r = np.zeros(nv)
            r[xj] += xs / cx
            r[yj] += ys / cy
            quads.append((0.25 * coef * cx * cy, r, 0.0))

        def tl_neg(coef, xj, xs, yj, ys, xa, ya):
            # -coef * x * y <= -coef*xa*ya * (x/xa + y/ya - 1 - (1/4)(x/xa - y/ya)^2)
            nonlocal offset
            cx, cy = max(xa, eps), max(ya, eps)
            row[xj] += -coef * cy * xs
            row[yj] += -coef * cx * ys
            offset += coef * cx * cy
            r = np.zeros(nv)
            r[xj] += xs / cx
            r[yj] += -ys / cy
            quads.append((0.25 * coef * cx * cy, r, 0.0))

        ls, PS = lam_scale[n], pmax
        tu(b_n * gs[n], idx_l[n], ls, idx_p[n], PS, la, Pa)
        tu(b_n * ga[n], idx_l[n], ls, idx_ps[n], PS, la, Psa)
        row[idx_l[n]] += b_n * b_n * ls * sigma_unit

        c1 = ga[n] * (gd[n] + gs[n])
        tl_neg(c1, idx_p[n], PS, idx_ps[n], PS, Pa, Psa)
        # theta_lower(P, P) is affine: 2*Pa*P - Pa^2.
        c2 = gd[n] * gs[n]
        row[idx_p[n]] += -2.0 * c2 * Pa * PS
        offset += c2 * Pa ** 2
        row[idx_p[n]] += -gd[n] * b_n * PS
        prog.add_constraint(row=row, offset=offset, quad=quads)

        prog.add_box(idx_l[n], lower=0.0)

    for j in list(idx_p.values()) + list(idx_ps.values()):
        prog.add_box(j, lower=0.0, upper=1.0)
    return prog, idx_p, idx_ps, idx_gd, idx_gaf, idx_l, lam_scale, nv


def _minimize_power_af(schedule, channels_est, config, per_device_delay, beta):
    t_prime, budget = _budget(config)
    B = float(config.payload_bits)
    pmax = config.p_max
    gd, gs, ga = _gains(schedule, channels_est, config)
    one = [n for n in schedule.one_hop if B > 0]
    two = [n for n in schedule.two_hop if B > 0]
    N = schedule.n_devices
    if not one and not two:
        return SolveReport(Allocation(p_dev=np.zeros(N), beta=beta), "optimal",
                           1, 0.0, objective_trace=[0.0])

    # Warm start near the delay-tight region: give every link its share of
    # the budget at a safety margin and invert the rate targets to powers.
    safety = 0.95 * budget
    if per_device_delay:
        gamma_t = {n: B / safety for n in one}
        gamma_t.update({n: 2.0 * B / safety for n in two})
    else:
        total_w = B * len(one) + 2.0 * B * len(two)
        gamma_t = {n: total_w / safety for n in one + two}
    cap = pmax * _SHRINK
    P, Ps, lam = {}, {}, {}
    for n in one:
        s = 2.0 ** (gamma_t[n] / beta[n]) - 1.0
        P[n] = min(cap, beta[n] * s / gd[n]) if gd[n] > 0 else cap
    for n in two:
        lam_t = (2.0 ** (gamma_t[n] / beta[n]) - 1.0) / 0.98

        def snr(p, n=n):
            return (p * gd[n] + _af_gaf(p, p, gs[n], ga[n], beta[n])) / beta[n]

        if snr(cap) <= lam_t:
            P[n] = cap
        else:
            P[n] = brentq(lambda p: snr(p) - lam_t, cap * 1e-20, cap,
                          rtol=1e-13)
        Ps[n] = P[n]
        lam[n] = 0.98 * snr(P[n])

    trace = []
    best_alloc = None
    obj_prev = np.inf
    kkt = np.nan
    status = "optimal"
    iters = 0
    for it in range(SPCA_MAX_ITER):
        anchors = {n: (lam[n], P[n], Ps[n]) for n in two}
        prog, idx_p, idx_ps, idx_gd, idx_gaf, idx_l, lam_scale, nv = _af_program(
            one, two, gd, gs, ga, beta, B, budget, pmax, anchors,
            per_device_delay)
        x0 = np.zeros(nv)
        for n in one + two:
            x0[idx_p[n]] = P[n] / pmax
        for n in two:
            x0[idx_ps[n]] = Ps[n] / pmax
            x0[idx_l[n]] = lam[n] / lam_scale[n]
            x0[idx_gaf[n]] = _SHRINK * beta[n] * np.log2(1.0 + lam[n])
        for n in one:
            x0[idx_gd[n]] = _SHRINK * beta[n] * np.log2(1.0 + P[n] * gd[n] / beta[n])
        res = kernel_solve(prog, x0=x0)
        if res.x is None:
            if it == 0:
                return _infeasible_report()
            status = "max_iter"
            break
        obj = pmax * float(sum(res.x[idx_p[n]] for n in one + two)
                           + sum(res.x[idx_ps[n]] for n in two))
        iters = it + 1
        if obj > obj_prev * (1.0 + 1e-12):
            break    # monotone safeguard: keep the previous iterate
        p_dev = np.zeros(N)
        p_rel = np.zeros(N)
        for n, j in idx_p.items():
            p_dev[n] = pmax * res.x[j]
        for n, j in idx_ps.items():
            p_rel[n] = pmax * res.x[j]
        best_alloc = Allocation(p_dev=p_dev, p_relay=p_rel, beta=beta.copy())
        kkt = res.kkt_residual
        trace.append(obj)
        for n in one + two:
            P[n] = max(p_dev[n], 1e-300)
        for n in two:
            Ps[n] = max(p_rel[n], 1e-300)
            lam[n] = max(lam_scale[n] * res.x[idx_l[n]], 1e-300)
        if obj_prev - obj < SPCA_TOL * max(obj_prev, 1e-30):
            obj_prev = obj
            break
        obj_prev = obj
    else:
        status = "max_iter"
    if best_alloc is None:
        return _infeasible_report()
    return SolveReport(best_alloc, status, iters, trace[-1], kkt,
                       objective_trace=trace)


def minimize_power_af_tdma(schedule: Schedule, channels_est: ChannelSet,
                           config: ScenarioConfig) -> SolveReport:
    """AF-TDMA SPCA with product envelopes around the previous iterate."""
    schedule = sanitize_schedule(schedule, channels_est, config)
    if not feasible_at_pmax("af-tdma", schedule, channels_est, config):
        return _infeasible_report()
    beta = np.ones(schedule.n_devices)
    return _minimize_power_af(schedule, channels_est, config,
                              per_device_delay=False, beta=beta)


def allocate_bandwidth_maxmin_af(schedule: Schedule, channels_est: ChannelSet,
                                 p_fixed: float, config: ScenarioConfig):
    """Max-min rate bandwidth split for AF-FDMA at fixed powers."""
    if p_fixed <= 0:
        raise ValueError("p_fixed must be positive")
    gd, gs, ga = _gains(schedule, channels_est, config)
    N = schedule.n_devices
    cd = p_fixed * gd

    def af_rate(n, b):
        g = cd[n] / b + _af_gaf(p_fixed, p_fixed, gs[n], ga[n], b) / b
        return 0.5 * b * np.log2(1.0 + g)

    def min_beta_af(n, r):
        if r <= 0:
            return 0.0
        if af_rate(n, 1.0) < r:
            return None
        lo = 1e-14
        while af_rate(n, lo) > r:
            lo *= 0.1
            if lo < 1e-300:
                return 0.0
        return brentq(lambda b: af_rate(n, b) - r, lo, 1.0, xtol=1e-15, rtol=1e-14)

    def mins(r):
        bmin = np.zeros(N)
        for n in schedule.one_hop:
            b = _min_beta(cd[n], r)
            if b is None:
                return None
            bmin[n] = b
        for n in schedule.two_hop:
            b = min_beta_af(n, r)
            if b is None:
                return None
            bmin[n] = b
        return bmin

    r_hi = min(
        [np.log2(1.0 + cd[n]) for n in schedule.one_hop]
        + [af_rate(n, 1.0) for n in schedule.two_hop]
    )
    lo, hi = 0.0, max(r_hi, 1e-300)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        got = mins(mid)
        if got is not None and got.sum() <= 1.0:
            lo = mid
        else:
            hi = mid
    bmin = mins(lo)
    if bmin is None:
        bmin = np.full(N, 1.0 / N)
    beta, _ = _distribute(bmin, np.zeros(N), [])
    return beta


def minimize_power_af_fdma(schedule: Schedule, channels_est: ChannelSet,
                           config: ScenarioConfig) -> SolveReport:
    """Two-stage AF-FDMA: max-min bandwidth, then the AF SPCA power stage."""
    schedule = sanitize_schedule(schedule, channels_est, config)
    if not feasible_at_pmax("af-fdma", schedule, channels_est, config):
        return _infeasible_report()
    beta = allocate_bandwidth_maxmin_af(schedule, channels_est, config.p_max, config)
    t_prime, _ = _budget(config)
    alloc = Allocation(p_dev=np.full(schedule.n_devices, config.p_max),
                       p_relay=np.full(schedule.n_devices, config.p_max),
                       beta=beta)
    if total_time("af-fdma", schedule, alloc, channels_est, config) > t_prime:
        beta = np.full(schedule.n_devices, 1.0 / schedule.n_devices)
    return _minimize_power_af(schedule, channels_est, config,
                              per_device_delay=True, beta=beta)


# ---------------------------------------------------------------------------
# RIS drivers
# ---------------------------------------------------------------------------

def ris_phases_closed_form(h_d: complex, u_all: np.ndarray) -> np.ndarray:
    """Unit-modulus v aligning every cascaded element with the direct path.

    Achieves |h_d + u^H v| = |h_d| + sum|u_q| exactly; zero elements get
    phase 0.
    """
    u_all = np.asarray(u_all)
    phi0 = np.angle(h_d) if h_d != 0 else 0.0
    ang = np.where(u_all == 0, 0.0, phi0 + np.angle(u_all))
    return np.exp(1j * ang)


def ris_phases_sca(h_d: complex, u_all: np.ndarray, v_init: np.ndarray,
                   tol: float = 1e-12, max_iter: int = 20000):
    """Fixed-point phase iteration v <- exp(j*angle(u*(h_d + u^H v))).

    Returns (v, gain, converged); the objective |h_d + u^H v|^2 is
    non-decreasing across iterations.
    """
    u = np.asarray(u_all)
    v = np.asarray(v_init, dtype=complex)
    if not np.allclose(np.abs(v), 1.0, atol=1e-9):
        raise ValueError("v_init must be unit-modulus")
    obj = np.abs(h_d + np.vdot(u, v)) ** 2
    converged = False
    for _ in range(max_iter):
        combined = h_d + np.vdot(u, v)
        v_new = np.exp(1j * np.angle(u * combined))
        v_new = np.where(u == 0, v, v_new)
        obj_new = np.abs(h_d + np.vdot(u, v_new)) ** 2
        if obj_new < obj * (1.0 - 1e-9):
            break   # genuine decrease cannot happen; bail out defensively
        v = v_new
        if abs(obj_new - obj) <= tol * max(obj, 1e-300):
            obj = obj_new
            converged = True
            break
        obj = obj_new
    return v, obj, converged


def optimize_phases(channels_est: ChannelSet, method: str = "closed_form",
                    rng: np.random.Generator = None) -> np.ndarray:
    """Per-device-slot RIS phase vectors, (N, Q) with Q = K*J."""
    N = channels_est.n_devices
    u_flat = channels_est.u_cascade_hat.reshape(N, -1)
    Q = u_flat.shape[1]
    out = np.empty((N, Q), dtype=complex)
    for n in range(N):
        if method == "closed_form":
            out[n] = ris_phases_closed_form(channels_est.h_d_hat[n], u_flat[n])
        elif method == "sca":
            v0 = np.ones(Q, dtype=complex)
            out[n], _, _ = ris_phases_sca(channels_est.h_d_hat[n], u_flat[n], v0)
        elif method == "random":
            if rng is None:
                raise ValueError("random phases need an rng")
            out[n] = np.exp(1j * rng.uniform(0, 2 * np.pi, Q))
        else:
            raise ValueError(f"unknown phase method {method!r}")
    return out


def minimize_power_ris(channels_est: ChannelSet, phases: np.ndarray,
                       config: ScenarioConfig) -> SolveReport:
    """Stage-2 RIS power minimization at fixed phases (single-hop structure
    over the effective combined channels)."""
    N = channels_est.n_devices
    schedule = all_single_hop(N)
    sigma0 = config.noise_power
    u_flat = channels_est.u_cascade_hat.reshape(N, -1)
    h_eff = np.array(
        [channels_est.h_d_hat[n] + np.vdot(u_flat[n], phases[n]) for n in range(N)]
    )
    g_eff = np.abs(h_eff) ** 2 / sigma0

    t_prime, budget = _budget(config)
    B = float(config.payload_bits)
    pmax = config.p_max
    if B > 0:
        total = sum(B / np.log2(1.0 + pmax * g) if g > 0 else np.inf for g in g_eff)
        if total > budget:
            return _infeasible_report()

    active = [n for n in range(N) if B > 0 and g_eff[n] > 0]
    if not active:
        alloc = Allocation(p_dev=np.zeros(N), ris_phases=phases)
        return SolveReport(alloc, "optimal", 1, 0.0, objective_trace=[0.0])

    nv = 2 * len(active)
    cost = np.zeros(nv)
    cost[: len(active)] = 1.0
    prog = ConvexProgram(nv, cost)
    prog.add_constraint(offset=-budget,
                        inv=[(B, len(active) + i) for i in range(len(active))])
    for i, n in enumerate(active):
        e = np.zeros(nv)
        e[len(active) + i] = 1.0
        row = np.zeros(nv)
        row[i] = -g_eff[n] * pmax
        prog.add_constraint(row=row, offset=-1.0, exp2=[(1.0, e, 0.0)])
        prog.add_box(i, lower=0.0, upper=1.0)
    x0 = np.zeros(nv)
    p0 = _SHRINK
    x0[: len(active)] = p0
    for i, n in enumerate(active):
        x0[len(active) + i] = _SHRINK * np.log2(1.0 + g_eff[n] * pmax * p0)
    res = kernel_solve(prog, x0=x0)
    if res.x is None:
        return _infeasible_report()
    p_dev = np.zeros(N)
    for i, n in enumerate(active):
        p_dev[n] = pmax * res.x[i]
    obj = float(p_dev.sum())
    alloc = Allocation(p_dev=p_dev, ris_phases=phases)
    return SolveReport(alloc,
                       "optimal" if res.status == STATUS_OPTIMAL else "max_iter",
                       1, obj, res.kkt_residual, objective_trace=[obj])


# ---------------------------------------------------------------------------
# Mode dispatch and the exhaustive oracle
# ---------------------------------------------------------------------------

def minimize_power(mode: str, schedule: Schedule, channels_est: ChannelSet,
                   config: ScenarioConfig, *, phases=None) -> SolveReport:
    if mode in ("single-hop", "df-tdma"):
        return minimize_power_df_tdma(schedule, channels_est, config)
    if mode == "df-fdma":
        return minimize_power_df_fdma(schedule, channels_est, config)
    if mode == "af-tdma":
        return minimize_power_af_tdma(schedule, channels_est, config)
    if mode == "af-fdma":
        return minimize_power_af_fdma(schedule, channels_est, config)
    if mode == "ris-tdma":
        if phases is None:
            phases = optimize_phases(channels_est)
        return minimize_power_ris(channels_est, phases, config)
    raise ValueError(f"unknown mode {mode!r}")


def brute_force_oracle(mode: str, schedule: Schedule, channels_est: ChannelSet,
                       config: ScenarioConfig, *, beta=None, beta_s=None,
                       floor_dbm: float = -40.0, step_db: float = 0.05):
    """Minimum total power by multi-resolution grid search (test oracle).

    Grid bounds are [floor_dbm, p_max] per power variable; search refines
    from a coarse grid down to ``step_db``.  Intended for instances with at
    most three power variables.  Returns total watts (inf if no feasible
    grid point).
    """
    schedule = sanitize_schedule(schedule, channels_est, config)
    t_prime, budget = _budget(config)
    B = float(config.payload_bits)
    gd, gs, ga = _gains(schedule, channels_est, config)
    one = [n for n in schedule.one_hop if B > 0]
    two = [n for n in schedule.two_hop if B > 0]
    nvar = len(one) + 2 * len(two)
    if nvar == 0:
        return 0.0
    if nvar > 3:
        raise ValueError("oracle supports at most 3 power variables")
    N = schedule.n_devices
    if beta is None:
        if mode in ("df-fdma", "af-fdma"):
            if mode == "df-fdma":
                beta, beta_s, _ = allocate_bandwidth_maxmin_df(
                    schedule, channels_est, config.p_max, config)
            else:
                beta = allocate_bandwidth_maxmin_af(
                    schedule, channels_est, config.p_max, config)
        else:
            beta = np.ones(N)
    if beta_s is None:
        beta_s = np.array(beta, copy=True)

    pmax_dbm = 10.0 * np.log10(config.p_max * 1e3)
    ap = config.processing_fraction

    def feasible(pw):
        # pw: (..., nvar) powers in watts; returns boolean mask.
        pd = {}
        pr = {}
        i = 0
        for n in one:
            pd[n] = pw[..., i]; i += 1
        for n in two:
            pd[n] = pw[..., i]; i += 1
        for n in two:
            pr[n] = pw[..., i]; i += 1
        if mode in ("single-hop", "df-tdma", "af-tdma"):
            total = 0.0
            for n in one:
                total = total + B / np.log2(1.0 + pd[n] * gd[n])
            for n in two:
                if mode == "df-tdma":
                    total = total + B / np.log2(1.0 + pd[n] * gs[n])
                    total = total + B / np.log2(1.0 + pd[n] * gd[n] + pr[n] * ga[n])
                else:
                    g = pd[n] * gd[n] + _af_gaf(pd[n], pr[n], gs[n], ga[n], 1.0)
                    total = total + 2.0 * B / np.log2(1.0 + g)
            return total <= budget
        if mode == "df-fdma":
            okmask = np.ones(np.shape(pw)[:-1], dtype=bool)
            for n in one:
                r = beta[n] * np.log2(1.0 + pd[n] * gd[n] / beta[n])
                okmask &= (r > 0) & (B <= budget * r)
            lo = np.zeros(np.shape(pw)[:-1])
            hi = np.full(np.shape(pw)[:-1], 1.0 - ap)
            for n in two:
                r1 = beta[n] * np.log2(1.0 + pd[n] * gs[n] / beta[n])
                r2 = beta_s[n] * np.log2(1.0 + pr[n] * ga[n] / beta_s[n])
                lo = np.maximum(lo, B / (np.maximum(r1, 1e-300) * budget))
                hi = np.minimum(hi, 1.0 - ap - B / (np.maximum(r2, 1e-300) * budget))
                okmask &= (r1 > 0) & (r2 > 0)
            return okmask & (lo <= hi)
        if mode == "af-fdma":
            okmask = np.ones(np.shape(pw)[:-1], dtype=bool)
            for n in one:
                r = beta[n] * np.log2(1.0 + pd[n] * gd[n] / beta[n])
                okmask &= B <= budget * r
            for n in two:
                g = (pd[n] * gd[n]
                     + _af_gaf(pd[n], pr[n], gs[n], ga[n], beta[n])) / beta[n]
                r = beta[n] * np.log2(1.0 + g)
                okmask &= 2.0 * B <= budget * r
            return okmask
        raise ValueError(f"oracle does not handle mode {mode!r}")

    lo_db = np.full(nvar, floor_dbm)
    hi_db = np.full(nvar, pmax_dbm)
    best = np.inf
    for step in (0.8, 0.2, step_db):
        axes = [np.arange(hi_db[i], lo_db[i] - 1e-9, -step)[::-1] for i in range(nvar)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pw = np.stack([10.0 ** ((m - 30.0) / 10.0) for m in mesh], axis=-1)
        mask = feasible(pw)
        if not np.any(mask):
            return np.inf
        totals = pw.sum(axis=-1)
        totals = np.where(mask, totals, np.inf)
        flat = int(np.argmin(totals))
        best = float(totals.reshape(-1)[flat])
        centre = np.array([m.reshape(-1)[flat] for m in mesh])
        lo_db = np.maximum(centre - 2.0 * step, floor_dbm)
        hi_db = np.minimum(centre + 2.0 * step, pmax_dbm)
    return best
