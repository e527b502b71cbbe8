"""Decides whether the EHR power targets are reachable at all.

Minimizes the worst EHR shortfall (beta) by block descent over the
beamformers, the phases, and each antenna position, each convexified the
same way as in the sum-rate loop. A nonpositive minimum certifies a
feasible design (the witness); the local search cannot certify the
converse, so a positive stall is reported as "no feasible point found".
A cheap norm-product bound on the best achievable power screens out
hopeless targets without iterating.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, assemble_irs_user_channel, centered_grid
from .config import ScenarioConfig
from .model import (
    DesignPoint,
    constraint_report,
    equivalent_channels,
    harvested_powers,
)
from .pdd import PddStop, run_pdd_feasibility
from .positioning import solve_position_feasibility
from . import qcqp

FEASIBLE_TOL = 1e-9        # watts; verdict threshold on the best shortfall

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNDECIDED = "undecided"


@dataclass
class FeasibilityStop:
    max_outer: int = 40
    stall_rel: float = 1e-6


@dataclass
class FeasibilityVerdict:
    beta_star: float
    verdict: str
    witness: DesignPoint
    trace: list = field(default_factory=list)   # (outer, block, beta)

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "beta", "block_name"])
            for outer, block, beta in self.trace:
                writer.writerow([outer, f"{beta:.12g}", block])


def _shortfall(point: DesignPoint, channels: ChannelSet,
               config: ScenarioConfig) -> float:
    if config.num_ehrs == 0:
        return 0.0
    _, E = equivalent_channels(point, channels, config)
    powers = harvested_powers(E, point.beamformers)
    return float(np.max(np.asarray(config.ehr_thresholds) - powers))


def energy_screen_bounds(channels: ChannelSet,
                         config: ScenarioConfig) -> np.ndarray:
    """Upper bounds on each EHR's best achievable power over all designs."""
    sigma = channels.bs_irs.response_diag
    M, L = config.num_bs_antennas, config.paths_per_link
    bounds = []
    for cl in channels.irs_ehr:
        gr = assemble_irs_user_channel(cl, channels.irs_positions,
                                       config.carrier_wavelength)
        gain = math.sqrt(M * L) * np.linalg.norm(sigma) \
            * float(np.sum(np.abs(gr)))
        bounds.append(config.power_budget * gain ** 2)
    return np.asarray(bounds)


def solve_beamformer_feasibility(point: DesignPoint, channels: ChannelSet,
                                 config: ScenarioConfig, anchor_f=None):
    """One convex shortfall-minimization step in the beamformers.

    Returns ``(beamformers, beta)``; beta is the true worst shortfall of
    the returned stack and never exceeds the anchor's.
    """
    if anchor_f is None:
        anchor_f = point.beamformers
    anchor_f = np.asarray(anchor_f, dtype=complex)
    K, M = anchor_f.shape
    anchor_point = point.copy()
    anchor_point.beamformers = anchor_f
    beta_anchor = _shortfall(anchor_point, channels, config)
    if config.num_ehrs == 0:
        return anchor_f.copy(), beta_anchor

    _, E = equivalent_channels(anchor_point, channels, config)
    D = K * M
    d = 2 * D + 1                      # [Re f; Im f; beta]
    rows, rhs_list = [], []
    for j in range(config.num_ehrs):
        amps = E[j].conj() @ anchor_f.T
        a = np.zeros(D, dtype=complex)
        for k in range(K):
            a[k * M:(k + 1) * M] = 2.0 * amps[k] * E[j]
        rows.append(a)
        rhs_list.append(config.ehr_thresholds[j]
                        + float(np.sum(np.abs(amps) ** 2)))
    # beamformers are O(1) while received powers are tiny watts; solve for
    # beta' = beta / power_scale so the constraint data stays O(1)
    power_scale = max(max(np.linalg.norm(a) for a in rows),
                      max(abs(r) for r in rhs_list), 1e-30)

    q = np.zeros(d)
    q[-1] = -0.5                       # minimize the scaled shortfall
    cons = [qcqp.BallConstraint(tuple(range(2 * D)),
                                math.sqrt(config.power_budget))]
    for a, rhs in zip(rows, rhs_list):
        row = np.concatenate([-np.real(a), -np.imag(a),
                              [-power_scale]]) / power_scale
        cons.append(qcqp.AffineConstraint(row, -rhs / power_scale))

    problem = qcqp.ConvexSubproblem(d, np.zeros((d, d)), q, constraints=cons,
                                    is_complex=False)
    ws = np.concatenate([np.real(anchor_f).ravel(), np.imag(anchor_f).ravel(),
                         [beta_anchor / power_scale]])
    z, status = qcqp.solve(problem, warm_start=ws)
    if status.status != qcqp.OPTIMAL:
        return anchor_f.copy(), beta_anchor
    f_new = (z[:D] + 1j * z[D:2 * D]).reshape(K, M)
    trial = point.copy()
    trial.beamformers = f_new
    beta_new = _shortfall(trial, channels, config)
    if beta_new >= beta_anchor:
        return anchor_f.copy(), beta_anchor
    return f_new, beta_new


def repair_beamformers(point: DesignPoint, channels: ChannelSet,
                       config: ScenarioConfig,
                       max_rounds: int = 25) -> DesignPoint:
    """Beamformer-only shortfall descent; stops as soon as all targets hold."""
    out = point.copy()
    beta = _shortfall(out, channels, config)
    for _ in range(max_rounds):
        if beta <= 0.0:
            break
        f_new, beta_new = solve_beamformer_feasibility(out, channels, config)
        if beta_new >= beta - 1e-15:
            break
        out.beamformers = f_new
        beta = beta_new
    return out


def _search_start(channels: ChannelSet, config: ScenarioConfig) -> DesignPoint:
    """Full power toward the strongest EHR, random phases, grid layout."""
    rng = config.rng()
    K_I, K_E = config.num_idrs, config.num_ehrs
    K = K_I + K_E
    M = config.num_bs_antennas
    side = math.isqrt(M)
    if side * side < M:
        side += 1
    pitch = max(config.min_spacing, config.region_size / side)
    point = DesignPoint(np.zeros((K, M), dtype=complex),
                        centered_grid(M, pitch),
                        rng.uniform(0.0, 2.0 * math.pi,
                                    config.num_irs_elements))
    if K_E:
        _, E = equivalent_channels(point, channels, config)
        norms = np.linalg.norm(E, axis=1)
        j_star = int(np.argmax(norms))
        if norms[j_star] > 0:
            direction = E[j_star] / norms[j_star]
            share = math.sqrt(config.power_budget / K)
            point.beamformers[:] = share * direction
    return point


def run_feasibility(channels: ChannelSet, config: ScenarioConfig,
                    stop: FeasibilityStop = None) -> FeasibilityVerdict:
    """Block descent on the worst shortfall; see the module docstring."""
    stop = stop or FeasibilityStop()
    point = _search_start(channels, config)

    if config.num_ehrs == 0:
        return FeasibilityVerdict(0.0, FEASIBLE, point)

    thresholds = np.asarray(config.ehr_thresholds)
    bounds = energy_screen_bounds(channels, config)
    if np.any(thresholds > bounds):
        beta_floor = float(np.max(thresholds - bounds))
        return FeasibilityVerdict(beta_floor, INFEASIBLE, point)

    beta = _shortfall(point, channels, config)
    trace = []
    if beta <= FEASIBLE_TOL:
        return FeasibilityVerdict(beta, FEASIBLE, point, trace)

    stalled = False
    for outer in range(1, stop.max_outer + 1):
        beta_before = beta

        point.beamformers, beta = solve_beamformer_feasibility(
            point, channels, config)
        trace.append((outer, "beamformers", beta))
        if beta <= 0.0:
            break

        result, beta = run_pdd_feasibility(point, channels, config)
        point.phases = np.angle(result.theta)
        trace.append((outer, "phases", beta))
        if beta <= 0.0:
            break

        for m in range(config.num_bs_antennas):
            anchor = point.ma_positions[m].copy()
            point.ma_positions[m], beta = solve_position_feasibility(
                point, channels, config, m, anchor, beta)
            trace.append((outer, f"position_{m}", beta))
        if beta <= 0.0:
            break

        if beta_before - beta <= stop.stall_rel * max(abs(beta_before),
                                                      FEASIBLE_TOL):
            stalled = True
            break

    if beta <= FEASIBLE_TOL:
        verdict = FEASIBLE
    elif stalled:
        verdict = INFEASIBLE      # local search stalled above zero
    else:
        verdict = UNDECIDED       # still descending at the iteration cap
    return FeasibilityVerdict(float(beta), verdict, point, trace)
