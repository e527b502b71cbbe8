"""Outer block-coordinate loop maximizing the weighted sum-rate lower bound.

Each user's log-rate is replaced by the standard tight quadratic lower
bound driven by a scalar equalizer v and a positive weight w; both have
closed-form optimizers. The beamformer block is a convex QCQP after the
EHR powers are linearized at the current iterate; phases and antenna
positions are delegated to their own modules. Every block is guarded so
the bound value never decreases, which makes the trace monotone.
"""

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, centered_grid
from .config import ScenarioConfig
from .model import (
    DesignPoint,
    constraint_report,
    equivalent_channels,
    harvested_powers,
    received_powers,
    sinr_values,
    weighted_sum_rate,
)
from .pdd import PddStop, run_pdd_sumrate
from .positioning import solve_position_subproblem
from . import qcqp


class InfeasibleStartError(ValueError):
    """Raised when the sum-rate loop is started from an infeasible point."""


@dataclass
class AuxiliaryState:
    v: np.ndarray      # per-IDR receive equalizers
    w: np.ndarray      # per-IDR positive MSE weights


@dataclass
class BcdStop:
    rel_change: float = 1e-4
    max_outer: int = 100


@dataclass
class BcdTrace:
    """Per-iteration progress records of one sum-rate run."""

    surrogate: list = field(default_factory=list)
    true_rate: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    block_seconds: list = field(default_factory=list)
    converged: bool = False

    def append(self, surrogate, true_rate, report, seconds):
        self.surrogate.append(surrogate)
        self.true_rate.append(true_rate)
        self.reports.append(report)
        self.block_seconds.append(seconds)

    def __len__(self):
        return len(self.surrogate)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "surrogate", "true_rate",
                             "worst_ehr_shortfall", "power_used", "seconds"])
            for n in range(len(self.surrogate)):
                report = self.reports[n]
                shortfall = float(np.max(report.ehr_shortfalls)) \
                    if report.ehr_shortfalls.size else 0.0
                writer.writerow([
                    n + 1,
                    f"{self.surrogate[n]:.12g}",
                    f"{self.true_rate[n]:.12g}",
                    f"{shortfall:.12g}",
                    f"{report.power_excess:.12g}",
                    f"{sum(self.block_seconds[n].values()):.6g}",
                ])


def mse_values(point: DesignPoint, channels: ChannelSet, v,
               config: ScenarioConfig) -> np.ndarray:
    """Per-IDR mean square error of the scalar equalizers."""
    H, _ = equivalent_channels(point, channels, config)
    powers = received_powers(H, point.beamformers)
    total = powers.sum(axis=1) + np.asarray(config.noise_powers)
    desired = np.array([H[i].conj() @ point.beamformers[i]
                        for i in range(config.num_idrs)])
    return (np.abs(v) ** 2 * total - 2.0 * np.real(np.conj(v) * desired)
            + 1.0)


def update_v(point: DesignPoint, channels: ChannelSet,
             config: ScenarioConfig) -> np.ndarray:
    """Per-user quadratic minimizer: matched filter over total received power."""
    H, _ = equivalent_channels(point, channels, config)
    powers = received_powers(H, point.beamformers)
    total = powers.sum(axis=1) + np.asarray(config.noise_powers)
    desired = np.array([H[i].conj() @ point.beamformers[i]
                        for i in range(config.num_idrs)])
    return desired / total


def update_w(point: DesignPoint, channels: ChannelSet, v,
             config: ScenarioConfig) -> np.ndarray:
    """Reciprocal-MSE weights; equals 1 + SINR right after a v update."""
    return 1.0 / mse_values(point, channels, v, config)


def surrogate_value(point: DesignPoint, channels: ChannelSet, v, w,
                    config: ScenarioConfig) -> float:
    """Weighted sum of the per-user rate lower bounds, in nats."""
    mse = mse_values(point, channels, v, config)
    terms = np.log(w) - w * mse + 1.0
    return float(np.asarray(config.rate_weights) @ terms)


def update_beamformers(point: DesignPoint, channels: ChannelSet, v, w,
                       config: ScenarioConfig) -> np.ndarray:
    """Solve the convex beamformer block around the current iterate."""
    K_I, K_E = config.num_idrs, config.num_ehrs
    K = K_I + K_E
    M = config.num_bs_antennas
    H, E = equivalent_channels(point, channels, config)
    weights = np.asarray(config.rate_weights)

    B = np.zeros((M, M), dtype=complex)
    for i in range(K_I):
        B += weights[i] * w[i] * abs(v[i]) ** 2 * np.outer(H[i], H[i].conj())
    Q = np.kron(np.eye(K), (B + B.conj().T) / 2)
    q = np.zeros(K * M, dtype=complex)
    for i in range(K_I):
        q[i * M:(i + 1) * M] = weights[i] * w[i] * v[i] * H[i]

    f0 = point.beamformers.reshape(-1)
    cons = [qcqp.BallConstraint(None, math.sqrt(config.power_budget))]
    for j in range(K_E):
        amps = E[j].conj() @ point.beamformers.T        # g_j^H f_k
        a = np.zeros(K * M, dtype=complex)
        for k in range(K):
            a[k * M:(k + 1) * M] = 2.0 * amps[k] * E[j]
        rhs = config.ehr_thresholds[j] + float(np.sum(np.abs(amps) ** 2))
        cons.append(qcqp.AffineConstraint(-a, -rhs))

    problem = qcqp.ConvexSubproblem(K * M, Q, q, constraints=cons)
    sol, status = qcqp.solve(problem, warm_start=f0)
    if status.status != qcqp.OPTIMAL:
        return point.beamformers.copy()
    if problem.objective(sol) > problem.objective(f0) + 1e-12:
        return point.beamformers.copy()
    return sol.reshape(K, M)


def grid_layout(config: ScenarioConfig) -> np.ndarray:
    """Initial antenna placement: centered grid, never tighter than D_min."""
    M = config.num_bs_antennas
    side = math.isqrt(M)
    if side * side < M:
        side += 1
    pitch = max(config.min_spacing, config.region_size / side)
    return centered_grid(M, pitch)


def initial_point(channels: ChannelSet, config: ScenarioConfig,
                  rng=None) -> DesignPoint:
    """Matched-filter beamformers, random phases, grid antenna layout.

    The beamformer share is repaired toward the EHR thresholds when the
    plain matched-filter split misses them; the caller should still check
    feasibility (the repair cannot always succeed).
    """
    rng = rng if rng is not None else config.rng()
    K_I, K_E = config.num_idrs, config.num_ehrs
    K = K_I + K_E
    phases = rng.uniform(0.0, 2.0 * math.pi, config.num_irs_elements)
    positions = grid_layout(config)
    point = DesignPoint(np.zeros((K, config.num_bs_antennas), dtype=complex),
                        positions, phases)
    H, E = equivalent_channels(point, channels, config)
    share = math.sqrt(config.power_budget / K)
    for i in range(K_I):
        nrm = np.linalg.norm(H[i])
        point.beamformers[i] = share * H[i] / nrm if nrm > 0 \
            else share * _unit(config.num_bs_antennas)
    for j in range(K_E):
        nrm = np.linalg.norm(E[j])
        point.beamformers[K_I + j] = share * E[j] / nrm if nrm > 0 \
            else share * _unit(config.num_bs_antennas)

    report = constraint_report(point, channels, config)
    if np.any(report.ehr_shortfalls > 0):
        from .feasibility import repair_beamformers
        point = repair_beamformers(point, channels, config)
    return point


def _unit(m: int) -> np.ndarray:
    e = np.zeros(m, dtype=complex)
    e[0] = 1.0
    return e


def run(initial: DesignPoint, channels: ChannelSet, config: ScenarioConfig,
        stop: BcdStop = None, pdd_stop: PddStop = None,
        update_theta: bool = True, update_positions: bool = True):
    """Full outer loop; returns ``(point, AuxiliaryState, BcdTrace)``.

    ``update_theta`` / ``update_positions`` freeze the corresponding blocks
    (used by the comparison schemes with random phases or fixed antennas).
    """
    stop = stop or BcdStop()
    report = constraint_report(initial, channels, config)
    if not report.is_feasible(config):
        raise InfeasibleStartError(
            "initial point violates the design constraints; obtain a "
            "feasible start from the feasibility search first")

    point = initial.copy()
    trace = BcdTrace()
    aux = AuxiliaryState(np.zeros(config.num_idrs, dtype=complex),
                         np.ones(config.num_idrs))
    previous = None
    for _ in range(stop.max_outer):
        seconds = {}
        tic = time.perf_counter()
        aux.v = update_v(point, channels, config)
        aux.w = update_w(point, channels, aux.v, config)
        seconds["aux"] = time.perf_counter() - tic

        tic = time.perf_counter()
        point.beamformers = update_beamformers(point, channels, aux.v, aux.w,
                                               config)
        seconds["beamformers"] = time.perf_counter() - tic

        if update_theta:
            tic = time.perf_counter()
            result = run_pdd_sumrate(point, channels, aux.v, aux.w, config,
                                     pdd_stop)
            point.phases = np.angle(result.theta)
            seconds["phases"] = time.perf_counter() - tic

        if update_positions:
            tic = time.perf_counter()
            for m in range(config.num_bs_antennas):
                anchor = point.ma_positions[m].copy()
                point.ma_positions[m] = solve_position_subproblem(
                    point, channels, aux.v, aux.w, config, m, anchor)
            seconds["positions"] = time.perf_counter() - tic

        value = surrogate_value(point, channels, aux.v, aux.w, config)
        trace.append(value, weighted_sum_rate(point, channels, config),
                     constraint_report(point, channels, config), seconds)
        if previous is not None \
                and abs(value - previous) <= stop.rel_change * max(abs(previous), 1e-12):
            trace.converged = True
            break
        previous = value
    return point, aux, trace
