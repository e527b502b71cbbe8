"""Two-layer penalty dual decomposition for the reflecting-surface phases.

The phase block is a nonconvex QCQP over the unit-modulus vector. The
equality copy trick splits it into a relaxed vector (per-coordinate ball)
and an exactly unit-modulus copy, penalizes their difference in an
augmented Lagrangian, and alternates:

* inner loop: minimize over the relaxed vector (convex after tangent-plane
  lower bounds on the harvested-power quadratics), then snap the copy to
  the closest unit-modulus vector (closed form);
* outer loop: tighten the multiplier when the two agree, shrink the
  penalty when they do not.

The same machinery runs in two modes: maximizing the weighted-MSE block
objective, and minimizing the worst EHR power shortfall.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelSet, assemble_bs_irs_channel, assemble_irs_user_channel
from .config import ScenarioConfig
from .model import DesignPoint
from . import qcqp

REL_EHR_TOL = 1e-6


@dataclass
class PddState:
    theta: np.ndarray          # relaxed phase vector, |theta_n| <= 1
    phi: np.ndarray            # unit-modulus copy
    multiplier: np.ndarray
    rho: float
    delta: float               # consensus threshold for the multiplier step
    shrink: float              # penalty shrink factor in (0, 1)


@dataclass
class QuadraticForms:
    """Dense quadratics of the phase block objective and EHR powers."""
    Q0: np.ndarray             # (N, N) Hermitian PSD
    q0: np.ndarray             # (N,)
    Q1: list                   # K_E Hermitian PSD matrices

    def block_objective(self, theta: np.ndarray) -> float:
        return float(np.real(theta.conj() @ self.Q0 @ theta)
                     - 2.0 * np.real(np.vdot(self.q0, theta)))

    def ehr_powers(self, theta: np.ndarray) -> np.ndarray:
        return np.array([float(np.real(theta.conj() @ Q @ theta))
                         for Q in self.Q1])


@dataclass
class PddStop:
    consensus_tol: float = 1e-4    # infinity-norm gap at exit
    max_outer: int = 40
    inner_tol: float = 1e-6        # relative augmented-Lagrangian change
    max_inner: int = 50


@dataclass
class PddResult:
    theta: np.ndarray              # unit modulus
    consensus_gap: float
    outer_rounds: int
    fell_back: bool = False
    trace: list = field(default_factory=list)   # (round, AL, gap, rho)


def build_power_forms(point: DesignPoint, channels: ChannelSet,
                      config: ScenarioConfig) -> list:
    """Per-EHR PSD matrices whose quadratic form is the received power."""
    lam = config.carrier_wavelength
    G = assemble_bs_irs_channel(point.ma_positions, channels, lam)
    streams = [G @ f for f in point.beamformers]      # (N,) each
    forms = []
    for cl in channels.irs_ehr:
        gr = assemble_irs_user_channel(cl, channels.irs_positions, lam)
        Q = np.zeros((G.shape[0], G.shape[0]), dtype=complex)
        for u in streams:
            e = np.conj(u) * gr
            Q += np.outer(e, e.conj())
        forms.append((Q + Q.conj().T) / 2.0)
    return forms


def build_quadratic_forms(point: DesignPoint, channels: ChannelSet,
                          v: np.ndarray, w: np.ndarray,
                          config: ScenarioConfig) -> QuadraticForms:
    lam = config.carrier_wavelength
    N = channels.num_elements
    G = assemble_bs_irs_channel(point.ma_positions, channels, lam)
    streams = [G @ f for f in point.beamformers]
    weights = np.asarray(config.rate_weights)

    Q0 = np.zeros((N, N), dtype=complex)
    q0 = np.zeros(N, dtype=complex)
    for i, cl in enumerate(channels.irs_idr):
        hr = assemble_irs_user_channel(cl, channels.irs_positions, lam)
        coef = weights[i] * w[i] * abs(v[i]) ** 2
        for u in streams:
            cvec = np.conj(u) * hr
            Q0 += coef * np.outer(cvec, cvec.conj())
        q0 += weights[i] * w[i] * v[i] * (hr * np.conj(streams[i]))
    Q0 = (Q0 + Q0.conj().T) / 2.0
    return QuadraticForms(Q0, q0, build_power_forms(point, channels, config))


def solve_theta_subproblem(state: PddState, forms: QuadraticForms,
                           thresholds, anchor: np.ndarray) -> np.ndarray:
    """One relaxed-phase update: convex program around the current anchor."""
    N = anchor.shape[0]
    inv2rho = 1.0 / (2.0 * state.rho)
    target = state.phi - state.rho * state.multiplier
    Q = forms.Q0 + inv2rho * np.eye(N)
    q = forms.q0 + inv2rho * target
    cons = [qcqp.BallConstraint((n,), 1.0) for n in range(N)]
    for Q1, p_min in zip(forms.Q1, thresholds):
        a = Q1 @ anchor
        rhs = p_min + float(np.real(anchor.conj() @ Q1 @ anchor))
        cons.append(qcqp.AffineConstraint(-2.0 * a, -rhs))
    problem = qcqp.ConvexSubproblem(N, Q, q, constraints=cons)
    theta, status = qcqp.solve(problem, warm_start=anchor)
    if status.status != qcqp.OPTIMAL:
        return anchor
    return theta


def update_phi(theta: np.ndarray, rho: float,
               multiplier: np.ndarray) -> np.ndarray:
    """Closest unit-modulus vector to theta + rho * multiplier."""
    return np.exp(1j * np.angle(theta + rho * multiplier))


def outer_update(state: PddState) -> PddState:
    gap = float(np.max(np.abs(state.theta - state.phi)))
    if gap <= state.delta:
        new_mult = state.multiplier + (state.theta - state.phi) / state.rho
        return replace(state, multiplier=new_mult)
    return replace(state, rho=state.shrink * state.rho)


def _augmented_lagrangian(state: PddState, forms: QuadraticForms) -> float:
    gap = state.theta - state.phi + state.rho * state.multiplier
    return forms.block_objective(state.theta) \
        + float(np.sum(np.abs(gap) ** 2)) / (2.0 * state.rho)


def _feasibility_al(state: PddState, beta: float) -> float:
    gap = state.theta - state.phi + state.rho * state.multiplier
    return beta + float(np.sum(np.abs(gap) ** 2)) / (2.0 * state.rho)


def _initial_state(theta0: np.ndarray, config: ScenarioConfig) -> PddState:
    N = theta0.shape[0]
    return PddState(theta=theta0.copy(), phi=theta0.copy(),
                    multiplier=np.zeros(N, dtype=complex),
                    rho=config.pdd_rho, delta=1e-3 * math.sqrt(N),
                    shrink=config.pdd_shrink)


def run_pdd_sumrate(point: DesignPoint, channels: ChannelSet, v, w,
                    config: ScenarioConfig,
                    stop: PddStop = None) -> PddResult:
    """Phase update inside the sum-rate loop; never worsens the block."""
    stop = stop or PddStop()
    forms = build_quadratic_forms(point, channels, v, w, config)
    thresholds = np.asarray(config.ehr_thresholds)
    theta_in = point.phase_vector
    state = _initial_state(theta_in, config)

    trace = []
    gap = math.inf
    rounds = 0
    for rounds in range(1, stop.max_outer + 1):
        al = _augmented_lagrangian(state, forms)
        for _ in range(stop.max_inner):
            theta_new = solve_theta_subproblem(state, forms, thresholds,
                                               state.theta)
            trial = replace(state, theta=theta_new)
            if _augmented_lagrangian(trial, forms) <= al + 1e-12 * (1 + abs(al)):
                state = trial
            state = replace(state, phi=update_phi(state.theta, state.rho,
                                                  state.multiplier))
            al_new = _augmented_lagrangian(state, forms)
            if abs(al - al_new) <= stop.inner_tol * (1.0 + abs(al)):
                al = al_new
                break
            al = al_new
        gap = float(np.max(np.abs(state.theta - state.phi)))
        trace.append((rounds, al, gap, state.rho))
        if gap <= stop.consensus_tol:
            break
        state = outer_update(state)
        state = replace(state, delta=0.8 * state.delta)
    else:
        warnings.warn("phase consensus not reached; keeping best candidate")

    theta_out = np.exp(1j * np.angle(state.phi))
    powers = forms.ehr_powers(theta_out)
    ok_power = np.all(powers >= thresholds * (1.0 - REL_EHR_TOL))
    improved = forms.block_objective(theta_out) \
        <= forms.block_objective(theta_in) + 1e-9 * (1 + abs(forms.block_objective(theta_in)))
    if ok_power and improved:
        return PddResult(theta_out, gap, rounds, False, trace)
    return PddResult(theta_in, gap, rounds, True, trace)


def _solve_feasibility_subproblem(state: PddState, forms, thresholds,
                                  anchor: np.ndarray):
    """Relaxed (theta, beta) step: minimize the worst linearized shortfall.

    The shortfall is optimized in power-normalized units (the phase vector
    is O(1) while received powers are tiny watts); the returned beta is in
    watts again.
    """
    N = anchor.shape[0]
    d = 2 * N + 1                       # [Re theta; Im theta; beta']
    inv2rho = 1.0 / (2.0 * state.rho)
    target = state.phi - state.rho * state.multiplier

    rows, rhs_list = [], []
    for Q1, p_min in zip(forms, thresholds):
        rows.append(2.0 * (Q1 @ anchor))
        rhs_list.append(p_min + float(np.real(anchor.conj() @ Q1 @ anchor)))
    scale = max(max(np.linalg.norm(a) for a in rows),
                max(abs(r) for r in rhs_list), 1e-30)

    Q = np.zeros((d, d))
    Q[:2 * N, :2 * N] = inv2rho * np.eye(2 * N)
    q = np.zeros(d)
    q[:N] = inv2rho * np.real(target)
    q[N:2 * N] = inv2rho * np.imag(target)
    q[-1] = -0.5                        # -2 q^T z contributes +beta'
    cons = [qcqp.BallConstraint((n, N + n), 1.0) for n in range(N)]
    for a, rhs in zip(rows, rhs_list):
        row = np.concatenate([-np.real(a), -np.imag(a), [-scale]]) / scale
        cons.append(qcqp.AffineConstraint(row, -rhs / scale))
    beta_anchor = _shortfall(forms, thresholds, anchor)
    ws = np.concatenate([np.real(anchor), np.imag(anchor),
                         [beta_anchor / scale]])
    problem = qcqp.ConvexSubproblem(d, Q, q, constraints=cons,
                                    is_complex=False)
    z, status = qcqp.solve(problem, warm_start=ws)
    if status.status != qcqp.OPTIMAL:
        return anchor, beta_anchor
    return z[:N] + 1j * z[N:2 * N], float(z[-1]) * scale


def _shortfall(forms, thresholds, theta: np.ndarray) -> float:
    """Worst EHR deficit at a phase vector (negative means all satisfied)."""
    if not len(forms):
        return 0.0
    powers = np.array([float(np.real(theta.conj() @ Q @ theta))
                       for Q in forms])
    return float(np.max(np.asarray(thresholds) - powers))


def run_pdd_feasibility(point: DesignPoint, channels: ChannelSet,
                        config: ScenarioConfig,
                        stop: PddStop = None):
    """Minimize the worst EHR shortfall over the phases.

    Returns ``(PddResult, beta)`` where beta is the worst shortfall of the
    returned unit-modulus phases; never worse than the incoming point's.
    """
    stop = stop or PddStop()
    forms = build_power_forms(point, channels, config)
    thresholds = np.asarray(config.ehr_thresholds)
    theta_in = point.phase_vector
    beta_in = _shortfall(forms, thresholds, theta_in)
    if not forms:
        return PddResult(theta_in, 0.0, 0), beta_in
    state = _initial_state(theta_in, config)

    best_theta, best_beta = theta_in, beta_in
    trace = []
    gap = math.inf
    rounds = 0
    for rounds in range(1, stop.max_outer + 1):
        beta = _shortfall(forms, thresholds, state.theta)
        al = _feasibility_al(state, beta)
        for _ in range(stop.max_inner):
            theta_new, beta_new = _solve_feasibility_subproblem(
                state, forms, thresholds, state.theta)
            trial = replace(state, theta=theta_new)
            if _feasibility_al(trial, beta_new) <= al + 1e-12 * (1 + abs(al)):
                state = trial
                beta = beta_new
            state = replace(state, phi=update_phi(state.theta, state.rho,
                                                  state.multiplier))
            unit_beta = _shortfall(forms, thresholds, state.phi)
            if unit_beta < best_beta:
                best_theta, best_beta = state.phi.copy(), unit_beta
            al_new = _feasibility_al(state, beta)
            if abs(al - al_new) <= stop.inner_tol * (1.0 + abs(al)):
                al = al_new
                break
            al = al_new
        gap = float(np.max(np.abs(state.theta - state.phi)))
        trace.append((rounds, al, gap, state.rho))
        if gap <= stop.consensus_tol:
            break
        state = outer_update(state)
        state = replace(state, delta=0.8 * state.delta)

    improved = best_beta < beta_in
    theta_out = np.exp(1j * np.angle(best_theta))
    result = PddResult(theta_out, gap, rounds, not improved, trace)
    return result, best_beta
