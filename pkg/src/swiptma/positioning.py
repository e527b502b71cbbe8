"""Per-antenna position updates for the movable transmit array.

Moving one antenna changes a single column of the BS-side field response,
so the weighted-MSE block objective restricted to that antenna is a
quadratic form in its L-dimensional path-phase vector. Two majorization
steps turn it into a 2-D convex quadratic in the position itself:

1. replace the quadratic-form Hessian by its largest eigenvalue, leaving a
   linear form ``Re{b^H f(t)}`` in the path-phase vector (exact at the
   expansion point, an upper bound everywhere on the unit-modulus torus);
2. expand that trigonometric polynomial to second order and replace its
   position Hessian by a constant curvature bound built from the per-path
   direction cosines (valid for every position, since each cosine term has
   bounded second derivatives).

The EHR power gets the mirror treatment (tangent plane in the equivalent
channel, then a concave quadratic lower bound in the position), and the
pairwise spacing constraint is linearized along the current offset
direction. The resulting 2-D programs are solved exactly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .channel import (
    BS_TRANSMIT,
    IRS_SIDE,
    ChannelSet,
    assemble_irs_user_channel,
    direction_cosines,
    field_response_matrix,
    field_response_vector,
)
from .config import ScenarioConfig
from .model import DesignPoint, equivalent_channels, harvested_powers
from . import qcqp


@dataclass
class PositionSurrogate:
    """All constants of one antenna's convexified subproblem."""

    quad_matrix: np.ndarray        # (L, L) Hermitian PSD
    quad_linear: np.ndarray        # (L,)
    quad_const: float
    direction_vector: np.ndarray   # (L,) linear form after eigenvalue bound
    rate_gradient: np.ndarray      # (2,)
    rate_curvature: np.ndarray     # (2, 2) PSD upper bound
    power_linear: list             # per-EHR (L,) vectors
    power_const: list              # per-EHR scalars
    power_gradient: list           # per-EHR (2,)
    power_curvature: list          # per-EHR (2, 2) NSD lower bound
    power_at_anchor: list          # per-EHR watts


def _irs_mixed_row(user_vector: np.ndarray, phases: np.ndarray,
                   channels: ChannelSet, config: ScenarioConfig) -> np.ndarray:
    """Row vector u^H Theta F_r^H Sigma mapping BS path phases to the user."""
    lam = config.carrier_wavelength
    fr = field_response_matrix(channels.irs_positions,
                               channels.bs_irs.arrival_angles, IRS_SIDE, lam)
    mixed = fr.conj().T * channels.bs_irs.response_diag[None, :]   # (N, L)
    return (user_vector.conj() * np.exp(1j * phases)) @ mixed


def _bs_field_matrix(positions, channels: ChannelSet,
                     config: ScenarioConfig) -> np.ndarray:
    return field_response_matrix(positions, channels.bs_irs.departure_angles,
                                 BS_TRANSMIT, config.carrier_wavelength)


def build_rate_surrogate_data(point: DesignPoint, channels: ChannelSet, v, w,
                              config: ScenarioConfig, m: int):
    """Quadratic-form constants of the block objective in antenna m's phases.

    Returns ``(R0, r0, r0_const, C1, C2)`` where C1/C2 hold the contribution
    of the other antennas to each IDR's received amplitudes.
    """
    K_I, K_E = config.num_idrs, config.num_ehrs
    f = point.beamformers
    weights = np.asarray(config.rate_weights)
    ft = _bs_field_matrix(point.ma_positions, channels, config)     # (L, M)
    L = ft.shape[0]

    R0 = np.zeros((L, L), dtype=complex)
    r0_row = np.zeros(L, dtype=complex)
    r0_const = 0.0
    C1 = np.zeros((K_I, K_I), dtype=complex)
    C2 = np.zeros((K_I, K_E), dtype=complex)
    stream_m_power = float(np.sum(np.abs(f[:, m]) ** 2))

    for i, cl in enumerate(channels.irs_idr):
        hr = assemble_irs_user_channel(cl, channels.irs_positions,
                                       config.carrier_wavelength)
        row = _irs_mixed_row(hr, point.phases, channels, config)     # (L,)
        amps = row @ ft                                              # (M,)
        coef = weights[i] * w[i]
        R0 += coef * abs(v[i]) ** 2 * stream_m_power \
            * np.outer(row.conj(), row)
        for k in range(K_I):
            C1[i, k] = amps @ f[k] - amps[m] * f[k, m]
        for j in range(K_E):
            C2[i, j] = amps @ f[K_I + j] - amps[m] * f[K_I + j, m]
        r0_row += coef * (np.conj(v[i]) * f[i, m]
                          - abs(v[i]) ** 2 * (np.conj(C1[i]) @ f[:K_I, m]
                                              + np.conj(C2[i]) @ f[K_I:, m])) \
            * row
        r0_const += coef * (abs(v[i]) ** 2 * (np.sum(np.abs(C1[i]) ** 2)
                                              + np.sum(np.abs(C2[i]) ** 2))
                            - 2.0 * np.real(np.conj(v[i]) * C1[i, i]))
    return R0, r0_row.conj(), float(r0_const), C1, C2


def rate_objective_value(R0, r0, r0_const, position, channels: ChannelSet,
                         config: ScenarioConfig) -> float:
    """Exact block objective as a function of one antenna position."""
    ft = field_response_vector(position, channels.bs_irs.departure_angles,
                               BS_TRANSMIT, config.carrier_wavelength)
    return float(np.real(ft.conj() @ R0 @ ft)
                 - 2.0 * np.real(np.vdot(r0, ft)) + r0_const)


def linearized_direction_vector(R0, r0, anchor, angles,
                                wavelength: float) -> np.ndarray:
    """Linear form whose real part upper-bounds the phase quadratic."""
    ft = field_response_vector(anchor, angles, BS_TRANSMIT, wavelength)
    lam_max = float(np.linalg.eigvalsh((R0 + R0.conj().T) / 2)[-1])
    return (R0 - lam_max * np.eye(R0.shape[0])) @ ft - r0


def _trig_gradient(b, rho, kappa, wavelength):
    scale = 2.0 * math.pi / wavelength
    weights = np.abs(b) * np.sin(kappa) * scale
    return -np.array([np.sum(weights * rho[:, 0]),
                      np.sum(weights * rho[:, 1])])


def _curvature_bound(b, rho, wavelength):
    scale = 4.0 * math.pi ** 2 / wavelength ** 2
    mags = np.abs(b) * scale
    d1 = float(np.sum(mags * rho[:, 0] ** 2))
    d2 = float(np.sum(mags * rho[:, 1] ** 2))
    cross = float(np.sum(mags * np.abs(rho[:, 0] * rho[:, 1])))
    return np.diag([d1, d2]) + cross * np.eye(2)


def rate_gradient_and_bound(b0, angles, wavelength: float, anchor):
    """Gradient of the linearized objective and a PSD curvature dominator."""
    rho = direction_cosines(angles, BS_TRANSMIT)
    kappa = (2.0 * math.pi / wavelength) * (rho @ np.asarray(anchor)) \
        - np.angle(b0)
    grad = _trig_gradient(b0, rho, kappa, wavelength)
    return grad, _curvature_bound(b0, rho, wavelength)


def build_power_surrogate(point: DesignPoint, channels: ChannelSet,
                          config: ScenarioConfig, m: int, j: int, anchor):
    """Tangent data of one EHR's power in antenna m's position.

    Returns ``(b1, C3, grad, curvature, P0)``:
    ``2 Re{b1^H f(t)} + C3`` is a global lower bound of the power that is
    exact at the anchor (value P0), and
    ``grad^T (t - anchor) + 0.5 (t - anchor)^T curvature (t - anchor) + P0``
    lower-bounds it again with a constant NSD curvature.
    """
    lam = config.carrier_wavelength
    positions = point.ma_positions.copy()
    positions[m] = anchor
    ft = _bs_field_matrix(positions, channels, config)               # (L, M)

    gr = assemble_irs_user_channel(channels.irs_ehr[j], channels.irs_positions,
                                   lam)
    row = _irs_mixed_row(gr, point.phases, channels, config)         # (L,)
    amps = row @ ft                                                  # (M,)
    g_eq = amps.conj()                                               # g_j
    # F g with F = sum_k f_k f_k^H, computed as sum_k f_k (f_k^H g)
    Fg = point.beamformers.T @ (point.beamformers.conj() @ g_eq)
    p_anchor = float(np.real(g_eq.conj() @ Fg))

    b1 = (row * Fg[m]).conj()
    C3 = p_anchor - 2.0 * np.real(amps[m] * Fg[m])

    rho = direction_cosines(channels.bs_irs.departure_angles, BS_TRANSMIT)
    kappa = (2.0 * math.pi / lam) * (rho @ np.asarray(anchor)) - np.angle(b1)
    grad = 2.0 * _trig_gradient(b1, rho, kappa, lam)
    curvature = -2.0 * _curvature_bound(b1, rho, lam)
    return b1, float(C3), grad, curvature, p_anchor


def power_tangent_value(b1, C3, position, channels: ChannelSet,
                        config: ScenarioConfig) -> float:
    """First MM stage: tangent-plane lower bound of the power, exact in t."""
    ft = field_response_vector(position, channels.bs_irs.departure_angles,
                               BS_TRANSMIT, config.carrier_wavelength)
    return 2.0 * float(np.real(np.vdot(b1, ft))) + C3


def linearize_spacing(anchor, others):
    """Affine minorants of the pairwise distances.

    For each other position t_s returns ``(u, u @ t_s)`` where u is the unit
    offset from t_s to the anchor; ``u @ (t - t_s)`` lower-bounds
    ``||t - t_s||`` everywhere and matches it at the anchor.
    """
    out = []
    anchor = np.asarray(anchor, dtype=float)
    for t_s in np.atleast_2d(others):
        diff = anchor - t_s
        dist = float(np.linalg.norm(diff))
        if dist <= 0.0:
            raise ValueError("anchor coincides with another antenna; "
                             "spacing cannot be linearized")
        u = diff / dist
        out.append((u, float(u @ t_s)))
    return out


def build_position_surrogate(point: DesignPoint, channels: ChannelSet, v, w,
                             config: ScenarioConfig, m: int,
                             anchor) -> PositionSurrogate:
    R0, r0, r0c, _, _ = build_rate_surrogate_data(point, channels, v, w,
                                                  config, m)
    angles = channels.bs_irs.departure_angles
    lam = config.carrier_wavelength
    b0 = linearized_direction_vector(R0, r0, anchor, angles, lam)
    grad, M_R = rate_gradient_and_bound(b0, angles, lam, anchor)
    power_lin, power_const, power_grad, power_curv, power_anchor = \
        [], [], [], [], []
    for j in range(config.num_ehrs):
        b1, C3, gP, MP, p0 = build_power_surrogate(point, channels, config,
                                                   m, j, anchor)
        power_lin.append(b1)
        power_const.append(C3)
        power_grad.append(gP)
        power_curv.append(MP)
        power_anchor.append(p0)
    return PositionSurrogate(R0, r0, r0c, b0, grad, M_R, power_lin,
                             power_const, power_grad, power_curv, power_anchor)


def _position_constraints(surrogate: PositionSurrogate, point: DesignPoint,
                          config: ScenarioConfig, m: int, anchor,
                          extra_dims: int = 0, power_scale: float = 1.0):
    """Constraint list over [t] or [t; beta'] (beta' relaxes the EHR rows).

    With ``extra_dims`` the shortfall variable is expressed in units of
    ``power_scale`` so the quadratic data stays O(1).
    """
    d = 2 + extra_dims
    half = config.region_size / 2.0
    cons = []
    lower = np.full(d, -np.inf)
    upper = np.full(d, np.inf)
    lower[:2], upper[:2] = -half, half
    cons.append(qcqp.BoxConstraint(lower, upper))

    others = np.delete(point.ma_positions, m, axis=0)
    if others.size:
        for u, u_ts in linearize_spacing(anchor, others):
            row = np.zeros(d)
            row[:2] = -u
            cons.append(qcqp.AffineConstraint(row,
                                              -(config.min_spacing + u_ts)))

    anchor = np.asarray(anchor, dtype=float)
    for j in range(len(surrogate.power_linear)):
        B2 = -surrogate.power_curvature[j] / (2.0 * power_scale)
        gP = surrogate.power_gradient[j] / power_scale
        p0 = surrogate.power_at_anchor[j] / power_scale
        p_min = config.ehr_thresholds[j] / power_scale
        B = np.zeros((d, d))
        B[:2, :2] = B2
        p = np.zeros(d)
        p[:2] = B2 @ anchor + gP / 2.0
        const = float(anchor @ B2 @ anchor + gP @ anchor - p0 + p_min)
        if extra_dims:
            p[2] = 0.5            # -2 p^T z contributes -beta'
        cons.append(qcqp.QuadConstraint(B, p, const))
    return cons


def solve_position_subproblem(point: DesignPoint, channels: ChannelSet, v, w,
                              config: ScenarioConfig, m: int,
                              anchor) -> np.ndarray:
    """Minimize the convexified block objective over one antenna position."""
    anchor = np.asarray(anchor, dtype=float)
    surrogate = build_position_surrogate(point, channels, v, w, config, m,
                                         anchor)
    M_R = surrogate.rate_curvature
    if np.all(np.abs(M_R) < 1e-300):
        M_R = M_R + 1e-12 * np.eye(2)
    Q = M_R / 2.0
    q = (M_R @ anchor - surrogate.rate_gradient) / 2.0
    cons = _position_constraints(surrogate, point, config, m, anchor)
    problem = qcqp.ConvexSubproblem(2, Q, q, constraints=cons,
                                    is_complex=False)

    # The unconstrained minimizer is exact and usually interior; fall back
    # to the constrained solve only when it is not.
    candidate = None
    try:
        t_free = np.linalg.solve(M_R, M_R @ anchor - surrogate.rate_gradient)
    except np.linalg.LinAlgError:
        t_free = None
    if t_free is not None and problem.max_violation(t_free) <= 1e-12:
        candidate = t_free
    if candidate is None:
        t_new, status = qcqp.solve(problem, warm_start=anchor)
        if status.status != qcqp.OPTIMAL:
            return anchor
        candidate = np.real(t_new)

    # keep the anchor unless the true block objective improves
    before = rate_objective_value(surrogate.quad_matrix, surrogate.quad_linear,
                                  surrogate.quad_const, anchor, channels,
                                  config)
    after = rate_objective_value(surrogate.quad_matrix, surrogate.quad_linear,
                                 surrogate.quad_const, candidate, channels,
                                 config)
    if after > before + 1e-12 * (1.0 + abs(before)):
        return anchor
    return candidate


def solve_position_feasibility(point: DesignPoint, channels: ChannelSet,
                               config: ScenarioConfig, m: int, anchor,
                               beta: float):
    """Shrink the worst EHR shortfall by moving one antenna."""
    anchor = np.asarray(anchor, dtype=float)
    if config.num_ehrs == 0:
        return anchor, min(beta, 0.0)
    surrogate = build_position_surrogate(
        point, channels, np.zeros(config.num_idrs),
        np.ones(config.num_idrs), config, m, anchor)
    cons = _position_constraints(surrogate, point, config, m, anchor,
                                 extra_dims=1)
    q = np.array([0.0, 0.0, -0.5])      # objective: +beta
    problem = qcqp.ConvexSubproblem(3, np.zeros((3, 3)), q,
                                    constraints=cons, is_complex=False)
    ws = np.array([anchor[0], anchor[1], beta])
    z, status = qcqp.solve(problem, warm_start=ws)
    if status.status != qcqp.OPTIMAL:
        return anchor, beta

    t_new = np.real(z[:2])
    trial = point.copy()
    trial.ma_positions[m] = t_new
    _, E = equivalent_channels(trial, channels, config)
    shortfall = float(np.max(np.asarray(config.ehr_thresholds)
                             - harvested_powers(E, trial.beamformers)))
    if shortfall >= beta:            # no strict improvement: keep the anchor
        return anchor, beta
    return t_new, shortfall
