"""Exact mode-wise solution operators.

Every evolution here is diagonal in k, so a propagator is a per-node
closed-form map. Helmholtz modes oscillate with frequency
sqrt(omega^2 - |k|^2) where that is real and grow exponentially where it is
not; the Schrödinger envelope only picks up a phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import AmplitudeOverflow, BranchError, FrameError
from .spectral import PHYSICAL, SLOW, ModeData, Params, SpectralField

HYPERBOLIC_ONLY = "hyperbolic_only"
ALLOW_ELLIPTIC = "allow_elliptic"
BranchPolicy = Literal["hyperbolic_only", "allow_elliptic"]

DEGENERATE_TOL = 1e-12
AMPLITUDE_CAP = 1e12


@dataclass(frozen=True, eq=False)
class HelmholtzState:
    v_hat: SpectralField
    dv_hat: SpectralField
    z: float = 0.0

    def __post_init__(self):
        if self.v_hat.frame != PHYSICAL or self.dv_hat.frame != PHYSICAL:
            raise FrameError("Helmholtz state fields must be in the physical-k frame")
        if not self.v_hat.grid.matches(self.dv_hat.grid):
            raise FrameError("v_hat and dv_hat live on different grids")

    @property
    def grid(self):
        return self.v_hat.grid


def _advance_modes(w2, v0, v1, z):
    """Exact solution of v'' = -w2 v after a step z, nodewise.

    Only nodes carrying data are touched; zero data stays exactly zero.
    """
    w2 = np.asarray(w2, dtype=float)
    v0 = np.asarray(v0)
    v1 = np.asarray(v1)
    dtype = np.result_type(v0, v1, complex)
    v = np.zeros(np.broadcast_shapes(w2.shape, v0.shape, v1.shape), dtype=dtype)
    dv = np.zeros_like(v)
    active = (v0 != 0) | (v1 != 0)
    if np.any(active):
        v[active], dv[active] = _advance_active(w2[active], v0[active], v1[active], z)
    return v, dv


def _advance_active(w2, v0, v1, z):
    # three branches: oscillatory (w2 > 0), exponential (w2 < 0) and a
    # second-order series where |w2| is too small for sin(mu z)/mu to be safe
    hyp = w2 > DEGENERATE_TOL
    ell = w2 < -DEGENERATE_TOL
    deg = ~(hyp | ell)
    v = np.empty(len(w2), dtype=complex)
    dv = np.empty_like(v)

    mu = np.sqrt(w2[hyp])
    c, s = np.cos(mu * z), np.sin(mu * z)
    a, b = v0[hyp], v1[hyp]
    v[hyp] = c * a + (s / mu) * b
    dv[hyp] = -mu * s * a + c * b

    nu = np.sqrt(-w2[ell])
    with np.errstate(over="ignore", invalid="ignore"):
        ch, sh = np.cosh(nu * z), np.sinh(nu * z)
        a, b = v0[ell], v1[ell]
        v[ell] = ch * a + (sh / nu) * b
        dv[ell] = nu * sh * a + ch * b

    a, b, w = v0[deg], v1[deg], w2[deg]
    v[deg] = a + z * b - 0.5 * w * z**2 * a
    dv[deg] = b - w * z * a
    return v, dv


def _propagate(state: HelmholtzState, modes: ModeData, z: float, branch_policy: str):
    if not state.grid.matches(modes.grid):
        raise FrameError("state grid does not match mode data grid")
    v0 = state.v_hat.values
    v1 = state.dv_hat.values
    if branch_policy == HYPERBOLIC_ONLY:
        outside = ~modes.chi & ((v0 != 0) | (v1 != 0))
        if np.any(outside):
            amp = np.where(outside, np.abs(v0) + np.abs(v1), 0.0)
            idx = np.unravel_index(np.argmax(amp), amp.shape)
            k = math.sqrt(modes.k_squared[idx])
            raise BranchError(
                f"nonzero amplitude outside the hyperbolic cutoff at |k| = {k:.6g} "
                f"(cutoff |k| = {modes.omega / math.sqrt(2):.6g}); "
                "z-evolution of these modes is ill-posed"
            )
    elif branch_policy != ALLOW_ELLIPTIC:
        raise ValueError(f"unknown branch policy {branch_policy!r}")

    v, dv = _advance_modes(modes.omega_hat_sq, v0, v1, z)

    if branch_policy == ALLOW_ELLIPTIC:
        peak = max(np.max(np.abs(v), initial=0.0), np.max(np.abs(dv), initial=0.0))
        if not np.isfinite(peak) or peak > AMPLITUDE_CAP:
            raise AmplitudeOverflow(
                f"elliptic growth reached amplitude {peak:.3e} > cap {AMPLITUDE_CAP:.0e} at z = {z}"
            )
    return HelmholtzState(
        state.v_hat.with_values(v), state.dv_hat.with_values(dv), state.z + z
    )


def helmholtz_evolve(
    state0: HelmholtzState,
    modes: ModeData,
    z: float,
    branch_policy: BranchPolicy = HYPERBOLIC_ONLY,
) -> HelmholtzState:
    """Advance a Helmholtz state by ``z`` (measured from ``state0.z``)."""
    if z < 0:
        raise ValueError("z must be non-negative")
    return _propagate(state0, modes, z, branch_policy)


def helmholtz_energy_per_mode(state: HelmholtzState, modes: ModeData) -> SpectralField:
    """|dv_hat|^2 + omega_hat^2 |v_hat|^2 at every node (real-valued field)."""
    e = np.abs(state.dv_hat.values) ** 2 + modes.omega_hat_sq * np.abs(state.v_hat.values) ** 2
    return state.v_hat.with_values(e)


def schrodinger_multiplier(field: SpectralField, params: Params, Z: float) -> np.ndarray:
    return np.exp(-1j * field.grid.k_squared * (Z / (2.0 * params.k_z)))


def schrodinger_evolve(w_hat0: SpectralField, params: Params, Z: float) -> SpectralField:
    """Solve 2 i k_z dw/dZ = -(d_X^2 + d_Y^2) w exactly: a phase per node."""
    if w_hat0.frame != SLOW:
        raise FrameError(f"expected a {SLOW} field, got {w_hat0.frame}")
    if not 0 <= Z <= params.Z0 * (1 + 1e-12):
        raise ValueError(f"Z = {Z} outside [0, Z0 = {params.Z0}]")
    return w_hat0.with_values(w_hat0.values * schrodinger_multiplier(w_hat0, params, Z))


def rk4_oracle_evolve(
    state0: HelmholtzState, modes: ModeData, z: float, steps: int
) -> HelmholtzState:
    """Classical RK4 on (v, v')' = (v', -omega_hat^2 v); independent check of the exact map."""
    if steps < 1:
        raise ValueError("steps must be ≥ 1")
    if not state0.grid.matches(modes.grid):
        raise FrameError("state grid does not match mode data grid")
    v0 = state0.v_hat.values
    v1 = state0.dv_hat.values
    # the system is linear and per-node, so empty nodes stay exactly zero
    active = (v0 != 0) | (v1 != 0)
    w2 = modes.omega_hat_sq[active]
    v = v0[active].astype(complex)
    p = v1[active].astype(complex)
    h = z / steps
    for _ in range(steps):
        k1v, k1p = p, -w2 * v
        k2v, k2p = p + 0.5 * h * k1p, -w2 * (v + 0.5 * h * k1v)
        k3v, k3p = p + 0.5 * h * k2p, -w2 * (v + 0.5 * h * k2v)
        k4v, k4p = p + h * k3p, -w2 * (v + h * k3v)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        p = p + (h / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
    out_v = np.zeros(v0.shape, dtype=complex)
    out_p = np.zeros(v0.shape, dtype=complex)
    out_v[active] = v
    out_p[active] = p
    return HelmholtzState(
        state0.v_hat.with_values(out_v), state0.dv_hat.with_values(out_p), state0.z + z
    )


@dataclass(frozen=True)
class GrowthRow:
    z: float
    amplitude: float
    predicted: float


def illposed_growth_demo(k, omega: float, z_samples) -> list[GrowthRow]:
    """Growth of a single elliptic mode with |k| > omega.

    Data v = 1, v' = nu selects the purely growing solution, so the exact
    propagator should return exp(nu z).
    """
    kx, ky = k
    lam2 = kx * kx + ky * ky - omega * omega
    if not lam2 > 0:
        raise BranchError(
            f"|k| = {math.hypot(kx, ky):.6g} is not elliptic for omega = {omega} (need |k| > omega)"
        )
    nu = math.sqrt(lam2)
    rows = []
    for z in z_samples:
        v, _ = _advance_modes(np.array([-lam2]), np.array([1.0]), np.array([nu]), float(z))
        amp = float(np.abs(v[0]))
        if amp > AMPLITUDE_CAP:
            raise AmplitudeOverflow(f"amplitude {amp:.3e} exceeds cap at z = {z}")
        rows.append(GrowthRow(float(z), amp, math.exp(nu * z)))
    return rows
