"""Multiple-scaling ansatz psi_app = exp(i k_z z) w(eps x, eps y, eps^2 z).

In Fourier space the ansatz is a relabelling of the envelope spectrum:

    psi_hat_app(k, z) = eps^-2 w_hat(k / eps, eps^2 z) exp(i k_z z),

so the physical-k grid is the slow-K grid scaled by eps and nothing is ever
interpolated. Derivatives in z and the Helmholtz residual are then exact
per-node multipliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import FrameError, ResolutionError
from .spectral import PHYSICAL, SLOW, KGrid, Params, SpectralField

GAUSSIAN = "gaussian"
ALGEBRAIC = "algebraic"


@dataclass(frozen=True)
class InitialData:
    """Parametric envelope data at Z = 0.

    ``gaussian`` is amplitude * exp(-|X|^2 / (2 sigma^2)); ``algebraic`` is
    defined on the Fourier side as amplitude * (1 + |K|^2)^(-p/2).
    """

    kind: Literal["gaussian", "algebraic"] = GAUSSIAN
    sigma: float | None = 1.0
    p: float | None = None
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind == GAUSSIAN:
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("gaussian data needs sigma > 0")
        elif self.kind == ALGEBRAIC:
            if self.p is None or not self.p > 0:
                raise ValueError("algebraic data needs p > 0")
        else:
            raise ValueError(f"unknown initial data kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma: float = 1.0, amplitude: float = 1.0) -> InitialData:
        return cls(GAUSSIAN, sigma=sigma, p=None, amplitude=amplitude)

    @classmethod
    def algebraic(cls, p: float, amplitude: float = 1.0) -> InitialData:
        return cls(ALGEBRAIC, sigma=None, p=p, amplitude=amplitude)

    def check_regularity(self, sA: int) -> None:
        """Algebraic decay must be fast enough for w_hat to lie in L^2_{sA}."""
        if self.kind == ALGEBRAIC and not self.p > sA + 1:
            raise ValueError(f"p must exceed sA+1 (p={self.p}, sA={sA})")

    def spectrum(self, k_squared: np.ndarray) -> np.ndarray:
        """Closed-form w_hat_0 at the given |K|^2 values."""
        if self.kind == GAUSSIAN:
            s2 = self.sigma**2
            return self.amplitude * (s2 / (2 * math.pi)) * np.exp(-0.5 * s2 * k_squared)
        return self.amplitude * (1.0 + k_squared) ** (-0.5 * self.p)


def initial_spectrum(data: InitialData, grid: KGrid) -> SpectralField:
    if data.kind == GAUSSIAN:
        dk_max = (1.0 / data.sigma) / 8.0
        if grid.spacing > dk_max * (1 + 1e-12):
            raise ResolutionError(
                f"grid spacing {grid.spacing:.4g} under-resolves a gaussian with "
                f"sigma={data.sigma}; use dK ≤ {dk_max:.4g}"
            )
    values = data.spectrum(grid.k_squared).astype(complex)
    return SpectralField(grid, values, SLOW)


def _check_slow(w_hat: SpectralField) -> None:
    if w_hat.frame != SLOW:
        raise FrameError(f"expected a {SLOW} envelope, got {w_hat.frame}")


def _physical_grid(w_hat: SpectralField, params: Params, grid: KGrid | None) -> KGrid:
    scaled = w_hat.grid.scaled(params.epsilon)
    if grid is None:
        return scaled
    if not grid.matches(scaled):
        raise FrameError(
            f"physical grid (k_max={grid.k_max}, n={grid.n}) is not the envelope grid "
            f"scaled by epsilon={params.epsilon}"
        )
    return grid


def _wrap(w_hat, values, params, z, grid):
    """eps^-2 exp(i k_z z) * values, relabelled onto the physical grid."""
    phase = np.exp(1j * params.k_z * z) / params.epsilon**2
    return SpectralField(_physical_grid(w_hat, params, grid), values * phase, PHYSICAL)


def envelope_z_derivative(values: np.ndarray, k_squared: np.ndarray, params: Params) -> np.ndarray:
    """d/dZ of a Schrödinger solution: -i |K|^2 / (2 k_z) times the spectrum."""
    return (-1j / (2.0 * params.k_z)) * k_squared * values


def ansatz_spectrum(
    w_hat: SpectralField, params: Params, z: float, grid: KGrid | None = None
) -> SpectralField:
    """psi_hat_app at fast coordinate z from w_hat already propagated to Z = eps^2 z."""
    _check_slow(w_hat)
    return _wrap(w_hat, w_hat.values, params, z, grid)


def ansatz_z_derivative(
    w_hat: SpectralField,
    params: Params,
    z: float,
    grid: KGrid | None = None,
    order: int = 1,
) -> SpectralField:
    """d^order/dz^order of psi_hat_app.

    One derivative maps the envelope g to i k_z g + eps^2 dg/dZ, which is
    again a Schrödinger solution, so higher orders just repeat the map.
    """
    _check_slow(w_hat)
    if order < 0:
        raise ValueError("order must be non-negative")
    k2 = w_hat.grid.k_squared
    g = w_hat.values
    for _ in range(order):
        g = 1j * params.k_z * g + params.epsilon**2 * envelope_z_derivative(g, k2, params)
    return _wrap(w_hat, g, params, z, grid)


def envelope_second_derivative(w_hat: SpectralField, params: Params) -> SpectralField:
    """d^2 w_hat / dZ^2 = -|K|^4 / (4 k_z^2) w_hat (slow frame)."""
    _check_slow(w_hat)
    k2 = w_hat.grid.k_squared
    return w_hat.with_values((-(k2**2) / (4.0 * params.k_z**2)) * w_hat.values)


def residual_spectrum(
    w_hat: SpectralField, params: Params, z: float, grid: KGrid | None = None
) -> SpectralField:
    """(d_z^2 + d_x^2 + d_y^2 + omega^2) psi_app in Fourier space.

    Equals eps^4 exp(i k_z z) (d_Z^2 w)(eps x, eps y, eps^2 z); no cutoff
    applied here.
    """
    d2 = envelope_second_derivative(w_hat, params)
    return _wrap(w_hat, params.epsilon**4 * d2.values, params, z, grid)


def helmholtz_operator_on_ansatz(
    w_hat: SpectralField, params: Params, z: float, grid: KGrid | None = None
) -> tuple[SpectralField, np.ndarray]:
    """Apply d_z^2 - |k|^2 + omega^2 to psi_hat_app directly.

    Returns the result and a per-node magnitude scale (the sum of the sizes
    of the two terms that cancel), for relative comparisons.
    """
    psi = ansatz_spectrum(w_hat, params, z, grid)
    d2 = ansatz_z_derivative(w_hat, params, z, grid, order=2)
    potential = (params.omega**2 - psi.grid.k_squared) * psi.values
    scale = np.abs(d2.values) + np.abs(potential)
    return psi.with_values(d2.values + potential), scale
