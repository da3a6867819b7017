"""Fourier-space fields on uniform wave-vector grids.

Fields are stored as samples of the continuous transform

    u_hat(k) = (2 pi)^-2 \\int u(x) exp(-i k.x) dx

on a uniform, half-cell offset grid, and every integral over k is a midpoint
sum. The Sobolev norm of a field is *defined* as the weighted sum

    ||u||_{H^s}^2 = sum |u_hat|^2 (1 + |k|^2)^s dk^2

so no real-space transform is ever needed to measure anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Literal

import numpy as np

from .errors import FrameError, ResolutionError

PHYSICAL = "physical-k"
SLOW = "slow-K"
Frame = Literal["physical-k", "slow-K"]

DEFAULT_MAX_NODES = 16_000_000


@dataclass(frozen=True)
class Params:
    """Physical and approximation parameters.

    The longitudinal wavenumber is not free: it is pinned to ``omega`` so that
    the order-one terms of the multiple-scaling expansion cancel.
    """

    omega: float = 1.0
    epsilon: float = 0.1
    Z0: float = 1.0
    s: int = 0
    sA: int = 4

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.Z0 > 0:
            raise ValueError(f"Z0 must be positive, got {self.Z0}")
        if int(self.s) != self.s or self.s < 0:
            raise ValueError(f"s must be a non-negative integer, got {self.s}")
        if int(self.sA) != self.sA or self.sA < max(4, self.s):
            raise ValueError(f"sA must be ≥ max(4,s), got sA={self.sA}, s={self.s}")

    @property
    def k_z(self) -> float:
        return self.omega

    @property
    def z_max(self) -> float:
        """End of the fast-variable window, Z0 / epsilon^2."""
        return self.Z0 / self.epsilon**2

    def with_epsilon(self, epsilon: float) -> Params:
        return replace(self, epsilon=epsilon)


@dataclass(frozen=True)
class GridPolicy:
    cells_per_epsilon: float = 10.0
    k_max_factor: float = 2.0
    max_nodes: int = DEFAULT_MAX_NODES

    def __post_init__(self):
        if not self.cells_per_epsilon >= 4:
            raise ValueError("cells_per_epsilon must be ≥ 4")
        if not self.k_max_factor > 0:
            raise ValueError("k_max_factor must be positive")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be positive")


@dataclass(frozen=True)
class KGrid:
    """Uniform n x n grid on [-k_max, k_max]^2.

    With ``offset`` set the nodes sit at cell centres, -k_max + (j + 1/2) dk,
    and ``n`` is even, so the origin and the cutoff circle carry no node.
    Without the offset the nodes are -k_max + j dk, which includes k = 0.
    """

    k_max: float
    n: int
    offset: bool = True

    def __post_init__(self):
        if not self.k_max > 0:
            raise ValueError("k_max must be positive")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.k_max / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @cached_property
    def nodes(self) -> np.ndarray:
        j = np.arange(self.n, dtype=float)
        shift = 0.5 if self.offset else 0.0
        return self.spacing * (j + shift - self.n / 2)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k = self.nodes
        return k[:, None] ** 2 + k[None, :] ** 2

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.nodes, self.nodes, indexing="ij")

    def scaled(self, factor: float) -> KGrid:
        return KGrid(self.k_max * factor, self.n, self.offset)

    def matches(self, other: KGrid, rtol: float = 1e-12) -> bool:
        return (
            self.n == other.n
            and self.offset == other.offset
            and math.isclose(self.k_max, other.k_max, rel_tol=rtol)
        )

    def index_of(self, kx: float, ky: float) -> tuple[int, int]:
        """Index of the node nearest to (kx, ky)."""
        k = self.nodes
        return int(np.argmin(np.abs(k - kx))), int(np.argmin(np.abs(k - ky)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: KGrid
    values: np.ndarray
    frame: Frame = PHYSICAL

    def __post_init__(self):
        if self.frame not in (PHYSICAL, SLOW):
            raise FrameError(f"unknown frame {self.frame!r}")
        if self.values.shape != self.grid.shape:
            raise FrameError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("spectral field contains NaN or Inf")

    def with_values(self, values: np.ndarray) -> SpectralField:
        return SpectralField(self.grid, values, self.frame)

    @classmethod
    def zeros(cls, grid: KGrid, frame: Frame = PHYSICAL) -> SpectralField:
        return cls(grid, np.zeros(grid.shape, dtype=complex), frame)


@dataclass(frozen=True, eq=False)
class ModeData:
    """Per-node dispersion data on a physical-k grid.

    ``omega_hat_sq`` is omega^2 - |k|^2 (positive on propagating modes),
    ``lambda_sq`` its negative, ``chi`` the cutoff |k|^2 <= omega^2/2 and
    ``rho`` the Sobolev weight (1 + |k|^2)^(1/2).
    """

    grid: KGrid
    omega: float
    k_squared: np.ndarray = field(repr=False)
    omega_hat_sq: np.ndarray = field(repr=False)
    lambda_sq: np.ndarray = field(repr=False)
    chi: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)

    @property
    def cutoff_gain(self) -> float:
        """sup of rho over the cutoff disc, i.e. the compact-support norm gain per unit s."""
        return math.sqrt(1.0 + self.omega**2 / 2.0)

    def weight(self, s: int) -> np.ndarray:
        return self.rho ** (2 * s)


def make_grid(params: Params, policy: GridPolicy = GridPolicy()) -> KGrid:
    """Physical-k grid with dk = epsilon / cells_per_epsilon and k_max >= k_max_factor * omega."""
    dk = params.epsilon / policy.cells_per_epsilon
    n = math.ceil(2.0 * policy.k_max_factor * params.omega / dk)
    n += n % 2
    if n * n > policy.max_nodes:
        raise ResolutionError(
            f"grid needs {n}x{n} = {n * n} nodes, budget allows {policy.max_nodes}"
        )
    return KGrid(k_max=n * dk / 2.0, n=n, offset=True)


def mode_data(grid: KGrid, params: Params | float) -> ModeData:
    omega = params.omega if isinstance(params, Params) else float(params)
    k2 = grid.k_squared
    omega_hat_sq = omega**2 - k2
    return ModeData(
        grid=grid,
        omega=omega,
        k_squared=k2,
        omega_hat_sq=omega_hat_sq,
        lambda_sq=-omega_hat_sq,
        chi=k2 <= omega**2 / 2.0,
        rho=np.sqrt(1.0 + k2),
    )


def _check_physical(field: SpectralField, modes: ModeData) -> None:
    if field.frame != PHYSICAL:
        raise FrameError(f"expected a {PHYSICAL} field, got {field.frame}")
    if not field.grid.matches(modes.grid):
        raise FrameError("field grid does not match mode data grid")


def project_hyp(field: SpectralField, modes: ModeData) -> SpectralField:
    _check_physical(field, modes)
    return field.with_values(np.where(modes.chi, field.values, 0))


def project_ell(field: SpectralField, modes: ModeData) -> SpectralField:
    _check_physical(field, modes)
    return field.with_values(np.where(modes.chi, 0, field.values))


def _quadrature(integrand: np.ndarray, cell_area: float) -> float:
    # contiguous ravel -> numpy pairwise summation, fixed order
    return float(np.sum(np.ascontiguousarray(integrand).ravel())) * cell_area


def l2s_norm(field: SpectralField, s: int = 0, modes: ModeData | None = None) -> float:
    """Weighted L^2_s norm; with the package's convention this is the H^s norm.

    The weight is taken from ``modes`` when given, otherwise from the field's
    own grid (which is what is wanted for slow-frame fields).
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    mag2 = np.abs(field.values) ** 2
    if s:
        if modes is not None:
            if not field.grid.matches(modes.grid):
                raise FrameError("field grid does not match mode data grid")
            mag2 = mag2 * modes.weight(s)
        else:
            mag2 = mag2 * (1.0 + field.grid.k_squared) ** s
    return math.sqrt(_quadrature(mag2, field.grid.cell_area))


def to_physical(field: SpectralField, epsilon: float) -> SpectralField:
    """Relabel a slow-frame spectrum w_hat(K) as the transform of w(eps x).

    The result lives on the grid scaled by eps with amplitudes times eps^-2.
    """
    if field.frame != SLOW:
        raise FrameError(f"expected a {SLOW} field, got {field.frame}")
    return SpectralField(field.grid.scaled(epsilon), field.values / epsilon**2, PHYSICAL)


def to_slow(field: SpectralField, epsilon: float) -> SpectralField:
    if field.frame != PHYSICAL:
        raise FrameError(f"expected a {PHYSICAL} field, got {field.frame}")
    return SpectralField(field.grid.scaled(1.0 / epsilon), field.values * epsilon**2, SLOW)


def evaluate_physical(field: SpectralField, points, chunk: int = 256) -> np.ndarray:
    """u(x, y) = sum_k u_hat(k) exp(i k.x) dk^2 at arbitrary points.

    Direct summation; ``points`` is an (m, 2) array-like.
    """
    if field.frame != PHYSICAL:
        raise FrameError(f"expected a {PHYSICAL} field, got {field.frame}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k = field.grid.nodes
    out = np.empty(len(pts), dtype=complex)
    for start in range(0, len(pts), chunk):
        block = pts[start : start + chunk]
        ex = np.exp(1j * block[:, 0, None] * k[None, :])
        ey = np.exp(1j * block[:, 1, None] * k[None, :])
        # sum_ij ex[p,i] V[i,j] ey[p,j]
        out[start : start + chunk] = np.einsum("pi,ij,pj->p", ex, field.values, ey)
    return out * field.grid.cell_area


def evaluate_lattice(field: SpectralField, xs, ys) -> np.ndarray:
    """Same quadrature as :func:`evaluate_physical` on the tensor lattice xs x ys.

    Returns an array indexed [ix, iy]; separable, so cost is O(n^2 m).
    """
    if field.frame != PHYSICAL:
        raise FrameError(f"expected a {PHYSICAL} field, got {field.frame}")
    k = field.grid.nodes
    ex = np.exp(1j * np.outer(np.asarray(xs, dtype=float), k))
    ey = np.exp(1j * np.outer(np.asarray(ys, dtype=float), k))
    return (ex @ field.values @ ey.T) * field.grid.cell_area
