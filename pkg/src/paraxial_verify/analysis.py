"""Experiments comparing exact Helmholtz solutions with the paraxial ansatz.

The Helmholtz solution v is started from the cut-off ansatz and its
z-derivative, then propagated exactly; R = v - P_hyp psi_app is formed as a
difference of exactly propagated fields, never by integrating a forced ODE.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .approximation import (
    InitialData,
    ansatz_spectrum,
    ansatz_z_derivative,
    envelope_second_derivative,
    helmholtz_operator_on_ansatz,
    initial_spectrum,
    residual_spectrum,
)
from .errors import FrameError, SweepAborted, TraceError
from .propagators import HelmholtzState, helmholtz_evolve, rk4_oracle_evolve, schrodinger_evolve
from .spectral import (
    GridPolicy,
    ModeData,
    Params,
    SpectralField,
    _quadrature,
    evaluate_lattice,
    l2s_norm,
    make_grid,
    mode_data,
    project_hyp,
)

MIN_Z_SAMPLES = 16
INEQUALITY_RTOL = 1e-12
TRIANGLE_RTOL = 1e-10


@dataclass
class EnergyTrace:
    epsilon: float
    z_samples: np.ndarray
    E: np.ndarray
    dE_fd: np.ndarray  # NaN at the two end samples
    bound_rhs: np.ndarray
    C_meas: float

    def __len__(self):
        return len(self.z_samples)


@dataclass
class ErrorProfile:
    """Per-sample quantities behind an :class:`ErrorReport`."""

    z: np.ndarray
    error_hs: np.ndarray  # ||v - psi_app||_{H^s}
    hyp_error_hs: np.ndarray  # ||v - P_hyp psi_app||_{H^s} = ||R||_{H^s}
    tail: np.ndarray  # ||(1 - chi) psi_hat_app||_{L^2_s}
    r_l2: np.ndarray  # ||R||_{L^2}
    energy: np.ndarray
    error_inf: np.ndarray  # lattice sup |v - psi_app|
    ansatz_l2: float


@dataclass
class ErrorReport:
    epsilon: float
    sup_error_hs: float
    z_at_sup: float
    sup_error_inf: float
    tail_norm: float
    energy_ratio: float  # sup_z E(z) / eps^2
    profile: ErrorProfile = field(repr=False)

    def as_row(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "sup_error_hs": self.sup_error_hs,
            "z_at_sup": self.z_at_sup,
            "sup_error_inf": self.sup_error_inf,
            "tail_norm": self.tail_norm,
            "energy_ratio": self.energy_ratio,
        }


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    max_residual: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        if self.degenerate:
            return {"slope": None, "intercept": None, "max_residual": None, "degenerate": True}
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "max_residual": self.max_residual,
            "degenerate": False,
        }


def fit_slope(x, y, floor=0.0) -> SlopeFit:
    """Least-squares line through (log x, log y).

    Flagged degenerate when any y is at or below ``floor`` (scalar or
    per-point), since a log fit through round-off says nothing about a rate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise ValueError("a slope fit needs at least 3 points")
    if np.any(~np.isfinite(y)) or np.any(y <= np.broadcast_to(floor, y.shape)):
        return SlopeFit(math.nan, math.nan, math.nan, degenerate=True)
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return SlopeFit(float(slope), float(intercept), float(np.max(np.abs(resid))))


def z_samples(params: Params, count: int = 64) -> np.ndarray:
    """Hybrid sampling of [0, Z0/eps^2]: uniform, densified geometrically near 0."""
    if count < MIN_Z_SAMPLES:
        raise ValueError(f"z_sample_count must be ≥ {MIN_Z_SAMPLES}, got {count}")
    z_max = params.z_max
    n_geo = count // 4
    uniform = np.linspace(0.0, z_max, count - n_geo)
    # geometric points strictly inside the first uniform cell
    geo = uniform[1] * np.geomspace(1e-3, 0.5, n_geo)
    return np.unique(np.concatenate([uniform, geo]))


def energy(R_hat: SpectralField, dR_hat: SpectralField, modes: ModeData) -> float:
    """E = int |dR_hat|^2 + omega_hat^2 |R_hat|^2 dk."""
    integrand = np.abs(dR_hat.values) ** 2 + modes.omega_hat_sq * np.abs(R_hat.values) ** 2
    return _quadrature(integrand, R_hat.grid.cell_area)


def forcing_constant(w_hat: SpectralField, params: Params, modes: ModeData) -> float:
    """||chi d_Z^2 w_hat||^2 over the slow frame, chi taken at k = eps K."""
    d2 = envelope_second_derivative(w_hat, params).values
    if d2.shape != modes.chi.shape:
        raise FrameError("envelope grid and mode data have different shapes")
    integrand = np.where(modes.chi, np.abs(d2) ** 2, 0.0)
    return _quadrature(integrand, w_hat.grid.cell_area)


def _lattice(params: Params, points: int, half_width: float) -> np.ndarray:
    return np.linspace(-half_width / params.epsilon, half_width / params.epsilon, points)


def run_comparison(
    params: Params,
    data: InitialData,
    z_sample_count: int = 64,
    policy: GridPolicy = GridPolicy(),
    lattice_points: int = 65,
    lattice_half_width: float = 5.0,
    w_hat0: SpectralField | None = None,
) -> tuple[ErrorReport, EnergyTrace]:
    """Compare v with psi_app over z in [0, Z0/eps^2].

    ``w_hat0`` overrides the envelope data (slow frame) and its grid; it is
    meant for hand-built spectra in tests.
    """
    data.check_regularity(params.sA)
    eps = params.epsilon
    if w_hat0 is None:
        phys = make_grid(params, policy)
        w0 = initial_spectrum(data, phys.scaled(1.0 / eps))
    else:
        w0 = w_hat0
        phys = w0.grid.scaled(eps)
    modes = mode_data(phys, params)

    zs = z_samples(params, z_sample_count)
    xs = _lattice(params, lattice_points, lattice_half_width)

    psi0 = ansatz_spectrum(w0, params, 0.0, phys)
    dpsi0 = ansatz_z_derivative(w0, params, 0.0, phys)
    state0 = HelmholtzState(project_hyp(psi0, modes), project_hyp(dpsi0, modes), 0.0)

    n = len(zs)
    cols = {name: np.empty(n) for name in ("err", "hyp", "tail", "rl2", "E", "inf", "cmeas")}
    for i, z in enumerate(zs):
        Z = min(eps**2 * z, params.Z0)
        w = schrodinger_evolve(w0, params, Z)
        psi = ansatz_spectrum(w, params, z, phys)
        dpsi = ansatz_z_derivative(w, params, z, phys)
        st = helmholtz_evolve(state0, modes, z)

        chi = modes.chi
        R = st.v_hat.with_values(st.v_hat.values - np.where(chi, psi.values, 0))
        dR = st.dv_hat.with_values(st.dv_hat.values - np.where(chi, dpsi.values, 0))
        diff = st.v_hat.with_values(st.v_hat.values - psi.values)
        outside = psi.with_values(np.where(chi, 0, psi.values))

        cols["err"][i] = l2s_norm(diff, params.s, modes)
        cols["hyp"][i] = l2s_norm(R, params.s, modes)
        cols["tail"][i] = l2s_norm(outside, params.s, modes)
        cols["rl2"][i] = l2s_norm(R, 0)
        cols["E"][i] = energy(R, dR, modes)
        cols["inf"][i] = float(np.max(np.abs(evaluate_lattice(diff, xs, xs))))
        cols["cmeas"][i] = forcing_constant(w, params, modes)

    profile = ErrorProfile(
        z=zs,
        error_hs=cols["err"],
        hyp_error_hs=cols["hyp"],
        tail=cols["tail"],
        r_l2=cols["rl2"],
        energy=cols["E"],
        error_inf=cols["inf"],
        ansatz_l2=l2s_norm(psi0, 0),
    )
    i_sup = int(np.argmax(cols["err"]))
    report = ErrorReport(
        epsilon=eps,
        sup_error_hs=float(cols["err"][i_sup]),
        z_at_sup=float(zs[i_sup]),
        sup_error_inf=float(np.max(cols["inf"])),
        tail_norm=float(np.max(cols["tail"])),
        energy_ratio=float(np.max(cols["E"]) / eps**2),
        profile=profile,
    )
    C_meas = float(np.max(cols["cmeas"]))
    trace = EnergyTrace(
        epsilon=eps,
        z_samples=zs,
        E=cols["E"],
        dE_fd=fd_derivative(zs, cols["E"]),
        bound_rhs=eps**2 * cols["E"] + eps**4 * C_meas,
        C_meas=C_meas,
    )
    return report, trace


def fd_derivative(z: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Second-order centred differences on a non-uniform grid; NaN at the ends."""
    out = np.full(len(z), np.nan)
    h1 = z[1:-1] - z[:-2]
    h2 = z[2:] - z[1:-1]
    out[1:-1] = (
        -h2 / (h1 * (h1 + h2)) * f[:-2]
        + (h2 - h1) / (h1 * h2) * f[1:-1]
        + h1 / (h2 * (h1 + h2)) * f[2:]
    )
    return out


def _third_derivative_scale(z: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Per interior sample, max |f'''| estimated from 4-point divided differences nearby."""
    n = len(z)
    d = f.astype(float)
    for order in range(1, 4):
        d = (d[1:] - d[:-1]) / (z[order:] - z[:-order])
    d3 = 6.0 * np.abs(d)  # window j covers samples j..j+3
    scale = np.zeros(n)
    for i in range(1, n - 1):
        lo, hi = max(0, i - 3), min(len(d3), i + 1)
        scale[i] = np.max(d3[lo:hi])
    return scale


@dataclass(frozen=True)
class GronwallVerdict:
    holds: bool
    pointwise_holds: bool
    integrated_holds: bool
    energy_starts_at_zero: bool
    max_excess: float  # max of dE_fd - bound_rhs - tol_fd over interior samples
    sup_energy_ratio: float  # sup E / eps^2
    integrated_constant: float  # e^Z0 * Z0 * C_meas

    def as_dict(self) -> dict:
        return {
            "checks": "gronwall",
            "holds": self.holds,
            "pointwise_holds": self.pointwise_holds,
            "integrated_holds": self.integrated_holds,
            "energy_starts_at_zero": self.energy_starts_at_zero,
            "max_excess": self.max_excess,
            "sup_energy_ratio": self.sup_energy_ratio,
            "integrated_constant": self.integrated_constant,
        }


def gronwall_check(
    trace: EnergyTrace, params: Params, c_fd: float = 1.0 / 3.0, integrated_slack: float = 0.05
) -> GronwallVerdict:
    """dE/dz <= eps^2 E + eps^4 C_meas at every interior sample, and its integrated form.

    The finite-difference tolerance is c_fd * h1 * h2 * |E'''| + 1e-9 max E;
    the centred formula's leading error is h1 h2 |E'''| / 6.
    """
    if len(trace) < 5:
        raise TraceError(f"energy trace has {len(trace)} samples, need at least 5")
    z, E = trace.z_samples, trace.E
    eps = trace.epsilon
    h1 = z[1:-1] - z[:-2]
    h2 = z[2:] - z[1:-1]
    tol = c_fd * h1 * h2 * _third_derivative_scale(z, E)[1:-1] + 1e-9 * np.max(np.abs(E))
    rhs = eps**2 * E[1:-1] + eps**4 * trace.C_meas
    excess = trace.dE_fd[1:-1] - rhs - tol
    pointwise = bool(np.all(excess <= 0))

    sup_ratio = float(np.max(E) / eps**2)
    constant = math.exp(params.Z0) * params.Z0 * trace.C_meas
    integrated = sup_ratio <= (1.0 + integrated_slack) * constant
    starts_at_zero = bool(E[0] == 0.0) if z[0] == 0.0 else True
    return GronwallVerdict(
        holds=pointwise and integrated and starts_at_zero,
        pointwise_holds=pointwise,
        integrated_holds=integrated,
        energy_starts_at_zero=starts_at_zero,
        max_excess=float(np.max(excess)),
        sup_energy_ratio=sup_ratio,
        integrated_constant=constant,
    )


@dataclass(frozen=True)
class InequalityVerdict:
    c3_holds: bool
    c3_worst: float  # max ||R||_L2 / ((sqrt2/omega) sqrt E)
    gain_holds: bool
    gain_worst: float  # max ||R||_Hs / (gain^s ||R||_L2)
    triangle_holds: bool
    triangle_worst: float  # max err / (hyp_err + tail)

    def as_dicts(self) -> list[dict]:
        return [
            {"checks": "c3_bound", "holds": self.c3_holds, "worst_ratio": self.c3_worst},
            {"checks": "compact_support_gain", "holds": self.gain_holds, "worst_ratio": self.gain_worst},
            {"checks": "triangle_decomposition", "holds": self.triangle_holds, "worst_ratio": self.triangle_worst},
        ]


def _worst_ratio(lhs, rhs):
    lhs, rhs = np.asarray(lhs), np.asarray(rhs)
    both_zero = (lhs == 0) & (rhs == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(both_zero, 0.0, lhs / rhs)
    return float(np.max(r))


def check_inequalities(report: ErrorReport, params: Params) -> InequalityVerdict:
    """Exact-constant inequalities at every sampled z."""
    p = report.profile
    c3 = math.sqrt(2.0) / params.omega
    gain = (1.0 + params.omega**2 / 2.0) ** (params.s / 2.0)
    c3_worst = _worst_ratio(p.r_l2, c3 * np.sqrt(p.energy))
    gain_worst = _worst_ratio(p.hyp_error_hs, gain * p.r_l2)
    tri_worst = _worst_ratio(p.error_hs, p.hyp_error_hs + p.tail)
    return InequalityVerdict(
        c3_holds=c3_worst <= 1.0 + INEQUALITY_RTOL,
        c3_worst=c3_worst,
        gain_holds=gain_worst <= 1.0 + INEQUALITY_RTOL,
        gain_worst=gain_worst,
        triangle_holds=tri_worst <= 1.0 + TRIANGLE_RTOL,
        triangle_worst=tri_worst,
    )


def tail_norm(
    w_hat0: SpectralField,
    params: Params,
    z: float = 0.0,
    data: InitialData | None = None,
    outer_k_max: float | None = None,
    outer_spacing: float | None = None,
) -> float:
    """||(1 - chi) psi_hat_app||_{L^2_s}, the part of the ansatz the cutoff removes.

    Summed on the envelope's own grid (scaled to physical k). If that grid
    does not reach past the cutoff circle, or ``outer_k_max`` asks for more
    extent, the region outside it is summed on a separate grid filled from the
    closed-form spectrum of ``data``.
    """
    eps = params.epsilon
    cutoff = params.omega / math.sqrt(2.0)
    phys = w_hat0.grid.scaled(eps)
    covers = phys.k_max > cutoff
    if outer_k_max is None and not covers:
        outer_k_max = 2.0 * params.omega
    use_outer = outer_k_max is not None and outer_k_max > phys.k_max
    if use_outer and data is None:
        raise ValueError("the outer tail grid needs closed-form initial data")
    if not covers and not use_outer:
        raise ValueError(
            f"neither grid reaches the cutoff |k| = {cutoff:.6g} (primary k_max = {phys.k_max:.6g})"
        )

    w = schrodinger_evolve(w_hat0, params, eps**2 * z)
    psi = ansatz_spectrum(w, params, z, phys)
    k2 = phys.k_squared
    keep = k2 > params.omega**2 / 2.0
    integrand = np.where(keep, np.abs(psi.values) ** 2 * (1.0 + k2) ** params.s, 0.0)
    total = _quadrature(integrand, phys.cell_area)

    if use_outer:
        h = outer_spacing if outer_spacing is not None else params.omega / 400.0
        n = 2 * math.ceil(outer_k_max / h)
        k = h * (np.arange(n) + 0.5 - n / 2)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        ok2 = kx**2 + ky**2
        beyond = (np.abs(kx) > phys.k_max) | (np.abs(ky) > phys.k_max)
        mask = beyond & (ok2 > params.omega**2 / 2.0)
        # |Schrödinger phase| = |exp(i k_z z)| = 1, so only the modulus is needed
        mag = np.abs(data.spectrum(ok2 / eps**2)) / eps**2
        total += _quadrature(np.where(mask, mag**2 * (1.0 + ok2) ** params.s, 0.0), h * h)
    return math.sqrt(total)


def residual_identity_error(w_hat: SpectralField, params: Params, z: float) -> float:
    """Max nodewise |(d_z^2 + Delta + omega^2) psi_hat_app - residual| / term scale.

    Nodes where |w_hat| is within a factor 1/eps_mach of the smallest normal
    double are skipped: Gaussian tails underflow into subnormals there and
    carry only a few significant bits.
    """
    lhs, scale = helmholtz_operator_on_ansatz(w_hat, params, z)
    res = residual_spectrum(w_hat, params, z)
    err = np.abs(lhs.values - res.values)
    if np.any(err[scale == 0] != 0):
        return math.inf
    fi = np.finfo(float)
    ok = (scale > 0) & (np.abs(w_hat.values) >= fi.tiny / fi.eps)
    if not np.any(ok):
        return 0.0
    return float(np.max(err[ok] / scale[ok]))


def oracle_relative_error(
    state0: HelmholtzState, modes: ModeData, z: float, steps: int
) -> float:
    """Relative L^2 gap between the exact propagator and RK4 (v_hat and dv_hat together)."""
    exact = helmholtz_evolve(state0, modes, z)
    rk = rk4_oracle_evolve(state0, modes, z, steps)
    num = l2s_norm(exact.v_hat.with_values(exact.v_hat.values - rk.v_hat.values)) ** 2
    num += l2s_norm(exact.dv_hat.with_values(exact.dv_hat.values - rk.dv_hat.values)) ** 2
    den = l2s_norm(exact.v_hat) ** 2 + l2s_norm(exact.dv_hat) ** 2
    return math.sqrt(num / den) if den > 0 else math.sqrt(num)


@dataclass
class SweepResult:
    params: Params
    data: InitialData
    reports: list[ErrorReport]
    traces: list[EnergyTrace]
    gronwall: list[GronwallVerdict]
    inequalities: list[InequalityVerdict]
    error_fit: SlopeFit
    inf_fit: SlopeFit
    tail_fit: SlopeFit
    energy_fit: SlopeFit
    err_over_eps_spread: float  # max/min of sup_error_hs / eps

    @property
    def epsilons(self) -> list[float]:
        return [r.epsilon for r in self.reports]


def _check_geometric(epsilons) -> None:
    if len(epsilons) < 3:
        raise ValueError("a sweep needs at least 3 epsilons")
    e = np.asarray(epsilons, dtype=float)
    if np.any(e <= 0) or np.any(e >= 1):
        raise ValueError("every epsilon must lie in (0, 1)")
    ratios = e[1:] / e[:-1]
    if np.any(ratios == 1) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError(f"epsilons must be geometrically spaced, got ratios {ratios.tolist()}")


def sweep(
    base: Params,
    data: InitialData,
    epsilons,
    z_sample_count: int = 64,
    policy: GridPolicy = GridPolicy(),
    threads: int = 1,
    lattice_points: int = 65,
    floor_rtol: float = 1e-12,
    w_hat0_factory=None,
) -> SweepResult:
    """Run :func:`run_comparison` per epsilon and fit log-log rates.

    Values below ``floor_rtol`` times the ansatz norm count as round-off and
    make the corresponding fit degenerate. ``w_hat0_factory(params)`` can
    supply a hand-built envelope per epsilon.
    """
    _check_geometric(epsilons)
    data.check_regularity(base.sA)
    runs = [base.with_epsilon(float(e)) for e in epsilons]

    def one(p):
        w0 = w_hat0_factory(p) if w_hat0_factory is not None else None
        return run_comparison(p, data, z_sample_count, policy, lattice_points, w_hat0=w0)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(one, p) for p in runs]
    results, failed = [], None
    for p, fut in zip(runs, futures):
        exc = fut.exception()
        if exc is None:
            results.append(fut.result())
        elif failed is None:
            failed = (p.epsilon, exc)
    if failed is not None:
        partial = [r for r, _ in results]
        raise SweepAborted(
            f"run at epsilon={failed[0]} failed: {failed[1]}", partial, failed[0]
        ) from failed[1]

    reports = [r for r, _ in results]
    traces = [t for _, t in results]
    eps = np.array([r.epsilon for r in reports])
    floor = floor_rtol * np.array([r.profile.ansatz_l2 for r in reports])
    err = np.array([r.sup_error_hs for r in reports])
    scaled = err / eps
    spread = float(np.max(scaled) / np.min(scaled)) if np.all(scaled > 0) else math.inf
    return SweepResult(
        params=base,
        data=data,
        reports=reports,
        traces=traces,
        gronwall=[gronwall_check(t, p) for t, p in zip(traces, runs)],
        inequalities=[check_inequalities(r, p) for r, p in zip(reports, runs)],
        error_fit=fit_slope(eps, err, floor),
        inf_fit=fit_slope(eps, [r.sup_error_inf for r in reports], floor * eps),
        tail_fit=fit_slope(eps, [r.tail_norm for r in reports], floor),
        energy_fit=fit_slope(eps, [r.energy_ratio for r in reports], floor**2),
        err_over_eps_spread=spread,
    )
