"""Hardy inequalities on wedges: local constants and a certified global weight.

For ``psi`` vanishing on the wedge boundary the angular Poincare inequality
gives ``h[psi] >= (1/(4a^2)) ||psi/r||^2``.  The remainder
``h~[psi] = h[psi] - (1/(4a^2)) ||psi/r||^2`` is studied on the truncated
strip ``(0, R) x (0, 2 pi a)`` with a free (Neumann) end at ``r = R``; its
lowest Rayleigh quotient ``lambda_R`` is positive exactly when the twist is
active inside ``(0, R)``.  A positive ``lambda_R`` is then spread to a global
weight ``1 / (1 + r^2 log^2 r)`` by a cutoff ``xi`` on ``[R/2, R]`` and the
one-dimensional logarithmic Hardy inequality.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.linalg import eigh_tridiagonal

from .assembly import WedgeGrid, assemble_h, inverse_square_matrix
from .geometry import ThetaProfile, check_a, twist_constants
from .spectral import smallest_eigenpairs

__all__ = [
    "LocalHardyProblem",
    "LocalHardyResult",
    "GlobalHardyCertificate",
    "angular_poincare",
    "angular_poincare_numeric",
    "local_hardy_problem",
    "local_hardy_constant",
    "critical_mode_quotient",
    "log_hardy_check",
    "log_hardy_family",
    "smoothstep_sup_derivative",
    "weight_infimum",
    "certify_global",
    "hardy_remainder",
    "remainder_matrix",
    "weighted_norm_sq",
]

SPOT_TOLERANCE = 1e-8


def angular_poincare(a: float) -> float:
    """Lowest Dirichlet eigenvalue ``1/(4a^2)`` of ``-d^2/dphi^2`` on ``(0, 2 pi a)``."""
    a = check_a(a)
    return 1.0 / (4.0 * a * a)


def angular_poincare_numeric(a: float, n_nodes: int = 2000) -> float:
    """Three-point finite-difference value of :func:`angular_poincare`."""
    a = check_a(a)
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    h = 2.0 * math.pi * a / (n_nodes + 1)
    diag = np.full(n_nodes, 2.0 / h**2)
    off = np.full(n_nodes - 1, -1.0 / h**2)
    vals = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))
    return float(vals[0])


def hardy_remainder(grid: WedgeGrid, profile: ThetaProfile, psi) -> float:
    """Discrete ``h~[psi] = h[psi] - (1/(4a^2)) ||psi/r||^2``."""
    psi = np.asarray(psi, dtype=float).reshape(-1)
    if psi.size != grid.size:
        raise ValueError(f"psi has {psi.size} entries, grid has {grid.size}")
    return float(psi @ (remainder_matrix(grid, profile) @ psi))


def remainder_matrix(grid: WedgeGrid, profile: ThetaProfile):
    """Matrix of ``h~`` on ``grid``."""
    return (assemble_h(grid, profile) - angular_poincare(grid.a) * inverse_square_matrix(grid)).tocsr()


def weighted_norm_sq(grid: WedgeGrid, psi) -> float:
    """``sum mass_i psi_i^2 / (1 + r_i^2 log^2 r_i)``."""
    psi = np.asarray(psi, dtype=float).reshape(-1)
    rho = np.repeat(grid.rho_nodes, grid.n_phi)
    w = 1.0 / (1.0 + (rho * np.log(rho)) ** 2)
    return float(np.sum(grid.mass_diagonal() * w * psi * psi))


# -- local constant ------------------------------------------------------------


@dataclass(frozen=True)
class LocalHardyProblem:
    R: float
    grid_R: WedgeGrid
    stiff: object = field(repr=False)
    mass_R: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class LocalHardyResult:
    """``lambda_R`` clamped at zero, with the unclamped eigenvalue alongside."""

    lambda_R: float
    raw: float
    minimizer: np.ndarray = field(repr=False)
    residual: float
    grid: WedgeGrid


def local_hardy_problem(profile: ThetaProfile, R: float, a: float = 1.0, n_rho: int = 240, n_phi: int = 64) -> LocalHardyProblem:
    R = float(R)
    if not (R > 0 and math.isfinite(R)):
        raise ValueError("R must be a positive number")
    grid = WedgeGrid(check_a(a), R, n_rho, n_phi, outer="neumann")
    return LocalHardyProblem(R, grid, remainder_matrix(grid, profile), grid.mass_diagonal())


def local_hardy_constant(
    profile: ThetaProfile,
    R: float,
    a: float = 1.0,
    n_rho: int = 240,
    n_phi: int = 64,
    tol: float = 1e-10,
) -> LocalHardyResult:
    """Lowest eigenvalue of the Hardy remainder on ``(0, R)`` with a free end at ``R``.

    The continuum value is non-negative; the discrete one may dip below zero
    by a discretisation-size amount (the three-point angular eigenvalue sits
    below ``1/(4a^2)``), so the clamped value is returned with the raw one.
    """
    prob = local_hardy_problem(profile, R, a, n_rho, n_phi)
    # the remainder is bounded below by roughly -1/(4a^2) * (angular defect),
    # so a shift of -1/4 keeps the factorised matrix definite
    res = smallest_eigenpairs(prob.stiff, prob.mass_R, k=1, shift=-0.25, tol=tol)[0]
    return LocalHardyResult(max(res.value, 0.0), res.value, res.vector, res.residual, prob.grid_R)


def critical_mode_quotient(grid: WedgeGrid, profile: ThetaProfile) -> float:
    """Rayleigh quotient of ``h~`` on ``sin(phi / (2a))`` (radially constant).

    For the straight wedge this is the Hardy-critical direction: the quotient
    is zero up to the angular discretisation error.
    """
    psi = grid.sample(lambda r, p: np.sin(p / (2.0 * grid.a)))
    return hardy_remainder(grid, profile, psi) / float(np.sum(grid.mass_diagonal() * psi * psi))


# -- logarithmic Hardy inequality ---------------------------------------------


def log_hardy_check(r0: float, g, support: tuple[float, float], dg=None, tol: float = 1e-12) -> tuple[float, float]:
    """``(int |g'|^2 r dr, (1/4) int g^2 / (r^2 log^2(r/r0)) r dr)`` over ``support``.

    ``g`` must vanish outside ``support``, a compact interval of ``(r0, inf)``.
    Without ``dg`` the derivative is a central difference.
    """
    r0 = float(r0)
    lo, hi = (float(x) for x in support)
    if not (r0 > 0 and r0 < lo < hi and math.isfinite(hi)):
        raise ValueError("support must be a compact interval inside (r0, inf)")
    scale = max(abs(float(g(0.5 * (lo + hi)))), 1.0)
    if abs(float(g(lo))) > 1e-8 * scale or abs(float(g(hi))) > 1e-8 * scale:
        raise ValueError("g must vanish at the ends of its support")
    if dg is None:

        def dg(r):
            h = 1e-6 * max(r, 1.0)
            return (g(r + h) - g(r - h)) / (2.0 * h)

    # integrate in t = log(r/r0), where r dr = r^2 dt
    t_lo, t_hi = math.log(lo / r0), math.log(hi / r0)
    pts = np.geomspace(t_lo, t_hi, 17)[1:-1]

    def at(t):
        return r0 * math.exp(t)

    lhs = quad(lambda t: (dg(at(t)) * at(t)) ** 2, t_lo, t_hi, points=pts, limit=400, epsabs=tol, epsrel=tol)[0]
    rhs = 0.25 * quad(lambda t: (g(at(t)) / t) ** 2, t_lo, t_hi, points=pts, limit=400, epsabs=tol, epsrel=tol)[0]
    if lhs < rhs * (1.0 - 1e-9) - tol:
        raise AssertionError(f"logarithmic Hardy inequality violated: lhs={lhs!r} < rhs={rhs!r}")
    return lhs, rhs


def log_hardy_family(r0: float, n: float):
    """Near-optimisers of the logarithmic Hardy inequality.

    With ``t = log(r/r0)``, ``g_n = sqrt(t) chi_n(t)`` where ``chi_n`` rises
    like ``log(n t)/log n`` on ``[1/n, 1]`` and falls like
    ``1 - log t / log n`` on ``[1, n]``.  Returns ``(g, dg, support)``; the
    ratio lhs/rhs tends to 1 from above as ``n`` grows.
    """
    if not n > 1:
        raise ValueError("n must exceed 1")
    ln = math.log(n)

    def chi(t):
        if t <= 1.0 / n or t >= n:
            return 0.0, 0.0
        if t <= 1.0:
            return math.log(n * t) / ln, 1.0 / (t * ln)
        return 1.0 - math.log(t) / ln, -1.0 / (t * ln)

    def g(r):
        t = math.log(r / r0)
        if t <= 0:
            return 0.0
        c, _ = chi(t)
        return math.sqrt(t) * c

    def dg(r):
        t = math.log(r / r0)
        if t <= 0:
            return 0.0
        c, dc = chi(t)
        return (c / (2.0 * math.sqrt(t)) + math.sqrt(t) * dc) / r

    return g, dg, (r0 * math.exp(1.0 / n), r0 * math.exp(n))


# -- global certificate --------------------------------------------------------


def smoothstep_sup_derivative(r0: float, R: float) -> float:
    """``sup |xi'|`` for the cubic smoothstep from 0 at ``r0`` to 1 at ``R``."""
    if not R > r0:
        raise ValueError("need R > r0")
    return 1.5 / (R - r0)


def weight_infimum(r0: float, r_max: float = 1e4, n_samples: int = 200_001) -> float:
    """``inf_r (1 + r^2 log^2 r) / (1 + r^2 log^2(r/r0))`` by log-spaced sampling.

    The ratio tends to 1 at both ends, which is included analytically.
    """
    if not r0 > 0:
        raise ValueError("r0 must be positive")
    r = np.geomspace(1e-12, r_max, n_samples)
    r = np.concatenate([r, [1.0, r0]])
    num = 1.0 + (r * np.log(r)) ** 2
    den = 1.0 + (r * np.log(r / r0)) ** 2
    return float(min(1.0, np.min(num / den)))


@dataclass(frozen=True)
class GlobalHardyCertificate:
    profile: str
    a: float
    R: float
    r0: float
    C: float
    sup_theta_prime: float
    xi_sup_deriv: float
    epsilon: float
    K: float
    delta: float
    lambda_R: float
    lambda_R_raw: float
    weight_inf: float
    c: float
    critical_flag: bool
    spot_checks: int = 0
    spot_min_slack: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _random_psi(grid: WedgeGrid, rng: np.random.Generator) -> np.ndarray:
    """Either white noise or a smooth random field built from low modes."""
    if rng.random() < 0.5:
        return rng.standard_normal(grid.size)
    rho, phi = grid.mesh()
    out = np.zeros_like(rho)
    for m in range(1, 4):
        ang = np.sin(m * phi / (2.0 * grid.a))
        for _ in range(2):
            centre = rng.uniform(0.0, 0.7 * grid.rho_max)
            width = rng.uniform(0.3, 0.3 * grid.rho_max)
            out += rng.standard_normal() * np.exp(-(((rho - centre) / width) ** 2)) * ang
    return out.reshape(-1)


def certify_global(
    profile: ThetaProfile,
    R: float,
    a: float = 1.0,
    n_rho: int = 240,
    n_phi: int = 64,
    spot_checks: int = 100,
    seed: int = 0,
    twist_samples: int = 100_000,
) -> GlobalHardyCertificate:
    """Certified constant ``c`` in ``h~[psi] >= c int |psi|^2 / (1 + r^2 log^2 r)``.

    Follows the cutoff construction with ``r0 = R/2``: ``epsilon = min(1/(1+C^2), 1/2)``,
    ``K = eps/(1-eps) ||theta'||^2/(4a^2) + eps (||xi'||^2 + 1/8)``,
    ``delta = lambda_R / (lambda_R + K)`` and
    ``c = delta (eps/16) weight_inf``.  A vanishing ``lambda_R`` yields
    ``c = 0`` and the critical flag.  For ``c > 0`` the inequality is
    spot-checked on random discrete ``psi`` over ``(0, 2R)`` at the same mesh
    width; the smallest slack is recorded.
    """
    R = float(R)
    a = check_a(a)
    if not (R > 0 and math.isfinite(R)):
        raise ValueError("R must be a positive number")
    if not profile.compact or profile.support_radius > R:
        raise ValueError("certificate needs supp theta' inside [0, R]")
    C, sup_tp = twist_constants(profile, max(2.0 * R, 2.0 * profile.support_radius), twist_samples)
    r0 = 0.5 * R
    xi_d = smoothstep_sup_derivative(r0, R)
    eps = min(1.0 / (1.0 + C * C), 0.5)
    K = eps / (1.0 - eps) * sup_tp**2 * angular_poincare(a) + eps * (xi_d**2 + 0.125)
    local = local_hardy_constant(profile, R, a, n_rho, n_phi)
    lam = local.lambda_R
    delta = lam / (lam + K)
    w_inf = weight_infimum(r0)
    c = delta * eps / 16.0 * w_inf
    critical = not c > 0
    slack = None
    n_done = 0
    if not critical and spot_checks > 0:
        grid = WedgeGrid(a, 2.0 * R, 2 * n_rho, n_phi)
        rng = np.random.default_rng(seed)
        H = remainder_matrix(grid, profile)
        slacks = []
        for _ in range(spot_checks):
            psi = _random_psi(grid, rng)
            psi /= math.sqrt(float(np.sum(grid.mass_diagonal() * psi * psi)))
            slacks.append(float(psi @ (H @ psi)) - c * weighted_norm_sq(grid, psi))
        slack = float(min(slacks))
        n_done = spot_checks
        if slack < -SPOT_TOLERANCE:
            raise AssertionError(f"certified Hardy inequality failed on a spot check (slack {slack:.3e})")
    return GlobalHardyCertificate(
        profile=profile.name,
        a=a,
        R=R,
        r0=r0,
        C=C,
        sup_theta_prime=sup_tp,
        xi_sup_deriv=xi_d,
        epsilon=eps,
        K=K,
        delta=delta,
        lambda_R=lam,
        lambda_R_raw=local.raw,
        weight_inf=w_inf,
        c=c,
        critical_flag=critical,
        spot_checks=n_done,
        spot_min_slack=slack,
    )
