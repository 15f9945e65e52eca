"""Lowest eigenpairs of the discretised ``L_s`` and the exact spectrum of ``L``.

The straight-wedge operator
``L = -(1/rho) d_rho rho d_rho - (1/rho^2) d_phi^2 + rho^2/16`` separates:
the angular Dirichlet modes ``sin(mu_m phi)`` with ``mu_m = m / (2a)`` reduce it
to 2-D harmonic oscillators with frequency 1/4, giving eigenvalues
``n + (1 + mu_m)/2`` and eigenfunctions
``rho^mu_m exp(-rho^2/8) L_n^{mu_m}(rho^2/4) sin(mu_m phi)``.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import eval_genlaguerre

from .assembly import FormMatrices, WedgeGrid, assemble_forms
from .geometry import ThetaProfile, check_a

__all__ = [
    "EigenResult",
    "ExactMode",
    "ConvergenceError",
    "NonCompactWarning",
    "exact_spectrum",
    "exact_eigenfunction",
    "convention_residuals",
    "settled_convention",
    "smallest_eigenpairs",
    "lowest_eigenpairs",
    "eigenvalue_trajectory",
    "TrajectoryPoint",
]

DEFAULT_TOL = 1e-9


class ConvergenceError(RuntimeError):
    def __init__(self, message, best_residual=math.inf):
        super().__init__(message)
        self.best_residual = best_residual


class NonCompactWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EigenResult:
    value: float
    vector: np.ndarray
    residual: float
    index: int


@dataclass(frozen=True)
class ExactMode:
    n: int
    m: int
    a: float

    @property
    def nu(self) -> float:
        return (self.m / (2.0 * self.a)) ** 2

    @property
    def frequency(self) -> float:
        """Angular frequency ``sqrt(nu_m) = m / (2a)``."""
        return self.m / (2.0 * self.a)

    @property
    def value(self) -> float:
        return self.n + 0.5 * (1.0 + self.frequency)


def exact_spectrum(a: float, count: int) -> list[ExactMode]:
    """The ``count`` smallest eigenvalues of ``L`` with multiplicity.

    Ties are broken by ``(m, n)``.  Only ``m <= count`` and ``n < count`` can
    contribute, since each of those ranges already holds ``count`` smaller
    values.
    """
    a = check_a(a)
    if count < 1:
        raise ValueError("count must be >= 1")
    modes = [ExactMode(n, m, a) for m in range(1, count + 1) for n in range(count)]
    modes.sort(key=lambda md: (round(md.value, 12), md.m, md.n))
    return modes[:count]


def _eigenfunction(mode: ExactMode, rho, phi, convention: str):
    rho = np.asarray(rho, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if convention == "sqrt":
        p = mode.frequency
    elif convention == "printed":
        # exponent, Laguerre order and angular frequency all nu_m
        p = mode.nu
    else:
        raise ValueError(f"unknown convention {convention!r}")
    x = rho * rho / 4.0
    lag = eval_genlaguerre(mode.n, p, x) if mode.n > 0 else 1.0
    return rho**p * np.exp(-rho * rho / 8.0) * lag * np.sin(p * phi)


def convention_residuals(a: float, n_rho: int = 320, n_phi: int | None = None) -> dict[str, float]:
    """Relative residual ``||L f - lambda f|| / ||f||`` of sampled exact modes.

    Uses the ``(n=1, m=3)`` mode: ``m/(2a) = (m/(2a))^2`` would need
    ``a = m/2``, so the two candidate conventions differ for every ``a <= 1``.
    """
    a = check_a(a)
    if n_phi is None:
        n_phi = max(48, int(24 * 3 / (2 * a)))
    # wide radial box: high angular frequencies push the mode outwards
    grid = WedgeGrid(a, 24.0, n_rho, n_phi)
    forms = assemble_forms(grid, _straight_profile(), 0.0, warn=False)
    mass = grid.mass_diagonal()
    mode = ExactMode(1, 3, grid.a)
    out = {}
    for conv in ("sqrt", "printed"):
        with np.errstate(over="ignore", invalid="ignore"):
            f = grid.sample(lambda r, p: _eigenfunction(mode, r, p, conv))
        if not np.all(np.isfinite(f)):
            out[conv] = math.inf
            continue
        f = f / np.max(np.abs(f))
        r = forms.L_mat @ f - mode.value * mass * f
        out[conv] = float(np.sqrt(np.sum(r * r / mass)) / np.sqrt(np.sum(mass * f * f)))
    return out


@lru_cache(maxsize=None)
def settled_convention(a: float) -> str:
    """Pick the eigenfunction convention with the smaller discrete residual."""
    res = convention_residuals(a)
    return min(res, key=lambda k: (res[k], k != "sqrt"))


def exact_eigenfunction(mode: ExactMode, rho, phi, convention: str | None = None):
    """Evaluate an exact eigenfunction of ``L`` at ``(rho, phi)``.

    With ``convention=None`` the exponent/frequency convention is the one
    settled by :func:`settled_convention` for this ``a``.
    """
    phi_arr = np.asarray(phi, dtype=float)
    if np.any(phi_arr <= 0) or np.any(phi_arr >= 2.0 * math.pi * mode.a):
        raise ValueError("phi must lie in (0, 2*pi*a)")
    if mode.m < 1 or mode.n < 0:
        raise ValueError("need n >= 0 and m >= 1")
    if convention is None:
        convention = settled_convention(mode.a)
    return _eigenfunction(mode, rho, phi, convention)


def _straight_profile() -> ThetaProfile:
    from .geometry import builtin_profile

    return builtin_profile("straight")


# -- iterative eigensolver ---------------------------------------------------


def _m_orthonormalize(Y: np.ndarray, sqrt_m: np.ndarray, against: np.ndarray | None = None) -> np.ndarray:
    Z = Y * sqrt_m[:, None]
    if against is not None and against.shape[1]:
        W = against * sqrt_m[:, None]
        for _ in range(2):
            Z -= W @ (W.T @ Z)
    Q, _ = np.linalg.qr(Z)
    return Q / sqrt_m[:, None]


def smallest_eigenpairs(
    A,
    mass_diag: np.ndarray,
    k: int = 1,
    shift: float = 0.0,
    tol: float = DEFAULT_TOL,
    maxiter: int = 2000,
    block: int | None = None,
    seed: int = 0,
) -> list[EigenResult]:
    """Lowest ``k`` eigenpairs of ``A v = lam M v`` for symmetric ``A``, diagonal ``M``.

    Subspace iteration with ``(A - shift M)^{-1} M`` (one sparse LU), a
    Rayleigh-Ritz projection each sweep and locking of converged leading
    pairs.  ``shift`` must lie below the wanted part of the spectrum.  The
    residual is the Euclidean norm ``||A v - lam M v||`` for ``v^T M v = 1``.
    """
    n = A.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    m = np.asarray(mass_diag, dtype=float)
    sqrt_m = np.sqrt(m)
    A = sp.csr_matrix(A)
    if block is None:
        block = k + max(4, k)
    block = min(block, n)
    if k > n:
        raise ValueError("k exceeds the problem size")

    if n <= block + 2:
        # tiny problems: dense is both exact and cheap
        vals, vecs = sla.eigh(A.toarray(), np.diag(m))
        return _package(A, m, vals[:k], vecs[:, :k])

    lu = spla.splu(sp.csc_matrix(A - shift * sp.diags(m)))
    rng = np.random.default_rng(seed)
    X = _m_orthonormalize(rng.standard_normal((n, block)), sqrt_m)
    locked = np.empty((n, 0))
    locked_vals: list[float] = []
    best = math.inf
    for it in range(maxiter):
        Y = lu.solve(m[:, None] * X)
        Y = _m_orthonormalize(Y, sqrt_m, locked)
        H = Y.T @ (A @ Y)
        vals, C = np.linalg.eigh(0.5 * (H + H.T))
        X = Y @ C
        R = A @ X - (m[:, None] * X) * vals[None, :]
        res = np.linalg.norm(R, axis=0)
        need = k - len(locked_vals)
        best = min(best, float(np.max(res[:need])))
        nconv = 0
        while nconv < need and res[nconv] <= tol:
            nconv += 1
        if nconv:
            locked = np.hstack([locked, X[:, :nconv]])
            locked_vals.extend(vals[:nconv])
            X = X[:, nconv:]
            if len(locked_vals) >= k:
                break
    else:
        raise ConvergenceError(
            f"eigensolver did not converge in {maxiter} sweeps (best residual {best:.3e})", best
        )
    order = np.argsort(locked_vals, kind="stable")
    return _package(A, m, np.asarray(locked_vals)[order][:k], locked[:, order][:, :k])


def _package(A, m, vals, vecs) -> list[EigenResult]:
    out = []
    for idx in range(len(vals)):
        v = np.array(vecs[:, idx], dtype=float)
        v /= math.sqrt(float(np.sum(m * v * v)))
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        lam = float(v @ (A @ v))
        r = A @ v - lam * m * v
        out.append(EigenResult(lam, v, float(np.linalg.norm(r)), idx))
    return out


def lowest_eigenpairs(forms: FormMatrices, k: int = 1, tol: float = DEFAULT_TOL, **kwargs) -> list[EigenResult]:
    """Lowest ``k`` eigenpairs of ``L_s v = lam mass v``.

    ``L_s`` is positive definite, so the default shift 0 is safe.
    """
    return smallest_eigenpairs(forms.L_s_mat, forms.grid.mass_diagonal(), k=k, tol=tol, **kwargs)


@dataclass(frozen=True)
class TrajectoryPoint:
    s: float
    lambda0: float
    residual: float


def eigenvalue_trajectory(
    grid: WedgeGrid,
    profile: ThetaProfile,
    s_values,
    tol: float = DEFAULT_TOL,
    threads: int = 1,
) -> list[TrajectoryPoint]:
    """Lowest eigenvalue of ``L_s`` along ``s_values``.

    The limit for compactly supported twists is ``1/2 + 1/(4a)``; for other
    profiles the convergence is not covered and a :class:`NonCompactWarning`
    is emitted.
    """
    if not profile.compact:
        warnings.warn(
            f"profile {profile.name!r} is not compactly supported; convergence of lambda0(s) is unproven",
            NonCompactWarning,
            stacklevel=2,
        )
    s_values = [float(s) for s in s_values]

    def one(s):
        res = lowest_eigenpairs(assemble_forms(grid, profile, s, warn=False), 1, tol)[0]
        return TrajectoryPoint(s, res.value, res.residual)

    if threads > 1 and len(s_values) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, s_values))
    return [one(s) for s in s_values]
