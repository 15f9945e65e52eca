"""Finite-difference discretisation of the half-strip and its quadratic forms.

Unknowns live on a tensor grid ``rho_i = (i - 1/2) * drho`` (i = 1..n_rho),
``phi_j = j * dphi`` (j = 1..n_phi, ``dphi = 2*pi*a / (n_phi + 1)``) and are
stored row-major: ``index(i, j) = (i - 1) * n_phi + (j - 1)``, i.e. a vector
reshaped to ``(n_rho, n_phi)`` has radius along axis 0.

Every form is built as ``D.T @ W @ D`` from first-order difference operators
``D`` and diagonal quadrature weights ``W`` for the measure ``rho drho dphi``,
so the matrices are symmetric and non-negative by construction.

* the twisted radial derivative ``(d_rho - theta' d_phi) psi`` sits on the
  radial cell faces ``rho = i * drho``; its angular part is the centred angular
  difference averaged over the two neighbouring rings;
* ``d_phi psi / rho`` sits on the angular faces ``phi = (j + 1/2) dphi``;
* the angular walls carry zero ghost values (Dirichlet).  At the outer end
  either a zero ghost ring at ``rho_{n+1}`` is used (Dirichlet truncation) or
  the last face is dropped (natural/Neumann boundary, used by the Hardy
  problem).  No condition is needed at the axis: its face has zero weight.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import ThetaProfile, check_a

__all__ = [
    "WedgeGrid",
    "FormMatrices",
    "make_grid",
    "assemble_h",
    "assemble_forms",
    "form_equivalence_check",
    "equivalence_constant",
    "inverse_square_matrix",
    "export_coo",
    "CoarseGridWarning",
    "ResolutionWarning",
    "InvariantError",
]


class CoarseGridWarning(UserWarning):
    pass


class ResolutionWarning(UserWarning):
    pass


class InvariantError(AssertionError):
    """A numerically checked invariant failed; ``witness`` holds the offending vector."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True)
class WedgeGrid:
    a: float
    rho_max: float
    n_rho: int
    n_phi: int
    outer: str = "dirichlet"

    def __post_init__(self):
        check_a(self.a)
        if not self.rho_max > 0:
            raise ValueError("rho_max must be positive")
        if self.n_rho < 1 or self.n_phi < 1:
            raise ValueError("n_rho and n_phi must be positive")
        if self.outer not in ("dirichlet", "neumann"):
            raise ValueError("outer must be 'dirichlet' or 'neumann'")

    @property
    def drho(self) -> float:
        return self.rho_max / self.n_rho

    @property
    def dphi(self) -> float:
        return 2.0 * math.pi * self.a / (self.n_phi + 1)

    @property
    def rho_nodes(self) -> np.ndarray:
        return (np.arange(1, self.n_rho + 1) - 0.5) * self.drho

    @property
    def phi_nodes(self) -> np.ndarray:
        return np.arange(1, self.n_phi + 1) * self.dphi

    @property
    def rho_faces(self) -> np.ndarray:
        """Radial faces carrying a derivative (the axis face has zero weight)."""
        n = self.n_rho if self.outer == "dirichlet" else self.n_rho - 1
        return np.arange(1, n + 1) * self.drho

    @property
    def size(self) -> int:
        return self.n_rho * self.n_phi

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Node coordinates as two ``(n_rho, n_phi)`` arrays."""
        return np.meshgrid(self.rho_nodes, self.phi_nodes, indexing="ij")

    def index(self, i: int, j: int) -> int:
        """Flat index of node ``(i, j)``, both 1-based."""
        return (i - 1) * self.n_phi + (j - 1)

    def sample(self, f) -> np.ndarray:
        rho, phi = self.mesh()
        return np.asarray(f(rho, phi), dtype=float).reshape(-1)

    def mass_diagonal(self) -> np.ndarray:
        w = self.rho_nodes * self.drho * self.dphi
        return np.repeat(w, self.n_phi)

    def mass(self) -> sp.dia_matrix:
        return sp.diags(self.mass_diagonal())

    def with_resolution(self, n_rho: int, n_phi: int) -> "WedgeGrid":
        return WedgeGrid(self.a, self.rho_max, n_rho, n_phi, self.outer)


@dataclass(frozen=True)
class FormMatrices:
    L_s_mat: sp.csr_matrix
    L_mat: sp.csr_matrix
    M_s_mat: sp.csr_matrix
    mass: sp.dia_matrix
    s: float
    grid: WedgeGrid

    def operator(self) -> sp.csr_matrix:
        """Non-symmetric evolution matrix ``L_s + M_s`` (form convention)."""
        return (self.L_s_mat + self.M_s_mat).tocsr()


def make_grid(a: float, rho_max: float = 12.0, n_rho: int = 200, n_phi: int = 32) -> WedgeGrid:
    """Staggered grid on ``(0, rho_max) x (0, 2*pi*a)`` with Dirichlet truncation.

    Grids below 8 radial or 4 angular cells are allowed (useful for hand
    checks) but emit :class:`CoarseGridWarning`.
    """
    if not rho_max > 0:
        raise ValueError("rho_max must be positive")
    if n_rho < 1 or n_phi < 1:
        raise ValueError("n_rho and n_phi must be positive")
    if n_rho < 8 or n_phi < 4:
        warnings.warn(
            f"grid {n_rho}x{n_phi} is below the recommended 8x4 minimum", CoarseGridWarning, stacklevel=2
        )
    return WedgeGrid(check_a(a), float(rho_max), int(n_rho), int(n_phi))


# -- 1-D building blocks -----------------------------------------------------


def _radial_ops(grid: WedgeGrid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Face difference and face average, shape ``(n_faces, n_rho)``."""
    n = grid.n_rho
    nf = grid.rho_faces.size
    rows = np.arange(nf)
    left = rows
    right = rows + 1
    keep = right < n  # last Dirichlet face couples to the zero ghost ring
    diff = sp.coo_matrix(
        (
            np.concatenate([-np.ones(nf), np.ones(keep.sum())]),
            (np.concatenate([rows, rows[keep]]), np.concatenate([left, right[keep]])),
        ),
        shape=(nf, n),
    ).tocsr() / grid.drho
    avg = sp.coo_matrix(
        (
            np.full(nf + keep.sum(), 0.5),
            (np.concatenate([rows, rows[keep]]), np.concatenate([left, right[keep]])),
        ),
        shape=(nf, n),
    ).tocsr()
    return diff, avg


def _angular_compact(grid: WedgeGrid) -> sp.csr_matrix:
    """Differences on the ``n_phi + 1`` angular faces, zero ghosts at the walls."""
    m = grid.n_phi
    d = sp.diags([np.ones(m), -np.ones(m)], [0, -1], shape=(m + 1, m))
    return d.tocsr() / grid.dphi


def _angular_centred(grid: WedgeGrid) -> sp.csr_matrix:
    m = grid.n_phi
    if m == 1:
        return sp.csr_matrix((1, 1))
    c = sp.diags([np.ones(m - 1), -np.ones(m - 1)], [1, -1], shape=(m, m))
    return c.tocsr() / (2.0 * grid.dphi)


def _symmetrize(A) -> sp.csr_matrix:
    A = A.tocsr()
    return ((A + A.T) * 0.5).tocsr()


def _twisted_gradient(grid: WedgeGrid, theta_prime_faces: np.ndarray) -> sp.csr_matrix:
    """Face values of ``(d_rho - theta' d_phi) psi`` as a matrix."""
    diff, avg = _radial_ops(grid)
    eye_phi = sp.identity(grid.n_phi, format="csr")
    T = sp.kron(diff, eye_phi)
    if np.any(theta_prime_faces != 0.0):
        T = T - sp.kron(sp.diags(theta_prime_faces) @ avg, _angular_centred(grid))
    return T.tocsr()


def _face_weights(grid: WedgeGrid) -> sp.dia_matrix:
    w = grid.rho_faces * grid.drho * grid.dphi
    return sp.diags(np.repeat(w, grid.n_phi))


def _twisted_form(grid: WedgeGrid, theta_prime_faces: np.ndarray) -> sp.csr_matrix:
    # T^T W T with T = D (x) I - (Theta A) (x) C expands into Kronecker
    # products of 1-D factors, which is much cheaper than the 2-D product
    diff, avg = _radial_ops(grid)
    wr = sp.diags(grid.rho_faces * grid.drho)
    dphi = grid.dphi
    eye_phi = sp.identity(grid.n_phi, format="csr")
    out = sp.kron(diff.T @ wr @ diff, dphi * eye_phi)
    if np.any(theta_prime_faces != 0.0):
        C = _angular_centred(grid)
        ta = sp.diags(theta_prime_faces) @ avg
        X = diff.T @ wr @ ta
        out = out - sp.kron(X, dphi * C) - sp.kron(X.T, dphi * C.T) + sp.kron(ta.T @ wr @ ta, dphi * (C.T @ C))
    return out.tocsr()


def _angular_form(grid: WedgeGrid) -> sp.csr_matrix:
    D = _angular_compact(grid)
    radial_w = grid.drho * grid.dphi / grid.rho_nodes
    return sp.kron(sp.diags(radial_w), (D.T @ D)).tocsr()


def _potential_form(grid: WedgeGrid) -> sp.dia_matrix:
    rho = grid.rho_nodes
    return sp.diags(np.repeat(rho**3 / 16.0 * grid.drho * grid.dphi, grid.n_phi))


def inverse_square_matrix(grid: WedgeGrid) -> sp.dia_matrix:
    """Quadrature of ``int |psi|^2 / rho^2  rho drho dphi``."""
    return sp.diags(np.repeat(grid.drho * grid.dphi / grid.rho_nodes, grid.n_phi))


# -- public assembly ---------------------------------------------------------


def assemble_h(grid: WedgeGrid, profile: ThetaProfile) -> sp.csr_matrix:
    """Matrix of ``int |(d_r - theta' d_phi) psi|^2 + |d_phi psi / r|^2  r dr dphi``."""
    tp = np.asarray(profile.theta_prime(grid.rho_faces), dtype=float)
    return _symmetrize(_twisted_form(grid, tp) + _angular_form(grid))


def _warn_resolution(grid: WedgeGrid, profile: ThetaProfile, s: float) -> None:
    if profile.compact and profile.support_radius > 0:
        if math.exp(-0.5 * s) * profile.support_radius < 3.0 * grid.drho:
            warnings.warn(
                f"rescaled twist support e^(-s/2) R = {math.exp(-0.5 * s) * profile.support_radius:.3g} "
                f"is below 3 radial cells (drho = {grid.drho:.3g}) at s = {s}",
                ResolutionWarning,
                stacklevel=3,
            )


def skew_matrix(grid: WedgeGrid, profile: ThetaProfile, s: float) -> sp.csr_matrix:
    """Form matrix of ``M_s = -(1/2) rho theta'_s(rho) d_phi`` in the mass inner product.

    Exactly antisymmetric: each ring contributes ``c_i * C`` with ``C`` the
    antisymmetric centred angular difference and ``c_i`` a scalar.
    """
    rho = grid.rho_nodes
    tps = profile.rescaled_prime(rho, s)
    coef = -0.5 * rho * tps * rho * grid.drho * grid.dphi
    if not np.any(coef != 0.0):
        return sp.csr_matrix((grid.size, grid.size))
    return sp.kron(sp.diags(coef), _angular_centred(grid)).tocsr()


@lru_cache(maxsize=16)
def _straight_forms(grid: WedgeGrid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    base = (_angular_form(grid) + _potential_form(grid)).tocsr()
    L = _symmetrize(_twisted_form(grid, np.zeros(grid.rho_faces.size)) + base)
    return L, base


def assemble_forms(
    grid: WedgeGrid, profile: ThetaProfile, s: float = 0.0, warn: bool = True
) -> FormMatrices:
    """Assemble ``l_s``, ``l``, ``M_s`` and the mass matrix at self-similar time ``s``."""
    if s < 0:
        raise ValueError("s must be non-negative")
    if warn:
        _warn_resolution(grid, profile, s)
    L, base = _straight_forms(grid)
    tps = profile.rescaled_prime(grid.rho_faces, s)
    if np.any(tps != 0.0):
        L_s = _symmetrize(_twisted_form(grid, tps) + base)
    else:
        L_s = L
    return FormMatrices(
        L_s_mat=L_s,
        L_mat=L,
        M_s_mat=skew_matrix(grid, profile, s),
        mass=grid.mass(),
        s=float(s),
        grid=grid,
    )


def equivalence_constant(twist_bound: float) -> float:
    """``K = max(2, 1 + 2 C^2)`` bounding ``l_s / l`` from both sides."""
    return max(2.0, 1.0 + 2.0 * twist_bound**2)


def form_equivalence_check(
    grid: WedgeGrid,
    profile: ThetaProfile,
    s: float,
    trials: int = 100,
    rng: np.random.Generator | int | None = 0,
    twist_bound: float | None = None,
) -> tuple[float, float]:
    """Min and max of ``v^T L_s v / v^T L v`` over random vectors.

    Raises :class:`InvariantError` with the witness vector if a ratio leaves
    ``[1/K, K]``.
    """
    rng = np.random.default_rng(rng)
    forms = assemble_forms(grid, profile, s, warn=False)
    C = profile.twist_bound() if twist_bound is None else twist_bound
    K = equivalence_constant(C)
    lo, hi = math.inf, -math.inf
    for _ in range(trials):
        v = rng.standard_normal(grid.size)
        ratio = float(v @ (forms.L_s_mat @ v)) / float(v @ (forms.L_mat @ v))
        if not (1.0 / K <= ratio <= K):
            raise InvariantError(f"l_s/l ratio {ratio} outside [1/{K}, {K}]", witness=v)
        lo, hi = min(lo, ratio), max(hi, ratio)
    return lo, hi


def export_coo(matrix, path: str | Path) -> None:
    """Write a sparse matrix as ``row col value`` lines (0-based indices)."""
    m = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# shape {m.shape[0]} {m.shape[1]} nnz {m.nnz}\n")
        order = np.lexsort((m.col, m.row))
        for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
