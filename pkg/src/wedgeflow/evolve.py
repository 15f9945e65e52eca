"""Heat flow in self-similar variables and decay-rate estimation.

With ``rho = r / sqrt(t + 1)``, ``s = log(t + 1)`` and the Gaussian weight
``w = exp(rho^2 / 4)``, the function ``phi = w^{1/2} e^{s/2} psi(e^{s/2} rho, .,
e^s - 1)`` solves ``phi_s + L_s phi + M_s phi = 0``.  The rescaling preserves
the norm, so ``||psi(t)|| = ||w^{-1/2} phi(s)|| <= ||phi(s)||`` and polynomial
decay in ``t`` becomes exponential decay in ``s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import WedgeGrid, assemble_forms
from .geometry import ThetaProfile

__all__ = [
    "SelfSimilarState",
    "DecayFit",
    "Evolver",
    "to_self_similar",
    "from_self_similar",
    "prepare_initial",
    "ground_state_datum",
    "generic_datum",
    "gaussian_bump_datum",
    "step",
    "evolve",
    "energy_defect",
    "fit_decay",
    "run_and_fit",
    "gronwall_bound",
    "c_epsilon",
    "pointwise_bound",
    "empirical_prefactor",
]

# |phi0| on the outer ring relative to its maximum; above this the weighted
# datum has not decayed inside the truncated domain
TAIL_TOLERANCE = 1e-4


def to_self_similar(r, t):
    """``(r, t) -> (rho, s) = (r / sqrt(t + 1), log(t + 1))``."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(r <= 0) or np.any(t < 0):
        raise ValueError("need r > 0 and t >= 0")
    rho = r / np.sqrt(t + 1.0)
    s = np.log1p(t)
    if rho.ndim == 0:
        return float(rho), float(s)
    return rho, s


def from_self_similar(rho, s):
    """Inverse map ``(rho, s) -> (r, t) = (e^{s/2} rho, e^s - 1)``."""
    rho = np.asarray(rho, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(rho <= 0) or np.any(s < 0):
        raise ValueError("need rho > 0 and s >= 0")
    r = rho * np.exp(0.5 * s)
    t = np.expm1(s)
    if r.ndim == 0:
        return float(r), float(t)
    return r, t


@dataclass(frozen=True)
class SelfSimilarState:
    s: float
    phi_vec: np.ndarray = field(repr=False)
    norm: float


def _norm(grid: WedgeGrid, v: np.ndarray) -> float:
    return math.sqrt(float(np.sum(grid.mass_diagonal() * v * v)))


def _state(grid: WedgeGrid, s: float, v: np.ndarray) -> SelfSimilarState:
    return SelfSimilarState(float(s), v, _norm(grid, v))


def prepare_initial(grid: WedgeGrid, psi0, normalize: bool = False) -> SelfSimilarState:
    """Sample ``phi0 = e^{rho^2/8} psi0`` on the grid.

    ``psi0`` is either a callable ``psi0(rho, phi)`` or an array of nodal
    values.  The weighted datum must have decayed by the truncation radius.
    """
    rho, phi = grid.mesh()
    if callable(psi0):
        vals = np.asarray(psi0(rho, phi), dtype=float)
    else:
        vals = np.asarray(psi0, dtype=float)
    vals = np.broadcast_to(vals, rho.shape) if vals.size != rho.size else vals.reshape(rho.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        phi0 = np.exp(rho * rho / 8.0) * vals
    if not np.all(np.isfinite(phi0)):
        raise ValueError("weighted initial datum overflows: psi0 must decay faster than exp(-rho^2/8)")
    peak = float(np.max(np.abs(phi0)))
    if peak > 0 and float(np.max(np.abs(phi0[-1]))) > TAIL_TOLERANCE * peak:
        raise ValueError(
            "weighted initial datum has not decayed at rho_max: psi0 must decay faster than exp(-rho^2/8)"
        )
    v = np.array(phi0.reshape(-1), dtype=float)
    st = _state(grid, 0.0, v)
    if normalize and st.norm > 0:
        v = v / st.norm
        st = _state(grid, 0.0, v)
    return st


def ground_state_datum(a: float):
    """``psi0 = exp(-rho^2/8) phi0`` with ``phi0`` the lowest eigenfunction of ``L``."""
    mu = 1.0 / (2.0 * a)

    def psi0(rho, phi):
        return rho**mu * np.exp(-rho * rho / 4.0) * np.sin(mu * phi)

    return psi0


def generic_datum(a: float):
    """Smooth datum overlapping many modes of ``L`` (none of them orthogonal by symmetry)."""
    width = 2.0 * math.pi * a

    def psi0(rho, phi):
        x = phi / width
        return (1.0 + rho) * np.exp(-rho * rho / 4.0) * x * (1.0 - x) * (1.0 + x)

    return psi0


def gaussian_bump_datum(a: float):
    """``psi0 = exp(-rho^2) sin(phi / (2a))``."""

    def psi0(rho, phi):
        return np.exp(-rho * rho) * np.sin(phi / (2.0 * a))

    return psi0


class Evolver:
    """Crank-Nicolson integrator for ``M phi' + (L_s + M_s) phi = 0``.

    The operator is frozen at the step midpoint.  Once the rescaled twist has
    left the grid the operator is ``L`` for good and its factorisation is
    reused.
    """

    def __init__(self, grid: WedgeGrid, profile: ThetaProfile):
        self.grid = grid
        self.profile = profile
        self.mass = grid.mass()
        self._straight_cache: dict[float, tuple] = {}

    def twist_on_grid(self, s: float) -> bool:
        if self.profile.is_straight:
            return False
        nodes = self.profile.rescaled_prime(self.grid.rho_nodes, s)
        faces = self.profile.rescaled_prime(self.grid.rho_faces, s)
        return bool(np.any(nodes != 0.0) or np.any(faces != 0.0))

    def operator(self, s: float) -> sp.csr_matrix:
        return assemble_forms(self.grid, self.profile, s, warn=False).operator()

    def _system(self, s_mid: float, ds: float):
        if not self.twist_on_grid(s_mid):
            cached = self._straight_cache.get(ds)
            if cached is None:
                cached = self._factor(self.operator(s_mid), ds)
                self._straight_cache[ds] = cached
            return cached
        return self._factor(self.operator(s_mid), ds)

    def _factor(self, A, ds):
        lhs = sp.csc_matrix(self.mass + 0.5 * ds * A)
        rhs = (self.mass - 0.5 * ds * A).tocsr()
        try:
            lu = spla.splu(lhs, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise RuntimeError(f"Crank-Nicolson factorisation failed: {exc}") from exc
        return lu, rhs

    def step(self, state: SelfSimilarState, ds: float) -> SelfSimilarState:
        if not ds > 0:
            raise ValueError("ds must be positive")
        lu, rhs = self._system(state.s + 0.5 * ds, ds)
        new = lu.solve(rhs @ state.phi_vec)
        if not np.all(np.isfinite(new)):
            raise RuntimeError("Crank-Nicolson solve produced non-finite values")
        return _state(self.grid, state.s + ds, new)


def step(state: SelfSimilarState, ds: float, grid: WedgeGrid, profile: ThetaProfile) -> SelfSimilarState:
    """One Crank-Nicolson step with the midpoint operator."""
    return Evolver(grid, profile).step(state, ds)


def _n_steps(s_max: float, ds: float) -> int:
    n = int(round(s_max / ds))
    if n < 1 or abs(n * ds - s_max) > 1e-9 * max(1.0, s_max):
        raise ValueError("s_max must be a positive integer multiple of ds")
    return n


def evolve(grid, profile, initial: SelfSimilarState, s_max: float, ds: float, keep_states: bool = False):
    """Integrate to ``s_max``; returns the list of ``(s, norm)`` (and states if asked)."""
    ev = Evolver(grid, profile)
    n = _n_steps(s_max, ds)
    st = initial
    series = [(st.s, st.norm)]
    states = [st] if keep_states else None
    for k in range(1, n + 1):
        st = ev.step(st, ds)
        st = SelfSimilarState(initial.s + k * ds, st.phi_vec, st.norm)
        series.append((st.s, st.norm))
        if keep_states:
            states.append(st)
    return (series, states) if keep_states else series


def energy_defect(grid, profile, initial: SelfSimilarState, s_max: float, ds: float) -> dict:
    """Defect of the energy identity ``(1/2) d/ds ||phi||^2 = -l_s[phi]`` along a run.

    ``step`` holds the per-step defects
    ``(||phi_{k+1}||^2 - ||phi_k||^2) / (2 ds) + (l_{s_k}[phi_k] + l_{s_{k+1}}[phi_{k+1}]) / 2``
    and ``cumulative`` the running sum of ``ds * step``, i.e. the error of
    ``||phi(s)||^2 / 2 + int_0^s l`` with trapezoidal time quadrature.
    """
    series, states = evolve(grid, profile, initial, s_max, ds, keep_states=True)
    energies = []
    for st in states:
        L = assemble_forms(grid, profile, st.s, warn=False).L_s_mat
        energies.append(float(st.phi_vec @ (L @ st.phi_vec)))
    energies = np.array(energies)
    sq = np.array([n for _, n in series]) ** 2
    per_step = (sq[1:] - sq[:-1]) / (2.0 * ds) + 0.5 * (energies[1:] + energies[:-1])
    cumulative = np.cumsum(per_step * ds)
    return {
        "s": np.array([s for s, _ in series]),
        "step": per_step,
        "cumulative": cumulative,
        "max_step": float(np.max(np.abs(per_step))),
        "max_cumulative": float(np.max(np.abs(cumulative))),
    }


@dataclass(frozen=True)
class DecayFit:
    gamma_hat: float
    window: tuple[float, float]
    rms_residual: float
    series: list = field(repr=False)
    log_intercept: float = 0.0

    def to_dict(self, a: float | None = None) -> dict:
        out = {
            "gamma_hat": self.gamma_hat,
            "window": list(self.window),
            "rms_residual": self.rms_residual,
            "log_intercept": self.log_intercept,
        }
        if a is not None:
            out["gamma_theory"] = 0.5 + 1.0 / (4.0 * a)
            out["relative_gap"] = abs(self.gamma_hat - out["gamma_theory"]) / out["gamma_theory"]
        return out


def fit_decay(series, window: tuple[float, float] | None = None) -> DecayFit:
    """Least-squares fit ``log ||phi(s)|| = b - gamma * s`` on ``window``.

    The default window is the last half of the recorded range.
    """
    s = np.array([p[0] for p in series], dtype=float)
    nrm = np.array([p[1] for p in series], dtype=float)
    if window is None:
        window = (0.5 * (s[0] + s[-1]), float(s[-1]))
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError("fit window must satisfy s_lo < s_hi")
    sel = (s >= lo - 1e-12) & (s <= hi + 1e-12)
    if sel.sum() < 5:
        raise ValueError(f"only {int(sel.sum())} samples in fit window {window}; need at least 5")
    if np.any(nrm[sel] <= 0):
        raise ValueError("norm vanished inside the fit window")
    y = np.log(nrm[sel])
    slope, intercept = np.polyfit(s[sel], y, 1)
    resid = y - (slope * s[sel] + intercept)
    return DecayFit(
        gamma_hat=float(-slope),
        window=(lo, hi),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        series=list(zip(s.tolist(), nrm.tolist())),
        log_intercept=float(intercept),
    )


def run_and_fit(grid, profile, phi0: SelfSimilarState, s_max: float, ds: float, fit_window=None) -> DecayFit:
    """Evolve from ``phi0`` and fit the exponential rate of ``||phi(s)||``.

    Since ``||psi(t)|| = ||phi(s)||`` up to the Gaussian weight and
    ``s = log(1 + t)``, the fitted rate estimates the polynomial decay rate.
    """
    if fit_window is not None:
        lo, hi = fit_window
        if lo < 0 or hi > s_max + 1e-12:
            raise ValueError("fit window must lie inside [0, s_max]")
    series = evolve(grid, profile, phi0, s_max, ds)
    return fit_decay(series, fit_window)


def gronwall_bound(trajectory, phi0_norm: float) -> list[tuple[float, float]]:
    """``phi0_norm * exp(-int_0^s lambda0)`` with trapezoidal quadrature.

    ``trajectory`` is a sequence of ``(s, lambda0)`` pairs (or objects with
    ``s``/``lambda0`` attributes) starting at ``s = 0``.
    """
    pts = [(p.s, p.lambda0) if hasattr(p, "lambda0") else (p[0], p[1]) for p in trajectory]
    s = np.array([p[0] for p in pts], dtype=float)
    lam = np.array([p[1] for p in pts], dtype=float)
    if s.size == 0:
        return []
    if np.any(np.diff(s) <= 0):
        raise ValueError("trajectory s values must be increasing")
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (lam[1:] + lam[:-1]) * np.diff(s))])
    return list(zip(s.tolist(), (phi0_norm * np.exp(-integral)).tolist()))


def c_epsilon(epsilon: float) -> float:
    """``(4 pi eps)^{-1} (2 pi eps)^{1/2}``: sup-norm of the Euclidean heat kernel in L^2 at time eps."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return (2.0 * math.pi * epsilon) ** 0.5 / (4.0 * math.pi * epsilon)


def pointwise_bound(u_norm_weighted, t, epsilon: float, delta: float, gamma: float, c_delta: float):
    """Sup-norm bound ``c_eps C_delta (1 + t - eps)^{-gamma + delta} ||u0||_w``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < epsilon):
        raise ValueError("pointwise bound needs t >= epsilon")
    out = c_epsilon(epsilon) * c_delta * (1.0 + t_arr - epsilon) ** (-gamma + delta) * u_norm_weighted
    return float(out) if out.ndim == 0 else out


def empirical_prefactor(fit: DecayFit, gamma: float, delta: float) -> float:
    """Smallest ``C`` with ``||phi(s)|| <= C e^{-(gamma - delta) s} ||phi(0)||`` on the recorded run.

    Empirical: it only covers the sampled times of one initial datum.
    """
    s = np.array([p[0] for p in fit.series])
    nrm = np.array([p[1] for p in fit.series])
    return float(np.max(nrm * np.exp((gamma - delta) * s)) / nrm[0])
