"""Wedge parameters, angular-shift profiles and the induced metric.

A curved wedge of opening angle ``2*pi*a`` is the image of the half-strip
``(0, inf) x (0, 2*pi*a)`` under ``(r, phi) -> r*(cos(phi + theta(r)),
sin(phi + theta(r)))``.  Everything downstream only needs ``theta`` and its
derivative, which is what :class:`ThetaProfile` carries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "ThetaProfile",
    "WedgeParams",
    "MetricEval",
    "BUILTIN_PROFILES",
    "OUT_OF_SCOPE_PROFILES",
    "builtin_profile",
    "load_profile_table",
    "tabulated_profile",
    "metric_at",
    "twist_constants",
    "check_a",
]

SIN_CAP_RADIUS = 1.5 * math.pi
DEFAULT_SAMPLES = 100_000


def check_a(a: float) -> float:
    a = float(a)
    if not (0.0 < a <= 1.0) or not math.isfinite(a):
        raise ValueError("a must lie in (0,1]")
    return a


@dataclass(frozen=True)
class ThetaProfile:
    """Angular shift ``theta(r)`` with its derivative.

    ``support_radius`` is the smallest ``R`` with ``theta'(r) = 0`` for all
    ``r >= R`` (``inf`` when the twist is not compactly supported).  ``kinks``
    lists radii where ``theta'`` is only continuous, so derivative checks can
    skip them.
    """

    name: str
    theta: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    theta_prime: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    support_radius: float = math.inf
    kinks: tuple[float, ...] = ()
    analytic: bool = True

    @property
    def compact(self) -> bool:
        return math.isfinite(self.support_radius)

    @property
    def is_straight(self) -> bool:
        return self.support_radius == 0.0

    def rescaled_prime(self, rho, s: float) -> np.ndarray:
        """``theta'_s(rho) = e^{s/2} theta'(e^{s/2} rho)``."""
        k = math.exp(0.5 * s)
        return k * np.asarray(self.theta_prime(k * np.asarray(rho, dtype=float)), dtype=float)

    def twist_bound(self, r_max: float | None = None, n_samples: int = DEFAULT_SAMPLES) -> float:
        return twist_constants(self, r_max, n_samples)[0]

    def sup_theta_prime(self, r_max: float | None = None, n_samples: int = DEFAULT_SAMPLES) -> float:
        return twist_constants(self, r_max, n_samples)[1]


@dataclass(frozen=True)
class WedgeParams:
    a: float
    profile: ThetaProfile

    def __post_init__(self):
        check_a(self.a)

    @property
    def opening_angle(self) -> float:
        return 2.0 * math.pi * self.a


@dataclass(frozen=True)
class MetricEval:
    g11: float
    g12: float
    g22: float
    det: float


def _straight() -> ThetaProfile:
    return ThetaProfile(
        name="straight",
        theta=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        theta_prime=lambda r: np.zeros_like(np.asarray(r, dtype=float)),
        support_radius=0.0,
    )


def _sinc_theta(r):
    r = np.asarray(r, dtype=float)
    return np.sinc(r / math.pi)


def _sinc_theta_prime(r):
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    small = np.abs(r) < 1e-3
    rs = r[small]
    # series of cos(r)/r - sin(r)/r**2 near the origin
    out[small] = -rs / 3.0 + rs**3 / 30.0
    rb = r[~small]
    out[~small] = np.cos(rb) / rb - np.sin(rb) / rb**2
    return out


def _sin_capped_theta(r):
    r = np.asarray(r, dtype=float)
    return np.where(r <= SIN_CAP_RADIUS, np.sin(np.minimum(r, SIN_CAP_RADIUS)), -1.0)


def _sin_capped_theta_prime(r):
    r = np.asarray(r, dtype=float)
    return np.where(r < SIN_CAP_RADIUS, np.cos(np.minimum(r, SIN_CAP_RADIUS)), 0.0)


def _log3() -> ThetaProfile:
    return ThetaProfile(
        name="log3",
        theta=lambda r: 3.0 * np.log(np.asarray(r, dtype=float)),
        theta_prime=lambda r: 3.0 / np.asarray(r, dtype=float),
    )


BUILTIN_PROFILES: dict[str, Callable[[], ThetaProfile]] = {
    "straight": _straight,
    "sinc": lambda: ThetaProfile("sinc", _sinc_theta, _sinc_theta_prime),
    "sin-capped": lambda: ThetaProfile(
        "sin-capped",
        _sin_capped_theta,
        _sin_capped_theta_prime,
        support_radius=SIN_CAP_RADIUS,
        kinks=(SIN_CAP_RADIUS,),
    ),
    "log3": _log3,
}

PROFILE_DESCRIPTIONS = {
    "straight": "theta(r) = 0",
    "sinc": "theta(r) = sin(r)/r  (twist not compactly supported)",
    "sin-capped": "theta(r) = sin(r) for r <= 3pi/2, -1 after  (supp theta' = [0, 3pi/2])",
    "log3": "theta(r) = 3 log(r)  (r theta' = 3, not compactly supported)",
}

# quasi-cylindrical / quasi-bounded wedges: r*theta' unbounded
OUT_OF_SCOPE_PROFILES = {
    "linear": "theta(r) = r",
    "quadratic": "theta(r) = r^2/8",
}


def builtin_profile(name: str) -> ThetaProfile:
    """Return one of the built-in wedge profiles by name."""
    if name in OUT_OF_SCOPE_PROFILES:
        raise ValueError(
            f"profile {name!r} ({OUT_OF_SCOPE_PROFILES[name]}) has unbounded r*theta'(r) "
            "(quasi-cylindrical/quasi-bounded wedge) and is out of scope"
        )
    try:
        return BUILTIN_PROFILES[name]()
    except KeyError:
        valid = ", ".join(sorted(BUILTIN_PROFILES))
        raise ValueError(f"unknown profile {name!r}; valid names: {valid}") from None


def tabulated_profile(r, theta, theta_prime, name: str = "table") -> ThetaProfile:
    """Profile from samples ``(r, theta, theta')`` with linear interpolation.

    Values are held constant outside the tabulated range.  The profile counts
    as compactly supported when the trailing ``theta'`` entries are zero; the
    support radius is then the first radius of that trailing run.
    """
    r = np.array(r, dtype=float)
    th = np.array(theta, dtype=float)
    dth = np.array(theta_prime, dtype=float)
    if r.ndim != 1 or not (r.shape == th.shape == dth.shape):
        raise ValueError("profile table columns must be 1-D and of equal length")
    if r.size < 2:
        raise ValueError("profile table needs at least two rows")
    if np.any(r <= 0):
        raise ValueError("profile table radii must be positive")
    if np.any(np.diff(r) <= 0):
        raise ValueError("profile table radii must be strictly increasing")
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(dth))):
        raise ValueError("profile table contains non-finite values")

    nz = np.flatnonzero(dth != 0.0)
    if nz.size == 0:
        support = 0.0
    elif nz[-1] == r.size - 1:
        support = math.inf
    else:
        support = float(r[nz[-1] + 1])
    r.setflags(write=False)
    th.setflags(write=False)
    dth.setflags(write=False)
    return ThetaProfile(
        name=name,
        theta=lambda x: np.interp(np.asarray(x, dtype=float), r, th),
        theta_prime=lambda x: np.interp(np.asarray(x, dtype=float), r, dth),
        support_radius=support,
        kinks=tuple(float(x) for x in r),
        analytic=False,
    )


def load_profile_table(path: str | Path) -> ThetaProfile:
    """Read a three-column ``r theta theta_prime`` text table (``#`` comments)."""
    path = Path(path)
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 3:
        raise ValueError(f"{path}: expected 3 columns (r theta theta_prime), got {data.shape[1]}")
    return tabulated_profile(data[:, 0], data[:, 1], data[:, 2], name=str(path))


def metric_at(profile: ThetaProfile, r: float) -> MetricEval:
    """Metric of the curvilinear map at radius ``r`` (independent of phi)."""
    r = float(r)
    if not r > 0:
        raise ValueError(f"metric_at needs r > 0, got {r}")
    tp = float(profile.theta_prime(np.array([r]))[0])
    g11 = 1.0 + r * r * tp * tp
    g12 = r * r * tp
    g22 = r * r
    return MetricEval(g11=g11, g12=g12, g22=g22, det=g11 * g22 - g12 * g12)


def twist_constants(
    profile: ThetaProfile, r_max: float | None = None, n_samples: int = DEFAULT_SAMPLES
) -> tuple[float, float]:
    """Sampled ``sup |r theta'(r)|`` and ``sup |theta'(r)|`` over ``(0, r_max]``.

    Both numbers are lower bounds of the true suprema, tightened by raising
    ``n_samples``.  The radii are ``r_max * k / n_samples`` for
    ``k = 1..n_samples``, plus the profile's kink radii.  ``r_max`` defaults to
    twice the support radius (or 100 for non-compact profiles).
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if r_max is None:
        r_max = 2.0 * profile.support_radius if profile.compact and profile.support_radius > 0 else 100.0
    r_max = float(r_max)
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    if profile.compact and r_max < profile.support_radius:
        raise ValueError("r_max must not be smaller than the support radius")
    if profile.is_straight:
        return 0.0, 0.0
    r = r_max * np.arange(1, n_samples + 1) / n_samples
    extra = np.array([k for k in profile.kinks if 0 < k <= r_max], dtype=float)
    r = np.concatenate([r, extra])
    tp = np.abs(np.asarray(profile.theta_prime(r), dtype=float))
    return float(np.max(r * tp)), float(np.max(tp))
