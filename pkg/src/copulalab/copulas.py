"""Analytic copula families: CDFs, partial derivatives, samplers, audits."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy import special

from .grid import Grid

__all__ = [
    "CopulaModel",
    "Independence",
    "Clayton",
    "Gumbel",
    "Frank",
    "GaussianCopula",
    "FGM",
    "C2Report",
    "check_c2",
]

_FD_STEP_FIRST = 1e-6
_FD_STEP_SECOND = 1e-4


def _as_points(u, d: int) -> tuple:
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 1
    pts = np.atleast_2d(u)
    if pts.shape[-1] != d:
        raise ValueError(f"points must have {d} coordinates")
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("point outside [0,1]^d")
    return pts, scalar


class CopulaModel(ABC):
    """Copula on [0,1]^d with CDF, first/second partials and a sampler.

    Immutable; ``cdf``/``partial``/``second_partial`` are pure.  ``sample``
    consumes the caller's random generator.
    """

    d: int

    @abstractmethod
    def _cdf(self, pts: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _partial(self, j: int, pts: np.ndarray) -> np.ndarray:
        """First partial on points with 0 < u_j < 1 (other coords arbitrary)."""

    @abstractmethod
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...

    def cdf(self, u) -> np.ndarray:
        pts, scalar = _as_points(u, self.d)
        out = self._cdf(pts)
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def partial(self, j: int, u, boundary: str = "zero"):
        """C^(j)(u), clamped to [0,1].

        On the degenerate set {u_j in {0,1}} the derivative is not covered
        by the continuity assumption; ``boundary="zero"`` returns 0 there,
        ``boundary="extend"`` uses the continuous extension of the analytic
        formula (needed when assembling sums of the form
        sum_j C^(j)(u) g_j(u_j), whose cross terms live on those slices).
        """
        if not 0 <= j < self.d:
            raise ValueError(f"axis {j} out of range for d={self.d}")
        pts, scalar = _as_points(u, self.d)
        degenerate = (pts[:, j] == 0.0) | (pts[:, j] == 1.0)
        with np.errstate(all="ignore"):
            out = np.asarray(self._partial(j, pts), dtype=float)
        out = np.nan_to_num(out, nan=0.0, posinf=1.0, neginf=0.0)
        out = np.clip(out, 0.0, 1.0)
        if boundary == "zero":
            out = np.where(degenerate, 0.0, out)
        elif boundary == "extend":
            # u_j = 0 with the rest interior: the slice is grounded, keep 0.
            out = np.where(pts[:, j] == 0.0, 0.0, out)
        else:
            raise ValueError(f"unknown boundary convention {boundary!r}")
        return float(out[0]) if scalar else out

    def second_partial(self, j: int, k: int, u):
        """C^(j,k)(u) on the open cube."""
        for a in (j, k):
            if not 0 <= a < self.d:
                raise ValueError(f"axis {a} out of range for d={self.d}")
        pts, scalar = _as_points(u, self.d)
        if np.any(pts == 0.0) or np.any(pts == 1.0):
            raise ValueError("second partial requires a point in the open cube")
        with np.errstate(all="ignore"):
            out = np.asarray(self._second_partial(j, k, pts), dtype=float)
        return float(out[0]) if scalar else out

    def _second_partial(self, j: int, k: int, pts: np.ndarray) -> np.ndarray:
        # Fallback: central difference of the analytic first partial.
        h = _FD_STEP_SECOND
        hi = pts.copy()
        lo = pts.copy()
        hi[:, k] = np.minimum(pts[:, k] + h, 1.0 - 1e-12)
        lo[:, k] = np.maximum(pts[:, k] - h, 1e-12)
        num = self._partial(j, hi) - self._partial(j, lo)
        return num / (hi[:, k] - lo[:, k])

    def partial_fd(self, j: int, u) -> np.ndarray:
        """Central finite difference of the CDF (verification oracle)."""
        pts, scalar = _as_points(u, self.d)
        h = _FD_STEP_FIRST
        hi = pts.copy()
        lo = pts.copy()
        hi[:, j] = np.minimum(pts[:, j] + h, 1.0)
        lo[:, j] = np.maximum(pts[:, j] - h, 0.0)
        out = (self._cdf(hi) - self._cdf(lo)) / (hi[:, j] - lo[:, j])
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if scalar else out

    def __repr__(self):
        return f"{self.__class__.__name__}(d={self.d})"


def _check_d(d: int, allowed) -> int:
    if d not in allowed:
        raise ValueError(f"dimension {d} not supported (allowed: {sorted(allowed)})")
    return d


class Independence(CopulaModel):
    """Product copula."""

    def __init__(self, d: int = 2):
        self.d = _check_d(d, {2, 3})

    def _cdf(self, pts):
        return np.prod(pts, axis=1)

    def _partial(self, j, pts):
        others = [k for k in range(self.d) if k != j]
        return np.prod(pts[:, others], axis=1)

    def _second_partial(self, j, k, pts):
        if j == k:
            return np.zeros(pts.shape[0])
        others = [a for a in range(self.d) if a not in (j, k)]
        return np.prod(pts[:, others], axis=1) if others else np.ones(pts.shape[0])

    def sample(self, n, rng):
        return rng.uniform(size=(n, self.d))


class Clayton(CopulaModel):
    """Clayton copula, theta > 0 (exchangeable for d = 3)."""

    def __init__(self, theta: float, d: int = 2):
        if theta <= 0:
            raise ValueError(f"Clayton requires theta > 0, got {theta}")
        self.theta = float(theta)
        self.d = _check_d(d, {2, 3})

    def _s(self, pts):
        with np.errstate(divide="ignore"):
            return np.sum(pts ** (-self.theta), axis=1) - (self.d - 1)

    def _cdf(self, pts):
        zero = np.any(pts == 0.0, axis=1)
        s = np.where(zero, np.inf, self._s(pts))
        return np.where(zero, 0.0, s ** (-1.0 / self.theta))

    def _partial(self, j, pts):
        th = self.theta
        zero = np.any(pts == 0.0, axis=1)
        s = np.where(zero, np.inf, self._s(pts))
        uj = pts[:, j]
        val = uj ** (-th - 1.0) * s ** (-1.0 / th - 1.0)
        return np.where(zero, 0.0, val)

    def _second_partial(self, j, k, pts):
        th = self.theta
        s = self._s(pts)
        uj = pts[:, j]
        if j != k:
            uk = pts[:, k]
            return (th + 1.0) * uj ** (-th - 1.0) * uk ** (-th - 1.0) * s ** (
                -1.0 / th - 2.0
            )
        return (th + 1.0) * (
            uj ** (-2.0 * th - 2.0) * s ** (-1.0 / th - 2.0)
            - uj ** (-th - 2.0) * s ** (-1.0 / th - 1.0)
        )

    def sample(self, n, rng):
        # Gamma-frailty construction: U_j = (1 + E_j / V)^(-1/theta).
        v = rng.gamma(1.0 / self.theta, size=n)
        e = rng.exponential(size=(n, self.d))
        return (1.0 + e / v[:, None]) ** (-1.0 / self.theta)

    def __repr__(self):
        return f"Clayton(theta={self.theta}, d={self.d})"


class Gumbel(CopulaModel):
    """Gumbel copula, theta >= 1 (exchangeable for d = 3)."""

    def __init__(self, theta: float, d: int = 2):
        if theta < 1:
            raise ValueError(f"Gumbel requires theta >= 1, got {theta}")
        self.theta = float(theta)
        self.d = _check_d(d, {2, 3})

    def _cdf(self, pts):
        zero = np.any(pts == 0.0, axis=1)
        with np.errstate(divide="ignore"):
            a = -np.log(np.where(zero[:, None], 0.5, pts))
        s = np.sum(a ** self.theta, axis=1)
        return np.where(zero, 0.0, np.exp(-(s ** (1.0 / self.theta))))

    def _partial(self, j, pts):
        th = self.theta
        zero = np.any(pts == 0.0, axis=1)
        safe = np.where(zero[:, None], 0.5, pts)
        a = -np.log(safe)
        s = np.sum(a ** th, axis=1)
        c = np.exp(-(s ** (1.0 / th)))
        with np.errstate(divide="ignore", invalid="ignore"):
            val = c * s ** (1.0 / th - 1.0) * a[:, j] ** (th - 1.0) / safe[:, j]
        # u_j = 1 makes a_j = 0; the continuous extension is 0 for theta > 1
        # and 1 (the independence value) only if all other coordinates are 1.
        val = np.nan_to_num(val, nan=0.0, posinf=0.0)
        if th == 1.0:
            others = [k for k in range(self.d) if k != j]
            val = np.prod(pts[:, others], axis=1)
        return np.where(zero, 0.0, val)

    def sample(self, n, rng):
        th = self.theta
        if th == 1.0:
            return rng.uniform(size=(n, self.d))
        # Positive-stable frailty (Laplace transform exp(-t^alpha)) via
        # Chambers-Mallows-Stuck.
        alpha = 1.0 / th
        w = rng.uniform(0.0, np.pi, size=n)
        e0 = rng.exponential(size=n)
        v = (
            np.sin(alpha * w)
            * np.sin(w) ** (-1.0 / alpha)
            * (np.sin((1.0 - alpha) * w) / e0) ** ((1.0 - alpha) / alpha)
        )
        e = rng.exponential(size=(n, self.d))
        return np.exp(-((e / v[:, None]) ** alpha))

    def __repr__(self):
        return f"Gumbel(theta={self.theta}, d={self.d})"


class Frank(CopulaModel):
    """Frank copula; theta != 0 for d = 2, theta > 0 for d = 3."""

    def __init__(self, theta: float, d: int = 2):
        if theta == 0:
            raise ValueError("Frank requires theta != 0")
        _check_d(d, {2, 3})
        if d == 3 and theta < 0:
            raise ValueError("exchangeable Frank with d = 3 requires theta > 0")
        self.theta = float(theta)
        self.d = d

    def _cdf(self, pts):
        th = self.theta
        g = np.expm1(-th * pts)
        p = np.prod(g, axis=1) / np.expm1(-th) ** (self.d - 1)
        return -np.log1p(p) / th

    def _partial(self, j, pts):
        th = self.theta
        g = np.expm1(-th * pts)
        denom_pow = np.expm1(-th) ** (self.d - 1)
        others = [k for k in range(self.d) if k != j]
        q = np.prod(g[:, others], axis=1) / denom_pow
        p = q * g[:, j]
        return np.exp(-th * pts[:, j]) * q / (1.0 + p)

    def sample(self, n, rng):
        th = self.theta
        if self.d == 2 and th < 0:
            # Conditional inversion (closed form), valid for any theta != 0.
            u = rng.uniform(size=n)
            w = rng.uniform(size=n)
            v = (
                -np.log1p(
                    w * np.expm1(-th) / (np.exp(-th * u) * (1.0 - w) + w)
                )
                / th
            )
            return np.column_stack([u, v])
        # Logarithmic-series frailty for theta > 0.
        v = rng.logseries(-np.expm1(-th), size=n).astype(float)
        e = rng.exponential(size=(n, self.d))
        t = e / v[:, None]
        return -np.log1p(np.expm1(-th) * np.exp(-t)) / th

    def __repr__(self):
        return f"Frank(theta={self.theta}, d={self.d})"


class GaussianCopula(CopulaModel):
    """Bivariate Gaussian copula, rho in (-1, 1)."""

    def __init__(self, rho: float, d: int = 2):
        if not -1.0 < rho < 1.0:
            raise ValueError(f"Gaussian copula requires rho in (-1,1), got {rho}")
        _check_d(d, {2})
        self.rho = float(rho)
        self.d = 2

    @staticmethod
    def _bvn_cdf(x, y, rho):
        """P(X <= x, Y <= y) for standard bivariate normal via Owen's T.

        Assumes x, y are nonzero (callers nudge exact zeros off the
        removable singularity of the a = (y - rho x)/(s x) ratio).
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = np.sqrt(1.0 - rho * rho)
        tx = special.owens_t(x, (y - rho * x) / (s * x))
        ty = special.owens_t(y, (x - rho * y) / (s * y))
        beta = np.where(
            (x * y > 0.0) | ((x * y == 0.0) & (x + y >= 0.0)), 0.0, 0.5
        )
        return 0.5 * (special.ndtr(x) + special.ndtr(y)) - tx - ty - beta

    def _cdf(self, pts):
        u, v = pts[:, 0], pts[:, 1]
        out = np.where((u == 0.0) | (v == 0.0), 0.0, np.nan)
        both = np.isnan(out)
        with np.errstate(all="ignore"):
            x = special.ndtri(np.clip(u, 1e-300, 1.0))
            y = special.ndtri(np.clip(v, 1e-300, 1.0))
        # Boundary rows are overwritten below; keep their arguments finite
        # and shift exact zeros off the removable singularity of Owen's T.
        x = np.clip(np.where(x == 0.0, 1e-14, x), -40.0, 40.0)
        y = np.clip(np.where(y == 0.0, 1e-14, y), -40.0, 40.0)
        val = self._bvn_cdf(x, y, self.rho)
        out = np.where(both, val, out)
        out = np.where(u == 1.0, v, out)
        out = np.where(v == 1.0, np.where(u == 1.0, 1.0, u), out)
        return np.clip(out, 0.0, 1.0)

    def _partial(self, j, pts):
        s = np.sqrt(1.0 - self.rho ** 2)
        uj = pts[:, j]
        uk = pts[:, 1 - j]
        with np.errstate(divide="ignore"):
            x = special.ndtri(np.clip(uj, 0.0, 1.0))
            y = special.ndtri(np.clip(uk, 0.0, 1.0))
        return special.ndtr((y - self.rho * x) / s)

    def _second_partial(self, j, k, pts):
        rho = self.rho
        s2 = 1.0 - rho * rho
        x = special.ndtri(pts[:, j])
        y = special.ndtri(pts[:, 1 - j])
        phi_x = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        phi_y = np.exp(-0.5 * y * y) / np.sqrt(2.0 * np.pi)
        if j != k:
            # Copula density.
            expo = -(rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * s2)
            return np.exp(expo) / np.sqrt(s2)
        z = (y - rho * x) / np.sqrt(s2)
        phi_z = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        return -rho / np.sqrt(s2) * phi_z / phi_x

    def sample(self, n, rng):
        z = rng.standard_normal(size=(n, 2))
        z[:, 1] = self.rho * z[:, 0] + np.sqrt(1.0 - self.rho ** 2) * z[:, 1]
        return special.ndtr(z)

    def __repr__(self):
        return f"GaussianCopula(rho={self.rho})"


class FGM(CopulaModel):
    """Farlie-Gumbel-Morgenstern copula, theta in [-1, 1]."""

    def __init__(self, theta: float, d: int = 2):
        if not -1.0 <= theta <= 1.0:
            raise ValueError(f"FGM requires theta in [-1,1], got {theta}")
        _check_d(d, {2})
        self.theta = float(theta)
        self.d = 2

    def _cdf(self, pts):
        u, v = pts[:, 0], pts[:, 1]
        return u * v * (1.0 + self.theta * (1.0 - u) * (1.0 - v))

    def _partial(self, j, pts):
        uj = pts[:, j]
        uk = pts[:, 1 - j]
        return uk * (1.0 + self.theta * (1.0 - 2.0 * uj) * (1.0 - uk))

    def _second_partial(self, j, k, pts):
        uj = pts[:, j]
        uk = pts[:, 1 - j]
        if j != k:
            return 1.0 + self.theta * (1.0 - 2.0 * uj) * (1.0 - 2.0 * uk)
        return -2.0 * self.theta * uk * (1.0 - uk)

    def sample(self, n, rng):
        u = rng.uniform(size=n)
        w = rng.uniform(size=n)
        b = 1.0 + self.theta * (1.0 - 2.0 * u)
        v = 2.0 * w / (b + np.sqrt(b * b - 4.0 * (b - 1.0) * w))
        return np.column_stack([u, v])

    def __repr__(self):
        return f"FGM(theta={self.theta})"


@dataclass(frozen=True)
class C2Report:
    """Lattice audit of the second-partial growth bound."""

    family: str
    beta: float
    max_ratio: float
    ceiling: float
    passed: bool


def check_c2(c: CopulaModel, beta: float, m: int = 101, ceiling: float = 20.0) -> C2Report:
    """Scan the interior lattice for sup |C^(j,k)(u)| * prod (u(1-u))^beta.

    ``passed`` means the weighted ratio stays finite and below ``ceiling``;
    an unweighted scan (beta = 0) of a family whose density blows up at the
    corners grows without bound as the lattice is refined.
    """
    if not 0.0 <= beta <= 0.5:
        raise ValueError(f"beta must lie in [0, 1/2], got {beta}")
    grid = Grid(c.d, m)
    interior = grid.axis[1:-1]
    mesh = np.meshgrid(*([interior] * c.d), indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=-1)
    weights = (pts * (1.0 - pts)) ** beta
    max_ratio = 0.0
    for j in range(c.d):
        for k in range(j, c.d):
            vals = np.abs(c.second_partial(j, k, pts))
            ratio = vals * weights[:, j] * weights[:, k]
            max_ratio = max(max_ratio, float(np.max(ratio)))
    passed = bool(np.isfinite(max_ratio) and max_ratio <= ceiling)
    return C2Report(repr(c), beta, max_ratio, ceiling, passed)
