"""Copula mapping, its derivative, perturbation classes, quotient verifiers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .copulas import CopulaModel
from .grid import Grid, GridFunction, Region, sup_diff

__all__ = [
    "PerturbationA",
    "PerturbationB",
    "PerturbationBAlpha",
    "RateParams",
    "copula_map",
    "hadamard_derivative",
    "derivative_kills_B",
    "QuotientRow",
    "ConvergenceTable",
    "verify_theorem_1",
    "verify_theorem_2",
    "QuantileLemmaReport",
    "verify_quantile_lemma",
    "is_valid_cdf",
]

_BOUNDARY_TOL = 1e-9
_RECT_TOL = 1e-12
# Halving t must shrink the quotient error by at least this factor until
# the discretization floor is reached.
_DECREASE_RATIO = 0.75


# ---------------------------------------------------------------------------
# The copula mapping and its derivative
# ---------------------------------------------------------------------------


def _marginal_slice(values: np.ndarray, j: int, d: int) -> np.ndarray:
    """Values along axis j with every other coordinate equal to 1."""
    idx = [-1] * d
    idx[j] = slice(None)
    return values[tuple(idx)]


def _piecewise_linear_inverse(ax: np.ndarray, hv: np.ndarray, u: np.ndarray):
    """Leftmost x with H(x) >= u for the piecewise-linear H given by nodes.

    H must be non-decreasing with H(0) = 0 and H(1) = 1; flat stretches are
    resolved to the left end of the level set.
    """
    idx = np.searchsorted(hv, u, side="left")
    idx = np.clip(idx, 1, hv.size - 1)
    lo, hi = hv[idx - 1], hv[idx]
    gap = hi - lo
    frac = np.where(gap > 0, (u - lo) / np.where(gap > 0, gap, 1.0), 1.0)
    frac = np.clip(frac, 0.0, 1.0)
    x = ax[idx - 1] + frac * (ax[idx] - ax[idx - 1])
    return np.where(u <= hv[0], ax[0] * np.ones_like(x), x)


def copula_map(H: GridFunction) -> GridFunction:
    """H composed with the generalized inverses of its own marginals.

    Fixed points are copulas.  Marginals are read off the lattice slices and
    inverted piecewise-linearly; the result is tabulated on the same grid.
    """
    grid = H.grid
    ax = grid.axis
    inv_coords = []
    for j in range(grid.d):
        hv = np.asarray(_marginal_slice(H.values, j, grid.d), dtype=float)
        if abs(hv[0]) > _BOUNDARY_TOL or abs(hv[-1] - 1.0) > _BOUNDARY_TOL:
            raise ValueError(
                f"marginal {j} violates H_j(0)=0, H_j(1)=1 "
                f"(got {hv[0]}, {hv[-1]})"
            )
        if np.any(np.diff(hv) < -_RECT_TOL):
            raise ValueError(f"marginal {j} is not non-decreasing")
        hv = np.maximum.accumulate(np.clip(hv, 0.0, 1.0))
        inv_coords.append(_piecewise_linear_inverse(ax, hv, ax))
    mesh = np.meshgrid(*inv_coords, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=-1)
    return GridFunction(grid, H(pts).reshape(grid.shape))


def _partial_fields(c: CopulaModel, grid: Grid) -> list:
    nodes = grid.nodes()
    return [
        c.partial(j, nodes, boundary="extend").reshape(grid.shape)
        for j in range(grid.d)
    ]


def hadamard_derivative(c: CopulaModel, h: GridFunction) -> GridFunction:
    """Linear map h(u) - sum_j C^(j)(u) h(u^(j)).

    u^(j) keeps the j-th coordinate and sets the rest to 1; those points are
    lattice nodes, so h(u^(j)) is an exact slice lookup.  The partials use
    their continuous extension so the formula stays coherent on the boundary
    slices where cross terms live.
    """
    grid = h.grid
    if grid.d != c.d:
        raise ValueError(f"grid dimension {grid.d} != copula dimension {c.d}")
    out = h.values.copy()
    partials = _partial_fields(c, grid)
    for j in range(grid.d):
        slice_j = _marginal_slice(h.values, j, grid.d)
        shape = [1] * grid.d
        shape[j] = grid.m
        out = out - partials[j] * slice_j.reshape(shape)
    return GridFunction(grid, out)


# ---------------------------------------------------------------------------
# Perturbation classes
# ---------------------------------------------------------------------------


class PerturbationA:
    """Bounded multivariate perturbation vanishing on the grounded slices.

    Requires h(1,...,1) = 0 and h(u) = 0 whenever some coordinate of u is 0.
    Carries a lattice modulus-of-continuity certificate (the largest jump
    between adjacent nodes).
    """

    def __init__(self, h: GridFunction, tol: float = 1e-12):
        v = h.values
        d = h.grid.d
        if abs(v[(-1,) * d]) > tol:
            raise ValueError("perturbation must vanish at (1,...,1)")
        for j in range(d):
            idx = [slice(None)] * d
            idx[j] = 0
            if np.max(np.abs(v[tuple(idx)])) > tol:
                raise ValueError(
                    "perturbation must vanish when any coordinate is 0"
                )
        self.h = h
        self.bound = float(np.max(np.abs(v)))
        self.modulus = max(
            float(np.max(np.abs(np.diff(v, axis=j)))) for j in range(d)
        )


class PerturbationB:
    """Margin-wise perturbation assembled as sum_j C^(j)(u) g_j(u_j).

    Each component g_j is a callable on [0,1] dominated by the envelope r,
    which is bounded, non-negative and vanishes at both ends.
    """

    def __init__(self, components, envelope=None, check_points: int = 2001):
        self.components = list(components)
        self.envelope = envelope
        u = np.linspace(0.0, 1.0, check_points)
        sups = [float(np.max(np.abs(np.asarray(g(u))))) for g in self.components]
        self.bound = max(sups) if sups else 0.0
        if envelope is not None:
            r = np.asarray(envelope(u), dtype=float)
            if np.any(r < 0):
                raise ValueError("envelope must be non-negative")
            if max(abs(r[0]), abs(r[-1])) > 1e-9:
                raise ValueError("envelope must vanish at 0 and 1")
            for g in self.components:
                if np.any(np.abs(np.asarray(g(u))) > r + 1e-12):
                    raise ValueError("component exceeds its envelope")

    @property
    def d(self) -> int:
        return len(self.components)

    def assemble(self, c: CopulaModel, grid: Grid) -> GridFunction:
        """Tabulate sum_j C^(j)(u) g_j(u_j) on the lattice."""
        if grid.d != self.d or c.d != self.d:
            raise ValueError("dimension mismatch in perturbation assembly")
        partials = _partial_fields(c, grid)
        out = np.zeros(grid.shape)
        ax = grid.axis
        for j in range(self.d):
            shape = [1] * self.d
            shape[j] = grid.m
            gj = np.asarray(self.components[j](ax), dtype=float)
            out = out + partials[j] * gj.reshape(shape)
        return GridFunction(grid, out)


class PerturbationBAlpha(PerturbationB):
    """PerturbationB whose components obey a corner weight u^a (1-u)^a.

    On the shrunk interval [eps t^vartheta, 1 - eps t^vartheta] the ratio
    |g_j(u)| / (u^alpha (1-u)^alpha) must stay below twice the uniform bound.
    """

    def __init__(self, components, alpha: float, epsilon: float,
                 vartheta: float, envelope=None):
        if alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {alpha}")
        if epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        if not 0.0 < vartheta <= 1.0:
            raise ValueError(f"vartheta must lie in (0,1], got {vartheta}")
        super().__init__(components, envelope)
        self.alpha = float(alpha)
        self.epsilon = float(epsilon)
        self.vartheta = float(vartheta)

    def check_weighted_bound(self, t: float, points: int = 2001) -> bool:
        lo = self.epsilon * t ** self.vartheta
        if lo >= 0.5:
            raise ValueError("shrunk interval is empty at this t")
        u = np.linspace(lo, 1.0 - lo, points)
        weight = u ** self.alpha * (1.0 - u) ** self.alpha
        for g in self.components:
            ratio = np.abs(np.asarray(g(u))) / weight
            if np.max(ratio) >= 2.0 * max(self.bound, 1e-300):
                return False
        return True


def product_bump(grid: Grid, amplitude: float = 0.1) -> PerturbationA:
    """Smooth bump prod_j sin(pi u_j): vanishes on the whole cube boundary."""
    def fn(p):
        return amplitude * np.prod(np.sin(np.pi * p), axis=-1)

    return PerturbationA(GridFunction.from_callable(grid, fn))


def stretch_direction(c: CopulaModel, grid: Grid) -> PerturbationA:
    """Direction C(u_1^2, ..., u_d^2) - C(u): an exact mixture-of-cdfs path.

    C composed with coordinatewise squares is itself a cdf (the law of the
    coordinatewise square roots), so C + t h stays a valid cdf for every
    t in [0,1] while genuinely perturbing the marginals.
    """
    def fn(p):
        return c.cdf(p ** 2) - c.cdf(p)

    return PerturbationA(GridFunction.from_callable(grid, fn))


def parabola_components(d: int, amplitude: float = 1.0) -> list:
    """Margin-wise components a u(1-u): vanish at both ends."""
    return [lambda u, a=amplitude: a * u * (1.0 - u) for _ in range(d)]


# ---------------------------------------------------------------------------
# Rate parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateParams:
    """Exponents (beta, alpha, gamma, vartheta) tied by the rate constraints.

    Two regimes: the two-sequence quotient regime (s is None) with

        gamma >= (beta - alpha)_+ / (4 (1 - beta)),
        vartheta = min{(1 + 4 gamma) / (2 (1 - alpha)), 1};

    and the moment regime (s >= 2) with

        gamma >= ((s-2)/(s-1) (beta - alpha)_+)
                 / (4 (1 - alpha - (beta - alpha) s/(s-1))_+),
        vartheta = min{((s-2)/(s-1) + 4 gamma s/(s-1)) / (2 (1 - alpha)), 1}.

    The auxiliary scale is t_tilde(t) = t^(1/2 + 2 gamma) / log(1/t), a
    concrete choice of order strictly smaller than t^(1/2 + 2 gamma).
    """

    beta: float
    alpha: float
    gamma: float
    s: float | None = None
    epsilon: float = 1.0
    vartheta: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 0.5:
            raise ValueError(f"beta must lie in [0, 1/2], got {self.beta}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.gamma < 0.25:
            raise ValueError(f"gamma must lie in [0, 1/4), got {self.gamma}")
        if self.s is not None and self.s < 2:
            raise ValueError(f"s must be >= 2, got {self.s}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        lower = self.gamma_lower_bound()
        if self.gamma < lower - 1e-12:
            raise ValueError(
                f"gamma = {self.gamma} below required bound {lower}"
            )
        object.__setattr__(self, "vartheta", self._vartheta())

    def gamma_lower_bound(self) -> float:
        excess = max(self.beta - self.alpha, 0.0)
        if self.s is None:
            return excess / (4.0 * (1.0 - self.beta))
        w = self.s / (self.s - 1.0)
        num = (self.s - 2.0) / (self.s - 1.0) * excess
        den = 4.0 * max(1.0 - self.alpha - excess * w, 0.0)
        if num == 0.0:
            return 0.0
        if den == 0.0:
            raise ValueError("no feasible gamma for these (alpha, beta, s)")
        return num / den

    def _vartheta(self) -> float:
        if self.s is None:
            return min((1.0 + 4.0 * self.gamma) / (2.0 * (1.0 - self.alpha)), 1.0)
        a = (self.s - 2.0) / (self.s - 1.0)
        b = 4.0 * self.gamma * self.s / (self.s - 1.0)
        return min((a + b) / (2.0 * (1.0 - self.alpha)), 1.0)

    def t_tilde(self, t: float) -> float:
        if not 0.0 < t < 1.0:
            raise ValueError(f"t must lie in (0,1), got {t}")
        return t ** (0.5 + 2.0 * self.gamma) / np.log(1.0 / t)


# ---------------------------------------------------------------------------
# Lattice validity of perturbed cdfs
# ---------------------------------------------------------------------------


def is_valid_cdf(H: GridFunction) -> bool:
    """Lattice check of cdf shape: monotone axes, rectangle increments >= 0.

    Exact d-increasingness off the lattice is not verifiable numerically;
    cell-level rectangle increments are what the lattice sup norms see.
    """
    v = H.values
    d = H.grid.d
    for j in range(d):
        if np.any(np.diff(v, axis=j) < -_RECT_TOL):
            return False
    inc = v.copy()
    for j in range(d):
        inc = np.diff(inc, axis=j)
    if np.any(inc < -_RECT_TOL):
        return False
    corner = v[(-1,) * d]
    if abs(corner - 1.0) > _BOUNDARY_TOL:
        return False
    for j in range(d):
        idx = [slice(None)] * d
        idx[j] = 0
        if np.max(np.abs(v[tuple(idx)])) > _BOUNDARY_TOL:
            return False
    return True


# ---------------------------------------------------------------------------
# Difference-quotient verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuotientRow:
    t: float
    sup_error: float
    region_lower: float
    region_upper: float
    valid_cdf: bool


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple
    floors: tuple
    passed: bool

    @property
    def floor(self) -> float:
        return max(self.floors)

    def to_csv_lines(self):
        yield "# schema=1"
        yield "t,sup_error,region_lower,region_upper,valid_cdf_flag"
        for r in self.rows:
            yield (
                f"{r.t!r},{r.sup_error!r},{r.region_lower!r},"
                f"{r.region_upper!r},{int(r.valid_cdf)}"
            )


def _judge(rows, floors) -> bool:
    """Monotone-decrease criterion: each halving shrinks the error by the
    required ratio, or the error has reached its discretization floor.

    The floor is estimated from two resolutions assuming the lattice error
    shrinks linearly in the grid step; families with corner curvature decay
    slightly slower, so the at-floor test carries a 1.5x estimator slack.
    A genuine plateau is still caught: resolution-independent error makes
    the two-resolution difference, and hence the floor, collapse to zero.
    """
    if any(not r.valid_cdf for r in rows):
        return False
    for prev, cur, floor in zip(rows, rows[1:], floors[1:]):
        at_floor = cur.sup_error <= 1.5 * floor
        if not at_floor and cur.sup_error > _DECREASE_RATIO * prev.sup_error:
            return False
    return True


def _quotient_rows(c, h_fn, hb, params, t_sequence, grid, region_fn, scale_fn):
    target = hadamard_derivative(c, h_fn)
    c_grid = GridFunction.from_callable(grid, c.cdf)
    rows = []
    for t in t_sequence:
        if not 0.0 < t < 1.0:
            raise ValueError(f"step t must lie in (0,1), got {t}")
        tb = scale_fn(t)
        H = c_grid + t * h_fn
        if hb is not None:
            H = H + tb * hb.assemble(c, grid)
        region = region_fn(t)
        valid = is_valid_cdf(H)
        if valid:
            quotient = (copula_map(H) - c_grid) * (1.0 / t)
            err = sup_diff(quotient, target, region)
        else:
            err = float("inf")
        rows.append(QuotientRow(t, err, region.lower, region.upper, valid))
    return rows


def _quotient_table(c, h: PerturbationA, hb, params, t_sequence,
                    m: int, region_fn, scale_fn) -> ConvergenceTable:
    if len(t_sequence) < 2:
        raise ValueError("need at least two step sizes")
    t_sequence = sorted(t_sequence, reverse=True)
    grid = h.h.grid
    if grid.m != m:
        raise ValueError("perturbation grid does not match requested resolution")
    rows = _quotient_rows(c, h.h, hb, params, t_sequence, grid,
                          region_fn, scale_fn)
    # Discretization floor, per step: rerun on a doubled grid.  The lattice
    # contribution scales like the grid step, so the coarse floor is about
    # twice the coarse-minus-fine difference.
    fine = Grid(grid.d, 2 * (grid.m - 1) + 1)
    h_fine = GridFunction.from_callable(fine, h.h)
    fine_rows = _quotient_rows(c, h_fine, hb, params, t_sequence, fine,
                               region_fn, scale_fn)
    floors = []
    for coarse_row, fine_row in zip(rows, fine_rows):
        both = np.isfinite(coarse_row.sup_error) and np.isfinite(
            fine_row.sup_error
        )
        gap = 2.0 * abs(coarse_row.sup_error - fine_row.sup_error) if both else 0.0
        floors.append(max(gap, 1e-12))
    floors = tuple(floors)
    return ConvergenceTable(tuple(rows), floors, _judge(rows, floors))


def verify_theorem_1(c: CopulaModel, h: PerturbationA,
                     hb: PerturbationB | None, t_sequence,
                     m: int = 101) -> ConvergenceTable:
    """Full-cube difference quotient of the copula map at C.

    For each step t the perturbed cdf is C + t (h + hb); the quotient
    (Phi(C + t(h + hb)) - C) / t is compared in sup norm against the
    derivative applied to h alone: the margin-wise part hb is transparent
    to the derivative in the limit.
    """
    full = Region(0.0, 1.0)
    return _quotient_table(
        c, h, hb, None, t_sequence, m,
        region_fn=lambda t: full, scale_fn=lambda t: t,
    )


def verify_theorem_2(c: CopulaModel, h: PerturbationA,
                     hb: PerturbationBAlpha | None, params: RateParams,
                     t_sequence, m: int = 101) -> ConvergenceTable:
    """Difference quotient on the shrinking boxes [eps t^vartheta, ...]^d.

    The margin-wise part enters at the slower scale t_tilde(t) and its
    weighted-corner bound is enforced at every step.
    """
    if hb is not None:
        for t in t_sequence:
            if not hb.check_weighted_bound(t):
                raise ValueError(f"weighted corner bound fails at t = {t}")

    def region_fn(t):
        lo = params.epsilon * t ** params.vartheta
        if lo >= 0.5:
            raise ValueError(f"empty shrunk region at t = {t}")
        return Region(lo, 1.0 - lo)

    return _quotient_table(
        c, h, hb, params, t_sequence, m,
        region_fn=region_fn, scale_fn=params.t_tilde,
    )


def derivative_kills_B(c: CopulaModel, hb: PerturbationB,
                       m: int = 101) -> float:
    """Sup of |derivative applied to the assembled margin-wise perturbation|.

    When every component vanishes at 1 the cross terms cancel exactly and
    the sup is zero up to floating point.
    """
    grid = Grid(c.d, m)
    assembled = hb.assemble(c, grid)
    return hadamard_derivative(c, assembled).sup_norm()


# ---------------------------------------------------------------------------
# Univariate quantile-perturbation checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileLemmaRow:
    t: float
    sup_xi_minus_u: float
    sup_linearization: float
    sandwich_holds: bool
    valid_cdf: bool


@dataclass(frozen=True)
class QuantileLemmaReport:
    rows: tuple
    passed: bool

    def to_csv_lines(self):
        yield "# schema=1"
        yield "t,sup_xi_minus_u,sup_linearization,sandwich_flag,valid_cdf_flag"
        for r in self.rows:
            yield (
                f"{r.t!r},{r.sup_xi_minus_u!r},{r.sup_linearization!r},"
                f"{int(r.sandwich_holds)},{int(r.valid_cdf)}"
            )


def verify_quantile_lemma(h, hb, params: RateParams, t_sequence,
                          points: int = 10001) -> QuantileLemmaReport:
    """Checks on xi_t = (id + t h + t_tilde hb)^{-1} on a fine lattice.

    Per step: (i) sup |xi(u) - u|; (ii) sup of the linearization residual
    (xi(u) - u)/t + h(u) + (t_tilde/t) hb(xi(u)); (iii) the sandwich
    u/2 <= xi(u) <= 2u on [eps t^vartheta, 1/2] and its mirror image near 1.
    Passing requires both sup columns to decrease and the sandwich to hold
    whenever the perturbed function is a valid cdf.
    """
    if len(t_sequence) < 2:
        raise ValueError("need at least two step sizes")
    t_sequence = sorted(t_sequence, reverse=True)
    x = np.linspace(0.0, 1.0, points)
    hx = np.asarray(h(x), dtype=float)
    bx = np.asarray(hb(x), dtype=float)
    rows = []
    for t in t_sequence:
        tb = params.t_tilde(t)
        g = x + t * hx + tb * bx
        valid = (
            abs(g[0]) <= _BOUNDARY_TOL
            and abs(g[-1] - 1.0) <= _BOUNDARY_TOL
            and np.all(np.diff(g) >= -_RECT_TOL)
        )
        if not valid:
            rows.append(QuantileLemmaRow(t, np.inf, np.inf, False, False))
            continue
        g = np.maximum.accumulate(np.clip(g, 0.0, 1.0))
        xi = _piecewise_linear_inverse(x, g, x)
        dev = float(np.max(np.abs(xi - x)))
        resid = (xi - x) / t + hx + (tb / t) * np.asarray(hb(xi), dtype=float)
        lin = float(np.max(np.abs(resid)))
        lo = params.epsilon * t ** params.vartheta
        left = (x >= lo) & (x <= 0.5)
        right = (x >= 0.5) & (x <= 1.0 - lo)
        sandwich = bool(
            np.all(xi[left] >= x[left] / 2.0)
            and np.all(xi[left] <= 2.0 * x[left])
            and np.all(1.0 - xi[right] >= (1.0 - x[right]) / 2.0)
            and np.all(1.0 - xi[right] <= 2.0 * (1.0 - x[right]))
        )
        rows.append(QuantileLemmaRow(t, dev, lin, sandwich, True))
    passed = all(r.valid_cdf and r.sandwich_holds for r in rows)
    # Columns must decrease until they sit at the fine-lattice noise floor
    # (piecewise-linear inversion error is quadratic in the lattice step and
    # the quotient divides by t).
    noise = 100.0 * (1.0 / (points - 1)) ** 2 / min(t_sequence)
    for prev, cur in zip(rows, rows[1:]):
        if cur.sup_xi_minus_u > max(prev.sup_xi_minus_u + 1e-12, noise):
            passed = False
        if cur.sup_linearization > max(prev.sup_linearization + 1e-12, noise):
            passed = False
    return QuantileLemmaReport(tuple(rows), passed)
