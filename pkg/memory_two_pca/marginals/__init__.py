import itertools
from fractions import Fraction

import numpy as np

from kernels import (
    DihedralElement,
    FiniteDistribution,
    HelperUtils,
    InternalDisagreement,
    InvalidPolyline,
    PcaError,
    PreconditionFailed,
    ProbVector,
    TransitionKernel,
)
from invariance import ConditionId, HzmcSpec, check_condition
from reversibility import require_triang, reverse_formula


class DiamondPattern:
    """Values a_{i,j}, 0 <= i,j <= m, of the cells x + i(-1,1) + j(1,1)."""

    def __init__(self, m: int, values):
        helper = HelperUtils()
        if isinstance(values, dict):
            grid = {(int(i), int(j)): int(s) for (i, j), s in values.items()}
        else:
            rows = [list(row) for row in values]
            grid = {(i, j): int(s) for i, row in enumerate(rows) for j, s in enumerate(row)}
        expected = {(i, j) for i in range(m + 1) for j in range(m + 1)}
        if set(grid) != expected:
            raise PcaError(helper.shape_err(f"{(m + 1) ** 2} cells a_(i,j)", len(grid)))
        self.m = m
        self.values = grid

    def __getitem__(self, ij):
        return self.values[ij]

    def check_alphabet(self, n: int):
        for ij, s in self.values.items():
            if not 0 <= s < n:
                raise PcaError(f"value {s} of cell {ij} is outside the alphabet 0..{n - 1}")


def diamond_probability(t: TransitionKernel, p: ProbVector, pattern: DiamondPattern) -> Fraction:
    require_triang(t, p)
    pattern.check_alphabet(t.n)
    a, m = pattern, pattern.m
    value = Fraction(1)
    for i in range(m + 1):
        value *= p[a[i, 0]]
    for j in range(1, m + 1):
        value *= p[a[0, j]]
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            value *= t[a[i, j - 1], a[i - 1, j - 1], a[i - 1, j], a[i, j]]
    return value


def flipped_diamond_probability(t: TransitionKernel, p: ProbVector, pattern: DiamondPattern) -> Fraction:
    """Same probability written with the r-reverse, boundary a_{i,0} and a_{m,j}."""
    require_triang(t, p)
    if not check_condition(t, p, ConditionId.R):
        raise PreconditionFailed(HelperUtils().precondition_err("the flipped form", ConditionId.R.label))
    pattern.check_alphabet(t.n)
    t_r = reverse_formula(t, p, DihedralElement.R)
    a, m = pattern, pattern.m
    value = Fraction(1)
    for i in range(m + 1):
        value *= p[a[i, 0]]
    for j in range(1, m + 1):
        value *= p[a[m, j]]
    for i in range(m):
        for j in range(1, m + 1):
            value *= t_r[a[i + 1, j], a[i + 1, j - 1], a[i, j - 1], a[i, j]]
    return value


class Factor:
    """Object-array factor over a tuple of variables, one axis per variable."""

    def __init__(self, scope: tuple, table: np.ndarray):
        self.scope = tuple(scope)
        self.table = table

    def aligned(self, scope: tuple) -> np.ndarray:
        sizes = dict(zip(self.scope, self.table.shape))
        order = [self.scope.index(v) for v in scope if v in sizes]
        table = np.transpose(self.table, order) if order else self.table
        return table.reshape([sizes.get(v, 1) for v in scope])

    def multiply(self, other: "Factor") -> "Factor":
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        return Factor(scope, self.aligned(scope) * other.aligned(scope))

    def sum_out(self, var) -> "Factor":
        axis = self.scope.index(var)
        scope = self.scope[:axis] + self.scope[axis + 1:]
        return Factor(scope, np.asarray(self.table.sum(axis=axis), dtype=object))


def _kernel_factor(t: TransitionKernel, scope: tuple) -> Factor:
    return Factor(scope, t.table.copy())


def _vector_factor(p: ProbVector, var) -> Factor:
    return Factor((var,), p.as_array())


def direct_factors(t: TransitionKernel, p: ProbVector, m: int) -> list:
    """(output cell, factor) pairs of the product form with boundary a_{i,0}, a_{0,j}."""
    factors = []
    for i in range(m + 1):
        factors.append(((i, 0), _vector_factor(p, (i, 0))))
    for j in range(1, m + 1):
        factors.append(((0, j), _vector_factor(p, (0, j))))
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            scope = ((i, j - 1), (i - 1, j - 1), (i - 1, j), (i, j))
            factors.append(((i, j), _kernel_factor(t, scope)))
    return factors


def flipped_factors(t: TransitionKernel, p: ProbVector, m: int) -> list:
    t_r = reverse_formula(t, p, DihedralElement.R)
    factors = []
    for i in range(m + 1):
        factors.append(((i, 0), _vector_factor(p, (i, 0))))
    for j in range(1, m + 1):
        factors.append(((m, j), _vector_factor(p, (m, j))))
    for i in range(m):
        for j in range(1, m + 1):
            scope = ((i + 1, j), (i + 1, j - 1), (i, j - 1), (i, j))
            factors.append(((i, j), _kernel_factor(t_r, scope)))
    return factors


def eliminate(factors: list, keep: list, n: int) -> FiniteDistribution:
    """Exact marginal on `keep` of the product of (output, factor) pairs.

    A factor whose output variable is summed out and read by no other
    factor sums to one and is dropped before elimination."""
    keep = list(keep)
    pending = list(factors)
    changed = True
    while changed:
        changed = False
        for entry in pending:
            out, factor = entry
            if out in keep:
                continue
            if any(out in f.scope for o, f in pending if f is not factor):
                continue
            pending.remove(entry)
            changed = True
            break
    active = [f for _, f in pending]
    variables = {v for f in active for v in f.scope} - set(keep)
    while variables:
        def cost(v):
            return len({u for f in active if v in f.scope for u in f.scope})

        var = min(sorted(variables), key=cost)
        touching = [f for f in active if var in f.scope]
        active = [f for f in active if var not in f.scope]
        product = touching[0]
        for f in touching[1:]:
            product = product.multiply(f)
        active.append(product.sum_out(var))
        variables.discard(var)
    result = Factor((), np.array(Fraction(1), dtype=object))
    for f in active:
        result = result.multiply(f)
    missing = [v for v in keep if v not in result.scope]
    if missing:
        raise PcaError(f"cells {missing} are not part of the pattern")
    table = result.aligned(tuple(keep))
    probs = {}
    for key in itertools.product(range(n), repeat=len(keep)):
        probs[key] = table[key]
    return FiniteDistribution(probs, keep)


def pattern_marginal(t: TransitionKernel, p: ProbVector, m: int, cells) -> FiniteDistribution:
    require_triang(t, p)
    cells = [tuple(c) for c in cells]
    for i, j in cells:
        if not (0 <= i <= m and 0 <= j <= m):
            raise PcaError(f"cell {(i, j)} is outside the depth-{m} diamond")
    return eliminate(direct_factors(t, p, m), cells, t.n)


def rotated_cells(m: int) -> list:
    """a_{i,i} and a_{i+1,i} in row-major order: the vertical zigzag
    (x,t), (x-1,t+1), (x,t+2), ..."""
    cells = []
    for i in range(m + 1):
        cells.append((i, i))
        if i < m:
            cells.append((i + 1, i))
    return sorted(cells)


def rotated_marginal(t: TransitionKernel, p: ProbVector, m: int) -> FiniteDistribution:
    """Marginal of the rotated measure on two adjacent lines, by the direct
    and the flipped products; they must agree exactly."""
    require_triang(t, p)
    if not check_condition(t, p, ConditionId.R):
        raise PreconditionFailed(HelperUtils().precondition_err("the rotated marginal", ConditionId.R.label))
    cells = rotated_cells(m)
    direct = eliminate(direct_factors(t, p, m), cells, t.n)
    flipped = eliminate(flipped_factors(t, p, m), cells, t.n)
    where = direct.first_difference(flipped)
    if where is not None:
        raise InternalDisagreement(
            HelperUtils().internal_disagreement_err("direct and flipped marginals", where)
        )
    return direct


def cells_for_points(points) -> tuple:
    """Place lattice points (x, t) with x+t even inside the smallest diamond.
    Returns (m, cells)."""
    points = [tuple(pt) for pt in points]
    for x, t in points:
        if (x + t) % 2:
            raise PcaError(f"point {(x, t)} is not on the even lattice")
    u0 = min(t - x for x, t in points)
    w0 = min(t + x for x, t in points)
    cells = [((t - x - u0) // 2, (t + x - w0) // 2) for x, t in points]
    m = max(max(i, j) for i, j in cells)
    return m, cells


def points_marginal(t: TransitionKernel, p: ProbVector, points) -> FiniteDistribution:
    """Exact stationary law of the cells at the given lattice points."""
    m, cells = cells_for_points(points)
    dist = pattern_marginal(t, p, m, cells)
    return FiniteDistribution(dist.probs, [tuple(pt) for pt in points], check=False)


class ZigzagPolyline:
    """Points (x, t) with x increasing by one and t changing by one each step."""

    def __init__(self, points):
        points = [tuple(int(v) for v in pt) for pt in points]
        for k in range(1, len(points)):
            (x0, t0), (x1, t1) = points[k - 1], points[k]
            if x1 != x0 + 1 or abs(t1 - t0) != 1:
                raise InvalidPolyline(HelperUtils().invalid_polyline_err(k))
        if not points:
            raise InvalidPolyline(HelperUtils().invalid_polyline_err(0))
        self.points = points

    @classmethod
    def from_times(cls, times, x0: int = 0) -> "ZigzagPolyline":
        return cls([(x0 + k, t) for k, t in enumerate(times)])

    @classmethod
    def horizontal(cls, length: int) -> "ZigzagPolyline":
        return cls.from_times([k % 2 for k in range(length)])

    def __len__(self):
        return len(self.points)


def zigzag_marginal(t: TransitionKernel, p: ProbVector, polyline: ZigzagPolyline) -> FiniteDistribution:
    return points_marginal(t, p, polyline.points)


def line_marginal(t: TransitionKernel, p: ProbVector, dx: int, dt: int, length: int) -> FiniteDistribution:
    """Stationary law of `length` cells spaced by (dx, dt) along a straight line."""
    return points_marginal(t, p, [(k * dx, k * dt) for k in range(length)])


def hzmc_polyline_probability(spec: HzmcSpec, polyline: ZigzagPolyline, values) -> Fraction:
    """rho(a_0) times F for every up-step and B for every down-step."""
    values = list(values)
    if len(values) != len(polyline):
        raise PcaError(HelperUtils().shape_err(len(polyline), len(values)))
    value = spec.rho[values[0]]
    for k in range(1, len(values)):
        up = polyline.points[k][1] > polyline.points[k - 1][1]
        matrix = spec.f if up else spec.b
        value *= matrix[values[k - 1], values[k]]
    return value


def non_product_witness(dist: FiniteDistribution, max_size: int = 3):
    """First (cells, assignment, joint, product) where a joint probability
    differs from the product of its one-cell marginals, pairs before triples."""
    width = len(dist.labels)
    singles = [dist.marginal([k]) for k in range(width)]
    n = max(max(key) for key in dist.probs) + 1 if dist.probs else 1
    for size in range(2, max_size + 1):
        for positions in itertools.combinations(range(width), size):
            joint = dist.marginal(positions)
            for key in itertools.product(range(n), repeat=size):
                product = Fraction(1)
                for pos, s in zip(positions, key):
                    product *= singles[pos][(s,)]
                if joint[key] != product:
                    labels = tuple(dist.labels[pos] for pos in positions)
                    return labels, key, joint[key], product
    return None

