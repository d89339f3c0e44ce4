import itertools
from enum import Enum
from fractions import Fraction

import numpy as np
import pandas as pd
from PIL import Image
from scipy import stats

from kernels import (
    HelperUtils,
    InsufficientSamples,
    OddWidthPeriodic,
    PcaError,
    ProbVector,
    StateSpaceTooLarge,
    TransitionKernel,
    check_same_alphabet,
)
from invariance import HzmcSpec
from marginals import ZigzagPolyline

MIN_EXPECTED_COUNT = 5
DEFAULT_STATE_LIMIT = 2_000_000


def row_generator(seed: int, t: int) -> np.random.Generator:
    """Counter-based stream for time step t; rows never share a stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(t)])))


def cell_uniforms(seed: int, t: int, width: int) -> np.ndarray:
    """One uniform per column of row t: column i reads counter i of the (seed, t)
    stream, whatever the width or the order cells are updated in."""
    return row_generator(seed, t).random(int(width))


def boundary_generator(seed: int, t: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(t), 1])))


class SpaceTimeWindow:
    """eta_t(i) for 0 <= t < H, 0 <= i < W on the sites with i + t even.

    `cells[t, i]` is -1 on the other parity."""

    def __init__(self, cells: np.ndarray, n: int, seed: int = None, kernel_digest: str = None):
        self.cells = cells
        self.n = n
        self.seed = seed
        self.kernel_digest = kernel_digest

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def populated(self, t: int, i: int) -> bool:
        return (i + t) % 2 == 0

    def row(self, t: int) -> np.ndarray:
        return self.cells[t, t % 2::2]

    def values_at(self, points) -> np.ndarray:
        return np.array([self.cells[t, x] for x, t in points], dtype=int)

    def density(self, s: int) -> float:
        populated = self.cells[self.cells >= 0]
        return float(np.mean(populated == s))

    def __eq__(self, other):
        if isinstance(other, SpaceTimeWindow):
            return self.n == other.n and np.array_equal(self.cells, other.cells)
        return NotImplemented


class BoundaryPolicy:
    """Symbols read by edge cells whose west or east neighbour lies outside."""

    name = "boundary"

    def check_width(self, width: int):
        pass

    def edges(self, rng: np.random.Generator) -> tuple:
        raise NotImplementedError


class Periodic(BoundaryPolicy):
    name = "periodic"

    def check_width(self, width: int):
        if width % 2:
            raise OddWidthPeriodic(HelperUtils().odd_width_periodic_err(width))

    def edges(self, rng):
        return None


class IidP(BoundaryPolicy):
    """Fresh B(p) symbols on both edges at every step."""

    name = "iid"

    def __init__(self, p: ProbVector):
        self.p = p
        self.weights = p.as_floats()

    def edges(self, rng):
        left, right = rng.choice(self.p.n, size=2, p=self.weights)
        return int(left), int(right)


class Fixed(BoundaryPolicy):
    name = "fixed"

    def __init__(self, left: int, right: int):
        self.left = int(left)
        self.right = int(right)

    def edges(self, rng):
        return self.left, self.right


class InitPolicy:
    """Generates the two seed rows (eta_0, eta_1)."""

    def rows(self, n: int, width: int, seed: int) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def blank(width: int) -> np.ndarray:
        return np.full((2, width), -1, dtype=int)


class Hzpm(InitPolicy):
    def __init__(self, p: ProbVector):
        self.p = p

    def rows(self, n, width, seed):
        cells = self.blank(width)
        cdf = np.cumsum(self.p.as_array()).astype(np.float64)
        cdf[-1] = 1.0
        for t in (0, 1):
            idx = np.arange(t, width, 2)
            cells[t, idx] = np.searchsorted(cdf, cell_uniforms(seed, t, width)[idx], side="right")
        return cells


class Hzmc(InitPolicy):
    """Horizontal zigzag (i, i mod 2) drawn as rho, then F on up-steps and B on down-steps."""

    def __init__(self, spec: HzmcSpec):
        self.spec = spec

    def rows(self, n, width, seed):
        cells = self.blank(width)
        rng = row_generator(seed, 0)
        f, b = self.spec.f.as_floats(), self.spec.b.as_floats()
        value = int(rng.choice(n, p=self.spec.rho.as_floats()))
        cells[0, 0] = value
        for i in range(1, width):
            matrix = f if i % 2 else b
            value = int(rng.choice(n, p=matrix[value]))
            cells[i % 2, i] = value
        return cells


class Constant(InitPolicy):
    def __init__(self, s: int):
        self.s = int(s)

    def rows(self, n, width, seed):
        if not 0 <= self.s < n:
            raise PcaError(f"constant state {self.s} is outside the alphabet 0..{n - 1}")
        cells = self.blank(width)
        for t in (0, 1):
            cells[t, t::2] = self.s
        return cells


class Explicit(InitPolicy):
    """Two full rows of length W; entries on the unpopulated parity are ignored."""

    def __init__(self, rows):
        self.values = [list(row) for row in rows]

    def rows(self, n, width, seed):
        if len(self.values) != 2 or any(len(row) != width for row in self.values):
            raise PcaError(HelperUtils().shape_err((2, width), [len(row) for row in self.values]))
        cells = self.blank(width)
        for t in (0, 1):
            for i in range(t, width, 2):
                s = int(self.values[t][i])
                if not 0 <= s < n:
                    raise PcaError(f"state {s} at {(i, t)} is outside the alphabet 0..{n - 1}")
                cells[t, i] = s
        return cells


class DiagramSampler:
    """Monte Carlo space-time diagram of a memory-two PCA on a finite window.

    Every cell of row t draws from T(eta_{t-1}(i-1), eta_{t-2}(i), eta_{t-1}(i+1); .)
    using the uniform of its own column from cell_uniforms(seed, t, W). The
    boundary values of row t come from the separate stream (seed, t, 1)."""

    def __init__(
        self,
        kernel: TransitionKernel,
        init: InitPolicy,
        boundary: BoundaryPolicy,
        width: int,
        height: int,
        seed: int,
        troubleshoot: bool = False,
    ):
        if width < 2 or height < 2:
            raise PcaError(HelperUtils().shape_err("width and height of at least 2", (width, height)))
        boundary.check_width(width)
        self.kernel = kernel
        self.init = init
        self.boundary = boundary
        self.width = int(width)
        self.height = int(height)
        self.seed = int(seed)
        self.troubleshoot = troubleshoot

    def apply(self) -> SpaceTimeWindow:
        n, width = self.kernel.n, self.width
        if self.troubleshoot:
            print(f"Sampling {self.kernel} on {width}x{self.height}, boundary {self.boundary.name}, seed {self.seed}")
        cells = np.full((self.height, width), -1, dtype=int)
        cells[:2] = self.init.rows(n, width, self.seed)
        cdf = self.kernel.cumulative()
        periodic = isinstance(self.boundary, Periodic)
        for t in range(2, self.height):
            idx = np.arange(t % 2, width, 2)
            u = cell_uniforms(self.seed, t, width)[idx]
            prev = cells[t - 1]
            if periodic:
                west = prev[(idx - 1) % width]
                east = prev[(idx + 1) % width]
            else:
                left, right = self.boundary.edges(boundary_generator(self.seed, t))
                west = np.where(idx - 1 >= 0, prev[np.clip(idx - 1, 0, width - 1)], left)
                east = np.where(idx + 1 < width, prev[np.clip(idx + 1, 0, width - 1)], right)
            south = cells[t - 2, idx]
            rows = cdf[west, south, east]
            drawn = (u[:, None] >= rows).sum(axis=1)
            cells[t, idx] = np.minimum(drawn, n - 1)
            if self.troubleshoot and t % 100 == 0:
                print(f"row {t}: density of 0 is {np.mean(cells[t, idx] == 0):.4f}")
        return SpaceTimeWindow(cells, n, seed=self.seed, kernel_digest=self.kernel.digest())


def sample_diagram(t: TransitionKernel, init: InitPolicy, boundary: BoundaryPolicy,
                   width: int, height: int, seed: int, troubleshoot: bool = False) -> SpaceTimeWindow:
    return DiagramSampler(t, init, boundary, width, height, seed, troubleshoot).apply()


class ErgodicityChain:
    """Exact Markov chain of a half-width-k zigzag with i.i.d. p boundary.

    State (a_0..a_k, b_1..b_k): a_i at (2i, s), b_i at (2i-1, s+1). One step
    replaces every a_i by T(b_i, a_i, b_{i+1}; .) with b_0, b_{k+1} drawn from p,
    then every b_i by T(a_{i-1}, b_i, a_i; .)."""

    def __init__(self, kernel: TransitionKernel, p: ProbVector, half_width: int,
                 state_limit: int = DEFAULT_STATE_LIMIT, troubleshoot: bool = False):
        check_same_alphabet(kernel, p)
        kernel.require_positive_rates()
        self.kernel = kernel
        self.p = p
        self.k = int(half_width)
        self.cells = 2 * self.k + 1
        states = kernel.n ** self.cells
        if states > state_limit:
            raise StateSpaceTooLarge(HelperUtils().state_space_too_large_err(states, state_limit))
        self.troubleshoot = troubleshoot

    def a_axis(self, i: int) -> int:
        return i

    def b_axis(self, i: int) -> int:
        return self.k + i

    def point_mass(self, state=None) -> np.ndarray:
        law = np.full((self.kernel.n,) * self.cells, Fraction(0), dtype=object)
        law[tuple(state) if state is not None else (0,) * self.cells] = Fraction(1)
        return law

    def product_law(self) -> np.ndarray:
        law = np.empty((self.kernel.n,) * self.cells, dtype=object)
        for key in itertools.product(range(self.kernel.n), repeat=self.cells):
            value = Fraction(1)
            for s in key:
                value *= self.p[s]
            law[key] = value
        return law

    def _weight(self, w, x, e, y) -> Fraction:
        n, t = self.kernel.n, self.kernel
        wests = range(n) if w is None else [w]
        easts = range(n) if e is None else [e]
        total = Fraction(0)
        for ww in wests:
            for ee in easts:
                mass = (self.p[ww] if w is None else 1) * (self.p[ee] if e is None else 1)
                total += mass * t[ww, x, ee, y]
        return total

    def _update(self, law: np.ndarray, axis: int, west, east) -> np.ndarray:
        n = self.kernel.n
        new = np.full(law.shape, Fraction(0), dtype=object)
        for w in (range(n) if west is not None else [None]):
            for e in (range(n) if east is not None else [None]):
                for y in range(n):
                    dst = [slice(None)] * law.ndim
                    if west is not None:
                        dst[west] = w
                    if east is not None:
                        dst[east] = e
                    dst[axis] = y
                    total = None
                    for x in range(n):
                        src = list(dst)
                        src[axis] = x
                        term = law[tuple(src)] * self._weight(w, x, e, y)
                        total = term if total is None else total + term
                    new[tuple(dst)] = total
        return new

    def step(self, law: np.ndarray) -> np.ndarray:
        k = self.k
        for i in range(k + 1):
            west = self.b_axis(i) if i >= 1 else None
            east = self.b_axis(i + 1) if i + 1 <= k else None
            law = self._update(law, self.a_axis(i), west, east)
        for i in range(1, k + 1):
            law = self._update(law, self.b_axis(i), self.a_axis(i - 1), self.a_axis(i))
        return law

    def theta(self) -> Fraction:
        return 1 - self.kernel.min_entry ** self.cells

    def apply(self, t_max: int, start=None) -> pd.DataFrame:
        theta = self.theta()
        left, right = self.point_mass(start), self.product_law()
        records = []
        for t in range(t_max + 1):
            if t > 0:
                left, right = self.step(left), self.step(right)
            distance = sum(abs(x - y) for x, y in zip(left.flat, right.flat))
            bound = 2 * theta ** t
            records.append({"t": t, "distance": distance, "bound": bound, "within_bound": distance <= bound})
            if self.troubleshoot:
                print(f"t={t} distance={float(distance):.6g} bound={float(bound):.6g}")
        return pd.DataFrame(records)


def ergodicity_tv(t: TransitionKernel, p: ProbVector, half_width: int, t_max: int,
                  state_limit: int = DEFAULT_STATE_LIMIT) -> pd.DataFrame:
    """L1 distance between the laws started from all-0 and from pi_p, with the bound 2 theta^t."""
    return ErgodicityChain(t, p, half_width, state_limit).apply(t_max)


class LineKind(Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    SLOPED = "sloped"
    ZIGZAG = "zigzag"
    VERTICAL_ZIGZAG = "vertical-zigzag"


class LineSpec:
    def __init__(self, kind: LineKind, **params):
        self.kind = kind
        self.params = params

    @classmethod
    def horizontal(cls, t: int) -> "LineSpec":
        return cls(LineKind.HORIZONTAL, t=int(t))

    @classmethod
    def vertical(cls, i: int) -> "LineSpec":
        return cls(LineKind.VERTICAL, i=int(i))

    @classmethod
    def sloped(cls, dx: int, dt: int, x0: int = 0, t0: int = 0) -> "LineSpec":
        if (dx + dt) % 2 or (x0 + t0) % 2 or dt < 0 or (dx, dt) == (0, 0):
            raise PcaError(f"sloped line ({dx},{dt}) from {(x0, t0)} leaves the even lattice")
        return cls(LineKind.SLOPED, dx=int(dx), dt=int(dt), x0=int(x0), t0=int(t0))

    @classmethod
    def zigzag(cls, times, x0: int = 0) -> "LineSpec":
        polyline = ZigzagPolyline.from_times(times, x0)
        return cls(LineKind.ZIGZAG, points=polyline.points)

    @classmethod
    def vertical_zigzag(cls, i: int, t0: int = 0) -> "LineSpec":
        return cls(LineKind.VERTICAL_ZIGZAG, i=int(i), t0=int(t0))

    def points(self, width: int, height: int) -> list:
        kind, q = self.kind, self.params
        if kind is LineKind.HORIZONTAL:
            points = [(x, q["t"]) for x in range(q["t"] % 2, width, 2)]
        elif kind is LineKind.VERTICAL:
            points = [(q["i"], t) for t in range(q["i"] % 2, height, 2)]
        elif kind is LineKind.SLOPED:
            points = []
            x, t = q["x0"], q["t0"]
            while 0 <= x < width and t < height:
                points.append((x, t))
                x, t = x + q["dx"], t + q["dt"]
        elif kind is LineKind.ZIGZAG:
            points = list(q["points"])
        else:
            points = [(q["i"] + k % 2, q["t0"] + k) for k in range(height - q["t0"])]
        for x, t in points:
            if not (0 <= x < width and 0 <= t < height) or (x + t) % 2:
                raise PcaError(f"line point {(x, t)} is not a populated site of the window")
        return points

    def __str__(self):
        if self.kind is LineKind.ZIGZAG:
            return f"zigzag(len={len(self.params['points'])})"
        inner = ",".join(f"{key}={value}" for key, value in self.params.items())
        return f"{self.kind.value}({inner})"


def _require_counts(expected: np.ndarray):
    smallest = float(np.min(expected))
    if smallest < MIN_EXPECTED_COUNT:
        raise InsufficientSamples(HelperUtils().insufficient_samples_err(smallest, MIN_EXPECTED_COUNT))


def _blocks(sequences, size: int) -> np.ndarray:
    rows = []
    for seq in sequences:
        for start in range(0, len(seq) - size + 1, size):
            rows.append(seq[start:start + size])
    return np.array(rows, dtype=int).reshape(-1, size)


def _product_weights(p: ProbVector, size: int) -> np.ndarray:
    weights = p.as_floats()
    out = np.ones(1)
    for _ in range(size):
        out = np.multiply.outer(out, weights).ravel()
    return out


class LineIidTest:
    """Chi-square tests that the cells along a line are i.i.d. p.

    Order 1: goodness of fit of single cells. Order 2 adds independence of
    disjoint adjacent pairs. Order 3 adds goodness of fit of disjoint triples
    against p x p x p."""

    def __init__(self, line: LineSpec, p: ProbVector, significance: float = 0.01,
                 order: int = 2, troubleshoot: bool = False):
        if not 1 <= order <= 3:
            raise PcaError(f"line test order {order} is not one of 1, 2, 3")
        self.line = line
        self.p = p
        self.significance = significance
        self.order = order
        self.troubleshoot = troubleshoot

    def sequences(self, windows) -> list:
        out = []
        for window in windows:
            points = self.line.points(window.width, window.height)
            out.append(window.values_at(points))
        return out

    def single(self, sequences) -> dict:
        n = self.p.n
        values = np.concatenate(sequences)
        observed = np.bincount(values, minlength=n)
        expected = len(values) * self.p.as_floats()
        _require_counts(expected)
        result = stats.chisquare(observed, expected)
        return self._record("single", len(values), result.statistic, n - 1, result.pvalue)

    def pairs(self, sequences) -> dict:
        n = self.p.n
        blocks = _blocks(sequences, 2)
        table = np.zeros((n, n), dtype=int)
        np.add.at(table, (blocks[:, 0], blocks[:, 1]), 1)
        expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / max(len(blocks), 1)
        _require_counts(expected)
        statistic, pvalue, dof, _ = stats.chi2_contingency(table, correction=False)
        return self._record("pairs", len(blocks), statistic, dof, pvalue)

    def triples(self, sequences) -> dict:
        n = self.p.n
        blocks = _blocks(sequences, 3)
        codes = blocks[:, 0] * n * n + blocks[:, 1] * n + blocks[:, 2]
        observed = np.bincount(codes, minlength=n ** 3)
        expected = len(blocks) * _product_weights(self.p, 3)
        _require_counts(expected)
        result = stats.chisquare(observed, expected)
        return self._record("triples", len(blocks), result.statistic, n ** 3 - 1, result.pvalue)

    def _record(self, test, samples, statistic, dof, pvalue) -> dict:
        record = {
            "line": str(self.line),
            "test": test,
            "samples": int(samples),
            "statistic": float(statistic),
            "dof": int(dof),
            "p_value": float(pvalue),
            "passed": bool(pvalue >= self.significance),
        }
        if self.troubleshoot:
            print(record)
        return record

    def apply(self, windows) -> pd.DataFrame:
        if isinstance(windows, SpaceTimeWindow):
            windows = [windows]
        sequences = self.sequences(windows)
        records = [self.single(sequences)]
        if self.order >= 2:
            records.append(self.pairs(sequences))
        if self.order >= 3:
            records.append(self.triples(sequences))
        return pd.DataFrame(records)


def line_iid_test(windows, line: LineSpec, p: ProbVector, significance: float = 0.01,
                  order: int = 2) -> pd.DataFrame:
    return LineIidTest(line, p, significance, order).apply(windows)


def line_batch_report(windows, lines, p: ProbVector, significance: float = 0.01,
                      order: int = 2) -> pd.DataFrame:
    """All line tests in one table, each judged at the Bonferroni level significance / tests."""
    frames = [LineIidTest(line, p, significance, order).apply(windows) for line in lines]
    df = pd.concat(frames, ignore_index=True)
    level = significance / len(df)
    df["bonferroni_level"] = level
    df["passed"] = df["p_value"] >= level
    return df


def gray_levels(window: SpaceTimeWindow) -> np.ndarray:
    """floor(255 s / (n-1)) per populated cell, unpopulated cells the mean of
    their horizontal neighbours, latest time on the top row."""
    if window.n > 256:
        raise PcaError(f"alphabet of size {window.n} does not fit 8-bit gray levels")
    cells = window.cells
    top = max(window.n - 1, 1)
    gray = np.where(cells >= 0, (255 * np.maximum(cells, 0)) // top, 0)
    out = gray.copy()
    height, width = cells.shape
    for t in range(height):
        for i in range(width):
            if cells[t, i] >= 0:
                continue
            around = [gray[t, j] for j in (i - 1, i + 1) if 0 <= j < width and cells[t, j] >= 0]
            out[t, i] = sum(around) // len(around) if around else 0
    return out[::-1].astype(np.uint8)


def render_pgm(window: SpaceTimeWindow, path: str) -> str:
    """Binary PGM (P5), one pixel per lattice site."""
    Image.fromarray(gray_levels(window)).save(path, format="PPM")
    return path
