import math
from enum import Enum
from fractions import Fraction

import numpy as np
import pandas as pd

from kernels import (
    ConstraintViolated,
    Divergent,
    HelperUtils,
    InternalDisagreement,
    NotPositive,
    OutOfDomain,
    ParamOutOfRange,
    PcaError,
    TransitionKernel,
    kernel_from_function,
    prob_vector_new,
)
from invariance import ConditionId, check_condition
from simulator import Constant, Periodic, SpaceTimeWindow, row_generator, sample_diagram


class VertexWeights:
    """8-vertex weights w1=w2=a, w3=w4=b, w5=w6=c, w7=w8=d."""

    def __init__(self, a, b, c, d, constrained: bool = True):
        helper = HelperUtils()
        self.a, self.b, self.c, self.d = (helper.to_scalar(w) for w in (a, b, c, d))
        for name, w in zip("abcd", (self.a, self.b, self.c, self.d)):
            if w <= 0:
                raise NotPositive(helper.not_positive_err(f"vertex weight {name}"))
        if constrained and self.a + self.c != self.b + self.d:
            raise ConstraintViolated(helper.constraint_violated_err(self.a + self.c, self.b + self.d))
        self.constrained = constrained

    @property
    def q(self) -> Fraction:
        return self.a / (self.a + self.c)

    @property
    def r(self) -> Fraction:
        return self.b / (self.b + self.d)

    def weight_of(self, weight_class: str) -> Fraction:
        return getattr(self, weight_class)

    def type_frequency(self, weight_class: str) -> Fraction:
        """Stationary frequency of one of the two types of a class."""
        return self.weight_of(weight_class) / (4 * (self.a + self.c))


def eight_vertex_rule(q, r):
    """T(a,b,c;.) flips b with probability q when a != c and keeps it with probability r when a = c."""

    def entry(a, b, c, d):
        if a != c:
            return q if d != b else 1 - q
        return r if d == b else 1 - r

    return entry


def eight_vertex_kernel(wa, wb, wc, wd) -> tuple:
    weights = VertexWeights(wa, wb, wc, wd)
    q, r = weights.q, weights.r
    kernel = kernel_from_function(2, eight_vertex_rule(q, r))
    half = prob_vector_new([Fraction(1, 2), Fraction(1, 2)])
    result = check_condition(kernel, half, ConditionId.HZPM)
    if not result:
        raise InternalDisagreement(HelperUtils().internal_disagreement_err("8-vertex kernel and Cond.1", result.witness))
    return kernel, q, r


VERTEX_TYPES = {
    (1, 0, 1, 0): ("a1", "a"),
    (0, 1, 0, 1): ("a2", "a"),
    (0, 0, 0, 0): ("b1", "b"),
    (1, 1, 1, 1): ("b2", "b"),
    (1, 0, 0, 1): ("c1", "c"),
    (0, 1, 1, 0): ("c2", "c"),
    (1, 1, 0, 0): ("d1", "d"),
    (0, 0, 1, 1): ("d2", "d"),
}


class OrientationField:
    """Edge orientations of a binary space-time coloring.

    Each unpopulated site (i, t) is a vertex surrounded by the faces W=(i-1,t),
    S=(i,t-1), E=(i+1,t), N=(i,t+1). An edge is set (o=1) when the two faces
    it separates carry the same color."""

    def __init__(self, window: SpaceTimeWindow, troubleshoot: bool = False):
        if window.n != 2:
            raise PcaError(f"orientations need a binary coloring, got an alphabet of size {window.n}")
        self.window = window
        self.troubleshoot = troubleshoot

    def apply(self) -> pd.DataFrame:
        cells = self.window.cells
        height, width = cells.shape
        records = []
        for t in range(1, height - 1):
            for i in range((t + 1) % 2, width, 2):
                if i < 1 or i > width - 2:
                    continue
                w, s, e, n = cells[t, i - 1], cells[t - 1, i], cells[t, i + 1], cells[t + 1, i]
                ll, lr, ur, ul = int(w == s), int(s == e), int(e == n), int(n == w)
                incoming = ll + lr + (1 - ur) + (1 - ul)
                if incoming % 2:
                    raise InternalDisagreement(
                        HelperUtils().internal_disagreement_err("vertex admissibility", (i, t))
                    )
                name, weight_class = VERTEX_TYPES[(ll, lr, ur, ul)]
                records.append(
                    {"i": i, "t": t, "ll": ll, "lr": lr, "ur": ur, "ul": ul,
                     "incoming": incoming, "type": name, "weight_class": weight_class}
                )
        df = pd.DataFrame(records, columns=["i", "t", "ll", "lr", "ur", "ul", "incoming", "type", "weight_class"])
        if self.troubleshoot:
            print(f"{len(df)} interior vertices, incoming degrees {sorted(df['incoming'].unique())}")
        return df


def vertex_histogram(vertices: pd.DataFrame, weights: VertexWeights = None) -> pd.DataFrame:
    names = sorted({name for name, _ in VERTEX_TYPES.values()})
    counts = vertices["type"].value_counts().reindex(names, fill_value=0)
    df = pd.DataFrame({"type": names, "count": counts.values})
    df["weight_class"] = df["type"].str[0]
    total = max(int(df["count"].sum()), 1)
    df["frequency"] = df["count"] / total
    if weights is not None:
        df["expected_frequency"] = [float(weights.type_frequency(c)) for c in df["weight_class"]]
    return df


def coloring_to_orientation(window: SpaceTimeWindow, weights: VertexWeights = None) -> tuple:
    """(vertex table, type histogram)."""
    vertices = OrientationField(window).apply()
    return vertices, vertex_histogram(vertices, weights)


def orientation_edge_list(window: SpaceTimeWindow) -> pd.DataFrame:
    """One row per edge between diagonally adjacent faces, lower face first."""
    cells = window.cells
    height, width = cells.shape
    records = []
    for t in range(height - 1):
        for x in range(t % 2, width, 2):
            for x1 in (x - 1, x + 1):
                if 0 <= x1 < width:
                    records.append({"x0": x, "t0": t, "x1": x1, "t1": t + 1,
                                    "o": int(cells[t, x] == cells[t + 1, x1])})
    return pd.DataFrame(records, columns=["x0", "t0", "x1", "t1", "o"])


def _check_domain(name: str, z: float, w: float):
    if not abs(4 * w) < 1:
        raise OutOfDomain(HelperUtils().out_of_domain_err(name, z))


def g_square(z: float) -> float:
    if z == -1:
        raise OutOfDomain(HelperUtils().out_of_domain_err("G_S", z))
    _check_domain("G_S", z, z / (1 + z))
    return 0.5 * ((1 - 4 * z / (1 + z)) ** -0.5 - 1)


def g_triangular(z: float) -> float:
    _check_domain("G_T", z, z)
    return 0.5 * ((1 - 4 * z) ** -0.5 - 1)


def animals_gf(z: float) -> tuple:
    """(G_S(z), G_T(z), |G_T(z/(1+z)) - G_S(z)|) for directed animals by area."""
    z = float(z)
    gs = g_square(z)
    gt = g_triangular(z)
    residual = abs(g_triangular(z / (1 + z)) - gs)
    return gs, gt, residual


class Lattice(Enum):
    SQUARE = "square"
    TRIANGULAR = "triangular"

    @classmethod
    def from_name(cls, name) -> "Lattice":
        if isinstance(name, Lattice):
            return name
        return cls(str(name).lower())


def _check_open_unit(name: str, value: Fraction):
    if not 0 < value < 1:
        raise ParamOutOfRange(HelperUtils().param_out_of_range_err(name, value, 0, 1))


def animals_kernel(lattice, p_param) -> TransitionKernel:
    """1 with probability p when the relevant neighbours are all 0. The square
    lattice reads only a and c (memory one embedded by ignoring b)."""
    lattice = Lattice.from_name(lattice)
    p = HelperUtils().to_scalar(p_param)
    _check_open_unit("p", p)

    def entry(a, b, c, d):
        free = a == 0 and c == 0 and (lattice is Lattice.SQUARE or b == 0)
        on = p if free else Fraction(0)
        return on if d == 1 else 1 - on

    return kernel_from_function(2, entry)


def perimeter_kernel(lattice, p_param, q_param) -> TransitionKernel:
    """Area-perimeter PCA: 1 with probability p + q when the relevant neighbours are all 1, p otherwise."""
    helper = HelperUtils()
    lattice = Lattice.from_name(lattice)
    p, q = helper.to_scalar(p_param), helper.to_scalar(q_param)
    _check_open_unit("p", p)
    if not 0 <= q <= 1 - p:
        raise ParamOutOfRange(helper.param_out_of_range_err("q", q, 0, 1 - p))

    def entry(a, b, c, d):
        full = a == 1 and c == 1 and (lattice is Lattice.SQUARE or b == 1)
        on = p + q if full else p
        return on if d == 1 else 1 - on

    return kernel_from_function(2, entry)


def estimate_density(kernel: TransitionKernel, width: int, height: int, burn_in: int,
                     seed: int, blocks: int = 10, troubleshoot: bool = False) -> tuple:
    """Density of 1 after burn-in from the all-0 start on a periodic window,
    with a standard error from block means over time."""
    window = sample_diagram(kernel, Constant(0), Periodic(), width, height, seed)
    rows = [window.row(t) for t in range(burn_in, height)]
    if len(rows) < blocks:
        raise PcaError(f"{len(rows)} rows after burn-in cannot fill {blocks} blocks")
    means = [float(np.mean(chunk == 1)) for chunk in np.array_split(np.array(rows), blocks)]
    density = float(np.mean(means))
    stderr = float(np.std(means, ddof=1) / math.sqrt(blocks))
    if troubleshoot:
        print(f"density {density:.6f} +- {stderr:.6f} over {blocks} blocks")
    return density, stderr


class TasepKernel:
    """Move probabilities of the synchronous TASEP of order two.

    move(k) = T(0,k,k+1;1), k >= 1: the next particle advanced last step and
    sat at distance k. stay(k) = T(0,k,k;1), k >= 2: it did not advance;
    stay(1) = 0 since the next site is taken. Both sequences keep their last
    value beyond the cutoff."""

    def __init__(self, move, stay):
        helper = HelperUtils()
        self.move_values = self._values(move, helper)
        self.stay_values = self._values(stay, helper)
        for name, values in (("move", self.move_values), ("stay", self.stay_values)):
            for x in values:
                if not 0 <= x <= 1:
                    raise ParamOutOfRange(helper.param_out_of_range_err(name, x, 0, 1))

    @staticmethod
    def _values(spec, helper) -> list:
        if isinstance(spec, (list, tuple)):
            if not spec:
                raise PcaError("empty TASEP probability sequence")
            return [helper.to_scalar(x) for x in spec]
        return [helper.to_scalar(spec)]

    @property
    def cutoff(self) -> int:
        return max(len(self.move_values), len(self.stay_values) + 1)

    def move(self, k: int) -> Fraction:
        return self.move_values[min(k, len(self.move_values)) - 1]

    def stay(self, k: int) -> Fraction:
        if k <= 1:
            return Fraction(0)
        return self.stay_values[min(k, len(self.stay_values) + 1) - 2]

    def transition(self, a: int, b: int, c: int, d: int) -> Fraction:
        """T(a,b,c;d) in particle coordinates: a own position, b and c the next
        particle one and zero steps ago, d the new position."""
        k, j = b - a, c - b
        if k < 1 or j not in (0, 1):
            raise PcaError(f"({a},{b},{c}) is not a reachable TASEP context")
        up = self.move(k) if j == 1 else self.stay(k)
        if d == a + 1:
            return up
        if d == a:
            return 1 - up
        return Fraction(0)

    def move_array(self, size: int) -> np.ndarray:
        return np.array([0.0] + [float(self.move(k)) for k in range(1, size)])

    def stay_array(self, size: int) -> np.ndarray:
        return np.array([0.0] + [float(self.stay(k)) for k in range(1, size)])


class TasepGapLaw:
    def __init__(self, probs: list, z: Fraction, tail: Fraction, ratio: Fraction):
        self.probs = probs
        self.z = z
        self.tail = tail
        self.ratio = ratio

    def __getitem__(self, k: int) -> Fraction:
        return self.probs[k - 1]

    def extended(self, size: int) -> np.ndarray:
        """Float p(1..size), continuing geometrically past the cutoff."""
        values = [float(x) for x in self.probs]
        ratio = float(self.ratio)
        while len(values) < size:
            values.append(values[-1] * ratio)
        return np.array(values[:size])

    def support_size(self, eps: float = 1e-12) -> int:
        """Smallest size past which the geometric tail weighs less than eps."""
        ratio = float(self.ratio)
        if ratio <= 0:
            return len(self.probs)
        last = float(self.probs[-1])
        extra = 0
        while last * ratio ** (extra + 1) / (1 - ratio) >= eps:
            extra += 1
        return len(self.probs) + extra

    def to_frame(self) -> pd.DataFrame:
        helper = HelperUtils()
        return pd.DataFrame(
            {"k": range(1, len(self.probs) + 1), "p": [helper.format_scalar(x) for x in self.probs]}
        )


def tasep_gap_law(kernel: TasepKernel, q1, cutoff: int = None) -> TasepGapLaw:
    """Stationary gap law p(k), k >= 1, for leader speeds B(q1).

    p(k+1) / p(k) = (q1/q0) (1 - move(k)) / stay(k+1), constant from the cutoff on."""
    helper = HelperUtils()
    q1 = helper.to_scalar(q1)
    _check_open_unit("q1", q1)
    q0 = 1 - q1
    cutoff = max(int(cutoff or kernel.cutoff), kernel.cutoff, 2)

    def ratio(m):
        stay = kernel.stay(m + 1)
        if stay == 0:
            raise ParamOutOfRange(helper.param_out_of_range_err(f"stay({m + 1})", stay, 0, 1))
        return (q1 / q0) * (1 - kernel.move(m)) / stay

    tail_ratio = ratio(cutoff)
    if tail_ratio >= 1:
        raise Divergent(helper.divergent_err(tail_ratio))
    partial = [Fraction(1)]
    for m in range(1, cutoff):
        partial.append(partial[-1] * ratio(m))
    z = sum(partial[:-1], Fraction(0)) + partial[-1] / (1 - tail_ratio)
    probs = [x / z for x in partial]
    tail = partial[-1] * tail_ratio / (1 - tail_ratio) / z
    for k in range(1, cutoff):
        lhs = probs[k - 1] * q1 * (1 - kernel.move(k)) + probs[k] * q0 * (1 - kernel.stay(k + 1))
        if lhs != probs[k] * q0:
            raise InternalDisagreement(helper.internal_disagreement_err("TASEP stability identity", k))
    return TasepGapLaw(probs, z, tail, tail_ratio)


class LeaderPolicy(Enum):
    FREE = "free"
    RING = "ring"


class TasepSimulation:
    """N particles, gaps plus the position of particle 0.

    gaps[i] = x_{i+1}(t) - x_i(t); speeds[i] = x_i(t) - x_i(t-1). With FREE
    the last particle is a leader with i.i.d. B(q1) speeds; with RING the
    last particle follows particle 0 around a ring of length sum(gaps)."""

    def __init__(self, kernel: TasepKernel, q1, n_particles: int, seed: int,
                 leader: LeaderPolicy = LeaderPolicy.FREE, initial_gaps=None,
                 initial_speeds=None, troubleshoot: bool = False):
        if n_particles < 2:
            raise PcaError(f"TASEP needs at least 2 particles, got {n_particles}")
        self.kernel = kernel
        self.q1 = HelperUtils().to_scalar(q1)
        _check_open_unit("q1", self.q1)
        self.n = int(n_particles)
        self.seed = int(seed)
        self.leader = leader
        self.troubleshoot = troubleshoot
        self.gaps, self.speeds = self._start(initial_gaps, initial_speeds)
        self.origin = 0

    def _start(self, initial_gaps, initial_speeds) -> tuple:
        rng = row_generator(self.seed, 0)
        count = self.n if self.leader is LeaderPolicy.RING else self.n - 1
        if initial_speeds is None:
            speeds = (rng.random(self.n) < float(self.q1)).astype(int)
        else:
            speeds = np.array(initial_speeds, dtype=int)
        if initial_gaps is None:
            law = tasep_gap_law(self.kernel, self.q1)
            probs = law.extended(law.support_size())
            probs = probs / probs.sum()
            k = rng.choice(np.arange(1, len(probs) + 1), size=count, p=probs)
            nxt = np.roll(speeds, -1)[:count]
            gaps = k + nxt
        else:
            gaps = np.array(initial_gaps, dtype=int)
        if len(gaps) != count or len(speeds) != self.n:
            raise PcaError(HelperUtils().shape_err((count, self.n), (len(gaps), len(speeds))))
        return gaps.astype(int), speeds.astype(int)

    def back_gaps(self) -> np.ndarray:
        """x_{i+1}(t-1) - x_i(t), the step of the zigzag read by the kernel."""
        count = len(self.gaps)
        return self.gaps - np.roll(self.speeds, -1)[:count]

    def step(self, t: int):
        rng = row_generator(self.seed, t)
        u = rng.random(self.n)
        count = len(self.gaps)
        j = np.roll(self.speeds, -1)[:count]
        k = self.gaps - j
        size = int(self.gaps.max()) + 2
        move, stay = self.kernel.move_array(size), self.kernel.stay_array(size)
        up = np.where(j == 1, move[np.maximum(k, 0)], stay[k])
        speeds = (u[:count] < up).astype(int)
        if self.leader is LeaderPolicy.FREE:
            speeds = np.append(speeds, int(u[-1] < float(self.q1)))
        nxt = np.roll(speeds, -1)[:count]
        self.gaps = self.gaps + nxt - speeds[:count]
        self.origin += int(speeds[0])
        self.speeds = speeds

    def apply(self, steps: int) -> dict:
        start_total = int(self.gaps.sum())
        first_speeds = []
        mean_speeds = []
        for t in range(1, steps + 1):
            self.step(t)
            first_speeds.append(int(self.speeds[0]))
            mean_speeds.append(float(self.speeds.mean()))
            if self.troubleshoot and t % 100 == 0:
                print(f"step {t}: mean speed {self.speeds.mean():.4f}, mean gap {self.gaps.mean():.4f}")
        if np.any(self.back_gaps() < 1):
            raise InternalDisagreement(HelperUtils().internal_disagreement_err("TASEP ordering", "final step"))
        back = self.back_gaps()
        counts = pd.Series(back).value_counts().sort_index()
        gap_law = pd.DataFrame({"k": counts.index.astype(int), "count": counts.values})
        gap_law["frequency"] = gap_law["count"] / gap_law["count"].sum()
        moves = np.array(first_speeds)
        return {
            "speed_frequency": float(np.mean(mean_speeds)) if mean_speeds else 0.0,
            "gap_law": gap_law,
            "displacement": self.origin,
            "particle_zero_speed": float(moves.mean()) if len(moves) else 0.0,
            "gap_total_start": start_total,
            "gap_total_end": int(self.gaps.sum()),
        }


def tasep_simulate(kernel: TasepKernel, q1, n_particles: int, steps: int, seed: int,
                   leader: LeaderPolicy = LeaderPolicy.FREE, initial_gaps=None) -> dict:
    return TasepSimulation(kernel, q1, n_particles, seed, leader, initial_gaps).apply(steps)
