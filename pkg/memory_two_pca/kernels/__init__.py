import hashlib
import itertools
import json
from enum import Enum
from fractions import Fraction

import numpy as np
import pandas as pd

Scalar = Fraction


class PcaError(ValueError):
    """Base class for every error raised by the memory-two PCA tools."""


class BadScalar(PcaError):
    pass


class InvalidAlphabet(PcaError):
    pass


class RowNotStochastic(PcaError):
    pass


class NegativeEntry(PcaError):
    pass


class NotNormalized(PcaError):
    pass


class AlphabetMismatch(PcaError):
    pass


class NonPositiveRates(PcaError):
    pass


class PreconditionFailed(PcaError):
    pass


class NotInTriang(PcaError):
    pass


class CommutationViolation(PcaError):
    pass


NotCommuting = CommutationViolation


class NotPositive(PcaError):
    pass


class EigenvectorNotUnique(PcaError):
    pass


class ParamOutOfRange(PcaError):
    pass


class EpsilonTooLarge(PcaError):
    pass


class DimensionMismatch(PcaError):
    pass


class InternalDisagreement(PcaError):
    pass


class InvalidPolyline(PcaError):
    pass


class OddWidthPeriodic(PcaError):
    pass


class StateSpaceTooLarge(PcaError):
    pass


class InsufficientSamples(PcaError):
    pass


class ConstraintViolated(PcaError):
    pass


class OutOfDomain(PcaError):
    pass


class Divergent(PcaError):
    pass


class KernelFileError(PcaError):
    pass


class HelperUtils:
    def bad_scalar_err(self, value):
        err_str = " could not be read as an exact rational number"
        return repr(value) + err_str

    def invalid_alphabet_err(self, n):
        return f"alphabet size {n} is invalid, it must be an integer of at least 2"

    def row_not_stochastic_err(self, abc, total):
        return f"kernel row {abc} sums to {self.format_scalar(total)} instead of 1"

    def negative_entry_err(self, index, value):
        return f"entry {index} is negative ({self.format_scalar(value)})"

    def entry_too_large_err(self, index, value):
        return f"entry {index} is greater than 1 ({self.format_scalar(value)})"

    def not_normalized_err(self, total):
        return f"probability vector sums to {self.format_scalar(total)} instead of 1"

    def shape_err(self, expected, got):
        return f"expected {expected} entries but got {got}"

    def alphabet_mismatch_err(self, n_left, n_right):
        return f"alphabet sizes differ: {n_left} against {n_right}"

    def non_positive_rates_err(self, index):
        return f"kernel does not have positive rates, entry {index} is 0"

    def not_positive_err(self, name):
        return f"{name} must have positive entries"

    def not_commuting_err(self, index):
        return f"F and B do not commute, FB and BF differ at {index}"

    def eigenvector_not_unique_err(self, dim, where):
        return f"left 1-eigenspace of {where} has dimension {dim}, expected 1"

    def precondition_err(self, what, cond):
        return f"{what} requires {cond} to hold"

    def not_in_triang_err(self, witness):
        return f"kernel is not in Triang(S,p): Cond.1 fails at {witness}"

    def param_out_of_range_err(self, name, value, low, high):
        return (
            f"parameter {name}={self.format_scalar(value)} is outside "
            f"({self.format_scalar(low)}, {self.format_scalar(high)})"
        )

    def param_not_positive_err(self, name, value):
        return f"parameter {name}={self.format_scalar(value)} must be positive"

    def epsilon_too_large_err(self, index, value):
        return f"perturbed entry {index} = {self.format_scalar(value)} leaves (0,1), reduce eps"

    def dimension_mismatch_err(self, family, expected, got):
        return f"family {family} takes {expected} free parameters but got {got}"

    def internal_disagreement_err(self, what, where):
        return f"{what} disagree at {where}"

    def invalid_polyline_err(self, index):
        return f"polyline step {index} does not change time by exactly one"

    def odd_width_periodic_err(self, width):
        return f"periodic boundary needs an even width, got {width}"

    def state_space_too_large_err(self, states, limit):
        return f"state space of {states} configurations exceeds the limit {limit}"

    def insufficient_samples_err(self, expected, minimum):
        return f"smallest expected cell count {expected:.3f} is below {minimum}"

    def constraint_violated_err(self, lhs, rhs):
        return (
            f"vertex weights need a+c = b+d, got {self.format_scalar(lhs)} "
            f"and {self.format_scalar(rhs)}"
        )

    def out_of_domain_err(self, name, z):
        return f"{name} is outside its convergence domain at z={z}"

    def divergent_err(self, ratio):
        return f"gap series ratio {self.format_scalar(ratio)} at the cutoff is not below 1"

    def kernel_file_err(self, path, msg, line=None, col=None):
        if line is None:
            return f"{path}: {msg}"
        return f"{path}:{line}:{col}: {msg}"

    def to_scalar(self, value) -> Fraction:
        if isinstance(value, Fraction):
            return value
        if isinstance(value, (bool, np.bool_)):
            raise BadScalar(self.bad_scalar_err(value))
        if isinstance(value, (int, np.integer)):
            return Fraction(int(value))
        if isinstance(value, (float, np.floating)):
            # repr gives the shortest decimal that round-trips, so 0.2 -> 1/5
            try:
                return Fraction(repr(float(value)))
            except ValueError:
                raise BadScalar(self.bad_scalar_err(value))
        if isinstance(value, str):
            try:
                return Fraction(value.strip())
            except (ValueError, ZeroDivisionError):
                raise BadScalar(self.bad_scalar_err(value))
        raise BadScalar(self.bad_scalar_err(value))

    def format_scalar(self, value) -> str:
        value = Fraction(value)
        return f"{value.numerator}/{value.denominator}"

    def parse_scalar_list(self, text: str) -> list:
        return [self.to_scalar(item) for item in text.split(",") if item.strip()]


class Alphabet:
    """Symbols 0..n-1."""

    def __init__(self, n: int):
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 2:
            raise InvalidAlphabet(HelperUtils().invalid_alphabet_err(n))
        self.n = int(n)

    @property
    def symbols(self) -> range:
        return range(self.n)

    def tuples(self, length: int):
        return itertools.product(range(self.n), repeat=length)

    def __eq__(self, other):
        return isinstance(other, Alphabet) and other.n == self.n

    def __hash__(self):
        return hash(self.n)

    def __repr__(self):
        return f"Alphabet({self.n})"


class ProbVector:
    """Probability vector on the alphabet with exact entries."""

    def __init__(self, entries):
        helper = HelperUtils()
        values = tuple(helper.to_scalar(x) for x in entries)
        self.alphabet = Alphabet(len(values))
        for i, x in enumerate(values):
            if x < 0:
                raise NegativeEntry(helper.negative_entry_err((i,), x))
        total = sum(values, Fraction(0))
        if total != 1:
            raise NotNormalized(helper.not_normalized_err(total))
        self.entries = values
        self.positive = all(x > 0 for x in values)

    @property
    def n(self) -> int:
        return self.alphabet.n

    def __getitem__(self, i):
        return self.entries[i]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other):
        if isinstance(other, ProbVector):
            return self.entries == other.entries
        return NotImplemented

    def __hash__(self):
        return hash(self.entries)

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=object)

    def as_floats(self) -> np.ndarray:
        return np.array([float(x) for x in self.entries], dtype=np.float64)

    def __repr__(self):
        helper = HelperUtils()
        return "ProbVector(" + ", ".join(helper.format_scalar(x) for x in self.entries) + ")"


def prob_vector_new(entries) -> ProbVector:
    if isinstance(entries, str):
        entries = HelperUtils().parse_scalar_list(entries)
    return ProbVector(entries)


class StochasticMatrix:
    """Row-stochastic n x n matrix stored as a read-only object array of Fractions."""

    def __init__(self, rows):
        helper = HelperUtils()
        matrix = np.array(
            [[helper.to_scalar(x) for x in row] for row in rows], dtype=object
        )
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise PcaError(helper.shape_err("a square matrix", matrix.shape))
        self.alphabet = Alphabet(matrix.shape[0])
        for index, x in np.ndenumerate(matrix):
            if x < 0:
                raise NegativeEntry(helper.negative_entry_err(index, x))
        for i in range(self.n):
            total = sum(matrix[i], Fraction(0))
            if total != 1:
                raise RowNotStochastic(helper.row_not_stochastic_err((i,), total))
        matrix.setflags(write=False)
        self.matrix = matrix
        self.positive = all(x > 0 for x in matrix.flat)

    @property
    def n(self) -> int:
        return self.alphabet.n

    def __getitem__(self, index):
        return self.matrix[index]

    def __eq__(self, other):
        if isinstance(other, StochasticMatrix):
            return self.matrix.shape == other.matrix.shape and bool(
                (self.matrix == other.matrix).all()
            )
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self.matrix.flat))

    def dot(self, other: "StochasticMatrix") -> np.ndarray:
        return self.matrix.dot(other.matrix)

    def rows(self) -> list:
        return [list(row) for row in self.matrix]

    def as_floats(self) -> np.ndarray:
        return self.matrix.astype(np.float64)

    def __repr__(self):
        return f"StochasticMatrix({self.rows()})"


def stochastic_matrix_new(rows) -> StochasticMatrix:
    return StochasticMatrix(rows)


def constant_rows(p: ProbVector) -> StochasticMatrix:
    return StochasticMatrix([list(p) for _ in range(p.n)])


class TransitionKernel:
    """Memory-two kernel T(a,b,c;d) with a the west, b the south (time t-1),
    c the east neighbour and d the new state. Storage is (a,b,c) row-major
    with d contiguous, shape (n, n, n, n)."""

    def __init__(self, table: np.ndarray):
        helper = HelperUtils()
        n = table.shape[0]
        self.alphabet = Alphabet(n)
        if table.shape != (n, n, n, n):
            raise PcaError(helper.shape_err((n, n, n, n), table.shape))
        for index, x in np.ndenumerate(table):
            if x < 0:
                raise NegativeEntry(helper.negative_entry_err(index, x))
        for abc in itertools.product(range(n), repeat=3):
            total = sum(table[abc], Fraction(0))
            if total != 1:
                raise RowNotStochastic(helper.row_not_stochastic_err(abc, total))
        table.setflags(write=False)
        self.table = table
        self.min_entry = min(table.flat)
        self.positive_rates = self.min_entry > 0

    @property
    def n(self) -> int:
        return self.alphabet.n

    def __getitem__(self, index):
        return self.table[index]

    def row(self, a, b, c) -> tuple:
        return tuple(self.table[a, b, c])

    def __eq__(self, other):
        if isinstance(other, TransitionKernel):
            return self.n == other.n and bool((self.table == other.table).all())
        return NotImplemented

    def __hash__(self):
        return hash(tuple(self.table.flat))

    def first_zero_entry(self):
        for index, x in np.ndenumerate(self.table):
            if x == 0:
                return index
        return None

    def require_positive_rates(self):
        if not self.positive_rates:
            raise NonPositiveRates(
                HelperUtils().non_positive_rates_err(self.first_zero_entry())
            )

    def as_floats(self) -> np.ndarray:
        return self.table.astype(np.float64)

    def cumulative(self) -> np.ndarray:
        """Float cdf over d for every (a,b,c), used by the samplers.

        Summed exactly before conversion so a row reaches 1.0 at its last
        positive entry and zero-probability symbols are never drawn."""
        cdf = np.cumsum(self.table, axis=3).astype(np.float64)
        cdf[..., -1] = 1.0
        return cdf

    def to_frame(self) -> pd.DataFrame:
        helper = HelperUtils()
        records = []
        for a, b, c in self.alphabet.tuples(3):
            record = {"a": a, "b": b, "c": c}
            for d in range(self.n):
                record[f"T(;{d})"] = helper.format_scalar(self.table[a, b, c, d])
            records.append(record)
        return pd.DataFrame(records)

    def to_dict(self, p: ProbVector = None) -> dict:
        helper = HelperUtils()
        data = {"n": self.n}
        if p is not None:
            data["p"] = [helper.format_scalar(x) for x in p]
        data["T"] = {
            f"{a},{b},{c}": [helper.format_scalar(x) for x in self.table[a, b, c]]
            for a, b, c in self.alphabet.tuples(3)
        }
        return data

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def __repr__(self):
        return f"TransitionKernel(n={self.n}, positive_rates={self.positive_rates})"


def kernel_new(n: int, entries) -> TransitionKernel:
    """Build a kernel from a flat list of n**4 values, a nested (n,n,n,n)
    structure, or a mapping {(a,b,c): row}."""
    helper = HelperUtils()
    n = Alphabet(n).n
    table = np.empty((n, n, n, n), dtype=object)
    if isinstance(entries, dict):
        if len(entries) != n ** 3:
            raise PcaError(helper.shape_err(n ** 3, len(entries)))
        for key, row in entries.items():
            key = tuple(int(s) for s in key.split(",")) if isinstance(key, str) else tuple(key)
            row = list(row)
            if len(row) != n:
                raise PcaError(helper.shape_err(n, len(row)))
            table[key] = [helper.to_scalar(x) for x in row]
    else:
        flat = list(np.asarray(entries, dtype=object).flat)
        if len(flat) != n ** 4:
            raise PcaError(helper.shape_err(n ** 4, len(flat)))
        table.flat[:] = [helper.to_scalar(x) for x in flat]
    return TransitionKernel(table)


def kernel_from_function(n: int, fn) -> TransitionKernel:
    table = np.empty((n, n, n, n), dtype=object)
    for index in itertools.product(range(n), repeat=4):
        table[index] = HelperUtils().to_scalar(fn(*index))
    return TransitionKernel(table)


def uniform_kernel(p: ProbVector) -> TransitionKernel:
    """The memoryless kernel T(a,b,c;d) = p(d)."""
    return kernel_from_function(p.n, lambda a, b, c, d: p[d])


def check_same_alphabet(left, right):
    if left.n != right.n:
        raise AlphabetMismatch(HelperUtils().alphabet_mismatch_err(left.n, right.n))


class DihedralElement(Enum):
    """The eight isometries of the square acting on the diamond stencil.

    Slots sit at W(-1,0)=a, S(0,-1)=b, E(1,0)=c, N(0,1)=d; an element moves the
    symbol at position x to g(x)."""

    ID = "id"
    R = "r"
    R2 = "r2"
    R3 = "r3"
    V = "v"
    H = "h"
    RV = "rv"
    R3V = "r3v"

    @property
    def matrix(self) -> np.ndarray:
        return np.array(_D4_MATRICES[self.value], dtype=int)

    @classmethod
    def from_name(cls, name: str) -> "DihedralElement":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise PcaError(f"unknown dihedral element {name!r}")

    @classmethod
    def from_matrix(cls, matrix) -> "DihedralElement":
        key = tuple(int(x) for x in np.asarray(matrix).flat)
        for g in cls:
            if tuple(g.matrix.flat) == key:
                return g
        raise PcaError(f"{key} is not a symmetry of the square")

    def compose(self, other: "DihedralElement") -> "DihedralElement":
        """self o other (apply other first)."""
        return DihedralElement.from_matrix(self.matrix @ other.matrix)

    def inverse(self) -> "DihedralElement":
        return DihedralElement.from_matrix(self.matrix.T)

    def slot_map(self) -> tuple:
        """j such that sigma_g(values)[k] = values[j[k]]."""
        inv = self.inverse().matrix
        out = []
        for pos in _SLOT_POSITIONS:
            image = tuple(int(x) for x in inv @ np.array(pos))
            out.append(_SLOT_POSITIONS.index(image))
        return tuple(out)

    def permute(self, values) -> tuple:
        """sigma_g: image of the ordered tuple (a,b,c;d)."""
        return tuple(values[j] for j in self.slot_map())

    def output_slot(self) -> int:
        """Index of the original slot that lands on the output position N."""
        return self.slot_map()[3]


_SLOT_POSITIONS = [(-1, 0), (0, -1), (1, 0), (0, 1)]

_D4_MATRICES = {
    "id": [[1, 0], [0, 1]],
    "r": [[0, -1], [1, 0]],
    "r2": [[-1, 0], [0, -1]],
    "r3": [[0, 1], [-1, 0]],
    "v": [[-1, 0], [0, 1]],
    "h": [[1, 0], [0, -1]],
    "rv": [[0, -1], [-1, 0]],
    "r3v": [[0, 1], [1, 0]],
}


def row_echelon(rows) -> tuple:
    """Reduced row echelon form over the rationals. Returns (rref, pivots)."""
    m = [[Fraction(x) for x in row] for row in rows]
    if not m:
        return m, []
    n_rows, n_cols = len(m), len(m[0])
    pivots = []
    piv_r = 0
    for piv_c in range(n_cols):
        for i_row in range(piv_r, n_rows):
            if m[i_row][piv_c] != 0:
                break
        else:
            continue
        if i_row != piv_r:
            m[piv_r], m[i_row] = m[i_row], m[piv_r]
        fp = m[piv_r][piv_c]
        m[piv_r] = [x / fp for x in m[piv_r]]
        for r in range(n_rows):
            fr = m[r][piv_c]
            if r == piv_r or fr == 0:
                continue
            m[r] = [x - y * fr for x, y in zip(m[r], m[piv_r])]
        pivots.append(piv_c)
        piv_r += 1
        if piv_r == n_rows:
            break
    return m, pivots


def nullspace(rows, n_cols: int = None) -> list:
    """Basis of {x : M x = 0}, one vector per free column."""
    if n_cols is None:
        n_cols = len(rows[0])
    if not rows:
        return [[Fraction(int(i == j)) for i in range(n_cols)] for j in range(n_cols)]
    m, pivots = row_echelon(rows)
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for f in free:
        x = [Fraction(0)] * n_cols
        x[f] = Fraction(1)
        for r, pc in enumerate(pivots):
            x[pc] = -m[r][f]
        basis.append(x)
    return basis


def left_fixed_space(*matrices) -> list:
    """Common left 1-eigenspace {x : x M = x for every M}."""
    n = len(matrices[0])
    rows = []
    for mat in matrices:
        mat = np.asarray(mat, dtype=object)
        for j in range(n):
            rows.append([mat[i, j] - (1 if i == j else 0) for i in range(n)])
    return nullspace(rows, n)


def left_fixed_probability(*matrices, where: str = "matrix") -> ProbVector:
    """The unique normalized common left 1-eigenvector, or EigenvectorNotUnique."""
    basis = left_fixed_space(*matrices)
    if len(basis) != 1:
        raise EigenvectorNotUnique(
            HelperUtils().eigenvector_not_unique_err(len(basis), where)
        )
    v = basis[0]
    total = sum(v, Fraction(0))
    if total == 0:
        raise EigenvectorNotUnique(
            HelperUtils().eigenvector_not_unique_err(len(basis), where)
        )
    return ProbVector([x / total for x in v])


def kernel_from_json(text: str, path: str = "<string>") -> tuple:
    """Parse the kernel file format. Returns (kernel, p or None)."""
    helper = HelperUtils()
    try:
        data = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as e:
        raise KernelFileError(helper.kernel_file_err(path, e.msg, e.lineno, e.colno))
    if not isinstance(data, dict) or "n" not in data or "T" not in data:
        raise KernelFileError(helper.kernel_file_err(path, "expected keys 'n' and 'T'"))
    try:
        kernel = kernel_new(data["n"], data["T"])
        p = prob_vector_new(data["p"]) if data.get("p") is not None else None
    except KernelFileError:
        raise
    except PcaError as e:
        raise KernelFileError(helper.kernel_file_err(path, str(e)))
    return kernel, p


def read_kernel_file(path: str) -> tuple:
    with open(path, "r", encoding="utf-8") as f:
        return kernel_from_json(f.read(), path=path)


def kernel_to_json(kernel: TransitionKernel, p: ProbVector = None) -> str:
    return json.dumps(kernel.to_dict(p), indent=2)


def write_kernel_file(path: str, kernel: TransitionKernel, p: ProbVector = None):
    with open(path, "w", encoding="utf-8") as f:
        f.write(kernel_to_json(kernel, p))
        f.write("\n")


class FiniteDistribution:
    """Exact law of a finite pattern: assignment tuple -> probability.

    `labels` names the cells of the pattern in key order."""

    def __init__(self, probs: dict, labels=None, check: bool = True):
        self.probs = {tuple(k): Fraction(v) for k, v in probs.items() if v != 0}
        length = len(next(iter(self.probs))) if self.probs else 0
        self.labels = tuple(labels) if labels is not None else tuple(range(length))
        if check:
            total = sum(self.probs.values(), Fraction(0))
            if total != 1:
                raise NotNormalized(HelperUtils().not_normalized_err(total))

    @classmethod
    def product(cls, p: ProbVector, length: int, labels=None) -> "FiniteDistribution":
        probs = {}
        for key in itertools.product(range(p.n), repeat=length):
            value = Fraction(1)
            for s in key:
                value *= p[s]
            probs[key] = value
        return cls(probs, labels)

    def __getitem__(self, key):
        return self.probs.get(tuple(key), Fraction(0))

    def __eq__(self, other):
        if isinstance(other, FiniteDistribution):
            return self.probs == other.probs
        return NotImplemented

    def __len__(self):
        return len(self.probs)

    def marginal(self, positions) -> "FiniteDistribution":
        positions = list(positions)
        out = {}
        for key, value in self.probs.items():
            sub = tuple(key[i] for i in positions)
            out[sub] = out.get(sub, Fraction(0)) + value
        return FiniteDistribution(out, [self.labels[i] for i in positions], check=False)

    def first_difference(self, other: "FiniteDistribution"):
        for key in sorted(set(self.probs) | set(other.probs)):
            if self[key] != other[key]:
                return key
        return None

    def to_frame(self) -> pd.DataFrame:
        helper = HelperUtils()
        records = [
            {"assignment": ",".join(str(s) for s in key), "probability": helper.format_scalar(v)}
            for key, v in sorted(self.probs.items())
        ]
        return pd.DataFrame(records, columns=["assignment", "probability"])

    def to_text(self) -> str:
        helper = HelperUtils()
        lines = [
            ",".join(str(s) for s in key) + "\t" + helper.format_scalar(v)
            for key, v in sorted(self.probs.items())
        ]
        return "\n".join(lines)
