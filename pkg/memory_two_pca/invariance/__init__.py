import itertools
from enum import Enum
from fractions import Fraction

import numpy as np
import pandas as pd

from kernels import (
    CommutationViolation,
    DimensionMismatch,
    EpsilonTooLarge,
    FiniteDistribution,
    HelperUtils,
    NotPositive,
    PcaError,
    PreconditionFailed,
    ProbVector,
    StochasticMatrix,
    TransitionKernel,
    check_same_alphabet,
    constant_rows,
    left_fixed_probability,
    left_fixed_space,
)


class ConditionId(Enum):
    HZPM = 1
    R = 2
    RINV = 3
    HZMC = 4
    HZMC_R = 5
    HZMC_RINV = 6
    EIG_F = 7
    EIG_B = 8

    @property
    def label(self) -> str:
        return f"Cond.{self.value}"

    @property
    def flag_col(self) -> str:
        return f"{self.name.lower()}_flag"

    @property
    def quantifier(self) -> tuple:
        """Names of the free indices, in witness order."""
        return _QUANTIFIERS[self]

    @classmethod
    def from_name(cls, name: str) -> "ConditionId":
        name = name.strip().upper().replace("-", "_")
        if name.startswith("COND."):
            return cls(int(name[5:]))
        try:
            return cls[name]
        except KeyError:
            raise PcaError(f"unknown condition {name!r}")


_QUANTIFIERS = {
    ConditionId.HZPM: ("a", "c", "d"),
    ConditionId.R: ("a", "b", "d"),
    ConditionId.RINV: ("b", "c", "d"),
    ConditionId.HZMC: ("a", "c", "d"),
    ConditionId.HZMC_R: ("a", "b", "d"),
    ConditionId.HZMC_RINV: ("b", "c", "d"),
    ConditionId.EIG_F: ("a", "b", "c"),
    ConditionId.EIG_B: ("a", "c", "d"),
}


def time_reversal(m: StochasticMatrix, rho: ProbVector) -> StochasticMatrix:
    """M_h(i;j) = rho(j)/rho(i) M(j;i)."""
    n = m.n
    return StochasticMatrix(
        [[rho[j] / rho[i] * m[j, i] for j in range(n)] for i in range(n)]
    )


def commuting_invariant_vector(f: StochasticMatrix, b: StochasticMatrix) -> ProbVector:
    helper = HelperUtils()
    check_same_alphabet(f, b)
    if not f.positive:
        raise NotPositive(helper.not_positive_err("F"))
    if not b.positive:
        raise NotPositive(helper.not_positive_err("B"))
    fb = f.dot(b)
    bf = b.dot(f)
    for index in itertools.product(range(f.n), repeat=2):
        if fb[index] != bf[index]:
            raise CommutationViolation(helper.not_commuting_err(index))
    return left_fixed_probability(f.matrix, b.matrix, where="F and B")


class HzmcSpec:
    """Commuting pair (F, B) with the common invariant vector rho."""

    def __init__(self, f: StochasticMatrix, b: StochasticMatrix):
        self.rho = commuting_invariant_vector(f, b)
        self.f = f
        self.b = b

    @classmethod
    def from_p(cls, p: ProbVector) -> "HzmcSpec":
        rows = constant_rows(p)
        return cls(rows, rows)

    @property
    def n(self) -> int:
        return self.f.n

    @property
    def fb(self) -> np.ndarray:
        return self.f.dot(self.b)

    def __eq__(self, other):
        if isinstance(other, HzmcSpec):
            return self.f == other.f and self.b == other.b
        return NotImplemented

    def __repr__(self):
        return f"HzmcSpec(F={self.f.rows()}, B={self.b.rows()}, rho={self.rho})"


class ConditionResult:
    def __init__(self, which: ConditionId, table: pd.DataFrame):
        self.which = which
        self.table = table
        violated = table[table[which.flag_col] == 1]
        self.holds = violated.empty
        if self.holds:
            self.witness, self.lhs, self.rhs = None, None, None
        else:
            first = violated.iloc[0]
            self.witness = tuple(int(first[k]) for k in which.quantifier)
            self.lhs = first["lhs"]
            self.rhs = first["rhs"]

    def __bool__(self):
        return self.holds

    def describe(self) -> str:
        if self.holds:
            return f"{self.which.label}: HOLDS"
        helper = HelperUtils()
        names = ",".join(self.which.quantifier)
        values = ",".join(str(s) for s in self.witness)
        return (
            f"{self.which.label}: FAILS at ({names})=({values}): "
            f"lhs={helper.format_scalar(self.lhs)} rhs={helper.format_scalar(self.rhs)}"
        )

    def __repr__(self):
        return f"ConditionResult({self.describe()})"


class ConditionCheck:
    """Exact check of one of the invariance conditions for a kernel.

    Product conditions (HZPM, R, RINV) need `p`; the Markov ones need the
    pair (F, B), given as a `spec` or, for the eigenvector conditions EIG_F
    and EIG_B, as bare matrices since commutation is not yet known there.
    """

    def __init__(
        self,
        which: ConditionId,
        p: ProbVector = None,
        spec: HzmcSpec = None,
        f: StochasticMatrix = None,
        b: StochasticMatrix = None,
        troubleshoot: bool = False,
    ):
        self.which = which
        self.p = p
        self.spec = spec
        self.f = spec.f if spec is not None else f
        self.b = spec.b if spec is not None else b
        self.troubleshoot = troubleshoot
        if which.value <= 3 and p is None:
            raise PcaError(f"{which.label} needs a probability vector p")
        if which in (ConditionId.HZMC, ConditionId.HZMC_R, ConditionId.HZMC_RINV) and spec is None:
            raise PcaError(f"{which.label} needs an HzmcSpec")
        if which in (ConditionId.EIG_F, ConditionId.EIG_B) and (self.f is None or self.b is None):
            raise PcaError(f"{which.label} needs the matrices F and B")

    def sides(self, t: TransitionKernel, i, j, k) -> tuple:
        S = range(t.n)
        p, f, b = self.p, self.f, self.b
        which = self.which
        if which == ConditionId.HZPM:
            a, c, d = i, j, k
            return sum((p[x] * t[a, x, c, d] for x in S), Fraction(0)), p[d]
        if which == ConditionId.R:
            a, b_, d = i, j, k
            return sum((p[x] * t[a, b_, x, d] for x in S), Fraction(0)), p[d]
        if which == ConditionId.RINV:
            b_, c, d = i, j, k
            return sum((p[x] * t[x, b_, c, d] for x in S), Fraction(0)), p[d]
        if which == ConditionId.HZMC:
            a, c, d = i, j, k
            lhs = f[a, d] * b[d, c]
            rhs = sum((b[a, x] * f[x, c] * t[a, x, c, d] for x in S), Fraction(0))
            return lhs, rhs
        if which == ConditionId.HZMC_R:
            a, b_, d = i, j, k
            return f[a, d], sum((f[b_, x] * t[a, b_, x, d] for x in S), Fraction(0))
        if which == ConditionId.HZMC_RINV:
            b_, c, d = i, j, k
            rho = self.spec.rho
            lhs = rho[d] / rho[c] * b[d, c]
            rhs = sum((rho[x] / rho[b_] * b[x, b_] * t[x, b_, c, d] for x in S), Fraction(0))
            return lhs, rhs
        if which == ConditionId.EIG_F:
            a, b_, c = i, j, k
            return f[b_, c], sum((f[a, x] * t[x, a, b_, c] for x in S), Fraction(0))
        a, c, d = i, j, k
        return b[d, c], sum((b[a, x] * t[d, a, x, c] for x in S), Fraction(0))

    def apply(self, t: TransitionKernel) -> ConditionResult:
        for other in (self.p, self.f, self.b):
            if other is not None:
                check_same_alphabet(t, other)
        if self.troubleshoot:
            print(f"Checking {self.which.label} on {t}")
        names = self.which.quantifier
        records = []
        for i, j, k in itertools.product(range(t.n), repeat=3):
            lhs, rhs = self.sides(t, i, j, k)
            records.append(
                {
                    names[0]: i,
                    names[1]: j,
                    names[2]: k,
                    "lhs": lhs,
                    "rhs": rhs,
                    self.which.flag_col: int(lhs != rhs),
                }
            )
        df = pd.DataFrame(records)
        result = ConditionResult(self.which, df)
        if self.troubleshoot:
            print(result.describe())
        return result


def condition_table(t: TransitionKernel, p: ProbVector = None, which: ConditionId = ConditionId.HZPM,
                    spec: HzmcSpec = None) -> pd.DataFrame:
    return ConditionCheck(which, p=p, spec=spec).apply(t).table


def check_condition(t: TransitionKernel, p: ProbVector, which: ConditionId) -> ConditionResult:
    if which not in (ConditionId.HZPM, ConditionId.R, ConditionId.RINV):
        raise PcaError(f"{which.label} is not a product-measure condition")
    if not p.positive:
        raise NotPositive(HelperUtils().not_positive_err("p"))
    return ConditionCheck(which, p=p).apply(t)


def find_hzpm(t: TransitionKernel):
    """The p whose HZPM is invariant for t, or None.

    Each block (T(a,b,c;d))_{b,d} must have a one-dimensional left
    1-eigenspace, the same for every (a,c)."""
    t.require_positive_rates()
    found = None
    for a, c in itertools.product(range(t.n), repeat=2):
        block = t.table[a, :, c, :]
        basis = left_fixed_space(block)
        if len(basis) != 1:
            return None
        total = sum(basis[0], Fraction(0))
        vector = tuple(x / total for x in basis[0])
        if found is None:
            found = vector
        elif vector != found:
            return None
    return ProbVector(found)


def check_hzmc(t: TransitionKernel, spec: HzmcSpec) -> ConditionResult:
    return ConditionCheck(ConditionId.HZMC, spec=spec).apply(t)


def check_hzmc_quasirev(t: TransitionKernel, spec: HzmcSpec, direction) -> ConditionResult:
    if isinstance(direction, str):
        direction = ConditionId.from_name(direction)
    which = {
        ConditionId.R: ConditionId.HZMC_R,
        ConditionId.RINV: ConditionId.HZMC_RINV,
        ConditionId.HZMC_R: ConditionId.HZMC_R,
        ConditionId.HZMC_RINV: ConditionId.HZMC_RINV,
    }.get(direction)
    if which is None:
        raise PcaError(f"direction must be R or RINV, got {direction}")
    base = check_hzmc(t, spec)
    if not base:
        raise PreconditionFailed(
            HelperUtils().precondition_err(f"{which.label}", ConditionId.HZMC.label)
        )
    return ConditionCheck(which, spec=spec).apply(t)


def hzmc_from_kernel(c: TransitionKernel):
    """Recover (F, B) and the two rotated kernels from a rotated kernel C.

    Returns (spec, T_rinv, T_r) or None when the eigenvector conditions fail
    or F and B do not commute."""
    c.require_positive_rates()
    n = c.n
    f_rows, b_rows = [], []
    for a in range(n):
        f_block = np.array([[c[d, a, a, x] for x in range(n)] for d in range(n)], dtype=object)
        b_block = np.array([[c[a, a, b, x] for x in range(n)] for b in range(n)], dtype=object)
        f_rows.append(list(left_fixed_probability(f_block, where=f"(C(d,{a},{a};c))_(d,c)")))
        b_rows.append(list(left_fixed_probability(b_block, where=f"(C({a},{a},b;c))_(b,c)")))
    f = StochasticMatrix(f_rows)
    b = StochasticMatrix(b_rows)
    if not ConditionCheck(ConditionId.EIG_F, f=f, b=b).apply(c):
        return None
    if not ConditionCheck(ConditionId.EIG_B, f=f, b=b).apply(c):
        return None
    try:
        spec = HzmcSpec(f, b)
    except CommutationViolation:
        return None
    t_rinv = np.empty((n, n, n, n), dtype=object)
    t_r = np.empty((n, n, n, n), dtype=object)
    for a, b_, c_, d in itertools.product(range(n), repeat=4):
        t_rinv[a, b_, c_, d] = f[a, d] / f[b_, c_] * c[d, a, b_, c_]
        t_r[a, b_, c_, d] = b[c_, d] / b[b_, a] * c[b_, c_, d, a]
    return spec, TransitionKernel(t_rinv), TransitionKernel(t_r)


def zigzag_pushforward(t: TransitionKernel, p: ProbVector, k: int) -> FiniteDistribution:
    """One-step image of the p-product law on a zigzag of k+1 cells at time t+1
    and k hidden cells at time t. The output zigzag interleaves the time t+1
    cells with the k new cells at time t+2: (b0, c1, b1, ..., ck, bk)."""
    n = t.n
    probs = {}
    for out in itertools.product(range(n), repeat=2 * k + 1):
        bs = out[0::2]
        cs = out[1::2]
        value = Fraction(1)
        for s in bs:
            value *= p[s]
        hidden = Fraction(0)
        for a_row in itertools.product(range(n), repeat=k):
            term = Fraction(1)
            for i, a in enumerate(a_row):
                term *= p[a] * t[bs[i], a, bs[i + 1], cs[i]]
            hidden += term
        probs[out] = value * hidden
    labels = []
    for i in range(2 * k + 1):
        labels.append(("b", i // 2) if i % 2 == 0 else ("c", i // 2 + 1))
    return FiniteDistribution(probs, labels)


def _check_eps(table: np.ndarray) -> None:
    for index, x in np.ndenumerate(table):
        if not 0 < x < 1:
            raise EpsilonTooLarge(HelperUtils().epsilon_too_large_err(index, x))


def hzmc_dimension(n: int, with_r: bool = False) -> int:
    if with_r:
        return n * (n - 1) ** 3
    return n ** 2 * (n - 1) ** 2


def gen_hzmc_member(spec: HzmcSpec, free_params, eps=Fraction(1), with_r: bool = False) -> TransitionKernel:
    """Kernel with invariant (F,B)-HZMC, optionally also satisfying the
    r-quasi-reversibility condition (Cond.5)."""
    helper = HelperUtils()
    f, b, n = spec.f, spec.b, spec.n
    params = [helper.to_scalar(x) for x in free_params]
    eps = helper.to_scalar(eps)
    expected = hzmc_dimension(n, with_r)
    if len(params) != expected:
        name = "HZMC_R" if with_r else "HZMC"
        raise DimensionMismatch(helper.dimension_mismatch_err(name, expected, len(params)))
    fb = spec.fb
    last = n - 1
    table = np.empty((n, n, n, n), dtype=object)
    theta = iter(params)
    if not with_r:
        for a, c in itertools.product(range(n), repeat=2):
            z = fb[a, c]
            v = [f[a, d] * b[d, c] / z for d in range(n)]
            u = [b[a, x] * f[x, c] / z for x in range(n)]
            block = np.array([[v[d] for d in range(n)] for _ in range(n)], dtype=object)
            for i, j in itertools.product(range(last), repeat=2):
                weight = eps * next(theta)
                for x, wx in ((i, 1), (last, -u[i] / u[last])):
                    for d, wd in ((j, 1), (last, -1)):
                        block[x, d] += weight * wx * wd
            table[a, :, c, :] = block
    else:
        for a in range(n):
            x_a = np.empty((n, n, n), dtype=object)
            for d, b_, c in itertools.product(range(n), repeat=3):
                x_a[d, b_, c] = f[b_, c] + b[d, c] - fb[a, c]
            for i, j, k in itertools.product(range(last), repeat=3):
                weight = eps * next(theta)
                for d, wd in ((i, 1), (last, -f[a, i] / f[a, last])):
                    for b_, wb in ((j, 1), (last, -b[a, j] / b[a, last])):
                        for c, wc in ((k, 1), (last, -1)):
                            x_a[d, b_, c] += weight * wd * wb * wc
            for b_, c, d in itertools.product(range(n), repeat=3):
                table[a, b_, c, d] = f[a, d] / f[b_, c] * x_a[d, b_, c]
    _check_eps(table)
    kernel = TransitionKernel(table)
    if not check_hzmc(kernel, spec):
        raise PcaError("generated kernel fails Cond.4")
    if with_r and not ConditionCheck(ConditionId.HZMC_R, spec=spec).apply(kernel):
        raise PcaError("generated kernel fails Cond.5")
    return kernel
