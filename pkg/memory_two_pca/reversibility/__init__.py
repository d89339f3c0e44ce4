import functools
import itertools
from enum import Enum
from fractions import Fraction

import numpy as np
import pandas as pd

from kernels import (
    DihedralElement,
    DimensionMismatch,
    EpsilonTooLarge,
    HelperUtils,
    NotInTriang,
    ParamOutOfRange,
    PcaError,
    PreconditionFailed,
    ProbVector,
    TransitionKernel,
    check_same_alphabet,
)
from invariance import (
    ConditionCheck,
    ConditionId,
    HzmcSpec,
    check_condition,
    time_reversal,
)

D4 = list(DihedralElement)

# condition needed for T_g to be a kernel, keyed by the slot landing on the output
_SLOT_CONDITION = {0: ConditionId.RINV, 1: ConditionId.HZPM, 2: ConditionId.R, 3: None}


class FamilyId(Enum):
    TRIANG = "TRIANG"
    QR_R = "QR_R"
    QR_RINV = "QR_RINV"
    QR_D4 = "QR_D4"
    REV_V = "REV_V"
    REV_R2 = "REV_R2"
    REV_H = "REV_H"
    REV_R2V = "REV_R2V"
    REV_R = "REV_R"
    REV_RV = "REV_RV"
    REV_D4 = "REV_D4"
    BIN_HZPM = "BIN_HZPM"
    BIN_R = "BIN_R"
    BIN_RINV = "BIN_RINV"
    BIN_D4 = "BIN_D4"

    @classmethod
    def from_name(cls, name: str) -> "FamilyId":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise PcaError(f"unknown family {name!r}")

    @property
    def is_binary(self) -> bool:
        return self.name.startswith("BIN_")


def required_condition(g: DihedralElement):
    return _SLOT_CONDITION[g.output_slot()]


def reverse_formula(t: TransitionKernel, p: ProbVector, g: DihedralElement) -> TransitionKernel:
    """T_g(sigma_g(x)) = p(sigma_g(x)[north]) / p(x[north]) T(x), no precondition check."""
    n = t.n
    slot = g.output_slot()
    table = np.empty((n, n, n, n), dtype=object)
    for x in itertools.product(range(n), repeat=4):
        table[g.permute(x)] = p[x[slot]] / p[x[3]] * t[x]
    return TransitionKernel(table)


def reverse_kernel(t: TransitionKernel, p: ProbVector, g: DihedralElement) -> TransitionKernel:
    check_same_alphabet(t, p)
    needed = required_condition(g)
    if needed is not None and not check_condition(t, p, needed):
        raise PreconditionFailed(
            HelperUtils().precondition_err(f"the {g.value}-reverse", needed.label)
        )
    return reverse_formula(t, p, g)


def require_triang(t: TransitionKernel, p: ProbVector):
    result = check_condition(t, p, ConditionId.HZPM)
    if not result:
        raise NotInTriang(HelperUtils().not_in_triang_err(result.witness))
    return result


def quasi_reversibility_report(t: TransitionKernel, p: ProbVector) -> dict:
    """{g: T_g} for every g under which (T, pi_p) is quasi-reversible."""
    require_triang(t, p)
    has_r = check_condition(t, p, ConditionId.R).holds
    has_rinv = check_condition(t, p, ConditionId.RINV).holds
    report = {}
    for g in D4:
        needed = required_condition(g)
        if needed == ConditionId.R and not has_r:
            continue
        if needed == ConditionId.RINV and not has_rinv:
            continue
        report[g] = reverse_formula(t, p, g)
    return report


def generated_subgroup(elements) -> set:
    group = {DihedralElement.ID} | set(elements)
    while True:
        bigger = group | {g.compose(h) for g in group for h in group}
        if bigger == group:
            return group
        group = bigger


def reversibility_report(t: TransitionKernel, p: ProbVector) -> set:
    """Elements g with T_g = T exactly, closed under the generated subgroup."""
    reverses = quasi_reversibility_report(t, p)
    found = {g for g, t_g in reverses.items() if t_g == t}
    return generated_subgroup(found)


def report_frame(t: TransitionKernel, p: ProbVector) -> pd.DataFrame:
    reverses = quasi_reversibility_report(t, p)
    reversible = reversibility_report(t, p)
    records = []
    for g in D4:
        needed = required_condition(g)
        records.append(
            {
                "g": g.value,
                "needs": needed.label if needed is not None else "-",
                "quasi_reversible": int(g in reverses),
                "reversible": int(g in reversible),
            }
        )
    return pd.DataFrame(records)


def hzmc_reverse_spec(spec: HzmcSpec, g: DihedralElement) -> HzmcSpec:
    if g == DihedralElement.ID:
        return spec
    if g == DihedralElement.H:
        return HzmcSpec(spec.b, spec.f)
    f_h = time_reversal(spec.f, spec.rho)
    b_h = time_reversal(spec.b, spec.rho)
    if g == DihedralElement.V:
        return HzmcSpec(b_h, f_h)
    if g == DihedralElement.R2:
        return HzmcSpec(f_h, b_h)
    raise PcaError(f"no Markov reverse law is given for {g.value}")


def hzmc_reverse_kernel(t: TransitionKernel, spec: HzmcSpec, g: DihedralElement) -> TransitionKernel:
    """g-reverse of a kernel whose invariant law is the (F,B)-HZMC."""
    helper = HelperUtils()
    check_same_alphabet(t, spec.f)
    if not ConditionCheck(ConditionId.HZMC, spec=spec).apply(t):
        raise PreconditionFailed(helper.precondition_err(f"the {g.value}-reverse", ConditionId.HZMC.label))
    f, b, rho = spec.f, spec.b, spec.rho
    n = t.n
    table = np.empty((n, n, n, n), dtype=object)
    if g in (DihedralElement.R, DihedralElement.R3):
        needed = ConditionId.HZMC_R if g == DihedralElement.R else ConditionId.HZMC_RINV
        if not ConditionCheck(needed, spec=spec).apply(t):
            raise PreconditionFailed(helper.precondition_err(f"the {g.value}-reverse", needed.label))
    elif g not in (DihedralElement.ID, DihedralElement.H, DihedralElement.V, DihedralElement.R2):
        raise PcaError(f"no Markov reverse law is given for {g.value}")
    for a, b_, c, d in itertools.product(range(n), repeat=4):
        x = (a, b_, c, d)
        if g in (DihedralElement.H, DihedralElement.R2):
            factor = b[a, b_] * f[b_, c] / (f[a, d] * b[d, c])
        elif g == DihedralElement.R:
            factor = f[b_, c] / f[a, d]
        elif g == DihedralElement.R3:
            # B_h(i;j) = rho(j)/rho(i) B(j;i)
            factor = (rho[a] / rho[b_] * b[a, b_]) / (rho[d] / rho[c] * b[d, c])
        else:
            factor = Fraction(1)
        table[g.permute(x)] = factor * t[x]
    return TransitionKernel(table)


def admissible_interval(kind: FamilyId, k) -> tuple:
    """Open interval for the q parameters of a binary family with p(0)/p(1) = k."""
    k = HelperUtils().to_scalar(k)
    if k <= 1:
        return Fraction(0), Fraction(1)
    if kind == FamilyId.BIN_HZPM:
        return 1 - 1 / k, Fraction(1)
    if kind in (FamilyId.BIN_R, FamilyId.BIN_RINV):
        return 1 - 1 / k, 1 - 1 / k + 1 / k ** 2
    return 1 - 1 / k + 1 / k ** 2 - 1 / k ** 3, 1 - 1 / k + 1 / k ** 2


def binary_family(kind: FamilyId, k, params) -> tuple:
    """Binary kernel with p = (k/(1+k), 1/(1+k)). Returns (kernel, p)."""
    helper = HelperUtils()
    if isinstance(kind, str):
        kind = FamilyId.from_name(kind)
    k = helper.to_scalar(k)
    if k <= 0:
        raise ParamOutOfRange(helper.param_not_positive_err("k", k))
    q = [helper.to_scalar(x) for x in params]
    expected = {FamilyId.BIN_HZPM: 4, FamilyId.BIN_R: 2, FamilyId.BIN_RINV: 2, FamilyId.BIN_D4: 1}
    if kind not in expected:
        raise PcaError(f"{kind.value} is not a binary family")
    if len(q) != expected[kind]:
        raise DimensionMismatch(helper.dimension_mismatch_err(kind.value, expected[kind], len(q)))
    low, high = admissible_interval(kind, k)
    for i, value in enumerate(q):
        if not low < value < high:
            raise ParamOutOfRange(helper.param_out_of_range_err(f"q{i}", value, low, high))
    p = ProbVector([k / (1 + k), 1 / (1 + k)])

    zero = {}
    for a, b, c in itertools.product((0, 1), repeat=3):
        if kind == FamilyId.BIN_HZPM:
            q_ac = q[2 * a + c]
            zero[a, b, c] = q_ac if b == 0 else k * (1 - q_ac)
        elif kind in (FamilyId.BIN_R, FamilyId.BIN_RINV):
            fixed, free = (a, b + c) if kind == FamilyId.BIN_R else (c, a + b)
            value = q[fixed]
            for _ in range(free):
                value = k * (1 - value)
            zero[a, b, c] = value
        else:
            value = q[0]
            for _ in range(a + b + c):
                value = k * (1 - value)
            zero[a, b, c] = value
    table = np.empty((2, 2, 2, 2), dtype=object)
    for (a, b, c), value in zero.items():
        table[a, b, c, 0] = value
        table[a, b, c, 1] = 1 - value
    kernel = TransitionKernel(table)

    needed = [ConditionId.HZPM]
    if kind in (FamilyId.BIN_R, FamilyId.BIN_D4):
        needed.append(ConditionId.R)
    if kind in (FamilyId.BIN_RINV, FamilyId.BIN_D4):
        needed.append(ConditionId.RINV)
    for which in needed:
        if not check_condition(kernel, p, which):
            raise PcaError(f"{kind.value} member fails {which.label}")
    return kernel, p


def family_dimension(kind: FamilyId, n: int) -> int:
    if isinstance(kind, str):
        kind = FamilyId.from_name(kind)
    if n < 2:
        raise PcaError(HelperUtils().invalid_alphabet_err(n))
    m = n - 1
    if kind.is_binary:
        if n != 2:
            raise PcaError(f"{kind.value} is only defined on a binary alphabet")
        return {FamilyId.BIN_HZPM: 4, FamilyId.BIN_R: 2, FamilyId.BIN_RINV: 2, FamilyId.BIN_D4: 1}[kind]
    closed_form = {
        FamilyId.TRIANG: n ** 2 * m ** 2,
        FamilyId.QR_R: n * m ** 3,
        FamilyId.QR_RINV: n * m ** 3,
        FamilyId.QR_D4: m ** 4,
        FamilyId.REV_V: n * m ** 2 * (n + 1) // 2,
        FamilyId.REV_R2: n * m * (n * m + 1) // 2,
        FamilyId.REV_H: n ** 3 * m // 2,
        FamilyId.REV_R2V: n ** 2 * (n ** 2 - 1) // 4,
        FamilyId.REV_R: n * m * (n ** 2 - 3 * n + 4) // 4,
        FamilyId.REV_RV: m ** 2 * (m ** 2 + 1) // 2,
        FamilyId.REV_D4: n * m * (n ** 2 - n + 2) // 8,
    }
    return closed_form[kind]


def family_dimension_all_p(kind: FamilyId, n: int) -> int:
    """Dimension of the union of a family over all positive p."""
    return family_dimension(kind, n) + (n - 1)


_E = DihedralElement
FAMILY_GROUPS = {
    FamilyId.TRIANG: [_E.ID],
    FamilyId.QR_R: [_E.ID],
    FamilyId.QR_RINV: [_E.ID],
    FamilyId.QR_D4: [_E.ID],
    FamilyId.REV_V: [_E.ID, _E.V],
    FamilyId.REV_R2: [_E.ID, _E.R2],
    FamilyId.REV_H: [_E.ID, _E.H],
    FamilyId.REV_R2V: [_E.ID, _E.R2, _E.V, _E.H],
    FamilyId.REV_R: [_E.ID, _E.R, _E.R2, _E.R3],
    FamilyId.REV_RV: [_E.ID, _E.RV],
    FamilyId.REV_D4: list(_E),
}

# slots a, b, c, d whose perturbation must have zero sum
_EXTRA_CONSTRAINED = {
    FamilyId.QR_R: {2},
    FamilyId.QR_RINV: {0},
    FamilyId.QR_D4: {0, 2},
}


def constrained_slots(kind: FamilyId) -> set:
    slots = {1, 3} | _EXTRA_CONSTRAINED.get(kind, set())
    return {g.slot_map()[s] for g in FAMILY_GROUPS[kind] for s in slots}


def basis_orbits(kind: FamilyId, n: int) -> list:
    """Orbits of basis index tuples under the family's group, sorted by
    their smallest member. Each orbit sum spans one free direction."""
    constrained = constrained_slots(kind)
    ranges = [range(n - 1) if s in constrained else range(n) for s in range(4)]
    group = FAMILY_GROUPS[kind]
    seen = set()
    orbits = []
    for index in itertools.product(*ranges):
        if index in seen:
            continue
        orbit = sorted({g.permute(index) for g in group})
        seen.update(orbit)
        orbits.append(orbit)
    return orbits


def _basis_vector(j: int, n: int, zero_sum: bool) -> list:
    vec = [Fraction(0)] * n
    vec[j] = Fraction(1)
    if zero_sum:
        vec[n - 1] = Fraction(-1)
    return vec


def _membership_ok(kind: FamilyId, kernel: TransitionKernel, p: ProbVector) -> bool:
    if not check_condition(kernel, p, ConditionId.HZPM):
        return False
    if kind in (FamilyId.QR_R, FamilyId.QR_D4) and not check_condition(kernel, p, ConditionId.R):
        return False
    if kind in (FamilyId.QR_RINV, FamilyId.QR_D4) and not check_condition(kernel, p, ConditionId.RINV):
        return False
    if kind.name.startswith("REV_"):
        return set(FAMILY_GROUPS[kind]) <= reversibility_report(kernel, p)
    return True


def gen_member(kind: FamilyId, p: ProbVector, free_params, eps=Fraction(1)) -> TransitionKernel:
    """Kernel of the family obtained by moving away from T(a,b,c;d) = p(d)
    along the family's free directions, eps * theta_o for orbit o."""
    helper = HelperUtils()
    if isinstance(kind, str):
        kind = FamilyId.from_name(kind)
    if kind.is_binary:
        raise PcaError(f"use binary_family for {kind.value}")
    n = p.n
    theta = [helper.to_scalar(x) for x in free_params]
    eps = helper.to_scalar(eps)
    orbits = basis_orbits(kind, n)
    dim = family_dimension(kind, n)
    if len(orbits) != dim:
        raise PcaError(f"orbit count {len(orbits)} differs from dimension {dim} for {kind.value}")
    if len(theta) != dim:
        raise DimensionMismatch(helper.dimension_mismatch_err(kind.value, dim, len(theta)))
    constrained = constrained_slots(kind)
    delta = np.zeros((n, n, n, n), dtype=object)
    delta[...] = Fraction(0)
    for weight, orbit in zip(theta, orbits):
        if weight == 0:
            continue
        for index in orbit:
            vecs = [
                np.array(_basis_vector(j, n, s in constrained), dtype=object)
                for s, j in enumerate(index)
            ]
            delta += eps * weight * functools.reduce(np.multiply.outer, vecs)
    table = np.empty((n, n, n, n), dtype=object)
    for a, b, c, d in itertools.product(range(n), repeat=4):
        value = p[d] + delta[a, b, c, d] / (p[a] * p[b] * p[c])
        if not 0 < value < 1:
            raise EpsilonTooLarge(helper.epsilon_too_large_err((a, b, c, d), value))
        table[a, b, c, d] = value
    kernel = TransitionKernel(table)
    if not _membership_ok(kind, kernel, p):
        raise PcaError(f"generated kernel is not a member of {kind.value}")
    return kernel
