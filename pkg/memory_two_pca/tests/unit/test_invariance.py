import os
import re
from fractions import Fraction

import pytest

from kernels import (
    CommutationViolation,
    DimensionMismatch,
    FiniteDistribution,
    HelperUtils,
    StochasticMatrix,
    kernel_from_function,
    prob_vector_new,
    read_kernel_file,
    uniform_kernel,
)
from invariance import (
    ConditionCheck,
    ConditionId,
    HzmcSpec,
    check_condition,
    check_hzmc,
    check_hzmc_quasirev,
    commuting_invariant_vector,
    condition_table,
    find_hzpm,
    gen_hzmc_member,
    hzmc_from_kernel,
    time_reversal,
    zigzag_pushforward,
)

'''
to see print statements in pytest run with
$ pytest tests/unit/test_invariance.py -rP

product (HZPM) and Markov (HZMC) invariance conditions
'''

TEST_KERNEL_DIR = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "..", "..", "kernel_files"
)
TEST_EXAMPLE, TEST_P = read_kernel_file(os.path.join(TEST_KERNEL_DIR, "example_binary_r.json"))
TEST_EIGHT_VERTEX, TEST_HALF = read_kernel_file(os.path.join(TEST_KERNEL_DIR, "eight_vertex_q9_r2.json"))
TEST_F = StochasticMatrix([["1/2", "1/2"], ["1/4", "3/4"]])
TEST_B = StochasticMatrix(TEST_F.dot(TEST_F))
TEST_SPEC = HzmcSpec(TEST_F, TEST_B)

# T_r of the example kernel, d = 0 column
TEST_EXAMPLE_R_ZERO = {
    (0, 0, 0): Fraction(3, 4),
    (0, 0, 1): Fraction(1, 8),
    (0, 1, 0): Fraction(4, 5),
    (0, 1, 1): Fraction(1, 10),
    (1, 0, 0): Fraction(1, 8),
    (1, 0, 1): Fraction(7, 16),
    (1, 1, 0): Fraction(1, 10),
    (1, 1, 1): Fraction(9, 20),
}

helper = HelperUtils()


def noisy_xor(q):
    return kernel_from_function(2, lambda a, b, c, d: q if d == (a + b + c) % 2 else 1 - q)


def example_r_reverse():
    return kernel_from_function(
        2, lambda a, b, c, d: TEST_EXAMPLE_R_ZERO[(a, b, c)] if d == 0 else 1 - TEST_EXAMPLE_R_ZERO[(a, b, c)]
    )


def off_triang_kernel():
    rows = {(0, 0, 0): ["3/4", "1/4"], (0, 1, 0): ["1/2", "1/2"]}

    def entry(a, b, c, d):
        if (a, b, c) in rows:
            return rows[(a, b, c)][d]
        return "1/2"

    return kernel_from_function(2, entry)


class TestCheckCondition(object):

    def test_eight_vertex_hzpm(self):
        actual = check_condition(TEST_EIGHT_VERTEX, TEST_HALF, ConditionId.HZPM).holds
        expected = True
        message = f"8-vertex Cond.1 actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_uniform_kernel_all_three(self):
        p = prob_vector_new("1/3,2/3")
        kernel = uniform_kernel(p)
        actual = [bool(check_condition(kernel, p, w)) for w in (ConditionId.HZPM, ConditionId.R, ConditionId.RINV)]
        expected = [True, True, True]
        message = f"uniform kernel conditions actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_example_kernel(self):
        actual = [bool(check_condition(TEST_EXAMPLE, TEST_P, w)) for w in (ConditionId.HZPM, ConditionId.R, ConditionId.RINV)]
        expected = [True, True, False]
        message = f"example kernel conditions actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_example_rinv_witness(self):
        result = check_condition(TEST_EXAMPLE, TEST_P, ConditionId.RINV)
        actual = (result.witness, result.lhs, result.rhs)
        expected = ((0, 0, 0), Fraction(47, 60), Fraction(1, 3))
        message = f"Cond.3 witness actual is {actual} and expected is {expected}"
        assert actual == expected, message
        assert result.describe().startswith("Cond.3: FAILS at (b,c,d)=(0,0,0)")

    def test_condition_table_flags(self):
        result = ConditionCheck(ConditionId.RINV, p=TEST_P, troubleshoot=True).apply(TEST_EXAMPLE)
        actual = list(result.table.columns)
        expected = ["b", "c", "d", "lhs", "rhs", "rinv_flag"]
        message = f"table columns actual is {actual} and expected is {expected}"
        assert actual == expected, message
        assert result.table["rinv_flag"].sum() > 0

    def test_condition_table_wrapper(self):
        df = condition_table(TEST_EIGHT_VERTEX, TEST_HALF, ConditionId.HZPM)
        actual = (len(df), int(df["hzpm_flag"].sum()))
        expected = (8, 0)
        message = f"HZPM table of the 8-vertex kernel actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestFindHzpm(object):

    def test_eight_vertex(self):
        actual = find_hzpm(TEST_EIGHT_VERTEX)
        expected = prob_vector_new("1/2,1/2")
        message = f"8-vertex p actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_memoryless(self):
        p = prob_vector_new("1/3,2/3")
        actual = find_hzpm(uniform_kernel(p))
        expected = p
        message = f"memoryless kernel p actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_blocks_disagree(self):
        actual = find_hzpm(off_triang_kernel())
        expected = None
        message = f"perturbed kernel p actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_agrees_with_check_condition(self):
        p = find_hzpm(TEST_EXAMPLE)
        actual = (p, check_condition(TEST_EXAMPLE, p, ConditionId.HZPM).holds)
        expected = (TEST_P, True)
        message = f"find_hzpm round trip actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestTimeReversal(object):

    def test_two_state_chain_is_reversible(self):
        actual = time_reversal(TEST_F, prob_vector_new("1/3,2/3"))
        expected = TEST_F
        message = f"time reversal actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_doubly_stochastic_cycle_is_transposed(self):
        m = StochasticMatrix([["1/2", "1/2", "0"], ["0", "1/2", "1/2"], ["1/2", "0", "1/2"]])
        actual = time_reversal(m, prob_vector_new("1/3,1/3,1/3"))
        expected = StochasticMatrix([["1/2", "0", "1/2"], ["1/2", "1/2", "0"], ["0", "1/2", "1/2"]])
        message = f"time reversal actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestCommutingInvariantVector(object):

    def test_constant_rows(self):
        p = prob_vector_new("1/4,3/4")
        spec = HzmcSpec.from_p(p)
        actual = spec.rho
        expected = p
        message = f"rho of constant rows actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_f_equals_b(self):
        actual = commuting_invariant_vector(TEST_F, TEST_F)
        expected = prob_vector_new("1/3,2/3")
        message = f"rho actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_not_commuting(self):
        other = StochasticMatrix([["1/3", "2/3"], ["1/2", "1/2"]])
        with pytest.raises(CommutationViolation, match=re.escape(helper.not_commuting_err((0, 0)))):
            commuting_invariant_vector(TEST_F, other)

    def test_distinct_commuting_pair(self):
        actual = TEST_SPEC.rho
        expected = prob_vector_new("1/3,2/3")
        message = f"rho of (F, F^2) actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestCheckHzmc(object):

    def test_product_special_case(self):
        actual = check_hzmc(TEST_EXAMPLE, HzmcSpec.from_p(TEST_P)).holds
        expected = True
        message = f"Cond.4 with constant rows actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_generated_member(self):
        kernel = gen_hzmc_member(TEST_SPEC, ["1", "-1", "1/2", "2"], eps="1/40")
        actual = check_hzmc(kernel, TEST_SPEC).holds
        expected = True
        message = f"Cond.4 on generated member actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_example_r_reverse_is_not_product(self):
        actual = check_hzmc(example_r_reverse(), HzmcSpec.from_p(TEST_P)).holds
        expected = False
        message = f"Cond.4 on T_r actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch, match=re.escape(helper.dimension_mismatch_err("HZMC", 4, 3))):
            gen_hzmc_member(TEST_SPEC, [0, 0, 0])


class TestHzmcQuasiReversibility(object):

    def test_product_case_matches_cond_two_and_three(self):
        spec = HzmcSpec.from_p(TEST_P)
        actual = (
            check_hzmc_quasirev(TEST_EXAMPLE, spec, ConditionId.R).holds,
            check_hzmc_quasirev(TEST_EXAMPLE, spec, "RINV").holds,
        )
        expected = (True, False)
        message = f"Cond.5/Cond.6 actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_noisy_xor_both_directions(self):
        spec = HzmcSpec.from_p(prob_vector_new("1/2,1/2"))
        kernel = noisy_xor(Fraction(1, 5))
        actual = (
            check_hzmc_quasirev(kernel, spec, ConditionId.R).holds,
            check_hzmc_quasirev(kernel, spec, ConditionId.RINV).holds,
        )
        expected = (True, True)
        message = f"noisy xor Cond.5/Cond.6 actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_markov_baseline_fails_cond_five(self):
        kernel = gen_hzmc_member(TEST_SPEC, [0, 0, 0, 0])
        result = check_hzmc_quasirev(kernel, TEST_SPEC, ConditionId.R)
        actual = (result.holds, result.witness, result.lhs, result.rhs)
        expected = (False, (0, 0, 0), Fraction(1, 2), Fraction(118, 231))
        message = f"Cond.5 on baseline actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_member_with_r(self):
        kernel = gen_hzmc_member(TEST_SPEC, ["1", "-2"], eps="1/50", with_r=True)
        actual = (
            check_hzmc(kernel, TEST_SPEC).holds,
            check_hzmc_quasirev(kernel, TEST_SPEC, ConditionId.R).holds,
        )
        expected = (True, True)
        message = f"Cond.4/Cond.5 on r-member actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestHzmcFromKernel(object):

    def test_example_r_reverse_gives_product_form(self):
        found = hzmc_from_kernel(example_r_reverse())
        assert found is not None, "expected the product form to be found"
        spec, t_rinv, _ = found
        actual = (spec.rho, spec.f == spec.b, t_rinv == TEST_EXAMPLE)
        expected = (TEST_P, True, True)
        message = f"hzmc_from_kernel(T_r) actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_round_trip_of_r_members(self):
        for seed in range(10):
            params = [Fraction((seed * 7 + 3 * i) % 11 - 5, 5) for i in range(2)]
            member = gen_hzmc_member(TEST_SPEC, params, eps="1/60", with_r=True)
            f = TEST_SPEC.f
            rotated = kernel_from_function(
                2, lambda d, a, b, c: f[b, c] / f[a, d] * member[a, b, c, d]
            )
            found = hzmc_from_kernel(rotated)
            assert found is not None, f"no HZMC found for member {seed}"
            spec, t_rinv, _ = found
            actual = (spec == TEST_SPEC, t_rinv == member)
            expected = (True, True)
            message = f"round trip {seed} actual is {actual} and expected is {expected}"
            assert actual == expected, message

    def test_generic_kernel(self):
        actual = hzmc_from_kernel(off_triang_kernel())
        expected = None
        message = f"generic kernel actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestZigzagPushforward(object):

    def test_eight_vertex_half_width_three(self):
        actual = zigzag_pushforward(TEST_EIGHT_VERTEX, TEST_HALF, 3)
        expected = FiniteDistribution.product(TEST_HALF, 7)
        message = f"pushforward differs at {actual.first_difference(expected)}"
        assert actual == expected, message

    def test_off_triang_kernel_moves(self):
        p = prob_vector_new("1/2,1/2")
        actual = zigzag_pushforward(off_triang_kernel(), p, 1) == FiniteDistribution.product(p, 3)
        expected = False
        message = f"pushforward equals product actual is {actual} and expected is {expected}"
        assert actual == expected, message
