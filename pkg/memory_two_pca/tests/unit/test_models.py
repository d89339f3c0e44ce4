import os
import re
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from kernels import (
    ConstraintViolated,
    Divergent,
    HelperUtils,
    OutOfDomain,
    ParamOutOfRange,
    prob_vector_new,
    read_kernel_file,
    uniform_kernel,
)
from models import (
    LeaderPolicy,
    OrientationField,
    TasepKernel,
    TasepSimulation,
    VertexWeights,
    animals_gf,
    animals_kernel,
    coloring_to_orientation,
    eight_vertex_kernel,
    estimate_density,
    orientation_edge_list,
    perimeter_kernel,
    tasep_gap_law,
    tasep_simulate,
)
from simulator import Hzpm, Periodic, SpaceTimeWindow, sample_diagram

'''
to see print statements in pytest run with
$ pytest tests/unit/test_models.py -rP

8-vertex coupling, directed animals and the order-two TASEP
'''

TEST_KERNEL_DIR = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "..", "..", "kernel_files"
)
TEST_EIGHT_VERTEX, TEST_HALF = read_kernel_file(os.path.join(TEST_KERNEL_DIR, "eight_vertex_q9_r2.json"))
TEST_WEIGHTS = VertexWeights(9, 2, 1, 8)
TEST_SEED = 7
TEST_CLASSICAL = TasepKernel("1/2", "1/2")
TEST_Q1 = Fraction(3, 10)

helper = HelperUtils()


def window_from_colors(color, width, height):
    cells = np.full((height, width), -1, dtype=int)
    for t in range(height):
        for i in range(t % 2, width, 2):
            cells[t, i] = color(i, t)
    return SpaceTimeWindow(cells, 2)


class TestEightVertexKernel(object):

    def test_matches_kernel_file(self):
        kernel, q, r = eight_vertex_kernel(9, 2, 1, 8)
        actual = (q, r, kernel == TEST_EIGHT_VERTEX)
        expected = (Fraction(9, 10), Fraction(1, 5), True)
        message = f"8-vertex kernel actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_symmetric_weights_give_q_equal_r(self):
        _, q, r = eight_vertex_kernel(3, 3, 1, 1)
        actual = (q, r)
        expected = (Fraction(3, 4), Fraction(3, 4))
        message = f"(q, r) actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_balanced_weights_give_uniform_kernel(self):
        kernel, _, _ = eight_vertex_kernel(2, 5, 2, 5)
        actual = kernel == uniform_kernel(prob_vector_new("1/2,1/2"))
        expected = True
        message = f"uniform 8-vertex kernel actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_constraint_violated(self):
        with pytest.raises(ConstraintViolated, match=re.escape(helper.constraint_violated_err(10, 5))):
            eight_vertex_kernel(9, 1, 1, 4)


class TestOrientation(object):

    def test_constant_coloring(self):
        vertices, _ = coloring_to_orientation(window_from_colors(lambda i, t: 1, 8, 6))
        actual = (set(vertices["type"]), set(vertices["incoming"]))
        expected = ({"b2"}, {2})
        message = f"constant coloring types actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_checkerboard_coloring(self):
        vertices, _ = coloring_to_orientation(window_from_colors(lambda i, t: t % 2, 8, 6))
        actual = set(vertices["type"])
        expected = {"b1"}
        message = f"checkerboard types actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_two_to_one(self):
        window = sample_diagram(TEST_EIGHT_VERTEX, Hzpm(TEST_HALF), Periodic(), 30, 30, TEST_SEED)
        flipped = SpaceTimeWindow(np.where(window.cells >= 0, 1 - window.cells, -1), 2)
        actual = OrientationField(flipped).apply().equals(OrientationField(window).apply())
        expected = True
        message = f"flipped coloring orientation equal actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_type_frequencies_follow_weights(self):
        window = sample_diagram(TEST_EIGHT_VERTEX, Hzpm(TEST_HALF), Periodic(), 200, 200, TEST_SEED)
        vertices, histogram = coloring_to_orientation(window, TEST_WEIGHTS)
        assert set(vertices["incoming"] % 2) == {0}
        for row in histogram.itertuples():
            actual = abs(row.frequency - row.expected_frequency) < 0.015
            expected = True
            message = f"type {row.type} frequency {row.frequency} against {row.expected_frequency}"
            assert actual == expected, message

    def test_edge_list_of_constant_coloring(self):
        edges = orientation_edge_list(window_from_colors(lambda i, t: 0, 6, 4))
        actual = (len(edges) > 0, set(edges["o"]))
        expected = (True, {1})
        message = f"edge list actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestAnimals(object):

    def test_gf_at_zero(self):
        actual = animals_gf(0)
        expected = (0.0, 0.0, 0.0)
        message = f"generating functions at 0 actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_square_density_value(self):
        gs, _, _ = animals_gf(-0.1)
        actual = abs(-gs - 0.083975) < 1e-6
        expected = True
        message = f"-G_S(-0.1) = {-gs}, close to 0.083975 actual is {actual}"
        assert actual == expected, message

    def test_identity_residual(self):
        _, _, residual = animals_gf(0.1)
        actual = residual < 1e-12
        expected = True
        message = f"residual {residual} below 1e-12 actual is {actual}"
        assert actual == expected, message

    def test_identity_residual_on_grid(self):
        for z in np.linspace(-0.19, 0.24, 50):
            _, _, residual = animals_gf(z)
            actual = residual < 1e-12
            expected = True
            message = f"residual {residual} at z={z} below 1e-12 actual is {actual}"
            assert actual == expected, message

    def test_square_and_triangular_densities_agree(self):
        square, square_err = estimate_density(animals_kernel("square", "1/11"), 400, 600, 100, TEST_SEED, blocks=25)
        triangular, triangular_err = estimate_density(
            animals_kernel("triangular", "1/10"), 400, 600, 100, TEST_SEED, blocks=25
        )
        bound = 3 * np.sqrt(square_err ** 2 + triangular_err ** 2)
        actual = abs(square - triangular) < bound
        expected = True
        message = (
            f"square(1/11) {square} +- {square_err} and triangular(1/10) {triangular} +- "
            f"{triangular_err} within {bound} actual is {actual}"
        )
        assert actual == expected, message

    def test_out_of_domain(self):
        with pytest.raises(OutOfDomain, match=re.escape(helper.out_of_domain_err("G_T", 0.3))):
            animals_gf(0.3)

    def test_kernels(self):
        square = animals_kernel("square", "1/10")
        triangular = animals_kernel("triangular", "1/10")
        actual = (square[0, 1, 0, 1], square[1, 0, 0, 1], triangular[0, 1, 0, 1],
                  triangular[0, 0, 0, 1], square.positive_rates)
        expected = (Fraction(1, 10), Fraction(0), Fraction(0), Fraction(1, 10), False)
        message = f"animal kernel entries actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_perimeter_kernels(self):
        square = perimeter_kernel("square", "1/10", "1/5")
        triangular = perimeter_kernel("triangular", "1/10", "1/5")
        actual = (square[1, 0, 1, 1], square[1, 1, 0, 1], triangular[1, 0, 1, 1], triangular[1, 1, 1, 1])
        expected = (Fraction(3, 10), Fraction(1, 10), Fraction(1, 10), Fraction(3, 10))
        message = f"perimeter kernel entries actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_perimeter_q_range(self):
        message = helper.param_out_of_range_err("q", Fraction(19, 20), 0, Fraction(9, 10))
        with pytest.raises(ParamOutOfRange, match=re.escape(message)):
            perimeter_kernel("square", "1/10", "19/20")

    def test_square_density_by_simulation(self):
        density, stderr = estimate_density(animals_kernel("square", "1/10"), 200, 300, 100, TEST_SEED)
        actual = abs(density - 0.083975) < 0.01
        expected = True
        message = f"simulated density {density} +- {stderr} near 0.083975 actual is {actual}"
        assert actual == expected, message


class TestTasepGapLaw(object):

    def test_classical_geometric(self):
        law = tasep_gap_law(TEST_CLASSICAL, TEST_Q1, cutoff=6)
        actual = (law.probs, law.z)
        expected = ([Fraction(4, 7) * Fraction(3, 7) ** (k - 1) for k in range(1, 7)], Fraction(7, 4))
        message = f"classical gap law actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_classical_law_to_fifty_one(self):
        law = tasep_gap_law(TEST_CLASSICAL, TEST_Q1, cutoff=51)
        actual = (law.probs, sum(law.probs, Fraction(0)) + law.tail)
        expected = ([Fraction(4, 7) * Fraction(3, 7) ** (k - 1) for k in range(1, 52)], Fraction(1))
        message = f"classical gap law to k=51 actual is {actual} and expected is {expected}"
        assert actual == expected, message
        q0 = 1 - TEST_Q1
        for k in range(1, 51):
            actual = (
                law[k] * TEST_Q1 * (1 - TEST_CLASSICAL.move(k))
                + law[k + 1] * q0 * (1 - TEST_CLASSICAL.stay(k + 1))
            )
            expected = law[k + 1] * q0
            message = f"stability identity at k={k} actual is {actual} and expected is {expected}"
            assert actual == expected, message

    def test_tail_mass(self):
        law = tasep_gap_law(TEST_CLASSICAL, TEST_Q1)
        actual = (law.probs, law.tail)
        expected = ([Fraction(4, 7), Fraction(12, 49)], Fraction(9, 49))
        message = f"gap law and tail actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_general_kernel_sums_to_one(self):
        kernel = TasepKernel(["1/2", "1/3", "1/4"], ["1/2", "2/3"])
        law = tasep_gap_law(kernel, TEST_Q1)
        actual = (sum(law.probs, Fraction(0)) + law.tail, law.ratio)
        expected = (Fraction(1), Fraction(27, 56))
        message = f"total mass and tail ratio actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_move_equal_to_q1_diverges(self):
        with pytest.raises(Divergent, match=re.escape(helper.divergent_err(Fraction(1)))):
            tasep_gap_law(TasepKernel("3/10", "3/10"), TEST_Q1)

    def test_transition_constraints(self):
        kernel = TasepKernel(["1/2", "1/3"], "2/3")
        actual = (kernel.transition(0, 1, 1, 0), kernel.transition(5, 7, 8, 6), kernel.transition(5, 7, 8, 7))
        expected = (Fraction(1), Fraction(1, 3), Fraction(0))
        message = f"TASEP transitions actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestTasepSimulation(object):

    def test_gap_and_speed_laws(self):
        run = tasep_simulate(TEST_CLASSICAL, TEST_Q1, 2000, 200, TEST_SEED)
        gaps = run["gap_law"].set_index("k")["frequency"]
        actual = (abs(gaps.loc[1] - 4 / 7) < 0.04, abs(run["speed_frequency"] - 0.3) < 0.02)
        expected = (True, True)
        message = f"gap/speed checks actual is {actual} and expected is {expected}\n{run['gap_law']}"
        assert actual == expected, message

    def test_particle_zero_speed(self):
        run = tasep_simulate(TEST_CLASSICAL, TEST_Q1, 50, 2000, TEST_SEED)
        actual = abs(run["particle_zero_speed"] - 0.3) < 0.05
        expected = True
        message = f"particle 0 speed {run['particle_zero_speed']} near 0.3 actual is {actual}"
        assert actual == expected, message

    def test_gap_histogram_chi_square(self):
        run = tasep_simulate(TEST_CLASSICAL, TEST_Q1, 10000, 1000, TEST_SEED)
        counts = run["gap_law"].set_index("k")["count"]
        observed = [int(counts.get(k, 0)) for k in range(1, 9)]
        observed.append(int(counts[counts.index >= 9].sum()))
        probs = [(4 / 7) * (3 / 7) ** (k - 1) for k in range(1, 9)] + [(3 / 7) ** 8]
        total = sum(observed)
        result = stats.chisquare(observed, [total * x for x in probs])
        actual = (total, result.pvalue >= 0.01)
        expected = (9999, True)
        message = f"gap histogram {observed} p-value {result.pvalue} actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_particle_zero_displacement_is_binomial(self):
        runs = 300
        steps = 100
        values = np.array(
            [tasep_simulate(TEST_CLASSICAL, TEST_Q1, 10, steps, TEST_SEED + r)["displacement"] for r in range(runs)]
        )
        mean, variance = steps * 0.3, steps * 0.3 * 0.7
        actual = (
            abs(values.mean() - mean) < 3 * np.sqrt(variance / runs),
            abs(values.var(ddof=1) - variance) < 3 * variance * np.sqrt(2 / (runs - 1)),
        )
        expected = (True, True)
        message = (
            f"displacement mean {values.mean()} and variance {values.var(ddof=1)} against "
            f"{mean} and {variance} actual is {actual}"
        )
        assert actual == expected, message

    def test_frozen_when_nobody_moves(self):
        gaps = [1, 2, 3, 1, 4]
        simulation = TasepSimulation(TasepKernel("0", "0"), TEST_Q1, 5, TEST_SEED, LeaderPolicy.RING,
                                     initial_gaps=gaps, initial_speeds=[0] * 5)
        run = simulation.apply(50)
        actual = (simulation.gaps.tolist(), run["displacement"])
        expected = (gaps, 0)
        message = f"frozen gaps and displacement actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_ring_conserves_total_gap(self):
        run = tasep_simulate(TEST_CLASSICAL, TEST_Q1, 100, 300, TEST_SEED, LeaderPolicy.RING)
        actual = run["gap_total_end"]
        expected = run["gap_total_start"]
        message = f"ring length actual is {actual} and expected is {expected}"
        assert actual == expected, message
