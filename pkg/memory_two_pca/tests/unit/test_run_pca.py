import io
import os

import pandas as pd
from PIL import Image

from kernels import DihedralElement, read_kernel_file
from invariance import ConditionId, check_condition
from reversibility import FamilyId, binary_family, reverse_kernel
from run_pca import EXIT_FAIL, EXIT_OK, EXIT_USAGE, run

'''
to see print statements in pytest run with
$ pytest tests/unit/test_run_pca.py -rP

command line front end, exit codes and written files
'''

TEST_KERNEL_DIR = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "..", "..", "kernel_files"
)
TEST_EXAMPLE_FILE = os.path.join(TEST_KERNEL_DIR, "example_binary_r.json")
TEST_EIGHT_VERTEX_FILE = os.path.join(TEST_KERNEL_DIR, "eight_vertex_q9_r2.json")
TEST_EXAMPLE, TEST_P = read_kernel_file(TEST_EXAMPLE_FILE)
TEST_EIGHT_VERTEX, TEST_HALF = read_kernel_file(TEST_EIGHT_VERTEX_FILE)
TEST_SEED = 5


class TestCheckCommands(object):

    def test_cond_two_holds(self, capsys):
        code = run(["check", "--kernel", TEST_EXAMPLE_FILE, "--p", "1/3,2/3", "--cond", "R"])
        actual = (code, capsys.readouterr().out.strip())
        expected = (EXIT_OK, "Cond.2: HOLDS")
        message = f"check R actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_cond_three_fails_with_witness(self, capsys):
        code = run(["check", "--kernel", TEST_EXAMPLE_FILE, "--cond", "RINV"])
        out = capsys.readouterr().out
        actual = (code, out.startswith("Cond.3: FAILS at (b,c,d)="))
        expected = (EXIT_FAIL, True)
        message = f"check RINV actual is {actual} and expected is {expected}\n{out}"
        assert actual == expected, message

    def test_condition_table_file(self, tmp_path):
        path = str(tmp_path / "cond1.tsv")
        code = run(["check", "--kernel", TEST_EIGHT_VERTEX_FILE, "--cond", "HZPM", "--table", path])
        df = pd.read_csv(path, sep="\t")
        actual = (code, len(df), int(df["hzpm_flag"].sum()))
        expected = (EXIT_OK, 8, 0)
        message = f"condition table actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_find_p(self, capsys):
        code = run(["find-p", "--kernel", TEST_EIGHT_VERTEX_FILE])
        actual = (code, capsys.readouterr().out.strip())
        expected = (EXIT_OK, "1/2,1/2")
        message = f"find-p actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_dims(self, capsys):
        codes = [run(["dims", "--family", "REV_D4", "--n", "2"]), run(["dims", "--family", "TRIANG", "--n", "2"])]
        actual = (codes, capsys.readouterr().out.split())
        expected = ([EXIT_OK, EXIT_OK], ["1", "4"])
        message = f"dims actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestKernelFiles(object):

    def test_reverse_written_kernel(self, tmp_path):
        path = str(tmp_path / "t_r.json")
        code = run(["reverse", "--kernel", TEST_EXAMPLE_FILE, "--g", "r", "--out", path])
        kernel, p = read_kernel_file(path)
        actual = (code, kernel == reverse_kernel(TEST_EXAMPLE, TEST_P, DihedralElement.R), p == TEST_P)
        expected = (EXIT_OK, True, True)
        message = f"reverse file actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_reverse_needs_its_condition(self, capsys):
        code = run(["reverse", "--kernel", TEST_EXAMPLE_FILE, "--g", "r3"])
        actual = (code, "requires Cond.3 to hold" in capsys.readouterr().err)
        expected = (EXIT_FAIL, True)
        message = f"r3-reverse of the example actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_gen_binary_round_trip(self, tmp_path):
        path = str(tmp_path / "bin_r.json")
        code = run(["gen", "--family", "BIN_R", "--k", "1/2", "--params", "3/4,4/5", "--out", path])
        kernel, p = read_kernel_file(path)
        actual = (code, (kernel, p) == binary_family(FamilyId.BIN_R, "1/2", ["3/4", "4/5"]))
        expected = (EXIT_OK, True)
        message = f"gen round trip actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_gen_random_triang_member(self, tmp_path):
        path = str(tmp_path / "triang.json")
        code = run(["gen", "--family", "TRIANG", "--p", "1/3,2/3", "--seed", str(TEST_SEED), "--out", path])
        kernel, p = read_kernel_file(path)
        actual = (code, check_condition(kernel, p, ConditionId.HZPM).holds)
        expected = (EXIT_OK, True)
        message = f"generated TRIANG member actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_gen_needs_params_or_seed(self):
        actual = run(["gen", "--family", "TRIANG", "--p", "1/3,2/3"])
        expected = EXIT_USAGE
        message = f"gen without parameters exit actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_missing_file(self, tmp_path):
        actual = run(["find-p", "--kernel", str(tmp_path / "nope.json")])
        expected = EXIT_FAIL
        message = f"missing kernel file exit actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_usage_errors(self):
        actual = [
            run(["check", "--cond", "R"]),
            run(["simulate", "--kernel", TEST_EXAMPLE_FILE]),
            run(["no-such-command"]),
        ]
        expected = [EXIT_USAGE] * 3
        message = f"usage error exits actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_bad_flag_values_are_usage_errors(self, capsys):
        cases = [
            (["check", "--kernel", TEST_EXAMPLE_FILE, "--cond", "NOPE"], "--cond"),
            (["dims", "--family", "NOPE", "--n", "2"], "--family"),
            (["gen", "--family", "NOPE", "--seed", "1"], "--family"),
            (["simulate", "--kernel", TEST_EXAMPLE_FILE, "--seed", "1", "--boundary", "bogus"], "--boundary"),
            (["simulate", "--kernel", TEST_EXAMPLE_FILE, "--seed", "1", "--boundary", "fixed:0"], "--boundary"),
            (["simulate", "--kernel", TEST_EXAMPLE_FILE, "--seed", "1", "--init", "random"], "--init"),
            (["lines-test", "--kernel", TEST_EXAMPLE_FILE, "--seed", "1", "--line", "diagonal:3"], "--line"),
            (["lines-test", "--kernel", TEST_EXAMPLE_FILE, "--seed", "1", "--line", "sloped:1,2"], "--line"),
        ]
        actual = []
        for argv, flag in cases:
            code = run(argv)
            actual.append((code, flag in capsys.readouterr().err))
        expected = [(EXIT_USAGE, True)] * len(cases)
        message = f"bad flag value exits actual is {actual} and expected is {expected}"
        assert actual == expected, message


class TestMarginalsCommand(object):

    def test_depth_two_has_witness(self, capsys):
        code = run(["marginals", "--kernel", TEST_EXAMPLE_FILE, "--depth", "2"])
        out = capsys.readouterr().out
        actual = (code, "# non-product at cells" in out)
        expected = (EXIT_OK, True)
        message = f"marginals depth 2 actual is {actual} and expected is {expected}\n{out}"
        assert actual == expected, message

    def test_depth_one_is_product(self, capsys):
        code = run(["marginals", "--kernel", TEST_EXAMPLE_FILE, "--depth", "1"])
        out = capsys.readouterr().out
        actual = (code, "# product law on every subset of up to 3 cells" in out)
        expected = (EXIT_OK, True)
        message = f"marginals depth 1 actual is {actual} and expected is {expected}\n{out}"
        assert actual == expected, message


class TestSamplingCommands(object):

    def test_simulate_header(self, tmp_path):
        path = str(tmp_path / "window.tsv")
        code = run(["simulate", "--kernel", TEST_EIGHT_VERTEX_FILE, "--seed", str(TEST_SEED),
                    "--width", "12", "--height", "6", "--boundary", "periodic", "--out", path])
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
        actual = (code, lines[0], lines[1], len(lines))
        expected = (EXIT_OK, f"# kernel_sha256\t{TEST_EIGHT_VERTEX.digest()}", f"# seed\t{TEST_SEED}", 9)
        message = f"simulate file actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_render(self, tmp_path):
        path = str(tmp_path / "diagram.pgm")
        code = run(["render", "--kernel", TEST_EIGHT_VERTEX_FILE, "--seed", str(TEST_SEED),
                    "--width", "20", "--height", "10", "--boundary", "periodic", "--out", path])
        actual = (code, Image.open(path).size)
        expected = (EXIT_OK, (20, 10))
        message = f"render actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_ergodicity_table_and_docx(self, tmp_path):
        path = str(tmp_path / "tv.tsv")
        docx = str(tmp_path / "tv.docx")
        code = run(["ergodicity", "--kernel", TEST_EIGHT_VERTEX_FILE, "--half-width", "1", "--steps", "5",
                    "--out", path, "--docx", docx])
        df = pd.read_csv(path, sep="\t", comment="#")
        actual = (code, list(df["t"]), bool(df["within_bound"].all()), os.path.exists(docx))
        expected = (EXIT_OK, [0, 1, 2, 3, 4, 5], True, True)
        message = f"ergodicity actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_lines_test_exit_follows_verdicts(self, tmp_path):
        path = str(tmp_path / "lines.tsv")
        code = run(["lines-test", "--kernel", TEST_EIGHT_VERTEX_FILE, "--seed", str(TEST_SEED),
                    "--width", "40", "--height", "20", "--samples", "10", "--boundary", "periodic",
                    "--line", "horizontal:10", "--line", "vertical:11", "--out", path])
        df = pd.read_csv(path, sep="\t", comment="#")
        actual = (len(df), code)
        expected = (4, EXIT_OK if df["passed"].all() else EXIT_FAIL)
        message = f"lines-test actual is {actual} and expected is {expected}\n{df}"
        assert actual == expected, message


class TestModelCommands(object):

    def test_eight_vertex_parameters(self, capsys):
        code = run(["model-8v", "--weights", "9,2,1,8"])
        actual = (code, capsys.readouterr().out.splitlines()[:2])
        expected = (EXIT_OK, ["q\t9/10", "r\t1/5"])
        message = f"model-8v actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_eight_vertex_constraint(self):
        actual = run(["model-8v", "--weights", "9,1,1,4"])
        expected = EXIT_FAIL
        message = f"unbalanced weights exit actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_tasep_classical_normalization(self, capsys):
        code = run(["model-tasep", "--move", "1/2", "--stay", "1/2", "--q1", "3/10"])
        actual = (code, capsys.readouterr().out.splitlines()[:2])
        expected = (EXIT_OK, ["Z\t7/4", "tail\t9/49"])
        message = f"model-tasep actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_tasep_divergent(self):
        actual = run(["model-tasep", "--move", "3/10", "--stay", "3/10", "--q1", "3/10"])
        expected = EXIT_FAIL
        message = f"divergent gap law exit actual is {actual} and expected is {expected}"
        assert actual == expected, message

    def test_animals_generating_functions(self, capsys):
        codes = (run(["model-animals", "--z", "0.1"]), run(["model-animals", "--z", "0.3"]))
        df = pd.read_csv(io.StringIO(capsys.readouterr().out), sep="\t")
        actual = (codes, float(df["residual"].iloc[0]) < 1e-12)
        expected = ((EXIT_OK, EXIT_FAIL), True)
        message = f"model-animals actual is {actual} and expected is {expected}"
        assert actual == expected, message
