import argparse
import os
import sys
from fractions import Fraction

import numpy as np
import pandas as pd

from kernels import (
    DihedralElement,
    EpsilonTooLarge,
    HelperUtils,
    PcaError,
    kernel_to_json,
    prob_vector_new,
    read_kernel_file,
    stochastic_matrix_new,
    write_kernel_file,
)
from invariance import (
    ConditionCheck,
    ConditionId,
    HzmcSpec,
    check_condition,
    find_hzpm,
    gen_hzmc_member,
    hzmc_dimension,
)
from reversibility import (
    FamilyId,
    binary_family,
    family_dimension,
    family_dimension_all_p,
    gen_member,
    report_frame,
    reverse_kernel,
)
from marginals import non_product_witness, rotated_marginal
from simulator import (
    Constant,
    Fixed,
    Hzmc,
    Hzpm,
    IidP,
    LineSpec,
    Periodic,
    ergodicity_tv,
    line_batch_report,
    render_pgm,
    sample_diagram,
)
from models import (
    Lattice,
    LeaderPolicy,
    TasepKernel,
    VertexWeights,
    animals_gf,
    animals_kernel,
    coloring_to_orientation,
    eight_vertex_kernel,
    estimate_density,
    perimeter_kernel,
    tasep_gap_law,
    tasep_simulate,
)
from reports import (
    ErgodicityReport,
    LineTestReport,
    float_columns,
    frame_to_text,
    provenance_header,
    save_report,
)
import run_pca_config

PACKAGE_VERSION = run_pca_config.PACKAGE_VERSION
SIGNIFICANCE = run_pca_config.SIGNIFICANCE
STATE_LIMIT = run_pca_config.STATE_LIMIT
DEFAULT_WIDTH = run_pca_config.DEFAULT_WIDTH
DEFAULT_HEIGHT = run_pca_config.DEFAULT_HEIGHT
DEFAULT_SAMPLES = run_pca_config.DEFAULT_SAMPLES
DEFAULT_DEPTH = run_pca_config.DEFAULT_DEPTH
ANIMALS_BURN_IN = run_pca_config.ANIMALS_BURN_IN
ANIMALS_BLOCKS = run_pca_config.ANIMALS_BLOCKS
TASEP_PARTICLES = run_pca_config.TASEP_PARTICLES
TASEP_STEPS = run_pca_config.TASEP_STEPS
REPORT_DIR = run_pca_config.REPORT_DIR
TROUBLESHOOT_MODE = run_pca_config.TROUBLESHOOT_MODE

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

PRODUCT_CONDITIONS = (ConditionId.HZPM, ConditionId.R, ConditionId.RINV)
HZMC_FAMILIES = {"HZMC": False, "HZMC_R": True}
helper = HelperUtils()


def emit(text: str, out: str = None):
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text if text.endswith("\n") else text + "\n")
        print(f"wrote {out}")
    else:
        print(text)


def load_kernel(args) -> tuple:
    kernel, p = read_kernel_file(args.kernel)
    if getattr(args, "p", None):
        p = prob_vector_new(args.p)
    return kernel, p


def require_p(p):
    if p is None:
        raise PcaError("a probability vector is needed, pass --p or add 'p' to the kernel file")
    return p


def parse_matrix(text: str):
    """'1/2,1/2;1/4,3/4' -> StochasticMatrix."""
    return stochastic_matrix_new([helper.parse_scalar_list(row) for row in text.split(";") if row.strip()])


def hzmc_spec(args) -> HzmcSpec:
    if not args.f or not args.b:
        raise PcaError("HZMC conditions need both --f and --b")
    return HzmcSpec(parse_matrix(args.f), parse_matrix(args.b))


def parse_line(text: str) -> LineSpec:
    """horizontal:T, vertical:I, sloped:DX,DT[,X0,T0], zigzag:T0,T1,..., vertical-zigzag:I[,T0]."""
    kind, _, rest = text.partition(":")
    values = [int(x) for x in rest.split(",") if x.strip()]
    kind = kind.strip().lower()
    if kind == "horizontal" and len(values) == 1:
        return LineSpec.horizontal(values[0])
    if kind == "vertical" and len(values) == 1:
        return LineSpec.vertical(values[0])
    if kind == "sloped" and len(values) in (2, 4):
        return LineSpec.sloped(*values)
    if kind == "zigzag" and len(values) >= 2:
        return LineSpec.zigzag(values)
    if kind == "vertical-zigzag" and len(values) in (1, 2):
        return LineSpec.vertical_zigzag(*values)
    raise PcaError(f"cannot read line {text!r}")


def line_arg(text: str) -> LineSpec:
    try:
        return parse_line(text)
    except (PcaError, ValueError):
        raise argparse.ArgumentTypeError(
            f"cannot read line {text!r}, use horizontal:T, vertical:I, sloped:DX,DT[,X0,T0], "
            "zigzag:T0,T1,... or vertical-zigzag:I[,T0]"
        )


def condition_arg(text: str) -> ConditionId:
    try:
        return ConditionId.from_name(text)
    except (PcaError, ValueError):
        names = ", ".join(c.name for c in ConditionId)
        raise argparse.ArgumentTypeError(f"unknown condition {text!r}, choose from {names}")


def family_arg(text: str) -> str:
    name = text.strip().upper()
    if name in HZMC_FAMILIES:
        return name
    try:
        return FamilyId.from_name(name).value
    except PcaError:
        names = ", ".join([f.value for f in FamilyId] + list(HZMC_FAMILIES))
        raise argparse.ArgumentTypeError(f"unknown family {text!r}, choose from {names}")


def init_arg(text: str) -> tuple:
    """hzpm, hzmc or constant:S -> (name, state)."""
    name, _, value = text.strip().lower().partition(":")
    if name in ("hzpm", "hzmc") and not value:
        return name, None
    if name == "constant":
        try:
            return name, int(value or 0)
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"unknown initial condition {text!r}, use hzpm, hzmc or constant:S")


def boundary_arg(text: str) -> tuple:
    """periodic, iid or fixed:L,R -> (name, (L, R) or None)."""
    name, _, value = text.strip().lower().partition(":")
    if name in ("periodic", "iid") and not value:
        return name, None
    if name == "fixed":
        try:
            left, right = (int(x) for x in value.split(","))
            return name, (left, right)
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(f"unknown boundary {text!r}, use periodic, iid or fixed:L,R")


def init_policy(args, p, spec=None):
    name, state = args.init
    if name == "hzpm":
        return Hzpm(require_p(p))
    if name == "constant":
        return Constant(state)
    return Hzmc(spec if spec is not None else hzmc_spec(args))


def boundary_policy(args, p):
    name, sides = args.boundary
    if name == "periodic":
        return Periodic()
    if name == "iid":
        return IidP(require_p(p))
    return Fixed(*sides)


def window_text(window) -> str:
    rows = []
    for t in range(window.height):
        rows.append("\t".join("." if s < 0 else str(int(s)) for s in window.cells[t]))
    return "\n".join(rows)


def random_params(dim: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [Fraction(int(k), 20) for k in rng.integers(-20, 21, size=dim)]


def shrink_until_member(build, eps: Fraction, tries: int = 40):
    for _ in range(tries):
        try:
            return build(eps), eps
        except EpsilonTooLarge:
            eps /= 2
    raise EpsilonTooLarge(f"no admissible eps found after {tries} halvings")


def cmd_check(args) -> int:
    kernel, p = load_kernel(args)
    which = args.cond
    if which in PRODUCT_CONDITIONS:
        result = check_condition(kernel, require_p(p), which)
    else:
        spec = hzmc_spec(args)
        result = ConditionCheck(which, spec=spec, f=spec.f, b=spec.b, troubleshoot=TROUBLESHOOT_MODE).apply(kernel)
    print(result.describe())
    if args.table:
        table = result.table.copy()
        for col in ("lhs", "rhs"):
            table[col] = [helper.format_scalar(x) for x in table[col]]
        emit(frame_to_text(table), args.table)
    return EXIT_OK if result else EXIT_FAIL


def cmd_find_p(args) -> int:
    kernel, _ = read_kernel_file(args.kernel)
    p = find_hzpm(kernel)
    if p is None:
        print("none")
        return EXIT_FAIL
    print(",".join(helper.format_scalar(x) for x in p))
    return EXIT_OK


def cmd_reverse(args) -> int:
    kernel, p = load_kernel(args)
    p = require_p(p)
    g = DihedralElement.from_name(args.g)
    emit(kernel_to_json(reverse_kernel(kernel, p, g), p), args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    kernel, p = load_kernel(args)
    emit(frame_to_text(report_frame(kernel, require_p(p))), args.out)
    return EXIT_OK


def cmd_dims(args) -> int:
    name = args.family
    if name in HZMC_FAMILIES:
        print(hzmc_dimension(args.n, with_r=HZMC_FAMILIES[name]))
    elif args.all_p:
        print(family_dimension_all_p(FamilyId.from_name(name), args.n))
    else:
        print(family_dimension(FamilyId.from_name(name), args.n))
    return EXIT_OK


def cmd_gen(args) -> int:
    name = args.family
    eps = helper.to_scalar(args.eps)
    if name in HZMC_FAMILIES:
        spec = hzmc_spec(args)
        dim = hzmc_dimension(spec.n, with_r=HZMC_FAMILIES[name])
        params = helper.parse_scalar_list(args.params) if args.params else random_params(dim, args.seed)
        kernel, eps = shrink_until_member(
            lambda e: gen_hzmc_member(spec, params, e, with_r=HZMC_FAMILIES[name]), eps
        )
        p = None
    else:
        kind = FamilyId.from_name(name)
        if kind.is_binary:
            if args.k is None or not args.params:
                raise PcaError(f"{kind.value} needs --k and --params")
            kernel, p = binary_family(kind, args.k, helper.parse_scalar_list(args.params))
        else:
            p = prob_vector_new(args.p) if args.p else None
            p = require_p(p)
            dim = family_dimension(kind, p.n)
            params = helper.parse_scalar_list(args.params) if args.params else random_params(dim, args.seed)
            kernel, eps = shrink_until_member(lambda e: gen_member(kind, p, params, e), eps)
    if args.out:
        write_kernel_file(args.out, kernel, p)
        print(f"wrote {args.out}")
    else:
        print(kernel_to_json(kernel, p))
    return EXIT_OK


def cmd_marginals(args) -> int:
    kernel, p = load_kernel(args)
    dist = rotated_marginal(kernel, require_p(p), args.depth)
    lines = ["\t".join(f"{i},{j}" for i, j in dist.labels), dist.to_text()]
    witness = non_product_witness(dist)
    if witness is None:
        lines.append("# product law on every subset of up to 3 cells")
    else:
        labels, key, joint, product = witness
        lines.append(
            f"# non-product at cells {labels} values {key}: "
            f"{helper.format_scalar(joint)} against {helper.format_scalar(product)}"
        )
    emit("\n".join(lines), args.out)
    return EXIT_OK


def sample_from_args(args):
    kernel, p = load_kernel(args)
    window = sample_diagram(
        kernel, init_policy(args, p), boundary_policy(args, p), args.width, args.height, args.seed,
        troubleshoot=TROUBLESHOOT_MODE,
    )
    return kernel, p, window


def cmd_simulate(args) -> int:
    kernel, _, window = sample_from_args(args)
    emit(provenance_header(kernel, args.seed, PACKAGE_VERSION) + "\n" + window_text(window), args.out)
    return EXIT_OK


def cmd_render(args) -> int:
    _, _, window = sample_from_args(args)
    render_pgm(window, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_ergodicity(args) -> int:
    kernel, p = load_kernel(args)
    p = require_p(p)
    df = ergodicity_tv(kernel, p, args.half_width, args.steps, state_limit=args.state_limit)
    emit(frame_to_text(float_columns(df, ["distance", "bound"]), provenance_header(kernel, None, PACKAGE_VERSION)),
         args.out)
    if args.docx:
        document = ErgodicityReport(kernel, p, args.half_width, PACKAGE_VERSION).create_report(args.docx, df)
        print(f"wrote {save_report(document, os.path.basename(args.docx), os.path.dirname(args.docx) or REPORT_DIR)}")
    return EXIT_OK if df["within_bound"].all() else EXIT_FAIL


def cmd_lines_test(args) -> int:
    kernel, p = load_kernel(args)
    p = require_p(p)
    lines = args.line
    init, boundary = init_policy(args, p), boundary_policy(args, p)
    windows = [
        sample_diagram(kernel, init, boundary, args.width, args.height, args.seed + k)
        for k in range(args.samples)
    ]
    df = line_batch_report(windows, lines, p, args.significance, order=args.order)
    emit(frame_to_text(df, provenance_header(kernel, args.seed, PACKAGE_VERSION)), args.out)
    if args.docx:
        report = LineTestReport(kernel, p, args.seed, PACKAGE_VERSION)
        document = report.create_report(args.docx, df, windows[0])
        print(f"wrote {save_report(document, os.path.basename(args.docx), os.path.dirname(args.docx) or REPORT_DIR)}")
    return EXIT_OK if df["passed"].all() else EXIT_FAIL


def cmd_model_8v(args) -> int:
    weights = helper.parse_scalar_list(args.weights)
    if len(weights) != 4:
        raise PcaError(helper.shape_err(4, len(weights)))
    kernel, q, r = eight_vertex_kernel(*weights)
    print(f"q\t{helper.format_scalar(q)}")
    print(f"r\t{helper.format_scalar(r)}")
    half = prob_vector_new("1/2,1/2")
    if args.out:
        write_kernel_file(args.out, kernel, half)
        print(f"wrote {args.out}")
    if args.seed is not None:
        window = sample_diagram(kernel, Hzpm(half), Periodic(), args.width, args.height, args.seed)
        _, histogram = coloring_to_orientation(window, VertexWeights(*weights))
        print(provenance_header(kernel, args.seed, PACKAGE_VERSION))
        print(frame_to_text(histogram), end="")
    return EXIT_OK


def cmd_model_animals(args) -> int:
    if args.z is not None:
        gs, gt, residual = animals_gf(args.z)
        print(frame_to_text(pd.DataFrame([{"z": args.z, "G_S": gs, "G_T": gt, "residual": residual}])), end="")
        return EXIT_OK
    if args.p is None:
        raise PcaError("model-animals needs --p or --z")
    lattice = Lattice.from_name(args.lattice)
    if args.q is None:
        kernel = animals_kernel(lattice, args.p)
    else:
        kernel = perimeter_kernel(lattice, args.p, args.q)
    if args.out:
        write_kernel_file(args.out, kernel)
        print(f"wrote {args.out}")
    p = float(helper.to_scalar(args.p))
    if args.q is None:
        gs, gt, _ = animals_gf(-p)
        print(f"predicted_density\t{-(gs if lattice is Lattice.SQUARE else gt):.6f}")
    if args.seed is not None:
        density, stderr = estimate_density(
            kernel, args.width, args.height, args.burn_in, args.seed, ANIMALS_BLOCKS, TROUBLESHOOT_MODE
        )
        print(provenance_header(kernel, args.seed, PACKAGE_VERSION))
        print(f"density\t{density:.6f}")
        print(f"stderr\t{stderr:.6f}")
        if args.q is not None:
            print(f"perimeter_estimate\t{density - float(helper.to_scalar(args.q)):.6f}")
    return EXIT_OK


def cmd_model_tasep(args) -> int:
    move = helper.parse_scalar_list(args.move)
    stay = helper.parse_scalar_list(args.stay)
    kernel = TasepKernel(move, stay)
    law = tasep_gap_law(kernel, args.q1, args.cutoff)
    print(f"Z\t{helper.format_scalar(law.z)}")
    print(f"tail\t{helper.format_scalar(law.tail)}")
    print(frame_to_text(law.to_frame()), end="")
    if args.seed is not None:
        run = tasep_simulate(kernel, args.q1, args.particles, args.steps, args.seed, LeaderPolicy(args.leader))
        print(f"seed\t{args.seed}")
        print(f"speed_frequency\t{run['speed_frequency']:.6f}")
        print(f"particle_zero_speed\t{run['particle_zero_speed']:.6f}")
        print(f"displacement\t{run['displacement']}")
        print(frame_to_text(run["gap_law"]), end="")
    return EXIT_OK


def kernel_options(parser, need_p: bool = True):
    args = parser.add_argument_group("Options")
    args.add_argument("--kernel", required=True, type=str, help="kernel JSON file")
    if need_p:
        args.add_argument("--p", type=str, default=None, help="probability vector, e.g. 1/3,2/3")
    return args


def sampling_options(args, seed_required: bool = True):
    args.add_argument("--seed", required=seed_required, type=int, default=None, help="random seed")
    args.add_argument("--width", type=int, default=DEFAULT_WIDTH, help="window width W")
    args.add_argument("--height", type=int, default=DEFAULT_HEIGHT, help="window height H")


def diagram_options(args):
    args.add_argument("--init", type=init_arg, default="hzpm", help="hzpm, constant:S or hzmc")
    args.add_argument("--boundary", type=boundary_arg, default="iid", help="periodic, iid or fixed:L,R")
    args.add_argument("--f", type=str, default=None, help="forward matrix, rows separated by ;")
    args.add_argument("--b", type=str, default=None, help="backward matrix, rows separated by ;")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="run_pca.py", description="memory-two PCA toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("check", help="exact invariance condition check")
    args = kernel_options(sub)
    args.add_argument("--cond", required=True, type=condition_arg, help="HZPM, R, RINV, HZMC, HZMC_R, HZMC_RINV, EIG_F, EIG_B")
    args.add_argument("--f", type=str, default=None, help="forward matrix for HZMC conditions")
    args.add_argument("--b", type=str, default=None, help="backward matrix for HZMC conditions")
    args.add_argument("--table", type=str, default=None, help="write the per-tuple table here")
    sub.set_defaults(func=cmd_check)

    sub = commands.add_parser("find-p", help="p with an invariant HZPM")
    kernel_options(sub, need_p=False)
    sub.set_defaults(func=cmd_find_p)

    sub = commands.add_parser("reverse", help="g-reverse kernel")
    args = kernel_options(sub)
    args.add_argument("--g", required=True, choices=[g.value for g in DihedralElement], help="symmetry")
    args.add_argument("--out", type=str, default=None, help="output kernel file")
    sub.set_defaults(func=cmd_reverse)

    sub = commands.add_parser("report", help="quasi-reversibility and reversibility table")
    args = kernel_options(sub)
    args.add_argument("--out", type=str, default=None, help="output text file")
    sub.set_defaults(func=cmd_report)

    sub = commands.add_parser("dims", help="family dimension")
    args = sub.add_argument_group("Options")
    args.add_argument("--family", required=True, type=family_arg, help="family name")
    args.add_argument("--n", required=True, type=int, help="alphabet size")
    args.add_argument("--all-p", action="store_true", help="union over all p")
    sub.set_defaults(func=cmd_dims)

    sub = commands.add_parser("gen", help="generate a family member")
    args = sub.add_argument_group("Options")
    args.add_argument("--family", required=True, type=family_arg, help="family name, HZMC or HZMC_R")
    args.add_argument("--p", type=str, default=None, help="probability vector")
    args.add_argument("--k", type=str, default=None, help="p(0)/p(1) for binary families")
    args.add_argument("--params", type=str, default=None, help="free parameters")
    args.add_argument("--eps", type=str, default="1", help="step away from the baseline")
    args.add_argument("--seed", type=int, default=None, help="draw the free parameters at random")
    args.add_argument("--f", type=str, default=None, help="forward matrix for HZMC families")
    args.add_argument("--b", type=str, default=None, help="backward matrix for HZMC families")
    args.add_argument("--out", type=str, default=None, help="output kernel file")
    sub.set_defaults(func=cmd_gen)

    sub = commands.add_parser("marginals", help="exact rotated marginal")
    args = kernel_options(sub)
    args.add_argument("--depth", type=int, default=DEFAULT_DEPTH, help="diamond depth m")
    args.add_argument("--out", type=str, default=None, help="output text file")
    sub.set_defaults(func=cmd_marginals)

    for name, func, help_text in (
        ("simulate", cmd_simulate, "sample a space-time diagram"),
        ("render", cmd_render, "sample and write a PGM image"),
    ):
        sub = commands.add_parser(name, help=help_text)
        args = kernel_options(sub)
        sampling_options(args)
        diagram_options(args)
        args.add_argument("--out", required=name == "render", type=str, default=None, help="output file")
        sub.set_defaults(func=func)

    sub = commands.add_parser("ergodicity", help="exact distance to the invariant law")
    args = kernel_options(sub)
    args.add_argument("--half-width", type=int, default=2, help="zigzag half-width k")
    args.add_argument("--steps", type=int, default=50, help="number of time steps")
    args.add_argument("--state-limit", type=int, default=STATE_LIMIT, help="largest state space")
    args.add_argument("--out", type=str, default=None, help="output text file")
    args.add_argument("--docx", type=str, default=None, help="docx report path")
    sub.set_defaults(func=cmd_ergodicity)

    sub = commands.add_parser("lines-test", help="chi-square tests along lines")
    args = kernel_options(sub)
    sampling_options(args)
    diagram_options(args)
    args.add_argument("--line", required=True, type=line_arg, action="append", help="line, repeat for several")
    args.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="number of windows")
    args.add_argument("--order", type=int, default=2, choices=[1, 2, 3], help="1 single, 2 pairs, 3 triples")
    args.add_argument("--significance", type=float, default=SIGNIFICANCE, help="family-wise level")
    args.add_argument("--out", type=str, default=None, help="output text file")
    args.add_argument("--docx", type=str, default=None, help="docx report path")
    sub.set_defaults(func=cmd_lines_test)

    sub = commands.add_parser("model-8v", help="8-vertex coupling")
    args = sub.add_argument_group("Options")
    args.add_argument("--weights", required=True, type=str, help="a,b,c,d")
    sampling_options(args, seed_required=False)
    args.add_argument("--out", type=str, default=None, help="output kernel file")
    sub.set_defaults(func=cmd_model_8v)

    sub = commands.add_parser("model-animals", help="directed animals PCA")
    args = sub.add_argument_group("Options")
    args.add_argument("--lattice", type=str, default="square", choices=[x.value for x in Lattice])
    args.add_argument("--p", type=str, default=None, help="birth probability")
    args.add_argument("--q", type=str, default=None, help="perimeter bonus")
    args.add_argument("--z", type=float, default=None, help="evaluate the generating functions at z")
    args.add_argument("--burn-in", type=int, default=ANIMALS_BURN_IN, help="rows dropped before averaging")
    sampling_options(args, seed_required=False)
    args.add_argument("--out", type=str, default=None, help="output kernel file")
    sub.set_defaults(func=cmd_model_animals)

    sub = commands.add_parser("model-tasep", help="TASEP of order two")
    args = sub.add_argument_group("Options")
    args.add_argument("--move", required=True, type=str, help="move(1), move(2), ...")
    args.add_argument("--stay", required=True, type=str, help="stay(2), stay(3), ...")
    args.add_argument("--q1", required=True, type=str, help="leader speed probability")
    args.add_argument("--cutoff", type=int, default=None, help="last explicit gap")
    args.add_argument("--seed", type=int, default=None, help="random seed, simulates when given")
    args.add_argument("--particles", type=int, default=TASEP_PARTICLES, help="number of particles")
    args.add_argument("--steps", type=int, default=TASEP_STEPS, help="number of time steps")
    args.add_argument("--leader", type=str, default="free", choices=[x.value for x in LeaderPolicy])
    sub.set_defaults(func=cmd_model_tasep)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    if args.command == "gen" and not args.params and args.seed is None and not args.family.startswith("BIN_"):
        print("gen needs --params or --seed", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (PcaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(run())
