import os
from io import BytesIO

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
from docx import Document
from docx.shared import Inches

from kernels import HelperUtils, ProbVector, TransitionKernel
from simulator import SpaceTimeWindow, gray_levels

SMALL_DISTANCE = 1e-3


def provenance_header(kernel: TransitionKernel = None, seed: int = None, version: str = None) -> str:
    """Comment lines identifying the run: kernel hash, seed and package version."""
    lines = []
    if kernel is not None:
        lines.append(f"# kernel_sha256\t{kernel.digest()}")
    if seed is not None:
        lines.append(f"# seed\t{seed}")
    if version is not None:
        lines.append(f"# version\t{version}")
    return "\n".join(lines)


def frame_to_text(df: pd.DataFrame, header: str = "") -> str:
    body = df.to_csv(sep="\t", index=False, lineterminator="\n")
    return f"{header}\n{body}" if header else body


def write_text_report(path: str, df: pd.DataFrame, header: str = "") -> str:
    with open(path, "w", encoding="utf-8") as f:
        f.write(frame_to_text(df, header))
    return path


def float_columns(df: pd.DataFrame, columns) -> pd.DataFrame:
    """Copy of df with exact rational columns converted for display."""
    out = df.copy()
    for col in columns:
        out[col] = [float(x) for x in out[col]]
    return out


def figure_to_stream(fig) -> BytesIO:
    image = BytesIO()
    fig.savefig(image, format="png")
    image.seek(0)
    plt.close(fig)
    return image


def add_bullet(document, text: str):
    paragraph = document.add_paragraph()
    paragraph.style = "List Bullet"
    paragraph.add_run(text)


def add_provenance(document, kernel: TransitionKernel, seed: int = None, version: str = None):
    document.add_heading("Provenance", level=2)
    add_bullet(document, f"Kernel SHA-256: {kernel.digest()}")
    add_bullet(document, f"Kernel: {report_kernel_summary(kernel)}")
    if seed is not None:
        add_bullet(document, f"Seed: {seed}")
    if version is not None:
        add_bullet(document, f"Package version: {version}")


def add_table(document, df: pd.DataFrame):
    table = document.add_table(rows=1, cols=len(df.columns))
    table.style = "Table Grid"
    for cell, name in zip(table.rows[0].cells, df.columns):
        cell.text = str(name)
    for row in df.itertuples(index=False):
        cells = table.add_row().cells
        for cell, value in zip(cells, row):
            cell.text = f"{value:.6g}" if isinstance(value, float) else str(value)
    return table


class ErgodicityReport:
    """Docx report of an exact ergodicity run: distance to the invariant law against 2 theta^t."""

    def __init__(self, kernel: TransitionKernel, p: ProbVector, half_width: int, version: str = None):
        self.kernel = kernel
        self.p = p
        self.half_width = half_width
        self.version = version

    def create_tv_plot(self, df: pd.DataFrame):
        fig, ax = plt.subplots(tight_layout=True, figsize=(10, 5))
        distance = np.array([float(x) for x in df["distance"]])
        bound = np.array([float(x) for x in df["bound"]])
        positive = distance > 0
        ax.semilogy(df["t"][positive], distance[positive], "o-", label="distance")
        ax.semilogy(df["t"], bound, "--", color="k", label="2 theta^t")
        ax.set_xlabel("time step t")
        ax.set_ylabel("L1 distance")
        ax.set_title(f"Convergence to the product law, half-width {self.half_width}")
        ax.legend(loc="best")
        return fig

    def summarize(self, df: pd.DataFrame) -> tuple:
        last = df.iloc[-1]
        theta = 1 - self.kernel.min_entry ** (2 * self.half_width + 1)
        crossed = df[df["distance"] < SMALL_DISTANCE]
        return (
            int(last["t"]),
            float(last["distance"]),
            float(theta),
            bool(df["within_bound"].all()),
            int(crossed["t"].iloc[0]) if not crossed.empty else None,
        )

    def create_report(self, path: str, df: pd.DataFrame):
        print(f"Starting {path} docx report!")
        document = Document()
        document.add_heading("Ergodicity Report", 0)
        document.add_paragraph(
            "Exact law of a finite zigzag of the PCA with i.i.d. p boundary, started from the "
            "all-zero configuration, compared with the same chain started from the product law."
        )
        add_provenance(document, self.kernel, version=self.version)

        document.add_heading("Distance Plot", level=2)
        document.add_picture(figure_to_stream(self.create_tv_plot(df)), width=Inches(6))

        document.add_heading("Run Statistics", level=2)
        t_max, final, theta, within, crossed = self.summarize(df)
        add_bullet(document, f"Zigzag half-width k: {self.half_width}")
        add_bullet(document, f"Contraction factor theta: {theta:.6g}")
        add_bullet(document, f"Distance at t={t_max}: {final:.6g}")
        add_bullet(document, f"Distance stays below 2 theta^t at every step: {within}")
        if crossed is not None:
            add_bullet(document, f"First step with distance below {SMALL_DISTANCE:g}: {crossed}")
        else:
            add_bullet(document, f"The distance never goes below {SMALL_DISTANCE:g} in this run")

        document.add_heading("Distance Table", level=2)
        add_table(document, float_columns(df, ["distance", "bound"]))
        print(f"Success on {path} docx report")
        return document


class LineTestReport:
    """Docx report of chi-square i.i.d. tests along lines of sampled diagrams."""

    def __init__(self, kernel: TransitionKernel, p: ProbVector, seed: int, version: str = None):
        self.kernel = kernel
        self.p = p
        self.seed = seed
        self.version = version

    def create_diagram_plot(self, window: SpaceTimeWindow):
        fig, ax = plt.subplots(tight_layout=True, figsize=(8, 8))
        ax.imshow(gray_levels(window), cmap="gray", vmin=0, vmax=255, interpolation="nearest")
        ax.set_xlabel("site i")
        ax.set_ylabel("time (latest on top)")
        ax.set_title("First sampled space-time diagram")
        return fig

    def create_pvalue_plot(self, df: pd.DataFrame):
        fig, ax = plt.subplots(tight_layout=True, figsize=(10, 5))
        labels = [f"{line} {test}" for line, test in zip(df["line"], df["test"])]
        p_values = np.maximum(df["p_value"].astype(float).values, 1e-300)
        colors = ["g" if ok else "r" for ok in df["passed"]]
        ax.bar(range(len(df)), -np.log10(p_values), color=colors)
        if "bonferroni_level" in df:
            ax.axhline(-np.log10(float(df["bonferroni_level"].iloc[0])), color="k", linestyle="--",
                       label="rejection level")
            ax.legend(loc="best")
        ax.set_xticks(range(len(df)))
        ax.set_xticklabels(labels, rotation=60, ha="right")
        ax.set_ylabel("-log10 p-value")
        ax.set_title("Line tests")
        return fig

    def create_report(self, path: str, df: pd.DataFrame, window: SpaceTimeWindow = None):
        print(f"Starting {path} docx report!")
        document = Document()
        document.add_heading("Line Independence Report", 0)
        document.add_paragraph(
            "Chi-square tests of the product law of p along lines of sampled space-time "
            "diagrams: single-site frequencies, disjoint pairs and disjoint triples."
        )
        add_provenance(document, self.kernel, self.seed, self.version)

        if window is not None:
            document.add_heading("Space-Time Diagram", level=2)
            document.add_picture(figure_to_stream(self.create_diagram_plot(window)), width=Inches(5))

        document.add_heading("Test Results", level=2)
        document.add_picture(figure_to_stream(self.create_pvalue_plot(df)), width=Inches(6))
        failed = df[~df["passed"]]
        add_bullet(document, f"Tests run: {len(df)}")
        add_bullet(document, f"Tests rejecting the product law: {len(failed)}")
        for row in failed.itertuples():
            add_bullet(document, f"Rejected: {row.line} {row.test}, p-value {row.p_value:.3g}")
        add_table(document, df)
        print(f"Success on {path} docx report")
        return document


def save_report(document, name: str, directory: str) -> str:
    if not os.path.exists(directory):
        os.makedirs(directory)
    path = os.path.join(directory, name if name.endswith(".docx") else f"{name}.docx")
    document.save(path)
    return path


def report_kernel_summary(kernel: TransitionKernel) -> str:
    helper = HelperUtils()
    return f"n={kernel.n}, min entry {helper.format_scalar(kernel.min_entry)}"
