"""Render sweep/scan CSV files into deterministic figures.

The only coupling to the producing toolkit is the documented CSV schemas:

* scan CSV:  f, kappa, k, h2, ratio, h2_J0, h2_J1, h2_Jprime
* sweep CSV: test, f, kappa, k, mu_or_c, m, replicates, successes, rate,
             ci_lo, ci_hi, seconds [, error]

Output is byte-identical for identical input: fixed style, fixed SVG hash
salt, no timestamps.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("phase-heatmap", "scaling-curve", "power-vs-m")

_REQUIRED = {
    "phase-heatmap": ["f", "kappa", "m", "rate"],
    "scaling-curve": ["f", "kappa", "ratio"],
    "power-vs-m": ["f", "kappa", "m", "rate", "ci_lo", "ci_hi"],
}


class PlotError(ValueError):
    """Bad plot specification or malformed/unsuitable input CSV."""


@dataclass(frozen=True)
class PlotSpec:
    csv_path: str
    kind: str
    out_path: str
    fix_f: float | None = None        # heatmap: select one f when several are present
    boundary_c: float = 1.0           # heatmap: overlay constant in m = c/(f^2 sqrt(k))

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise PlotError(f"unknown plot kind {self.kind!r}; choose from {KINDS}")
        ext = os.path.splitext(self.out_path)[1].lower()
        if ext not in (".svg", ".png"):
            raise PlotError(f"output must end in .svg or .png, got {ext!r}")
        if self.boundary_c <= 0:
            raise PlotError("boundary constant must be positive")


def read_table(path: str) -> dict[str, np.ndarray]:
    """Read a CSV with '#' comment lines into named float columns."""
    rows = []
    header = None
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parsed = next(csv.reader([line]))
                if header is None:
                    header = parsed
                else:
                    rows.append(parsed)
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from None
    if header is None:
        raise PlotError(f"{path}: no header row")
    if not rows:
        raise PlotError(f"{path}: no data rows")
    table = {}
    for idx, name in enumerate(header):
        values = []
        for row in rows:
            if len(row) != len(header):
                raise PlotError(f"{path}: row with {len(row)} fields, header has {len(header)}")
            values.append(row[idx])
        if name in ("test", "error"):
            table[name] = np.array(values, dtype=object)
            continue
        try:
            table[name] = np.array([float(v) for v in values])
        except ValueError:
            raise PlotError(f"{path}: column {name!r} contains non-numeric data") from None
    return table


def _require_columns(table: dict, kind: str, path: str) -> None:
    missing = [c for c in _REQUIRED[kind] if c not in table]
    if missing:
        raise PlotError(f"{path}: missing required columns {missing} for kind {kind!r}")


def _fixed_style() -> None:
    matplotlib.rcdefaults()
    matplotlib.rcParams.update(
        {
            "svg.hashsalt": "plotkit",
            "figure.figsize": (6.4, 4.8),
            "figure.dpi": 100,
            "savefig.dpi": 100,
            "font.size": 10,
            "axes.grid": True,
            "grid.alpha": 0.3,
        }
    )


def _save(fig, out_path: str) -> None:
    ext = os.path.splitext(out_path)[1].lower()
    directory = os.path.dirname(os.path.abspath(out_path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=ext)
    os.close(fd)
    try:
        if ext == ".svg":
            fig.savefig(tmp, format="svg", metadata={"Date": None})
        else:
            fig.savefig(tmp, format="png", metadata={"Software": "plotkit"})
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def _mu_of(m: np.ndarray, f: np.ndarray) -> np.ndarray:
    # m = f^(-1-mu)  =>  mu = -1 - log(m)/log(f)
    return -1.0 - np.log(m) / np.log(f)


def _render_phase_heatmap(spec: PlotSpec, table: dict) -> "plt.Figure":
    f_values = np.unique(table["f"])
    if spec.fix_f is not None:
        mask = np.isclose(table["f"], spec.fix_f)
        if not mask.any():
            raise PlotError(f"no rows with f={spec.fix_f}; file has f in {f_values.tolist()}")
    elif len(f_values) > 1:
        raise PlotError(
            f"heatmap needs a single f; file has {f_values.tolist()} (pass a selector)"
        )
    else:
        mask = np.ones(len(table["f"]), dtype=bool)
    f = float(table["f"][mask][0])
    kappa = table["kappa"][mask]
    mu = _mu_of(table["m"][mask], table["f"][mask])
    rate = table["rate"][mask]

    kappas = np.unique(kappa)
    mus = np.unique(np.round(mu, 9))
    grid = np.full((len(mus), len(kappas)), np.nan)
    for kp, mv, rv in zip(kappa, np.round(mu, 9), rate):
        grid[np.searchsorted(mus, mv), np.searchsorted(kappas, kp)] = rv

    fig, ax = plt.subplots()
    mesh = ax.pcolormesh(
        kappas, mus, grid, shading="nearest", cmap="viridis", vmin=0.0, vmax=1.0
    )
    fig.colorbar(mesh, ax=ax, label="success rate")
    # the m = c/(f^2 sqrt(k)) boundary is the line mu = kappa + ln c / ln(1/f)
    offset = math.log(spec.boundary_c) / math.log(1.0 / f)
    span = np.linspace(kappas.min(), kappas.max(), 64)
    ax.plot(span, span + offset, color="red", lw=1.5, label="m = c / (f^2 sqrt(k))")
    ax.set_xlabel("kappa  (k = f^(2 kappa - 2))")
    ax.set_ylabel("mu  (m = f^(-1-mu))")
    ax.set_title(f"detection success rate at f = {f:g}")
    ax.legend(loc="lower right")
    return fig


def _render_scaling_curve(spec: PlotSpec, table: dict) -> "plt.Figure":
    fig, ax = plt.subplots()
    for kappa in np.unique(table["kappa"]):
        mask = table["kappa"] == kappa
        order = np.argsort(table["f"][mask])
        ax.plot(
            table["f"][mask][order],
            table["ratio"][mask][order],
            marker="o",
            label=f"kappa = {kappa:g}",
        )
    ax.set_xscale("log")
    ax.set_xlabel("f")
    ax.set_ylabel("H2 / (f^2 sqrt(k))")
    ax.set_title("Hellinger scaling along k = f^(2 kappa - 2)")
    ax.legend()
    return fig


def _render_power_vs_m(spec: PlotSpec, table: dict) -> "plt.Figure":
    fig, ax = plt.subplots()
    groups = sorted({(f, kp) for f, kp in zip(table["f"], table["kappa"])})
    for f, kp in groups:
        mask = (table["f"] == f) & (table["kappa"] == kp)
        order = np.argsort(table["m"][mask])
        m = table["m"][mask][order]
        rate = table["rate"][mask][order]
        lo = table["ci_lo"][mask][order]
        hi = table["ci_hi"][mask][order]
        ax.errorbar(
            m, rate, yerr=[rate - lo, hi - rate],
            marker="o", capsize=3, label=f"f = {f:g}, kappa = {kp:g}",
        )
    ax.set_xscale("log")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xlabel("genes m")
    ax.set_ylabel("success rate")
    ax.set_title("test power vs number of genes")
    ax.legend()
    return fig


_RENDERERS = {
    "phase-heatmap": _render_phase_heatmap,
    "scaling-curve": _render_scaling_curve,
    "power-vs-m": _render_power_vs_m,
}


def render(spec: PlotSpec) -> str:
    """Render the figure described by `spec`; returns the output path."""
    spec.validate()
    table = read_table(spec.csv_path)
    _require_columns(table, spec.kind, spec.csv_path)
    _fixed_style()
    fig = _RENDERERS[spec.kind](spec, table)
    _save(fig, spec.out_path)
    return spec.out_path
