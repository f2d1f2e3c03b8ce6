"""Run outputs: delimited files and a rendered summary figure.

All CSV files use '\n' newlines, '.' decimal separators, and reals printed
with 17 significant digits, so identical runs produce byte-identical files.
The `x` column holds lattice coordinates 1..N (the convention in which the
benchmark potential and templates are defined); sample files, by contrast,
store raw 0-based indices.

potentials.csv   x, v_true, v_rec, v0_template
densities.csv    x, p_emp, p_true, p_rec
field.csv        x, field              (only when the prior carries a field)
trace.csv        iter, neg_log_post, grad_norm, mu, nu
diagnostics.csv  key, value
samples.txt      the sample set that produced the run
config.ini       the fully resolved configuration
figure.png       two-panel summary (densities above, potentials below)
"""

from __future__ import annotations

import os

import numpy as np

from .config import serialize_config
from .datagen import write_samples


def format_real(x) -> str:
    return f"{float(x):.17g}"


def _write(path: str, lines) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_csv(result, outdir: str) -> list[str]:
    """Write the delimited outputs for a reconstruction result.

    Returns the list of files written (relative to outdir).
    """
    os.makedirs(outdir, exist_ok=True)
    n = result.v_star.size
    xs = np.arange(1, n + 1)
    written = []

    lines = ["x,v_true,v_rec,v0_template"]
    template = result.template if result.template is not None else np.zeros(n)
    for i in range(n):
        lines.append(f"{xs[i]},{format_real(result.v_true[i])},"
                     f"{format_real(result.v_star[i])},"
                     f"{format_real(template[i])}")
    _write(os.path.join(outdir, "potentials.csv"), lines)
    written.append("potentials.csv")

    lines = ["x,p_emp,p_true,p_rec"]
    for i in range(n):
        lines.append(f"{xs[i]},{format_real(result.p_emp[i])},"
                     f"{format_real(result.p_true[i])},"
                     f"{format_real(result.p_rec[i])}")
    _write(os.path.join(outdir, "densities.csv"), lines)
    written.append("densities.csv")

    if result.field is not None:
        lines = ["x,field"]
        for i in range(n):
            lines.append(f"{xs[i]},{format_real(result.field[i])}")
        _write(os.path.join(outdir, "field.csv"), lines)
        written.append("field.csv")

    lines = ["iter,neg_log_post,grad_norm,mu,nu"]
    for tp in result.trace:
        lines.append(f"{tp.iteration},{format_real(tp.value)},"
                     f"{format_real(tp.grad_norm)},{format_real(tp.mu)},"
                     f"{format_real(tp.nu)}")
    _write(os.path.join(outdir, "trace.csv"), lines)
    written.append("trace.csv")

    lines = ["key,value"]
    for key, value in result.diagnostics.items():
        if isinstance(value, bool):
            text = str(value).lower()
        elif isinstance(value, (int, np.integer)):
            text = str(int(value))
        elif isinstance(value, float):
            text = format_real(value)
        else:
            text = str(value)
        lines.append(f"{key},{text}")
    _write(os.path.join(outdir, "diagnostics.csv"), lines)
    written.append("diagnostics.csv")

    write_samples(os.path.join(outdir, "samples.txt"), result.samples)
    written.append("samples.txt")

    with open(os.path.join(outdir, "config.ini"), "w", newline="\n") as fh:
        fh.write(serialize_config(result.config))
    written.append("config.ini")
    return written


def render_figure(result, path: str) -> None:
    """Two-panel summary: densities (top) and potentials (bottom)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = result.v_star.size
    xs = np.arange(1, n + 1)
    fig, (ax_d, ax_v) = plt.subplots(2, 1, figsize=(7.0, 6.0), sharex=True)

    ax_d.bar(xs, result.p_emp, width=0.85, color="0.85", edgecolor="0.6",
             label="empirical")
    ax_d.plot(xs, result.p_true, "-", color="0.4", lw=1.0, label="true")
    ax_d.plot(xs, result.p_rec, "-", color="C3", lw=2.0, label="reconstructed")
    ax_d.set_ylabel("density")
    ax_d.legend(loc="upper right", fontsize=8, frameon=False)

    ax_v.plot(xs, result.v_true, "-", color="0.4", lw=1.0, label="true")
    if result.template is not None:
        ax_v.plot(xs, result.template, "--", color="0.6", lw=1.0,
                  label="reference")
    ax_v.plot(xs, result.v_star, "-", color="C0", lw=2.0,
              label="reconstructed")
    if result.field is not None:
        top = ax_v.get_ylim()[1]
        on = result.field > 0.5
        ax_v.bar(xs[on], 0.06 * np.ones(int(on.sum())), bottom=top,
                 width=1.0, color="k", clip_on=False)
    ax_v.set_xlabel("x")
    ax_v.set_ylabel("potential")
    ax_v.legend(loc="upper right", fontsize=8, frameon=False)

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def emit_all(result, outdir: str, figure: bool = True) -> list[str]:
    """CSV outputs plus the rendered figure."""
    written = emit_csv(result, outdir)
    if figure:
        render_figure(result, os.path.join(outdir, "figure.png"))
        written.append("figure.png")
    return written
