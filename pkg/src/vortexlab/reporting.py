"""Series persistence, fit re-derivation and figure rendering.

The report path reads an existing series.csv, re-derives the decay fits
without re-running anything, writes them as fits.csv and renders a small set
of matplotlib figures next to the delimited output.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .diagnostics import EnergyReport, fit_decay
from .errors import ConfigError, NonPositiveSamples


def write_series_csv(path, reports: list[EnergyReport]) -> None:
    cols = EnergyReport.columns()
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for r in reports:
            f.write(",".join(f"{v:.17g}" for v in r.as_row()) + "\n")


def read_series_csv(path) -> dict[str, np.ndarray]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    if data.shape[1] != len(header):
        raise ConfigError(f"{path}: column count mismatch")
    return {name: data[:, i] for i, name in enumerate(header)}


def derive_fits(series: dict[str, np.ndarray], names, window) -> dict:
    fits = {}
    for name in names:
        if name not in series:
            fits[name] = {"error": f"column {name!r} missing"}
            continue
        try:
            fits[name] = dataclasses.asdict(fit_decay(series["t"], series[name], window))
        except (NonPositiveSamples, ValueError) as exc:
            fits[name] = {"error": str(exc)}
    return fits


def write_fits_csv(path, fits: dict) -> None:
    with open(path, "w") as f:
        f.write("series,exponent,amplitude_log,residual,n_samples,window_lo,window_hi\n")
        for name, fit in fits.items():
            if "error" in fit:
                f.write(f"{name},nan,nan,nan,0,nan,nan\n")
            else:
                f.write(
                    f"{name},{fit['exponent']:.8g},{fit['amplitude_log']:.8g},"
                    f"{fit['residual']:.8g},{fit['n_samples']},"
                    f"{fit['window'][0]:g},{fit['window'][1]:g}\n"
                )


# --- figures ---------------------------------------------------------------------


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


_DECAY_SERIES = ("bv_linf", "md_phi_w_h1", "linf_d1_zT", "q_l2")


def render_run_figures(run_dir, series: dict[str, np.ndarray], fits: dict | None = None) -> list[str]:
    """Decay, energy and conservation figures for one run directory."""
    plt = _matplotlib()
    out = Path(run_dir) / "figs"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    t1 = series["t"] + 1.0

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for name in _DECAY_SERIES:
        if name not in series:
            continue
        vals = series[name]
        pos = vals > 0
        if not np.any(pos):
            continue
        ax.loglog(t1[pos], vals[pos], label=name, lw=1.2)
        if fits and name in fits and "error" not in fits.get(name, {}):
            fit = fits[name]
            xs = np.array([t1[pos][0], t1[pos][-1]])
            ax.loglog(xs, np.exp(fit["amplitude_log"]) * xs ** fit["exponent"], "k--", lw=0.8)
    ax.set_xlabel("t + 1")
    ax.set_ylabel("norm")
    ax.legend(fontsize=8)
    ax.set_title("perturbation decay")
    fig.tight_layout()
    p = out / "decay.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    written.append(str(p))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    wt = t1 ** -0.5
    ax.semilogy(series["t"], np.maximum(wt * series["E_star"], 1e-300), label="(t+1)^{-1/2} E*")
    ax.semilogy(series["t"], np.maximum(wt * series["E_full"], 1e-300), label="(t+1)^{-1/2} E")
    ax.semilogy(series["t"], np.maximum(series["nu_run"] ** 2, 1e-300), label="running nu^2", ls="--")
    ax.semilogy(series["t"], series["M_run"] ** 2, label="running M^2", ls="--")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.set_title("weighted energies and running monitors")
    fig.tight_layout()
    p = out / "energy.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    written.append(str(p))

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for col in ("mass_defect_rho", "mass_defect_mT", "mass_defect_m3"):
        ax.plot(series["t"], series[col], label=col, lw=1.0)
    ax2 = ax.twinx()
    ax2.plot(series["t"], series["signal_margin_cells"], color="gray", lw=0.8, ls=":")
    ax2.set_ylabel("signal margin (cells)", color="gray")
    ax.set_xlabel("t")
    ax.set_ylabel("box-mass defect")
    ax.legend(fontsize=8)
    ax.set_title("zero-mass conservation")
    fig.tight_layout()
    p = out / "zero_mass.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    written.append(str(p))
    return written


def render_sweep_figures(sweep_dir) -> list[str]:
    plt = _matplotlib()
    out = Path(sweep_dir)
    figdir = out / "figs"
    figdir.mkdir(parents=True, exist_ok=True)
    table = read_series_csv(out / "sweep.csv")
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    for col, marker in (("q_l2_avg", "o"), ("u_err_l2_avg", "s"), ("divu_l2_avg", "^")):
        ax.loglog(table["eps"], table[col], marker + "-", label=col)
    ax.set_xlabel("eps")
    ax.set_ylabel("time-averaged norm")
    ax.legend(fontsize=8)
    ax.set_title("incompressible-limit sweep")
    fig.tight_layout()
    p = figdir / "sweep.png"
    fig.savefig(p, dpi=130)
    plt.close(fig)
    return [str(p)]


def report_directory(run_dir, window=None, names=None) -> dict:
    """Re-derive fits from an existing run or sweep directory and render figures."""
    run_dir = Path(run_dir)
    outputs: dict = {"dir": str(run_dir)}
    if (run_dir / "sweep.csv").exists():
        outputs["figures"] = render_sweep_figures(run_dir)
        outputs["sweep"] = json.loads((run_dir / "sweep_record.json").read_text())
        return outputs
    series_path = run_dir / "series.csv"
    if not series_path.exists():
        raise ConfigError(f"{run_dir} holds neither series.csv nor sweep.csv")
    series = read_series_csv(series_path)
    if window is None or names is None:
        rec_path = run_dir / "record.json"
        if rec_path.exists():
            rec = json.loads(rec_path.read_text())
            names = names or list(rec.get("fits", {}))
            for fit in rec.get("fits", {}).values():
                if window is None and isinstance(fit, dict) and "window" in fit:
                    window = tuple(fit["window"])
                    break
    window = window or (10.0, 200.0)
    names = names or [n for n in _DECAY_SERIES if n in series]
    fits = derive_fits(series, names, window)
    write_fits_csv(run_dir / "fits.csv", fits)
    outputs["fits"] = fits
    outputs["figures"] = render_run_figures(run_dir, series, fits)
    return outputs
