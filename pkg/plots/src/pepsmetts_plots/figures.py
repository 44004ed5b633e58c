"""Figure builders over the analysis CSV / reference JSON schemas.

Input contracts (produced by the pepsmetts CLI):
  analysis CSV: columns (observable, s, mean, stderr, tau); one row per
      (observable, running length s); stderr empty below 16 samples.
  reference JSON: {"values": {"C1": float, ...}, ...} as written by the
      purification and exact subcommands.

Figures are batch artifacts; nothing here mutates its inputs, and the
plotted series equal the parsed CSV values exactly.
"""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REQUIRED_COLUMNS = {"observable", "s", "mean", "stderr", "tau"}


class SchemaError(ValueError):
    """The input file does not match the documented schema."""


def read_analysis_csv(path: str | Path) -> dict[str, dict[str, list[float]]]:
    """Parse the analysis CSV into per-observable series."""
    path = Path(path)
    with open(path) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not REQUIRED_COLUMNS <= set(reader.fieldnames):
            missing = REQUIRED_COLUMNS - set(reader.fieldnames or [])
            raise SchemaError(f"{path}: missing columns {sorted(missing)}")
        series: dict[str, dict[str, list[float]]] = defaultdict(
            lambda: {"s": [], "mean": [], "stderr": [], "tau": []}
        )
        for row in reader:
            name = row["observable"]
            series[name]["s"].append(float(row["s"]))
            series[name]["mean"].append(float(row["mean"]))
            series[name]["stderr"].append(
                float(row["stderr"]) if row["stderr"] else float("nan")
            )
            series[name]["tau"].append(float(row["tau"]))
    return dict(series)


def read_reference_json(path: str | Path) -> dict[str, float]:
    data = json.loads(Path(path).read_text())
    if "values" not in data:
        raise SchemaError(f"{path}: no 'values' key")
    return data["values"]


def correlator_observables(series: dict) -> list[tuple[int, str]]:
    """(distance, name) pairs for the C<r> observables, sorted by r."""
    out = []
    for name in series:
        if name.startswith("C") and name[1:].isdigit():
            out.append((int(name[1:]), name))
    return sorted(out)


def plot_correlators(
    csv_paths: list[str | Path],
    out_path: str | Path,
    ref_paths: list[str | Path] | None = None,
    titles: list[str] | None = None,
):
    """Correlator-vs-distance panels, one per input CSV, with error bars;
    reference values drawn as dashed horizontal lines."""
    if not csv_paths:
        raise SchemaError("no input CSVs given")
    all_series = [read_analysis_csv(p) for p in csv_paths]
    refs = [read_reference_json(p) for p in ref_paths] if ref_paths else None
    if refs is not None and len(refs) != len(all_series):
        raise SchemaError("need one reference JSON per CSV")

    fig, axes = plt.subplots(
        1, len(all_series), figsize=(4.2 * len(all_series), 3.4), squeeze=False
    )
    for idx, series in enumerate(all_series):
        ax = axes[0][idx]
        pairs = correlator_observables(series)
        if not pairs:
            plt.close(fig)
            raise SchemaError(f"{csv_paths[idx]}: no correlator observables")
        rs = [r for r, _ in pairs]
        means = [series[name]["mean"][-1] for _, name in pairs]
        errs = [series[name]["stderr"][-1] for _, name in pairs]
        ax.errorbar(
            rs, means, yerr=errs, fmt="o", capsize=3, label="METTS", zorder=3
        )
        if refs is not None:
            ref_vals = [refs[idx].get(name) for _, name in pairs]
            ax.plot(
                rs, ref_vals, "k--", label="purification", zorder=2
            )
        ax.set_xlabel("R")
        ax.set_ylabel(r"$\langle\sigma^z_c\,\sigma^z_{c+R}\rangle$")
        ax.set_xticks(rs)
        if titles and idx < len(titles):
            ax.set_title(titles[idx])
        ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=160)
    plt.close(fig)
    return Path(out_path)


def plot_running_average(
    csv_path: str | Path,
    observable: str,
    out_path: str | Path,
    ref_path: str | Path | None = None,
):
    """Running average against the Markov-chain length s, with the bunched
    error band, plus an optional dashed reference line."""
    series = read_analysis_csv(csv_path)
    if observable not in series:
        raise SchemaError(
            f"{csv_path}: observable {observable!r} not present "
            f"(have {sorted(series)})"
        )
    data = series[observable]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.plot(data["s"], data["mean"], label=f"running mean {observable}")
    lo = [m - e for m, e in zip(data["mean"], data["stderr"])]
    hi = [m + e for m, e in zip(data["mean"], data["stderr"])]
    ax.fill_between(data["s"], lo, hi, alpha=0.25, linewidth=0)
    if ref_path is not None:
        ref = read_reference_json(ref_path)
        if observable in ref:
            ax.axhline(ref[observable], color="k", linestyle="--", label="reference")
    ax.set_xlabel("s")
    ax.set_ylabel(observable)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=160)
    plt.close(fig)
    return Path(out_path)
