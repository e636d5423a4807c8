"""Render wmswitch CSV outputs into deterministic SVG figures.

Three figure kinds:

* ``sweep``: detection statistics against the threshold exponent rho,
  from a ``sweep.csv``;
* ``traces``: per-step test-statistic norms overlaid on their thresholds,
  with sensor-switch events marked, from one ``steps.csv``;
* ``performance``: lateral error of an attacked run with and without the
  switching policy against the paired unattacked run, from three
  ``steps.csv`` files (in that order).

Inputs must carry the ``# wmswitch-csv schema_version=1 kind=...`` header;
threshold and statistic curves are plotted exactly as logged, never
recomputed. Rendering is deterministic: re-rendering the same inputs yields
byte-identical SVG.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import pandas as pd

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

SUPPORTED_SCHEMA_VERSION = 1

REQUIRED_COLUMNS = {
    "steps": [
        "trial_id", "n", "alpha", "phi1_norm", "phi2_norm", "phi3_norm",
        "t1", "t2", "y_lateral", "attack_active",
    ],
    "sweep": [
        "rho", "trials", "detection_rate", "mean_detection_time",
        "median_detection_time", "false_switch_rate",
    ],
}

_STYLE = {
    "figure.dpi": 100,
    "svg.hashsalt": "wmfigures",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


class SchemaMismatchError(ValueError):
    pass


class MissingColumnsError(SchemaMismatchError):
    pass


def read_wmswitch_csv(path, expected_kind: str) -> pd.DataFrame:
    """Load a wmswitch CSV, validating schema version, kind, and columns."""
    path = Path(path)
    try:
        with open(path) as fh:
            header = fh.readline().strip()
    except OSError as exc:
        raise SchemaMismatchError(f"{path}: cannot read ({exc})") from exc
    fields = dict(
        part.split("=", 1) for part in header.removeprefix("# wmswitch-csv ").split()
    ) if header.startswith("# wmswitch-csv ") else None
    if not fields:
        raise SchemaMismatchError(
            f"{path}: missing '# wmswitch-csv' header line (got {header[:60]!r})"
        )
    if fields.get("schema_version") != str(SUPPORTED_SCHEMA_VERSION):
        raise SchemaMismatchError(
            f"{path}: unsupported schema_version {fields.get('schema_version')!r}"
        )
    if fields.get("kind") != expected_kind:
        raise SchemaMismatchError(
            f"{path}: expected kind={expected_kind!r}, file says {fields.get('kind')!r}"
        )
    df = pd.read_csv(path, comment="#")
    missing = [c for c in REQUIRED_COLUMNS[expected_kind] if c not in df.columns]
    if missing:
        raise MissingColumnsError(f"{path}: missing columns {missing}")
    if df.empty:
        raise SchemaMismatchError(f"{path}: no data rows")
    return df


def _save(fig, out_path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, metadata={"Date": None} if out_path.suffix == ".svg" else None)
    plt.close(fig)
    return out_path


def render_sweep(csv_path, out_path) -> Path:
    df = read_wmswitch_csv(csv_path, "sweep").sort_values("rho")
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3), constrained_layout=True)
        ax1.plot(df["rho"], df["mean_detection_time"], "o-", label="mean")
        ax1.plot(df["rho"], df["median_detection_time"], "s--", label="median")
        ax1.set_xlabel("rho")
        ax1.set_ylabel("detection time (steps)")
        ax1.set_title("Time to detection vs threshold exponent")
        ax1.legend()
        ax2.plot(df["rho"], df["false_switch_rate"], "o-", color="tab:red")
        ax2.set_xlabel("rho")
        ax2.set_ylabel("false-switch rate")
        ax2.set_ylim(-0.02, 1.02)
        ax2.set_title("Unattacked false switches vs rho")
        return _save(fig, out_path)


def render_traces(csv_path, out_path, trial_id: int | None = None) -> Path:
    df = read_wmswitch_csv(csv_path, "steps")
    if trial_id is None:
        trial_id = int(df["trial_id"].iloc[0])
    df = df[df["trial_id"] == trial_id]
    if df.empty:
        raise SchemaMismatchError(f"{csv_path}: no rows for trial {trial_id}")
    switches = df["n"][df["alpha"].diff().fillna(0) != 0]
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True, constrained_layout=True)
        for ax, stat, thr in ((axes[0], "phi1_norm", "t1"), (axes[1], "phi2_norm", "t2")):
            ax.plot(df["n"], df[stat], label=f"||{stat.split('_')[0]}||", lw=1.0)
            ax.plot(df["n"], df[thr], label=f"threshold {thr}", ls="--", lw=1.0)
            for x in switches:
                ax.axvline(x, color="tab:red", alpha=0.5, lw=0.8)
            ax.set_yscale("log")
            ax.set_ylabel("spectral norm")
            ax.legend(loc="upper right")
        axes[1].set_xlabel("step")
        axes[0].set_title(f"Test statistics and thresholds (trial {trial_id})")
        return _save(fig, out_path)


def render_performance(csv_paths, out_path) -> Path:
    if len(csv_paths) != 3:
        raise SchemaMismatchError(
            "performance figure needs exactly three steps files: "
            "attacked-with-switching, attacked-without-switching, unattacked"
        )
    labels = ("attacked, switching", "attacked, no switching", "unattacked")
    styles = ({"color": "tab:blue"}, {"color": "tab:orange"}, {"color": "tab:green", "ls": "--"})
    frames = [read_wmswitch_csv(p, "steps") for p in csv_paths]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(7, 3.2), constrained_layout=True)
        for df, label, style in zip(frames, labels, styles):
            tid = df["trial_id"].iloc[0]
            one = df[df["trial_id"] == tid]
            ax.plot(one["n"], one["y_lateral"], lw=1.0, label=label, **style)
        onset = frames[0].loc[frames[0]["attack_active"] > 0, "n"]
        if len(onset):
            ax.axvline(onset.iloc[0], color="tab:red", alpha=0.5, lw=0.8)
        ax.set_xlabel("step")
        ax.set_ylabel("lateral error")
        ax.set_title("Lane-keeping performance under attack")
        ax.legend(loc="upper left")
        return _save(fig, out_path)


@dataclass(frozen=True)
class FigureSpec:
    """One figure job: inputs, kind, output path, and style knobs."""

    kind: str
    inputs: tuple
    output: str
    trial_id: int | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sweep", "traces", "performance"):
            raise SchemaMismatchError(f"unknown figure kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))


def render_spec(spec: FigureSpec) -> Path:
    if spec.kind == "sweep":
        if len(spec.inputs) != 1:
            raise SchemaMismatchError("sweep figure takes exactly one CSV")
        return render_sweep(spec.inputs[0], spec.output)
    if spec.kind == "traces":
        if len(spec.inputs) != 1:
            raise SchemaMismatchError("traces figure takes exactly one CSV")
        return render_traces(spec.inputs[0], spec.output, trial_id=spec.trial_id)
    return render_performance(spec.inputs, spec.output)


def render(kind: str, csv_paths, out_path) -> Path:
    return render_spec(FigureSpec(kind=kind, inputs=tuple(csv_paths), output=out_path))
