"""Persistence for experiment results: JSON report, CSV tables, SVG plots.

One run owns one directory.  Writes are append-only: an existing report in
the target directory is never overwritten.  ``verify_run_dir`` re-validates
a written directory against the coefficient fingerprints stored in each
trajectory's meta.json.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .experiments import BonaSmithFamily, ExperimentKind, ExperimentReport
from .spectral import TorusFunction

REPORT_NAME = "report.json"


def _write_csv(table: dict, path: Path) -> None:
    columns = list(table)
    rows = zip(*(table[c] for c in columns)) if columns else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _finite_pairs(xs, ys):
    out = [(x, y) for x, y in zip(xs, ys) if math.isfinite(y)]
    return ([x for x, _ in out], [y for _, y in out])


def _plot_report(report: ExperimentReport, plots_dir: Path) -> list[Path]:
    written = []

    def save(fig, name):
        path = plots_dir / name
        fig.savefig(path, format="svg")
        plt.close(fig)
        written.append(path)

    if report.kind is ExperimentKind.BONA_SMITH:
        tab = report.tables["differences"]
        if tab["pair"]:
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.semilogy(tab["pair"], tab["sup_norm_diff"], "o-", label="norm difference")
            etab = report.tables["pair_energies"]
            good = [e for e in etab["sup_energy"] if e == e]
            if len(good) == len(etab["sup_energy"]):
                ax.semilogy(etab["pair"], etab["sup_energy"], "s--", label="energy difference")
            ax.set_xlabel("consecutive pair")
            ax.set_ylabel("sup over shared times")
            ax.legend()
            fig.tight_layout()
            save(fig, "differences.svg")
        if report.family is not None:
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for m, traj in report.family.trajectories.items():
                ts, norms = traj.norm_series()
                ax.plot(ts, norms, label=f"m = {m}")
            ax.set_xlabel("t")
            ax.set_ylabel("watched norm")
            ax.legend()
            fig.tight_layout()
            save(fig, "norms.svg")
    elif report.kind is ExperimentKind.ENERGY_MONITOR:
        tab = report.tables["energy"]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(tab["t"], tab["energy"], "o-", label="gauged energy")
        ax.plot(tab["t"], tab["bound"], "k--", label="2 (1 + initial)")
        ax.set_xlabel("t")
        ax.legend()
        fig.tight_layout()
        save(fig, "energy.svg")
    elif report.kind is ExperimentKind.SMOOTHING_PROFILE:
        tab = report.tables["profile"]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for name, col in tab.items():
            if name == "t":
                continue
            xs, ys = _finite_pairs(tab["t"], col)
            if xs:
                ax.semilogy(xs, ys, "o-", label=name)
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.legend(fontsize=7)
        fig.tight_layout()
        save(fig, "profile.svg")
    elif report.kind is ExperimentKind.BACKWARD_PROBE:
        tab = report.tables["doubling"]
        xs, ys = _finite_pairs(tab["resolution"], tab["event_time"])
        if xs:
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.loglog(xs, ys, "o-")
            ax.set_xlabel("resolution")
            ax.set_ylabel("doubling time")
            fig.tight_layout()
            save(fig, "doubling.svg")
    return written


def write_report(report: ExperimentReport, out_dir, plots: bool = True) -> dict:
    """Write report.json, per-table CSVs, and plots under out_dir.

    Refuses to overwrite an existing report: one run = one directory.
    Returns the written paths keyed by role.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / REPORT_NAME
    if report_path.exists():
        raise FileExistsError(f"{report_path} already exists; runs are append-only")
    report.validate()

    paths = {"report": report_path}
    with open(report_path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")

    tables_dir = out / "tables"
    tables_dir.mkdir(exist_ok=True)
    for name, table in report.tables.items():
        csv_path = tables_dir / f"{name}.csv"
        _write_csv(table, csv_path)
        paths[f"table:{name}"] = csv_path

    if report.family is not None:
        for m, traj in report.family.trajectories.items():
            traj_dir = out / "trajectories" / f"m_{m}"
            traj.save(traj_dir)
            paths[f"trajectory:m_{m}"] = Path(traj_dir)

    if plots:
        plots_dir = out / "plots"
        plots_dir.mkdir(exist_ok=True)
        for p in _plot_report(report, plots_dir):
            paths[f"plot:{p.stem}"] = p
    return paths


def save_trajectory(traj, out_dir, name: str = "run") -> Path:
    traj_dir = Path(out_dir) / "trajectories" / name
    traj.save(traj_dir)
    return traj_dir


def verify_run_dir(run_dir) -> list[str]:
    """Re-validate a written run directory; returns a list of problems.

    Checks that report.json parses and that every stored trajectory state
    still hashes to the fingerprint recorded in its meta.json.
    """
    run = Path(run_dir)
    problems = []
    report_path = run / REPORT_NAME
    if report_path.exists():
        try:
            with open(report_path) as fh:
                json.load(fh)
        except ValueError as e:
            problems.append(f"{report_path}: unreadable report ({e})")
    else:
        problems.append(f"{report_path}: missing")

    for meta_path in sorted(run.glob("trajectories/*/meta.json")):
        traj_dir = meta_path.parent
        try:
            with open(meta_path) as fh:
                meta = json.load(fh)
        except ValueError as e:
            problems.append(f"{meta_path}: unreadable ({e})")
            continue
        prints = meta.get("snapshot_fingerprints", [])
        for i, expected in enumerate(prints):
            snap = traj_dir / f"snap_{i}.json"
            if not snap.exists():
                problems.append(f"{snap}: missing snapshot")
                continue
            actual = TorusFunction.load(snap).fingerprint()
            if actual != expected:
                problems.append(
                    f"{snap}: fingerprint {actual} does not match recorded {expected}"
                )
    return problems
