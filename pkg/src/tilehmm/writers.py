"""Output files: probe tables, truth sidecars, probability tracks, region BEDs,
parameter reports, MCMC draw traces and the diagnostics JSON read by ``report``.

Tables are written with pandas as tab-separated text with ``\\n`` line endings.
Probe intensities keep full ``repr`` precision; fitted quantities use 9
significant digits.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .errors import ParseError
from .model import GlobalParams, ModelVariant, ProbeTrack
from .regions import ProbabilityTrack, Region
from .simulate import SyntheticDataset, true_regions

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.9g"
REGION_COLUMNS = ["#chrom", "start", "end", "rank", "score", "peak_probability", "n_probes"]
REPORT_COLUMNS = [
    "fit", "p0", "p1", "mu", "delta", "sigma2", "tau2", "eta2", "xi2", "pi",
    "expected_peak_length", "lambda",
]
TRACE_COLUMNS = ["sweep", "mu", "delta", "sigma2", "tau2", "eta2", "xi2", "p0", "p1", "pi1", "lambda"]


def _write(df: pd.DataFrame, path: str | Path, float_format: str | None = FLOAT_FORMAT) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, sep="\t", index=False, float_format=float_format, na_rep="NA", lineterminator="\n")
    logger.info("Wrote %d rows to %s", len(df), path)
    return path


def write_probe_table(tracks: Sequence[ProbeTrack], path: str | Path) -> Path:
    """Probe table in chromosome order; floats at shortest round-trip precision."""
    n_t = tracks[0].n_t if tracks else 1
    n_c = tracks[0].n_c if tracks else 0
    frames = []
    for t in tracks:
        frame = pd.DataFrame({"chrom": t.chromosome_id, "position": t.positions})
        for j in range(n_t):
            frame[f"t{j + 1}"] = t.treatment[:, j]
        for j in range(n_c):
            frame[f"c{j + 1}"] = t.controls[:, j]
        frames.append(frame)
    columns = ["chrom", "position"] + [f"t{j + 1}" for j in range(n_t)] + [f"c{j + 1}" for j in range(n_c)]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    return _write(df, path, float_format=None)


def write_truth(
    datasets: Sequence[SyntheticDataset], out_dir: str | Path, probe_length: int = 25
) -> tuple[Path, Path]:
    """``truth_regions.bed`` (runs of E = 1) and ``truth_probes.tsv`` for simulated data."""
    out_dir = Path(out_dir)
    rows, probes = [], []
    for ds in datasets:
        for k, r in enumerate(true_regions(ds, probe_length=probe_length)):
            rows.append({"#chrom": r.chromosome_id, "start": r.start, "end": r.end, "name": f"peak{k + 1}"})
        probes.append(
            pd.DataFrame(
                {
                    "chrom": ds.track.chromosome_id,
                    "position": ds.track.positions,
                    "E": ds.true_E,
                    "H": ds.true_H,
                    "mu_i": ds.true_effects.mu_i,
                    "delta_i": ds.true_effects.delta_i,
                }
            )
        )
    bed = pd.DataFrame(rows, columns=["#chrom", "start", "end", "name"])
    probe_df = pd.concat(probes, ignore_index=True)
    return (
        _write(bed, out_dir / "truth_regions.bed"),
        _write(probe_df, out_dir / "truth_probes.tsv", float_format=None),
    )


def write_probability_track(tracks: Sequence[ProbabilityTrack], path: str | Path) -> Path:
    frames = [
        pd.DataFrame(
            {
                "chrom": t.chromosome_id,
                "position": t.positions,
                "p_peak": t.p_peak,
                "p_joint": t.p_joint,
                "delta_hat": t.delta_hat,
            }
        )
        for t in tracks
    ]
    columns = ["chrom", "position", "p_peak", "p_joint", "delta_hat"]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    return _write(df, path)


def write_region_bed(regions: Iterable[Region], path: str | Path) -> Path:
    """Regions in the given (rank) order; rank starts at 1."""
    rows = [
        {
            "#chrom": r.chromosome_id,
            "start": r.start,
            "end": r.end,
            "rank": k,
            "score": r.score,
            "peak_probability": r.peak_probability,
            "n_probes": r.n_probes,
        }
        for k, r in enumerate(regions, start=1)
    ]
    return _write(pd.DataFrame(rows, columns=REGION_COLUMNS), path)


def parameter_row(name: str, params: GlobalParams, variant: ModelVariant) -> dict[str, Any]:
    """One report row; effect variances are NA for the pooled model."""
    return {
        "fit": name,
        "p0": params.p0,
        "p1": params.p1,
        "mu": params.mu,
        "delta": params.delta,
        "sigma2": params.sigma2,
        "tau2": params.tau2,
        "eta2": params.eta2 if variant.hierarchical else np.nan,
        "xi2": params.xi2 if variant.hierarchical else np.nan,
        "pi": params.pi1,
        "expected_peak_length": params.expected_peak_length,
        "lambda": params.lam,
    }


def write_parameter_report(
    fits: Mapping[str, tuple[GlobalParams, ModelVariant]], path: str | Path
) -> Path:
    rows = [parameter_row(name, params, variant) for name, (params, variant) in fits.items()]
    return _write(pd.DataFrame(rows, columns=REPORT_COLUMNS), path)


def write_draw_trace(
    draws: Sequence[GlobalParams], path: str | Path, burn_in: int = 0, thin: int = 1
) -> Path:
    rows = [
        {
            "sweep": burn_in + k * thin,
            "mu": p.mu,
            "delta": p.delta,
            "sigma2": p.sigma2,
            "tau2": p.tau2,
            "eta2": p.eta2,
            "xi2": p.xi2,
            "p0": p.p0,
            "p1": p.p1,
            "pi1": p.pi1,
            "lambda": p.lam,
        }
        for k, p in enumerate(draws)
    ]
    return _write(pd.DataFrame(rows, columns=TRACE_COLUMNS), path)


def save_diagnostics(payload: dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def load_diagnostics(path: str | Path) -> dict[str, Any]:
    with open(path) as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: invalid diagnostics JSON ({e.msg})", line_number=e.lineno) from e
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: diagnostics must be a JSON object")
    return payload
