"""Readers for probe tables, probability tracks and region BED files.

All inputs are tab-separated text with a header line. Rows are validated
column by column; errors name the 1-based line of the offending row (the
header is line 1).
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import IO, Union

import numpy as np
import pandas as pd

from .errors import EmptyInputError, ParseError
from .model import ProbeTrack
from .regions import ProbabilityTrack

logger = logging.getLogger(__name__)

Source = Union[str, Path, IO[str]]

TREATMENT_COLUMN = re.compile(r"^t(\d+)$")
CONTROL_COLUMN = re.compile(r"^c(\d+)$")
TRACK_COLUMNS = ["chrom", "position", "p_peak", "p_joint", "delta_hat"]


def _read_table(source: Source, what: str) -> pd.DataFrame:
    """Read a TSV as strings; every value is validated afterwards."""
    logger.info("Loading %s from %s", what, getattr(source, "name", source))
    try:
        df = pd.read_csv(
            source,
            sep="\t",
            dtype=str,
            keep_default_na=False,
            na_values=[],
            skip_blank_lines=True,
            engine="python",
        )
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"{what} is empty", line_number=1) from e
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) if match else None
        raise ParseError(f"malformed {what} row: {e}", line_number=line) from e
    df.columns = [str(c).strip() for c in df.columns]
    missing = df.isna()
    if missing.any().any():
        row = int(np.flatnonzero(missing.any(axis=1).to_numpy())[0])
        raise ParseError(f"row has too few fields for {what}", line_number=row + 2)
    logger.info("Parsed %d rows from %s", len(df), what)
    return df


def _numeric(df: pd.DataFrame, column: str, integer: bool = False) -> np.ndarray:
    text = df[column].str.strip()
    try:
        # astype parses with correct rounding; to_numeric can be off by one ulp
        values = text.astype(np.float64).to_numpy()
    except ValueError:
        values = pd.to_numeric(text, errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values)
    if integer:
        bad |= np.isfinite(values) & ((values != np.round(values)) | (values < 0))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        kind = "non-negative integer" if integer else "number"
        raise ParseError(
            f"{column}={df[column].iloc[row]!r} is not a finite {kind}", line_number=row + 2
        )
    return values.astype(np.int64) if integer else values


def _replicate_columns(columns: list[str]) -> tuple[list[str], list[str]]:
    if columns[:2] != ["chrom", "position"]:
        raise ParseError("header must start with 'chrom\\tposition'", line_number=1)
    treatment: dict[int, str] = {}
    control: dict[int, str] = {}
    for name in columns[2:]:
        if m := TREATMENT_COLUMN.match(name):
            treatment[int(m.group(1))] = name
        elif m := CONTROL_COLUMN.match(name):
            control[int(m.group(1))] = name
        else:
            raise ParseError(f"unexpected column {name!r}", line_number=1)
    if not treatment:
        raise ParseError("at least one treatment column (t1) is required", line_number=1)
    for label, found in (("t", treatment), ("c", control)):
        if sorted(found) != list(range(1, len(found) + 1)):
            raise ParseError(f"{label}-columns must be numbered 1..k, got {sorted(found)}", line_number=1)
    return [treatment[k] for k in sorted(treatment)], [control[k] for k in sorted(control)]


def _check_chromosomes(df: pd.DataFrame) -> pd.Series:
    chrom = df["chrom"].str.strip()
    empty = chrom.eq("")
    if empty.any():
        row = int(np.flatnonzero(empty.to_numpy())[0])
        raise ParseError("empty chromosome name", line_number=row + 2)
    return chrom


def _group_rows(chrom: pd.Series, positions: np.ndarray, what: str) -> dict[str, np.ndarray]:
    """Row indices per chromosome (first-appearance order), sorted by position."""
    groups: dict[str, np.ndarray] = {}
    for name in pd.unique(chrom):
        rows = np.flatnonzero((chrom == name).to_numpy())
        order = np.argsort(positions[rows], kind="stable")
        if np.any(order != np.arange(rows.size)):
            logger.warning("%s rows for %s are not sorted by position; sorting", what, name)
        rows = rows[order]
        dup = np.flatnonzero(np.diff(positions[rows]) == 0)
        if dup.size:
            second = int(max(rows[dup[0]], rows[dup[0] + 1]))
            raise ParseError(
                f"duplicate position {int(positions[second])} on {name}", line_number=second + 2
            )
        groups[str(name)] = rows
    logger.info("Grouped %s into %d chromosome(s)", what, len(groups))
    return groups


def parse_probe_table(source: Source) -> list[ProbeTrack]:
    """Probe table with header ``chrom position t1..tk [c1..cm]`` to one track per chromosome."""
    df = _read_table(source, "probe table")
    t_cols, c_cols = _replicate_columns(list(df.columns))
    if df.empty:
        raise EmptyInputError("probe table has no rows")
    chrom = _check_chromosomes(df)
    positions = _numeric(df, "position", integer=True)
    treatment = np.column_stack([_numeric(df, c) for c in t_cols])
    control = (
        np.column_stack([_numeric(df, c) for c in c_cols])
        if c_cols
        else np.empty((len(df), 0))
    )
    return [
        ProbeTrack(name, positions[rows], treatment[rows], control[rows])
        for name, rows in _group_rows(chrom, positions, "probe table").items()
    ]


def parse_probability_track(source: Source) -> list[ProbabilityTrack]:
    """Probability track file (``chrom position p_peak p_joint delta_hat``)."""
    df = _read_table(source, "probability track")
    if list(df.columns) != TRACK_COLUMNS:
        raise ParseError(f"header must be {' '.join(TRACK_COLUMNS)}", line_number=1)
    if df.empty:
        return []
    chrom = _check_chromosomes(df)
    positions = _numeric(df, "position", integer=True)
    values = {c: _numeric(df, c) for c in TRACK_COLUMNS[2:]}
    for c in ("p_peak", "p_joint"):
        bad = (values[c] < 0) | (values[c] > 1)
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise ParseError(f"{c} outside [0, 1]", line_number=row + 2)
    return [
        ProbabilityTrack(
            name,
            positions[rows],
            values["p_peak"][rows],
            values["p_joint"][rows],
            values["delta_hat"][rows],
        )
        for name, rows in _group_rows(chrom, positions, "probability track").items()
    ]


def parse_region_bed(source: Source) -> pd.DataFrame:
    """Region or truth BED with a ``#chrom`` header; numeric columns typed."""
    df = _read_table(source, "region BED")
    if not df.columns.size or df.columns[0] != "#chrom":
        raise ParseError("header must start with '#chrom'", line_number=1)
    df = df.rename(columns={"#chrom": "chrom"})
    for col in ("start", "end", "rank", "n_probes"):
        if col in df.columns:
            df[col] = _numeric(df, col, integer=True)
    for col in ("score", "peak_probability"):
        if col in df.columns:
            df[col] = _numeric(df, col)
    return df
