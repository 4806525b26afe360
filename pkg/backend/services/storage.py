"""Reading and writing shots, models, histograms, grids and reports.

Shots and grids are CSV; everything structured is JSON carrying the schema
version. Nothing written here carries a timestamp.
"""

import hashlib
import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

import numpy as np
import pandas as pd

from config import settings
from models import (
    FLAT_KEYS,
    IntensityGrid,
    JointHistogram,
    ReconstructionSummary,
    ReportDocument,
    ShotRecord,
    TwbModel,
)
from .errors import (
    EmptyDataError,
    SchemaVersionError,
    ShotParseError,
    ShotValidationError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SHOT_COLUMNS = ["m_s", "m_i"]
GRID_COLUMNS = ["W_s", "W_i", "value"]
_INTEGER = r"\s*\+?\d+\s*"


def file_hash(path: PathLike) -> str:
    """SHA-256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path: PathLike, kind: str, payload: Dict[str, Any]) -> None:
    document = {"schema": settings.schema_version, "kind": kind, **payload}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")


def _read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        document = json.load(f)
    found = document.get("schema") if isinstance(document, dict) else None
    if found != settings.schema_version:
        raise SchemaVersionError(settings.schema_version, found)
    return document


# Shots

def load_shot_arrays(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Detected counts per shot from a CSV with header m_s,m_i"""
    try:
        frame = pd.read_csv(path, dtype=str, skip_blank_lines=False, keep_default_na=False)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ShotParseError(f"malformed row: {e}", int(match.group(1)) if match else None) from e
    except pd.errors.EmptyDataError as e:
        raise ShotParseError("empty file, expected header m_s,m_i", 1) from e

    if [c.strip() for c in frame.columns] != SHOT_COLUMNS:
        raise ShotParseError(f"header must be m_s,m_i, found {','.join(frame.columns)}", 1)
    frame.columns = SHOT_COLUMNS
    # blank lines and short rows come back as NaN
    frame = frame.fillna("")

    blank = (frame["m_s"].str.strip() == "") & (frame["m_i"].str.strip() == "")
    frame = frame[~blank]
    if frame.empty:
        raise EmptyDataError(f"{path} contains no shots")

    for column in SHOT_COLUMNS:
        cells = frame[column]
        missing = cells.str.strip() == ""
        if missing.any():
            raise ShotParseError(f"missing {column} value", int(cells.index[missing.argmax()]) + 2)
        valid = cells.str.fullmatch(_INTEGER)
        if not valid.all():
            position = int((~valid).argmax())
            value = cells.iloc[position].strip()
            raise ShotValidationError(f"{column}={value!r} is not a non-negative integer",
                                      int(cells.index[position]) + 2)

    return frame["m_s"].astype(np.int64).to_numpy(), frame["m_i"].astype(np.int64).to_numpy()


def load_shots(path: PathLike) -> List[ShotRecord]:
    m_s, m_i = load_shot_arrays(path)
    return [ShotRecord(int(a), int(b)) for a, b in zip(m_s, m_i)]


def histogram_from_shots(records: Iterable[ShotRecord]) -> JointHistogram:
    records = list(records)
    if not records:
        raise EmptyDataError("no shot records")
    m_s = np.fromiter((r.m_s for r in records), dtype=np.int64, count=len(records))
    m_i = np.fromiter((r.m_i for r in records), dtype=np.int64, count=len(records))
    return JointHistogram.from_arrays(m_s, m_i)


def load_histogram_from_shots(path: PathLike) -> JointHistogram:
    m_s, m_i = load_shot_arrays(path)
    return JointHistogram.from_arrays(m_s, m_i)


def save_shots(path: PathLike, m_s: np.ndarray, m_i: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"m_s": np.asarray(m_s, dtype=np.int64), "m_i": np.asarray(m_i, dtype=np.int64)})
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} shots to {path}")


# Models and histograms

def save_model(path: PathLike, model: TwbModel) -> None:
    _write_json(path, "model", model.to_flat())


def load_model(path: PathLike) -> TwbModel:
    """Model from any document carrying the flat parameter keys (model or fit files)"""
    document = _read_json(path)
    return TwbModel.from_flat({key: document.get(key) for key in FLAT_KEYS if key in document})


def save_histogram(path: PathLike, h: JointHistogram) -> None:
    _write_json(path, "histogram", {
        "shots": h.shots,
        "cutoffs": list(h.cutoffs),
        "counts": h.counts.tolist(),
    })


def load_histogram(path: PathLike) -> JointHistogram:
    document = _read_json(path)
    counts = np.array(document["counts"], dtype=np.int64)
    histogram = JointHistogram(counts, int(document["shots"]))
    if "cutoffs" in document and list(histogram.cutoffs) != list(document["cutoffs"]):
        raise ValueError(f"stored cutoffs {document['cutoffs']} do not match counts {histogram.cutoffs}")
    return histogram


def save_fit(path: PathLike, summary) -> None:
    """Fitted model keys at the top level plus the full reconstruction summary"""
    _write_json(path, "fit", {**summary.model.to_flat(),
                              "reconstruction": summary.model_dump(mode="json")})


# Grids

def grid_sidecar(path: PathLike) -> Path:
    return Path(path).with_suffix(".json")


def save_grid(path: PathLike, grid: IntensityGrid) -> None:
    """Long-format CSV (W_s, W_i, value) plus a JSON sidecar with order, axes and flags"""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    w_s, w_i = np.meshgrid(grid.axis_s, grid.axis_i, indexing="ij")
    frame = pd.DataFrame({"W_s": w_s.ravel(), "W_i": w_i.ravel(), "value": grid.values.ravel()})
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    _write_json(grid_sidecar(path), "grid", grid.metadata())
    logger.info(f"Wrote {grid.values.shape} grid to {path}")


def load_grid(path: PathLike) -> IntensityGrid:
    meta = _read_json(grid_sidecar(path))
    frame = pd.read_csv(path, float_precision="round_trip")
    if list(frame.columns) != GRID_COLUMNS:
        raise ValueError(f"grid CSV header must be {','.join(GRID_COLUMNS)}")
    n_s, n_i = meta["axis_s"]["points"], meta["axis_i"]["points"]
    if len(frame) != n_s * n_i:
        raise ValueError(f"grid has {len(frame)} rows, sidecar promises {n_s}x{n_i}")
    values = frame["value"].to_numpy().reshape(n_s, n_i)
    return IntensityGrid(
        axis_s=frame["W_s"].to_numpy()[::n_i],
        axis_i=frame["W_i"].to_numpy()[:n_i],
        values=values,
        order=meta.get("order"),
        damping=meta.get("damping"),
        singular=bool(meta.get("singular", False)),
        label=meta.get("label", "photons"),
    )


# Reports

def save_report(path: PathLike, report: ReportDocument) -> None:
    _write_json(path, "report", report.model_dump(mode="json"))


def load_report(path: PathLike) -> ReportDocument:
    document = _read_json(path)
    payload = {key: value for key, value in document.items() if key not in ("schema", "kind")}
    return ReportDocument.model_validate(payload)


def document_kind(path: PathLike) -> str:
    """The "kind" tag of a persisted JSON document (model, fit, histogram, grid, report)"""
    return _read_json(path).get("kind", "")


def load_fit_summary(path: PathLike) -> ReconstructionSummary:
    document = _read_json(path)
    if "reconstruction" not in document:
        raise ValueError(f"{path} is not a fit file (kind {document.get('kind')!r})")
    return ReconstructionSummary.model_validate(document["reconstruction"])
