"""Atomic, self-describing output files (CSV or JSON)."""
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import numpy as np
import pandas as pd

from tvamh.config import CONFIG_LINE

FLOAT_FORMAT = "%.17g"


def _native(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (pd.Timestamp,)):
        return value.date().isoformat()
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _dumps(payload: Any, **kwargs) -> str:
    return json.dumps(payload, default=_native, allow_nan=False, **kwargs)


def atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w",
        encoding="utf-8",
        dir=path.parent,
        prefix=f".{path.name}.",
        delete=False,
    )
    try:
        with handle:
            handle.write(text)
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    return path


def _records(frame: pd.DataFrame):
    cleaned = frame.astype(object).where(frame.notna(), None)
    return cleaned.to_dict(orient="records")


def write_table(
    frame: pd.DataFrame,
    stem: Path,
    fmt: str,
    config: Mapping[str, Any],
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write ``frame`` to ``stem.csv`` or ``stem.json`` with the config embedded.

    CSV carries the config on a ``# config:`` first line and ``extra`` is not
    written; JSON carries both as top-level keys next to ``rows``.
    """
    if fmt == "csv":
        header = CONFIG_LINE + _dumps(config, sort_keys=True) + "\n"
        body = frame.to_csv(index=False, float_format=FLOAT_FORMAT)
        return atomic_write_text(Path(f"{stem}.csv"), header + body)
    payload: Dict[str, Any] = {"config": config}
    payload.update(extra or {})
    payload["rows"] = _records(frame)
    return atomic_write_text(Path(f"{stem}.json"), _dumps(payload, indent=2) + "\n")


def write_record(
    record: Mapping[str, Any],
    stem: Path,
    fmt: str,
    config: Mapping[str, Any],
) -> Path:
    """A single summary record: a one-row table in CSV, an object in JSON."""
    if fmt == "csv":
        return write_table(pd.DataFrame([dict(record)]), stem, fmt, config)
    payload = {"config": config}
    payload.update(
        {
            key: None if isinstance(value, float) and not np.isfinite(value) else value
            for key, value in record.items()
        },
    )
    return atomic_write_text(Path(f"{stem}.json"), _dumps(payload, indent=2) + "\n")
