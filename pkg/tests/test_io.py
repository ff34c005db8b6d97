import json

import numpy as np
import pandas as pd

from tvamh.config import CONFIG_LINE
from tvamh.io import atomic_write_text, write_record, write_table

CONFIG = {"bootstrap": {"seed": 0}}


def test_csv_table_embeds_config(tmp_path):
    frame = pd.DataFrame({"date": ["2021-01-01"], "zeta": [0.1 + 0.2]})
    path = write_table(frame, tmp_path / "x_efficiency", "csv", CONFIG)
    lines = path.read_text().splitlines()
    assert path.name == "x_efficiency.csv"
    assert lines[0] == CONFIG_LINE + json.dumps(CONFIG, sort_keys=True)
    assert lines[1] == "date,zeta"
    assert float(lines[2].split(",")[1]) == 0.1 + 0.2


def test_json_table_has_rows_and_extra(tmp_path):
    frame = pd.DataFrame({"zeta": [1.0, np.nan], "flag": [True, False]})
    path = write_table(frame, tmp_path / "t", "json", CONFIG, {"summary": {"n": 2}})
    payload = json.loads(path.read_text())
    assert payload["config"] == CONFIG
    assert payload["summary"] == {"n": 2}
    assert payload["rows"] == [{"zeta": 1.0, "flag": True}, {"zeta": None, "flag": False}]


def test_json_record_replaces_non_finite(tmp_path):
    path = write_record({"mean": float("nan"), "q": np.int64(2)}, tmp_path / "s", "json", CONFIG)
    payload = json.loads(path.read_text())
    assert payload["mean"] is None
    assert payload["q"] == 2


def test_csv_record_is_one_row(tmp_path):
    path = write_record({"asset": "BTC", "q": 1}, tmp_path / "s", "csv", CONFIG)
    assert path.read_text().splitlines()[1:] == ["asset,q", "BTC,1"]


def test_atomic_write_leaves_no_temporary_files(tmp_path):
    atomic_write_text(tmp_path / "sub" / "a.txt", "one")
    atomic_write_text(tmp_path / "sub" / "a.txt", "two")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["a.txt"]
    assert (tmp_path / "sub" / "a.txt").read_text() == "two"
