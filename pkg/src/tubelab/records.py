"""Run records: one JSON object per line, append-only, plus CSV mirrors of tables."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def _plain(x):
    """JSON-safe copy of numpy scalars/arrays and nested containers."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass
class RunRecord:
    command: str
    config: dict
    seed: int | None
    started: str = field(default_factory=now)
    finished: str | None = None
    outputs: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def finish(self):
        self.finished = now()
        return self

    def to_json(self) -> dict:
        return _plain(asdict(self))

    def canonical(self) -> dict:
        """Everything but the timestamps; equal for replays of the same run."""
        out = self.to_json()
        out.pop("started")
        out.pop("finished")
        return out


def append_record(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "runs.jsonl"
    with path.open("a") as fh:
        fh.write(json.dumps(record.to_json(), sort_keys=True) + "\n")
    return path


def read_records(out_dir) -> list[dict]:
    path = Path(out_dir) / "runs.jsonl"
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def write_table(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    fields = list(rows[0])
    for r in rows[1:]:
        fields += [k for k in r if k not in fields]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(_plain(r))
    return path
