"""Staged output directories, deterministic CSV tables and run metadata."""

from __future__ import annotations

import csv
import io
import json
import os
import shutil
import tempfile
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import SchemaError


def fmt(value) -> str:
    """Shortest round-trip text for floats; plain ``str`` for everything else."""
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


class StagedOutput:
    """Collects a command's files in a scratch directory and publishes them on success.

    Files land in the output directory only after the whole command has
    finished; each one is moved with an atomic rename. On error nothing is
    published.
    """

    def __init__(self, output_dir: str | os.PathLike):
        self.output_dir = Path(output_dir)
        self._tmp: Path | None = None

    def __enter__(self) -> "StagedOutput":
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.output_dir))
        return self

    def path(self, name: str) -> Path:
        assert self._tmp is not None, "use StagedOutput as a context manager"
        return self._tmp / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        return self.write_text(name, csv_text(header, rows))

    def __exit__(self, exc_type, exc, tb) -> None:
        try:
            if exc_type is None:
                for p in sorted(self._tmp.iterdir()):
                    os.replace(p, self.output_dir / p.name)
        finally:
            shutil.rmtree(self._tmp, ignore_errors=True)


def update_metadata(stage: StagedOutput, command: str, section: Mapping,
                    common: Mapping) -> None:
    """Merge this command's block into ``metadata.json`` (written through the stage)."""
    existing = stage.output_dir / "metadata.json"
    meta = {}
    if existing.exists():
        try:
            meta = json.loads(existing.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            meta = {}
    meta.update(common)
    meta.setdefault("commands", {})[command] = dict(section)
    stage.write_text("metadata.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_table(path: Path, header: Sequence[str], numeric: Sequence[str] = ()) -> list[dict]:
    """Read a CSV this package wrote, checking the header and every numeric cell."""
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise SchemaError("empty file", source=str(path), line=1) from None
        if got != list(header):
            raise SchemaError(f"expected header {list(header)}, found {got}", source=str(path),
                              line=1)
        rows = []
        for row in reader:
            line = reader.line_num
            if len(row) != len(header):
                raise SchemaError(f"expected {len(header)} fields, found {len(row)}",
                                  source=str(path), line=line)
            rec = dict(zip(header, row))
            for col in numeric:
                if rec[col] == "":
                    rec[col] = None
                    continue
                try:
                    rec[col] = float(rec[col])
                except ValueError:
                    raise SchemaError(f"not a number: {rec[col]!r}", source=str(path),
                                      line=line, field=col) from None
            rows.append(rec)
    return rows
