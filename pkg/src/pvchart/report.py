"""CSV emission in the column layout of the simulation tables."""

from __future__ import annotations

import csv
import io
import math
import numbers
import sys
from contextlib import contextmanager
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np


class ReportError(OSError):
    pass


@dataclass
class TableRow:
    """One table line; ``None`` fields are left out (never written as zero)."""

    scenario: str | None = None
    chart: str | None = None
    pvalue: str | None = None
    ooc: str | None = None
    ooc_param: float | None = None
    ks_mode: str | None = None
    n0: int | None = None
    delta: float | None = None
    beta: float | None = None
    rho: float | None = None
    alpha: float | None = None
    k: int | None = None
    lam: float | None = None
    r: float | None = None
    e_beta: float | None = None
    reps: int | None = None
    censored: int | None = None
    mean: float | None = None
    st_err: float | None = None
    bound: float | None = None
    ratio: float | None = None
    mean_ooc: float | None = None
    mean_fwe: float | None = None

    def __post_init__(self) -> None:
        if self.ratio is None and self.mean is not None and self.bound:
            self.ratio = self.mean / self.bound


# ``lambda`` is reserved in Python, hence the ``lam`` attribute
HEADERS = {f.name: ("lambda" if f.name == "lam" else f.name) for f in fields(TableRow)}
_INT_FIELDS = {"n0", "k", "reps", "censored"}
_STR_FIELDS = {"scenario", "chart", "pvalue", "ooc", "ks_mode"}


def format_number(value, precision: int | str | None = None, decimals: int | None = None) -> str:
    """Render a cell: up to 6 significant digits by default, ``'full'`` for round-trip repr."""
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return ""
    if precision == "full":
        return repr(v)
    if decimals is not None and precision is None:
        return f"{v:.{decimals}f}"
    digits = 6 if precision is None else int(precision)
    return f"{v:.{digits}g}"


def columns_for(rows: Sequence[TableRow]) -> list[str]:
    """Populated attributes in canonical order (all of them when ``rows`` is empty)."""
    names = [f.name for f in fields(TableRow)]
    if not rows:
        return names
    return [n for n in names if any(getattr(r, n) is not None for r in rows)]


@contextmanager
def _open_destination(destination) -> Iterator[IO[str]]:
    if destination is None or destination == "-":
        yield sys.stdout
        return
    path = Path(destination)
    try:
        handle = path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}") from exc
    with handle:
        yield handle


def render_csv(rows: Sequence[TableRow], precision: int | str | None = None) -> str:
    buf = io.StringIO()
    _write(rows, buf, precision)
    return buf.getvalue()


def _write(rows: Sequence[TableRow], handle: IO[str], precision) -> None:
    cols = columns_for(rows)
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow([HEADERS[c] for c in cols])
    for row in rows:
        writer.writerow(
            [format_number(getattr(row, c), precision, 2 if c == "ratio" else None) for c in cols]
        )


def emit_csv(rows: Iterable[TableRow], destination=None, precision: int | str | None = None) -> None:
    """Write rows as CSV to a path (``None`` or ``'-'`` for standard output)."""
    rows = list(rows)
    with _open_destination(destination) as handle:
        _write(rows, handle, precision)


def read_csv(source) -> list[TableRow]:
    """Parse a file written by :func:`emit_csv` back into rows."""
    text = Path(source).read_text(encoding="utf-8") if not hasattr(source, "read") else source.read()
    reader = csv.DictReader(io.StringIO(text))
    back = {v: k for k, v in HEADERS.items()}
    out = []
    for rec in reader:
        kwargs = {}
        for header, cell in rec.items():
            name = back[header]
            if cell == "":
                continue
            if name in _STR_FIELDS:
                kwargs[name] = cell
            elif name in _INT_FIELDS:
                kwargs[name] = int(cell)
            else:
                kwargs[name] = float(cell)
        out.append(TableRow(**kwargs))
    return out


def emit_table(header: Sequence[str], records: Iterable[Sequence], destination=None,
               precision: int | str | None = None) -> None:
    """Generic CSV sink for the density and localisation outputs."""
    with _open_destination(destination) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for rec in records:
            writer.writerow([format_number(v, precision) for v in rec])
