"""Panel ingestion and cross-period pairing."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class PanelError(ValueError):
    """Malformed or empty panel input."""


@dataclass(frozen=True, slots=True)
class Observation:
    entity_id: str
    period: int
    value: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"observation value must be positive, got {self.value!r}")


@dataclass(frozen=True)
class ColumnMap:
    entity: str = "entity_id"
    period: str = "period"
    value: str = "value"


@dataclass
class Rejection:
    line: int
    reason: str
    raw: str


@dataclass
class LoadResult:
    observations: list[Observation]
    rejected: list[Rejection] = field(default_factory=list)

    def __len__(self):
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    def periods(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for ob in self.observations:
            counts[ob.period] = counts.get(ob.period, 0) + 1
        return dict(sorted(counts.items()))


def _delimiter_for(path, delimiter):
    if delimiter is not None:
        return delimiter
    return "\t" if os.fspath(path).lower().endswith((".tsv", ".tab", ".txt")) else ","


def load_panel(path, columns: ColumnMap = ColumnMap(), delimiter: str | None = None) -> LoadResult:
    """Read ``(entity, period, value)`` rows from a delimited UTF-8 file.

    Rows with a non-positive or unparsable value, or an unparsable period,
    are recorded in ``rejected`` rather than returned. A repeated
    ``(entity, period)`` key is an error.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"panel file not found: {path}")
    delim = _delimiter_for(path, delimiter)
    observations: list[Observation] = []
    rejected: list[Rejection] = []
    seen: set[tuple[str, int]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delim)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PanelError(f"{path}: empty file, no header") from None
        try:
            ie, ip, iv = (header.index(c) for c in (columns.entity, columns.period, columns.value))
        except ValueError:
            raise PanelError(
                f"{path}: header {header} lacks columns {columns.entity!r}, {columns.period!r}, {columns.value!r}"
            ) from None
        width = max(ie, ip, iv) + 1
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            raw = delim.join(row)
            if len(row) < width:
                rejected.append(Rejection(lineno, "too few fields", raw))
                continue
            entity = row[ie].strip()
            try:
                period = int(row[ip])
            except ValueError:
                rejected.append(Rejection(lineno, "unparsable period", raw))
                continue
            try:
                value = float(row[iv])
            except ValueError:
                rejected.append(Rejection(lineno, "unparsable value", raw))
                continue
            if not value > 0 or not np.isfinite(value):
                rejected.append(Rejection(lineno, "non-positive value", raw))
                continue
            key = (entity, period)
            if key in seen:
                raise PanelError(f"{path}:{lineno}: duplicate (entity, period) key {key!r}")
            seen.add(key)
            observations.append(Observation(entity, period, value))
    if not observations:
        raise PanelError(f"{path}: no valid rows ({len(rejected)} rejected)")
    if rejected:
        log.info("%s: %d rows rejected", path, len(rejected))
    return LoadResult(observations, rejected)


@dataclass(frozen=True)
class PairedPanel:
    """Matched values of the same entities in two periods."""

    period_1: int
    period_2: int
    entity_ids: tuple
    x1: np.ndarray
    x2: np.ndarray

    def __post_init__(self):
        x1 = np.asarray(self.x1, dtype=float)
        x2 = np.asarray(self.x2, dtype=float)
        if x1.shape != x2.shape or x1.ndim != 1 or len(self.entity_ids) != x1.size:
            raise ValueError("x1, x2 and entity_ids must be 1-D and of equal length")
        if not self.period_1 < self.period_2:
            raise ValueError("period_1 must precede period_2")
        if x1.size and (np.any(~(x1 > 0)) or np.any(~(x2 > 0))):
            raise ValueError("paired values must be positive")
        x1.setflags(write=False)
        x2.setflags(write=False)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "x2", x2)

    @classmethod
    def from_arrays(cls, x1, x2, period_1: int = 1, period_2: int = 2, entity_ids=None) -> "PairedPanel":
        x1 = np.asarray(x1, dtype=float)
        if entity_ids is None:
            entity_ids = tuple(str(i) for i in range(x1.size))
        return cls(period_1, period_2, tuple(entity_ids), x1, np.asarray(x2, dtype=float))

    @property
    def count(self) -> int:
        return int(self.x1.size)

    @property
    def pairs(self):
        return list(zip(self.x1.tolist(), self.x2.tolist()))

    def swapped(self) -> "PairedPanel":
        """Same entities with the two periods' values exchanged (labels kept)."""
        return PairedPanel(self.period_1, self.period_2, self.entity_ids, self.x2.copy(), self.x1.copy())


def pair_periods(obs: Iterable[Observation], p1: int, p2: int) -> PairedPanel:
    """Pair entities observed with positive values in both ``p1`` and ``p2``.

    Pairs are ordered by ``entity_id``.
    """
    if not p1 < p2:
        raise ValueError(f"period_1 must precede period_2, got {p1} and {p2}")
    first: dict[str, float] = {}
    second: dict[str, float] = {}
    for ob in obs:
        if not ob.value > 0:
            continue
        if ob.period == p1:
            first[ob.entity_id] = ob.value
        elif ob.period == p2:
            second[ob.entity_id] = ob.value
    common = sorted(first.keys() & second.keys())
    if not common:
        raise PanelError(f"no entity observed in both {p1} and {p2}")
    x1 = np.array([first[e] for e in common])
    x2 = np.array([second[e] for e in common])
    return PairedPanel(p1, p2, tuple(common), x1, x2)


def write_observations(path, rows: Sequence[tuple[str, int, float]] | PairedPanel, delimiter: str | None = None) -> None:
    """Write observations in the format :func:`load_panel` reads.

    Floats use ``repr`` so a write/read cycle is bit-exact.
    """
    delim = _delimiter_for(path, delimiter)
    if isinstance(rows, PairedPanel):
        p = rows
        rows = [(e, p.period_1, v) for e, v in zip(p.entity_ids, p.x1.tolist())]
        rows += [(e, p.period_2, v) for e, v in zip(p.entity_ids, p.x2.tolist())]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(delim.join(("entity_id", "period", "value")) + "\n")
        fh.writelines(f"{e}{delim}{per}{delim}{v!r}\n" for e, per, v in rows)
