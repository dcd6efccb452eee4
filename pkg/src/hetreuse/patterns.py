"""Reuse patterns: ON/OFF activity vectors over the cells.

A pattern serialises as a 0/1 string with cell 1 leftmost, e.g. ``"0001111"``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAX_ENUMERATED_CELLS = 24


@dataclass(frozen=True)
class Pattern:
    bits: tuple[bool, ...]

    def __post_init__(self):
        if not any(self.bits):
            raise ValueError("all-OFF pattern is not a valid reuse pattern")

    @classmethod
    def from_string(cls, text: str) -> "Pattern":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"bad pattern string {text!r}")
        return cls(tuple(ch == "1" for ch in text))

    @classmethod
    def from_active(cls, active_ids: Iterable[int], n_cells: int) -> "Pattern":
        ids = set(active_ids)
        return cls(tuple(b + 1 in ids for b in range(n_cells)))

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def active_set(self) -> list[int]:
        """Active cell ids (1-based), ascending."""
        return [b + 1 for b, on in enumerate(self.bits) if on]


def active_set(pattern: Pattern) -> list[int]:
    return pattern.active_set()


class PatternSet:
    """Ordered, duplicate-free collection of patterns; ``pi[i]`` refers to ``self[i]``."""

    def __init__(self, active: np.ndarray | Sequence[Pattern]):
        if isinstance(active, np.ndarray):
            arr = np.asarray(active, dtype=bool)
        else:
            arr = np.array([p.bits for p in active], dtype=bool)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValueError("pattern set needs a non-empty I x B matrix")
        if not arr.any(axis=1).all():
            raise ValueError("all-OFF pattern is not a valid reuse pattern")
        if len(np.unique(arr, axis=0)) != len(arr):
            raise ValueError("duplicate patterns")
        arr.setflags(write=False)
        self.active = arr

    @property
    def n_patterns(self) -> int:
        return self.active.shape[0]

    @property
    def n_cells(self) -> int:
        return self.active.shape[1]

    def __len__(self) -> int:
        return self.n_patterns

    def __getitem__(self, i: int) -> Pattern:
        return Pattern(tuple(bool(v) for v in self.active[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __contains__(self, pattern: Pattern) -> bool:
        return self.index_of(pattern) is not None

    def index_of(self, pattern: Pattern) -> int | None:
        row = np.array(pattern.bits, dtype=bool)
        if row.shape != (self.n_cells,):
            return None
        hit = np.flatnonzero((self.active == row).all(axis=1))
        return int(hit[0]) if len(hit) else None

    def reuse1_index(self) -> int | None:
        return self.index_of(Pattern((True,) * self.n_cells))

    def to_strings(self) -> list[str]:
        return [str(p) for p in self]

    @classmethod
    def from_strings(cls, lines: Iterable[str]) -> "PatternSet":
        pats = [Pattern.from_string(s) for s in lines if s.strip() and not s.lstrip().startswith("#")]
        return cls(pats)

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.to_strings()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PatternSet":
        return cls.from_strings(Path(path).read_text().splitlines())


def enumerate_all(n_cells: int) -> PatternSet:
    """All 2^B - 1 non-empty patterns in lexicographic order of their 0/1 string."""
    if n_cells < 1:
        raise ValueError("need at least one cell")
    if n_cells > MAX_ENUMERATED_CELLS:
        raise ValueError(f"full enumeration limited to {MAX_ENUMERATED_CELLS} cells, got {n_cells}")
    codes = np.arange(1, 2 ** n_cells, dtype=np.int64)
    shifts = np.arange(n_cells - 1, -1, -1, dtype=np.int64)
    return PatternSet(((codes[:, None] >> shifts[None, :]) & 1).astype(bool))


def candidate_patterns(scenario) -> PatternSet:
    """Macro-OFF / pico-ON candidate set.

    One pattern mutes every macro and activates every pico; then, for each
    macro, one pattern activates that macro only and mutes the picos it hosts.
    All-OFF or repeated rows (degenerate layouts) are dropped. Rows are sorted
    lexicographically on their 0/1 string, so with macros numbered first the
    all-macros-OFF pattern comes first.
    """
    cells = scenario.cells
    is_macro = np.array([c.kind == "macro" for c in cells])
    rows = [~is_macro]
    for macro in (c for c in cells if c.kind == "macro"):
        row = ~is_macro.copy()
        row &= np.array([c.host != macro.id for c in cells])
        row[macro.id - 1] = True
        rows.append(row)
    kept: list[np.ndarray] = []
    for row in rows:
        if row.any() and not any((row == k).all() for k in kept):
            kept.append(row)
    kept.sort(key=lambda r: "".join("1" if b else "0" for b in r))
    return PatternSet(np.array(kept))


def resolve_patterns(source: str, scenario) -> PatternSet:
    """``candidates``, ``full`` or a path to a file with one 0/1 string per line."""
    if source == "candidates":
        return candidate_patterns(scenario)
    if source == "full":
        return enumerate_all(scenario.n_cells)
    ps = PatternSet.load(source)
    if ps.n_cells != scenario.n_cells:
        raise ValueError(f"pattern file has {ps.n_cells} cells, scenario has {scenario.n_cells}")
    return ps
