"""Name mapping from checkpoint tensors to engine parameter slots.

One rule per line:

    source_pattern -> slot_pattern [transform,...]

`*` in the source pattern matches any run of characters; the slot pattern
must hold the same number of `*`, filled with the captures in order. A slot
of `-` drops the matched tensors. Every rule that matches a source tensor is
applied, so one source tensor may feed several slots (see `split`). `#`
starts a comment.

Transforms, applied left to right:

    transpose          swap the first two axes
    split=J/N          keep chunk J of N equal chunks along axis 0
    group_permute=N[:R]
                       axis 0 holds M*N chunks of R rows (default 1), ordered
                       group-major (chunk m*N + b is branch b of group m);
                       reorder them branch-major (b*M + m), the engine's
                       contiguous-branch layout
    bn                 batch-norm statistic passthrough; the slot must be a
                       .gamma, .beta, .mean or .var slot

After the transforms a tensor whose shape equals the slot shape up to size-1
axes is reshaped to the slot shape. Slots ending in `.eps` that no rule
produces are filled with the export's batch-norm epsilon.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np


class MappingError(Exception):
    """Base class for mapping problems."""


class MappingSyntaxError(MappingError):
    def __init__(self, lineno: int, line: str, reason: str):
        super().__init__(f"mapping line {lineno}: {reason}: {line.strip()!r}")
        self.lineno = lineno


class CoverageError(MappingError):
    """Slots that no rule produced, or that several rules produced."""

    def __init__(self, missing: Sequence[str], duplicated: Sequence[str] = ()):
        parts = []
        if missing:
            parts.append(f"{len(missing)} unmapped slot(s): " + ", ".join(missing))
        if duplicated:
            parts.append(f"{len(duplicated)} slot(s) produced more than once: "
                         + ", ".join(duplicated))
        super().__init__("; ".join(parts))
        self.missing = list(missing)
        self.duplicated = list(duplicated)


class TensorShapeError(MappingError):
    """Per-tensor shape mismatches: (slot, expected shape, produced shape)."""

    def __init__(self, problems: Sequence[tuple[str, tuple, tuple]]):
        super().__init__("; ".join(f"{s}: expected {tuple(e)}, got {tuple(g)}"
                                   for s, e, g in problems))
        self.problems = list(problems)


_BN_SUFFIXES = (".gamma", ".beta", ".mean", ".var")


def _squeezed(shape: Sequence[int]) -> tuple:
    return tuple(d for d in shape if d != 1)


def _transpose(a: np.ndarray, slot: str) -> np.ndarray:
    if a.ndim < 2:
        raise ValueError("transpose needs at least two axes")
    return np.swapaxes(a, 0, 1)


def _split(j: int, n: int):
    def apply(a: np.ndarray, slot: str) -> np.ndarray:
        if a.shape[0] % n:
            raise ValueError(f"axis 0 of size {a.shape[0]} does not split into {n}")
        step = a.shape[0] // n
        return a[j * step:(j + 1) * step]
    return apply


def _group_permute_rows(n: int, rows_per_group: int):
    def apply(a: np.ndarray, slot: str) -> np.ndarray:
        total = a.shape[0]
        if total % (n * rows_per_group):
            raise ValueError(
                f"axis 0 of size {total} is not a multiple of {n} branches x "
                f"{rows_per_group} rows")
        m = total // (n * rows_per_group)
        blocks = a.reshape((m, n, rows_per_group) + a.shape[1:])
        return np.ascontiguousarray(blocks.swapaxes(0, 1)).reshape(a.shape)
    return apply


def _bn(a: np.ndarray, slot: str) -> np.ndarray:
    if not slot.endswith(_BN_SUFFIXES):
        raise ValueError("bn applies to batch-norm statistic slots only")
    return a


def _parse_transform(text: str) -> Callable[[np.ndarray, str], np.ndarray]:
    name, _, arg = text.partition("=")
    if name == "transpose" and not arg:
        return _transpose
    if name == "bn" and not arg:
        return _bn
    if name == "split":
        m = re.fullmatch(r"(\d+)/(\d+)", arg)
        if m and int(m[1]) < int(m[2]):
            return _split(int(m[1]), int(m[2]))
    if name == "group_permute":
        m = re.fullmatch(r"(\d+)(?::(\d+))?", arg)
        if m and int(m[1]) >= 1 and int(m[2] or 1) >= 1:
            return _group_permute_rows(int(m[1]), int(m[2] or 1))
    raise ValueError(f"unknown transform {text!r}")


@dataclass
class Rule:
    source: str
    slot: str  # "-" drops the match
    transforms: list[str] = field(default_factory=list)
    lineno: int = 0

    def __post_init__(self):
        self._regex = re.compile(
            "^" + "(.+?)".join(re.escape(p) for p in self.source.split("*")) + "$")
        self._steps = [_parse_transform(t) for t in self.transforms]

    def match(self, name: str) -> str | None:
        """Slot name for `name`, or None when the rule does not match."""
        m = self._regex.match(name)
        if not m:
            return None
        if self.slot == "-":
            return "-"
        parts = self.slot.split("*")
        out = parts[0]
        for cap, rest in zip(m.groups(), parts[1:]):
            out += cap + rest
        return out

    def transform(self, a: np.ndarray, slot: str) -> np.ndarray:
        for step in self._steps:
            a = step(a, slot)
        return a


@dataclass
class MappingResult:
    tensors: dict[str, np.ndarray]
    unused_sources: list[str]
    filled_eps: list[str]


class NameMapping:
    def __init__(self, rules: Sequence[Rule]):
        self.rules = list(rules)

    @classmethod
    def parse(cls, text: str) -> "NameMapping":
        rules = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            lhs, arrow, rhs = line.partition("->")
            if not arrow:
                raise MappingSyntaxError(lineno, raw, "expected 'source -> slot'")
            source = lhs.strip()
            fields = rhs.split()
            if not source or _WS.search(source) or not fields:
                raise MappingSyntaxError(lineno, raw,
                                         "expected 'source -> slot [transform,...]'")
            slot = fields[0]
            transforms = [t for t in "".join(fields[1:]).split(",") if t]
            if slot != "-" and slot.count("*") != source.count("*"):
                raise MappingSyntaxError(lineno, raw,
                                         "source and slot need the same number of '*'")
            try:
                rules.append(Rule(source, slot, transforms, lineno))
            except ValueError as e:
                raise MappingSyntaxError(lineno, raw, str(e)) from None
        return cls(rules)

    @classmethod
    def load(cls, path) -> "NameMapping":
        with open(path, encoding="utf-8") as f:
            return cls.parse(f.read())

    def apply(self, source: Mapping[str, np.ndarray], slots: Mapping[str, Sequence[int]],
              bn_eps: float = 1e-5) -> MappingResult:
        """Engine tensors for every slot in `slots` (name -> shape)."""
        produced: dict[str, np.ndarray] = {}
        duplicated: list[str] = []
        unused: list[str] = []
        shape_problems = []
        for name, value in source.items():
            used = False
            for rule in self.rules:
                slot = rule.match(name)
                if slot is None:
                    continue
                used = True
                if slot == "-":
                    continue
                if slot not in slots:
                    raise MappingError(
                        f"rule on line {rule.lineno} maps {name} to unknown slot {slot}")
                if slot in produced:
                    duplicated.append(slot)
                    continue
                try:
                    a = rule.transform(np.asarray(value, dtype=np.float32), slot)
                except ValueError:
                    shape_problems.append((slot, tuple(slots[slot]),
                                           tuple(np.shape(value))))
                    produced[slot] = np.zeros(0, np.float32)
                    continue
                want = tuple(slots[slot])
                if a.shape != want:
                    if _squeezed(a.shape) == _squeezed(want):
                        a = a.reshape(want)
                    else:
                        shape_problems.append((slot, want, a.shape))
                produced[slot] = np.ascontiguousarray(a, dtype=np.float32)
            if not used:
                unused.append(name)

        filled = []
        for slot, shape in slots.items():
            if slot not in produced and slot.endswith(".eps"):
                produced[slot] = np.full(tuple(shape), bn_eps, np.float32)
                filled.append(slot)
        missing = [s for s in slots if s not in produced]
        if missing or duplicated:
            raise CoverageError(missing, sorted(set(duplicated)))
        if shape_problems:
            raise TensorShapeError(shape_problems)
        return MappingResult({s: produced[s] for s in slots}, unused, filled)


_WS = re.compile(r"\s")
