"""Sensor layouts and their difference co-arrays.

Positions are exact integers in units of the base spacing ``d``; physical
distances only appear once phases are evaluated (see :mod:`sramimo.channel`).
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from math import gcd
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    GeometryInconsistencyError,
    InvalidParameterError,
    NonCoprimeError,
    UnsupportedGeometryError,
)

KINDS = ("ULA", "TLNA", "CPA", "Custom")


@dataclass(frozen=True)
class SensorLayout:
    """Immutable linear array description.

    Attributes:
        positions: Strictly increasing non-negative sensor positions in units
            of ``d``.
        kind: One of ``ULA``, ``TLNA``, ``CPA`` or ``Custom``.
        params: Geometry parameters, e.g. ``(("M1", 4), ("M2", 4))``.
    """

    positions: tuple[int, ...]
    kind: str = "Custom"
    params: tuple[tuple[str, int], ...] = field(default=())

    def __post_init__(self):
        pos = tuple(int(p) for p in self.positions)
        if not pos:
            raise InvalidParameterError("a layout needs at least one sensor")
        if pos[0] < 0:
            raise InvalidParameterError("sensor positions must be non-negative")
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidParameterError(
                "sensor positions must be strictly increasing without duplicates"
            )
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown layout kind {self.kind!r}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "params", tuple((str(k), int(v)) for k, v in self.params))

    @property
    def size(self) -> int:
        return len(self.positions)

    @property
    def param_dict(self) -> dict[str, int]:
        return dict(self.params)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.positions, dtype=np.int64)

    @property
    def label(self) -> str:
        """Round-trippable spec string such as ``tlna:4,4``."""
        if self.kind == "Custom":
            return "custom:" + ",".join(map(str, self.positions))
        return self.kind.lower() + ":" + ",".join(str(v) for _, v in self.params)


@dataclass(frozen=True)
class CoarrayProfile:
    lags: tuple[int, ...]
    weight: Mapping[int, int]
    dof: int
    contiguous_half_extent: int

    def weight_table(self) -> list[list[int]]:
        return [[lag, self.weight[lag]] for lag in self.lags]


def build_ula(M: int) -> SensorLayout:
    if M < 1:
        raise InvalidParameterError(f"ULA needs M >= 1, got {M}")
    return SensorLayout(tuple(range(M)), "ULA", (("M", M),))


def build_tlna(M1: int, M2: int, outer_spacing: int | None = None) -> SensorLayout:
    """Two-level nested array.

    The inner level holds sensors ``1..M1`` and the outer level sensors
    ``n * (M1 + 1)`` for ``n = 1..M2``.

    ``outer_spacing`` overrides the outer gap. The only other reading of the
    nested-array rule uses the total sensor count, ``M1 + M2 + 1``; that
    variant leaves holes in the co-array and is returned as a ``Custom``
    layout so the closed forms are never applied to it.
    """
    if M1 < 1 or M2 < 1:
        raise InvalidParameterError(f"TLNA levels must be >= 1, got M1={M1}, M2={M2}")
    spacing = M1 + 1 if outer_spacing is None else int(outer_spacing)
    if spacing < 1:
        raise InvalidParameterError("outer spacing must be positive")
    inner = range(1, M1 + 1)
    outer = (n * spacing for n in range(1, M2 + 1))
    positions = tuple(sorted(set(inner).union(outer)))
    if outer_spacing is not None and spacing != M1 + 1:
        return SensorLayout(positions, "Custom")
    if len(positions) != M1 + M2:
        # only reachable through a custom spacing that collides with the inner level
        raise InvalidParameterError("outer level collides with inner level")
    return SensorLayout(positions, "TLNA", (("M1", M1), ("M2", M2)))


def build_cpa(F: int, Q: int) -> SensorLayout:
    """Coprime pair: ``F`` sensors at gap ``Q`` plus ``2Q - 1`` sensors at gap ``F``."""
    if F < 2 or Q < 2:
        raise InvalidParameterError(f"CPA needs F >= 2 and Q >= 2, got F={F}, Q={Q}")
    if gcd(F, Q) != 1:
        raise NonCoprimeError(f"F={F} and Q={Q} are not coprime (gcd={gcd(F, Q)})")
    first = {Q * f for f in range(F)}
    second = {F * q for q in range(1, 2 * Q)}
    positions = tuple(sorted(first | second))
    assert len(positions) == F + 2 * Q - 1
    return SensorLayout(positions, "CPA", (("F", F), ("Q", Q)))


def custom_layout(positions: Sequence[int]) -> SensorLayout:
    return SensorLayout(tuple(sorted(int(p) for p in positions)), "Custom")


def difference_coarray(layout: SensorLayout) -> CoarrayProfile:
    """Enumerate all ordered sensor pairs and tabulate their lags."""
    pos = layout.as_array()
    diffs = (pos[:, None] - pos[None, :]).ravel()
    weight = Counter(int(d) for d in diffs)
    lags = tuple(sorted(weight))
    L = 0
    while (L + 1) in weight:
        L += 1
    return CoarrayProfile(lags, dict(sorted(weight.items())), len(lags), L)


def closed_form_half_extent(layout: SensorLayout) -> int:
    """Closed-form one-sided virtual extent ``J`` for TLNA (M1 = M2) and CPA."""
    p = layout.param_dict
    if layout.kind == "TLNA":
        if p["M1"] != p["M2"]:
            raise UnsupportedGeometryError(
                "closed-form extent needs equal nested levels (M1 = M2)"
            )
        M = p["M1"] + p["M2"]
        return M * M // 4 + M // 2
    if layout.kind == "CPA":
        return p["Q"] * p["F"] + 1
    raise UnsupportedGeometryError(
        f"no closed-form virtual extent for {layout.kind} layouts"
    )


def virtual_half_extent(layout: SensorLayout) -> int:
    """Dimension ``J`` of the virtual uniform array used by the receivers.

    For nested arrays the closed form must equal the enumerated contiguous
    extent plus one. A coprime pair's enumerated segment reaches
    ``QF + Q - 1``, one past the ``QF`` lags the closed form uses, so for CPA
    only coverage of the closed-form segment is required.
    """
    J = closed_form_half_extent(layout)
    L = difference_coarray(layout).contiguous_half_extent
    if layout.kind == "TLNA" and J != L + 1:
        raise GeometryInconsistencyError(
            f"closed-form J={J} but enumerated contiguous extent is {L}"
        )
    if J - 1 > L:
        raise GeometryInconsistencyError(
            f"closed-form J={J} needs lags up to {J - 1}, co-array is contiguous only to {L}"
        )
    return J


def segment_half_extent(layout: SensorLayout) -> int:
    """``J`` from the closed form where one exists, otherwise from enumeration."""
    try:
        return virtual_half_extent(layout)
    except UnsupportedGeometryError:
        return difference_coarray(layout).contiguous_half_extent + 1


def resolvable_users(layout: SensorLayout) -> int:
    """Largest user count the receivers for this layout are designed for."""
    if layout.kind in ("TLNA", "CPA"):
        return virtual_half_extent(layout) - 1
    return layout.size


_SPEC_RE = re.compile(r"\s*([A-Za-z]+)\s*:")


def parse_geometry(spec: str) -> SensorLayout:
    """Parse ``ula:16``, ``tlna:4,4``, ``cpa:5,2`` or ``custom:0,1,4``.

    Errors carry the 1-based column of the offending character.
    """
    m = _SPEC_RE.match(spec)
    if not m:
        raise InvalidParameterError(
            f"invalid geometry spec {spec!r} at column 1: expected '<kind>:<ints>'"
        )
    kind = m.group(1).lower()
    values = []
    col = m.end()
    for tok in spec[m.end():].split(","):
        stripped = tok.strip()
        lead = len(tok) - len(tok.lstrip())
        if not re.fullmatch(r"-?\d+", stripped):
            raise InvalidParameterError(
                f"invalid geometry spec {spec!r} at column {col + lead + 1}: "
                f"expected integer, got {stripped!r}"
            )
        values.append(int(stripped))
        col += len(tok) + 1
    arity = {"ula": 1, "tlna": 2, "cpa": 2}
    if kind in arity and len(values) != arity[kind]:
        raise InvalidParameterError(
            f"invalid geometry spec {spec!r}: {kind} takes {arity[kind]} "
            f"parameter(s), got {len(values)}"
        )
    if kind == "ula":
        return build_ula(*values)
    if kind == "tlna":
        return build_tlna(*values)
    if kind == "cpa":
        return build_cpa(*values)
    if kind == "custom":
        return custom_layout(values)
    raise InvalidParameterError(
        f"invalid geometry spec {spec!r} at column {m.start(1) + 1}: unknown kind {kind!r}"
    )


def geometry_report(layout: SensorLayout) -> dict:
    prof = difference_coarray(layout)
    report = {
        "kind": layout.kind,
        "params": layout.param_dict,
        "positions": list(layout.positions),
        "dof": prof.dof,
        "contiguous_half_extent": prof.contiguous_half_extent,
        "weight_table": prof.weight_table(),
    }
    try:
        report["virtual_half_extent"] = virtual_half_extent(layout)
    except UnsupportedGeometryError:
        report["virtual_half_extent"] = None
    return report
