"""Planar electrode layouts: document model, validation, serialization.

A layout describes the metal pattern of a planar trap chip as a set of
polygonal electrodes in the z = 0 plane.  Gaps between electrodes are not
represented; the plane outside any electrode is treated as grounded metal
by the field model (gapless approximation).  Coordinates are meters.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import LinearRing as _LinearRing
from shapely.geometry import Polygon as _Polygon

__all__ = [
    "Role",
    "Frame",
    "Electrode",
    "ElectrodeLayout",
    "LayoutError",
    "parse_layout",
    "serialize_layout",
    "load_layout",
    "save_layout",
    "rotate_layout",
]

# Relative area tolerance below which two electrode regions are considered
# disjoint (shared edges produce zero-area intersections up to roundoff).
_OVERLAP_REL_TOL = 1e-9

_CONTROL_INDEX_RE = re.compile(r"(\d+)$")


class LayoutError(ValueError):
    """A layout document violates the schema or the geometry rules."""


class Role(enum.Enum):
    RF = "rf"
    CONTROL = "control"
    GROUND = "ground"


@dataclass(frozen=True, eq=False)
class Frame:
    """Coordinate convention of a layout.

    origin is the (x, y) point about which symmetry operations rotate;
    z is normal to the chip plane, positive on the ion side.
    """

    origin: np.ndarray
    axes: str = "right-handed; z normal to the chip plane"

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(2)
        o.flags.writeable = False
        object.__setattr__(self, "origin", o)


def _ring_signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _normalize_ring(ring_like, electrode_id: str, ring_index: int) -> np.ndarray:
    ring = np.asarray(ring_like, dtype=float)
    if ring.ndim != 2 or ring.shape[1] != 2:
        raise LayoutError(
            f"electrode {electrode_id!r} ring {ring_index}: expected an array "
            f"of [x, y] pairs, got shape {ring.shape}"
        )
    if not np.all(np.isfinite(ring)):
        raise LayoutError(
            f"electrode {electrode_id!r} ring {ring_index}: non-finite vertex"
        )
    # A closing vertex equal to the first is allowed in documents; drop it.
    if len(ring) > 1 and np.array_equal(ring[0], ring[-1]):
        ring = ring[:-1]
    if len(ring) < 3:
        raise LayoutError(
            f"electrode {electrode_id!r} ring {ring_index}: fewer than 3 vertices"
        )
    if np.any(np.all(ring == np.roll(ring, -1, axis=0), axis=1)):
        raise LayoutError(
            f"electrode {electrode_id!r} ring {ring_index}: repeated consecutive vertex"
        )
    lr = _LinearRing(ring)
    if not lr.is_simple or not lr.is_valid:
        raise LayoutError(
            f"electrode {electrode_id!r} ring {ring_index}: self-intersecting polygon"
        )
    if abs(_ring_signed_area(ring)) <= 0.0:
        raise LayoutError(
            f"electrode {electrode_id!r} ring {ring_index}: zero-area polygon"
        )
    return ring


@dataclass(frozen=True, eq=False)
class Electrode:
    """One electrode: a set of simple polygon rings in the chip plane.

    Ring orientation encodes topology after validation: counterclockwise
    rings add metal, clockwise rings cut holes.  A ring nested inside an
    odd number of sibling rings is a hole.
    """

    id: str
    role: Role
    rings: tuple

    def __post_init__(self):
        if not self.id:
            raise LayoutError("electrode id must be a non-empty string")
        rings = []
        for k, ring_like in enumerate(self.rings):
            ring = _normalize_ring(ring_like, self.id, k)
            rings.append(ring)
        if not rings:
            raise LayoutError(f"electrode {self.id!r} has no rings")
        # Containment parity decides outer versus hole; orientation is then
        # normalized so the sign of the ring area carries the topology.
        polys = [_Polygon(r) for r in rings]
        oriented = []
        for k, ring in enumerate(rings):
            rep = polys[k].representative_point()
            depth = sum(
                1
                for j, p in enumerate(polys)
                if j != k and p.contains(rep) and polys[k].within(p)
            )
            want_ccw = depth % 2 == 0
            is_ccw = _ring_signed_area(ring) > 0
            if is_ccw != want_ccw:
                ring = ring[::-1].copy()
            ring.flags.writeable = False
            oriented.append(ring)
        # Non-nested rings of one electrode must not overlap each other.
        for k in range(len(polys)):
            for j in range(k + 1, len(polys)):
                if polys[k].within(polys[j]) or polys[j].within(polys[k]):
                    continue
                inter = polys[k].intersection(polys[j]).area
                if inter > _OVERLAP_REL_TOL * min(polys[k].area, polys[j].area):
                    raise LayoutError(
                        f"electrode {self.id!r}: rings {k} and {j} overlap "
                        "without nesting"
                    )
        object.__setattr__(self, "rings", tuple(oriented))

    def region(self) -> _Polygon:
        """Planar region covered by this electrode (outer rings minus holes)."""
        outers = [r for r in self.rings if _ring_signed_area(r) > 0]
        holes = [r for r in self.rings if _ring_signed_area(r) < 0]
        region = None
        for outer in outers:
            poly = _Polygon(
                outer,
                holes=[h for h in holes if _Polygon(h).within(_Polygon(outer))],
            )
            region = poly if region is None else region.union(poly)
        return region

    def area(self) -> float:
        """Net metal area in m^2 (holes subtracted)."""
        return float(sum(_ring_signed_area(r) for r in self.rings))


def _control_index(electrode_id: str) -> int | None:
    m = _CONTROL_INDEX_RE.search(electrode_id)
    return int(m.group(1)) if m else None


@dataclass(frozen=True, eq=False)
class ElectrodeLayout:
    """Validated, immutable electrode layout.

    Invariants enforced at construction: at most one RF electrode (its
    rings may form several disconnected loops), control electrode ids
    carry the indices 1..control_count exactly once, and regions of
    distinct electrodes do not overlap (shared edges are permitted).
    """

    frame: Frame
    electrodes: tuple

    def __post_init__(self):
        ids = [e.id for e in self.electrodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise LayoutError(f"duplicate electrode ids: {dup}")
        rf = [e for e in self.electrodes if e.role is Role.RF]
        if len(rf) > 1:
            raise LayoutError(
                f"layout has {len(rf)} RF electrodes; merge them into one "
                "multi-ring electrode"
            )
        controls = [e for e in self.electrodes if e.role is Role.CONTROL]
        indices = [_control_index(e.id) for e in controls]
        if any(i is None for i in indices):
            bad = [e.id for e, i in zip(controls, indices) if i is None]
            raise LayoutError(
                f"control electrode ids must end in an integer index: {bad}"
            )
        if sorted(indices) != list(range(1, len(controls) + 1)):
            raise LayoutError(
                "control electrode indices must be exactly 1..control_count, "
                f"got {sorted(indices)}"
            )
        regions = [(e, e.region()) for e in self.electrodes]
        for k in range(len(regions)):
            for j in range(k + 1, len(regions)):
                (ek, rk), (ej, rj) = regions[k], regions[j]
                inter = rk.intersection(rj).area
                if inter > _OVERLAP_REL_TOL * min(rk.area, rj.area):
                    raise LayoutError(
                        f"electrodes {ek.id!r} and {ej.id!r} overlap"
                    )
        object.__setattr__(self, "electrodes", tuple(self.electrodes))

    @property
    def rf_electrode(self) -> Electrode | None:
        for e in self.electrodes:
            if e.role is Role.RF:
                return e
        return None

    @property
    def control_electrodes(self) -> tuple:
        """Control electrodes ordered by their integer index (1-based)."""
        controls = [e for e in self.electrodes if e.role is Role.CONTROL]
        return tuple(sorted(controls, key=lambda e: _control_index(e.id)))

    @property
    def control_count(self) -> int:
        return sum(1 for e in self.electrodes if e.role is Role.CONTROL)

    def electrode(self, electrode_id: str) -> Electrode:
        for e in self.electrodes:
            if e.id == electrode_id:
                return e
        raise KeyError(electrode_id)


def parse_layout(text: str) -> ElectrodeLayout:
    """Parse a layout document (JSON text) into a validated layout."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LayoutError(f"layout document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise LayoutError("layout document must be a JSON object")
    for key in ("frame", "electrodes"):
        if key not in doc:
            raise LayoutError(f"layout document missing required key {key!r}")
    frame_doc = doc["frame"]
    if not isinstance(frame_doc, dict) or "origin_m" not in frame_doc:
        raise LayoutError("frame must be an object with an 'origin_m' entry")
    frame = Frame(
        origin=frame_doc["origin_m"],
        axes=frame_doc.get("axes", Frame.axes),
    )
    electrodes = []
    if not isinstance(doc["electrodes"], list):
        raise LayoutError("'electrodes' must be a list")
    for k, e_doc in enumerate(doc["electrodes"]):
        if not isinstance(e_doc, dict):
            raise LayoutError(f"electrode entry {k} must be an object")
        for key in ("id", "role", "rings"):
            if key not in e_doc:
                raise LayoutError(f"electrode entry {k} missing key {key!r}")
        try:
            role = Role(str(e_doc["role"]).lower())
        except ValueError:
            raise LayoutError(
                f"electrode {e_doc['id']!r}: unknown role {e_doc['role']!r} "
                f"(expected one of {[r.value for r in Role]})"
            ) from None
        electrodes.append(
            Electrode(id=str(e_doc["id"]), role=role, rings=tuple(e_doc["rings"]))
        )
    return ElectrodeLayout(frame=frame, electrodes=tuple(electrodes))


def serialize_layout(layout: ElectrodeLayout) -> str:
    """Serialize to the canonical document form (stable byte-for-byte)."""
    doc = {
        "frame": {
            "origin_m": [float(v) for v in layout.frame.origin],
            "axes": layout.frame.axes,
        },
        "electrodes": [
            {
                "id": e.id,
                "role": e.role.value,
                "rings": [[[float(x), float(y)] for x, y in ring] for ring in e.rings],
            }
            for e in layout.electrodes
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def load_layout(path) -> ElectrodeLayout:
    with open(path, encoding="utf-8") as fh:
        return parse_layout(fh.read())


def save_layout(layout: ElectrodeLayout, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_layout(layout))


def rotate_layout(layout: ElectrodeLayout, angle: float) -> ElectrodeLayout:
    """Rotate every electrode by `angle` (radians, counterclockwise) about
    the frame origin.  Ids and roles are preserved."""
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    origin = layout.frame.origin
    electrodes = []
    for e in layout.electrodes:
        rings = tuple((ring - origin) @ rot.T + origin for ring in e.rings)
        electrodes.append(Electrode(id=e.id, role=e.role, rings=rings))
    return ElectrodeLayout(frame=layout.frame, electrodes=tuple(electrodes))
