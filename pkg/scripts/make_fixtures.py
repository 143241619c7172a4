"""Generate the frozen layout fixtures used by the test suite.

Writes tests/fixtures/triangle_array.json (three-site array, 30 control
electrodes) and tests/fixtures/single_site.json (one ring trap, 10 control
electrodes).  Run from the repository root:

    python3 scripts/make_fixtures.py

The triangular array is built from three annular RF regions whose union is
cut by a central disc opening; the opening turns the potential above the
array center into a separate shallow trap.  Each annulus island carries a
center disc plus six annular sectors, and three arc pads sit outside the
RF boundary, giving ten control electrodes per site with exact three-fold
symmetry: rotating the layout by 2*pi/3 maps control k of one site onto
control k of the next.
"""

import pathlib
import sys

import numpy as np
from shapely.geometry import Polygon
from shapely.ops import unary_union

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from surftrap.layout import (  # noqa: E402
    Electrode,
    ElectrodeLayout,
    Frame,
    Role,
    save_layout,
)

UM = 1e-6

# Array geometry (meters).  RHO sets the island pitch and is tuned so the
# measured site triangle has 80 um sides; R1/R2 bound the annular RF metal,
# R_HOLE is the central ground opening that hosts the ancillary trap.
RHO = 45.5 * UM
R1 = 26.0 * UM
R2 = 52.0 * UM
R_HOLE = 17.0 * UM

# Control electrode radii (meters) and sector layout, all inside an island
# opening of radius R1 with clearance to the RF rim.
DISC_R = 7.0 * UM
SECT_R_IN = 9.0 * UM
SECT_R_OUT = 22.0 * UM
SECT_GAP_DEG = 4.0
PAD_R_IN = 101.0 * UM
PAD_R_OUT = 128.0 * UM
PAD_SPAN_DEG = 24.0
PAD_PITCH_DEG = 27.0

N_ARC = 48  # vertices per full circle


def circle(center, radius, n=N_ARC, phase=0.0):
    ang = phase + np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return np.column_stack([center[0] + radius * np.cos(ang),
                            center[1] + radius * np.sin(ang)])


def rotate(points, angle):
    c, s = np.cos(angle), np.sin(angle)
    return points @ np.array([[c, -s], [s, c]]).T


def annular_sector(center, r_in, r_out, a0, a1, n=16):
    """Closed ring for the region r_in..r_out, azimuth a0..a1 (radians)."""
    ang = np.linspace(a0, a1, n)
    outer = np.column_stack([center[0] + r_out * np.cos(ang),
                             center[1] + r_out * np.sin(ang)])
    inner = np.column_stack([center[0] + r_in * np.cos(ang[::-1]),
                             center[1] + r_in * np.sin(ang[::-1])])
    return np.vstack([outer, inner])


def rf_rings():
    parts = []
    for k in range(3):
        a = 2.0 * np.pi * k / 3.0
        outer = rotate(circle((-RHO, 0.0), R2), a)
        hole = rotate(circle((-RHO, 0.0), R1), a)[::-1]
        parts.append(Polygon(outer, holes=[hole]))
    union = unary_union(parts)
    union = union.difference(Polygon(circle((0.0, 0.0), R_HOLE)))
    rings = [np.array(union.exterior.coords[:-1])]
    rings += [np.array(h.coords[:-1]) for h in union.interiors]
    return rings


def site_controls(center=(-RHO, 0.0), pad_azimuth=np.pi):
    """Ten control rings for one site: disc, six sectors, three arc pads."""
    rings = [circle(center, DISC_R, n=32)]
    half_gap = np.deg2rad(SECT_GAP_DEG) / 2.0
    for k in range(6):
        a0 = k * np.pi / 3.0 + half_gap
        a1 = (k + 1) * np.pi / 3.0 - half_gap
        rings.append(annular_sector(center, SECT_R_IN, SECT_R_OUT, a0, a1))
    half_span = np.deg2rad(PAD_SPAN_DEG) / 2.0
    for k in (-1, 0, 1):
        mid = pad_azimuth + k * np.deg2rad(PAD_PITCH_DEG)
        rings.append(annular_sector((0.0, 0.0), PAD_R_IN, PAD_R_OUT,
                                    mid - half_span, mid + half_span))
    return rings


def triangle_array():
    electrodes = [Electrode(id="rf", role=Role.RF,
                            rings=tuple(rf_rings()))]
    base = site_controls()
    for site in range(3):
        a = 2.0 * np.pi * site / 3.0
        for k, ring in enumerate(base):
            electrodes.append(Electrode(
                id=f"c{site * 10 + k + 1}",
                role=Role.CONTROL,
                rings=(rotate(ring, a),),
            ))
    return ElectrodeLayout(frame=Frame(origin=np.zeros(2)),
                           electrodes=tuple(electrodes))


def single_site():
    outer = circle((0.0, 0.0), R2)
    hole = circle((0.0, 0.0), R1)[::-1]
    electrodes = [Electrode(id="rf", role=Role.RF, rings=(outer, hole))]
    for k, ring in enumerate(site_controls(center=(0.0, 0.0),
                                           pad_azimuth=np.pi)):
        electrodes.append(Electrode(id=f"c{k + 1}", role=Role.CONTROL,
                                    rings=(ring,)))
    return ElectrodeLayout(frame=Frame(origin=np.zeros(2)),
                           electrodes=tuple(electrodes))


def main():
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "tests" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    save_layout(triangle_array(), out_dir / "triangle_array.json")
    save_layout(single_site(), out_dir / "single_site.json")
    print(f"wrote {out_dir / 'triangle_array.json'}")
    print(f"wrote {out_dir / 'single_site.json'}")


if __name__ == "__main__":
    main()
