"""RF electrode shape optimization on a pixel grid.

The RF electrode is discretized into square pixels whose value p in [0, 1]
is the fraction of the pixel held at RF potential.  Field and field
Jacobian at any point are linear in p, so "null the RF field at each site,
then maximize the curvature orientation overlap" is a linear program: the
objective is the Frobenius overlap of the field Jacobian with a requested
direction matrix per site, the constraints are three field components per
site pinned to zero plus the box 0 <= p <= 1.  Optimal basic solutions are
bang-bang (almost all pixels exactly 0 or 1), which is what makes the
extracted electrode shapes clean.

All pixel fields reuse the electrostatic basis of a single square
electrode evaluated at translated points, so a 64x64 grid costs one
vectorized field call, not 4096 electrode constructions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize
import skimage.measure
from shapely.geometry import Polygon as _Polygon

from .fields import BasisPotential
from .layout import Electrode, ElectrodeLayout, Frame, Role

__all__ = [
    "PixelGrid",
    "PixelPattern",
    "ShapeObjective",
    "SiteFieldReport",
    "ShapeResult",
    "ExtractionResult",
    "InfeasibleShapeError",
    "lp_optimize",
    "extract_polygons",
]

_VALUE_TOL = 1e-12
_BOUNDARY_TOL = 1e-7  # pixel counts as interior if farther than this from 0/1


class InfeasibleShapeError(ValueError):
    """The field cannot be nulled at the requested sites on this grid."""


def _rot2(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class PixelGrid:
    """Square-pixel lattice in the chip plane.

    origin is the world position of the lattice corner; row/column axes are
    the lattice axes rotated by `angle` about the origin.  shape is
    (rows, cols) with rows along the lattice y axis.
    """

    origin: np.ndarray
    pitch: float
    shape: tuple
    angle: float = 0.0

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(2)
        o.flags.writeable = False
        object.__setattr__(self, "origin", o)
        rows, cols = self.shape
        if rows < 1 or cols < 1 or self.pitch <= 0:
            raise ValueError("grid needs positive shape and pitch")
        object.__setattr__(self, "shape", (int(rows), int(cols)))

    @property
    def n_pixels(self) -> int:
        return self.shape[0] * self.shape[1]

    def pixel_offsets(self) -> np.ndarray:
        """Lattice-frame lower-left corners of all pixels, row-major."""
        rows, cols = self.shape
        jj, kk = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        return self.pitch * np.column_stack([kk.ravel(), jj.ravel()])

    def to_world(self, lattice_xy: np.ndarray) -> np.ndarray:
        return lattice_xy @ _rot2(self.angle).T + self.origin

    def to_lattice(self, world_points: np.ndarray) -> np.ndarray:
        """World 3-vectors to lattice frame (z unchanged)."""
        pts = np.atleast_2d(np.asarray(world_points, dtype=float))
        out = pts.copy()
        out[:, :2] = (pts[:, :2] - self.origin) @ _rot2(self.angle)
        return out

    def bounds_polygon(self) -> np.ndarray:
        rows, cols = self.shape
        w, h = cols * self.pitch, rows * self.pitch
        corners = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
        return self.to_world(corners)


@dataclass(frozen=True)
class PixelPattern:
    """Pixel values in [0, 1] on a grid (fraction at RF potential)."""

    grid: PixelGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid {self.grid.shape}")
        if v.min() < -_VALUE_TOL or v.max() > 1.0 + _VALUE_TOL:
            raise ValueError(
                f"pixel values outside [0, 1]: range [{v.min()}, {v.max()}]"
            )
        v = np.clip(v, 0.0, 1.0)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ShapeObjective:
    """Target sites and desired field-Jacobian orientations.

    Each direction matrix must be symmetric, traceless, and unit Frobenius
    norm; the optimizer maximizes the summed overlap <M_i, J_i>.
    """

    sites: tuple
    matrices: tuple

    def __post_init__(self):
        sites = tuple(np.asarray(s, dtype=float).reshape(3) for s in self.sites)
        mats = tuple(np.asarray(m, dtype=float).reshape(3, 3)
                     for m in self.matrices)
        if len(sites) != len(mats):
            raise ValueError("need one direction matrix per site")
        if not sites:
            raise ValueError("objective needs at least one site")
        for s in sites:
            if s[2] <= 0:
                raise ValueError(f"site {s} is not above the chip plane")
        for m in mats:
            if np.abs(m - m.T).max() > 1e-9:
                raise ValueError("direction matrix must be symmetric")
            if abs(np.trace(m)) > 1e-9:
                raise ValueError("direction matrix must be traceless")
            if abs(np.linalg.norm(m) - 1.0) > 1e-9:
                raise ValueError("direction matrix must have unit Frobenius norm")
        for s in sites:
            s.flags.writeable = False
        for m in mats:
            m.flags.writeable = False
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "matrices", mats)


@dataclass(frozen=True)
class SiteFieldReport:
    """Achieved linear field quantities of the optimal pattern at one site.

    field is the RF field per volt (1/m), jacobian its spatial derivative
    (1/m^2), pseudo_curvature the squared-field curvature J^T J (1/m^4)
    whose eigenvalues set the pseudopotential mode frequencies.
    """

    site: np.ndarray
    field: np.ndarray
    jacobian: np.ndarray
    pseudo_curvature: np.ndarray


@dataclass(frozen=True)
class ShapeResult:
    pattern: PixelPattern
    objective_value: float
    certificate_residual: float
    interior_pixels: int
    site_reports: tuple


def _pixel_field_terms(grid: PixelGrid, sites) -> tuple[np.ndarray, np.ndarray]:
    """Per-(site, pixel) basis gradient and Hessian in world axes.

    Returns arrays of shape (n_sites, n_pixels, 3) and (..., 3, 3).  One
    square's basis is evaluated at translated lattice-frame points, then
    derivatives are rotated back to world axes.
    """
    p = grid.pitch
    square = Electrode(id="pixel", role=Role.RF, rings=(
        np.array([[0.0, 0.0], [p, 0.0], [p, p], [0.0, p]]),
    ))
    base = BasisPotential.from_electrode(square)
    offsets = grid.pixel_offsets()  # (npix, 2)
    sites_lattice = grid.to_lattice(np.asarray(sites, dtype=float))
    pts = sites_lattice[:, None, :] - np.concatenate(
        [offsets, np.zeros((len(offsets), 1))], axis=1)[None, :, :]
    flat = pts.reshape(-1, 3)
    g = base.gradient(flat).reshape(len(sites_lattice), len(offsets), 3)
    h = base.hessian(flat).reshape(len(sites_lattice), len(offsets), 3, 3)
    rot = np.eye(3)
    rot[:2, :2] = _rot2(grid.angle)
    g = np.einsum("ab,npb->npa", rot, g)
    h = np.einsum("ab,npbc,dc->npad", rot, h, rot)
    return g, h


def _certificate_residual(cost: np.ndarray, a_eq: np.ndarray, x: np.ndarray,
                          y: np.ndarray) -> float:
    """Relative KKT violation of (x, y) for min cost.x s.t. a_eq x = 0, 0<=x<=1."""
    reduced = cost - a_eq.T @ y
    scale = max(np.abs(cost).max(), 1e-300)
    at_lo = x < _BOUNDARY_TOL
    at_hi = x > 1.0 - _BOUNDARY_TOL
    interior = ~(at_lo | at_hi)
    viol = 0.0
    if at_lo.any():
        viol = max(viol, float(np.maximum(-reduced[at_lo], 0.0).max()))
    if at_hi.any():
        viol = max(viol, float(np.maximum(reduced[at_hi], 0.0).max()))
    if interior.any():
        viol = max(viol, float(np.abs(reduced[interior]).max()))
    primal = float(np.abs(a_eq @ x).max()) if a_eq.size else 0.0
    row_scale = max(np.abs(a_eq).max(), 1e-300)
    return max(viol / scale, primal / row_scale)


def lp_optimize(objective: ShapeObjective, grid: PixelGrid,
                constrain_axes=(0, 1, 2)) -> ShapeResult:
    """Optimal pixel pattern maximizing curvature overlap at nulled sites.

    Solves: maximize sum_i <M_i, J_i(p)> subject to zero RF field at every
    site (components in constrain_axes) and 0 <= p <= 1.  The result
    carries the relative complementary-slackness residual of the returned
    primal/dual pair and the count of non-bang-bang pixels (at most the
    number of equality constraints for a basic optimum).
    """
    g, h = _pixel_field_terms(grid, objective.sites)
    mats = np.stack(objective.matrices)
    # J = -H per pixel; overlap summed over sites
    gain = -np.einsum("iab,ipab->p", mats, h)
    a_eq = (g[:, :, list(constrain_axes)].transpose(0, 2, 1)
            .reshape(-1, grid.n_pixels))
    res = scipy.optimize.linprog(
        -gain, A_eq=a_eq, b_eq=np.zeros(a_eq.shape[0]),
        bounds=(0.0, 1.0), method="highs",
    )
    if res.status == 2:
        raise InfeasibleShapeError(
            "cannot null the RF field at all sites on this grid"
        )
    if res.status != 0:
        raise RuntimeError(f"LP solve failed (status {res.status}): {res.message}")
    x = np.clip(res.x, 0.0, 1.0)
    y = np.asarray(res.eqlin.marginals, dtype=float)
    residual = _certificate_residual(-gain, a_eq, x, y)
    interior = int(np.sum((x > _BOUNDARY_TOL) & (x < 1.0 - _BOUNDARY_TOL)))
    reports = []
    for i, site in enumerate(objective.sites):
        field = -(g[i].T @ x)
        jac = -np.einsum("pab,p->ab", h[i], x)
        reports.append(SiteFieldReport(
            site=site, field=field, jacobian=jac,
            pseudo_curvature=jac.T @ jac,
        ))
    pattern = PixelPattern(grid=grid, values=x.reshape(grid.shape))
    return ShapeResult(
        pattern=pattern, objective_value=float(gain @ x),
        certificate_residual=residual, interior_pixels=interior,
        site_reports=tuple(reports),
    )


@dataclass(frozen=True)
class ExtractionResult:
    layout: ElectrodeLayout
    fragmentation: int


def _simplify_ring(ring: np.ndarray, tol: float) -> np.ndarray:
    poly = _Polygon(ring)
    simplified = poly.simplify(tol, preserve_topology=True)
    if simplified.is_empty or simplified.area == 0.0:
        return ring
    coords = np.array(simplified.exterior.coords[:-1])
    return coords if len(coords) >= 3 else ring


def extract_polygons(pattern: PixelPattern,
                     threshold: float = 0.5) -> ExtractionResult:
    """Polygonal RF electrode from a pixel pattern by contour tracing.

    Marching-squares contours of the zero-padded value array at the
    threshold become the electrode rings (Douglas-Peucker simplified with
    tolerance pitch/4); containment parity inside the Electrode marks
    holes.  The grid complement is returned as a GROUND electrode, and
    fragmentation counts the connected RF components.
    """
    grid = pattern.grid
    padded = np.zeros((grid.shape[0] + 2, grid.shape[1] + 2))
    padded[1:-1, 1:-1] = pattern.values
    if padded.max() < threshold:
        raise ValueError("pattern has no region above the threshold")
    contours = skimage.measure.find_contours(padded, threshold,
                                             fully_connected="low")
    rings = []
    for contour in contours:
        # closed loops: padding guarantees closure; drop the repeated vertex
        loop = contour[:-1] if np.allclose(contour[0], contour[-1]) else contour
        if len(loop) < 3:
            continue
        lattice_xy = np.column_stack([
            (loop[:, 1] - 0.5) * grid.pitch,
            (loop[:, 0] - 0.5) * grid.pitch,
        ])
        ring = grid.to_world(lattice_xy)
        ring = _simplify_ring(ring, grid.pitch / 4.0)
        if abs(_Polygon(ring).area) > 0.0:
            rings.append(ring)
    if not rings:
        raise ValueError("pattern has no region above the threshold")
    polys = [_Polygon(r) for r in rings]
    shells = 0
    for k, poly in enumerate(polys):
        rep = poly.representative_point()
        depth = sum(1 for j, other in enumerate(polys)
                    if j != k and other.contains(rep) and poly.within(other))
        if depth % 2 == 0:
            shells += 1
    rf = Electrode(id="rf", role=Role.RF, rings=tuple(rings))
    ground = Electrode(id="ground", role=Role.GROUND,
                       rings=(grid.bounds_polygon(),) + tuple(rings))
    layout = ElectrodeLayout(frame=Frame(origin=np.zeros(2)),
                             electrodes=(rf, ground))
    return ExtractionResult(layout=layout, fragmentation=shells)
