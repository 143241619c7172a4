"""Pseudopotential, trap site finding and normal mode analysis.

The RF drive produces a time-averaged (ponderomotive) potential

    phi_ps(r) = Q * |E_rf(r)|^2 / (4 m Omega_rf^2)

expressed in volts, with E_rf the RF field amplitude at the ion.  Mode
frequencies follow from the curvature of the total potential:
omega_j = sqrt((Q/m) * kappa_j).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .constants import ATOMIC_MASS_KG, ELEMENTARY_CHARGE
from .fields import BasisPotential, FieldEvaluator, FieldSample
from .layout import ElectrodeLayout

__all__ = [
    "IonSpecies",
    "MG25",
    "RFDrive",
    "SearchRegion",
    "SiteKind",
    "TrapSite",
    "ModeStructure",
    "ModeInstabilityError",
    "pseudopotential",
    "find_sites",
    "mode_analysis",
    "total_sample",
]

# Eigenvalues below this fraction of the curvature norm count as zero when
# classifying stationary points.
_DEGENERATE_REL_TOL = 1e-9


class ModeInstabilityError(ValueError):
    """Curvature has a non-positive eigenvalue where a stable trap was assumed."""


@dataclass(frozen=True)
class IonSpecies:
    """Charge (C) and mass (kg) of the trapped ion."""

    charge: float
    mass: float
    label: str = ""

    @classmethod
    def from_units(cls, mass_amu: float, charge_e: int = 1, label: str = "") -> "IonSpecies":
        return cls(charge=charge_e * ELEMENTARY_CHARGE,
                   mass=mass_amu * ATOMIC_MASS_KG, label=label)

    @property
    def charge_to_mass(self) -> float:
        return self.charge / self.mass


MG25 = IonSpecies.from_units(25.0, 1, "Mg-25+")


@dataclass(frozen=True)
class RFDrive:
    """RF drive: angular frequency (rad/s) and peak voltage amplitude (V)."""

    omega_rf: float = 2 * np.pi * 48.3e6
    u_rf: float = 20.0

    def __post_init__(self):
        if self.omega_rf <= 0:
            raise ValueError("omega_rf must be positive")


@dataclass(frozen=True)
class SearchRegion:
    """Axis-aligned search box; z bounds must stay above the chip plane."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(hi <= lo):
            raise ValueError("region upper bounds must exceed lower bounds")
        if lo[2] <= 0:
            raise ValueError("region must lie in z > 0")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, r, pad: float = 0.0) -> bool:
        r = np.asarray(r)
        return bool(np.all(r >= self.lo - pad) and np.all(r <= self.hi + pad))


class SiteKind(enum.Enum):
    MINIMUM = "minimum"
    SADDLE = "saddle"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class TrapSite:
    """Stationary point of the total potential."""

    position: np.ndarray
    gradient: np.ndarray
    curvature: np.ndarray
    kind: SiteKind

    def __post_init__(self):
        for name in ("position", "gradient"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(3)
            v.flags.writeable = False
            object.__setattr__(self, name, v)
        c = np.asarray(self.curvature, dtype=float).reshape(3, 3)
        c.flags.writeable = False
        object.__setattr__(self, "curvature", c)


@dataclass(frozen=True)
class ModeStructure:
    """Normal modes at a trap site.

    frequencies[j] (rad/s) and vectors[j] (unit 3-vector) are ordered by the
    axis convention: mode 0 closest to x, mode 1 to y, mode 2 to z, or by
    overlap with a caller-supplied reference basis when tracking a sweep.
    The vectors form a right-handed orthonormal set.
    """

    frequencies: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float).reshape(3)
        v = np.asarray(self.vectors, dtype=float).reshape(3, 3)
        f.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "vectors", v)


def _rf_field_terms(rf: BasisPotential, r, order: int):
    """RF basis derivatives needed for pseudopotential derivatives of `order`."""
    g = rf.gradient(r)
    H = rf.hessian(r) if order >= 1 else None
    T = rf.third(r) if order >= 2 else None
    return g, H, T


def pseudopotential(layout: ElectrodeLayout, drive: RFDrive, species: IonSpecies,
                    r, order: int = 2,
                    _evaluator: FieldEvaluator | None = None) -> FieldSample:
    """Ponderomotive potential of the RF drive at point r, in volts.

    Derivatives are exact: the gradient uses the RF basis Hessian and the
    Hessian uses its third derivative tensor.
    """
    ev = _evaluator or FieldEvaluator(layout)
    rf = ev.rf_basis
    pref = species.charge * drive.u_rf**2 / (4.0 * species.mass * drive.omega_rf**2)
    g, H, T = _rf_field_terms(rf, r, order)
    value = pref * float(g @ g)
    gradient = hessian = None
    if order >= 1:
        gradient = pref * 2.0 * (H @ g)
    if order >= 2:
        hessian = pref * 2.0 * (H @ H + np.einsum("jkl,l->jk", T, g))
        hessian = 0.5 * (hessian + hessian.T)
    return FieldSample(value=value, gradient=gradient, hessian=hessian)


def total_sample(layout: ElectrodeLayout, drive: RFDrive, species: IonSpecies,
                 r, order: int = 2, voltages=None,
                 _evaluator: FieldEvaluator | None = None) -> FieldSample:
    """Pseudopotential plus optional static control potential (volts).

    voltages, when given, is the per-control-electrode voltage vector in
    index order.
    """
    ev = _evaluator or FieldEvaluator(layout)
    ps = pseudopotential(layout, drive, species, r, order, _evaluator=ev)
    if voltages is None:
        return ps
    voltages = np.asarray(voltages, dtype=float)
    norm = np.linalg.norm(voltages)
    if norm == 0.0:
        return ps
    st = ev.superpose(voltages / norm, norm, r, order)
    return FieldSample(
        value=ps.value + st.value,
        gradient=None if order < 1 else ps.gradient + st.gradient,
        hessian=None if order < 2 else ps.hessian + st.hessian,
    )


def _classify(curvature: np.ndarray) -> SiteKind:
    evals = np.linalg.eigvalsh(curvature)
    scale = np.linalg.norm(curvature)
    if scale == 0.0 or np.any(np.abs(evals) < _DEGENERATE_REL_TOL * scale):
        return SiteKind.DEGENERATE
    if np.all(evals > 0):
        return SiteKind.MINIMUM
    return SiteKind.SADDLE


def _batch_newton_terms(ev: FieldEvaluator, drive: RFDrive, species: IonSpecies,
                        pts: np.ndarray, voltages):
    """Vectorized total-potential gradient and Hessian on many points."""
    rf = ev.rf_basis
    pref = species.charge * drive.u_rf**2 / (4.0 * species.mass * drive.omega_rf**2)
    g = rf.gradient(pts)
    H = rf.hessian(pts)
    T = rf.third(pts)
    grad = 2.0 * pref * np.einsum("njk,nk->nj", H, g)
    hess = 2.0 * pref * (np.einsum("njl,nlk->njk", H, H)
                         + np.einsum("njkl,nl->njk", T, g))
    if voltages is not None:
        for w, electrode in zip(np.asarray(voltages, dtype=float),
                                ev.layout.control_electrodes):
            if w != 0.0:
                basis = ev.basis(electrode.id)
                grad += w * basis.gradient(pts)
                hess += w * basis.hessian(pts)
    return grad, hess


def find_sites(layout: ElectrodeLayout, drive: RFDrive, species: IonSpecies,
               region: SearchRegion, voltages=None,
               starts_per_axis=(13, 13, 11), gradient_tol: float = 1e-3,
               merge_tol: float = 5e-8) -> list[TrapSite]:
    """Locate stationary points of the total potential inside a region.

    Every start-grid point is flowed toward a stationary point by damped
    Newton iteration on the gradient (vectorized over the whole batch,
    steps clipped to one grid cell so no point overshoots its basin), and
    the surviving cluster representatives are polished by a hybrid Newton
    root finder with the analytic Hessian as Jacobian.  Results are
    verified to |grad| < gradient_tol (V/m), merged within merge_tol and
    ordered by position.  Polished positions carry no start-grid noise;
    whether a very small basin is seeded at all does depend on the grid
    density, so raise starts_per_axis to resolve fine saddle structure.
    Points with a near-zero curvature eigenvalue are reported DEGENERATE.
    """
    ev = FieldEvaluator(layout)
    z_floor = 0.05 * float(region.lo[2])
    push = 1e12  # V/m per m of incursion below the floor; keeps z > 0 rootless

    def _clip(r):
        return np.array([r[0], r[1], max(r[2], z_floor)])

    def grad(r):
        g = total_sample(layout, drive, species, _clip(r), order=1,
                         voltages=voltages, _evaluator=ev).gradient
        if r[2] < z_floor:
            g = g.copy()
            g[2] -= push * (z_floor - r[2])
        return g

    def hess(r):
        H = total_sample(layout, drive, species, _clip(r), order=2,
                         voltages=voltages, _evaluator=ev).hessian
        if r[2] < z_floor:
            H = H.copy()
            H[2, 2] += push
        return H

    nx, ny, nz = starts_per_axis
    gx = np.linspace(region.lo[0], region.hi[0], nx)
    gy = np.linspace(region.lo[1], region.hi[1], ny)
    gz = np.linspace(region.lo[2], region.hi[2], nz)
    X, Y, Z = np.meshgrid(gx, gy, gz, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    span = region.hi - region.lo
    cell = span / (np.array([nx, ny, nz]) - 1)
    step_cap = float(np.linalg.norm(cell))
    pad = 1e-3 * float(span.min())

    # Damped Newton flow of the full batch.  Eigenvalue magnitudes are
    # floored (signs kept, so saddles stay attractive) to tame steps along
    # nearly flat curvature directions, and the step cap anneals so points
    # orbiting a root settle onto it.  Far-field points walk out of the
    # region and are dropped; converged points are frozen and deduplication
    # keeps later iterations cheap once points have piled up.
    quantum = step_cap / 256.0
    cap = step_cap
    settled = []
    wander = np.zeros(len(pts), dtype=np.int8)
    norms = np.zeros(len(pts))
    for _ in range(20):
        g, H = _batch_newton_terms(ev, drive, species, pts, voltages)
        evals, evecs = np.linalg.eigh(H)
        floor = 1e-8 * np.abs(evals).max(axis=1, keepdims=True) + 1e-300
        clamped = np.sign(evals) * np.maximum(np.abs(evals), floor)
        clamped = np.where(clamped == 0.0, floor, clamped)
        coef = np.einsum("nij,ni->nj", evecs, g) / clamped
        step = -np.einsum("nij,nj->ni", evecs, coef)
        norms = np.linalg.norm(step, axis=1)
        over = norms > cap
        step = np.where(over[:, None], step * (cap / np.where(over, norms, 1.0))[:, None], step)
        pts = pts + step
        pts[:, 2] = np.maximum(pts[:, 2], z_floor)
        done = norms < 1e-10
        settled.append(pts[done])
        # Points whose uncapped Newton step stays several cells long are in
        # the structureless far field and never converge; drop them early.
        wander = np.where(norms > 4.0 * step_cap, wander + 1, 0).astype(np.int8)
        keep = (~done & (wander < 3)
                & np.all((pts >= region.lo - cell)
                         & (pts <= region.hi + cell), axis=1))
        pts, wander, norms = pts[keep], wander[keep], norms[keep]
        if pts.size == 0:
            break
        _, idx = np.unique(np.round(pts / quantum).astype(np.int64),
                           axis=0, return_index=True)
        idx = np.sort(idx)
        pts, wander, norms = pts[idx], wander[idx], norms[idx]
        cap *= 0.72

    pts = pts[norms < 0.5 * step_cap] if len(pts) else pts
    pts = np.concatenate([pts] + settled, axis=0) if settled else pts
    if len(pts):
        _, idx = np.unique(np.round(pts / quantum).astype(np.int64),
                           axis=0, return_index=True)
        pts = pts[np.sort(idx)]

    found = []
    for start in pts:
        sol = scipy.optimize.root(grad, start, jac=hess, method="hybr",
                                  options={"xtol": 1e-14})
        r = sol.x
        if not region.contains(r, pad=pad):
            continue
        if r[2] <= 0:
            continue
        if np.linalg.norm(grad(r)) > gradient_tol:
            continue
        found.append(r)

    # Deterministic merge: cluster within merge_tol, then sort by position.
    sites: list[TrapSite] = []
    used = np.zeros(len(found), dtype=bool)
    order_idx = np.lexsort(
        tuple(np.array([r[k] for r in found]) for k in (2, 1, 0))
    ) if found else []
    merged = []
    for i in order_idx:
        if used[i]:
            continue
        cluster = [found[i]]
        used[i] = True
        for j in order_idx:
            if not used[j] and np.linalg.norm(found[j] - found[i]) < merge_tol:
                cluster.append(found[j])
                used[j] = True
        merged.append(min(cluster, key=lambda r: np.linalg.norm(grad(r))))
    merged.sort(key=lambda r: (round(r[0], 12), round(r[1], 12), round(r[2], 12)))
    for r in merged:
        H = hess(r)
        sites.append(TrapSite(position=r, gradient=grad(r), curvature=H,
                              kind=_classify(H)))
    return sites


def _axis_labels(vectors: np.ndarray) -> np.ndarray:
    """Permutation assigning eigenvectors to (x, y, z) by maximal overlap."""
    overlap = np.abs(vectors)  # rows: eigenvectors, cols: axes
    row, col = scipy.optimize.linear_sum_assignment(-overlap)
    perm = np.empty(3, dtype=int)
    perm[col] = row
    return perm


def mode_analysis(curvature, species: IonSpecies,
                  reference: ModeStructure | None = None) -> ModeStructure:
    """Normal modes from a potential curvature matrix (V/m^2).

    omega_j = sqrt((Q/m) kappa_j).  Raises ModeInstabilityError when any
    eigenvalue is non-positive.  Labels follow axis proximity, or overlap
    with `reference` vectors when tracking modes through a sweep.  The sign
    convention makes the largest-magnitude component of each of the first
    two vectors positive; the third completes a right-handed set.
    """
    curvature = np.asarray(curvature, dtype=float)
    if not np.allclose(curvature, curvature.T,
                       atol=1e-9 * max(np.linalg.norm(curvature), 1.0)):
        raise ValueError("curvature matrix must be symmetric")
    evals, evecs = np.linalg.eigh(0.5 * (curvature + curvature.T))
    if np.any(evals <= 0):
        raise ModeInstabilityError(
            f"non-positive curvature eigenvalue(s) {evals[evals <= 0]}; "
            "not a stable trap site"
        )
    vectors = evecs.T  # rows are eigenvectors
    if reference is None:
        perm = _axis_labels(vectors)
    else:
        overlap = np.abs(vectors @ reference.vectors.T)
        row, col = scipy.optimize.linear_sum_assignment(-overlap)
        perm = np.empty(3, dtype=int)
        perm[col] = row
    evals = evals[perm]
    vectors = vectors[perm]
    for j in range(2):
        k = np.argmax(np.abs(vectors[j]))
        if vectors[j][k] < 0:
            vectors[j] = -vectors[j]
    vectors[2] = np.cross(vectors[0], vectors[1])
    freqs = np.sqrt(species.charge_to_mass * evals)
    return ModeStructure(frequencies=freqs, vectors=vectors)
