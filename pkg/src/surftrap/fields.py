"""Electrostatic basis potentials of planar electrodes.

Model: every electrode is held at 1 V with the rest of the z = 0 plane
grounded (gapless approximation).  The resulting potential above the plane
equals the solid angle subtended by the electrode polygon, divided by 2*pi.
Values are dimensionless (volts per volt applied); derivatives carry 1/m
per order.

The value is computed per fan triangle with the arctangent formula for the
solid angle of a plane triangle.  First, second and third derivatives come
from closed-form line integrals along the polygon edges; no finite
differences are involved.  Everything is vectorized over evaluation points
and valid only in the open half space z > 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layout import Electrode, ElectrodeLayout, Role, _ring_signed_area

__all__ = [
    "FieldDomainError",
    "FieldSample",
    "BasisPotential",
    "FieldEvaluator",
    "basis_eval",
    "superpose",
]

_INV_2PI = 1.0 / (2.0 * np.pi)

# Evaluation proceeds in point blocks to bound temporary array sizes.
_BLOCK_LOW_ORDER = 2048
_BLOCK_THIRD = 256


class FieldDomainError(ValueError):
    """Evaluation requested outside the valid half space z > 0."""


@dataclass(frozen=True)
class FieldSample:
    """Potential value with optional derivatives at one point.

    gradient and hessian are None when not requested.  The hessian is
    symmetrized; for a single harmonic basis it is traceless up to
    roundoff.
    """

    value: float
    gradient: np.ndarray | None = None
    hessian: np.ndarray | None = None


def _as_points(r) -> tuple[np.ndarray, bool]:
    pts = np.asarray(r, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have shape (..., 3), got {pts.shape}")
    if np.any(pts[:, 2] <= 0.0):
        raise FieldDomainError("basis potentials are defined only for z > 0")
    return pts, single


def _fan_triangles(rings) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fan decomposition of each ring; signed solid angles make overlap and
    orientation bookkeeping automatic, so no ear clipping is required."""
    q0, q1, q2 = [], [], []
    for ring in rings:
        n = len(ring)
        v = np.column_stack([ring, np.zeros(n)])
        for i in range(1, n - 1):
            q0.append(v[0])
            q1.append(v[i])
            q2.append(v[i + 1])
    return np.array(q0), np.array(q1), np.array(q2)


def _edges(rings) -> tuple[np.ndarray, np.ndarray]:
    a, d = [], []
    for ring in rings:
        n = len(ring)
        v = np.column_stack([ring, np.zeros(n)])
        nxt = np.roll(v, -1, axis=0)
        a.append(v)
        d.append(nxt - v)
    return np.concatenate(a), np.concatenate(d)


def _triangle_solid_angle_sum(q0, q1, q2, pts) -> np.ndarray:
    """Signed solid angle sum over fan triangles, for each point (n,)."""
    R1 = q0[None, :, :] - pts[:, None, :]
    R2 = q1[None, :, :] - pts[:, None, :]
    R3 = q2[None, :, :] - pts[:, None, :]
    r1 = np.linalg.norm(R1, axis=-1)
    r2 = np.linalg.norm(R2, axis=-1)
    r3 = np.linalg.norm(R3, axis=-1)
    stp = np.einsum("...i,...i->...", R1, np.cross(R2, R3))
    denom = (
        r1 * r2 * r3
        + r3 * np.einsum("...i,...i->...", R1, R2)
        + r2 * np.einsum("...i,...i->...", R1, R3)
        + r1 * np.einsum("...i,...i->...", R2, R3)
    )
    return np.sum(2.0 * np.arctan2(stp, denom), axis=-1)


def _edge_terms(a, d, pts, order):
    """Per-edge line-integral quantities for derivative assembly.

    Returns (c, I, gI, hI):
      c  (n,E,3)      cross(u, d) with u the vector from point to edge start
      I  (n,E)        integral of 1/|s|^3 along the edge (unit parameter)
      gI (n,E,3)      gradient of I w.r.t. the point     (order >= 2)
      hI (n,E,3,3)    hessian of I w.r.t. the point      (order >= 3)
    """
    u = a[None, :, :] - pts[:, None, :]
    v = u + d[None, :, :]
    s0 = np.linalg.norm(u, axis=-1)
    s1 = np.linalg.norm(v, axis=-1)
    cross_du = np.cross(np.broadcast_to(d, u.shape), u)
    D = np.einsum("nei,nei->ne", cross_du, cross_du)
    N0 = np.einsum("nei,ei->ne", u, d) / s0
    N1 = np.einsum("nei,ei->ne", v, d) / s1
    Q = N1 - N0
    I = Q / D
    c = np.cross(u, np.broadcast_to(d, u.shape))
    if order < 2:
        return c, I, None, None

    dE = np.broadcast_to(d, u.shape)
    gN1 = -dE / s1[..., None] + (N1 / s1**2)[..., None] * v
    gN0 = -dE / s0[..., None] + (N0 / s0**2)[..., None] * u
    A = np.einsum("ei,ei->e", d, d)
    B = N0 * s0
    gD = -2.0 * A[None, :, None] * u + 2.0 * B[..., None] * dE
    gI = (gN1 - gN0 - I[..., None] * gD) / D[..., None]
    if order < 3:
        return c, I, gI, None

    eye = np.eye(3)
    dv = dE[..., :, None] * v[..., None, :]
    hN1 = (
        -(dv + np.swapaxes(dv, -1, -2))
        - (N1 * s1)[..., None, None] * eye
    ) / (s1**3)[..., None, None] + (3.0 * N1 / s1**4)[..., None, None] * (
        v[..., :, None] * v[..., None, :]
    )
    du = dE[..., :, None] * u[..., None, :]
    hN0 = (
        -(du + np.swapaxes(du, -1, -2))
        - (N0 * s0)[..., None, None] * eye
    ) / (s0**3)[..., None, None] + (3.0 * N0 / s0**4)[..., None, None] * (
        u[..., :, None] * u[..., None, :]
    )
    hD = 2.0 * A[None, :, None, None] * eye - 2.0 * (
        dE[..., :, None] * dE[..., None, :]
    )
    P = gN1 - gN0
    PgD = P[..., :, None] * gD[..., None, :]
    hI = (
        (hN1 - hN0) / D[..., None, None]
        - (PgD + np.swapaxes(PgD, -1, -2)) / (D**2)[..., None, None]
        - (Q / D**2)[..., None, None] * hD
        + (2.0 * Q / D**3)[..., None, None] * (gD[..., :, None] * gD[..., None, :])
    )
    return c, I, gI, hI


def _edge_antisym(d) -> np.ndarray:
    """Matrix M with M[e, j, k] = d/dr_k of cross(u, d)_j (constant per edge)."""
    E = d.shape[0]
    M = np.zeros((E, 3, 3))
    M[:, 0, 1] = -d[:, 2]
    M[:, 0, 2] = d[:, 1]
    M[:, 1, 0] = d[:, 2]
    M[:, 1, 2] = -d[:, 0]
    M[:, 2, 0] = -d[:, 1]
    M[:, 2, 1] = d[:, 0]
    return M


class BasisPotential:
    """Evaluator for the unit-voltage potential of one electrode."""

    def __init__(self, rings, electrode_id: str = "", role: Role | None = None):
        rings = [np.asarray(r, dtype=float) for r in rings]
        for r in rings:
            if r.ndim != 2 or r.shape[1] != 2 or len(r) < 3:
                raise ValueError("each ring must be an (n >= 3, 2) vertex array")
        self.electrode_id = electrode_id
        self.role = role
        self._rings = rings
        self._q0, self._q1, self._q2 = _fan_triangles(rings)
        self._a, self._d = _edges(rings)
        lengths = np.linalg.norm(self._d, axis=-1)
        if np.any(lengths <= 0.0):
            raise ValueError("degenerate zero-length edge in electrode rings")
        self._M = _edge_antisym(self._d)

    @classmethod
    def from_electrode(cls, electrode: Electrode) -> "BasisPotential":
        return cls(electrode.rings, electrode.id, electrode.role)

    @property
    def net_area(self) -> float:
        return float(sum(_ring_signed_area(r) for r in self._rings))

    def value(self, r) -> np.ndarray | float:
        pts, single = _as_points(r)
        out = np.empty(len(pts))
        for lo in range(0, len(pts), _BLOCK_LOW_ORDER):
            block = pts[lo : lo + _BLOCK_LOW_ORDER]
            om = _triangle_solid_angle_sum(self._q0, self._q1, self._q2, block)
            out[lo : lo + len(block)] = -_INV_2PI * om
        return float(out[0]) if single else out

    def gradient(self, r) -> np.ndarray:
        pts, single = _as_points(r)
        out = np.empty((len(pts), 3))
        for lo in range(0, len(pts), _BLOCK_LOW_ORDER):
            block = pts[lo : lo + _BLOCK_LOW_ORDER]
            c, I, _, _ = _edge_terms(self._a, self._d, block, order=1)
            out[lo : lo + len(block)] = -_INV_2PI * np.einsum("nej,ne->nj", c, I)
        return out[0] if single else out

    def hessian(self, r) -> np.ndarray:
        pts, single = _as_points(r)
        out = np.empty((len(pts), 3, 3))
        for lo in range(0, len(pts), _BLOCK_LOW_ORDER):
            block = pts[lo : lo + _BLOCK_LOW_ORDER]
            c, I, gI, _ = _edge_terms(self._a, self._d, block, order=2)
            H = np.einsum("ejk,ne->njk", self._M, I)
            H += np.einsum("nej,nek->njk", c, gI)
            H *= -_INV_2PI
            out[lo : lo + len(block)] = 0.5 * (H + np.swapaxes(H, -1, -2))
        return out[0] if single else out

    def third(self, r) -> np.ndarray:
        """Third derivative tensor T[j, k, l] = d^3 value / dr_j dr_k dr_l."""
        pts, single = _as_points(r)
        out = np.empty((len(pts), 3, 3, 3))
        for lo in range(0, len(pts), _BLOCK_THIRD):
            block = pts[lo : lo + _BLOCK_THIRD]
            c, I, gI, hI = _edge_terms(self._a, self._d, block, order=3)
            T = np.einsum("ejk,nel->njkl", self._M, gI)
            T += np.einsum("ejl,nek->njkl", self._M, gI)
            T += np.einsum("nej,nekl->njkl", c, hI)
            T *= -_INV_2PI
            # Symmetrize over all index orders; T is symmetric analytically.
            T = (
                T
                + np.transpose(T, (0, 1, 3, 2))
                + np.transpose(T, (0, 2, 1, 3))
                + np.transpose(T, (0, 2, 3, 1))
                + np.transpose(T, (0, 3, 1, 2))
                + np.transpose(T, (0, 3, 2, 1))
            ) / 6.0
            out[lo : lo + len(block)] = T
        return out[0] if single else out

    def sample(self, r, order: int = 2) -> FieldSample:
        if order not in (0, 1, 2):
            raise ValueError("order must be 0, 1 or 2")
        return FieldSample(
            value=self.value(r),
            gradient=self.gradient(r) if order >= 1 else None,
            hessian=self.hessian(r) if order >= 2 else None,
        )


def basis_eval(basis: BasisPotential | Electrode, r, order: int = 2) -> FieldSample:
    """Evaluate one electrode's unit-voltage potential at a point."""
    if isinstance(basis, Electrode):
        basis = BasisPotential.from_electrode(basis)
    return basis.sample(r, order)


class FieldEvaluator:
    """Caches per-electrode evaluators for one layout."""

    def __init__(self, layout: ElectrodeLayout):
        self.layout = layout
        self._bases: dict[str, BasisPotential] = {}

    def basis(self, electrode_id: str) -> BasisPotential:
        b = self._bases.get(electrode_id)
        if b is None:
            b = BasisPotential.from_electrode(self.layout.electrode(electrode_id))
            self._bases[electrode_id] = b
        return b

    @property
    def rf_basis(self) -> BasisPotential:
        rf = self.layout.rf_electrode
        if rf is None:
            raise ValueError("layout has no RF electrode")
        return self.basis(rf.id)

    def control_bases(self) -> list[BasisPotential]:
        return [self.basis(e.id) for e in self.layout.control_electrodes]

    def superpose(self, v_hat, u_c: float, r, order: int = 2,
                  normalized: bool = True) -> FieldSample:
        v_hat = np.asarray(v_hat, dtype=float)
        controls = self.layout.control_electrodes
        if v_hat.shape != (len(controls),):
            raise ValueError(
                f"voltage vector has {v_hat.shape} entries, layout has "
                f"{len(controls)} control electrodes"
            )
        norm = np.linalg.norm(v_hat)
        if normalized and abs(norm - 1.0) > 1e-9:
            raise ValueError(
                f"|v_hat| = {norm:.12g} is not 1 within 1e-9; pass "
                "normalized=False to superpose an unnormalized vector"
            )
        weights = u_c * v_hat
        value = 0.0
        gradient = np.zeros(3) if order >= 1 else None
        hessian = np.zeros((3, 3)) if order >= 2 else None
        for w, electrode in zip(weights, controls):
            if w == 0.0:
                continue
            b = self.basis(electrode.id)
            value += w * b.value(r)
            if order >= 1:
                gradient += w * b.gradient(r)
            if order >= 2:
                hessian += w * b.hessian(r)
        return FieldSample(value=float(value), gradient=gradient, hessian=hessian)


def superpose(layout: ElectrodeLayout, v_hat, u_c: float, r, order: int = 2,
              normalized: bool = True) -> FieldSample:
    """Weighted control potential u_c * sum_n v_hat[n] * basis_n at point r.

    v_hat is indexed like layout.control_electrodes (index order 1..N).
    """
    return FieldEvaluator(layout).superpose(v_hat, u_c, r, order, normalized)
