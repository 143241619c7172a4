"""Control-voltage synthesis for multi-site electrode arrays.

A control set is a unit voltage vector over the control electrodes plus a
scalar amplitude.  `solve_control` finds the minimum-norm voltage vector
whose superposed potential realizes requested gradients (3 DoF) and
traceless curvatures (5 DoF) at a list of sites; `family_target` provides
the named single-site target tables (stray-field compensation gradients,
mode-frequency tuning, in-plane and out-of-plane mode rotation).  The
detuning and rotation predictors convert a control curvature into the
observable frequency shift and principal-axis angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .fields import FieldEvaluator, FieldSample
from .layout import ElectrodeLayout
from .trap import IonSpecies, ModeInstabilityError, ModeStructure, mode_analysis

__all__ = [
    "FREE",
    "FAMILY_KINDS",
    "ConstraintTarget",
    "ControlSet",
    "SiteResidual",
    "ControlSolution",
    "ConstraintRankError",
    "DegenerateRotationError",
    "RotationPrediction",
    "CrosstalkEntry",
    "traceless_curvature",
    "solve_control",
    "family_target",
    "predict_detuning",
    "predict_rotation",
    "residual_crosstalk",
]

# Sentinel for an unconstrained gradient or curvature slot.
FREE = None

_RANK_RTOL = 1e-10

# Independent curvature components; zz follows from harmonicity.
_CURV_DOF = ((0, 0), (1, 1), (0, 1), (0, 2), (1, 2))
_CURV_NAMES = ("xx", "yy", "xy", "xz", "yz")


class ConstraintRankError(ValueError):
    """Constraint matrix is rank deficient (redundant or inconsistent rows)."""


class DegenerateRotationError(ValueError):
    """In-plane eigenvalues coincide; the rotation angle is undefined."""


def traceless_curvature(xx: float, yy: float, xy: float = 0.0,
                        xz: float = 0.0, yz: float = 0.0) -> np.ndarray:
    """Symmetric 3x3 curvature from its five free components, zz = -xx-yy."""
    return np.array([
        [xx, xy, xz],
        [xy, yy, yz],
        [xz, yz, -xx - yy],
    ])


@dataclass(frozen=True)
class ConstraintTarget:
    """Requested potential derivatives at one site.

    gradient_target (V/m) and curvature_target (V/m^2) may each be FREE,
    leaving those degrees of freedom unconstrained.  A given curvature must
    be symmetric and traceless; its zz entry is rebuilt from -xx-yy so the
    stored trace is exactly zero.
    """

    site: np.ndarray
    gradient_target: np.ndarray | None = FREE
    curvature_target: np.ndarray | None = FREE

    def __post_init__(self):
        site = np.asarray(self.site, dtype=float).reshape(3)
        site.flags.writeable = False
        object.__setattr__(self, "site", site)
        if self.gradient_target is not FREE:
            g = np.asarray(self.gradient_target, dtype=float).reshape(3)
            g.flags.writeable = False
            object.__setattr__(self, "gradient_target", g)
        if self.curvature_target is not FREE:
            c = np.asarray(self.curvature_target, dtype=float).reshape(3, 3)
            scale = max(float(np.abs(c).max()), 1.0)
            if np.abs(c - c.T).max() > 1e-9 * scale:
                raise ValueError("curvature target must be symmetric")
            if abs(np.trace(c)) > 1e-6 * scale:
                raise ValueError(
                    f"curvature target trace {np.trace(c):.3e} is not zero; "
                    "a harmonic potential cannot realize it"
                )
            c = traceless_curvature(c[0, 0], c[1, 1], c[0, 1], c[0, 2], c[1, 2])
            c.flags.writeable = False
            object.__setattr__(self, "curvature_target", c)


@dataclass(frozen=True)
class ControlSet:
    """Unit voltage vector over the control electrodes plus an amplitude.

    The all-zero solution is represented by a zero vector with u_c = 0;
    otherwise |v_hat| must be 1 within 1e-12.
    """

    v_hat: np.ndarray
    u_c: float
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.v_hat, dtype=float).reshape(-1)
        norm = float(np.linalg.norm(v))
        zero_ok = self.u_c == 0.0 and norm == 0.0
        if not zero_ok and abs(norm - 1.0) > 1e-12:
            raise ValueError(f"|v_hat| = {norm:.15g} is not 1 within 1e-12")
        v.flags.writeable = False
        object.__setattr__(self, "v_hat", v)

    @classmethod
    def from_voltages(cls, voltages, label: str = "") -> "ControlSet":
        voltages = np.asarray(voltages, dtype=float).reshape(-1)
        norm = float(np.linalg.norm(voltages))
        if norm == 0.0:
            return cls(v_hat=np.zeros_like(voltages), u_c=0.0, label=label)
        return cls(v_hat=voltages / norm, u_c=norm, label=label)

    @property
    def voltages(self) -> np.ndarray:
        return self.u_c * self.v_hat


@dataclass(frozen=True)
class SiteResidual:
    """Achieved control-potential derivatives at one constraint site.

    Residuals are achieved minus target; for a FREE slot the residual is
    the achieved value itself (nothing was requested there).
    """

    site: np.ndarray
    gradient: np.ndarray
    curvature: np.ndarray
    gradient_residual: np.ndarray
    curvature_residual: np.ndarray


@dataclass(frozen=True)
class ControlSolution:
    control_set: ControlSet
    residuals: tuple[SiteResidual, ...]
    rank: int
    nullspace_dim: int
    constraint_matrix: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)


def _constraint_rows(ev: FieldEvaluator, targets) -> tuple[np.ndarray, np.ndarray, list[str]]:
    controls = ev.layout.control_electrodes
    n = len(controls)
    rows, rhs, names = [], [], []
    for i, t in enumerate(targets):
        if t.gradient_target is not FREE:
            grads = np.stack([ev.basis(e.id).gradient(t.site) for e in controls])
            for axis, comp in enumerate("xyz"):
                rows.append(grads[:, axis])
                rhs.append(t.gradient_target[axis])
                names.append(f"site {i} gradient {comp}")
        if t.curvature_target is not FREE:
            hesses = np.stack([ev.basis(e.id).hessian(t.site) for e in controls])
            for (a, b), comp in zip(_CURV_DOF, _CURV_NAMES):
                rows.append(hesses[:, a, b])
                rhs.append(t.curvature_target[a, b])
                names.append(f"site {i} curvature {comp}")
    if rows:
        return np.stack(rows), np.array(rhs), names
    return np.zeros((0, n)), np.zeros(0), names


def _offending_rows(matrix: np.ndarray, rank: int, names: list[str]) -> list[str]:
    """Rows participating in the left null space of a rank-deficient matrix."""
    u, s, _ = np.linalg.svd(matrix)
    bad = set()
    for k in range(rank, matrix.shape[0]):
        weights = np.abs(u[:, k])
        for i in np.nonzero(weights > 0.1 * weights.max())[0]:
            bad.add(i)
    return [names[i] for i in sorted(bad)]


def _minimax_voltages(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Smallest-maximum-voltage solution of matrix @ x = rhs by LP."""
    m, n = matrix.shape
    c = np.zeros(n + 1)
    c[-1] = 1.0
    a_eq = np.hstack([matrix, np.zeros((m, 1))])
    eye = np.eye(n)
    a_ub = np.vstack([
        np.hstack([eye, -np.ones((n, 1))]),
        np.hstack([-eye, -np.ones((n, 1))]),
    ])
    res = scipy.optimize.linprog(
        c, A_ub=a_ub, b_ub=np.zeros(2 * n), A_eq=a_eq, b_eq=rhs,
        bounds=[(None, None)] * n + [(0.0, None)], method="highs",
    )
    if not res.success:
        raise ConstraintRankError(f"minimax solve failed: {res.message}")
    return res.x[:n]


def solve_control(layout: ElectrodeLayout, targets, label: str = "",
                  minimax: bool = False) -> ControlSolution:
    """Voltage vector realizing the targets with minimum Euclidean norm.

    The constraint matrix stacks the per-electrode basis gradient and
    curvature components at each site; the returned vector solves it
    exactly and is orthogonal to its null space, which makes it the unique
    minimum-norm solution.  With minimax=True the largest |voltage| is
    minimized instead (linear program; ties are solver-dependent).  The
    solution report carries achieved values and residuals at every site,
    the matrix rank, and the null-space dimension left for audit.

    Raises ConstraintRankError when rows are linearly dependent (the
    offending rows are listed) and ValueError when there are more scalar
    constraints than control electrodes.
    """
    ev = FieldEvaluator(layout)
    targets = list(targets)
    n = len(layout.control_electrodes)
    matrix, rhs, names = _constraint_rows(ev, targets)
    m = matrix.shape[0]
    if m > n:
        raise ValueError(
            f"{m} scalar constraints exceed the {n} control electrodes"
        )
    if m == 0:
        rank = 0
        x = np.zeros(n)
    else:
        sv = np.linalg.svd(matrix, compute_uv=False)
        rank = int(np.sum(sv > _RANK_RTOL * sv[0]))
        if not np.any(rhs):
            x = np.zeros(n)
        else:
            if rank < m:
                raise ConstraintRankError(
                    f"constraint matrix rank {rank} < {m} rows; dependent "
                    "rows: " + ", ".join(_offending_rows(matrix, rank, names))
                )
            if minimax:
                x = _minimax_voltages(matrix, rhs)
            else:
                x = np.linalg.pinv(matrix, rcond=_RANK_RTOL) @ rhs
    control_set = ControlSet.from_voltages(x, label=label)
    residuals = []
    for t in targets:
        sample = ev.superpose(x, 1.0, t.site, order=2, normalized=False)
        g_res = (sample.gradient if t.gradient_target is FREE
                 else sample.gradient - t.gradient_target)
        c_res = (sample.hessian if t.curvature_target is FREE
                 else sample.hessian - t.curvature_target)
        residuals.append(SiteResidual(
            site=t.site, gradient=sample.gradient, curvature=sample.hessian,
            gradient_residual=g_res, curvature_residual=c_res,
        ))
    return ControlSolution(
        control_set=control_set, residuals=tuple(residuals),
        rank=rank, nullspace_dim=n - rank,
        constraint_matrix=matrix, rhs=rhs,
    )


# Named family tables (curvatures per volt, 1/m^2).  The tuning family
# raises the middle mode and lowers the axial one by the same design scale;
# the rotation families couple a mode pair through an off-diagonal entry
# with diagonal compensation that keeps the spectator mode steady.
_DESIGN_TUNE = 0.937e7
_ROT_XY = 1e7 * np.array([
    [-1.60, 1.75, 0.00],
    [1.75, 0.84, 0.00],
    [0.00, 0.00, 0.76],
])
_ROT_XZ = 1e7 * np.array([
    [-1.60, 0.00, 1.75],
    [0.00, 0.00, 0.00],
    [1.75, 0.00, 1.60],
])

FAMILY_KINDS = ("eps_x", "eps_y", "eps_z", "kappa_tune", "kappa_rot",
                "kappa_rot2")


def family_target(kind: str, sites) -> list[ConstraintTarget]:
    """Constraint table for one named control family on three sites.

    sites lists the three site positions, target site first.  The eps
    families request a unit gradient (1 V/m per volt) along one axis at the
    target site and zero everything else; the kappa families request a
    fixed curvature there (frequency tuning, xy rotation, xz rotation) with
    zero gradients everywhere and zero curvature at the other sites.
    """
    sites = [np.asarray(s, dtype=float).reshape(3) for s in sites]
    if len(sites) != 3:
        raise ValueError(f"expected 3 sites, got {len(sites)}")
    if kind not in FAMILY_KINDS:
        raise ValueError(f"unknown family kind {kind!r}; expected one of "
                         + ", ".join(FAMILY_KINDS))
    zero_g = np.zeros(3)
    zero_c = np.zeros((3, 3))
    if kind.startswith("eps_"):
        axis = "xyz".index(kind[-1])
        g0 = np.zeros(3)
        g0[axis] = 1.0
        head = ConstraintTarget(sites[0], g0, zero_c)
    elif kind == "kappa_tune":
        c0 = traceless_curvature(0.0, _DESIGN_TUNE)
        head = ConstraintTarget(sites[0], zero_g, c0)
    elif kind == "kappa_rot":
        head = ConstraintTarget(sites[0], zero_g, _ROT_XY)
    else:
        head = ConstraintTarget(sites[0], zero_g, _ROT_XZ)
    rest = [ConstraintTarget(s, zero_g, zero_c) for s in sites[1:]]
    return [head] + rest


def predict_detuning(omega_2: float, curvature_per_volt: float,
                     u_tune: float, species: IonSpecies) -> float:
    """Frequency shift of a mode under an added aligned control curvature.

    omega_2 is the unperturbed angular frequency (rad/s), curvature_per_volt
    the control curvature along the mode axis (1/m^2 per volt).  Returns
    sqrt(omega_2^2 + u_tune * (Q/m) * c) - omega_2.
    """
    radicand = omega_2**2 + u_tune * species.charge_to_mass * curvature_per_volt
    if radicand < 0.0:
        raise ModeInstabilityError(
            f"curvature {curvature_per_volt:.3e}/V at {u_tune:.3g} V drives "
            f"the squared mode frequency to {radicand:.3e}; mode unstable"
        )
    return float(np.sqrt(radicand) - omega_2)


@dataclass(frozen=True)
class RotationPrediction:
    """In-plane principal-axis angle plus the full final mode structure."""

    angle_deg: float
    modes: ModeStructure


def predict_rotation(phi_ini_curvature, kappa_rot_curvature, u_rot: float,
                     species: IonSpecies) -> RotationPrediction:
    """Principal-axis rotation produced by an xy-coupling control curvature.

    The final curvature is phi_ini + u_rot * kappa, with phi_ini in V/m^2
    and kappa the control curvature per volt, so their combination is again
    V/m^2.  The angle is measured counterclockwise from the y axis to the
    eigenvector
    of the smaller in-plane eigenvalue of the xy block, folded into
    (-90, +90] degrees.  Degenerate in-plane eigenvalues raise
    DegenerateRotationError; an unstable final curvature raises
    ModeInstabilityError through the mode analysis.
    """
    phi_ini = np.asarray(phi_ini_curvature, dtype=float).reshape(3, 3)
    kappa = np.asarray(kappa_rot_curvature, dtype=float).reshape(3, 3)
    phi_fin = phi_ini + u_rot * kappa
    modes = mode_analysis(phi_fin, species)
    block = phi_fin[:2, :2]
    evals, evecs = np.linalg.eigh(block)
    scale = max(np.abs(evals).max(), 1e-300)
    if abs(evals[1] - evals[0]) <= 1e-9 * scale:
        raise DegenerateRotationError(
            f"in-plane eigenvalues {evals} coincide; angle undefined"
        )
    u2 = evecs[:, 0]  # smaller in-plane eigenvalue
    angle = np.degrees(np.arctan2(-u2[0], u2[1]))
    if angle <= -90.0:
        angle += 180.0
    elif angle > 90.0:
        angle -= 180.0
    return RotationPrediction(angle_deg=float(angle), modes=modes)


@dataclass(frozen=True)
class CrosstalkEntry:
    """Control-set field at one site, optionally relative to a reference."""

    site: np.ndarray
    gradient: np.ndarray
    curvature: np.ndarray
    gradient_ratio: float | None = None
    curvature_ratio: float | None = None


def residual_crosstalk(layout: ElectrodeLayout, control_set: ControlSet,
                       other_sites, reference_site=None) -> list[CrosstalkEntry]:
    """Gradient and curvature the control set leaks onto each listed site.

    With reference_site given, each entry also reports Frobenius-norm
    ratios relative to the field at the reference (the intended target
    site), which is the natural crosstalk figure of merit.
    """
    ev = FieldEvaluator(layout)
    voltages = control_set.voltages
    ref_g = ref_c = None
    if reference_site is not None:
        ref = ev.superpose(voltages, 1.0, reference_site, order=2,
                           normalized=False)
        ref_g = np.linalg.norm(ref.gradient)
        ref_c = np.linalg.norm(ref.hessian)
    entries = []
    for site in other_sites:
        site = np.asarray(site, dtype=float).reshape(3)
        s: FieldSample = ev.superpose(voltages, 1.0, site, order=2,
                                      normalized=False)
        g_ratio = c_ratio = None
        if ref_g is not None:
            g_ratio = float(np.linalg.norm(s.gradient) / ref_g) if ref_g else None
            c_ratio = float(np.linalg.norm(s.hessian) / ref_c) if ref_c else None
        entries.append(CrosstalkEntry(
            site=site, gradient=s.gradient, curvature=s.hessian,
            gradient_ratio=g_ratio, curvature_ratio=c_ratio,
        ))
    return entries
