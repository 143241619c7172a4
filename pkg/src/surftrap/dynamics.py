"""Calibration-experiment simulators and fitters.

Covers the measurements used to characterize a trap site: carrier and
sideband Rabi flopping on thermal states, sideband-ratio thermometry,
heating, motional excitation (tickle) spectroscopy, stray-field
micromotion, inter-ion Coulomb exchange, threshold photon detection,
and voltage-ramp adiabaticity.

Spin-motion dynamics use the resolved-sideband rotating-wave
approximation: each joint Fock state flops coherently at its own Rabi
frequency built from generalized-Laguerre matrix elements, and thermal
motion enters as a classical mixture over Fock states.  This is accurate
when mode splittings are large compared to Rabi rates, the regime of
MHz-scale traps driven at kHz rates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.constants as const
import scipy.optimize
import scipy.special
import scipy.stats

from .trap import IonSpecies, ModeInstabilityError, ModeStructure, RFDrive

__all__ = [
    "RamanGeometry",
    "ThermalMode",
    "SpinMotionState",
    "DetectionModel",
    "DetectionResult",
    "Transition",
    "TransitionKind",
    "CARRIER",
    "bsb",
    "rsb",
    "LambDickeCoupling",
    "lamb_dicke",
    "flop_signal",
    "FlopDataset",
    "FlopGuess",
    "FlopFit",
    "fit_flopping",
    "sideband_thermometry",
    "heating_evolution",
    "TickleResponse",
    "tickle_response",
    "exchange_rate",
    "MicromotionReport",
    "micromotion_analysis",
    "simulate_detection",
    "RampReport",
    "ramp_check",
    "FrequencyDrift",
]

_TAIL_TOL = 1e-6
_MIN_CUTOFF = 20
_DETECTION_FLOOR = 100e-9  # m, smallest resolvable motional amplitude
_ADIABATIC_LIMIT = 0.01


@dataclass(frozen=True)
class RamanGeometry:
    """Effective two-photon wave vector of a stimulated Raman beam pair."""

    delta_k: np.ndarray
    wavelength: float = 280e-9

    def __post_init__(self):
        dk = np.asarray(self.delta_k, dtype=float).reshape(3)
        if not np.isfinite(dk).all() or np.linalg.norm(dk) == 0.0:
            raise ValueError("delta_k must be a finite nonzero 3-vector")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        dk.flags.writeable = False
        object.__setattr__(self, "delta_k", dk)

    @classmethod
    def crossed_beams(cls, direction, wavelength: float = 280e-9,
                      crossing_angle: float = np.pi / 2) -> "RamanGeometry":
        """Two beams of one wavelength crossing at `crossing_angle`, with
        the difference wave vector along `direction`."""
        d = np.asarray(direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("direction must be nonzero")
        mag = 2.0 * np.sin(crossing_angle / 2.0) * 2.0 * np.pi / wavelength
        return cls(delta_k=mag * d / n, wavelength=wavelength)


def _thermal_cutoff(nbar: float) -> int:
    """Smallest Fock cutoff keeping the truncated thermal tail below 1e-6."""
    if nbar <= 0.0:
        return _MIN_CUTOFF
    ratio = nbar / (1.0 + nbar)
    needed = int(np.ceil(np.log(_TAIL_TOL) / np.log(ratio)))
    return max(_MIN_CUTOFF, needed)


@dataclass(frozen=True)
class ThermalMode:
    """One motional mode with its Fock-state occupation.

    populations cover n = 0..fock_cutoff and sum to 1; tail_mass records
    the probability that lay beyond the cutoff before renormalization, so
    downstream simulators can reject a cutoff chosen too small.
    """

    omega: float
    vector: np.ndarray
    nbar: float
    populations: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("mode frequency must be positive")
        v = np.asarray(self.vector, dtype=float).reshape(3)
        p = np.asarray(self.populations, dtype=float)
        if p.ndim != 1 or p.size == 0 or (p < 0).any():
            raise ValueError("populations must be a nonnegative 1-D array")
        total = p.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"populations sum to {total!r}, expected 1")
        p = p / total
        v.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "populations", p)

    @property
    def fock_cutoff(self) -> int:
        return len(self.populations) - 1

    @classmethod
    def thermal(cls, omega: float, nbar: float, vector=(1.0, 0.0, 0.0),
                fock_cutoff: int | None = None) -> "ThermalMode":
        """Thermal occupation p_n proportional to (nbar/(1+nbar))^n.

        The cutoff defaults to the smallest value with truncated tail
        below 1e-6 (at least 20); passing one explicitly records the
        actual tail so consumers can veto it.
        """
        if nbar < 0:
            raise ValueError("nbar must be nonnegative")
        n_top = _thermal_cutoff(nbar) if fock_cutoff is None else int(fock_cutoff)
        if n_top < 0:
            raise ValueError("fock_cutoff must be nonnegative")
        n = np.arange(n_top + 1)
        if nbar == 0.0:
            p = np.zeros(n_top + 1)
            p[0] = 1.0
            tail = 0.0
        else:
            ratio = nbar / (1.0 + nbar)
            p = ratio**n / (1.0 + nbar)
            tail = float(ratio ** (n_top + 1))
            p = p / p.sum()
        return cls(omega=omega, vector=vector, nbar=nbar, populations=p,
                   tail_mass=tail)

    @classmethod
    def from_populations(cls, omega: float, populations,
                         vector=(1.0, 0.0, 0.0)) -> "ThermalMode":
        """Explicit Fock distribution; nbar becomes its mean."""
        p = np.asarray(populations, dtype=float)
        nbar = float(np.arange(p.size) @ p / p.sum())
        return cls(omega=omega, vector=vector, nbar=nbar, populations=p,
                   tail_mass=0.0)


@dataclass(frozen=True)
class SpinMotionState:
    """Spin mixture with independent motional distributions.

    spin is (P_down, P_up) of the initial state; flopping exchanges the
    two populations at the Fock-state-dependent Rabi frequency.
    """

    spin: tuple
    modes: tuple

    def __post_init__(self):
        spin = tuple(float(s) for s in self.spin)
        if len(spin) != 2 or min(spin) < 0 or max(spin) > 1:
            raise ValueError("spin must be two populations in [0, 1]")
        if abs(sum(spin) - 1.0) > 1e-9:
            raise ValueError(f"spin populations sum to {sum(spin)!r}")
        modes = tuple(self.modes)
        for m in modes:
            if not isinstance(m, ThermalMode):
                raise TypeError("modes must be ThermalMode instances")
        object.__setattr__(self, "spin", spin)
        object.__setattr__(self, "modes", modes)

    @classmethod
    def prepared_up(cls, modes) -> "SpinMotionState":
        return cls(spin=(0.0, 1.0), modes=tuple(modes))

    @classmethod
    def prepared_down(cls, modes) -> "SpinMotionState":
        return cls(spin=(1.0, 0.0), modes=tuple(modes))


def _best_threshold(bright: float, dark: float) -> int:
    ts = np.arange(1, int(np.ceil(3.0 * bright)) + 2)
    score = (scipy.stats.poisson.sf(ts - 1, bright)
             + scipy.stats.poisson.cdf(ts - 1, dark))
    return int(ts[np.argmax(score)])


@dataclass(frozen=True)
class DetectionModel:
    """Threshold discrimination of the two qubit states by photon count.

    bright_mean is the mean count collected over `duration` from the
    fluorescing (down) state.  threshold defaults to the integer
    maximizing the average Poisson discrimination fidelity.
    """

    bright_mean: float = 12.0
    dark_mean: float = 0.8
    duration: float = 150e-6
    threshold: int | None = None

    def __post_init__(self):
        if not self.bright_mean > self.dark_mean >= 0:
            raise ValueError("need bright_mean > dark_mean >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.threshold is None:
            object.__setattr__(
                self, "threshold",
                _best_threshold(self.bright_mean, self.dark_mean))
        elif int(self.threshold) < 1:
            raise ValueError("threshold must be at least 1 count")
        else:
            object.__setattr__(self, "threshold", int(self.threshold))

    def fidelity(self) -> tuple:
        """(P(classified down | down), P(classified up | up)) from the
        Poisson tails at the threshold."""
        down_ok = float(scipy.stats.poisson.sf(self.threshold - 1,
                                               self.bright_mean))
        up_ok = float(scipy.stats.poisson.cdf(self.threshold - 1,
                                              self.dark_mean))
        return down_ok, up_ok


class TransitionKind(enum.Enum):
    CARRIER = "carrier"
    BSB = "bsb"
    RSB = "rsb"


@dataclass(frozen=True)
class Transition:
    """Addressed transition: the carrier, or a first sideband of one mode."""

    kind: TransitionKind
    mode: int | None = None


CARRIER = Transition(kind=TransitionKind.CARRIER)


def bsb(mode: int = 0) -> Transition:
    """Blue sideband of the given mode (adds one quantum)."""
    return Transition(kind=TransitionKind.BSB, mode=mode)


def rsb(mode: int = 0) -> Transition:
    """Red sideband of the given mode (removes one quantum)."""
    return Transition(kind=TransitionKind.RSB, mode=mode)


@dataclass(frozen=True)
class LambDickeCoupling:
    eta: float
    angle_deg: float


def lamb_dicke(geometry: RamanGeometry, mode: ThermalMode,
               species: IonSpecies) -> LambDickeCoupling:
    """Coupling of the Raman pair to one motional mode.

    eta = |delta_k| sqrt(hbar / (2 m omega)) cos(angle), with the angle
    between delta_k and the mode vector folded into [0, 90] degrees so
    eta is never negative.
    """
    u = np.asarray(mode.vector, dtype=float)
    norm_u = np.linalg.norm(u)
    if norm_u == 0.0:
        raise ValueError("mode vector must be nonzero")
    dk = geometry.delta_k
    cos_phi = float(np.clip(abs(dk @ u) / (np.linalg.norm(dk) * norm_u),
                            0.0, 1.0))
    ground_extent = np.sqrt(const.hbar / (2.0 * species.mass * mode.omega))
    return LambDickeCoupling(
        eta=float(np.linalg.norm(dk) * ground_extent * cos_phi),
        angle_deg=float(np.degrees(np.arccos(cos_phi))),
    )


def _carrier_elements(n_top: int, eta: float) -> np.ndarray:
    """|<n| exp(i eta (a + a^dag)) |n>| factors for n = 0..n_top."""
    n = np.arange(n_top + 1)
    return np.exp(-0.5 * eta * eta) * scipy.special.eval_genlaguerre(
        n, 0, eta * eta)


def _sideband_elements(n_top: int, eta: float) -> np.ndarray:
    """<n+1| exp(i eta (a + a^dag)) |n> magnitudes for n = 0..n_top."""
    n = np.arange(n_top + 1)
    return (np.exp(-0.5 * eta * eta) * eta
            * scipy.special.eval_genlaguerre(n, 1, eta * eta)
            / np.sqrt(n + 1.0))


def flop_signal(state: SpinMotionState, transition: Transition,
                rabi_0: float, etas, t):
    """Spin-down probability versus pulse length for one transition.

    Each joint Fock state contributes sin^2(Omega_n t / 2) at its own
    Rabi frequency: the addressed mode supplies the sideband or carrier
    matrix element, every other mode a Debye-Waller reduction factor.
    With the default preparation in the up state this is
    P_down(t) = sum_n p_n sin^2(Omega_n t / 2).
    """
    if not isinstance(transition, Transition):
        raise TypeError(f"unknown transition: {transition!r}")
    modes = state.modes
    etas_arr = np.asarray(etas, dtype=float).reshape(len(modes))
    if rabi_0 < 0:
        raise ValueError("rabi_0 must be nonnegative")
    addressed = None
    if transition.kind is not TransitionKind.CARRIER:
        addressed = transition.mode
        if addressed is None or not 0 <= addressed < len(modes):
            raise ValueError(
                f"transition addresses mode {transition.mode!r} but the "
                f"state has {len(modes)} modes")
    for mode in modes:
        if mode.tail_mass >= _TAIL_TOL:
            raise ValueError(
                f"Fock cutoff {mode.fock_cutoff} leaves tail mass "
                f"{mode.tail_mass:.2e}; raise the cutoff")
    probs = np.array([1.0])
    elems = np.array([1.0])
    for j, (mode, eta) in enumerate(zip(modes, etas_arr)):
        n_top = mode.fock_cutoff
        if j == addressed and transition.kind is TransitionKind.BSB:
            e = _sideband_elements(n_top, eta)
        elif j == addressed and transition.kind is TransitionKind.RSB:
            # state n couples downward to n-1; n = 0 is dark
            lower = (_sideband_elements(n_top - 1, eta) if n_top > 0
                     else np.zeros(0))
            e = np.concatenate([[0.0], lower])
        else:
            e = _carrier_elements(n_top, eta)
        probs = np.outer(probs, mode.populations).ravel()
        elems = np.outer(elems, e).ravel()
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    omega = rabi_0 * np.abs(elems)
    flip = np.zeros(t_arr.shape)
    for lo in range(0, omega.size, 4096):
        om = omega[lo:lo + 4096, None]
        pb = probs[lo:lo + 4096, None]
        flip += (pb * np.square(np.sin(0.5 * om * t_arr[None, :]))).sum(axis=0)
    p_down, p_up = state.spin
    out = p_down + (p_up - p_down) * flip
    if np.ndim(t) == 0:
        return float(out[0])
    return out


@dataclass(frozen=True)
class FlopDataset:
    """Measured spin-down probability versus pulse length, one transition.

    shots sets binomial weights for fitting; 0 means unit weights.
    """

    transition: Transition
    times: np.ndarray
    p_down: np.ndarray
    shots: int = 0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.p_down, dtype=float)
        if t.ndim != 1 or t.shape != p.shape or t.size == 0:
            raise ValueError("times and p_down must be matching 1-D arrays")
        if self.shots < 0:
            raise ValueError("shots must be nonnegative")
        t.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "p_down", p)


@dataclass(frozen=True)
class FlopGuess:
    """Starting point for the flopping fit."""

    rabi_0: float
    angles_deg: tuple
    nbars: tuple


@dataclass(frozen=True)
class FlopFit:
    """Point estimates with asymptotic standard errors."""

    rabi_0: float
    rabi_0_err: float
    angles_deg: np.ndarray
    angles_deg_err: np.ndarray
    nbars: np.ndarray
    nbars_err: np.ndarray
    cost: float


def fit_flopping(datasets, geometry: RamanGeometry, species: IonSpecies,
                 mode_omegas, initial: FlopGuess,
                 spin=(0.0, 1.0)) -> FlopFit:
    """Weighted least squares of the flopping model over several transitions.

    mode_omegas fixes the mode frequencies; free parameters are the bare
    Rabi frequency, one beam-to-mode angle per mode, and one mean
    occupation per mode.  Binomial weights follow from each dataset's
    shot count.  Standard errors are asymptotic (inverse Gauss-Newton
    curvature at the optimum); the result is deterministic for fixed
    data and starting point.
    """
    datasets = tuple(datasets)
    if len(datasets) < 2:
        raise ValueError("need data for at least two transitions")
    omegas = np.asarray(mode_omegas, dtype=float)
    n_modes = omegas.size
    if len(initial.angles_deg) != n_modes or len(initial.nbars) != n_modes:
        raise ValueError("initial guess must cover every mode")
    if max(float(np.ptp(d.p_down)) for d in datasets) < 5e-3:
        raise ValueError("flat signal: nothing to fit")
    # freeze cutoffs so the model is smooth in nbar; bound nbar to match
    nbar_hi = 4.0 * np.asarray(initial.nbars, dtype=float) + 1.0
    cutoffs = [_thermal_cutoff(h) for h in nbar_hi]
    dk_mag = np.linalg.norm(geometry.delta_k)
    ground_extent = np.sqrt(const.hbar / (2.0 * species.mass * omegas))
    sigmas = []
    for d in datasets:
        if d.shots > 0:
            p = np.clip(d.p_down, 1.0 / (d.shots + 2),
                        1.0 - 1.0 / (d.shots + 2))
            sigmas.append(np.sqrt(p * (1.0 - p) / d.shots))
        else:
            sigmas.append(np.ones_like(d.p_down))

    def residuals(x):
        rabi = x[0]
        angles = x[1:1 + n_modes]
        nbars = x[1 + n_modes:]
        etas = dk_mag * ground_extent * np.cos(np.radians(angles))
        state = SpinMotionState(spin=spin, modes=tuple(
            ThermalMode.thermal(om, nb, fock_cutoff=c)
            for om, nb, c in zip(omegas, nbars, cutoffs)))
        parts = []
        for d, s in zip(datasets, sigmas):
            model = flop_signal(state, d.transition, rabi, etas, d.times)
            parts.append((model - d.p_down) / s)
        return np.concatenate(parts)

    x0 = np.concatenate([[initial.rabi_0], initial.angles_deg, initial.nbars])
    lower = np.zeros(1 + 2 * n_modes)
    upper = np.concatenate([[np.inf], np.full(n_modes, 90.0), nbar_hi])
    res = scipy.optimize.least_squares(
        residuals, x0, bounds=(lower, upper), method="trf",
        xtol=1e-12, ftol=1e-12, gtol=1e-12)
    if not res.success:
        raise RuntimeError(f"flopping fit did not converge: {res.message}")
    cov = np.linalg.pinv(res.jac.T @ res.jac)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FlopFit(
        rabi_0=float(res.x[0]), rabi_0_err=float(err[0]),
        angles_deg=res.x[1:1 + n_modes].copy(),
        angles_deg_err=err[1:1 + n_modes].copy(),
        nbars=res.x[1 + n_modes:].copy(),
        nbars_err=err[1 + n_modes:].copy(),
        cost=float(res.cost),
    )


def sideband_thermometry(r: float) -> float:
    """Mean occupation from the red-to-blue first-sideband ratio."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"sideband ratio {r!r} outside [0, 1)")
    return r / (1.0 - r)


def heating_evolution(nbar0: float, rate: float, t):
    """Mean occupation after heating at a constant rate (quanta/s)."""
    if nbar0 < 0:
        raise ValueError("nbar0 must be nonnegative")
    if rate < 0:
        raise ValueError("heating rate must be nonnegative")
    return nbar0 + rate * np.asarray(t, dtype=float)[()]


@dataclass(frozen=True)
class TickleResponse:
    amplitude: float
    detectable: bool
    threshold: float


def tickle_response(field_amp: float, omega_exc: float, t_exc: float,
                    mode: ThermalMode, species: IonSpecies,
                    threshold: float = _DETECTION_FLOOR) -> TickleResponse:
    """Motional amplitude left by an oscillating-field excitation pulse.

    Exact driven-oscillator solution from rest; the reported amplitude
    is that of the free oscillation after the pulse ends.  It reduces to
    Q E t / (2 m omega) on resonance and to the steady driven amplitude
    (Q E / m) / |omega^2 - omega_exc^2| far off resonance.
    """
    if t_exc <= 0:
        raise ValueError("pulse duration must be positive")
    w = mode.omega
    accel = species.charge * field_amp / species.mass
    s_plus = 0.5 * (w + float(omega_exc))
    s_minus = 0.5 * (w - float(omega_exc))
    t = float(t_exc)
    # sin(s t)/s via sinc, finite through resonance
    ratio_p = t * np.sinc(s_plus * t / np.pi)
    ratio_m = t * np.sinc(s_minus * t / np.pi)
    x_end = 0.5 * accel * ratio_p * ratio_m
    v_end = 0.5 * accel * (np.cos(s_plus * t) * ratio_m
                           + ratio_p * np.cos(s_minus * t))
    amp = float(np.hypot(x_end, v_end / w))
    return TickleResponse(amplitude=amp, detectable=amp > threshold,
                          threshold=threshold)


def exchange_rate(d: float, omega: float, species: IonSpecies) -> float:
    """Resonant motional-swap rate of two equal ions a distance d apart."""
    if d <= 0 or omega <= 0:
        raise ValueError("need positive separation and mode frequency")
    return species.charge**2 / (
        4.0 * np.pi * const.epsilon_0 * species.mass * omega * d**3)


@dataclass(frozen=True)
class MicromotionReport:
    """Stray-field displacement and the RF motion it causes.

    displacement and micromotion_amplitude are world-axis 3-vectors,
    modulation_index the phase excursion seen by the Raman pair,
    z_sensitivity the height change per fractional RF-amplitude change.
    """

    displacement: np.ndarray
    micromotion_amplitude: np.ndarray
    modulation_index: float
    z_sensitivity: float
    mathieu_q: np.ndarray


def micromotion_analysis(stray_field, modes: ModeStructure, drive: RFDrive,
                         geometry: RamanGeometry,
                         species: IonSpecies) -> MicromotionReport:
    """Ion displacement and residual micromotion from a stray field.

    The field pushes the ion off the RF null by (Q/m) K^-1 E with K the
    omega^2 curvature tensor of the site; off the null, the RF drive
    imposes micromotion of amplitude (q_j / 2) times the displacement
    along each mode, with Mathieu q_j = 2 sqrt(2) omega_j / Omega_RF.
    The pseudopotential stiffness scales as the square of the RF
    amplitude, so the height shift per fractional amplitude change is
    minus twice the stray-field height displacement.
    """
    e_field = np.asarray(stray_field, dtype=float).reshape(3)
    freqs = modes.frequencies
    if freqs.min() <= 0.0:
        raise ValueError("mode curvature tensor is singular")
    axes = modes.vectors  # rows are unit mode vectors
    along_modes = species.charge_to_mass * (axes @ e_field) / freqs**2
    displacement = axes.T @ along_modes
    q = 2.0 * np.sqrt(2.0) * freqs / drive.omega_rf
    mm_modes = 0.5 * q * along_modes
    mm_amplitude = axes.T @ mm_modes
    beta = float(abs(geometry.delta_k @ mm_amplitude))
    return MicromotionReport(
        displacement=displacement,
        micromotion_amplitude=mm_amplitude,
        modulation_index=beta,
        z_sensitivity=float(-2.0 * displacement[2]),
        mathieu_q=q,
    )


@dataclass(frozen=True)
class DetectionResult:
    """histogram[k] counts the shots that observed k photons."""

    histogram: np.ndarray
    inferred_p_down: float
    shots: int
    threshold: int


def simulate_detection(state, model: DetectionModel, shots: int,
                       seed) -> DetectionResult:
    """Monte-Carlo threshold detection; deterministic for a fixed seed.

    state may be a SpinMotionState or a bare spin-down probability.
    Counts at or above the threshold classify as down (bright).
    """
    p_down = state.spin[0] if isinstance(state, SpinMotionState) else float(state)
    if not 0.0 <= p_down <= 1.0:
        raise ValueError("spin-down probability must lie in [0, 1]")
    if shots < 1:
        raise ValueError("shots must be at least 1")
    rng = np.random.default_rng(seed)
    is_down = rng.random(shots) < p_down
    counts = rng.poisson(np.where(is_down, model.bright_mean, model.dark_mean))
    histogram = np.bincount(counts)
    inferred = float(np.mean(counts >= model.threshold))
    return DetectionResult(histogram=histogram, inferred_p_down=inferred,
                           shots=int(shots), threshold=model.threshold)


@dataclass(frozen=True)
class RampReport:
    times: np.ndarray
    omega: np.ndarray
    epsilon: np.ndarray
    max_epsilon: float
    non_adiabatic: bool


def ramp_check(times, voltages, curvature_per_volt: float, omega0: float,
               species: IonSpecies) -> RampReport:
    """Mode frequency along a voltage ramp and its adiabaticity margin.

    omega(t)^2 = omega0^2 + (Q/m) U(t) c; epsilon(t) = |d omega/dt| /
    omega^2 by finite differences on the sample grid.  max epsilon at or
    above 0.01 flags the ramp as fast enough to excite the mode.
    """
    t = np.asarray(times, dtype=float)
    u = np.asarray(voltages, dtype=float)
    if t.ndim != 1 or t.shape != u.shape or t.size < 2:
        raise ValueError("need matching 1-D time and voltage arrays")
    if (np.diff(t) <= 0).any():
        raise ValueError("times must be strictly increasing")
    w_sq = omega0**2 + species.charge_to_mass * curvature_per_volt * u
    if w_sq.min() <= 0.0:
        bad = t[np.argmin(w_sq)]
        raise ModeInstabilityError(
            f"mode frequency squared is {w_sq.min():.3e} at t = {bad:.3e} s")
    w = np.sqrt(w_sq)
    eps = np.abs(np.gradient(w, t)) / w**2
    max_eps = float(eps.max())
    return RampReport(times=t, omega=w, epsilon=eps, max_epsilon=max_eps,
                      non_adiabatic=max_eps >= _ADIABATIC_LIMIT)


@dataclass(frozen=True)
class FrequencyDrift:
    """Linear secular-frequency drift; total shift = slope x elapsed."""

    slope_hz_per_s: float

    def shift_hz(self, elapsed: float) -> float:
        return self.slope_hz_per_s * elapsed

    def apply(self, omega0: float, elapsed: float) -> float:
        """Angular mode frequency after `elapsed` seconds of drift."""
        return omega0 + 2.0 * np.pi * self.slope_hz_per_s * elapsed
