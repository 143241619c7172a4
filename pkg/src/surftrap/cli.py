"""Command line interface for the surftrap toolkit.

Every subcommand reads its parameters from a JSON run configuration
(--config), writes CSV files with fixed headers into the output directory
(--out), and prints the paths it wrote.  Keys carry explicit SI units as
suffixes (_m, _v, _hz, _s, _m2, _rad, _v_per_m, _rad_per_s).  Outputs are
deterministic: the same configuration, layout and seed produce
byte-identical files.

Exit status: 0 on success, 1 when a computation fails (singular
constraints, unstable modes, infeasible optimization), 2 when the
configuration or layout cannot be parsed.

Commands and their outputs:

  sites         sites.csv: index,kind,x_m,y_m,z_m,potential_v
  modes         modes.csv: site,x_m,y_m,z_m,mode,frequency_hz,
                axis_x,axis_y,axis_z
  solve-control voltages.csv: electrode,voltage_v
                solve_report.csv: metric,value
  sweep         sweep.csv, detuning mode: u_tune_v,detuning_hz
                rotation mode: u_rot_v,angle_deg,frequency_1_hz,
                frequency_2_hz,frequency_3_hz
  rfopt         pattern.csv: row,col,value
                rfopt_report.csv: metric,value
                rf_layout.json: extracted electrode layout
  simulate flop        flop.csv: time_s,p_down
  simulate thermometry thermometry.csv: sideband_ratio,nbar
  simulate heating     heating.csv: time_s,nbar
  simulate tickle      tickle.csv: frequency_hz,amplitude_m,detectable
  simulate exchange    exchange.csv: separation_m,rate_rad_per_s
  simulate micromotion micromotion.csv: one row, see module body
  simulate detection   detection_histogram.csv: photon_count,occurrences
                       detection_summary.csv: metric,value
  simulate ramp        ramp.csv: time_s,voltage_v,frequency_hz,epsilon
                       ramp_summary.csv: metric,value
  fit-flop      fit_flop.csv: parameter,value,std_error
  waveform      waveform.wfm (binary), waveform.csv: time_s,<channels>
  field-sample  field.csv: x_m,y_m,z_m,potential_v,gradient_x_v_per_m,
                gradient_y_v_per_m,gradient_z_v_per_m
"""

from __future__ import annotations

import argparse
import json
import numbers
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import (
    FREE,
    ConstraintTarget,
    family_target,
    predict_detuning,
    predict_rotation,
    solve_control,
    traceless_curvature,
)
from .dynamics import (
    CARRIER,
    DetectionModel,
    FlopDataset,
    FlopGuess,
    RamanGeometry,
    SpinMotionState,
    ThermalMode,
    bsb,
    exchange_rate,
    fit_flopping,
    flop_signal,
    heating_evolution,
    micromotion_analysis,
    ramp_check,
    rsb,
    sideband_thermometry,
    simulate_detection,
    tickle_response,
)
from .layout import ElectrodeLayout, LayoutError, load_layout, save_layout
from .rfshape import PixelGrid, ShapeObjective, extract_polygons, lp_optimize
from .trap import (
    MG25,
    IonSpecies,
    ModeStructure,
    RFDrive,
    SearchRegion,
    SiteKind,
    find_sites,
    mode_analysis,
    total_sample,
)
from .waveform import (
    DEFAULT_UPDATE_RATE,
    RampShape,
    add_tone,
    export,
    export_csv,
    make_ramp,
)

DEFAULT_SEED = 1905

_REQUIRED = object()


class ConfigError(ValueError):
    """Run configuration that cannot be parsed or fails validation."""


# ---------------------------------------------------------------------------
# configuration access

def _get(params: dict, key: str, default):
    if key in params:
        return params[key]
    if default is _REQUIRED:
        raise ConfigError(f"missing required key {key!r}")
    return default


def _number(params: dict, key: str, default=_REQUIRED) -> float:
    value = _get(params, key, default)
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _integer(params: dict, key: str, default=_REQUIRED) -> int:
    value = _get(params, key, default)
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    return int(value)


def _boolean(params: dict, key: str, default=False) -> bool:
    value = _get(params, key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{key} must be true or false, got {value!r}")
    return value


def _string(params: dict, key: str, default=_REQUIRED,
            choices: tuple = ()) -> str:
    value = _get(params, key, default)
    if not isinstance(value, str):
        raise ConfigError(f"{key} must be a string, got {value!r}")
    if choices and value not in choices:
        raise ConfigError(
            f"{key} must be one of {', '.join(choices)}; got {value!r}")
    return value


def _vector(params: dict, key: str, n: int | None = None,
            default=_REQUIRED) -> np.ndarray:
    value = _get(params, key, default)
    if value is default and not isinstance(value, list):
        return np.asarray(value, dtype=float)
    if not isinstance(value, list) or not all(
            isinstance(v, numbers.Real) and not isinstance(v, bool)
            for v in value):
        raise ConfigError(f"{key} must be a list of numbers")
    if n is not None and len(value) != n:
        raise ConfigError(f"{key} must have {n} entries, got {len(value)}")
    return np.asarray(value, dtype=float)


def _matrix3(params: dict, key: str, default=_REQUIRED) -> np.ndarray:
    value = _get(params, key, default)
    if value is default and not isinstance(value, list):
        return np.asarray(value, dtype=float)
    try:
        matrix = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key} must be a 3x3 matrix") from exc
    if matrix.shape != (3, 3):
        raise ConfigError(f"{key} must be a 3x3 matrix, got {matrix.shape}")
    return matrix


def _curvature(entry, key: str) -> np.ndarray:
    """Symmetric traceless 3x3 from its five independent components."""
    if not isinstance(entry, dict):
        raise ConfigError(f"{key} must be an object with xx, yy, xy, xz, yz")
    known = {"xx", "yy", "xy", "xz", "yz"}
    extra = set(entry) - known
    if extra:
        raise ConfigError(f"{key} has unknown components {sorted(extra)}")
    return traceless_curvature(
        _number(entry, "xx"), _number(entry, "yy"),
        _number(entry, "xy", 0.0), _number(entry, "xz", 0.0),
        _number(entry, "yz", 0.0))


@dataclass
class RunConfig:
    """Parsed command context: layout, physics defaults and parameters."""

    params: dict
    species: IonSpecies
    drive: RFDrive
    out_dir: Path
    seed: int
    layout: ElectrodeLayout | None = None
    config_dir: Path = field(default_factory=Path)

    def require_layout(self) -> ElectrodeLayout:
        if self.layout is None:
            raise ConfigError("this command needs --layout")
        return self.layout


def _load_run_config(args) -> RunConfig:
    params: dict = {}
    config_dir = Path.cwd()
    if args.config is not None:
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            params = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(params, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        config_dir = path.parent

    species = MG25
    if "species" in params:
        block = params["species"]
        if not isinstance(block, dict):
            raise ConfigError("species must be an object")
        species = IonSpecies(
            charge=_number(block, "charge_c", MG25.charge),
            mass=_number(block, "mass_kg", MG25.mass),
            label=_string(block, "label", "custom"))

    drive = RFDrive()
    if "drive" in params:
        block = params["drive"]
        if not isinstance(block, dict):
            raise ConfigError("drive must be an object")
        default = RFDrive()
        drive = RFDrive(
            omega_rf=2.0 * np.pi * _number(
                block, "frequency_hz", default.omega_rf / (2.0 * np.pi)),
            u_rf=_number(block, "amplitude_v", default.u_rf))

    layout = None
    if args.layout is not None:
        try:
            layout = load_layout(args.layout)
        except (OSError, LayoutError, ValueError) as exc:
            raise ConfigError(
                f"cannot load layout {args.layout}: {exc}") from exc

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return RunConfig(params=params, species=species, drive=drive,
                     out_dir=out_dir, seed=args.seed, layout=layout,
                     config_dir=config_dir)


# ---------------------------------------------------------------------------
# deterministic CSV output

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    return f"{float(value):.17g}"


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


# ---------------------------------------------------------------------------
# shared parameter parsing

def _parse_region(params: dict) -> SearchRegion:
    block = _get(params, "region_m", _REQUIRED)
    if not isinstance(block, dict):
        raise ConfigError("region_m must be an object with lo and hi")
    return SearchRegion(lo=_vector(block, "lo", 3), hi=_vector(block, "hi", 3))


def _parse_voltages(cfg: RunConfig) -> np.ndarray | None:
    if "voltages_v" not in cfg.params:
        return None
    layout = cfg.require_layout()
    voltages = _vector(cfg.params, "voltages_v", layout.control_count)
    return voltages


def _parse_transition(block: dict):
    name = _string(block, "transition", choices=("carrier", "bsb", "rsb"))
    index = _integer(block, "mode_index", 0)
    if name == "carrier":
        return CARRIER
    return bsb(index) if name == "bsb" else rsb(index)


def _parse_geometry(params: dict) -> RamanGeometry:
    block = _get(params, "geometry", {})
    if not isinstance(block, dict):
        raise ConfigError("geometry must be an object")
    return RamanGeometry.crossed_beams(
        direction=_vector(block, "direction", 3, default=[1.0, 0.0, 0.0]),
        wavelength=_number(block, "wavelength_m", 280e-9),
        crossing_angle=_number(block, "crossing_angle_rad", np.pi / 2.0))


def _parse_shape(params: dict) -> RampShape:
    name = _string(params, "shape", "linear",
                   choices=("linear", "smoothstep", "sine"))
    return RampShape[name.upper()]


def _census(cfg: RunConfig):
    layout = cfg.require_layout()
    region = _parse_region(cfg.params)
    voltages = _parse_voltages(cfg)
    kwargs = {}
    if "starts_per_axis" in cfg.params:
        starts = _vector(cfg.params, "starts_per_axis", 3)
        kwargs["starts_per_axis"] = tuple(int(s) for s in starts)
    return find_sites(layout, cfg.drive, cfg.species, region,
                      voltages=voltages, **kwargs), voltages


# ---------------------------------------------------------------------------
# command handlers

def _cmd_sites(args, cfg: RunConfig) -> list[Path]:
    sites, voltages = _census(cfg)
    include_saddles = _boolean(cfg.params, "include_saddles", False)
    rows = []
    for site in sites:
        if site.kind is not SiteKind.MINIMUM and not include_saddles:
            continue
        sample = total_sample(cfg.layout, cfg.drive, cfg.species,
                              site.position, order=0, voltages=voltages)
        rows.append((len(rows), site.kind.name.lower(), *site.position,
                     sample.value))
    return [_write_csv(cfg.out_dir / "sites.csv",
                       ["index", "kind", "x_m", "y_m", "z_m", "potential_v"],
                       rows)]


def _cmd_modes(args, cfg: RunConfig) -> list[Path]:
    sites, _ = _census(cfg)
    rows = []
    index = 0
    for site in sites:
        if site.kind is not SiteKind.MINIMUM:
            continue
        modes = mode_analysis(site.curvature, cfg.species)
        for j in range(3):
            rows.append((index, *site.position, j,
                         modes.frequencies[j] / (2.0 * np.pi),
                         *modes.vectors[j]))
        index += 1
    return [_write_csv(cfg.out_dir / "modes.csv",
                       ["site", "x_m", "y_m", "z_m", "mode", "frequency_hz",
                        "axis_x", "axis_y", "axis_z"],
                       rows)]


def _parse_targets(params: dict) -> list[ConstraintTarget]:
    if "family" in params:
        block = params["family"]
        if not isinstance(block, dict):
            raise ConfigError("family must be an object")
        kind = _string(block, "kind")
        sites = _get(block, "sites_m", _REQUIRED)
        if not isinstance(sites, list) or len(sites) != 3:
            raise ConfigError("family.sites_m must list three positions")
        try:
            return family_target(kind, sites)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    entries = _get(params, "targets", _REQUIRED)
    if not isinstance(entries, list) or not entries:
        raise ConfigError("targets must be a non-empty list")
    targets = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"targets[{i}] must be an object")
        site = _vector(entry, "site_m", 3)
        gradient = entry.get("gradient_v_per_m", "free")
        gradient = (FREE if gradient == "free"
                    else _vector(entry, "gradient_v_per_m", 3))
        curvature = entry.get("curvature_v_per_m2", "free")
        curvature = (FREE if curvature == "free"
                     else _curvature(curvature, f"targets[{i}].curvature_v_per_m2"))
        try:
            targets.append(ConstraintTarget(site, gradient, curvature))
        except ValueError as exc:
            raise ConfigError(f"targets[{i}]: {exc}") from exc
    return targets


def _cmd_solve_control(args, cfg: RunConfig) -> list[Path]:
    layout = cfg.require_layout()
    targets = _parse_targets(cfg.params)
    solution = solve_control(layout, targets,
                             label=_string(cfg.params, "label", ""),
                             minimax=_boolean(cfg.params, "minimax", False))
    voltages = solution.control_set.voltages
    rows = [(e.id, v) for e, v in zip(layout.control_electrodes, voltages)]
    g_res = [np.linalg.norm(r.gradient_residual)
             for t, r in zip(targets, solution.residuals)
             if t.gradient_target is not FREE]
    c_res = [np.linalg.norm(r.curvature_residual)
             for t, r in zip(targets, solution.residuals)
             if t.curvature_target is not FREE]
    report = [
        ("rank", solution.rank),
        ("nullspace_dim", solution.nullspace_dim),
        ("voltage_norm_v", np.linalg.norm(voltages)),
        ("max_abs_voltage_v", np.max(np.abs(voltages)) if len(voltages) else 0.0),
        ("max_gradient_residual_v_per_m", max(g_res) if g_res else 0.0),
        ("max_curvature_residual_v_per_m2", max(c_res) if c_res else 0.0),
    ]
    return [
        _write_csv(cfg.out_dir / "voltages.csv",
                   ["electrode", "voltage_v"], rows),
        _write_csv(cfg.out_dir / "solve_report.csv",
                   ["metric", "value"], report),
    ]


def _sweep_values(params: dict) -> np.ndarray:
    if "u_values_v" in params:
        return _vector(params, "u_values_v")
    lo = _number(params, "u_min_v")
    hi = _number(params, "u_max_v")
    n = _integer(params, "n_points")
    if n < 2:
        raise ConfigError("n_points must be at least 2")
    return np.linspace(lo, hi, n)


def _cmd_sweep(args, cfg: RunConfig) -> list[Path]:
    mode = _string(cfg.params, "mode", choices=("detuning", "rotation"))
    u_values = _sweep_values(cfg.params)
    if mode == "detuning":
        omega = 2.0 * np.pi * _number(cfg.params, "mode_frequency_hz")
        per_volt = _number(cfg.params, "curvature_per_volt_m2")
        rows = [(u, predict_detuning(omega, per_volt, u, cfg.species)
                 / (2.0 * np.pi)) for u in u_values]
        return [_write_csv(cfg.out_dir / "sweep.csv",
                           ["u_tune_v", "detuning_hz"], rows)]
    phi_ini = _matrix3(cfg.params, "initial_curvature_v_per_m2")
    kappa = _matrix3(cfg.params, "rotation_curvature_per_volt_m2")
    rows = []
    for u in u_values:
        prediction = predict_rotation(phi_ini, kappa, u, cfg.species)
        rows.append((u, prediction.angle_deg,
                     *(prediction.modes.frequencies / (2.0 * np.pi))))
    return [_write_csv(cfg.out_dir / "sweep.csv",
                       ["u_rot_v", "angle_deg", "frequency_1_hz",
                        "frequency_2_hz", "frequency_3_hz"], rows)]


_RING_MATRIX = np.diag([-1.0, -1.0, 2.0]) / np.sqrt(6.0)


def _cmd_rfopt(args, cfg: RunConfig) -> list[Path]:
    block = _get(cfg.params, "grid", _REQUIRED)
    if not isinstance(block, dict):
        raise ConfigError("grid must be an object")
    shape = _vector(block, "shape", 2)
    grid = PixelGrid(
        origin=_vector(block, "origin_m", 2),
        pitch=_number(block, "pitch_m"),
        shape=(int(shape[0]), int(shape[1])),
        angle=_number(block, "angle_rad", 0.0))
    sites = _get(cfg.params, "sites_m", _REQUIRED)
    if not isinstance(sites, list) or not sites:
        raise ConfigError("sites_m must be a non-empty list of positions")
    sites = [np.asarray(s, dtype=float).reshape(3) for s in sites]
    matrices = _get(cfg.params, "matrices", None)
    if matrices is None:
        matrices = [_RING_MATRIX] * len(sites)
    else:
        if not isinstance(matrices, list) or len(matrices) != len(sites):
            raise ConfigError("matrices must list one 3x3 matrix per site")
        matrices = [_matrix3({"m": m}, "m") for m in matrices]
    axes = _vector(cfg.params, "constrain_axes", default=[0.0, 1.0, 2.0])
    try:
        objective = ShapeObjective(sites=sites, matrices=matrices)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = lp_optimize(objective, grid,
                         constrain_axes=tuple(int(a) for a in axes))
    extraction = extract_polygons(
        result.pattern, threshold=_number(cfg.params, "threshold", 0.5))
    layout_path = cfg.out_dir / "rf_layout.json"
    save_layout(extraction.layout, layout_path)
    values = result.pattern.values
    pattern_rows = [(r, c, values[r, c])
                    for r in range(values.shape[0])
                    for c in range(values.shape[1])]
    report = [
        ("objective_value", result.objective_value),
        ("certificate_residual", result.certificate_residual),
        ("interior_pixels", result.interior_pixels),
        ("fragmentation", extraction.fragmentation),
    ]
    return [
        _write_csv(cfg.out_dir / "pattern.csv",
                   ["row", "col", "value"], pattern_rows),
        _write_csv(cfg.out_dir / "rfopt_report.csv",
                   ["metric", "value"], report),
        layout_path,
    ]


def _parse_modes_block(params: dict) -> list[ThermalMode]:
    entries = _get(params, "modes", _REQUIRED)
    if not isinstance(entries, list) or not entries:
        raise ConfigError("modes must be a non-empty list")
    modes = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"modes[{i}] must be an object")
        omega = 2.0 * np.pi * _number(entry, "frequency_hz")
        modes.append(ThermalMode.thermal(omega, _number(entry, "nbar")))
    return modes


def _sim_flop(cfg: RunConfig) -> list[Path]:
    params = cfg.params
    transition = _parse_transition(params)
    modes = _parse_modes_block(params)
    etas = [_number(entry, "eta") for entry in params["modes"]]
    rabi = _number(params, "rabi_0_rad_per_s")
    prepare = _string(params, "prepare", "up", choices=("up", "down"))
    state = (SpinMotionState.prepared_up(modes) if prepare == "up"
             else SpinMotionState.prepared_down(modes))
    t_max = _number(params, "t_max_s")
    n = _integer(params, "n_points")
    if n < 2 or t_max <= 0:
        raise ConfigError("need t_max_s > 0 and n_points >= 2")
    times = np.linspace(0.0, t_max, n)
    p_down = flop_signal(state, transition, rabi, etas, times)
    shots = _integer(params, "shots", 0)
    if shots < 0:
        raise ConfigError("shots must be nonnegative")
    if shots:
        rng = np.random.default_rng(cfg.seed)
        p_down = rng.binomial(shots, p_down) / shots
    return [_write_csv(cfg.out_dir / "flop.csv", ["time_s", "p_down"],
                       zip(times, p_down))]


def _sim_thermometry(cfg: RunConfig) -> list[Path]:
    ratios = _vector(cfg.params, "sideband_ratios")
    rows = [(r, sideband_thermometry(r)) for r in ratios]
    return [_write_csv(cfg.out_dir / "thermometry.csv",
                       ["sideband_ratio", "nbar"], rows)]


def _sim_heating(cfg: RunConfig) -> list[Path]:
    nbar0 = _number(cfg.params, "nbar_initial")
    rate = _number(cfg.params, "rate_quanta_per_s")
    t_max = _number(cfg.params, "t_max_s")
    n = _integer(cfg.params, "n_points")
    if n < 2 or t_max <= 0:
        raise ConfigError("need t_max_s > 0 and n_points >= 2")
    times = np.linspace(0.0, t_max, n)
    return [_write_csv(cfg.out_dir / "heating.csv", ["time_s", "nbar"],
                       zip(times, heating_evolution(nbar0, rate, times)))]


def _sim_tickle(cfg: RunConfig) -> list[Path]:
    params = cfg.params
    field_amp = _number(params, "field_v_per_m")
    omega_mode = 2.0 * np.pi * _number(params, "mode_frequency_hz")
    duration = _number(params, "duration_s")
    threshold = _number(params, "threshold_m", 100e-9)
    if "excitation_frequencies_hz" in params:
        freqs = _vector(params, "excitation_frequencies_hz")
    else:
        freqs = np.linspace(_number(params, "f_min_hz"),
                            _number(params, "f_max_hz"),
                            _integer(params, "n_points"))
    mode = ThermalMode.thermal(omega_mode, 0.0)
    rows = []
    for f in freqs:
        response = tickle_response(field_amp, 2.0 * np.pi * f, duration,
                                   mode, cfg.species, threshold=threshold)
        rows.append((f, response.amplitude, response.detectable))
    return [_write_csv(cfg.out_dir / "tickle.csv",
                       ["frequency_hz", "amplitude_m", "detectable"], rows)]


def _sim_exchange(cfg: RunConfig) -> list[Path]:
    separations = _vector(cfg.params, "separations_m")
    omega = 2.0 * np.pi * _number(cfg.params, "mode_frequency_hz")
    rows = [(d, exchange_rate(d, omega, cfg.species)) for d in separations]
    return [_write_csv(cfg.out_dir / "exchange.csv",
                       ["separation_m", "rate_rad_per_s"], rows)]


def _sim_micromotion(cfg: RunConfig) -> list[Path]:
    params = cfg.params
    stray = _vector(params, "stray_field_v_per_m", 3)
    freqs = _vector(params, "mode_frequencies_hz", 3)
    vectors = _matrix3(params, "mode_vectors", default=np.eye(3))
    modes = ModeStructure(frequencies=2.0 * np.pi * freqs, vectors=vectors)
    geometry = _parse_geometry(params)
    report = micromotion_analysis(stray, modes, cfg.drive, geometry,
                                  cfg.species)
    row = (*report.displacement, *report.micromotion_amplitude,
           report.modulation_index, report.z_sensitivity, *report.mathieu_q)
    return [_write_csv(
        cfg.out_dir / "micromotion.csv",
        ["displacement_x_m", "displacement_y_m", "displacement_z_m",
         "micromotion_x_m", "micromotion_y_m", "micromotion_z_m",
         "modulation_index", "z_sensitivity_m", "q_1", "q_2", "q_3"],
        [row])]


def _sim_detection(cfg: RunConfig) -> list[Path]:
    params = cfg.params
    p_down = _number(params, "p_down")
    if not 0.0 <= p_down <= 1.0:
        raise ConfigError("p_down must lie in [0, 1]")
    shots = _integer(params, "shots")
    if shots < 1:
        raise ConfigError("shots must be positive")
    threshold = (None if "threshold" not in params
                 else _integer(params, "threshold"))
    model = DetectionModel(
        bright_mean=_number(params, "bright_mean", 12.0),
        dark_mean=_number(params, "dark_mean", 0.8),
        duration=_number(params, "duration_s", 150e-6),
        threshold=threshold)
    result = simulate_detection(p_down, model, shots, cfg.seed)
    histogram = [(k, n) for k, n in enumerate(result.histogram)]
    summary = [
        ("threshold", result.threshold),
        ("inferred_p_down", result.inferred_p_down),
        ("shots", result.shots),
    ]
    return [
        _write_csv(cfg.out_dir / "detection_histogram.csv",
                   ["photon_count", "occurrences"], histogram),
        _write_csv(cfg.out_dir / "detection_summary.csv",
                   ["metric", "value"], summary),
    ]


def _sim_ramp(cfg: RunConfig) -> list[Path]:
    params = cfg.params
    u_start = _number(params, "voltage_start_v")
    u_end = _number(params, "voltage_end_v")
    duration = _number(params, "duration_s")
    rate = _number(params, "update_rate_hz", DEFAULT_UPDATE_RATE)
    wf = make_ramp([u_start], [u_end], duration, shape=_parse_shape(params),
                   update_rate=rate)
    times = wf.times()
    voltages = wf.channels["c1"]
    report = ramp_check(times, voltages,
                        _number(params, "curvature_per_volt_m2"),
                        2.0 * np.pi * _number(params, "mode_frequency_hz"),
                        cfg.species)
    rows = zip(times, voltages, report.omega / (2.0 * np.pi), report.epsilon)
    summary = [
        ("max_epsilon", report.max_epsilon),
        ("non_adiabatic", report.non_adiabatic),
        ("n_samples", wf.n_samples),
    ]
    return [
        _write_csv(cfg.out_dir / "ramp.csv",
                   ["time_s", "voltage_v", "frequency_hz", "epsilon"], rows),
        _write_csv(cfg.out_dir / "ramp_summary.csv",
                   ["metric", "value"], summary),
    ]


_EXPERIMENTS = {
    "flop": _sim_flop,
    "thermometry": _sim_thermometry,
    "heating": _sim_heating,
    "tickle": _sim_tickle,
    "exchange": _sim_exchange,
    "micromotion": _sim_micromotion,
    "detection": _sim_detection,
    "ramp": _sim_ramp,
}


def _cmd_simulate(args, cfg: RunConfig) -> list[Path]:
    return _EXPERIMENTS[args.experiment](cfg)


def _cmd_fit_flop(args, cfg: RunConfig) -> list[Path]:
    params = cfg.params
    entries = _get(params, "datasets", _REQUIRED)
    if not isinstance(entries, list) or len(entries) < 2:
        raise ConfigError("datasets must list at least two flop records")
    datasets = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"datasets[{i}] must be an object")
        path = Path(_string(entry, "path"))
        if not path.is_absolute():
            path = cfg.config_dir / path
        try:
            table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
        if table.shape[1] != 2:
            raise ConfigError(
                f"dataset {path} must have two columns time_s,p_down")
        datasets.append(FlopDataset(
            transition=_parse_transition(entry),
            times=table[:, 0], p_down=table[:, 1],
            shots=_integer(entry, "shots", 0)))
    mode_omegas = 2.0 * np.pi * _vector(params, "mode_frequencies_hz")
    block = _get(params, "initial", _REQUIRED)
    if not isinstance(block, dict):
        raise ConfigError("initial must be an object")
    initial = FlopGuess(
        rabi_0=_number(block, "rabi_0_rad_per_s"),
        angles_deg=_vector(block, "angles_deg", len(mode_omegas)),
        nbars=_vector(block, "nbars", len(mode_omegas)))
    fit = fit_flopping(datasets, _parse_geometry(params), cfg.species,
                       mode_omegas, initial)
    rows = [("rabi_0_rad_per_s", fit.rabi_0, fit.rabi_0_err)]
    for j in range(len(mode_omegas)):
        rows.append((f"angle_deg_{j}", fit.angles_deg[j],
                     fit.angles_deg_err[j]))
        rows.append((f"nbar_{j}", fit.nbars[j], fit.nbars_err[j]))
    rows.append(("cost", fit.cost, 0.0))
    return [_write_csv(cfg.out_dir / "fit_flop.csv",
                       ["parameter", "value", "std_error"], rows)]


def _cmd_waveform(args, cfg: RunConfig) -> list[Path]:
    params = cfg.params
    set_a = _vector(params, "set_a_v")
    set_b = _vector(params, "set_b_v")
    wf = make_ramp(set_a, set_b, _number(params, "duration_s"),
                   shape=_parse_shape(params),
                   update_rate=_number(params, "update_rate_hz",
                                       DEFAULT_UPDATE_RATE))
    tones = _get(params, "tones", [])
    if not isinstance(tones, list):
        raise ConfigError("tones must be a list")
    for i, tone in enumerate(tones):
        if not isinstance(tone, dict):
            raise ConfigError(f"tones[{i}] must be an object")
        wf = add_tone(
            wf, _string(tone, "channel"),
            2.0 * np.pi * _number(tone, "frequency_hz"),
            _number(tone, "amplitude_v"),
            (_number(tone, "start_s"), _number(tone, "stop_s")))
    binary_path = cfg.out_dir / "waveform.wfm"
    csv_path = cfg.out_dir / "waveform.csv"
    export(wf, binary_path)
    export_csv(wf, csv_path)
    return [binary_path, csv_path]


def _cmd_field_sample(args, cfg: RunConfig) -> list[Path]:
    layout = cfg.require_layout()
    points = _get(cfg.params, "points_m", _REQUIRED)
    if not isinstance(points, list) or not points:
        raise ConfigError("points_m must be a non-empty list of positions")
    voltages = _parse_voltages(cfg)
    rows = []
    for point in points:
        r = _vector({"p": point}, "p", 3)
        sample = total_sample(layout, cfg.drive, cfg.species, r, order=1,
                              voltages=voltages)
        rows.append((*r, sample.value, *sample.gradient))
    return [_write_csv(
        cfg.out_dir / "field.csv",
        ["x_m", "y_m", "z_m", "potential_v", "gradient_x_v_per_m",
         "gradient_y_v_per_m", "gradient_z_v_per_m"], rows)]


_HANDLERS = {
    "sites": _cmd_sites,
    "modes": _cmd_modes,
    "solve-control": _cmd_solve_control,
    "sweep": _cmd_sweep,
    "rfopt": _cmd_rfopt,
    "simulate": _cmd_simulate,
    "fit-flop": _cmd_fit_flop,
    "waveform": _cmd_waveform,
    "field-sample": _cmd_field_sample,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--layout", help="electrode layout JSON file")
    common.add_argument("--config", help="run configuration JSON file")
    common.add_argument("--out", default=".",
                        help="output directory (default: current)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help="random seed for stochastic simulations")
    parser = argparse.ArgumentParser(
        prog="surftrap",
        description="Planar ion-trap array design and analysis toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("sites", "modes", "solve-control", "sweep", "rfopt",
                 "fit-flop", "waveform", "field-sample"):
        sub.add_parser(name, parents=[common])
    simulate = sub.add_parser("simulate", parents=[common])
    simulate.add_argument("experiment", choices=sorted(_EXPERIMENTS))
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load_run_config(args)
        written = _HANDLERS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
