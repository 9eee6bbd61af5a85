"""Twin experiments: reference runs, synthetic observations, cycled analysis.

A run is specified by a flat key = value configuration (see KEY_PARSERS for
the full key set; unknown keys are hard errors).  The twin protocol is

1. integrate one reference trajectory (Verlet, or Verlet-OU when the model
   has a thermostat) and record it at the observation times;
2. observe it through H with noise drawn per observation time;
3. cycle an ensemble: forecast to the next observation time, square-root
   analysis, multiplicative inflation, then the configured balancing step
   (penalty relaxation, pseudo observations, or nothing; blending instead
   changes the forecast into an alpha-ramped cycle).

All randomness derives from one seed through independent child streams
(reference, observations, ensemble init, analysis-time noise), so a config
plus seed fixes every output bitwise regardless of how the work is scheduled.
Per-analysis-time diagnostics are collected in `RunMetrics`; CSV writers use
a fixed column order and float format so reruns are byte-identical.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import balancing as bal
from . import diagnostics as diag
from . import integrators as integ
from . import models
from .filters import Ensemble, ObservationModel, esrf_analysis, inflate
from .models import StateVector, StiffSystem

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "config_to_dict",
    "config_notes",
    "build_system",
    "build_observation",
    "initial_state",
    "generate_reference",
    "generate_observations",
    "run_twin_experiment",
    "TwinResult",
    "sweep",
    "SweepResult",
    "simulate_run",
    "SimulateResult",
    "write_metrics_csv",
    "write_sweep_csv",
    "write_trajectory_csv",
    "write_metadata",
]

_FLOAT_FMT = "%.17g"

_MODELS = ("double_pendulum", "elliptic_pendulum", "coupled_oscillator", "harmonic_oscillator")
_BALANCING = ("none", "penalty", "pseudo_obs", "blending")
_INTEGRATORS = ("sv", "langevin", "rattle", "tangential")
_RAMPS = ("linear", "cosine")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved flat configuration of one run (see `parse_config`)."""

    model: str
    epsilon: float
    dt: float
    total_time: float
    seed: int = 0
    # model parameters
    k: float = 1.0
    k1: float = 1.0
    k2: float = 0.04
    alpha_ell: float = 36.0
    g0: float = 10.0
    grad_v_x: float = 0.0
    grad_v_y: float = 0.0
    l1: float = 1.0
    l2: float = 1.0
    gamma: Optional[float] = None
    kbt: Optional[float] = None
    # assimilation
    ensemble_size: Optional[int] = None
    observed: Optional[str] = None
    dt_obs: Optional[float] = None
    obs_noise: Optional[float] = None
    init_variance: Optional[float] = None
    inflation: float = 1.0
    balancing: str = "none"
    penalty_lambda: float = 1e8
    penalty_soft: bool = False
    penalty_project_momentum: bool = False
    newton_tol: float = 1e-10
    newton_max_iter: int = 100
    blend_window: int = 5
    blend_ramp: str = "linear"
    burn_in: float = 0.0
    # initial condition
    q0: Optional[np.ndarray] = None
    p0: Optional[np.ndarray] = None
    balance_initial: Optional[bool] = None
    normal_impulse: Optional[float] = None
    # free-dynamics runs
    integrator: str = "sv"
    record_every: int = 1
    # sweeps
    sweep_shared_truth: bool = True


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(part) for part in text.split(",")], dtype=float)


def _choice(options: tuple[str, ...]):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text

    return parse


KEY_PARSERS = {
    "model": _choice(_MODELS),
    "epsilon": float,
    "dt": float,
    "total_time": float,
    "seed": int,
    "k": float,
    "k1": float,
    "k2": float,
    "alpha_ell": float,
    "g0": float,
    "grad_v_x": float,
    "grad_v_y": float,
    "l1": float,
    "l2": float,
    "gamma": float,
    "kbt": float,
    "ensemble_size": int,
    "observed": _choice(("q", "p")),
    "dt_obs": float,
    "obs_noise": float,
    "init_variance": float,
    "inflation": float,
    "balancing": _choice(_BALANCING),
    "penalty_lambda": float,
    "penalty_soft": _parse_bool,
    "penalty_project_momentum": _parse_bool,
    "newton_tol": float,
    "newton_max_iter": int,
    "blend_window": int,
    "blend_ramp": _choice(_RAMPS),
    "burn_in": float,
    "q0": _parse_vector,
    "p0": _parse_vector,
    "balance_initial": _parse_bool,
    "normal_impulse": float,
    "integrator": _choice(_INTEGRATORS),
    "record_every": int,
    "sweep_shared_truth": _parse_bool,
}

_REQUIRED = ("model", "epsilon", "dt", "total_time")


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; '#' starts a comment anywhere."""
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KEY_PARSERS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = KEY_PARSERS[key](value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    missing = [key for key in _REQUIRED if key not in values]
    if missing:
        raise ValueError(f"missing required keys: {', '.join(missing)}")
    cfg = ExperimentConfig(**values)
    _validate_common(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def config_to_dict(cfg: ExperimentConfig) -> dict[str, object]:
    """JSON-ready dict of every config field."""
    out: dict[str, object] = {}
    for field_def in fields(cfg):
        value = getattr(cfg, field_def.name)
        if isinstance(value, np.ndarray):
            value = value.tolist()
        out[field_def.name] = value
    return out


def _validate_common(cfg: ExperimentConfig) -> None:
    if cfg.epsilon <= 0.0 or cfg.dt <= 0.0:
        raise ValueError("epsilon and dt must be positive")
    if cfg.total_time < 0.0:
        raise ValueError("total_time must be nonnegative")
    if (cfg.gamma is None) != (cfg.kbt is None):
        raise ValueError("gamma and kbt must be set together")
    if cfg.record_every < 1:
        raise ValueError("record_every must be at least 1")


def _steps_per_interval(interval: float, dt: float, what: str) -> int:
    steps = int(round(interval / dt))
    if steps < 1 or abs(steps * dt - interval) > 1e-9 * max(interval, dt):
        raise ValueError(f"{what} must be a positive integer multiple of dt")
    return steps


def _validate_assimilation(cfg: ExperimentConfig) -> tuple[int, int]:
    """Check DA keys; returns (n_cycles, steps_per_cycle)."""
    for key in ("ensemble_size", "observed", "dt_obs", "obs_noise", "init_variance"):
        if getattr(cfg, key) is None:
            raise ValueError(f"assimilation needs the {key!r} key")
    if cfg.ensemble_size < 2:
        raise ValueError("ensemble_size must be at least 2")
    if cfg.obs_noise <= 0.0 or cfg.init_variance < 0.0:
        raise ValueError("obs_noise must be positive and init_variance nonnegative")
    if cfg.inflation <= 0.0:
        raise ValueError("inflation must be positive")
    steps_per_cycle = _steps_per_interval(cfg.dt_obs, cfg.dt, "dt_obs")
    n_cycles = _steps_per_interval(cfg.total_time, cfg.dt_obs, "total_time")
    if cfg.balancing == "blending":
        if cfg.blend_window < 2:
            raise ValueError("blend_window must be at least 2 steps")
        if cfg.blend_window > steps_per_cycle:
            raise ValueError("blend_window cannot exceed the steps in one cycle")
    return n_cycles, steps_per_cycle


def build_system(cfg: ExperimentConfig) -> StiffSystem:
    if cfg.model == "double_pendulum":
        return models.double_pendulum(
            cfg.epsilon,
            stiffness=(cfg.k1, cfg.k2),
            g0=cfg.g0,
            lengths=(cfg.l1, cfg.l2),
            gamma=cfg.gamma,
            kbt=cfg.kbt,
        )
    if cfg.model == "elliptic_pendulum":
        return models.elliptic_pendulum(
            cfg.epsilon,
            stiffness=cfg.k,
            alpha=cfg.alpha_ell,
            grad_v=np.array([cfg.grad_v_x, cfg.grad_v_y]),
            gamma=cfg.gamma,
            kbt=cfg.kbt,
        )
    if cfg.model == "coupled_oscillator":
        return models.coupled_oscillator(cfg.k)
    return models.harmonic_oscillator(cfg.k)


def build_observation(cfg: ExperimentConfig, system: StiffSystem) -> ObservationModel:
    if cfg.observed == "q":
        return ObservationModel.observe_positions(system.n_dof, cfg.obs_noise, cfg.dt_obs)
    return ObservationModel.observe_momenta(system.n_dof, cfg.obs_noise, cfg.dt_obs)


_DEFAULT_IC = {
    "double_pendulum": (np.array([1.0, 0.0, 2.0, 0.0]), np.array([0.0, 1.0, 0.0, 2.0])),
    "coupled_oscillator": (np.array([1.0, 0.0]), np.array([0.0, 0.0])),
    "harmonic_oscillator": (np.array([1.0]), np.array([0.0])),
}


def resolved_normal_impulse(cfg: ExperimentConfig) -> float:
    if cfg.normal_impulse is not None:
        return cfg.normal_impulse
    if cfg.kbt is not None:
        # oscillatory energy of the impulse matches the bath temperature
        return float(np.sqrt(2.0 * cfg.kbt))
    return 1.0


def initial_state(cfg: ExperimentConfig, system: StiffSystem) -> StateVector:
    """Reference initial condition.

    Explicit q0/p0 win.  The elliptic pendulum otherwise starts on the
    ellipse at (1, 0) with a momentum impulse normal to it; the other models
    use fixed nontrivial states (the double-pendulum default lies exactly on
    the tangent manifold).  ``balance_initial`` (default: true only for the
    double pendulum) projects the state onto {g = 0, G p = 0}.
    """
    if cfg.model == "elliptic_pendulum":
        q0 = cfg.q0 if cfg.q0 is not None else np.array([1.0, 0.0])
        if cfg.p0 is not None:
            p0 = cfg.p0
        else:
            G = models.eval_jacobian(system, q0)[0]
            p0 = resolved_normal_impulse(cfg) * G / np.linalg.norm(G)
    else:
        q_def, p_def = _DEFAULT_IC[cfg.model]
        q0 = cfg.q0 if cfg.q0 is not None else q_def.copy()
        p0 = cfg.p0 if cfg.p0 is not None else p_def.copy()
    if q0.shape != (system.n_dof,) or p0.shape != (system.n_dof,):
        raise ValueError(f"q0/p0 must have length {system.n_dof}")
    z0 = StateVector(q0, p0)
    balance = cfg.balance_initial
    if balance is None:
        balance = cfg.model == "double_pendulum"
    return models.balance_initial_state(system, z0) if balance else z0


def _streams(cfg: ExperimentConfig) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(cfg.seed).spawn(4)
    names = ("reference", "observations", "init", "analysis")
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def generate_reference(
    cfg: ExperimentConfig, system: Optional[StiffSystem] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Reference trajectory sampled at the observation times.

    Returns (times, states) with states[k] the flat (q, p) at k * dt_obs,
    including the initial state.  Fixed seed implies a bit-identical result.
    """
    system = system or build_system(cfg)
    n_cycles, steps = _validate_assimilation(cfg)
    rng = _streams(cfg)["reference"]
    z = initial_state(cfg, system)
    states = np.empty((n_cycles + 1, 2 * system.n_dof))
    states[0] = np.concatenate([z.q, z.p])
    thermostat = system.has_thermostat
    for k in range(1, n_cycles + 1):
        z = integ.advance(system, z, cfg.dt, steps, rng if thermostat else None)
        states[k] = np.concatenate([z.q, z.p])
        if not np.all(np.isfinite(states[k])):
            raise RuntimeError(f"reference trajectory lost finiteness in cycle {k}")
    times = cfg.dt_obs * np.arange(n_cycles + 1)
    return times, states


def generate_observations(
    cfg: ExperimentConfig,
    reference_states: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Noisy observations of reference states 1..n (the initial state is unused)."""
    system = build_system(cfg)
    obs = build_observation(cfg, system)
    rng = rng if rng is not None else _streams(cfg)["observations"]
    clean = reference_states[1:] @ obs.H.T
    return clean + np.sqrt(cfg.obs_noise) * rng.standard_normal(clean.shape)


@dataclass(eq=False)
class TwinResult:
    config: ExperimentConfig
    metrics: diag.RunMetrics
    reference_times: np.ndarray
    reference_states: np.ndarray
    observations: np.ndarray
    mean_trajectory: np.ndarray
    notes: list[str]


def config_notes(cfg: ExperimentConfig) -> list[str]:
    notes = [
        "rmse convention: |mean - reference| / sqrt(n_dof); momentum error "
        "projected tangentially at the reference position",
    ]
    if cfg.model == "elliptic_pendulum" and cfg.p0 is None:
        notes.append(
            f"initial momentum: impulse {resolved_normal_impulse(cfg):.6g} normal to the ellipse"
        )
    if cfg.dt == 5e-6:
        notes.append("dt = 5e-06 reads the protocol's '5^-6' as 5 * 10^-6")
    return notes


def run_twin_experiment(
    cfg: ExperimentConfig,
    reference: Optional[tuple[np.ndarray, np.ndarray]] = None,
    observations: Optional[np.ndarray] = None,
) -> TwinResult:
    """Run one cycled twin experiment.

    ``reference``/``observations`` can be injected (shared-truth sweeps);
    otherwise they are generated from the config's own child streams.  Any
    loss of finiteness aborts with the failing cycle index.

    Metrics are sampled from the forecast ensemble at each observation time,
    before that observation is assimilated, so they measure prediction skill.
    The first row therefore scores the initial ensemble; average with a
    burn-in of one cycle to drop it.  ``mean_trajectory`` holds the analysis
    mean (the state estimate after each update).
    """
    system = build_system(cfg)
    n_cycles, steps = _validate_assimilation(cfg)
    if cfg.balancing == "pseudo_obs" and system.kbt is None:
        raise ValueError("pseudo_obs balancing needs a thermal model (gamma and kbt)")
    obs_model = build_observation(cfg, system)
    streams = _streams(cfg)

    if reference is None:
        reference = generate_reference(cfg, system)
    ref_times, ref_states = reference
    if ref_states.shape != (n_cycles + 1, 2 * system.n_dof):
        raise ValueError("reference does not match the configured cycle count")
    if observations is None:
        observations = generate_observations(cfg, ref_states, streams["observations"])
    if observations.shape != (n_cycles, obs_model.n_obs):
        raise ValueError("observations do not match the configured cycle count")

    m = cfg.ensemble_size
    n = system.n_dof
    z0 = ref_states[0]
    members = z0 + np.sqrt(cfg.init_variance) * streams["init"].standard_normal((m, 2 * n))
    z = StateVector(members[:, :n], members[:, n:])
    balance = cfg.balance_initial
    if balance is None:
        balance = cfg.model == "double_pendulum"
    if balance:
        z = models.balance_initial_state(system, z)

    schedule = None
    if cfg.balancing == "blending":
        maker = integ.BlendSchedule.linear if cfg.blend_ramp == "linear" else integ.BlendSchedule.cosine
        schedule = maker(cfg.blend_window, steps)
    pcfg = None
    if cfg.balancing == "penalty":
        pcfg = bal.PenaltyConfig(
            strength=cfg.penalty_lambda,
            use_soft_constraint=cfg.penalty_soft,
            project_momentum=cfg.penalty_project_momentum,
            newton_tol=cfg.newton_tol,
            newton_max_iter=cfg.newton_max_iter,
        )

    thermostat = system.has_thermostat
    analysis_rng = streams["analysis"]

    series = {
        name: np.empty(n_cycles)
        for name in ("rmse_q", "rmse_p_tan", "mean_hosc", "mean_j", "mean_abs_g", "mean_abs_gtilde")
    }
    mean_traj = np.empty((n_cycles, 2 * n))

    for k in range(1, n_cycles + 1):
        try:
            if schedule is not None:
                z = integ.blended_advance(
                    system, z, cfg.dt, schedule, analysis_rng if thermostat else None
                )
            else:
                z = integ.advance(system, z, cfg.dt, steps, analysis_rng if thermostat else None)
            forecast = Ensemble.from_state(z)

            # metrics score the prediction at the observation time, before
            # that observation is assimilated
            mean = forecast.mean()
            ref = ref_states[k]
            z_ref = StateVector(ref[:n], ref[n:])
            series["rmse_q"][k - 1] = diag.rmse_position(mean[:n], ref[:n])
            series["rmse_p_tan"][k - 1] = diag.rmse_momentum_tangential(system, mean[n:], z_ref)
            for name, value in diag.ensemble_diagnostics(system, z).items():
                series[name][k - 1] = value

            ens = esrf_analysis(forecast, obs_model, observations[k - 1])
            ens = inflate(ens, cfg.inflation)
            if pcfg is not None:
                ens = bal.penalty_balance_ensemble(system, ens, pcfg)
            elif cfg.balancing == "pseudo_obs":
                ens = bal.pseudo_obs_balance(system, ens, analysis_rng)
            z = ens.to_state()
        except (FloatingPointError, np.linalg.LinAlgError, models.ConvergenceError) as exc:
            raise RuntimeError(f"assimilation cycle {k} failed: {exc}") from exc

        mean_traj[k - 1] = ens.mean()

    metrics = diag.RunMetrics(times=ref_times[1:], **series)
    return TwinResult(
        config=cfg,
        metrics=metrics,
        reference_times=ref_times,
        reference_states=ref_states,
        observations=observations,
        mean_trajectory=mean_traj,
        notes=config_notes(cfg),
    )


# common shorthand for the one swept key whose full name differs
_SWEEP_ALIASES = {"window": "blend_window", "lambda": "penalty_lambda"}


@dataclass(eq=False)
class SweepResult:
    parameter: str
    values: list[float]
    rows: list[dict[str, float]]
    results: list[Optional[TwinResult]]
    failures: list[tuple[float, str]]
    shared_reference: Optional[tuple[np.ndarray, np.ndarray]]
    shared_observations: Optional[np.ndarray]


def sweep(cfg: ExperimentConfig, parameter: str, values) -> SweepResult:
    """Repeat the twin experiment while varying one config key.

    With ``cfg.sweep_shared_truth`` the reference trajectory and observations
    are generated once from the base config and injected into every run,
    while each run gets its own analysis randomness (seed offset by the value
    index).  Failures are recorded per value (NaN row) without aborting the
    rest of the sweep.
    """
    parameter = _SWEEP_ALIASES.get(parameter, parameter)
    if parameter not in KEY_PARSERS or parameter in ("model",):
        raise ValueError(f"cannot sweep over {parameter!r}")
    coerce = KEY_PARSERS[parameter]
    reference = observations = None
    if cfg.sweep_shared_truth:
        reference = generate_reference(cfg)
        observations = generate_observations(cfg, reference[1])

    rows: list[dict[str, float]] = []
    results: list[Optional[TwinResult]] = []
    failures: list[tuple[float, str]] = []
    metric_names = ("rmse_q", "rmse_p_tan", "mean_hosc", "mean_j", "mean_abs_g", "mean_abs_gtilde")
    for index, raw_value in enumerate(values):
        value = coerce(raw_value) if isinstance(raw_value, str) else raw_value
        run_cfg = replace(cfg, **{parameter: value, "seed": cfg.seed + index + 1})
        try:
            result = run_twin_experiment(run_cfg, reference, observations)
            averages = result.metrics.time_averages(cfg.burn_in)
            rows.append({"value": float(value), **averages})
            results.append(result)
        except (RuntimeError, ValueError, FloatingPointError) as exc:
            failures.append((float(value), str(exc)))
            rows.append({"value": float(value), **{name: float("nan") for name in metric_names}})
            results.append(None)
    return SweepResult(
        parameter=parameter,
        values=[float(v) for v in values],
        rows=rows,
        results=results,
        failures=failures,
        shared_reference=reference,
        shared_observations=observations,
    )


# ---------------------------------------------------------------------------
# free-dynamics runs


@dataclass(eq=False)
class SimulateResult:
    config: ExperimentConfig
    times: np.ndarray
    states: np.ndarray
    diagnostics: dict[str, np.ndarray]
    notes: list[str]


def simulate_run(cfg: ExperimentConfig) -> SimulateResult:
    """Integrate one trajectory and record energy/constraint diagnostics.

    The integrator is selected by ``cfg.integrator``; recording happens every
    ``record_every`` steps (plus the initial state).  The action column is
    only present for single-constraint systems.
    """
    system = build_system(cfg)
    if cfg.integrator == "langevin" and not system.has_thermostat:
        raise ValueError("langevin integrator needs gamma and kbt")
    n_steps = _steps_per_interval(cfg.total_time, cfg.dt, "total_time") if cfg.total_time > 0 else 0
    rng = _streams(cfg)["reference"]
    z = initial_state(cfg, system)

    n_records = n_steps // cfg.record_every + 1
    times = np.empty(n_records)
    states = np.empty((n_records, 2 * system.n_dof))
    record = 0

    def store(step: int, z: StateVector):
        nonlocal record
        times[record] = step * cfg.dt
        states[record] = np.concatenate([z.q, z.p])
        record += 1

    store(0, z)
    for step in range(1, n_steps + 1):
        if cfg.integrator == "sv":
            z = integ.advance(system, z, cfg.dt, 1)
        elif cfg.integrator == "langevin":
            z = integ.advance(system, z, cfg.dt, 1, rng)
        elif cfg.integrator == "rattle":
            z = integ.rattle_step(system, z, cfg.dt)
        else:
            z = integ.tangential_momentum_step(system, z, cfg.dt)
        if step % cfg.record_every == 0:
            if not (np.all(np.isfinite(z.q)) and np.all(np.isfinite(z.p))):
                raise RuntimeError(f"trajectory lost finiteness at step {step}")
            store(step, z)

    recorded = StateVector(states[:, : system.n_dof], states[:, system.n_dof :])
    diags = {
        "energy": diag.total_energy(system, recorded),
        "osc_energy": diag.oscillatory_energy(system, recorded),
        "abs_g": np.linalg.norm(models.eval_constraint(system, recorded.q), axis=-1),
        "abs_gtilde": np.linalg.norm(models.soft_constraint_residual(system, recorded), axis=-1),
    }
    if system.n_constraints == 1:
        diags["action"] = diag.action_variable(system, recorded)
    return SimulateResult(
        config=cfg, times=times, states=states, diagnostics=diags, notes=config_notes(cfg)
    )


# ---------------------------------------------------------------------------
# output files

_METRIC_COLUMNS = (
    ("time", "times"),
    ("rmse_q", "rmse_q"),
    ("rmse_p_tan", "rmse_p_tan"),
    ("mean_Hosc", "mean_hosc"),
    ("mean_J", "mean_j"),
    ("mean_abs_g", "mean_abs_g"),
    ("mean_abs_gtilde", "mean_abs_gtilde"),
)


def _format_row(values) -> str:
    return ",".join(_FLOAT_FMT % v for v in values)


def write_metrics_csv(path, metrics: diag.RunMetrics) -> None:
    lines = [",".join(name for name, _ in _METRIC_COLUMNS)]
    columns = [getattr(metrics, attr) for _, attr in _METRIC_COLUMNS]
    for row in zip(*columns):
        lines.append(_format_row(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_sweep_csv(path, result: SweepResult) -> None:
    names = ["value"] + [name for name, _ in _METRIC_COLUMNS[1:]]
    keys = ["value"] + [attr for _, attr in _METRIC_COLUMNS[1:]]
    lines = [",".join(names)]
    for row in result.rows:
        lines.append(_format_row(row[key] for key in keys))
    Path(path).write_text("\n".join(lines) + "\n")


def write_trajectory_csv(path, result: SimulateResult) -> None:
    n = result.states.shape[1] // 2
    header = (
        ["time"]
        + [f"q{i + 1}" for i in range(n)]
        + [f"p{i + 1}" for i in range(n)]
        + list(result.diagnostics)
    )
    lines = [",".join(header)]
    diag_cols = list(result.diagnostics.values())
    for i in range(result.times.shape[0]):
        row = [result.times[i], *result.states[i], *(col[i] for col in diag_cols)]
        lines.append(_format_row(row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_metadata(path, cfg: ExperimentConfig, notes: list[str], extra: dict | None = None) -> None:
    payload = {"config": config_to_dict(cfg), "seed": cfg.seed, "notes": notes}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
