"""Config parsing, twin-experiment protocol, sweeps, and output files."""
import dataclasses
import json

import numpy as np
import pytest

from balanced_da.experiments import (
    build_system,
    config_notes,
    config_to_dict,
    generate_observations,
    generate_reference,
    initial_state,
    parse_config,
    run_twin_experiment,
    simulate_run,
    sweep,
    write_metadata,
    write_metrics_csv,
    write_sweep_csv,
    write_trajectory_csv,
)
from balanced_da.models import eval_constraint, eval_jacobian

BASE_DA = """
model = double_pendulum
epsilon = 0.01
dt = 0.001
total_time = 0.4
ensemble_size = 12
observed = q           # positions only
dt_obs = 0.04
obs_noise = 0.05
init_variance = 0.01
inflation = 1.05
seed = 3
"""

THERMAL_DA = """
model = elliptic_pendulum
epsilon = 0.01
dt = 0.001
total_time = 0.2
gamma = 1.0
kbt = 16.0
ensemble_size = 6
observed = p
dt_obs = 0.02
obs_noise = 0.1
init_variance = 0.01
seed = 5
"""


class TestParseConfig:
    def test_valid_with_comments_and_vectors(self):
        cfg = parse_config(BASE_DA + "q0 = 1, 0, 2, 0\n")
        assert cfg.model == "double_pendulum"
        assert cfg.dt_obs == 0.04
        np.testing.assert_array_equal(cfg.q0, [1.0, 0.0, 2.0, 0.0])

    def test_unknown_key_reports_line(self):
        with pytest.raises(ValueError, match="line 3: unknown key 'momentum'"):
            parse_config("model = harmonic_oscillator\nepsilon = 1\nmomentum = 2\n")

    def test_duplicate_key(self):
        with pytest.raises(ValueError, match="duplicate key 'dt'"):
            parse_config(BASE_DA + "dt = 0.002\n")

    def test_missing_required(self):
        with pytest.raises(ValueError, match="missing required keys: dt, total_time"):
            parse_config("model = harmonic_oscillator\nepsilon = 1\n")

    def test_bad_value_reports_key(self):
        with pytest.raises(ValueError, match="bad value for 'balancing'"):
            parse_config(BASE_DA + "balancing = magic\n")

    def test_line_without_equals(self):
        with pytest.raises(ValueError, match="expected key = value"):
            parse_config("model harmonic_oscillator\n")

    def test_gamma_without_kbt(self):
        with pytest.raises(ValueError, match="gamma and kbt"):
            parse_config("model = harmonic_oscillator\nepsilon = 1\ndt = 0.1\n"
                         "total_time = 1\ngamma = 1\n")

    def test_config_to_dict_serializes_vectors(self):
        cfg = parse_config(BASE_DA + "q0 = 1, 0, 2, 0\n")
        out = config_to_dict(cfg)
        assert out["q0"] == [1.0, 0.0, 2.0, 0.0]
        json.dumps(out)


class TestValidation:
    def test_dt_obs_not_multiple(self):
        cfg = parse_config(BASE_DA.replace("dt_obs = 0.04", "dt_obs = 0.0015"))
        with pytest.raises(ValueError, match="dt_obs"):
            run_twin_experiment(cfg)

    def test_total_time_not_multiple(self):
        cfg = parse_config(BASE_DA.replace("total_time = 0.4", "total_time = 0.41"))
        with pytest.raises(ValueError, match="total_time"):
            run_twin_experiment(cfg)

    def test_blend_window_exceeds_cycle(self):
        cfg = parse_config(BASE_DA + "balancing = blending\nblend_window = 41\n")
        with pytest.raises(ValueError, match="blend_window"):
            run_twin_experiment(cfg)

    def test_pseudo_obs_needs_thermal_model(self):
        cfg = parse_config(BASE_DA + "balancing = pseudo_obs\n")
        with pytest.raises(ValueError, match="thermal"):
            run_twin_experiment(cfg)

    def test_small_ensemble_rejected(self):
        cfg = parse_config(BASE_DA.replace("ensemble_size = 12", "ensemble_size = 1"))
        with pytest.raises(ValueError, match="ensemble_size"):
            run_twin_experiment(cfg)


class TestInitialState:
    def test_elliptic_impulse_defaults(self):
        cfg = parse_config(
            "model = elliptic_pendulum\nepsilon = 0.001\ndt = 1e-5\ntotal_time = 0\n"
            "gamma = 1\nkbt = 16\n"
        )
        system = build_system(cfg)
        z = initial_state(cfg, system)
        np.testing.assert_array_equal(z.q, [1.0, 0.0])
        G = eval_jacobian(system, z.q)[0]
        expected = np.sqrt(2.0 * 16.0) * G / np.linalg.norm(G)
        np.testing.assert_allclose(z.p, expected, rtol=1e-14)

    def test_elliptic_impulse_override(self):
        cfg = parse_config(
            "model = elliptic_pendulum\nepsilon = 0.001\ndt = 1e-5\ntotal_time = 0\n"
            "normal_impulse = 2.5\n"
        )
        system = build_system(cfg)
        z = initial_state(cfg, system)
        assert np.linalg.norm(z.p) == pytest.approx(2.5, rel=1e-13)

    def test_double_pendulum_default_on_manifold(self):
        cfg = parse_config(BASE_DA)
        system = build_system(cfg)
        z = initial_state(cfg, system)
        assert np.linalg.norm(eval_constraint(system, z.q)) < 1e-12
        G = eval_jacobian(system, z.q)
        assert np.linalg.norm(G @ z.p) < 1e-12

    def test_wrong_length_rejected(self):
        cfg = parse_config(BASE_DA + "q0 = 1, 0\n")
        with pytest.raises(ValueError, match="length 4"):
            initial_state(cfg, build_system(cfg))


class TestTwinExperiment:
    def test_bitwise_determinism(self):
        cfg = parse_config(BASE_DA)
        r1 = run_twin_experiment(cfg)
        r2 = run_twin_experiment(cfg)
        np.testing.assert_array_equal(r1.metrics.rmse_q, r2.metrics.rmse_q)
        np.testing.assert_array_equal(r1.mean_trajectory, r2.mean_trajectory)
        np.testing.assert_array_equal(r1.reference_states, r2.reference_states)

    def test_injected_truth_matches_internal(self):
        cfg = parse_config(BASE_DA)
        reference = generate_reference(cfg)
        observations = generate_observations(cfg, reference[1])
        internal = run_twin_experiment(cfg)
        injected = run_twin_experiment(cfg, reference, observations)
        np.testing.assert_array_equal(internal.metrics.rmse_q, injected.metrics.rmse_q)
        np.testing.assert_array_equal(internal.observations, injected.observations)

    def test_penalty_reduces_fast_energy(self):
        base = dataclasses.replace(parse_config(BASE_DA), epsilon=1e-3)
        plain = run_twin_experiment(base)
        balanced = run_twin_experiment(dataclasses.replace(base, balancing="penalty"))
        h_plain = plain.metrics.time_averages(0.0)["mean_hosc"]
        h_balanced = balanced.metrics.time_averages(0.0)["mean_hosc"]
        # forecasts from rebalanced analyses keep the fast energy far below
        # the unbalanced run (measured ratio is about 1e-4)
        assert h_balanced < 1e-2 * h_plain
        assert np.median(balanced.metrics.mean_abs_g) < 1e-3

    def test_blending_run_is_finite(self):
        cfg = parse_config(BASE_DA + "balancing = blending\nblend_window = 10\n")
        result = run_twin_experiment(cfg)
        assert np.all(np.isfinite(result.metrics.rmse_q))

    def test_pseudo_obs_thermal_run(self):
        result = run_twin_experiment(parse_config(THERMAL_DA + "balancing = pseudo_obs\n"))
        assert np.all(np.isfinite(result.metrics.rmse_q))
        assert np.all(np.isfinite(result.metrics.mean_j))

    def test_divergence_names_cycle(self):
        # unresolved fast mode from an unbalanced start overflows eventually
        text = (
            BASE_DA.replace("epsilon = 0.01", "epsilon = 0.001")
            .replace("dt = 0.001", "dt = 0.04")
            .replace("total_time = 0.4", "total_time = 4.0")
        )
        cfg = parse_config(text + "balance_initial = false\n")
        with pytest.warns(RuntimeWarning):
            with pytest.raises(RuntimeError, match="cycle"):
                run_twin_experiment(cfg)

    def test_mismatched_injection_rejected(self):
        cfg = parse_config(BASE_DA)
        times, states = generate_reference(cfg)
        with pytest.raises(ValueError, match="reference"):
            run_twin_experiment(cfg, (times[:-1], states[:-1]))


class TestSweep:
    def test_window_alias_and_shared_truth(self):
        cfg = parse_config(BASE_DA + "balancing = blending\n")
        result = sweep(cfg, "window", ["2", "10"])
        assert result.parameter == "blend_window"
        assert result.failures == []
        assert result.shared_reference is not None
        assert result.results[0].config.blend_window == 2
        assert result.results[1].config.blend_window == 10
        assert result.results[0].config.seed == cfg.seed + 1
        np.testing.assert_array_equal(
            result.results[0].reference_states, result.results[1].reference_states
        )

    def test_failed_value_becomes_nan_row(self):
        cfg = parse_config(BASE_DA)
        result = sweep(cfg, "inflation", [1.0, -1.0])
        assert len(result.failures) == 1
        assert result.failures[0][0] == -1.0
        assert np.isfinite(result.rows[0]["rmse_q"])
        assert np.isnan(result.rows[1]["rmse_q"])
        assert result.results[1] is None

    def test_unsweepable_parameter(self):
        cfg = parse_config(BASE_DA)
        with pytest.raises(ValueError, match="cannot sweep"):
            sweep(cfg, "model", ["harmonic_oscillator"])


class TestSimulateRun:
    def test_shapes_and_record_every(self):
        cfg = parse_config(
            "model = harmonic_oscillator\nepsilon = 1\nk = 4\ndt = 0.01\n"
            "total_time = 1\nrecord_every = 10\n"
        )
        result = simulate_run(cfg)
        assert result.times.shape == (11,)
        assert result.states.shape == (11, 2)
        assert set(result.diagnostics) == {"energy", "osc_energy", "abs_g", "abs_gtilde", "action"}
        drift = np.ptp(result.diagnostics["energy"])
        assert drift < 1e-3

    def test_no_action_for_two_constraints(self):
        cfg = parse_config(BASE_DA.replace("total_time = 0.4", "total_time = 0.01"))
        result = simulate_run(cfg)
        assert "action" not in result.diagnostics

    def test_rattle_stays_on_manifold(self):
        cfg = parse_config(
            "model = elliptic_pendulum\nepsilon = 0.001\ndt = 0.001\ntotal_time = 0.5\n"
            "integrator = rattle\nbalance_initial = true\n"
        )
        result = simulate_run(cfg)
        assert np.max(result.diagnostics["abs_g"]) < 1e-9

    def test_langevin_needs_thermostat(self):
        cfg = parse_config(
            "model = harmonic_oscillator\nepsilon = 1\ndt = 0.01\ntotal_time = 1\n"
            "integrator = langevin\n"
        )
        with pytest.raises(ValueError, match="langevin"):
            simulate_run(cfg)


class TestOutputFiles:
    def test_metrics_csv_header_and_determinism(self, tmp_path):
        cfg = parse_config(BASE_DA)
        result = run_twin_experiment(cfg)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_metrics_csv(a, result.metrics)
        write_metrics_csv(b, run_twin_experiment(cfg).metrics)
        text = a.read_text()
        assert text.splitlines()[0] == "time,rmse_q,rmse_p_tan,mean_Hosc,mean_J,mean_abs_g,mean_abs_gtilde"
        assert a.read_bytes() == b.read_bytes()
        parsed = np.genfromtxt(a, delimiter=",", names=True)
        np.testing.assert_array_equal(parsed["rmse_q"], result.metrics.rmse_q)

    def test_sweep_csv(self, tmp_path):
        cfg = parse_config(BASE_DA)
        result = sweep(cfg, "inflation", [1.0, 1.05])
        path = tmp_path / "sweep.csv"
        write_sweep_csv(path, result)
        lines = path.read_text().splitlines()
        assert lines[0] == "value,rmse_q,rmse_p_tan,mean_Hosc,mean_J,mean_abs_g,mean_abs_gtilde"
        assert len(lines) == 3

    def test_trajectory_csv(self, tmp_path):
        cfg = parse_config(
            "model = harmonic_oscillator\nepsilon = 1\ndt = 0.01\ntotal_time = 0.1\n"
        )
        result = simulate_run(cfg)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(path, result)
        lines = path.read_text().splitlines()
        assert lines[0] == "time,q1,p1,energy,osc_energy,abs_g,abs_gtilde,action"
        assert len(lines) == result.times.shape[0] + 1

    def test_metadata_notes(self, tmp_path):
        cfg = parse_config(
            "model = elliptic_pendulum\nepsilon = 0.001\ndt = 5e-6\ntotal_time = 0\n"
            "gamma = 1\nkbt = 16\n"
        )
        path = tmp_path / "metadata.json"
        write_metadata(path, cfg, config_notes(cfg), extra={"status": "ok"})
        payload = json.loads(path.read_text())
        assert payload["config"]["model"] == "elliptic_pendulum"
        assert payload["status"] == "ok"
        assert any("5 * 10^-6" in note for note in payload["notes"])
        assert any("impulse" in note for note in payload["notes"])
