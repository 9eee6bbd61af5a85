"""Command line front end.

Four subcommands: ``simulate`` (one trajectory with energy/constraint
diagnostics), ``assimilate`` (one cycled twin experiment), ``sweep`` (the
twin experiment across one varied key, optionally against a shared truth)
and ``stability`` (eigenvalue scans of the blended propagator on the
harmonic or coupled oscillator).  Runs are specified by a flat key = value
config file; results land in an output directory as CSV plus metadata.json.

Exit codes: 0 success, 1 runtime failure (divergence, refused overwrite),
2 bad usage (unknown keys, malformed config, bad flags).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as exp
from . import stability as stab

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="balanced-da",
        description="Ensemble data assimilation for highly oscillatory dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", required=True, help="Output directory (created if missing)")
        p.add_argument("--force", action="store_true", help="Overwrite an existing result directory")
        p.add_argument(
            "--threads",
            type=int,
            default=1,
            help="Worker hint recorded in metadata; results do not depend on it",
        )

    p_sim = sub.add_parser("simulate", help="Integrate one trajectory")
    p_sim.add_argument("--config", required=True, help="Flat key = value config file")
    add_common(p_sim)

    p_da = sub.add_parser("assimilate", help="Run one cycled twin experiment")
    p_da.add_argument("--config", required=True, help="Flat key = value config file")
    add_common(p_da)

    p_sw = sub.add_parser("sweep", help="Twin experiment across one varied key")
    p_sw.add_argument("--config", required=True, help="Flat key = value config file")
    p_sw.add_argument(
        "--param", "--parameter", dest="parameter", required=True, help="Config key to vary"
    )
    p_sw.add_argument("--values", required=True, help="Comma-separated values for the key")
    add_common(p_sw)

    p_st = sub.add_parser("stability", help="Eigenvalue scan of the blended step")
    p_st.add_argument(
        "--model",
        choices=("ho", "cho"),
        default="ho",
        help="ho: stiff harmonic oscillator over (K h^2, alpha); cho: coupled oscillator over alpha",
    )
    p_st.add_argument("--Kh2", "--kh2", dest="kh2", type=float, help="Single K h^2 value (ho)")
    p_st.add_argument("--kh2-min", type=float, default=0.04, help="Grid start for K h^2 (ho)")
    p_st.add_argument("--kh2-max", type=float, default=1.96, help="Grid end for K h^2 (ho)")
    p_st.add_argument("--kh2-points", type=int, default=50, help="Grid size for K h^2 (ho)")
    p_st.add_argument("--alpha", type=float, help="Single blending weight")
    p_st.add_argument("--alpha-min", type=float, default=0.0, help="Grid start for alpha")
    p_st.add_argument("--alpha-max", type=float, default=1.0, help="Grid end for alpha")
    p_st.add_argument("--alpha-points", type=int, default=50, help="Grid size for alpha")
    p_st.add_argument("--stiffness", type=float, default=1.0, help="Coupling constant K (cho)")
    p_st.add_argument("--step", type=float, default=0.1, help="Step size h (cho)")
    add_common(p_st)
    return parser


def _prepare_out(args) -> Path:
    out = Path(args.out)
    marker = out / "metadata.json"
    if marker.exists() and not args.force:
        raise RuntimeError(f"{marker} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_simulate(args) -> None:
    cfg = exp.load_config(args.config)
    out = _prepare_out(args)
    result = exp.simulate_run(cfg)
    exp.write_trajectory_csv(out / "trajectory.csv", result)
    exp.write_metadata(out / "metadata.json", cfg, result.notes, {"threads": args.threads})
    print(f"wrote {out / 'trajectory.csv'} ({result.times.shape[0]} records)")


def _cmd_assimilate(args) -> None:
    cfg = exp.load_config(args.config)
    out = _prepare_out(args)
    result = exp.run_twin_experiment(cfg)
    exp.write_metrics_csv(out / "metrics.csv", result.metrics)
    np.save(out / "reference.npy", result.reference_states)
    np.save(out / "observations.npy", result.observations)
    averages = result.metrics.time_averages(cfg.burn_in)
    exp.write_metadata(
        out / "metadata.json",
        cfg,
        result.notes,
        {"threads": args.threads, "time_averages": averages},
    )
    print(f"wrote {out / 'metrics.csv'} ({result.metrics.times.shape[0]} cycles)")
    print(
        "time averages: "
        + ", ".join(f"{name}={value:.6g}" for name, value in averages.items())
    )


def _cmd_sweep(args) -> None:
    cfg = exp.load_config(args.config)
    values = [part.strip() for part in args.values.split(",") if part.strip()]
    if not values:
        raise ValueError("--values must list at least one value")
    out = _prepare_out(args)
    result = exp.sweep(cfg, args.parameter, values)
    exp.write_sweep_csv(out / "sweep.csv", result)
    if result.shared_reference is not None:
        np.save(out / "reference.npy", result.shared_reference[1])
        np.save(out / "observations.npy", result.shared_observations)
    runs_dir = out / "runs"
    for row, run in zip(result.rows, result.results):
        if run is None:
            continue
        run_dir = runs_dir / f"{row['value']:g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        exp.write_metrics_csv(run_dir / "metrics.csv", run.metrics)
    extra = {
        "threads": args.threads,
        "sweep": {
            "parameter": result.parameter,
            "values": result.values,
            "shared_truth": cfg.sweep_shared_truth,
            "failures": [{"value": v, "error": msg} for v, msg in result.failures],
        },
    }
    exp.write_metadata(out / "metadata.json", cfg, exp.config_notes(cfg), extra)
    print(f"wrote {out / 'sweep.csv'} ({len(result.rows)} rows)")
    for value, msg in result.failures:
        print(f"value {value:g} failed: {msg}", file=sys.stderr)


def _grid(single, lo, hi, points, what: str) -> np.ndarray:
    if single is not None:
        return np.array([single])
    if points < 1:
        raise ValueError(f"{what} grid needs at least one point")
    return np.linspace(lo, hi, points)


_STAB_FMT = "%.17g"


def _cmd_stability(args) -> None:
    out = _prepare_out(args)
    alphas = _grid(args.alpha, args.alpha_min, args.alpha_max, args.alpha_points, "alpha")
    if args.model == "ho":
        kh2 = _grid(args.kh2, args.kh2_min, args.kh2_max, args.kh2_points, "kh2")
        rows = stab.harmonic_stability_grid(kh2, alphas)
        header = "kh2,alpha,abs_eig_1,abs_eig_2,discriminant,regime,alpha_minus,alpha_plus"
        lines = [header]
        for row in rows:
            lines.append(
                ",".join(
                    [
                        _STAB_FMT % row["kh2"],
                        _STAB_FMT % row["alpha"],
                        _STAB_FMT % row["abs_eig_1"],
                        _STAB_FMT % row["abs_eig_2"],
                        _STAB_FMT % row["discriminant"],
                        row["regime"],
                        _STAB_FMT % row["alpha_minus"],
                        _STAB_FMT % row["alpha_plus"],
                    ]
                )
            )
        meta = {
            "model": "ho",
            "kh2": kh2.tolist(),
            "alpha": alphas.tolist(),
            "threads": args.threads,
        }
    else:
        lines = ["alpha,abs_eig_1,abs_eig_2,abs_eig_3,abs_eig_4,spectral_radius,max_printed_deviation"]
        for alpha in alphas:
            report = stab.eigen_report(stab.coupled_flow_matrix(args.stiffness, args.step, float(alpha)))
            comparison = stab.compare_coupled_matrix(args.stiffness, args.step, float(alpha))
            values = [float(alpha), *report.moduli, report.spectral_radius, comparison.max_abs_deviation]
            lines.append(",".join(_STAB_FMT % v for v in values))
        meta = {
            "model": "cho",
            "stiffness": args.stiffness,
            "step": args.step,
            "alpha": alphas.tolist(),
            "threads": args.threads,
        }
    (out / "stability.csv").write_text("\n".join(lines) + "\n")
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out / 'stability.csv'} ({len(lines) - 1} rows)")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "assimilate": _cmd_assimilate,
    "sweep": _cmd_sweep,
    "stability": _cmd_stability,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
