"""Command line entry point.

  mpslam run     --scenario s.yaml --out dir [--seed N] [--no-prune]
                 [--outer-iters K] [--threads N]
  mpslam replay  --measurements m.jsonl --truth gt.json --scenario s.yaml
                 --out dir [...]
  mpslam oracle  --case case.yaml --out dir

`run` synthesizes measurements and runs the full estimator; `replay` runs
the estimator on a recorded measurement file; `oracle` solves small fixture
problems with the exact reference implementations.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from .assoc import AssociationProblem, da_exact
from .engine import Engine
from .metrics import (
    bias_difference_rmse,
    orientation_rmse,
    ospa,
    position_rmse,
    separation_accuracy,
)
from .oracles import grid_filter_1d
from .runio import (
    estimate_records,
    read_ground_truth,
    read_measurements,
    write_estimates,
    write_ground_truth,
    write_manifest,
    write_measurements,
    write_metrics_csv,
)
from .scenario import DOMAIN_SYNTH, GroundTruth, ScenarioConfig, generate_trajectories, rng_stream
from .synth import synthesize


def _load_scenario(path, seed_override=None, outer_iters=None) -> ScenarioConfig:
    cfg = ScenarioConfig.load(path)
    if seed_override is not None:
        cfg.seed = seed_override
    if outer_iters is not None:
        cfg.engine.outer_iters = outer_iters
    return cfg


def _step_metrics_row(n, est, truth: GroundTruth, cutoff=2.0, order=1.0) -> dict:
    est_pos = np.array([m.position for m in est.mts]).reshape(-1, 2)
    est_orient = np.array([m.orientation for m in est.mts])
    est_mt_bias = np.array([m.bias for m in est.mts])
    tv = np.array([v.position for v in truth.vas]).reshape(-1, 2)
    tl = np.array([v.bs_id for v in truth.vas])
    exy = np.array([p.position for p in est.pvas]).reshape(-1, 2)
    elab = np.array([p.bs_index for p in est.pvas])
    o = ospa(exy, tv, cutoff, order)
    sep, _ = separation_accuracy(o.assignment, elab, tl, cutoff)
    return {
        "step": n,
        "mt_pos_rmse": position_rmse(est_pos, truth.mt_states[n, :, :2]),
        "mt_orient_rmse": orientation_rmse(est_orient, truth.mt_states[n, :, 2]),
        "bias_diff_rmse": bias_difference_rmse(
            est.bs_biases, est_mt_bias, truth.bs_biases[n], truth.mt_states[n, :, 5]
        ),
        "ospa": o.total,
        "ospa_loc": o.loc,
        "ospa_card": o.card,
        "separation_accuracy": sep,
        "n_confirmed": len(est.pvas),
    }


def _run_engine(cfg: ScenarioConfig, truth: GroundTruth, measurements, out_dir: Path,
                prune: bool, threads: int) -> None:
    engine = Engine(cfg, truth, prune=prune)
    est_rows = []
    metric_rows = []
    for n in range(cfg.n_steps):
        z_per_mt = [measurements[(n, i)] for i in range(cfg.n_mt)]
        est = engine.step(z_per_mt)
        est_rows.extend(estimate_records(est))
        metric_rows.append(_step_metrics_row(n, est, truth))
    write_estimates(out_dir / "estimates.jsonl", est_rows)
    write_metrics_csv(out_dir / "metrics.csv", metric_rows)
    write_manifest(out_dir / "manifest.json", cfg, prune, threads)


def cmd_run(scenario_path, out_dir, seed=None, prune=True, outer_iters=None, threads=1) -> int:
    scenario_path = Path(scenario_path)
    if not scenario_path.exists():
        print(f"error: scenario file not found: {scenario_path}", file=sys.stderr)
        return 2
    try:
        cfg = _load_scenario(scenario_path, seed, outer_iters)
    except (ValueError, KeyError, yaml.YAMLError) as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return 2
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = generate_trajectories(cfg)
    measurements = {}
    for n in range(cfg.n_steps):
        for i in range(cfg.n_mt):
            rng = rng_stream(cfg.seed, DOMAIN_SYNTH, n, i)
            st = truth.mt_states[n, i]
            b_bs = {j + 1: truth.bs_biases[n, j] for j in range(cfg.n_bs)}
            z, labels = synthesize(
                st[:2], st[2], st[5], cfg.base_stations, truth.vas, b_bs,
                cfg.noise, rng, walls=cfg.walls, visibility=cfg.visibility,
            )
            measurements[(n, i)] = z
            truth.origins[(n, i)] = labels
    write_measurements(out / "measurements.jsonl", measurements)
    write_ground_truth(out / "ground_truth.json", truth)
    _run_engine(cfg, truth, measurements, out, prune, threads)
    return 0


def cmd_replay(measurements_path, scenario_path, out_dir, truth_path=None,
               seed=None, prune=True, outer_iters=None, threads=1) -> int:
    measurements_path = Path(measurements_path)
    scenario_path = Path(scenario_path)
    if not measurements_path.exists():
        print(f"error: measurements file not found: {measurements_path}", file=sys.stderr)
        return 2
    if not scenario_path.exists():
        print(f"error: scenario file not found: {scenario_path}", file=sys.stderr)
        return 2
    try:
        cfg = _load_scenario(scenario_path, seed, outer_iters)
        measurements = read_measurements(measurements_path)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    truth_path = Path(truth_path) if truth_path else measurements_path.parent / "ground_truth.json"
    if not truth_path.exists():
        print(f"error: ground truth file not found: {truth_path}", file=sys.stderr)
        return 2
    truth = read_ground_truth(truth_path)
    missing = [
        (n, i) for n in range(cfg.n_steps) for i in range(cfg.n_mt)
        if (n, i) not in measurements
    ]
    for key in missing:
        measurements[key] = np.zeros((0, 4))  # prediction-only steps
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _run_engine(cfg, truth, measurements, out, prune, threads)
    return 0


def cmd_oracle(case_path, out_dir) -> int:
    case_path = Path(case_path)
    if not case_path.exists():
        print(f"error: case file not found: {case_path}", file=sys.stderr)
        return 2
    case = yaml.safe_load(case_path.read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = case.get("kind")
    if kind == "da_exact":
        problem = AssociationProblem(
            np.asarray(case["beta"], dtype=float),
            np.asarray(case["xi"], dtype=float),
            n_bs=case.get("n_bs", 1),
        )
        try:
            marg = da_exact(problem)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        import json

        (out / "marginals.json").write_text(
            json.dumps(
                {
                    "p_underline": marg.p_underline.tolist(),
                    "p_overline": marg.p_overline.tolist(),
                },
                sort_keys=True,
                indent=1,
            )
        )
        return 0
    if kind == "grid_1d":
        base = case_path.parent
        cfg = ScenarioConfig.load(base / case["scenario"])
        measurements = read_measurements(base / case["measurements"])
        mt_index = case.get("mt", 0)
        z_per_step = [
            measurements.get((n, mt_index), np.zeros((0, 4))) for n in range(cfg.n_steps)
        ]
        axis = case.get("axis", {})
        mt0 = cfg.mts[mt_index]
        post = grid_filter_1d(
            z_per_step,
            cfg.base_stations[0].position,
            prior_mean_x=mt0.position[0],
            prior_sigma_x=cfg.engine.prior_sigma_pos,
            noise=cfg.noise,
            cfg=cfg.engine,
            y_fixed=mt0.position[1],
            o_fixed=mt0.heading,
            lo=axis.get("lo", 0.1),
            hi=axis.get("hi", 20.0),
            n_cells=axis.get("cells", 4000),
        )
        with open(out / "oracle_posterior.csv", "w") as fh:
            fh.write("step,mean,std\n")
            for s, m, d in zip(post.steps, post.means, post.stds):
                fh.write(f"{int(s)},{float(m)!r},{float(d)!r}\n")
        return 0
    print(f"error: unknown oracle case kind: {kind!r}", file=sys.stderr)
    return 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="mpslam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="synthesize measurements and run the estimator")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--no-prune", action="store_true", help="bookkeeping test mode")
    p_run.add_argument("--outer-iters", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)

    p_rep = sub.add_parser("replay", help="run the estimator on recorded measurements")
    p_rep.add_argument("--measurements", required=True)
    p_rep.add_argument("--scenario", required=True)
    p_rep.add_argument("--truth", default=None)
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--seed", type=int, default=None)
    p_rep.add_argument("--no-prune", action="store_true")
    p_rep.add_argument("--outer-iters", type=int, default=None)
    p_rep.add_argument("--threads", type=int, default=1)

    p_orc = sub.add_parser("oracle", help="solve a small fixture case exactly")
    p_orc.add_argument("--case", required=True)
    p_orc.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        return cmd_run(
            args.scenario, args.out, seed=args.seed, prune=not args.no_prune,
            outer_iters=args.outer_iters, threads=args.threads,
        )
    if args.command == "replay":
        return cmd_replay(
            args.measurements, args.scenario, args.out, truth_path=args.truth,
            seed=args.seed, prune=not args.no_prune,
            outer_iters=args.outer_iters, threads=args.threads,
        )
    return cmd_oracle(args.case, args.out)


if __name__ == "__main__":
    sys.exit(main())
