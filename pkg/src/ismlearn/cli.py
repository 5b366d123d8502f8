"""Command-line interface: staged, seeded experiment runs.

Each subcommand reads a YAML config, runs one pipeline stage and writes its
artifacts plus a summary JSON into the output directory. Outputs are
byte-identical across reruns with the same config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, symmetry as sym
from .babbling import RunLog
from .direction import DirectionSamplingConfig, run_direction_sampling
from .learners import BatchNet, BatchTrainConfig, LocalLinearMap, batch_train, net_rmse
from .robot import load_robot
from .sst import SSTEstimate, explore_sst


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_sst_explore(args):
    cfg = harness.load_config(args.config)
    h = harness.config_hash(cfg, args.seed)
    out = _out_dir(args)
    model = load_robot(cfg["robot"])
    est = explore_sst(
        model, int(cfg.get("samples", 10000)), rng_seed=args.seed,
        alpha=cfg.get("alpha"),
    )
    est.save(out / "sst.json", extra={"config_hash": h})
    harness.write_summary(out, "sst-explore", h, args.seed, {
        "n_samples": len(est.torque_samples),
        "alpha": est.alpha,
        "boundary_vertices": int(len(est.boundary_vertices)),
        "area": est.area(),
    })
    print(f"sst-explore: {len(est.torque_samples)} torques, "
          f"{len(est.boundary_vertices)} boundary vertices -> {out}")


def cmd_discover_sym(args):
    cfg = harness.load_config(args.config)
    h = harness.config_hash(cfg, args.seed)
    out = _out_dir(args)
    model = load_robot(cfg["robot"])
    params = harness.settle_params_from(cfg.get("settle"))
    mode = cfg.get("mode", "probe")

    sst = None
    if cfg.get("sst"):
        harness.check_artifact(cfg["sst"], cfg.get("expect_sst_hash"))
        sst = SSTEstimate.load(cfg["sst"])

    targets = [np.asarray(t, dtype=float) for t in cfg["torque_targets"]]
    records = []
    rows = []
    for k, tau_star in enumerate(targets):
        if mode == "probe":
            rec = sym.discover_symmetric_configurations(
                model, tau_star,
                n_profiles=int(cfg.get("profiles_per_target", 200)),
                seed=args.seed + k,
                p_n=tuple(cfg.get("profile_length_range", (8, 40))),
                settle_params=params,
                profile_step_time=cfg.get("profile_step_time", 0.05),
                sst=sst,
            )
        elif mode == "scan":
            rec = sym.oracle_level_set_record(
                model, tau_star, grid_per_dim=int(cfg.get("scan_grid", 25)),
            )
        else:
            raise ValueError(f"unknown discovery mode {mode!r}")
        records.append(rec)
        for q, s in zip(rec.configs, rec.signs):
            rows.append([k] + list(tau_star) + list(s.astype(int)) + list(q))

    with open(out / "level_sets.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        n = model.n
        w.writerow(["target"] + [f"tau_{i}" for i in range(n)]
                   + [f"sign_{i}" for i in range(n)] + [f"q_{i}" for i in range(n)])
        for row in rows:
            w.writerow([row[0]] + [format(v, ".17g") for v in row[1:]])

    metrics = {"records": len(records),
               "cardinalities": [r.cardinality for r in records]}
    try:
        classes = sym.match_correspondences(
            records,
            residual_tol=cfg.get("match_residual_tol", 1e-2),
            seed=args.seed,
        )
        relations = sym.fit_relations(classes, snap_tol=cfg.get("snap_tol", 1e-3))
        relations = sym.filter_sound_relations(
            model, relations, tol=cfg.get("soundness_tol", 1e-3),
        )
        sps = sym.sps_closure(relations)
        bcts = sym.construct_bcts(sps, model.q_min, model.q_max, model.home_configuration)
        sps.save(out / "relations.json", extra={"config_hash": h})
        bcts.save(out / "bcts.json", extra={"config_hash": h})
        metrics.update({
            "relations": len(relations),
            "n_sym": sps.n_sym,
            "soundness_nm": sym.relation_soundness(model, sps.elements, 200),
        })
    except sym.InsufficientData as exc:
        metrics["relations_error"] = str(exc)
    harness.write_summary(out, "discover-sym", h, args.seed, metrics,
                          inputs={"sst": cfg.get("sst", "")})
    print(f"discover-sym[{mode}]: {metrics} -> {out}")


def _write_runlog_and_eval(out, model, llm, runlog, cfg, h, seed, extra_metrics):
    runlog.write_csv(out / "runlog.csv")
    llm.save(out / "llm.json", extra={"config_hash": h})
    metrics = dict(extra_metrics)
    if cfg.get("eval_targets_joint"):
        targets = np.asarray(cfg["eval_targets_joint"], dtype=float)
        report = harness.evaluate(model, llm, targets,
                                  harness.settle_params_from(cfg.get("settle")))
        report.write_csv(out / "evaluation.csv", model)
        metrics["eval_task_rmse_m"] = report.task_rmse
        metrics["eval_failures"] = report.failures
    harness.write_summary(out, cfg["stage"], h, seed, metrics,
                          inputs={"sst": cfg.get("sst", "")})
    return metrics


def cmd_goal_babble(args):
    cfg = harness.load_config(args.config)
    h = harness.config_hash(cfg, args.seed)
    out = _out_dir(args)
    model = load_robot(cfg["robot"])
    harness.check_artifact(cfg["sst"], cfg.get("expect_sst_hash"))
    sst = SSTEstimate.load(cfg["sst"])
    expansion = None
    if cfg.get("relations"):
        sps = sym.SPS.load(cfg["relations"])
        expansion = sym.SampleExpander(sps, model.q_min, model.q_max)
    llm, runlog, metrics, (train_rep, test_rep) = harness.run_babbling_row(
        model, sst, cfg["row"], args.seed, expansion=expansion,
    )
    runlog.write_csv(out / "runlog.csv")
    llm.save(out / "llm.json", extra={"config_hash": h})
    train_rep.write_csv(out / "train_eval.csv", model)
    test_rep.write_csv(out / "test_eval.csv", model)
    harness.write_summary(out, "goal-babble", h, args.seed, metrics,
                          inputs={"sst": cfg["sst"]})
    print(f"goal-babble: train {metrics['train_task_rmse_m']:.2e} m, "
          f"test {metrics['test_task_rmse_m']:.2e} m -> {out}")


def cmd_direction_sample(args):
    cfg = harness.load_config(args.config)
    h = harness.config_hash(cfg, args.seed)
    out = _out_dir(args)
    model = load_robot(cfg["robot"])
    harness.check_artifact(cfg["sst"], cfg.get("expect_sst_hash"))
    sst = SSTEstimate.load(cfg["sst"])

    region = None
    bcts = None
    expansion = None
    if cfg.get("bcts"):
        harness.check_artifact(cfg["bcts"], cfg.get("expect_bcts_hash"))
        bcts = sym.BCTS.load(cfg["bcts"])
        region = bcts
        expansion = sym.SampleExpander(bcts.sps, model.q_min, model.q_max)

    ds_cfg = DirectionSamplingConfig(
        step_width=cfg.get("step_width", 0.05),
        p_home=cfg.get("p_home", 1e-4),
        noise_amplitude=cfg.get("noise_amplitude", 0.3),
        noise_timescale=cfg.get("noise_timescale", 50.0),
        settle=harness.settle_params_from(cfg.get("settle")),
        llm_insertion_radius=cfg.get("llm", {}).get("insertion_radius", 0.35),
        llm_learning_rate=cfg.get("llm", {}).get("learning_rate", 0.1),
        llm_neighbors=cfg.get("llm", {}).get("neighbors", 3),
        llm_lr_decay=cfg.get("llm", {}).get("lr_decay", True),
        llm_kernel_width=cfg.get("llm", {}).get("kernel_width"),
        region=region,
    )
    llm, runlog = run_direction_sampling(
        model, sst, ds_cfg, args.seed, int(cfg["samples"]), expansion=expansion,
    )
    metrics = {"samples": len(runlog.rows), "prototypes": llm.prototype_count}
    if bcts is not None:
        metrics["bcts_cell_coverage"] = harness.bcts_cell_coverage(
            bcts, runlog.observed(), grid=int(cfg.get("coverage_grid", 25)),
        )
    cfg["stage"] = "direction-sample"
    _write_runlog_and_eval(out, model, llm, runlog, cfg, h, args.seed, metrics)
    print(f"direction-sample: {metrics} -> {out}")


def cmd_batch_learn(args):
    cfg = harness.load_config(args.config)
    h = harness.config_hash(cfg, args.seed)
    out = _out_dir(args)
    if cfg.get("compare_full_space", True):
        report = harness.run_symmetry_speedup(cfg, args.seed)
        (Path(out) / "speedup.json").write_text(json.dumps(report, sort_keys=True, indent=1))
        harness.write_summary(out, "batch-learn", h, args.seed, report,
                              inputs={"bcts": cfg.get("bcts", "")})
        print(f"batch-learn: ratio {report['sample_ratio']:.1f} "
              f"(train {report['expanded_train_rmse_clean_nm']:.3f} Nm) -> {out}")
        return
    model = load_robot(cfg["robot"])
    bcts = sym.BCTS.load(cfg["bcts"])
    expander = sym.SampleExpander(bcts.sps, model.q_min, model.q_max)
    rng = np.random.default_rng(args.seed)
    Q = harness.bcts_lattice_samples(model, bcts, int(cfg.get("bcts_samples", 700)), args.seed)
    T = model.gravity_batch(Q) + rng.normal(0, cfg.get("torque_noise_sd", 0.2), (len(Q), model.n))
    pairs = []
    for q, t in zip(Q, T):
        pairs.extend(expander.expand(q, t))
    net = batch_train(pairs, BatchTrainConfig(seed=args.seed,
                                              epochs=int(cfg.get("epochs", 5000)),
                                              target_rmse=cfg.get("target_rmse")))
    net.save(out / "net.npy", extra={"config_hash": h})
    rmse = net_rmse(net, Q, model.gravity_batch(Q))
    harness.write_summary(out, "batch-learn", h, args.seed,
                          {"train_rmse_clean_nm": rmse, "samples": len(pairs)},
                          inputs={"bcts": cfg.get("bcts", "")})
    print(f"batch-learn: train RMSE {rmse:.4f} Nm -> {out}")


def cmd_evaluate(args):
    cfg = harness.load_config(args.config)
    h = harness.config_hash(cfg, args.seed)
    out = _out_dir(args)
    model = load_robot(cfg["robot"])
    ckpt = cfg["checkpoint"]
    if str(ckpt).endswith(".npy"):
        learner = BatchNet.load(ckpt)
    else:
        harness.check_artifact(ckpt, cfg.get("expect_checkpoint_hash"))
        learner = LocalLinearMap.load(ckpt)
    if cfg.get("targets_joint"):
        targets = np.asarray(cfg["targets_joint"], dtype=float)
    else:
        grid = cfg["targets_grid"]
        targets = harness.task_grid_to_joints(
            model, grid["anchor"], grid["extents"], grid["shape"],
        )[0]
    report = harness.evaluate(model, learner, targets,
                              harness.settle_params_from(cfg.get("settle")))
    report.write_csv(out / "evaluation.csv", model)
    harness.write_summary(out, "evaluate", h, args.seed, {
        "task_rmse_m": report.task_rmse,
        "torque_rmse_nm": report.torque_rmse,
        "failures": report.failures,
        "n_targets": len(targets),
    }, inputs={"checkpoint": str(ckpt)})
    print(f"evaluate: task RMSE {report.task_rmse} m over {len(targets)} targets -> {out}")


def cmd_report(args):
    out = Path(args.out)
    summaries = sorted(out.rglob("summary.json"))
    rows = []
    for s in summaries:
        data = json.loads(s.read_text())
        rows.append({"dir": str(s.parent), "stage": data["stage"],
                     "seed": data["seed"], **{
                         k: v for k, v in data["metrics"].items()
                         if isinstance(v, (int, float, str))
                     }})
        print(f"{s.parent}: {data['stage']} seed={data['seed']}")
        for k, v in data["metrics"].items():
            print(f"    {k} = {v}")
    if rows and args.config:
        keys = sorted({k for r in rows for k in r})
        with open(out / "report.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in rows:
                w.writerow(r)
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ismlearn",
        description="Inverse statics learning experiments (goal babbling, "
                    "direction sampling, symmetry exploitation)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "sst-explore": cmd_sst_explore,
        "discover-sym": cmd_discover_sym,
        "goal-babble": cmd_goal_babble,
        "direction-sample": cmd_direction_sample,
        "batch-learn": cmd_batch_learn,
        "evaluate": cmd_evaluate,
        "report": cmd_report,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "report"), help="YAML config file")
        p.add_argument("--seed", type=int, default=0, help="run seed (u64)")
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
