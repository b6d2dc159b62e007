"""Command line entry point: ``splitbargain <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bargaining import BargainingDomainError, BargainingSolverError, cut_layer_from_alpha, make_problem, solve_ksbs
from .data import (
    Dataset,
    IDXFormatError,
    partition_noniid,
    read_idx,
    split_train_val_test,
    synth_dataset,
)
from .nn import DEFAULT_HIDDEN_WIDTHS, build_model
from .scenario import ScenarioConfig, ScenarioError, generate_scenario, load_config, save_config
from .sltrain import TrainConfig, train_personalized, train_splitfed
from .sweep import sweep_utilities
from .wireless import DEFAULT_MC_SAMPLES, expected_upload_times

log = logging.getLogger("splitbargain")

MANIFEST_VERSION = 1


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _pair(text: str) -> tuple[float, float]:
    parts = [p for p in text.split(",") if p.strip()]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'low,high', got {text!r}")
    return float(parts[0]), float(parts[1])


def _widths(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _out(args, name: str) -> Path:
    path = Path(name)
    if not path.is_absolute() and args.out_dir:
        path = Path(args.out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _scenario_config(args) -> ScenarioConfig:
    config = load_config(args.scenario) if getattr(args, "scenario", None) else ScenarioConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _layer_counts(args) -> list[int]:
    return build_model(784, args.hidden_widths, 10).layer_param_counts


def _expected_taus(scenario, args):
    return expected_upload_times(scenario, args.mc_samples, scenario.rng_seed)


# -- subcommands ---------------------------------------------------------------

def cmd_gen_scenario(args) -> int:
    config = _scenario_config(args)
    changes = {}
    if args.n_devices is not None:
        changes["n_devices"] = args.n_devices
    if args.lambda_range is not None:
        changes["privacy_weight_range"] = args.lambda_range
    if args.compute_scale is not None:
        changes["compute_scale"] = args.compute_scale
    config = replace(config, **changes)
    scenario = generate_scenario(config)
    path = _out(args, args.out)
    save_config(config, path)
    print(f"wrote {path} ({scenario.n_devices} devices, seed {config.seed})")
    if args.devices_csv:
        dpath = _out(args, args.devices_csv)
        with open(dpath, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "cpu_freq_hz", "cycles_per_sample", "num_samples", "tx_power_watt",
                        "payoff_rate", "privacy_weight", "x_m", "y_m", "distance_m"])
            for d in scenario.devices:
                w.writerow([d.id, *(_fmt(float(v)) for v in (
                    d.cpu_freq_hz, d.cycles_per_sample)), d.num_samples,
                    *(_fmt(float(v)) for v in (d.tx_power_watt, d.payoff_rate, d.privacy_weight,
                                               *d.position_m, scenario.distance_m(d)))])
        print(f"wrote {dpath}")
    return 0


def _solve(args, scenario):
    taus = _expected_taus(scenario, args)
    problem = make_problem(scenario, taus, tolerance=args.epsilon)
    return problem, solve_ksbs(problem)


def _write_trace(outcome, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "beta", "feasible", "witness_alpha"])
        for i, (beta, ok, alpha) in enumerate(outcome.trace, start=1):
            w.writerow([i, _fmt(float(beta)), int(ok), "" if alpha is None else _fmt(float(alpha))])


def _write_outcome(outcome, cut: int, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["player", "utility"])
        for k, u in enumerate(outcome.utilities_at_alpha.device_utilities):
            w.writerow([f"device_{k}", _fmt(u)])
        w.writerow(["server", _fmt(outcome.utilities_at_alpha.server_utility)])
        w.writerow(["beta_star", _fmt(outcome.beta_star)])
        w.writerow(["alpha_star", _fmt(outcome.alpha_star)])
        w.writerow(["cut_index", cut])
        w.writerow(["iterations", outcome.iterations])


def cmd_ksbs(args) -> int:
    scenario = generate_scenario(_scenario_config(args))
    _, outcome = _solve(args, scenario)
    cut = cut_layer_from_alpha(outcome.alpha_star, _layer_counts(args))
    print(f"beta* = {outcome.beta_star:.10f}")
    print(f"alpha* = {outcome.alpha_star:.10f}")
    print(f"cut layer = C{cut}")
    print(f"iterations = {outcome.iterations}")
    for k, u in enumerate(outcome.utilities_at_alpha.device_utilities):
        print(f"U_d[{k}] = {u:.6f}")
    print(f"U_S = {outcome.utilities_at_alpha.server_utility:.6f}")
    if args.trace:
        _write_trace(outcome, _out(args, args.trace))
    return 0


def cmd_sweep(args) -> int:
    scenario = generate_scenario(_scenario_config(args))
    result = sweep_utilities(scenario, _layer_counts(args), _expected_taus(scenario, args))
    path = _out(args, args.out)
    result.to_csv(path)
    print(f"wrote {path}: {len(result)} cut layers, best sum of utilities at C{result.best_cut}")
    return 0


# -- data manifests ------------------------------------------------------------

def _build_data(spec: dict):
    """Recreate (train pool, val pool, train partition, val partition) from a manifest spec."""
    n = spec["n_devices"]
    if spec["source"] == "synthetic":
        n_train = n * spec["samples_per_device"]
        n_val = n * spec["val_per_device"]
        pool = synth_dataset(n_train + n_val, spec["n_classes"], spec["input_width"],
                             seed=spec["seed"], separation=spec["separation"], noise=spec["noise"],
                             density=spec["density"])
        train, val = split_train_val_test(pool, (n_train, n_val), seed=spec["seed"])
    else:
        pool = read_idx(spec["images"], spec["labels"], name="idx")
        train, val = split_train_val_test(pool, (spec["n_train"], spec["n_val"]), seed=spec["seed"])
    p_train = partition_noniid(train, n, seed=spec["seed"], n_labels=spec["n_classes"])
    p_val = partition_noniid(val, n, seed=spec["seed"] + 1, n_labels=spec["n_classes"],
                             majors=p_train.major_labels)
    return train, val, p_train, p_val


def cmd_gen_data(args) -> int:
    seed = 0 if args.seed is None else args.seed
    spec = {"n_devices": args.n_devices, "n_classes": 10, "seed": seed}
    if args.idx:
        spec.update(source="idx", images=str(Path(args.idx[0]).resolve()),
                    labels=str(Path(args.idx[1]).resolve()),
                    n_train=args.n_train, n_val=args.n_val)
    else:
        spec.update(source="synthetic", samples_per_device=args.samples_per_device,
                    val_per_device=args.val_per_device, input_width=784,
                    separation=args.separation, noise=args.noise, density=args.density)
    train, val, p_train, p_val = _build_data(spec)
    manifest = {
        "version": MANIFEST_VERSION,
        "spec": spec,
        "checksums": {
            "train": train.checksum(),
            "val": val.checksum(),
            "train_partition": p_train.checksum(),
            "val_partition": p_val.checksum(),
        },
        "device_train_sizes": p_train.sizes,
        "device_val_sizes": p_val.sizes,
        "major_labels": [list(m) for m in p_train.major_labels],
    }
    path = _out(args, args.out)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {path}: {len(train)} train / {len(val)} val samples over {args.n_devices} devices")
    return 0


def load_manifest(path) -> tuple[list[Dataset], list[Dataset]]:
    manifest = json.loads(Path(path).read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest version")
    train, val, p_train, p_val = _build_data(manifest["spec"])
    got = {"train": train.checksum(), "val": val.checksum(),
           "train_partition": p_train.checksum(), "val_partition": p_val.checksum()}
    for key, value in got.items():
        if manifest["checksums"][key] != value:
            raise ValueError(f"{path}: {key} checksum mismatch; data changed since gen-data")
    return p_train.subsets(train), p_val.subsets(val)


def cmd_train(args) -> int:
    config = _scenario_config(args)
    train_sets, val_sets = load_manifest(args.data)
    # the bargaining and the training must agree on D_k
    config = replace(config, n_devices=len(train_sets),
                     samples_per_device=[len(ds) for ds in train_sets])
    scenario = generate_scenario(config)
    taus = _expected_taus(scenario, args)
    counts = _layer_counts(args)
    seed = scenario.rng_seed if args.seed is None else args.seed
    if args.cut == "auto":
        problem = make_problem(scenario, taus, tolerance=args.epsilon)
        outcome = solve_ksbs(problem)
        cut = cut_layer_from_alpha(outcome.alpha_star, counts)
        print(f"KSBS: beta*={outcome.beta_star:.8f} alpha*={outcome.alpha_star:.8f} -> C{cut}")
        # side files sit next to the training record
        base = Path(args.out)
        _write_outcome(outcome, cut, _out(args, str(base.with_name(f"{base.stem}_ksbs.csv"))))
        _write_trace(outcome, _out(args, str(base.with_name(f"{base.stem}_ksbs_trace.csv"))))
    else:
        cut = int(args.cut)
    tcfg = TrainConfig(hidden_widths=tuple(args.hidden_widths), batch_size=args.batch_size,
                       lr=args.lr, local_steps=args.local_steps)
    fn = train_personalized if args.algo == "personalized" else train_splitfed
    record = fn(scenario, train_sets, val_sets, cut, rounds=args.rounds, seed=seed,
                config=tcfg, expected_taus=taus)
    path = _out(args, args.out)
    record.to_csv(path)
    print(f"wrote {path}: {args.algo}, C{cut}, final mean val acc {record.mean_val_acc[-1]:.4f}")
    return 0


def _read_record(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "mean_val_acc" not in rows[0]:
        raise ValueError(f"{path}: not a training record CSV")
    return {
        "round": [int(r["round"]) for r in rows],
        "acc": [float(r["mean_val_acc"]) for r in rows],
        "loss": [float(r["global_loss"]) for r in rows],
        "time": [float(r["sim_time_s"]) for r in rows],
    }


def cmd_report(args) -> int:
    header = ["file", "rounds", "final_acc", "best_acc", "best_round", "final_loss",
              "acc_round_10", "sim_time_s", "rounds_to_target"]
    out_rows = []
    for path in args.records:
        rec = _read_record(path)
        acc = rec["acc"]
        best = int(np.argmax(acc))
        at10 = acc[9] if len(acc) >= 10 else float("nan")
        hit = next((r for r, a in zip(rec["round"], acc) if a >= args.target), "")
        out_rows.append([Path(path).name, len(acc), acc[-1], acc[best], rec["round"][best],
                         rec["loss"][-1], at10, rec["time"][-1], hit])
    print(",".join(header))
    for row in out_rows:
        print(",".join(_fmt(v) for v in row))
    if args.out:
        path = _out(args, args.out)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in out_rows:
                w.writerow([_fmt(v) for v in row])
    return 0


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    common.add_argument("--out-dir", default=None, help="directory for relative output paths")
    common.add_argument("--log-level", default="WARNING")

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", help="scenario config file (INI)")
    scen.add_argument("--mc-samples", type=int, default=DEFAULT_MC_SAMPLES,
                      help="channel draws per device for E[tau]")
    scen.add_argument("--hidden-widths", type=_widths, default=DEFAULT_HIDDEN_WIDTHS)

    p = argparse.ArgumentParser(prog="splitbargain", parents=[common],
                                description="Cut-layer bargaining and split-learning simulation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenario", parents=[common, scen], help="write a scenario config")
    g.add_argument("--out", required=True)
    g.add_argument("--n-devices", type=int)
    g.add_argument("--lambda-range", type=_pair)
    g.add_argument("--compute-scale", type=float)
    g.add_argument("--devices-csv")
    g.set_defaults(func=cmd_gen_scenario)

    d = sub.add_parser("gen-data", parents=[common], help="build a dataset manifest")
    src = d.add_mutually_exclusive_group()
    src.add_argument("--synthetic", action="store_true", default=True)
    src.add_argument("--idx", nargs=2, metavar=("IMAGES", "LABELS"))
    d.add_argument("--out", required=True)
    d.add_argument("--n-devices", type=int, default=10)
    d.add_argument("--samples-per-device", type=int, default=2000)
    d.add_argument("--val-per-device", type=int, default=200)
    d.add_argument("--separation", type=float, default=0.5)
    d.add_argument("--noise", type=float, default=0.3)
    d.add_argument("--density", type=float, default=0.2, help="fraction of active pixels per class mean")
    d.add_argument("--n-train", type=int, default=55000)
    d.add_argument("--n-val", type=int, default=5000)
    d.set_defaults(func=cmd_gen_data)

    k = sub.add_parser("ksbs", parents=[common, scen], help="solve the bargaining game")
    k.add_argument("--epsilon", type=float, default=1e-6)
    k.add_argument("--trace")
    k.set_defaults(func=cmd_ksbs)

    s = sub.add_parser("sweep", parents=[common, scen], help="sum of utilities per cut layer")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    t = sub.add_parser("train", parents=[common, scen], help="run split training")
    t.add_argument("--algo", choices=["personalized", "splitfed"], required=True)
    t.add_argument("--data", required=True, help="manifest written by gen-data")
    t.add_argument("--cut", default="auto", help="block index or 'auto'")
    t.add_argument("--rounds", type=int, default=30)
    t.add_argument("--batch-size", type=int, default=256)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--local-steps", type=int, default=None)
    t.add_argument("--epsilon", type=float, default=1e-6)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("report", parents=[common], help="summarise training CSVs")
    r.add_argument("records", nargs="+")
    r.add_argument("--target", type=float, default=0.9, help="accuracy threshold")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, IDXFormatError, BargainingDomainError, BargainingSolverError,
            ValueError, OSError) as exc:
        print(f"splitbargain {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
