"""Command-line entry point: ``spikeflag <subcommand> --config exp.toml``.

Subcommands
-----------
generate   write the configured synthetic dataset to ``<out>/synthetic.h5``
train      train one trial and save ``<out>/trial_XX.ckpt``
evaluate   score a checkpoint on the held-out patches
run        full multi-trial experiment with ``report.json`` / ``report.txt``
energy     power estimates from a checkpoint or explicit spike rates
report     comparison table over several ``report.json`` files
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import experiment as ex
from .data import generate_synthetic, save_hdf5
from .errors import SpikeflagError
from .snn import load_checkpoint, save_checkpoint

log = logging.getLogger("spikeflag")


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.load_config(args.config) if args.config else ex.ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    if getattr(args, "trials", None) is not None:
        cfg.train.trials = args.trials
    return cfg


def _out_dir(args, cfg) -> Path:
    out = args.out or os.environ.get("SPIKEFLAG_OUT") or cfg.output
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _base_dir(args) -> Path | None:
    return Path(args.config).resolve().parent if args.config else None


def _write(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_generate(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    vis, mask = generate_synthetic(cfg.data.synthetic)
    save_hdf5(out / "synthetic.h5", vis, mask)
    print(out / "synthetic.h5")


def cmd_train(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    ds = ex.prepare(cfg, _base_dir(args))
    seed = cfg.train.seed
    net, metrics, history = ex.run_trial(cfg, ds, seed)
    ckpt = out / "trial_00.ckpt"
    save_checkpoint(ckpt, net, {"seed": seed, "trial": 0})
    _write(out / "train.json", {"seed": seed, "loss_history": history, "metrics": metrics,
                                "config": cfg.to_dict()})
    print(ckpt)


def cmd_evaluate(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    if not Path(args.checkpoint).exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    net, meta = load_checkpoint(args.checkpoint)
    ds = ex.prepare(cfg, _base_dir(args))
    metrics = ex.evaluate_net(net, ds.test, cfg)
    _write(out / "evaluate.json", {"checkpoint": str(args.checkpoint), "metrics": metrics, "metadata": meta})
    print(json.dumps(metrics, indent=2, sort_keys=True))


def cmd_run(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    report = ex.run_experiment(cfg, out, base_dir=_base_dir(args))
    print(ex.emit_comparison_table([report])["text"])


def cmd_energy(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    rates = [float(r) for r in args.rates.split(",")] if args.rates else None
    result = ex.run_energy(cfg, checkpoint=args.rates_from, rates=rates, channels=args.channels,
                           pols=args.pols, mode=args.mode, cadence_hz=args.cadence,
                           balanced_mode=args.balanced, base_dir=_base_dir(args))
    _write(out / "energy.json", {k: v for k, v in result.items() if k != "table"})
    (out / "energy.txt").write_text(result["table"] + "\n")
    print(result["table"])


def cmd_report(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    reports = [json.loads(Path(p).read_text()) for p in args.reports]
    table = ex.emit_comparison_table(reports)
    _write(out / "comparison.json", table["rows"])
    (out / "comparison.txt").write_text(table["text"] + "\n")
    print(table["text"])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (TOML or JSON)")
    common.add_argument("--out", help="output directory (default: $SPIKEFLAG_OUT or config output.dir)")
    common.add_argument("--seed", type=int, help="base seed; trial k uses seed + k")
    common.add_argument("--trials", type=int, help="number of trials")
    common.add_argument("--threads", type=int, help="BLAS thread count")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="spikeflag", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write synthetic HDF5 data").set_defaults(func=cmd_generate)
    sub.add_parser("train", parents=[common], help="train one trial").set_defaults(func=cmd_train)
    p = sub.add_parser("evaluate", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_evaluate)
    sub.add_parser("run", parents=[common], help="multi-trial experiment").set_defaults(func=cmd_run)
    p = sub.add_parser("energy", parents=[common], help="energy/power estimates")
    p.add_argument("--channels", type=int, default=512)
    p.add_argument("--pols", type=int, default=4)
    p.add_argument("--mode", choices=["full", "dop"])
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--rates-from", dest="rates_from", help="checkpoint whose test-set spike rates are measured")
    src.add_argument("--rates", help="comma-separated per-layer rates, input layer first")
    p.add_argument("--cadence", type=float, default=1.0, help="whole spectrograms per second")
    p.add_argument("--balanced", choices=["per-chip", "single-chip"], default="per-chip")
    p.set_defaults(func=cmd_energy)
    p = sub.add_parser("report", parents=[common], help="compare report.json files")
    p.add_argument("reports", nargs="+")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    limits = threadpool_limits(args.threads) if args.threads else nullcontext()
    try:
        with limits:
            args.func(args)
    except (SpikeflagError, FileNotFoundError) as exc:
        print(f"spikeflag {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
