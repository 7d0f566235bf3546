"""Command-line front end for reproducible experiments.

Subcommands: gen-corpus, balance, timeline, train.  Every experiment
command takes an explicit --seed (no hidden entropy) and emits CSV with a
single header row (or a JSON mirror via --format json), so repeated runs
with the same configuration produce byte-identical output.

Option values resolve as: explicit CLI flags override values from a
--config TOML file, which override built-in defaults.  Relative --out
paths resolve under $DDPSIM_OUTPUT_DIR when that variable is set.

Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import mcsim, timeline, toytrain
from .balance import ScanPattern
from .configio import load_toml
from .gradsync import ClipMode
from .seqdata import (
    LengthDistribution,
    Topology,
    generate_corpus,
    ingest_lengths,
    load_distribution,
)

OUTPUT_DIR_ENV = "DDPSIM_OUTPUT_DIR"

_STRATEGIES = ["none", "global_presort", "packing", "local_presort"]
_MODES = [m.value for m in ClipMode]
_SCANS = [s.value for s in ScanPattern]


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge(args)
        args.handler(cfg)
        return 0
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# option tables: name -> (type, default, required)

_COMMON = {
    "config": (str, None, False),
    "out": (str, None, False),
    "format": (str, "csv", False),
}

_GEN_CORPUS_OPTS = {
    **_COMMON,
    "n": (int, None, True),
    "seed": (int, None, True),
    "dist": (str, None, False),
}

_BALANCE_OPTS = {
    **_COMMON,
    "strategy": (str, None, False),
    "ablation": (bool, False, False),
    "gpus": (int, 64, False),
    "nodes": (int, 8, False),
    "local_batch": (int, 16, False),
    "trials": (int, None, False),
    "full": (bool, False, False),
    "scan": (str, "raster", False),
    "seed": (int, None, True),
    "corpus": (str, None, False),
    "corpus_n": (int, 100_000, False),
    "corpus_seed": (int, None, False),
    "dist": (str, None, False),
    "pack_limit": (int, 2, False),
}

_TIMELINE_OPTS = {
    **_COMMON,
    "plan": (str, None, False),
    "buckets": (int, 8, False),
    "comp_total": (float, 8.0, False),
    "comm_total": (float, 8.0, False),
    "clip_total": (float, 0.5, False),
    "gclip": (float, 0.5, False),
    "nred": (float, 0.0, False),
    "comm_scale": (float, 1.0, False),
    "modes": (str, ",".join(_MODES), False),
}

_TRAIN_OPTS = {
    **_COMMON,
    "mode": (str, None, False),
    "compare": (bool, False, False),
    "workers": (int, 16, False),
    "buckets": (int, 8, False),
    "steps": (int, 500, False),
    "threshold": (float, 1.0, False),
    "dim": (int, 32, False),
    "minibatch": (int, 32, False),
    "noise_std": (float, 0.1, False),
    "outlier_rate": (float, 0.05, False),
    "outlier_scale": (float, 100.0, False),
    "lr": (float, 0.02, False),
    "beta1": (float, 0.9, False),
    "beta2": (float, 0.999, False),
    "eps": (float, 0.2, False),
    "weight_decay": (float, 0.0, False),
    "seeds": (int, 20, False),
    "seed": (int, None, True),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddpsim",
        description="Load-balance and gradient-clipping experiments at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = _add_command(sub, "gen-corpus", _GEN_CORPUS_OPTS, _cmd_gen_corpus,
                     help="write a synthetic length-list corpus")
    p = _add_command(sub, "balance", _BALANCE_OPTS, _cmd_balance,
                     help="Monte-Carlo token-balance experiment")
    p.set_defaults(choices_overrides={"strategy": _STRATEGIES, "scan": _SCANS})
    p = _add_command(sub, "timeline", _TIMELINE_OPTS, _cmd_timeline,
                     help="pipeline latency of the clip modes")
    p = _add_command(sub, "train", _TRAIN_OPTS, _cmd_train,
                     help="toy training comparison of the clip modes")
    p.set_defaults(choices_overrides={"mode": _MODES})
    return parser


_CHOICES = {
    "strategy": _STRATEGIES,
    "scan": _SCANS,
    "mode": _MODES,
    "format": ["csv", "json"],
}


def _add_command(sub, name, opts, handler, help):
    p = sub.add_parser(name, help=help)
    for opt, (typ, _default, _required) in opts.items():
        flag = "--" + opt.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, action="store_const", const=True, default=None)
        else:
            p.add_argument(flag, type=typ, default=None, choices=_CHOICES.get(opt))
    p.set_defaults(handler=handler, opts=opts)
    return p


def _merge(args) -> dict:
    """Resolve precedence: CLI flag > config file > built-in default."""
    opts = args.opts
    doc = {}
    config_path = getattr(args, "config", None)
    if config_path:
        doc = load_toml(config_path)
        unknown = sorted(set(doc) - set(opts))
        if unknown:
            raise ValueError(f"{config_path}: unknown config keys: {', '.join(unknown)}")
    cfg = {}
    for opt, (typ, default, required) in opts.items():
        flag_value = getattr(args, opt)
        if flag_value is not None:
            cfg[opt] = flag_value
        elif opt in doc:
            value = doc[opt]
            cfg[opt] = bool(value) if typ is bool else typ(value)
            if opt in _CHOICES and cfg[opt] not in _CHOICES[opt]:
                raise ValueError(
                    f"{opt} must be one of {', '.join(_CHOICES[opt])}, got {cfg[opt]!r}"
                )
        else:
            cfg[opt] = default
        if required and cfg[opt] is None:
            raise ValueError(f"missing required option --{opt.replace('_', '-')}")
    return cfg


# ---------------------------------------------------------------------------
# handlers


def _cmd_gen_corpus(cfg: dict) -> None:
    dist = load_distribution(cfg["dist"]) if cfg["dist"] else LengthDistribution()
    samples = generate_corpus(dist, cfg["n"], cfg["seed"])
    lengths = [s.length for s in samples]
    if cfg["format"] == "json":
        _write(json.dumps(lengths) + "\n", cfg["out"])
    else:
        _write("".join(f"{v}\n" for v in lengths), cfg["out"])


def _balance_experiment(cfg: dict) -> mcsim.BalanceExperiment:
    if cfg["gpus"] % cfg["nodes"]:
        raise ValueError(f"--gpus {cfg['gpus']} not divisible by --nodes {cfg['nodes']}")
    topo = Topology(num_nodes=cfg["nodes"], gpus_per_node=cfg["gpus"] // cfg["nodes"])
    if cfg["corpus"]:
        samples = ingest_lengths(cfg["corpus"])
    else:
        dist = load_distribution(cfg["dist"]) if cfg["dist"] else LengthDistribution()
        corpus_seed = cfg["corpus_seed"] if cfg["corpus_seed"] is not None else cfg["seed"]
        samples = generate_corpus(dist, cfg["corpus_n"], corpus_seed)
    trials = cfg["trials"] if cfg["trials"] is not None else (100_000 if cfg["full"] else 10_000)
    strategy = cfg["strategy"] if cfg["strategy"] else "local_presort"
    return mcsim.BalanceExperiment(
        strategy=strategy,
        topo=topo,
        samples=samples,
        seed=cfg["seed"],
        local_batch=cfg["local_batch"],
        trials=trials,
        scan=cfg["scan"],
        pack_limit=cfg["pack_limit"],
    )


_BALANCE_HEADER = [
    "strategy", "gpus", "local_batch", "trials",
    "avg_min", "avg_max", "avg_range", "stderr_min", "stderr_max",
]


def _cmd_balance(cfg: dict) -> None:
    if not cfg["ablation"] and not cfg["strategy"]:
        raise ValueError("pass --strategy or --ablation")
    exp = _balance_experiment(cfg)
    if cfg["ablation"]:
        results = mcsim.run_ablation(exp)
    else:
        results = [(exp.strategy.value, mcsim.run_balance_experiment(exp))]
    rows = [
        [label, exp.topo.total_gpus, exp.local_batch, stats.trials,
         stats.avg_min, stats.avg_max, stats.avg_range,
         stats.stderr_min, stats.stderr_max]
        for label, stats in results
    ]
    _emit(_BALANCE_HEADER, rows, cfg)


_TIMELINE_HEADER = ["mode", "B", "total_latency", "compute_busy", "comm_busy"]


def _cmd_timeline(cfg: dict) -> None:
    if cfg["plan"]:
        plan = timeline.load_plan(cfg["plan"])
    else:
        plan = timeline.with_bucket_count(
            timeline.TimelinePlan(
                t_comp=(cfg["comp_total"],),
                t_comm=(cfg["comm_total"],),
                t_clip=(cfg["clip_total"],),
                t_gclip=cfg["gclip"],
                t_nred=cfg["nred"],
            ),
            cfg["buckets"],
        )
    modes = [m.strip() for m in cfg["modes"].split(",") if m.strip()]
    for m in modes:
        if m not in _MODES:
            raise ValueError(f"unknown mode {m!r}; valid modes: {', '.join(_MODES)}")
    rows = [
        [r["mode"], r["B"], r["total_latency"], r["compute_busy"], r["comm_busy"]]
        for r in timeline.sweep(plan, modes, comm_scales=[cfg["comm_scale"]])
    ]
    _emit(_TIMELINE_HEADER, rows, cfg)


def _cmd_train(cfg: dict) -> None:
    if not cfg["compare"] and not cfg["mode"]:
        raise ValueError("pass --mode or --compare")
    task = toytrain.ToyTask(
        dim=cfg["dim"],
        minibatch=cfg["minibatch"],
        noise_std=cfg["noise_std"],
        outlier_rate=cfg["outlier_rate"],
        outlier_scale=cfg["outlier_scale"],
        seed=cfg["seed"],
    )
    kwargs = dict(
        workers=cfg["workers"],
        buckets=cfg["buckets"],
        steps=cfg["steps"],
        threshold=cfg["threshold"],
        lr=cfg["lr"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        eps=cfg["eps"],
        weight_decay=cfg["weight_decay"],
    )
    if cfg["compare"]:
        seeds = [cfg["seed"] + i for i in range(cfg["seeds"])]
        summaries = toytrain.compare_modes(task, list(ClipMode), seeds, **kwargs)
        rows = [[s.mode.value, s.mean_final_loss, s.stderr] for s in summaries]
        _emit(["mode", "mean_final_loss", "stderr"], rows, cfg)
    else:
        result = toytrain.train(task, cfg["mode"], **kwargs)
        rows = [[step + 1, float(loss)] for step, loss in enumerate(result.losses)]
        _emit(["step", "loss"], rows, cfg)


# ---------------------------------------------------------------------------
# output


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _emit(header: list[str], rows: list[list], cfg: dict) -> None:
    if cfg["format"] == "json":
        payload = [dict(zip(header, row)) for row in rows]
        text = json.dumps(payload, indent=2) + "\n"
    else:
        lines = [",".join(header)]
        lines += [",".join(_format_value(v) for v in row) for row in rows]
        text = "\n".join(lines) + "\n"
    _write(text, cfg["out"])


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


if __name__ == "__main__":
    sys.exit(main())
