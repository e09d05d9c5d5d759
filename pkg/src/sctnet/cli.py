"""Command-line entry point: ``sctnet gen-data | train | eval | merge | grad-check``.

Settings resolve as flag > environment (``SCTNET_<KEY>``) > config file
(flat ``key = value``, ``#`` comments) > built-in default. Every command
echoes the resolved settings before running. Exit codes: 0 success,
1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import checkpoint, data, gradcheck, hdrmath, metrics
from .checkpoint import CheckpointError
from .data import DataError
from .model import ConfigError, ModelConfig, SchemaError, SCTNet, check_weights, make_input
from .train import TrainConfig, train_loop

ENV_PREFIX = "SCTNET_"
MODEL_KEYS = [f.name for f in fields(ModelConfig)]
TRAIN_KEYS = [f.name for f in fields(TrainConfig)]

log = logging.getLogger("sctnet")


class UsageError(Exception):
    pass


def read_config_file(path) -> dict[str, str]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from e
    try:
        return data.parse_kv(text, path)
    except DataError as e:
        raise UsageError(str(e)) from e


def resolve(args, defaults: dict, file_keys: list[str]) -> dict:
    """Merge defaults, config file, environment and flags for one command."""
    known = set(defaults) | set(file_keys)
    from_file = read_config_file(getattr(args, "config", None))
    unknown = sorted(set(from_file) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    out = dict(defaults)
    out.update(from_file)
    for k in known:
        env = os.environ.get(ENV_PREFIX + k.upper())
        if env is not None:
            out[k] = env
    for k in known:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def echo(settings: dict) -> None:
    for k in sorted(settings):
        print(f"# {k} = {settings[k]}")


def _split(settings: dict, keys) -> dict:
    return {k: settings[k] for k in keys if k in settings}


def parse_mix(text: str) -> dict[str, float]:
    """``local=0.5,ego=0.25,full=0.25`` -> fractions; must sum to 1."""
    mix = {}
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"bad mix entry {part!r}; expected class=fraction")
        k, v = part.split("=", 1)
        try:
            mix[k.strip()] = float(eval_fraction(v.strip()))
        except ValueError as e:
            raise UsageError(f"bad mix fraction {v!r}") from e
    try:
        data.allocate_classes(1, mix)
    except DataError as e:
        raise UsageError(str(e)) from e
    return mix


def eval_fraction(s: str) -> float:
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def parse_size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in str(text).lower().split("x"))
    except ValueError as e:
        raise UsageError(f"bad size {text!r}; expected HxW") from e
    if h < 16 or w < 16:
        raise UsageError("scene size must be at least 16x16")
    return h, w


# --------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> int:
    s = resolve(args, {"out": "data", "scenes": 6, "seed": 0,
                       "mix": "local=1/3,ego=1/3,full=1/3", "size": "128x192"}, [])
    echo(s)
    mix = parse_mix(str(s["mix"]))
    size = parse_size(s["size"])
    try:
        manifests = data.build_dataset(int(s["scenes"]), mix, int(s["seed"]), s["out"], size)
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for m in manifests:
        print(f"{m.id} motion={m.motion} light={m.light} selected_i={m.selected_i} t_ref={m.t_ref}")
    return 0


def _configs(s: dict) -> tuple[ModelConfig, TrainConfig]:
    try:
        return (ModelConfig.from_dict(_split(s, MODEL_KEYS)),
                TrainConfig.from_dict(_split(s, TRAIN_KEYS)))
    except (ValueError, TypeError) as e:
        raise UsageError(str(e)) from e


def cmd_train(args) -> int:
    defaults = {"data": "data", "ckpt_out": "model.ckpt", "trace_out": None}
    defaults.update(ModelConfig().to_dict())
    defaults.update(TrainConfig().to_dict())
    s = resolve(args, defaults, [])
    if s["trace_out"] is None:
        s["trace_out"] = str(Path(s["ckpt_out"]).with_suffix(".loss.txt"))
    echo(s)
    mcfg, tcfg = _configs(s)
    try:
        dataset = data.load_dataset(s["data"])
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    result = train_loop(dataset, mcfg, tcfg, trace_path=s["trace_out"], ckpt_path=s["ckpt_out"])
    if result.trace:
        print(f"steps {len(result.trace)} first_loss {result.trace[0].loss:.6f} "
              f"last_loss {result.trace[-1].loss:.6f}")
    print(f"checkpoint {s['ckpt_out']}")
    return 0


def _load_model(ckpt, settings) -> tuple[ModelConfig, dict]:
    header, weights = checkpoint.load_checkpoint(ckpt)
    cfg = checkpoint.config_from_header(header)
    requested = _split(settings, MODEL_KEYS)
    if requested:
        merged = cfg.to_dict()
        merged.update(requested)
        cfg = ModelConfig.from_dict(merged)
    check_weights(weights, cfg)
    return cfg, weights


def cmd_eval(args) -> int:
    s = resolve(args, {"data": "data", "ckpt": None, "pred": None,
                       "domains": ",".join(metrics.DOMAINS), "report_out": "report"}, MODEL_KEYS)
    echo(s)
    domains = tuple(d for d in str(s["domains"]).split(",") if d)
    bad = [d for d in domains if d not in metrics.DOMAINS]
    if bad or not domains:
        raise UsageError(f"unknown domains {bad}; choose from {','.join(metrics.DOMAINS)}")
    if (s["ckpt"] is None) == (s["pred"] is None):
        raise UsageError("give exactly one of --ckpt or --pred")
    dataset = data.load_dataset(s["data"])
    out = Path(s["report_out"])
    gts = {smp.id: smp.gt for smp in dataset}
    preds = {}
    if s["ckpt"]:
        cfg, weights = _load_model(s["ckpt"], s)
        (out / "predictions").mkdir(parents=True, exist_ok=True)
        for smp in dataset:
            p = SCTNet(cfg, weights).forward(make_input(smp.bracket, cfg.gamma))
            data.write_pfm(p, out / "predictions" / f"{smp.id}.pfm")
            preds[smp.id] = p
    else:
        for sid in gts:
            path = Path(s["pred"]) / f"{sid}.pfm"
            if path.exists():
                preds[sid] = data.read_pfm(path)
    report = metrics.evaluate(preds, gts, domains)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    (out / "report.kv").write_text(report.to_kv(), encoding="utf-8")
    print(report.to_text(), end="")
    if report.missing:
        print(f"error: missing predictions for {', '.join(report.missing)}", file=sys.stderr)
        return 1
    return 0


def cmd_merge(args) -> int:
    s = resolve(args, {"scene": None, "ckpt": None, "out": "merged.pfm"}, MODEL_KEYS)
    echo(s)
    if not s["scene"] or not s["ckpt"]:
        raise UsageError("merge needs --scene and --ckpt")
    cfg, weights = _load_model(s["ckpt"], s)
    bracket, _, _ = data.load_bracket(s["scene"])
    pred = SCTNet(cfg, weights).forward(make_input(bracket, cfg.gamma))
    out = Path(s["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    data.write_pfm(pred, out)
    preview = out.with_suffix(".png")
    data.write_png8(hdrmath.mu_law(data.read_pfm(out)), preview)
    print(f"wrote {out} and {preview} ({pred.shape[1]}x{pred.shape[2]})")
    return 0


def cmd_grad_check(args) -> int:
    defaults = {"tol": 1e-4, "seeds": 3, "size": "8x8"}
    defaults.update(ModelConfig().to_dict())
    s = resolve(args, defaults, [])
    echo(s)
    try:
        cfg = ModelConfig.from_dict(_split(s, MODEL_KEYS))
    except (ValueError, TypeError) as e:
        raise UsageError(str(e)) from e
    tol = float(s["tol"])
    h, w = (int(v) for v in str(s["size"]).split("x"))
    results = gradcheck.run_suite(cfg, seeds=range(int(s["seeds"])), size=(h, w))
    failed = 0
    for r in results:
        status = "ok" if r.ok(tol) else "FAIL"
        failed += not r.ok(tol)
        print(f"{status:4} {r.name:32} rel_error={r.rel_error:.3e}")
    print(f"{len(results) - failed}/{len(results)} checks within {tol:g}")
    return 1 if failed else 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sctnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic multi-exposure dataset")
    g.add_argument("--out", help="output directory (default: data)")
    g.add_argument("--scenes", type=int, help="number of scenes (default: 6)")
    g.add_argument("--seed", type=int, help="master seed (default: 0)")
    g.add_argument("--mix", help="motion class fractions, e.g. local=0.5,ego=0.25,full=0.25")
    g.add_argument("--size", help="scene size HxW (default: 128x192)")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train on a dataset directory")
    t.add_argument("--data", help="dataset directory")
    t.add_argument("--config", help="flat key = value file with model/training keys")
    t.add_argument("--steps", type=int, help="optimizer steps")
    t.add_argument("--seed", type=int, help="seed for init, sampling and augmentation")
    t.add_argument("--ckpt-out", dest="ckpt_out", help="checkpoint path (default: model.ckpt)")
    t.add_argument("--trace-out", dest="trace_out", help="loss trace path")
    t.add_argument("--lr", type=float, help="learning rate (default: 2e-4)")
    t.add_argument("--patch", type=int, help="patch size (default: 128)")
    t.add_argument("--stride", type=int, help="patch stride (default: 64)")
    t.add_argument("--batch", type=int, help="patches per step (default: 1)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--data", help="dataset directory")
    e.add_argument("--ckpt", help="checkpoint to run on every scene")
    e.add_argument("--pred", help="directory of <id>.pfm predictions (instead of --ckpt)")
    e.add_argument("--config", help="config file; model keys must match the checkpoint")
    e.add_argument("--domains", help="comma list from mu,pu,l (default: all)")
    e.add_argument("--report-out", dest="report_out", help="report directory (default: report)")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("merge", help="merge one scene folder with a trained model")
    m.add_argument("--scene", help="scene directory")
    m.add_argument("--ckpt", help="checkpoint path")
    m.add_argument("--out", help="output PFM (a mu-law PNG preview is written next to it)")
    m.add_argument("--config", help="config file; model keys must match the checkpoint")
    m.set_defaults(func=cmd_merge)

    c = sub.add_parser("grad-check", help="finite-difference check of all backward passes")
    c.add_argument("--config", help="config file with model keys")
    c.add_argument("--tol", type=float, help="max relative error (default: 1e-4)")
    c.add_argument("--seeds", type=int, help="number of seeds (default: 3)")
    c.add_argument("--size", help="input size HxW (default: 8x8)")
    c.set_defaults(func=cmd_grad_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"sctnet: error: {e}", file=sys.stderr)
        return 2
    except (DataError, CheckpointError, SchemaError, ConfigError, OSError,
            FloatingPointError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
