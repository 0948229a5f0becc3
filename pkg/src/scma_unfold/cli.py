"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 config/validation error,
3 runtime numeric failure. The resolved configuration is echoed to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .codec import CodebookError, load_codebook
from .mpa import NumericalError
from .ser import DetectorFailure

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(Exception):
    pass


def _bool(text: str) -> bool:
    t = str(text).lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--codebook", default=None, help="codebook JSON (default: shipped 6x4 M=4)")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default=None)
    common.add_argument("--config", default=None, help="JSON file of flag values; flags override it")

    p = _Parser(prog="scma-unfold", description="SCMA detection with MPA and an unfolded network")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("codebook", parents=[common], help="validate and describe a codebook")

    t = sub.add_parser("train", parents=[common], help="train the unfolded detector")
    t.add_argument("--blocks", type=int, default=4)
    t.add_argument("--snr-db", type=float, default=16.0)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--steps", type=int, default=2000)
    t.add_argument("--tie-a", type=_bool, default=False)
    t.add_argument("--log", default=None, help="loss CSV (default: next to the checkpoint)")

    s = sub.add_parser("sweep", parents=[common], help="Monte-Carlo SER over an SNR grid")
    s.add_argument("--detector", required=True,
                   choices=["mpa-maxlog", "mpa-sp", "nn", "ml-oracle", "random-guess"])
    s.add_argument("--iters", "--blocks", dest="iters", type=int, default=4)
    s.add_argument("--ckpt", default=None)
    s.add_argument("--snr-start", type=float, default=0.0)
    s.add_argument("--snr-stop", type=float, default=21.0)
    s.add_argument("--snr-step", type=float, default=3.0)
    s.add_argument("--min-errors", type=int, default=100)
    s.add_argument("--max-trials", type=int, default=10**7, help="channel uses per SNR point")

    v = sub.add_parser("verify-equivalence", parents=[common],
                       help="all-ones network vs max-log MPA on random inputs")
    v.add_argument("--blocks", type=int, default=4)
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)

    g = sub.add_parser("gradcheck", parents=[common], help="backward vs central finite differences")
    g.add_argument("--blocks", type=int, default=2)
    g.add_argument("--probes", type=int, default=50)
    g.add_argument("--h", type=float, default=1e-5, help=argparse.SUPPRESS)
    return p


def parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            overrides = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(overrides, dict):
            raise ConfigError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(k.replace("-", "_") for k in overrides) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in overrides.items()})
        args = parser.parse_args(argv)
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return args


def cmd_codebook(args) -> int:
    cb = load_codebook(args.codebook)
    g = cb.graph
    lines = [f"J={cb.J} K={cb.K} M={cb.M}", "F ="]
    lines += ["  " + " ".join(str(v) for v in row) for row in g.F]
    for k in range(g.K):
        lines.append(f"V({k + 1}) = {{{', '.join(str(j + 1) for j in g.V[k])}}}  dc={len(g.V[k])}")
    for j in range(g.J):
        lines.append(f"C({j + 1}) = {{{', '.join(str(k + 1) for k in g.C[j])}}}  dv={len(g.C[j])}")
    for j, en in enumerate(cb.user_energy()):
        lines.append(f"energy user {j + 1}: {en:.12f}")
    lines.append(f"signal power per resource: {cb.signal_power():.12f}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import TrainConfig, train

    cfg = TrainConfig(T=args.blocks, lr=args.lr, steps=args.steps, train_snr_db=args.snr_db, seed=args.seed,
                      tie_a_across_blocks=args.tie_a)
    cb = load_codebook(args.codebook)
    out = Path(args.out or "checkpoint.json")
    log_csv = Path(args.log) if args.log else out.with_name(out.stem + "_loss.csv")
    res = train(cb, cfg, checkpoint=out, log_csv=log_csv)
    print(f"initial loss {res.losses[0]:.6f}, final loss {res.losses[-1]:.6f}; "
          f"wrote {out} ({res.params.size} parameters) and {log_csv}")
    return EXIT_OK


def _detector(args, cb):
    from .ser import MLDetector, MPADetector, NetworkDetector, RandomGuessDetector
    from .unfolded import load_checkpoint

    if args.detector == "nn":
        if not args.ckpt:
            raise ConfigError("the nn detector needs --ckpt")
        return NetworkDetector(load_checkpoint(args.ckpt, cb.graph))
    if args.iters < 1:
        raise ConfigError("--iters must be >= 1")
    return {
        "mpa-maxlog": lambda: MPADetector(args.iters, "max-log"),
        "mpa-sp": lambda: MPADetector(args.iters, "sum-product"),
        "ml-oracle": MLDetector,
        "random-guess": RandomGuessDetector,
    }[args.detector]()


def cmd_sweep(args) -> int:
    from .ser import SweepConfig, csv_text, run_sweep

    cfg = SweepConfig(args.snr_start, args.snr_stop, args.snr_step, args.min_errors, args.max_trials, args.seed,
                      args.workers)
    cb = load_codebook(args.codebook)
    results = run_sweep([_detector(args, cb)], cb, cfg)
    _emit(csv_text(results), args.out)
    return EXIT_OK


def cmd_verify_equivalence(args) -> int:
    from .unfolded import init_all_ones, verify_equivalence

    if args.samples < 1 or args.blocks < 1:
        raise ConfigError("--samples and --blocks must be >= 1")
    cb = load_codebook(args.codebook)
    params = init_all_ones(cb.graph, args.blocks)
    if args.perturb:
        params.wI[0, 0] += args.perturb
    rep = verify_equivalence(cb, args.blocks, args.samples, args.seed, params=params)
    ok = rep.passed(1e-9)
    print(f"{'PASS' if ok else 'FAIL'}: max relative logit deviation {rep.max_rel_dev:.3e} over {rep.samples} "
          f"samples (worst: seed={args.seed} sample={rep.worst_sample} snr_db={rep.worst_snr_db:g})")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_gradcheck(args) -> int:
    from .training import gradcheck

    if args.probes < 1 or args.blocks < 1:
        raise ConfigError("--probes and --blocks must be >= 1")
    cb = load_codebook(args.codebook)
    rep = gradcheck(cb, args.blocks, args.probes, args.seed, h=args.h)
    ok = rep.passed(1e-4)
    print(f"{'PASS' if ok else 'FAIL'}: max relative error {rep.max_rel_err:.3e} over {len(rep.probes)} probes "
          f"({rep.skipped_ties} skipped at ties)")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "codebook": cmd_codebook,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "verify-equivalence": cmd_verify_equivalence,
    "gradcheck": cmd_gradcheck,
}


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = parse(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"resolved_config": vars(args)}, sort_keys=True), file=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CodebookError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DetectorFailure as exc:
        print(f"detector failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(exc.__cause__, NumericalError) else EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
