"""Command-line experiment runner: simulate, sweep, train-predictor, verify."""

from __future__ import annotations

import argparse
import itertools
import os
import sys
import time
from pathlib import Path

from .errors import CamselError
from .predictor import load_model, save_model, train_autoregressive
from .sim import POLICIES, ScenarioConfig, load_config
from .sim.episode import run_episode, run_episodes, training_sequences
from .sim.traces import summary_columns, summary_row, write_summary, write_trace

OUT_ENV = "CAMSEL_OUT"
DEFAULT_OUT = "camsel_out"


def _list(kind):
    """Parse a comma-separated list of ``kind`` values."""

    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__} values, got {text!r}")

    return parse


def out_dir(args) -> Path:
    """--out, then $CAMSEL_OUT, then ./camsel_out."""
    return Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _writable(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CamselError(f"output directory {path} is not writable: {exc.strerror}") from None
    if not os.access(path, os.W_OK):
        raise CamselError(f"output directory {path} is not writable")
    return path


def base_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if getattr(args, "slots", None) is not None:
        changes["slots"] = args.slots
    if isinstance(getattr(args, "seed", None), int):
        changes["seed"] = args.seed
    if isinstance(getattr(args, "tau", None), int):
        changes["tau"] = args.tau
    if isinstance(getattr(args, "c", None), int):
        changes["policy.C"] = args.c
    if isinstance(getattr(args, "v", None), float):
        changes["policy.V"] = args.v
    return cfg.with_updates(**changes) if changes else cfg


def cmd_simulate(args) -> int:
    cfg = base_config(args)
    predictor = load_model(args.predictor) if args.predictor else None
    trace = run_episode(args.policy, cfg, predictor=predictor, keep_details=False)
    out = _writable(out_dir(args))
    cam_path, slot_path = write_trace(trace, out)
    s = trace.summary()
    print(f"{trace.policy} seed={cfg.seed} slots={cfg.slots}: "
          + " ".join(f"{k}={v:.4g}" for k, v in s.items()))
    print(f"wrote {cam_path} and {slot_path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = base_config(args)
    out = _writable(out_dir(args))
    seeds = list(range(cfg.seed, cfg.seed + args.seeds))
    grid = itertools.product(
        args.policy or ["E3POSE", "E3POSE_MV", "SA", "RS", "ID"],
        args.c or [cfg.policy.C],
        args.e or [None],
        args.v or [cfg.policy.V],
        args.tau or [cfg.tau],
    )
    rows = []
    for policy, C, E, V, tau in grid:
        changes = {"policy.C": C, "policy.V": V, "tau": tau}
        if E is not None:
            changes["policy.E"] = (E,)
        else:  # lift the configured budget where it cannot sustain C cameras
            changes["policy.E"] = tuple(max(e, C / cfg.n_cameras) for e in cfg.policy.E)
        cell_cfg = cfg.with_updates(**changes)
        t0 = time.perf_counter()
        traces = run_episodes(policy, cell_cfg, seeds, keep_details=False)
        e_text = ";".join(f"{e:g}" for e in cell_cfg.policy.E)
        rows.append(summary_row({"policy": policy.upper(), "C": C, "E": e_text, "V": float(V), "tau": tau}, traces))
        print(f"{policy:9s} C={C} E={e_text} V={V:g} tau={tau}: mpjpe={rows[-1]['mpjpe_mm_mean']:.2f} mm "
              f"({time.perf_counter() - t0:.1f} s)")
    path = write_summary(rows, summary_columns(cfg.n_cameras, cfg.ap_thresholds), out / "summary.csv")
    print(f"wrote {path}")
    return 0


def cmd_train(args) -> int:
    cfg = base_config(args)
    p = cfg.policy
    seqs = training_sequences(cfg)
    model, loss = train_autoregressive(seqs, cfg.tau, p.ridge_lambda, cfg.history, input_noise=p.train_noise)
    out = _writable(out_dir(args))
    path = out / (args.name or "predictor.txt")
    save_model(model, path)
    print(f"trained on {len(seqs)} sequences: rollout loss {loss:.4g} mm^2 per window; wrote {path}")
    return 0


def cmd_verify(args) -> int:
    from . import verify

    ok = True
    for r in verify.run_all(quick=args.quick):
        ok &= r.passed
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.checked} cases, {r.detail}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="camsel", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, lists=False):
        p.add_argument("--config", help="scenario JSON file (defaults to built-in values)")
        p.add_argument("--slots", type=int)
        p.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else ./{DEFAULT_OUT})")
        if lists:
            p.add_argument("--seed", type=int, help="first seed")
            p.add_argument("--tau", type=_list(int), help="comma-separated values")
            p.add_argument("--c", type=_list(int), help="comma-separated values")
            p.add_argument("--v", type=_list(float), help="comma-separated values")
        else:
            p.add_argument("--seed", type=int)
            p.add_argument("--tau", type=int)
            p.add_argument("--c", type=int)
            p.add_argument("--v", type=float)

    p = sub.add_parser("simulate", help="one policy, one seed -> trace CSVs")
    common(p)
    p.add_argument("--policy", default="E3POSE", type=str.upper, choices=POLICIES)
    p.add_argument("--predictor", help="predictor file from train-predictor")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="policy x C x E x V x tau grid -> summary CSV")
    common(p, lists=True)
    p.add_argument("--policy", type=_list(str.upper), help="comma-separated policies (default: all)")
    p.add_argument("--e", type=_list(float), help="comma-separated energy budgets")
    p.add_argument("--seeds", type=int, default=3, help="seeds per cell, counting up from --seed")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train-predictor", help="fit the autoregressive predictor and save it")
    common(p)
    p.add_argument("--name", help="file name inside the output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="run the brute-force oracle suites")
    p.add_argument("--quick", action="store_true", help="fewer cases per suite")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "policy", None) and isinstance(args.policy, list):
        bad = [p for p in args.policy if p not in POLICIES]
        if bad:
            print(f"error: unknown policy {bad[0]!r}; expected one of {', '.join(POLICIES)}", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except (CamselError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
