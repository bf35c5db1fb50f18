"""Command-line entry point: ``rflaf {train,sweep,verify,synth}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .basis import KINDS
from .data import (CLASSIFICATION, REGRESSION, SyntheticTruth, exponential_scales, load_csv,
                   standardize_split, synth_target, write_csv)
from .errors import ConfigError, RflafError
from .features import Q_MODES
from .pipeline import LWS, PS, SCHEMA, PipelineConfig, excess_risk, run_scheme
from .solvers import CROSS_ENTROPY, MSE
from .sweep import DESK_POOLS, FULL_POOLS, FULL_S, SweepSpec, run_sweep, write_csv as write_sweep
from .verify import SUITES, run_suite

log = logging.getLogger("rflaf")

EXIT_FAIL = 1
EXIT_USAGE = 2


def truth_path(dataset) -> Path:
    """Sidecar JSON holding the generating truth of a synthetic CSV."""
    return Path(dataset).with_suffix(".truth.json")


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_data_args(p):
    p.add_argument("--dataset", required=True, help="CSV file with a header row")
    p.add_argument("--label", default="y", help="label column (default: y)")
    p.add_argument("--task", choices=[REGRESSION, CLASSIFICATION], default=REGRESSION)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--no-standardize", action="store_true",
                   help="split without rescaling columns")


def _add_model_args(p):
    p.add_argument("--config", help="JSON file with pipeline settings; flags override it")
    p.add_argument("--grid", type=int, help="number of basis functions N (default 16)")
    p.add_argument("--basis", choices=KINDS, help="basis family (default rbf)")
    p.add_argument("--lambda", dest="lam", type=float, help="leverage ridge (default 1/sqrt(n))")
    p.add_argument("--lambda0", dest="lam0", type=float, help="sensing penalty (default 1e-3)")
    p.add_argument("--lambda-star", dest="lam_star", type=float,
                   help="final ridge (default 1/sqrt(n))")
    p.add_argument("--q-mode", choices=Q_MODES, help="importance weight convention")
    p.add_argument("--epochs", type=int, help="SGD epochs (default 30)")
    p.add_argument("--lr", type=float, help="SGD learning rate (default 1e-3)")
    p.add_argument("--batch-size", type=int, help="SGD batch size (default 32)")
    p.add_argument("--radius-scale", type=float, help="multiplier on the coefficient radius")
    p.add_argument("--cold-start", action="store_true",
                   help="re-initialise the activation before the final fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rflaf", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit one model and write a JSON report")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--scheme", choices=[PS, LWS], default=LWS)
    p.add_argument("--S", type=int, default=100, help="number of final features")
    p.add_argument("--pool-size", type=int, default=3000, help="pool size s for lws")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report path (default: stdout)")

    p = sub.add_parser("sweep", help="grid over schemes, S and seeds; CSV output")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--schemes", default=f"{LWS},{PS}")
    p.add_argument("--S", dest="S_values", type=_int_list, default=list(FULL_S),
                   help="comma-separated feature counts")
    p.add_argument("--pool-size", dest="pool_sizes", type=_int_list,
                   help="comma-separated pool sizes (default 300,500)")
    p.add_argument("--full-scale", action="store_true", help="pool sizes 3000,5000")
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--timing", action="store_true", help="add a wall-clock column")
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("verify", help="run a numerical verification suite")
    p.add_argument("suite", choices=sorted(SUITES) + ["all"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the JSON report here as well")

    p = sub.add_parser("synth", help="write a synthetic regression CSV and its truth")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--M", type=int, default=64, help="planted features")
    p.add_argument("--activation", default="cos", choices=["cos", "sin", "tanh", "identity"])
    p.add_argument("--noise", type=float, default=0.01, help="noise variance")
    p.add_argument("--decay", type=float, default=None,
                   help="geometric decay of input scales (default isotropic)")
    p.add_argument("--seed", type=int, default=0)
    return parser


def make_config(args, **fixed) -> PipelineConfig:
    if args.config:
        try:
            cfg = PipelineConfig.from_dict(json.loads(Path(args.config).read_text()))
        except FileNotFoundError:
            raise ConfigError(f"config not found: {args.config}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config {args.config}: {exc}") from None
    else:
        cfg = PipelineConfig()
    top = {k: getattr(args, src) for k, src in
           [("n_grid", "grid"), ("basis_kind", "basis"), ("lam", "lam"), ("lam0", "lam0"),
            ("lam_star", "lam_star"), ("q_mode", "q_mode")] if getattr(args, src) is not None}
    sgd = {k: getattr(args, src) for k, src in
           [("epochs", "epochs"), ("learning_rate", "lr"), ("batch_size", "batch_size"),
            ("radius_scale", "radius_scale")] if getattr(args, src) is not None}
    if args.cold_start:
        top["warm_start"] = False
    if args.task == CLASSIFICATION:
        top["loss"] = CROSS_ENTROPY
    return replace(cfg, sgd=replace(cfg.sgd, **sgd), **top, **fixed)


def load_split(args):
    ds = load_csv(args.dataset, args.label, args.task)
    return standardize_split(ds, args.test_fraction, args.split_seed,
                             standardize=not args.no_standardize)


def cmd_train(args) -> int:
    train, test = load_split(args)
    cfg = make_config(args, S=args.S, s=args.pool_size, seed=args.seed)
    model, report = run_scheme(args.scheme, train, test, cfg)
    out = json.loads(report.to_json())
    out["config"] = cfg.to_dict()
    out["dataset"] = str(args.dataset)
    sidecar = truth_path(args.dataset)
    if sidecar.exists() and cfg.loss == MSE and args.no_standardize:
        truth = SyntheticTruth.load(sidecar)
        out["excess_risk"] = excess_risk(model.predict, truth, 10000, [args.seed, 1])
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"{args.scheme} S={report.S}: train {report.train_loss:.5g}, "
              f"test {report.test_loss:.5g} -> {args.out}")
    else:
        print(text)
    return 0


def cmd_sweep(args) -> int:
    train, test = load_split(args)
    pools = args.pool_sizes or list(FULL_POOLS if args.full_scale else DESK_POOLS)
    spec = SweepSpec([s.strip() for s in args.schemes.split(",") if s.strip()],
                     args.S_values, pools, args.seeds, str(args.dataset), make_config(args))
    rows = run_sweep(spec, train, test)
    write_sweep(rows, args.out, timing=args.timing)
    failed = [r for r in rows if r["kind"] == "cell" and r["status"] != "ok"]
    for r in rows:
        if r["kind"] == "summary" and r["n_ok"]:
            print(f"{r['scheme']:>3} S={r['S']:<5} s={r['s'] or '-':<5} mean={r['mean']:.5g} "
                  f"80% CI=[{r['ci_lo']:.5g}, {r['ci_hi']:.5g}]")
    if failed:
        print(f"{len(failed)} of {len(rows)} cells failed; see {args.out}", file=sys.stderr)
        return EXIT_FAIL
    return 0


def cmd_verify(args) -> int:
    names = sorted(SUITES) if args.suite == "all" else [args.suite]
    results = []
    for name in names:
        kwargs = {} if name in ("activation_fit", "lws_vs_ps") else {"seed": args.seed}
        res = run_suite(name, **kwargs)
        print(res.line(), flush=True)
        results.append(res)
    ok = all(r.passed for r in results)
    report = {"schema": SCHEMA, "passed": ok, "suites": [r.to_dict() for r in results]}
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
    if not ok:
        failures = {"schema": SCHEMA, "failed": [r.to_dict() for r in results if not r.passed]}
        print(json.dumps(failures), file=sys.stderr)
        return EXIT_FAIL
    return 0


def cmd_synth(args) -> int:
    scales = None if args.decay is None else exponential_scales(args.d, args.decay)
    truth = SyntheticTruth.random(args.d, args.M, args.activation, args.noise, args.seed,
                                  x_scales=scales)
    ds = synth_target(truth, args.n, args.seed + 1)
    write_csv(ds, args.out)
    truth.save(truth_path(args.out))
    print(f"wrote {args.n} rows to {args.out} and truth to {truth_path(args.out)}")
    return 0


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "verify": cmd_verify, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RflafError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
