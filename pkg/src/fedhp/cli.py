"""Command-line front end: ``fedhp generate | tune | bench``.

Settings come from an optional TOML file (``--config``) whose sections
mirror the subcommands; command-line flags override file values::

    seed = 7
    [space]
    dims = [{name = "lr", lower = 0.001, upper = 0.5}, {name = "momentum", lower = 0.5, upper = 0.99}]
    [generate]
    clients = 10
    heterogeneity = 0.1
    [tune]
    strategy = "pf-dbscan"
    preset = "test"
    granularity = 0.15
    min_pts = 4
    [approx]
    divide_iterations = 6
    compare_df = 3
    compare_dg = 3

Errors print a JSON object on stderr and exit with 2 (input), 3 (protocol)
or 4 (numeric).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import approx, mhe
from .approx import CompareConfig, DivideConfig
from .ckks import scheme as S
from .ckks.context import context_for
from .combine import CombineStrategy
from .errors import FedHPError, InputError, ReportFormatError
from .hpdata import DEFAULT_SPACE, HPSpace, generate_synthetic_lho, load_reports, write_reports
from .protocols import ProtocolConfig, Session, run_protocol

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("fedhp")

PLAIN_STRATEGIES = CombineStrategy.KINDS
ALL_STRATEGIES = PLAIN_STRATEGIES + ("pf-mean", "pf-dbscan")
PRESETS = ("test", "n14", "n15")

BENCH_ROWS = (
    "SecKeyGen (per client)",
    "DKeyGen (pk generation)",
    "DKeyGen (ek generation)",
    "Encrypt",
    "Add",
    "Mul_ct",
    "Divide",
    "DBootstrap (protocol initialization)",
    "Compare (with bootstrapping)",
    "DDecrypt",
)

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "clients": 10,
    "heterogeneity": 0.1,
    "points_per_dim": 7,
    "strategy": "mean",
    "preset": "test",
    "granularity": 0.15,
    "min_pts": 4,
    "top_fraction": None,
    "trim_fraction": 0.1,
    "eps": None,
    "count_cap": None,
    "k_max": None,
    "divide_iterations": None,
    "compare_df": 3,
    "compare_dg": 3,
    "f_degree": 3,
    "g_degree": 5,
    "reps": 20,
}


# -- configuration ------------------------------------------------------------


def load_config(path: Optional[str]) -> tuple[dict, Optional[HPSpace]]:
    """Flatten a TOML config into option names; returns (options, space)."""
    if path is None:
        return {}, None
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"malformed config {path}: {exc}") from None
    space = HPSpace.from_dict(data.pop("space")) if "space" in data else None
    flat: dict[str, Any] = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update({k.replace("-", "_"): v for k, v in value.items()})
        else:
            flat[key.replace("-", "_")] = value
    unknown = sorted(set(flat) - set(DEFAULTS) - {"input", "out"})
    if unknown:
        raise InputError(f"unknown config keys: {unknown}")
    return flat, space


def resolve(args: argparse.Namespace) -> tuple[dict, HPSpace]:
    file_opts, space = load_config(args.config)
    opts = dict(DEFAULTS)
    opts.update(file_opts)
    opts.update({k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")})
    return opts, space or DEFAULT_SPACE


def _protocol_config(opts: dict) -> ProtocolConfig:
    iterations = opts["divide_iterations"]
    return ProtocolConfig(
        strategy=opts["strategy"],
        granularity=float(opts["granularity"]),
        min_pts=int(opts["min_pts"]),
        top_fraction=opts["top_fraction"],
        count_cap=opts["count_cap"],
        k_max=opts["k_max"],
        preset=opts["preset"],
        divide_iterations=None if iterations is None else int(iterations),
        compare=CompareConfig(int(opts["compare_df"]), int(opts["compare_dg"]),
                              int(opts["f_degree"]), int(opts["g_degree"])),
    )


# -- commands -----------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    opts, space = resolve(args)
    if not opts.get("out"):
        raise InputError("generate needs --out DIR")
    reports = generate_synthetic_lho(space, int(opts["clients"]), float(opts["heterogeneity"]),
                                     int(opts["seed"]), int(opts["points_per_dim"]))
    paths = write_reports(reports, opts["out"])
    print(json.dumps({"written": [str(p) for p in paths]}, indent=1))
    return 0


def _load_input(opts: dict, space: HPSpace):
    if opts.get("input"):
        return load_reports(opts["input"], None)
    return generate_synthetic_lho(space, int(opts["clients"]), float(opts["heterogeneity"]),
                                  int(opts["seed"]), int(opts["points_per_dim"]))


def cmd_tune(args: argparse.Namespace) -> int:
    opts, space = resolve(args)
    strategy = opts["strategy"]
    if strategy not in ALL_STRATEGIES:
        raise InputError(f"unknown strategy {strategy!r}")
    reports = _load_input(opts, space)
    space = reports[0].space
    if strategy in PLAIN_STRATEGIES:
        frac = opts["top_fraction"]
        strat = CombineStrategy(strategy, trim_fraction=float(opts["trim_fraction"]),
                                fraction=float(frac) if frac is not None else (0.1 if strategy == "dbscan" else 0.05),
                                eps=opts["eps"], min_pts=opts["min_pts"] if strategy == "dbscan" else None)
        result = strat.apply(reports)
        report = {"strategy": strategy,
                  "config": {k: opts[k] for k in ("seed", "top_fraction", "trim_fraction", "eps", "min_pts")},
                  "global_hp": result.to_dict(space)}
    else:
        cfg = _protocol_config(opts)
        session = Session.establish(len(reports), opts["preset"], int(opts["seed"]))
        outcome = run_protocol(reports, cfg, session)
        report = outcome.to_dict()
        # bootstrap count published for the original full-scale deployment
        report["reference_bootstrap_count"] = 6 if strategy == "pf-dbscan" else 0
    _emit(report, opts.get("out"))
    return 0


def _timeit(fn, reps: int) -> list[float]:
    out = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        out.append((time.perf_counter() - t0) * 1e3)
    return out


def run_bench(preset: str, clients: int, reps: int, seed: int) -> list[dict]:
    """Time the ten microbenchmark operations; one dict per row."""
    if reps < 1:
        raise InputError("reps must be >= 1")
    if clients < 1:
        raise InputError("clients must be >= 1")
    ctx = context_for(preset)
    rngs = [np.random.default_rng([seed, 3, i]) for i in range(clients)]
    crs = mhe.CommonReference(ctx, seed)
    shares = [mhe.sec_key_gen(ctx, i, r) for i, r in enumerate(rngs)]
    pk, keys = mhe.d_key_gen(ctx, shares, crs, rngs)
    ev = mhe.collective_evaluator(ctx, keys)
    data_rng = np.random.default_rng([seed, 4])
    x = S.encrypt(ctx, pk, S.encode(ctx, data_rng.uniform(0, 1, ctx.params.slots)), rngs[0])
    y = S.encrypt(ctx, pk, S.encode(ctx, data_rng.uniform(1, 50, ctx.params.slots)), rngs[0])
    nonce = iter(range(1, 1 << 30))

    def refresh(ct):
        return mhe.d_bootstrap(ctx, pk, ct, shares, crs, next(nonce), rngs)

    def keygen_ek():
        r1 = [mhe.rlk_round1(ctx, sh, crs, r) for sh, r in zip(shares, rngs)]
        agg1 = mhe.aggregate_rlk_round1(ctx, [a for a, _ in r1], clients)
        r2 = [mhe.rlk_round2(ctx, sh, u, agg1, r) for sh, (_, u), r in zip(shares, r1, rngs)]
        mhe.aggregate_rlk(ctx, agg1, r2, clients)

    low = ev.drop_to_level(x, 1)
    ops = {
        "SecKeyGen (per client)": lambda: mhe.sec_key_gen(ctx, 0, rngs[0]),
        "DKeyGen (pk generation)": lambda: mhe.aggregate_pk(
            ctx, [mhe.pk_share(ctx, sh, crs, r) for sh, r in zip(shares, rngs)], crs, clients),
        "DKeyGen (ek generation)": keygen_ek,
        "Encrypt": lambda: S.encrypt(ctx, pk, S.encode(ctx, data_rng.uniform(0, 1, 8)), rngs[0]),
        "Add": lambda: ev.add(x, x),
        "Mul_ct": lambda: ev.mul(x, x),
        "Divide": lambda: approx.divide(ev, x, y, DivideConfig(6, (1.0, 50.0))),
        "DBootstrap (protocol initialization)": lambda: refresh(low),
        "Compare (with bootstrapping)": lambda: approx.compare(ev, x, 0.5, CompareConfig(), refresh=refresh),
        "DDecrypt": lambda: mhe.d_decrypt(ctx, x, shares, rngs),
    }
    rows = []
    for name in BENCH_ROWS:
        ops[name]()  # warm-up (numba compilation, caches)
        times = _timeit(ops[name], reps)
        rows.append({"operation": name, "mean_ms": float(np.mean(times)),
                     "std_ms": float(np.std(times, ddof=1)) if reps > 1 else 0.0, "reps": reps})
        log.info("bench %-40s %.2f ms", name, rows[-1]["mean_ms"])
    return rows


def format_bench_table(rows: Sequence[dict], title: str = "") -> str:
    width = max(len(r["operation"]) for r in rows)
    lines = [title] if title else []
    lines.append(f"{'Operation':<{width}}  Mean ± Std Dev [ms]")
    lines.append("-" * (width + 22))
    for r in rows:
        lines.append(f"{r['operation']:<{width}}  {r['mean_ms']:.2f} ± {r['std_ms']:.2f}")
    return "\n".join(lines)


def cmd_bench(args: argparse.Namespace) -> int:
    opts, _ = resolve(args)
    preset, clients, reps = opts["preset"], int(opts["clients"]), int(opts["reps"])
    rows = run_bench(preset, clients, reps, int(opts["seed"]))
    print(format_bench_table(rows, f"Microbenchmarks, {clients} clients, preset {preset}"))
    if opts.get("out"):
        _write_json({"preset": preset, "clients": clients, "rows": rows}, opts["out"])
    return 0


def _write_json(obj: dict, path: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(obj, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from None


def _emit(report: dict, out: Optional[str]) -> None:
    if out:
        _write_json(report, out)
    else:
        print(json.dumps(report, indent=1))


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedhp", description="Federated hyperparameter combination.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file; flags override its values")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--preset", choices=PRESETS)
        p.add_argument("--clients", type=int)

    gen = sub.add_parser("generate", help="write synthetic LHO result files")
    common(gen)
    gen.add_argument("--heterogeneity", type=float)
    gen.add_argument("--points-per-dim", type=int, dest="points_per_dim")

    tune = sub.add_parser("tune", help="combine client HP sets")
    common(tune)
    tune.add_argument("--input", help="directory of LHO JSON files (default: synthetic)")
    tune.add_argument("--heterogeneity", type=float)
    tune.add_argument("--strategy", choices=ALL_STRATEGIES)
    tune.add_argument("--granularity", type=float)
    tune.add_argument("--min-pts", type=int, dest="min_pts")
    tune.add_argument("--top-fraction", type=float, dest="top_fraction")
    tune.add_argument("--trim-fraction", type=float, dest="trim_fraction")
    tune.add_argument("--eps", type=float)
    tune.add_argument("--count-cap", type=int, dest="count_cap")
    tune.add_argument("--divide-iterations", type=int, dest="divide_iterations")

    bench = sub.add_parser("bench", help="microbenchmark the MHE operations")
    common(bench)
    bench.add_argument("--reps", type=int)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = args.__dict__.pop("verbose")
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    commands = {"generate": cmd_generate, "tune": cmd_tune, "bench": cmd_bench}
    try:
        return commands[args.command](args)
    except FedHPError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        if isinstance(exc, ReportFormatError):
            err.update(client_id=exc.client_id, field=exc.field)
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
