"""Command-line entry point: calibrate, mse, rank, limit, power, kmeans, linreg.

Precedence: command-line flags override config-file keys override defaults.
Config files are flat ``key = value`` lines with ``#`` comments; keys use the
flag names with dashes or underscores. Unknown keys are rejected.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections import namedtuple
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibration import cache_path, calibrate_beta_cached, exact_beta_bar
from .data import gen_synthetic, load_csv_regression, load_idx_images, split_iid, split_noniid
from .errors import SketchMeanError
from .estimators import SCHEME_TAGS
from .harness import (
    run_limit_experiment,
    run_mse_experiment,
    run_rank_experiment,
    write_mse_csv,
    write_rank_csv,
)
from .tasks import Estimator, run_kmeans, run_linreg, run_power_iteration, write_task_csv
from .transforms import TRANSFORM_KINDS, Transform

__all__ = ["RunConfig", "UsageError", "execute", "main", "parse_config"]


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    options: dict


_Opt = namedtuple("_Opt", "type default help")

_default_workers = os.cpu_count() or 1

_SCHEME_HELP = "scheme tag (rand_k, rand_k_spatial_max/avg/opt, rps_max/avg/opt, wangni, induced, naive_rotation)"

_MSE_OPTS = {
    "scheme": _Opt(str, "rand_k", f"comma-separated list of {_SCHEME_HELP}"),
    "n": _Opt(int, 4, "number of clients"),
    "d": _Opt(int, 64, "vector dimension"),
    "k": _Opt(int, 8, "per-client budget"),
    "R": _Opt(str, "orthogonal", "correlation: orthogonal, identical, or a number in [0, n-1]"),
    "trials": _Opt(int, 1000, "Monte-Carlo trials"),
    "beta_trials": _Opt(int, 1000, "trials for normalizer calibration"),
    "vector_seed": _Opt(int, 0, "seed for the correlated vector construction"),
    "seed": _Opt(int, 0, "master seed"),
    "workers": _Opt(int, _default_workers, "parallel worker processes"),
    "out": _Opt(str, "mse.csv", "CSV output path"),
}

_RANK_OPTS = {
    "n": _Opt(int, 4, "number of clients"),
    "d": _Opt(int, 32, "vector dimension"),
    "k": _Opt(int, 8, "per-client budget"),
    "trials": _Opt(int, 10000, "Monte-Carlo trials"),
    "seed": _Opt(int, 0, "master seed"),
    "workers": _Opt(int, _default_workers, "parallel worker processes"),
    "out": _Opt(str, "rank.csv", "CSV output path"),
}

_LIMIT_OPTS = {
    "n": _Opt(int, 32, "number of clients"),
    "d": _Opt(int, 32, "vector dimension"),
    "k": _Opt(int, 8, "per-client budget (needs nk >= 4d)"),
    "trials": _Opt(int, 10000, "Monte-Carlo trials"),
    "seed": _Opt(int, 0, "master seed"),
    "workers": _Opt(int, _default_workers, "parallel worker processes"),
    "out": _Opt(str, "limit.csv", "CSV output path"),
}

_CALIBRATE_OPTS = {
    "scheme": _Opt(str, "rps_avg", _SCHEME_HELP + " or a pipeline name (rand_k, rand_k_eigen, srht)"),
    "transform": _Opt(str, "", f"transform kind for pipeline names: one of {', '.join(TRANSFORM_KINDS)}"),
    "n": _Opt(int, 4, "number of clients"),
    "d": _Opt(int, 64, "vector dimension"),
    "k": _Opt(int, 8, "per-client budget"),
    "R": _Opt(str, "", "correlation value for the opt transform"),
    "trials": _Opt(int, 1000, "calibration trials"),
    "seed": _Opt(int, 0, "master seed"),
}


def _task_opts(rounds, synthetic, extra=None):
    opts = {
        "scheme": _Opt(str, "rand_k", _SCHEME_HELP),
        "k": _Opt(int, 8, "per-client budget"),
        "clients": _Opt(int, 10, "number of clients"),
        "rounds": _Opt(int, rounds, "optimization rounds"),
        "R": _Opt(str, "", "correlation value for opt-transform schemes"),
        "beta_trials": _Opt(int, 1000, "trials for normalizer calibration"),
        "warmup": _Opt(int, 0, "estimate the normalizer online over this many first rounds"),
        "dataset": _Opt(str, "", "path to an IDX image file or a CSV file (default: synthetic)"),
        "synthetic": _Opt(str, synthetic, "synthetic dataset kind when no dataset path is given"),
        "samples": _Opt(int, 1000, "synthetic sample count"),
        "dim": _Opt(int, 32, "synthetic feature dimension"),
        "ratio": _Opt(float, 10.0, "spiked_covariance top-eigenvalue ratio"),
        "noise": _Opt(float, 0.5, "synthetic noise level"),
        "spread": _Opt(float, 5.0, "blob center spread"),
        "resize": _Opt(int, 32, "IDX images are resized to this side length"),
        "feature_count": _Opt(int, 0, "CSV: number of leading feature columns (required for CSV)"),
        "target": _Opt(str, "target", "CSV: target column name"),
        "split": _Opt(str, "iid", "client split: iid or noniid"),
        "seed": _Opt(int, 0, "master seed"),
        "out": _Opt(str, "", "CSV output path (default: <command>.csv)"),
    }
    opts.update(extra or {})
    return opts


_SPECS = {
    "calibrate": _CALIBRATE_OPTS,
    "mse": _MSE_OPTS,
    "rank": _RANK_OPTS,
    "limit": _LIMIT_OPTS,
    "power": _task_opts(rounds=30, synthetic="spiked_covariance"),
    "kmeans": _task_opts(
        rounds=10, synthetic="blobs", extra={"clusters": _Opt(int, 4, "number of centroids")}
    ),
    "linreg": _task_opts(
        rounds=50,
        synthetic="linear",
        extra={"lr": _Opt(float, 0.001, "gradient-descent learning rate")},
    ),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sketchmean",
        description="Distributed mean estimation simulator: sketched encoding, "
        "correlation-aware decoding, and task benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in _SPECS.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=argparse.SUPPRESS, help="flat key=value config file")
        for key, opt in opts.items():
            p.add_argument(
                "--" + key.replace("_", "-"),
                type=opt.type,
                default=argparse.SUPPRESS,
                dest=key,
                help=f"{opt.help} (default: {opt.default!r})",
            )
    return parser


def _read_config_file(path: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    conf = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        conf[key.strip().replace("-", "_")] = value.strip()
    return conf


def parse_config(argv) -> RunConfig:
    """Merge flags over config-file keys over defaults into a RunConfig."""
    ns = _build_parser().parse_args(argv)
    given = vars(ns)
    command = given.pop("command")
    spec = _SPECS[command]
    options = {key: opt.default for key, opt in spec.items()}
    config_file = given.pop("config", None)
    if config_file:
        for key, raw in _read_config_file(config_file).items():
            if key not in spec:
                raise UsageError(f"unknown config key {key!r} for command {command!r}")
            try:
                options[key] = spec[key].type(raw)
            except ValueError:
                raise UsageError(
                    f"config key {key!r}: cannot parse {raw!r} as {spec[key].type.__name__}"
                ) from None
    options.update(given)
    return RunConfig(command=command, options=options)


# ---------------------------------------------------------------------------
# command execution
# ---------------------------------------------------------------------------

def _parse_correlation(value: str):
    if value in ("orthogonal", "identical"):
        return value
    try:
        return float(value)
    except ValueError:
        raise UsageError(
            f"correlation must be 'orthogonal', 'identical', or a number, got {value!r}"
        ) from None


def _optional_float(value: str):
    if value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise UsageError(f"expected a number, got {value!r}") from None


def _check_scheme(tag: str) -> None:
    if tag not in SCHEME_TAGS:
        raise UsageError(
            f"unknown scheme {tag!r}; known schemes: {', '.join(sorted(SCHEME_TAGS))}"
        )


_CAL_PIPELINES = ("rand_k", "rand_k_eigen", "srht")

_TAG_PIPELINE = {
    "rand_k": ("rand_k", "one"),
    "rand_k_spatial_max": ("rand_k", "identity"),
    "rand_k_spatial_avg": ("rand_k", "avg"),
    "rand_k_spatial_opt": ("rand_k", "opt"),
    "rps_max": ("srht", "identity"),
    "rps_avg": ("srht", "avg"),
    "rps_opt": ("srht", "opt"),
}


def _cmd_calibrate(o: dict) -> int:
    scheme, n, d, k = o["scheme"], o["n"], o["d"], o["k"]
    R = _optional_float(o["R"])
    # "rand_k" names both a scheme tag and a pipeline; an explicit --transform
    # selects the pipeline reading, otherwise the tag's own transform is used
    if scheme in _CAL_PIPELINES and o["transform"]:
        pipeline, kind = scheme, o["transform"]
    elif scheme in _TAG_PIPELINE:
        pipeline, kind = _TAG_PIPELINE[scheme]
    elif scheme in _CAL_PIPELINES:
        raise UsageError(f"--transform is required when calibrating the {scheme!r} pipeline")
    else:
        raise UsageError(f"scheme {scheme!r} has no calibration constant")
    if kind == "opt" and R is None:
        raise UsageError("the opt transform needs --R")
    if kind in ("opt", "avg"):
        transform = Transform(kind, n=n, R=R)
    else:
        transform = Transform(kind)
    beta = calibrate_beta_cached(pipeline, n, d, k, transform, trials=o["trials"], master_seed=o["seed"])
    line = (
        f"{scheme}: beta_bar={beta!r} (pipeline={pipeline}, transform={transform.kind}, "
        f"n={n}, d={d}, k={k}, trials={o['trials']})"
    )
    exact = exact_beta_bar(pipeline, n, d, k, transform)
    if exact is not None:
        line += f" exact={exact!r}"
    print(line)
    print(f"cache: {cache_path()}")
    return 0


def _cmd_mse(o: dict) -> int:
    schemes = tuple(s.strip() for s in o["scheme"].split(",") if s.strip())
    if not schemes:
        raise UsageError("no schemes given")
    for scheme in schemes:
        _check_scheme(scheme)
    report = run_mse_experiment(
        schemes,
        n=o["n"],
        d=o["d"],
        k=o["k"],
        correlation=_parse_correlation(o["R"]),
        trials=o["trials"],
        master_seed=o["seed"],
        beta_trials=o["beta_trials"],
        workers=o["workers"],
        vector_seed=o["vector_seed"],
    )
    write_mse_csv(report, o["out"])
    for scheme in schemes:
        res = report.results[scheme]
        se = res.mse_std / max(1, res.trials) ** 0.5
        print(
            f"{scheme}: mse={res.mse_mean:.6g} se={se:.3g} trials={res.trials} "
            f"realized_R={report.realized_R:.6g} beta_bar={res.beta_bar:.6g}"
        )
    print(f"wrote {o['out']}")
    return 0


def _cmd_rank(o: dict) -> int:
    report = run_rank_experiment(
        o["n"], o["d"], o["k"], o["trials"], master_seed=o["seed"], workers=o["workers"]
    )
    write_rank_csv(report, o["out"])
    hist = " ".join(f"{r}:{c}" for r, c in sorted(report.counts.items()))
    print(
        f"rank(S) over {report.trials} trials (n={report.n}, d={report.d}, k={report.k}): "
        f"delta={report.delta:.6g} full_rank={report.full_rank} histogram {hist}"
    )
    print(f"wrote {o['out']}")
    return 0


def _cmd_limit(o: dict) -> int:
    report = run_limit_experiment(
        o["n"], o["d"], o["k"], o["trials"], master_seed=o["seed"], workers=o["workers"]
    )
    write_mse_csv(report, o["out"])
    ratio = report.mse_ratio("rand_k_spatial_max", "rand_k")
    for scheme in ("rand_k_spatial_max", "rand_k"):
        res = report.results[scheme]
        print(f"{scheme}: mse={res.mse_mean:.6g} trials={res.trials}")
    print(f"spatial/rand_k mse ratio: {ratio:.6g}")
    print(f"wrote {o['out']}")
    return 0


def _build_task_dataset(o: dict, command: str):
    if o["dataset"]:
        path = Path(o["dataset"])
        if not path.is_file():
            raise UsageError(f"dataset file not found: {path}")
        if path.suffix.lower() == ".csv":
            if o["feature_count"] < 1:
                raise UsageError("--feature-count is required for CSV datasets")
            return load_csv_regression(path, o["feature_count"], o["target"])
        return load_idx_images(path, o["resize"])
    kind = o["synthetic"]
    seed = o["seed"]
    if kind == "spiked_covariance":
        return gen_synthetic(kind, {"m": o["samples"], "d": o["dim"], "ratio": o["ratio"]}, seed=seed)
    if kind == "blobs":
        clusters = o.get("clusters", 4)
        centers = o["spread"] * np.random.default_rng((seed, 0xCE)).normal(size=(clusters, o["dim"]))
        return gen_synthetic(
            kind, {"centers": centers, "m": o["samples"], "noise": o["noise"]}, seed=seed
        )
    if kind == "linear":
        return gen_synthetic(kind, {"m": o["samples"], "d": o["dim"], "noise": o["noise"]}, seed=seed)
    raise UsageError(f"unknown synthetic kind {kind!r}")


def _cmd_task(o: dict, command: str) -> int:
    _check_scheme(o["scheme"])
    R = _optional_float(o["R"])
    if o["scheme"].endswith("_opt") and R is None:
        raise UsageError(f"scheme {o['scheme']!r} needs --R")
    dataset = _build_task_dataset(o, command)
    if o["split"] == "iid":
        partition = split_iid(dataset, o["clients"], seed=o["seed"])
    elif o["split"] == "noniid":
        partition = split_noniid(dataset, o["clients"], seed=o["seed"])
    else:
        raise UsageError(f"unknown split {o['split']!r}; expected iid or noniid")
    estimator = Estimator(
        o["scheme"],
        o["k"],
        R=R,
        beta_trials=o["beta_trials"],
        warmup_rounds=o["warmup"],
    )
    if command == "power":
        history = run_power_iteration(partition, estimator, o["rounds"], master_seed=o["seed"])
    elif command == "kmeans":
        history = run_kmeans(partition, estimator, o["clusters"], o["rounds"], master_seed=o["seed"])
    else:
        history = run_linreg(partition, estimator, o["rounds"], o["lr"], master_seed=o["seed"])
    out = o["out"] or f"{command}.csv"
    write_task_csv(history, out)
    cum_err = float(history.est_errors().sum())
    final_loss = history.records[-1].task_loss
    print(
        f"{history.task} {history.scheme}: rounds={len(history.records)} "
        f"cum_est_error={cum_err:.6g} final_loss={final_loss:.6g} flags={len(history.flags)}"
    )
    print(f"wrote {out}")
    return 0


def execute(config: RunConfig) -> int:
    command, o = config.command, config.options
    if command == "calibrate":
        return _cmd_calibrate(o)
    if command == "mse":
        return _cmd_mse(o)
    if command == "rank":
        return _cmd_rank(o)
    if command == "limit":
        return _cmd_limit(o)
    return _cmd_task(o, command)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        config = parse_config(argv)
    except SystemExit as exc:  # argparse prints its own usage message
        code = exc.code
        return code if isinstance(code, int) else 2
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        return execute(config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SketchMeanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
