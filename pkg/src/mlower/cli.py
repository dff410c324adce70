"""Command-line front door: compile, run, verify, dump-ecg.

Exit codes: 0 on success (and verification pass), 1 on verification failure,
2 on usage or validation errors. Every failure prints a machine-parseable
first line of the form ``error: <code>: <detail>``.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .dtypes import DType, format_f32
from .errors import FileAccessError, MlowerError
from .graph import dump_ecg, load_profile
from .models import TrainedModel, parse_model
from .oracle import oracle_predict
from .passes import PASS_ORDER
from .pipeline import DEFAULT_TOLERANCE, CompileResult, compile_model
from .runtime import dump_plan, execute
from .tensor import Tensor, read_csv_text, write_csv_text
from . import kernels


def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise FileAccessError(f"cannot read {path!r}: {e}") from None


def _load_model(path: str) -> TrainedModel:
    return parse_model(_read_text(path))


def _parse_passes(spec: str | None) -> tuple[str, ...]:
    if spec is None:
        return PASS_ORDER
    parts = tuple(p for p in (s.strip() for s in spec.split(",")) if p)
    unknown = set(parts) - set(PASS_ORDER)
    if unknown:
        raise MlowerError(f"unknown pass flags: {','.join(sorted(unknown))}")
    return parts


def _compile(args) -> CompileResult:
    model = _load_model(args.model)
    profile = load_profile(args.profile)
    return compile_model(model, profile, _parse_passes(args.passes))


def _as_float32_csv(t: Tensor) -> str:
    if t.dtype != DType.FLOAT32:
        t = kernels.cast(t, DType.FLOAT32)
    return write_csv_text(t)


def _boundary_rows(model: TrainedModel) -> list[list[float]]:
    """One row per comparison threshold, holding that feature exactly at it."""
    rows = [[0.0] * model.n_features]
    for feature, threshold in model.thresholds():
        row = [0.0] * model.n_features
        row[feature] = threshold
        rows.append(row)
    return rows


def _verify_inputs(model: TrainedModel, args) -> Tensor:
    if args.input:
        return read_csv_text(_read_text(args.input), model.n_features)
    rng = np.random.default_rng(args.seed)
    random_rows = rng.uniform(-10.0, 10.0, size=(args.random, model.n_features))
    rows = np.asarray(_boundary_rows(model) + random_rows.tolist(), dtype=np.float32)
    return Tensor.from_dense(rows, DType.FLOAT32)


def _divergence(compiled: np.ndarray, expected: np.ndarray) -> tuple[float, float]:
    if compiled.size == 0:
        return 0.0, 0.0
    diff = np.abs(compiled - expected)
    denom = np.maximum(np.abs(expected), 1.0)
    return float(diff.max()), float((diff / denom).max())


def cmd_compile(args) -> int:
    result = _compile(args)
    if args.dump_passes:
        sys.stdout.write("# optimized graph\n")
        sys.stdout.write(dump_ecg(result.ecg_post))
    sys.stdout.write(dump_plan(result.plan))
    for report in result.reports:
        sys.stdout.write(str(report) + "\n")
    return 0


def cmd_run(args) -> int:
    result = _compile(args)
    x = read_csv_text(_read_text(args.input), result.model.n_features)
    out = execute(result.plan, x)
    text = _as_float32_csv(out)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args) -> int:
    result = _compile(args)
    x = _verify_inputs(result.model, args)
    got = execute(result.plan, x).to_numpy().astype(np.float64)
    want = np.asarray(oracle_predict(result.model, x.rows()), dtype=np.float64)
    abs_div, rel_div = _divergence(got, want)
    classifier = result.model.is_classifier
    ok = abs_div == 0.0 if classifier else rel_div <= DEFAULT_TOLERANCE
    sys.stdout.write(
        f"verify: rows={x.shape[0]} outputs={got.shape[1] if got.ndim > 1 else 1} "
        f"mode={'exact' if classifier else 'tolerance'}\n"
    )
    sys.stdout.write(f"max_abs_divergence={format_f32(abs_div)}\n")
    sys.stdout.write(f"max_rel_divergence={format_f32(rel_div)}\n")
    sys.stdout.write(f"result: {'PASS' if ok else 'FAIL'} (tolerance {DEFAULT_TOLERANCE})\n")
    return 0 if ok else 1


def cmd_dump_ecg(args) -> int:
    result = _compile(args)
    sys.stdout.write("# before optimization\n")
    sys.stdout.write(dump_ecg(result.ecg_pre))
    sys.stdout.write("# after optimization\n")
    sys.stdout.write(dump_ecg(result.ecg_post))
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--profile", default="cpu-avx2", help="builtin profile name or JSON path")
    p.add_argument("--passes", default=None, help="comma-separated subset of re,dr,sor")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlower",
        description="Compile trained classical-ML models to tensor graphs and run them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a model, print the kernel plan and pass reports")
    _add_common(p)
    p.add_argument("--dump-passes", action="store_true",
                   help="also print the optimized graph the passes produced")
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("run", help="compile, execute on a CSV batch, write predictions")
    _add_common(p)
    p.add_argument("--input", required=True, help="input CSV path")
    p.add_argument("--output", default=None, help="output CSV path (stdout if omitted)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("verify", help="compare the compiled path against the scalar oracle")
    _add_common(p)
    p.add_argument("--input", default=None, help="input CSV (overrides --random)")
    p.add_argument("--random", type=int, default=1000, help="number of random rows")
    p.add_argument("--seed", type=int, default=0, help="random input seed")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("dump-ecg", help="print the graph before and after optimization")
    _add_common(p)
    p.set_defaults(fn=cmd_dump_ecg)

    return parser


def run_cli(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        return args.fn(args)
    except MlowerError as e:
        sys.stderr.write(f"error: {e.code}: {e}\n")
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
