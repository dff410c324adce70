"""End-to-end compilation: model -> operator reps -> graph -> passes -> plan."""

from __future__ import annotations

from dataclasses import dataclass

from .convert import convert_model
from .dtypes import DType
from .errors import ValidationError
from .graph import BUILTIN_PROFILES, Ecg, HardwareProfile, build_ecg, validate_ecg
from .models import TrainedModel
from .passes import PASS_ORDER, PassReport, run_pipeline
from .runtime import KernelPlan, execute, translate
from .tensor import Tensor

# Accuracy budget for float outputs of the compiled path vs. the oracle.
DEFAULT_TOLERANCE = 1e-5

DEFAULT_PROFILE = BUILTIN_PROFILES["cpu-avx2"]


@dataclass(frozen=True)
class CompileResult:
    model: TrainedModel
    ecg_pre: Ecg
    ecg_post: Ecg
    reports: tuple[PassReport, ...]
    plan: KernelPlan


def compile_model(
    model: TrainedModel,
    profile: HardwareProfile = DEFAULT_PROFILE,
    passes: tuple[str, ...] = PASS_ORDER,
) -> CompileResult:
    reps = convert_model(model)
    g = build_ecg(reps, (model.n_features, DType.FLOAT32))
    problems = validate_ecg(g)
    if problems:
        raise ValidationError("converter produced an invalid graph: " + "; ".join(problems))
    optimized, reports = run_pipeline(g, profile, passes)
    plan = translate(optimized)
    return CompileResult(model=model, ecg_pre=g, ecg_post=optimized,
                         reports=tuple(reports), plan=plan)


def predict(compiled: CompileResult, x: Tensor) -> Tensor:
    return execute(compiled.plan, x)
