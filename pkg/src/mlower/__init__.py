"""mlower: lower trained classical-ML models to tensor operator graphs.

Trees, forests, linear models and feature scalers are translated into chains
of tensor operators (the tree family via a matmul/argmax encoding), organized
into a typed operator graph, rewritten by accuracy-preserving passes, and
executed on a built-in dense/sparse interpreter. A separate scalar oracle
provides ground truth for equivalence testing.
"""

from .dtypes import DType, dtype_join
from .errors import MlowerError
from .graph import BUILTIN_PROFILES, HardwareProfile, build_ecg, dump_ecg, load_profile, validate_ecg
from .models import TrainedModel, parse_model, serialize_model
from .oracle import oracle_predict
from .pipeline import DEFAULT_TOLERANCE, CompileResult, compile_model, predict
from .runtime import dump_plan, execute, translate
from .tensor import Tensor, read_csv_text, write_csv_text

__all__ = [
    "BUILTIN_PROFILES",
    "CompileResult",
    "DEFAULT_TOLERANCE",
    "DType",
    "HardwareProfile",
    "MlowerError",
    "Tensor",
    "TrainedModel",
    "build_ecg",
    "compile_model",
    "dtype_join",
    "dump_ecg",
    "dump_plan",
    "execute",
    "load_profile",
    "oracle_predict",
    "parse_model",
    "predict",
    "read_csv_text",
    "serialize_model",
    "translate",
    "validate_ecg",
    "write_csv_text",
]
