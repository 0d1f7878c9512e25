"""Length-compatible privacy amplification with Toeplitz hashing."""

from .bitvec import BitString, concat, slice, xor_fold, zero_extend
from .conv import (
    ConvResult,
    PrecisionPolicy,
    batch_conv_parity,
    conv_parity_exact,
    conv_parity_float,
)
from .errors import (
    BitRangeError,
    EntropyError,
    InfeasiblePlanError,
    KeyFileError,
    PAError,
    ParameterError,
    PlanError,
    PrecisionExceededError,
    SessionError,
    ShapeError,
)
from .finite_size import (
    FiniteSizeParams,
    KeyRateResult,
    collision_probability,
    compute_delta,
    compute_key_rate,
    output_length,
)
from .partition import IntermediateKey, PartitionPlan, amplify, hash_batch, plan, plan_grid, toeplitz_hash
from .toeplitz import ToeplitzSeed, hash_direct, toeplitz_entry

__version__ = "0.1.0"
