"""Communication-efficient distributed mean estimation.

Clients compress d-dimensional vectors into k-value messages (coordinate
subsampling, randomized Hadamard sketches, magnitude-adaptive sampling);
the server decodes a mean estimate, optionally exploiting cross-client
correlation through an eigenvalue transform of the accumulated Gram matrix.
"""

from .calibration import (
    CalibrationResult,
    calibrate_beta,
    calibrate_beta_cached,
    exact_beta_bar,
)
from .data import (
    ClientPartition,
    Dataset,
    gen_synthetic,
    load_csv_regression,
    load_idx,
    load_idx_images,
    split_iid,
    split_noniid,
    write_idx,
)
from .errors import (
    CalibrationError,
    DegenerateTransformError,
    DimensionError,
    FormatError,
    NumericalError,
    ParameterError,
    ProtocolError,
    SketchMeanError,
    UndefinedCorrelationError,
)
from .estimators import (
    SCHEME_TAGS,
    DecoderConfig,
    EncodedMessage,
    decode_for_scheme,
    derive_subsample,
    encode_for_scheme,
    induced_decode,
    induced_encode,
    naive_rotation_decode,
    naive_rotation_encode,
    randk_decode,
    randk_encode,
    randk_spatial_decode,
    rps_decode,
    rps_decode_with_subsampling,
    srht_family_encode,
    transform_for_scheme,
    wangni_decode,
    wangni_encode,
)
from .harness import (
    MseReport,
    RankReport,
    gen_correlated_vectors,
    resolve_beta,
    run_limit_experiment,
    run_mse_experiment,
    run_rank_experiment,
    write_mse_csv,
    write_rank_csv,
)
from .linalg import (
    SHARED_CLIENT_INDEX,
    EigenDecomposition,
    SketchSeed,
    accumulate_gram,
    default_rank_tol,
    derive_sketch,
    eigh,
    fwht,
    hadamard_rows,
    sketch_row_block,
    srht_encode,
    transformed_pinv,
)
from .tasks import (
    Estimator,
    RoundRecord,
    TaskHistory,
    run_kmeans,
    run_linreg,
    run_power_iteration,
    write_task_csv,
)
from .transforms import TRANSFORM_KINDS, Transform, eval_transform, measure_correlation

__version__ = "0.1.0"
