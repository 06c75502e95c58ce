"""Lyapunov exponents of products of large iid random matrices."""

__version__ = "0.1.0"

from .chain import (  # noqa: E402
    ChainConfig,
    ExponentEstimate,
    least_exponent_distance,
    orthocomplement_vector,
    second_exponent_pair,
    spectrum_qr,
    top_exponent,
    wedge_volume_2,
)
from .ensembles import (  # noqa: E402
    EnsembleSpec,
    Family,
    RngStream,
    sample_matrix,
    shift_cocycle_matrix,
    symplectic_matrix,
)
from .kernels import BACKEND  # noqa: E402
from .stats import (  # noqa: E402
    EstimatorKind,
    SpectrumReport,
    TailCurve,
    deviation_rate_fit,
    digamma,
    increment_diagnostics,
    newman_exponents,
    ssb_exponent,
    tail_curve,
)
from .structure import (  # noqa: E402
    LcdQuery,
    LcdResult,
    joint_lcd,
    lcd,
    lcd_net,
    membership_S,
    small_ball_estimate,
)
