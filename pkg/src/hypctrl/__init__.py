"""Minimal null control times and boundary controls for 1-D linear hyperbolic systems."""

from .control import (
    FeedbackLaw,
    feedback_law,
    least_squares_control,
    obstruction_set,
    synthesize_null_control,
    verify_null_control,
)
from .errors import (
    DimensionMismatch,
    DomainError,
    HypCtrlError,
    IllConditioned,
    NearSingular,
    NoConvergence,
    NumericalFailure,
    OrderViolation,
    ParseError,
    PreconditionViolation,
    RangeError,
    SignViolation,
)
from .fields import MatrixField
from .lcu import CanonicalForm, canonical_form, is_canonical, rho_zero
from .mintime import TimeReport, inf_time, is_invariant, russell_time, sup_time, tcn_time, time_report
from .simulator import (
    Feedback,
    OpenLoop,
    SystemSpec,
    Trajectory,
    apply_boundary_transform,
    apply_diag_removal,
    simulate,
    verify_equivalence,
)
from .speeds import (
    SpeedProfile,
    characteristic,
    constant_profile,
    entry_exit_times,
    phi,
    phi_inverse,
    transport_time,
    transport_times,
    validate_profile,
    zeta,
)

__version__ = "0.1.0"
