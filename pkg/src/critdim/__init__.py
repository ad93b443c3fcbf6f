"""Semiparametric profile M-estimation at the critical dimension.

Profile estimators, the non-asymptotic Fisher/Wilks bound calculator, three
contrast models (a Gaussian baseline and two bump counterexamples) and a
seeded Monte Carlo harness for the ``p^2/n`` and ``p^3/n`` transitions.
"""

__version__ = "0.1.0"

from .core import (
    BlockSplit,
    InformationBlocks,
    JointParameter,
    LocalSet,
    ScoreMap,
    dbreve_squared,
    efficient_score,
    identifiability_nu,
    local_ball_contains,
)
from .errors import (
    ConfigInvalid,
    CritdimError,
    EmptyGroup,
    InsufficientSamples,
    NoLocalMaximizer,
    NonFinite,
    NotPositiveDefinite,
    SchemaMismatch,
    SingularNuisanceInformation,
)
from .harness import ExperimentRecord, SweepConfig, aggregate, run_replicate, sweep
from .models import ModelKind, ModelSpec, Observation, sample_observation
from .optimize import lambda_max, maximize_constrained, maximize_full, profile_result, tau
from .rng import replicate_seed
from .stats import chi_square_cdf, ks_distance
from .theory import (
    ConditionConstants,
    beta_n,
    breve_constants,
    check_large_n,
    entropy_term,
    estimate_r0,
    spread,
    theorem_bounds,
)
