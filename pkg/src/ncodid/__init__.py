"""Matched-pair ATET estimation with negative control outcomes."""

__version__ = "0.1.0"

from .dataset import (  # noqa: E402
    Covariate,
    CovariateSchema,
    Dataset,
    DatasetError,
    NcoSpec,
    SubmissionRecord,
    build_nco,
    compute_citation_window,
    load_dataset,
    paper_schema,
    validate_schema,
)
from .balance import categorical_smd, smd, table_one  # noqa: E402
from .matcher import (  # noqa: E402
    MatchedSample,
    MatchSpec,
    brute_force_matching,
    build_distance,
    match_dataset,
    solve_matching,
    verify_balance,
)
from .estimators import (  # noqa: E402
    EffectPoint,
    atet_did_adjusted,
    atet_did_nco,
    atet_qq,
    atet_unadjusted,
    fit_logistic,
    qq_transform,
)
from .inference import EffectEstimate, StratumSpec, bootstrap_ci, overlap_report, stratified_estimates  # noqa: E402
from .dgp import DgpConfig, generate, population_atet, true_atet  # noqa: E402
