"""Skew-normal and skew-t link models for correlated binary panels."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateTruncationError,
    DimensionLimitError,
    NotPositiveDefiniteError,
    NumericalError,
    SkewLinkError,
    ValidationError,
)
from .mvprob import (  # noqa: E402
    GaussianProblem,
    ProbEstimate,
    QMCSettings,
    StudentProblem,
    mvn_cdf,
    mvt_cdf,
    reorder_cholesky,
    std_normal_cdf,
    student_t_cdf,
)
from .skewdist import (  # noqa: E402
    SkewEllipticalParams,
    UnifiedSkewParams,
    admissible,
    delta_from_alpha,
    sample_sn,
    sample_st,
    se_cdf,
    sn_pdf,
    st_pdf,
    sun_pdf,
    sut_pdf,
)
from .truncsample import TruncationProblem, sample_tmvn, sample_tmvt  # noqa: E402
from .linkmodel import (  # noqa: E402
    ModelData,
    build_bordered_scale,
    build_sign_structure,
    generative_oracle,
    likelihood_sn,
    likelihood_st,
    posterior_params,
    sample_beta_sun,
    sample_beta_sut,
)
from .mcmc import (  # noqa: E402
    ChainConfig,
    ChainDraws,
    corr_to_theta,
    dic,
    log_jacobian,
    log_target,
    mh_step,
    run_chain,
    theta_to_corr,
)
