"""Clusters-of-Centres: homogeneity testing and clustering of distributed estimators."""

from .errors import CocError, ConvergenceError, NumericalError, SingularMatrixError, ValidationError
from .summaries import AggregatedEstimate, Block, CentreSummary, Partition, aee_aggregate, validate_summary
from .mixture import ChiSquareMixture, MonteCarloConfig
from .hypotests import TestResult, build_H, global_homogeneity_test, integration_test, local_power
from .clustering import CocTrace, RoundSet, cyclic_coc, multi_round_coc, n_max, one_shot_coc, stop_window
from .models import Dataset, GlmFitter, RobustFitter, RobustLoss, UstatFitter, fit_glm, fit_robust, fit_ustat
from .resampling import SchemeConfig, make_roundset

__version__ = "0.1.0"
