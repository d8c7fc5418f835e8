"""Robustness of sequential recommenders to training-data removal.

Finite rank-biased overlap and friends live in :mod:`rankrobust.ranksim`;
datasets and perturbations in :mod:`rankrobust.corpus`; models in
:mod:`rankrobust.models`; evaluation in :mod:`rankrobust.metrics` and
:mod:`rankrobust.evaluation`; experiment protocols in
:mod:`rankrobust.experiment`.
"""

from ._backend import BACKEND
from .corpus import (
    Dataset,
    PerturbationSpec,
    Scenario,
    SplitDataset,
    UserSequence,
    filter_min_length,
    gen_synthetic,
    parse_foursquare,
    parse_movielens,
    perturb,
    split_leave_one_out,
)
from .ranksim import (
    RankingListPair,
    SimilarityConfig,
    SimilarityKind,
    frbo_at_k,
    jaccard,
    lerch_phi,
    max_rbo,
    min_rbo,
    rbo_at_k,
    rls,
)

__version__ = "0.1.0"
