"""Forward-stepwise selection of pairwise logratios in generalized linear models."""

import json

from ._lrstep import (
    ConvergenceError,
    Dataset,
    EligibilityError,
    Error,
    FitSummary,
    IoError,
    Session,
    ValidationError,
    alr_terms,
    chi2_quantile_df1,
    close,
    creates_cycle,
    fit_glm,
    lr_values,
    normal_quantile,
    overlaps,
    penalty_per_parameter,
    replace_zeros,
    term_to_logcontrast,
)


def candidates(session, top_k=20):
    return json.loads(session.candidates_json(top_k))


def logcontrast(session):
    return json.loads(session.logcontrast_json())


def bootstrap(session, B=1000, seed=1):
    return json.loads(session.bootstrap_json(B, seed))


def scree(session):
    return json.loads(session.scree_json())


def report(session):
    return json.loads(session.report_json())


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]
