"""Exact smoothing by dense Cholesky factorization of the full conditional."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cone import symmetrize
from .model import DegenerateModelError, check_valid, joint_information


@dataclass(frozen=True)
class ExactMarginals:
    means: tuple
    covariances: tuple


def exact_smooth(model, evidence):
    check_valid(model)
    J, h = joint_information(model, evidence)
    try:
        cf = scipy.linalg.cho_factor(J, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateModelError("joint precision is singular") from exc
    mu = scipy.linalg.cho_solve(cf, h)
    cov = scipy.linalg.cho_solve(cf, np.eye(J.shape[0]))
    n = model.state_dim
    means = tuple(mu[k * n:(k + 1) * n] for k in range(model.num_nodes))
    covs = tuple(
        symmetrize(cov[k * n:(k + 1) * n, k * n:(k + 1) * n]) for k in range(model.num_nodes)
    )
    return ExactMarginals(means, covs)


def exact_smooth_cut(model, evidence, cut_edge_index):
    return exact_smooth(model.cut(cut_edge_index), evidence)
