import numpy as np
import pytest
from hypothesis import settings

from recipbp.model import EdgePotential, NodePotential, random_model, sample, uniform_model

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


def scalar_edge(p11, p12, p22):
    return EdgePotential([[p11]], [[p12]], [[p22]])


def scalar_node(p11, p12, p22=1.0):
    return NodePotential([[p11]], [[p12]], [[p22]])


@pytest.fixture
def uniform3():
    """3-node scalar loop: edges p11=p22=1, p12=-0.5; node p11=1, p12=-1."""
    return uniform_model(3, scalar_edge(1.0, -0.5, 1.0), scalar_node(1.0, -1.0, 2.0))


def model_and_evidence(num_nodes, n, coupling, seed, m=None):
    model = random_model(num_nodes, n, n if m is None else m, coupling, seed)
    _, ev = sample(model, seed + 10_000, 1)[0]
    return model, ev


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b)
