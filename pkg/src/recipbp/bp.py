"""Gaussian belief propagation on the single-loop hidden reciprocal model.

Message conventions, with indices mod N+1:

* ``state.forward[k]`` is the clockwise message ``k-1 -> k``; it is computed
  from edge ``k-1``, the evidence at ``k-1`` and ``forward[k-1]``.
* ``state.backward[k]`` is the anticlockwise message ``k+1 -> k``; it is
  computed from edge ``k``, the evidence at ``k+1`` and ``backward[k+1]``.

Messages are unnormalized information-form Gaussians, so no normalization
constants are carried.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .cone import PD_RTOL, symmetrize
from .model import check_evidence, check_valid, evidence_messages

DIVERGENCE_NORM = 1e12


class SingularityError(ArithmeticError):
    """A matrix that must be inverted is (numerically) singular."""

    def __init__(self, message, index=None, direction=None):
        super().__init__(message)
        self.index = index
        self.direction = direction


class DegenerateBeliefError(ArithmeticError):
    def __init__(self, node):
        super().__init__(f"belief precision at node {node} is not positive definite")
        self.node = node


@dataclass(frozen=True)
class Message:
    j: np.ndarray
    h: np.ndarray

    @classmethod
    def uninformative(cls, n, eps=0.0):
        return cls(eps * np.eye(n), np.zeros(n))


@dataclass(frozen=True)
class BpState:
    forward: tuple
    backward: tuple
    iteration: int = 0

    @classmethod
    def initial(cls, num_nodes, n, eps=0.0):
        msgs = tuple(Message.uninformative(n, eps) for _ in range(num_nodes))
        return cls(msgs, msgs, 0)


@dataclass(frozen=True)
class BpConfig:
    max_iterations: int = 1000
    tolerance: float = 1e-10
    init_precision: float = 0.0
    damping: float = 0.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.init_precision < 0:
            raise ValueError("init_precision must be >= 0")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class Belief:
    j_hat: np.ndarray
    h_hat: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    max_delta_j: float
    max_delta_h: float
    forward_norms: tuple
    backward_norms: tuple


@dataclass(frozen=True)
class ConvergenceStatus:
    """Outcome of :func:`run`.

    ``iterations`` counts the parallel updates needed to reach the fixed point;
    the final update that confirmed convergence is not counted, but it is
    included in ``updates`` and in the trace.
    """

    status: str  # "converged", "max_iterations" or "diverged"
    iterations: int
    updates: int
    final_delta: float

    @property
    def converged(self):
        return self.status == "converged"


@dataclass
class BpResult:
    beliefs: list
    trace: list
    status: ConvergenceStatus
    state: BpState = field(repr=False)


def schur_update(a, b, s, index=None, direction=None):
    """``a - b s^{-1} b^T``, symmetrized; ``s`` must be positive definite.

    Shared kernel of the message recursions and of the loop-map stages, so the
    two agree bitwise.
    """
    w = scipy.linalg.eigvalsh(s)
    if not w[0] > PD_RTOL * max(abs(w[0]), abs(w[-1])):
        raise SingularityError(
            f"singular matrix in {direction or 'precision'} update at index {index}"
            f" (lambda_min={w[0]:.3g})",
            index,
            direction,
        )
    cf = scipy.linalg.cho_factor(s)
    return symmetrize(a - b @ scipy.linalg.cho_solve(cf, b.T)), cf


def forward_step(edge, evidence, incoming, index=None):
    """Clockwise message over ``edge`` = (k-1, k), marginalizing ``x_{k-1}``."""
    if edge.decoupled:
        return Message(np.array(edge.p22), np.zeros(edge.p22.shape[0]))
    s = edge.p11 + evidence.j + incoming.j
    b = edge.p12.T
    j, cf = schur_update(edge.p22, b, s, index, "forward")
    h = -b @ scipy.linalg.cho_solve(cf, evidence.h + incoming.h)
    return Message(j, h)


def backward_step(edge, evidence, incoming, index=None):
    """Anticlockwise message over ``edge`` = (k, k+1), marginalizing ``x_{k+1}``."""
    if edge.decoupled:
        return Message(np.array(edge.p11), np.zeros(edge.p11.shape[0]))
    s = edge.p22 + evidence.j + incoming.j
    b = edge.p12
    j, cf = schur_update(edge.p11, b, s, index, "backward")
    h = -b @ scipy.linalg.cho_solve(cf, evidence.h + incoming.h)
    return Message(j, h)


def _forward_message(model, ev, k, incoming):
    e = (k - 1) % model.num_nodes
    return forward_step(model.edges[e], ev[e], incoming, e)


def _backward_message(model, ev, k, incoming):
    L = model.num_nodes
    return backward_step(model.edges[k], ev[(k + 1) % L], incoming, k)


def _damp(new, old, gamma):
    if gamma == 0.0:
        return new
    return Message((1 - gamma) * new.j + gamma * old.j, (1 - gamma) * new.h + gamma * old.h)


def parallel_iteration(model, ev, state, config=BpConfig()):
    """One Jacobi sweep: all 2(N+1) messages from the frozen previous state."""
    L = model.num_nodes
    fwd = tuple(
        _damp(_forward_message(model, ev, k, state.forward[(k - 1) % L]), state.forward[k],
              config.damping)
        for k in range(L)
    )
    bwd = tuple(
        _damp(_backward_message(model, ev, k, state.backward[(k + 1) % L]), state.backward[k],
              config.damping)
        for k in range(L)
    )
    return BpState(fwd, bwd, state.iteration + 1)


def sequential_sweep(model, ev, state):
    """Gauss-Seidel sweep: clockwise messages in order 1..N,0 and anticlockwise
    messages in order N-1..0,N, each using the freshest neighbour."""
    L = model.num_nodes
    fwd = list(state.forward)
    for k in list(range(1, L)) + [0]:
        fwd[k] = _forward_message(model, ev, k, fwd[(k - 1) % L])
    bwd = list(state.backward)
    for k in list(range(L - 2, -1, -1)) + [L - 1]:
        bwd[k] = _backward_message(model, ev, k, bwd[(k + 1) % L])
    return BpState(tuple(fwd), tuple(bwd), state.iteration + 1)


def _rel_change(new, old):
    return np.linalg.norm(new - old) / (1.0 + np.linalg.norm(new))


def message_delta(new, old):
    """Largest relative change of any directed message: (delta_J, delta_h)."""
    dj = dh = 0.0
    for a, b in zip(new.forward + new.backward, old.forward + old.backward):
        dj = max(dj, _rel_change(a.j, b.j))
        dh = max(dh, _rel_change(a.h, b.h))
    return float(dj), float(dh)


def _diverged(state):
    for msg in state.forward + state.backward:
        nj = np.linalg.norm(msg.j)
        if not np.isfinite(nj) or nj > DIVERGENCE_NORM or not np.all(np.isfinite(msg.h)):
            return True
    return False


def belief(node_msg, left, right, k=None):
    """Belief at a node from its evidence message and the two incoming messages."""
    j_hat = symmetrize(node_msg.j + left.j + right.j)
    h_hat = node_msg.h + left.h + right.h
    try:
        cf = scipy.linalg.cho_factor(j_hat)
    except np.linalg.LinAlgError as exc:
        raise DegenerateBeliefError(k) from exc
    mean = scipy.linalg.cho_solve(cf, h_hat)
    cov = symmetrize(scipy.linalg.cho_solve(cf, np.eye(j_hat.shape[0])))
    return Belief(j_hat, h_hat, mean, cov)


def beliefs(model, ev, state):
    return [
        belief(ev[k], state.forward[k], state.backward[k], k) for k in range(model.num_nodes)
    ]


def run(model, evidence, config=BpConfig(), step=None):
    """Iterate until the message change drops below ``config.tolerance``.

    ``step`` selects the schedule (default :func:`parallel_iteration`).
    Returns a :class:`BpResult`; beliefs are empty when the run diverged.
    """
    check_valid(model)
    check_evidence(model, evidence)
    ev = evidence_messages(model, evidence)
    if step is None:
        def step(state):
            return parallel_iteration(model, ev, state, config)
    state = BpState.initial(model.num_nodes, model.state_dim, config.init_precision)
    trace = []
    status = "max_iterations"
    delta = float("inf")
    for _ in range(config.max_iterations):
        new = step(state)
        dj, dh = message_delta(new, state)
        delta = max(dj, dh)
        trace.append(TraceRow(
            new.iteration, dj, dh,
            tuple(float(np.linalg.norm(m.j)) for m in new.forward),
            tuple(float(np.linalg.norm(m.j)) for m in new.backward),
        ))
        state = new
        if _diverged(state):
            status = "diverged"
            break
        if delta <= config.tolerance:
            status = "converged"
            break
    iterations = state.iteration - 1 if status == "converged" else state.iteration
    result_status = ConvergenceStatus(status, iterations, state.iteration, delta)
    bel = [] if status == "diverged" else beliefs(model, ev, state)
    return BpResult(bel, trace, result_status, state)


def run_on_cut_loop(model, evidence, cut_edge_index, config=BpConfig()):
    """BP on the chain left after removing edge(s) ``cut_edge_index``; exact there."""
    return run(model.cut(cut_edge_index), evidence, config)


def sequential_run(model, evidence, config=BpConfig()):
    ev = evidence_messages(model, evidence)
    return run(model, evidence, config, step=lambda s: sequential_sweep(model, ev, s))

