"""Hidden reciprocal models: pairwise Gaussian MRFs on the discrete circle.

Node ``k`` carries a hidden state ``x_k`` (dimension n) and an observation
``y_k`` (dimension m). Edge ``k`` couples ``(x_k, x_{k+1 mod N+1})``; the last
edge closes the loop. The unnormalized joint density is

    prod_k exp(-1/2 [x_k; x_{k+1}]^T P_edge_k [x_k; x_{k+1}])
  * prod_k exp(-1/2 [x_k; y_k]^T P_node_k [x_k; y_k])

Gaussians are written in information form ``exp(-1/2 x^T J x + h^T x)``.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .cone import is_pos_def, is_symmetric, min_eigenvalue, symmetrize

PSD_ATOL = 1e-10
DELTA = 0.1


class ModelError(ValueError):
    """Raised for malformed models or evidence."""


class DegenerateModelError(ArithmeticError):
    """Raised when an assembled precision matrix is not positive definite."""


def _frozen(x, ndim):
    a = np.array(x, dtype=np.float64)
    if ndim == 2 and a.ndim == 1 and a.size == 0:
        a = a.reshape(0, 0)
    if a.ndim != ndim:
        raise ModelError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


def block(p11, p12, p22):
    return np.block([[p11, p12], [p12.T, p22]])


@dataclass(frozen=True)
class EdgePotential:
    """Quadratic potential on a pair of neighbouring hidden states."""

    p11: np.ndarray
    p12: np.ndarray
    p22: np.ndarray

    def __post_init__(self):
        for name in ("p11", "p12", "p22"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 2))

    @property
    def matrix(self):
        return block(self.p11, self.p12, self.p22)

    @property
    def decoupled(self):
        return not np.any(self.p12)

    @classmethod
    def zero(cls, n):
        z = np.zeros((n, n))
        return cls(z, z, z)


@dataclass(frozen=True)
class NodePotential:
    """Quadratic potential coupling a hidden state to its observation."""

    p11: np.ndarray
    p12: np.ndarray
    p22: np.ndarray

    def __post_init__(self):
        for name in ("p11", "p12", "p22"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 2))

    @property
    def matrix(self):
        return block(self.p11, self.p12, self.p22)


@dataclass(frozen=True)
class EvidenceMessage:
    """Information-form message from an observation to its hidden node."""

    j: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "j", _frozen(self.j, 2))
        object.__setattr__(self, "h", _frozen(self.h, 1))


@dataclass(frozen=True)
class Evidence:
    observations: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "observations", tuple(_frozen(y, 1) for y in self.observations)
        )

    def __len__(self):
        return len(self.observations)

    def stacked(self):
        return np.concatenate(self.observations)


@dataclass(frozen=True)
class Violation:
    kind: str  # "model", "edge" or "node"
    index: int | None
    message: str

    def __str__(self):
        where = self.kind if self.index is None else f"{self.kind} {self.index}"
        return f"{where}: {self.message}"


@dataclass(frozen=True)
class CyclicModel:
    """N+1 hidden nodes on a circle; ``edges[k]`` joins ``k`` and ``k+1 mod N+1``.

    Construction does not validate; call :func:`validate` for a list of
    invariant violations.
    """

    num_nodes: int
    state_dim: int
    obs_dim: int
    edges: tuple
    nodes: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def neighbors(self, k):
        L = self.num_nodes
        return ((k - 1) % L, (k + 1) % L)

    def edge_endpoints(self, e):
        return (e, (e + 1) % self.num_nodes)

    def cut(self, edge_indices):
        """Copy of the model with the interaction across the given edge(s) removed.

        The cross block is zeroed; the diagonal blocks stay as node-local
        terms, so cutting an already decoupled edge changes nothing. Cutting
        one edge of the loop leaves a chain, on which BP is exact.
        """
        if np.isscalar(edge_indices):
            edge_indices = [edge_indices]
        edges = list(self.edges)
        for e in edge_indices:
            if not 0 <= e < self.num_nodes:
                raise ModelError(f"cut edge index {e} out of range")
            old = edges[e]
            edges[e] = EdgePotential(old.p11, np.zeros_like(old.p12), old.p22)
        return replace(self, edges=tuple(edges))

    def rotated(self, shift):
        """Relabel node ``k`` as ``k + shift mod N+1``."""
        L = self.num_nodes
        order = [(k - shift) % L for k in range(L)]
        return replace(
            self,
            edges=tuple(self.edges[i] for i in order),
            nodes=tuple(self.nodes[i] for i in order),
        )


def validate(model):
    """Return the list of invariant violations (empty for a valid model)."""
    out = []
    n, m, L = model.state_dim, model.obs_dim, model.num_nodes
    if L < 3:
        out.append(Violation("model", None, f"num_nodes={L} < 3"))
    if n < 1 or m < 1:
        out.append(Violation("model", None, "state_dim and obs_dim must be >= 1"))
    if len(model.edges) == L - 1:
        out.append(Violation("model", None, f"loop not closed: edge ({L - 1},0) missing"))
    elif len(model.edges) != L:
        out.append(Violation("model", None, f"expected {L} edges, got {len(model.edges)}"))
    if len(model.nodes) != L:
        out.append(Violation("model", None, f"expected {L} nodes, got {len(model.nodes)}"))

    shapes_ok = True
    for e, edge in enumerate(model.edges):
        if not (edge.p11.shape == edge.p12.shape == edge.p22.shape == (n, n)):
            out.append(Violation("edge", e, "block shapes do not match state_dim"))
            shapes_ok = False
            continue
        for name in ("p11", "p22"):
            if not is_symmetric(getattr(edge, name)):
                out.append(Violation("edge", e, f"{name} not symmetric"))
        if min_eigenvalue(symmetrize(edge.matrix)) < -PSD_ATOL:
            out.append(Violation("edge", e, "edge potential not PSD"))
    for k, node in enumerate(model.nodes):
        if node.p11.shape != (n, n) or node.p12.shape != (n, m) or node.p22.shape != (m, m):
            out.append(Violation("node", k, "block shapes do not match state/obs dims"))
            shapes_ok = False
            continue
        if not is_symmetric(node.p11) or min_eigenvalue(node.p11) < -PSD_ATOL:
            out.append(Violation("node", k, "p11 not symmetric PSD"))
        if not is_symmetric(node.p22) or not is_pos_def(node.p22):
            out.append(Violation("node", k, "p22 not PD"))

    if shapes_ok and len(model.edges) == L and len(model.nodes) == L and L >= 1 and n >= 1:
        J = joint_precision(model)
        if not is_pos_def(J):
            out.append(Violation("model", None, "joint precision of x given y not PD"))
    return out


def check_valid(model):
    v = validate(model)
    if v:
        raise ModelError("; ".join(str(x) for x in v))


def check_evidence(model, evidence):
    if len(evidence) != model.num_nodes:
        raise ModelError(
            f"evidence has {len(evidence)} observations, model has {model.num_nodes} nodes"
        )
    for k, y in enumerate(evidence.observations):
        if y.shape != (model.obs_dim,):
            raise ModelError(f"observation {k} has shape {y.shape}, expected ({model.obs_dim},)")


def evidence_message(node, y):
    """Information contributed to ``x`` by the node potential at fixed ``y``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (node.p12.shape[1],):
        raise ModelError(f"observation shape {y.shape} does not match p12 {node.p12.shape}")
    return EvidenceMessage(node.p11, -node.p12 @ y)


def evidence_messages(model, evidence):
    check_evidence(model, evidence)
    return tuple(evidence_message(nd, y) for nd, y in zip(model.nodes, evidence.observations))


def joint_precision(model):
    """Precision of x given y (does not depend on the observed values)."""
    n, L = model.state_dim, model.num_nodes
    J = np.zeros((L * n, L * n))
    for k, node in enumerate(model.nodes):
        J[k * n:(k + 1) * n, k * n:(k + 1) * n] += node.p11
    for e, edge in enumerate(model.edges):
        i, j = model.edge_endpoints(e)
        si, sj = slice(i * n, (i + 1) * n), slice(j * n, (j + 1) * n)
        J[si, si] += edge.p11
        J[sj, sj] += edge.p22
        J[si, sj] += edge.p12
        J[sj, si] += edge.p12.T
    return J


def joint_information(model, evidence):
    """Full conditional information form ``(J_full, h_full)`` of x given y."""
    msgs = evidence_messages(model, evidence)
    J = joint_precision(model)
    if not is_pos_def(J):
        raise DegenerateModelError("joint precision of x given y is not positive definite")
    h = np.concatenate([msg.h for msg in msgs])
    return J, h


def joint_xy_precision(model):
    """Precision of the stacked vector ``(x_0..x_N, y_0..y_N)``."""
    n, m, L = model.state_dim, model.obs_dim, model.num_nodes
    Q = np.zeros((L * (n + m), L * (n + m)))
    Q[:L * n, :L * n] = joint_precision(model)
    off = L * n
    for k, node in enumerate(model.nodes):
        sx = slice(k * n, (k + 1) * n)
        sy = slice(off + k * m, off + (k + 1) * m)
        Q[sx, sy] = node.p12
        Q[sy, sx] = node.p12.T
        Q[sy, sy] = node.p22
    return Q


def log_potential(model, x, y):
    """Log of the product of all potentials at hidden path ``x`` (L, n), obs ``y`` (L, m)."""
    total = 0.0
    for e, edge in enumerate(model.edges):
        i, j = model.edge_endpoints(e)
        z = np.concatenate([x[i], x[j]])
        total -= 0.5 * z @ edge.matrix @ z
    for k, node in enumerate(model.nodes):
        z = np.concatenate([x[k], y[k]])
        total -= 0.5 * z @ node.matrix @ z
    return total


def sample(model, seed, count):
    """Exact joint draws of (hidden path, evidence); zero-mean Gaussian.

    Returns a list of ``(x, Evidence)`` with ``x`` of shape (num_nodes, state_dim).
    """
    check_valid(model)
    n, m, L = model.state_dim, model.obs_dim, model.num_nodes
    Q = joint_xy_precision(model)
    try:
        C = scipy.linalg.cholesky(Q, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateModelError("joint (x, y) precision is not positive definite") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((Q.shape[0], count))
    # Q = C C^T, so C^{-T} z has covariance Q^{-1}
    draws = scipy.linalg.solve_triangular(C, z, lower=True, trans="T")
    out = []
    for s in range(count):
        d = draws[:, s]
        x = d[:L * n].reshape(L, n)
        y = d[L * n:].reshape(L, m)
        out.append((x, Evidence(tuple(y))))
    return out


def _random_pd(rng, d):
    A = rng.standard_normal((d, d))
    return symmetrize(A.T @ A + DELTA * np.eye(d))


def _random_orthogonal(rng, d):
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    return Q * np.sign(np.diag(R))


def random_model(num_nodes, state_dim, obs_dim, coupling_strength, seed):
    """Random valid hidden reciprocal model.

    Edge diagonal blocks are ``A^T A + 0.1 I``. The cross block is
    ``s * L1 K L2^T`` with ``p11 = L1 L1^T``, ``p22 = L2 L2^T``, ``K`` orthogonal
    and ``s = coupling_strength``, so the edge potential has whitened
    eigenvalues ``1 +- s`` and stays PSD for ``s < 1``.

    Node potentials come from a linear observation ``y = C x + v`` with noise
    precision ``R``: ``p11 = C^T R C``, ``p12 = -C^T R``, ``p22 = R``.
    """
    if num_nodes < 3:
        raise ModelError(f"num_nodes must be >= 3, got {num_nodes}")
    if not 0.0 <= coupling_strength < 1.0:
        raise ModelError(f"coupling_strength must lie in [0, 1), got {coupling_strength}")
    n, m = state_dim, obs_dim
    rng = np.random.default_rng(seed)
    edges = []
    for _ in range(num_nodes):
        p11 = _random_pd(rng, n)
        p22 = _random_pd(rng, n)
        K = _random_orthogonal(rng, n)
        L1 = np.linalg.cholesky(p11)
        L2 = np.linalg.cholesky(p22)
        p12 = coupling_strength * (L1 @ K @ L2.T)
        edges.append(EdgePotential(p11, p12, p22))
    nodes = []
    for _ in range(num_nodes):
        C = rng.standard_normal((m, n))
        R = _random_pd(rng, m)
        nodes.append(NodePotential(symmetrize(C.T @ R @ C), -C.T @ R, R))
    return CyclicModel(num_nodes, n, m, tuple(edges), tuple(nodes))


def uniform_model(num_nodes, edge, node):
    """Node-transitive model: the same edge and node potential everywhere."""
    n = edge.p11.shape[0]
    m = node.p22.shape[0]
    return CyclicModel(num_nodes, n, m, (edge,) * num_nodes, (node,) * num_nodes)
