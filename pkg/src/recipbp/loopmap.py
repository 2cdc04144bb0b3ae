"""The message-precision recursion as a map on the PD cone.

Each clockwise stage is ``psi(J) = A - B (C + J)^{-1} B^T`` and going once
around the loop composes all N+1 stages. Tools here check order
preservation, positivity of the linearization, Hilbert-metric contraction,
and include normalized power iteration for the linear positive case.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bp import SingularityError, schur_update
from .cone import DomainError, hilbert_dist_orthant, hilbert_dist_psd, is_pos_def, min_eigenvalue, symmetrize
from .model import check_valid

MONOTONE_TOL = 1e-9
CONE_TOL = 1e-10


@dataclass(frozen=True)
class PrecisionMap:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def dim(self):
        return self.a.shape[0]

    def __call__(self, j):
        return apply_map(self, j)


@dataclass(frozen=True)
class SignFlippedMap:
    """``a + b (c + J)^{-1} b^T``: order reversing, used as a negative control."""

    base: PrecisionMap

    @property
    def dim(self):
        return self.base.dim

    def __call__(self, j):
        m = self.base
        return symmetrize(m.a + m.b @ np.linalg.solve(m.c + j, m.b.T))


@dataclass(frozen=True)
class ComposedLoopMap:
    stages: tuple
    direction: str = "forward"

    @property
    def dim(self):
        return self.stages[0].dim

    def __call__(self, j):
        return apply_composed(self, j)


@dataclass
class ContractionReport:
    fixed_point: np.ndarray | None = None
    iterations: int = 0
    converged: bool = False
    residual: float = float("nan")
    frobenius_deltas: list = field(default_factory=list)
    hilbert_to_fixed_point: list = field(default_factory=list)
    ratios: list = field(default_factory=list)  # (pair_id, ratio)
    degenerate_pairs: list = field(default_factory=list)
    skipped_pairs: list = field(default_factory=list)
    iterates: list = field(default_factory=list, repr=False)

    @property
    def ratio_values(self):
        return np.array([r for _, r in self.ratios])

    def ratio_summary(self):
        r = self.ratio_values
        if r.size == 0:
            return {"count": 0, "max": None, "mean": None, "contraction_factor": None}
        return {
            "count": int(r.size),
            "max": float(r.max()),
            "mean": float(r.mean()),
            # empirical Lipschitz constant over the sampled pairs
            "contraction_factor": float(r.max()),
        }


def extract_maps(model, ev, direction="forward"):
    """Per-edge precision maps, ordered as they are applied around the loop.

    Clockwise: stage ``k`` maps ``J_{k-1,k}`` to ``J_{k,k+1}`` with
    ``A = P_k(2,2)``, ``B = P_k(1,2)^T``, ``C = P_k(1,1) + P_kk(1,1)``;
    the composition takes ``J_{N,0}`` back to itself.
    Anticlockwise: stages run over edges N..0 with ``A = P_k(1,1)``,
    ``B = P_k(1,2)``, ``C = P_k(2,2) + P_{k+1,k+1}(1,1)``; the composition
    takes ``J_{1,0}`` back to itself.
    """
    check_valid(model)
    L = model.num_nodes
    if direction == "forward":
        stages = tuple(
            PrecisionMap(e.p22, e.p12.T, e.p11 + ev[k].j) for k, e in enumerate(model.edges)
        )
    elif direction == "backward":
        stages = tuple(
            PrecisionMap(model.edges[k].p11, model.edges[k].p12,
                         model.edges[k].p22 + ev[(k + 1) % L].j)
            for k in range(L - 1, -1, -1)
        )
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return ComposedLoopMap(stages, direction)


def apply_map(m, j, index=None):
    if not np.any(m.b):
        return np.array(m.a)
    return schur_update(m.a, m.b, m.c + j, index, "stage")[0]


def apply_composed(cm, j):
    for i, stage in enumerate(cm.stages):
        j = apply_map(stage, j, index=i)
    return j


def trajectory(cm, j):
    """Inputs seen by each stage on one pass around the loop, plus the output."""
    points = [j]
    for i, stage in enumerate(cm.stages):
        points.append(apply_map(stage, points[-1], index=i))
    return points


def derivative(m, j, delta):
    """Directional derivative ``B (C+J)^{-1} Delta (C+J)^{-1} B^T`` of one stage."""
    g = np.linalg.solve(m.c + j, m.b.T).T  # B (C+J)^{-1}
    return symmetrize(g @ delta @ g.T)


def composed_derivative(cm, j, delta):
    """Chain rule through all stages."""
    for stage in cm.stages:
        delta = derivative(stage, j, delta)
        j = apply_map(stage, j)
    return delta


def iterate_to_fixed_point(cm, j0, tol=1e-10, max_iter=500):
    """Iterate ``J <- Psi(J)`` until ``||dJ||_F <= tol (1 + ||J||_F)``."""
    j = symmetrize(np.asarray(j0, dtype=np.float64))
    if min_eigenvalue(j) < -CONE_TOL:
        raise DomainError("initial precision must be PSD")
    iterates = [j]
    report = ContractionReport()
    for t in range(1, max_iter + 1):
        nxt = cm(j)
        d = float(np.linalg.norm(nxt - j))
        report.frobenius_deltas.append(d)
        iterates.append(nxt)
        converged = d <= tol * (1.0 + np.linalg.norm(j))
        j = nxt
        if converged:
            report.converged = True
            break
    report.iterations = t
    report.fixed_point = j
    report.iterates = iterates
    report.residual = float(np.linalg.norm(cm(j) - j) / (1.0 + np.linalg.norm(j)))
    # metric only defined on the cone interior; None marks singular iterates
    fp_pd = is_pos_def(j)
    report.hilbert_to_fixed_point = [
        hilbert_dist_psd(x, j) if fp_pd and is_pos_def(x) else None for x in iterates
    ]
    return report


def random_pd(rng, n, scale=1.0):
    G = rng.standard_normal((n, n))
    return symmetrize(scale * (G @ G.T / n + 0.1 * np.eye(n)))


def random_psd(rng, n, rank=None):
    if rank is None:
        rank = int(rng.integers(1, n + 1))
    G = rng.standard_normal((n, rank))
    return symmetrize(G @ G.T)


def random_increment(rng, n):
    """PSD increment with Frobenius norm in [0.1, 10], so that order checks
    at a fixed tolerance are never decided by a vanishing step."""
    d = random_psd(rng, n)
    return d * (rng.uniform(0.1, 10.0) / np.linalg.norm(d))


@dataclass
class MonotoneReport:
    trials: int
    passes: int
    worst_margin: float  # smallest lambda_min(psi(J2) - psi(J1)) seen
    violations: list

    @property
    def pass_rate(self):
        return self.passes / self.trials if self.trials else 1.0


def check_monotone(fn, trials=1000, seed=0, tol=MONOTONE_TOL):
    """Sample ``J1`` PD and ``J2 = J1 + Delta`` with ``Delta`` PSD; check
    ``fn(J1) <= fn(J2)`` in the PSD order."""
    rng = np.random.default_rng(seed)
    n = fn.dim
    passes, worst, bad = 0, np.inf, []
    for t in range(trials):
        j1 = random_pd(rng, n)
        j2 = j1 + random_increment(rng, n)
        margin = min_eigenvalue(fn(j2) - fn(j1))
        worst = min(worst, margin)
        if margin >= -tol:
            passes += 1
        else:
            bad.append((t, margin))
    return MonotoneReport(trials, passes, float(worst), bad)


@dataclass
class PositivityReport:
    trials: int
    cone_passes: int
    worst_min_eig: float
    fd_passes: int
    worst_fd_ratio: float  # largest error / tolerance; <= 1 passes
    fd_errors: list = field(default_factory=list)


def differential_positivity_check(m, j, trials=1000, seed=0, eps=1e-5, fd_trials=None):
    """Check the linearization of ``m`` at ``j``.

    Cone invariance: ``Dpsi(J)[Delta]`` is PSD for random PSD ``Delta``.
    Derivative formula: central differences agree with the analytic
    derivative within ``5 eps ||Delta||_F^2 kappa``, where
    ``kappa = ||B||_2^2 ||(C+J)^{-1}||_2^3`` is the scale of the second
    derivative of one stage, plus a floor ``10 u s / eps`` for the
    cancellation in the difference quotient (``u`` unit roundoff, ``s`` the
    size of the terms being subtracted).
    """
    rng = np.random.default_rng(seed)
    n = m.dim
    s = m.c + j
    if not is_pos_def(s):
        raise DomainError("c + j must be positive definite")
    s_inv = np.linalg.norm(np.linalg.inv(s), 2)
    kappa = np.linalg.norm(m.b, 2) ** 2 * s_inv ** 3
    scale = np.linalg.norm(m.a) + np.linalg.norm(m.b, 2) ** 2 * s_inv
    rounding = 10 * np.finfo(float).eps * scale / eps
    # batched: trials random PSD directions of random rank
    G = rng.standard_normal((trials, n, n))
    G *= np.arange(n) < rng.integers(1, n + 1, size=(trials, 1, 1))
    g = np.linalg.solve(s, m.b.T).T
    d = g @ (G @ G.transpose(0, 2, 1)) @ g.T
    lam = np.linalg.eigvalsh(0.5 * (d + d.transpose(0, 2, 1)))[:, 0] if trials else np.array([])
    cone_passes = int(np.sum(lam >= -CONE_TOL))
    worst = float(lam.min()) if trials else np.inf
    fd_passes, worst_ratio, errs = 0, 0.0, []
    fd_trials = trials if fd_trials is None else fd_trials
    for _ in range(fd_trials):
        delta = symmetrize(rng.standard_normal((n, n)))
        fd = (m(j + eps * delta) - m(j - eps * delta)) / (2 * eps)
        err = float(np.linalg.norm(fd - derivative(m, j, delta)))
        tol = 5 * eps * np.linalg.norm(delta) ** 2 * kappa + rounding
        errs.append(err)
        ratio = err / tol if tol > 0 else (0.0 if err == 0 else np.inf)
        worst_ratio = max(worst_ratio, ratio)
        fd_passes += ratio <= 1.0
    return PositivityReport(trials, int(cone_passes), float(worst), int(fd_passes),
                            float(worst_ratio), errs)


def contraction_diagnostics(cm, pairs=100, seed=0, points=None, degenerate_tol=1e-12):
    """Ratios ``d_H(Psi X, Psi Y) / d_H(X, Y)`` over random PD pairs.

    Pairs on a common ray (``d_H = 0``) are reported as degenerate; pairs
    whose images leave the cone interior are skipped. Both are excluded
    from the ratios.
    """
    rng = np.random.default_rng(seed)
    n = cm.dim
    if points is None:
        points = [(random_pd(rng, n, rng.uniform(0.1, 10)),
                   random_pd(rng, n, rng.uniform(0.1, 10))) for _ in range(pairs)]
    report = ContractionReport()
    for pid, (x, y) in enumerate(points):
        d0 = hilbert_dist_psd(x, y)
        if d0 <= degenerate_tol:
            report.degenerate_pairs.append(pid)
            continue
        try:
            fx, fy = cm(x), cm(y)
        except SingularityError:
            report.skipped_pairs.append(pid)
            continue
        if not (is_pos_def(fx) and is_pos_def(fy)):
            report.skipped_pairs.append(pid)
            continue
        report.ratios.append((pid, hilbert_dist_psd(fx, fy) / d0))
    return report


@dataclass
class PerronResult:
    vector: np.ndarray
    eigenvalue: float
    iterations: int
    converged: bool
    step_distances: list  # d_H(x_t, x_{t+1})
    distances_to_limit: list  # d_H(x_t, v_f)


def perron_iterate(A, x0, tol=1e-13, max_iter=10000):
    """Normalized power iteration for an elementwise-positive matrix."""
    A = np.asarray(A, dtype=np.float64)
    x = np.asarray(x0, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or x.shape != (A.shape[0],):
        raise DomainError("A must be square and x0 must match its size")
    if not np.all(A > 0):
        raise DomainError("matrix entries must be strictly positive")
    if not np.all(x > 0):
        raise DomainError("x0 must lie in the open positive orthant")
    x = x / np.linalg.norm(x)
    iterates = [x]
    steps = []
    converged = False
    for _ in range(max_iter):
        y = A @ x
        y = y / np.linalg.norm(y)
        steps.append(hilbert_dist_orthant(x, y))
        iterates.append(y)
        x = y
        if steps[-1] <= tol:
            converged = True
            break
    dist = [hilbert_dist_orthant(v, x) for v in iterates]
    lam = float(x @ A @ x)
    return PerronResult(x, lam, len(steps), converged, steps, dist)


def perron_dense(A):
    """Dominant eigenvector from a dense eigensolver, unit norm and positive."""
    w, V = scipy.linalg.eig(A)
    i = int(np.argmax(w.real))
    v = V[:, i].real
    v = v * np.sign(v.sum())
    return v / np.linalg.norm(v), float(w[i].real)
