from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import model_and_evidence, rel_err, scalar_edge
from recipbp.bp import (
    BpConfig,
    BpState,
    Message,
    SingularityError,
    backward_step,
    forward_step,
    message_delta,
    parallel_iteration,
    run,
    run_on_cut_loop,
    sequential_run,
)
from recipbp.model import (
    CyclicModel,
    EdgePotential,
    Evidence,
    EvidenceMessage,
    NodePotential,
    evidence_messages,
    random_model,
    uniform_model,
)
from recipbp.oracle import exact_smooth


def msg(j, h):
    return Message(np.array([[j]], dtype=float), np.array([h], dtype=float))


def ev1(j, h):
    return EvidenceMessage([[j]], [h])


class TestSteps:
    def test_forward_scalar(self):
        out = forward_step(scalar_edge(1.0, -1.0, 2.0), ev1(1.0, 0.0), msg(0.0, 0.0))
        assert out.j[0, 0] == pytest.approx(1.5, abs=1e-15)
        assert out.h[0] == 0.0

    def test_forward_scalar_with_potential(self):
        out = forward_step(scalar_edge(1.0, -1.0, 2.0), ev1(1.0, 2.0), msg(1.0, 1.0))
        assert out.j[0, 0] == pytest.approx(5 / 3, abs=1e-15)
        assert out.h[0] == pytest.approx(1.0, abs=1e-15)

    def test_backward_scalar(self):
        out = backward_step(scalar_edge(2.0, -1.0, 1.0), ev1(1.0, 0.0), msg(0.0, 0.0))
        assert out.j[0, 0] == pytest.approx(1.5, abs=1e-15)
        assert out.h[0] == 0.0

    @pytest.mark.parametrize("step, kept", [(forward_step, "p22"), (backward_step, "p11")])
    def test_decoupled_edge(self, step, kept):
        edge = EdgePotential(np.diag([1.0, 2.0]), np.zeros((2, 2)), np.diag([3.0, 4.0]))
        incoming = Message(np.eye(2) * 7, np.array([1.0, -2.0]))
        out = step(edge, EvidenceMessage(np.eye(2), [5.0, 6.0]), incoming)
        np.testing.assert_array_equal(out.j, getattr(edge, kept))
        np.testing.assert_array_equal(out.h, 0.0)

    def test_symmetric_edge_directions_agree(self):
        rng = np.random.default_rng(0)
        G = rng.standard_normal((2, 2))
        p = G @ G.T + np.eye(2)
        B = 0.3 * (G + G.T)
        edge = EdgePotential(p, B, p)
        e = EvidenceMessage(np.eye(2), [1.0, 2.0])
        m = Message(0.5 * np.eye(2), np.array([0.3, -0.1]))
        f, b = forward_step(edge, e, m), backward_step(edge, e, m)
        np.testing.assert_allclose(f.j, b.j, atol=1e-14)
        np.testing.assert_allclose(f.h, b.h, atol=1e-14)

    def test_transpose_placement_matters(self):
        # non-symmetric cross block: forward uses P12^T S^-1 P12
        p12 = np.array([[0.5, 0.2], [0.0, 0.1]])
        edge = EdgePotential(np.eye(2) * 2, p12, np.eye(2) * 2)
        e = EvidenceMessage(np.eye(2), [1.0, 0.0])
        out = forward_step(edge, e, Message(np.zeros((2, 2)), np.zeros(2)))
        S = np.eye(2) * 3
        np.testing.assert_allclose(out.j, 2 * np.eye(2) - p12.T @ np.linalg.inv(S) @ p12)
        np.testing.assert_allclose(out.h, -p12.T @ np.linalg.inv(S) @ [1.0, 0.0])

    def test_singular_update_reports_edge(self):
        edge = EdgePotential(np.diag([1.0, 0.0]), [[0.5, 0.0], [0.0, 0.0]], np.eye(2))
        with pytest.raises(SingularityError) as info:
            forward_step(edge, EvidenceMessage(np.zeros((2, 2)), [0.0, 0.0]),
                         Message(np.zeros((2, 2)), np.zeros(2)), index=4)
        assert info.value.index == 4


def test_parallel_iteration_three_node_scalar(uniform3):
    """Compare one and several sweeps against a plain scalar recursion."""
    ev = Evidence(([1.0], [-2.0], [0.5]))
    evm = evidence_messages(uniform3, ev)
    # scalar oracle: edge p11=p22=1, p12=-0.5; node p11=1, p12=-1 so nu_k = y_k
    y = [1.0, -2.0, 0.5]
    Jf, hf, Jb, hb = [0.0] * 3, [0.0] * 3, [0.0] * 3, [0.0] * 3
    state = BpState.initial(3, 1)
    for _ in range(4):
        nJf, nhf, nJb, nhb = [0.0] * 3, [0.0] * 3, [0.0] * 3, [0.0] * 3
        for k in range(3):
            p = (k - 1) % 3
            s = 1.0 + 1.0 + Jf[p]
            nJf[k] = 1.0 - 0.25 / s
            nhf[k] = 0.5 * (y[p] + hf[p]) / s
            q = (k + 1) % 3
            s = 1.0 + 1.0 + Jb[q]
            nJb[k] = 1.0 - 0.25 / s
            nhb[k] = 0.5 * (y[q] + hb[q]) / s
        Jf, hf, Jb, hb = nJf, nhf, nJb, nhb
        state = parallel_iteration(uniform3, evm, state)
        assert [m.j[0, 0] for m in state.forward] == pytest.approx(Jf, abs=1e-15)
        assert [m.h[0] for m in state.forward] == pytest.approx(hf, abs=1e-15)
        assert [m.j[0, 0] for m in state.backward] == pytest.approx(Jb, abs=1e-15)
        assert [m.h[0] for m in state.backward] == pytest.approx(hb, abs=1e-15)
    assert state.forward[0].j[0, 0] != 0.875  # moved past the first sweep value
    assert state.iteration == 4


def test_first_sweep_value(uniform3):
    evm = evidence_messages(uniform3, Evidence(([0.0],) * 3))
    s = parallel_iteration(uniform3, evm, BpState.initial(3, 1))
    assert all(m.j[0, 0] == 0.875 for m in s.forward)


def test_parallel_iteration_uses_frozen_state():
    model, ev = model_and_evidence(5, 2, 0.5, 3)
    evm = evidence_messages(model, ev)
    s1 = parallel_iteration(model, evm, BpState.initial(5, 2))
    s2 = parallel_iteration(model, evm, s1)
    # perturbing message k of s1 only changes messages k+1 (fwd) / k-1 (bwd) of s2
    fwd = list(s1.forward)
    fwd[2] = Message(fwd[2].j + np.eye(2), fwd[2].h + 1.0)
    s2b = parallel_iteration(model, evm, replace(s1, forward=tuple(fwd)))
    changed = [not np.array_equal(a.j, b.j) for a, b in zip(s2.forward, s2b.forward)]
    assert changed == [False, False, False, True, False]
    assert all(np.array_equal(a.j, b.j) for a, b in zip(s2.backward, s2b.backward))


def test_fixed_point_is_stationary():
    model, ev = model_and_evidence(6, 2, 0.4, 1)
    res = run(model, ev, BpConfig(tolerance=1e-14, max_iterations=500))
    evm = evidence_messages(model, ev)
    again = parallel_iteration(model, evm, res.state)
    for a, b in zip(again.forward + again.backward, res.state.forward + res.state.backward):
        np.testing.assert_allclose(a.j, b.j, atol=1e-14)
        np.testing.assert_allclose(a.h, b.h, atol=1e-13)


@pytest.mark.parametrize("seed", range(4))
def test_converged_state_moves_less_than_ten_tolerances(seed):
    model, ev = model_and_evidence(5 + seed, 2, 0.6, seed)
    cfg = BpConfig(tolerance=1e-8)
    res = run(model, ev, cfg)
    again = parallel_iteration(model, evidence_messages(model, ev), res.state)
    assert res.status.converged
    assert max(message_delta(again, res.state)) <= 10 * cfg.tolerance


def test_zero_coupling_converges_after_one_iteration():
    model, ev = model_and_evidence(5, 2, 0.0, 2)
    res = run(model, ev)
    assert res.status.converged
    assert res.status.iterations == 1
    exact = exact_smooth(model, ev)
    for b, mu, S in zip(res.beliefs, exact.means, exact.covariances):
        np.testing.assert_allclose(b.mean, mu, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(b.covariance, S, rtol=1e-12)


def test_isolated_nodes_give_evidence_posteriors():
    rng = np.random.default_rng(0)
    nodes, ys = [], []
    for _ in range(4):
        G = rng.standard_normal((2, 2))
        nodes.append(NodePotential(G @ G.T + np.eye(2), rng.standard_normal((2, 1)), [[1.0]]))
        ys.append(rng.standard_normal(1))
    model = CyclicModel(4, 2, 1, (EdgePotential.zero(2),) * 4, tuple(nodes))
    res = run(model, Evidence(tuple(ys)))
    for b, nd, y in zip(res.beliefs, nodes, ys):
        np.testing.assert_allclose(b.mean, np.linalg.solve(nd.p11, -nd.p12 @ y), rtol=1e-12)
        np.testing.assert_allclose(b.covariance, np.linalg.inv(nd.p11), rtol=1e-12)


def test_belief_invariants():
    model, ev = model_and_evidence(7, 3, 0.5, 4)
    for b in run(model, ev).beliefs:
        np.testing.assert_allclose(b.covariance @ b.j_hat, np.eye(3), atol=1e-10)
        assert np.linalg.norm(b.j_hat @ b.mean - b.h_hat) < 1e-10


def test_loop_means_exact_covariances_not():
    model, ev = model_and_evidence(6, 2, 0.6, 0)
    res = run(model, ev)
    exact = exact_smooth(model, ev)
    assert res.status.converged
    assert max(rel_err(b.mean, mu) for b, mu in zip(res.beliefs, exact.means)) <= 1e-6
    assert max(rel_err(b.covariance, S) for b, S in zip(res.beliefs, exact.covariances)) > 1e-6


@given(st.integers(0, 10_000), st.integers(3, 10), st.integers(1, 3), st.floats(0.0, 0.9))
def test_tree_exactness(seed, L, n, c):
    model, ev = model_and_evidence(L, n, c, seed)
    cut = seed % L
    res = run_on_cut_loop(model, ev, cut)
    exact = exact_smooth(model.cut(cut), ev)
    assert res.status.converged
    assert res.status.iterations <= L
    for b, mu, S in zip(res.beliefs, exact.means, exact.covariances):
        assert np.linalg.norm(b.mean - mu) <= 1e-8 * max(np.linalg.norm(mu), 1e-300)
        assert np.linalg.norm(b.covariance - S) <= 1e-8 * np.linalg.norm(S)


def test_two_node_chain_converges_within_two_iterations():
    model, ev = model_and_evidence(3, 2, 0.7, 8)
    res = run_on_cut_loop(model, ev, [1, 2])  # leaves only edge (0, 1)
    assert res.status.converged and res.status.iterations <= 2
    exact = exact_smooth(model.cut([1, 2]), ev)
    for b, mu in zip(res.beliefs, exact.means):
        np.testing.assert_allclose(b.mean, mu, rtol=1e-10)


def test_loop_covariance_error_vanishes_with_coupling():
    diffs = []
    for c in [0.6, 0.3, 0.1, 0.01]:
        model, ev = model_and_evidence(4, 2, c, 5)
        full = run(model, ev).beliefs
        exact = exact_smooth(model, ev)
        diffs.append(max(rel_err(b.covariance, S) for b, S in zip(full, exact.covariances)))
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] < 1e-6


def test_cut_and_loop_agree_as_coupling_vanishes():
    diffs = []
    for c in [0.4, 0.1, 0.01, 0.001]:
        model, ev = model_and_evidence(6, 2, c, 5)
        full = run(model, ev).beliefs
        cut = run_on_cut_loop(model, ev, 5).beliefs
        diffs.append(max(rel_err(a.covariance, b.covariance) for a, b in zip(cut, full)))
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert diffs[-1] < 1e-5


def test_schedules_share_fixed_point():
    for seed in range(5):
        model, ev = model_and_evidence(4 + seed, 2, 0.5, seed)
        cfg = BpConfig(tolerance=1e-13)
        par, seq = run(model, ev, cfg), sequential_run(model, ev, cfg)
        assert par.status.converged and seq.status.converged
        for a, b in zip(par.state.forward + par.state.backward,
                        seq.state.forward + seq.state.backward):
            np.testing.assert_allclose(a.j, b.j, atol=1e-8)
            np.testing.assert_allclose(a.h, b.h, atol=1e-8)


def test_node_transitive_symmetry():
    G = np.array([[1.0, 0.3], [0.3, 2.0]])
    edge = EdgePotential(G, -0.4 * G, G)
    node = NodePotential(np.eye(2), -np.eye(2), np.eye(2))
    model = uniform_model(5, edge, node)
    ev = Evidence((np.zeros(2),) * 5)
    evm = evidence_messages(model, ev)
    state = BpState.initial(5, 2, eps=0.3)
    for _ in range(10):
        state = parallel_iteration(model, evm, state)
        for msgs in (state.forward, state.backward):
            for m in msgs[1:]:
                np.testing.assert_array_equal(m.j, msgs[0].j)
                np.testing.assert_array_equal(m.h, msgs[0].h)


def test_damping_reaches_same_fixed_point():
    model, ev = model_and_evidence(6, 2, 0.5, 6)
    plain = run(model, ev)
    damped = run(model, ev, BpConfig(damping=0.5))
    assert damped.status.converged
    assert damped.status.iterations > plain.status.iterations
    for a, b in zip(plain.beliefs, damped.beliefs):
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-8)


def test_init_precision_does_not_change_fixed_point():
    model, ev = model_and_evidence(6, 2, 0.5, 7)
    a = run(model, ev).beliefs
    b = run(model, ev, BpConfig(init_precision=5.0)).beliefs
    for x, y in zip(a, b):
        np.testing.assert_allclose(x.covariance, y.covariance, rtol=1e-8)


def test_max_iterations_status_and_trace():
    model, ev = model_and_evidence(8, 2, 0.5, 1)
    res = run(model, ev, BpConfig(max_iterations=3))
    assert res.status.status == "max_iterations"
    assert res.status.iterations == 3
    assert [r.iteration for r in res.trace] == [1, 2, 3]
    assert len(res.trace[0].forward_norms) == 8


def test_trace_rows_match_message_delta():
    model, ev = model_and_evidence(5, 1, 0.4, 2)
    evm = evidence_messages(model, ev)
    res = run(model, ev)
    s0 = BpState.initial(5, 1)
    s1 = parallel_iteration(model, evm, s0)
    assert (res.trace[0].max_delta_j, res.trace[0].max_delta_h) == message_delta(s1, s0)


def test_singular_message_update_propagates():
    n = 2
    edge = EdgePotential(np.diag([1.0, 0.0]), [[0.5, 0.0], [0.0, 0.0]], np.eye(n))
    node = NodePotential(np.zeros((2, 2)), np.zeros((2, 1)), [[1.0]])
    model = uniform_model(3, edge, node)
    with pytest.raises(SingularityError):
        run(model, Evidence(([0.0],) * 3))


def test_config_validation():
    with pytest.raises(ValueError):
        BpConfig(tolerance=0)
    with pytest.raises(ValueError):
        BpConfig(damping=1.0)


def test_random_model_runs_are_deterministic():
    model, ev = model_and_evidence(6, 2, 0.3, 9)
    a, b = run(model, ev), run(model, ev)
    for x, y in zip(a.beliefs, b.beliefs):
        np.testing.assert_array_equal(x.mean, y.mean)
    assert random_model(6, 2, 2, 0.3, 9).edges[0].p12.tobytes() == model.edges[0].p12.tobytes()
