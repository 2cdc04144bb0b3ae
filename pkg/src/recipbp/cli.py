"""Command-line front end.

Subcommands: generate, smooth, exact, analyze, compare.

Output files
------------
generate  model.json, evidence.json, hidden_truth.json
smooth    beliefs.json, status.json, trace.csv
          trace.csv columns: iteration, max_delta_J, max_delta_h,
          then J_norm_fwd_<k> and J_norm_bwd_<k> (Frobenius norm of each
          directed message precision). One row per update, including the
          final update that confirmed convergence.
exact     exact.json (same schema as beliefs.json)
analyze   analysis.json, hilbert_trace.csv
          hilbert_trace.csv columns: iteration, frobenius_delta,
          hilbert_to_fixed_point (empty where an iterate is singular).
compare   report.json

Exit codes for smooth: 0 converged, 2 max iterations reached,
3 numerical error (singular update, divergence, degenerate belief).
Other failures exit with 1. Floats are printed with 17 significant digits.
"""

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import io
from .bp import BpConfig, DegenerateBeliefError, SingularityError, run
from .loopmap import (
    check_monotone,
    composed_derivative,
    contraction_diagnostics,
    differential_positivity_check,
    extract_maps,
    iterate_to_fixed_point,
    random_psd,
    trajectory,
)
from .cone import min_eigenvalue
from .model import DegenerateModelError, ModelError, evidence_messages, random_model, sample
from .oracle import exact_smooth, exact_smooth_cut

EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class ExperimentConfig:
    """Where the model and evidence come from, plus BP and analysis knobs.

    Exactly one model source (``model_path`` or ``generator``) and one
    evidence source (``evidence_path`` or ``evidence_seed``) must be set.
    """

    model_path: str | None = None
    generator: dict | None = None
    evidence_path: str | None = None
    evidence_seed: int | None = None
    bp: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    cut_edge: int | None = None
    out: str = "."

    GENERATOR_KEYS = ("num_nodes", "state_dim", "obs_dim", "coupling_strength", "seed")

    @classmethod
    def from_dict(cls, doc):
        def src(key):
            part = doc.get(key) or {}
            if not isinstance(part, dict):
                raise io.ParseError(f"config.{key}: expected an object")
            return part

        m, e = src("model"), src("evidence")
        gen = m.get("generate")
        if gen is not None:
            missing = [k for k in cls.GENERATOR_KEYS if k not in gen]
            if missing:
                raise io.ParseError(f"config.model.generate: missing {missing}")
        return cls(
            model_path=m.get("path"),
            generator=gen,
            evidence_path=e.get("path"),
            evidence_seed=e.get("sample_seed"),
            bp=dict(doc.get("bp") or {}),
            analysis=dict(doc.get("analysis") or {}),
            cut_edge=doc.get("cut_edge"),
            out=doc.get("out", "."),
        )

    def check(self, need_evidence=True):
        if (self.model_path is None) == (self.generator is None):
            raise io.ParseError("config: specify exactly one of model.path, model.generate")
        if need_evidence and (self.evidence_path is None) == (self.evidence_seed is None):
            raise io.ParseError(
                "config: specify exactly one of evidence.path, evidence.sample_seed"
            )

    def bp_config(self):
        return BpConfig(**self.bp)

    def load_model(self):
        if self.model_path is not None:
            return io.read_model(self.model_path)
        g = self.generator
        return random_model(int(g["num_nodes"]), int(g["state_dim"]), int(g["obs_dim"]),
                            float(g["coupling_strength"]), int(g["seed"]))

    def load_evidence(self, model):
        if self.evidence_path is not None:
            return io.read_evidence(self.evidence_path)
        return sample(model, int(self.evidence_seed), 1)[0][1]


def _merge_args(args):
    cfg = ExperimentConfig()
    if args.config:
        cfg = ExperimentConfig.from_dict(io.read_json(args.config))
    if getattr(args, "model", None):
        cfg.model_path, cfg.generator = args.model, None
    if getattr(args, "evidence", None):
        cfg.evidence_path, cfg.evidence_seed = args.evidence, None
    gen_flags = {
        "num_nodes": getattr(args, "num_nodes", None),
        "state_dim": getattr(args, "state_dim", None),
        "obs_dim": getattr(args, "obs_dim", None),
        "coupling_strength": getattr(args, "coupling", None),
    }
    if any(v is not None for v in gen_flags.values()) or getattr(args, "command", "") == "generate":
        gen = dict(cfg.generator or {"num_nodes": 6, "state_dim": 2, "obs_dim": 2,
                                     "coupling_strength": 0.3, "seed": 0})
        gen.update({k: v for k, v in gen_flags.items() if v is not None})
        if args.seed is not None:
            gen["seed"] = args.seed
        cfg.generator, cfg.model_path = gen, None
    if getattr(args, "evidence_seed", None) is not None:
        cfg.evidence_seed, cfg.evidence_path = args.evidence_seed, None
    for flag, key in (("max_iter", "max_iterations"), ("tol", "tolerance"),
                      ("damping", "damping"), ("init_precision", "init_precision")):
        v = getattr(args, flag, None)
        if v is not None:
            cfg.bp[key] = v
    if getattr(args, "cut_edge", None) is not None:
        cfg.cut_edge = args.cut_edge
    if args.seed is not None:
        cfg.analysis["seed"] = args.seed
    if args.out:
        cfg.out = args.out
    return cfg


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc.strerror}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


def cmd_generate(cfg):
    cfg.check(need_evidence=False)
    out = _outdir(cfg.out)
    model = cfg.load_model()
    seed = cfg.evidence_seed if cfg.evidence_seed is not None else int(cfg.generator["seed"]) + 1
    x, ev = sample(model, int(seed), 1)[0]
    io.write_json(os.path.join(out, "model.json"), io.model_to_dict(model))
    io.write_json(os.path.join(out, "evidence.json"), io.evidence_to_dict(ev))
    io.write_json(os.path.join(out, "hidden_truth.json"), {"hidden": x})
    return EXIT_OK


def _trace_rows(trace):
    for r in trace:
        yield [r.iteration, r.max_delta_j, r.max_delta_h, *r.forward_norms, *r.backward_norms]


def cmd_smooth(cfg):
    cfg.check()
    out = _outdir(cfg.out)
    model = cfg.load_model()
    ev = cfg.load_evidence(model)
    if cfg.cut_edge is not None:
        model = model.cut(cfg.cut_edge)
    L = model.num_nodes
    status_path = os.path.join(out, "status.json")
    try:
        res = run(model, ev, cfg.bp_config())
    except (SingularityError, DegenerateBeliefError, DegenerateModelError) as exc:
        io.write_json(status_path, {"status": "numerical_error", "message": str(exc)})
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    header = ["iteration", "max_delta_J", "max_delta_h"]
    header += [f"J_norm_fwd_{k}" for k in range(L)] + [f"J_norm_bwd_{k}" for k in range(L)]
    io.write_csv(os.path.join(out, "trace.csv"), header, _trace_rows(res.trace))
    st = res.status
    io.write_json(status_path, {
        "status": st.status,
        "iterations": st.iterations,
        "updates": st.updates,
        "final_delta": st.final_delta,
    })
    if st.status == "diverged":
        return EXIT_NUMERICAL
    io.write_json(os.path.join(out, "beliefs.json"), io.beliefs_to_dict(res.beliefs))
    return EXIT_OK if st.converged else EXIT_MAX_ITER


def cmd_exact(cfg):
    cfg.check()
    out = _outdir(cfg.out)
    model = cfg.load_model()
    ev = cfg.load_evidence(model)
    if cfg.cut_edge is not None:
        marg = exact_smooth_cut(model, ev, cfg.cut_edge)
    else:
        marg = exact_smooth(model, ev)
    io.write_json(os.path.join(out, "exact.json"), io.exact_to_dict(marg))
    return EXIT_OK


def _rel(a, b):
    nb = np.linalg.norm(b)
    d = np.linalg.norm(a - b)
    return float(d / nb) if nb > 0 else float(d)


def compare(first, second):
    """Per-node relative errors of ``first`` against reference ``second``."""
    _, m1, c1 = first
    _, m2, c2 = second
    if len(m1) != len(m2):
        raise ValueError(f"node count mismatch: {len(m1)} vs {len(m2)}")
    nodes = []
    for k, (a, b, A, B) in enumerate(zip(m1, m2, c1, c2)):
        if a.shape != b.shape or A.shape != B.shape:
            raise ValueError(f"dimension mismatch at node {k}")
        nodes.append({"node": k, "mean_rel_err": _rel(a, b), "cov_rel_err": _rel(A, B)})
    return {
        "first": first[0],
        "second": second[0],
        "nodes": nodes,
        "max_mean_rel_err": max(x["mean_rel_err"] for x in nodes),
        "max_cov_rel_err": max(x["cov_rel_err"] for x in nodes),
    }


def cmd_compare(first_path, second_path, out):
    report = compare(io.read_marginals(first_path), io.read_marginals(second_path))
    io.write_json(os.path.join(_outdir(out), "report.json"), report)
    return EXIT_OK


def analyze(model, ev, trials=1000, pairs=100, seed=0, tol=1e-10, max_iter=500):
    """Monotonicity, linearized positivity, contraction and fixed point of the
    clockwise loop map. Returns ``(summary dict, fixed-point report)``."""
    evm = evidence_messages(model, ev)
    cm = extract_maps(model, evm)
    n = model.state_dim
    rng = np.random.default_rng(seed)

    mono_stage = [check_monotone(s, trials, seed + i) for i, s in enumerate(cm.stages)]
    mono_loop = check_monotone(cm, trials, seed)
    fp = iterate_to_fixed_point(cm, np.zeros((n, n)), tol, max_iter)

    # linearization along the fixed-point trajectory, stage by stage
    cone_total = cone_pass = 0
    worst = np.inf
    fd_total = fd_pass = 0
    for j in fp.iterates:
        pts = trajectory(cm, j)
        for stage, x in zip(cm.stages, pts):
            r = differential_positivity_check(stage, x, trials, int(rng.integers(2**31)),
                                              fd_trials=min(trials, 20))
            cone_total += r.trials
            cone_pass += r.cone_passes
            worst = min(worst, r.worst_min_eig)
            fd_total += len(r.fd_errors)
            fd_pass += r.fd_passes
    loop_worst = min(
        min_eigenvalue(composed_derivative(cm, fp.fixed_point, random_psd(rng, n)))
        for _ in range(min(trials, 100))
    )
    con = contraction_diagnostics(cm, pairs, seed)
    summary = {
        "monotone": {
            "trials": mono_loop.trials + sum(r.trials for r in mono_stage),
            "passes": mono_loop.passes + sum(r.passes for r in mono_stage),
            "monotone_pass_rate": (mono_loop.passes + sum(r.passes for r in mono_stage))
            / (mono_loop.trials + sum(r.trials for r in mono_stage)),
            "worst_margin": min([mono_loop.worst_margin] + [r.worst_margin for r in mono_stage]),
        },
        "linearized_positivity": {
            "trials": cone_total,
            "passes": cone_pass,
            "worst_min_eigenvalue": float(worst),
            "loop_worst_min_eigenvalue": float(loop_worst),
            "derivative_fd_trials": fd_total,
            "derivative_fd_passes": fd_pass,
        },
        "contraction": {
            **con.ratio_summary(),
            "degenerate_pairs": len(con.degenerate_pairs),
            "skipped_pairs": len(con.skipped_pairs),
        },
        "fixed_point": {
            "value": fp.fixed_point,
            "converged": fp.converged,
            "iterations": fp.iterations,
            "residual": fp.residual,
        },
    }
    return summary, fp


def cmd_analyze(cfg):
    cfg.check()
    out = _outdir(cfg.out)
    model = cfg.load_model()
    ev = cfg.load_evidence(model)
    a = cfg.analysis
    summary, fp = analyze(model, ev, int(a.get("trials", 1000)), int(a.get("pairs", 100)),
                          int(a.get("seed", 0)))
    io.write_json(os.path.join(out, "analysis.json"), summary)
    rows = [
        [t, fp.frobenius_deltas[t - 1] if t > 0 else None, fp.hilbert_to_fixed_point[t]]
        for t in range(len(fp.hilbert_to_fixed_point))
    ]
    io.write_csv(os.path.join(out, "hilbert_trace.csv"),
                 ["iteration", "frobenius_delta", "hilbert_to_fixed_point"], rows)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="recipbp", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="generator / analysis seed")

    def inputs(sp):
        sp.add_argument("--model", help="model.json (overrides config)")
        sp.add_argument("--evidence", help="evidence.json (overrides config)")
        sp.add_argument("--evidence-seed", type=int, help="sample evidence with this seed")

    g = sub.add_parser("generate", help="write model.json, evidence.json, hidden_truth.json")
    common(g)
    g.add_argument("--num-nodes", type=int)
    g.add_argument("--state-dim", type=int)
    g.add_argument("--obs-dim", type=int)
    g.add_argument("--coupling", type=float)
    g.add_argument("--evidence-seed", type=int)

    s = sub.add_parser("smooth", help="run belief propagation")
    common(s)
    inputs(s)
    s.add_argument("--max-iter", type=int)
    s.add_argument("--tol", type=float)
    s.add_argument("--damping", type=float)
    s.add_argument("--init-precision", type=float)
    s.add_argument("--cut-edge", type=int, help="remove this edge before running")

    e = sub.add_parser("exact", help="exact marginals by dense factorization")
    common(e)
    inputs(e)
    e.add_argument("--cut-edge", type=int)

    a = sub.add_parser("analyze", help="loop-map monotonicity / contraction analysis")
    common(a)
    inputs(a)

    c = sub.add_parser("compare", help="relative errors between two marginals files")
    c.add_argument("first")
    c.add_argument("second")
    c.add_argument("--out", default=".")
    c.add_argument("--config", help=argparse.SUPPRESS)
    c.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args.first, args.second, args.out)
        cfg = _merge_args(args)
        return {
            "generate": cmd_generate,
            "smooth": cmd_smooth,
            "exact": cmd_exact,
            "analyze": cmd_analyze,
        }[args.command](cfg)
    except (io.ParseError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SingularityError, DegenerateModelError, DegenerateBeliefError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
