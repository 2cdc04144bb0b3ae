"""JSON and CSV serialization.

Floats are written with 17 significant digits so that a read/write round trip
reproduces the file byte for byte.
"""

import csv
import json
import math

import jsonschema
import numpy as np

from .model import CyclicModel, EdgePotential, Evidence, ModelError, NodePotential


def fmt(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x}")
    return format(x, ".17g")


def dumps(obj, indent=0, step=2):
    """Deterministic JSON with fixed float formatting.

    Numeric lists are kept on one line so matrices stay readable.
    """
    pad = " " * (indent + step)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + step)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + " " * indent + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)
               for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        if not obj:
            return "[]"
        items = [pad + dumps(v, indent + step) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + " " * indent + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps(obj) + "\n")


class ParseError(ValueError):
    pass


def read_json(path):
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _field(doc, key, where):
    try:
        return doc[key]
    except (KeyError, TypeError):
        raise ParseError(f"{where}: missing field {key!r}") from None


def _matrix(doc, key, where):
    try:
        a = np.array(_field(doc, key, where), dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}.{key}: not a numeric matrix") from exc
    if a.ndim != 2:
        raise ParseError(f"{where}.{key}: expected a nested 2-d array")
    return a


# ---- model / evidence ----

def model_to_dict(model):
    blocks = lambda p: {"p11": p.p11, "p12": p.p12, "p22": p.p22}  # noqa: E731
    return {
        "num_nodes": model.num_nodes,
        "state_dim": model.state_dim,
        "obs_dim": model.obs_dim,
        "edges": [blocks(e) for e in model.edges],
        "nodes": [blocks(nd) for nd in model.nodes],
    }


def model_from_dict(doc):
    try:
        edges = tuple(
            EdgePotential(*(_matrix(e, k, f"edges[{i}]") for k in ("p11", "p12", "p22")))
            for i, e in enumerate(_field(doc, "edges", "model"))
        )
        nodes = tuple(
            NodePotential(*(_matrix(nd, k, f"nodes[{i}]") for k in ("p11", "p12", "p22")))
            for i, nd in enumerate(_field(doc, "nodes", "model"))
        )
    except ModelError as exc:
        raise ParseError(str(exc)) from exc
    return CyclicModel(
        int(_field(doc, "num_nodes", "model")),
        int(_field(doc, "state_dim", "model")),
        int(_field(doc, "obs_dim", "model")),
        edges,
        nodes,
    )


def evidence_to_dict(evidence):
    return {"observations": [list(y) for y in evidence.observations]}


def evidence_from_dict(doc):
    obs = _field(doc, "observations", "evidence")
    try:
        return Evidence(tuple(np.array(y, dtype=np.float64) for y in obs))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"evidence.observations: {exc}") from exc


def read_model(path):
    return model_from_dict(read_json(path))


def read_evidence(path):
    return evidence_from_dict(read_json(path))


# ---- marginals (shared by BP beliefs and the exact oracle) ----

MARGINALS_SCHEMA = {
    "type": "object",
    "required": ["source", "num_nodes", "state_dim", "marginals"],
    "properties": {
        "source": {"type": "string"},
        "num_nodes": {"type": "integer", "minimum": 1},
        "state_dim": {"type": "integer", "minimum": 1},
        "marginals": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["node", "mean", "covariance"],
                "properties": {
                    "node": {"type": "integer", "minimum": 0},
                    "mean": {"type": "array", "items": {"type": "number"}},
                    "covariance": {
                        "type": "array",
                        "items": {"type": "array", "items": {"type": "number"}},
                    },
                },
            },
        },
    },
}


def marginals_to_dict(source, means, covariances):
    return {
        "source": source,
        "num_nodes": len(means),
        "state_dim": int(np.asarray(means[0]).shape[0]),
        "marginals": [
            {"node": k, "mean": np.asarray(mu), "covariance": np.asarray(S)}
            for k, (mu, S) in enumerate(zip(means, covariances))
        ],
    }


def beliefs_to_dict(beliefs):
    return marginals_to_dict("bp", [b.mean for b in beliefs], [b.covariance for b in beliefs])


def exact_to_dict(marginals):
    return marginals_to_dict("exact", marginals.means, marginals.covariances)


def read_marginals(path):
    doc = read_json(path)
    try:
        jsonschema.validate(doc, MARGINALS_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ParseError(f"{path}: field {loc}: {exc.message}") from exc
    means = [np.array(m["mean"], dtype=np.float64) for m in doc["marginals"]]
    covs = [np.array(m["covariance"], dtype=np.float64) for m in doc["marginals"]]
    return doc["source"], means, covs


# ---- CSV ----

def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else fmt(v) if isinstance(v, float) else v for v in row])
