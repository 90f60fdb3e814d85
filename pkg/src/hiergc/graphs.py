"""Core graph data types, validation and the dataset interchange format.

A :class:`GraphInstance` is one inner graph; a :class:`HierarchicalGraph`
is an ordered collection of instances plus the instance-level adjacency
and the labeled/unlabeled/test split. Datasets round-trip through a
canonical JSON encoding (sorted keys, 17-significant-digit floats,
lexicographically sorted edges) so that equal data means equal bytes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


class DatasetFormatError(ValueError):
    """Raised when a dataset or checkpoint file cannot be parsed."""


class DatasetVersionError(DatasetFormatError):
    """Raised when a file declares an unsupported schema version."""


@dataclass(frozen=True, eq=False)
class GraphInstance:
    """One inner graph: a node of the hierarchical graph.

    edges hold each undirected pair once as (u, v) with u < v; X is the
    n x d node-attribute matrix; label is a class index or None.
    """

    id: int
    n: int
    edges: tuple
    X: np.ndarray
    label: int | None = None
    generator_tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(sorted((int(u), int(v)) for u, v in self.edges)))
        object.__setattr__(self, "X", np.asarray(self.X, dtype=np.float64))

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def density(self):
        if self.n < 2:
            return 0.0
        return 2.0 * len(self.edges) / (self.n * (self.n - 1))

    def degrees(self):
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            if 0 <= u < self.n:
                deg[u] += 1
            if 0 <= v < self.n:
                deg[v] += 1
        return deg

    def adjacency(self):
        a = np.zeros((self.n, self.n), dtype=np.float64)
        for u, v in self.edges:
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def __eq__(self, other):
        if not isinstance(other, GraphInstance):
            return NotImplemented
        return (
            self.id == other.id
            and self.n == other.n
            and self.edges == other.edges
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X)
            and self.label == other.label
            and self.generator_tag == other.generator_tag
        )


@dataclass(frozen=True, eq=False)
class HierarchicalGraph:
    """Ordered graph instances plus instance-level edges and the split."""

    instances: tuple
    hier_edges: tuple
    num_classes: int
    labeled_ids: tuple = ()
    unlabeled_ids: tuple = ()
    test_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        object.__setattr__(
            self, "hier_edges", tuple(sorted((int(u), int(v)) for u, v in self.hier_edges))
        )
        object.__setattr__(self, "labeled_ids", tuple(sorted(int(i) for i in self.labeled_ids)))
        object.__setattr__(self, "unlabeled_ids", tuple(sorted(int(i) for i in self.unlabeled_ids)))
        object.__setattr__(self, "test_ids", tuple(sorted(int(i) for i in self.test_ids)))

    @property
    def n_instances(self):
        return len(self.instances)

    def labels_array(self):
        """Labels as an int array with -1 for unlabeled-in-data instances."""
        out = np.full(len(self.instances), -1, dtype=np.int64)
        for i, g in enumerate(self.instances):
            if g.label is not None:
                out[i] = g.label
        return out

    def __eq__(self, other):
        if not isinstance(other, HierarchicalGraph):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.hier_edges == other.hier_edges
            and self.labeled_ids == other.labeled_ids
            and self.unlabeled_ids == other.unlabeled_ids
            and self.test_ids == other.test_ids
            and len(self.instances) == len(other.instances)
            and all(a == b for a, b in zip(self.instances, other.instances))
        )


# ---------------------------------------------------------------------------
# validation


def _validate_instance(pos, g: GraphInstance, num_classes):
    bad = []
    where = f"instance {g.id} (index {pos})"
    if g.n < 1:
        bad.append(f"{where}: node count {g.n} < 1")
    seen = set()
    for u, v in g.edges:
        if u == v:
            bad.append(f"{where}: self-loop ({u},{v})")
        if not (0 <= u < g.n) or not (0 <= v < g.n):
            bad.append(f"{where}: edge ({u},{v}) endpoint outside [0,{g.n})")
        if u > v:
            bad.append(f"{where}: edge ({u},{v}) not stored as u<v")
        key = (min(u, v), max(u, v))
        if key in seen:
            bad.append(f"{where}: duplicate edge ({u},{v})")
        seen.add(key)
    if g.X.ndim != 2 or g.X.shape[0] != g.n:
        bad.append(f"{where}: feature matrix shape {g.X.shape} does not match n={g.n}")
    if g.label is not None and not (0 <= g.label < num_classes):
        bad.append(f"{where}: label {g.label} outside [0,{num_classes})")
    return bad


def validate(h: HierarchicalGraph):
    """Return a list of invariant violations; empty means the graph is valid."""
    bad = []
    if h.num_classes < 1:
        bad.append(f"num_classes {h.num_classes} < 1")
    widths = set()
    for pos, g in enumerate(h.instances):
        bad.extend(_validate_instance(pos, g, h.num_classes))
        if g.X.ndim == 2:
            widths.add(g.X.shape[1])
    if len(widths) > 1:
        bad.append(f"inconsistent feature widths across instances: {sorted(widths)}")
    ids = [g.id for g in h.instances]
    if len(set(ids)) != len(ids):
        bad.append("duplicate instance ids")
    n = len(h.instances)
    seen = set()
    for u, v in h.hier_edges:
        if u == v:
            bad.append(f"hierarchy: self-loop ({u},{v})")
        if not (0 <= u < n) or not (0 <= v < n):
            bad.append(f"hierarchy: edge ({u},{v}) endpoint outside [0,{n})")
        key = (min(u, v), max(u, v))
        if key in seen:
            bad.append(f"hierarchy: duplicate edge ({u},{v})")
        seen.add(key)
    for name, idx in (("labeled", h.labeled_ids), ("unlabeled", h.unlabeled_ids), ("test", h.test_ids)):
        for i in idx:
            if not (0 <= i < n):
                bad.append(f"split {name}: index {i} outside [0,{n})")
        if len(set(idx)) != len(idx):
            bad.append(f"split {name}: repeated indices")
    for a, b in (("labeled", "unlabeled"), ("labeled", "test"), ("unlabeled", "test")):
        overlap = set(getattr(h, a + "_ids")) & set(getattr(h, b + "_ids"))
        if overlap:
            bad.append(f"splits {a} and {b} overlap: {sorted(overlap)}")
    for name in ("labeled", "test"):
        for i in getattr(h, name + "_ids"):
            if 0 <= i < n and h.instances[i].label is None:
                bad.append(f"split {name}: instance {h.instances[i].id} missing label")
    return bad


# ---------------------------------------------------------------------------
# adjacency normalization


def normalized_adjacency_dense(n, edges):
    """Symmetric GCN renormalization D~^{-1/2} (A + I) D~^{-1/2}, dense."""
    a = np.eye(n, dtype=np.float64)
    for u, v in edges:
        a[u, v] = 1.0
        a[v, u] = 1.0
    dinv = 1.0 / np.sqrt(a.sum(axis=1))
    return a * dinv[:, None] * dinv[None, :]


def normalize_adjacency(g: GraphInstance):
    """Normalized adjacency of one instance, with self-loops added."""
    return normalized_adjacency_dense(g.n, g.edges)


# ---------------------------------------------------------------------------
# canonical JSON


def format_float(x):
    """17 significant digits: enough to round-trip any float64 exactly."""
    return f"{float(x):.17g}"


def _canon(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.append("{")
        for k, key in enumerate(sorted(obj)):
            if k:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _canon(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for k, item in enumerate(obj):
            if k:
                out.append(",")
            _canon(item, out)
        out.append("]")
    else:
        raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def canonical_json(obj):
    out = []
    _canon(obj, out)
    out.append("\n")
    return "".join(out)


# ---------------------------------------------------------------------------
# dataset save / load


def _instance_to_dict(g: GraphInstance):
    return {
        "id": int(g.id),
        "n": int(g.n),
        "edges": [[int(u), int(v)] for u, v in g.edges],
        "features": [[float(x) for x in row] for row in g.X],
        "label": None if g.label is None else int(g.label),
        "generator_tag": g.generator_tag,
    }


def dataset_to_dict(h: HierarchicalGraph):
    return {
        "schema_version": SCHEMA_VERSION,
        "num_classes": int(h.num_classes),
        "instances": [_instance_to_dict(g) for g in h.instances],
        "hier_edges": [[int(u), int(v)] for u, v in h.hier_edges],
        "splits": {
            "labeled": list(h.labeled_ids),
            "unlabeled": list(h.unlabeled_ids),
            "test": list(h.test_ids),
        },
    }


def write_text_atomic(path, text):
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def save_dataset(h: HierarchicalGraph, path):
    write_text_atomic(path, canonical_json(dataset_to_dict(h)))


def _expect(cond, msg):
    if not cond:
        raise DatasetFormatError(msg)


def _parse_instance(pos, d):
    _expect(isinstance(d, dict), f"instances[{pos}]: expected object")
    for key in ("id", "n", "edges", "features", "label", "generator_tag"):
        _expect(key in d, f"instances[{pos}]: missing field '{key}'")
    n = d["n"]
    _expect(isinstance(n, int) and n >= 1, f"instances[{pos}].n: bad node count {n!r}")
    edges = []
    for k, e in enumerate(d["edges"]):
        _expect(
            isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e),
            f"instances[{pos}].edges[{k}]: expected [u, v] integers",
        )
        _expect(
            0 <= e[0] < n and 0 <= e[1] < n,
            f"instances[{pos}].edges[{k}]: endpoint {e} outside [0,{n})",
        )
        edges.append((e[0], e[1]))
    feats = d["features"]
    _expect(
        isinstance(feats, list) and len(feats) == n,
        f"instances[{pos}].features: expected {n} rows",
    )
    widths = {len(row) for row in feats}
    _expect(len(widths) == 1, f"instances[{pos}].features: ragged rows")
    label = d["label"]
    _expect(label is None or isinstance(label, int), f"instances[{pos}].label: bad value {label!r}")
    tag = d["generator_tag"]
    _expect(tag is None or isinstance(tag, str), f"instances[{pos}].generator_tag: bad value")
    return GraphInstance(
        id=d["id"], n=n, edges=edges, X=np.asarray(feats, dtype=np.float64), label=label,
        generator_tag=tag,
    )


def load_dataset(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    _expect(isinstance(doc, dict), "top level: expected object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DatasetVersionError(
            f"schema_version {version!r} unsupported (expected {SCHEMA_VERSION})"
        )
    for key in ("num_classes", "instances", "hier_edges", "splits"):
        _expect(key in doc, f"top level: missing field '{key}'")
    instances = [_parse_instance(k, d) for k, d in enumerate(doc["instances"])]
    n = len(instances)
    hier = []
    for k, e in enumerate(doc["hier_edges"]):
        _expect(
            isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) for x in e),
            f"hier_edges[{k}]: expected [i, j] integers",
        )
        _expect(0 <= e[0] < n and 0 <= e[1] < n, f"hier_edges[{k}]: index {e} outside [0,{n})")
        hier.append((e[0], e[1]))
    splits = doc["splits"]
    _expect(isinstance(splits, dict), "splits: expected object")
    for key in ("labeled", "unlabeled", "test"):
        _expect(key in splits, f"splits: missing field '{key}'")
        for i in splits[key]:
            _expect(isinstance(i, int) and 0 <= i < n, f"splits.{key}: bad index {i!r}")
    return HierarchicalGraph(
        instances=instances,
        hier_edges=hier,
        num_classes=doc["num_classes"],
        labeled_ids=splits["labeled"],
        unlabeled_ids=splits["unlabeled"],
        test_ids=splits["test"],
    )
