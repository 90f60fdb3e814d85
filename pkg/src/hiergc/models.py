"""Instance-level and hierarchy-level classifiers.

The instance classifier (IC) smooths node features with a two-layer
GCN, pools them with multi-view self-attention into a fixed-width
embedding, and maps that through a softmax head to class
probabilities. The hierarchy classifier (HC) runs a two-layer GCN over
the instance embeddings and the instance-level adjacency. Two bilinear
discriminators score (node representation, instance embedding) and
(instance embedding, hierarchy distribution) pairs for the
mutual-information objectives.

Besides the per-instance forward passes, :class:`EncodedGraph` holds a
block-diagonal stacking of all instances so one epoch over the whole
dataset runs as a handful of large array ops; both paths compute the
same function and are cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import autodiff as ad
from .graphs import GraphInstance, HierarchicalGraph, normalize_adjacency

DEFAULT_GCN_HIDDEN = 32   # first GCN layer channels
DEFAULT_GCN_OUT = 4       # second GCN layer channels (v)
DEFAULT_ATT_HIDDEN = 16   # attention transform width
DEFAULT_ATT_VIEWS = 4     # attention views (r); embedding width m = r * v
DEFAULT_HC_HIDDEN = 16
DEFAULT_DROPOUT = 0.3


@dataclass
class ICParams:
    w0: ad.Tensor
    w1: ad.Tensor
    w_s1: ad.Tensor
    w_s2: ad.Tensor
    w_head: ad.Tensor
    b_head: ad.Tensor
    dropout: float = DEFAULT_DROPOUT
    # optional dense layer between the embedding and the softmax head
    w_hid: ad.Tensor | None = None
    b_hid: ad.Tensor | None = None

    @property
    def feature_dim(self):
        return self.w0.shape[0]

    @property
    def embed_dim(self):
        return self.w_s2.shape[0] * self.w1.shape[1]

    def named(self):
        out = [
            ("ic.w0", self.w0),
            ("ic.w1", self.w1),
            ("ic.w_s1", self.w_s1),
            ("ic.w_s2", self.w_s2),
            ("ic.w_head", self.w_head),
            ("ic.b_head", self.b_head),
        ]
        if self.w_hid is not None:
            out += [("ic.w_hid", self.w_hid), ("ic.b_hid", self.b_hid)]
        return out


@dataclass
class HCParams:
    v0: ad.Tensor
    v1: ad.Tensor

    def named(self):
        return [("hc.v0", self.v0), ("hc.v1", self.v1)]


@dataclass
class DiscParams:
    w_di: ad.Tensor  # node rep (v) vs instance embedding (m)
    w_dh: ad.Tensor  # instance embedding (m) vs hierarchy distribution (c)

    def named(self):
        return [("disc.w_di", self.w_di), ("disc.w_dh", self.w_dh)]


def _he(rng, rows, cols, dtype):
    return ad.parameter((rng.standard_normal((rows, cols)) * np.sqrt(2.0 / rows)).astype(dtype))


def _xavier(rng, rows, cols, dtype):
    return ad.parameter(
        (rng.standard_normal((rows, cols)) * np.sqrt(2.0 / (rows + cols))).astype(dtype)
    )


def init_ic_params(
    rng,
    feature_dim,
    num_classes,
    hidden=DEFAULT_GCN_HIDDEN,
    out=DEFAULT_GCN_OUT,
    att_hidden=DEFAULT_ATT_HIDDEN,
    views=DEFAULT_ATT_VIEWS,
    dropout=DEFAULT_DROPOUT,
    head_hidden=None,
    dtype=np.float64,
):
    # zero final head: class probabilities start uniform
    m = views * out
    w_hid = b_hid = None
    if head_hidden:
        w_hid = _he(rng, m, head_hidden, dtype)
        b_hid = ad.parameter(np.zeros((1, head_hidden), dtype=dtype))
        m = head_hidden
    return ICParams(
        w0=_he(rng, feature_dim, hidden, dtype),
        w1=_he(rng, hidden, out, dtype),
        w_s1=_xavier(rng, att_hidden, out, dtype),
        w_s2=_xavier(rng, views, att_hidden, dtype),
        w_head=ad.parameter(np.zeros((m, num_classes), dtype=dtype)),
        b_head=ad.parameter(np.zeros((1, num_classes), dtype=dtype)),
        dropout=dropout,
        w_hid=w_hid,
        b_hid=b_hid,
    )


def init_hc_params(rng, embed_dim, num_classes, hidden=DEFAULT_HC_HIDDEN, dtype=np.float64):
    return HCParams(
        v0=_he(rng, embed_dim, hidden, dtype),
        v1=ad.parameter(np.zeros((hidden, num_classes), dtype=dtype)),
    )


def init_disc_params(rng, node_dim, embed_dim, num_classes, dtype=np.float64):
    return DiscParams(
        w_di=_xavier(rng, node_dim, embed_dim, dtype),
        w_dh=_xavier(rng, embed_dim, num_classes, dtype),
    )


# ---------------------------------------------------------------------------
# forward passes (single instance)


def gcn_layer(a_hat, h_in, w, activation="relu"):
    """activation(A_hat @ h_in @ w); a_hat is a constant matrix."""
    if isinstance(a_hat, ad.SparseConst):
        out = ad.spmm(a_hat, ad.matmul(h_in, w))
    else:
        out = ad.matmul(ad.tensor(np.asarray(a_hat)), ad.matmul(h_in, w))
    if activation == "relu":
        return ad.relu(out)
    if activation == "identity":
        return out
    raise ValueError(f"gcn_layer: unknown activation {activation!r}")


def attention_pool(h, w_s1, w_s2):
    """Multi-view attention pooling.

    S = softmax(w_s2 tanh(w_s1 H^T)) row-wise over the nodes; the
    pooled embedding is S @ H flattened row-major, so its width is
    views * node_channels regardless of the node count.
    """
    s = ad.softmax_rows(ad.matmul(w_s2, ad.tanh(ad.matmul(w_s1, ad.transpose(h)))))
    e = ad.reshape(ad.matmul(s, h), (1, s.shape[0] * h.shape[1]))
    return s, e


def attention_disagreement(s):
    """||S S^T - I||_F^2, the optional view-diversity penalty."""
    r = s.shape[0]
    d = ad.sub(ad.matmul(s, ad.transpose(s)), ad.tensor(np.eye(r, dtype=s.data.dtype)))
    return ad.sum_all(ad.mul(d, d))


def head_probs(e, params: ICParams, training=False, rng=None):
    """Softmax head over pooled embeddings, with the optional dense layer."""
    x = e
    if params.w_hid is not None:
        x = ad.relu(ad.add_bias(ad.matmul(x, params.w_hid), params.b_hid))
    x = ad.dropout(x, params.dropout, training, rng)
    return ad.softmax_rows(ad.add_bias(ad.matmul(x, params.w_head), params.b_head))


def ic_forward(g: GraphInstance, params: ICParams, training=False, rng=None):
    """Instance classifier: returns (node reps H, embedding e, class probs)."""
    if g.X.shape[1] != params.feature_dim:
        raise ValueError(
            f"feature width {g.X.shape[1]} does not match ic params ({params.feature_dim})"
        )
    a_hat = normalize_adjacency(g)
    x = ad.tensor(g.X)
    h1 = gcn_layer(a_hat, x, params.w0, "relu")
    h = gcn_layer(a_hat, h1, params.w1, "identity")
    _, e = attention_pool(h, params.w_s1, params.w_s2)
    probs = head_probs(e, params, training, rng)
    return h, e, probs


def normalized_adjacency_csr(n, edges):
    """Sparse D~^{-1/2} (A + I) D~^{-1/2} straight from an edge list."""
    deg = np.ones(n)
    for u, v in edges:
        deg[u] += 1.0
        deg[v] += 1.0
    dinv = 1.0 / np.sqrt(deg)
    rows = list(range(n))
    cols = list(range(n))
    vals = (dinv * dinv).tolist()
    for u, v in edges:
        rows.extend((u, v))
        cols.extend((v, u))
        vals.extend((dinv[u] * dinv[v], dinv[u] * dinv[v]))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))


def hc_forward(e_all, hier_edges, params: HCParams, a_hier=None):
    """Hierarchy classifier: row-stochastic class distributions per instance."""
    if a_hier is None:
        a_hier = ad.SparseConst(normalized_adjacency_csr(e_all.shape[0], hier_edges))
    z = ad.relu(ad.spmm(a_hier, ad.matmul(e_all, params.v0)))
    return ad.softmax_rows(ad.spmm(a_hier, ad.matmul(z, params.v1)))


def disc_instance(h_row, e, w_di):
    """sigma(h^T W e) for one (node representation, instance embedding) pair."""
    return ad.sigmoid(ad.matmul(ad.matmul(h_row, w_di), ad.transpose(e)))


def disc_hier(e, gamma_row, w_dh):
    """sigma(e^T W gamma) for one (embedding, hierarchy distribution) pair."""
    return ad.sigmoid(ad.matmul(ad.matmul(e, w_dh), ad.transpose(gamma_row)))


# ---------------------------------------------------------------------------
# whole-dataset encoding


class EncodedGraph:
    """Constant structures for running every instance in one pass.

    Instances are stacked into one node dimension; the normalized
    adjacencies form a block-diagonal sparse matrix, so the batched
    forward equals the per-instance forward exactly. dtype float32
    halves the memory traffic of full-dataset epochs.
    """

    def __init__(self, h: HierarchicalGraph, dtype=np.float64):
        if not h.instances:
            raise ValueError("empty hierarchical graph")
        counts = [g.n for g in h.instances]
        self.dtype = np.dtype(dtype)
        self.segments = ad.Segments(counts)
        self.num_instances = len(counts)
        self.num_classes = h.num_classes
        widths = {g.X.shape[1] for g in h.instances}
        if len(widths) != 1:
            raise ValueError(f"inconsistent feature widths: {sorted(widths)}")
        self.feature_dim = widths.pop()
        self.labels = h.labels_array()

        blocks = [normalized_adjacency_csr(g.n, g.edges) for g in h.instances]
        block_diag = sparse.block_diag(blocks, format="csr")
        x_all = np.concatenate([g.X for g in h.instances], axis=0)
        self.ax = ad.tensor((block_diag @ x_all).astype(dtype))
        self.a_block = ad.SparseConst(block_diag.astype(dtype))
        self.x_mean = ad.tensor(
            np.concatenate(
                [g.X.mean(axis=0, keepdims=True) for g in h.instances], axis=0
            ).astype(dtype)
        )

        total = self.segments.total
        starts = self.segments.starts
        node_to_instance = np.repeat(np.arange(self.num_instances), counts)
        ones = np.ones(total, dtype=dtype)
        indptr = np.concatenate((starts, [total]))
        cols = np.arange(total)
        self.sum_pool = ad.SparseConst(
            sparse.csr_matrix((ones, cols, indptr), shape=(self.num_instances, total))
        )
        self.mean_pool = ad.SparseConst(
            sparse.csr_matrix(
                (np.asarray(1.0 / np.repeat(counts, counts), dtype=dtype), cols, indptr),
                shape=(self.num_instances, total),
            )
        )
        self.node_broadcast = ad.SparseConst(
            sparse.csr_matrix(
                (ones, (cols, node_to_instance)), shape=(total, self.num_instances)
            )
        )
        self.node_to_instance = node_to_instance
        self.a_hier = ad.SparseConst(
            normalized_adjacency_csr(self.num_instances, h.hier_edges).astype(dtype)
        )


def encode_all(enc: EncodedGraph, ic: ICParams, hc: HCParams | None, training=False, rng=None):
    """Batched IC (+ optional HC) forward over every instance.

    Returns a dict with node reps 'h_nodes', attention 'att'
    (node-major), embeddings 'e', head probabilities 'ic_probs' and,
    when hc is given, the hierarchy distributions 'gamma'.
    """
    if enc.feature_dim != ic.feature_dim:
        raise ValueError(
            f"feature width {enc.feature_dim} does not match ic params ({ic.feature_dim})"
        )
    h1 = ad.relu(ad.matmul(enc.ax, ic.w0))
    h = ad.spmm(enc.a_block, ad.matmul(h1, ic.w1))
    att_logits = ad.matmul(ad.tanh(ad.matmul(h, ad.transpose(ic.w_s1))), ad.transpose(ic.w_s2))
    att = ad.segment_softmax(att_logits, enc.segments)
    views = [
        ad.spmm(enc.sum_pool, ad.mul_colvec(h, ad.slice_cols(att, k, k + 1)))
        for k in range(att.shape[1])
    ]
    e = ad.concat_cols(views)
    probs = head_probs(e, ic, training, rng)
    out = {"h_nodes": h, "att": att, "e": e, "ic_probs": probs}
    if hc is not None:
        out["gamma"] = hc_forward(e, None, hc, a_hier=enc.a_hier)
    return out


def batched_attention_disagreement(att, enc: EncodedGraph):
    """Mean over instances of ||S S^T - I||_F^2 from node-major attention."""
    r = att.shape[1]
    gram_cols = []
    for a in range(r):
        for b in range(r):
            prod = ad.mul(ad.slice_cols(att, a, a + 1), ad.slice_cols(att, b, b + 1))
            gram_cols.append(ad.spmm(enc.sum_pool, prod))
    gram = ad.concat_cols(gram_cols)  # per instance, flattened S S^T
    eye = np.eye(r, dtype=att.data.dtype).reshape(1, r * r).repeat(enc.num_instances, axis=0)
    d = ad.sub(gram, ad.tensor(eye))
    return ad.mul_scalar(ad.sum_all(ad.mul(d, d)), 1.0 / enc.num_instances)


# ---------------------------------------------------------------------------
# parameter serialization


def params_to_dict(named):
    out = {}
    for name, t in named:
        out[name] = {
            "shape": list(t.data.shape),
            "dtype": t.data.dtype.name,
            "data": [float(x) for x in t.data.reshape(-1)],
        }
    return out


def params_from_dict(d):
    out = {}
    for name, entry in d.items():
        arr = np.asarray(entry["data"], dtype=entry.get("dtype", "float64")).reshape(entry["shape"])
        out[name] = ad.parameter(arr)
    return out
