"""Softplus-contrast (Jensen-Shannon) mutual-information estimators.

Both estimators consume raw bilinear scores D(x, y) = x^T W y and
combine them as mean(-sp(-D+)) - mean(sp(D-)); applying softplus to
post-sigmoid values would collapse the estimator range. Negatives pair
an instance embedding with node representations drawn from one other
instance (instance level) and a row-shuffled embedding matrix with the
hierarchy distributions (hierarchy level).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad


def _as_column(x):
    if isinstance(x, ad.Tensor):
        t = x
    else:
        t = ad.tensor(np.asarray(x, dtype=np.float64))
    return ad.reshape(t, (t.size, 1))


def jsd_pair(score_pos, score_neg):
    """mean(-sp(-D+)) - mean(sp(D-)) over pre-sigmoid bilinear scores."""
    pos = _as_column(score_pos)
    neg = _as_column(score_neg)
    if pos.size == 0 or neg.size == 0:
        raise ValueError("jsd_pair needs at least one positive and one negative score")
    return ad.sub(
        ad.mean_all(ad.neg(ad.softplus(ad.neg(pos)))),
        ad.mean_all(ad.softplus(neg)),
    )


def sample_instance_negatives(rng, counts, ratio=1):
    """Per instance: one partner != i plus uniform partner-node draws.

    Returns a list of (partner, local node indices) with
    ratio * n_i draws for instance i.
    """
    n_inst = len(counts)
    if n_inst < 2:
        raise ValueError("instance-level negatives need at least 2 instances")
    counts = np.asarray(counts, dtype=np.int64)
    partners = rng.integers(0, n_inst - 1, size=n_inst)
    partners += partners >= np.arange(n_inst)
    draws = np.repeat(counts[partners], counts * ratio) * rng.random(int(counts.sum()) * ratio)
    locals_flat = draws.astype(np.int64)
    bounds = np.cumsum(counts * ratio)[:-1]
    return [(int(j), loc) for j, loc in zip(partners, np.split(locals_flat, bounds))]


def instance_mi(h_list, e_all, w_di, rng=None, negatives=None, ratio=1):
    """Instance-level MI: mean over instances of the per-instance mean
    pair estimate between node representations and the own embedding.

    h_list holds one (n_i, v) tensor per instance; e_all is (N, m).
    """
    counts = [h.shape[0] for h in h_list]
    if negatives is None:
        if rng is None:
            raise ValueError("instance_mi needs an rng or precomputed negatives")
        negatives = sample_instance_negatives(rng, counts, ratio)
    per_instance = []
    for i, h in enumerate(h_list):
        e_i = ad.reshape(ad.take_rows(e_all, [i]), (e_all.shape[1], 1))
        anchor = ad.matmul(w_di, e_i)  # (v, 1)
        pos = ad.matmul(h, anchor)
        partner, local = negatives[i]
        neg = ad.matmul(ad.take_rows(h_list[partner], local), anchor)
        per_instance.append(jsd_pair(pos, neg))
    return ad.mul_scalar(
        ad.sum_all(ad.concat_rows([ad.reshape(t, (1, 1)) for t in per_instance])),
        1.0 / len(per_instance),
    )


def instance_mi_flat(h_nodes, e_all, w_di, enc, negatives):
    """Same estimate as :func:`instance_mi` on the stacked node matrix.

    enc is the :class:`~hiergc.models.EncodedGraph`; negatives must come
    from :func:`sample_instance_negatives` so both paths agree exactly.
    """
    starts = enc.segments.starts
    ratio = len(negatives[0][1]) // int(enc.segments.counts[0]) if negatives else 1
    neg_idx = np.concatenate([starts[j] + local for j, local in negatives])
    we = ad.matmul(e_all, ad.transpose(w_di))  # (N, v)
    we_nodes = ad.spmm(enc.node_broadcast, we)
    pos = ad.rowsum(ad.mul(h_nodes, we_nodes))
    if ratio == 1:
        neg = ad.rowsum(ad.mul(ad.take_rows(h_nodes, neg_idx), we_nodes))
        neg_sp_per_node = ad.softplus(neg)
    else:
        anchor_idx = np.repeat(np.arange(enc.segments.total), ratio)
        neg = ad.rowsum(ad.mul(ad.take_rows(h_nodes, neg_idx), ad.take_rows(we_nodes, anchor_idx)))
        neg_sp_per_node = ad.mul_scalar(
            ad.rowsum(ad.reshape(ad.softplus(neg), (enc.segments.total, ratio))), 1.0 / ratio
        )
    per_inst_pos = ad.spmm(enc.mean_pool, ad.neg(ad.softplus(ad.neg(pos))))
    per_inst_neg = ad.spmm(enc.mean_pool, neg_sp_per_node)
    return ad.mean_all(ad.sub(per_inst_pos, per_inst_neg))


def hier_mi(e_all, gamma, w_dh, rng):
    """Hierarchy-level MI with mean weights over all (embedding, instance)
    pairs; negatives pair the distributions with a row shuffle of the
    embedding matrix.

    Since every (j, i) pair enters with the same mean weight, the
    shuffled negative term mean(sp(D(e_perm(j), gamma_i))) equals
    mean(sp(D(e_j, gamma_i))) exactly - permuting rows only reorders
    the summands. The fused form below exploits that; the rng draw is
    kept so the consumed random stream matches the sampled definition.
    """
    n = e_all.shape[0]
    if n == 0:
        raise ValueError("hier_mi needs at least one instance")
    rng.permutation(n)
    scores = ad.matmul(ad.matmul(e_all, w_dh), ad.transpose(gamma))  # (j, i)
    return ad.mean_all(ad.neg_softplus_sym(scores))


def hgmi(instance_term, hier_term, alpha_weight=0.5):
    """Combined objective: alpha * (instance MI + hierarchy MI)."""
    if not isinstance(instance_term, ad.Tensor):
        instance_term = ad.tensor(np.asarray(float(instance_term)))
    if not isinstance(hier_term, ad.Tensor):
        hier_term = ad.tensor(np.asarray(float(hier_term)))
    return ad.mul_scalar(ad.add(instance_term, hier_term), alpha_weight)
