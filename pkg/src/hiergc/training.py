"""Training loops: joint objective, cautious iteration, evaluation.

The joint objective is supervised risk minus a scaled
mutual-information term. The cautious-iteration loop re-optimizes,
re-encodes, and then commits the t*lambda most confident predictions
on which both classifiers agree, rebuilding the enlarged training set
from the original labels each round.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import mi as mi_mod
from .graphs import (
    DatasetFormatError,
    DatasetVersionError,
    HierarchicalGraph,
    canonical_json,
    format_float,
    write_text_atomic,
)
from .models import (
    DiscParams,
    EncodedGraph,
    HCParams,
    ICParams,
    batched_attention_disagreement,
    encode_all,
    hc_forward,
    init_disc_params,
    init_hc_params,
    init_ic_params,
    params_from_dict,
    params_to_dict,
)
from .optim import AdamState, adam_step

MODES = ("seal", "seal-ci", "ic-only", "hc-only")

CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lambda_per_iter: int = 1
    max_iterations: int = 10
    epochs_per_iteration: int = 200
    lr: float = 0.01
    alpha_weight: float = 0.5
    beta_mi: float = 0.1
    seed: int = 0
    warm_start: bool = True
    freeze_pseudo_labels: bool = False
    attn_diversity_coeff: float = 0.0
    early_stop_patience: int = 20
    early_stop_min_delta: float = 1e-5
    dtype: str = "float64"  # float32 roughly halves full-benchmark wall time
    warmup_epochs: int | None = None  # epoch budget for the t=0 phase; defaults to epochs_per_iteration
    dropout: float = 0.3  # instance-classifier head dropout
    head_hidden: int | None = None  # optional dense layer width before the softmax head

    def check(self):
        if self.lambda_per_iter < 1:
            raise ValueError("lambda_per_iter must be >= 1")
        if self.epochs_per_iteration < 0:
            raise ValueError("epochs_per_iteration must be >= 0")
        if self.warmup_epochs is not None and self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        for name in ("lr", "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.head_hidden is not None and self.head_hidden < 1:
            raise ValueError("head_hidden must be >= 1 when set")


@dataclass
class IterationRecord:
    iteration: int
    zeta_orig: float
    zeta_enlarged: float
    mi_instance: float
    mi_hier: float
    loss: float
    accuracy: float
    macro_f1: float
    selected: list  # (instance index, pseudo label, confidence)

    @property
    def n_pseudo(self):
        return len(self.selected)


@dataclass
class TrainReport:
    mode: str
    iterations: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)  # full loss value per optimization epoch

    def to_csv(self):
        lines = ["iteration,zeta_orig,zeta_enlarged,mi_inst,mi_hier,loss,acc,macro_f1,n_pseudo"]
        for r in self.iterations:
            lines.append(
                ",".join(
                    [
                        str(r.iteration),
                        format_float(r.zeta_orig),
                        format_float(r.zeta_enlarged),
                        format_float(r.mi_instance),
                        format_float(r.mi_hier),
                        format_float(r.loss),
                        format_float(r.accuracy),
                        format_float(r.macro_f1),
                        str(r.n_pseudo),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def selection_log(self):
        return {
            "mode": self.mode,
            "iterations": [
                {
                    "iteration": r.iteration,
                    "selected": [
                        {"index": int(i), "label": int(y), "confidence": float(c)}
                        for i, y, c in r.selected
                    ],
                }
                for r in self.iterations
            ],
        }


@dataclass
class ModelState:
    mode: str
    num_classes: int
    feature_dim: int
    ic: ICParams | None
    hc: HCParams | None
    disc: DiscParams | None
    adam: AdamState

    def named_params(self):
        out = []
        for part in (self.ic, self.hc, self.disc):
            if part is not None:
                out.extend(part.named())
        return out


# ---------------------------------------------------------------------------
# loss pieces


def _onehot(labels, num_classes):
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def supervised_risk(ic_probs, gamma, labeled_idx, labels, num_classes):
    """Mean cross entropy of both classifiers over the labeled set."""
    y = _onehot(labels, num_classes)
    return ad.add(
        ad.cross_entropy(ad.take_rows(ic_probs, labeled_idx), y),
        ad.cross_entropy(ad.take_rows(gamma, labeled_idx), y),
    )


def total_loss(zeta, xi, beta_mi=0.1):
    """Joint objective: supervised risk minus the weighted MI term."""
    if xi is None:
        return zeta
    return ad.sub(zeta, ad.mul_scalar(xi, beta_mi))


def cautious_select(ic_probs, gamma, unlabeled_ids, k):
    """Top-k agreeing predictions by the smaller of the two confidences.

    Candidates are the unlabeled instances where both classifiers pick
    the same class; confidence is min(max IC prob, max HC prob). Ties
    break toward the lower instance index. Returns at most k
    (index, pseudo label, confidence) triples, confidence-descending.
    """
    if k <= 0:
        return []
    ic_probs = np.asarray(ic_probs)
    gamma = np.asarray(gamma)
    cands = []
    for i in unlabeled_ids:
        ic_row = ic_probs[i]
        hc_row = gamma[i]
        ic_arg = int(ic_row.argmax())
        if ic_arg != int(hc_row.argmax()):
            continue
        cands.append((-min(float(ic_row[ic_arg]), float(hc_row[ic_arg])), int(i), ic_arg))
    cands.sort()
    return [(i, label, -negconf) for negconf, i, label in cands[:k]]


# ---------------------------------------------------------------------------
# metrics


def macro_f1_score(y_true, y_pred, num_classes):
    f1s = []
    for c in range(num_classes):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        f1s.append(0.0 if tp == 0 else 2.0 * tp / (2.0 * tp + fp + fn))
    return float(np.mean(f1s))


def evaluate(state: ModelState, h: HierarchicalGraph, split_ids, enc=None):
    """(accuracy, macro F1, confusion matrix) on the given instance indices.

    Predictions come from the hierarchy classifier when the model has
    one, otherwise from the instance classifier head.
    """
    split_ids = list(split_ids)
    if not split_ids:
        raise ValueError("evaluate: empty split")
    if enc is None:
        enc = EncodedGraph(h, dtype=np.dtype(np.float32 if _is_f32(state) else np.float64))
    probs = predict_probs(state, enc)
    y_true = np.array([h.instances[i].label for i in split_ids])
    if any(y is None for y in y_true.tolist()):
        raise ValueError("evaluate: split contains unlabeled instances")
    y_pred = probs[split_ids].argmax(axis=1)
    acc = float(np.mean(y_pred == y_true))
    confusion = np.zeros((state.num_classes, state.num_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[int(t), int(p)] += 1
    return acc, macro_f1_score(y_true, y_pred, state.num_classes), confusion


def predict_probs(state: ModelState, enc: EncodedGraph):
    """Final per-instance class probabilities (values, not tensors)."""
    if state.mode == "hc-only":
        return hc_forward(enc.x_mean, None, state.hc, a_hier=enc.a_hier).data
    out = encode_all(enc, state.ic, state.hc, training=False)
    return out["gamma"].data if state.hc is not None else out["ic_probs"].data


def false_prediction_curve(state: ModelState, h: HierarchicalGraph, lambda_grid, enc=None,
                           pool_ids=None):
    """Error rate within the top-lambda most confident IC predictions.

    The pool defaults to the test split - the held instances whose
    ground truth is known in a real deployment - and falls back to any
    labeled instance outside the training set. Returns
    (lambda, false rate) rows.
    """
    if enc is None:
        enc = EncodedGraph(h, dtype=np.dtype(np.float32 if _is_f32(state) else np.float64))
    if state.ic is None:
        raise ValueError("false_prediction_curve needs an instance classifier")
    if pool_ids is None:
        pool_ids = h.test_ids or [
            i
            for i in sorted(set(h.unlabeled_ids) | set(h.test_ids))
            if h.instances[i].label is not None
        ]
    pool = [i for i in pool_ids if h.instances[i].label is not None]
    if not pool:
        raise ValueError("false_prediction_curve: no held instances with labels")
    probs = encode_all(enc, state.ic, None, training=False)["ic_probs"].data
    order = sorted(pool, key=lambda i: (-float(probs[i].max()), i))
    wrong = np.array([int(probs[i].argmax()) != h.instances[i].label for i in order])
    rows = []
    for lam in lambda_grid:
        take = min(int(lam), len(order))
        rows.append((int(lam), float(wrong[:take].mean()) if take else 0.0))
    return rows


def _is_f32(state: ModelState):
    part = state.ic if state.ic is not None else state.hc
    return part is not None and next(iter(part.named()))[1].data.dtype == np.float32


# ---------------------------------------------------------------------------
# training


def _init_state(mode, enc: EncodedGraph, cfg: TrainConfig, rng):
    dtype = np.dtype(cfg.dtype)
    ic = hc = disc = None
    if mode in ("seal", "seal-ci", "ic-only"):
        ic = init_ic_params(
            rng, enc.feature_dim, enc.num_classes, dropout=cfg.dropout,
            head_hidden=cfg.head_hidden, dtype=dtype,
        )
    if mode in ("seal", "seal-ci"):
        hc = init_hc_params(rng, ic.embed_dim, enc.num_classes, dtype=dtype)
        disc = init_disc_params(rng, ic.w1.shape[1], ic.embed_dim, enc.num_classes, dtype=dtype)
    if mode == "hc-only":
        hc = init_hc_params(rng, enc.feature_dim, enc.num_classes, dtype=dtype)
    return ModelState(
        mode=mode,
        num_classes=enc.num_classes,
        feature_dim=enc.feature_dim,
        ic=ic,
        hc=hc,
        disc=disc,
        adam=AdamState(lr=cfg.lr),
    )


def _forward_loss(state, enc, cfg, labeled_idx, labels_now, training, rng):
    """Build the mode-specific loss; returns (loss, zeta, mi_i, mi_h, out)."""
    y = _onehot(labels_now, enc.num_classes)
    if state.mode == "hc-only":
        gamma = hc_forward(enc.x_mean, None, state.hc, a_hier=enc.a_hier)
        zeta = ad.cross_entropy(ad.take_rows(gamma, labeled_idx), y)
        return zeta, zeta, None, None, {"gamma": gamma}
    out = encode_all(enc, state.ic, state.hc, training=training, rng=rng)
    if state.mode == "ic-only":
        zeta = ad.cross_entropy(ad.take_rows(out["ic_probs"], labeled_idx), y)
        return zeta, zeta, None, None, out
    zeta = supervised_risk(out["ic_probs"], out["gamma"], labeled_idx, labels_now, enc.num_classes)
    negatives = mi_mod.sample_instance_negatives(rng, enc.segments.counts.tolist())
    mi_i = mi_mod.instance_mi_flat(out["h_nodes"], out["e"], state.disc.w_di, enc, negatives)
    mi_h = mi_mod.hier_mi(out["e"], out["gamma"], state.disc.w_dh, rng)
    loss = total_loss(zeta, mi_mod.hgmi(mi_i, mi_h, cfg.alpha_weight), cfg.beta_mi)
    if cfg.attn_diversity_coeff > 0.0:
        loss = ad.add(
            loss,
            ad.mul_scalar(batched_attention_disagreement(out["att"], enc), cfg.attn_diversity_coeff),
        )
    return loss, zeta, mi_i, mi_h, out


def _optimize_phase(state, enc, cfg, labeled_idx, labels_now, rng, epochs, loss_log):
    """Full-batch epochs with early stopping on the supervised risk."""
    params = state.named_params()
    best = np.inf
    stale = 0
    for _ in range(epochs):
        loss, zeta, _, _, _ = _forward_loss(state, enc, cfg, labeled_idx, labels_now, True, rng)
        ad.zero_grad([p for _, p in params])
        ad.backward(loss)
        adam_step(params, state.adam)
        loss_log.append(loss.item())
        z = zeta.item()
        if z < best - cfg.early_stop_min_delta:
            best = z
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break


def train(h: HierarchicalGraph, cfg: TrainConfig, mode="seal"):
    """Train one model; for mode 'seal-ci' runs the cautious iteration.

    Iteration t optimizes on the current training set, re-encodes, then
    selects the t*lambda most confident agreeing unlabeled instances;
    the next training set is always the original labels plus the fresh
    selection. All other modes are the t=0 phase alone.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    cfg.check()
    if not h.labeled_ids:
        raise ValueError("training needs at least one labeled instance")
    if len(h.instances) < 2:
        raise ValueError("training needs at least two instances")
    enc = EncodedGraph(h, dtype=np.dtype(cfg.dtype))
    root = np.random.SeedSequence([int(cfg.seed)])
    init_ss, train_ss = root.spawn(2)
    rng = np.random.Generator(np.random.PCG64(train_ss))
    state = _init_state(mode, enc, cfg, np.random.Generator(np.random.PCG64(init_ss)))

    orig_idx = np.array(h.labeled_ids, dtype=np.int64)
    orig_labels = np.array([h.instances[i].label for i in h.labeled_ids], dtype=np.int64)
    labeled_idx, labels_now = orig_idx, orig_labels
    committed: list = []
    n_unlabeled = len(h.unlabeled_ids)
    report = TrainReport(mode=mode)

    t = 0
    while True:
        if not cfg.warm_start and t > 0:
            reinit_rng = np.random.Generator(np.random.PCG64(root.spawn(1)[0]))
            state = _init_state(mode, enc, cfg, reinit_rng)
        epochs = cfg.epochs_per_iteration
        if t == 0 and cfg.warmup_epochs is not None:
            epochs = cfg.warmup_epochs
        _optimize_phase(state, enc, cfg, labeled_idx, labels_now, rng, epochs, report.epoch_losses)

        loss, zeta_enl, mi_i, mi_h, out = _forward_loss(
            state, enc, cfg, labeled_idx, labels_now, False, rng
        )
        if state.mode in ("seal", "seal-ci"):
            ic_probs, gamma = out["ic_probs"].data, out["gamma"].data
            final_probs = gamma
            zeta_orig = supervised_risk(
                out["ic_probs"], out["gamma"], orig_idx, orig_labels, enc.num_classes
            ).item()
        else:
            final_probs = out["gamma" if state.mode == "hc-only" else "ic_probs"].data
            ic_probs = gamma = final_probs
            y = _onehot(orig_labels, enc.num_classes)
            zeta_orig = ad.cross_entropy(ad.take_rows(ad.tensor(final_probs), orig_idx), y).item()

        if mode == "seal-ci":
            selected = cautious_select(ic_probs, gamma, h.unlabeled_ids, t * cfg.lambda_per_iter)
            if cfg.freeze_pseudo_labels:
                known = {i for i, _, _ in committed}
                budget = t * cfg.lambda_per_iter - len(committed)
                committed = committed + [s for s in selected if s[0] not in known][: max(0, budget)]
            else:
                committed = selected
        else:
            committed = []

        if h.test_ids:
            y_true = np.array([h.instances[i].label for i in h.test_ids])
            y_pred = final_probs[list(h.test_ids)].argmax(axis=1)
            acc = float(np.mean(y_pred == y_true))
            f1 = macro_f1_score(y_true, y_pred, enc.num_classes)
        else:
            acc = f1 = float("nan")
        report.iterations.append(
            IterationRecord(
                iteration=t,
                zeta_orig=zeta_orig,
                zeta_enlarged=zeta_enl.item(),
                mi_instance=mi_i.item() if mi_i is not None else 0.0,
                mi_hier=mi_h.item() if mi_h is not None else 0.0,
                loss=loss.item(),
                accuracy=acc,
                macro_f1=f1,
                selected=list(committed),
            )
        )

        t += 1
        if mode != "seal-ci" or t > cfg.max_iterations or t * cfg.lambda_per_iter > n_unlabeled:
            break
        labeled_idx = np.concatenate((orig_idx, np.array([i for i, _, _ in committed], dtype=np.int64)))
        labels_now = np.concatenate(
            (orig_labels, np.array([y for _, y, _ in committed], dtype=np.int64))
        )
    return state, report


def train_seal(h, cfg: TrainConfig):
    return train(h, cfg, mode="seal")


def train_seal_ci(h, cfg: TrainConfig):
    return train(h, cfg, mode="seal-ci")


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(state: ModelState, path):
    doc = {
        "schema_version": CHECKPOINT_VERSION,
        "mode": state.mode,
        "num_classes": state.num_classes,
        "feature_dim": state.feature_dim,
        "dropout": state.ic.dropout if state.ic is not None else None,
        "params": params_to_dict(state.named_params()),
        "adam": {
            "lr": state.adam.lr,
            "beta1": state.adam.beta1,
            "beta2": state.adam.beta2,
            "eps": state.adam.eps,
            "step": state.adam.step,
            "m": {k: [float(x) for x in v.reshape(-1)] for k, v in sorted(state.adam.m.items())},
            "v": {k: [float(x) for x in v.reshape(-1)] for k, v in sorted(state.adam.v.items())},
        },
    }
    write_text_atomic(path, canonical_json(doc))


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if doc.get("schema_version") != CHECKPOINT_VERSION:
        raise DatasetVersionError(
            f"checkpoint schema_version {doc.get('schema_version')!r} unsupported"
        )
    mode = doc["mode"]
    if mode not in MODES:
        raise DatasetFormatError(f"checkpoint has unknown mode {mode!r}")
    tensors = params_from_dict(doc["params"])
    ic = hc = disc = None
    if "ic.w0" in tensors:
        ic = ICParams(
            w0=tensors["ic.w0"],
            w1=tensors["ic.w1"],
            w_s1=tensors["ic.w_s1"],
            w_s2=tensors["ic.w_s2"],
            w_head=tensors["ic.w_head"],
            b_head=tensors["ic.b_head"],
            dropout=doc["dropout"],
            w_hid=tensors.get("ic.w_hid"),
            b_hid=tensors.get("ic.b_hid"),
        )
    if "hc.v0" in tensors:
        hc = HCParams(v0=tensors["hc.v0"], v1=tensors["hc.v1"])
    if "disc.w_di" in tensors:
        disc = DiscParams(w_di=tensors["disc.w_di"], w_dh=tensors["disc.w_dh"])
    a = doc["adam"]
    shapes = {name: np.asarray(doc["params"][name]["shape"], dtype=int) for name in doc["params"]}
    adam = AdamState(
        lr=a["lr"],
        beta1=a["beta1"],
        beta2=a["beta2"],
        eps=a["eps"],
        step=a["step"],
        m={k: np.asarray(v).reshape(shapes[k]) for k, v in a["m"].items()},
        v={k: np.asarray(v).reshape(shapes[k]) for k, v in a["v"].items()},
    )
    return ModelState(
        mode=mode,
        num_classes=doc["num_classes"],
        feature_dim=doc["feature_dim"],
        ic=ic,
        hc=hc,
        disc=disc,
        adam=adam,
    )
