"""Exact information measures on finite three-variable joints.

Everything here works on an explicit joint probability array over the
axes (G, E, R) - inputs, instance representations, hierarchy
representations - and is used to check the decomposition identities
that justify estimating the three-way interaction information as a
scaled sum of two pairwise mutual informations. Natural logarithms;
compensated summation keeps violations at float-noise level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AXIS_G, AXIS_E, AXIS_R = 0, 1, 2


@dataclass(frozen=True)
class JointDistribution3:
    """Joint probabilities over three finite alphabets."""

    p: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.p, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"expected 3-D joint, got shape {arr.shape}")
        if np.any(arr < 0):
            raise ValueError("negative probability")
        if abs(arr.sum() - 1.0) > 1e-12:
            raise ValueError(f"joint sums to {arr.sum()!r}, not 1")
        object.__setattr__(self, "p", arr)


def _entropy(p):
    flat = np.asarray(p, dtype=np.float64).reshape(-1)
    return -math.fsum(x * math.log(x) for x in flat if x > 0.0)


def _marginal(joint: JointDistribution3, keep):
    drop = tuple(ax for ax in (0, 1, 2) if ax not in keep)
    return joint.p.sum(axis=drop)


def exact_mi(joint: JointDistribution3, a, b):
    """I(A;B) = H(A) + H(B) - H(A,B), axes a, b in {0, 1, 2}."""
    if a == b:
        raise ValueError("exact_mi needs two distinct axes")
    return _entropy(_marginal(joint, (a,))) + _entropy(_marginal(joint, (b,))) - _entropy(
        _marginal(joint, tuple(sorted((a, b))))
    )


def exact_mi_joint(joint: JointDistribution3, a, pair):
    """I(A;(B,C)) where pair is the tuple of the two other axes."""
    return (
        _entropy(_marginal(joint, (a,)))
        + _entropy(_marginal(joint, tuple(sorted(pair))))
        - _entropy(joint.p)
    )


def exact_cond_mi(joint: JointDistribution3, a, b, given):
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C)."""
    if len({a, b, given}) != 3:
        raise ValueError("exact_cond_mi needs three distinct axes")
    return (
        _entropy(_marginal(joint, tuple(sorted((a, given)))))
        + _entropy(_marginal(joint, tuple(sorted((b, given)))))
        - _entropy(joint.p)
        - _entropy(_marginal(joint, (given,)))
    )


def interaction_info(joint: JointDistribution3):
    """I(G;E;R) = I(G;E) - I(G;E|R)."""
    return exact_mi(joint, AXIS_G, AXIS_E) - exact_cond_mi(joint, AXIS_G, AXIS_E, AXIS_R)


# ---------------------------------------------------------------------------
# samplers


def _simplex(rng, size):
    z = np.exp(rng.standard_normal(size))
    return z / z.sum(axis=-1, keepdims=True)


def random_markov_chain(rng, sizes):
    """Joint p(g) p(e|g) p(r|e): the chain G -> E -> R holds by construction."""
    ng, ne, nr = sizes
    pg = _simplex(rng, ng)
    pe_g = _simplex(rng, (ng, ne))
    pr_e = _simplex(rng, (ne, nr))
    return JointDistribution3(pg[:, None, None] * pe_g[:, :, None] * pr_e[None, :, :])


def random_joint(rng, sizes):
    """Unconstrained full-support joint."""
    return JointDistribution3(_simplex(rng, int(np.prod(sizes))).reshape(sizes))


# ---------------------------------------------------------------------------
# theorem checks


@dataclass
class CheckResult:
    check: str
    trials: int
    max_violation: float
    threshold: float

    @property
    def passed(self):
        return self.max_violation < self.threshold


CHECKS = (
    "markov_cond_mi_zero",
    "interaction_equals_mi_g_r",
    "joint_mi_lower_bound_markov",
    "joint_mi_lower_bound_random",
    "joint_mi_upper_bound_markov",
    "alpha_in_half_interval",
)


def verify_theorems(trials, size_choices=(2, 3, 4, 5), rng=None, denom_floor=1e-9):
    """Check the decomposition identities on random joints.

    Per trial one Markov-chain joint (and one unconstrained joint for
    the unconditional lower bound) with alphabet sizes drawn from
    size_choices. Returns one CheckResult per identity:

    - I(G;R|E) = 0 under the chain
    - I(G;E;R) = I(G;R) under the chain
    - I(E;(G,R)) >= (I(E;G) + I(E;R)) / 2 for any joint
    - I(E;(G,R)) <= I(E;G) + I(E;R) under the chain
    - alpha = I(G;E;R) / (I(G;E) + I(E;R)) in [0, 1/2] when the
      denominator exceeds denom_floor
    """
    if rng is None:
        rng = np.random.default_rng(0)
    choices = tuple(int(s) for s in size_choices)
    worst = {name: 0.0 for name in CHECKS}
    for _ in range(trials):
        sizes = tuple(int(rng.choice(choices)) for _ in range(3))
        chain = random_markov_chain(rng, sizes)
        ig_e = exact_mi(chain, AXIS_G, AXIS_E)
        ie_r = exact_mi(chain, AXIS_E, AXIS_R)
        ig_r = exact_mi(chain, AXIS_G, AXIS_R)
        inter = interaction_info(chain)
        joint_e = exact_mi_joint(chain, AXIS_E, (AXIS_G, AXIS_R))

        worst["markov_cond_mi_zero"] = max(
            worst["markov_cond_mi_zero"], abs(exact_cond_mi(chain, AXIS_G, AXIS_R, AXIS_E))
        )
        worst["interaction_equals_mi_g_r"] = max(
            worst["interaction_equals_mi_g_r"], abs(inter - ig_r)
        )
        worst["joint_mi_lower_bound_markov"] = max(
            worst["joint_mi_lower_bound_markov"], 0.5 * (ig_e + ie_r) - joint_e
        )
        worst["joint_mi_upper_bound_markov"] = max(
            worst["joint_mi_upper_bound_markov"], joint_e - (ig_e + ie_r)
        )
        denom = ig_e + ie_r
        if denom > denom_floor:
            alpha = inter / denom
            worst["alpha_in_half_interval"] = max(
                worst["alpha_in_half_interval"], -alpha, alpha - 0.5
            )

        free = random_joint(rng, tuple(int(rng.choice(choices)) for _ in range(3)))
        lower = 0.5 * (
            exact_mi(free, AXIS_E, AXIS_G) + exact_mi(free, AXIS_E, AXIS_R)
        ) - exact_mi_joint(free, AXIS_E, (AXIS_G, AXIS_R))
        worst["joint_mi_lower_bound_random"] = max(worst["joint_mi_lower_bound_random"], lower)

    thresholds = {
        "markov_cond_mi_zero": 1e-10,
        "interaction_equals_mi_g_r": 1e-9,
        "joint_mi_lower_bound_markov": 1e-12,
        "joint_mi_lower_bound_random": 1e-12,
        "joint_mi_upper_bound_markov": 1e-12,
        "alpha_in_half_interval": 1e-10,
    }
    return [CheckResult(name, trials, worst[name], thresholds[name]) for name in CHECKS]


def report_csv(results):
    lines = ["check,trials,max_violation,pass"]
    for r in results:
        lines.append(f"{r.check},{r.trials},{r.max_violation:.3e},{str(r.passed).lower()}")
    return "\n".join(lines) + "\n"
