"""Per-user attribution: responsibility scores, ROC/AUC, influence.

The exogenous responsibility of an activated user compares the fitted
exogenous probability of its activation window against its fitted peer
probability there; the default ``ratio`` variant is
``p_ext / (p_ext + p_peer)``, 0 for purely endogenous activations and
1 for users without any active peers.

Individual influence apportions every user's endogenous activation mass
back onto the peers that activated earlier: each earlier peer claims a
weight share (uniform, or exponentially decaying with the window gap),
so summed influence conserves the total apportionable endogenous mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import Cascade
from .graph import SocialGraph, active_peer_counts
from .infer import InferenceResult
from .models import peer_probability

__all__ = [
    "RESPONSIBILITY_VARIANTS",
    "ResponsibilityScores",
    "InfluenceScores",
    "RocCurve",
    "responsibility",
    "expected_counts",
    "baseline_scores",
    "roc_auc",
    "peer_prob_at_activation",
    "individual_influence",
    "collective_influence",
]

RESPONSIBILITY_VARIANTS = ("ratio", "softmax", "multiply")

_trapezoid = getattr(np, "trapezoid", np.trapz)


@dataclass(frozen=True)
class ResponsibilityScores:
    """Exogenous responsibility of every activated user.

    Arrays are aligned; ``users`` holds internal node indices in
    ascending order. ``r`` is NaN for model-impossible activations
    (peer and exogenous probability both exactly zero), which are
    counted in ``n_impossible``.
    """

    users: np.ndarray
    r: np.ndarray
    p_peer: np.ndarray
    p_ext: np.ndarray
    variant: str
    n_impossible: int


@dataclass(frozen=True)
class InfluenceScores:
    """Per-node individual influence (0 for users who influenced nobody)."""

    values: np.ndarray
    weighting: str


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def _influences_at_activation(result: InferenceResult, g: SocialGraph,
                              c: Cascade) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(users, p_peer, p_ext) at each activated user's activation window."""
    users = np.flatnonzero(c.activated)
    pp = np.zeros(users.size)
    pe = np.zeros(users.size)
    windows = c.windows[users]
    for t in np.unique(windows):
        sel = windows == t
        probs = peer_probability(result.model, g, c, int(t))
        pp[sel] = probs[users[sel]]
        pe[sel] = result.series[t]
    return users, pp, pe


def responsibility(result: InferenceResult, g: SocialGraph, c: Cascade,
                   variant: str = "ratio") -> ResponsibilityScores:
    """Score how exogenous each activated user's activation was.

    ``ratio``: p_ext / (p_ext + p_peer); ``softmax``:
    exp(p_ext) / (exp(p_ext) + exp(p_peer)); ``multiply``:
    p_ext * (1 - p_peer). Peer probabilities use the converged model
    against the users active strictly before the activation window.
    """
    if variant not in RESPONSIBILITY_VARIANTS:
        raise ValueError(
            f"variant must be one of {RESPONSIBILITY_VARIANTS}, got {variant!r}")
    users, pp, pe = _influences_at_activation(result, g, c)
    if variant == "ratio":
        total = pp + pe
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(total > 0, pe / np.where(total > 0, total, 1.0), np.nan)
        n_impossible = int(np.count_nonzero(total <= 0))
    elif variant == "softmax":
        r = np.exp(pe) / (np.exp(pe) + np.exp(pp))
        n_impossible = 0
    else:
        r = pe * (1.0 - pp)
        n_impossible = 0
    return ResponsibilityScores(users=users, r=r, p_peer=pp, p_ext=pe,
                                variant=variant, n_impossible=n_impossible)


def expected_counts(result: InferenceResult, g: SocialGraph,
                    c: Cascade) -> tuple[np.ndarray, np.ndarray]:
    """Per-window expected endogenous/exogenous activation counts.

    The exogenous count of a window is the summed responsibility of its
    activations; the endogenous count is the remainder of the observed
    activations.
    """
    scores = responsibility(result, g, c, variant="ratio")
    T = c.horizon
    exo = np.zeros(T)
    n_act = np.zeros(T)
    windows = c.windows[scores.users]
    np.add.at(exo, windows, scores.r)
    np.add.at(n_act, windows, 1.0)
    return n_act - exo, exo


def baseline_scores(g: SocialGraph, c: Cascade) -> np.ndarray:
    """Exogenousness baseline: minus the active-peer count at activation.

    Aligned with ``np.flatnonzero(c.activated)``. Score 0 (no active
    peers) marks the classic "no active peers => exogenous" rule as the
    threshold-at-zero point of this scorer.
    """
    users = np.flatnonzero(c.activated)
    counts = np.zeros(users.size)
    windows = c.windows[users]
    for t in np.unique(windows):
        sel = windows == t
        active_before = c.activated & (c.windows < t)
        counts[sel] = active_peer_counts(g, active_before)[users[sel]]
    return -counts


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """ROC curve from a threshold sweep over the unique scores.

    Tied scores enter as a single sweep point, so the trapezoidal AUC
    equals the normalized Mann-Whitney U statistic (ties counted 1/2).
    Raises when either class is empty.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels must have identical shape")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    boundary = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[boundary]
    fp = np.cumsum(~y)[boundary]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[boundary]]
    auc = float(_trapezoid(tpr, fpr))
    return RocCurve(thresholds=thresholds, tpr=tpr, fpr=fpr, auc=auc)


def peer_prob_at_activation(result: InferenceResult, g: SocialGraph,
                            c: Cascade) -> np.ndarray:
    """Fitted peer probability of each user at its activation window.

    Full-length vector; never-activated users get 0. This is the
    model-based endogenous activation mass used by
    :func:`individual_influence`.
    """
    users, pp, _ = _influences_at_activation(result, g, c)
    out = np.zeros(g.n_nodes)
    out[users] = pp
    return out


def individual_influence(g: SocialGraph, c: Cascade, endo_prob: np.ndarray,
                         weighting: str = "uniform",
                         lam: float = 0.0) -> InfluenceScores:
    """Apportion endogenous activation mass back to earlier-active peers.

    Every activated user j with at least one peer active strictly
    before it splits ``endo_prob[j]`` among those peers, each peer i
    claiming weight 1 (uniform) or ``exp(-lam * (t_j - t_i))``
    (exp-decay, window units) normalized over all claimants.
    """
    if weighting not in ("uniform", "exp-decay"):
        raise ValueError(f"unknown weighting {weighting!r}")
    endo_prob = np.asarray(endo_prob, dtype=np.float64)
    if endo_prob.shape != (g.n_nodes,):
        raise ValueError("endo_prob must have one entry per node")
    if endo_prob.size and (endo_prob.min() < 0 or endo_prob.max() > 1):
        raise ValueError("endo_prob entries must lie in [0, 1]")
    values = np.zeros(g.n_nodes)
    indptr, indices = g.adjacency.indptr, g.adjacency.indices
    w = c.windows
    for j in np.flatnonzero(c.activated):
        if endo_prob[j] == 0.0:
            continue
        peers = indices[indptr[j]:indptr[j + 1]]
        prior = peers[(w[peers] >= 0) & (w[peers] < w[j])]
        if prior.size == 0:
            continue
        if weighting == "uniform":
            shares = np.full(prior.size, 1.0 / prior.size)
        else:
            claim = np.exp(-lam * (w[j] - w[prior]))
            shares = claim / claim.sum()
        values[prior] += shares * endo_prob[j]
    return InfluenceScores(values=values, weighting=weighting)


def collective_influence(scores: InfluenceScores, group) -> float:
    """Mean individual influence over a non-empty group of node indices."""
    group = np.asarray(group, dtype=np.int64)
    if group.size == 0:
        raise ValueError("group must be non-empty")
    return float(scores.values[group].mean())
