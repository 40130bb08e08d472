"""Endogenous influence models and exogenous influence profiles.

Three per-user peer-activation models share one evaluation contract:

* SI  -- every active peer contributes a constant per-window activation
  probability p0, so ``p = 1 - (1 - p0)**a`` for ``a`` active peers.
* EXP -- like SI but a peer's contribution decays exponentially with the
  number of windows since that peer activated, at rate ``lam``.
* LOG -- logistic threshold in the active-peer count (complex contagion);
  note it assigns a nonzero probability even with zero active peers.

SI and EXP are evaluated in log space (sums of ``log1p`` terms) so that
products of many near-one factors keep full precision. Elapsed times for
EXP are integer window differences; ``lam`` is a per-window rate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cascade import Cascade, activity_masks
from .graph import SocialGraph, active_peer_counts

__all__ = [
    "MODEL_KINDS",
    "EndogenousModel",
    "ExogenousProfile",
    "peer_prob_si",
    "peer_prob_exp",
    "peer_prob_log",
    "peer_probability",
    "render_profile",
]

logger = logging.getLogger(__name__)

MODEL_KINDS = ("si", "exp", "log")


@dataclass(frozen=True)
class EndogenousModel:
    """Tagged endogenous-model parameter set.

    ``p0`` is used by SI and EXP, ``lam`` (per-window decay rate) by
    EXP, and ``k``/``a0`` (slope and midpoint count) by LOG.
    """

    kind: str
    p0: float = 0.0
    lam: float = 0.0
    k: float = 0.0
    a0: float = 0.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.kind in ("si", "exp") and not 0.0 <= self.p0 <= 1.0:
            raise ValueError(f"p0 must be in [0, 1], got {self.p0}")
        if self.kind == "exp" and self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.kind == "log":
            if not np.isfinite(self.k):
                raise ValueError("k must be finite")
            if self.a0 < 0:
                raise ValueError(f"a0 must be >= 0, got {self.a0}")

    def params(self) -> dict[str, float]:
        """Free parameters of this model kind, in optimization order."""
        if self.kind == "si":
            return {"p0": self.p0}
        if self.kind == "exp":
            return {"p0": self.p0, "lam": self.lam}
        return {"k": self.k, "a0": self.a0}

    def replace(self, **values) -> "EndogenousModel":
        merged = {"kind": self.kind, "p0": self.p0, "lam": self.lam,
                  "k": self.k, "a0": self.a0}
        merged.update(values)
        return EndogenousModel(**merged)

    def half_decay_windows(self) -> float:
        """EXP influence half-life in windows (inf when lam == 0)."""
        if self.kind != "exp":
            raise ValueError("half decay is defined for the exp model only")
        return np.log(2) / self.lam if self.lam > 0 else np.inf


def peer_prob_si(active_counts: np.ndarray, p0: float) -> np.ndarray:
    """Peer-activation probability 1 - (1 - p0)^a, evaluated in log space.

    Exact 0 for users with no active peers (empty product), for any p0.
    """
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must be in [0, 1], got {p0}")
    a = np.asarray(active_counts, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        p = -np.expm1(a * np.log1p(-p0))
    return np.where(a == 0, 0.0, p)


def peer_prob_exp(g: SocialGraph, c: Cascade, t: int, p0: float,
                  lam: float) -> np.ndarray:
    """Peer probability with exponentially decaying per-peer contributions.

    A peer that activated in window ``t_j < t`` contributes a factor
    ``1 - p0 * exp(-lam * (t - t_j))``; the per-user product is
    accumulated as a sum of ``log1p`` terms through one sparse mat-vec.
    """
    if not 0.0 <= p0 <= 1.0:
        raise ValueError(f"p0 must be in [0, 1], got {p0}")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    active_before, _, _ = activity_masks(c, t)
    if lam == 0.0:
        # uniform weights: identical to the SI evaluation path
        return peer_prob_si(active_peer_counts(g, active_before), p0)
    w = np.zeros(g.n_nodes)
    ages = t - c.windows[active_before]
    w[active_before] = np.log1p(-p0 * np.exp(-lam * ages))
    s = g.adjacency.dot(w)
    return -np.expm1(s)


def peer_prob_log(active_counts: np.ndarray, k: float, a0: float) -> np.ndarray:
    """Logistic threshold probability 1 / (1 + exp(-k (a - a0)))."""
    a = np.asarray(active_counts, dtype=np.float64)
    z = k * (a - a0)
    # split by sign to avoid overflow in exp
    out = np.empty_like(a)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def peer_probability(model: EndogenousModel, g: SocialGraph, c: Cascade,
                     t: int) -> np.ndarray:
    """Per-node peer-activation probability at window ``t``.

    Peers active strictly before ``t`` exert influence; the returned
    vector covers every node (it is meaningful for users not yet active
    at ``t``, and reported for the rest as well).
    """
    if model.kind == "exp":
        return peer_prob_exp(g, c, t, model.p0, model.lam)
    active_before, _, _ = activity_masks(c, t)
    counts = active_peer_counts(g, active_before)
    if model.kind == "si":
        return peer_prob_si(counts, model.p0)
    return peer_prob_log(counts, model.k, model.a0)


@dataclass(frozen=True)
class ExogenousProfile:
    """Recipe for a per-window exogenous activation probability series.

    Shapes:

    * ``constant``: ``level`` everywhere.
    * ``spike-exponential``: sum of events, each contributing
      ``peak * exp(-rate * (t - start))`` from its start window on.
    * ``linear-decay``: ``level`` at window 0 falling linearly to 0 at
      the last window.
    * ``sinusoidal``: ``level * (1 + sin(omega t + phase)) / 2``.
    * ``custom``: explicit per-window values.
    """

    shape: str
    level: float = 0.0
    events: tuple[tuple[int, float, float], ...] = ()
    omega: float = 0.0
    phase: float = 0.0
    values: tuple[float, ...] | None = None

    SHAPES = ("constant", "spike-exponential", "linear-decay", "sinusoidal",
              "custom")

    def __post_init__(self):
        if self.shape not in self.SHAPES:
            raise ValueError(
                f"profile shape must be one of {self.SHAPES}, got {self.shape!r}")
        if self.shape in ("constant", "linear-decay", "sinusoidal"):
            if not 0.0 <= self.level <= 1.0:
                raise ValueError(f"level must be in [0, 1], got {self.level}")
        if self.shape == "custom" and self.values is None:
            raise ValueError("custom profile requires explicit values")


def render_profile(profile: ExogenousProfile, horizon: int) -> np.ndarray:
    """Evaluate a profile on windows 0..horizon-1.

    Spike sums exceeding 1 are clipped to 1 (logged); every emitted
    value lies in [0, 1].
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    t = np.arange(horizon, dtype=np.float64)
    if profile.shape == "constant":
        return np.full(horizon, profile.level)
    if profile.shape == "spike-exponential":
        p = np.zeros(horizon)
        for start, peak, rate in profile.events:
            if not 0.0 <= peak <= 1.0:
                raise ValueError(f"event peak must be in [0, 1], got {peak}")
            live = t >= start
            p[live] += peak * np.exp(-rate * (t[live] - start))
        n_clipped = int(np.count_nonzero(p > 1.0))
        if n_clipped:
            logger.warning("clipping %d window(s) of spike profile above 1",
                           n_clipped)
            p = np.minimum(p, 1.0)
        return p
    if profile.shape == "linear-decay":
        span = max(horizon - 1, 1)
        return profile.level * np.maximum(0.0, 1.0 - t / span)
    if profile.shape == "sinusoidal":
        return profile.level * (1.0 + np.sin(profile.omega * t + profile.phase)) / 2.0
    # custom
    values = np.asarray(profile.values, dtype=np.float64)
    if values.shape != (horizon,):
        raise ValueError(
            f"custom profile has {values.size} values, horizon is {horizon}")
    if values.min() < 0.0 or values.max() > 1.0:
        raise ValueError("custom profile values must lie in [0, 1]")
    return values.copy()
