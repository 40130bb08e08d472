"""Cascade log-likelihood per window, with observer-bias correction.

For window ``t`` the likelihood scores two groups against the combined
activation probability ``1 - (1 - p_peer)(1 - p_ext)``:

* users activating during ``t`` contribute ``log`` of that probability;
* users still inactive at ``t`` contribute the log survival probability
  ``log((1 - p_peer)(1 - p_ext))``, weighted by the correction factor
  ``c(t) = 1 + alpha * N_all / N_inactive(t)`` that compensates for the
  unobserved pool of never-activating users.

Window 0 holds the cascade seeds; their activation is conditioned on,
so window 0 contributes only its survival term.

All probabilities are clamped to ``[1e-12, 1 - 1e-12]`` before any log
so boundary parameter proposals stay finite; activations that the model
deems impossible (peer and exogenous probability both zero) are counted
as clamp hits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import Cascade, activity_masks
from .graph import SocialGraph
from .models import EndogenousModel, peer_probability

__all__ = [
    "PROB_FLOOR",
    "CorrectionConfig",
    "WindowLikelihood",
    "correction_factor",
    "window_value",
    "window_loglik",
    "total_loglik",
]

PROB_FLOOR = 1e-12


def _clamped(p):
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


@dataclass(frozen=True)
class CorrectionConfig:
    """Observer-bias correction: ``alpha`` = virtual-population fraction.

    ``n_all`` defaults to the graph size; set it larger to model an
    unobserved population beyond the collected network.
    """

    alpha: float = 0.0
    n_all: int | None = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")

    def resolve_n_all(self, g: SocialGraph) -> int:
        return self.n_all if self.n_all is not None else g.n_nodes


@dataclass(frozen=True)
class WindowLikelihood:
    """One window's log-likelihood and the counts behind it."""

    value: float
    n_activated: int
    n_inactive: int
    c: float
    clamp_hits: int


def correction_factor(cfg: CorrectionConfig, n_inactive: int,
                      n_all: int) -> float:
    """c = 1 + alpha * n_all / n_inactive (1 exactly when alpha == 0)."""
    if cfg.alpha == 0.0:
        return 1.0
    if n_inactive <= 0:
        raise ValueError(
            "correction factor undefined with no inactive users; "
            "the empty survival term does not use it")
    return 1.0 + cfg.alpha * (n_all / n_inactive)


def window_value(pp_activated: np.ndarray, pp_inactive: np.ndarray,
                 p_ext: float, c: float,
                 skip_activated: bool = False) -> tuple[float, int]:
    """Core window formula from pre-evaluated peer probabilities.

    Returns ``(value, clamp_hits)`` where clamp hits count activations
    the model deems impossible (both probabilities zero before
    clamping).
    """
    clamp_hits = 0
    value = 0.0
    if not skip_activated and pp_activated.size:
        clamp_hits = int(np.count_nonzero((pp_activated <= 0.0) & (p_ext <= 0.0)))
        pp = _clamped(pp_activated)
        pe = float(_clamped(p_ext))
        combined = pp + pe - pp * pe
        value += float(np.sum(np.log(combined)))
    if pp_inactive.size:
        pp = _clamped(pp_inactive)
        pe = float(_clamped(p_ext))
        survival = float(np.sum(np.log1p(-pp))) + pp_inactive.size * np.log1p(-pe)
        value += c * survival
    return value, clamp_hits


def window_loglik(g: SocialGraph, c: Cascade, t: int, model: EndogenousModel,
                  p_ext: float, cfg: CorrectionConfig) -> WindowLikelihood:
    """Log-likelihood of window ``t`` under the given influences.

    ``p_ext`` is the exogenous activation probability of window ``t``,
    shared by every not-yet-active user. Peer probabilities are
    evaluated against the users active strictly before ``t``.
    """
    if not 0.0 <= p_ext <= 1.0:
        raise ValueError(f"p_ext must be in [0, 1], got {p_ext}")
    _, activated_in, inactive = activity_masks(c, t)
    pp = peer_probability(model, g, c, t)
    n_act = int(np.count_nonzero(activated_in))
    n_inact = int(np.count_nonzero(inactive))
    factor = correction_factor(cfg, n_inact, cfg.resolve_n_all(g)) if n_inact else 1.0
    value, clamp_hits = window_value(
        pp[activated_in], pp[inactive], p_ext, factor, skip_activated=(t == 0))
    return WindowLikelihood(value, n_act, n_inact, factor, clamp_hits)


def total_loglik(g: SocialGraph, c: Cascade, model: EndogenousModel,
                 series: np.ndarray, cfg: CorrectionConfig) -> float:
    """Sum of window log-likelihoods over the whole horizon.

    Windows are evaluated independently and reduced in fixed order, so
    the result is deterministic for identical inputs.
    """
    series = np.asarray(series, dtype=np.float64)
    if series.shape != (c.horizon,):
        raise ValueError(
            f"series length {series.size} does not match horizon {c.horizon}")
    values = np.array([
        window_loglik(g, c, t, model, float(series[t]), cfg).value
        for t in range(c.horizon)
    ])
    return float(np.sum(values))
