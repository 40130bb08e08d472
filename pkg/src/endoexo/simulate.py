"""Synthetic activation cascades with ground-truth activation types.

The simulation seeds a handful of users at window 0 and then advances in
discrete windows: every still-inactive user draws endogenous activation
against the users active strictly before the current window, and
exogenous activation against the profile value of the window. The two
draws are independent, which realizes the combined activation
probability ``1 - (1 - p_peer)(1 - p_ext)`` and labels most activations
directly; users for whom both draws succeed in the same window are
credited to either source with probability 1/2.

Randomness comes from counter-based Philox streams keyed on the run
seed, one stream per window, so a window's draws do not depend on how
many draws other windows consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cascade import Cascade, SessionTable
from .graph import SocialGraph, active_peer_counts
from .models import (EndogenousModel, ExogenousProfile, peer_prob_log,
                     peer_prob_si, render_profile)

__all__ = [
    "TRUTH_LABELS",
    "SimConfig",
    "SimOutcome",
    "simulate",
    "ground_truth_series",
    "outcome_sessions",
]

TRUTH_LABELS = ("seed", "endogenous", "exogenous", "never")


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one synthetic cascade."""

    model: EndogenousModel
    profile: ExogenousProfile
    n_seeds: int
    horizon: int
    rng_seed: int
    window_width: float = 30.0

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ValueError("need at least one seed user")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class SimOutcome:
    """Simulated cascade plus the per-user ground-truth activation type."""

    cascade: Cascade
    truth: np.ndarray  # one of TRUTH_LABELS per user
    series: np.ndarray  # the rendered exogenous profile actually used
    seeds: np.ndarray


def _window_rng(seed: int, window: int) -> np.random.Generator:
    # separate windows by 2**128 counter blocks: streams never overlap
    return np.random.Generator(np.random.Philox(key=seed, counter=window << 128))


def _peer_probs(g: SocialGraph, act_window: np.ndarray, t: int,
                model: EndogenousModel, rows: np.ndarray) -> np.ndarray:
    active_before = (act_window >= 0) & (act_window < t)
    if model.kind == "exp" and model.lam > 0:
        w = np.zeros(g.n_nodes)
        ages = t - act_window[active_before]
        w[active_before] = np.log1p(-model.p0 * np.exp(-model.lam * ages))
        return -np.expm1(g.adjacency.dot(w))[rows]
    counts = active_peer_counts(g, active_before)[rows]
    if model.kind == "log":
        return peer_prob_log(counts, model.k, model.a0)
    return peer_prob_si(counts, model.p0)


def simulate(g: SocialGraph, cfg: SimConfig) -> SimOutcome:
    """Run one cascade; deterministic for identical (graph, config)."""
    n = g.n_nodes
    if cfg.n_seeds > n:
        raise ValueError(f"{cfg.n_seeds} seeds requested on {n} nodes")
    series = render_profile(cfg.profile, cfg.horizon)
    act_window = np.full(n, -1, dtype=np.int64)
    truth = np.full(n, "never", dtype="U10")

    seeds = np.sort(_window_rng(cfg.rng_seed, 0).choice(n, cfg.n_seeds,
                                                        replace=False))
    act_window[seeds] = 0
    truth[seeds] = "seed"

    for t in range(1, cfg.horizon):
        inactive = np.flatnonzero(act_window < 0)
        if inactive.size == 0:
            break
        rng = _window_rng(cfg.rng_seed, t)
        u = rng.random((inactive.size, 2))
        pp = _peer_probs(g, act_window, t, cfg.model, inactive)
        endo_hit = u[:, 0] < pp
        exo_hit = u[:, 1] < series[t]
        both = np.flatnonzero(endo_hit & exo_hit)
        if both.size:
            coin = rng.random(both.size) < 0.5
            endo_hit[both] = coin
            exo_hit[both] = ~coin
        newly = inactive[endo_hit | exo_hit]
        act_window[newly] = t
        truth[inactive[endo_hit]] = "endogenous"
        truth[inactive[exo_hit]] = "exogenous"

    times = np.where(act_window >= 0, act_window * cfg.window_width, -1.0)
    cascade = Cascade(times, cfg.window_width, cfg.horizon)
    return SimOutcome(cascade=cascade, truth=truth, series=series, seeds=seeds)


def ground_truth_series(outcome: SimOutcome) -> tuple[np.ndarray, np.ndarray]:
    """Per-window counts of truly endogenous / exogenous activations."""
    T = outcome.cascade.horizon
    endo = np.zeros(T, dtype=np.int64)
    exo = np.zeros(T, dtype=np.int64)
    w = outcome.cascade.windows
    for label, out in (("endogenous", endo), ("exogenous", exo)):
        sel = (outcome.truth == label) & (w >= 0)
        np.add.at(out, w[sel], 1)
    return endo, exo


#: truth label -> referrer_class used when persisting simulated sessions
_TRUTH_TO_CLASS = {"seed": "unknown", "endogenous": "share",
                   "exogenous": "external"}


def outcome_sessions(g: SocialGraph, outcome: SimOutcome) -> SessionTable:
    """Session table of the activated users, for the standard ingestion path.

    Truth labels are mapped into ``referrer_class`` (endogenous ->
    share, exogenous -> external, seeds -> unknown); users that never
    activated have no session row.
    """
    activated = np.flatnonzero(outcome.cascade.activated)
    degrees = g.degrees
    return SessionTable(
        user_id=g.ext_ids[activated],
        time_login=outcome.cascade.activation_time[activated].astype(np.int64),
        time_share=np.full(activated.size, -1, dtype=np.int64),
        referrer_id=np.full(activated.size, -1, dtype=np.int64),
        referrer_class=[_TRUTH_TO_CLASS[outcome.truth[i]] for i in activated],
        friend_count=degrees[activated],
        choice_id=np.full(activated.size, -1, dtype=np.int64),
    )
