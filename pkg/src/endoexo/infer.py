"""Alternating maximum-likelihood inference of peer and external influence.

One global endogenous parameter set is assumed constant over the whole
observation period, while the exogenous activation probability gets an
independent value per window. The joint problem (T + #endogenous
parameters) is solved by coordinate ascent:

1. initialize by maximizing every window's likelihood separately over
   (endogenous params, p_ext(t));
2. fix the exogenous series, fit the global endogenous parameters;
3. fix the endogenous parameters, refit p_ext(t) window by window;
4. repeat 2-3 until both stop moving.

Every half-step is a conditional maximization guarded against
regressions (a candidate that scores below the incumbent is discarded),
so the total log-likelihood is non-decreasing across half-steps. There
is no global convergence guarantee; hitting the iteration cap returns a
flagged, best-so-far result instead of raising.

Scalar maximizations use a coarse log-spaced bracketing grid followed by
bounded Brent refinement; multi-parameter fits use a bounded truncated
Newton method with finite-difference gradients, with a one-parameter
lattice sweep as the global search / fallback for two-parameter models.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as opt_mod

from .cascade import Cascade, activity_masks
from .graph import SocialGraph, active_peer_counts
from .likelihood import (CorrectionConfig, correction_factor, window_loglik,
                         window_value)
from .models import EndogenousModel, peer_prob_log, peer_prob_si

__all__ = [
    "DEFAULT_BOUNDS",
    "OptimizerSpec",
    "InferenceResult",
    "WindowCache",
    "init_per_window",
    "fit_endogenous_given_ext",
    "fit_ext_given_endogenous",
    "alternate",
]

DEFAULT_BOUNDS = {
    "p0": (1e-8, 0.999),
    "p_ext": (1e-8, 0.999),
    "lam": (0.0, 10.0),
    "k": (0.0, 20.0),
    "a0": (0.0, None),  # None: resolved to the max degree of the graph
}


@dataclass(frozen=True)
class OptimizerSpec:
    """Knobs of the bounded local optimizer and its grid fallbacks.

    ``method`` names the scipy multi-parameter minimizer (bounded,
    gradient-free or finite-difference); scalar fits always use a
    bracketing grid of ``grid_size`` log-spaced points plus bounded
    Brent refinement. ``lattice_size`` controls the one-parameter
    lattice used for the two-parameter model kinds.
    """

    method: str = "TNC"
    max_iter: int = 200
    tol: float = 1e-10
    grid_size: int = 13
    lattice_size: int = 25
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))

    def bound(self, name: str, g: SocialGraph | None = None) -> tuple[float, float]:
        lo, hi = self.bounds.get(name, DEFAULT_BOUNDS[name])
        if hi is None:
            hi = float(max(g.degrees.max(), 1)) if g is not None else 25.0
        return float(lo), float(hi)


@dataclass
class InferenceResult:
    """Converged influence estimates plus convergence diagnostics.

    ``deltas`` holds per-iteration (max endogenous parameter change,
    summed absolute exogenous change); ``loglik_trace`` the total
    log-likelihood after init and after every half-step.
    """

    model: EndogenousModel
    series: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    deltas: list[tuple[float, float]]
    loglik_trace: list[float]
    clamp_hits: int
    init_series: np.ndarray
    init_params: dict[str, np.ndarray]
    diagnostics: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "model": {"kind": self.model.kind, **self.model.params()},
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "deltas": [[float(a), float(b)] for a, b in self.deltas],
            "loglik_trace": [float(v) for v in self.loglik_trace],
            "clamp_hits": self.clamp_hits,
            "diagnostics": dict(self.diagnostics),
            "p_ext": [float(v) for v in self.series],
        }


class WindowCache:
    """Per-window index sets, peer counts, and correction factors.

    Built once per (graph, cascade, correction) triple so that repeated
    likelihood evaluations inside the optimizers skip the mask and
    sparse work. For the EXP model, per-window adjacency blocks
    (not-yet-active rows x active columns) are built lazily.
    """

    def __init__(self, g: SocialGraph, c: Cascade, cfg: CorrectionConfig):
        self.g, self.c, self.cfg = g, c, cfg
        self.n_all = cfg.resolve_n_all(g)
        T = c.horizon
        self.idx_act: list[np.ndarray] = []
        self.idx_inact: list[np.ndarray] = []
        self.counts_act: list[np.ndarray] = []
        self.counts_inact: list[np.ndarray] = []
        self.factors: list[float] = []
        for t in range(T):
            before, act, inact = activity_masks(c, t)
            ia, ii = np.flatnonzero(act), np.flatnonzero(inact)
            counts = active_peer_counts(g, before)
            self.idx_act.append(ia)
            self.idx_inact.append(ii)
            self.counts_act.append(counts[ia])
            self.counts_inact.append(counts[ii])
            self.factors.append(
                correction_factor(cfg, ii.size, self.n_all) if ii.size else 1.0)
        self._exp_blocks = None

    @property
    def horizon(self) -> int:
        return self.c.horizon

    def exp_blocks(self):
        """Per-window (A_act, A_inact, ages) blocks for EXP evaluation."""
        if self._exp_blocks is None:
            blocks = []
            adj = self.g.adjacency
            for t in range(self.horizon):
                before = (self.c.windows >= 0) & (self.c.windows < t)
                ib = np.flatnonzero(before)
                ages = (t - self.c.windows[ib]).astype(np.float64)
                a_act = adj[self.idx_act[t]][:, ib].tocsr()
                a_inact = adj[self.idx_inact[t]][:, ib].tocsr()
                blocks.append((a_act, a_inact, ages))
            self._exp_blocks = blocks
        return self._exp_blocks

    def peer_probs(self, model: EndogenousModel,
                   t: int) -> tuple[np.ndarray, np.ndarray]:
        """(pp over activated-in-t rows, pp over inactive rows)."""
        if model.kind == "si":
            return (peer_prob_si(self.counts_act[t], model.p0),
                    peer_prob_si(self.counts_inact[t], model.p0))
        if model.kind == "log":
            return (peer_prob_log(self.counts_act[t], model.k, model.a0),
                    peer_prob_log(self.counts_inact[t], model.k, model.a0))
        if model.lam == 0.0:
            return (peer_prob_si(self.counts_act[t], model.p0),
                    peer_prob_si(self.counts_inact[t], model.p0))
        a_act, a_inact, ages = self.exp_blocks()[t]
        w = np.log1p(-model.p0 * np.exp(-model.lam * ages))
        return -np.expm1(a_act.dot(w)), -np.expm1(a_inact.dot(w))

    def window_value_for(self, model: EndogenousModel, t: int,
                         p_ext: float) -> float:
        pp_act, pp_inact = self.peer_probs(model, t)
        value, _ = window_value(pp_act, pp_inact, p_ext, self.factors[t],
                                skip_activated=(t == 0))
        return value

    def total(self, model: EndogenousModel, series: np.ndarray) -> float:
        values = np.array([
            self.window_value_for(model, t, float(series[t]))
            for t in range(self.horizon)
        ])
        return float(np.sum(values))


def _grid(lo: float, hi: float, n: int, log_spaced: bool) -> np.ndarray:
    if log_spaced and lo > 0:
        return np.geomspace(lo, hi, n)
    if log_spaced:  # lower bound 0: keep 0, distribute the rest in log space
        return np.concatenate([[0.0], np.geomspace(max(hi * 1e-6, 1e-9), hi, n - 1)])
    return np.linspace(lo, hi, n)


def _max_scalar(f, lo: float, hi: float, spec: OptimizerSpec,
                log_spaced: bool = True,
                diag: dict | None = None) -> tuple[float, float]:
    """Maximize f on [lo, hi]: bracketing grid, then bounded Brent.

    Returns (argmax, max). Falls back to the best grid point when the
    local refinement fails, counting the event in ``diag``.
    """
    xs = _grid(lo, hi, spec.grid_size, log_spaced)
    vals = np.array([f(x) for x in xs])
    k = int(np.argmax(vals))
    best_x, best_v = float(xs[k]), float(vals[k])
    a, b = float(xs[max(k - 1, 0)]), float(xs[min(k + 1, xs.size - 1)])
    if a < b:
        try:
            res = opt_mod.minimize_scalar(
                lambda x: -f(x), bounds=(a, b), method="bounded",
                options={"xatol": max(spec.tol, 1e-12), "maxiter": 500})
            if np.isfinite(res.fun) and -res.fun > best_v:
                best_x, best_v = float(np.clip(res.x, lo, hi)), float(-res.fun)
        except Exception:
            if diag is not None:
                diag["grid_fallbacks"] = diag.get("grid_fallbacks", 0) + 1
    return best_x, best_v


def _max_nd(f, x0: np.ndarray, bounds: list[tuple[float, float]],
            spec: OptimizerSpec, diag: dict | None = None):
    """Maximize f with the bounded multi-parameter minimizer.

    Returns (x, value) or None on failure (counted in ``diag``).
    """
    option = "maxfun" if spec.method.upper() == "TNC" else "maxiter"
    try:
        res = opt_mod.minimize(
            lambda x: -f(x), np.asarray(x0, dtype=np.float64),
            bounds=bounds, method=spec.method,
            options={option: spec.max_iter})
        if np.all(np.isfinite(res.x)) and np.isfinite(res.fun):
            x = np.array([np.clip(v, lo, hi) for v, (lo, hi) in zip(res.x, bounds)])
            return x, float(f(x))
    except Exception:
        pass
    if diag is not None:
        diag["optimizer_failures"] = diag.get("optimizer_failures", 0) + 1
    return None


def _map_windows(fn, horizon: int, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(horizon)))
    return [fn(t) for t in range(horizon)]


def _model_from_vec(kind: str, vec) -> EndogenousModel:
    if kind == "si":
        return EndogenousModel("si", p0=float(vec[0]))
    if kind == "exp":
        return EndogenousModel("exp", p0=float(vec[0]), lam=float(vec[1]))
    return EndogenousModel("log", k=float(vec[0]), a0=float(vec[1]))


def _param_grids(kind: str, g: SocialGraph, spec: OptimizerSpec,
                 n: int) -> list[tuple[str, np.ndarray]]:
    if kind == "si":
        lo, hi = spec.bound("p0")
        return [("p0", _grid(lo, hi, n, True))]
    if kind == "exp":
        plo, phi = spec.bound("p0")
        llo, lhi = spec.bound("lam")
        return [("p0", _grid(plo, phi, n, True)),
                ("lam", _grid(llo, lhi, n, True))]
    klo, khi = spec.bound("k")
    alo, ahi = spec.bound("a0", g)
    return [("k", _grid(max(klo, 1e-2), khi, n, True)),
            ("a0", _grid(alo, ahi, n, False))]


def init_per_window(g: SocialGraph, c: Cascade, model_kind: str,
                    cfg: CorrectionConfig, spec: OptimizerSpec = OptimizerSpec(),
                    cache: WindowCache | None = None, workers: int = 1,
                    diag: dict | None = None
                    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Independent per-window joint fits of (endogenous params, p_ext(t)).

    For every window the likelihood is maximized jointly over the
    endogenous parameters and that window's exogenous probability: a
    coarse grid over the endogenous parameters with an inner scalar fit
    of p_ext, then a local multi-parameter polish. Returns the
    per-window endogenous estimates and the exogenous series.
    """
    cache = cache or WindowCache(g, c, cfg)
    diag = diag if diag is not None else {}
    pe_lo, pe_hi = spec.bound("p_ext")
    grids = _param_grids(model_kind, g, spec, n=7)
    names = [name for name, _ in grids]

    def fit_window(t):
        def pe_value(vec, pe):
            model = _model_from_vec(model_kind, vec)
            return cache.window_value_for(model, t, pe)

        best = None
        mesh = [np.asarray(v) for _, v in grids]
        for combo in np.stack(np.meshgrid(*mesh, indexing="ij"), -1).reshape(-1, len(mesh)):
            pe, val = _max_scalar(lambda pe: pe_value(combo, pe),
                                  pe_lo, pe_hi, spec, diag=diag)
            if best is None or val > best[2]:
                best = (combo, pe, val)
        vec0, pe0, val0 = best
        bounds = [spec.bound(nm, g) for nm in names] + [(pe_lo, pe_hi)]
        polished = _max_nd(lambda x: pe_value(x[:-1], float(x[-1])),
                           np.concatenate([vec0, [pe0]]), bounds, spec, diag)
        if polished is not None and polished[1] > val0:
            x, _ = polished
            vec0, pe0 = x[:-1], float(x[-1])
        return vec0, pe0

    results = _map_windows(fit_window, cache.horizon, workers)
    params = {nm: np.array([r[0][i] for r in results])
              for i, nm in enumerate(names)}
    series = np.array([r[1] for r in results])
    return params, series


def fit_endogenous_given_ext(g: SocialGraph, c: Cascade, model_kind: str,
                             series: np.ndarray, cfg: CorrectionConfig,
                             spec: OptimizerSpec = OptimizerSpec(),
                             current: EndogenousModel | None = None,
                             cache: WindowCache | None = None,
                             global_search: bool = True,
                             diag: dict | None = None) -> EndogenousModel:
    """Fit the global endogenous parameters with the exogenous series fixed.

    One-parameter kinds use the bracketing-grid scalar search. Two
    parameter kinds run either a lattice sweep (fix lam or a0 on a
    lattice, scalar-fit the other parameter, keep the best) when
    ``global_search`` is set, or a local multi-parameter refinement
    from ``current`` with the lattice as fallback on failure.
    """
    cache = cache or WindowCache(g, c, cfg)
    diag = diag if diag is not None else {}
    series = np.asarray(series, dtype=np.float64)

    def objective(model: EndogenousModel) -> float:
        return cache.total(model, series)

    if model_kind == "si":
        lo, hi = spec.bound("p0")
        p0, _ = _max_scalar(lambda p: objective(EndogenousModel("si", p0=p)),
                            lo, hi, spec, diag=diag)
        return EndogenousModel("si", p0=p0)

    if model_kind == "exp":
        fixed_name, free_name = "lam", "p0"
        fixed_lo, fixed_hi = spec.bound("lam")
        free_lo, free_hi = spec.bound("p0")
        lattice = _grid(fixed_lo, fixed_hi, spec.lattice_size, True)
        make = lambda free, fixed: EndogenousModel("exp", p0=free, lam=fixed)
        x_current = (current.p0, current.lam) if current is not None else None
    else:
        fixed_name, free_name = "a0", "k"
        fixed_lo, fixed_hi = spec.bound("a0", g)
        free_lo, free_hi = spec.bound("k")
        lattice = _grid(fixed_lo, fixed_hi, spec.lattice_size, False)
        make = lambda free, fixed: EndogenousModel("log", k=free, a0=fixed)
        x_current = (current.k, current.a0) if current is not None else None

    def lattice_sweep():
        best = None
        for fixed in lattice:
            free, val = _max_scalar(lambda x: objective(make(x, fixed)),
                                    free_lo, free_hi, spec, diag=diag)
            if best is None or val > best[1]:
                best = (make(free, fixed), val)
        if best is None:
            raise RuntimeError(
                f"every lattice fit failed for model kind {model_kind!r}")
        return best

    bounds = [(free_lo, free_hi), (fixed_lo, fixed_hi)]

    def local(x0):
        res = _max_nd(lambda x: objective(make(x[0], x[1])), x0, bounds, spec,
                      diag)
        return None if res is None else (make(res[0][0], res[0][1]), res[1])

    if global_search or x_current is None:
        model, val = lattice_sweep()
        polished = local([getattr(model, free_name), getattr(model, fixed_name)])
        if polished is not None and polished[1] > val:
            model = polished[0]
        return model

    refined = local(list(x_current))
    if refined is None:
        diag["lattice_fallbacks"] = diag.get("lattice_fallbacks", 0) + 1
        refined = lattice_sweep()
    return refined[0]


def fit_ext_given_endogenous(g: SocialGraph, c: Cascade,
                             model: EndogenousModel, cfg: CorrectionConfig,
                             spec: OptimizerSpec = OptimizerSpec(),
                             current: np.ndarray | None = None,
                             cache: WindowCache | None = None,
                             workers: int = 1,
                             diag: dict | None = None) -> np.ndarray:
    """Refit the exogenous series window by window, endogenous fixed.

    Each window is an independent bounded scalar maximization; when the
    incumbent series is supplied, a window keeps its incumbent value
    unless the refit strictly improves that window's likelihood.
    """
    cache = cache or WindowCache(g, c, cfg)
    diag = diag if diag is not None else {}
    lo, hi = spec.bound("p_ext")

    def fit_window(t):
        pp_act, pp_inact = cache.peer_probs(model, t)
        skip = (t == 0)

        def f(pe):
            value, _ = window_value(pp_act, pp_inact, pe, cache.factors[t],
                                    skip_activated=skip)
            return value

        pe, val = _max_scalar(f, lo, hi, spec, diag=diag)
        if current is not None and f(float(current[t])) >= val:
            return float(current[t])
        return pe

    return np.array(_map_windows(fit_window, cache.horizon, workers))


def _median_init(model_kind: str, params: dict[str, np.ndarray],
                 spec: OptimizerSpec, g: SocialGraph) -> EndogenousModel:
    """Median of the per-window estimates, clipped into bounds."""
    values = {}
    for name, arr in params.items():
        lo, hi = spec.bound(name, g)
        values[name] = float(np.clip(np.median(arr), lo, hi))
    if model_kind == "si":
        return EndogenousModel("si", p0=values["p0"])
    if model_kind == "exp":
        return EndogenousModel("exp", p0=values["p0"], lam=values["lam"])
    return EndogenousModel("log", k=values["k"], a0=values["a0"])


def alternate(g: SocialGraph, c: Cascade, model_kind: str,
              cfg: CorrectionConfig = CorrectionConfig(),
              spec: OptimizerSpec = OptimizerSpec(),
              eps: float = 1e-5, max_outer: int = 50,
              workers: int = 1) -> InferenceResult:
    """Run the full alternating inference until convergence or cap.

    Convergence requires both the largest endogenous parameter change
    and the summed absolute exogenous change of an iteration to fall
    below ``eps``. The returned trace of total log-likelihood values
    (after init and after every half-step) is non-decreasing thanks to
    the conditional-maximization guards.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if model_kind not in ("si", "exp", "log"):
        raise ValueError(f"unknown model kind {model_kind!r}")
    diag: dict[str, int] = {}
    cache = WindowCache(g, c, cfg)
    init_params, series = init_per_window(
        g, c, model_kind, cfg, spec, cache=cache, workers=workers, diag=diag)
    init_series = series.copy()
    model = _median_init(model_kind, init_params, spec, g)
    loglik = cache.total(model, series)
    trace = [loglik]
    deltas: list[tuple[float, float]] = []
    converged = False
    iterations = 0

    for it in range(1, max_outer + 1):
        iterations = it
        candidate = fit_endogenous_given_ext(
            g, c, model_kind, series, cfg, spec, current=model, cache=cache,
            global_search=(it == 1), diag=diag)
        cand_ll = cache.total(candidate, series)
        if cand_ll < loglik:
            diag["guard_rejections"] = diag.get("guard_rejections", 0) + 1
            candidate, cand_ll = model, loglik
        d_peer = max(abs(b - a) for a, b in zip(
            model.params().values(), candidate.params().values()))
        model, loglik = candidate, cand_ll
        trace.append(loglik)

        new_series = fit_ext_given_endogenous(
            g, c, model, cfg, spec, current=series, cache=cache,
            workers=workers, diag=diag)
        d_ext = float(np.sum(np.abs(new_series - series)))
        series = new_series
        loglik = cache.total(model, series)
        trace.append(loglik)

        deltas.append((float(d_peer), d_ext))
        if d_peer < eps and d_ext < eps:
            converged = True
            break

    clamp_hits = sum(
        window_loglik(g, c, t, model, float(series[t]), cfg).clamp_hits
        for t in range(c.horizon))
    return InferenceResult(
        model=model, series=series, loglik=float(loglik),
        iterations=iterations, converged=converged, deltas=deltas,
        loglik_trace=[float(v) for v in trace], clamp_hits=int(clamp_hits),
        init_series=init_series, init_params=init_params, diagnostics=diag)
