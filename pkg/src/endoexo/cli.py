"""Batch command line: simulate | infer | evaluate | influence | report.

Experiments are described by a single JSON config; every flag overrides
the matching config field. Exit codes: 0 ok, 2 config error, 3 runtime
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import attribution, cascade as cascade_mod, graph as graph_mod
from .cascade import (SessionTable, attach_sessions, load_sessions,
                      referral_labels, write_sessions)
from .infer import InferenceResult, OptimizerSpec, alternate
from .likelihood import CorrectionConfig
from .models import MODEL_KINDS, EndogenousModel, ExogenousProfile
from .simulate import SimConfig, ground_truth_series, outcome_sessions, simulate

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


# ----------------------------------------------------------------------
# config handling
# ----------------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")


def _merged_config(args) -> dict:
    config = _load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.dt is not None:
        config["dt"] = args.dt
    if args.model is not None:
        config["model"] = args.model
    if args.out is not None:
        config["out"] = args.out
    if args.workers is not None:
        config["workers"] = args.workers
    if args.alpha is not None:
        config.setdefault("inference", {})["alpha"] = [
            float(v) for v in str(args.alpha).split(",") if v != ""]
    config.setdefault("seed", 0)
    config.setdefault("dt", 30.0)
    config.setdefault("model", "si")
    config.setdefault("out", "results")
    config.setdefault("workers", 1)
    if config["model"] not in MODEL_KINDS:
        raise ConfigError(
            f"field 'model' must be one of {MODEL_KINDS}, got {config['model']!r}")
    if float(config["dt"]) <= 0:
        raise ConfigError("field 'dt' must be a positive number of minutes")
    return config


def _alphas(config: dict) -> list[float]:
    raw = config.get("inference", {}).get("alpha", 0.0)
    values = raw if isinstance(raw, (list, tuple)) else [raw]
    alphas = [float(v) for v in values]
    if any(a < 0 for a in alphas):
        raise ConfigError("field 'inference.alpha' values must be >= 0")
    return alphas


def _optimizer_spec(config: dict) -> OptimizerSpec:
    inf = config.get("inference", {})
    bounds = dict(OptimizerSpec().bounds)
    for name, pair in inf.get("bounds", {}).items():
        if name not in bounds:
            raise ConfigError(f"unknown bound name {name!r} in inference.bounds")
        bounds[name] = (float(pair[0]),
                        None if pair[1] is None else float(pair[1]))
    return OptimizerSpec(lattice_size=int(inf.get("lattice", 25)),
                         bounds=bounds)


def _endogenous_model(spec: dict) -> EndogenousModel:
    kind = spec.get("kind")
    if kind not in MODEL_KINDS:
        raise ConfigError(
            f"field 'model.kind' must be one of {MODEL_KINDS}, got {kind!r}")
    try:
        return EndogenousModel(kind, p0=float(spec.get("p0", 0.0)),
                               lam=float(spec.get("lam", 0.0)),
                               k=float(spec.get("k", 0.0)),
                               a0=float(spec.get("a0", 0.0)))
    except ValueError as exc:
        raise ConfigError(f"invalid endogenous model: {exc}")


def _series_from_csv(path: str) -> tuple[float, ...]:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                if values:
                    raise ConfigError(f"{path}: non-numeric series value {line!r}")
                # tolerate a single header line
    return tuple(values)


def _profile(spec: dict) -> ExogenousProfile:
    shape = spec.get("shape")
    try:
        values = None
        if shape == "custom":
            if "path" in spec:
                values = _series_from_csv(spec["path"])
            else:
                values = tuple(float(v) for v in spec.get("values", ()))
        return ExogenousProfile(
            shape=shape,
            level=float(spec.get("level", 0.0)),
            events=tuple((int(s), float(p), float(r))
                         for s, p, r in spec.get("events", ())),
            omega=float(spec.get("omega", 0.0)),
            phase=float(spec.get("phase", 0.0)),
            values=values,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid exogenous profile: {exc}")


# ----------------------------------------------------------------------
# dataset assembly
# ----------------------------------------------------------------------

def _build_graph(config: dict) -> graph_mod.SocialGraph:
    spec = config.get("graph")
    if not isinstance(spec, dict):
        raise ConfigError("field 'graph' must specify exactly one graph source")
    has_path = "path" in spec
    has_gen = "generator" in spec
    if has_path == has_gen:
        raise ConfigError(
            "field 'graph' must have exactly one of 'path' or 'generator'")
    if has_path:
        fmt = spec.get("format", "edge-list")
        try:
            return graph_mod.load_edge_list(spec["path"], format=fmt)
        except FileNotFoundError:
            raise ConfigError(f"graph file not found: {spec['path']}")
    gen = spec["generator"]
    seed = int(spec.get("seed", config["seed"]))
    if gen == "holme-kim":
        try:
            return graph_mod.powerlaw_cluster_graph(
                int(spec["n"]), int(spec["m"]), float(spec["p"]), seed)
        except KeyError as exc:
            raise ConfigError(f"holme-kim generator needs field {exc}")
        except ValueError as exc:
            raise ConfigError(str(exc))
    if gen == "configuration":
        if "degrees_path" in spec:
            degrees = np.loadtxt(spec["degrees_path"], dtype=np.int64, ndmin=1)
        elif "degrees" in spec:
            degrees = np.asarray(spec["degrees"], dtype=np.int64)
        else:
            raise ConfigError(
                "configuration generator needs 'degrees' or 'degrees_path'")
        try:
            return graph_mod.configuration_model(degrees, seed)
        except ValueError as exc:
            raise ConfigError(str(exc))
    raise ConfigError(f"unknown graph generator {gen!r}")


def _cascade_source(config: dict) -> dict:
    spec = config.get("cascade")
    if not isinstance(spec, dict):
        raise ConfigError("field 'cascade' must specify exactly one cascade source")
    has_file = "sessions" in spec
    has_sim = "simulate" in spec
    if has_file == has_sim:
        raise ConfigError(
            "field 'cascade' must have exactly one of 'sessions' or 'simulate'")
    return spec


def _sim_config(config: dict) -> SimConfig:
    spec = _cascade_source(config)["simulate"]
    try:
        return SimConfig(
            model=_endogenous_model(spec.get("model", {})),
            profile=_profile(spec.get("profile", {})),
            n_seeds=int(spec.get("n_seeds", 5)),
            horizon=int(spec["horizon"]),
            rng_seed=int(spec.get("seed", config["seed"])),
            window_width=float(config["dt"]),
        )
    except KeyError as exc:
        raise ConfigError(f"simulation spec needs field {exc}")
    except ValueError as exc:
        raise ConfigError(f"invalid simulation spec: {exc}")


def _build_dataset(config: dict):
    """Returns (graph, cascade, labels, outcome-or-None).

    ``labels`` holds one referral class per internal node ("unknown"
    for users without a session).
    """
    g = _build_graph(config)
    source = _cascade_source(config)
    if "simulate" in source:
        outcome = simulate(g, _sim_config(config))
        sessions = outcome_sessions(g, outcome)
        labels = _labels_by_node(g, sessions)
        return g, outcome.cascade, labels, outcome
    try:
        sessions = load_sessions(source["sessions"])
    except FileNotFoundError:
        raise ConfigError(f"sessions file not found: {source['sessions']}")
    g2, casc = attach_sessions(g, sessions, float(config["dt"]))
    labels = _labels_by_node(g2, sessions)
    return g2, casc, labels, None


def _labels_by_node(g: graph_mod.SocialGraph, sessions: SessionTable) -> list[str]:
    labels = ["unknown"] * g.n_nodes
    idx_of = g.id_map
    for row, label in enumerate(referral_labels(sessions)):
        labels[idx_of[int(sessions.user_id[row])]] = label
    return labels


def _run_inference(g, casc, config: dict, alpha: float) -> InferenceResult:
    inf = config.get("inference", {})
    cfg = CorrectionConfig(alpha=alpha, n_all=inf.get("n_all"))
    return alternate(
        g, casc, config["model"], cfg, _optimizer_spec(config),
        eps=float(inf.get("eps", 1e-5)),
        max_outer=int(inf.get("max_outer", 50)),
        workers=int(config["workers"]))


# ----------------------------------------------------------------------
# output helpers
# ----------------------------------------------------------------------

def _outdir(config: dict) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _suffix(alphas: list[float], alpha: float) -> str:
    return "" if len(alphas) == 1 else f"_alpha{alpha:g}"


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def cmd_simulate(config: dict) -> int:
    source = _cascade_source(config)
    if "simulate" not in source:
        raise ConfigError("'simulate' subcommand needs a simulation cascade source")
    g = _build_graph(config)
    sim_cfg = _sim_config(config)
    outcome = simulate(g, sim_cfg)
    out = _outdir(config)
    graph_mod.write_edge_list(g, out / "edge_list.txt")
    write_sessions(outcome_sessions(g, outcome), out / "sessions.csv")
    _write_csv(out / "truth.csv", ["user_id", "window", "truth"],
               [(int(g.ext_ids[i]), int(outcome.cascade.windows[i]),
                 outcome.truth[i]) for i in range(g.n_nodes)])
    endo, exo = ground_truth_series(outcome)
    _write_json(out / "summary.json", {
        "created_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "n_nodes": g.n_nodes,
        "n_edges": g.n_edges,
        "n_activated": int(outcome.cascade.activated.sum()),
        "n_seeds": int(sim_cfg.n_seeds),
        "horizon": int(sim_cfg.horizon),
        "window_width": sim_cfg.window_width,
        "model": {"kind": sim_cfg.model.kind, **sim_cfg.model.params()},
        "true_endogenous": int(endo.sum()),
        "true_exogenous": int(exo.sum()),
    })
    print(f"simulate: wrote 4 files to {out}")
    return 0


def cmd_infer(config: dict) -> int:
    g, casc, _, _ = _build_dataset(config)
    out = _outdir(config)
    alphas = _alphas(config)
    for alpha in alphas:
        result = _run_inference(g, casc, config, alpha)
        tag = _suffix(alphas, alpha)
        payload = result.to_dict()
        payload["alpha"] = alpha
        if result.model.kind == "exp" and result.model.lam > 0:
            payload["half_decay_hours"] = float(
                result.model.half_decay_windows() * casc.window_width / 60.0)
        _write_json(out / f"result{tag}.json", payload)
        endo, exo = attribution.expected_counts(result, g, casc)
        n_act = np.array([casc.n_activated_in(t) for t in range(casc.horizon)])
        _write_csv(
            out / f"per_window{tag}.csv",
            ["window", "p_ext", "n_activated", "expected_endogenous",
             "expected_exogenous"],
            [(t, repr(float(result.series[t])), int(n_act[t]),
              repr(float(endo[t])), repr(float(exo[t])))
             for t in range(casc.horizon)])
        rows = [(0, "init", repr(result.loglik_trace[0]), "", "")]
        for i, (d_peer, d_ext) in enumerate(result.deltas):
            rows.append((2 * i + 1, "endogenous",
                         repr(result.loglik_trace[2 * i + 1]), repr(d_peer), ""))
            rows.append((2 * i + 2, "exogenous",
                         repr(result.loglik_trace[2 * i + 2]), "", repr(d_ext)))
        _write_csv(out / f"trace{tag}.csv",
                   ["step", "stage", "loglik", "d_peer", "d_ext"], rows)
        flag = "converged" if result.converged else "NOT converged"
        print(f"infer: alpha={alpha:g} loglik={result.loglik:.4f} "
              f"({flag} in {result.iterations} iterations)")
    return 0


def _auc_pair(result, g, casc, labels, variant):
    """(auc_ours, auc_base, n_pos, n_neg) or None when labels degenerate."""
    scores = attribution.responsibility(result, g, casc, variant=variant)
    lab = np.asarray(labels)[scores.users]
    keep = (lab == "share") | (lab == "external")
    positives = lab == "external"  # exogenous = positive class
    if positives[keep].sum() == 0 or (~positives[keep]).sum() == 0:
        return None
    ours = attribution.roc_auc(scores.r[keep], positives[keep])
    base = attribution.roc_auc(
        attribution.baseline_scores(g, casc)[keep], positives[keep])
    return ours, base, int(positives[keep].sum()), int(keep.sum())


def cmd_evaluate(config: dict) -> int:
    g, casc, labels, _ = _build_dataset(config)
    out = _outdir(config)
    alpha = _alphas(config)[0]
    variant = config.get("attribution", {}).get("variant", "ratio")
    result = _run_inference(g, casc, config, alpha)
    scores = attribution.responsibility(result, g, casc, variant=variant)

    edges = np.linspace(0.0, 1.0, 21)
    lab = np.asarray(labels)[scores.users]
    hists = {"all": np.histogram(scores.r, bins=edges)[0]}
    for name, sel in (("endogenous", lab == "share"),
                      ("exogenous", lab == "external")):
        if sel.any():
            hists[name] = np.histogram(scores.r[sel], bins=edges)[0]
    _write_csv(out / "responsibility_hist.csv",
               ["bin_lo", "bin_hi"] + list(hists),
               [(repr(float(edges[b])), repr(float(edges[b + 1])),
                 *[int(hists[k][b]) for k in hists]) for b in range(20)])

    summary = {"model": config["model"], "alpha": alpha, "variant": variant,
               "loglik": result.loglik, "converged": result.converged}
    pair = _auc_pair(result, g, casc, labels, variant)
    if pair is None:
        summary["auc"] = None
        summary["note"] = "no usable labels: AUC omitted"
    else:
        ours, base, n_pos, n_tot = pair
        summary.update({"auc_ours": ours.auc, "auc_baseline": base.auc,
                        "n_exogenous_labels": n_pos, "n_labeled": n_tot})
        _write_csv(out / "roc.csv", ["threshold", "fpr", "tpr"],
                   [(repr(float(a)), repr(float(b)), repr(float(c)))
                    for a, b, c in zip(ours.thresholds, ours.fpr, ours.tpr)])
    _write_json(out / "auc_summary.json", summary)
    _write_plots(out, g, casc, result, scores, labels,
                 pair[0] if pair else None)
    msg = (f"evaluate: AUC_ours={summary['auc_ours']:.3f} "
           f"AUC_base={summary['auc_baseline']:.3f}"
           if pair else "evaluate: AUC omitted (no usable labels)")
    print(msg)
    return 0


def _write_plots(out, g, casc, result, scores, labels, roc) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    endo, exo = attribution.expected_counts(result, g, casc)
    n_act = np.array([casc.n_activated_in(t) for t in range(casc.horizon)])
    fig, ax = plt.subplots(figsize=(8, 4))
    ts = np.arange(casc.horizon)
    ax.plot(ts, n_act, "k-", label="activations")
    ax.plot(ts, endo, "-", color="tab:blue", label="expected endogenous")
    ax.plot(ts, exo, "-", color="tab:red", label="expected exogenous")
    ax.set_xlabel("window")
    ax.set_ylabel("users")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "counts.png", dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.hist(scores.r[~np.isnan(scores.r)], bins=20, range=(0, 1),
            color="tab:purple")
    ax.set_xlabel("exogenous responsibility")
    ax.set_ylabel("users")
    fig.tight_layout()
    fig.savefig(out / "responsibility.png", dpi=120)
    plt.close(fig)

    if roc is not None:
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot(roc.fpr, roc.tpr, "-", color="tab:blue",
                label=f"AUC = {roc.auc:.3f}")
        ax.plot([0, 1], [0, 1], "k--", lw=0.8)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "roc.png", dpi=120)
        plt.close(fig)


def cmd_influence(config: dict) -> int:
    g, casc, labels, _ = _build_dataset(config)
    out = _outdir(config)
    alpha = _alphas(config)[0]
    result = _run_inference(g, casc, config, alpha)
    weighting = config.get("attribution", {}).get("weighting", "uniform")
    lam = float(config.get("attribution", {}).get("lam", 0.0))

    endo_model = attribution.peer_prob_at_activation(result, g, casc)
    labels_arr = np.asarray(labels)
    endo_raw = np.where(labels_arr == "share", 1.0, 0.0)
    endo_raw[~casc.activated] = 0.0
    inf_model = attribution.individual_influence(g, casc, endo_model,
                                                 weighting, lam)
    inf_raw = attribution.individual_influence(g, casc, endo_raw,
                                               weighting, lam)
    _write_csv(out / "influence.csv",
               ["user_id", "influence_model", "influence_raw"],
               [(int(g.ext_ids[i]), repr(float(inf_model.values[i])),
                 repr(float(inf_raw.values[i]))) for i in range(g.n_nodes)])

    groups = config.get("attribution", {}).get(
        "groups", ["share", "external", "ad"])
    payload: dict = {"weighting": weighting, "groups": {}}
    means = {"model": {}, "raw": {}}
    for name in groups:
        members = np.flatnonzero(labels_arr == name)
        if members.size == 0:
            print(f"influence: group {name!r} has no members, omitted",
                  file=sys.stderr)
            continue
        means["model"][name] = attribution.collective_influence(inf_model, members)
        means["raw"][name] = attribution.collective_influence(inf_raw, members)
    for mode, vals in means.items():
        span = (max(vals.values()) - min(vals.values())) if len(vals) > 1 else 0.0
        lo = min(vals.values()) if vals else 0.0
        payload["groups"][mode] = {
            name: {"mean": v,
                   "normalized": (v - lo) / span if span > 0 else 0.0}
            for name, v in vals.items()}
    _write_json(out / "collective_influence.json", payload)
    print(f"influence: wrote per-user and per-group influence to {out}")
    return 0


def cmd_report(config: dict) -> int:
    rc = cmd_infer(config)
    rc = rc or cmd_evaluate(config)
    rc = rc or cmd_influence(config)
    out = _outdir(config)
    parts = {}
    for name in ("auc_summary", "collective_influence"):
        path = out / f"{name}.json"
        if path.exists():
            with open(path, "r", encoding="utf-8") as fh:
                parts[name] = json.load(fh)
    _write_json(out / "report.json", parts)
    print(f"report: consolidated summary in {out / 'report.json'}")
    return rc


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="endoexo",
        description="Simulate cascades and infer peer vs external influence.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("simulate", cmd_simulate), ("infer", cmd_infer),
                     ("evaluate", cmd_evaluate), ("influence", cmd_influence),
                     ("report", cmd_report)):
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--alpha",
                       help="observer-bias alpha, comma-separated for a sweep")
        p.add_argument("--dt", type=float, help="window width in minutes")
        p.add_argument("--model", choices=list(MODEL_KINDS),
                       help="endogenous model kind")
        p.add_argument("--workers", type=int, help="parallel window fits")
        p.add_argument("--out", help="output directory")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _merged_config(args)
        return args.fn(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (cascade_mod.SchemaError, graph_mod.GraphFormatError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
