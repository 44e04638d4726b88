"""Command line entry point: ``multiplex-bp {generate,detect,sweep,parascan,score}``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import harness
from .bp import BpConfig, run, run_multilayer_alternating, write_beliefs, write_label_csv, read_label_csv
from .metrics import local_constraint_score, normalized_agreement
from .model import BenchmarkAffinity, Labeling, read_labels, read_network, write_labels, write_network

DETECT_FIELDS = [
    "model",
    "q",
    "converged",
    "sweeps_used",
    "final_conv",
    "Q",
    "agreement",
    "local_pass_count",
    "cross_layer_match",
    "wallclock_ms",
]


def _bp_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("belief propagation")
    g.add_argument("--t-max", type=int, default=100, help="sweep budget (alternating: total pair sweeps)")
    g.add_argument("--conv-tol", type=float, default=1e-6)
    g.add_argument("--n-sample", type=float, default=None, help="fraction of interlayer factors per update")
    g.add_argument("--w-pass", type=float, default=None, help="f_check weight of passing tuples")
    g.add_argument("--w-fail", type=float, default=None, help="f_check weight of failing tuples")
    g.add_argument("--damping", type=float, default=0.0)
    g.add_argument("--init-noise", type=float, default=0.05)
    g.add_argument("--p-same", type=float, default=0.9)
    g.add_argument("--seed", type=int, default=0)


def _bp_config(a) -> BpConfig:
    w_pass = 1.0 if a.w_pass is None else a.w_pass
    w_fail = (0.0 if a.w_pass is None else round(1.0 - w_pass, 12)) if a.w_fail is None else a.w_fail
    return BpConfig(
        t_max=a.t_max,
        conv_tol=a.conv_tol,
        n_sample=1.0 if a.n_sample is None else a.n_sample,
        check_weights=(w_fail, w_pass),
        damping=a.damping,
        init_noise=a.init_noise,
        rng_seed=a.seed,
        p_same=a.p_same,
    )


def _read_any_labels(path, N=None, L=None, q=None) -> Labeling:
    """Labels in either the ``l i t`` text format or the ``layer,node,label`` CSV."""
    with open(path) as fh:
        first = fh.readline()
    if "," in first:
        lab = read_label_csv(path)
        if q is not None and q > lab.q:
            lab = Labeling(lab.t, q)
        return lab
    return read_labels(path, N=N, L=L, q=q)


def cmd_generate(a) -> int:
    cfg = harness.ExperimentConfig.from_ini(a.config) if a.config else harness.ExperimentConfig(scenario=a.scenario)
    scenario = a.scenario or cfg.scenario
    N = a.N or cfg.N
    deg = a.avg_degree if a.avg_degree is not None else cfg.avg_degree
    eps = a.epsilon if a.epsilon is not None else cfg.epsilons[0]
    inst = harness.make_instance(scenario, N, eps, deg, a.seed, p_same=a.p_same, L=cfg.L)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    q = max(int(inst.truth.q), 2)
    write_network(out / "network.txt", inst.network, q)
    write_labels(out / "labels.txt", inst.truth)
    print(json.dumps({"network": str(out / "network.txt"), "labels": str(out / "labels.txt"),
                      "N": inst.network.N, "L": inst.network.L,
                      "edges": [inst.network.n_edges(l) for l in range(inst.network.L)],
                      "c_in": inst.affinity.c_in, "c_out": inst.affinity.c_out}))
    return 0


def cmd_detect(a) -> int:
    net, q_file = read_network(a.network)
    q = a.q or q_file
    if a.c_in is not None:
        aff = BenchmarkAffinity(a.c_in, a.c_out if a.c_out is not None else 0.0)
    else:
        aff = BenchmarkAffinity.from_degree(a.avg_degree, a.epsilon)
    params = aff.to_params(q, net.N)
    bp = _bp_config(a)
    t0 = time.perf_counter()
    if a.model == "alternating":
        res = run_multilayer_alternating(net, params, *harness.alternating_budget(bp, net.L))
    elif a.model == "single":
        beliefs, labels, conv, sweeps, fc = [], [], True, 0, 0.0
        for l in range(net.L):
            r = run(net.select_layers([l]), params, "single", bp)
            beliefs.append(r.beliefs[:, 0])
            labels.append(r.labels.t[:, 0])
            conv &= r.converged
            sweeps = max(sweeps, r.sweeps_used)
            fc += r.final_conv
        res = SimpleNamespace(
            beliefs=np.stack(beliefs, axis=1),
            labels=Labeling(np.column_stack(labels), q),
            converged=conv,
            sweeps_used=sweeps,
            final_conv=fc,
        )
    else:
        res = run(net, params, a.model, bp)
    ms = 1000.0 * (time.perf_counter() - t0)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_beliefs(out / "beliefs.csv", res.beliefs)
    write_label_csv(out / "labels.csv", res.labels)
    row = dict(
        model=a.model,
        q=q,
        converged=bool(res.converged),
        sweeps_used=int(res.sweeps_used),
        final_conv=float(res.final_conv),
        Q="",
        agreement="",
        local_pass_count=local_constraint_score(res.labels) if net.L > 1 else 0,
        cross_layer_match=float(np.mean(res.labels.t[:, :-1] == res.labels.t[:, 1:])) if net.L > 1 else 1.0,
        wallclock_ms=ms,
    )
    if a.truth:
        truth = _read_any_labels(a.truth, N=net.N, L=net.L, q=q)
        rep = normalized_agreement(truth, res.labels, per_layer=a.model == "single")
        row["Q"] = float(np.mean(rep.per_layer)) if a.model == "single" else rep.q_norm
        row["agreement"] = rep.agreement
    with open(out / "result.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=DETECT_FIELDS)
        w.writeheader()
        w.writerow(row)
    print(json.dumps(row))
    return 0


def _experiment(a) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.from_ini(a.config) if a.config else harness.ExperimentConfig()
    over = {}
    if a.trials is not None:
        over["trials"] = a.trials
    if a.workers is not None:
        over["workers"] = a.workers
    if a.out_dir is not None:
        over["output_dir"] = a.out_dir
    if a.seed is not None:
        over["seed"] = a.seed
    return dataclasses.replace(cfg, **over) if over else cfg


def cmd_sweep(a) -> int:
    cfg = _experiment(a)
    paths = harness.sweep(cfg)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def cmd_parascan(a) -> int:
    cfg = _experiment(a)
    if cfg.scenario not in ("heterogeneous2", "parascan"):
        raise ValueError(f"parascan needs the heterogeneous2 scenario, config has {cfg.scenario!r}")
    paths = harness.parascan(cfg, threshold=a.threshold)
    print(json.dumps({k: str(v) for k, v in paths.items()}))
    return 0


def cmd_score(a) -> int:
    truth = _read_any_labels(a.truth, q=a.q)
    pred = _read_any_labels(a.predicted, N=truth.N, L=truth.L, q=max(truth.q, a.q or 0))
    q = max(truth.q, pred.q)
    truth, pred = Labeling(truth.t, q), Labeling(pred.t, q)
    rep = normalized_agreement(truth, pred, per_layer=True)
    out = dict(
        agreement=rep.agreement,
        Q=rep.q_norm,
        Q_per_layer=list(rep.per_layer),
        best_permutation=[p + 1 for p in rep.best_permutation],
        local_pass_count=local_constraint_score(pred) if pred.L > 1 and not np.any(pred.t == 0) else None,
    )
    print(json.dumps(out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multiplex-bp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a benchmark network and its planted labels")
    g.add_argument("--config")
    g.add_argument("--scenario", choices=harness.SCENARIOS)
    g.add_argument("--N", type=int)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--avg-degree", type=float)
    g.add_argument("--p-same", type=float, default=0.9)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default=".")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("detect", help="run BP on a network file")
    d.add_argument("network")
    d.add_argument("--model", choices=("single", "constrained", "correlated", "alternating"), default="constrained")
    d.add_argument("--q", type=int)
    d.add_argument("--c-in", type=float)
    d.add_argument("--c-out", type=float)
    d.add_argument("--epsilon", type=float, default=0.2)
    d.add_argument("--avg-degree", type=float, default=3.0)
    d.add_argument("--truth", help="planted labels for scoring")
    d.add_argument("--out-dir", default=".")
    _bp_flags(d)
    d.set_defaults(func=cmd_detect)

    for name, func, text in (
        ("sweep", cmd_sweep, "transition curves over the config's epsilon grid"),
        ("parascan", cmd_parascan, "WPP pass-fraction heatmap over (w_pass, n_sample)"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("config", nargs="?")
        s.add_argument("--trials", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--out-dir")
        if name == "parascan":
            s.add_argument("--threshold", type=float, default=0.5)
        s.set_defaults(func=func)

    sc = sub.add_parser("score", help="compare predicted labels with the truth")
    sc.add_argument("truth")
    sc.add_argument("predicted")
    sc.add_argument("--q", type=int)
    sc.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.WARNING)
    try:
        return a.func(a)
    except Exception as exc:  # one machine-readable line, then a nonzero exit
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
