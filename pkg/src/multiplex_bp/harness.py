"""Seeded experiment runner: scenarios, trials, sweeps and CSV output."""

from __future__ import annotations

import configparser
import csv
import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bp import BpConfig, round_robin_pairs, run, run_multilayer_alternating
from .metrics import local_constraint_score, normalized_agreement, wpp_majority_trial_check
from .model import (
    BenchmarkAffinity,
    Labeling,
    MultiplexNetwork,
    generate_correlated,
    generate_multiplex_wpp,
    heterogeneous_structure,
    planted_clusters,
    three_layer_structure,
    two_block_structure,
)

logger = logging.getLogger(__name__)

SCENARIOS = ("single", "homogeneous2", "heterogeneous2", "correlated", "qscan", "parascan", "threelayer")

# scenario -> (default q used for inference, default models)
_SCENARIO_DEFAULTS = {
    "single": (2, ("single",)),
    "homogeneous2": (2, ("single", "constrained", "correlated")),
    "heterogeneous2": (4, ("constrained", "correlated")),
    "correlated": (2, ("correlated",)),
    "qscan": (2, ("constrained",)),
    "parascan": (4, ("constrained",)),
    "threelayer": (5, ("alternating", "allpairs")),
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.replace(",", " ").split())


@dataclass
class ExperimentConfig:
    """Everything a sweep needs; every free knob lives here."""

    scenario: str = "homogeneous2"
    N: int = 200
    L: int = 2
    q: int | None = None
    avg_degree: float = 3.0
    epsilons: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    models: tuple[str, ...] | None = None
    p_same: float = 0.9
    p_same_grid: tuple[float, ...] = (0.0, 0.1, 0.5, 0.9, 1.0)
    q_grid: tuple[int, ...] = (2, 3, 4)
    w_pass_grid: tuple[float, ...] = (0.6, 0.7, 0.8, 0.9, 0.95)
    n_sample_grid: tuple[float, ...] = (0.01, 0.02, 0.05, 0.1, 0.2)
    trials: int = 30
    seed: int = 0
    top_k: int = 20
    workers: int = 1
    output_dir: str = "results"
    bp: BpConfig = field(default_factory=lambda: BpConfig(n_sample=0.05, check_weights=(0.2, 0.8)))

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("epsilons", "p_same_grid", "q_grid", "w_pass_grid", "n_sample_grid"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")
        if self.q is None:
            self.q = _SCENARIO_DEFAULTS[self.scenario][0]
        if self.models is None:
            self.models = _SCENARIO_DEFAULTS[self.scenario][1]
        if self.scenario == "single":
            self.L = 1
        if self.scenario == "threelayer":
            self.L = 3

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        """Read ``[experiment]`` and ``[bp]`` sections of an INI file."""
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise FileNotFoundError(path)
        return cls.from_parser(cp)

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "ExperimentConfig":
        kw = {}
        if cp.has_section("experiment"):
            ex = cp["experiment"]
            conv = {
                "scenario": str,
                "N": int,
                "L": int,
                "q": int,
                "avg_degree": float,
                "p_same": float,
                "trials": int,
                "seed": int,
                "top_k": int,
                "workers": int,
                "output_dir": str,
                "epsilons": _floats,
                "p_same_grid": _floats,
                "q_grid": _ints,
                "w_pass_grid": _floats,
                "n_sample_grid": _floats,
                "models": lambda s: tuple(s.replace(",", " ").split()),
            }
            for key, value in ex.items():
                name = "N" if key == "n" else "L" if key == "l" else key
                if name not in conv:
                    raise ValueError(f"unknown experiment option {key!r}")
                kw[name] = conv[name](value)
        bp = BpConfig(n_sample=0.05, check_weights=(0.2, 0.8))
        if cp.has_section("bp"):
            b = cp["bp"]
            over = {}
            for key, value in b.items():
                if key in ("t_max", "pair_sweeps"):
                    over[key] = int(value)
                elif key in ("conv_tol", "n_sample", "damping", "init_noise", "p_same"):
                    over[key] = float(value)
                elif key == "rng_seed":
                    over[key] = int(value)
                elif key == "w_pass":
                    wp = float(value)
                    over["check_weights"] = (round(1.0 - wp, 12), wp)
                elif key == "check_weights":
                    over["check_weights"] = _floats(value)
                else:
                    raise ValueError(f"unknown bp option {key!r}")
            bp = dataclasses.replace(bp, **over)
        kw["bp"] = bp
        return cls(**kw)

    def to_ini(self, path) -> None:
        cp = configparser.ConfigParser()
        cp["experiment"] = {
            "scenario": self.scenario,
            "N": str(self.N),
            "L": str(self.L),
            "q": str(self.q),
            "avg_degree": repr(self.avg_degree),
            "epsilons": " ".join(repr(e) for e in self.epsilons),
            "models": " ".join(self.models),
            "p_same": repr(self.p_same),
            "p_same_grid": " ".join(repr(p) for p in self.p_same_grid),
            "q_grid": " ".join(str(q) for q in self.q_grid),
            "w_pass_grid": " ".join(repr(w) for w in self.w_pass_grid),
            "n_sample_grid": " ".join(repr(n) for n in self.n_sample_grid),
            "trials": str(self.trials),
            "seed": str(self.seed),
            "top_k": str(self.top_k),
            "workers": str(self.workers),
            "output_dir": self.output_dir,
        }
        b = self.bp
        cp["bp"] = {
            "t_max": str(b.t_max),
            "conv_tol": repr(b.conv_tol),
            "n_sample": repr(b.n_sample),
            "check_weights": f"{b.check_weights[0]!r} {b.check_weights[1]!r}",
            "damping": repr(b.damping),
            "init_noise": repr(b.init_noise),
            "p_same": repr(b.p_same),
            "pair_sweeps": str(b.pair_sweeps),
        }
        with open(path, "w") as fh:
            cp.write(fh)


@dataclass(frozen=True)
class TrialResult:
    scenario: str
    epsilon: float
    model: str
    seed: int
    Q: float
    agreement: float
    converged: bool
    sweeps_used: int
    wpp_majority_pass: bool
    local_pass_count: int
    cross_layer_match: float
    wallclock_ms: float
    q: int
    p_same: float
    w_pass: float
    n_sample: float

    @classmethod
    def fieldnames(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    def row(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_row(cls, row: dict) -> "TrialResult":
        conv = {f.name: f.type for f in dataclasses.fields(cls)}
        out = {}
        for k, v in row.items():
            t = conv[k]
            if t in ("bool", bool):
                out[k] = v in ("True", "true", "1", True)
            elif t in ("int", int):
                out[k] = int(v)
            elif t in ("float", float):
                out[k] = float(v)
            else:
                out[k] = v
        return cls(**out)


@dataclass
class Instance:
    network: MultiplexNetwork
    truth: Labeling
    clusters: list
    affinity: BenchmarkAffinity


def trial_seed(base: int, trial: int) -> int:
    """Independent 32-bit seed per trial; the same for every model."""
    return int(np.random.SeedSequence([base, trial]).generate_state(1)[0])


def make_instance(scenario: str, N: int, epsilon: float, avg_degree: float, seed: int, p_same: float = 0.9, L: int = 2):
    """Network and planted labels for one trial of a scenario."""
    affinity = BenchmarkAffinity.from_degree(avg_degree, epsilon)
    if scenario == "correlated":
        net, truth = generate_correlated(affinity.to_params(2, N), p_same, L, rng_seed=seed)
        return Instance(net, truth, [], affinity)
    if scenario in ("heterogeneous2", "parascan"):
        structure = heterogeneous_structure(N)
    elif scenario == "threelayer":
        structure = three_layer_structure(N)
    else:
        structure = two_block_structure(N, 1 if scenario == "single" else L)
    net, truth = generate_multiplex_wpp(structure, affinity, rng_seed=seed)
    return Instance(net, truth, planted_clusters(structure), affinity)


def alternating_budget(bp: BpConfig, L: int) -> tuple[BpConfig, list]:
    """Read ``bp.t_max`` as a sweep budget for alternating pairs: that many
    pair sweeps in total, split into rounds over the round-robin schedule."""
    pairs = round_robin_pairs(L)
    rounds = max(1, bp.t_max // (len(pairs) * bp.pair_sweeps))
    return dataclasses.replace(bp, t_max=rounds), pairs


def _detect(inst: Instance, model: str, q: int, bp: BpConfig):
    params = inst.affinity.to_params(q, inst.network.N)
    if model == "single":
        labels, conv, sweeps = [], True, 0
        for l in range(inst.network.L):
            r = run(inst.network.select_layers([l]), params, "single", bp)
            labels.append(r.labels.t[:, 0])
            conv &= r.converged
            sweeps = max(sweeps, r.sweeps_used)
        return Labeling(np.column_stack(labels), q), conv, sweeps
    if model == "alternating":
        r = run_multilayer_alternating(inst.network, params, *alternating_budget(bp, inst.network.L))
    elif model == "allpairs":
        r = run(inst.network, params, "constrained", bp)
    else:
        r = run(inst.network, params, model, bp)
    return r.labels, r.converged, r.sweeps_used


def run_trial(
    scenario: str,
    model: str,
    epsilon: float,
    seed: int,
    N: int = 200,
    L: int = 2,
    q: int = 2,
    avg_degree: float = 3.0,
    bp: BpConfig | None = None,
    p_same: float = 0.9,
    per_layer_q: bool | None = None,
) -> TrialResult:
    """Generate, detect and score one seeded trial.

    ``single`` runs each layer on its own and is scored per layer (its label
    names carry no meaning across layers); the multiplex models are scored
    with one permutation shared by all layers unless ``per_layer_q`` is set.
    """
    bp = bp or BpConfig()
    bp = dataclasses.replace(bp, rng_seed=seed, p_same=p_same)
    inst = make_instance(scenario, N, epsilon, avg_degree, seed, p_same=p_same, L=L)
    t0 = time.perf_counter()
    pred, converged, sweeps = _detect(inst, model, q, bp)
    ms = 1000.0 * (time.perf_counter() - t0)
    per_layer = model == "single" if per_layer_q is None else per_layer_q
    rep = normalized_agreement(inst.truth, pred, per_layer=per_layer)
    Q = float(np.mean(rep.per_layer)) if per_layer else rep.q_norm
    wpp = wpp_majority_trial_check(pred, inst.clusters) if inst.clusters else False
    cross = float(np.mean(pred.t[:, :-1] == pred.t[:, 1:])) if pred.L > 1 else 1.0
    return TrialResult(
        scenario=scenario,
        epsilon=float(epsilon),
        model=model,
        seed=int(seed),
        Q=float(Q),
        agreement=float(rep.agreement),
        converged=bool(converged),
        sweeps_used=int(sweeps),
        wpp_majority_pass=bool(wpp),
        local_pass_count=int(local_constraint_score(pred)) if pred.L > 1 else 0,
        cross_layer_match=cross,
        wallclock_ms=float(ms),
        q=int(q),
        p_same=float(p_same),
        w_pass=float(bp.check_weights[1]),
        n_sample=float(bp.n_sample),
    )


def _call(kw):
    return run_trial(**kw)


def _jobs(config: ExperimentConfig) -> list[dict]:
    jobs = []
    base = dict(N=config.N, L=config.L, avg_degree=config.avg_degree)
    seeds = [trial_seed(config.seed, k) for k in range(config.trials)]
    sc = config.scenario
    for eps in config.epsilons:
        for s in seeds:
            if sc == "correlated":
                for ps in config.p_same_grid:
                    jobs.append(dict(base, scenario=sc, model="correlated", epsilon=eps, seed=s, q=config.q, bp=config.bp, p_same=ps))
                if "single" in config.models:
                    jobs.append(dict(base, scenario=sc, model="single", epsilon=eps, seed=s, q=config.q, bp=config.bp, p_same=config.p_same))
            elif sc == "qscan":
                for q in config.q_grid:
                    for m in config.models:
                        jobs.append(dict(base, scenario=sc, model=m, epsilon=eps, seed=s, q=q, bp=config.bp, p_same=config.p_same))
            elif sc == "parascan":
                for wp in config.w_pass_grid:
                    for ns in config.n_sample_grid:
                        bp = dataclasses.replace(config.bp, check_weights=(round(1.0 - wp, 12), wp), n_sample=ns)
                        jobs.append(dict(base, scenario="heterogeneous2", model="constrained", epsilon=eps, seed=s, q=config.q, bp=bp, p_same=config.p_same))
            else:
                for m in config.models:
                    jobs.append(dict(base, scenario=sc, model=m, epsilon=eps, seed=s, q=config.q, bp=config.bp, p_same=config.p_same))
    return jobs


def run_trials(jobs: list[dict], workers: int = 1) -> list[TrialResult]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_call, jobs, chunksize=1))
    else:
        results = [_call(kw) for kw in jobs]
    return sorted(results, key=_sort_key)


def _sort_key(r: TrialResult):
    return (r.model, r.q, r.p_same, r.w_pass, r.n_sample, r.epsilon, r.seed)


def run_experiment(config: ExperimentConfig) -> list[TrialResult]:
    jobs = _jobs(config)
    logger.info("%s: %d trials", config.scenario, len(jobs))
    return run_trials(jobs, config.workers)


def stderr(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(v.std(ddof=1) / math.sqrt(v.size))


def top_k_by_local_score(results: list[TrialResult], k: int) -> list[TrialResult]:
    """Best ``k`` trials by local constraint score (ground truth not used)."""
    return sorted(results, key=lambda r: (-r.local_pass_count, r.seed))[:k]


GROUP_KEYS = ("model", "q", "p_same", "w_pass", "n_sample", "epsilon")


def summarize(results: list[TrialResult], top_k: int | None = None) -> list[dict]:
    """Mean/stderr per group; with ``top_k`` also the top-k agreement."""
    groups: dict[tuple, list[TrialResult]] = {}
    for r in results:
        groups.setdefault(tuple(getattr(r, k) for k in GROUP_KEYS), []).append(r)
    rows = []
    for key in sorted(groups):
        rs = groups[key]
        Q = [r.Q for r in rs]
        agr = [r.agreement for r in rs]
        row = dict(zip(GROUP_KEYS, key))
        row.update(
            trials=len(rs),
            Q_mean=float(np.mean(Q)),
            Q_se=stderr(Q),
            agreement_mean=float(np.mean(agr)),
            agreement_se=stderr(agr),
            wpp_pass_fraction=float(np.mean([r.wpp_majority_pass for r in rs])),
            cross_layer_match_mean=float(np.mean([r.cross_layer_match for r in rs])),
            converged_fraction=float(np.mean([r.converged for r in rs])),
        )
        if top_k:
            top = [r.agreement for r in top_k_by_local_score(rs, top_k)]
            row.update(top_k=len(top), top_k_agreement_mean=float(np.mean(top)), top_k_agreement_se=stderr(top))
        rows.append(row)
    return rows


def write_trials(path, results: list[TrialResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TrialResult.fieldnames())
        w.writeheader()
        for r in sorted(results, key=_sort_key):
            w.writerow(r.row())


def read_trials(path) -> list[TrialResult]:
    with open(path, newline="") as fh:
        return [TrialResult.from_row(row) for row in csv.DictReader(fh)]


def write_rows(path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("nothing to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def parascan_grid(results: list[TrialResult], threshold: float = 0.5) -> list[dict]:
    cells: dict[tuple, list[bool]] = {}
    for r in results:
        cells.setdefault((r.w_pass, r.n_sample), []).append(r.wpp_majority_pass)
    rows = []
    for (wp, ns), v in sorted(cells.items()):
        frac = float(np.mean(v))
        rows.append(dict(w_pass=wp, n_sample=ns, trials=len(v), pass_fraction=frac, flagged=frac >= threshold))
    return rows


_SWEEP_PLOT = '''\
"""Plot {title} from {csv_name}; needs matplotlib."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
curves = defaultdict(list)
with open(src) as fh:
    for row in csv.DictReader(fh):
        key = (row["model"], row["q"], row["p_same"], row["w_pass"], row["n_sample"])
        curves[key].append((float(row["epsilon"]), float(row["{y}"]), float(row.get("{y_se}") or 0.0)))
fig, ax = plt.subplots()
for (model, q, p_same, w_pass, n_sample), pts in sorted(curves.items()):
    pts.sort()
    x, y, e = zip(*pts)
    label = model if model != "correlated" else f"correlated p_same={{p_same}}"
    if len({{k[1] for k in curves}}) > 1:
        label += f" q={{q}}"
    ax.errorbar(x, y, yerr=e, marker="o", capsize=2, label=label)
ax.set_xlabel("epsilon")
ax.set_ylabel("{ylabel}")
ax.legend()
fig.savefig("{png}", dpi=150)
'''

_HEATMAP_PLOT = '''\
"""Heatmap of WPP pass fraction from {csv_name}; needs matplotlib."""
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np

src = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
rows = list(csv.DictReader(open(src)))
wp = sorted({{float(r["w_pass"]) for r in rows}})
ns = sorted({{float(r["n_sample"]) for r in rows}})
grid = np.full((len(wp), len(ns)), np.nan)
for r in rows:
    grid[wp.index(float(r["w_pass"])), ns.index(float(r["n_sample"]))] = float(r["pass_fraction"])
fig, ax = plt.subplots()
im = ax.imshow(grid, origin="lower", aspect="auto", vmin=0, vmax=1)
ax.set_xticks(range(len(ns)), [str(v) for v in ns])
ax.set_yticks(range(len(wp)), [str(v) for v in wp])
ax.set_xlabel("n_sample")
ax.set_ylabel("w_pass")
fig.colorbar(im, label="WPP pass fraction")
fig.savefig("{png}", dpi=150)
'''


def emit_plot_script(path, csv_name: str, kind: str = "sweep", y: str = "Q_mean") -> None:
    """Write a standalone matplotlib script that reads ``csv_name``."""
    path = Path(path)
    png = path.with_suffix(".png").name
    if kind == "heatmap":
        text = _HEATMAP_PLOT.format(csv_name=csv_name, png=png)
    else:
        se = y.replace("_mean", "_se")
        label = {"Q_mean": "normalized agreement Q", "wpp_pass_fraction": "WPP pass fraction"}.get(y, y)
        text = _SWEEP_PLOT.format(title=label, csv_name=csv_name, y=y, y_se=se, ylabel=label, png=png)
    path.write_text(text)


def sweep(config: ExperimentConfig, out_dir=None) -> dict[str, Path]:
    """Run a scenario over its grid and write trial, summary and plot files."""
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_experiment(config)
    stem = config.scenario
    paths = {"trials": out / f"{stem}_trials.csv", "summary": out / f"{stem}_summary.csv"}
    write_trials(paths["trials"], results)
    top_k = config.top_k if config.scenario in ("heterogeneous2", "parascan") else None
    write_rows(paths["summary"], summarize(results, top_k=top_k))
    y = "wpp_pass_fraction" if config.scenario in ("heterogeneous2", "threelayer") else "Q_mean"
    paths["plot"] = out / f"plot_{stem}.py"
    emit_plot_script(paths["plot"], paths["summary"].name, y=y)
    if top_k:
        paths["plot_top_k"] = out / f"plot_{stem}_top_k.py"
        emit_plot_script(paths["plot_top_k"], paths["summary"].name, y="top_k_agreement_mean")
    return paths


def parascan(config: ExperimentConfig, out_dir=None, threshold: float = 0.5) -> dict[str, Path]:
    """Pass-fraction heatmap over ``w_pass_grid`` x ``n_sample_grid`` at the
    first epsilon of the config."""
    config = dataclasses.replace(config, scenario="parascan", epsilons=config.epsilons[:1])
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_experiment(config)
    paths = {"trials": out / "parascan_trials.csv", "heatmap": out / "parascan_heatmap.csv"}
    write_trials(paths["trials"], results)
    write_rows(paths["heatmap"], parascan_grid(results, threshold))
    paths["plot"] = out / "plot_parascan.py"
    emit_plot_script(paths["plot"], paths["heatmap"].name, kind="heatmap")
    return paths
