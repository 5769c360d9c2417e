"""Batch experiment orchestration: JSON config, deterministic per-trial
seeding, a worker pool, JSON-lines results, and CSV aggregates."""

import csv
import dataclasses
import json
import math
import os
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .noise import (CorruptionSpec, alpha_at, corrupt, corruption_from_dict,
                    corruption_to_dict, noise_from_dict, noise_to_dict,
                    rng_from_seed, sample_noise)
from .recovery import KINDS, PipelineParams, run_pipeline
from .solver import SolverParams
from .tensor import Tensor, rank_one, upper_simplex, upper_simplex_size

SWEEP_CAP = 10_000

CSV_HEADER = ["lambda", "alpha", "epsilon", "trials", "failures",
              "success_rate", "median_correlation", "median_l2_error",
              "mean_wall_ms"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    n: int
    trials: int
    base_seed: int
    lam: float
    noise: object
    out_jsonl: str
    out_csv: str
    p: int = 0
    k: int = 0
    zeta: float = 1.0
    corruption: object = None
    lambdas: list = None
    alphas: list = None
    epsilons: list = None
    success_threshold: float = 0.9
    signal: str = "flat"
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind: unknown pipeline kind {self.kind!r}")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if self.signal not in ("flat", "gaussian"):
            raise ConfigError(f"signal: unknown generator {self.signal!r}")
        if self.alphas is not None and noise_to_dict(self.noise)["kind"] != "heavy_mixture":
            raise ConfigError("alphas: sweeping alpha needs heavy_mixture noise")
        if self.epsilons is not None and self.corruption is None and any(
                e > 0 for e in self.epsilons):
            raise ConfigError("epsilons: sweeping epsilon needs a corruption spec")
        if alpha_at(self.noise, self.zeta) <= 0:
            raise ConfigError("zeta: noise has zero mass within [-zeta, zeta]")
        if len(self.sweep_points()) * self.trials > SWEEP_CAP:
            raise ConfigError(f"sweep: more than {SWEEP_CAP} runs")

    def sweep_points(self):
        lams = self.lambdas if self.lambdas is not None else [self.lam]
        alphas = self.alphas if self.alphas is not None else [None]
        if self.epsilons is not None:
            epss = self.epsilons
        elif self.corruption is not None:
            epss = [self.corruption.epsilon]
        else:
            epss = [0.0]
        return [(la, al, ep) for la in lams for al in alphas for ep in epss]


_CONFIG_KEYS = {
    "kind", "n", "p", "k", "lambda", "zeta", "noise", "corruption", "trials",
    "base_seed", "lambdas", "alphas", "epsilons", "out_jsonl", "out_csv",
    "success_threshold", "signal", "solver",
}


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(d) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"kind", "n", "trials", "base_seed", "noise", "out_jsonl",
               "out_csv"} - set(d)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    if "lambda" not in d and "lambdas" not in d and d["kind"].startswith("tensor"):
        raise ConfigError("missing config keys: ['lambda']")
    try:
        noise = noise_from_dict(d["noise"])
    except ValueError as exc:
        raise ConfigError(f"noise: {exc}") from None
    corruption = None
    if d.get("corruption") is not None:
        try:
            corruption = corruption_from_dict(d["corruption"])
        except ValueError as exc:
            raise ConfigError(f"corruption: {exc}") from None
    lam = float(d.get("lambda", 0.0))
    if lam <= 0.0 and d.get("lambdas"):
        lam = float(d["lambdas"][0])
    if lam <= 0.0 and not d["kind"].startswith("tensor"):
        lam = float(d.get("k", 0)) or 1.0
    return ExperimentConfig(
        kind=d["kind"], n=int(d["n"]), p=int(d.get("p", 0)),
        k=int(d.get("k", 0)), lam=lam, zeta=float(d.get("zeta", 1.0)),
        noise=noise, corruption=corruption, trials=int(d["trials"]),
        base_seed=int(d["base_seed"]),
        lambdas=list(d["lambdas"]) if d.get("lambdas") is not None else None,
        alphas=list(d["alphas"]) if d.get("alphas") is not None else None,
        epsilons=list(d["epsilons"]) if d.get("epsilons") is not None else None,
        out_jsonl=str(d["out_jsonl"]), out_csv=str(d["out_csv"]),
        success_threshold=float(d.get("success_threshold", 0.9)),
        signal=str(d.get("signal", "flat")),
        solver=dict(d.get("solver", {})))


def config_to_dict(config):
    out = {
        "kind": config.kind, "n": config.n, "p": config.p, "k": config.k,
        "lambda": config.lam, "zeta": config.zeta,
        "noise": noise_to_dict(config.noise),
        "corruption": corruption_to_dict(config.corruption)
        if config.corruption is not None else None,
        "trials": config.trials, "base_seed": config.base_seed,
        "lambdas": config.lambdas, "alphas": config.alphas,
        "epsilons": config.epsilons, "out_jsonl": config.out_jsonl,
        "out_csv": config.out_csv,
        "success_threshold": config.success_threshold,
        "signal": config.signal, "solver": dict(config.solver),
    }
    return out


def _make_signal(config, rng):
    n = config.n
    if config.kind.startswith("tensor"):
        if config.signal == "gaussian":
            v = rng.standard_normal(n)
            return v / np.linalg.norm(v)
        signs = 2.0 * rng.integers(0, 2, n) - 1.0
        return signs / math.sqrt(n)
    support = np.sort(rng.choice(n, size=config.k, replace=False))
    v = np.zeros(n)
    v[support] = (2.0 * rng.integers(0, 2, config.k) - 1.0) / math.sqrt(config.k)
    return v


def _symmetric_noise_matrix(noise, n, seed):
    # Draw one value per unordered pair (diagonal included), mirror.
    vals = sample_noise(noise, n * (n + 1) // 2, seed)
    M = np.zeros((n, n))
    iu = np.triu_indices(n)
    M[iu] = vals
    strict = np.triu_indices(n, 1)
    M[(strict[1], strict[0])] = M[strict]
    return M


def _make_observation(config, lam, noise, v, seed):
    n, p, kind = config.n, config.p, config.kind
    if kind in ("tensor-pca-odd", "tensor-pca-even"):
        signal = Tensor(p, n, lam * rank_one(v, p).values)
        obs = Tensor(p, n, signal.values + sample_noise(noise, n ** p, seed))
        return obs, signal
    if kind == "tensor-pca-symmetric":
        full = rank_one(v, p)
        sig_vec = lam * upper_simplex(full, False)
        count = upper_simplex_size(n, p, False)
        obs = Tensor(1, count, sig_vec + sample_noise(noise, count, seed))
        return obs, Tensor(1, count, sig_vec)
    if kind == "sparse-pca":
        signal = Tensor(2, n, lam * np.outer(v, v).ravel())
        obs = Tensor(2, n, signal.values +
                     _symmetric_noise_matrix(noise, n, seed).ravel())
        return obs, signal
    # strict upper triangle of lam vv^T plus independent noise
    iu = np.triu_indices(n, 1)
    sig_vec = lam * np.outer(v, v)[iu]
    count = n * (n - 1) // 2
    obs = Tensor(1, count, sig_vec + sample_noise(noise, count, seed))
    return obs, Tensor(1, count, sig_vec)


def run_single_trial(config, point, point_idx, trial_idx):
    """One seeded trial at one sweep point. Returns the result row dict.

    Failures of any stage are folded into a status field; a bad trial must
    not take the sweep down with it.
    """
    lam, alpha_override, eps = point
    trial_seed = config.base_seed + trial_idx
    try:
        noise = config.noise
        if alpha_override is not None:
            noise = dataclasses.replace(noise, alpha=float(alpha_override))
        corruption = None
        if config.corruption is not None:
            corruption = dataclasses.replace(config.corruption,
                                             epsilon=float(eps))
        elif eps:
            raise ConfigError("epsilon sweep without a corruption spec")

        sub = np.random.SeedSequence([trial_seed, point_idx]).generate_state(3)
        v = _make_signal(config, rng_from_seed(int(sub[0])))
        obs, signal = _make_observation(config, lam, noise, v, int(sub[1]))
        if corruption is not None and corruption.epsilon > 0:
            obs, _ = corrupt(obs, corruption, signal, int(sub[2]))
        if config.kind in ("tensor-pca-symmetric", "sparse-pca-upper-triangle"):
            obs = obs.values  # pipeline rebuilds the full tensor itself

        solver = SolverParams(**config.solver)
        params = PipelineParams(
            kind=config.kind, n=config.n, p=config.p, k=config.k,
            lam=float(lam), alpha=alpha_at(noise, config.zeta),
            zeta=config.zeta, corruption=corruption, solver=solver)
        _, result = run_pipeline(obs, params, seed=trial_seed, truth=v)
        return result.to_row()
    except Exception as exc:
        try:
            alpha = alpha_at(config.noise, config.zeta)
        except Exception:
            alpha = 0.0
        return {"seed": trial_seed, "kind": config.kind, "n": config.n,
                "p": config.p, "k": config.k, "lambda": float(lam),
                "alpha": alpha, "epsilon": float(eps), "correlation": None,
                "l2_error": None, "objective": None, "converged": False,
                "wall_ms": 0.0, "status": f"failed: {exc}"}


def _aggregate_key(row):
    return (row["lambda"], row["alpha"], row["epsilon"])


def aggregate_rows(rows, threshold):
    """Fold result rows into per-sweep-point aggregate dicts (CSV_HEADER order)."""
    groups = {}
    order = []
    for row in rows:
        key = _aggregate_key(row)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for key in order:
        rows_here = groups[key]
        ok = [r for r in rows_here if r["status"] == "ok"]
        agg = {"lambda": key[0], "alpha": key[1], "epsilon": key[2],
               "trials": len(ok), "failures": len(rows_here) - len(ok)}
        if ok:
            agg["success_rate"] = sum(
                1 for r in ok if r["correlation"] is not None
                and r["correlation"] >= threshold) / len(ok)
            corrs = [r["correlation"] for r in ok if r["correlation"] is not None]
            errs = [r["l2_error"] for r in ok if r["l2_error"] is not None]
            agg["median_correlation"] = statistics.median(corrs) if corrs else None
            agg["median_l2_error"] = statistics.median(errs) if errs else None
            agg["mean_wall_ms"] = sum(r["wall_ms"] for r in ok) / len(ok)
        else:
            agg["success_rate"] = 0.0
            agg["median_correlation"] = None
            agg["median_l2_error"] = None
            agg["mean_wall_ms"] = None
        out.append(agg)
    return out


def _worker_count():
    env = os.environ.get("OBLIV_THREADS")
    if env is not None:
        count = int(env)
        if count < 1:
            raise ConfigError("OBLIV_THREADS must be >= 1")
        return count
    return min(4, os.cpu_count() or 1)


def run_experiment(config):
    """Run the sweep, write JSON-lines per-trial rows and the CSV aggregate.

    Rows are computed on a worker pool but always written in (sweep point,
    trial) order, so re-running an identical config reproduces every
    non-timing byte.
    """
    points = config.sweep_points()
    jobs = [(pi, ti) for pi in range(len(points)) for ti in range(config.trials)]
    workers = _worker_count()

    def work(job):
        pi, ti = job
        return run_single_trial(config, points[pi], pi, ti)

    if workers == 1:
        rows = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(work, jobs))

    for path in (config.out_jsonl, config.out_csv):
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
    with open(config.out_jsonl, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    aggregates = aggregate_rows(rows, config.success_threshold)
    with open(config.out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for agg in aggregates:
            writer.writerow(["" if agg[col] is None else agg[col]
                             for col in CSV_HEADER])
    return config.out_jsonl, config.out_csv
