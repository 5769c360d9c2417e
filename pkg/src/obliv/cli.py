"""Command-line front end: batch sweeps, one-off estimates, complexity
estimation, planted-clique instances, compiled-system dumps, and a self-test.

Exit codes: 0 success, 1 validation error (bad flags, bad config, bad JSON),
2 runtime failure.
"""

import argparse
import csv
import dataclasses
import json
import math
import sys

import numpy as np

from .complexity import (gaussian_complexity_mc, rademacher_complexity_mc,
                         sparse_complexity_bound_mc)
from .harness import (ExperimentConfig, config_from_dict, config_to_dict,
                      run_experiment, run_single_trial)
from .moments import (compile_sparse_pca, compile_tensor_pca,
                      compile_unit_ball, dykstra_project, system_to_json)
from .noise import (BoundedUniform, alpha_at, corrupt, corruption_from_dict,
                    noise_from_dict, rng_from_seed)
from .recovery import (clique_reduce, correlation, planted_clique_gen,
                       round_odd)
from .solver import SolverParams, exact_hypercube_estimate
from .tensor import (Tensor, huber_grad, huber_second_order_gap, huber_value,
                     rank_one, tensor_diff_norm_check)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="obliv",
        description="signal recovery under oblivious noise: batch runs and diagnostics")
    sub = parser.add_subparsers(dest="command")

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's base_seed")

    p_est = sub.add_parser("estimate", help="run a single seeded instance")
    p_est.add_argument("--kind", required=True)
    p_est.add_argument("--n", type=int, required=True)
    p_est.add_argument("--p", type=int, default=0)
    p_est.add_argument("--k", type=int, default=0)
    p_est.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p_est.add_argument("--zeta", type=float, default=1.0)
    p_est.add_argument("--noise", required=True,
                       help='noise spec as JSON, e.g. \'{"kind": "cauchy", "scale": 1.0}\'')
    p_est.add_argument("--corruption", default=None,
                       help="corruption spec as JSON")
    p_est.add_argument("--signal", default="flat", choices=["flat", "gaussian"])
    p_est.add_argument("--solver", default=None, help="solver params as JSON")
    p_est.add_argument("--seed", type=int, default=0)

    p_cpx = sub.add_parser("complexity", help="Monte-Carlo complexity estimate")
    p_cpx.add_argument("config", help="path to a JSON complexity config")

    p_clq = sub.add_parser("clique", help="sample a planted-clique instance")
    p_clq.add_argument("--n", type=int, required=True)
    p_clq.add_argument("--q", type=float, required=True)
    p_clq.add_argument("--k", type=int, required=True)
    p_clq.add_argument("--seed", type=int, default=0)

    p_dmp = sub.add_parser("dump-system", help="print a compiled system as JSON")
    p_dmp.add_argument("--problem", required=True,
                       choices=["tensor-pca", "sparse-pca", "unit-ball"])
    p_dmp.add_argument("--n", type=int, required=True)
    p_dmp.add_argument("--p", type=int, default=3)
    p_dmp.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p_dmp.add_argument("--k", type=int, default=1)
    p_dmp.add_argument("--b", type=float, default=100.0)

    sub.add_parser("selftest", help="run the fast invariant battery")
    return parser


def _cmd_run(args):
    with open(args.config) as fh:
        raw = json.load(fh)
    if args.seed is not None:
        raw["base_seed"] = args.seed
    config = config_from_dict(raw)
    jsonl_path, csv_path = run_experiment(config)
    print(jsonl_path)
    print(csv_path)
    return 0


def _cmd_estimate(args):
    noise = noise_from_dict(json.loads(args.noise))
    corruption = None
    if args.corruption is not None:
        corruption = corruption_from_dict(json.loads(args.corruption))
    solver = json.loads(args.solver) if args.solver else {}
    lam = args.lam
    if lam <= 0.0:
        if args.kind.startswith("tensor"):
            raise ValueError("--lambda is required for tensor kinds")
        lam = float(args.k)
    config = ExperimentConfig(
        kind=args.kind, n=args.n, p=args.p, k=args.k, lam=lam,
        zeta=args.zeta, noise=noise, corruption=corruption, trials=1,
        base_seed=args.seed, out_jsonl="", out_csv="", signal=args.signal,
        solver=solver)
    eps = corruption.epsilon if corruption is not None else 0.0
    row = run_single_trial(config, (lam, None, eps), 0, 0)
    print(json.dumps(row, indent=2))
    return 0


def _compile_from_spec(spec):
    problem = spec["problem"]
    n = int(spec["n"])
    if problem == "tensor-pca":
        return compile_tensor_pca(n, int(spec["p"]), float(spec["lambda"])), int(spec["p"])
    if problem == "sparse-pca":
        return compile_sparse_pca(n, int(spec["k"]), float(spec.get("b", 100.0))), 2
    if problem == "unit-ball":
        return compile_unit_ball(n), 1
    raise ValueError(f"unknown problem: {problem!r}")


def _cmd_complexity(args):
    with open(args.config) as fh:
        spec = json.load(fh)
    estimator = spec.get("estimator", "gaussian")
    trials = int(spec.get("trials", 50))
    seed = int(spec.get("seed", 0))
    if estimator == "sparse-bound":
        report = sparse_complexity_bound_mc(
            int(spec["n"]), int(spec["k"]), int(spec["t"]), trials, seed)
    elif estimator in ("gaussian", "rademacher"):
        sys_, p = _compile_from_spec(spec)
        params = SolverParams(**spec.get("solver", {}))
        fn = gaussian_complexity_mc if estimator == "gaussian" else rademacher_complexity_mc
        report = fn(sys_, p, trials, params, seed)
    else:
        raise ValueError(f"unknown estimator: {estimator!r}")
    writer = csv.writer(sys.stdout)
    writer.writerow(["trial", "value"])
    for i, value in enumerate(report.values):
        writer.writerow([i, value])
    print(json.dumps(dataclasses.asdict(report)), file=sys.stderr)
    return 0


def _cmd_clique(args):
    G, clique = planted_clique_gen(args.n, args.q, args.k, args.seed)
    iu = np.triu_indices(G.n, 1)
    edge_list = [[int(i), int(j)]
                 for i, j in zip(*iu) if G.adj[i, j]]
    print(json.dumps({
        "n": G.n, "q": args.q, "k": args.k, "seed": args.seed,
        "edges": G.edge_count(), "edge_list": edge_list,
        "clique": sorted(int(v) for v in clique),
    }))
    return 0


def _cmd_dump_system(args):
    if args.problem == "tensor-pca":
        sys_ = compile_tensor_pca(args.n, args.p, args.lam)
    elif args.problem == "sparse-pca":
        sys_ = compile_sparse_pca(args.n, args.k, args.b)
    else:
        sys_ = compile_unit_ball(args.n)
    print(json.dumps(system_to_json(sys_), indent=2))
    return 0


def _selftest_checks():
    def huber_gap():
        ts = np.linspace(-3.0, 3.0, 25)
        ds = np.linspace(-2.0, 2.0, 25)
        for zeta in (0.0, 0.7, 1.5):
            gaps = huber_second_order_gap(
                ts[:, None], ds[None, :], zeta, 1.5)
            assert gaps.min() >= -1e-12

    def huber_fd():
        h = 1.2
        for t in (-2.0, -0.4, 0.3, 2.5):
            fd = (huber_value(t + 5e-7, h) - huber_value(t - 5e-7, h)) / 1e-6
            assert abs(huber_grad(t, h) - fd) < 1e-5

    def diff_norms():
        rng = rng_from_seed(7)
        for _ in range(20):
            v = rng.standard_normal(6)
            x = rng.standard_normal(6)
            lower_ok, upper_ok, _ = tensor_diff_norm_check(
                v / np.linalg.norm(v), x / np.linalg.norm(x))
            assert lower_ok and upper_ok

    def witnesses():
        # feasibility is asserted inside the constructors
        compile_tensor_pca(3, 2, 4.0)
        compile_sparse_pca(6, 2, 100.0)

    def projection_fixed_point():
        sys_ = compile_tensor_pca(3, 2, 4.0)
        from .moments import PseudoMoments
        m = PseudoMoments(sys_.basis, sys_.witness[:sys_.basis.size].copy())
        out, report = dykstra_project(m, sys_)
        assert report.converged
        assert float(np.abs(out.values - m.values).max()) < 1e-6

    def hypercube_exact():
        rng = rng_from_seed(3)
        n = 6
        v = (2.0 * rng.integers(0, 2, n) - 1.0) / math.sqrt(n)
        T = Tensor(3, n, 5.0 * rank_one(v, 3).values)
        v_hat, _ = exact_hypercube_estimate(T, 5.0, 1.0, n)
        assert np.allclose(np.abs(v_hat @ v), 1.0, atol=1e-12)

    def config_round_trip():
        raw = {"kind": "tensor-pca-odd", "n": 4, "p": 3, "k": 0,
               "lambda": 30.0, "zeta": 1.0,
               "noise": {"kind": "bounded_uniform", "zeta": 1.0},
               "corruption": None, "trials": 2, "base_seed": 11,
               "lambdas": None, "alphas": None, "epsilons": None,
               "out_jsonl": "/tmp/r.jsonl", "out_csv": "/tmp/r.csv",
               "success_threshold": 0.9, "signal": "flat", "solver": {}}
        assert config_to_dict(config_from_dict(raw)) == raw

    def rounding():
        from .moments import PseudoMoments, monomial_basis
        rng = rng_from_seed(5)
        v = rng.standard_normal(5)
        v /= np.linalg.norm(v)
        basis = monomial_basis(5, 2, 10_000)
        atoms = np.stack([v, -v])
        m = PseudoMoments.from_distribution(basis, atoms, np.array([0.9, 0.1]))
        assert correlation(v, round_odd(m)) > 0.999

    def clique_structure():
        G, clique = planted_clique_gen(20, 0.3, 5, seed=2)
        C = clique_reduce(G)
        assert set(np.unique(C)) <= {-1.0, 1.0}
        iu = np.triu_indices(20, 1)
        inside = np.array([a in clique and b in clique
                           for a, b in zip(*iu)])
        assert np.all(C[inside] == 1.0)

    def noise_basics():
        assert abs(alpha_at(BoundedUniform(2.0), 1.0) - 0.5) < 1e-15
        Y = Tensor(1, 10, np.zeros(10))
        spec = corruption_from_dict(
            {"epsilon": 0.25, "strategy": "random_extreme", "magnitude": 3.0})
        Z, mask = corrupt(Y, spec, Y, seed=0)
        assert mask.size == 2 and np.all(np.abs(Z.values[mask]) == 3.0)

    return [("huber-gap", huber_gap), ("huber-grad-fd", huber_fd),
            ("tensor-diff-norms", diff_norms), ("witness-feasibility", witnesses),
            ("projection-fixed-point", projection_fixed_point),
            ("hypercube-exact", hypercube_exact),
            ("config-round-trip", config_round_trip), ("rounding", rounding),
            ("clique-structure", clique_structure),
            ("noise-basics", noise_basics)]


def _cmd_selftest(args):
    failed = 0
    for name, check in _selftest_checks():
        try:
            check()
        except Exception as exc:
            failed += 1
            print(f"FAIL {name}: {exc}")
        else:
            print(f"ok {name}")
    if failed:
        print(f"{failed} check(s) failed", file=sys.stderr)
        return 2
    return 0


_HANDLERS = {
    "run": _cmd_run,
    "estimate": _cmd_estimate,
    "complexity": _cmd_complexity,
    "clique": _cmd_clique,
    "dump-system": _cmd_dump_system,
    "selftest": _cmd_selftest,
}


def cli_dispatch(argv):
    """Parse argv and run the selected subcommand; returns the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; the latter are
        # validation errors here.
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
