"""Command-line interface.

Subcommands: ``synth``, ``ingest``, ``candidates``, ``score``, ``select``
and ``experiment``. Exit codes: 0 success, 1 usage error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .admm import AdmmConfig
from .candidates import DEFAULT_LAMBDAS, CandidateSet, GlassoConfig, linkage_candidates, spectral_candidates
from .core import Clustering, NotPositiveDefiniteError, SampleStats, read_csv_matrix, standardize
from .evaluation import anmi
from .experiment import ExperimentConfig, dumps, run_experiment
from .mcmc import EstimateFailure, McmcConfig
from .selection import Criterion, score_record, select
from .synth import SynthSpec, generate_dataset, truth_json

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _write(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None


def _load_stats(path) -> SampleStats:
    return SampleStats.from_json(_load_json(path))


def _load_truth(path):
    return Clustering.from_json(_load_json(path)) if path else None


def _load_candidates(path) -> CandidateSet:
    return CandidateSet.from_json(_load_json(path))


def cmd_synth(args):
    sizes = args.clusters
    if args.p is not None and args.p != sum(sizes):
        raise UsageError(f"--p {args.p} does not match the cluster sizes (sum {sum(sizes)})")
    noise = args.noise_dist or ("invw" if args.eta > 0 else "none")
    spec = SynthSpec(sizes, args.n, args.block_dist, noise, args.eta, args.seed, args.rep)
    ds = generate_dataset(spec, keep_data=args.write_data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "stats.json").write_text(dumps(ds.stats.to_json()), encoding="utf-8")
    (out / "truth.json").write_text(truth_json(spec) + "\n", encoding="utf-8")
    (out / "spec.json").write_text(dumps(spec.to_json()), encoding="utf-8")
    if args.write_data:
        with open(out / "data.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in ds.data:
                w.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def cmd_ingest(args):
    X = read_csv_matrix(args.csv, skip_header=args.header)
    names = None
    if args.header:
        with open(args.csv, newline="") as fh:
            names = next(csv.reader(fh))
    Z = standardize(X, names) if not args.no_standardize else X
    _write(args.out, dumps(SampleStats.from_data(Z).to_json()))
    return EXIT_OK


def cmd_candidates(args):
    stats = _load_stats(args.stats)
    if args.method == "spectral":
        cfg = GlassoConfig(lambda_grid=args.lambdas, k_max=args.k_max, tol=args.tol, max_iters=args.max_iters, q=args.q)
        cands = spectral_candidates(stats, cfg, seed=args.seed)
    else:
        cands = linkage_candidates(stats, args.method, args.k_max)
    obj = cands.to_json()
    truth = _load_truth(args.truth)
    if truth is not None:
        obj["oracle_anmi"] = max(anmi(c, truth) for c in cands)
        print(f"candidates: {len(cands)}  oracle ANMI: {obj['oracle_anmi']:.4f}", file=sys.stderr)
    _write(args.out, dumps(obj))
    return EXIT_OK


def _criterion(args):
    return Criterion.parse(args.criterion, beta=args.beta, exclude_one_cluster=args.exclude_one_cluster)


def _solver_cfgs(args):
    admm = AdmmConfig(rho_schedule=args.rho_schedule, max_iters=args.admm_max_iters)
    mcmc = McmcConfig(samples=args.samples, kappa=args.kappa, burn_in_frac=args.burn_in_frac, seed=args.seed)
    return admm, mcmc


def cmd_score(args):
    stats = _load_stats(args.stats)
    cands = _load_candidates(args.candidates)
    crit = _criterion(args)
    admm, mcmc = _solver_cfgs(args)
    records = [score_record(stats, c, crit, admm, mcmc) for c in cands]
    _write(args.out, dumps({"criterion": crit.name, "records": records}))
    return EXIT_OK


def cmd_select(args):
    stats = _load_stats(args.stats)
    cands = _load_candidates(args.candidates)
    crit = _criterion(args)
    admm, mcmc = _solver_cfgs(args)
    res = select(stats, cands.candidates, crit, admm, mcmc)
    obj = res.to_json()
    truth = _load_truth(args.truth)
    if truth is not None:
        obj["anmi"] = anmi(res.best, truth)
        print(f"selected k={res.best.k}  ANMI: {obj['anmi']:.4f}", file=sys.stderr)
    _write(args.out, dumps(obj))
    return EXIT_OK


def cmd_experiment(args):
    cfg = ExperimentConfig.from_json(_load_json(args.config))
    if args.workers is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__, "workers": args.workers})
    cells = run_experiment(cfg, args.out)
    failures = sum("error" in c for c in cells)
    print((Path(args.out) / "anmi_table.csv").read_text(encoding="utf-8"), end="")
    if failures:
        print(f"{failures} cell(s) failed; see cells.json", file=sys.stderr)
    return EXIT_OK


def _add_scoring_flags(sp):
    sp.add_argument("--stats", required=True, help="stats JSON {n, p, S}")
    sp.add_argument("--candidates", required=True, help="candidate JSON")
    sp.add_argument("--criterion", default="proposed-vi", help="proposed-vi[:beta], proposed-mcmc[:beta], basic-iw, ebic[:gamma], aic, chi")
    sp.add_argument("--beta", type=float, default=0.02)
    ex = sp.add_mutually_exclusive_group()
    ex.add_argument("--exclude-one-cluster", dest="exclude_one_cluster", action="store_true", default=None)
    ex.add_argument("--include-one-cluster", dest="exclude_one_cluster", action="store_false")
    sp.add_argument("--samples", type=int, default=10000, help="MCMC samples kept per reduced run")
    sp.add_argument("--kappa", type=float, default=10.0)
    sp.add_argument("--burn-in-frac", type=float, default=0.10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rho-schedule", choices=("adaptive", "geometric"), default="adaptive")
    sp.add_argument("--admm-max-iters", type=int, default=20000)
    sp.add_argument("--out", default="-")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ggmclust", description="Variable clustering with Gaussian graphical models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", help="generate a synthetic dataset bundle")
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--clusters", type=_int_list, default=(10, 10, 10, 10))
    sp.add_argument("--block-dist", choices=("invw", "uniform"), default="invw")
    sp.add_argument("--noise-dist", choices=("invw", "uniform", "none"), default=None)
    sp.add_argument("--eta", type=float, default=0.0)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--rep", type=int, default=0)
    sp.add_argument("--write-data", action="store_true", help="also write data.csv")
    sp.add_argument("--out", required=True, help="output directory")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("ingest", help="standardize a CSV and write its stats JSON")
    sp.add_argument("--csv", required=True)
    sp.add_argument("--header", action="store_true", help="first row holds column names")
    sp.add_argument("--no-standardize", action="store_true")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("candidates", help="build a candidate set")
    sp.add_argument("--stats", required=True)
    sp.add_argument("--method", choices=("spectral", "single", "average"), default="spectral")
    sp.add_argument("--lambdas", type=_float_list, default=DEFAULT_LAMBDAS)
    sp.add_argument("--k-max", type=int, default=15)
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--max-iters", type=int, default=5000)
    sp.add_argument("--q", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--truth", help="truth JSON; reports the oracle ANMI")
    sp.add_argument("--out", default="-")
    sp.set_defaults(func=cmd_candidates)

    sp = sub.add_parser("score", help="score every candidate")
    _add_scoring_flags(sp)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("select", help="select the best candidate")
    _add_scoring_flags(sp)
    sp.add_argument("--truth", help="truth JSON; reports the ANMI of the selection")
    sp.set_defaults(func=cmd_select)

    sp = sub.add_parser("experiment", help="run a simulation grid from a JSON config")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help exits 0, usage errors exit 1
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ggmclust: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NotPositiveDefiniteError, FloatingPointError, EstimateFailure, np.linalg.LinAlgError) as exc:
        print(f"ggmclust: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as exc:
        print(f"ggmclust: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
