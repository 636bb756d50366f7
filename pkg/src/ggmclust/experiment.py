"""Simulation-study harness: regimes x sample sizes x repetitions x criteria.

A run writes

* ``anmi_table.csv``: one row per criterion, one column per (regime, n),
  cells formatted ``"mean (std)"``;
* ``candidates_table.csv``: candidate-set size and oracle ANMI per cell;
* ``posterior_k.csv``: posterior over the number of clusters per
  repetition, for likelihood criteria;
* ``cells.json``: every (regime, n, rep, criterion) result, including
  per-cell errors;
* ``manifest.json``: the resolved configuration, seeds and versions.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .admm import AdmmConfig
from .candidates import GlassoConfig, linkage_candidates, spectral_candidates
from .evaluation import anmi, format_cell
from .mcmc import McmcConfig
from .selection import Criterion, select
from .synth import SynthSpec, generate_dataset

__all__ = ["Regime", "ExperimentConfig", "run_cell", "run_experiment", "dumps"]

log = logging.getLogger(__name__)


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


@dataclass(frozen=True)
class Regime:
    cluster_sizes: tuple = (10, 10, 10, 10)
    block_dist: str = "invw"
    noise_dist: str = "none"
    eta: float = 0.0
    n_values: tuple = (400,)

    @property
    def label(self) -> str:
        sizes = "-".join(str(s) for s in self.cluster_sizes)
        noise = "none" if self.noise_dist == "none" else f"{self.noise_dist}{self.eta:g}"
        return f"{self.block_dist}_{sizes}_{noise}"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines an experiment run."""

    regimes: tuple = (Regime(),)
    repetitions: int = 5
    criteria: tuple = ("proposed-vi:0.02", "basic-iw")
    candidate_method: str = "spectral"
    glasso: GlassoConfig = field(default_factory=GlassoConfig)
    admm: AdmmConfig = field(default_factory=AdmmConfig)
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.criteria:
            raise ValueError("at least one criterion is required")
        for c in self.criteria:
            Criterion.parse(c)
        if self.candidate_method not in ("spectral", "single", "average"):
            raise ValueError("candidate_method must be spectral, single or average")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_json(cls, obj) -> "ExperimentConfig":
        if isinstance(obj, str):
            obj = json.loads(obj)
        obj = dict(obj)
        known = {"regimes", "repetitions", "criteria", "candidate_method", "glasso", "admm", "mcmc", "seed", "workers"}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        regimes = []
        for r in obj.pop("regimes", [{}]):
            r = dict(r)
            if "n" in r:
                r["n_values"] = r.pop("n")
            r["cluster_sizes"] = tuple(r.get("cluster_sizes", (10, 10, 10, 10)))
            r["n_values"] = tuple(int(v) for v in np.atleast_1d(r.get("n_values", (400,))))
            regimes.append(Regime(**r))
        glasso = dict(obj.pop("glasso", {}))
        if "lambda_grid" in glasso:
            glasso["lambda_grid"] = tuple(glasso["lambda_grid"])
        return cls(
            regimes=tuple(regimes),
            criteria=tuple(obj.pop("criteria", cls.criteria)),
            glasso=GlassoConfig(**glasso),
            admm=AdmmConfig(**obj.pop("admm", {})),
            mcmc=McmcConfig(**obj.pop("mcmc", {})),
            **obj,
        )

    def to_json(self) -> dict:
        d = asdict(self)
        d["regimes"] = [asdict(r) for r in self.regimes]
        return d


def _candidates(stats, cfg: ExperimentConfig, seed):
    if cfg.candidate_method == "spectral":
        return spectral_candidates(stats, cfg.glasso, seed=seed)
    return linkage_candidates(stats, cfg.candidate_method, cfg.glasso.k_max)


def run_cell(cfg: ExperimentConfig, regime_index: int, n: int, rep: int) -> list:
    """One dataset: generate, build candidates, select under every criterion."""
    regime = cfg.regimes[regime_index]
    spec = SynthSpec(
        cluster_sizes=regime.cluster_sizes,
        n=n,
        block_dist=regime.block_dist,
        noise_dist=regime.noise_dist,
        eta=regime.eta,
        seed=cfg.seed,
        rep=rep,
    )
    base = {"regime": regime.label, "n": n, "rep": rep}
    try:
        ds = generate_dataset(spec)
        kseed = int(np.random.SeedSequence([cfg.seed, rep, n]).generate_state(1)[0])
        cands = _candidates(ds.stats, cfg, kseed)
        oracle = max(anmi(c, ds.truth) for c in cands)
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return [dict(base, criterion=c, error=str(exc)) for c in cfg.criteria]
    out = []
    for text in cfg.criteria:
        crit = Criterion.parse(text)
        rec = dict(base, criterion=crit.name, n_candidates=len(cands), oracle_anmi=oracle)
        try:
            res = select(ds.stats, cands.candidates, crit, cfg.admm, cfg.mcmc)
            rec.update(
                anmi=anmi(res.best, ds.truth),
                best=list(res.best.labels),
                k=res.best.k,
                posterior_k=None if res.posterior_k is None else {str(k): v for k, v in sorted(res.posterior_k.items())},
            )
        except (ValueError, FloatingPointError, RuntimeError, np.linalg.LinAlgError) as exc:
            log.warning("cell %s failed: %s", rec, exc)
            rec["error"] = str(exc)
        out.append(rec)
    return out


def _run_task(args):
    return run_cell(*args)


def run_experiment(cfg: ExperimentConfig, out_dir) -> list:
    """Run every cell and write the tables, figure data and manifest to `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [
        (cfg, ri, n, rep)
        for ri, regime in enumerate(cfg.regimes)
        for n in regime.n_values
        for rep in range(cfg.repetitions)
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [run_cell(*t) for t in tasks]
    cells = [rec for res in results for rec in res]
    _write_outputs(cfg, cells, out_dir)
    return cells


def _columns(cfg):
    return [(r.label, n) for r in cfg.regimes for n in r.n_values]


def _write_outputs(cfg, cells, out_dir):
    cols = _columns(cfg)
    header = ["criterion"] + [f"{label} n={n}" for label, n in cols]
    names = [Criterion.parse(c).name for c in cfg.criteria]

    with open(out_dir / "anmi_table.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for name in names:
            row = [name]
            for label, n in cols:
                vals = [c["anmi"] for c in cells if c["criterion"] == name and c["regime"] == label and c["n"] == n and "anmi" in c]
                row.append(format_cell(vals) if vals else "NA")
            w.writerow(row)

    with open(out_dir / "candidates_table.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity"] + header[1:])
        for key in ("oracle_anmi", "n_candidates"):
            row = [key]
            for label, n in cols:
                seen = {}
                for c in cells:
                    if c["regime"] == label and c["n"] == n and key in c:
                        seen[c["rep"]] = c[key]
                row.append(format_cell(list(seen.values())) if seen else "NA")
            w.writerow(row)

    with open(out_dir / "posterior_k.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["regime", "n", "rep", "criterion", "k", "probability"])
        for c in cells:
            for k, prob in (c.get("posterior_k") or {}).items():
                w.writerow([c["regime"], c["n"], c["rep"], c["criterion"], k, repr(float(prob))])

    (out_dir / "cells.json").write_text(dumps(cells), encoding="utf-8")
    from . import __version__

    manifest = {
        "config": cfg.to_json(),
        "dataset_seeds": [{"seed": cfg.seed, "rep": r} for r in range(cfg.repetitions)],
        "versions": {
            "ggmclust": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "failures": sum("error" in c for c in cells),
    }
    (out_dir / "manifest.json").write_text(dumps(manifest), encoding="utf-8")
