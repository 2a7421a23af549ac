"""Experiment harness: configs, the query loop, regret metrics, sweeps and result files."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .belief import KernelSpec, condition_many, prior
from .core import DEFAULT_EPSILON, alpha_rank, alpha_rank_batch
from .games import GameEnv, gaussian_game, good_bad_game, matrix_game, observe_many
from .ranks import RankSampleSet, mode, prob_of, sample_ranks
from .samplers import (SamplerState, Hyperparameters, alpha_ig_scores, alpha_ig_select, alpha_wass_scores,
                       alpha_wass_select, payoff_ig_select, rg_ucb_step, sample_interval_matrices,
                       uniform_select)

log = logging.getLogger(__name__)

SAMPLER_TYPES = ("alpha_ig", "alpha_wass", "payoff_ig", "uniform", "rg_ucb")
GAME_TYPES = ("good_bad", "gaussian", "matrix")
PRESETS = ("2g2b", "3g5b", "gaussian4x4", "3g5b_prior")
MATCH_TOL = 0.01
EVAL_DECIMALS = 3

# seed-stream tags
_OBSERVE, _SELECT, _EVAL = 0, 1, 2


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment cell.

    ``game`` is a dict with ``type`` in :data:`GAME_TYPES` plus its parameters
    (``seed`` for the Gaussian game).  ``sampler`` is a dict with ``type`` in
    :data:`SAMPLER_TYPES` plus :class:`Hyperparameters` fields and
    ``pseudo_samples`` for RG-UCB.  ``belief`` holds ``kernel`` (a
    :class:`KernelSpec` dict) and ``sigma_a2``.
    """

    game: dict = field(default_factory=lambda: {"type": "good_bad", "n_good": 2, "n_bad": 2, "p_top": 0.55})
    sampler: dict = field(default_factory=lambda: {"type": "alpha_ig"})
    belief: dict = field(default_factory=lambda: {"kernel": {"kind": "independent"}, "sigma_a2": 0.5})
    budget: int = 5000
    eval_points: int = 100
    eval_samples: int = 2000
    epsilon: float = DEFAULT_EPSILON
    seeds: tuple = (0,)
    name: str = ""

    def __post_init__(self):
        if self.game.get("type") not in GAME_TYPES:
            raise ValueError(f"unknown game type {self.game.get('type')!r}")
        if self.sampler.get("type") not in SAMPLER_TYPES:
            raise ValueError(f"unknown sampler type {self.sampler.get('type')!r}")
        params = self.hyperparameters()
        if self.budget < params.n_r:
            raise ValueError("budget must cover at least one round of n_r queries")
        if self.eval_points < 1 or self.eval_points > self.budget:
            raise ValueError("eval_points must lie in [1, budget]")
        if self.eval_samples < 1:
            raise ValueError("eval_samples must be positive")
        if not self.seeds:
            raise ValueError("need at least one seed")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        self.kernel_spec()

    @property
    def sampler_type(self) -> str:
        return self.sampler["type"]

    @property
    def bayesian(self) -> bool:
        return self.sampler_type != "rg_ucb"

    def hyperparameters(self) -> Hyperparameters:
        names = {f.name for f in dataclasses.fields(Hyperparameters)}
        kwargs = {k: v for k, v in self.sampler.items() if k in names}
        if "bounds" in kwargs:
            kwargs["bounds"] = tuple(float(b) for b in kwargs["bounds"])
        return Hyperparameters(epsilon=self.epsilon, **{k: v for k, v in kwargs.items() if k != "epsilon"})

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec.from_dict(self.belief.get("kernel", {"kind": "independent"}))

    @property
    def sigma_a2(self) -> float:
        return float(self.belief.get("sigma_a2", 0.5))

    @property
    def rounds(self) -> int:
        return self.budget // self.hyperparameters().n_r

    def eval_rounds(self) -> list[int]:
        """Evenly spaced evaluation rounds, always including round 0 and the last round."""
        points = np.rint(np.linspace(0, self.rounds, self.eval_points + 1)).astype(int)
        return sorted(set(points.tolist()))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "game": dict(self.game),
            "sampler": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.sampler.items()},
            "belief": {"kernel": self.kernel_spec().to_dict(), "sigma_a2": self.sigma_a2},
            "budget": self.budget,
            "eval_points": self.eval_points,
            "eval_samples": self.eval_samples,
            "epsilon": self.epsilon,
            "seeds": list(self.seeds),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build a config, starting from ``doc["preset"]`` defaults when given."""
        doc = dict(doc)
        base = {}
        preset_name = doc.pop("preset", None)
        if preset_name is not None:
            sampler_type = doc.get("sampler", {}).get("type", "alpha_ig")
            estimator = doc.get("sampler", {}).get("estimator", "binning")
            base = preset(preset_name, sampler_type, estimator).to_dict()
        merged = _deep_merge(base, doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(merged) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "seeds" in merged:
            merged["seeds"] = tuple(merged["seeds"])
        return cls(**merged)

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("seeds")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_deep_merge(self.to_dict(), changes))


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def preset(name: str, sampler_type: str = "alpha_ig", estimator: str = "binning") -> ExperimentConfig:
    """Published per-game hyperparameters for one sampler."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    sampler = {"type": sampler_type, "estimator": estimator, "n_c": 100}
    if name == "2g2b":
        game = {"type": "good_bad", "n_good": 2, "n_bad": 2, "p_top": 0.55}
        sampler.update(n_e=20, n_b=1000, n_r=10, delta=0.4, bounds=[0.0, 1.0])
        sigma02, sigma_a2 = 1.0, (0.25 if sampler_type == "alpha_wass" else 0.5)
        budget = 5000
    elif name == "3g5b":
        game = {"type": "good_bad", "n_good": 3, "n_bad": 5, "p_top": 0.55}
        sampler.update(n_e=10, n_b=500, n_r=500, delta=0.05, bounds=[0.0, 1.0])
        sigma02, sigma_a2 = 1.0, (0.25 if sampler_type == "alpha_wass" else 0.5)
        budget = 50_000
    elif name == "gaussian4x4":
        game = {"type": "gaussian", "s": 4, "seed": 0, "noise_sd": 1.0, "clip": 1.0}
        sampler.update(n_e=10, n_b=500, n_r=100, delta=0.3, bounds=[-1.0, 2.0])
        if sampler_type == "alpha_wass":
            sigma02, sigma_a2 = 1.0, 0.5
        elif estimator == "nsb":
            sigma02, sigma_a2 = 0.5, 0.5
        else:
            sigma02, sigma_a2 = 1.0, 1.0
        budget = 10_000
    else:
        game = {"type": "good_bad", "n_good": 3, "n_bad": 5, "p_top": 0.55}
        sampler.update(n_e=10, n_b=500, n_r=100, delta=0.05, bounds=[0.0, 1.0], pseudo_samples=True)
        sigma02, sigma_a2 = 1.0, 0.5
        budget = 20_000
        kernel = KernelSpec("block_antisymmetric", mu0=0.5, sigma0_sq=sigma02, n_good=3, n_bad=5)
        return ExperimentConfig(game, sampler, {"kernel": kernel.to_dict(), "sigma_a2": sigma_a2}, budget,
                                name=f"{name}-{sampler_type}")
    kernel = KernelSpec("independent", mu0=0.5, sigma0_sq=sigma02)
    return ExperimentConfig(game, sampler, {"kernel": kernel.to_dict(), "sigma_a2": sigma_a2}, budget,
                            name=f"{name}-{sampler_type}")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def build_game(spec: dict) -> GameEnv:
    kind = spec["type"]
    if kind == "good_bad":
        return good_bad_game(int(spec["n_good"]), int(spec["n_bad"]), float(spec.get("p_top", 0.55)))
    if kind == "gaussian":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        return gaussian_game(int(spec["s"]), rng, float(spec.get("noise_sd", 1.0)), float(spec.get("clip", 1.0)))
    return matrix_game(spec["matrix"], spec.get("observation_model", "bernoulli"),
                       noise_sd=float(spec.get("noise_sd", 1.0)), clip=float(spec.get("clip", 1.0)))


# --------------------------------------------------------------------------
# regret metrics
# --------------------------------------------------------------------------


def regret_jm(belief_mean, r_gt, epsilon: float = DEFAULT_EPSILON) -> int:
    """0 when the alpha-rank of the mean payoffs is within L1 0.01 of ``r_gt``, else 1."""
    r = alpha_rank(belief_mean, epsilon)
    target = np.asarray(r_gt, dtype=float)
    if r.shape != target.shape:
        raise ValueError(f"rank shapes differ: {r.shape} vs {target.shape}")
    return 0 if np.abs(r - target).sum() < MATCH_TOL else 1


def regret_jf(rank_set: RankSampleSet, r_gt) -> float:
    """``1 - P(r_gt)`` over the rounded samples."""
    return 1.0 - prob_of(rank_set, r_gt, MATCH_TOL, decimal_places=rank_set.precision)


def regret_jb(rank_set: RankSampleSet) -> float:
    """``1 - P(r_*)`` with ``r_*`` the most frequent rounded sample."""
    dp = rank_set.precision
    return 1.0 - prob_of(rank_set, mode(rank_set, dp), MATCH_TOL, decimal_places=dp)


# --------------------------------------------------------------------------
# single run
# --------------------------------------------------------------------------


@dataclass
class RunRecord:
    seed: int
    config_hash: str
    queries: list = field(default_factory=list)
    jb: list = field(default_factory=list)
    jf: list = field(default_factory=list)
    jm: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    wall_clock: float = 0.0
    finished_round: Optional[int] = None
    error: Optional[str] = None

    def log_point(self, queries: int, jb: float, jf: float, jm: int) -> None:
        self.queries.append(int(queries))
        self.jb.append(float(jb))
        self.jf.append(float(jf))
        self.jm.append(int(jm))

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["queries", "jb", "jf", "jm"])
        for row in zip(self.queries, self.jb, self.jf, self.jm):
            writer.writerow([row[0], repr(row[1]), repr(row[2]), row[3]])
        return buf.getvalue()

    def first_zero_jm(self) -> Optional[int]:
        """Queries at which J^M hits 0 and stays 0 for the rest of the record."""
        jm = np.asarray(self.jm)
        if jm.size == 0 or jm[-1] != 0:
            return None
        nonzero = np.nonzero(jm)[0]
        start = 0 if nonzero.size == 0 else nonzero[-1] + 1
        return self.queries[start]


def _rng(seed: int, tag: int, *more: int) -> np.random.Generator:
    return np.random.default_rng([seed, tag, *more])


def make_state(config: ExperimentConfig, env: GameEnv) -> SamplerState:
    params = config.hyperparameters()
    belief = None
    if config.bayesian:
        belief = prior(config.kernel_spec(), env.num_entries, config.sigma_a2)
    pseudo = None
    if config.sampler_type == "rg_ucb" and config.sampler.get("pseudo_samples", False):
        if config.game["type"] != "good_bad":
            raise ValueError("pseudo-samples need a good/bad block structure")
        pseudo = int(config.game["n_good"])
    return SamplerState(env.num_strategies, params, belief, pseudo_n_good=pseudo)


def select_entry(config: ExperimentConfig, state: SamplerState, rng: np.random.Generator) -> Optional[int]:
    kind = config.sampler_type
    if kind == "alpha_ig":
        return alpha_ig_select(state, state.params.estimator, rng)
    if kind == "alpha_wass":
        return alpha_wass_select(state, rng)
    if kind == "payoff_ig":
        return payoff_ig_select(state)
    if kind == "uniform":
        return uniform_select(state, rng)
    return rg_ucb_step(state)


def evaluate(config: ExperimentConfig, state: SamplerState, r_gt: np.ndarray,
             rng: np.random.Generator) -> tuple[float, float, int]:
    """``(J^B, J^F, J^M)`` for the current state."""
    s = state.num_strategies
    eps = config.epsilon
    if config.bayesian:
        mean = state.belief.mean.reshape(s, s)
        rank_set = sample_ranks(state.belief, config.eval_samples, eps, rng, EVAL_DECIMALS)
    else:
        mean = state.empirical_means().reshape(s, s)
        ranks = alpha_rank_batch(sample_interval_matrices(state, config.eval_samples, rng), eps)
        rank_set = RankSampleSet(ranks, eps, EVAL_DECIMALS)
    return regret_jb(rank_set), regret_jf(rank_set, r_gt), regret_jm(mean, r_gt, eps)


def run(config: ExperimentConfig, seed: Optional[int] = None) -> RunRecord:
    """One seeded run.  On failure the partial record is returned with ``error`` set."""
    seed = config.seeds[0] if seed is None else int(seed)
    started = time.perf_counter()
    record = RunRecord(seed, config.config_hash())
    env = build_game(config.game)
    r_gt = alpha_rank(env.payoffs, config.epsilon)
    state = make_state(config, env)
    obs_rng = _rng(seed, _OBSERVE)
    select_rng = _rng(seed, _SELECT)
    eval_at = set(config.eval_rounds())
    n_r = state.params.n_r
    try:
        for rnd in range(config.rounds + 1):
            if rnd in eval_at:
                record.log_point(state.total_queries, *evaluate(config, state, r_gt, _rng(seed, _EVAL, rnd)))
            if rnd == config.rounds or record.finished_round is not None:
                continue
            entry = select_entry(config, state, select_rng)
            if entry is None:
                record.finished_round = rnd
                log.info("seed %d: sampler finished after %d rounds", seed, rnd)
                continue
            state.record(entry, observe_many(env, entry, n_r, obs_rng))
    except Exception as exc:  # flush what we have
        record.error = f"{type(exc).__name__}: {exc}"
        log.exception("run failed (seed %d)", seed)
    record.counts = state.counts.tolist()
    record.wall_clock = time.perf_counter() - started
    return record


def manifest(config: ExperimentConfig, record: RunRecord) -> dict:
    import scipy

    from . import __version__

    return {
        "config": config.to_dict(),
        "config_hash": record.config_hash,
        "seed": record.seed,
        "counts": record.counts,
        "finished_round": record.finished_round,
        "wall_clock_s": record.wall_clock,
        "error": record.error,
        "x_axis": f"raw environment queries (rounds x n_r, n_r={config.hyperparameters().n_r})",
        "versions": {"artifact": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }


def write_run(config: ExperimentConfig, record: RunRecord, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"run_{record.config_hash}_seed{record.seed}"
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    csv_path.write_text(record.metrics_csv())
    json_path.write_text(json.dumps(manifest(config, record), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


# --------------------------------------------------------------------------
# sweeps and analysis
# --------------------------------------------------------------------------


def auc(queries, values) -> float:
    """Left-rectangle area under a regret trace."""
    q = np.asarray(queries, dtype=float)
    v = np.asarray(values, dtype=float)
    if q.size != v.size:
        raise ValueError("queries and values must align")
    if q.size < 2:
        return 0.0
    return float(np.sum(v[:-1] * np.diff(q)))


def summarize(records: list[RunRecord]) -> dict:
    """Mean and standard error of each metric per eval point over successful runs."""
    ok = [r for r in records if r.error is None]
    if not ok:
        raise ValueError("no successful runs to summarise")
    length = min(len(r.queries) for r in ok)
    out = {"queries": np.asarray(ok[0].queries[:length])}
    for metric in ("jb", "jf", "jm"):
        values = np.array([getattr(r, metric)[:length] for r in ok], dtype=float)
        out[f"{metric}_mean"] = values.mean(axis=0)
        se = values.std(axis=0, ddof=1) / np.sqrt(len(ok)) if len(ok) > 1 else np.zeros(length)
        out[f"{metric}_se"] = se
    out["auc_jm"] = auc(out["queries"], out["jm_mean"])
    return out


def _run_cell(args):
    config, seed = args
    return run(config, seed)


def sweep(configs: list[ExperimentConfig], out_dir=None, workers: int = 1) -> list[dict]:
    """Run every config on every seed and return one summary row per config."""
    if not configs:
        raise ValueError("need at least one config")
    cells = [(c, s) for c in configs for s in c.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = [_run_cell(cell) for cell in cells]
    rows = []
    for config in configs:
        mine = [r for (c, _), r in zip(cells, records) if c is config]
        row = {"name": config.name, "config_hash": config.config_hash(), "seeds": len(mine),
               "failed": sum(r.error is not None for r in mine)}
        try:
            summary = summarize(mine)
            row.update(auc_jm=summary["auc_jm"], final_jm=float(summary["jm_mean"][-1]),
                       final_jf=float(summary["jf_mean"][-1]), final_jb=float(summary["jb_mean"][-1]))
        except ValueError as exc:
            summary = None
            row.update(auc_jm=None, final_jm=None, final_jf=None, final_jb=None, error=str(exc))
        rows.append(row)
        if out_dir is not None:
            for record in mine:
                write_run(config, record, out_dir)
            if summary is not None:
                _write_curve(Path(out_dir) / f"curve_{row['config_hash']}.csv", summary)
    if out_dir is not None:
        _write_summary(Path(out_dir) / "summary.csv", rows)
    return rows


def _write_curve(path: Path, summary: dict) -> None:
    cols = ["queries", "jb_mean", "jb_se", "jf_mean", "jf_se", "jm_mean", "jm_se"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for k in range(len(summary["queries"])):
            writer.writerow([int(summary["queries"][k])] + [repr(float(summary[c][k])) for c in cols[1:]])


def _write_summary(path: Path, rows: list[dict]) -> None:
    cols = ["name", "config_hash", "seeds", "failed", "auc_jm", "final_jm", "final_jf", "final_jb", "error"]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in cols})


def expand_grid(doc: dict) -> list[ExperimentConfig]:
    """Cartesian product over ``doc["grid"]``, whose keys are dotted config paths."""
    doc = dict(doc)
    grid = doc.pop("grid", {})
    if not grid:
        return [ExperimentConfig.from_dict(doc)]
    keys = sorted(grid)
    configs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        cell = json.loads(json.dumps(doc))
        label = []
        for key, value in zip(keys, values):
            *parents, leaf = key.split(".")
            node = cell
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = value
            label.append(f"{key}={value}")
        cell["name"] = (doc.get("name", "") + " " + ",".join(label)).strip()
        configs.append(ExperimentConfig.from_dict(cell))
    return configs


def entry_proportions(record: RunRecord, groups: dict) -> dict:
    counts = np.asarray(record.counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("record has no queries")
    return {name: float(counts[list(idx)].sum() / total) for name, idx in groups.items()}


def inspect(config: ExperimentConfig, seed: Optional[int] = None, burn_in: int = 5) -> dict:
    """Objective values for every entry after ``burn_in`` observations of each entry."""
    seed = config.seeds[0] if seed is None else int(seed)
    env = build_game(config.game)
    params = config.hyperparameters()
    belief = prior(config.kernel_spec(), env.num_entries, config.sigma_a2)
    obs_rng = _rng(seed, _OBSERVE)
    for entry in range(env.num_entries):
        belief = condition_many(belief, entry, observe_many(env, entry, burn_in, obs_rng))
    state = SamplerState(env.num_strategies, params, belief)
    return {
        "alpha_ig": alpha_ig_scores(state, _rng(seed, _SELECT, 0)),
        "alpha_wass": alpha_wass_scores(state, _rng(seed, _SELECT, 1)),
        "posterior_variance": belief.variances.copy(),
    }
