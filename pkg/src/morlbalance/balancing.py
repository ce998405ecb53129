"""Reward balancing with a multi-objective policy.

1. train one MO policy per seed with randomly sampled weights;
2. evaluate it greedily on a grid of weight configurations (success-weight and
   length-weight curves);
3. pick the balance just past the edge of the success plateau and rescale it
   so the turn penalty is -1.

Single-objective baselines trained per balance serve as the reference the MO
curves are compared against.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .agent import evaluate, train
from .env.dialogue import DialogueEnv, DialogueEpisode
from .gp import GpConfig, GpPosterior, ProtocolError
from .io import EVAL, SO_TRAIN, TRAIN, atomic_write_text, format_csv, read_csv
from .rewards import RewardSpec, WeightVector

log = logging.getLogger(__name__)

DEFAULT_GRID = tuple(WeightVector.from_success(k / 10) for k in range(1, 10))
DEFAULT_PLATEAU_TOLERANCE = 0.02
SO_ANCHOR = WeightVector(1.0, 0.0)
SWEEP_COLUMNS = ("domain", "seed", "w_s", "tsr", "avg_turns", "n_dialogues")

# Selected success weight and the success reward reported for it, per benchmark domain.
REFERENCE_BALANCES = {
    "CamRestaurants": (0.4, 14),
    "CamHotels": (0.6, 30),
    "SFRestaurants": (0.6, 47),
    "SFHotels": (0.7, 30),
    "TV": (0.6, 30),
    "Laptops": (0.7, 47),
}


class ScalingDomainError(ArithmeticError):
    """Rescaling needs a strictly positive length weight."""


@dataclass(frozen=True)
class Replicate:
    seed: int
    successes: int
    total_turns: int
    n_dialogues: int

    @property
    def tsr(self) -> float:
        return self.successes / self.n_dialogues

    @property
    def avg_turns(self) -> float:
        return self.total_turns / self.n_dialogues


@dataclass
class CurvePoint:
    w_s: float
    replicates: list[Replicate] = field(default_factory=list)

    @property
    def n_dialogues(self) -> int:
        return sum(r.n_dialogues for r in self.replicates)

    @property
    def successes(self) -> int:
        return sum(r.successes for r in self.replicates)

    @property
    def tsr(self) -> float:
        return self.successes / self.n_dialogues

    @property
    def avg_turns(self) -> float:
        return sum(r.total_turns for r in self.replicates) / self.n_dialogues

    @property
    def weights(self) -> WeightVector:
        return WeightVector.from_success(self.w_s)


@dataclass
class SweepResult:
    domain: str
    grid: list[CurvePoint]
    seeds: list[int]
    training_dialogues: int     # per seed
    kind: str = "mo"

    def __post_init__(self):
        self.grid = sorted(self.grid, key=lambda p: p.w_s)

    @property
    def w_s(self) -> list[float]:
        return [p.w_s for p in self.grid]

    @property
    def tsr(self) -> np.ndarray:
        return np.array([p.tsr for p in self.grid])

    @property
    def avg_turns(self) -> np.ndarray:
        return np.array([p.avg_turns for p in self.grid])

    def point(self, w_s: float) -> CurvePoint:
        for p in self.grid:
            if math.isclose(p.w_s, w_s, abs_tol=1e-9):
                return p
        raise KeyError(w_s)

    def rows(self) -> list[tuple]:
        return [(self.domain, r.seed, p.w_s, r.tsr, r.avg_turns, r.n_dialogues)
                for p in self.grid for r in p.replicates]

    def aggregate_rows(self) -> list[tuple]:
        return [(self.domain, "all", p.w_s, p.tsr, p.avg_turns, p.n_dialogues) for p in self.grid]


def _replicate(seed: int, episodes: Sequence[DialogueEpisode]) -> Replicate:
    return Replicate(seed, sum(e.success for e in episodes),
                     sum(e.turn_count for e in episodes), len(episodes))


def sweep_evaluate(snapshots: Sequence[GpPosterior], env: DialogueEnv,
                   grid: Sequence[WeightVector] = DEFAULT_GRID, n_eval: int = 300,
                   spec: RewardSpec = RewardSpec(), master_seed: int = 0,
                   seeds: Sequence[int] | None = None, training_dialogues: int = 0,
                   kind: str = "mo") -> SweepResult:
    """Greedy evaluation of every (seed snapshot, weight) cell.

    Every cell of one seed replays the same evaluation streams, so differences
    along the grid come from the policy and not from resampled users.
    """
    if not snapshots:
        raise ProtocolError("need at least one snapshot")
    if not grid:
        raise ProtocolError("empty weight grid")
    seeds = list(range(len(snapshots))) if seeds is None else list(seeds)
    points = []
    for w in grid:
        reps = [_replicate(s, evaluate(env, gp, w, spec, n_eval, master_seed, (EVAL, s)))
                for s, gp in zip(seeds, snapshots)]
        points.append(CurvePoint(w.w_s, reps))
    return SweepResult(env.ontology.name, points, seeds, training_dialogues, kind)


def train_mo(env: DialogueEnv, n_train: int, seeds: Sequence[int], spec: RewardSpec = RewardSpec(),
             gp_config: GpConfig = GpConfig(), master_seed: int = 0):
    """One MO policy per seed; returns (snapshots, training logs)."""
    gps, logs = [], []
    for s in seeds:
        gp = gp_config.build(env.belief_dim)
        logs.append(train(env, gp, n_train, "random", spec, master_seed, stream_key=(TRAIN, s)))
        gps.append(gp)
    return gps, logs


def select_weight(result: SweepResult, plateau_tolerance: float = DEFAULT_PLATEAU_TOLERANCE,
                  override: WeightVector | None = None) -> WeightVector:
    """Grid point one step past the left edge of the success plateau.

    The edge is the smallest ``w_s`` whose TSR is within ``plateau_tolerance``
    of the best TSR on the grid; the result is clamped to the last grid point.
    A manual ``override`` is returned unchanged.
    """
    if override is not None:
        return override
    if len(result.grid) < 3:
        raise ProtocolError("weight selection needs at least 3 grid points")
    tsr = result.tsr
    threshold = tsr.max() - plateau_tolerance - 1e-12
    edge = int(np.flatnonzero(tsr >= threshold)[0])
    chosen = min(edge + 1, len(result.grid) - 1)
    return result.grid[chosen].weights


def round_half_away(x: float) -> int:
    # 1e-9 absorbs representation error of values that are halves in exact arithmetic
    return int(math.copysign(math.floor(abs(x) + 0.5 + 1e-9), x))


def scale_weights(w: WeightVector, spec: RewardSpec) -> RewardSpec:
    """Rescale ``(w_s * r_s, w_l * r_l)`` so that the turn penalty becomes -1."""
    if w.w_l <= 0:
        raise ScalingDomainError("cannot rescale a balance with w_l = 0")
    raw = w.w_s * spec.success_reward / (w.w_l * abs(spec.length_penalty))
    success = round_half_away(raw)
    if abs(raw - success) > 1e-9:
        log.info("success reward %.4f rounded to %d (w_s=%g)", raw, success, w.w_s)
    if success <= 0:
        raise ScalingDomainError(f"rescaled success reward {raw:.4f} rounds to {success}")
    return RewardSpec(float(success), -1.0, spec.discount)


def audit_reference_balances(spec: RewardSpec = RewardSpec()) -> list[dict]:
    """Recompute the rescaled success reward of each reference balance and
    log every domain whose reported value disagrees with the rescaling rule."""
    report = []
    for domain, (w_s, reported) in REFERENCE_BALANCES.items():
        w = WeightVector.from_success(w_s)
        raw = w.w_s * spec.success_reward / (w.w_l * abs(spec.length_penalty))
        computed = int(scale_weights(w, spec).success_reward)
        entry = {"domain": domain, "w_s": w_s, "raw": raw, "computed": computed,
                 "reported": reported, "consistent": computed == reported}
        if not entry["consistent"]:
            log.warning("%s: w_s=%.1f rescales to %.2f (-> %d) but the reported success "
                        "reward is %d", domain, w_s, raw, computed, reported)
        report.append(entry)
    return report


@dataclass
class LearningPoint:
    dialogues: int
    replicates: list[Replicate]

    @property
    def tsr(self) -> float:
        return sum(r.successes for r in self.replicates) / sum(r.n_dialogues for r in self.replicates)

    @property
    def avg_turns(self) -> float:
        return (sum(r.total_turns for r in self.replicates)
                / sum(r.n_dialogues for r in self.replicates))


@dataclass
class SoBaseline:
    spec: RewardSpec
    snapshots: list[GpPosterior]
    curve: list[LearningPoint]
    logs: list[list]
    final_episodes: list[list[DialogueEpisode]]


def train_so_baseline(env: DialogueEnv, spec: RewardSpec, n_train: int, seeds: Sequence[int],
                      master_seed: int = 0, n_batches: int = 1, n_eval: int = 300,
                      gp_config: GpConfig = GpConfig(), anchor: WeightVector = SO_ANCHOR,
                      tag: int = 0) -> SoBaseline:
    """Single-objective policies for an already scalarized ``spec``.

    Training is split into ``n_batches`` equal batches and every policy is
    evaluated greedily with ``n_eval`` dialogues after each batch.
    """
    if n_train < 1 or n_batches < 1:
        raise ValueError("n_train and n_batches must be >= 1")
    sizes = [n_train // n_batches + (1 if b < n_train % n_batches else 0) for b in range(n_batches)]
    gps, logs, final = [], [], []
    per_batch: list[list[Replicate]] = [[] for _ in sizes]
    for s in seeds:
        gp = gp_config.build(env.belief_dim)
        seed_log = []
        done = 0
        for b, size in enumerate(sizes):
            seed_log += train(env, gp, size, anchor, spec, master_seed, prescalarized=True,
                              start_episode=done, stream_key=(SO_TRAIN, tag, s))
            done += size
            eps = evaluate(env, gp, anchor, spec, n_eval, master_seed, (EVAL, s))
            per_batch[b].append(_replicate(s, eps))
        final.append(eps)
        gps.append(gp)
        logs.append(seed_log)
    cumulative = np.cumsum(sizes)
    curve = [LearningPoint(int(c), reps) for c, reps in zip(cumulative, per_batch)]
    return SoBaseline(spec, gps, curve, logs, final)


def so_sweep(env: DialogueEnv, spec: RewardSpec, grid: Sequence[WeightVector] = DEFAULT_GRID,
             n_train: int = 1000, seeds: Sequence[int] = range(5), n_eval: int = 300,
             master_seed: int = 0, gp_config: GpConfig = GpConfig()) -> SweepResult:
    """Success-weight curve from separate SO policies, one per grid balance."""
    points = []
    for w in grid:
        base = train_so_baseline(env, spec.prescaled(w), n_train, seeds, master_seed,
                                 n_eval=n_eval, gp_config=gp_config)
        points.append(CurvePoint(w.w_s, base.curve[-1].replicates))
    return SweepResult(env.ontology.name, points, list(seeds), n_train * len(grid), "so")


@dataclass
class Comparison:
    w_s: list[float]
    tsr_delta: list[float]        # so - mo
    turns_delta: list[float]
    mean_abs_tsr_diff: float
    mo_dialogues: int
    so_dialogues: int

    def to_dict(self) -> dict:
        return {
            "points": [{"w_s": w, "tsr_delta": t, "turns_delta": d}
                       for w, t, d in zip(self.w_s, self.tsr_delta, self.turns_delta)],
            "mean_abs_tsr_diff": self.mean_abs_tsr_diff,
            "ledger": {"mo_training_dialogues_per_seed": self.mo_dialogues,
                       "so_training_dialogues_per_seed": self.so_dialogues},
        }

    def ledger_line(self) -> str:
        return (f"training dialogues per seed: {self.mo_dialogues:,} (MO) "
                f"vs {self.so_dialogues:,} (SO grid)")


def compare_mo_so(mo: SweepResult, so: SweepResult) -> Comparison:
    if len(mo.grid) != len(so.grid) or not all(
            math.isclose(a, b, abs_tol=1e-9) for a, b in zip(mo.w_s, so.w_s)):
        raise ProtocolError(f"grid mismatch: {mo.w_s} vs {so.w_s}")
    tsr_delta = (so.tsr - mo.tsr).tolist()
    turns_delta = (so.avg_turns - mo.avg_turns).tolist()
    return Comparison(mo.w_s, tsr_delta, turns_delta, float(np.mean(np.abs(tsr_delta))),
                      mo.training_dialogues, so.training_dialogues)


@dataclass
class BalanceResult:
    """Final performance of one reward setting (one row side of a results table)."""
    spec: RewardSpec
    tsr: float
    avg_turns: float
    successes: np.ndarray     # per evaluation dialogue, pooled over seeds
    turns: np.ndarray


def summarize(base: SoBaseline) -> BalanceResult:
    eps = [e for seed_eps in base.final_episodes for e in seed_eps]
    succ = np.array([float(e.success) for e in eps])
    turns = np.array([float(e.turn_count) for e in eps])
    return BalanceResult(base.spec, float(succ.mean()), float(turns.mean()), succ, turns)


def results_row(domain: str, base: BalanceResult, opt: BalanceResult) -> dict:
    """Baseline-vs-optimised TSR and turns, with a two-sample t-test on success."""
    if np.array_equal(base.successes, opt.successes):
        p_value = 1.0
    else:
        p_value = float(stats.ttest_ind(base.successes, opt.successes, equal_var=False).pvalue)
        if not math.isfinite(p_value):
            p_value = 1.0
    return {
        "domain": domain,
        "success_reward_opt": opt.spec.success_reward,
        "tsr_base": base.tsr, "tsr_opt": opt.tsr,
        "turns_base": base.avg_turns, "turns_opt": opt.avg_turns,
        "tsr_delta": opt.tsr - base.tsr, "turns_delta": opt.avg_turns - base.avg_turns,
        "p_value": p_value,
    }


# -- files -------------------------------------------------------------------

def write_sweep(result: SweepResult, sweep_path: str | Path, curve_path: str | Path | None = None,
                provenance: dict | None = None) -> None:
    prov = dict(provenance or {})
    prov.update(kind=result.kind, training_dialogues=result.training_dialogues)
    atomic_write_text(sweep_path, format_csv(SWEEP_COLUMNS, result.rows(), prov))
    if curve_path is not None:
        atomic_write_text(curve_path, format_csv(SWEEP_COLUMNS, result.aggregate_rows(), prov))


def read_sweep(path: str | Path) -> SweepResult:
    """Rebuild a SweepResult from a per-seed sweep CSV."""
    provenance, rows = read_csv(path)
    if not rows:
        raise ValueError(f"{path}: no sweep rows")
    missing = set(SWEEP_COLUMNS) - set(rows[0])
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    by_w: dict[float, list[Replicate]] = {}
    seeds = []
    for row in rows:
        if row["seed"] == "all":
            raise ValueError(f"{path}: aggregate curve file given where per-seed sweep expected")
        seed, w_s, n = int(row["seed"]), float(row["w_s"]), int(row["n_dialogues"])
        successes = round(float(row["tsr"]) * n)
        turns = round(float(row["avg_turns"]) * n)
        by_w.setdefault(w_s, []).append(Replicate(seed, successes, turns, n))
        if seed not in seeds:
            seeds.append(seed)
    provenance = provenance or {}
    points = [CurvePoint(w, reps) for w, reps in by_w.items()]
    return SweepResult(rows[0]["domain"], points, seeds,
                       int(provenance.get("training_dialogues", 0)), provenance.get("kind", "mo"))


def plot_curves(results: Sequence[SweepResult], path: str | Path, title: str = "") -> None:
    """Success-weight (TSR, left axis) and length-weight (turns, right axis) chart as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax2 = ax.twinx()
    for res, style in zip(results, ("-", "--", ":")):
        ax.plot(res.w_s, res.tsr, "o" + style, color="tab:blue", label=f"TSR ({res.kind})")
        ax2.plot(res.w_s, res.avg_turns, "s" + style, color="tab:red", label=f"turns ({res.kind})")
    ax.set_xlabel("success weight $w_s$")
    ax.set_ylabel("task success rate")
    ax2.set_ylabel("turns")
    ax.set_ylim(0, 1)
    ax.set_title(title or results[0].domain)
    handles = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
    ax.legend(handles=handles, loc="lower right", fontsize="small")
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
