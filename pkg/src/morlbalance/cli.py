"""Command-line entry point for the reward-balancing pipeline.

    morlbalance train-mo  -> <out>/<domain>/snapshots/mo_seed<k>.json
    morlbalance sweep     -> <out>/<domain>/sweeps/mo_sweep.csv, mo_curve.csv
    morlbalance select    -> <out>/<domain>/reports/selection.json
    morlbalance train-so  -> <out>/<domain>/reports/learning_*.csv, final_*.csv
                             (+ sweeps/so_sweep.csv with --grid-sweep)
    morlbalance compare   -> <out>/<domain>/reports/comparison.txt, table.csv

A JSON config file supplies defaults and command-line flags override it.
Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import balancing
from .agent import GREEDY, EXPLORE, MorlAgent, write_training_log
from .env import (DOMAIN_STATS, DialogueEnv, OntologyError, benchmark_ontology, generate_ontology,
                  load_ontology, run_dialogue)
from .gp import GpConfig, GpPosterior, SnapshotError
from .io import SIMULATE, atomic_write_bytes, atomic_write_text, format_csv, read_csv, stream
from .rewards import RewardSpec, WeightVector

log = logging.getLogger("morlbalance")

TOY_DOMAIN = "toy"
TOY_STATS = (3, 4, 50)      # constraints, requests, entities of the desk-scale domain
BASELINE_WEIGHTS = WeightVector(0.5, 0.5)
FINAL_COLUMNS = ("seed", "dialogue", "success", "turns")
LEARNING_COLUMNS = ("dialogues", "tsr", "avg_turns", "n_eval")


class ConfigError(ValueError):
    """Invalid run configuration (exit code 1)."""


@dataclass
class RunConfig:
    ontology: str = TOY_DOMAIN      # benchmark name, "toy", or path to an ontology JSON file
    values_per_slot: int = 5
    ontology_seed: int = 0
    master_seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    n_train_mo: int = 3000
    n_train_so: int = 1000          # per grid point of the SO sweep
    n_train_final: int = 4000       # SO baselines at the base and optimised specs
    so_batches: int = 10
    n_eval: int = 300
    grid: list[float] = field(default_factory=lambda: [k / 10 for k in range(1, 10)])
    ser: float = 0.15
    max_turns: int = 25
    patience: int = 0
    success_reward: float = 40.0
    length_penalty: float = -2.0
    discount: float = 1.0
    noise_stddev: float = 5.0
    sparsify_threshold: float = 0.01
    dictionary_cap: int = 1000
    kernel_scale: float = 10.0
    plateau_tolerance: float = balancing.DEFAULT_PLATEAU_TOLERANCE
    override_w_s: float | None = None
    out: str = "runs"

    def validate(self) -> None:
        for name in ("n_train_mo", "n_train_so", "n_train_final", "so_batches", "n_eval",
                     "max_turns", "dictionary_cap", "values_per_slot"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.patience < 0:
            raise ConfigError("patience must be >= 0")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"duplicate seeds in {self.seeds}")
        if not 0.0 <= self.ser <= 1.0:
            raise ConfigError(f"ser must lie in [0, 1], got {self.ser}")
        if not self.grid:
            raise ConfigError("grid must not be empty")
        for w_s in self.grid + ([self.override_w_s] if self.override_w_s is not None else []):
            if not 0.0 <= w_s <= 1.0:
                raise ConfigError(f"grid weight {w_s} is not on the simplex")
        if self.success_reward <= 0 or self.length_penalty >= 0:
            raise ConfigError("success_reward must be > 0 and length_penalty < 0")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("discount must lie in (0, 1]")
        if self.noise_stddev < 0 or self.sparsify_threshold < 0 or self.kernel_scale <= 0:
            raise ConfigError("GP hyperparameters out of range")

    # -- derived objects -----------------------------------------------------

    @property
    def spec(self) -> RewardSpec:
        return RewardSpec(self.success_reward, self.length_penalty, self.discount)

    @property
    def gp_config(self) -> GpConfig:
        return GpConfig(self.noise_stddev, self.sparsify_threshold, self.dictionary_cap, self.kernel_scale)

    @property
    def weight_grid(self) -> list[WeightVector]:
        return [WeightVector.from_success(w) for w in sorted(self.grid)]

    def load_domain(self):
        if self.ontology == TOY_DOMAIN:
            return generate_ontology(TOY_DOMAIN, *TOY_STATS, values_per_slot=self.values_per_slot,
                                     seed=self.ontology_seed)
        if self.ontology in DOMAIN_STATS:
            return benchmark_ontology(self.ontology, self.values_per_slot, self.ontology_seed)
        return load_ontology(self.ontology)

    def make_env(self):
        return DialogueEnv(self.load_domain(), self.ser, self.max_turns, self.patience)

    def provenance(self, command: str, **extra) -> dict:
        """Resolved config echoed into outputs (the output directory is left out
        so that reruns elsewhere stay byte-identical)."""
        d = dataclasses.asdict(self)
        d.pop("out")
        d["command"] = command
        d.update(extra)
        return d


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    return cfg


class Layout:
    def __init__(self, cfg: RunConfig, domain: str):
        root = Path(cfg.out) / domain
        self.snapshots = root / "snapshots"
        self.sweeps = root / "sweeps"
        self.reports = root / "reports"

    def snapshot(self, seed: int) -> Path:
        return self.snapshots / f"mo_seed{seed}.json"


# -- commands ------------------------------------------------------------------

def cmd_train_mo(cfg: RunConfig, args) -> int:
    env = cfg.make_env()
    out = Layout(cfg, env.ontology.name)
    for seed in cfg.seeds:
        gps, logs = balancing.train_mo(env, cfg.n_train_mo, [seed], cfg.spec, cfg.gp_config,
                                       cfg.master_seed)
        prov = cfg.provenance("train-mo", seed=seed)
        atomic_write_bytes(out.snapshot(seed), gps[0].snapshot(metadata=prov))
        write_training_log(out.reports / f"train_mo_seed{seed}.csv", logs[0], prov)
        log.info("seed %d: %d dialogues, dictionary size %d", seed, cfg.n_train_mo, gps[0].dictionary_size)
    print(f"wrote {len(cfg.seeds)} snapshot(s) to {out.snapshots}")
    return 0


def _load_snapshots(cfg: RunConfig, out: Layout, env: DialogueEnv) -> list[GpPosterior]:
    gps = []
    for seed in cfg.seeds:
        path = out.snapshot(seed)
        if not path.exists():
            raise FileNotFoundError(f"missing snapshot {path} (run train-mo first)")
        try:
            gp = GpPosterior.restore(path.read_bytes())
        except SnapshotError as exc:
            raise SnapshotError(f"{path}: {exc}") from exc
        if gp.belief_dim is not None and gp.belief_dim != env.belief_dim:
            raise SnapshotError(f"{path}: belief dimension {gp.belief_dim} does not match "
                                f"ontology {env.ontology.name!r} ({env.belief_dim})")
        gps.append(gp)
    return gps


def cmd_sweep(cfg: RunConfig, args) -> int:
    env = cfg.make_env()
    out = Layout(cfg, env.ontology.name)
    gps = _load_snapshots(cfg, out, env)
    result = balancing.sweep_evaluate(gps, env, cfg.weight_grid, cfg.n_eval, cfg.spec, cfg.master_seed,
                                      cfg.seeds, cfg.n_train_mo, "mo")
    balancing.write_sweep(result, out.sweeps / "mo_sweep.csv", out.sweeps / "mo_curve.csv",
                          cfg.provenance("sweep"))
    if args.plot:
        balancing.plot_curves([result], out.sweeps / "mo_curve.svg")
    for p in result.grid:
        print(f"w_s={p.w_s:.2f}  TSR={p.tsr:.3f}  turns={p.avg_turns:.2f}  n={p.n_dialogues}")
    return 0


def cmd_select(cfg: RunConfig, args) -> int:
    domain = cfg.load_domain().name if args.sweep is None else None
    out = Layout(cfg, domain) if domain else None
    sweep_path = Path(args.sweep) if args.sweep else out.sweeps / "mo_sweep.csv"
    try:
        result = balancing.read_sweep(sweep_path)
    except FileNotFoundError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"malformed sweep file {sweep_path}: {exc}") from None
    if out is None:
        out = Layout(cfg, result.domain)
    override = WeightVector.from_success(cfg.override_w_s) if cfg.override_w_s is not None else None
    w = balancing.select_weight(result, cfg.plateau_tolerance, override)
    scaled = balancing.scale_weights(w, cfg.spec)
    raw = w.w_s * cfg.spec.success_reward / (w.w_l * abs(cfg.spec.length_penalty))
    doc = {
        "config": cfg.provenance("select"),
        "sweep": str(sweep_path.name),
        "override": override is not None,
        "w_s": w.w_s, "w_l": w.w_l,
        "raw_success_reward": raw,
        "success_reward": scaled.success_reward,
        "length_penalty": scaled.length_penalty,
    }
    atomic_write_text(out.reports / "selection.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(f"selected w = ({w.w_s:g}, {w.w_l:g}) -> r_s = {scaled.success_reward:g}, "
          f"r_l = {scaled.length_penalty:g}")
    return 0


def _write_baseline(out: Layout, tag: str, base: balancing.SoBaseline, prov: dict) -> None:
    curve = [(p.dialogues, p.tsr, p.avg_turns, sum(r.n_dialogues for r in p.replicates))
             for p in base.curve]
    atomic_write_text(out.reports / f"learning_{tag}.csv", format_csv(LEARNING_COLUMNS, curve, prov))
    rows = [(seed, i, e.success, e.turn_count)
            for seed, eps in zip(prov["seeds"], base.final_episodes) for i, e in enumerate(eps)]
    atomic_write_text(out.reports / f"final_{tag}.csv", format_csv(FINAL_COLUMNS, rows, prov))


def cmd_train_so(cfg: RunConfig, args) -> int:
    env = cfg.make_env()
    out = Layout(cfg, env.ontology.name)
    selection = out.reports / "selection.json"
    if not selection.exists():
        raise FileNotFoundError(f"missing {selection} (run select first)")
    sel = json.loads(selection.read_text())
    specs = {
        "base": balancing.scale_weights(BASELINE_WEIGHTS, cfg.spec),
        "opt": RewardSpec(sel["success_reward"], sel["length_penalty"], cfg.discount),
    }
    for tag_id, (tag, spec) in enumerate(specs.items()):
        base = balancing.train_so_baseline(env, spec, cfg.n_train_final, cfg.seeds, cfg.master_seed,
                                           cfg.so_batches, cfg.n_eval, cfg.gp_config, tag=100 + tag_id)
        prov = cfg.provenance("train-so", baseline=tag, scaled_success_reward=spec.success_reward,
                              scaled_length_penalty=spec.length_penalty)
        _write_baseline(out, tag, base, prov)
        last = base.curve[-1]
        print(f"{tag}: r_s={spec.success_reward:g}  TSR={last.tsr:.3f}  turns={last.avg_turns:.2f}")
    if args.grid_sweep:
        so = balancing.so_sweep(env, cfg.spec, cfg.weight_grid, cfg.n_train_so, cfg.seeds, cfg.n_eval,
                                cfg.master_seed, cfg.gp_config)
        balancing.write_sweep(so, out.sweeps / "so_sweep.csv", out.sweeps / "so_curve.csv",
                              cfg.provenance("train-so"))
        print(f"SO grid sweep: {len(so.grid)} balances x {cfg.n_train_so} dialogues per seed")
    return 0


def _read_final(path: Path) -> balancing.BalanceResult:
    prov, rows = read_csv(path)
    if not rows:
        raise ValueError(f"{path}: no rows")
    succ = np.array([float(r["success"]) for r in rows])
    turns = np.array([float(r["turns"]) for r in rows])
    spec = RewardSpec(prov["scaled_success_reward"], prov["scaled_length_penalty"], prov["discount"])
    return balancing.BalanceResult(spec, float(succ.mean()), float(turns.mean()), succ, turns)


def format_report(domain: str, row: dict, comparison: balancing.Comparison | None) -> str:
    lines = [
        f"domain: {domain}",
        "",
        "Task success rate (TSR) and number of turns, base w=(0.5,0.5) vs optimised balance",
        f"{'domain':<16}{'r_s':>6}{'TSR base':>10}{'TSR opt':>10}{'turns base':>12}{'turns opt':>11}{'p':>8}",
        (f"{domain:<16}{row['success_reward_opt']:>6g}{row['tsr_base']:>10.3f}{row['tsr_opt']:>10.3f}"
         f"{row['turns_base']:>12.2f}{row['turns_opt']:>11.2f}{row['p_value']:>8.3f}"),
        "",
    ]
    if comparison is not None:
        lines.append("MO vs SO success-weight curves (delta = SO - MO)")
        lines.append(f"{'w_s':>6}{'dTSR':>9}{'dturns':>9}")
        for w, t, d in zip(comparison.w_s, comparison.tsr_delta, comparison.turns_delta):
            lines.append(f"{w:>6.2f}{t:>+9.3f}{d:>+9.2f}")
        lines.append(f"mean absolute TSR difference: {comparison.mean_abs_tsr_diff:.4f}")
        lines.append(comparison.ledger_line())
    return "\n".join(lines) + "\n"


def cmd_compare(cfg: RunConfig, args) -> int:
    domain = cfg.load_domain().name
    out = Layout(cfg, domain)
    base = _read_final(out.reports / "final_base.csv")
    opt = _read_final(out.reports / "final_opt.csv")
    row = balancing.results_row(domain, base, opt)
    comparison = None
    mo_path, so_path = out.sweeps / "mo_sweep.csv", out.sweeps / "so_sweep.csv"
    if mo_path.exists() and so_path.exists():
        comparison = balancing.compare_mo_so(balancing.read_sweep(mo_path), balancing.read_sweep(so_path))
    prov = cfg.provenance("compare")
    report = "# config: " + json.dumps(prov, sort_keys=True) + "\n" + format_report(domain, row, comparison)
    atomic_write_text(out.reports / "comparison.txt", report)
    header = tuple(row)
    atomic_write_text(out.reports / "table.csv", format_csv(header, [tuple(row.values())], prov))
    if comparison is not None:
        atomic_write_text(out.reports / "comparison.json",
                          json.dumps({"config": prov, **comparison.to_dict()}, indent=2, sort_keys=True) + "\n")
    print(report, end="")
    return 0


def cmd_gen_ontology(cfg: RunConfig, args) -> int:
    if args.stats:
        o = generate_ontology(args.name or "custom", *args.stats, values_per_slot=cfg.values_per_slot,
                              seed=cfg.ontology_seed)
    else:
        o = cfg.load_domain()
    path = Path(args.output) if args.output else Path(cfg.out) / f"{o.name}.ontology.json"
    o.save(path)
    print(f"wrote {path} ({o.stats()[0]} constraints, {o.stats()[1]} requests, {o.stats()[2]} entities)")
    return 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    env = cfg.make_env()
    if args.snapshot:
        gp = GpPosterior.restore(Path(args.snapshot).read_bytes())
    else:
        gp = cfg.gp_config.build(env.belief_dim)
    w_s = args.w_s if args.w_s is not None else 0.5
    rng = stream(cfg.master_seed, SIMULATE, args.dialogue)
    episode = run_dialogue(MorlAgent(gp), env, WeightVector.from_success(w_s), cfg.spec,
                           EXPLORE if args.explore else GREEDY, rng)
    names = env.actions.names
    transcript = episode.to_transcript()
    for turn in transcript["turns"]:
        turn["action_name"] = names[turn["action"]]
    print(json.dumps(transcript, indent=1))
    return 0


COMMANDS = {
    "train-mo": (cmd_train_mo, "train one MO policy per seed with random weights"),
    "sweep": (cmd_sweep, "evaluate MO snapshots on the weight grid"),
    "select": (cmd_select, "pick a balance from a sweep and rescale it"),
    "train-so": (cmd_train_so, "train SO baselines at the base and selected balance"),
    "compare": (cmd_compare, "write the base-vs-optimised and MO-vs-SO report"),
    "gen-ontology": (cmd_gen_ontology, "write a synthetic ontology JSON file"),
    "simulate": (cmd_simulate, "run and print a single dialogue"),
}

# flag name -> (type, help); list-valued flags take comma-separated values
FLAGS = {
    "ontology": (str, "benchmark name, 'toy', or ontology JSON path"),
    "values_per_slot": (int, "values per slot of generated ontologies"),
    "ontology_seed": (int, "seed of generated ontologies"),
    "master_seed": (int, "master random seed"),
    "seeds": ("ints", "comma-separated policy seeds"),
    "n_train_mo": (int, "MO training dialogues per seed"),
    "n_train_so": (int, "SO training dialogues per grid balance"),
    "n_train_final": (int, "SO training dialogues for the base/optimised baselines"),
    "so_batches": (int, "learning-curve batches"),
    "n_eval": (int, "evaluation dialogues per cell"),
    "grid": ("floats", "comma-separated success weights"),
    "ser": (float, "semantic error rate"),
    "max_turns": (int, "dialogue turn cap"),
    "patience": (int, "rejected offers the simulated user tolerates"),
    "success_reward": (float, "success reward r_s"),
    "length_penalty": (float, "per-turn penalty r_l"),
    "discount": (float, "discount factor"),
    "noise_stddev": (float, "GP observation noise"),
    "sparsify_threshold": (float, "dictionary admission threshold"),
    "dictionary_cap": (int, "maximum dictionary size"),
    "kernel_scale": (float, "prior kernel amplitude"),
    "plateau_tolerance": (float, "TSR tolerance defining the plateau"),
    "override_w_s": (float, "manual success weight for select"),
    "out": (str, "output root directory"),
}


def _list_of(kind):
    def parse(text: str):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated {kind.__name__}s, got {text!r}")
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="morlbalance", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file supplying defaults")
        p.add_argument("-v", "--verbose", action="store_true")
        for flag, (kind, flag_help) in FLAGS.items():
            kind = {"ints": _list_of(int), "floats": _list_of(float)}.get(kind, kind)
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind, default=None, help=flag_help)
        if name == "sweep":
            p.add_argument("--plot", action="store_true", help="also write an SVG chart (needs matplotlib)")
        elif name == "select":
            p.add_argument("--sweep", help="sweep CSV (default: <out>/<domain>/sweeps/mo_sweep.csv)")
        elif name == "train-so":
            p.add_argument("--grid-sweep", dest="grid_sweep", action="store_true",
                           help="also train one SO policy per grid balance")
        elif name == "gen-ontology":
            p.add_argument("--stats", type=int, nargs=3, metavar=("CONSTRAINTS", "REQUESTS", "ENTITIES"))
            p.add_argument("--name")
            p.add_argument("-o", "--output")
        elif name == "simulate":
            p.add_argument("--snapshot")
            p.add_argument("--w-s", dest="w_s", type=float)
            p.add_argument("--dialogue", type=int, default=0, help="dialogue index within the stream")
            p.add_argument("--explore", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {k: getattr(args, k) for k in FLAGS})
        cfg.load_domain()
    except FileNotFoundError as exc:
        print(f"error: ontology file not found: {exc.filename or exc}", file=sys.stderr)
        return 1
    except (ConfigError, OntologyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    handler = COMMANDS[args.command][0]
    try:
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # runtime failure; keep the traceback under --verbose
        log.debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
