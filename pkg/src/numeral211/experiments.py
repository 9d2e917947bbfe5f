"""Config-driven experiment harness.

An experiment file (INI) names a set of abstraction arms, a scenario
(symmetric self-play or asymmetric one-sided solves), solver budgets and
seeds; the harness builds the maps (cached on disk by content), runs the
solves, evaluates exploitability at the configured checkpoints, and
writes one CSV of curve rows plus a metadata JSON.

Per-phase abstraction specs use a compact string form:

    li | pawi | paoi | krwi:k=K | kroi:k=K
    ehs:buckets=B[:seed=S]
    krwemd:recall=K:weights=W0,W1,..:buckets=B[:seed=S]
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .abstraction import (
    AbstractionMap,
    build_ehs,
    build_krwemd,
    merge_maps,
    passthrough_map,
)
from .cfr import Solver, single_player_strategy
from .evaluator import exploitability, solver_exploitability
from .features import FeatureSet, get_features

CURVE_FIELDS = ["arm", "scenario", "solver_seed", "iteration", "epsilon_mbg",
                "br_value_vs_p1", "br_value_vs_p2"]


def data_dir() -> Path:
    d = Path(os.environ.get("N211_DATA_DIR", "n211_data"))
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# Abstraction-arm specs.


def parse_phase_spec(text: str) -> tuple[str, dict]:
    parts = [p.strip() for p in text.strip().split(":") if p.strip()]
    kind = parts[0].lower()
    params: dict = {}
    for p in parts[1:]:
        if "=" not in p:
            raise ValueError(f"bad phase spec parameter {p!r} in {text!r}")
        k, v = p.split("=", 1)
        params[k.strip()] = v.strip()
    return kind, params


def build_phase_map(
    phase: int, spec: str, features: FeatureSet, default_seed: int
) -> AbstractionMap:
    kind, params = parse_phase_spec(spec)
    if kind in ("li", "pawi", "paoi"):
        return passthrough_map(kind, phase, features)
    if kind in ("krwi", "kroi"):
        return passthrough_map(kind, phase, features, k=int(params["k"]))
    if kind == "ehs":
        return build_ehs(
            phase, int(params["buckets"]), int(params.get("seed", default_seed)), features
        )
    if kind == "krwemd":
        weights = [float(w) for w in params["weights"].split(",")]
        return build_krwemd(
            phase,
            int(params["recall"]),
            weights,
            int(params["buckets"]),
            int(params.get("seed", default_seed)),
            features,
        )
    raise ValueError(f"unknown abstraction kind {kind!r}")


@dataclass
class ArmSpec:
    name: str
    phases: dict[int, str]  # phase -> spec string

    def cache_name(self) -> str:
        flat = ";".join(f"{p}={self.phases[p]}" for p in sorted(self.phases))
        digest = hashlib.sha256(flat.encode()).hexdigest()[:10]
        return f"{self.name}__{digest}"


def build_arm_map(
    arm: ArmSpec, features: FeatureSet, default_seed: int, cache: bool = True
) -> AbstractionMap:
    """Build (or load from the data dir) the arm's full 3-phase map."""
    path = data_dir() / "maps" / f"{arm.cache_name()}-s{default_seed}.n211map"
    if cache and path.exists():
        return AbstractionMap.load(path)
    amap = merge_maps(
        [build_phase_map(p, arm.phases[p], features, default_seed) for p in (1, 2, 3)]
    )
    amap.meta["arm"] = arm.name
    if cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        amap.save(path)
    return amap


def li_full_map(features: FeatureSet) -> AbstractionMap:
    return merge_maps([passthrough_map("li", p, features) for p in (1, 2, 3)])


# ---------------------------------------------------------------------------
# Experiment configuration.


@dataclass
class ExperimentConfig:
    kind: str  # isomorphism | algorithms (informational)
    scenario: str  # symmetric | asymmetric | both
    iterations: int
    checkpoints: list[int]
    solver_seeds: list[int]
    batch_size: int
    cluster_seed: int
    output_dir: Path
    arms: list[ArmSpec]
    notes: dict = field(default_factory=dict)
    table_dtype: str = "float64"  # float32 halves solver-table traffic

    def validate(self) -> None:
        if self.scenario not in ("symmetric", "asymmetric", "both"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.iterations < 1 or not self.solver_seeds:
            raise ValueError("need iterations >= 1 and at least one solver seed")
        if any(c > self.iterations for c in self.checkpoints):
            raise ValueError("checkpoint beyond the iteration budget")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ValueError("duplicate arm names")

    @classmethod
    def from_ini(cls, path) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise FileNotFoundError(path)
        e = cp["experiment"]
        arms = []
        for sec in cp.sections():
            if sec.startswith("arm."):
                arms.append(
                    ArmSpec(
                        sec[4:],
                        {p: cp[sec][f"phase{p}"] for p in (1, 2, 3)},
                    )
                )
        cfg = cls(
            kind=e.get("kind", "custom"),
            scenario=e.get("scenario", "asymmetric"),
            iterations=int(float(e["iterations"])),
            checkpoints=[
                int(float(c)) for c in e.get("checkpoints", "").split(",") if c.strip()
            ],
            solver_seeds=[int(s) for s in e.get("solver_seeds", "1").split(",")],
            batch_size=int(e.get("batch_size", "8192")),
            cluster_seed=int(e.get("cluster_seed", "17")),
            output_dir=Path(e.get("output_dir", "runs/experiment")),
            arms=arms,
            notes={"omitted_arms": e.get("omitted_arms", "")},
            table_dtype=e.get("table_dtype", "float64"),
        )
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# Running.


def _snapshot_strategy(solver: Solver, player: int):
    strat = single_player_strategy(solver, player)
    return {ph: strat.probs[ph].copy() for ph in (1, 2, 3)}, strat.assign


def _curve_marks(config: ExperimentConfig) -> list[int]:
    marks = sorted(set(config.checkpoints) | {config.iterations})
    return [m for m in marks if m <= config.iterations]


def run_arm_asymmetric(
    amap: AbstractionMap,
    theta: AbstractionMap,
    config: ExperimentConfig,
    solver_seed: int,
):
    """Two one-sided solves, concatenated and evaluated per checkpoint."""
    from .cfr import InducedStrategy, solve

    marks = _curve_marks(config)
    snaps: dict[int, list] = {m: [None, None] for m in marks}

    for side, (m1, m2) in enumerate(((amap, theta), (theta, amap))):
        def grab(mark, solver, side=side):
            snaps[mark][side] = _snapshot_strategy(solver, side)

        solver = Solver(m1, m2, seed=solver_seed + 1000003 * side,
                        batch_size=config.batch_size,
                        table_dtype=np.dtype(config.table_dtype))
        prev = 0
        for mark in marks:
            solver.run(mark - prev)
            prev = mark
            grab(mark, solver)
        del solver

    rows = []
    for mark in marks:
        (p1_probs, p1_assign), (p2_probs, p2_assign) = snaps[mark]
        s1 = InducedStrategy(0, p1_assign, p1_probs)
        s2 = InducedStrategy(1, p2_assign, p2_probs)
        rep = exploitability(s1, s2)
        rows.append((mark, rep))
    return rows


def run_arm_symmetric(
    amap: AbstractionMap, config: ExperimentConfig, solver_seed: int
):
    solver = Solver(amap, amap, seed=solver_seed, batch_size=config.batch_size,
                    table_dtype=np.dtype(config.table_dtype))
    rows = []
    prev = 0
    for mark in _curve_marks(config):
        solver.run(mark - prev)
        prev = mark
        rep = solver_exploitability(solver)
        rows.append((mark, rep))
    del solver
    return rows


def run_experiment(config: ExperimentConfig, features: FeatureSet | None = None,
                   verbose: bool = True) -> list[dict]:
    """Run every (arm, scenario, seed) cell and write curves.csv + metadata."""
    features = features or get_features()
    config.validate()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    theta = li_full_map(features)
    scenarios = (
        ("symmetric", "asymmetric") if config.scenario == "both" else (config.scenario,)
    )
    rows: list[dict] = []
    map_hashes = {}
    for arm in config.arms:
        amap = build_arm_map(arm, features, config.cluster_seed)
        map_hashes[arm.name] = amap.content_hash()
        if verbose:
            counts = {p: amap.bucket_count(p) for p in (1, 2, 3)}
            print(f"[arm {arm.name}] buckets {counts}", flush=True)
        for scenario in scenarios:
            for seed in config.solver_seeds:
                if scenario == "asymmetric":
                    curve = run_arm_asymmetric(amap, theta, config, seed)
                else:
                    curve = run_arm_symmetric(amap, config, seed)
                for iteration, rep in curve:
                    rows.append(
                        {
                            "arm": arm.name,
                            "scenario": scenario,
                            "solver_seed": seed,
                            "iteration": iteration,
                            "epsilon_mbg": rep.epsilon_mbg,
                            "br_value_vs_p1": rep.br_value_vs_p1,
                            "br_value_vs_p2": rep.br_value_vs_p2,
                        }
                    )
                if verbose:
                    final = rows[-1]
                    print(
                        f"[arm {arm.name}] {scenario} seed {seed}: "
                        f"{final['epsilon_mbg']:.2f} mb/g at {final['iteration']:,} iters",
                        flush=True,
                    )
    write_curves(out_dir / "curves.csv", rows)
    meta = {
        "kind": config.kind,
        "scenario": config.scenario,
        "iterations": config.iterations,
        "checkpoints": config.checkpoints,
        "solver_seeds": config.solver_seeds,
        "batch_size": config.batch_size,
        "cluster_seed": config.cluster_seed,
        "table_dtype": config.table_dtype,
        "arms": {a.name: a.phases for a in config.arms},
        "map_hashes": map_hashes,
        "notes": config.notes,
    }
    with open(out_dir / "metadata.json", "w") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
    return rows


def run_isomorphism_experiment(config: ExperimentConfig, **kw) -> list[dict]:
    """Passthrough-partition arms vs matched-bucket clustering (shipped config:
    configs/isomorphism.ini)."""
    if config.kind != "isomorphism":
        raise ValueError(f"config kind is {config.kind!r}, expected 'isomorphism'")
    return run_experiment(config, **kw)


def run_algorithms_experiment(config: ExperimentConfig, **kw) -> list[dict]:
    """Equity clustering vs recall-weighted EMD clustering at a fixed bucket
    budget (shipped config: configs/algorithms.ini)."""
    if config.kind != "algorithms":
        raise ValueError(f"config kind is {config.kind!r}, expected 'algorithms'")
    return run_experiment(config, **kw)


def write_curves(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CURVE_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in CURVE_FIELDS})


def load_curves(path) -> list[dict]:
    """Re-load and schema-validate a curves CSV."""
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        if rd.fieldnames != CURVE_FIELDS:
            raise ValueError(f"{path}: unexpected schema {rd.fieldnames}")
        out = []
        for r in rd:
            out.append(
                {
                    "arm": r["arm"],
                    "scenario": r["scenario"],
                    "solver_seed": int(r["solver_seed"]),
                    "iteration": int(r["iteration"]),
                    "epsilon_mbg": float(r["epsilon_mbg"]),
                    "br_value_vs_p1": float(r["br_value_vs_p1"]),
                    "br_value_vs_p2": float(r["br_value_vs_p2"]),
                }
            )
    return out


# ---------------------------------------------------------------------------
# Class-count table export.


def export_table3(features: FeatureSet, path) -> list[dict]:
    """Write the per-phase class-count comparison (LI / k-RWI / k-ROI / W/O)."""
    t = features.table3()
    rows = []
    for cell in t["cells"]:
        rows.append(
            {
                "phase": cell["phase"],
                "recall": cell["recall"],
                "li": t["li"][cell["phase"]],
                "krwi": cell["krwi"],
                "kroi": cell["kroi"],
                "wo_pct": cell["wo_pct"],
            }
        )
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["phase", "recall", "li", "krwi", "kroi", "wo_pct"])
        w.writeheader()
        w.writerows(rows)
    return rows
