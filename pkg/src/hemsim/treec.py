"""Decision-tree policy synthesis: genome decode, swarm search, pruning.

A genome is a flat vector in [0,1] encoding, per asset tree, the feature
selector and threshold of every internal node of a complete binary tree plus
all leaf action values. Particle swarm optimization scores genomes by
simulating the decoded controller over a training window and taking the
resulting electricity cost. After training, leaves that do not earn their
keep (cost within 1% of the unpruned tree when removed, least used first)
are collapsed away.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from hemsim.assets import EvParams, HouseConfig
from hemsim.controllers import TreeController
from hemsim.policytree import (
    DEFAULT_FEATURE_RANGES,
    Internal,
    Leaf,
    Node,
    PolicyPair,
    collapse_leaf,
    count_leaves,
    eval_leaf,
    iter_leaves,
)
from hemsim.simulation import ScenarioData, run_scenario
from hemsim.tariff import TariffParams, total_cost


@dataclass(frozen=True)
class PsoConfig:
    population: int = 1000
    generations: int = 1000
    inertia: float = 0.7298
    cognitive: float = 1.49618
    social: float = 1.49618
    velocity_clamp: float = 0.5  # fraction of the unit range
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if min(self.inertia, self.cognitive, self.social) <= 0.0:
            raise ValueError("PSO coefficients must be positive")


def tree_genome_length(depth: int) -> int:
    internal = 2**depth - 1
    leaves = 2**depth
    return 2 * internal + leaves


def genome_length(depth: int) -> int:
    """Two trees per genome: BESS then EV."""
    return 2 * tree_genome_length(depth)


def _decode_tree(
    genes: np.ndarray, depth: int, ranges: Sequence[tuple[float, float]]
) -> Node:
    n_internal = 2**depth - 1
    n_features = len(ranges)
    features = genes[:n_internal]
    thresholds = genes[n_internal : 2 * n_internal]
    leaves = genes[2 * n_internal :]

    def build(i: int, level: int) -> Node:
        if level == depth:
            leaf_idx = i - n_internal
            return Leaf(float(leaves[leaf_idx]))
        f = min(int(features[i] * n_features), n_features - 1)
        lo, hi = ranges[f]
        thr = lo + float(thresholds[i]) * (hi - lo)
        return Internal(f, thr, build(2 * i + 1, level + 1), build(2 * i + 2, level + 1))

    return build(0, 0)


def decode(
    genome: np.ndarray,
    depth: int = 4,
    ranges: Sequence[tuple[float, float]] = DEFAULT_FEATURE_RANGES,
) -> PolicyPair:
    """Deterministic genome to policy-pair decode."""
    genome = np.asarray(genome, dtype=float)
    expected = genome_length(depth)
    if genome.shape != (expected,):
        raise ValueError(f"genome must have length {expected}, got {genome.shape}")
    if genome.min() < -1e-12 or genome.max() > 1 + 1e-12:
        raise ValueError("genes must lie in [0,1]")
    half = tree_genome_length(depth)
    return PolicyPair(
        _decode_tree(genome[:half], depth, ranges),
        _decode_tree(genome[half:], depth, ranges),
    )


def encode(
    pair: PolicyPair,
    depth: int = 4,
    ranges: Sequence[tuple[float, float]] = DEFAULT_FEATURE_RANGES,
) -> np.ndarray:
    """Inverse of :func:`decode` for complete trees of exactly ``depth``."""
    n_features = len(ranges)

    def encode_tree(root: Node) -> np.ndarray:
        n_internal = 2**depth - 1
        genes = np.zeros(tree_genome_length(depth))
        nodes: dict[int, Node] = {0: root}
        for i in range(n_internal):
            node = nodes[i]
            if not isinstance(node, Internal):
                raise ValueError("tree is not a complete binary tree of the given depth")
            genes[i] = (node.feature + 0.5) / n_features
            lo, hi = ranges[node.feature]
            genes[n_internal + i] = (node.threshold - lo) / (hi - lo)
            nodes[2 * i + 1] = node.left
            nodes[2 * i + 2] = node.right
        for i in range(n_internal, 2 * n_internal + 1):
            node = nodes[i]
            if not isinstance(node, Leaf):
                raise ValueError("tree is not a complete binary tree of the given depth")
            genes[2 * n_internal + (i - n_internal)] = node.value
        return genes

    return np.concatenate([encode_tree(pair.bess), encode_tree(pair.ev)])


@dataclass
class TrainingScenario:
    """Everything a fitness evaluation needs, picklable for worker pools."""

    house: HouseConfig
    data: ScenarioData
    window: tuple[datetime, datetime]
    ev: EvParams = field(default_factory=EvParams)
    tariff: TariffParams = field(default_factory=TariffParams)
    depth: int = 4
    ranges: Sequence[tuple[float, float]] = DEFAULT_FEATURE_RANGES
    safety_on: bool = True
    initial_bess_soc: Optional[float] = None


def scenario_cost(scenario: TrainingScenario, pair: PolicyPair) -> float:
    """Simulated electricity cost of a policy pair over the training window."""
    controller = TreeController(pair, scenario.house, scenario.ev)
    traces = run_scenario(
        scenario.house,
        controller,
        scenario.data,
        scenario.window,
        safety_on=scenario.safety_on,
        ev_params=scenario.ev,
        initial_bess_soc=scenario.initial_bess_soc,
    )
    return total_cost(traces, scenario.data.prices, scenario.tariff).total


def genome_cost(scenario: TrainingScenario, genome: np.ndarray) -> float:
    return scenario_cost(scenario, decode(genome, scenario.depth, scenario.ranges))


def pso_optimize(
    f: Callable[[np.ndarray], float],
    dim: int,
    cfg: PsoConfig,
    *,
    workers: int = 0,
) -> tuple[np.ndarray, list[float]]:
    """Canonical PSO over [0,1]^dim; returns the global best and the
    per-generation best-so-far history (entry 0 is the random init)."""
    rng = np.random.default_rng(cfg.seed)
    pop = cfg.population
    x = rng.random((pop, dim))
    v = np.zeros((pop, dim))
    vmax = cfg.velocity_clamp

    if workers > 1:
        from multiprocessing import Pool

        pool = Pool(workers)
        evaluate = lambda xs: np.array(pool.map(f, list(xs), chunksize=max(1, pop // (4 * workers))))
    else:
        pool = None
        evaluate = lambda xs: np.array([f(xi) for xi in xs])

    try:
        cost = evaluate(x)
        pbest = x.copy()
        pbest_cost = cost.copy()
        gi = int(np.argmin(cost))
        gbest = x[gi].copy()
        gbest_cost = float(cost[gi])
        history = [gbest_cost]

        for _ in range(cfg.generations):
            r1 = rng.random((pop, dim))
            r2 = rng.random((pop, dim))
            v = (
                cfg.inertia * v
                + cfg.cognitive * r1 * (pbest - x)
                + cfg.social * r2 * (gbest[None, :] - x)
            )
            np.clip(v, -vmax, vmax, out=v)
            x = np.clip(x + v, 0.0, 1.0)
            cost = evaluate(x)
            improved = cost < pbest_cost
            pbest[improved] = x[improved]
            pbest_cost[improved] = cost[improved]
            gi = int(np.argmin(pbest_cost))
            if float(pbest_cost[gi]) < gbest_cost:
                gbest_cost = float(pbest_cost[gi])
                gbest = pbest[gi].copy()
            history.append(gbest_cost)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return gbest, history


def leaf_usage(
    scenario: TrainingScenario, pair: PolicyPair
) -> tuple[dict[int, int], dict[int, int]]:
    """Visit counts per leaf (by object id) when replaying the scenario."""

    counts_bess: dict[int, int] = {}
    counts_ev: dict[int, int] = {}

    class Counting(TreeController):
        def step(self, obs):
            feats = obs.features()
            lb = eval_leaf(self.pair.bess, feats)
            counts_bess[id(lb)] = counts_bess.get(id(lb), 0) + 1
            if obs.session is not None:
                le = eval_leaf(self.pair.ev, feats)
                counts_ev[id(le)] = counts_ev.get(id(le), 0) + 1
            return super().step(obs)

    controller = Counting(pair, scenario.house, scenario.ev)
    run_scenario(
        scenario.house,
        controller,
        scenario.data,
        scenario.window,
        safety_on=scenario.safety_on,
        ev_params=scenario.ev,
        initial_bess_soc=scenario.initial_bess_soc,
    )
    return counts_bess, counts_ev


def prune(
    pair: PolicyPair,
    scenario: TrainingScenario,
    threshold: float = 0.01,
) -> PolicyPair:
    """Collapse leaves that do not earn their keep.

    Least-used leaves are tried first; a collapse is kept when the simulated
    cost stays within ``threshold`` (relative) of the unpruned cost. Both
    trees are pruned, BESS first.
    """
    base_cost = scenario_cost(scenario, pair)
    budget = base_cost + threshold * abs(base_cost)

    for asset in ("bess", "ev"):
        while True:
            tree = getattr(pair, asset)
            if count_leaves(tree) <= 1:
                break
            usage = leaf_usage(scenario, pair)[0 if asset == "bess" else 1]
            order = sorted(
                enumerate(iter_leaves(tree)),
                key=lambda item: (usage.get(id(item[1]), 0), item[0]),
            )
            accepted = False
            for _, leaf in order:
                candidate_tree = collapse_leaf(tree, leaf)
                candidate = (
                    PolicyPair(candidate_tree, pair.ev)
                    if asset == "bess"
                    else PolicyPair(pair.bess, candidate_tree)
                )
                if scenario_cost(scenario, candidate) <= budget:
                    pair = candidate
                    accepted = True
                    break
            if not accepted:
                break
    return pair


@dataclass
class TrainResult:
    pair: PolicyPair
    cost: float
    histories: list[list[float]]
    restart_costs: list[float]


def train(
    scenario: TrainingScenario,
    cfg: PsoConfig,
    *,
    restarts: int = 5,
    workers: int = 0,
) -> TrainResult:
    """Full synthesis: PSO per restart (distinct seeds), prune, keep the best."""
    if restarts < 1:
        raise ValueError("need at least one restart")
    dim = genome_length(scenario.depth)
    best_pair: Optional[PolicyPair] = None
    best_cost = float("inf")
    histories: list[list[float]] = []
    restart_costs: list[float] = []
    for i in range(restarts):
        run_cfg = PsoConfig(
            population=cfg.population,
            generations=cfg.generations,
            inertia=cfg.inertia,
            cognitive=cfg.cognitive,
            social=cfg.social,
            velocity_clamp=cfg.velocity_clamp,
            seed=cfg.seed + i,
        )
        genome, history = pso_optimize(
            partial(genome_cost, scenario), dim, run_cfg, workers=workers
        )
        histories.append(history)
        pair = decode(genome, scenario.depth, scenario.ranges)
        pruned = prune(pair, scenario)
        cost = scenario_cost(scenario, pruned)
        restart_costs.append(cost)
        if cost < best_cost:
            best_cost = cost
            best_pair = pruned
    assert best_pair is not None
    return TrainResult(best_pair, best_cost, histories, restart_costs)


def save_history_csv(path: str, history: Sequence[float]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generation", "best_cost"])
        for g, c in enumerate(history):
            writer.writerow([g, f"{c:.6f}"])
