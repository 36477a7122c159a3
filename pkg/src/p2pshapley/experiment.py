"""Experiment execution: build the game from a scenario, run the requested
payoff computation, and assemble the run report. Adoption-rate sweeps rerun
the same seeded community at each rate pair, so owner sets nest as rates
grow."""

import time

from .report import PlayerRow, RunReport
from .scenario import ScenarioConfig, with_rates
from .shapley import (
    SampleBudget,
    estimate_coalitional_stratified_optimal,
    estimate_simple_random,
    estimate_stratified_uniform,
    exact_shapley,
)


def compute_payoffs(game, config: ScenarioConfig):
    """Dispatch on the configured mode; returns a ShapleyResult."""
    mode = config.mode
    threads = config.threads
    if mode == "exact":
        return exact_shapley(game, max_players=config.exact_cap, threads=threads)
    seed = config.seed
    if mode == "permutation":
        budget = SampleBudget(config.samples_per_player, seed=seed)
        return estimate_simple_random(game, budget, threads=threads)
    budget = SampleBudget(config.samples_per_player * game.n_players, seed=seed)
    if mode == "stratified":
        return estimate_stratified_uniform(game, budget, threads=threads)
    if mode == "coalitional-stratified":
        return estimate_coalitional_stratified_optimal(game, budget, threads=threads)
    raise ValueError(f"unknown mode {mode!r}")


def run_experiment(config: ScenarioConfig) -> RunReport:
    """Build the energy game, compute payoffs, and report per-prosumer results."""
    start = time.perf_counter()
    game = config.build_game()
    result = compute_payoffs(game, config)
    ids = config.prosumer_ids()
    rows = tuple(
        PlayerRow(
            prosumer_id=ids[i],
            owns_pv=prosumer.owns_pv,
            owns_es=prosumer.owns_es,
            standalone_cost=float(game.singleton_costs[i]),
            payoff=float(result.values[i]),
        )
        for i, prosumer in enumerate(game.prosumers)
    )
    samples_per_player = None if config.mode == "exact" else config.samples_per_player
    return RunReport(
        rows=rows,
        v_grand=game.coalition_value(game.grand_mask),
        efficiency_residual=result.efficiency_residual,
        mode=config.mode,
        seed=None if config.mode == "exact" else config.seed,
        samples_per_player=samples_per_player,
        budget_samples=result.budget,
        elapsed_seconds=time.perf_counter() - start,
        lp_solves=game.lp_solves,
        cache_hit_rate=game.cache_hit_rate(),
    )


def sweep_adoption(config: ScenarioConfig, points) -> list[tuple[tuple[float, float], RunReport]]:
    """One report per (pv_rate, es_rate) point, same community seed throughout."""
    results = []
    for pv_rate, es_rate in points:
        point_config = with_rates(config, pv_rate, es_rate)
        results.append(((pv_rate, es_rate), run_experiment(point_config)))
    return results
