"""Payoff allocation: exact Shapley values and three sampling estimators.

The exact evaluator walks every coalition once (costs cached) and combines
marginal contributions per (player, position) stratum: the classic
per-coalition weight |T|!(N-|T|-1)!/N! equals 1/(N*C(N-1,|T|)), so summing
each stratum, dividing by its exact binomial count and averaging over
positions IS the textbook formula, evaluated without any factorial floats.
The stratified estimators share that enumeration and combination code,
which makes a fully-enumerated estimate bit-identical to exact mode.

Estimator plans (which coalition goes to which stratum slot) are always
drawn sequentially from the seeded generator; the expensive marginal
evaluations may then run on a thread pool, and sums are reduced in fixed
(player, position, slot) order, so results do not depend on thread count.
"""

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .coalitions import CapExceededError, coalition_of, enumerate_subsets, sample_uniform_coalition

EXACT_PLAYER_CAP = 20
PERMUTATION_PLAYER_CAP = 8
DEFAULT_STRATUM_CAP = 1 << 20  # largest stratum we will fully enumerate


class BudgetTooSmallError(Exception):
    """The sampling budget cannot satisfy the estimator's floor."""


class StratumOverflowError(Exception):
    """Stratum population exceeds 64-bit range; treat it as un-enumerable."""


@dataclass
class SampleBudget:
    """Total sample size h and the seed that makes a run replayable.

    For the stratified estimators h counts marginal evaluations; for the
    permutation estimator h counts sampled permutations (each of which
    evaluates all N marginals).
    """

    total_samples: int
    seed: int | None = None

    def __post_init__(self):
        if self.total_samples < 1:
            raise BudgetTooSmallError("sample budget must be at least 1")


@dataclass
class StratumStats:
    """Sampling state of one (player, position) coalition stratum."""

    player: int
    position: int  # l in [1, N]; predecessors have size l-1
    population: int | None  # C(N-1, l-1), None when beyond 64-bit
    sample_count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    variance: float | None = None
    exact: bool = False


@dataclass
class ShapleyResult:
    values: np.ndarray
    mode: str
    seed: int | None
    budget: int | None
    efficiency_residual: float
    stratum_stats: list[StratumStats] | None = None
    elapsed_seconds: float = 0.0


def shapley_size_weights(n: int) -> np.ndarray:
    """Per-coalition-size weights s!(n-s-1)!/n!, built by the multiplicative
    ratio w[s] = w[s-1] * s/(n-s) so no raw factorial is ever materialized."""
    if n < 1:
        raise ValueError("need at least one player")
    w = np.empty(n)
    w[0] = 1.0 / n
    for s in range(1, n):
        w[s] = w[s - 1] * s / (n - s)
    return w


def stratum_size(n: int, l: int) -> int:
    """Number of coalitions of size l-1 avoiding one fixed player: C(n-1, l-1)."""
    if not 1 <= l <= n:
        raise ValueError(f"position {l} outside [1, {n}]")
    size = math.comb(n - 1, l - 1)
    if size > 2**63 - 1:
        raise StratumOverflowError(f"stratum population C({n-1},{l-1}) exceeds 64-bit range")
    return size


def _stratum_population(n: int, l: int) -> int | None:
    try:
        return stratum_size(n, l)
    except StratumOverflowError:
        return None


def _stratum_sum(game, player: int, position: int) -> tuple[float, int]:
    """Sum of marginal contributions over the full stratum, accumulated in
    canonical ascending-combination order. Shared by exact mode, the exact
    stratum mean, and the estimators' enumerated strata, so all three
    produce the same bits."""
    n = game.n_players
    others = [j for j in range(n) if j != player]
    total = 0.0
    count = 0
    for combo in itertools.combinations(others, position - 1):
        total += game.marginal_contribution(coalition_of(combo), player)
        count += 1
    return total, count


def stratum_exact_mean(game, player: int, position: int, cap: int = DEFAULT_STRATUM_CAP):
    """Mean marginal contribution over every coalition in the stratum."""
    population = stratum_size(game.n_players, position)
    if population > cap:
        raise CapExceededError(
            f"stratum population {population} exceeds enumeration cap {cap}"
        )
    total, count = _stratum_sum(game, player, position)
    return total / count, count


def _combine_stratum_means(means_by_player: list[list[float]], n: int) -> np.ndarray:
    return np.array([math.fsum(means) / n for means in means_by_player])


def _prime_costs(game, masks, threads: int) -> None:
    """Evaluate coalition costs up front (optionally in parallel). Values are
    cached and deterministic, so priming order never changes results."""
    pending = sorted(set(masks))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(game.coalitional_cost, pending))
    else:
        for mask in pending:
            game.coalitional_cost(mask)


def exact_shapley(game, max_players: int = EXACT_PLAYER_CAP, threads: int = 1) -> ShapleyResult:
    """Exact payoff vector from all 2^N coalition values."""
    n = game.n_players
    if n > max_players:
        raise CapExceededError(f"exact mode capped at {max_players} players, got {n}")
    start = time.perf_counter()
    _prime_costs(game, enumerate_subsets(n), threads)
    means = [
        [_stratum_sum(game, i, l)[0] / stratum_size(n, l) for l in range(1, n + 1)]
        for i in range(n)
    ]
    values = _combine_stratum_means(means, n)
    residual = math.fsum(values) - game.coalition_value(game.grand_mask)
    return ShapleyResult(
        values=values,
        mode="exact",
        seed=None,
        budget=None,
        efficiency_residual=residual,
        elapsed_seconds=time.perf_counter() - start,
    )


def _walk_permutations(game, permutations, count: int) -> np.ndarray:
    acc = np.zeros(game.n_players)
    for order in permutations:
        prefix = 0
        for player in order:
            acc[player] += game.marginal_contribution(prefix, int(player))
            prefix |= 1 << int(player)
    return acc / count


def exact_shapley_permutations(
    game, max_players: int = PERMUTATION_PLAYER_CAP, threads: int = 1
) -> ShapleyResult:
    """Average marginal contribution over all N! join orders.

    Exists as a cross-check for the coalition-weighted evaluator; the two
    formulas are equal, so any disagreement is a bug.
    """
    n = game.n_players
    if n > max_players:
        raise CapExceededError(
            f"permutation enumeration capped at {max_players} players, got {n}"
        )
    start = time.perf_counter()
    _prime_costs(game, enumerate_subsets(n), threads)
    values = _walk_permutations(game, itertools.permutations(range(n)), math.factorial(n))
    residual = math.fsum(values) - game.coalition_value(game.grand_mask)
    return ShapleyResult(
        values=values,
        mode="exact-permutation",
        seed=None,
        budget=None,
        efficiency_residual=residual,
        elapsed_seconds=time.perf_counter() - start,
    )


def estimate_simple_random(game, budget: SampleBudget, threads: int = 1) -> ShapleyResult:
    """Plain Monte Carlo over uniformly sampled join orders.

    Draws budget.total_samples permutations with replacement and averages
    each player's marginal contribution; every permutation contributes all
    N marginals.
    """
    n = game.n_players
    start = time.perf_counter()
    rng = np.random.default_rng(budget.seed)
    plan = [tuple(int(p) for p in rng.permutation(n)) for _ in range(budget.total_samples)]

    masks = set()
    for order in plan:
        prefix = 0
        for player in order:
            masks.add(prefix)
            prefix |= 1 << player
            masks.add(prefix)
    _prime_costs(game, masks, threads)

    values = _walk_permutations(game, plan, budget.total_samples)
    residual = math.fsum(values) - game.coalition_value(game.grand_mask)
    return ShapleyResult(
        values=values,
        mode="permutation",
        seed=budget.seed,
        budget=budget.total_samples,
        efficiency_residual=residual,
        elapsed_seconds=time.perf_counter() - start,
    )


def sample_variance(total: float, total_sq: float, count: int) -> float:
    """Running-sums sample variance (total_sq - total^2/count)/(count-1),
    clamped at zero against negative round-off."""
    if count < 2:
        raise ValueError("sample variance undefined below two samples")
    return max(0.0, (total_sq - total * total / count) / (count - 1))


def _largest_remainder(targets: list[float], total: int) -> list[int]:
    """Round fractional allocations to integers summing exactly to `total`.
    Ties on the fractional part break towards the earlier entry."""
    floors = [int(math.floor(t)) for t in targets]
    leftover = total - sum(floors)
    order = sorted(range(len(targets)), key=lambda j: (-(targets[j] - floors[j]), j))
    for j in order[:leftover]:
        floors[j] += 1
    return floors


def allocate_stage2(stats: list[StratumStats], pool: int) -> dict[tuple[int, int], int]:
    """Second-stage sample increments for each non-enumerated stratum.

    `pool` is the budget not yet owed to enumerated strata; it still covers
    the first-stage samples of the live strata, and is split across them as
    TOTAL counts in proportion to their first-stage sample variances. Any
    stratum whose proportional total falls below what it already drew is
    frozen at its first-stage count, its share leaves the pool, and the
    split repeats until stable. All-zero variances fall back to a uniform
    split. Rounding is largest-remainder, so nothing is lost to fractions.
    """
    if pool < 0:
        raise ValueError("allocation pool cannot be negative")
    increments = {(s.player, s.position): 0 for s in stats}
    active = [s for s in stats if not s.exact]
    while active:
        variances = [s.variance if s.variance is not None else 0.0 for s in active]
        spread = math.fsum(variances)
        if spread > 0.0:
            raw = [pool * v / spread for v in variances]
        else:
            raw = [pool / len(active)] * len(active)
        totals = _largest_remainder(raw, pool)
        frozen = [s for s, t in zip(active, totals) if t < s.sample_count]
        if not frozen:
            for s, t in zip(active, totals):
                increments[(s.player, s.position)] = t - s.sample_count
            return increments
        for s in frozen:
            pool -= s.sample_count
        active = [s for s in active if s not in frozen]
    return increments


def estimate_stratified_uniform(game, budget: SampleBudget, threads: int = 1) -> ShapleyResult:
    """Stratified sampling with the budget split evenly over all N^2 strata.

    Strata small enough that their even share covers the whole population
    are enumerated outright (a with-replacement sample of the entire
    stratum could only be noisier at the same cost)."""
    n = game.n_players
    per_stratum = budget.total_samples // (n * n)
    if per_stratum < 1:
        raise BudgetTooSmallError(
            f"uniform stratification needs at least N^2 = {n * n} samples, got {budget.total_samples}"
        )
    start = time.perf_counter()
    rng = np.random.default_rng(budget.seed)

    stats: list[StratumStats] = []
    plans: dict[tuple[int, int], list[int]] = {}
    for i in range(n):
        for l in range(1, n + 1):
            population = _stratum_population(n, l)
            s = StratumStats(player=i, position=l, population=population)
            if population is not None and per_stratum >= population and population <= DEFAULT_STRATUM_CAP:
                s.exact = True
                s.sample_count = population
            else:
                s.sample_count = per_stratum
                plans[(i, l)] = [
                    sample_uniform_coalition(rng, n, l - 1, i) for _ in range(per_stratum)
                ]
            stats.append(s)

    if threads > 1:
        masks = set()
        for (i, _l), coalitions in plans.items():
            for mask in coalitions:
                masks.update((mask, mask | (1 << i)))
        _prime_costs(game, masks, threads)

    means: list[list[float]] = [[] for _ in range(n)]
    for s in stats:
        if s.exact:
            s.total, count = _stratum_sum(game, s.player, s.position)
            s.total_sq = math.nan  # not tracked for enumerated strata
            means[s.player].append(s.total / count)
        else:
            for mask in plans[(s.player, s.position)]:
                delta = game.marginal_contribution(mask, s.player)
                s.total += delta
                s.total_sq += delta * delta
            if s.sample_count >= 2:
                s.variance = sample_variance(s.total, s.total_sq, s.sample_count)
            means[s.player].append(s.total / s.sample_count)

    values = _combine_stratum_means(means, n)
    residual = math.fsum(values) - game.coalition_value(game.grand_mask)
    return ShapleyResult(
        values=values,
        mode="stratified",
        seed=budget.seed,
        budget=budget.total_samples,
        efficiency_residual=residual,
        stratum_stats=stats,
        elapsed_seconds=time.perf_counter() - start,
    )


def estimate_coalitional_stratified_optimal(
    game, budget: SampleBudget, threads: int = 1
) -> ShapleyResult:
    """Two-stage stratified sampling with variance-proportional allocation.

    Stage 1 spreads half the budget evenly over the N^2 (player, position)
    strata, at least two samples each so the variance is defined; strata
    whose share covers their whole population are enumerated exactly and
    their unused share returns to the pool. Stage 2 splits the pool in
    proportion to the stage-1 sample variances (freezing over-sampled
    strata at their stage-1 counts) and merges the draws, so the final
    estimate uses every sample from both stages.
    """
    n = game.n_players
    h = budget.total_samples
    if h < 2 * n * n:
        raise BudgetTooSmallError(
            f"two-stage stratification needs at least 2*N^2 = {2 * n * n} samples, got {h}"
        )
    start = time.perf_counter()
    rng = np.random.default_rng(budget.seed)

    stage1_total = h // 2
    base = stage1_total // (n * n)
    if base < 2:
        stage1_counts = [2] * (n * n)  # the >=2 floor overrides the 50% share
    else:
        stage1_counts = _largest_remainder([stage1_total / (n * n)] * (n * n), stage1_total)

    stats: list[StratumStats] = []
    plans: dict[tuple[int, int], list[int]] = {}
    enumerated_budget = 0
    idx = 0
    for i in range(n):
        for l in range(1, n + 1):
            share = stage1_counts[idx]
            idx += 1
            population = _stratum_population(n, l)
            s = StratumStats(player=i, position=l, population=population)
            if population is not None and share >= population and population <= DEFAULT_STRATUM_CAP:
                s.exact = True
                s.sample_count = population
                enumerated_budget += population
            else:
                s.sample_count = share
                plans[(i, l)] = [
                    sample_uniform_coalition(rng, n, l - 1, i) for _ in range(share)
                ]
            stats.append(s)

    if threads > 1:
        masks = set()
        for (i, _l), coalitions in plans.items():
            for mask in coalitions:
                masks.update((mask, mask | (1 << i)))
        _prime_costs(game, masks, threads)

    for s in stats:
        if s.exact:
            s.total, _count = _stratum_sum(game, s.player, s.position)
            s.total_sq = math.nan
        else:
            for mask in plans[(s.player, s.position)]:
                delta = game.marginal_contribution(mask, s.player)
                s.total += delta
                s.total_sq += delta * delta
            s.variance = sample_variance(s.total, s.total_sq, s.sample_count)

    pool = h - enumerated_budget
    increments = allocate_stage2(stats, pool)

    stage2_plans: dict[tuple[int, int], list[int]] = {}
    for s in stats:
        extra = increments[(s.player, s.position)]
        if extra > 0:
            stage2_plans[(s.player, s.position)] = [
                sample_uniform_coalition(rng, n, s.position - 1, s.player)
                for _ in range(extra)
            ]

    if threads > 1 and stage2_plans:
        masks = set()
        for (i, _l), coalitions in stage2_plans.items():
            for mask in coalitions:
                masks.update((mask, mask | (1 << i)))
        _prime_costs(game, masks, threads)

    means: list[list[float]] = [[] for _ in range(n)]
    for s in stats:
        extra = increments[(s.player, s.position)]
        if extra > 0:
            for mask in stage2_plans[(s.player, s.position)]:
                delta = game.marginal_contribution(mask, s.player)
                s.total += delta
                s.total_sq += delta * delta
            s.sample_count += extra
        if not s.exact and s.sample_count >= 2:
            s.variance = sample_variance(s.total, s.total_sq, s.sample_count)
        means[s.player].append(s.total / s.sample_count)

    values = _combine_stratum_means(means, n)
    residual = math.fsum(values) - game.coalition_value(game.grand_mask)
    return ShapleyResult(
        values=values,
        mode="coalitional-stratified",
        seed=budget.seed,
        budget=budget.total_samples,
        efficiency_residual=residual,
        stratum_stats=stats,
        elapsed_seconds=time.perf_counter() - start,
    )
