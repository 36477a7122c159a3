"""The peer-to-peer energy characteristic function.

A coalition's cost is the cheapest aggregate import/export bill it can
reach by jointly scheduling its members' batteries over the horizon; its
value is the saving relative to everyone paying their own standalone bill.
The coalition is billed on one virtual meter: per-timestep aggregate net
energy priced at the import rate when positive and the export rate when
negative. Costs are memoized per coalition mask, values derived on demand.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from .coalitions import ValueCache, coalition_members, coalition_size, grand_coalition
from .simplex import OPTIMAL, LpProblem, solve

SCHEDULE_FEASIBILITY_TOL = 1e-7  # kWh
COST_CONSISTENCY_RTOL = 1e-9


@dataclass(frozen=True)
class Horizon:
    steps: int
    dt_hours: float = 1.0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("horizon needs at least one timestep")
        if self.dt_hours <= 0:
            raise ValueError("timestep duration must be positive")


@dataclass(frozen=True, eq=False)
class TariffSchedule:
    """Per-timestep import and export prices (currency/kWh)."""

    import_price: np.ndarray
    export_price: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "import_price", np.asarray(self.import_price, dtype=float))
        object.__setattr__(self, "export_price", np.asarray(self.export_price, dtype=float))
        if self.import_price.shape != self.export_price.shape or self.import_price.ndim != 1:
            raise ValueError("tariff vectors must be 1-D and of equal length")
        if np.any(self.export_price < 0):
            raise ValueError("export price must be nonnegative")
        if np.any(self.import_price <= self.export_price):
            raise ValueError("import price must exceed export price at every timestep")

    @property
    def steps(self) -> int:
        return self.import_price.shape[0]


@dataclass(frozen=True)
class StorageSpec:
    """Battery parameters. Energy limits are kWh per timestep (already scaled
    by the step duration); a zero-capacity spec encodes 'no storage'."""

    capacity_kwh: float
    charge_limit_kwh: float
    discharge_limit_kwh: float
    eff_in: float = 1.0
    eff_out: float = 1.0
    soc0: float = 0.0
    soc_min: float = 0.0
    soc_max: float = 1.0

    def __post_init__(self):
        if self.capacity_kwh < 0 or self.charge_limit_kwh < 0 or self.discharge_limit_kwh < 0:
            raise ValueError("storage energy parameters must be nonnegative")
        if not (0 < self.eff_in <= 1 and 0 < self.eff_out <= 1):
            raise ValueError("efficiencies must lie in (0, 1]")
        if not (0 <= self.soc_min <= self.soc0 <= self.soc_max <= 1):
            raise ValueError(
                "need 0 <= soc_min <= soc0 <= soc_max <= 1 (otherwise the idle schedule is infeasible)"
            )
        if self.capacity_kwh == 0 and (self.charge_limit_kwh or self.discharge_limit_kwh):
            raise ValueError("zero capacity requires zero charge/discharge limits")

    @property
    def has_storage(self) -> bool:
        return self.capacity_kwh > 0


NO_STORAGE = StorageSpec(0.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class Prosumer:
    id: int
    net_load_kwh: np.ndarray  # consumption positive, generation negative
    storage: StorageSpec = NO_STORAGE
    owns_pv: bool = False

    def __post_init__(self):
        object.__setattr__(self, "net_load_kwh", np.asarray(self.net_load_kwh, dtype=float))
        if self.net_load_kwh.ndim != 1:
            raise ValueError("net load must be a 1-D vector")

    @property
    def owns_es(self) -> bool:
        return self.storage.has_storage


def net_load(load_kwh, pv_kwh) -> np.ndarray:
    """Elementwise load minus generation."""
    load = np.asarray(load_kwh, dtype=float)
    pv = np.asarray(pv_kwh, dtype=float)
    if load.shape != pv.shape:
        raise ValueError(f"length mismatch: load {load.shape} vs pv {pv.shape}")
    return load - pv


@dataclass(frozen=True)
class LpLayout:
    """Where each dispatch quantity lives in the LP variable vector."""

    storage_members: tuple[int, ...]
    steps: int

    def charge_col(self, member_pos: int, t: int) -> int:
        return 2 * member_pos * self.steps + t

    def discharge_col(self, member_pos: int, t: int) -> int:
        return (2 * member_pos + 1) * self.steps + t

    def import_col(self, t: int) -> int:
        return 2 * len(self.storage_members) * self.steps + t

    def export_col(self, t: int) -> int:
        return (2 * len(self.storage_members) + 1) * self.steps + t

    @property
    def n_vars(self) -> int:
        return 2 * len(self.storage_members) * self.steps + 2 * self.steps


@dataclass(frozen=True, eq=False)
class ScheduleSolution:
    """Optimal coalition dispatch: grid-side battery energies and the bill."""

    charge_kwh: np.ndarray  # (n_players, steps); zero rows for non-members
    discharge_kwh: np.ndarray
    total_cost: float
    per_timestep_net: np.ndarray


class EnergyGame:
    """Immutable N-player game; coalition costs are solved on demand and cached.

    Safe for concurrent coalition evaluations: the cache synchronizes itself
    and each LP solve is pure.
    """

    def __init__(self, prosumers, tariff: TariffSchedule, horizon: Horizon, use_cache: bool = True):
        prosumers = list(prosumers)
        if not prosumers:
            raise ValueError("a game needs at least one prosumer")
        steps = horizon.steps
        if tariff.steps != steps:
            raise ValueError("tariff length does not match the horizon")
        for p in prosumers:
            if p.net_load_kwh.shape[0] != steps:
                raise ValueError(f"prosumer {p.id} net load length != horizon steps")
        self.prosumers = tuple(prosumers)
        self.tariff = tariff
        self.horizon = horizon
        self.n_players = len(prosumers)
        self.cache = ValueCache()
        self._use_cache = use_cache
        self._lp_lock = threading.Lock()
        self.lp_solves = 0
        self.singleton_costs = np.array(
            [self._evaluate_cost(1 << i) for i in range(self.n_players)]
        )
        if use_cache:
            for i, cost in enumerate(self.singleton_costs):
                self.cache.get_or_compute(1 << i, lambda _m, c=cost: c)

    @property
    def grand_mask(self) -> int:
        return grand_coalition(self.n_players)

    def coalitional_cost(self, mask: int) -> float:
        """Minimum aggregate bill of the coalition; 0 for the empty set."""
        self._check_mask(mask)
        if not self._use_cache:
            return self._evaluate_cost(mask)
        return self.cache.get_or_compute(mask, self._evaluate_cost)

    def coalition_value(self, mask: int) -> float:
        """Savings from cooperating: sum of standalone bills minus the joint bill."""
        if mask == 0:
            return 0.0
        standalone = 0.0
        for i in coalition_members(mask):
            standalone += self.singleton_costs[i]
        return standalone - self.coalitional_cost(mask)

    def marginal_contribution(self, mask: int, player: int) -> float:
        """Value added when `player` joins the coalition `mask`."""
        bit = 1 << player
        if mask & bit:
            raise ValueError(f"player {player} already in coalition {mask:#x}")
        return self.coalition_value(mask | bit) - self.coalition_value(mask)

    def cache_hit_rate(self) -> float:
        return self.cache.hit_rate()

    def _check_mask(self, mask: int) -> None:
        if mask < 0 or mask >= (1 << self.n_players):
            raise ValueError(f"coalition mask {mask:#x} out of range for {self.n_players} players")

    def _evaluate_cost(self, mask: int) -> float:
        if mask == 0:
            return 0.0
        problem, _layout = build_lp(self, mask)
        with self._lp_lock:
            self.lp_solves += 1
        solution = solve(problem)
        if solution.status != OPTIMAL:
            raise RuntimeError(
                f"dispatch LP came back {solution.status} for mask {mask:#x}; "
                "these problems are feasible and bounded by construction"
            )
        return solution.objective

    def solve_schedule(self, mask: int) -> ScheduleSolution:
        """Optimal dispatch with the schedule spelled out (not cached).

        Simultaneous charge/discharge can appear in degenerate optima; the
        reported schedule nets such pairs when the netted schedule still
        validates (netting shifts stored energy when round-trip efficiency
        is below one, so it is only applied when harmless). Cost is taken
        from the raw optimum either way.
        """
        self._check_mask(mask)
        if mask == 0:
            steps = self.horizon.steps
            zeros = np.zeros((self.n_players, steps))
            return ScheduleSolution(zeros, zeros.copy(), 0.0, np.zeros(steps))
        problem, layout = build_lp(self, mask)
        solution = solve(problem)
        if solution.status != OPTIMAL:
            raise RuntimeError(f"dispatch LP came back {solution.status} for mask {mask:#x}")
        steps = self.horizon.steps
        charge = np.zeros((self.n_players, steps))
        discharge = np.zeros((self.n_players, steps))
        for pos, member in enumerate(layout.storage_members):
            for t in range(steps):
                charge[member, t] = solution.x[layout.charge_col(pos, t)]
                discharge[member, t] = solution.x[layout.discharge_col(pos, t)]

        overlap = np.minimum(charge, discharge)
        if overlap.max(initial=0.0) > 0.0:
            netted_c = charge - overlap
            netted_d = discharge - overlap
            if validate_schedule(self, mask, netted_c, netted_d) <= SCHEDULE_FEASIBILITY_TOL:
                charge, discharge = netted_c, netted_d

        agg = self.net_load_sum(mask) + (charge - discharge)[coalition_members(mask), :].sum(axis=0)
        return ScheduleSolution(charge, discharge, solution.objective, agg)

    def net_load_sum(self, mask: int) -> np.ndarray:
        total = np.zeros(self.horizon.steps)
        for i in coalition_members(mask):
            total += self.prosumers[i].net_load_kwh
        return total


def build_lp(game: EnergyGame, mask: int) -> tuple[LpProblem, LpLayout]:
    """Coalition dispatch LP.

    Variables: per storage-owning member and step, charge and discharge
    energy (split nonnegative); per step, aggregate import and export.
    Members without storage contribute only their net load to the meter
    balance, so their b-variables are absent. Constraints: meter balance,
    per-step power limits, state-of-charge window on every prefix, and
    cycle closure back to the initial state of charge.
    """
    if mask == 0:
        raise ValueError("cannot build a dispatch LP for the empty coalition")
    members = coalition_members(mask)
    steps = game.horizon.steps
    storage_members = tuple(i for i in members if game.prosumers[i].storage.has_storage)
    layout = LpLayout(storage_members=storage_members, steps=steps)
    n = layout.n_vars

    c = np.zeros(n)
    for t in range(steps):
        c[layout.import_col(t)] = game.tariff.import_price[t]
        c[layout.export_col(t)] = -game.tariff.export_price[t]

    n_power = 2 * len(storage_members) * steps
    n_soc = 2 * len(storage_members) * steps
    a_ub = np.zeros((n_power + n_soc, n))
    b_ub = np.zeros(n_power + n_soc)
    row = 0
    for pos, member in enumerate(storage_members):
        spec = game.prosumers[member].storage
        for t in range(steps):
            a_ub[row, layout.charge_col(pos, t)] = 1.0
            b_ub[row] = spec.charge_limit_kwh
            row += 1
            a_ub[row, layout.discharge_col(pos, t)] = 1.0
            b_ub[row] = spec.discharge_limit_kwh
            row += 1
    for pos, member in enumerate(storage_members):
        spec = game.prosumers[member].storage
        headroom = spec.capacity_kwh * (spec.soc_max - spec.soc0)
        floor_room = spec.capacity_kwh * (spec.soc0 - spec.soc_min)
        for k in range(steps):
            for t in range(k + 1):
                a_ub[row, layout.charge_col(pos, t)] = spec.eff_in
                a_ub[row, layout.discharge_col(pos, t)] = -1.0 / spec.eff_out
                a_ub[row + 1, layout.charge_col(pos, t)] = -spec.eff_in
                a_ub[row + 1, layout.discharge_col(pos, t)] = 1.0 / spec.eff_out
            b_ub[row] = headroom
            b_ub[row + 1] = floor_room
            row += 2

    n_eq = steps + len(storage_members)
    a_eq = np.zeros((n_eq, n))
    b_eq = np.zeros(n_eq)
    for t in range(steps):
        a_eq[t, layout.import_col(t)] = 1.0
        a_eq[t, layout.export_col(t)] = -1.0
        for pos in range(len(storage_members)):
            a_eq[t, layout.charge_col(pos, t)] = -1.0
            a_eq[t, layout.discharge_col(pos, t)] = 1.0
    b_eq[:steps] = game.net_load_sum(mask)
    for pos, member in enumerate(storage_members):
        spec = game.prosumers[member].storage
        r = steps + pos
        for t in range(steps):
            a_eq[r, layout.charge_col(pos, t)] = spec.eff_in
            a_eq[r, layout.discharge_col(pos, t)] = -1.0 / spec.eff_out

    problem = LpProblem(c=c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq)
    return problem, layout


def validate_schedule(game: EnergyGame, mask: int, charge_kwh, discharge_kwh) -> float:
    """Independent feasibility check of a dispatch against the raw battery
    arithmetic (no LP machinery). Returns the largest violation in kWh."""
    charge = np.asarray(charge_kwh, dtype=float)
    discharge = np.asarray(discharge_kwh, dtype=float)
    steps = game.horizon.steps
    if charge.shape != (game.n_players, steps) or discharge.shape != charge.shape:
        raise ValueError("schedule matrices must be (n_players, steps)")
    worst = max(float(np.max(-charge, initial=0.0)), float(np.max(-discharge, initial=0.0)))
    members = set(coalition_members(mask))
    for i, prosumer in enumerate(game.prosumers):
        spec = prosumer.storage
        if i not in members or not spec.has_storage:
            worst = max(worst, float(np.max(np.abs(charge[i]), initial=0.0)))
            worst = max(worst, float(np.max(np.abs(discharge[i]), initial=0.0)))
            continue
        worst = max(worst, float(np.max(charge[i] - spec.charge_limit_kwh, initial=0.0)))
        worst = max(worst, float(np.max(discharge[i] - spec.discharge_limit_kwh, initial=0.0)))
        stored = spec.capacity_kwh * spec.soc0 + np.cumsum(
            spec.eff_in * charge[i] - discharge[i] / spec.eff_out
        )
        worst = max(worst, float(np.max(spec.capacity_kwh * spec.soc_min - stored, initial=0.0)))
        worst = max(worst, float(np.max(stored - spec.capacity_kwh * spec.soc_max, initial=0.0)))
        worst = max(worst, abs(float(stored[-1] - spec.capacity_kwh * spec.soc0)))
    return worst


def dispatch_cost(game: EnergyGame, mask: int, charge_kwh, discharge_kwh) -> float:
    """Bill implied by a schedule, recomputed from the tariff arithmetic."""
    agg = game.net_load_sum(mask)
    members = coalition_members(mask)
    if members:
        charge = np.asarray(charge_kwh, dtype=float)
        discharge = np.asarray(discharge_kwh, dtype=float)
        agg = agg + (charge - discharge)[list(members), :].sum(axis=0)
    pos = np.clip(agg, 0.0, None)
    neg = np.clip(agg, None, 0.0)
    return float(pos @ game.tariff.import_price + neg @ game.tariff.export_price)
