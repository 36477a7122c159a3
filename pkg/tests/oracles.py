"""Independent brute-force oracles used only by the test suite.

Nothing in here touches the production simplex or estimator code paths:
dispatch costs come from enumerating battery schedules on a regular grid,
and payoff combinations come from direct formula evaluation with exact
rational weights. These functions exist to vouch for the real engine.
"""

import itertools
import math
from fractions import Fraction

import numpy as np

CONSTRAINT_TOL = 1e-9


def meter_cost(aggregate, import_price, export_price):
    """Bill for an aggregate net-energy profile: import priced one way, export the other.

    `aggregate` may carry leading grid dimensions; the last axis is time.
    """
    agg = np.asarray(aggregate, dtype=float)
    pos = np.clip(agg, 0.0, None)
    neg = np.clip(agg, None, 0.0)
    return pos @ np.asarray(import_price, float) + neg @ np.asarray(export_price, float)


def stored_delta(b, eff_in, eff_out):
    """Change in stored energy caused by grid-side battery energy b (charge > 0)."""
    b = np.asarray(b, dtype=float)
    return eff_in * np.clip(b, 0.0, None) + np.clip(b, None, 0.0) / eff_out


def grid_search_cost(
    net_loads,
    import_price,
    export_price,
    storage=None,
    storage_member=0,
    step=0.01,
):
    """Minimum coalition bill by exhaustive grid search over one battery's schedule.

    net_loads: list of per-member net-energy vectors (kWh per step).
    storage: None, or a dict with capacity, charge_limit, discharge_limit,
        eff_in, eff_out, soc0, soc_min, soc_max (kWh / fractions).
    The battery's first K-1 actions sweep a regular grid in
    [-discharge_limit, charge_limit]; the final action is solved from the
    cycle-closure requirement, so every evaluated point ends the horizon at
    the initial state of charge exactly. Returns the cheapest feasible cost.
    """
    loads = [np.asarray(v, dtype=float) for v in net_loads]
    k = loads[0].shape[0]
    base = np.sum(loads, axis=0)

    if storage is None or storage["capacity"] <= 0.0:
        return float(meter_cost(base, import_price, export_price))

    cap = storage["capacity"]
    chg = storage["charge_limit"]
    dis = storage["discharge_limit"]
    eff_in = storage["eff_in"]
    eff_out = storage["eff_out"]
    stored0 = cap * storage["soc0"]
    lo = cap * storage["soc_min"] - CONSTRAINT_TOL
    hi = cap * storage["soc_max"] + CONSTRAINT_TOL

    if k == 1:
        # cycle closure forces a zero action
        return float(meter_cost(base, import_price, export_price))

    axis = np.arange(-dis, chg + step / 2.0, step)
    grids = np.meshgrid(*([axis] * (k - 1)), indexing="ij")
    free = np.stack([g.ravel() for g in grids], axis=-1)  # (points, k-1)

    deltas = stored_delta(free, eff_in, eff_out)
    closing = -np.sum(deltas, axis=-1)
    b_last = np.where(closing < 0.0, closing * eff_out, closing / eff_in)

    b = np.concatenate([free, b_last[:, None]], axis=-1)  # (points, k)
    feasible = (b_last >= -dis - CONSTRAINT_TOL) & (b_last <= chg + CONSTRAINT_TOL)
    stored = stored0 + np.cumsum(stored_delta(b, eff_in, eff_out), axis=-1)
    feasible &= np.all((stored >= lo) & (stored <= hi), axis=-1)
    if not np.any(feasible):
        raise RuntimeError("grid search found no feasible schedule (zero action should always work)")

    costs = meter_cost(base[None, :] + b, import_price, export_price)
    return float(np.min(costs[feasible]))


def shapley_from_values(values_by_mask, n):
    """Direct payoff formula over an explicit characteristic function.

    Weights are exact rationals; the only floats are the coalition values
    themselves. Independent of the engine's stratified evaluation order.
    """
    payoffs = []
    for i in range(n):
        bit = 1 << i
        total = Fraction(0)
        acc = 0.0
        for mask in range(1 << n):
            if mask & bit:
                continue
            size = bin(mask).count("1")
            weight = Fraction(
                math.factorial(size) * math.factorial(n - size - 1), math.factorial(n)
            )
            acc += float(weight) * (values_by_mask[mask | bit] - values_by_mask[mask])
            total += weight
        assert total == 1
        payoffs.append(acc)
    return np.array(payoffs)


def stratum_mean_from_values(values_by_mask, n, player, position):
    """Mean marginal contribution over every coalition of size position-1 avoiding player."""
    others = [j for j in range(n) if j != player]
    bit = 1 << player
    deltas = []
    for combo in itertools.combinations(others, position - 1):
        mask = 0
        for j in combo:
            mask |= 1 << j
        deltas.append(values_by_mask[mask | bit] - values_by_mask[mask])
    return sum(deltas) / len(deltas), len(deltas)
