"""Coalitions as bitmasks, subset enumeration, uniform k-subset sampling,
and the memoizing cache for coalition costs.

A coalition over n <= 64 players is a plain int whose bit i marks player i's
membership. Masks hash trivially, so they double as cache keys.
"""

import threading
from typing import Callable, Iterable, Iterator

MAX_PLAYERS = 64
ENUMERATION_CAP = 25  # full 2^n sweeps beyond this must use the sampling paths


class CapExceededError(Exception):
    """A full enumeration (or exact computation) was requested above its cap."""


def coalition_size(mask: int) -> int:
    """Number of members in the coalition."""
    return mask.bit_count()


def coalition_members(mask: int) -> tuple[int, ...]:
    """Member indices in ascending order."""
    members = []
    while mask:
        low = mask & -mask
        members.append(low.bit_length() - 1)
        mask ^= low
    return tuple(members)


def coalition_of(players: Iterable[int]) -> int:
    mask = 0
    for p in players:
        mask |= 1 << p
    return mask


def grand_coalition(n: int) -> int:
    return (1 << n) - 1


def enumerate_subsets(n: int) -> Iterator[int]:
    """All 2^n subset masks in ascending order.

    Capped at n <= 25; larger games must estimate instead of enumerating.
    """
    if n < 1:
        raise ValueError(f"need at least one player, got n={n}")
    if n > ENUMERATION_CAP:
        raise CapExceededError(
            f"refusing to enumerate 2^{n} subsets (cap is n <= {ENUMERATION_CAP})"
        )
    return iter(range(1 << n))


def sample_uniform_coalition(rng, n: int, k: int, excluded: int) -> int:
    """Uniformly random k-subset of the n-1 players other than `excluded`.

    Uses a partial Fisher-Yates shuffle over the compacted index array with
    exactly k uniform doubles drawn from `rng`, so RNG consumption depends
    only on (n, k) and a replayed seed reproduces the same coalition
    sequence draw for draw.
    """
    if not 0 <= excluded < n:
        raise ValueError(f"excluded player {excluded} outside [0, {n})")
    if not 0 <= k <= n - 1:
        raise ValueError(f"subset size {k} outside [0, {n - 1}]")
    pool = [j for j in range(n) if j != excluded]
    m = len(pool)
    mask = 0
    for j in range(k):
        # one double per position; floor keeps the draw count fixed
        r = j + int(rng.random() * (m - j))
        if r >= m:  # guard the measure-zero rng.random() == 1.0 edge
            r = m - 1
        pool[j], pool[r] = pool[r], pool[j]
        mask |= 1 << pool[j]
    return mask


class ValueCache:
    """Memoizes coalition costs keyed by mask.

    Concurrent get_or_compute is safe: lookups and stores take the lock,
    the evaluator runs outside it. Two threads racing on the same new key
    may both evaluate (at-least-once); the evaluator is pure and the solver
    deterministic, so both writes carry identical bits and last-write-wins
    is harmless. Evaluator errors propagate and nothing is stored.
    """

    def __init__(self) -> None:
        self._values: dict[int, float] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._values)

    def __contains__(self, mask: int) -> bool:
        with self._lock:
            return mask in self._values

    def get_or_compute(self, mask: int, evaluate: Callable[[int], float]) -> float:
        with self._lock:
            if mask in self._values:
                self.hits += 1
                return self._values[mask]
            self.misses += 1
        value = evaluate(mask)
        with self._lock:
            self._values[mask] = value
        return value

    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0


class PassthroughCache(ValueCache):
    """Cache-shaped object that never stores; used to prove cache transparency."""

    def get_or_compute(self, mask: int, evaluate: Callable[[int], float]) -> float:
        with self._lock:
            self.misses += 1
        return evaluate(mask)
