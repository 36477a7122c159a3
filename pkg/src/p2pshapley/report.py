"""Run reports: per-prosumer payoff tables, error metrics between runs, and
the CSV / JSON-lines writers.

Data files are the determinism surface — identical configs produce
byte-identical bytes at any thread count. Wall-clock and solver counters
live in the sidecar summary (<path>.summary.json), which is exempt.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CSV_HEADER = "prosumer_id,owns_pv,owns_es,standalone_cost,payoff"


@dataclass(frozen=True)
class PlayerRow:
    prosumer_id: int
    owns_pv: bool
    owns_es: bool
    standalone_cost: float
    payoff: float


@dataclass(frozen=True)
class RunReport:
    rows: tuple[PlayerRow, ...]
    v_grand: float
    efficiency_residual: float
    mode: str
    seed: int | None
    samples_per_player: int | None
    budget_samples: int | None
    elapsed_seconds: float
    lp_solves: int
    cache_hit_rate: float

    @property
    def n_players(self) -> int:
        return len(self.rows)

    def payoffs(self) -> np.ndarray:
        return np.array([row.payoff for row in self.rows])

    def standalone_costs(self) -> np.ndarray:
        return np.array([row.standalone_cost for row in self.rows])


@dataclass(frozen=True)
class ErrorMetrics:
    per_player: np.ndarray
    mean_abs_error: float
    max_abs_error: float
    mean_payoff_scale: float  # v(N)/N of the reference run
    error_share_of_mean_payoff: float


def estimation_error(exact: RunReport, estimated: RunReport) -> ErrorMetrics:
    """Per-player and aggregate error of an estimated run against an exact one.

    Both reports must describe the same game: same player count, ids and
    standalone costs (at the reports' printed precision).
    """
    if exact.n_players != estimated.n_players:
        raise ValueError(
            f"player count mismatch: {exact.n_players} vs {estimated.n_players}"
        )
    for a, b in zip(exact.rows, estimated.rows):
        if a.prosumer_id != b.prosumer_id:
            raise ValueError(f"prosumer id mismatch: {a.prosumer_id} vs {b.prosumer_id}")
        if abs(a.standalone_cost - b.standalone_cost) > 1e-6:
            raise ValueError(
                f"prosumer {a.prosumer_id}: standalone costs differ "
                f"({a.standalone_cost} vs {b.standalone_cost}); not the same game"
            )
    per_player = np.abs(exact.payoffs() - estimated.payoffs())
    mae = float(per_player.mean())
    scale = exact.v_grand / exact.n_players
    if scale > 0:
        share = mae / scale
    else:
        share = 0.0 if mae == 0.0 else float("inf")
    return ErrorMetrics(
        per_player=per_player,
        mean_abs_error=mae,
        max_abs_error=float(per_player.max()),
        mean_payoff_scale=scale,
        error_share_of_mean_payoff=share,
    )


def _row_csv(row: PlayerRow) -> str:
    return (
        f"{row.prosumer_id},{str(row.owns_pv).lower()},{str(row.owns_es).lower()},"
        f"{row.standalone_cost:.6f},{row.payoff:.6f}"
    )


def _row_json(row: PlayerRow) -> str:
    return json.dumps(
        {
            "prosumer_id": row.prosumer_id,
            "owns_pv": row.owns_pv,
            "owns_es": row.owns_es,
            "standalone_cost": round(row.standalone_cost, 6),
            "payoff": round(row.payoff, 6),
        },
        sort_keys=True,
    )


def summary_dict(report: RunReport) -> dict:
    return {
        "n_players": report.n_players,
        "v_grand": report.v_grand,
        "efficiency_residual": report.efficiency_residual,
        "payoff_total": float(np.sum(report.payoffs())),
        "mode": report.mode,
        "seed": report.seed,
        "samples_per_player": report.samples_per_player,
        "budget_samples": report.budget_samples,
        "elapsed_seconds": report.elapsed_seconds,
        "lp_solves": report.lp_solves,
        "cache_hit_rate": report.cache_hit_rate,
    }


def write_report(report: RunReport, path, fmt: str = "csv") -> None:
    """Write the per-prosumer table plus the sidecar summary JSON."""
    if fmt not in ("csv", "json-lines"):
        raise ValueError(f"format must be 'csv' or 'json-lines', got {fmt!r}")
    path = Path(path)
    if fmt == "csv":
        lines = [CSV_HEADER] + [_row_csv(row) for row in report.rows]
    else:
        lines = [_row_json(row) for row in report.rows]
    path.write_text("\n".join(lines) + "\n")
    sidecar = path.with_name(path.name + ".summary.json")
    sidecar.write_text(json.dumps(summary_dict(report), indent=2, sort_keys=True) + "\n")


def read_report(path) -> RunReport:
    """Load a report written by write_report (either format, sidecar optional)."""
    path = Path(path)
    text = path.read_text().strip()
    if not text:
        raise ValueError(f"{path}: empty report")
    rows = []
    lines = text.splitlines()
    if lines[0].lstrip().startswith("{"):
        for line in lines:
            obj = json.loads(line)
            rows.append(
                PlayerRow(
                    prosumer_id=int(obj["prosumer_id"]),
                    owns_pv=bool(obj["owns_pv"]),
                    owns_es=bool(obj["owns_es"]),
                    standalone_cost=float(obj["standalone_cost"]),
                    payoff=float(obj["payoff"]),
                )
            )
    else:
        if lines[0] != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {lines[0]!r}")
        for line in lines[1:]:
            pid, pv, es, cost, payoff = line.split(",")
            rows.append(
                PlayerRow(
                    prosumer_id=int(pid),
                    owns_pv=pv == "true",
                    owns_es=es == "true",
                    standalone_cost=float(cost),
                    payoff=float(payoff),
                )
            )

    sidecar = path.with_name(path.name + ".summary.json")
    summary = {}
    if sidecar.exists():
        summary = json.loads(sidecar.read_text())
    payoff_total = float(np.sum([r.payoff for r in rows]))
    return RunReport(
        rows=tuple(rows),
        v_grand=float(summary.get("v_grand", payoff_total)),
        efficiency_residual=float(summary.get("efficiency_residual", 0.0)),
        mode=str(summary.get("mode", "unknown")),
        seed=summary.get("seed"),
        samples_per_player=summary.get("samples_per_player"),
        budget_samples=summary.get("budget_samples"),
        elapsed_seconds=float(summary.get("elapsed_seconds", 0.0)),
        lp_solves=int(summary.get("lp_solves", 0)),
        cache_hit_rate=float(summary.get("cache_hit_rate", 0.0)),
    )
