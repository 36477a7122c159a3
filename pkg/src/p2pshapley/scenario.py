"""Scenario ingestion: config files, tariff and prosumer CSVs, and the
synthetic community generator used when no measured profiles are supplied.

Config files are YAML (plain JSON parses too). Every physical invariant —
import price above export price, state-of-charge window containing the
initial state, rates in [0, 1] — is enforced here with a pointed message
and the CLI's exit-code-2 contract.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .game import NO_STORAGE, EnergyGame, Horizon, Prosumer, StorageSpec, TariffSchedule, net_load

MODES = ("exact", "permutation", "stratified", "coalitional-stratified")

# Default two-rate residential tariff (currency/kWh) and household battery.
DEFAULT_NIGHT_PRICE = 0.072
DEFAULT_DAY_PRICE = 0.1681
DEFAULT_SWITCH_HOUR = 7
DEFAULT_EXPORT_PRICE = 0.0485


class ConfigError(Exception):
    """Configuration could not be parsed or validated (CLI exit code 2)."""


@dataclass(frozen=True)
class StorageTemplate:
    """Battery template in power units; converted per-step at build time."""

    capacity_kwh: float = 7.0
    charge_kw: float = 3.5
    discharge_kw: float = 3.2
    eff_in: float = 0.95
    eff_out: float = 0.95
    soc0: float = 0.5
    soc_min: float = 0.2
    soc_max: float = 0.95

    def to_spec(self, dt_hours: float) -> StorageSpec:
        return StorageSpec(
            capacity_kwh=self.capacity_kwh,
            charge_limit_kwh=self.charge_kw * dt_hours,
            discharge_limit_kwh=self.discharge_kw * dt_hours,
            eff_in=self.eff_in,
            eff_out=self.eff_out,
            soc0=self.soc0,
            soc_min=self.soc_min,
            soc_max=self.soc_max,
        )


@dataclass(frozen=True)
class SyntheticSource:
    count: int
    pv_rate: float
    es_rate: float
    seed: int

    def build(self, horizon: Horizon, template: StorageTemplate) -> list[Prosumer]:
        return generate_synthetic_scenario(
            self.seed, self.count, self.pv_rate, self.es_rate, template, horizon
        )


@dataclass(frozen=True)
class FileSource:
    prosumers: tuple[Prosumer, ...]
    ids: tuple[int, ...]  # original file ids, ascending

    def build(self, horizon: Horizon, template: StorageTemplate) -> list[Prosumer]:
        return list(self.prosumers)


@dataclass(frozen=True)
class ScenarioConfig:
    horizon: Horizon
    tariff: TariffSchedule
    source: SyntheticSource | FileSource
    storage_template: StorageTemplate
    mode: str = "coalitional-stratified"
    samples_per_player: int = 1000
    seed: int = 0
    output: str = "report.csv"
    format: str = "csv"
    threads: int = 1
    exact_cap: int = 20

    def prosumer_ids(self) -> list[int]:
        if isinstance(self.source, FileSource):
            return list(self.source.ids)
        return list(range(self.source.count))

    def build_game(self) -> EnergyGame:
        prosumers = self.source.build(self.horizon, self.storage_template)
        return EnergyGame(prosumers, self.tariff, self.horizon)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _day_curve(hours, center, width):
    return np.exp(-(((hours - center) / width) ** 2))


def synthetic_load_kw(rng, hours) -> np.ndarray:
    """Morning and evening household peaks over a flat base, per-prosumer scaled."""
    base = 0.25 * rng.uniform(0.6, 1.5)
    morning = rng.uniform(0.3, 0.9)
    evening = rng.uniform(0.8, 1.7)
    return base + morning * _day_curve(hours, 7.5, 1.3) + evening * _day_curve(hours, 18.5, 2.2)


def synthetic_pv_kw(rng, hours) -> np.ndarray:
    """Midday generation bell for a rooftop array around 4 kW peak."""
    scale = 4.0 * rng.uniform(0.8, 1.25)
    return scale * _day_curve(hours, 12.5, 3.0)


def generate_synthetic_scenario(
    seed: int,
    count: int,
    pv_rate: float,
    es_rate: float,
    template: StorageTemplate,
    horizon: Horizon,
) -> list[Prosumer]:
    """Deterministic community of `count` prosumers.

    Exactly round(count*rate) prosumers own each resource; the two owner
    sets come from independent seeded priority permutations, so raising a
    rate only ever adds owners (sweeps keep a tracked prosumer's type
    stable). Profile draws are made for every prosumer whether or not they
    own the resource, so load shapes are identical across rate settings.
    """
    if not 0.0 <= pv_rate <= 1.0 or not 0.0 <= es_rate <= 1.0:
        raise ValueError("adoption rates must lie in [0, 1]")
    if count < 1:
        raise ValueError("need at least one prosumer")
    rng = np.random.default_rng(seed)
    pv_priority = rng.permutation(count)
    es_priority = rng.permutation(count)
    pv_owners = {int(j) for j in pv_priority[: _round_half_up(count * pv_rate)]}
    es_owners = {int(j) for j in es_priority[: _round_half_up(count * es_rate)]}

    dt = horizon.dt_hours
    hours = ((np.arange(horizon.steps) + 0.5) * dt) % 24.0
    spec = template.to_spec(dt)

    prosumers = []
    for i in range(count):
        load = synthetic_load_kw(rng, hours) * dt
        pv = synthetic_pv_kw(rng, hours) * dt
        owns_pv = i in pv_owners
        prosumers.append(
            Prosumer(
                id=i,
                net_load_kwh=net_load(load, pv if owns_pv else np.zeros_like(pv)),
                storage=spec if i in es_owners else NO_STORAGE,
                owns_pv=owns_pv,
            )
        )
    return prosumers


def economy_tariff(
    horizon: Horizon,
    night_price: float = DEFAULT_NIGHT_PRICE,
    day_price: float = DEFAULT_DAY_PRICE,
    switch_hour: float = DEFAULT_SWITCH_HOUR,
    export_price: float = DEFAULT_EXPORT_PRICE,
) -> TariffSchedule:
    """Two-rate import tariff (cheap before switch_hour) with a flat export rate."""
    hours = (np.arange(horizon.steps) * horizon.dt_hours) % 24.0
    imports = np.where(hours < switch_hour, night_price, day_price)
    exports = np.full(horizon.steps, export_price)
    return TariffSchedule(import_price=imports, export_price=exports)


def read_tariff_csv(path: Path, steps: int) -> TariffSchedule:
    """Tariff file: timestep,import_price,export_price with 0-based steps."""
    imports = np.full(steps, np.nan)
    exports = np.full(steps, np.nan)
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            t = int(row["timestep"])
            if not 0 <= t < steps:
                raise ConfigError(f"{path}: timestep {t} outside horizon of {steps} steps")
            imports[t] = float(row["import_price"])
            exports[t] = float(row["export_price"])
    if np.isnan(imports).any() or np.isnan(exports).any():
        raise ConfigError(f"{path}: tariff must cover every timestep 0..{steps - 1}")
    return TariffSchedule(import_price=imports, export_price=exports)


def read_prosumer_csv(path: Path, steps: int) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Long-format prosumer file: prosumer_id,timestep,load_kwh,pv_kwh."""
    data: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            pid = int(row["prosumer_id"])
            t = int(row["timestep"])
            if not 0 <= t < steps:
                raise ConfigError(f"{path}: timestep {t} outside horizon of {steps} steps")
            load, pv = data.setdefault(pid, (np.full(steps, np.nan), np.full(steps, np.nan)))
            load[t] = float(row["load_kwh"])
            pv[t] = float(row["pv_kwh"])
    if not data:
        raise ConfigError(f"{path}: no prosumer rows found")
    for pid, (load, pv) in data.items():
        if np.isnan(load).any() or np.isnan(pv).any():
            raise ConfigError(f"{path}: prosumer {pid} is missing timesteps")
    return data


def _storage_template_from(block: dict, context: str) -> StorageTemplate:
    allowed = {
        "capacity_kwh", "charge_kw", "discharge_kw", "eff_in", "eff_out",
        "soc0", "soc_min", "soc_max",
    }
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown storage fields {sorted(unknown)}")
    try:
        return StorageTemplate(**{k: float(v) for k, v in block.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    """Parse and fully validate a scenario file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw, base_dir=path.parent)


def config_from_dict(raw: dict, base_dir: Path | None = None) -> ScenarioConfig:
    base_dir = Path(base_dir) if base_dir is not None else Path(".")

    horizon_block = raw.get("horizon", {})
    try:
        horizon = Horizon(
            steps=int(horizon_block.get("steps", 24)),
            dt_hours=float(horizon_block.get("dt_hours", 1.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"horizon: {exc}") from exc

    tariff_block = raw.get("tariff", {})
    try:
        if "file" in tariff_block:
            tariff = read_tariff_csv(base_dir / tariff_block["file"], horizon.steps)
        else:
            tariff = economy_tariff(
                horizon,
                night_price=float(tariff_block.get("night_price", DEFAULT_NIGHT_PRICE)),
                day_price=float(tariff_block.get("day_price", DEFAULT_DAY_PRICE)),
                switch_hour=float(tariff_block.get("switch_hour", DEFAULT_SWITCH_HOUR)),
                export_price=float(tariff_block.get("export_price", DEFAULT_EXPORT_PRICE)),
            )
    except ValueError as exc:
        raise ConfigError(f"tariff: {exc}") from exc

    template = _storage_template_from(raw.get("storage_defaults", {}), "storage_defaults")
    try:
        template.to_spec(horizon.dt_hours)  # surface soc/limit violations at load time
    except ValueError as exc:
        raise ConfigError(f"storage_defaults: {exc}") from exc

    seed = int(raw.get("seed", 0))
    prosumer_block = raw.get("prosumers")
    if not prosumer_block:
        raise ConfigError("config needs a 'prosumers' section (synthetic block or file)")
    try:
        source = _prosumer_source_from(prosumer_block, base_dir, horizon, template, seed)
    except ValueError as exc:
        raise ConfigError(f"prosumers: {exc}") from exc

    mode = str(raw.get("mode", "coalitional-stratified"))
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    fmt = str(raw.get("format", "csv"))
    if fmt not in ("csv", "json-lines"):
        raise ConfigError(f"format must be 'csv' or 'json-lines', got {fmt!r}")
    samples = int(raw.get("samples_per_player", 1000))
    if samples < 1:
        raise ConfigError("samples_per_player must be at least 1")
    threads = int(raw.get("threads", 1))
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    caps = raw.get("caps", {})
    exact_cap = int(caps.get("exact_players", 20))

    return ScenarioConfig(
        horizon=horizon,
        tariff=tariff,
        source=source,
        storage_template=template,
        mode=mode,
        samples_per_player=samples,
        seed=seed,
        output=str(raw.get("output", "report.csv")),
        format=fmt,
        threads=threads,
        exact_cap=exact_cap,
    )


def _prosumer_source_from(block, base_dir, horizon, template, default_seed):
    if "synthetic" in block:
        synth = block["synthetic"]
        source = SyntheticSource(
            count=int(synth["count"]),
            pv_rate=float(synth.get("pv_rate", 0.5)),
            es_rate=float(synth.get("es_rate", 0.5)),
            seed=int(synth.get("seed", default_seed)),
        )
        if not 0.0 <= source.pv_rate <= 1.0 or not 0.0 <= source.es_rate <= 1.0:
            raise ConfigError("adoption rates must lie in [0, 1]")
        if source.count < 1:
            raise ConfigError("synthetic count must be at least 1")
        source.build(horizon, template)  # validate eagerly
        return source

    if "file" not in block:
        raise ConfigError("prosumers section needs either 'synthetic' or 'file'")
    data = read_prosumer_csv(base_dir / block["file"], horizon.steps)
    ids = sorted(data)
    es_owners = {int(x) for x in block.get("es_owners", [])}
    unknown = es_owners - set(ids)
    if unknown:
        raise ConfigError(f"es_owners lists unknown prosumer ids {sorted(unknown)}")
    overrides = block.get("storage_overrides", {})
    prosumers = []
    for index, pid in enumerate(ids):
        load, pv = data[pid]
        if pid in es_owners:
            if pid in overrides or str(pid) in overrides:
                o = overrides.get(pid, overrides.get(str(pid)))
                spec = _storage_template_from(o, f"storage_overrides[{pid}]").to_spec(
                    horizon.dt_hours
                )
            else:
                spec = template.to_spec(horizon.dt_hours)
        else:
            spec = NO_STORAGE
        prosumers.append(
            Prosumer(
                id=index,
                net_load_kwh=net_load(load, pv),
                storage=spec,
                owns_pv=bool(np.any(pv > 0)),
            )
        )
    return FileSource(prosumers=tuple(prosumers), ids=tuple(ids))


def load_sweep(path) -> list[tuple[float, float]]:
    """Sweep spec: explicit (pv_rate, es_rate) points, or one varying axis.

    YAML forms:
      points: [{pv_rate: 0.3, es_rate: 0.1}, ...]
      vary: es_rate / pv_rate / both
      values: [0.1, 0.2, ...]
      fixed: {pv_rate: 0.3}
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read sweep spec {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse sweep spec {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: sweep spec must be a mapping")

    if "points" in raw:
        points = []
        for entry in raw["points"]:
            try:
                points.append((float(entry["pv_rate"]), float(entry["es_rate"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"sweep point {entry!r}: needs pv_rate and es_rate") from exc
    elif "vary" in raw:
        axis = raw["vary"]
        values = [float(v) for v in raw.get("values", [])]
        if not values:
            raise ConfigError("sweep with 'vary' needs a nonempty 'values' list")
        fixed = raw.get("fixed", {})
        if axis == "pv_rate":
            es = float(fixed.get("es_rate", 0.5))
            points = [(v, es) for v in values]
        elif axis == "es_rate":
            pv = float(fixed.get("pv_rate", 0.5))
            points = [(pv, v) for v in values]
        elif axis == "both":
            points = [(v, v) for v in values]
        else:
            raise ConfigError(f"vary must be pv_rate, es_rate or both, got {axis!r}")
    else:
        raise ConfigError("sweep spec needs 'points' or 'vary'")

    for pv, es in points:
        if not 0.0 <= pv <= 1.0 or not 0.0 <= es <= 1.0:
            raise ConfigError(f"sweep rates must lie in [0, 1], got ({pv}, {es})")
    return points


def with_rates(config: ScenarioConfig, pv_rate: float, es_rate: float) -> ScenarioConfig:
    """Copy of a synthetic config at different adoption rates (same seed, so
    owner sets nest and profiles stay identical)."""
    if not isinstance(config.source, SyntheticSource):
        raise ConfigError("adoption sweeps need a synthetic prosumer source")
    return replace(config, source=replace(config.source, pv_rate=pv_rate, es_rate=es_rate))
