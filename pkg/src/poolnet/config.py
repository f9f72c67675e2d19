"""Run configuration: one JSON document with per-module sections.

Unknown keys are rejected; loading constructs the domain objects so module
invariants are validated up front. Re-emitting a loaded config is idempotent.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .core import RewardParams
from .errors import ConfigError
from .geo import Point, ZoneGrid
from .learner import LearnerConfig
from .routing import GridRouter
from .sim import SimConfig, WorldBuilder, load_orders
from .transit import Timetable, build_graph


@dataclass
class CitySection:
    grid: str = "city/grid.json"
    timetable: str = "city/timetable.csv"
    orders: str = "city/orders.csv"
    demand: str | None = None  # city spec json, used by gen-orders
    time_origin_min: float = 0.0


@dataclass
class FleetSection:
    n_vehicles: int = 50
    capacity: int = 3
    speed_kmh: float = 20.0


@dataclass
class RewardSection:
    beta0: float = 100.0
    beta1: float = 40.0
    beta2: float = 5.0
    beta3: float = 0.0
    beta4: float = 10.0
    kappa_min: float = 15.0


@dataclass
class MatchingSection:
    r_match_km: float = 1.2
    wait_tolerance_min: float = 5.0
    k_transit: int | None = 5


@dataclass
class NeuralSection:
    hidden: list[int] = field(default_factory=lambda: [128, 128, 128, 128])
    dtype: str = "float32"


@dataclass
class LearnerSection:
    gamma: float = 0.99
    c_offline: float = 1.0
    c_online: float = 0.1
    alpha_c: float = 0.002
    alpha_g: float = 0.005
    rho: float = 0.005
    batch_m: int = 1024
    eps0: float = 0.1
    eps_decay: float = 0.995
    eps_floor: float = 0.005
    r_hat: float = 100.0
    q_bar: float = 1e6
    memory_capacity: int = 10_000
    learn_start: int | None = None
    offline_steps: int = 20_000
    guider_online: bool = True


@dataclass
class ExperimentSection:
    mode: str = "pwt_rgcql"
    episodes: int = 10
    seed: int = 0
    out_dir: str = "runs/out"
    horizon_min: float = 60.0
    dt_min: float = 1.0
    p_pool: float = 0.0
    demand_subsample: float = 0.95
    log_rounds: bool = False


_SECTIONS = {
    "city": CitySection,
    "fleet": FleetSection,
    "reward": RewardSection,
    "matching": MatchingSection,
    "neural": NeuralSection,
    "learner": LearnerSection,
    "experiment": ExperimentSection,
}


@dataclass
class RunConfig:
    city: CitySection = field(default_factory=CitySection)
    fleet: FleetSection = field(default_factory=FleetSection)
    reward: RewardSection = field(default_factory=RewardSection)
    matching: MatchingSection = field(default_factory=MatchingSection)
    neural: NeuralSection = field(default_factory=NeuralSection)
    learner: LearnerSection = field(default_factory=LearnerSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, section_cls in _SECTIONS.items():
            payload = data.get(name, {})
            if not isinstance(payload, dict):
                raise ConfigError(f"section {name!r} must be an object")
            known = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(payload) - known
            if bad:
                raise ConfigError(f"unknown keys in section {name!r}: {sorted(bad)}")
            kwargs[name] = section_cls(**payload)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}

    def to_json(self, path: str | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def validate(self) -> None:
        self.reward_params()  # RewardParams invariants
        self.learner_config()  # LearnerConfig invariants
        if self.neural.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.neural.dtype!r}")

    def reward_params(self) -> RewardParams:
        r = self.reward
        return RewardParams(r.beta0, r.beta1, r.beta2, r.beta3, r.beta4, r.kappa_min)

    def learner_config(self) -> LearnerConfig:
        ls = self.learner
        return LearnerConfig(
            gamma=ls.gamma,
            c_offline=ls.c_offline,
            c_online=ls.c_online,
            alpha_c=ls.alpha_c,
            alpha_g=ls.alpha_g,
            rho=ls.rho,
            batch_m=ls.batch_m,
            eps0=ls.eps0,
            eps_decay=ls.eps_decay,
            eps_floor=ls.eps_floor,
            r_hat=ls.r_hat,
            q_bar=ls.q_bar,
            memory_capacity=ls.memory_capacity,
            learn_start=ls.learn_start,
            offline_steps=ls.offline_steps,
            guider_online=ls.guider_online,
            hidden=list(self.neural.hidden),
        )

    def sim_config(self) -> SimConfig:
        e = self.experiment
        return SimConfig(
            horizon_min=e.horizon_min,
            dt_min=e.dt_min,
            n_vehicles=self.fleet.n_vehicles,
            capacity=self.fleet.capacity,
            r_match_km=self.matching.r_match_km,
            wait_tolerance_min=self.matching.wait_tolerance_min,
            reward=self.reward_params(),
            p_pool=e.p_pool,
            demand_subsample=e.demand_subsample,
            k_transit=self.matching.k_transit,
            log_rounds=e.log_rounds,
        )


def grid_to_json(grid: ZoneGrid, path: str) -> None:
    payload = {
        "origin_lat": grid.origin.lat,
        "origin_lon": grid.origin.lon,
        "rows": grid.rows,
        "cols": grid.cols,
        "cell_size_m": grid.cell_size_m,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def grid_from_json(path: str) -> ZoneGrid:
    with open(path) as fh:
        data = json.load(fh)
    known = {"origin_lat", "origin_lon", "rows", "cols", "cell_size_m"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{path}: unknown grid keys {sorted(unknown)}")
    try:
        return ZoneGrid(
            origin=Point(data["origin_lat"], data["origin_lon"]),
            rows=data["rows"],
            cols=data["cols"],
            cell_size_m=data.get("cell_size_m", 800.0),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing grid key {exc}") from exc


def build_runtime(cfg: RunConfig) -> WorldBuilder:
    """Materialize the world builder described by a run config."""
    grid = grid_from_json(cfg.city.grid)
    timetable = Timetable.from_csv(cfg.city.timetable, grid)
    tgraph = build_graph(timetable)
    provider = GridRouter(cfg.fleet.speed_kmh)
    orders = load_orders(
        cfg.city.orders,
        grid,
        time_origin_min=cfg.city.time_origin_min,
        road_kmh=cfg.fleet.speed_kmh,
        deadline_slack_min=cfg.reward.kappa_min,
    )
    return WorldBuilder(
        grid=grid,
        tgraph=tgraph,
        provider=provider,
        orders=orders,
        config=cfg.sim_config(),
        seed=cfg.experiment.seed,
    )
