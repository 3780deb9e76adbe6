"""Scenario configuration, strict YAML (de)serialization and `build_network`."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .network import Link, Movement, Network, NetworkError, Node, Phase

CONTROLLER_NAMES = ("cmp", "qmp", "ttmp", "pwbp", "smoothing", "scats_l", "fixed")


class ConfigError(ValueError):
    """Raised for malformed scenario files or out-of-range parameters."""


@dataclass(frozen=True)
class NetworkSpec:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    movements: tuple[Movement, ...]
    phases: tuple[Phase, ...]


@dataclass(frozen=True)
class DemandSpec:
    """Entry rates in veh/hr keyed by entry link, and the end-to-end share per direction."""

    rates: Mapping[str, float] = field(default_factory=dict)
    end_to_end_fraction: Mapping[str, float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.rates.values())

    def scaled(self, factor: float) -> "DemandSpec":
        return DemandSpec({k: v * factor for k, v in self.rates.items()}, dict(self.end_to_end_fraction))


@dataclass(frozen=True)
class ControllerSpec:
    name: str = "qmp"
    params: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class RunSpec:
    """Timing and bookkeeping for one run. Times in seconds."""

    delta_t: float = 6.0
    dt: float = 0.5
    horizon: float = 3600.0
    warmup: float = 430.0
    warmup_plan: tuple[float, ...] = (42.0, 6.0, 12.0, 6.0)
    lost_time: float = 2.0
    seed: int = 0
    detection_length: float | None = None
    record_trajectories: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    network: NetworkSpec
    demand: DemandSpec = field(default_factory=DemandSpec)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    run: RunSpec = field(default_factory=RunSpec)

    def replace(self, **sections) -> "ScenarioConfig":
        return dataclasses.replace(self, **sections)

    def with_controller(self, name: str, **params) -> "ScenarioConfig":
        return dataclasses.replace(self, controller=ControllerSpec(name, dict(params)))

    def with_run(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **changes))

    def with_demand_multiplier(self, factor: float) -> "ScenarioConfig":
        return dataclasses.replace(self, demand=self.demand.scaled(factor))

    def scenario_hash(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


# -- validation ------------------------------------------------------------


def validate_controller(spec: ControllerSpec, network: Network) -> None:
    if spec.name not in CONTROLLER_NAMES:
        raise ConfigError(f"unknown controller {spec.name!r}; expected one of {CONTROLLER_NAMES}")
    if spec.name == "cmp":
        unknown = set(spec.params) - {"alpha", "beta"}
        if unknown:
            raise ConfigError(f"cmp: unknown parameters {sorted(unknown)}")
        alpha = float(spec.params.get("alpha", 0.0))
        beta = float(spec.params.get("beta", 0.0))
        if not 0.0 <= alpha <= 1.0:
            raise ConfigError(f"alpha {alpha} outside [0, 1]")
        bound = network.beta_bound
        if not 0.0 <= beta <= bound + 1e-12:
            raise ConfigError(f"beta {beta} exceeds k_j/k_c - 1 = {bound:g}")


def build_network(config: ScenarioConfig) -> Network:
    """Validate the whole scenario and return its immutable `Network`."""
    spec = config.network
    network = Network.from_parts(spec.nodes, spec.links, spec.movements, spec.phases)
    for lid, rate in config.demand.rates.items():
        if lid not in network.links:
            raise ConfigError(f"demand references unknown link {lid!r}")
        if not network.links[lid].is_entry:
            raise ConfigError(f"demand link {lid!r} is not an entry link")
        if rate < 0:
            raise ConfigError(f"negative demand on {lid!r}")
    for direction, frac in config.demand.end_to_end_fraction.items():
        if not 0.0 <= frac <= 1.0:
            raise ConfigError(f"end-to-end fraction for {direction} outside [0, 1]")
    validate_controller(config.controller, network)
    run = config.run
    if not run.delta_t > 0 or not run.dt > 0:
        raise ConfigError("delta_t and dt must be positive")
    steps = run.delta_t / run.dt
    if abs(steps - round(steps)) > 1e-9:
        raise ConfigError(f"dt={run.dt} does not divide delta_t={run.delta_t}")
    if not run.horizon > run.warmup >= 0:
        raise ConfigError("need horizon > warmup >= 0")
    if run.lost_time < 0:
        raise ConfigError("lost_time must be >= 0")
    if run.warmup > 0 and (not run.warmup_plan or min(run.warmup_plan) <= 0):
        raise ConfigError("warmup plan needs positive phase durations")
    return network


# -- serialization -----------------------------------------------------------

_SECTIONS = {"network", "demand", "controller", "run"}


def to_dict(config: ScenarioConfig) -> dict:
    net = config.network
    return {
        "network": {
            "nodes": [
                {"id": n.id, "conflicts": [list(p) for p in n.conflicts]} for n in net.nodes
            ],
            "links": [_plain(dataclasses.asdict(l)) for l in net.links],
            "movements": [_plain(dataclasses.asdict(m)) for m in net.movements],
            "phases": [
                {"node": p.node, "index": p.index, "movements": list(p.movements), "name": p.name}
                for p in net.phases
            ],
        },
        "demand": {
            "rates": dict(config.demand.rates),
            "end_to_end_fraction": dict(config.demand.end_to_end_fraction),
        },
        "controller": {"name": config.controller.name, "params": dict(config.controller.params)},
        "run": _plain(dataclasses.asdict(config.run)),
    }


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _strict(cls, data: Mapping, where: str, **convert):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = convert[key](value) if key in convert else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_dict(data: Mapping) -> ScenarioConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("scenario document must be a mapping")
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")
    if "network" not in data:
        raise ConfigError("missing 'network' section")
    net = data["network"]
    if not isinstance(net, Mapping) or set(net) - {"nodes", "links", "movements", "phases"}:
        raise ConfigError(f"network: unknown keys {sorted(set(net) - {'nodes', 'links', 'movements', 'phases'})}")
    pairs = lambda v: tuple(tuple(p) for p in v)  # noqa: E731
    try:
        spec = NetworkSpec(
            nodes=tuple(_strict(Node, n, "node", conflicts=pairs) for n in net.get("nodes", [])),
            links=tuple(_strict(Link, l, "link") for l in net.get("links", [])),
            movements=tuple(_strict(Movement, m, "movement") for m in net.get("movements", [])),
            phases=tuple(_strict(Phase, p, "phase", movements=tuple) for p in net.get("phases", [])),
        )
    except NetworkError as exc:
        raise ConfigError(str(exc)) from None
    demand = _strict(DemandSpec, data.get("demand", {}), "demand", rates=dict, end_to_end_fraction=dict)
    controller = _strict(ControllerSpec, data.get("controller", {}), "controller", params=dict)
    run = _strict(RunSpec, data.get("run", {}), "run", warmup_plan=lambda v: tuple(float(x) for x in v))
    return ScenarioConfig(spec, demand, controller, run)


def dumps(config: ScenarioConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False, default_flow_style=None, width=100)


def loads(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable scenario file: {exc}") from None
    return from_dict(data)


def save(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(config))


def load(path: str | Path) -> ScenarioConfig:
    return loads(Path(path).read_text())
