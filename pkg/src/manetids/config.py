"""Line-oriented ``key = value`` configuration files.

Blank lines and ``#`` comments are ignored. Scenario keys follow the usual
simulation-parameter names (``nodes``, ``area_x``, ``max_speed``, ...);
experiment keys add the learning setup. ``flow = src dst start stop [rate]``
may repeat to pin connections explicitly; otherwise ``connections`` random
flows are drawn per seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import ConfigInvalid, IoFailure
from .mobility import Bounds, RwpParams
from .netsim import AttackerSpec, CbrFlow, DosFlood, EnergyModel, PacketDropper, ScenarioConfig, generate_flows
from .neuralnet import Architecture, TrainConfig


def _bool(v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(t) for t in v.replace(",", " ").split())


def _words(v: str) -> tuple[str, ...]:
    return tuple(t for t in v.replace(",", " ").split())


@dataclass(frozen=True)
class ScenarioSpec:
    """Scenario settings before seed-dependent pieces (flows) are drawn."""

    nodes: int = 15
    area_x: float = 500.0
    area_y: float = 500.0
    duration: float = 200.0
    min_speed: float = 0.0
    max_speed: float = 20.0
    pause_time: float = 2.0
    radio_range: float = 250.0
    packet_size: int = 512
    connections: int = 10
    cbr_rate: float = 4.0
    flow_duration: float = 50.0
    flow: tuple[tuple[float, ...], ...] = ()
    attack: str = "dos"
    attacker_node: int = -1
    attack_start: float = 50.0
    attack_stop: float = 150.0
    flood_rate: float = 20.0
    target_addr: int = -1
    initial_energy: float = 100.0
    tx_cost: float = 0.002
    rx_cost: float = 0.001
    track_energy: bool = True
    paper_mode: bool = True
    mobile: bool = True
    per_hop_latency: float = 0.002
    mobility_tick: float = 0.1
    queue_capacity: int = 64
    level_tag: str = "Nl"
    seed: int = 1

    def attacker(self) -> int:
        return self.nodes - 1 if self.attacker_node < 0 else self.attacker_node

    def build(self, seed: Optional[int] = None, connections: Optional[int] = None) -> ScenarioConfig:
        """A validated scenario; random flows depend on ``seed`` and ``connections``."""
        seed = self.seed if seed is None else seed
        count = self.connections if connections is None else connections
        attackers: tuple[AttackerSpec, ...] = ()
        if self.attack == "dos":
            target = self.nodes if self.target_addr < 0 else self.target_addr
            attackers = (AttackerSpec(self.attacker(), DosFlood(target, self.flood_rate, self.attack_start, self.attack_stop)),)
        elif self.attack == "dropper":
            attackers = (AttackerSpec(self.attacker(), PacketDropper(self.attack_start, self.attack_stop)),)
        elif self.attack != "none":
            raise ConfigInvalid(f"attack must be dos, dropper or none, got {self.attack!r}")
        if self.flow:
            flows = tuple(
                CbrFlow(int(f[0]), int(f[1]), f[4] if len(f) > 4 else self.cbr_rate, f[2], f[3]) for f in self.flow
            )
        else:
            flows = generate_flows(
                self.nodes, count, seed,
                exclude=[a.node for a in attackers if 0 <= a.node < self.nodes],
                rate=self.cbr_rate, duration=self.duration, flow_duration=self.flow_duration,
            )
        try:
            cfg = ScenarioConfig(
                node_count=self.nodes,
                bounds=Bounds(self.area_x, self.area_y),
                duration=self.duration,
                rwp=RwpParams(self.min_speed, self.max_speed, self.pause_time),
                radio_range=self.radio_range,
                packet_size=self.packet_size,
                flows=flows,
                attackers=attackers,
                energy=EnergyModel(self.initial_energy, self.tx_cost, self.rx_cost),
                seed=seed,
                paper_mode=self.paper_mode,
                per_hop_latency=self.per_hop_latency,
                mobility_tick=self.mobility_tick,
                queue_capacity=self.queue_capacity,
                track_energy=self.track_energy,
                level_tag=self.level_tag,
                mobile=self.mobile,
            )
        except ValueError as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(str(exc)) from None
        return cfg.validate()


@dataclass(frozen=True)
class ExperimentSpec:
    scenario: ScenarioSpec = ScenarioSpec()
    window: float = 10.0
    split_ratio: float = 0.65
    architectures: tuple[str, ...] = ("4-15-10-1", "4-20-10-1")
    transfers: tuple[str, ...] = ("logsig", "tansig")
    output_transfer: str = "logsig"
    train: TrainConfig = TrainConfig()
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    connection_counts: tuple[int, ...] = (2, 5, 10)
    eval_runs: int = 3
    threshold: float = 0.5
    traces: str = "gzip"
    workers: int = 0

    def __post_init__(self) -> None:
        if not (self.architectures and self.transfers and self.seeds and self.connection_counts):
            raise ConfigInvalid("architectures, transfers, seeds and connection_counts must be non-empty")
        for a in self.architectures:
            try:
                arch = Architecture.parse(a, "tansig", self.output_transfer)
            except ValueError as exc:
                raise ConfigInvalid(f"bad architecture {a!r}: {exc}") from None
            if arch.input_dim != 4 or arch.output.size != 1:
                raise ConfigInvalid(f"architecture {a!r} must take 4 inputs and give 1 output")
            if self.scenario.paper_mode and len(arch.hidden) != 2:
                raise ConfigInvalid(f"architecture {a!r}: two hidden layers required in paper mode")
        if not self.window > 0:
            raise ConfigInvalid("window > 0 violated")
        if not 0 < self.split_ratio < 1:
            raise ConfigInvalid("0 < split_ratio < 1 violated")
        if not 0 < self.threshold < 1:
            raise ConfigInvalid("0 < threshold < 1 violated")
        if self.traces not in ("none", "plain", "gzip"):
            raise ConfigInvalid("traces must be none, plain or gzip")
        if self.eval_runs < 1:
            raise ConfigInvalid("eval_runs >= 1 violated")


_SCENARIO_TYPES = {f.name: f.type for f in fields(ScenarioSpec)}
_TRAIN_KEYS = {
    "algorithm": str, "max_epochs": int, "goal_rmse": float, "mu0": float, "mu_inc": float,
    "mu_dec": float, "mu_max": float, "learning_rate": float, "momentum": float,
}
_EXPERIMENT_KEYS = {
    "window": float, "split_ratio": float, "architectures": _words, "transfers": _words,
    "output_transfer": str, "seeds": _ints, "connection_counts": _ints, "eval_runs": int,
    "threshold": float, "traces": str, "workers": int,
}
_CONVERTERS = {"int": int, "float": float, "bool": _bool, "str": str}


def parse_pairs(text: str, source: str = "<config>") -> list[tuple[str, str, int]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigInvalid(f"{source}:{lineno}: empty key")
        pairs.append((key, value, lineno))
    return pairs


def parse_experiment(text: str, source: str = "<config>") -> ExperimentSpec:
    scen: dict = {}
    exp: dict = {}
    train: dict = {}
    flows: list[tuple[float, ...]] = []
    seen: set[str] = set()
    for key, value, lineno in parse_pairs(text, source):
        if key != "flow" and key in seen:
            raise ConfigInvalid(f"{source}:{lineno}: key {key!r} given twice")
        seen.add(key)
        try:
            if key == "flow":
                parts = tuple(float(t) for t in value.split())
                if len(parts) not in (4, 5):
                    raise ValueError("flow needs: src dst start stop [rate]")
                flows.append(parts)
            elif key in _SCENARIO_TYPES:
                scen[key] = _CONVERTERS[_SCENARIO_TYPES[key]](value)
            elif key in _TRAIN_KEYS:
                train[key] = _TRAIN_KEYS[key](value)
            elif key in _EXPERIMENT_KEYS:
                exp[key] = _EXPERIMENT_KEYS[key](value)
            else:
                raise ConfigInvalid(f"{source}:{lineno}: unknown key {key!r}")
        except ConfigInvalid:
            raise
        except ValueError as exc:
            raise ConfigInvalid(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    if flows:
        scen["flow"] = tuple(flows)
    try:
        tc = TrainConfig(**train)
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from None
    return ExperimentSpec(scenario=ScenarioSpec(**scen), train=tc, **exp)


def load_experiment(path: Union[str, Path]) -> ExperimentSpec:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_experiment(text, str(path))


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_render(x) for x in v)
    return str(v)


def render_experiment(spec: ExperimentSpec) -> str:
    """Full ``key = value`` form that :func:`parse_experiment` reads back to ``spec``."""
    lines = []
    for f in fields(ScenarioSpec):
        v = getattr(spec.scenario, f.name)
        if f.name == "flow":
            lines += [f"flow = {' '.join(repr(x) for x in fl)}" for fl in v]
        else:
            lines.append(f"{f.name} = {_render(v)}")
    for key in _TRAIN_KEYS:
        lines.append(f"{key} = {_render(getattr(spec.train, key))}")
    for key in _EXPERIMENT_KEYS:
        lines.append(f"{key} = {_render(getattr(spec, key))}")
    return "\n".join(lines) + "\n"


def spec_hash(spec: ExperimentSpec) -> str:
    return hashlib.sha256(render_experiment(spec).encode()).hexdigest()


def with_overrides(spec: ExperimentSpec, seed: Optional[int] = None, ni_tag: bool = False) -> ExperimentSpec:
    scen = spec.scenario
    if seed is not None:
        scen = replace(scen, seed=seed)
        spec = replace(spec, seeds=(seed,))
    if ni_tag:
        scen = replace(scen, level_tag="NI")
    return replace(spec, scenario=scen)


def derive_seed(*parts: int) -> int:
    """Independent 31-bit seed for a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0] & 0x7FFFFFFF)
