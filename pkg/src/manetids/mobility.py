"""Random waypoint mobility.

A node pauses, draws a waypoint uniformly over the area and a speed on
``(min_speed, max_speed]``, travels there in a straight line, pauses again,
and so on. Every function here is a pure value transformation; randomness
comes only from the ``numpy.random.Generator`` passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigInvalid


@dataclass(frozen=True)
class Bounds:
    width: float = 500.0
    height: float = 500.0

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ConfigInvalid(f"bounds must be positive, got {self.width}x{self.height}")

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x <= self.width and 0.0 <= y <= self.height


@dataclass(frozen=True)
class RwpParams:
    min_speed: float = 0.0
    max_speed: float = 20.0
    pause_time: float = 2.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.min_speed < self.max_speed):
            raise ConfigInvalid(
                f"speeds must satisfy 0 <= min_speed < max_speed, got ({self.min_speed}, {self.max_speed})"
            )
        if self.pause_time < 0:
            raise ConfigInvalid(f"pause_time must be >= 0, got {self.pause_time}")


@dataclass(frozen=True)
class MotionState:
    """Kinematic state of one node at simulation time ``time``.

    ``paused_until`` is ``None`` while the node is moving toward
    ``(wx, wy)``; otherwise it is the time the current pause ends
    (``math.inf`` for a node that never moves).
    """

    x: float
    y: float
    wx: float
    wy: float
    speed: float
    time: float
    paused_until: float | None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def waypoint(self) -> tuple[float, float]:
        return (self.wx, self.wy)

    @property
    def moving(self) -> bool:
        return self.paused_until is None


def node_rng(seed: int, node_id: int) -> np.random.Generator:
    """Independent stream for one node, derived from the scenario seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**63 - 1), int(node_id)]))


def initial_state(
    bounds: Bounds, params: RwpParams, rng: np.random.Generator, start: float = 0.0
) -> MotionState:
    x = rng.uniform(0.0, bounds.width)
    y = rng.uniform(0.0, bounds.height)
    return MotionState(x, y, x, y, 0.0, start, start + params.pause_time)


def static_state(x: float, y: float, start: float = 0.0) -> MotionState:
    return MotionState(x, y, x, y, 0.0, start, math.inf)


def sample_next_leg(
    state: MotionState, params: RwpParams, bounds: Bounds, rng: np.random.Generator
) -> MotionState:
    if state.paused_until is not None and state.paused_until > state.time:
        raise ValueError("pause has not expired")
    wx = rng.uniform(0.0, bounds.width)
    wy = rng.uniform(0.0, bounds.height)
    # random() is on [0, 1), so this lands on (min_speed, max_speed]
    speed = params.max_speed - (params.max_speed - params.min_speed) * rng.random()
    return replace(state, wx=wx, wy=wy, speed=speed, paused_until=None)


def _remaining(state: MotionState) -> float:
    return math.hypot(state.wx - state.x, state.wy - state.y)


def _arrive(state: MotionState, params: RwpParams) -> MotionState:
    arrival = state.time + _remaining(state) / state.speed
    return replace(
        state, x=state.wx, y=state.wy, time=arrival, paused_until=arrival + params.pause_time
    )


def advance(state: MotionState, params: RwpParams, dt: float) -> MotionState:
    """Move ``state`` forward by ``dt`` seconds within its current leg.

    A paused node stays put even past the end of its pause; drawing the
    next leg needs a random stream and is left to :func:`step`.
    On arrival the node is clamped to the waypoint and its pause starts
    at the arrival instant, so the clock reads ``state.time + dt`` while
    ``paused_until`` counts from the arrival time.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    end = state.time + dt
    if state.paused_until is not None:
        return replace(state, time=end)
    remaining = _remaining(state)
    travel = state.speed * dt
    if travel >= remaining:
        return replace(_arrive(state, params), time=end)
    frac = travel / remaining
    return replace(
        state,
        x=state.x + (state.wx - state.x) * frac,
        y=state.y + (state.wy - state.y) * frac,
        time=end,
    )


def step(
    state: MotionState,
    params: RwpParams,
    bounds: Bounds,
    rng: np.random.Generator,
    dt: float,
) -> MotionState:
    """Advance across as many pause/leg boundaries as ``dt`` spans."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    end = state.time + dt
    while True:
        if state.paused_until is not None:
            if state.paused_until > end:
                return replace(state, time=end)
            state = sample_next_leg(replace(state, time=state.paused_until), params, bounds, rng)
            continue
        arrival = state.time + _remaining(state) / state.speed
        if arrival > end:
            return advance(state, params, end - state.time)
        state = _arrive(state, params)


def position_at(
    initial: MotionState,
    params: RwpParams,
    bounds: Bounds,
    rng: np.random.Generator,
    t: float,
) -> tuple[float, float]:
    """Position at absolute time ``t``; consumes draws from ``rng``."""
    if t < initial.time:
        raise ValueError(f"t must be >= {initial.time}, got {t}")
    return step(initial, params, bounds, rng, t - initial.time).position
