"""Small feedforward networks trained by Levenberg-Marquardt or momentum GD.

Parameters are flattened layer by layer, each layer contributing its weight
matrix (shape ``(out, in)``, row-major) followed by its bias vector. All
training is full batch on the sum of squared errors ``SSE = sum (t - y)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import expit

from .errors import DimensionMismatch, Diverged, EmptyInput, LengthMismatch, SingularSystem

TRANSFERS = ("logsig", "tansig", "purelin")


def transfer(kind: str, x):
    if kind == "logsig":
        return expit(x)
    if kind == "tansig":
        return np.tanh(x)
    if kind == "purelin":
        return x * 1.0
    raise ValueError(f"unknown transfer function {kind!r}")


def transfer_derivative(kind: str, x):
    return _slope(kind, transfer(kind, x))


def _slope(kind: str, a):
    # derivative written in terms of the activation value
    if kind == "logsig":
        return a * (1.0 - a)
    if kind == "tansig":
        return 1.0 - a * a
    return np.ones_like(a)


@dataclass(frozen=True)
class LayerSpec:
    size: int
    transfer: str

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("layer size must be >= 1")
        if self.transfer not in TRANSFERS:
            raise ValueError(f"unknown transfer function {self.transfer!r}")


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple[LayerSpec, ...]
    output: LayerSpec = LayerSpec(1, "logsig")

    @classmethod
    def parse(cls, text: str, hidden_transfer: str = "tansig", output_transfer: str = "logsig") -> "Architecture":
        """Build from a dashed size list such as ``"4-15-10-1"``."""
        sizes = [int(s) for s in text.strip().split("-")]
        if len(sizes) < 2:
            raise ValueError(f"architecture needs at least input and output sizes: {text!r}")
        hidden = tuple(LayerSpec(s, hidden_transfer) for s in sizes[1:-1])
        return cls(sizes[0], hidden, LayerSpec(sizes[-1], output_transfer))

    @property
    def layers(self) -> tuple[LayerSpec, ...]:
        return self.hidden + (self.output,)

    @property
    def name(self) -> str:
        return "-".join(str(s) for s in [self.input_dim] + [l.size for l in self.layers])

    @property
    def n_params(self) -> int:
        n, fan_in = 0, self.input_dim
        for layer in self.layers:
            n += layer.size * (fan_in + 1)
            fan_in = layer.size
        return n


@dataclass
class Network:
    arch: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        fan_in = self.arch.input_dim
        for layer, W, b in zip(self.arch.layers, self.weights, self.biases, strict=True):
            if W.shape != (layer.size, fan_in) or b.shape != (layer.size,):
                raise DimensionMismatch(f"layer shapes {W.shape}/{b.shape} do not chain")
            fan_in = layer.size

    @property
    def n_params(self) -> int:
        return self.arch.n_params

    def params(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_params(self, theta: np.ndarray) -> "Network":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise DimensionMismatch(f"expected {self.n_params} parameters, got {theta.shape}")
        weights, biases, pos = [], [], 0
        for W in self.weights:
            out, fan_in = W.shape
            weights.append(theta[pos:pos + out * fan_in].reshape(out, fan_in).copy())
            pos += out * fan_in
            biases.append(theta[pos:pos + out].copy())
            pos += out
        return Network(self.arch, weights, biases)

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.arch.input_dim:
            raise DimensionMismatch(f"inputs must have {self.arch.input_dim} columns, got shape {X.shape}")
        return X

    def activations(self, X: np.ndarray) -> list[np.ndarray]:
        """Layer outputs for a batch, input included as element 0."""
        acts = [self._check(X)]
        for layer, W, b in zip(self.arch.layers, self.weights, self.biases):
            acts.append(transfer(layer.transfer, acts[-1] @ W.T + b))
        return acts

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.activations(X)[-1][:, 0]

    def to_text(self) -> str:
        header = " ".join([self.arch.name] + [l.transfer for l in self.arch.layers])
        lines = [header]
        for W, b in zip(self.weights, self.biases):
            lines.append(" ".join(repr(float(v)) for v in np.concatenate([W.ravel(), b])))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Network":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = lines[0].split()
        sizes = [int(s) for s in head[0].split("-")]
        transfers = head[1:]
        if len(transfers) != len(sizes) - 1:
            raise ValueError("model header must name one transfer per layer")
        arch = Architecture(
            sizes[0],
            tuple(LayerSpec(s, t) for s, t in zip(sizes[1:-1], transfers[:-1])),
            LayerSpec(sizes[-1], transfers[-1]),
        )
        weights, biases, fan_in = [], [], sizes[0]
        for layer, ln in zip(arch.layers, lines[1:], strict=True):
            vals = np.array([float(v) for v in ln.split()])
            if vals.size != layer.size * (fan_in + 1):
                raise DimensionMismatch(f"layer line has {vals.size} values")
            weights.append(vals[: layer.size * fan_in].reshape(layer.size, fan_in))
            biases.append(vals[layer.size * fan_in:])
            fan_in = layer.size
        return cls(arch, weights, biases)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Network":
        return cls.from_text(Path(path).read_text())


def init(arch: Architecture, seed: int) -> Network:
    """Weights and biases uniform on [-0.5, 0.5]."""
    rng = np.random.default_rng(seed)
    weights, biases, fan_in = [], [], arch.input_dim
    for layer in arch.layers:
        weights.append(rng.uniform(-0.5, 0.5, size=(layer.size, fan_in)))
        biases.append(rng.uniform(-0.5, 0.5, size=layer.size))
        fan_in = layer.size
    return Network(arch, weights, biases)


def forward(net: Network, x: Sequence[float]) -> tuple[float, list[np.ndarray]]:
    """Output for a single input vector plus the per-layer activations."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.arch.input_dim,):
        raise DimensionMismatch(f"input must be a {net.arch.input_dim}-vector, got shape {x.shape}")
    acts = net.activations(x)
    return float(acts[-1][0, 0]), [a[0] for a in acts]


def _targets(net: Network, X, T) -> tuple[np.ndarray, np.ndarray]:
    X = net._check(X)
    T = np.asarray(T, dtype=float).reshape(-1)
    if len(X) == 0:
        raise EmptyInput("empty batch")
    if len(T) != len(X):
        raise DimensionMismatch(f"{len(X)} inputs but {len(T)} targets")
    return X, T


def errors(net: Network, X, T) -> np.ndarray:
    X, T = _targets(net, X, T)
    return T - net.predict(X)


def sse(net: Network, X, T) -> float:
    e = errors(net, X, T)
    return float(e @ e)


def gradient(net: Network, X, T) -> np.ndarray:
    """Backpropagated gradient of the SSE with respect to all parameters."""
    X, T = _targets(net, X, T)
    acts = net.activations(X)
    layers = net.arch.layers
    e = T - acts[-1][:, 0]
    delta = (-2.0 * e)[:, None] * _slope(layers[-1].transfer, acts[-1])
    grads: list[np.ndarray] = []
    for l in range(len(layers) - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append((delta.T @ acts[l]).ravel())
        if l > 0:
            delta = (delta @ net.weights[l]) * _slope(layers[l - 1].transfer, acts[l])
    return np.concatenate(grads[::-1])


def jacobian(net: Network, X, T=None) -> np.ndarray:
    """Per-sample derivatives of the error ``e_i = t_i - y_i``.

    Row i, column j holds d e_i / d theta_j, so ``gradient = 2 J^T e``.
    Targets do not enter the derivative and may be omitted.
    """
    X = net._check(X)
    if len(X) == 0:
        raise EmptyInput("empty batch")
    acts = net.activations(X)
    layers = net.arch.layers
    n = len(X)
    D = _slope(layers[-1].transfer, acts[-1])
    blocks: list[np.ndarray] = []
    for l in range(len(layers) - 1, -1, -1):
        blocks.append(D)
        blocks.append((D[:, :, None] * acts[l][:, None, :]).reshape(n, -1))
        if l > 0:
            D = (D @ net.weights[l]) * _slope(layers[l - 1].transfer, acts[l])
    return -np.concatenate(blocks[::-1], axis=1)


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str = "lm"
    max_epochs: int = 20
    goal_rmse: float = 0.0
    mu0: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.algorithm not in ("lm", "gdm"):
            raise ValueError(f"algorithm must be lm or gdm, got {self.algorithm!r}")
        if not (self.mu0 > 0 and self.mu_inc > 1 and 0 < self.mu_dec < 1):
            raise ValueError("need mu0 > 0, mu_inc > 1, 0 < mu_dec < 1")
        if not (self.learning_rate > 0 and 0 <= self.momentum < 1):
            raise ValueError("need learning_rate > 0 and 0 <= momentum < 1")
        if self.max_epochs < 0 or self.goal_rmse < 0:
            raise ValueError("max_epochs and goal_rmse must be non-negative")


@dataclass
class TrainReport:
    rmse: list[float] = field(default_factory=list)
    stop_reason: str = "max_epochs"
    initial_rmse: float = float("nan")
    mu: list[float] = field(default_factory=list)

    @property
    def final_epoch(self) -> int:
        return len(self.rmse)

    @property
    def final_rmse(self) -> float:
        return self.rmse[-1] if self.rmse else self.initial_rmse

    def epochs_to(self, target: float) -> Optional[int]:
        """First epoch whose RMSE is at or below ``target`` (0 = already there)."""
        if self.initial_rmse <= target:
            return 0
        for i, r in enumerate(self.rmse, start=1):
            if r <= target:
                return i
        return None


def lm_step(J: np.ndarray, e: np.ndarray, mu: float) -> np.ndarray:
    """Damped Gauss-Newton step for the error Jacobian ``J``.

    Solves ``(J^T J + mu I) d = -J^T e`` by Cholesky.
    """
    A = J.T @ J
    A[np.diag_indices_from(A)] += mu
    return -cho_solve(cho_factor(A), J.T @ e)


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    cfg: TrainConfig,
) -> tuple[np.ndarray, TrainReport]:
    """Minimise ``||residual(theta)||^2``; ``jac`` is d residual / d theta."""
    theta = np.asarray(theta, dtype=float).copy()
    e = residual(theta)
    cost = float(e @ e)
    n = len(e)
    report = TrainReport(initial_rmse=math.sqrt(cost / n))
    if report.initial_rmse <= cfg.goal_rmse:
        report.stop_reason = "goal"
        return theta, report
    mu = cfg.mu0
    while report.final_epoch < cfg.max_epochs:
        J = jac(theta)
        accepted = False
        while mu <= cfg.mu_max:
            try:
                step = lm_step(J, e, mu)
            except (LinAlgError, ValueError):
                mu *= cfg.mu_inc
                if mu > cfg.mu_max:
                    raise SingularSystem("normal equations stayed singular up to mu_max") from None
                continue
            cand = theta + step
            e_new = residual(cand)
            cost_new = float(e_new @ e_new)
            if cost_new < cost:
                theta, e, cost = cand, e_new, cost_new
                mu = max(mu * cfg.mu_dec, np.finfo(float).tiny)
                accepted = True
                break
            mu *= cfg.mu_inc
        if not accepted:
            report.stop_reason = "mu_overflow"
            return theta, report
        report.rmse.append(math.sqrt(cost / n))
        report.mu.append(mu)
        if report.rmse[-1] <= cfg.goal_rmse:
            report.stop_reason = "goal"
            return theta, report
    report.stop_reason = "max_epochs"
    return theta, report


def gradient_descent_momentum(
    residual: Callable[[np.ndarray], np.ndarray],
    grad: Callable[[np.ndarray], np.ndarray],
    theta: np.ndarray,
    cfg: TrainConfig,
) -> tuple[np.ndarray, TrainReport]:
    """Full-batch updates ``v <- momentum v - lr grad``, ``theta <- theta + v``."""
    theta = np.asarray(theta, dtype=float).copy()
    e = residual(theta)
    n = len(e)
    report = TrainReport(initial_rmse=math.sqrt(float(e @ e) / n))
    if report.initial_rmse <= cfg.goal_rmse:
        report.stop_reason = "goal"
        return theta, report
    velocity = np.zeros_like(theta)
    while report.final_epoch < cfg.max_epochs:
        velocity = cfg.momentum * velocity - cfg.learning_rate * grad(theta)
        theta = theta + velocity
        e = residual(theta)
        r = math.sqrt(float(e @ e) / n)
        if not math.isfinite(r) or r > 10.0 * report.initial_rmse:
            raise Diverged(f"RMSE {r:.4g} exceeds 10x its initial value {report.initial_rmse:.4g}")
        report.rmse.append(r)
        if r <= cfg.goal_rmse:
            report.stop_reason = "goal"
            return theta, report
    report.stop_reason = "max_epochs"
    return theta, report


def train_lm(net: Network, X, T, cfg: TrainConfig) -> tuple[Network, TrainReport]:
    X, T = _targets(net, X, T)
    theta, report = levenberg_marquardt(
        lambda th: errors(net.with_params(th), X, T),
        lambda th: jacobian(net.with_params(th), X),
        net.params(),
        cfg,
    )
    return net.with_params(theta), report


def train_gdm(net: Network, X, T, cfg: TrainConfig) -> tuple[Network, TrainReport]:
    X, T = _targets(net, X, T)
    theta, report = gradient_descent_momentum(
        lambda th: errors(net.with_params(th), X, T),
        lambda th: gradient(net.with_params(th), X, T),
        net.params(),
        cfg,
    )
    return net.with_params(theta), report


def train(net: Network, X, T, cfg: TrainConfig) -> tuple[Network, TrainReport]:
    return (train_lm if cfg.algorithm == "lm" else train_gdm)(net, X, T, cfg)


# -- metrics ----------------------------------------------------------------


def _pair(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if len(p) != len(t):
        raise LengthMismatch(f"{len(p)} predictions vs {len(t)} targets")
    if len(p) == 0:
        raise EmptyInput("no predictions")
    return p, t


def rmse(preds, targets) -> float:
    p, t = _pair(preds, targets)
    return math.sqrt(float(np.mean((t - p) ** 2)))


def mae(preds, targets) -> float:
    p, t = _pair(preds, targets)
    return float(np.mean(np.abs(t - p)))


def r_squared(preds, targets) -> float:
    """Coefficient of determination; NaN when every target is equal."""
    p, t = _pair(preds, targets)
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot
