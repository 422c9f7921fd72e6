"""Lookahead optimization over pluggable inner optimizers, with analytic
benchmark objectives.

Lookahead keeps slow weights phi; every k inner steps on the fast weights
theta it pulls phi toward theta by alpha and restarts the fast weights at
phi. Inner-optimizer state (Adam moments) persists across syncs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class LookaheadConfig:
    k: int = 5
    alpha: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise InputError(f"k must be >= 1, got {self.k}")
        if not 0.0 < self.alpha <= 1.0:
            raise InputError(f"alpha must be in (0, 1], got {self.alpha}")


def sgd_step(theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise InputError(f"parameter shape {theta.shape} != gradient shape {grad.shape}")
    return theta - lr * grad


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def initial(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(
    state: AdamState,
    theta: np.ndarray,
    grad: np.ndarray,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns the new state and parameters."""
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise InputError(f"parameter shape {theta.shape} != gradient shape {grad.shape}")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new_theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), new_theta


class SGD:
    """Stateless inner optimizer."""

    def __init__(self, lr: float):
        if lr <= 0:
            raise InputError(f"learning rate must be positive, got {lr}")
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return sgd_step(theta, grad, self.lr)

    def config(self) -> dict:
        return {"kind": "sgd", "lr": self.lr}


class Adam:
    """Stateful inner optimizer; moments persist until reset()."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise InputError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise InputError("betas must lie in [0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._state: AdamState | None = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if self._state is None or self._state.m.shape != theta.shape:
            self._state = AdamState(np.zeros_like(theta), np.zeros_like(theta), 0)
        self._state, new_theta = adam_step(
            self._state, theta, grad, self.lr, self.beta1, self.beta2, self.eps
        )
        return new_theta

    def reset(self) -> None:
        self._state = None

    def config(self) -> dict:
        return {
            "kind": "adam",
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }


class Lookahead:
    """Wrapper that syncs slow weights every cfg.k inner steps."""

    def __init__(self, inner, cfg: LookaheadConfig = LookaheadConfig()):
        self.inner = inner
        self.cfg = cfg
        self._slow: np.ndarray | None = None
        self._count = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if self._slow is None:
            self._slow = theta.copy()
        fast = self.inner.step(theta, grad)
        self._count += 1
        if self._count % self.cfg.k == 0:
            self._slow = self._slow + self.cfg.alpha * (fast - self._slow)
            fast = self._slow.copy()
        return fast

    def config(self) -> dict:
        return {
            "kind": "lookahead",
            "k": self.cfg.k,
            "alpha": self.cfg.alpha,
            "inner": self.inner.config(),
        }


def lookahead_run(
    phi0: Sequence[float] | np.ndarray,
    inner,
    cfg: LookaheadConfig,
    grad_fn: Callable[[np.ndarray], np.ndarray],
    sync_count: int,
) -> np.ndarray:
    """Run sync_count Lookahead cycles and return the slow weights.

    Each cycle: theta <- phi; k inner steps on theta; phi <- phi +
    alpha * (theta - phi). The inner optimizer's state is not reset
    between cycles.
    """
    phi = np.asarray(phi0, dtype=np.float64).copy()
    for _ in range(sync_count):
        theta = phi.copy()
        for _ in range(cfg.k):
            grad = np.asarray(grad_fn(theta), dtype=np.float64)
            if not np.all(np.isfinite(grad)):
                raise InputError(f"nonfinite gradient at theta={theta!r}")
            theta = inner.step(theta, grad)
        phi = phi + cfg.alpha * (theta - phi)
    return phi


@dataclass(frozen=True)
class Objective:
    name: str
    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    start: tuple[float, ...]


def _quadratic(x: np.ndarray) -> float:
    return float(np.sum(x * x))


def _quadratic_grad(x: np.ndarray) -> np.ndarray:
    return 2.0 * x


def _rosenbrock(x: np.ndarray) -> float:
    a, b = x[0], x[1]
    return float((1.0 - a) ** 2 + 100.0 * (b - a * a) ** 2)


def _rosenbrock_grad(x: np.ndarray) -> np.ndarray:
    a, b = x[0], x[1]
    return np.array(
        [-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
        dtype=np.float64,
    )


OBJECTIVES = {
    "quadratic": Objective("quadratic", _quadratic, _quadratic_grad, (1.0,)),
    "rosenbrock": Objective("rosenbrock", _rosenbrock, _rosenbrock_grad, (-1.2, 1.0)),
}


@dataclass
class BenchmarkResult:
    objective: str
    config: dict
    losses: list[float] = field(default_factory=list)
    final_params: np.ndarray | None = None
    diverged: bool = False


def run_benchmark(objective: str, optimizer, steps: int, seed: int = 0) -> BenchmarkResult:
    """Deterministic loss trajectory of `optimizer` on a named objective.

    Divergence (nonfinite loss) stops the run and is flagged on the
    result rather than raised.
    """
    if objective not in OBJECTIVES:
        raise InputError(f"unknown objective {objective!r}; have {sorted(OBJECTIVES)}")
    obj = OBJECTIVES[objective]
    config = {"objective": objective, "steps": steps, "seed": seed, "optimizer": optimizer.config()}
    result = BenchmarkResult(objective=objective, config=config)
    theta = np.asarray(obj.start, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported, not raised
        for _ in range(steps):
            grad = obj.grad(theta)
            if not np.all(np.isfinite(grad)):
                result.diverged = True
                break
            theta = optimizer.step(theta, grad)
            loss = obj.fn(theta)
            result.losses.append(loss)
            if not np.isfinite(loss):
                result.diverged = True
                break
    result.final_params = theta
    return result


def write_benchmark_csv(result: BenchmarkResult, path) -> None:
    """CSV trajectory with the run config echoed as a '#'-prefixed JSON line."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps(result.config, sort_keys=True) + "\n")
        fh.write("step,loss\n")
        for i, loss in enumerate(result.losses):
            fh.write(f"{i},{loss}\n")
