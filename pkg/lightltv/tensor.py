"""Dense float64 kernels with hand-derived backward passes.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns gradients of its inputs.
Parameter gradients are accumulated into ``ParamTensor.grad`` by the models.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterator, Literal, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import expit

from .exceptions import NumericError
from .utils import logger

DTYPE = np.float64

Activation = Literal["relu", "identity"]


class DenseCache(NamedTuple):
    x: np.ndarray
    z: np.ndarray
    W: np.ndarray
    act: Activation


@dataclass
class ParamTensor:
    name: str
    values: np.ndarray
    frozen_rows: tuple[int, ...] = ()
    """Rows whose gradient is always discarded, e.g. the padding embedding."""
    grad: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=DTYPE, copy=True)
        self.grad = np.zeros_like(self.values)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return int(self.values.size)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.values.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter '{self.name}' {self.values.shape}"
            )
        self.grad += g

    def accumulate_rows(self, ids: np.ndarray, g: np.ndarray) -> None:
        np.add.at(self.grad, ids, g)

    def masked_grad(self) -> np.ndarray:
        if not self.frozen_rows:
            return self.grad
        g = self.grad.copy()
        g[list(self.frozen_rows)] = 0.0
        return g


class ParamStore:
    """Ordered mapping name -> ParamTensor shared by all models."""

    def __init__(self):
        self._tensors: "OrderedDict[str, ParamTensor]" = OrderedDict()

    def add(self, name: str, values: np.ndarray, frozen_rows: Sequence[int] = ()) -> ParamTensor:
        if name in self._tensors:
            raise ValueError(f"duplicate parameter '{name}'")
        tensor = ParamTensor(name, values, tuple(int(r) for r in frozen_rows))
        self._tensors[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> ParamTensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    @property
    def names(self) -> list[str]:
        return list(self._tensors)

    @property
    def num_params(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self._tensors.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, values in snapshot.items():
            t = self._tensors[name]
            if values.shape != t.shape:
                raise ValueError(f"shape mismatch restoring '{name}': {values.shape} != {t.shape}")
            t.values[...] = values

    def flat(self) -> np.ndarray:
        if not self._tensors:
            return np.zeros(0, dtype=DTYPE)
        return np.concatenate([t.values.ravel() for t in self._tensors.values()])


def init_embedding(rng: np.random.Generator, n: int, k: int, pad_row: int | None = None) -> np.ndarray:
    bound = 0.1 / np.sqrt(k)
    table = rng.uniform(-bound, bound, size=(n, k))
    if pad_row is not None:
        table[pad_row] = 0.0
    return table


def init_dense(rng: np.random.Generator, n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray]:
    """Kaiming-normal weights (fan-in) and zero bias."""
    W = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
    return W, np.zeros(n_out, dtype=DTYPE)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray, act: Activation = "relu"):
    """act(x W^T + b) for a vector or a (batch, n_in) matrix."""
    if x.shape[-1] != W.shape[1] or b.shape != (W.shape[0],):
        raise ValueError(
            f"dense shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}"
        )
    z = x @ W.T + b
    if act == "relu":
        y = np.maximum(z, 0.0)
    elif act == "identity":
        y = z
    else:
        raise ValueError(f"unknown activation '{act}'")
    return y, DenseCache(x, z, W, act)


def dense_backward(dy: np.ndarray, cache: DenseCache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, z, W, act = cache
    dz = dy * (z > 0.0) if act == "relu" else dy
    if x.ndim == 1:
        dW = np.outer(dz, x)
        db = dz.copy()
    else:
        dW = dz.T @ x
        db = dz.sum(axis=0)
    dx = dz @ W
    return dx, dW, db


def elementwise_product(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"elementwise product shape mismatch: {a.shape} vs {b.shape}")
    return a * b, (a, b)


def elementwise_product_backward(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray]:
    a, b = cache
    return dy * b, dy * a


def concat(parts: Sequence[np.ndarray]):
    if len(parts) < 1:
        raise ValueError("concat needs at least one part")
    sizes = [p.shape[-1] for p in parts]
    return np.concatenate(parts, axis=-1), sizes


def concat_backward(dy: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    bounds = np.cumsum(sizes)[:-1]
    return np.split(dy, bounds, axis=-1)


def embedding_lookup(table: np.ndarray, ids: np.ndarray) -> np.ndarray:
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"id out of range for table with {table.shape[0]} rows")
    return table[ids]


def mean_pool(emb: np.ndarray, mask: np.ndarray):
    """Mean over the valid slots of a (batch, slots, k) block."""
    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    pooled = (emb * mask[..., None]).sum(axis=1) / counts
    return pooled, (mask, counts)


def mean_pool_backward(dy: np.ndarray, cache) -> np.ndarray:
    mask, counts = cache
    return (dy / counts)[:, None, :] * mask[..., None]


def cross_layer_forward(x0: np.ndarray, xl: np.ndarray, W: np.ndarray, b: np.ndarray):
    """x0 * (xl W^T + b) + xl"""
    z, dense_cache = dense_forward(xl, W, b, act="identity")
    return x0 * z + xl, (x0, z, dense_cache)


def cross_layer_backward(dy: np.ndarray, cache):
    x0, z, dense_cache = cache
    dx0 = dy * z
    dxl, dW, db = dense_backward(dy * x0, dense_cache)
    return dx0, dxl + dy, dW, db


@dataclass
class AdamState:
    lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    v: dict[str, np.ndarray] = field(default_factory=dict, repr=False)


def assert_finite_grads(params: ParamStore, step: int) -> None:
    for p in params.values():
        if not np.all(np.isfinite(p.grad)):
            raise NumericError(
                f"non-finite gradient in parameter '{p.name}' at step {step}",
                parameter=p.name,
                step=step,
            )


def adam_step(params: ParamStore, state: AdamState) -> None:
    """Bias-corrected Adam update in place; gradients are zeroed afterwards."""
    assert_finite_grads(params, state.t + 1)
    state.t += 1

    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    step_size = state.lr / bc1

    for name, p in params.items():
        g = p.masked_grad()
        if name not in state.m:
            state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.values -= step_size * m / (np.sqrt(v * (1.0 / bc2)) + state.eps)
        if not np.all(np.isfinite(p.values)):
            raise NumericError(
                f"parameter '{name}' became non-finite at step {state.t}",
                parameter=name,
                step=state.t,
            )
    params.zero_grad()


def grad_check(
    closure: Callable[[], float],
    params: ParamStore,
    eps: float = 1e-6,
    max_coords: int = 40,
    floor: float = 1e-6,
    seed: int = 0,
    pattern: Optional[Callable[[], np.ndarray]] = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``closure`` must zero nothing itself: it runs forward and backward, accumulates
    gradients into ``params`` and returns the loss. Tensors larger than
    ``max_coords`` are checked on a seeded random subset of coordinates.

    ``pattern`` returns the activation signs of the current parameters. A
    coordinate whose +eps and -eps evaluations see different patterns straddles
    a relu kink, where central differences are meaningless, and is skipped.
    """
    rng = np.random.default_rng(seed)
    params.zero_grad()
    closure()
    analytic = {name: p.masked_grad().copy() for name, p in params.items()}

    worst = 0.0
    worst_at = ("", ())
    skipped = 0
    for name, p in params.items():
        frozen = set(p.frozen_rows)
        candidates = np.arange(p.size)
        if frozen:
            rows = np.unravel_index(candidates, p.shape)[0]
            candidates = candidates[~np.isin(rows, list(frozen))]
        if len(candidates) > max_coords:
            candidates = np.sort(rng.choice(candidates, size=max_coords, replace=False))
        for flat_idx in candidates:
            coord = np.unravel_index(int(flat_idx), p.shape)
            orig = p.values[coord]
            p.values[coord] = orig + eps
            loss_plus = closure()
            signs_plus = pattern() if pattern is not None else None
            p.values[coord] = orig - eps
            loss_minus = closure()
            signs_minus = pattern() if pattern is not None else None
            p.values[coord] = orig
            if pattern is not None and not np.array_equal(signs_plus, signs_minus):
                skipped += 1
                continue
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            a = analytic[name][coord]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if err > worst:
                worst = err
                worst_at = (name, coord)
    params.zero_grad()
    logger.debug(
        f"grad_check worst relative error {worst:.3e} at {worst_at[0]}{list(worst_at[1])}, "
        f"{skipped} coordinates across a kink"
    )
    return worst
