"""Convolution-branch fusion numerics.

Training-time blocks made of parallel {3x3, 1x1, identity} branches (each
conv optionally followed by batch norm) collapse into a single 3x3
convolution for inference: fold each BN into its conv, lift 1x1 kernels
and the identity into 3x3 form, then sum weights and biases position-wise.
``conv2d_direct`` is the reference operator all fusion claims are checked
against. Stride is fixed at 1 with same-padding; the identity lift is only
valid there.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InputError

BN_DEFAULT_EPSILON = 1e-5


@dataclass(frozen=True)
class ConvSpec:
    """Stride-1, same-padding convolution weights: (out, in, k, k) plus bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise InputError(f"conv weights must be (out, in, k, k), got {w.shape}")
        if w.shape[2] not in (1, 3):
            raise InputError(f"kernel size must be 1 or 3, got {w.shape[2]}")
        if b.shape != (w.shape[0],):
            raise InputError(f"bias shape {b.shape} does not match {w.shape[0]} outputs")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise InputError("conv parameters must be finite")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @property
    def padding(self) -> int:
        return self.kernel_size // 2


# A fused block is just a single 3x3 ConvSpec.
FusedConv = ConvSpec


@dataclass(frozen=True)
class BNSpec:
    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    epsilon: float = BN_DEFAULT_EPSILON

    def __post_init__(self):
        for name in ("gamma", "beta", "mean", "var"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.gamma.shape[0]
        if any(getattr(self, name).shape != (n,) for name in ("beta", "mean", "var")):
            raise InputError("batch-norm parameter shapes disagree")
        if np.any(self.var < 0):
            raise InputError("batch-norm variance must be >= 0")
        if self.epsilon <= 0:
            raise InputError("batch-norm epsilon must be positive")


@dataclass(frozen=True)
class Branch:
    conv: ConvSpec
    bn: BNSpec | None = None

    def __post_init__(self):
        if self.bn is not None and self.bn.gamma.shape[0] != self.conv.out_channels:
            raise InputError("batch-norm channel count does not match conv outputs")


@dataclass(frozen=True)
class BranchBlock:
    branches: tuple[Branch, ...]
    identity: bool = False
    identity_channels: int | None = None  # required for identity-only blocks

    def __post_init__(self):
        if not self.branches and not self.identity:
            raise InputError("block needs at least one branch")
        shapes = {(b.conv.in_channels, b.conv.out_channels) for b in self.branches}
        if len(shapes) > 1:
            raise InputError(f"branches disagree on channel counts: {shapes}")
        if not self.branches and self.identity_channels is None:
            raise InputError("identity-only block needs identity_channels")
        if self.identity:
            cin, cout = self.channels
            if cin != cout:
                raise InputError("identity branch requires in_channels == out_channels")

    @property
    def channels(self) -> tuple[int, int]:
        if self.branches:
            c = self.branches[0].conv
            return c.in_channels, c.out_channels
        return self.identity_channels, self.identity_channels


def conv2d_direct(x: np.ndarray, c: ConvSpec) -> np.ndarray:
    """Direct same-padding stride-1 convolution plus bias; (n, c, h, w) layout."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise InputError(f"input must be (n, c, h, w), got shape {x.shape}")
    if x.shape[1] != c.in_channels:
        raise InputError(
            f"input has {x.shape[1]} channels, conv expects {c.in_channels}"
        )
    return kernels.conv2d_direct_kernel(x, c.weights, c.bias)


def pad_1x1_to_3x3(c: ConvSpec) -> ConvSpec:
    """Lift a 1x1 conv to the equivalent 3x3 conv (weight at the center)."""
    if c.kernel_size != 1:
        raise InputError(f"expected a 1x1 conv, got kernel size {c.kernel_size}")
    w = np.zeros((c.out_channels, c.in_channels, 3, 3), dtype=np.float64)
    w[:, :, 1, 1] = c.weights[:, :, 0, 0]
    return ConvSpec(w, c.bias.copy())


def identity_to_3x3(channels: int) -> ConvSpec:
    """The 3x3 conv that reproduces its input exactly (stride 1, same padding)."""
    if channels < 1:
        raise InputError(f"channel count must be >= 1, got {channels}")
    w = np.zeros((channels, channels, 3, 3), dtype=np.float64)
    for ch in range(channels):
        w[ch, ch, 1, 1] = 1.0
    return ConvSpec(w, np.zeros(channels, dtype=np.float64))


def fold_bn(c: ConvSpec, bn: BNSpec) -> ConvSpec:
    """Absorb a batch-norm layer into the preceding conv.

    w' = w * gamma / sqrt(var + eps) per output channel;
    b' = (b - mean) * gamma / sqrt(var + eps) + beta.
    """
    if bn.gamma.shape[0] != c.out_channels:
        raise InputError(
            f"batch norm has {bn.gamma.shape[0]} channels, conv has {c.out_channels}"
        )
    scale = bn.gamma / np.sqrt(bn.var + bn.epsilon)
    w = c.weights * scale.reshape(-1, 1, 1, 1)
    b = (c.bias - bn.mean) * scale + bn.beta
    return ConvSpec(w, b)


def fuse_branches(branches: Sequence[ConvSpec]) -> FusedConv:
    """Sum pre-normalized 3x3 branches position-wise into one conv."""
    if not branches:
        raise InputError("nothing to fuse")
    first = branches[0]
    if first.kernel_size != 3:
        raise InputError("branches must be lifted to 3x3 before fusing")
    for other in branches[1:]:
        if other.weights.shape != first.weights.shape:
            raise InputError(
                f"branch shape {other.weights.shape} does not match {first.weights.shape}"
            )
    w = np.zeros_like(first.weights)
    b = np.zeros_like(first.bias)
    for br in branches:
        w = w + br.weights
        b = b + br.bias
    return ConvSpec(w, b)


def normalized_branches(block: BranchBlock) -> list[ConvSpec]:
    """Each branch as an equivalent bare 3x3 conv (BN folded, kernels lifted)."""
    out = []
    for br in block.branches:
        conv = br.conv if br.bn is None else fold_bn(br.conv, br.bn)
        if conv.kernel_size == 1:
            conv = pad_1x1_to_3x3(conv)
        out.append(conv)
    if block.identity:
        out.append(identity_to_3x3(block.channels[0]))
    return out


def fuse_block(block: BranchBlock) -> FusedConv:
    """Collapse a whole training-time block into a single 3x3 conv."""
    return fuse_branches(normalized_branches(block))


def block_forward(block: BranchBlock, x: np.ndarray) -> np.ndarray:
    """Training-time forward: sum of every branch output (and the identity)."""
    cin, _ = block.channels
    if x.shape[1] != cin:
        raise InputError(f"input has {x.shape[1]} channels, block expects {cin}")
    total = None
    for br in block.branches:
        conv = br.conv if br.bn is None else fold_bn(br.conv, br.bn)
        y = conv2d_direct(x, conv)
        total = y if total is None else total + y
    if block.identity:
        total = x.astype(np.float64) if total is None else total + x
    return total


def count_params(spec: ConvSpec | BranchBlock) -> int:
    """Learnable parameters: conv weights + biases, plus gamma/beta per BN
    (running mean/var are buffers and excluded)."""
    if isinstance(spec, ConvSpec):
        return spec.weights.size + spec.bias.size
    total = 0
    for br in spec.branches:
        total += br.conv.weights.size + br.conv.bias.size
        if br.bn is not None:
            total += 2 * br.conv.out_channels
    return total  # the identity branch holds no parameters


def count_flops(spec: ConvSpec | BranchBlock, spatial: tuple[int, int]) -> int:
    """Floating-point operations at the given spatial size.

    Each convolution contributes 2 * k^2 * c_in * c_out * h * w (one
    multiply-accumulate counted as two operations). For a block, merging
    the branch outputs adds c_out * h * w per extra branch.
    """
    h, w = spatial
    if h < 1 or w < 1:
        raise InputError(f"spatial size must be positive, got {spatial}")
    if isinstance(spec, ConvSpec):
        k = spec.kernel_size
        return 2 * k * k * spec.in_channels * spec.out_channels * h * w
    total = 0
    n_branches = len(spec.branches) + (1 if spec.identity else 0)
    cout = spec.channels[1]
    for br in spec.branches:
        total += count_flops(br.conv, spatial)
    total += (n_branches - 1) * cout * h * w
    return total


def conv_to_jsonable(c: ConvSpec) -> dict:
    return {
        "dims": list(c.weights.shape),
        "values": [float(v) for v in c.weights.ravel()],
        "bias": [float(v) for v in c.bias],
    }


def conv_from_jsonable(doc) -> ConvSpec:
    try:
        dims = tuple(int(d) for d in doc["dims"])
        values = np.asarray(doc["values"], dtype=np.float64).reshape(dims)
        bias = np.asarray(doc["bias"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed conv record: {exc}") from exc
    return ConvSpec(values, bias)


def load_block(path) -> BranchBlock:
    """Read a block description file.

    Schema: ``{"identity": bool, "branches": [{"kernel": 1|3, "weights":
    [...], "bias": [...], "bn": {"gamma": [...], "beta": [...], "mean":
    [...], "var": [...], "epsilon": float}?}, ...], "in_channels": int,
    "out_channels": int}`` with flat row-major weight lists.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}") from exc
    try:
        cin = int(doc["in_channels"])
        cout = int(doc["out_channels"])
        branches = []
        for raw in doc.get("branches", []):
            k = int(raw["kernel"])
            w = np.asarray(raw["weights"], dtype=np.float64).reshape(cout, cin, k, k)
            b = np.asarray(
                raw.get("bias", np.zeros(cout)), dtype=np.float64
            )
            bn = None
            if "bn" in raw and raw["bn"] is not None:
                rb = raw["bn"]
                bn = BNSpec(
                    gamma=np.asarray(rb["gamma"], dtype=np.float64),
                    beta=np.asarray(rb["beta"], dtype=np.float64),
                    mean=np.asarray(rb["mean"], dtype=np.float64),
                    var=np.asarray(rb["var"], dtype=np.float64),
                    epsilon=float(rb.get("epsilon", BN_DEFAULT_EPSILON)),
                )
            branches.append(Branch(ConvSpec(w, b), bn))
        identity = bool(doc.get("identity", False))
        return BranchBlock(
            tuple(branches),
            identity=identity,
            identity_channels=cin if identity and not branches else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed block description: {exc}") from exc


def equivalence_error(block: BranchBlock, fused: ConvSpec, trials: int, seed: int) -> float:
    """Max abs difference between block forward and fused conv over random inputs."""
    rng = np.random.default_rng(seed)
    cin, _ = block.channels
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, 3))
        h = int(rng.integers(3, 9))
        w = int(rng.integers(3, 9))
        x = rng.standard_normal((n, cin, h, w))
        diff = np.max(np.abs(block_forward(block, x) - conv2d_direct(x, fused)))
        worst = max(worst, float(diff))
    return worst
