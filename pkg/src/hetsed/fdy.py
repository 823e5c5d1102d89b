"""Frequency-dynamic convolution forward pass with a naive oracle.

A bank of K basis kernels is combined per frequency bin by input-conditioned
attention weights, so the effective 2D kernel varies along the frequency
axis.  ``conv2d_naive`` is the plain cross-correlation reference the dynamic
path is tested against; ``fdy_conv`` fuses the per-frequency kernel mix into
one einsum.  GLU and inference-time batch norm round out the block.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_NUM_KERNELS = 4
DEFAULT_TEMPERATURE = 31.0


@dataclass(frozen=True, eq=False)
class FdyParams:
    """Basis kernels plus the small attention head that mixes them.

    basis_kernels: [K, C_out, C_in, k_f, k_t], odd spatial dims (same padding).
    attn_weight:   [K, w] 1-D convolution along frequency (w odd).
    attn_bias:     [K].
    """

    basis_kernels: np.ndarray
    attn_weight: np.ndarray
    attn_bias: np.ndarray
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self) -> None:
        kernels = np.asarray(self.basis_kernels, dtype=np.float64)
        object.__setattr__(self, "basis_kernels", kernels)
        object.__setattr__(self, "attn_weight", np.asarray(self.attn_weight, dtype=np.float64))
        object.__setattr__(self, "attn_bias", np.asarray(self.attn_bias, dtype=np.float64))
        if kernels.ndim != 5 or kernels.shape[0] < 1:
            raise ValueError(f"basis_kernels must be [K>=1, C_out, C_in, k_f, k_t], got {kernels.shape}")
        if kernels.shape[3] % 2 == 0 or kernels.shape[4] % 2 == 0:
            raise ValueError(f"kernel dims must be odd for same padding, got {kernels.shape[3:]}")
        k = kernels.shape[0]
        if self.attn_weight.ndim != 2 or self.attn_weight.shape[0] != k:
            raise ValueError(f"attn_weight must be [K={k}, w], got {self.attn_weight.shape}")
        if self.attn_weight.shape[1] % 2 == 0:
            raise ValueError("attention kernel width must be odd")
        if self.attn_bias.shape != (k,):
            raise ValueError(f"attn_bias must be [K={k}], got {self.attn_bias.shape}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    @property
    def num_kernels(self) -> int:
        return self.basis_kernels.shape[0]


def _check_input(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected [C_in, F, T] input, got shape {x.shape}")
    return x


def conv2d_naive(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct cross-correlation with zero same-padding (reference path).

    Quadruple loop over (c_out, c_in, df, dt); intentionally unfused and
    sequential so it can serve as the oracle for the dynamic convolution.
    """
    x = _check_input(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise ValueError(f"expected [C_out, C_in, k_f, k_t] kernel, got shape {kernel.shape}")
    c_out, c_in, k_f, k_t = kernel.shape
    if c_in != x.shape[0]:
        raise ValueError(f"kernel expects {c_in} input channels, input has {x.shape[0]}")
    if k_f % 2 == 0 or k_t % 2 == 0:
        raise ValueError(f"kernel dims must be odd, got ({k_f}, {k_t})")
    _, f, t = x.shape
    pf, pt = k_f // 2, k_t // 2
    padded = np.zeros((c_in, f + 2 * pf, t + 2 * pt))
    padded[:, pf : pf + f, pt : pt + t] = x
    out = np.zeros((c_out, f, t))
    for co in range(c_out):
        for ci in range(c_in):
            for df in range(k_f):
                for dt in range(k_t):
                    out[co] += kernel[co, ci, df, dt] * padded[ci, df : df + f, dt : dt + t]
    return out


def freq_attention(x: np.ndarray, params: FdyParams) -> np.ndarray:
    """Per-frequency attention over the K basis kernels, rows sum to 1.

    The input is average-pooled over channels and time into a per-frequency
    descriptor, run through a 1-D convolution along frequency (zero padding),
    and softmaxed over K after temperature scaling.
    """
    x = _check_input(x)
    descriptor = x.mean(axis=(0, 2))  # [F]
    w = params.attn_weight.shape[1]
    padded = np.pad(descriptor, w // 2)
    windows = np.lib.stride_tricks.sliding_window_view(padded, w)  # [F, w]
    logits = windows @ params.attn_weight.T + params.attn_bias  # [F, K]
    scaled = logits / params.temperature
    scaled -= scaled.max(axis=1, keepdims=True)
    e = np.exp(scaled)
    return e / e.sum(axis=1, keepdims=True)


def fdy_conv(x: np.ndarray, params: FdyParams) -> np.ndarray:
    """Frequency-dynamic convolution: attention-mixed basis kernels per bin.

    Equals sum_k attention[f, k] * conv2d_naive(x, basis_k) restricted to
    frequency f, computed here as one fused einsum over sliding windows.
    """
    x = _check_input(x)
    kernels = params.basis_kernels
    if kernels.shape[2] != x.shape[0]:
        raise ValueError(f"kernels expect {kernels.shape[2]} input channels, input has {x.shape[0]}")
    att = freq_attention(x, params)  # [F, K]
    _, f, t = x.shape
    k_f, k_t = kernels.shape[3], kernels.shape[4]
    pf, pt = k_f // 2, k_t // 2
    padded = np.zeros((x.shape[0], f + 2 * pf, t + 2 * pt))
    padded[:, pf : pf + f, pt : pt + t] = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k_f, k_t), axis=(1, 2))
    # per-frequency effective kernel, then correlate
    mixed = np.einsum("fk,koiuv->foiuv", att, kernels)
    return np.einsum("foiuv,iftuv->oft", mixed, windows)


def glu(x: np.ndarray) -> np.ndarray:
    """Gated linear unit over the channel axis: a * sigmoid(b)."""
    x = _check_input(x)
    if x.shape[0] % 2 != 0:
        raise ValueError(f"GLU needs an even channel count, got {x.shape[0]}")
    half = x.shape[0] // 2
    a, b = x[:half], x[half:]
    return a * _sigmoid(b)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def batchnorm_infer(
    x: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-5,
) -> np.ndarray:
    """Inference-time batch normalization with per-channel statistics."""
    x = _check_input(x)
    mean, var = np.asarray(mean, dtype=np.float64), np.asarray(var, dtype=np.float64)
    gamma, beta = np.asarray(gamma, dtype=np.float64), np.asarray(beta, dtype=np.float64)
    c = x.shape[0]
    for name, arr in (("mean", mean), ("var", var), ("gamma", gamma), ("beta", beta)):
        if arr.shape != (c,):
            raise ValueError(f"{name} must have shape ({c},), got {arr.shape}")
    scale = gamma / np.sqrt(var + eps)
    return scale[:, None, None] * (x - mean[:, None, None]) + beta[:, None, None]


def random_fdy_params(
    rng: np.random.Generator,
    c_in: int,
    c_out: int,
    num_kernels: int = DEFAULT_NUM_KERNELS,
    kernel_shape: tuple[int, int] = (3, 3),
    attn_width: int = 3,
    temperature: float = DEFAULT_TEMPERATURE,
) -> FdyParams:
    """Randomly seeded parameters for tests and demos."""
    k_f, k_t = kernel_shape
    return FdyParams(
        basis_kernels=rng.standard_normal((num_kernels, c_out, c_in, k_f, k_t)),
        attn_weight=rng.standard_normal((num_kernels, attn_width)),
        attn_bias=rng.standard_normal(num_kernels),
        temperature=temperature,
    )


def save_tensors(manifest_path: Path | str, blob_path: Path | str, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors as a JSON manifest plus one little-endian f32 blob."""
    manifest = [{"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()]
    Path(manifest_path).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    with open(blob_path, "wb") as fh:
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_tensors(manifest_path: Path | str, blob_path: Path | str) -> dict[str, np.ndarray]:
    manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    blob = np.frombuffer(Path(blob_path).read_bytes(), dtype="<f4")
    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        tensors[entry["name"]] = blob[offset : offset + size].reshape(shape).astype(np.float64)
        offset += size
    if offset != blob.size:
        raise ValueError(f"blob has {blob.size} floats, manifest expects {offset}")
    return tensors


def save_fdy_params(manifest_path: Path | str, blob_path: Path | str, params: FdyParams) -> None:
    save_tensors(
        manifest_path,
        blob_path,
        {
            "basis_kernels": params.basis_kernels,
            "attn_weight": params.attn_weight,
            "attn_bias": params.attn_bias,
            "temperature": np.array([params.temperature]),
        },
    )


def load_fdy_params(manifest_path: Path | str, blob_path: Path | str) -> FdyParams:
    tensors = load_tensors(manifest_path, blob_path)
    return FdyParams(
        basis_kernels=tensors["basis_kernels"],
        attn_weight=tensors["attn_weight"],
        attn_bias=tensors["attn_bias"],
        temperature=float(tensors["temperature"][0]),
    )
