"""Vector quantization of token representations against a learnable codebook.

Each position of the input is snapped to its nearest prototype (squared
Euclidean distance, ties toward the smallest index).  The resulting index is
the position's discrete intuition symbol.  Gradients use a straight-through
estimator: the quantized value passes forward bit-equal while the backward
pass copies the downstream gradient to the continuous input.  Two auxiliary
losses train the codebook (codebook loss) and regularize the encoder
(commitment loss).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

CODEBOOK_SIZE = 256
CODE_DIM = 128


class Codebook:
    """K learnable prototype vectors plus a usage tally for diagnostics."""

    def __init__(self, vectors: ad.Tensor):
        if vectors.data.ndim != 2:
            raise ad.ShapeMismatch(f"codebook must be K x D, got {vectors.shape}")
        if not np.all(np.isfinite(vectors.data)):
            raise ValueError("codebook contains non-finite entries")
        self.vectors = vectors
        self.usage_counts = np.zeros(vectors.shape[0], dtype=np.int64)

    @property
    def num_codes(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


@dataclass
class QuantizationResult:
    indices: np.ndarray          # integer symbols, input shape minus the last axis
    z_q: ad.Tensor               # selected codebook rows, same shape as the input
    codebook_loss: ad.Tensor     # scalar, trains the codebook toward the encoder
    commitment_loss: ad.Tensor   # scalar, holds the encoder near its prototype
    commitment_per_sample: ad.Tensor = None  # (B,) when the input is batched


def init_codebook(num_codes: int = CODEBOOK_SIZE, dim: int = CODE_DIM,
                  seed: int = 0) -> Codebook:
    """Uniform init in [-1/K, 1/K], deterministic under seed."""
    if num_codes <= 0 or dim <= 0:
        raise ValueError("codebook dimensions must be positive")
    bound = 1.0 / num_codes
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-bound, bound, size=(num_codes, dim)).astype(np.float32)
    return Codebook(ad.Tensor(vectors, requires_grad=True))


def nearest_indices(x: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """argmin_k ||x_i - c_k||^2 per position; ties go to the smallest k.

    Distances expand to ||x||^2 - 2 x.c + ||c||^2 in float64 so the argmin
    ordering matches a direct per-pair scan.
    """
    x64 = x.astype(np.float64).reshape(-1, x.shape[-1])
    c64 = vectors.astype(np.float64)
    d = (x64 * x64).sum(axis=1, keepdims=True) - 2.0 * (x64 @ c64.T) \
        + (c64 * c64).sum(axis=1)
    return np.argmin(d, axis=1).reshape(x.shape[:-1])


def vq_losses(x: ad.Tensor, z_q: ad.Tensor) -> tuple:
    """(codebook_loss, commitment_loss): mean squared gaps, one side frozen.

    The gradient of the first reaches only the codebook, of the second only
    the encoder.  Forward values are identical.
    """
    if x.shape != z_q.shape:
        raise ad.ShapeMismatch(f"vq-losses: shapes differ, {x.shape} vs {z_q.shape}")
    gap_cb = ad.sub(z_q, ad.stop_gradient(x))
    gap_cm = ad.sub(x, ad.stop_gradient(z_q))
    return ad.mean(ad.mul(gap_cb, gap_cb)), ad.mean(ad.mul(gap_cm, gap_cm))


def straight_through(x: ad.Tensor, z_q: ad.Tensor) -> ad.Tensor:
    """Forward value is z_q bit-for-bit; backward copies the gradient to x."""
    if x.shape != z_q.shape:
        raise ad.ShapeMismatch(
            f"straight-through: shapes differ, {x.shape} vs {z_q.shape}")
    return ad.custom_op("straight-through", [x], z_q.data, lambda g: (g,))


def quantize(x: ad.Tensor, codebook: Codebook,
             update_usage: bool = True) -> QuantizationResult:
    """Quantize every position of x (.., D) against the codebook."""
    if x.shape[-1] != codebook.dim:
        raise ad.ShapeMismatch(
            f"quantize: input dim {x.shape[-1]} != codebook dim {codebook.dim}")
    indices = nearest_indices(x.data, codebook.vectors.data)
    z_q = ad.embedding_gather(codebook.vectors, indices)
    cb_loss, commit_loss = vq_losses(x, z_q)
    per_sample = None
    if x.data.ndim == 3:
        gap = ad.sub(x, ad.stop_gradient(z_q))
        per_sample = ad.mean(ad.mul(gap, gap), axis=(1, 2))
    if update_usage:
        codebook.usage_counts += np.bincount(
            indices.reshape(-1), minlength=codebook.num_codes)
    return QuantizationResult(indices=indices, z_q=z_q,
                              codebook_loss=cb_loss, commitment_loss=commit_loss,
                              commitment_per_sample=per_sample)
