"""Training objectives: task cross-entropy, symbol purity, gated focus, and
the per-phase totals.

The purity loss scores how predictive each discrete symbol is of the batch
labels.  Its counting step is piecewise-constant in the parameters, so the
raw value is reported for monitoring while optimization uses a surrogate
that weights each sample's commitment pull by how impure its symbol is.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad

PURITY_EPS = 1e-6
GATE_CLAMP = 1e-7
DEFAULT_BETA = 0.25
DEFAULT_LAMBDA_PURITY = 0.5
DEFAULT_LAMBDA_FOCUS = 0.5

Scalar = Union[float, ad.Tensor]


def log_softmax(logits: ad.Tensor) -> ad.Tensor:
    """Max-subtracted log-softmax over the last dimension."""
    shifted = ad.sub(logits, ad.Tensor(
        np.max(logits.data, axis=-1, keepdims=True)))
    norm = ad.log(ad.sum(ad.exp(shifted), axis=-1, keepdims=True))
    return ad.sub(shifted, norm)


def task_loss(logits: ad.Tensor, labels: np.ndarray) -> ad.Tensor:
    """Mean cross-entropy of (B, C) logits against integer labels."""
    labels = np.asarray(labels)
    num_classes = logits.shape[-1]
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    onehot = np.zeros(logits.shape, dtype=np.float32)
    onehot[np.arange(labels.size), labels] = 1.0
    logp = log_softmax(logits)
    picked = ad.sum(ad.mul(logp, ad.Tensor(onehot)), axis=-1)
    return ad.scale(ad.mean(picked), -1.0)


def symbol_label_probabilities(symbols: np.ndarray, labels: np.ndarray,
                               num_classes: int = 4) -> np.ndarray:
    """P(y_i | k_i) per sample from within-batch counts with smoothing."""
    symbols = np.asarray(symbols)
    labels = np.asarray(labels)
    counts: Dict[int, np.ndarray] = {}
    for k, y in zip(symbols.tolist(), labels.tolist()):
        if k not in counts:
            counts[k] = np.zeros(num_classes, dtype=np.int64)
        counts[k][y] += 1
    probs = np.empty(symbols.size, dtype=np.float64)
    for i, (k, y) in enumerate(zip(symbols.tolist(), labels.tolist())):
        n = counts[k]
        probs[i] = (n[y] + PURITY_EPS) / (n.sum() + num_classes * PURITY_EPS)
    return probs


def purity_loss(symbols: np.ndarray, labels: np.ndarray,
                num_classes: int = 4) -> float:
    """-mean log P(y_i | k_i): low when every symbol implies one label."""
    probs = symbol_label_probabilities(symbols, labels, num_classes)
    return float(-np.mean(np.log(probs)))


def purity_surrogate(symbols: np.ndarray, labels: np.ndarray,
                     commitment_per_sample: ad.Tensor,
                     num_classes: int = 4) -> ad.Tensor:
    """Differentiable stand-in: impure samples feel a stronger commitment pull."""
    probs = symbol_label_probabilities(symbols, labels, num_classes)
    weights = ad.Tensor((1.0 - probs).astype(np.float32))
    return ad.mean(ad.mul(weights, commitment_per_sample))


def _clamp_gates(gates: ad.Tensor) -> ad.Tensor:
    return ad.clip(gates, GATE_CLAMP, 1.0 - GATE_CLAMP)


def focus_loss(mean_gates: Union[ad.Tensor, np.ndarray, Sequence[float]],
               rewards: Union[np.ndarray, Sequence[float]]) -> Scalar:
    """Binary cross-entropy between per-sample mean gates and rewards.

    Accepts a Tensor for the differentiable path or plain arrays for
    reporting; the return type matches the input.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if isinstance(mean_gates, ad.Tensor):
        g = _clamp_gates(mean_gates)
        r_t = ad.Tensor(np.broadcast_to(
            r.astype(np.float32).reshape(r.shape + (1,) * (g.data.ndim - r.ndim)),
            g.shape).copy())
        pos = ad.mul(r_t, ad.log(g))
        neg = ad.mul(ad.sub(1.0, r_t), ad.log(ad.sub(1.0, g)))
        return ad.scale(ad.mean(ad.add(pos, neg)), -1.0)
    g = np.clip(np.asarray(mean_gates, dtype=np.float64),
                GATE_CLAMP, 1.0 - GATE_CLAMP)
    return float(-np.mean(r * np.log(g) + (1.0 - r) * np.log(1.0 - g)))


def _combine(terms) -> Scalar:
    """Sum of (weight, value) pairs; tensor-aware.

    Zero-weight terms are dropped from the graph entirely, so a disabled
    objective leaves no trace in the gradients.
    """
    terms = [(w, v) for w, v in terms if w != 0.0]
    if any(isinstance(v, ad.Tensor) for _, v in terms):
        total = None
        for w, v in terms:
            if not isinstance(v, ad.Tensor):
                v = ad.Tensor(np.float32(v))
            part = v if w == 1.0 else ad.scale(v, w)
            total = part if total is None else ad.add(total, part)
        return total
    return float(sum(w * v for w, v in terms))


def phase_total(phase: int, *, reconstruction: Optional[Scalar] = None,
                task: Optional[Scalar] = None,
                codebook: Optional[Scalar] = None,
                commit: Optional[Scalar] = None,
                purity: Optional[Scalar] = None,
                focus: Optional[Scalar] = None,
                beta: float = DEFAULT_BETA,
                lambda_purity: float = DEFAULT_LAMBDA_PURITY,
                lambda_focus: float = DEFAULT_LAMBDA_FOCUS,
                keep_vq_in_phase2: bool = False) -> Scalar:
    """Phase formulas.

    0: recon + beta (codebook + commit)
    1: task + beta (codebook + commit)
    2: task + lambda_p purity + lambda_f focus  (flag re-adds the VQ term)
    """
    def need(name, value):
        if value is None:
            raise ValueError(f"phase {phase} requires the {name} loss")
        return value

    if phase == 0:
        return _combine([(1.0, need("reconstruction", reconstruction)),
                         (beta, need("codebook", codebook)),
                         (beta, need("commit", commit))])
    if phase == 1:
        return _combine([(1.0, need("task", task)),
                         (beta, need("codebook", codebook)),
                         (beta, need("commit", commit))])
    if phase == 2:
        terms = [(1.0, need("task", task)),
                 (lambda_purity, need("purity", purity)),
                 (lambda_focus, need("focus", focus))]
        if keep_vq_in_phase2:
            terms += [(beta, need("codebook", codebook)),
                      (beta, need("commit", commit))]
        return _combine(terms)
    raise ValueError(f"unknown phase {phase}")


@dataclass
class LossBreakdown:
    """Float snapshot of one step's loss components for the training log."""

    phase: int
    total: float
    task: float = 0.0
    codebook: float = 0.0
    commit: float = 0.0
    purity: float = 0.0
    focus: float = 0.0
    reconstruction: float = 0.0
    weights: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> Dict:
        return {"phase": self.phase, "total": self.total, "task": self.task,
                "codebook": self.codebook, "commit": self.commit,
                "purity": self.purity, "focus": self.focus,
                "reconstruction": self.reconstruction, "weights": self.weights}


def breakdown(phase: int, *, beta: float = DEFAULT_BETA,
              lambda_purity: float = DEFAULT_LAMBDA_PURITY,
              lambda_focus: float = DEFAULT_LAMBDA_FOCUS,
              keep_vq_in_phase2: bool = False, **parts: float) -> LossBreakdown:
    """Assemble a LossBreakdown whose total is the phase formula on parts."""
    floats = {k: float(v.item() if isinstance(v, ad.Tensor) else v)
              for k, v in parts.items()}
    total = phase_total(phase, beta=beta, lambda_purity=lambda_purity,
                        lambda_focus=lambda_focus,
                        keep_vq_in_phase2=keep_vq_in_phase2, **floats)
    return LossBreakdown(
        phase=phase, total=float(total),
        weights={"beta": beta, "lambda_purity": lambda_purity,
                 "lambda_focus": lambda_focus},
        **{k: v for k, v in floats.items()})
