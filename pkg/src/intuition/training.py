"""Three-phase training coordinator, checkpoints, and the experience database.

Phase 0 pretrains the quantization pathway on text reconstruction.  Phase 1
fine-tunes for classification in two stages (gate path detached, then live).
Phase 2 refines on the original data concatenated with the filtered subset,
adding the purity and focus objectives.  After phases 1 and 2 a recording
pass with frozen weights writes one ExperienceRecord per training sample:
the audit trail consumed by the filter, the metrics, the tracer, and the
dashboard.

Everything is deterministic under a fixed seed: batch order, initialization,
and updates.  Checkpoints are a manifest plus one little-endian float32 blob
per named tensor, so two identical runs produce byte-identical artifacts.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from . import autodiff as ad
from . import losses as lo
from .model import Model, ModelConfig

ATTENTION_GRID = 10


@dataclass
class TrainRunConfig:
    phase: int
    epochs: int = 3
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta: float = lo.DEFAULT_BETA
    lambda_purity: float = lo.DEFAULT_LAMBDA_PURITY
    lambda_focus: float = lo.DEFAULT_LAMBDA_FOCUS
    seed: int = 42
    freeze_codebook: bool = False
    keep_vq_in_phase2: bool = False
    # stage split for phase 1; None derives (a) = ceil(epochs/2), (b) = rest
    stage_a_epochs: Optional[int] = None
    stage_b_epochs: Optional[int] = None

    def __post_init__(self):
        if self.phase not in (0, 1, 2):
            raise ValueError(f"phase must be 0, 1, or 2, got {self.phase}")

    def stages(self) -> Tuple[int, int]:
        a = self.stage_a_epochs
        b = self.stage_b_epochs
        if a is None:
            a = (self.epochs + 1) // 2
        if b is None:
            b = max(self.epochs - a, 0)
        return a, b


class Adam:
    """Adaptive-moment optimizer; updates tensor data in place.

    A step is rejected (and counted) when any gradient contains NaN,
    leaving parameters and moments untouched.
    """

    def __init__(self, params: Dict[str, ad.Tensor], lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.rejected = 0

    def _grads(self) -> Dict[str, np.ndarray]:
        return {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for k, p in self.params.items()}

    def step(self) -> bool:
        grads = self._grads()
        if any(np.isnan(g).any() for g in grads.values()):
            self.rejected += 1
            return False
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = grads[k].astype(p.data.dtype, copy=False)
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            mhat = self.m[k] / c1
            vhat = self.v[k] / c2
            p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(
                p.data.dtype, copy=False)
        return True

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None


@dataclass
class ExperienceRecord:
    """One sample's audit trail from a frozen recording pass."""

    id: int
    text: str
    label_text: str
    quantized_indices: List[int]
    gating_scores: List[float]
    attention_weights: List[List[List[float]]]
    prediction: str
    reward: float

    def to_json(self) -> Dict:
        return {"id": self.id, "text": self.text, "label_text": self.label_text,
                "quantized_indices": self.quantized_indices,
                "gating_scores": self.gating_scores,
                "attention_weights": self.attention_weights,
                "prediction": self.prediction, "reward": self.reward}

    @classmethod
    def from_json(cls, d: Dict) -> "ExperienceRecord":
        return cls(id=d["id"], text=d["text"], label_text=d["label_text"],
                   quantized_indices=list(d["quantized_indices"]),
                   gating_scores=list(d["gating_scores"]),
                   attention_weights=d["attention_weights"],
                   prediction=d["prediction"], reward=float(d["reward"]))


def write_experience_db(path: str, records: Sequence[ExperienceRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_json() for r in records], fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def load_experience_db(path: str) -> List[ExperienceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        return [ExperienceRecord.from_json(d) for d in json.load(fh)]


def compress_attention(attn: np.ndarray, grid: int = ATTENTION_GRID) -> List[List[float]]:
    """Pool an L x L matrix into grid x grid chunk means, 3 decimals.

    Sequences not divisible by the grid are kept at full resolution.
    """
    L = attn.shape[0]
    if L % grid == 0 and L >= grid:
        c = L // grid
        pooled = attn.reshape(grid, c, grid, c).mean(axis=(1, 3))
    else:
        pooled = attn
    return [[round(float(v), 3) for v in row] for row in pooled]


def masked_reconstruction_loss(logits: ad.Tensor, ids: np.ndarray,
                               pad_id: int) -> ad.Tensor:
    """Mean per-character cross-entropy, padding positions excluded."""
    mask = (ids != pad_id).astype(np.float32)
    count = float(mask.sum())
    if count == 0:
        raise ValueError("reconstruction batch contains only padding")
    onehot = np.zeros(logits.shape, dtype=np.float32)
    b_idx, l_idx = np.indices(ids.shape)
    onehot[b_idx, l_idx, ids] = 1.0
    logp = lo.log_softmax(logits)
    picked = ad.sum(ad.mul(logp, ad.Tensor(onehot)), axis=-1)
    return ad.scale(ad.sum(ad.mul(picked, ad.Tensor(mask))), -1.0 / count)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _aggregate_vq(traces) -> Tuple[ad.Tensor, ad.Tensor]:
    """Mean codebook and commitment losses across layers."""
    cb = traces[0].codebook_loss
    cm = traces[0].commitment_loss
    for t in traces[1:]:
        cb = ad.add(cb, t.codebook_loss)
        cm = ad.add(cm, t.commitment_loss)
    inv = 1.0 / len(traces)
    return ad.scale(cb, inv), ad.scale(cm, inv)


def _mean_gate_tensor(traces) -> ad.Tensor:
    g = traces[0].gate_tensor
    for t in traces[1:]:
        g = ad.add(g, t.gate_tensor)
    return ad.scale(g, 1.0 / len(traces))


def resolve_seed(seed: int) -> int:
    """Config seed, unless the INTUITION_SEED environment variable is set."""
    env = os.environ.get("INTUITION_SEED")
    return int(env) if env else seed


def _log_step(log: Optional[TextIO], step: int, bd: lo.LossBreakdown,
              rejected: bool = False) -> None:
    if log is None:
        return
    entry = {"step": step, "rejected": rejected}
    for k, v in bd.to_json().items():
        # NaN is not valid JSON; a rejected step logs null components
        if isinstance(v, float) and not math.isfinite(v):
            v = None
        entry[k] = v
    log.write(json.dumps(entry, sort_keys=True) + "\n")


def _trainable(model: Model, config: TrainRunConfig,
               phase0: bool = False) -> Dict[str, ad.Tensor]:
    names = []
    for name in model.params:
        if phase0 and not (name.startswith(("tok_emb", "pos_emb", "b0.",
                                            "rec_", "codebook"))):
            continue
        if config.freeze_codebook and name == "codebook":
            continue
        names.append(name)
    return {n: model.params[n] for n in names}


def run_phase0(model: Model, ids: np.ndarray, config: TrainRunConfig,
               log: Optional[TextIO] = None) -> Dict:
    """Reconstruction pretraining of the quantization pathway.

    Trains the embeddings, the first block, the reconstruction head, and the
    codebook; labels are never consulted.
    """
    if len(ids) == 0:
        raise ValueError("phase 0 requires a non-empty corpus")
    opt = Adam(_trainable(model, config, phase0=True), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    step = 0
    last = None
    for _ in range(config.epochs):
        for batch in _batches(len(ids), config.batch_size, rng):
            with ad.Tape():
                rec = model.reconstruct(ids[batch])
                recon = masked_reconstruction_loss(
                    rec.logits, ids[batch], model.config.pad_id)
                cb, cm = _aggregate_vq(rec.traces)
                total = lo.phase_total(0, reconstruction=recon, codebook=cb,
                                       commit=cm, beta=config.beta)
                ad.backward(total)
            ok = opt.step()
            opt.zero_grads()
            bd = lo.breakdown(0, beta=config.beta, reconstruction=recon.item(),
                              codebook=cb.item(), commit=cm.item())
            _log_step(log, step, bd, rejected=not ok)
            last = bd
            step += 1
    return {"steps": step, "rejected": opt.rejected,
            "final": None if last is None else last.to_json()}


def _classification_step(model: Model, opt: Adam, batch_ids: np.ndarray,
                         batch_labels: np.ndarray, config: TrainRunConfig,
                         detach_gate: bool) -> lo.LossBreakdown:
    with ad.Tape():
        out = model.forward(batch_ids, detach_gate=detach_gate)
        task = lo.task_loss(out.logits, batch_labels)
        cb, cm = _aggregate_vq(out.traces)
        total = lo.phase_total(1, task=task, codebook=cb, commit=cm,
                               beta=config.beta)
        ad.backward(total)
    ok = opt.step()
    opt.zero_grads()
    bd = lo.breakdown(1, beta=config.beta, task=task.item(),
                      codebook=cb.item(), commit=cm.item())
    return bd, ok


def run_phase1(model: Model, ids: np.ndarray, labels: np.ndarray,
               config: TrainRunConfig, log: Optional[TextIO] = None) -> Dict:
    """Classification fine-tuning: gate path detached, then live."""
    if len(ids) != len(labels):
        raise ValueError("ids and labels differ in length")
    opt = Adam(_trainable(model, config), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    stage_a, stage_b = config.stages()
    step = 0
    for stage, n_epochs in (("a", stage_a), ("b", stage_b)):
        detach = stage == "a"
        for _ in range(n_epochs):
            for batch in _batches(len(ids), config.batch_size, rng):
                bd, ok = _classification_step(model, opt, ids[batch],
                                              labels[batch], config,
                                              detach_gate=detach)
                _log_step(log, step, bd, rejected=not ok)
                step += 1
    return {"steps": step, "rejected": opt.rejected}


def run_phase2(model: Model, ids: np.ndarray, labels: np.ndarray,
               filtered_ids: Optional[np.ndarray],
               filtered_labels: Optional[np.ndarray],
               config: TrainRunConfig, log: Optional[TextIO] = None) -> Dict:
    """Refinement on original + filtered data with purity and focus terms.

    The filtered subset rides along as extra copies, upweighting the samples
    the filter kept.  The raw purity value is reported every step while its
    gradient flows through the commitment-weighted surrogate.
    """
    if filtered_ids is not None and len(filtered_ids) > 0:
        all_ids = np.concatenate([ids, filtered_ids])
        all_labels = np.concatenate([labels, filtered_labels])
    else:
        warnings.warn("filtered set is empty; refining on the original data only")
        all_ids, all_labels = ids, labels
    opt = Adam(_trainable(model, config), lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    step = 0
    num_classes = model.config.num_classes
    for _ in range(config.epochs):
        for batch in _batches(len(all_ids), config.batch_size, rng):
            b_ids, b_labels = all_ids[batch], all_labels[batch]
            with ad.Tape():
                out = model.forward(b_ids)
                task = lo.task_loss(out.logits, b_labels)
                raw_purity = 0.0
                surrogate = None
                for tr in out.traces:
                    raw_purity += lo.purity_loss(tr.symbol_index, b_labels,
                                                 num_classes)
                    part = lo.purity_surrogate(tr.symbol_index, b_labels,
                                               tr.commitment_per_sample,
                                               num_classes)
                    surrogate = part if surrogate is None else ad.add(surrogate, part)
                raw_purity /= len(out.traces)
                surrogate = ad.scale(surrogate, 1.0 / len(out.traces))
                rewards = (np.argmax(out.logits.data, axis=-1) == b_labels)
                gbar = _mean_gate_tensor(out.traces)
                focus = lo.focus_loss(gbar, rewards.astype(np.float64))
                cb, cm = _aggregate_vq(out.traces)
                optimized = lo.phase_total(
                    2, task=task, purity=surrogate, focus=focus,
                    codebook=cb, commit=cm, beta=config.beta,
                    lambda_purity=config.lambda_purity,
                    lambda_focus=config.lambda_focus,
                    keep_vq_in_phase2=config.keep_vq_in_phase2)
                ad.backward(optimized)
            ok = opt.step()
            opt.zero_grads()
            bd = lo.breakdown(2, beta=config.beta,
                              lambda_purity=config.lambda_purity,
                              lambda_focus=config.lambda_focus,
                              keep_vq_in_phase2=config.keep_vq_in_phase2,
                              task=task.item(), purity=raw_purity,
                              focus=focus.item(), codebook=cb.item(),
                              commit=cm.item())
            _log_step(log, step, bd, rejected=not ok)
            step += 1
    return {"steps": step, "rejected": opt.rejected,
            "train_size": int(len(all_ids))}


def record_pass(model: Model, texts: Sequence[str], ids: np.ndarray,
                label_texts: Sequence[str], label_names: Sequence[str],
                batch_size: int = 32) -> List[ExperienceRecord]:
    """One ExperienceRecord per sample from a frozen forward pass."""
    records: List[ExperienceRecord] = []
    for start in range(0, len(ids), batch_size):
        stop = min(start + batch_size, len(ids))
        with ad.no_grad():
            out = model.forward(ids[start:stop], need_trace=True)
        preds = np.argmax(out.logits.data, axis=-1)
        for j in range(stop - start):
            i = start + j
            prediction = label_names[int(preds[j])]
            records.append(ExperienceRecord(
                id=i, text=texts[i], label_text=label_texts[i],
                quantized_indices=[int(t.symbol_index[j]) for t in out.traces],
                gating_scores=[round(float(t.gate_score[j]), 4)
                               for t in out.traces],
                attention_weights=[compress_attention(t.attention[j])
                                   for t in out.traces],
                prediction=prediction,
                reward=1.0 if prediction == label_texts[i] else 0.0))
    return records


def save_checkpoint(path: str, model: Model, phase: int, seed: int, step: int,
                    vocab_hash: Optional[str] = None) -> None:
    """Manifest plus one little-endian float32 blob per named tensor."""
    os.makedirs(path, exist_ok=True)
    tensors = {}
    for name in sorted(model.params):
        fname = name.replace(".", "_") + ".bin"
        data = model.params[name].data.astype("<f4")
        with open(os.path.join(path, fname), "wb") as fh:
            fh.write(data.tobytes())
        tensors[name] = {"file": fname, "shape": list(data.shape)}
    manifest = {"config": asdict(model.config), "phase": phase, "seed": seed,
                "step": step, "vocab_hash": vocab_hash, "tensors": tensors}
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> Tuple[Model, Dict]:
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    model = Model(ModelConfig(**manifest["config"]), seed=manifest["seed"])
    _load_tensors(model, path, manifest)
    return model, manifest


def adopt_checkpoint(model: Model, path: str) -> Dict:
    """Load a checkpoint's tensors into an existing model.

    Rejects any tensor whose stored shape disagrees with the model, so a
    phase-1 run cannot silently adopt an incompatible pretrained stack.
    """
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for name, meta in manifest["tensors"].items():
        if name not in model.params:
            raise ValueError(f"checkpoint tensor {name!r} has no counterpart")
        have = list(model.params[name].data.shape)
        if have != list(meta["shape"]):
            raise ValueError(
                f"checkpoint dimension mismatch for {name!r}: "
                f"stored {meta['shape']}, model expects {have}")
    _load_tensors(model, path, manifest)
    return manifest


def _load_tensors(model: Model, path: str, manifest: Dict) -> None:
    for name, meta in manifest["tensors"].items():
        with open(os.path.join(path, meta["file"]), "rb") as fh:
            flat = np.frombuffer(fh.read(), dtype="<f4")
        model.params[name].data[...] = flat.reshape(meta["shape"]).astype(np.float32)
