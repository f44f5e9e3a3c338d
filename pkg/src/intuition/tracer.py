"""Five-step auditable inference report.

Given an input text, a trained model, its experience database, and the
purity map, the tracer renders a fixed-layout report: the encoded input,
the most similar stored experience, the live forward pass (predicted
category, thought chain, gates), each symbol's historical label tendency,
and the full chain's historical frequency and success rate.
"""

from __future__ import annotations

import json
import textwrap
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .data import Vocab, encode
from .filtering import PurityMap
from .model import Model
from .training import ExperienceRecord

PREVIEW_IDS = 20
TENDENCIES_SHOWN = 3
HEADER = "=" * 25 + " Inference Prediction Result " + "=" * 25
FOOTER = "=" * 68


@dataclass
class TraceReport:
    input_ids_preview: List[int]
    matched_id: int
    matched_similarity: float
    matched_text: str
    predicted_category: str
    thought_chain: List[int]
    gate_scores: List[float]
    intuition_activated: bool
    average_gate: float
    theta: float
    symbol_tendencies: List[Dict]     # per layer: symbol, total, ranked labels
    pattern_count: int
    pattern_success_rate: Optional[float]

    def to_json(self) -> Dict:
        return {
            "input_ids_preview": self.input_ids_preview,
            "matched_experience": {"id": self.matched_id,
                                   "similarity": self.matched_similarity,
                                   "text": self.matched_text},
            "predicted_category": self.predicted_category,
            "thought_chain": self.thought_chain,
            "gate_scores": self.gate_scores,
            "intuition_activated": self.intuition_activated,
            "average_gate": self.average_gate,
            "theta": self.theta,
            "symbol_tendencies": self.symbol_tendencies,
            "pattern_count": self.pattern_count,
            "pattern_success_rate": self.pattern_success_rate,
        }


def char_count_vector(ids: Sequence[int], pad_id: int,
                      vocab_size: int) -> np.ndarray:
    """Bag-of-character-id counts with padding positions excluded."""
    arr = np.asarray(ids)
    arr = arr[arr != pad_id]
    return np.bincount(arr, minlength=vocab_size).astype(np.float64)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def find_similar_experience(input_ids: Sequence[int],
                            db: Sequence[ExperienceRecord], vocab: Vocab,
                            sequence_length: int
                            ) -> Tuple[ExperienceRecord, float]:
    """Max-cosine record over the database; ties resolve to the lowest id."""
    if not db:
        raise ValueError("experience database is empty")
    vocab_size = len(vocab.id_to_char)  # includes the PAD/UNK specials
    query = char_count_vector(input_ids, vocab.pad_id, vocab_size)
    best: Optional[ExperienceRecord] = None
    best_sim = -1.0
    for rec in sorted(db, key=lambda r: r.id):
        stored = char_count_vector(encode(rec.text, vocab, sequence_length),
                                   vocab.pad_id, vocab_size)
        sim = cosine(query, stored)
        if sim > best_sim:
            best, best_sim = rec, sim
    return best, best_sim


def pattern_stats(chain: Sequence[int], db: Sequence[ExperienceRecord]
                  ) -> Tuple[int, Optional[float]]:
    """How often the exact chain occurred historically, and its mean reward."""
    rewards = [r.reward for r in db
               if list(r.quantized_indices) == list(chain)]
    if not rewards:
        return 0, None
    return len(rewards), float(np.mean(rewards))


def _tendency_block(purity_map: PurityMap, symbol: int) -> Dict:
    ranked = purity_map.tendencies(symbol)
    return {"symbol": int(symbol),
            "total": int(purity_map.totals[symbol]),
            "labels": [{"label": name, "count": count,
                        "percent": f"{pct:.2f}"}
                       for name, count, pct in ranked]}


def trace(text: str, model: Model, vocab: Vocab,
          db: Sequence[ExperienceRecord], purity_map: PurityMap,
          label_names: Sequence[str], theta: float = 0.7,
          model_vocab_hash: Optional[str] = None,
          db_vocab_hash: Optional[str] = None) -> Tuple[TraceReport, str]:
    """Run the five steps and render the report text."""
    if (model_vocab_hash is not None and db_vocab_hash is not None
            and model_vocab_hash != db_vocab_hash):
        raise ValueError(
            f"vocab hash mismatch: model {model_vocab_hash}, "
            f"database {db_vocab_hash}")

    seq_len = model.config.sequence_length
    input_ids = encode(text, vocab, seq_len)
    matched, similarity = find_similar_experience(input_ids, db, vocab, seq_len)

    with ad.no_grad():
        out = model.forward(np.array([input_ids], dtype=np.int64))
    predicted = label_names[int(np.argmax(out.logits.data[0]))]
    chain = [int(t.symbol_index[0]) for t in out.traces]
    gates = [float(t.gate_score[0]) for t in out.traces]
    avg_gate = float(np.mean(gates))

    report = TraceReport(
        input_ids_preview=[int(i) for i in input_ids[:PREVIEW_IDS]],
        matched_id=matched.id, matched_similarity=similarity,
        matched_text=matched.text, predicted_category=predicted,
        thought_chain=chain, gate_scores=gates,
        intuition_activated=avg_gate > theta, average_gate=avg_gate,
        theta=theta,
        symbol_tendencies=[_tendency_block(purity_map, s) for s in chain],
        pattern_count=0, pattern_success_rate=None)
    report.pattern_count, report.pattern_success_rate = pattern_stats(chain, db)
    return report, render(report)


def _chain_text(chain: Sequence[int]) -> str:
    return " -> ".join(str(s) for s in chain)


def render(report: TraceReport) -> str:
    """Fixed-layout text block; all five sections always present."""
    lines = [HEADER]
    lines.append("[Step 1: Text to Input IDs (Based on your input)]")
    lines.append(f"  - {report.input_ids_preview}...")
    lines.append("")
    lines.append(f"[Step 2: Found Most Similar Experience "
                 f"(ID: {report.matched_id}, "
                 f"Similarity: {report.matched_similarity:.2f})]")
    lines.append(textwrap.fill(report.matched_text, width=78,
                               initial_indent="  - Original Text: ",
                               subsequent_indent="    "))
    lines.append("")
    lines.append("[Step 3: Simulate inference process based on the matched "
                 "experience]")
    lines.append(f"  - Predicted Category: {report.predicted_category}")
    lines.append(f"  - Triggered AI Thought Chain: "
                 f"{_chain_text(report.thought_chain)}")
    lines.append("  - Gate Scores per Layer: "
                 + " -> ".join(f"{g:.3f}" for g in report.gate_scores))
    activated = "Yes" if report.intuition_activated else "No"
    lines.append(f"  - Intuition Channel Activated: {activated} "
                 f"(Average Gate Value: {report.average_gate:.4f})")
    lines.append("")
    lines.append("[Step 4: Analyze the historical semantic tendency of each "
                 "Symbol in the thought chain]")
    for layer, block in enumerate(report.symbol_tendencies, start=1):
        lines.append(f"  - [Layer {layer}] Symbol {block['symbol']} "
                     f"(appeared {block['total']} times):")
        for entry in block["labels"][:TENDENCIES_SHOWN]:
            lines.append(f"    - Tends towards {entry['label']}: "
                         f"{entry['count']} times ({entry['percent']}%)")
        if not block["labels"]:
            lines.append("    - No historical occurrences recorded")
    lines.append("")
    lines.append("[Step 5: Deep Pattern Analysis based on Experience Database]")
    lines.append(f"  - Thought pattern {_chain_text(report.thought_chain)} "
                 f"appeared {report.pattern_count} times in history.")
    if report.pattern_success_rate is None:
        lines.append("  - Historical Success Rate (Average Reward): N/A")
    else:
        lines.append(f"  - Historical Success Rate (Average Reward): "
                     f"{100.0 * report.pattern_success_rate:.2f}%")
    lines.append(FOOTER)
    return "\n".join(lines)


def report_to_json_text(report: TraceReport) -> str:
    return json.dumps(report.to_json(), ensure_ascii=False, indent=2,
                      sort_keys=True)


def report_from_json(text: str) -> TraceReport:
    """Inverse of :func:`report_to_json_text`; rendering is preserved."""
    raw = json.loads(text)
    matched = raw["matched_experience"]
    return TraceReport(
        input_ids_preview=[int(v) for v in raw["input_ids_preview"]],
        matched_id=int(matched["id"]),
        matched_similarity=float(matched["similarity"]),
        matched_text=matched["text"],
        predicted_category=raw["predicted_category"],
        thought_chain=[int(v) for v in raw["thought_chain"]],
        gate_scores=[float(v) for v in raw["gate_scores"]],
        intuition_activated=bool(raw["intuition_activated"]),
        average_gate=float(raw["average_gate"]),
        theta=float(raw["theta"]),
        symbol_tendencies=raw["symbol_tendencies"],
        pattern_count=int(raw["pattern_count"]),
        pattern_success_rate=(None if raw["pattern_success_rate"] is None
                              else float(raw["pattern_success_rate"])),
    )
