"""Evaluation metrics over experience records: accuracy, gated ratio, and
intuitive accuracy, plus the distribution exports behind the dashboard.

All three metrics are functions of the experience records alone, so an
evaluation can be recomputed offline from a database file and must agree
with the live run that produced it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .training import ExperienceRecord, record_pass

DEFAULT_THETA = 0.7
GATE_BINS = 20


def mean_gate(record: ExperienceRecord) -> float:
    return float(np.mean(record.gating_scores))


def accuracy(records: Sequence[ExperienceRecord]) -> float:
    if not records:
        raise ValueError("accuracy requires at least one record")
    return sum(r.reward for r in records) / len(records)


def gated_ratio(records: Sequence[ExperienceRecord],
                theta: float = DEFAULT_THETA) -> float:
    """Fraction of samples whose mean gate strictly exceeds theta."""
    if not records:
        raise ValueError("gated_ratio requires at least one record")
    return sum(1 for r in records if mean_gate(r) > theta) / len(records)


def intuitive_accuracy(records: Sequence[ExperienceRecord],
                       theta: float = DEFAULT_THETA) -> Optional[float]:
    """Accuracy within the gated subset; None when no sample is gated."""
    gated = [r for r in records if mean_gate(r) > theta]
    if not gated:
        return None
    return sum(r.reward for r in gated) / len(gated)


@dataclass
class EvalResult:
    accuracy: float
    gated_ratio: float
    intuitive_accuracy: Optional[float]
    theta: float
    n: int
    reward_histogram: Dict[str, int]
    gate_histogram: List[int]
    symbol_label_distribution: Dict[str, Dict[str, int]]

    def to_json(self) -> Dict:
        return {"accuracy": self.accuracy, "gated_ratio": self.gated_ratio,
                "intuitive_accuracy": self.intuitive_accuracy,
                "theta": self.theta, "n": self.n,
                "reward_histogram": self.reward_histogram,
                "gate_histogram": self.gate_histogram,
                "symbol_label_distribution": self.symbol_label_distribution}


def evaluate_records(records: Sequence[ExperienceRecord],
                     theta: float = DEFAULT_THETA) -> EvalResult:
    if not records:
        raise ValueError("evaluation requires at least one record")
    gates = np.array([mean_gate(r) for r in records])
    hist, _ = np.histogram(gates, bins=GATE_BINS, range=(0.0, 1.0))
    reward_hist = {"0.0": sum(1 for r in records if r.reward == 0.0),
                   "1.0": sum(1 for r in records if r.reward == 1.0)}
    sym_dist: Dict[str, Dict[str, int]] = {}
    for r in records:
        key = str(r.quantized_indices[0])
        per = sym_dist.setdefault(key, {})
        per[r.label_text] = per.get(r.label_text, 0) + 1
    return EvalResult(
        accuracy=accuracy(records), gated_ratio=gated_ratio(records, theta),
        intuitive_accuracy=intuitive_accuracy(records, theta), theta=theta,
        n=len(records), reward_histogram=reward_hist,
        gate_histogram=[int(c) for c in hist],
        symbol_label_distribution=sym_dist)


def evaluate_model(model, texts: Sequence[str], ids: np.ndarray,
                   label_texts: Sequence[str], label_names: Sequence[str],
                   theta: float = DEFAULT_THETA,
                   sample_size: Optional[int] = None,
                   seed: int = 42) -> Tuple[EvalResult, List[ExperienceRecord]]:
    """Forward the dataset (optionally a seeded subsample) and score it."""
    if sample_size is not None and sample_size < len(ids):
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(ids), size=sample_size, replace=False))
        texts = [texts[i] for i in pick]
        label_texts = [label_texts[i] for i in pick]
        ids = ids[pick]
    records = record_pass(model, texts, ids, label_texts, label_names)
    return evaluate_records(records, theta), records


def write_eval_result(path: str, result: EvalResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json(), fh, ensure_ascii=False, indent=2,
                  sort_keys=True)
        fh.write("\n")


def write_distribution_csvs(dir_path: str, result: EvalResult) -> List[str]:
    """reward, gate-bin, and symbol-label CSVs; returns the paths written."""
    import os
    paths = []

    path = os.path.join(dir_path, "reward_distribution.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["reward", "count"])
        for k in ("0.0", "1.0"):
            w.writerow([k, result.reward_histogram[k]])
    paths.append(path)

    path = os.path.join(dir_path, "gate_distribution.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_start", "bin_end", "count"])
        for i, c in enumerate(result.gate_histogram):
            w.writerow([f"{i / GATE_BINS:.2f}", f"{(i + 1) / GATE_BINS:.2f}", c])
    paths.append(path)

    path = os.path.join(dir_path, "symbol_label_distribution.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["symbol", "label", "count"])
        for sym in sorted(result.symbol_label_distribution, key=int):
            for label, count in sorted(
                    result.symbol_label_distribution[sym].items()):
                w.writerow([sym, label, count])
    paths.append(path)
    return paths
