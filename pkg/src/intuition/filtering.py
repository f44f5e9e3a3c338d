"""Purist data filter: distill samples the model handled by stable intuition.

A record survives only if (a) every layer quantized to the same symbol,
(b) every gate score cleared the activation threshold, and (c) the symbol's
historically dominant label matches the sample's true label.  The purity map
backing criterion (c) tallies first-layer symbols against labels over the
whole experience database.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data import LABEL_NAMES
from .training import ExperienceRecord

FILTER_MIN_GATE = 0.5
DEFAULT_NUM_SYMBOLS = 256


@dataclass
class PurityMap:
    """Symbol-by-label contingency counts over an experience database."""

    counts: np.ndarray                # (num_symbols, num_classes) int64
    label_names: Tuple[str, ...]

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def tendencies(self, symbol: int) -> List[Tuple[str, int, float]]:
        """(label, count, percent) sorted by count descending, label order
        breaking ties."""
        row = self.counts[symbol]
        total = int(row.sum())
        if total == 0:
            return []
        order = sorted(range(len(row)), key=lambda c: (-int(row[c]), c))
        return [(self.label_names[c], int(row[c]), 100.0 * row[c] / total)
                for c in order]

    def top_label(self, symbol: int) -> Optional[int]:
        """Dominant label id, or None for unused symbols and ties."""
        row = self.counts[symbol]
        if row.sum() == 0:
            return None
        best = int(np.argmax(row))
        if int(np.sum(row == row[best])) > 1:
            return None
        return best


def _label_id(record: ExperienceRecord, label_names: Sequence[str]) -> int:
    try:
        return label_names.index(record.label_text)
    except ValueError:
        raise ValueError(f"record {record.id}: unknown label "
                         f"{record.label_text!r}") from None


def build_purity_map(records: Sequence[ExperienceRecord],
                     num_symbols: int = DEFAULT_NUM_SYMBOLS,
                     label_names: Sequence[str] = LABEL_NAMES) -> PurityMap:
    """One contribution per record: its first-layer symbol vs. its label."""
    if not records:
        raise ValueError("purity map requires a non-empty experience database")
    label_names = tuple(label_names)
    counts = np.zeros((num_symbols, len(label_names)), dtype=np.int64)
    for rec in records:
        counts[rec.quantized_indices[0], _label_id(rec, label_names)] += 1
    return PurityMap(counts=counts, label_names=label_names)


@dataclass
class FilterResult:
    kept_ids: List[int]
    kept_records: List[ExperienceRecord]
    rejected: Dict[str, int]          # criterion -> count


def keeps(record: ExperienceRecord, purity_map: PurityMap,
          min_gate: float = FILTER_MIN_GATE) -> Optional[str]:
    """None when the record passes; otherwise the failed criterion name."""
    if len(set(record.quantized_indices)) != 1:
        return "stability"
    if not all(g > min_gate for g in record.gating_scores):
        return "activation"
    label = _label_id(record, purity_map.label_names)
    if purity_map.top_label(record.quantized_indices[0]) != label:
        return "consistency"
    return None


def filter_by_internals(records: Sequence[ExperienceRecord],
                        purity_map: PurityMap,
                        min_gate: float = FILTER_MIN_GATE) -> FilterResult:
    kept_ids: List[int] = []
    kept: List[ExperienceRecord] = []
    rejected = {"stability": 0, "activation": 0, "consistency": 0}
    for rec in records:
        reason = keeps(rec, purity_map, min_gate)
        if reason is None:
            kept_ids.append(rec.id)
            kept.append(rec)
        else:
            rejected[reason] += 1
    return FilterResult(kept_ids=kept_ids, kept_records=kept, rejected=rejected)


def write_filtered_dataset(path: str,
                           kept: Sequence[ExperienceRecord]) -> None:
    pairs = [{"text": r.text, "label": r.label_text} for r in kept]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pairs, fh, ensure_ascii=False, indent=1)
        fh.write("\n")


def export_purity_report(purity_map: PurityMap) -> Dict:
    """Used symbols only, each with total and ranked 2-decimal percentages."""
    symbols = {}
    for k in range(purity_map.counts.shape[0]):
        total = int(purity_map.totals[k])
        if total == 0:
            continue
        symbols[str(k)] = {
            "total": total,
            "tendencies": [{"label": name, "count": count,
                            "percent": f"{pct:.2f}"}
                           for name, count, pct in purity_map.tendencies(k)],
        }
    return {"num_symbols": int(purity_map.counts.shape[0]),
            "labels": list(purity_map.label_names),
            "symbols": symbols}


def write_purity_report(path: str, purity_map: PurityMap) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(export_purity_report(purity_map), fh, ensure_ascii=False,
                  indent=1)
        fh.write("\n")
