"""
Reading the experience database
===============================

Every training run ends with a frozen recording pass: one record per sample
holding the per-layer symbols, gate scores, compressed attention, prediction,
and reward.  This demo loads that audit trail, tabulates symbol usage and
purity, and shows which records the purist filter keeps and why the rest
fall out.

Requires the artifacts of demo 01 in the same work directory.
"""

import argparse
import collections
import os

import numpy as np

from intuition import filtering as fi
from intuition import metrics as me
from intuition import training as tr

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--workdir", default="runs/demo")
parser.add_argument("--min-gate", type=float, default=0.5)
args = parser.parse_args()

db = tr.load_experience_db(
    os.path.join(args.workdir, "experience_db_finetuned.json"))
print(f"{len(db)} records, reward mean {np.mean([r.reward for r in db]):.3f}")

# --------------------------------------------------------------------------
# Symbol usage: which codebook entries the two layers actually settle on.
# --------------------------------------------------------------------------
for layer in range(len(db[0].quantized_indices)):
    usage = collections.Counter(r.quantized_indices[layer] for r in db)
    top = ", ".join(f"{sym} x{n}" for sym, n in usage.most_common(5))
    print(f"layer {layer + 1}: {len(usage)} distinct symbols, top: {top}")

# --------------------------------------------------------------------------
# The purity map counts, for each first-layer symbol, how often it co-occurs
# with each label.  A pure symbol is one the filter can trust.
# --------------------------------------------------------------------------
num_symbols = max(max(r.quantized_indices) for r in db) + 1
purity_map = fi.build_purity_map(db, num_symbols=num_symbols)
used = [k for k in range(num_symbols) if purity_map.totals[k] > 0]
used.sort(key=lambda k: -purity_map.totals[k])
print("\nstrongest symbol tendencies:")
for sym in used[:5]:
    label, count, pct = purity_map.tendencies(sym)[0]
    print(f"  symbol {sym:3d}: seen {purity_map.totals[sym]:4d} times, "
          f"tends towards {label} ({pct:.2f}%)")

# --------------------------------------------------------------------------
# The filter applies three predicates per record: a stable chain, every gate
# strictly above the threshold, and the symbol's historical majority label
# matching the record's own.
# --------------------------------------------------------------------------
result = fi.filter_by_internals(db, purity_map, min_gate=args.min_gate)
print(f"\nfilter at min_gate {args.min_gate}: kept {len(result.kept_ids)}, "
      f"rejected {result.rejected}")

# Per-predicate counts show which criterion binds.  A stable chain needs the
# two layers to pick the same codebook entry, which is rare while they
# quantize different depths of the stream.
stable = sum(1 for r in db if len(set(r.quantized_indices)) == 1)
active = sum(1 for r in db
             if all(g > args.min_gate for g in r.gating_scores))
def _consistent(r):
    top = purity_map.top_label(r.quantized_indices[0])
    return top is not None and purity_map.label_names[top] == r.label_text


consistent = sum(1 for r in db if _consistent(r))
print(f"  predicates separately: stable {stable}/{len(db)}, "
      f"active {active}/{len(db)}, label-consistent {consistent}/{len(db)}")
for rec in result.kept_records[:3]:
    chain = " -> ".join(str(s) for s in rec.quantized_indices)
    print(f"  kept #{rec.id}: chain {chain}, gates {rec.gating_scores}, "
          f"label {rec.label_text}")

# --------------------------------------------------------------------------
# Offline metrics come straight from the records; no model needed.
# --------------------------------------------------------------------------
res = me.evaluate_records(db, theta=0.7)
print(f"\noffline metrics: accuracy {res.accuracy:.3f}, "
      f"gated ratio {res.gated_ratio:.3f}, "
      f"intuitive accuracy {res.intuitive_accuracy}")
