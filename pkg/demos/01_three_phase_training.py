"""
Three-phase training on a synthetic news corpus
===============================================

Phase 0 pretrains the quantization pathway on masked reconstruction, phase 1
fine-tunes the classifier in two stages (gate detached, then live), and
phase 2 refines on the original data plus the filtered subset with the
purity and focus objectives.  Every stage leaves an audit trail: checkpoints,
JSON-lines loss logs, and experience databases.

Run this first; the other demos read its artifacts from the work directory.
"""

import argparse
import os

import numpy as np

from intuition import data as dp
from intuition import filtering as fi
from intuition import metrics as me
from intuition import training as tr
from intuition.model import Model, ModelConfig
from intuition.synthetic import write_corpus

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--workdir", default="runs/demo")
parser.add_argument("--samples", type=int, default=400)
parser.add_argument("--epochs", type=int, default=3)
parser.add_argument("--seed", type=int, default=42)
args = parser.parse_args()
os.makedirs(args.workdir, exist_ok=True)


def path(name):
    return os.path.join(args.workdir, name)


# --------------------------------------------------------------------------
# The corpus: headline-like records over four categories.  One fifth draw
# from a pool of mixed-category headlines whose label is a coin flip between
# the two sources, so the confidence gate has irreducibly hard records to
# learn from.
# --------------------------------------------------------------------------
SEQ = 48
write_corpus(path("corpus.json"), args.samples, seed=args.seed,
             ambiguous_fraction=0.2)
samples = dp.load_dataset(path("corpus.json"))
train, val = dp.split_dataset(samples, seed=args.seed)
vocab = dp.build_vocab(train)
dp.write_model_config(path("model_config.json"), vocab, sequence_length=SEQ)

train_ids = np.stack([dp.encode(s.text, vocab, SEQ) for s in train])
train_labels = np.array([s.label_id for s in train])
train_texts = [s.text for s in train]
train_label_texts = [s.label_text for s in train]
val_ids = np.stack([dp.encode(s.text, vocab, SEQ) for s in val])
val_texts = [s.text for s in val]
val_label_texts = [s.label_text for s in val]

print(f"corpus: {len(train)} train / {len(val)} validation, "
      f"{len(vocab.id_to_char)} characters")

config = ModelConfig(vocab_size=len(vocab.id_to_char), d_model=32,
                     num_heads=2, sequence_length=SEQ, codebook_size=64)
model = Model(config, seed=args.seed)
vhash = dp.vocab_hash(vocab)

# --------------------------------------------------------------------------
# Phase 0: reconstruction pretraining.  Labels are never consulted; only the
# embeddings, the first block, the reconstruction head, and the codebook
# receive gradient.
# --------------------------------------------------------------------------
cfg0 = tr.TrainRunConfig(phase=0, epochs=args.epochs, seed=args.seed)
with open(path("loss_log_phase0.jsonl"), "w") as log:
    out0 = tr.run_phase0(model, train_ids, cfg0, log)
tr.save_checkpoint(path("checkpoint_vq"), model, phase=0, seed=args.seed,
                   step=out0["steps"], vocab_hash=vhash)
print(f"phase 0: {out0['steps']} steps, "
      f"final reconstruction {out0['final']['reconstruction']:.4f}")

# --------------------------------------------------------------------------
# Phase 1: two-stage classification fine-tuning.  Stage (a) detaches the
# gate path so the model behaves like a plain classifier; stage (b) lets the
# gated enhancement participate.  A frozen recording pass then writes one
# experience record per training sample.
# --------------------------------------------------------------------------
cfg1 = tr.TrainRunConfig(phase=1, epochs=args.epochs, seed=args.seed)
with open(path("loss_log_phase1.jsonl"), "w") as log:
    out1 = tr.run_phase1(model, train_ids, train_labels, cfg1, log)
tr.save_checkpoint(path("checkpoint_baseline"), model, phase=1,
                   seed=args.seed, step=out1["steps"], vocab_hash=vhash)
db = tr.record_pass(model, train_texts, train_ids, train_label_texts,
                    dp.LABEL_NAMES)
tr.write_experience_db(path("experience_db_finetuned.json"), db)
print(f"phase 1: {out1['steps']} steps, "
      f"train reward {np.mean([r.reward for r in db]):.3f}")

# --------------------------------------------------------------------------
# The purist filter distills records whose internals look trustworthy:
# stable symbol chain, every gate above the threshold, and a symbol whose
# history agrees with the record's label.
# --------------------------------------------------------------------------
purity_map = fi.build_purity_map(db, num_symbols=config.codebook_size)
fi.write_purity_report(path("purity_report.json"), purity_map)
result = fi.filter_by_internals(db, purity_map, min_gate=0.5)
fi.write_filtered_dataset(path("filtered_data_purist.json"),
                          result.kept_records)
print(f"filter: kept {len(result.kept_ids)} of {len(db)} "
      f"(rejected {result.rejected})")

# --------------------------------------------------------------------------
# Phase 2: refinement.  The filtered records ride along as extra copies;
# the purity term sharpens symbol-label alignment and the focus term aligns
# the mean gate with prediction correctness.
# --------------------------------------------------------------------------
if result.kept_records:
    f_ids = np.stack([dp.encode(r.text, vocab, SEQ)
                      for r in result.kept_records])
    f_labels = np.array([dp.LABEL_NAMES.index(r.label_text)
                         for r in result.kept_records])
else:
    f_ids = f_labels = None
cfg2 = tr.TrainRunConfig(phase=2, epochs=args.epochs, seed=args.seed)
with open(path("loss_log_phase2.jsonl"), "w") as log:
    out2 = tr.run_phase2(model, train_ids, train_labels, f_ids, f_labels,
                         cfg2, log)
tr.save_checkpoint(path("checkpoint_expert"), model, phase=2,
                   seed=args.seed, step=out2["steps"], vocab_hash=vhash)
db2 = tr.record_pass(model, train_texts, train_ids, train_label_texts,
                     dp.LABEL_NAMES)
tr.write_experience_db(path("experience_db_generated.json"), db2)
print(f"phase 2: {out2['steps']} steps on {out2['train_size']} samples")

# --------------------------------------------------------------------------
# Validation: the refined model should stay on par with the baseline while
# its gate separates correct from incorrect predictions.
# --------------------------------------------------------------------------
for name in ("baseline", "expert"):
    ckpt, _ = tr.load_checkpoint(path(f"checkpoint_{name}"))
    res, recs = me.evaluate_model(ckpt, val_texts, val_ids, val_label_texts,
                                  dp.LABEL_NAMES, sample_size=None,
                                  seed=args.seed)
    gates = np.array([me.mean_gate(r) for r in recs])
    ok = np.array([r.reward == 1.0 for r in recs])
    margin = (gates[ok].mean() - gates[~ok].mean()
              if ok.any() and (~ok).any() else float("nan"))
    print(f"{name:8s} validation accuracy {res.accuracy:.3f}, "
          f"gate margin (correct - incorrect) {margin:+.4f}")
