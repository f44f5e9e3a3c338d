"""
Tracing one prediction in five steps
====================================

The tracer explains a single inference end to end: the encoded input, the
most similar past experience, the live symbol chain and gate scores, each
symbol's historical label tendencies, and how often the exact thought
pattern appeared before.

Requires the artifacts of demo 01 in the same work directory.
"""

import argparse
import os

from intuition import data as dp
from intuition import filtering as fi
from intuition import tracer as trc
from intuition import training as tr

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--workdir", default="runs/demo")
parser.add_argument("--text", default="Striker wins quarterly earnings "
                                      "at record pace")
args = parser.parse_args()


def path(name):
    return os.path.join(args.workdir, name)


vocab = dp.load_model_config(path("model_config.json"))
model, manifest = tr.load_checkpoint(path("checkpoint_expert"))
db = tr.load_experience_db(path("experience_db_finetuned.json"))
num_symbols = max(max(r.quantized_indices) for r in db) + 1
purity_map = fi.build_purity_map(db, num_symbols=num_symbols)

# The tracer renders the same five sections the CLI `trace` command prints.
report, text = trc.trace(args.text.lower(), model, vocab, db, purity_map,
                         dp.LABEL_NAMES,
                         model_vocab_hash=manifest.get("vocab_hash"),
                         db_vocab_hash=dp.vocab_hash(vocab))
print(text)

# The same report serializes to JSON and back without losing the rendering.
rebuilt = trc.report_from_json(trc.report_to_json_text(report))
assert trc.render(rebuilt) == text
print("\nJSON round-trip preserved the rendering; "
      f"predicted category: {report.predicted_category}")
