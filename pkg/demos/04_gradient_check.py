"""
Finite-difference audit of the gradient engine
==============================================

Two sweeps: every primitive against central differences at a random point,
then the whole toy model.  Quantization makes the latter subtle; the checker
freezes the discrete offsets at the base point so the comparison targets
exactly what the straight-through estimator claims, and the codebook is
checked through the first block's codebook loss, the one path that owes it a
gradient.
"""

import argparse
import json
import time

from intuition import diagnostics as dg

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--tolerance", type=float, default=1e-3)
args = parser.parse_args()

start = time.monotonic()
sweep = dg.primitive_sweep()
print("primitive sweep (max relative error per op):")
for name in sorted(sweep, key=sweep.get, reverse=True):
    print(f"  {name:20s} {sweep[name]:.3e}")

report = dg.run_toy_check(tolerance=args.tolerance)
print("\ntoy model sweep (max relative error per parameter):")
for name in sorted(report.per_param, key=report.per_param.get, reverse=True):
    checked = report.checked.get(name, 0)
    skipped = report.skipped.get(name, 0)
    print(f"  {name:24s} {report.per_param[name]:.3e}  "
          f"({checked} coords, {skipped} flip-skipped)")

elapsed = time.monotonic() - start
verdict = "PASS" if report.passed and max(sweep.values()) < args.tolerance \
    else "FAIL"
print(f"\n{verdict}: worst primitive {max(sweep.values()):.3e}, "
      f"worst parameter {report.max_error:.3e}, "
      f"tolerance {args.tolerance:.0e}, {elapsed:.1f}s")
print(json.dumps(report.to_json())[:120] + " ...")
