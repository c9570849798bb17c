"""Train the desk pipeline once and re-quantize it across bit budgets.

Top-6 path cut, shallow joint autoencoder, per-feature Lloyd-Max at 3 bits
and a 512-bit budget; then the same encoder is re-quantized with greedy
per-feature widths at smaller and larger budgets. Takes a few minutes on one
core. Reports land in ./desk_report.{csv,json}.
"""

import logging

from csilab.harness import budget_sweep, desk_pipeline, run_pipeline

logging.basicConfig(level=logging.INFO, format="%(message)s")

cfg = desk_pipeline(seeds=(0,))
row = run_pipeline(cfg)
print(f"desk pipeline: NMSE {row.nmse_mean:.4f} at {row.feedback_bits} feedback bits "
      f"({'pass' if row.passed else 'fail'} at NMSE <= 0.1)")

rows = budget_sweep(cfg, [256, 384, 512, 768], "desk_report.csv", "desk_report.json")
print("\nbudget  bits  NMSE")
for r in rows:
    print(f"{r.config['budget']:6d}  {r.feedback_bits:4d}  {r.nmse_mean:.4f}")
