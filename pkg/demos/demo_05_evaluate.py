"""
Judging a synthetic set by retraining
=====================================

A distilled set is worth what a fresh network trained on it scores on the
real test split.  This compares ten random real digits (one per class)
against ten distilled ones, with a short training schedule.
"""

from flipdistill.augment import DIGIT_PALETTE
from flipdistill.config import DistillConfig
from flipdistill.harness import baseline_random_real, evaluate, load_real, run_distill, summarize

cfg = DistillConfig(
    iterations=300, width=32, batch_real=16, distill_palette=DIGIT_PALETTE, retrain_palette=DIGIT_PALETTE,
    epochs=60, eval_seeds=3,
)
real, test = load_real(cfg)
syn, _ = run_distill(cfg, real)

distilled = summarize([acc for _, acc in evaluate(cfg, syn, test)])
random_real = summarize([baseline_random_real(cfg, real, test, seed) for seed in range(3)])
print(f"distilled   {100 * distilled[0]:.1f}% +- {100 * distilled[1]:.1f}")
print(f"random real {100 * random_real[0]:.1f}% +- {100 * random_real[1]:.1f}")
