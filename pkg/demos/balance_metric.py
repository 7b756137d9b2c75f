"""Score stylizations by how evenly they trade content loss against style loss.

Each (L_c, L_s) pair is squashed through a population-level sigmoid; a result that
sits close to the diagonal L~_c = L~_s with small overall loss scores a high balance.
"""
import numpy as np

from styler.metric import LossRecord, evaluate_population

rng = np.random.default_rng(0)

# three hypothetical models over the same 30 photos:
# one keeps content, one chases style, one sits between
records = []
for i in range(30):
    base = rng.gamma(4.0, 0.05, size=2)
    records.append(LossRecord(f"photo{i}", "content-heavy", base[0] * 0.3, base[1] * 2.0))
    records.append(LossRecord(f"photo{i}", "style-heavy", base[0] * 2.0, base[1] * 0.3))
    records.append(LossRecord(f"photo{i}", "balanced", base[0] * 0.7, base[1] * 0.7))

# Per-style normalization standardizes each group on its own. Here every group is a
# rescaled copy of the same losses, so it erases the differences pooled scoring shows.
for per_style in (False, True):
    result = evaluate_population(records, per_style_normalization=per_style)
    print("per-style normalization" if per_style else "pooled normalization")
    for name, agg in sorted(result.per_style.items()):
        print(f"  {name:14s} length={agg['mean_length']:.3f}  omega={agg['mean_omega']:.3f}  "
              f"balance={agg['mean_balance']:.3f}")

# a single record carries no spread, so it normalizes to the center point
single = evaluate_population([LossRecord("p", "s", 0.2, 0.9)]).records[0]
print("single record:", single.norm_content, single.norm_style, round(single.balance, 4))
