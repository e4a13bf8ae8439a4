"""
Every single-bit fault of one scalar
====================================

Enumerate all 64 flips of a value, with exact absolute errors, and compare
exponent flips of large and small numbers.
"""
from flipbound import scalar_fault as sf

for x in (2.0, 0.5):
    print(f"exponent flips of {x}:")
    for rec in sf.enumerate_perturbations(x)[52:63]:
        print(f"  bit {rec.bit}: {sf.format_pow2(rec.perturbed):>12}  outcome {rec.outcome.value}")

# Values below one mostly shrink towards zero; only the top exponent bit
# sends them to astronomically large numbers.
small = [r for r in sf.enumerate_perturbations(0.25) if r.abs_error is not None and r.abs_error > 1]
print("flips of 0.25 with error above 1:", [r.bit for r in small])

# mantissa flips are bounded by the binade of the value
rec = sf.perturb(3.0, 51)
print("3.0, bit 51 ->", rec.perturbed, "error", rec.abs_error, "bound", sf.loose_mantissa_bound(3.0, 51))
