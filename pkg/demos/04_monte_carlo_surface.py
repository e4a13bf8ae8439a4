"""
Failure probability over a magnitude grid
=========================================

Sample random vectors whose elements share one binade, flip every bit of
every element and count absolute errors above one.  The analytic model is
printed next to each cell.
"""
from flipbound import monte_carlo as mc
from flipbound.dot_fault import predicted_cell_failure

cfg = mc.McConfig.from_range(-4, 3, n=20, samples=50, seed=42)
surface = mc.run_surface(cfg)
print("mag_u mag_v  simulated  model")
for mu in cfg.grid:
    for mv in cfg.grid:
        p = surface.probability[surface.index(mu), surface.index(mv)]
        print(f"{mu:5d} {mv:5d}  {p:.6f}   {predicted_cell_failure(mu, mv):.6f}")

# Below magnitude -1 only bit 62 ever fails, which is exactly 1/64.
for row in mc.per_bit_slice(surface, "diagonal"):
    if row.failures and row.mag <= -2:
        print("diagonal failure at bit", row.bit, "mag", row.mag, "p =", row.probability)

# mixed magnitudes: the large operand's exponent bits fail about half the time
cell = mc.run_cell(-20, 3, mc.McConfig(n=20, samples=200, grid=(0,), seed=1))
print("bits 57-62 at (-20, 3):", cell.bit_probability()[57:63].round(3).tolist())
