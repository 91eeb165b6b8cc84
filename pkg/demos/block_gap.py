"""The two-block curvature story at a glance.

Two disjoint blocks of 200 items each. Either full block alone is worth
(essentially) 1, but the even split across both blocks loses a constant:
exponential-rounding value about 4e^{-1/2} - 4e^{-1} ~ 0.955.
"""
import math

from symgap.extensions import f_exp_blockwise
from symgap.instances import two_block_product_instance

val = two_block_product_instance(200, 0.5)

one_block = f_exp_blockwise(val, 1.0, 0.0)
midpoint = f_exp_blockwise(val, 0.5, 0.5)
anchor = 4 * math.exp(-0.5) - 4 * math.exp(-1.0)

print("all mass on block 1 :", one_block)
print("even split          :", midpoint)
print("closed-form anchor  :", anchor)
print("constant-factor loss:", one_block - midpoint)
print()

# walk the segment between the two asymmetric optima; concave functions
# cannot dip below the chord, this one visibly does
print("  t    F_exp((1-t, t))")
for i in range(11):
    t = i / 10
    print(f"  {t:.1f}  {f_exp_blockwise(val, 1.0 - t, t):.6f}")

print()
print("at alpha = 1 the same family is concave along this segment:")
flat = two_block_product_instance(200, 1.0)
chord = 0.5 * (f_exp_blockwise(flat, 1, 0) + f_exp_blockwise(flat, 0, 1))
mid = f_exp_blockwise(flat, 0.5, 0.5)
print("midpoint - chord =", mid - chord, "(nonnegative)")
