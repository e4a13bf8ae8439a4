"""
Classifying faults in a dot product
===================================

Brute-force every flip of a short dot product, then reach the same tally
from exponent intervals alone through the precomputed lookup table.
"""
import numpy as np

from flipbound import dot_fault as df
from flipbound import lookup_table as lt

a = [2.0, 4.0]
b = [4.0, 2.0]
threshold = 3.0

records = df.enumerate_dot_errors(a, b)
exact = df.tally_dot_errors(records, threshold, region="exponent")
print("brute force (exponent bits):", exact.as_dict())

# The table answers the same question for whole exponent ranges.  For
# powers of two it agrees exactly with brute force.
table = lt.get_table(lt.ErrorModel(arithmetic="exact"), threshold)
ia, ib = df.extract_interval(a), df.extract_interval(b)
print("intervals:", ia.as_tuple(), ib.as_tuple())
cells = sum(table.counts[int(np.log2(x)) + 1023, int(np.log2(y)) + 1023].astype(int) for x, y in zip(a, b))
print("table cells for the actual exponents:", cells.tolist())

# a normalised vector keeps most flips harmless
q = np.full(16, 0.25)
v = np.linspace(1, 3, 16)
print("q . v over whole intervals:", df.classify_errors(df.UNIT_INTERVAL, df.extract_interval(v),
                                                         lt.get_table(lt.DEFAULT_MODEL, threshold)).shares)
