"""Bandwidth and cost of three transmission modes.

Raw streaming, classification only (send every trio uncompressed) and
compression only, against the combined trio codec.
"""
from pvcdict import CostModel, OperatingPoint, bandwidth_table

op = OperatingPoint(se=0.99, sp=0.953, rho=0.1, beta_n=49.7, beta_v=50.8)
cost = CostModel(hours=10)
print(f"{'mode':20s} {'fraction':>9s} {'MB':>8s} {'cost (cents)':>13s}")
for name, b, c in bandwidth_table(op, cost):
    print(f"{name:20s} {b:9.4f} {c.megabytes:8.2f} {c.cents:13.2f}")

print("\nsensitivity to specificity:")
for sp in (0.80, 0.90, 0.953, 0.99):
    rows = dict((n, b) for n, b, _ in bandwidth_table(OperatingPoint(0.99, sp, 0.1, 49.7, 50.8), cost))
    print(f"  Sp={sp:.3f}: trio fraction {rows['trio']:.4f}")
