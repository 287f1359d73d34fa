"""
Factorial campaign and operating-time model
===========================================

Builds the 256-run resolution V design, simulates one soil, runs the
ANOVA on operating time, fits the significant-term model and evaluates
the rt x tm response surface.  Takes about half a minute per soil.
"""

import sys

import numpy as np

from irrigsim.doe import FACTORS, generate_design, run_campaign
from irrigsim.stats import anova, ols_fit, significant_terms, surface_grid

soil = sys.argv[1] if len(sys.argv) > 1 else "sandy"

design = generate_design()
print(f"design: {design.n_runs} runs x {len(design.factors)} factors, resolution {design.resolution}")
print("generators:", ", ".join(design.generator_words()))

camp = run_campaign(soil, design, seed=0)
r1, r2 = camp.response("R1"), camp.response("R2")
print(f"\n{soil}: runs below threshold {np.count_nonzero(r1)}, runs with percolation {np.count_nonzero(r2)}")
sq, rel = camp.error_sums()
print(f"sum of squared errors {sq:.4g} mm^2, of squared relative errors {rel:.4g}")

y = camp.response("R4")
table = anova(design, y)
print("\n" + table.to_text())

terms = significant_terms(table, 0.05, FACTORS)
model = ols_fit(design, y, terms)
print("\n" + model.to_text())

# Operating time falls as the irrigation rate and wake period rise.
grid = surface_grid(model, "rt", "tm", resolution=5)
print("\npredicted operating time (rows tm = -1..1, columns rt = -1..1):")
for row in grid.z:
    print("  " + " ".join(f"{v:8.1f}" for v in row))
