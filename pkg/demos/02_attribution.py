"""
Shapley attributions: exact enumeration vs the kernel solver
============================================================

Explains a single prediction both ways, then derives the waterfall, the
global summary, and dependence data used by the chat UI and external tools.
"""

import numpy as np

from shapchat import (
    BackgroundSet,
    TrainParams,
    exact_shap,
    explain_table,
    generate_synthetic_battery_table,
    global_summary,
    kernel_shap,
    top_features,
    train_gbdt,
    waterfall_data,
)
from shapchat.summaries import dependence_data

table = generate_synthetic_battery_table(300, noise_sigma=0.01, seed=7)
model = train_gbdt(table, TrainParams(n_trees=40, max_depth=3, learning_rate=0.2, seed=7))
background = BackgroundSet.from_table(table, max_rows=50, seed=7)

# a stressed battery: hot, fast-charged, deep discharge
instance = ("NCA", 2400.0, 44.0, 92.0, 2.7, 2900.0, 35.0)

exact = exact_shap(model, instance, background)
kernel = kernel_shap(model, instance, background, budget="all")
print(f"prediction {exact.prediction:.4f}, baseline {exact.base_value:.4f}")
print(f"max |exact - kernel| per feature: "
      f"{max(abs(a - b) for a, b in zip(exact.shap_values, kernel.shap_values)):.2e}")

# local accuracy: baseline + sum of attributions reproduces the prediction
assert abs(exact.base_value + sum(exact.shap_values) - exact.prediction) < 1e-9

waterfall = waterfall_data(exact, max_display=5)
print("\nwaterfall (top 5):")
for name, value, shap in waterfall.contributions:
    print(f"  {name:28s} {shap:+.4f}")
print(f"  remainder {waterfall.remainder:+.4f} -> final {waterfall.final_value:.4f}")

# batch explanations feed the global products
explanations = explain_table(model, table, background, method="exact")
summary = global_summary(explanations)
order = top_features(summary, 3)
print("\nmost influential features overall:")
for i in order:
    print(f"  {model.schema.names[i]:28s} mean |SHAP| = {summary.mean_abs_shap[i]:.5f}")

dependence = dependence_data(explanations, order[0], order[1])
print(f"\ndependence cloud for {model.schema.names[order[0]]}: "
      f"{len(dependence.points)} points, colored by {model.schema.names[order[1]]}")
