"""
Synthetic battery data and tree-ensemble training
==================================================

Generates telemetry with a known additive state-of-health law, fits a
gradient-boosted tree ensemble, and shows the model document round trip.
"""

from shapchat import TrainParams, generate_synthetic_battery_table, train_gbdt
from shapchat.boosting import training_rmse_curve
from shapchat.model import load_ensemble, save_ensemble

# 500 rows, some measurement noise, reproducible
table = generate_synthetic_battery_table(500, noise_sigma=0.01, seed=42)
print(f"features: {table.schema.names}")
print(f"first row: {table.rows[0]}  ->  soh={table.targets[0]:.4f}")

model = train_gbdt(
    table,
    TrainParams(n_trees=60, max_depth=3, learning_rate=0.15, min_samples_leaf=4, seed=42),
)
curve = training_rmse_curve(table, model)
print(f"training RMSE: {curve[0]:.4f} (base) -> {curve[-1]:.4f} after {len(model.trees)} trees")

# the model document is plain JSON; loading it back predicts identically
document = save_ensemble(model)
reloaded = load_ensemble(document)
row = table.rows[0]
assert reloaded.predict_row(row) == model.predict_row(row)
print(f"document round trip OK ({len(document)} bytes)")
print(f"prediction for the first row: {model.predict_row(row):.4f}")
