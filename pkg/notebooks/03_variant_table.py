# %% [markdown]
# # Comparing architecture variants
#
# Train each variant tag once on a short series and print the comparison
# table that `mtpnet ablate` writes. The numbers from such a short run are
# noisy; the point is the workflow.

# %%
from mtpnet.config import RunConfig
from mtpnet.data import synth_multiseasonal
from mtpnet.evaluation import ablation_suite, format_reports
from mtpnet.experiment import build_model

run = RunConfig(lookback_I=48, horizon_H=24, patch_sizes=(4, 12), channels_c=4, heads=2, epochs=2,
                decomp_kernels=(13,), train_stride=4).validate()
raw = synth_multiseasonal(1500, 2, periods=(12, 48), noise_std=0.2, seed=0)
variants = ("full", "no_inter_scale", "no_all_scale", "bottom_up", "fine", "coarse", "spatial", "temporal")

# %%
for v in variants:
    print(f"{v:15s} {build_model(run, 2, v).num_parameters():6d} parameters")

# %%
reports, table = ablation_suite(run, raw, horizons=(24,), variants=variants, seeds=(1,))
print(format_reports(reports))
print(table)
