# %% [markdown]
# # From a raw series to patch tokens
#
# A synthetic series with a daily (24) and a weekly-like (96) cycle on top of
# a gentle trend is split into trend and seasonal parts, then the seasonal
# part is cut into patches at two scales.

# %%
import numpy as np

from mtpnet.data import synth_multiseasonal
from mtpnet.decomposition import DecompositionConfig, decompose
from mtpnet.embedding import patch
from mtpnet.pyramid import to_tokens
from mtpnet.tensor import Tensor

raw = synth_multiseasonal(960, 2, periods=(24, 96), trend_slope=0.01, noise_std=0.1, seed=0)
window = raw.values[:96]
print("window", window.shape)

# %% [markdown]
# The moving average with kernel 25 tracks the slow trend; the remainder keeps
# both cycles.

# %%
parts = decompose(window, DecompositionConfig((25,)))
print("trend range   ", parts.trend.min().round(3), parts.trend.max().round(3))
print("seasonal range", parts.seasonal.min().round(3), parts.seasonal.max().round(3))
print("max reconstruction gap", np.abs(parts.seasonal + parts.trend - window).max())

# %% [markdown]
# Patching at p=4 and p=24 gives 24 and 4 patches. With one channel, each
# token is the p consecutive values of one variable.

# %%
seasonal = Tensor(parts.seasonal[None, None])  # (B=1, c=1, I, D)
for p in (4, 24):
    e = patch(seasonal, p)
    tokens = to_tokens(e.values)
    print(f"p={p:2d}: {e.n_patches} patches, tokens {tokens.shape}, left pad {e.pad_len}")

# %% [markdown]
# A look-back that is not a multiple of the patch size gets zeros on the left,
# so the newest step always ends the last patch.

# %%
e = patch(Tensor(parts.seasonal[None, None, :90]), 24)
print("I=90, p=24 ->", e.n_patches, "patches with", e.pad_len, "leading zeros")
