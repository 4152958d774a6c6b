# %% [markdown]
# # Key rate against loss and modulation width

# %%
from cvpostselect import ChannelParams, GridSpec, key_rate, optimize_d

grid = GridSpec()

for loss in (0.0, 0.25, 0.5, 0.75, 0.9):
    r = key_rate(ChannelParams.from_loss(loss, 2.1), grid)
    print(f"loss={loss:.2f}  R_k/R_r={r.rate:.5f}  kept={r.selected_mass:.3f}  converged={r.converged}")

# %% [markdown]
# The width of Alice's amplitude distribution trades Bob's signal strength
# against Eve's. Optimize it for 50% and 75% loss.

# %%
for eta in (0.5, 0.25):
    d, r = optimize_d(eta, grid)
    print(f"eta={eta}: d*={d:.3f}  R_k/R_r={r.rate:.5f}")
