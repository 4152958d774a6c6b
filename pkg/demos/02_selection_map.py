# %% [markdown]
# # Where the key comes from
#
# Tabulate dI = I_AB - I_AE over (E, x) at 50% loss and trace the selection
# threshold x*(E). Writes `selection_map.png` if matplotlib is available.

# %%
import numpy as np

from cvpostselect import GridSpec, info_map

m = info_map(0.5, GridSpec(e_max=4, x_max=4, n_e=161, n_x=321))
print("positive fraction of the grid:", float(np.mean(m.values > 0)))
for e in (0.25, 0.5, 1.0, 2.0, 3.0):
    i = int(np.argmin(abs(m.E - e)))
    print(f"E={m.E[i]:.3f}  x*={m.boundary[i]:.4f}")

# %%
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None

if plt is not None:
    fig, ax = plt.subplots(figsize=(5, 4))
    mesh = ax.pcolormesh(m.x, m.E, m.values, cmap="gray", vmin=-1, vmax=1, shading="auto")
    ax.plot(m.boundary, m.E, "r-", lw=1)
    ax.plot(-m.boundary, m.E, "r-", lw=1)
    ax.set_xlabel("x")
    ax.set_ylabel("E")
    fig.colorbar(mesh, label="I_AB - I_AE [bits]")
    fig.savefig("selection_map.png", dpi=120, bbox_inches="tight")
