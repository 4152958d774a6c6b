# %% [markdown]
# # Information balance of one effective channel
#
# At 50% loss and effective amplitude E = 1, Bob's two outcome densities
# cross at x = 0. The further out Bob's outcome lands, the more he knows,
# while Eve's knowledge is fixed by E alone.

# %%
import numpy as np

from cvpostselect import breakdown, bob_conditional_density, boundary_x, error_prob

eta, E = 0.5, 1.0

# %%
for x in (0.0, 0.25, 0.5, 0.6, 1.0, 2.0):
    b = breakdown(eta, E, x)
    print(f"x={x:4.2f}  f={b.f:.4f}  I_AE={b.i_ae:.4f}  p_e={b.p_e:.5f}  I_AB={b.i_ab:.4f}  dI={b.delta:+.4f}")

# %% [markdown]
# Channels with |x| above the threshold carry more information to Bob than
# Eve can extract.

# %%
print("threshold x*(E=1) =", boundary_x(eta, E))

# %%
x = np.linspace(-2, 2, 9)
print("P(x|0):", np.round(bob_conditional_density(eta, E, x, 0), 4))
print("P(x|1):", np.round(bob_conditional_density(eta, E, x, 1), 4))
print("p_e   :", np.round(error_prob(eta, E, x), 4))
