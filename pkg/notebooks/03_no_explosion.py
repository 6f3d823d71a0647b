# %% [markdown]
# # A Monte Carlo look at non-explosion
#
# The energy Y(u) = 1/2 ||u||_V^2 + 1/(2n) ||u||_L2n^2n is the Lyapunov
# function behind the no-explosion argument.  If E[Y(u(t ^ tau_l))] stays
# bounded as the level l grows, no finite-time blow-up shows up in the sample.

# %%
import numpy as np

from sphere_sh import (DriftParams, EnsembleConfig, NoiseModel, SchemeConfig, SpectralSpace,
                       khashminskii_report, norm_H, norm_V, run_ensemble)

sp = SpectralSpace(16, 16, pad_factor=2)
u0 = sp.mode(1, 1) + sp.mode(1, 2, 0.5) + sp.mode(2, 1, 0.3)
u0 = u0 / norm_H(u0)
fields = [sp.mode(1, 2) + sp.mode(2, 2, 0.5), sp.mode(2, 1, 0.7) + sp.mode(1, 3, 0.4)]
noise = NoiseModel([f * (0.1 / norm_V(f)) for f in fields])

# %%
levels = (2.0, 3.0, 4.0, 8.0, 16.0)
ens = EnsembleConfig(paths=16, T=0.2, dt_levels=(1e-3,), levels=levels, stride=20, master_seed=9)
est = run_ensemble(ens, u0, DriftParams(n=2), SchemeConfig("em_ito_exponential", renormalize=True), noise)
print(f"{est.completed} paths completed, {est.failed} overflowed")

# %%
rep = khashminskii_report(est, levels, n=2)
print("\n".join(rep.lines()))
