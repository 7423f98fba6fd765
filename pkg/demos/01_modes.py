"""
Guided modes of the KTP channel
===============================

Effective indices of the channel at the pump and at degeneracy, for the
waveguide parameters that reproduce the measured peaks.
"""

import numpy as np

from wgpdc.dispersion import PolingGrating, default_model, group_index, refractive_index
from wgpdc.modesolver import WaveguideSpec, solve_modes

# bulk indices first: Y and Z differ by about 0.09 near 800 nm
model = default_model()
for lam in (403.3, 806.6):
    ny = refractive_index(model, "Y", lam)
    nz = refractive_index(model, "Z", lam)
    print(f"{lam:6.1f} nm   n_Y = {ny:.5f}  n_Z = {nz:.5f}  n_g,Y = {group_index(model, 'Y', lam):.4f}")

spec = WaveguideSpec(width_um=4.1, depth_um=9.3, delta_n=0.008, poling=PolingGrating(8.92))

# the pump guides many modes, the down-converted light only a handful
for pol, lam in (("Y", 403.3), ("Y", 806.6), ("Z", 806.6)):
    modes = solve_modes(spec, pol, lam)
    print(f"\n{pol} at {lam} nm: {len(modes)} guided modes")
    for md in modes[:8]:
        print(f"  {md.label}  n_eff = {md.n_eff:.6f}")

# a single branch can be followed in wavelength
md = solve_modes(spec, "Z", 806.6)[0]
lam = np.linspace(780, 880, 6)
print("\n(0,0) Z branch:", np.round(md.effective_index(lam), 6))
