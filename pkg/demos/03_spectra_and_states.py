"""
Joint spectra, Schmidt modes and spatial Bell states
====================================================
"""

import numpy as np
from scipy.signal import find_peaks

from wgpdc.dispersion import PolingGrating
from wgpdc.modesolver import WaveguideSpec
from wgpdc.pdc import PumpSpec, SpectralGrid, build_jsa, build_jsas, enumerate_triplets, marginal_spectra, peak_triplets
from wgpdc.quantum import SpectralFilter, apply_filters, bell_state, schmidt

spec = WaveguideSpec(4.1, 9.3, 0.008, PolingGrating(8.92))
pump = PumpSpec()
triplets = enumerate_triplets(spec, pump)

# marginals on a +-60 nm grid around degeneracy
grid = SpectralGrid.around(pump.degenerate_nm, n=512)
jsas = build_jsas(triplets, pump, grid)
ls, s, li, i = marginal_spectra(jsas, pump)
idx, _ = find_peaks(s, prominence=0.1 * s.max())
print("signal marginal maxima (nm):", np.round(ls[idx], 2))
# A and B share one maximum near 760 nm; D only shows as a shoulder


# Schmidt number of one filtered peak
for peak in ("A", "C"):
    t = peak_triplets(triplets, peak)[0]
    fs, fi = SpectralFilter(t.peak[0], 3.0), SpectralFilter(t.peak[1], 10.0)
    local = SpectralGrid(t.peak[0] - 1.65, t.peak[0] + 1.65, t.peak[1] - 5.5, t.peak[1] + 5.5, 128, 128)
    dec = schmidt(apply_filters(build_jsa([(t, 1.0)], pump, local), fs, fi))
    print(f"peak {peak}: K = {dec.schmidt_number:.2f}, first coefficients {np.round(dec.coefficients[:3], 3)}")

# two processes in one peak: how distinguishable are their spectra?
for peak in ("B", "D", "E"):
    ref = peak_triplets(triplets, peak)
    cs = np.mean([t.peak[0] for t in ref])
    ci = np.mean([t.peak[1] for t in ref])
    fs, fi = SpectralFilter(cs, 3.0), SpectralFilter(ci, 10.0)
    local = SpectralGrid(cs - 1.65, cs + 1.65, ci - 5.5, ci + 5.5, 128, 128)
    parts = [apply_filters(build_jsa([(t, 1.0)], pump, local), fs, fi) for t in ref]
    state, fid, ovl = bell_state(peak, ref, parts)
    basis = " + ".join(f"|{a}{b}>" for a, b in state.basis)
    print(f"peak {peak}: {state.name} = ({basis})/sqrt2, spectral overlap {ovl:.3f}, F = {fid:.3f}")
