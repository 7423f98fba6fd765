"""Two-photon state analysis: filtering, Schmidt modes, spatial Bell states, coincidences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .modesolver import ModeLabel
from .pdc import PEAK_LABELS, PEAK_PROCESSES, JointSpectralAmplitude, PumpSpec, build_jsas

SIGNAL_FILTER_FWHM_NM = 3.0
IDLER_FILTER_FWHM_NM = 10.0


class DegenerateInputError(ValueError):
    pass


class NotEntangledError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralFilter:
    """Band-pass filter with unit peak transmission.

    ``shape`` is ``"rect"`` (default, angle-tuned interference filter) or
    ``"gauss"``; for the Gaussian the FWHM refers to intensity transmission.
    An infinite FWHM passes everything.
    """

    center_nm: float
    fwhm_nm: float
    shape: str = "rect"

    def __post_init__(self):
        if self.shape not in ("rect", "gauss"):
            raise ValueError(f"unknown filter shape {self.shape!r}")
        if not self.fwhm_nm > 0:
            raise ValueError("filter bandwidth must be positive")

    @classmethod
    def all_pass(cls) -> "SpectralFilter":
        return cls(0.0, math.inf)

    def transmission(self, wavelength_nm):
        """Field transmission in [0, 1]."""
        lam = np.asarray(wavelength_nm, dtype=float)
        if math.isinf(self.fwhm_nm):
            return np.ones_like(lam)
        dx = lam - self.center_nm
        if self.shape == "rect":
            return (np.abs(dx) <= self.fwhm_nm / 2).astype(float)
        return np.exp(-2 * math.log(2) * (dx / self.fwhm_nm) ** 2)


def apply_filters(jsa: JointSpectralAmplitude, signal_filter: SpectralFilter, idler_filter: SpectralFilter):
    """Multiply every component by t_s(ls) t_i(li).

    A passband that misses the grid gives an all-zero amplitude, not an error.
    """
    ts = signal_filter.transmission(jsa.signal_nm)
    ti = idler_filter.transmission(jsa.idler_nm)
    window = np.outer(ts, ti)
    return jsa.map_components(lambda a: a * window)


# --------------------------------------------------------------------------
# Schmidt decomposition


@dataclass(frozen=True)
class SchmidtDecomposition:
    """A = norm * sum_k coefficients[k] * outer(signal_modes[k], idler_modes[k]).

    Mode vectors are orthonormal under the plain grid inner product.
    """

    coefficients: np.ndarray
    signal_modes: np.ndarray
    idler_modes: np.ndarray
    norm: float
    reconstruction_error: float

    @property
    def schmidt_number(self) -> float:
        return float(1 / np.sum(self.coefficients**4))

    def reconstruct(self, rank=None):
        k = len(self.coefficients) if rank is None else rank
        return self.norm * (self.signal_modes[:k].T * self.coefficients[:k]) @ self.idler_modes[:k]

    def to_dict(self, n_coefficients=None) -> dict:
        c = self.coefficients if n_coefficients is None else self.coefficients[:n_coefficients]
        return {
            "coefficients": [float(x) for x in c],
            "schmidt_number": self.schmidt_number,
            "reconstruction_error": self.reconstruction_error,
        }


def schmidt(jsa) -> SchmidtDecomposition:
    """Singular-value factorization of a discretized amplitude.

    Accepts a :class:`JointSpectralAmplitude` (its coherent amplitude is
    used) or a plain 2D array.
    """
    a = jsa.amplitude if isinstance(jsa, JointSpectralAmplitude) else np.asarray(jsa)
    if a.ndim != 2:
        raise ValueError("amplitude must be two-dimensional")
    norm = float(np.linalg.norm(a))
    if norm == 0 or not math.isfinite(norm):
        raise DegenerateInputError("amplitude is identically zero")
    u, s, vh = np.linalg.svd(a / norm, full_matrices=False)
    coeffs = s / math.sqrt(np.sum(s**2))
    dec = SchmidtDecomposition(coeffs, u.T, vh, norm * math.sqrt(np.sum(s**2)), 0.0)
    err = float(np.linalg.norm(a - dec.reconstruct()) / norm)
    return SchmidtDecomposition(coeffs, u.T, vh, dec.norm, err)


# --------------------------------------------------------------------------
# spatial Bell states


@dataclass(frozen=True)
class SpatialTwoModeState:
    basis: tuple  # ((signal label, idler label), ...)
    coefficients: np.ndarray
    name: str = ""

    def __post_init__(self):
        if len(self.basis) != len(self.coefficients):
            raise ValueError("basis and coefficient counts differ")
        if abs(np.linalg.norm(self.coefficients) - 1) > 1e-12:
            raise ValueError("state must have unit norm")


# two-mode basis of each entangled peak: ordered (signal, idler) pairs
BELL_BASES = {
    "B": (((ModeLabel(0, 0), ModeLabel(0, 1)), (ModeLabel(0, 1), ModeLabel(0, 0))), "Psi+"),
    "D": (((ModeLabel(0, 1), ModeLabel(0, 2)), (ModeLabel(0, 2), ModeLabel(0, 1))), "Psi+"),
    "E": (((ModeLabel(1, 0), ModeLabel(1, 0)), (ModeLabel(0, 2), ModeLabel(0, 2))), "Phi+"),
}


def spectral_overlap(a, b) -> float:
    """|<a|b>| / (|a| |b|) with the grid inner product."""
    a, b = np.asarray(a), np.asarray(b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    # the quotient below can miss 1 by an ulp or two for identical inputs
    if a.shape == b.shape and np.array_equal(a, b):
        return 1.0
    return float(min(abs(np.vdot(a, b)) / (na * nb), 1.0))


def bell_state(peak: str, triplets, jsas):
    """Postselected spatial state of a two-process peak.

    ``triplets`` are the peak's two processes and ``jsas`` their (filtered)
    single-process JSAs, in the same order.  Returns ``(state, fidelity,
    overlap)``; fidelity = (1 + overlap) / 2 is a diagnostic for how far
    residual spectral distinguishability spoils the ideal Bell state.
    """
    if peak not in PEAK_LABELS:
        raise KeyError(f"unknown peak {peak!r}")
    if peak not in BELL_BASES:
        raise NotEntangledError(f"peak {peak} comes from a single process")
    triplets, jsas = list(triplets), list(jsas)
    if len(triplets) != 2 or len(jsas) != 2:
        raise NotEntangledError(f"peak {peak} needs exactly two contributing processes")
    if {t.labels for t in triplets} != set(PEAK_PROCESSES[peak]):
        raise ValueError(f"processes {[str(t) for t in triplets]} do not make up peak {peak}")
    basis, name = BELL_BASES[peak]
    state = SpatialTwoModeState(basis, np.full(2, 1 / math.sqrt(2), dtype=complex), name)
    overlap = spectral_overlap(jsas[0].amplitude, jsas[1].amplitude)
    return state, 0.5 * (1 + overlap), overlap


# --------------------------------------------------------------------------
# coincidences


def coincidence_from_jsas(jsas, pump: PumpSpec, signal_filters, idler_filters):
    """Filtered pair rates, entry (i, j) for signal filter i and idler filter j.

    Normalized so the largest entry is 1 (an all-zero matrix stays zero).
    """
    jsas = list(jsas)
    m = np.zeros((len(signal_filters), len(idler_filters)))
    for jsa in jsas:
        frac = pump.fraction(jsa.pump_mode) if jsa.pump_mode is not None else 1.0
        inten = frac * jsa.intensity
        ts = np.array([f.transmission(jsa.signal_nm) ** 2 for f in signal_filters])
        ti = np.array([f.transmission(jsa.idler_nm) ** 2 for f in idler_filters])
        m += ts @ inten @ ti.T
    peak = m.max()
    return m / peak if peak > 0 else m


def peak_filters(clusters, labels=PEAK_LABELS):
    """One 3 nm signal and one 10 nm idler filter per lettered cluster.

    Filters sit on the cluster's mean signal and idler peaks.
    """
    by_label = {c.label: c for c in clusters}
    missing = [l for l in labels if l not in by_label]
    if missing:
        raise KeyError(f"no model cluster for peak(s) {', '.join(missing)}")
    signal = [SpectralFilter(by_label[l].signal_nm, SIGNAL_FILTER_FWHM_NM) for l in labels]
    idler = [SpectralFilter(by_label[l].idler_nm, IDLER_FILTER_FWHM_NM) for l in labels]
    return signal, idler


def coincidence_matrix(triplets, pump: PumpSpec, signal_filters, idler_filters, grid):
    """Coincidence rates for each (signal, idler) filter setting, max entry 1."""
    return coincidence_from_jsas(build_jsas(triplets, pump, grid), pump, signal_filters, idler_filters)
