"""Phase matching, mode triplets and joint spectral amplitudes.

A process is a (pump, signal, idler) mode triplet.  Its phase-matched peak
is the root of

    dbeta(ls) = beta_p(lp) - beta_s(ls) - beta_i(li) - K,   1/li = 1/lp - 1/ls

along the energy-conservation curve at the pump centre wavelength.
Propagation constants are in inverse micrometres, wavelengths in nm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.interpolate import CubicSpline

from .dispersion import IDLER_POL, PUMP_POL, SIGNAL_POL, WavelengthRangeError, grating_wavevector
from .modesolver import (
    CutoffError,
    Grid,
    GridError,
    GuidedMode,
    ModeLabel,
    WaveguideSpec,
    covering_grid,
    mode_profile,
    solve_modes,
)

SEARCH_WINDOW_NM = (746.0, 866.0)
DEFAULT_THRESHOLD = 0.05
CLUSTER_LINKAGE_NM = 3.0
PEAK_STEP_NM = 0.5

# modes seen in the five labelled peak pairs; anything else is "higher order"
LOW_ORDER_LABELS = frozenset(ModeLabel(*t) for t in [(0, 0), (0, 1), (0, 2), (1, 0)])

_L = ModeLabel
# (pump, signal, idler) assignments of the five observed peak pairs
PEAK_PROCESSES = {
    "A": ((_L(0, 0), _L(0, 0), _L(0, 0)),),
    "B": ((_L(0, 1), _L(0, 0), _L(0, 1)), (_L(0, 1), _L(0, 1), _L(0, 0))),
    "C": ((_L(0, 0), _L(0, 1), _L(0, 1)),),
    "D": ((_L(0, 1), _L(0, 1), _L(0, 2)), (_L(0, 1), _L(0, 2), _L(0, 1))),
    "E": ((_L(0, 0), _L(1, 0), _L(1, 0)), (_L(0, 0), _L(0, 2), _L(0, 2))),
}
PEAK_LABELS = tuple(PEAK_PROCESSES)


@dataclass(frozen=True)
class PumpSpec:
    """Pump centre, intensity FWHM (Gaussian) and modal power split."""

    center_nm: float = 403.3
    fwhm_nm: float = 0.8
    mode_fractions: Mapping = field(
        default_factory=lambda: {ModeLabel(0, 0): 0.625, ModeLabel(0, 1): 0.375}
    )

    def __post_init__(self):
        if not (self.center_nm > 0 and self.fwhm_nm > 0):
            raise ValueError("pump centre and bandwidth must be positive")
        fractions = {ModeLabel.parse(k): float(v) for k, v in dict(self.mode_fractions).items()}
        if any(not 0 <= v <= 1 for v in fractions.values()):
            raise ValueError("pump mode fractions must lie in [0, 1]")
        if abs(sum(fractions.values()) - 1) > 1e-9:
            raise ValueError(f"pump mode fractions sum to {sum(fractions.values())}, not 1")
        object.__setattr__(self, "mode_fractions", dict(sorted(fractions.items())))

    @property
    def degenerate_nm(self) -> float:
        return 2 * self.center_nm

    def fraction(self, label) -> float:
        return self.mode_fractions.get(ModeLabel.parse(label), 0.0)

    @property
    def sigma_width(self) -> float:
        """Intensity FWHM in inverse wavelength (1/nm)."""
        return self.fwhm_nm / self.center_nm**2

    def envelope(self, signal_nm, idler_nm):
        """Field amplitude of the pump at lp = 1 / (1/ls + 1/li); peak value 1."""
        detuning = 1 / np.asarray(signal_nm) + 1 / np.asarray(idler_nm) - 1 / self.center_nm
        return np.exp(-2 * math.log(2) * (detuning / self.sigma_width) ** 2)


def idler_wavelength(signal_nm, pump_nm):
    return 1 / (1 / pump_nm - 1 / np.asarray(signal_nm, dtype=float))


@dataclass(frozen=True)
class ModeTriplet:
    pump: GuidedMode
    signal: GuidedMode
    idler: GuidedMode
    overlap: float
    peak: tuple | None = None

    @property
    def labels(self) -> tuple:
        return (self.pump.label, self.signal.label, self.idler.label)

    @property
    def higher_order(self) -> bool:
        return any(lab not in LOW_ORDER_LABELS for lab in self.labels)

    def __str__(self):
        p, s, i = self.labels
        return f"{p}p -> {s}s + {i}i"


# --------------------------------------------------------------------------
# spatial overlap


def overlap_from_profiles(pump_profile, signal_profile, idler_profile, grid: Grid) -> float:
    shapes = {np.shape(pump_profile), np.shape(signal_profile), np.shape(idler_profile)}
    if len(shapes) != 1 or shapes.pop() != (grid.ny, grid.nx):
        raise GridError("profiles must be sampled on the same grid")
    return float(grid.integrate(pump_profile * signal_profile * idler_profile))


def overlap_coefficient(pump: GuidedMode, signal: GuidedMode, idler: GuidedMode, grid=None, n=512) -> float:
    """Integral of u_p u_s u_i over the transverse plane (1/um).

    Each profile is unit-normalized on the common grid.  Horizontal parity
    makes the integral vanish unless m_p = m_s + m_i (mod 2).
    """
    if grid is None:
        grid = covering_grid([pump, signal, idler], n=n)
    return overlap_from_profiles(*(mode_profile(md, grid) for md in (pump, signal, idler)), grid)


# --------------------------------------------------------------------------
# phase matching


def phase_mismatch(pump: GuidedMode, signal: GuidedMode, idler: GuidedMode, signal_nm, pump_nm):
    """dbeta along the energy-conservation curve (1/um); vectorized in signal_nm."""
    ls = np.asarray(signal_nm, dtype=float)
    li = idler_wavelength(ls, pump_nm)
    k = grating_wavevector(pump.spec.poling)
    out = pump.beta(pump_nm) - signal.beta(ls) - idler.beta(li) - k
    return float(out) if np.ndim(out) == 0 else out


def _mismatch_curve(pump, signal, idler, signal_nm, pump_nm):
    li = idler_wavelength(signal_nm, pump_nm)
    k = grating_wavevector(pump.spec.poling)
    return (
        pump.beta(pump_nm, strict=False)
        - signal.beta(signal_nm, strict=False)
        - idler.beta(li, strict=False)
        - k
    )


def find_peak(pump, signal, idler, window=SEARCH_WINDOW_NM, pump_nm=None, step_nm=PEAK_STEP_NM) -> list:
    """Phase-matched (signal, idler) wavelength pairs inside the signal window.

    dbeta is sampled every ``step_nm`` and interpolated with a cubic
    spline whose roots give the peaks; all roots are returned, sorted by
    signal wavelength.  Stretches where a mode is cut off are skipped.
    """
    if pump_nm is None:
        pump_nm = pump.wavelength_nm
    lo, hi = window
    n = max(int(math.ceil((hi - lo) / step_nm)) + 1, 4)
    ls = np.linspace(lo, hi, n)
    db = _mismatch_curve(pump, signal, idler, ls, pump_nm)
    ok = np.isfinite(db)
    roots = []
    # contiguous guided stretches
    edges = np.flatnonzero(np.diff(np.concatenate(([0], ok.astype(int), [0]))))
    for start, stop in zip(edges[::2], edges[1::2]):
        if stop - start < 2:
            continue
        x, y = ls[start:stop], db[start:stop]
        if stop - start < 4:
            crossings = np.flatnonzero(np.sign(y[:-1]) * np.sign(y[1:]) <= 0)
            roots.extend(x[j] - y[j] * (x[j + 1] - x[j]) / (y[j + 1] - y[j]) for j in crossings)
            continue
        spline = CubicSpline(x, y)
        roots.extend(float(r) for r in spline.roots(extrapolate=False) if x[0] <= r <= x[-1])
    roots = sorted(set(roots))
    return [(r, float(idler_wavelength(r, pump_nm))) for r in roots]


def triplet(spec: WaveguideSpec, pump: PumpSpec, labels, window=SEARCH_WINDOW_NM, grid=None) -> list:
    """ModeTriplets (one per peak root) for an explicit (pump, signal, idler) label set."""
    p, s, i = (ModeLabel.parse(x) for x in labels)
    deg = pump.degenerate_nm
    modes = (
        GuidedMode.from_label(spec, PUMP_POL, p, pump.center_nm),
        GuidedMode.from_label(spec, SIGNAL_POL, s, deg),
        GuidedMode.from_label(spec, IDLER_POL, i, deg),
    )
    ov = overlap_coefficient(*modes, grid=grid)
    peaks = find_peak(*modes, window=window, pump_nm=pump.center_nm)
    return [ModeTriplet(*modes, ov, pk) for pk in peaks] or [ModeTriplet(*modes, ov, None)]


def guided_sets(spec: WaveguideSpec, pump: PumpSpec, max_label=ModeLabel(8, 8)):
    """Guided pump (with power), signal and idler modes at the design wavelengths."""
    pump_modes = [
        md for md in solve_modes(spec, PUMP_POL, pump.center_nm, max_label) if pump.fraction(md.label) > 0
    ]
    signal_modes = solve_modes(spec, SIGNAL_POL, pump.degenerate_nm, max_label)
    idler_modes = solve_modes(spec, IDLER_POL, pump.degenerate_nm, max_label)
    return pump_modes, signal_modes, idler_modes


def enumerate_triplets(
    spec: WaveguideSpec,
    pump: PumpSpec,
    threshold=DEFAULT_THRESHOLD,
    window=SEARCH_WINDOW_NM,
    max_label=ModeLabel(8, 8),
    n_grid=512,
) -> list:
    """All phase-matched processes with |overlap| above ``threshold`` (1/um).

    Sorted by signal peak wavelength.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    pump_modes, signal_modes, idler_modes = guided_sets(spec, pump, max_label)
    if not (pump_modes and signal_modes and idler_modes):
        return []
    grid = covering_grid(pump_modes + signal_modes + idler_modes, n=n_grid)
    profiles = {id(md): mode_profile(md, grid) for md in pump_modes + signal_modes + idler_modes}
    out = []
    for p in pump_modes:
        for s in signal_modes:
            ps = profiles[id(p)] * profiles[id(s)]
            for i in idler_modes:
                ov = float(grid.integrate(ps * profiles[id(i)]))
                if abs(ov) <= threshold:
                    continue
                for peak in find_peak(p, s, i, window=window, pump_nm=pump.center_nm):
                    out.append(ModeTriplet(p, s, i, ov, peak))
    out.sort(key=lambda t: (t.peak[0], t.labels))
    return out


@dataclass(frozen=True)
class PeakCluster:
    label: str
    triplets: tuple
    higher_order: bool

    @property
    def signal_nm(self) -> float:
        return float(np.mean([t.peak[0] for t in self.triplets]))

    @property
    def idler_nm(self) -> float:
        return float(np.mean([t.peak[1] for t in self.triplets]))

    @property
    def processes(self) -> set:
        return {t.labels for t in self.triplets}


def cluster_triplets(triplets, linkage_nm=CLUSTER_LINKAGE_NM) -> list:
    """Single-linkage grouping of peaks; gaps above ``linkage_nm`` in either arm split.

    Clusters with at least one low-order process are lettered A, B, ... by
    ascending signal wavelength; the rest are flagged higher order (H1, H2, ...).
    """
    ordered = sorted((t for t in triplets if t.peak is not None), key=lambda t: t.peak[0])
    groups = []
    for t in ordered:
        if groups:
            prev = groups[-1][-1]
            gap = max(abs(t.peak[0] - prev.peak[0]), abs(t.peak[1] - prev.peak[1]))
            if gap <= linkage_nm:
                groups[-1].append(t)
                continue
        groups.append([t])
    clusters, n_low, n_high = [], 0, 0
    for g in groups:
        high = all(t.higher_order for t in g)
        if high:
            n_high += 1
            label = f"H{n_high}"
        else:
            label = _letter(n_low)
            n_low += 1
        clusters.append(PeakCluster(label, tuple(g), high))
    return clusters


def _letter(k: int) -> str:
    s = ""
    k += 1
    while k:
        k, r = divmod(k - 1, 26)
        s = chr(65 + r) + s
    return s


def peak_triplets(triplets, peak: str) -> list:
    """Triplets matching the reference process assignment of an observed peak."""
    if peak not in PEAK_PROCESSES:
        raise KeyError(f"unknown peak label {peak!r}; expected one of {PEAK_LABELS}")
    wanted = PEAK_PROCESSES[peak]
    found = [t for t in triplets if t.labels in wanted]
    found.sort(key=lambda t: wanted.index(t.labels))
    return found


# --------------------------------------------------------------------------
# joint spectral amplitude


@dataclass(frozen=True)
class SpectralGrid:
    signal_min: float
    signal_max: float
    idler_min: float
    idler_max: float
    n_signal: int = 1024
    n_idler: int = 1024

    def __post_init__(self):
        if self.n_signal < 2 or self.n_idler < 2:
            raise ValueError("spectral grid needs at least 2x2 points")
        if not (self.signal_max > self.signal_min and self.idler_max > self.idler_min):
            raise ValueError("empty spectral grid")

    @classmethod
    def around(cls, center_nm, half_span_nm=60.0, n=1024) -> "SpectralGrid":
        return cls(center_nm - half_span_nm, center_nm + half_span_nm,
                   center_nm - half_span_nm, center_nm + half_span_nm, n, n)

    @property
    def signal_nm(self):
        return np.linspace(self.signal_min, self.signal_max, self.n_signal)

    @property
    def idler_nm(self):
        return np.linspace(self.idler_min, self.idler_max, self.n_idler)

    @property
    def cell(self) -> tuple:
        return (
            (self.signal_max - self.signal_min) / (self.n_signal - 1),
            (self.idler_max - self.idler_min) / (self.n_idler - 1),
        )

    def subset(self, i0, i1, j0, j1) -> "SpectralGrid":
        s, i = self.signal_nm, self.idler_nm
        return SpectralGrid(s[i0], s[i1 - 1], i[j0], i[j1 - 1], i1 - i0, j1 - j0)


@dataclass(frozen=True)
class JointSpectralAmplitude:
    """Complex two-photon amplitude on a (signal, idler) wavelength grid.

    ``components`` maps each (signal mode, idler mode) pair to its own
    amplitude array (rows: signal).  Pairs in distinct spatial modes are
    orthogonal, so detected intensity is the sum of |component|^2;
    ``amplitude`` is the plain coherent sum.
    """

    grid: SpectralGrid
    components: Mapping
    processes: tuple = ()
    pump_mode: ModeLabel | None = None

    def __post_init__(self):
        shape = (self.grid.n_signal, self.grid.n_idler)
        for key, arr in self.components.items():
            if np.shape(arr) != shape:
                raise ValueError(f"component {key} has shape {np.shape(arr)}, grid is {shape}")

    @property
    def signal_nm(self):
        return self.grid.signal_nm

    @property
    def idler_nm(self):
        return self.grid.idler_nm

    @property
    def amplitude(self):
        total = np.zeros((self.grid.n_signal, self.grid.n_idler), dtype=complex)
        for arr in self.components.values():
            total = total + arr
        return total

    @property
    def intensity(self):
        total = np.zeros((self.grid.n_signal, self.grid.n_idler))
        for arr in self.components.values():
            total = total + np.abs(arr) ** 2
        return total

    def map_components(self, fn) -> "JointSpectralAmplitude":
        return JointSpectralAmplitude(
            self.grid, {k: fn(v) for k, v in self.components.items()}, self.processes, self.pump_mode
        )

    def transposed(self) -> "JointSpectralAmplitude":
        """Swap the roles of the two arms."""
        g = self.grid
        grid = SpectralGrid(g.idler_min, g.idler_max, g.signal_min, g.signal_max, g.n_idler, g.n_signal)
        comps = {(k[1], k[0]): v.T for k, v in self.components.items()}
        return JointSpectralAmplitude(grid, comps, self.processes, self.pump_mode)

    def power(self) -> float:
        ds, di = self.grid.cell
        return float(self.intensity.sum() * ds * di)


def _process_amplitude(triplet: ModeTriplet, pump: PumpSpec, grid: SpectralGrid, cache: dict):
    ls, li = grid.signal_nm, grid.idler_nm
    sigma = 1 / ls[:, None] + 1 / li[None, :]
    detuning = sigma - 1 / pump.center_nm
    mask = np.abs(detuning) <= 6 * pump.sigma_width
    out = np.zeros(sigma.shape, dtype=complex)
    if not mask.any():
        return out

    def cached_beta(mode, lam):
        key = (mode.label, mode.polarization, id(mode.spec))
        if key not in cache:
            cache[key] = mode.beta(lam, strict=False)
        return cache[key]

    bs = cached_beta(triplet.signal, ls)
    bi = cached_beta(triplet.idler, li)
    key = ("pump", triplet.pump.label)
    if key not in cache:
        cache[key] = triplet.pump.beta(1 / sigma[mask], strict=False)
    bp = cache[key]
    rows, cols = np.nonzero(mask)
    db = bp - bs[rows] - bi[cols] - grating_wavevector(triplet.pump.spec.poling)
    half = 0.5 * triplet.pump.spec.length_um * db
    env = np.exp(-2 * math.log(2) * (detuning[mask] / pump.sigma_width) ** 2)
    val = env * np.sinc(half / np.pi) * np.exp(1j * half)
    out[mask] = np.where(np.isfinite(val), val, 0.0)
    return out


def check_spectral_grid(spec: WaveguideSpec, grid: SpectralGrid):
    model = spec.dispersion
    for pol, lo, hi in ((SIGNAL_POL, grid.signal_min, grid.signal_max), (IDLER_POL, grid.idler_min, grid.idler_max)):
        vlo, vhi = model.valid_range(pol)
        if lo < vlo or hi > vhi:
            raise WavelengthRangeError(
                f"spectral grid [{lo:g}, {hi:g}] nm outside dispersion range [{vlo:g}, {vhi:g}] nm"
            )


def build_jsa(processes, pump: PumpSpec, grid: SpectralGrid) -> JointSpectralAmplitude:
    """JSA of processes that share one pump mode.

    ``processes`` is a sequence of (ModeTriplet, weight).  Each contributes
    weight * overlap * pump_envelope * sinc(dbeta L / 2) * exp(i dbeta L / 2);
    processes landing in the same (signal, idler) mode pair add coherently.
    """
    processes = tuple((t, float(w)) for t, w in processes)
    if not processes:
        raise ValueError("build_jsa needs at least one process")
    if any(not math.isfinite(w) for _, w in processes):
        raise ValueError("process weights must be finite")
    pump_labels = {t.pump.label for t, _ in processes}
    if len(pump_labels) != 1:
        raise ValueError("processes with different pump modes add incoherently; use build_jsas")
    check_spectral_grid(processes[0][0].pump.spec, grid)
    cache, comps = {}, {}
    for t, w in processes:
        key = (t.signal.label, t.idler.label)
        amp = w * t.overlap * _process_amplitude(t, pump, grid, cache)
        comps[key] = comps[key] + amp if key in comps else amp
    return JointSpectralAmplitude(grid, comps, processes, pump_labels.pop())


def build_jsas(triplets, pump: PumpSpec, grid: SpectralGrid, weight=1.0) -> list:
    """One JSA per pump mode (these add incoherently)."""
    by_pump = {}
    for t in triplets:
        by_pump.setdefault(t.pump.label, []).append((t, weight))
    return [build_jsa(procs, pump, grid) for _, procs in sorted(by_pump.items())]


def marginal_spectra(jsas, pump: PumpSpec):
    """Signal and idler intensity spectra.

    Returns ``(signal_nm, signal, idler_nm, idler)``.  Each JSA is weighted by
    its pump-mode power fraction; |amplitude|^2 is summed over the other arm.
    """
    jsas = list(jsas)
    if not jsas:
        raise ValueError("no JSAs given")
    grid = jsas[0].grid
    signal = np.zeros(grid.n_signal)
    idler = np.zeros(grid.n_idler)
    ds, di = grid.cell
    for jsa in jsas:
        if jsa.grid != grid:
            raise ValueError("JSAs must share one grid")
        frac = pump.fraction(jsa.pump_mode) if jsa.pump_mode is not None else 1.0
        inten = frac * jsa.intensity
        signal += inten.sum(axis=1) * di
        idler += inten.sum(axis=0) * ds
    return grid.signal_nm, signal, grid.idler_nm, idler
