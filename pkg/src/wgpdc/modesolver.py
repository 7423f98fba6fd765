"""Guided modes of a rectangular step-index channel.

Effective-index method, vertical direction first: the vertical slab is
air (n = 1) above the core and substrate below it; its effective index then
serves as the core index of a symmetric horizontal slab clad by substrate on
both sides.  Profiles are separable, X(x) * Y(y), scalar (polarization only
enters through the bulk index).

Coordinates are in micrometres: x is centred on the channel, y points up
with the air interface at y = 0 and the core occupying -depth <= y <= 0.
"""

from __future__ import annotations

import math
import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .dispersion import (
    PolingGrating,
    Polarization,
    SellmeierModel,
    default_model,
    refractive_index,
)

AIR_INDEX = 1.0
N_SCAN = 2000
ORIENTATIONS = ("width_horizontal", "width_vertical")


class CutoffError(ValueError):
    """Raised when a mode is not guided at the requested wavelength."""


class GridError(ValueError):
    pass


class ModeLabel(NamedTuple):
    """Node counts (m horizontal, n vertical)."""

    m: int
    n: int

    def __str__(self):
        return f"({self.m},{self.n})"

    @classmethod
    def parse(cls, text) -> "ModeLabel":
        if isinstance(text, ModeLabel):
            return text
        if isinstance(text, (tuple, list)):
            m, n = text
        else:
            m, n = str(text).strip().strip("()").split(",")
        label = cls(int(m), int(n))
        if label.m < 0 or label.n < 0:
            raise ValueError(f"mode label must be non-negative, got {label}")
        return label


@dataclass(frozen=True)
class WaveguideSpec:
    width_um: float
    depth_um: float
    delta_n: float
    poling: PolingGrating
    length_mm: float = 10.0
    dispersion: SellmeierModel = field(default_factory=default_model, repr=False)
    orientation: str = "width_horizontal"

    def __post_init__(self):
        for name in ("width_um", "depth_um", "length_mm"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive, got {value}")
        # delta_n = 0 is allowed: it simply guides nothing
        if not 0 <= self.delta_n < 0.1:
            raise ValueError(f"delta_n must lie in [0, 0.1), got {self.delta_n}")
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")

    @property
    def horizontal_um(self) -> float:
        return self.width_um if self.orientation == "width_horizontal" else self.depth_um

    @property
    def vertical_um(self) -> float:
        return self.depth_um if self.orientation == "width_horizontal" else self.width_um

    @property
    def length_um(self) -> float:
        return self.length_mm * 1e3

    def substrate_index(self, pol, wavelength_nm):
        return refractive_index(self.dispersion, pol, wavelength_nm)

    def core_index(self, pol, wavelength_nm):
        return self.substrate_index(pol, wavelength_nm) + self.delta_n

    def replace(self, **changes) -> "WaveguideSpec":
        return dataclasses.replace(self, **changes)


# --------------------------------------------------------------------------
# slab dispersion relation


def _wavenumbers(n_eff, n_left, n_core, n_right, k0):
    kappa = k0 * np.sqrt(np.maximum(n_core**2 - n_eff**2, 0.0))
    g_left = k0 * np.sqrt(np.maximum(n_eff**2 - n_left**2, 0.0))
    g_right = k0 * np.sqrt(np.maximum(n_eff**2 - n_right**2, 0.0))
    return kappa, g_left, g_right


def slab_residual(n_eff, n_left, n_core, n_right, thickness_um, wavelength_nm, order):
    """Phase residual (radians) of the scalar slab dispersion relation.

    kappa t - atan(g_left / kappa) - atan(g_right / kappa) - order * pi
    """
    k0 = 2e3 * np.pi / wavelength_nm
    kappa, gl, gr = _wavenumbers(np.asarray(n_eff, float), n_left, n_core, n_right, k0)
    return kappa * thickness_um - np.arctan2(gl, kappa) - np.arctan2(gr, kappa) - order * np.pi


def _pole_free(n_eff, n_left, n_core, n_right, thickness_um, k0):
    # (kappa^2 - gl gr) sin(kappa t) - kappa (gl + gr) cos(kappa t), scaled by 1/k0^2
    kappa, gl, gr = _wavenumbers(n_eff, n_left, n_core, n_right, k0)
    kt = kappa * thickness_um
    return ((kappa**2 - gl * gr) * np.sin(kt) - kappa * (gl + gr) * np.cos(kt)) / k0**2


def slab_mode_count(n_left, n_core, n_right, thickness_um, wavelength_nm) -> int:
    """Guided-mode count from the normalized-frequency cutoff formula."""
    n_hi, n_lo = max(n_left, n_right), min(n_left, n_right)
    if n_core <= n_hi:
        return 0
    v = 2e3 * math.pi / wavelength_nm * thickness_um * math.sqrt(n_core**2 - n_hi**2)
    asym = math.atan(math.sqrt((n_hi**2 - n_lo**2) / (n_core**2 - n_hi**2)))
    if v <= asym:
        return 0
    # order m is guided when m * pi + asym < v
    return math.ceil((v - asym) / math.pi)


def solve_slab(n_left, n_core, n_right, thickness_um, wavelength_nm, n_scan=N_SCAN):
    """All guided effective indices of a three-layer slab, descending.

    The pole-free form of the dispersion relation is sampled on ``n_scan``
    points between the higher cladding index and the core index; each
    sign change is refined by bisection down to adjacent floats.
    """
    if not thickness_um > 0:
        raise ValueError(f"thickness must be positive, got {thickness_um}")
    n_hi = max(n_left, n_right)
    if not n_core > n_hi:
        return []
    k0 = 2e3 * np.pi / wavelength_nm
    span = n_core - n_hi
    samples = n_hi + span * np.arange(n_scan) / n_scan
    samples = np.append(samples, n_core - 1e-12 * span)
    f = _pole_free(samples, n_left, n_core, n_right, thickness_um, k0)
    idx = np.nonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    if idx.size == 0:
        return []
    lo, hi = samples[idx], samples[idx + 1]
    f_lo = f[idx]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        f_mid = _pole_free(mid, n_left, n_core, n_right, thickness_um, k0)
        left = np.sign(f_mid) == np.sign(f_lo)
        lo = np.where(active & left, mid, lo)
        f_lo = np.where(active & left, f_mid, f_lo)
        hi = np.where(active & ~left, mid, hi)
    roots = 0.5 * (lo + hi)
    return sorted((float(r) for r in roots), reverse=True)


def slab_branch_index(n_left, n_core, n_right, thickness_um, wavelength_nm, order):
    """Effective index of one slab mode order, vectorized over inputs.

    The phase residual is strictly decreasing in n_eff, so each order has
    at most one root between the cladding and core indices.  Returns NaN
    where the order is cut off.
    """
    n_left, n_core, n_right, thickness_um, wavelength_nm = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (n_left, n_core, n_right, thickness_um, wavelength_nm))
    )
    lo = np.maximum(n_left, n_right)
    hi = n_core.copy()
    guided = (hi > lo) & (
        slab_residual(lo, n_left, n_core, n_right, thickness_um, wavelength_nm, order) > 0
    )
    lo = np.where(guided, lo, np.nan)
    hi = np.where(guided, hi, np.nan)
    k0 = 2e3 * np.pi / wavelength_nm
    for _ in range(14):
        mid = 0.5 * (lo + hi)
        above = slab_residual(mid, n_left, n_core, n_right, thickness_um, wavelength_nm, order) > 0
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    # safeguarded Newton: d(residual)/dN = -(k0^2 N / kappa) t_eff; steps that
    # leave the bracket (near cutoff the residual goes like a square root) bisect
    x = 0.5 * (lo + hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(80):
            res = slab_residual(x, n_left, n_core, n_right, thickness_um, wavelength_nm, order)
            above = res > 0
            lo = np.where(above, x, lo)
            hi = np.where(above | (res == 0), hi, x)
            kappa, gl, gr = _wavenumbers(x, n_left, n_core, n_right, k0)
            slope = -(k0**2 * x / kappa) * (thickness_um + 1 / gl + 1 / gr)
            step = np.where(res == 0, x, x - res / slope)
            inside = (step >= lo) & (step <= hi)
            new = np.where(inside, step, 0.5 * (lo + hi))
            done = (np.abs(new - x) <= 4e-16 * np.abs(x)) | np.isnan(x)
            x = new
            if done.all():
                break
    return float(x) if x.ndim == 0 else x


# --------------------------------------------------------------------------
# 1D slab field


@dataclass(frozen=True)
class SlabField:
    """Scalar field of one slab mode; t runs from the left interface."""

    thickness: float
    kappa: float
    g_left: float
    g_right: float

    @property
    def phase(self) -> float:
        return -math.atan(self.g_left / self.kappa)

    @property
    def norm2(self) -> float:
        t, k, p = self.thickness, self.kappa, self.phase
        core = t / 2 + (math.sin(2 * (k * t + p)) - math.sin(2 * p)) / (4 * k)
        return core + math.cos(p) ** 2 / (2 * self.g_left) + math.cos(k * t + p) ** 2 / (2 * self.g_right)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k, p, d = self.kappa, self.phase, self.thickness
        inside = np.cos(k * np.clip(t, 0.0, d) + p)
        left = math.cos(p) * np.exp(self.g_left * np.minimum(t, 0.0))
        right = math.cos(k * d + p) * np.exp(-self.g_right * np.maximum(t - d, 0.0))
        out = np.where(t < 0, left, np.where(t > d, right, inside))
        return out / math.sqrt(self.norm2)

    def integral_sq(self, a, b) -> float:
        """Closed-form integral of the normalized field squared over [a, b]."""
        k, p, d = self.kappa, self.phase, self.thickness
        total = 0.0
        lo, hi = a, min(b, 0.0)
        if hi > lo:
            g = self.g_left
            total += math.cos(p) ** 2 * (math.exp(2 * g * hi) - math.exp(2 * g * lo)) / (2 * g)
        lo, hi = max(a, 0.0), min(b, d)
        if hi > lo:
            total += (hi - lo) / 2 + (math.sin(2 * (k * hi + p)) - math.sin(2 * (k * lo + p))) / (4 * k)
        lo, hi = max(a, d), b
        if hi > lo:
            g = self.g_right
            total += math.cos(k * d + p) ** 2 * (
                math.exp(-2 * g * (lo - d)) - math.exp(-2 * g * (hi - d))
            ) / (2 * g)
        return total / self.norm2

    def nodes(self) -> int:
        t = np.linspace(0, self.thickness, 4001)
        v = self(t)
        return int(np.count_nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0))


def _slab_field(n_eff, n_left, n_core, n_right, thickness, wavelength_nm) -> SlabField:
    k0 = 2e3 * math.pi / wavelength_nm
    kappa, gl, gr = _wavenumbers(n_eff, n_left, n_core, n_right, k0)
    return SlabField(thickness, float(kappa), float(gl), float(gr))


# --------------------------------------------------------------------------
# 2D modes


@dataclass(frozen=True)
class Grid:
    """Uniform transverse sampling rectangle (micrometres)."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int = 512
    ny: int = 512

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise GridError("grid rectangle is empty")
        if self.nx < 2 or self.ny < 2:
            raise GridError("grid needs at least 2x2 points")

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self):
        return np.linspace(self.y_min, self.y_max, self.ny)

    def integrate(self, values):
        """Trapezoidal integral of a (ny, nx) array over the rectangle."""
        values = np.asarray(values)
        if values.shape != (self.ny, self.nx):
            raise GridError(f"array shape {values.shape} does not match grid {(self.ny, self.nx)}")
        return trapezoid(trapezoid(values, self.x, axis=1), self.y)

    def refined(self, factor: int) -> "Grid":
        return Grid(
            self.x_min, self.x_max, self.y_min, self.y_max,
            (self.nx - 1) * factor + 1, (self.ny - 1) * factor + 1,
        )


@dataclass(frozen=True)
class GuidedMode:
    """A guided mode solved at a reference wavelength.

    ``effective_index`` re-solves the same (m, n) branch at other
    wavelengths; ``n_eff`` is the value at ``wavelength_nm``.
    """

    label: ModeLabel
    polarization: Polarization
    wavelength_nm: float
    n_eff: float
    spec: WaveguideSpec = field(repr=False, compare=False)

    def effective_index(self, wavelength_nm, strict=True):
        lam = np.asarray(wavelength_nm, dtype=float)
        n_sub = self.spec.substrate_index(self.polarization, lam)
        n_core = n_sub + self.spec.delta_n
        n_vert = slab_branch_index(n_sub, n_core, AIR_INDEX, self.spec.vertical_um, lam, self.label.n)
        n_out = slab_branch_index(n_sub, n_vert, n_sub, self.spec.horizontal_um, lam, self.label.m)
        if strict and np.any(np.isnan(n_out)):
            bad = np.atleast_1d(lam)[np.atleast_1d(np.isnan(n_out))][0]
            raise CutoffError(f"mode {self.label} ({self.polarization.value}) is cut off at {bad:.4f} nm")
        return n_out

    def beta(self, wavelength_nm, strict=True):
        """Propagation constant in inverse micrometres."""
        lam = np.asarray(wavelength_nm, dtype=float)
        return 2e3 * np.pi * self.effective_index(lam, strict=strict) / lam

    @classmethod
    def from_label(cls, spec, pol, label, wavelength_nm) -> "GuidedMode":
        """Build a mode by its label without enumerating the others."""
        label = ModeLabel.parse(label)
        probe = cls(label, Polarization(pol), float(wavelength_nm), math.nan, spec)
        return cls(label, probe.polarization, probe.wavelength_nm, probe.effective_index(wavelength_nm), spec)

    def fields(self, wavelength_nm=None) -> tuple[SlabField, SlabField]:
        """Horizontal and vertical slab fields at a wavelength."""
        lam = self.wavelength_nm if wavelength_nm is None else float(wavelength_nm)
        n_sub = self.spec.substrate_index(self.polarization, lam)
        n_core = n_sub + self.spec.delta_n
        n_vert = slab_branch_index(n_sub, n_core, AIR_INDEX, self.spec.vertical_um, lam, self.label.n)
        n_eff = slab_branch_index(n_sub, n_vert, n_sub, self.spec.horizontal_um, lam, self.label.m)
        if math.isnan(n_eff):
            raise CutoffError(f"mode {self.label} is cut off at {lam} nm")
        # vertical: substrate on the left (t < 0), air on the right
        vert = _slab_field(n_vert, n_sub, n_core, AIR_INDEX, self.spec.vertical_um, lam)
        horiz = _slab_field(n_eff, n_sub, n_vert, n_sub, self.spec.horizontal_um, lam)
        return horiz, vert

    def decay_lengths(self) -> dict:
        horiz, vert = self.fields()
        return {"side": 1 / horiz.g_left, "substrate": 1 / vert.g_left, "air": 1 / vert.g_right}

    def profile_x(self, x):
        horiz, _ = self.fields()
        return horiz(np.asarray(x) + self.spec.horizontal_um / 2)

    def profile_y(self, y):
        _, vert = self.fields()
        return vert(np.asarray(y) + self.spec.vertical_um)


def solve_modes(spec: WaveguideSpec, pol, wavelength_nm, max_label=ModeLabel(8, 8)) -> list:
    """Guided modes up to ``max_label`` (inclusive in each index), descending n_eff."""
    pol = Polarization(pol)
    max_label = ModeLabel.parse(max_label)
    lam = float(wavelength_nm)
    n_sub = spec.substrate_index(pol, lam)
    n_core = n_sub + spec.delta_n
    modes = []
    vertical = solve_slab(n_sub, n_core, AIR_INDEX, spec.vertical_um, lam)
    for n, n_vert in enumerate(vertical[: max_label.n + 1]):
        horizontal = solve_slab(n_sub, n_vert, n_sub, spec.horizontal_um, lam)
        for m, n_eff in enumerate(horizontal[: max_label.m + 1]):
            modes.append(GuidedMode(ModeLabel(m, n), pol, lam, n_eff, spec))
    modes.sort(key=lambda md: (-md.n_eff, md.label))
    return modes


def find_mode(modes, label):
    label = ModeLabel.parse(label)
    for mode in modes:
        if mode.label == label:
            return mode
    raise KeyError(f"no guided mode {label}")


def beta(mode: GuidedMode, wavelength_nm):
    """Propagation constant 2 pi n_eff / lambda in inverse nanometres.

    ``GuidedMode.beta`` gives the same quantity in inverse micrometres, the
    unit used for phase matching against the grating wavevector.
    """
    return mode.beta(wavelength_nm) * 1e-3


def check_grid(mode: GuidedMode, grid: Grid, decay_lengths=3.0):
    """Raise :class:`GridError` unless the grid holds the core plus the tails."""
    d = mode.decay_lengths()
    w, h = mode.spec.horizontal_um, mode.spec.vertical_um
    need_x = w / 2 + decay_lengths * d["side"]
    if grid.x_min > -need_x or grid.x_max < need_x:
        raise GridError(f"grid x-range must cover +/-{need_x:.3f} um for mode {mode.label}")
    if grid.y_min > -h - decay_lengths * d["substrate"] or grid.y_max < decay_lengths * d["air"]:
        raise GridError(
            f"grid y-range must cover [{-h - decay_lengths * d['substrate']:.3f}, "
            f"{decay_lengths * d['air']:.3f}] um for mode {mode.label}"
        )


def mode_profile(mode: GuidedMode, grid: Grid, normalize=True):
    """Sampled profile u(x, y) as a (ny, nx) array.

    With ``normalize`` the samples are rescaled so the trapezoidal norm on
    the grid is exactly one; otherwise the closed-form (infinite-domain)
    normalization is kept.
    """
    check_grid(mode, grid)
    u = np.outer(mode.profile_y(grid.y), mode.profile_x(grid.x))
    if normalize:
        u = u / math.sqrt(grid.integrate(u**2))
    return u


def analytic_norm(mode: GuidedMode, grid: Grid) -> float:
    """Closed-form integral of u^2 over the grid rectangle (closed-form normalization)."""
    horiz, vert = mode.fields()
    w, h = mode.spec.horizontal_um, mode.spec.vertical_um
    ix = horiz.integral_sq(grid.x_min + w / 2, grid.x_max + w / 2)
    iy = vert.integral_sq(grid.y_min + h, grid.y_max + h)
    return ix * iy


def covering_grid(modes, n=512, decay_lengths=6.0) -> Grid:
    """Smallest symmetric-in-x grid holding every mode plus its tails.

    The spacing is chosen so the core edges (x = +-w/2, y = -d and y = 0)
    fall exactly on grid nodes.  The profiles have a jump in their second
    derivative there; with nodes on the interfaces the trapezoid rule
    stays fourth-order accurate instead of dropping to second order.
    """
    half_x, y_lo, y_hi = 0.0, 0.0, 0.0
    spec = None
    for mode in modes:
        d = mode.decay_lengths()
        spec = mode.spec
        half_x = max(half_x, mode.spec.horizontal_um / 2 + decay_lengths * d["side"])
        y_lo = min(y_lo, -mode.spec.vertical_um - decay_lengths * d["substrate"])
        y_hi = max(y_hi, decay_lengths * d["air"])
    if spec is None:
        raise ValueError("covering_grid needs at least one mode")
    x0, x1 = _aligned_symmetric(spec.horizontal_um / 2, half_x, n)
    y0, y1 = _aligned_interval(spec.vertical_um, -y_lo - spec.vertical_um, y_hi, n)
    return Grid(x0, x1, y0, y1, n, n)


def _aligned_symmetric(edge, half, n):
    # nodes at -X + j h with X = (n - 1) h / 2; need edge / h = (n - 1) / 2 mod 1
    a_max = edge * (n - 1) / (2 * half)
    offset = ((n - 1) / 2) % 1.0
    a = math.floor(a_max - offset) + offset
    if a < 1:
        return -half, half
    h = edge / a
    return -(n - 1) * h / 2, (n - 1) * h / 2


def _aligned_interval(core, below, above, n):
    # nodes at -core and 0: spacing core / k, p nodes below, q above
    k = math.floor(core * (n - 1) / (core + below + above))
    while k >= 2:
        h = core / k
        p = math.ceil(below / h)
        q = n - 1 - k - p
        if q * h >= above:
            return -core - p * h, q * h
        k -= 1
    return -core - below, above
