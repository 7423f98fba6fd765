"""Bulk KTP dispersion and the poling grating.

Sellmeier coefficients are read from a JSON data file (see
``data/ktp_kato2002.json``).  Wavelengths are in nanometres at the API
boundary; the Sellmeier formula itself is evaluated in micrometres.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

DEFAULT_SELLMEIER_FILE = "ktp_kato2002.json"


class Polarization(str, enum.Enum):
    """Field polarization in the crystal frame."""

    Y = "Y"
    Z = "Z"


# type-II process: y-polarized pump -> y signal + z idler
PUMP_POL = Polarization.Y
SIGNAL_POL = Polarization.Y
IDLER_POL = Polarization.Z


class WavelengthRangeError(ValueError):
    """Raised when a wavelength lies outside the dispersion data range."""


@dataclass(frozen=True)
class SellmeierTerm:
    polarization: Polarization
    coefficients: tuple[float, ...]
    valid_range_nm: tuple[float, float]

    def __post_init__(self):
        if len(self.coefficients) % 2 != 1:
            raise ValueError("expected A followed by (B, C) pole pairs")
        lo, hi = self.valid_range_nm
        if not 0 < lo < hi:
            raise ValueError(f"bad valid range {self.valid_range_nm}")


@dataclass(frozen=True)
class SellmeierModel:
    """Per-polarization Sellmeier fits, n^2 = A + sum_j B_j / (L^2 - C_j)."""

    terms: dict
    source: str = ""
    variant: str = ""

    @classmethod
    def from_json(cls, path=None) -> "SellmeierModel":
        if path is None:
            text = resources.files("wgpdc.data").joinpath(DEFAULT_SELLMEIER_FILE).read_text()
        else:
            text = Path(path).read_text()
        doc = json.loads(text)
        terms = {}
        for entry in doc["entries"]:
            pol = Polarization(entry["polarization"])
            terms[pol] = SellmeierTerm(
                pol,
                tuple(float(c) for c in entry["coefficients"]),
                tuple(float(v) for v in entry["valid_range_nm"]),
            )
        if set(terms) != set(Polarization):
            raise ValueError("dispersion file must define both Y and Z polarizations")
        return cls(terms, doc.get("source", ""), doc.get("variant", ""))

    def valid_range(self, pol) -> tuple[float, float]:
        return self.terms[Polarization(pol)].valid_range_nm

    def index(self, pol, wavelength_nm):
        return refractive_index(self, pol, wavelength_nm)


_default_model = None


def default_model() -> SellmeierModel:
    """The packaged KTP model (loaded once)."""
    global _default_model
    if _default_model is None:
        _default_model = SellmeierModel.from_json()
    return _default_model


def refractive_index(model: SellmeierModel, pol, wavelength_nm):
    """Bulk index n(lambda) for one polarization.

    Accepts scalars or arrays.  Raises :class:`WavelengthRangeError` if any
    wavelength falls outside the data file's validity interval.
    """
    term = model.terms[Polarization(pol)]
    lam = np.asarray(wavelength_nm, dtype=float)
    lo, hi = term.valid_range_nm
    if np.any(~np.isfinite(lam)) or np.any(lam < lo) or np.any(lam > hi):
        raise WavelengthRangeError(
            f"wavelength outside valid range [{lo:g}, {hi:g}] nm for {term.polarization.value}"
        )
    l2 = (lam * 1e-3) ** 2
    c = term.coefficients
    n2 = c[0] + sum(c[k] / (l2 - c[k + 1]) for k in range(1, len(c), 2))
    n = np.sqrt(n2)
    return float(n) if n.ndim == 0 else n


def index_derivative(model: SellmeierModel, pol, wavelength_nm):
    """Analytic dn/dlambda in 1/nm."""
    n = np.asarray(refractive_index(model, pol, wavelength_nm))
    c = model.terms[Polarization(pol)].coefficients
    lam_um = np.asarray(wavelength_nm, dtype=float) * 1e-3
    l2 = lam_um**2
    dn2_dl = sum(-2 * lam_um * c[k] / (l2 - c[k + 1]) ** 2 for k in range(1, len(c), 2))
    out = dn2_dl / (2 * n) * 1e-3
    return float(out) if out.ndim == 0 else out


def group_index(model: SellmeierModel, pol, wavelength_nm):
    """n_g = n - lambda dn/dlambda."""
    lam = np.asarray(wavelength_nm, dtype=float)
    out = refractive_index(model, pol, lam) - lam * index_derivative(model, pol, lam)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PolingGrating:
    """First-order (by default) quasi-phase-matching grating."""

    period_um: float
    order: int = 1

    def __post_init__(self):
        if not (self.period_um > 0 and math.isfinite(self.period_um)):
            raise ValueError(f"poling period must be positive, got {self.period_um}")
        if self.order < 1 or self.order % 2 == 0:
            raise ValueError(f"grating order must be a positive odd integer, got {self.order}")


def grating_wavevector(grating: PolingGrating) -> float:
    """K = 2 pi order / period, in inverse micrometres."""
    return 2 * math.pi * grating.order / grating.period_um
