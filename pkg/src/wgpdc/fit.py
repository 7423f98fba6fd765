"""Recover poling period and waveguide geometry from measured peak positions.

The objective compares model peak wavelengths with measured ones.  Each
measured peak is matched to the nearest model peak in its arm; squared
distances are capped at ``gate_nm ** 2``, which is also the cost of a
measured peak with no model peak at all.  The fit runs in two stages:
the poling period alone on the principal (widest) pair, then all four
parameters by a bounded Nelder-Mead simplex.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .dispersion import IDLER_POL, PUMP_POL, SIGNAL_POL, PolingGrating, default_model
from .modesolver import GuidedMode, ModeLabel, WaveguideSpec
from .pdc import PEAK_PROCESSES, PumpSpec, find_peak

PARAM_NAMES = ("period_um", "width_um", "depth_um", "delta_n")
DEFAULT_BOUNDS = ((8.5, 9.5), (2.0, 8.0), (6.0, 14.0), (0.002, 0.03))
GATE_NM = 5.0
FIT_WINDOW_NM = (700.0, 940.0)
ARMS = ("signal", "idler")

REFERENCE_PROCESSES = tuple(p for procs in PEAK_PROCESSES.values() for p in procs)
PRINCIPAL_PROCESS = PEAK_PROCESSES["A"][0]


@dataclass(frozen=True)
class MeasuredPeak:
    arm: str
    wavelength_nm: float
    weight: float = 1.0

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"arm must be 'signal' or 'idler', got {self.arm!r}")
        if not (math.isfinite(self.wavelength_nm) and self.wavelength_nm > 0):
            raise ValueError("peak wavelength must be positive")
        if not (math.isfinite(self.weight) and self.weight >= 0):
            raise ValueError("peak weight must be non-negative")


@dataclass(frozen=True)
class FitParams:
    period_um: float
    width_um: float
    depth_um: float
    delta_n: float

    def as_array(self):
        return np.array([self.period_um, self.width_um, self.depth_um, self.delta_n])

    @classmethod
    def from_array(cls, x) -> "FitParams":
        return cls(*(float(v) for v in x))

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in zip(PARAM_NAMES, self.as_array())}


@dataclass(frozen=True)
class FitProblem:
    measured: tuple
    pump: PumpSpec = field(default_factory=PumpSpec)
    length_mm: float = 10.0
    bounds: tuple = DEFAULT_BOUNDS
    processes: tuple = REFERENCE_PROCESSES
    gate_nm: float = GATE_NM
    window: tuple = FIT_WINDOW_NM
    dispersion: object = None

    def __post_init__(self):
        object.__setattr__(self, "measured", tuple(self.measured))
        if len(self.measured) < 2:
            raise ValueError("need at least two measured peaks")
        if len(self.bounds) != 4 or any(not lo < hi for lo, hi in self.bounds):
            raise ValueError("bounds must be four ordered (low, high) pairs")
        if not self.processes:
            raise ValueError("no model processes given")
        if not self.gate_nm > 0:
            raise ValueError("gate must be positive")

    @property
    def ceiling(self) -> float:
        return self.gate_nm**2

    def in_bounds(self, params: FitParams) -> bool:
        return all(lo <= v <= hi for v, (lo, hi) in zip(params.as_array(), self.bounds))

    def spec(self, params: FitParams) -> WaveguideSpec:
        return WaveguideSpec(
            params.width_um,
            params.depth_um,
            params.delta_n,
            PolingGrating(params.period_um),
            length_mm=self.length_mm,
            dispersion=self.dispersion or default_model(),
        )


def model_peaks(spec: WaveguideSpec, pump: PumpSpec, processes, window=FIT_WINDOW_NM) -> list:
    """(signal_nm, idler_nm) for every root of every listed process."""
    out = []
    for labels in processes:
        p, s, i = (ModeLabel.parse(x) for x in labels)
        modes = (
            GuidedMode(p, PUMP_POL, pump.center_nm, math.nan, spec),
            GuidedMode(s, SIGNAL_POL, pump.degenerate_nm, math.nan, spec),
            GuidedMode(i, IDLER_POL, pump.degenerate_nm, math.nan, spec),
        )
        out.extend(find_peak(*modes, window=window, pump_nm=pump.center_nm))
    return out


def peak_cost(measured, peaks, ceiling, gate=None) -> float:
    """Sum of weight * min(d^2, ceiling) over measured peaks.

    ``d`` is the distance to the nearest model peak in the same arm.  With
    ``gate=None`` the cap is dropped (used for the ungated first stage).
    """
    arms = {
        "signal": np.array([pk[0] for pk in peaks]),
        "idler": np.array([pk[1] for pk in peaks]),
    }
    total = 0.0
    for m in measured:
        cand = arms[m.arm]
        if cand.size == 0:
            total += m.weight * ceiling
            continue
        d2 = float(np.min((cand - m.wavelength_nm) ** 2))
        total += m.weight * (d2 if gate is None else min(d2, ceiling))
    return total


def objective(params: FitParams, problem: FitProblem) -> float:
    """Gated, capped peak-position misfit in nm^2."""
    if not problem.in_bounds(params):
        raise ValueError(f"parameters {params.to_dict()} outside the fit bounds")
    peaks = model_peaks(problem.spec(params), problem.pump, problem.processes, problem.window)
    return peak_cost(problem.measured, peaks, problem.ceiling, gate=problem.gate_nm)


def principal_targets(measured) -> list:
    """Measured peaks farthest from degeneracy: shortest signal, longest idler."""
    sig = [m for m in measured if m.arm == "signal"]
    idl = [m for m in measured if m.arm == "idler"]
    out = []
    if sig:
        out.append(min(sig, key=lambda m: m.wavelength_nm))
    if idl:
        out.append(max(idl, key=lambda m: m.wavelength_nm))
    return out


@dataclass(frozen=True)
class FitOptions:
    max_evaluations: int = 480
    stage1_evaluations: int = 40
    two_stage: bool = True
    xatol: float = 1e-4
    fatol: float = 1e-6
    initial_step: float = 0.08


@dataclass
class FitResult:
    params: FitParams
    objective: float
    n_evaluations: int
    converged: bool
    trace: list
    stages: list

    def to_dict(self) -> dict:
        return {
            "parameters": self.params.to_dict(),
            "objective_nm2": self.objective,
            "n_evaluations": self.n_evaluations,
            "converged": self.converged,
            "stages": self.stages,
            "trace": [{"params": p, "objective": f} for p, f in self.trace],
        }


class _Counter:
    def __init__(self, problem, trace):
        self.problem = problem
        self.trace = trace
        self.n = 0

    def __call__(self, params: FitParams, targets=None) -> float:
        self.n += 1
        if targets is None:
            f = objective(params, self.problem)
        else:
            peaks = model_peaks(
                self.problem.spec(params), self.problem.pump, [PRINCIPAL_PROCESS], self.problem.window
            )
            f = peak_cost(targets, peaks, self.problem.ceiling, gate=None) if peaks else math.inf
        self.trace.append((params.to_dict(), f))
        return f


def _stage_period(problem, seed: FitParams, count: _Counter, options: FitOptions) -> FitParams:
    lo, hi = problem.bounds[0]
    targets = principal_targets(problem.measured)

    def f(period):
        v = count(replace(seed, period_um=float(period)), targets)
        return v if math.isfinite(v) else 1e12

    res = minimize_scalar(
        f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-5, "maxiter": options.stage1_evaluations}
    )
    return replace(seed, period_um=float(res.x))


def _stage_simplex(problem, seed: FitParams, count: _Counter, budget: int, options: FitOptions):
    lows = np.array([b[0] for b in problem.bounds])
    span = np.array([b[1] - b[0] for b in problem.bounds])
    x0 = (seed.as_array() - lows) / span

    def f(u):
        u = np.clip(u, 0.0, 1.0)
        return count(FitParams.from_array(lows + u * span))

    # axis-aligned simplex, steps pointing into the box
    simplex = [x0]
    for k in range(4):
        step = np.zeros(4)
        step[k] = options.initial_step if x0[k] + options.initial_step <= 1 else -options.initial_step
        simplex.append(np.clip(x0 + step, 0.0, 1.0))
    res = minimize(
        f,
        x0,
        method="Nelder-Mead",
        bounds=[(0.0, 1.0)] * 4,
        options={
            "maxfev": budget,
            "xatol": options.xatol,
            "fatol": options.fatol,
            "initial_simplex": np.array(simplex),
        },
    )
    best = FitParams.from_array(lows + np.clip(res.x, 0, 1) * span)
    return best, float(res.fun), bool(res.success)


def fit(problem: FitProblem, seed: FitParams, options: FitOptions | None = None) -> FitResult:
    """Two-stage bounded fit (set ``options.two_stage=False`` for one stage).

    Deterministic for fixed inputs.  A fit that runs out of evaluations is
    returned with ``converged=False``.
    """
    options = options or FitOptions()
    if not problem.in_bounds(seed):
        raise ValueError(f"seed {seed.to_dict()} outside the fit bounds")
    trace, stages = [], []
    count = _Counter(problem, trace)
    f_seed = count(seed)
    start = seed
    if options.two_stage:
        first = count.n
        start = _stage_period(problem, seed, count, options)
        stages.append({"name": "period", "free": ["period_um"], "evaluations": [first, count.n]})
    first = count.n
    budget = max(options.max_evaluations - count.n, 5)
    best, fbest, ok = _stage_simplex(problem, start, count, budget, options)
    stages.append({"name": "all", "free": list(PARAM_NAMES), "evaluations": [first, count.n]})
    if f_seed < fbest:
        best, fbest = seed, f_seed
    return FitResult(best, fbest, count.n, ok, trace, stages)


# --------------------------------------------------------------------------
# files


def synthetic_peaks(params: FitParams, pump: PumpSpec | None = None, processes=REFERENCE_PROCESSES, length_mm=10.0):
    """Measured-peak list generated from the model itself (unit weights)."""
    pump = pump or PumpSpec()
    problem_spec = WaveguideSpec(
        params.width_um, params.depth_um, params.delta_n, PolingGrating(params.period_um), length_mm=length_mm
    )
    out = []
    for ls, li in model_peaks(problem_spec, pump, processes):
        out.append(MeasuredPeak("signal", ls))
        out.append(MeasuredPeak("idler", li))
    return out


def read_measured_csv(path) -> list:
    """Rows ``arm,wavelength_nm,weight``; the weight column is optional."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"arm", "wavelength_nm"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns arm,wavelength_nm[,weight]")
        for row in reader:
            w = row.get("weight") or "1"
            out.append(MeasuredPeak(row["arm"].strip(), float(row["wavelength_nm"]), float(w)))
    return out


def write_measured_csv(path, peaks):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arm", "wavelength_nm", "weight"])
        for p in peaks:
            w.writerow([p.arm, repr(float(p.wavelength_nm)), repr(float(p.weight))])


def write_report(path, result: FitResult):
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
