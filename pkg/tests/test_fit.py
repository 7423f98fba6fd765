import math

import numpy as np
import pytest

from wgpdc.fit import (
    DEFAULT_BOUNDS,
    PRINCIPAL_PROCESS,
    REFERENCE_PROCESSES,
    FitOptions,
    FitParams,
    FitProblem,
    MeasuredPeak,
    fit,
    objective,
    peak_cost,
    principal_targets,
    read_measured_csv,
    synthetic_peaks,
    write_measured_csv,
)

TRUTH = FitParams(8.92, 4.1, 9.3, 0.008)
NOMINAL = FitParams(8.72, 5.0, 10.0, 0.01)


@pytest.fixture(scope="module")
def measured():
    return synthetic_peaks(TRUTH)


@pytest.fixture(scope="module")
def problem(measured):
    return FitProblem(measured)


def test_synthetic_peaks_cover_reference_processes(measured):
    assert len(measured) == 2 * len(REFERENCE_PROCESSES)
    sig = [m.wavelength_nm for m in measured if m.arm == "signal"]
    assert min(sig) == pytest.approx(758.92, abs=0.05)


def test_objective_zero_at_truth(problem):
    assert objective(TRUTH, problem) < 1e-6


def test_objective_grows_with_period_offset(problem):
    base = objective(TRUTH, problem)
    moved = objective(FitParams(8.93, 4.1, 9.3, 0.008), problem)
    assert moved > base + 1e-3


def test_objective_rejects_out_of_bounds(problem):
    with pytest.raises(ValueError):
        objective(FitParams(10.0, 4.1, 9.3, 0.008), problem)


def test_peak_cost_rules():
    meas = [MeasuredPeak("signal", 800.0), MeasuredPeak("idler", 810.0, weight=2.0)]
    assert peak_cost(meas, [], ceiling=25.0, gate=5.0) == pytest.approx(3 * 25.0)
    assert peak_cost(meas, [(801.0, 812.0)], 25.0, gate=5.0) == pytest.approx(1 + 2 * 4)
    assert peak_cost(meas, [(820.0, 790.0)], 25.0, gate=5.0) == pytest.approx(75.0)
    assert peak_cost(meas, [(820.0, 790.0)], 25.0, gate=None) == pytest.approx(400 + 2 * 400)


def test_unguided_model_costs_ceiling_per_peak(measured):
    prob = FitProblem(measured, bounds=((8.5, 9.5), (2.0, 8.0), (6.0, 14.0), (0.0, 0.03)))
    assert objective(FitParams(8.92, 4.1, 9.3, 0.0), prob) == pytest.approx(len(measured) * prob.ceiling)


def test_principal_targets(measured):
    t = principal_targets(measured)
    assert [m.arm for m in t] == ["signal", "idler"]
    assert t[0].wavelength_nm == min(m.wavelength_nm for m in measured if m.arm == "signal")
    assert [tuple(x) for x in PRINCIPAL_PROCESS] == [(0, 0), (0, 0), (0, 0)]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(measured=[MeasuredPeak("signal", 800.0)]),
        dict(bounds=((9.0, 8.0),) + DEFAULT_BOUNDS[1:]),
        dict(bounds=DEFAULT_BOUNDS[:3]),
        dict(gate_nm=0.0),
    ],
)
def test_problem_validation(measured, kwargs):
    kwargs.setdefault("measured", measured)
    with pytest.raises(ValueError):
        FitProblem(**kwargs)


@pytest.mark.parametrize("args", [("pump", 800.0), ("signal", -1.0), ("idler", 800.0, -1.0)])
def test_measured_peak_validation(args):
    with pytest.raises(ValueError):
        MeasuredPeak(*args)


def test_seed_out_of_bounds(problem):
    with pytest.raises(ValueError):
        fit(problem, FitParams(8.0, 5.0, 10.0, 0.01))


def test_fit_is_deterministic(problem):
    opts = FitOptions(max_evaluations=40)
    a = fit(problem, NOMINAL, opts)
    b = fit(problem, NOMINAL, opts)
    assert a.params == b.params
    assert a.trace == b.trace
    assert problem.in_bounds(a.params)
    assert a.n_evaluations <= 40 + 5


def test_stage_bookkeeping(problem):
    res = fit(problem, NOMINAL, FitOptions(max_evaluations=60))
    assert [s["name"] for s in res.stages] == ["period", "all"]
    assert res.stages[0]["evaluations"][1] == res.stages[1]["evaluations"][0]
    assert res.stages[1]["evaluations"][1] == res.n_evaluations == len(res.trace)
    # stage one scores only the principal pair; the result is the best full-objective point
    lo, hi = res.stages[1]["evaluations"]
    full = [res.trace[0][1]] + [f for _, f in res.trace[lo:hi]]
    assert res.objective == pytest.approx(min(full), abs=1e-12)
    d = res.to_dict()
    assert set(d["parameters"]) == {"period_um", "width_um", "depth_um", "delta_n"}


def test_seed_kept_when_best(problem):
    res = fit(problem, TRUTH, FitOptions(max_evaluations=20))
    assert objective(res.params, problem) <= objective(TRUTH, problem) + 1e-12


@pytest.mark.slow
def test_two_stage_beats_single_stage(problem):
    two = fit(problem, NOMINAL)
    one = fit(problem, NOMINAL, FitOptions(two_stage=False))
    assert two.objective <= one.objective
    assert problem.in_bounds(two.params) and problem.in_bounds(one.params)


def test_csv_round_trip(tmp_path, measured):
    path = tmp_path / "peaks.csv"
    write_measured_csv(path, measured)
    assert read_measured_csv(path) == measured


def test_csv_optional_weight(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("arm,wavelength_nm\nsignal,760.5\nidler,860\n")
    peaks = read_measured_csv(path)
    assert peaks == [MeasuredPeak("signal", 760.5), MeasuredPeak("idler", 860.0)]


def test_csv_bad_header(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("side,lam\nsignal,760\n")
    with pytest.raises(ValueError):
        read_measured_csv(path)
