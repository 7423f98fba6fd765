"""
Recovering the waveguide from peak positions
============================================

Synthetic peaks at known parameters, then the two-stage fit from the
nominal fabrication values.  Takes about 20 s.
"""

from wgpdc.fit import FitParams, FitProblem, fit, synthetic_peaks

truth = FitParams(period_um=8.92, width_um=4.1, depth_um=9.3, delta_n=0.008)
nominal = FitParams(period_um=8.72, width_um=5.0, depth_um=10.0, delta_n=0.01)

problem = FitProblem(synthetic_peaks(truth))
result = fit(problem, nominal)

for stage in result.stages:
    print(f"stage {stage['name']}: evaluations {stage['evaluations'][0]}..{stage['evaluations'][1]}")
print("recovered:", {k: round(v, 5) for k, v in result.params.to_dict().items()})
print(f"objective {result.objective:.2e} nm^2 after {result.n_evaluations} evaluations")
