"""Waveguided parametric down-conversion: modes, phase matching, two-photon analysis."""
