"""Occupancy counts K_{n,r} and probabilities M_{n,r}: exact values, bounds, simulation."""
from .dist import Distribution
from .exact import exact_EK, exact_EM, occupancy_profile
from .bounds import bound_suite
from .estimate import SampleSummary, concentration_interval, turing
from .simulate import SeedSpec, monte_carlo

__all__ = ["Distribution", "exact_EM", "exact_EK", "occupancy_profile", "bound_suite",
           "SampleSummary", "concentration_interval", "turing", "SeedSpec", "monte_carlo"]
