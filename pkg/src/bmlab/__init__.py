"""Numerical laboratory for stability in the Brunn-Minkowski inequality."""

from .bodies import (Box, ConvexBody, CrossPolytope, Ellipsoid, LpBall, Simplex, bm_ratio,
                     body_from_spec, exact_inertia, volume)
from .errors import BMLabError, ConfigurationError, InvalidInputError
from .lab import Scenario, parse_scenario, run_scenario
from .sampling import SamplerConfig, hit_and_run

__version__ = "0.1.0"
