"""Symbolic-dynamics lab.

Shift spaces of finite type, empirical measures under exact truncated
Wasserstein-1 transport, Caratheodory dimension structures with block-
restricted outer measures, pointwise-emergence estimation, and scheduled
construction of orbits whose empirical measures sweep a simplex of Markov
measures.
"""

__version__ = "0.1.0"

from .errors import EmergenceLabError
from .sofic import PointPrefix, ShiftSpace, topological_entropy
from .measures import (FinSuppMeasure, MarkovMeasure, MarkovMixture,
                       empirical_measure, measure_entropy, truncation_proxy,
                       wasserstein1)
from .carath import (CStructure, bowen_dimension, outer_measure_M,
                     outer_measure_N, pressure_exact, pressure_partition)
from .emergence import build_cloud, emergence_report
from .constructor import (MeasureFamily, SimplexNet, block_schedule,
                          build_orbit, verify_saturation)

__all__ = [
    "EmergenceLabError", "PointPrefix", "ShiftSpace", "topological_entropy",
    "FinSuppMeasure", "MarkovMeasure", "MarkovMixture", "empirical_measure",
    "measure_entropy", "truncation_proxy", "wasserstein1",
    "CStructure", "bowen_dimension", "outer_measure_M", "outer_measure_N",
    "pressure_exact", "pressure_partition",
    "build_cloud", "emergence_report",
    "MeasureFamily", "SimplexNet", "block_schedule", "build_orbit",
    "verify_saturation",
]
