"""Risk-averse multistage stochastic linear programming toolkit.

Cutting-plane (SDDP-style) solver with a composite mean/tail risk
measure, biased forward sampling driven by bad-outcome frequencies, a
change-of-measure risk-neutral reformulation, an extensive-form oracle
for tiny instances, and a hydrothermal planning instance builder.
"""

__version__ = "0.1.0"

from .cuts import Cut, CutPool
from .engine import RunConfig, RunResult, run
from .model import Instance, StageData, StageRealization, load_instance, save_instance
from .risk import RiskParams, average_value_at_risk, rho, value_at_risk, worst_case_weights
from .sampling import FrequencyTable, SamplerSpec

__all__ = [
    "__version__",
    "Cut",
    "CutPool",
    "RunConfig",
    "RunResult",
    "run",
    "Instance",
    "StageData",
    "StageRealization",
    "load_instance",
    "save_instance",
    "RiskParams",
    "average_value_at_risk",
    "rho",
    "value_at_risk",
    "worst_case_weights",
    "FrequencyTable",
    "SamplerSpec",
]
