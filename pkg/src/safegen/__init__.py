"""Spec-driven C++ generation with staged validation and simulated safety gating.

Machine-readable design and behaviour specs drive an iterative generation
loop: candidates pass through ordered static checks (structure, compile,
style, unit tests), then a deterministic closed-loop driving simulation,
before a version line is promoted Verified and finally Safe.
"""

__version__ = "0.1.0"

from .config import BackendConfig, RunConfig, ToolchainConfig, load_config
from .errors import PipelineError
from .orchestrator import RunReport, run_full_pipeline
from .spec_model import (
    BehaviorSpec,
    DesignSpec,
    parse_behavior_spec,
    parse_design_spec,
)
from .state_ledger import Phase, VersionState

__all__ = [
    "BackendConfig",
    "BehaviorSpec",
    "DesignSpec",
    "Phase",
    "PipelineError",
    "RunConfig",
    "RunReport",
    "ToolchainConfig",
    "VersionState",
    "load_config",
    "parse_behavior_spec",
    "parse_design_spec",
    "run_full_pipeline",
    "__version__",
]
