"""Full-duplex cell-free massive MIMO with capacity-limited fronthaul.

Closed-form SE lower bounds, Monte-Carlo oracles, fronthaul-aware AP
selection and weighted-sum energy-efficiency optimization (centralized SCA
or consensus ADMM).
"""
from .config import ConfigError, SystemConfig
from .fronthaul import SelectionInfeasible, ServingSets, all_caps, select_aps
from .quantizer import QuantizerParams, optimize_step, quantizer_for
from .se import PowerControl, se_coefficients, se_lb
from .topology import deploy, large_scale

__version__ = "0.1.0"

__all__ = ["ConfigError", "SystemConfig", "SelectionInfeasible", "ServingSets", "all_caps", "select_aps",
           "QuantizerParams", "optimize_step", "quantizer_for", "PowerControl", "se_coefficients",
           "se_lb", "deploy", "large_scale"]
