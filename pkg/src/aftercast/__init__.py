"""AFTER-family forecast combination for heavy-tailed forecast errors."""

__version__ = "0.1.0"

from .distributions import DistributionSpec, Family, kl_numeric, log_pdf  # noqa: E402
from .engine import AfterConfig, AfterState, Method, combine, run_after  # noqa: E402

__all__ = ["AfterConfig", "AfterState", "DistributionSpec", "Family", "Method", "combine",
           "kl_numeric", "log_pdf", "run_after", "__version__"]
