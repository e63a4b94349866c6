"""Cache-aided multi-user private information retrieval built on placement delivery arrays."""

from importlib import resources
from pathlib import Path

from .kernels import BACKEND
from .pda import (STAR, InvalidPdaError, OccupancyMap, Pda, PdaFormatError, PdaValidityWarning,
                  ValidationReport, Violation, caching_ratio, coding_rate, dump, dumps, load,
                  loads, occupancy, regularity, require_valid, validate)
from .constructions import ManParams, example_pdas, man_pda, single_user_pda, trivial_pda
from .protocol import (Broadcast, CacheContent, FileSet, ProtocolError, QueryVector,
                       RoundTranscript, SystemConfig, build_queries, decode, gen_queries, place,
                       run_round, server_answer)
from .analysis import (SchemeMetrics, man_metrics, order_optimality_check, product_design_metrics,
                       r_pir_sum, ratio_asymptotics, regular_rate, theorem1_rate)

__version__ = "0.1.0"


def data_path(name: str) -> Path:
    """Path of a shipped ``.pda`` file, e.g. ``data_path("sec4a")``."""
    return Path(str(resources.files(__name__) / "data" / f"{name}.pda"))
