from __future__ import annotations

import logging
import sys

__version__ = "0.1.0"

# Set up logging; stdout is reserved for reports
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    handlers=[
        logging.StreamHandler(sys.stderr),
    ],
)

from .errors import MpccStatError
from .grid import CellSet, Grid, GridFunction, build_uniform_grid, inner_product, measure, norm, pointwise
from .ioc import certify_ioc
from .ioc_problem import IocProblem, LinearIntegral, QuadraticTracking
from .lower_level import solve_oc
from .mpcc_lin import KktMultipliers, MpccLinProblem, solve_kkt_beta, solve_lp_beta
from .regularization import run_reg_path, solve_ioc_regularized
from .stationarity import StationarityCertificate
from .synthesis import certify_m
