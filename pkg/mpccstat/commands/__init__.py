from __future__ import annotations

from .base import COMMANDS, Command, CommandContext, CommandResult, command

# Import all commands so they are registered
from .certify_command import CertifyCommand
from .scenario_command import ScenarioCommand
from .regpath_command import RegpathCommand
from .lower_solve_command import LowerSolveCommand
from .kkt_beta_command import KktBetaCommand
from .synthesize_command import SynthesizeCommand
