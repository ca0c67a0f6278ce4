"""
cropsim/commands/__init__.py
Sub-command groups; each module registers its parsers on the shared sub-parser set
"""

from . import eval as eval_commands
from . import sweeps, synth, train
from .common import CommandError

COMMAND_MODULES = [synth, train, eval_commands, sweeps]

__all__ = ["COMMAND_MODULES", "CommandError"]
