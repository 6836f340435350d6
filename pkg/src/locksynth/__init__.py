"""Synthesis of lock placements that make concurrent programs preemption-safe."""

from .lang import ParseError, Program, parse_program
from .pipeline import Options, SynthesisSession, run

__all__ = ["ParseError", "Program", "parse_program", "Options", "SynthesisSession", "run"]
__version__ = "0.1.0"
