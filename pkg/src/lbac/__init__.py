"""lbac: a runtime for language-based agent control.

Agents emit programs in a small pure, typed language; programs are
checked against a developer-specified target type before execution, so
effect, capability, provenance and information-flow policies hold across
agent-generated code and scaffolding alike.
"""

__version__ = "0.1.0"

from lbac.registry import Registry, default_registry, empty_registry
from lbac.syntax import ParseError, parse_program, parse_type, pretty
from lbac.typecheck import TypeCheckError, TypeEnv, check_against, infer

__all__ = [
    "Registry",
    "default_registry",
    "empty_registry",
    "ParseError",
    "parse_program",
    "parse_type",
    "pretty",
    "TypeCheckError",
    "TypeEnv",
    "check_against",
    "infer",
    "__version__",
]
