"""Parser, checker, printer, compiler, and interpreter for `.disco` sources."""

from . import ast
from .check import Diagnostic, Resolver, check
from .parse import parse, print_spec
from .run import (
    CompiledSpec,
    Interpreter,
    SpecError,
    StepResult,
    build_store,
    compile_spec,
    enabled_actions,
)

__all__ = [
    "CompiledSpec", "Diagnostic", "Interpreter", "Resolver", "SpecError",
    "StepResult", "ast", "build_store", "check", "compile_spec",
    "enabled_actions", "parse", "print_spec",
]


def load(path) -> ast.Spec:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), source_name=str(path))
