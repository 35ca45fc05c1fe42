"""Retrieval-augmented, agentic method-level refactoring engine for Java sources.

The package parses a Java subset into a statement-level source model, detects and
verifies six classic refactoring types, retrieves similar past refactorings as
few-shot context, and drives a developer/reviewer/repair loop against a build
harness until the workspace compiles and tests green.
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
