"""Declarative scenarios: config schema, world builder, runner, report and CLI."""
