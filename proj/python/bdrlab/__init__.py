"""Python bindings for the bdrlab class-incremental learning lab."""

import json

from ._core import (
    REPORT_SCHEMA_VERSION,
    ArgumentError,
    ConfigError,
    Error,
    bdr_offsets,
    canonical_config,
    cauchy_check,
    ce_with_offset,
    class_priors,
    compensation,
    f_max,
    lemma1,
    sha256_hex,
    verify,
)
from ._core import run_report as _run_report


def run(config_text, variant="BDR", seed=0):
    """Run one experiment and return the parsed JSON report."""
    return json.loads(_run_report(config_text, variant, seed))


__all__ = [
    "REPORT_SCHEMA_VERSION",
    "ArgumentError",
    "ConfigError",
    "Error",
    "bdr_offsets",
    "canonical_config",
    "cauchy_check",
    "ce_with_offset",
    "class_priors",
    "compensation",
    "f_max",
    "lemma1",
    "run",
    "sha256_hex",
    "verify",
]
