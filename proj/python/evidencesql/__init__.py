"""Python access to the evidencesql engine."""

import json

from . import _evidencesql as _core
from ._evidencesql import EvidenceSqlError, calibrate_confidence, fuse, levenshtein, render, score_fit

__all__ = [
    "EvidenceSqlError",
    "ask",
    "calibrate_confidence",
    "fuse",
    "levenshtein",
    "query",
    "render",
    "score_fit",
    "validate",
]


def validate(manifest, sql):
    """Run the guard pipeline; returns the validated query or the rejection as a dict."""
    return json.loads(_core.guard_json(str(manifest), sql))


def query(manifest, case_dir, sql):
    """Validate and execute a query against one case directory."""
    return json.loads(_core.query_json(str(manifest), str(case_dir), sql))


def ask(manifest, case_dir, questions, ranges=None, mode="sql_only", alpha=0.7):
    """Run the offline pipeline for one case and return the report dict."""
    return json.loads(
        _core.ask_json(str(manifest), str(case_dir), str(questions), None if ranges is None else str(ranges), mode, alpha)
    )
