"""Fitted constants, frozen into the package with their provenance.

The inequalities in this package are stated up to absolute constants.  Those
constants are fitted once by tools/fit_constants.py, written to
_constants.json next to this module, and treated as regression values from
then on: a rebuilt constant that no longer satisfies its defining inequality
is a test failure, not an excuse to refit silently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Mapping

from .errors import ValidationError

__all__ = ["FittedConstants", "load_constants"]


@dataclass(frozen=True)
class FittedConstants:
    """The frozen values.

    lambda_stirling is derived, not fitted: e**2/(2 pi).  gamma_tail makes
    the closed-form tail bounds dominate exact tails on the validation grid;
    gamma_dev does the same for the cell-deviation union bound; delta_stretch
    and c_hat cap the per-cell stretch and the pipeline constant growth per
    dyadic level.  provenance records the grid and date each value came from.
    """

    lambda_stirling: float
    gamma_tail: float
    gamma_dev: float
    delta_stretch: float
    c_hat: float
    provenance: Mapping[str, Any]


@lru_cache(maxsize=1)
def load_constants() -> FittedConstants:
    try:
        blob = resources.files("gridlip").joinpath("_constants.json").read_text()
    except (FileNotFoundError, OSError) as exc:
        raise ValidationError(
            "missing _constants.json; run tools/fit_constants.py"
        ) from exc
    data = json.loads(blob)
    try:
        return FittedConstants(
            lambda_stirling=float(data["lambda_stirling"]),
            gamma_tail=float(data["gamma_tail"]),
            gamma_dev=float(data["gamma_dev"]),
            delta_stretch=float(data["delta_stretch"]),
            c_hat=float(data["c_hat"]),
            provenance=data.get("provenance", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed _constants.json: {exc}") from exc
