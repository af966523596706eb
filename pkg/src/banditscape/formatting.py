"""Output formatting shared by every table and summary: floats carry 17 significant digits."""

from __future__ import annotations

import json
import math
import re

import numpy as np

_MARK = re.compile(r'"@f@(.*?)@f@"')


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _tag(obj):
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if not math.isfinite(x) else f"@f@{fmt(x)}@f@"
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _tag(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_tag(v) for v in obj]
    return obj


def dumps(obj, indent: int | None = 1) -> str:
    """JSON with sorted keys, floats written as 17-significant-digit numbers and non-finite floats as null."""
    text = json.dumps(_tag(obj), sort_keys=True, indent=indent)
    return _MARK.sub(r"\1", text)


def csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    if v is None:
        return ""
    return str(v)
