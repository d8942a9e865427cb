"""Normalized mean squared error."""
from __future__ import annotations

import numpy as np

from .errors import ContractError, DegenerateNormalizerError


def nmse(measured, reference, normalizer_min=None, normalizer_max=None) -> np.ndarray:
    """Per-column ``mean((measured - reference)^2) / (max - min)``.

    The normalizer range defaults to the range of ``reference``.
    """
    m = np.asarray(measured, dtype=float)
    r = np.asarray(reference, dtype=float)
    if m.shape != r.shape:
        raise ContractError("series must have equal shapes")
    if m.ndim == 1:
        m, r = m[:, None], r[:, None]
    lo = r.min(axis=0) if normalizer_min is None else np.asarray(normalizer_min, dtype=float)
    hi = r.max(axis=0) if normalizer_max is None else np.asarray(normalizer_max, dtype=float)
    span = np.broadcast_to(hi - lo, (m.shape[1],))
    if np.any(span <= 0):
        raise DegenerateNormalizerError("normalizer max must exceed min")
    out = np.mean((m - r) ** 2, axis=0) / span
    return out if np.ndim(measured) > 1 else out[0]
