"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numbers

from .channel import CsiFrame


def check_frames(X, min_subcarriers: int = 1, same_length: bool = True) -> list[CsiFrame]:
    """Coerce ``X`` (frame, record or sequence of either) into a list of frames."""
    if isinstance(X, CsiFrame) or hasattr(X, "frame"):
        X = [X]
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"expected CsiFrame objects, got {type(X).__name__}") from None
    frames = []
    for i, item in enumerate(items):
        fr = item.frame if hasattr(item, "frame") else item
        if not isinstance(fr, CsiFrame):
            raise TypeError(f"element {i} is {type(item).__name__}, not a CsiFrame")
        if len(fr) < min_subcarriers:
            raise ValueError(f"frame {i} has {len(fr)} subcarriers, need >= {min_subcarriers}")
        frames.append(fr)
    if not frames:
        raise ValueError("no frames given")
    if same_length and len({len(f) for f in frames}) > 1:
        raise ValueError("frames have different subcarrier counts")
    return frames


def check_k(k) -> int:
    if isinstance(k, bool) or not isinstance(k, numbers.Integral) or k < 2:
        raise ValueError(f"extrapolation factor must be an integer >= 2, got {k!r}")
    return int(k)
