"""Shared domain types: token matrices, labeled view sets, ratios, selections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

# Standard surround-camera labels, in canonical order. Any other non-empty
# string is a valid custom label.
FRONT = "FRONT"
FRONT_LEFT = "FRONT_LEFT"
FRONT_RIGHT = "FRONT_RIGHT"
BACK = "BACK"
BACK_LEFT = "BACK_LEFT"
BACK_RIGHT = "BACK_RIGHT"
STANDARD_LABELS = (FRONT, FRONT_LEFT, FRONT_RIGHT, BACK, BACK_LEFT, BACK_RIGHT)

# Default retention-ratio box. 1.0 keeps everything; the lower bound keeps a
# view from being starved below ~1% of its tokens.
RATIO_LOWER_DEFAULT = 0.01
RATIO_UPPER_DEFAULT = 1.0


class DistanceMeasure(str, Enum):
    COSINE = "cosine"
    L1 = "l1"
    L2 = "l2"


class TokenMatrix:
    """N x d embedding matrix, row-major float32.

    Storage stays float32 so in-memory data and on-disk dumps agree bit for
    bit; distance math elsewhere upcasts to float64. Instances are immutable
    (the backing array is marked read-only).
    """

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim != 2:
            raise ValidationError(
                "CONFIG_INVALID", f"token matrix must be 2-D, got shape {arr.shape}"
            )
        if arr.shape[1] < 1:
            raise ValidationError("CONFIG_INVALID", "token dimension must be >= 1")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("TokenMatrix is immutable")

    @property
    def n_tokens(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TokenMatrix):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data, equal_nan=True)
        )

    def __repr__(self) -> str:
        return f"TokenMatrix(n_tokens={self.n_tokens}, dim={self.dim})"


class ViewTokenSet:
    """Ordered, labeled per-camera token matrices.

    Construction only requires at least one view; dim agreement, label
    uniqueness and finiteness are checked by :func:`validate_viewset` so that
    parsers can surface precise error codes.
    """

    __slots__ = ("views",)

    def __init__(self, views: Iterable[tuple[str, TokenMatrix]]):
        vs = tuple((str(label), tm) for label, tm in views)
        if not vs:
            raise ValidationError("CONFIG_INVALID", "a view set needs at least one view")
        for label, tm in vs:
            if not label:
                raise ValidationError("CONFIG_INVALID", "view labels must be non-empty")
            if not isinstance(tm, TokenMatrix):
                raise ValidationError("CONFIG_INVALID", "views must hold TokenMatrix values")
        object.__setattr__(self, "views", vs)

    def __setattr__(self, name, value):
        raise AttributeError("ViewTokenSet is immutable")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.views)

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dim(self) -> int:
        return self.views[0][1].dim

    def __iter__(self):
        return iter(self.views)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ViewTokenSet):
            return NotImplemented
        return self.views == other.views

    def __repr__(self) -> str:
        sizes = ", ".join(f"{label}:{tm.n_tokens}" for label, tm in self.views)
        return f"ViewTokenSet({sizes}; dim={self.dim})"


@dataclass(frozen=True)
class SelectionView:
    """Retained indices for one view, sorted ascending."""

    label: str
    n_tokens: int
    k: int
    kept: tuple[int, ...]


@dataclass(frozen=True)
class Selection:
    """Per-view retained token indices plus the provenance that produced them."""

    views: tuple[SelectionView, ...]
    metric: DistanceMeasure
    strategy: str
    seed: int
    ratios: tuple[float, ...]

    @property
    def total_kept(self) -> int:
        return sum(v.k for v in self.views)


def retained_count(alpha: float, n: int) -> int:
    """Number of tokens kept in a view of ``n`` tokens at retention ``alpha``.

    Rounds half away from zero, then clamps to [1, n] so no non-empty view
    vanishes. Empty views keep zero tokens.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValidationError("CONFIG_INVALID", f"retention ratio {alpha} outside [0, 1]")
    if n < 0:
        raise ValidationError("CONFIG_INVALID", f"token count {n} negative")
    if n == 0:
        return 0
    k = math.floor(alpha * n + 0.5)
    return min(max(k, 1), n)


def validate_viewset(vs: ViewTokenSet) -> None:
    """Raise ValidationError unless all ViewTokenSet invariants hold.

    Codes: DUPLICATE_LABEL, DIM_MISMATCH, NONFINITE_VALUE.
    """
    seen: set[str] = set()
    for label, _ in vs.views:
        if label in seen:
            raise ValidationError("DUPLICATE_LABEL", f"label {label!r} appears twice")
        seen.add(label)
    dim = vs.views[0][1].dim
    for label, tm in vs.views:
        if tm.dim != dim:
            raise ValidationError(
                "DIM_MISMATCH", f"view {label!r} has dim {tm.dim}, expected {dim}"
            )
    for label, tm in vs.views:
        if tm.n_tokens and not np.isfinite(tm.data).all():
            raise ValidationError(
                "NONFINITE_VALUE", f"view {label!r} contains NaN or Inf values"
            )


def validate_ratios(
    ratios: Sequence[float],
    n_views: int,
    lower: float = RATIO_LOWER_DEFAULT,
    upper: float = RATIO_UPPER_DEFAULT,
) -> tuple[float, ...]:
    """Check arity and bounds of a per-view retention vector; return it as a tuple."""
    out = tuple(float(a) for a in ratios)
    if len(out) != n_views:
        raise ValidationError(
            "CONFIG_INVALID", f"got {len(out)} ratios for {n_views} views"
        )
    for a in out:
        if not math.isfinite(a) or not lower <= a <= upper:
            raise ValidationError(
                "CONFIG_INVALID", f"ratio {a} outside [{lower}, {upper}]"
            )
    return out


def validate_selection(sel: Selection, vs: ViewTokenSet) -> None:
    """Raise unless ``sel`` is consistent with its source view set.

    Code SELECTION_MISMATCH on any misalignment (labels, counts, index bounds,
    ordering).
    """
    if len(sel.views) != vs.n_views:
        raise ValidationError(
            "SELECTION_MISMATCH",
            f"selection has {len(sel.views)} views, set has {vs.n_views}",
        )
    if len(sel.ratios) != vs.n_views:
        raise ValidationError(
            "SELECTION_MISMATCH",
            f"selection has {len(sel.ratios)} ratios, set has {vs.n_views} views",
        )
    for pos, (sv, (label, tm)) in enumerate(zip(sel.views, vs.views)):
        if sv.label != label:
            raise ValidationError(
                "SELECTION_MISMATCH", f"label {sv.label!r} does not match {label!r}"
            )
        if sv.n_tokens != tm.n_tokens:
            raise ValidationError(
                "SELECTION_MISMATCH",
                f"view {label!r}: selection says {sv.n_tokens} tokens, set has {tm.n_tokens}",
            )
        if len(sv.kept) != sv.k:
            raise ValidationError(
                "SELECTION_MISMATCH", f"view {label!r}: |kept| != k ({len(sv.kept)} != {sv.k})"
            )
        prev = -1
        for idx in sv.kept:
            if not 0 <= idx < tm.n_tokens:
                raise ValidationError(
                    "SELECTION_MISMATCH", f"view {label!r}: index {idx} out of range"
                )
            if idx <= prev:
                raise ValidationError(
                    "SELECTION_MISMATCH", f"view {label!r}: indices not strictly increasing"
                )
            prev = idx
        if tm.n_tokens > 0:
            expected = retained_count(sel.ratios[pos], tm.n_tokens)
            if sv.k != expected:
                raise ValidationError(
                    "SELECTION_MISMATCH",
                    f"view {label!r}: k={sv.k} but ratio implies {expected}",
                )
