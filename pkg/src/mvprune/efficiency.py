"""Analytic transformer prefill cost model.

Standard decoder-layer accounting, with every term exposed so alternative
conventions are configurable:

* projections: ``4 * n * d_model^2 * (1 + n_kv_heads / n_heads)`` covers the
  Q and output matrices plus grouped K/V matrices,
* attention matmuls: ``4 * n^2 * d_model`` (QK^T and AV at 2*n^2*d each),
* gated FFN: ``6 * n * d_model * d_ff`` (gate, up, down),
* optional vocabulary head: ``2 * n * d_model * vocab_size``.

KV-cache bytes are exactly linear in sequence length:
``2 * n_layers * n * head_dim * n_kv_heads * bytes_per_element``.

Reductions are reported as fractions (pruned over unpruned); absolute FLOPs
depend on the chosen convention and are not the contract.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import NoSolution, ValidationError


@dataclass(frozen=True)
class ModelProfile:
    n_layers: int
    d_model: int
    n_heads: int
    n_kv_heads: int
    d_ff: int
    bytes_per_element: int = 2
    vocab_size: int = 128_000
    include_vocab_head: bool = False
    include_attention: bool = True  # drop to model a linear-attention accounting

    def __post_init__(self):
        if min(self.n_layers, self.d_model, self.n_heads, self.n_kv_heads, self.d_ff) < 1:
            raise ValidationError("CONFIG_INVALID", "profile counts must be positive")
        if self.d_model % self.n_heads != 0:
            raise ValidationError("CONFIG_INVALID", "d_model must divide by n_heads")
        if self.n_kv_heads > self.n_heads:
            raise ValidationError("CONFIG_INVALID", "n_kv_heads cannot exceed n_heads")
        if self.bytes_per_element < 1 or self.vocab_size < 1:
            raise ValidationError("CONFIG_INVALID", "bytes/vocab must be positive")


# 7-8B-class decoder defaults used throughout the tests.
DEFAULT_PROFILE = ModelProfile(
    n_layers=32, d_model=4096, n_heads=32, n_kv_heads=8, d_ff=14336
)


@dataclass(frozen=True)
class SequenceProfile:
    n_visual_before: int
    n_visual_after: int
    n_text: int = 0

    def __post_init__(self):
        if min(self.n_visual_before, self.n_visual_after, self.n_text) < 0:
            raise ValidationError("CONFIG_INVALID", "token counts must be >= 0")
        if self.n_visual_after > self.n_visual_before:
            raise ValidationError(
                "CONFIG_INVALID", "cannot retain more visual tokens than supplied"
            )


def flops_prefill(p: ModelProfile, n: int) -> float:
    """Prefill FLOPs for a sequence of length ``n`` (strictly superlinear in n)."""
    if n < 1:
        raise ValidationError("CONFIG_INVALID", "sequence length must be >= 1")
    kv_ratio = p.n_kv_heads / p.n_heads
    per_layer = 4.0 * n * p.d_model**2 * (1.0 + kv_ratio) + 6.0 * n * p.d_model * p.d_ff
    if p.include_attention:
        per_layer += 4.0 * n**2 * p.d_model
    total = p.n_layers * per_layer
    if p.include_vocab_head:
        total += 2.0 * n * p.d_model * p.vocab_size
    return total


def kv_cache_bytes(p: ModelProfile, n: int) -> int:
    """Bytes of cached keys and values for ``n`` tokens. Exactly linear in n."""
    if n < 0:
        raise ValidationError("CONFIG_INVALID", "sequence length must be >= 0")
    head_dim = p.d_model // p.n_heads
    return 2 * p.n_layers * n * head_dim * p.n_kv_heads * p.bytes_per_element


@dataclass(frozen=True)
class EfficiencyReport:
    n_visual_before: int
    n_visual_after: int
    n_text: int
    flops_before: float
    flops_after: float
    flops_fraction: float
    kv_before_bytes: int
    kv_after_bytes: int
    kv_fraction_visual: float
    kv_fraction_full: float
    token_fraction: float


def efficiency_report(p: ModelProfile, s: SequenceProfile) -> EfficiencyReport:
    """Before/after cost fractions for a pruned visual prefix plus fixed text.

    FLOPs fractions use the full sequence (visual + text). The KV fraction is
    reported twice: visual-only (exactly the token fraction, the convention
    matching published per-image cache numbers) and full-sequence.
    """
    n_before = s.n_visual_before + s.n_text
    n_after = s.n_visual_after + s.n_text
    if n_before < 1 or n_after < 1:
        raise ValidationError("CONFIG_INVALID", "sequences must be non-empty")
    fb = flops_prefill(p, n_before)
    fa = flops_prefill(p, n_after)
    kv_vis_before = kv_cache_bytes(p, s.n_visual_before)
    kv_vis_after = kv_cache_bytes(p, s.n_visual_after)
    return EfficiencyReport(
        n_visual_before=s.n_visual_before,
        n_visual_after=s.n_visual_after,
        n_text=s.n_text,
        flops_before=fb,
        flops_after=fa,
        flops_fraction=fa / fb,
        kv_before_bytes=kv_vis_before,
        kv_after_bytes=kv_vis_after,
        kv_fraction_visual=(
            kv_vis_after / kv_vis_before if kv_vis_before else 1.0
        ),
        kv_fraction_full=kv_cache_bytes(p, n_after) / kv_cache_bytes(p, n_before),
        token_fraction=(
            s.n_visual_after / s.n_visual_before if s.n_visual_before else 1.0
        ),
    )


def calibrate_text_len(
    p: ModelProfile, s: SequenceProfile, target_fraction: float
) -> int:
    """Text length that brings the FLOPs fraction closest to ``target_fraction``.

    The fraction flops(after + t) / flops(before + t) increases monotonically
    in t, so a bisection over integer t in [0, 10 * n_visual_before] finds the
    crossing; the closer of the two bracketing integers is returned. Raises
    NoSolution when the target lies outside the attainable range. The solved
    value is a modeling aid (plausible, not asserted against measurements).
    """
    if not 0.0 < target_fraction < 1.0:
        raise ValidationError("CONFIG_INVALID", "target fraction must be in (0, 1)")

    def frac(t: int) -> float:
        return flops_prefill(p, s.n_visual_after + t) / flops_prefill(
            p, s.n_visual_before + t
        )

    lo, hi = 0, 10 * s.n_visual_before
    f_lo, f_hi = frac(lo), frac(hi)
    if target_fraction < f_lo or target_fraction > f_hi:
        raise NoSolution(
            f"target {target_fraction} outside attainable [{f_lo:.6f}, {f_hi:.6f}]"
        )
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if frac(mid) < target_fraction:
            lo = mid
        else:
            hi = mid
    # lo and hi now bracket the crossing; pick the closer fraction.
    if abs(frac(lo) - target_fraction) <= abs(frac(hi) - target_fraction):
        return lo
    return hi


def linear_profile(p: ModelProfile) -> ModelProfile:
    """Copy of ``p`` with the quadratic attention term removed."""
    return replace(p, include_attention=False, include_vocab_head=False)
