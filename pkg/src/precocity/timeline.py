"""Calendar arithmetic: comparison windows and perplexity period grids.

All resolution is the calendar year.  Comparison windows look a fixed
number of years back and forward, never including the target's own
year.  The perplexity scheme tiles the timeline into short buckets and
assigns each bucket a past and a future training period, each one full
window length away from the bucket's own period.
"""

from __future__ import annotations

from dataclasses import dataclass

YearRange = tuple[int, int]


@dataclass(frozen=True)
class WindowConfig:
    corpus_start: int
    corpus_end: int
    past_years: int = 20
    future_years: int = 20
    # Reduces the central period's upper end; exposes the choice between
    # the arithmetic endpoint and a one-year-shy convention.
    central_end_margin: int = 0

    def __post_init__(self):
        if self.past_years <= 0 or self.future_years <= 0:
            raise ValueError("window lengths must be positive")
        if self.corpus_start > self.corpus_end:
            raise ValueError("corpus_start must be <= corpus_end")
        if self.central_end_margin < 0:
            raise ValueError("central_end_margin must be >= 0")


@dataclass(frozen=True)
class PeriodScheme:
    window_len: int = 12
    offset: int = 4
    # 1968 starts a bucket under the default grid, matching the reference
    # timeline; any year congruent to the intended grid works.
    anchor_year: int = 1968

    def __post_init__(self):
        if self.offset < 1:
            raise ValueError("offset must be >= 1")
        if self.window_len % self.offset != 0:
            raise ValueError("window_len must be a multiple of offset")
        if (self.window_len - self.offset) % 2 != 0:
            raise ValueError("window_len - offset must be even (centered bucket)")


@dataclass(frozen=True)
class PeriodAssignment:
    bucket: YearRange
    past_range: YearRange
    future_range: YearRange
    own_range: YearRange


def comparison_window(year: int, cfg: WindowConfig) -> tuple[YearRange, YearRange]:
    """Past and future year ranges for a document published in ``year``.

    The target's own year belongs to neither range.
    """
    past = (year - cfg.past_years, year - 1)
    future = (year + 1, year + cfg.future_years)
    return past, future


def is_central(year: int, cfg: WindowConfig) -> bool:
    """Whether both full comparison shoulders exist inside the corpus."""
    return (
        year - cfg.past_years >= cfg.corpus_start
        and year + cfg.future_years <= cfg.corpus_end - cfg.central_end_margin
    )


def central_range(cfg: WindowConfig) -> YearRange:
    return (
        cfg.corpus_start + cfg.past_years,
        cfg.corpus_end - cfg.future_years - cfg.central_end_margin,
    )


def perplexity_periods(year: int, scheme: PeriodScheme) -> PeriodAssignment:
    """Bucket and past/future training ranges for ``year``.

    The bucket is the central ``offset`` years of its own
    ``window_len``-year period; the past and future periods sit exactly
    one window length below and above that period.
    """
    t = scheme.anchor_year + ((year - scheme.anchor_year) // scheme.offset) * scheme.offset
    pad = (scheme.window_len - scheme.offset) // 2
    own = (t - pad, t - pad + scheme.window_len - 1)
    past = (own[0] - scheme.window_len, own[1] - scheme.window_len)
    future = (own[0] + scheme.window_len, own[1] + scheme.window_len)
    return PeriodAssignment(
        bucket=(t, t + scheme.offset - 1),
        past_range=past,
        future_range=future,
        own_range=own,
    )


def period_is_central(year: int, scheme: PeriodScheme, corpus: YearRange) -> bool:
    """Whether the year's past and future periods fit inside the corpus."""
    pa = perplexity_periods(year, scheme)
    return pa.past_range[0] >= corpus[0] and pa.future_range[1] <= corpus[1]
