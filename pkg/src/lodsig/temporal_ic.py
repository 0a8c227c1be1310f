"""Observed-to-expected temporal disproportionality (shrunk IC and IC delta).

Contrasts how often an event follows a first-in-13-months prescription
with a self-controlled period 27 to 21 months earlier, using the shrunk
information component log2((n + 1/2)/(E + 1/2)) and its Gamma-posterior
credibility interval.  Two filter variants remove events that are already
elevated the month before the prescription (variant 1) or on the
prescription day itself (variant 2).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc

from .ranking import RankedSignalList, build_ranked_list
from .store import (DAYS_PER_MONTH, Database, StudyConfig, _KEY_BASE,
                    candidate_events, extract_exposures)


class Period(Enum):
    FOLLOWUP_U = "followup_u"
    CONTROL_V = "control_v"
    MONTH_PRIOR = "month_prior"
    DAY_OF_PRESCRIPTION = "day_of_prescription"


class FilterReason(Enum):
    NONE = "none"
    PRIOR_MONTH = "prior_month"
    DAY_OF_PRESCRIPTION = "day_of_prescription"


@dataclass(frozen=True)
class PeriodCounts:
    n_xy: int       # patients with study drug then event in the period
    n_x_dot: int    # patients with study drug and full coverage of the period
    n_dot_y: int    # patients with any first drug and event in the period
    n_dot_dot: int  # patients with any first drug and coverage of the period
    period_label: Period

    def __post_init__(self):
        if not (self.n_xy <= min(self.n_x_dot, self.n_dot_y)
                and max(self.n_x_dot, self.n_dot_y) <= self.n_dot_dot):
            raise ValueError(f"inconsistent period counts: {self}")


@dataclass(frozen=True)
class IcResult:
    event_code: str
    ic_u: float
    ic_v: float
    ic_delta: float
    ci_low: float
    ci_high: float
    filtered: bool
    filter_reason: FilterReason
    ic_prior: float = math.nan
    ic_day0: float = math.nan


def expected_count(counts: PeriodCounts) -> float:
    """Expected patients with drug-then-event under independence."""
    if counts.n_dot_dot == 0:
        raise ValueError("empty study population (n_dot_dot = 0)")
    return counts.n_x_dot * counts.n_dot_y / counts.n_dot_dot


def ic(n_xy: float, expected: float) -> float:
    """Shrunk information component log2((n + 1/2)/(E + 1/2))."""
    return math.log2((n_xy + 0.5) / (expected + 0.5))


def gamma_quantile(shape: float, rate: float, q: float) -> float:
    """Quantile of a Gamma(shape, rate) by bracketing root-find on the CDF."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    if shape <= 0 or rate <= 0:
        raise ValueError("shape and rate must be positive")

    def f(x):
        return gammainc(shape, rate * x) - q

    hi = (shape + 10.0 * math.sqrt(shape) + 10.0) / rate
    while f(hi) < 0.0:
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=1e-300, rtol=8.9e-16, maxiter=200)


def ic_credibility_bounds(n_xy: float, expected: float,
                          q_low: float = 0.025,
                          q_high: float = 0.975) -> tuple[float, float]:
    """log2 quantiles of the Gamma(n + 1/2, E + 1/2) posterior."""
    shape, rate = n_xy + 0.5, expected + 0.5
    return (math.log2(gamma_quantile(shape, rate, q_low)),
            math.log2(gamma_quantile(shape, rate, q_high)))


def ic_delta_from(n_u: float, e_u: float, n_v: float, e_v: float) -> float:
    """Two-period IC contrast with shrinkage.

    The control-period observed/expected ratio rescales the follow-up
    expectation; when the control period has no signal (n_v or E_v zero)
    the shrunk ratio (n_v + 1/2)/(E_v + 1/2) keeps the event rankable.
    """
    if n_v > 0 and e_v > 0:
        ratio = n_v / e_v
    else:
        ratio = (n_v + 0.5) / (e_v + 0.5)
    return ic(n_u, ratio * e_u)


def ic_delta(counts_u: PeriodCounts, counts_v: PeriodCounts) -> float:
    return ic_delta_from(counts_u.n_xy, expected_count(counts_u),
                         counts_v.n_xy, expected_count(counts_v))


# -- period counting ------------------------------------------------------

def period_window(period: Period, index_date, config: StudyConfig):
    """Inclusive (start, end) day bounds of a period relative to one index."""
    idx = index_date
    if period is Period.FOLLOWUP_U:
        return idx + 1, idx + config.T
    if period is Period.CONTROL_V:
        a, b = config.control_period
        return idx - a * DAYS_PER_MONTH, idx - b * DAYS_PER_MONTH - 1
    if period is Period.MONTH_PRIOR:
        return idx - DAYS_PER_MONTH, idx - 1
    if period is Period.DAY_OF_PRESCRIPTION:
        return idx, idx
    raise ValueError(f"unknown period {period!r}")


def _episode_arrays(db: Database, exposures):
    if not exposures:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    pts = np.array([db.patient_index(e.patient_id) for e in exposures])
    idx = np.array([e.index_date for e in exposures])
    return pts, idx


def _patient_level_counts(db: Database, episode_arrays, event_code: str,
                          period: Period, config: StudyConfig):
    """(patients with event in window, patients with coverage) over episodes.

    A patient counts once however many episodes or repeat events they
    have; episodes whose registration-to-last-active span does not cover
    the whole window are ignored for both counts.
    """
    pts, idx = episode_arrays
    if len(pts) == 0:
        return 0, 0
    wstart, wend = period_window(period, idx, config)
    covered = (db.registration[pts] <= wstart) & (db.last_active[pts] >= wend)

    ep_pid, ep_day = db.events_of_code(event_code)
    key = ep_pid * _KEY_BASE + ep_day
    lo = np.searchsorted(key, pts * _KEY_BASE + wstart)
    hi = np.searchsorted(key, pts * _KEY_BASE + wend, side="right")
    has_event = (hi > lo) & covered
    return len(np.unique(pts[has_event])), len(np.unique(pts[covered]))


def all_drug_exposures(db: Database, config: StudyConfig):
    """First-in-13-months episodes of every drug (for the n.. denominators)."""
    episodes = []
    for drug in db.drug_codes:
        episodes.extend(extract_exposures(
            db, dataclasses.replace(config, drug_code=drug)))
    return episodes


def period_counts(db: Database, exposures, event_code: str, period: Period,
                  config: StudyConfig, any_exposures=None) -> PeriodCounts:
    if any_exposures is None:
        any_exposures = all_drug_exposures(db, config)
    n_xy, n_x_dot = _patient_level_counts(db, _episode_arrays(db, exposures),
                                          event_code, period, config)
    n_dot_y, n_dot_dot = _patient_level_counts(
        db, _episode_arrays(db, any_exposures), event_code, period, config)
    return PeriodCounts(n_xy, n_x_dot, n_dot_y, n_dot_dot, period)


# -- scoring and ranking --------------------------------------------------

def oe_scores(db: Database, config: StudyConfig,
              variant: int = 1) -> dict[str, IcResult]:
    """Per-candidate IC delta scores with the variant's filter decisions."""
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    exposures = extract_exposures(db, config)
    cands = sorted(candidate_events(db, exposures, config.T,
                                    config.excluded_event_codes,
                                    config.include_day0))
    any_exposures = all_drug_exposures(db, config)
    x_arrays = _episode_arrays(db, exposures)
    any_arrays = _episode_arrays(db, any_exposures)

    results = {}
    for code in cands:
        by_period = {}
        for p in Period:
            n_xy, n_x_dot = _patient_level_counts(db, x_arrays, code, p,
                                                  config)
            n_dot_y, n_dot_dot = _patient_level_counts(db, any_arrays, code,
                                                       p, config)
            by_period[p] = PeriodCounts(n_xy, n_x_dot, n_dot_y, n_dot_dot, p)
        cu = by_period[Period.FOLLOWUP_U]
        cv = by_period[Period.CONTROL_V]
        e_u = expected_count(cu)
        ic_u = ic(cu.n_xy, e_u)
        ic_v = ic(cv.n_xy, expected_count(cv))
        delta = ic_delta(cu, cv)
        cm = by_period[Period.MONTH_PRIOR]
        c0 = by_period[Period.DAY_OF_PRESCRIPTION]
        ic_prior = ic(cm.n_xy, expected_count(cm))
        ic_day0 = ic(c0.n_xy, expected_count(c0))
        ci_low, ci_high = ic_credibility_bounds(cu.n_xy, e_u)

        if ic_prior > ic_u:
            filtered, reason = True, FilterReason.PRIOR_MONTH
        elif variant == 2 and ic_day0 > ic_u:
            filtered, reason = True, FilterReason.DAY_OF_PRESCRIPTION
        else:
            filtered, reason = False, FilterReason.NONE
        results[code] = IcResult(code, ic_u, ic_v, delta, ci_low, ci_high,
                                 filtered, reason, ic_prior, ic_day0)
    return results


def rank_oe(db: Database, config: StudyConfig,
            variant: int = 1) -> RankedSignalList:
    """Rank unfiltered candidates by IC delta descending."""
    results = oe_scores(db, config, variant)
    scores = {c: r.ic_delta for c, r in results.items() if not r.filtered}
    filtered = {c: r.filter_reason.value for c, r in results.items()
                if r.filtered}
    return build_ranked_list(f"oe{variant}", config.drug_code, scores,
                             filtered=filtered)
