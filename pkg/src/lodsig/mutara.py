"""Unexpected-leverage sequence mining (MUTARA) and rank-ratio scoring (HUNT).

MUTARA scores each candidate event by its unexpected leverage: the
patient support of event-within-T-days-of-first-prescription, minus the
support expected under independence, where patients who already had the
event in a pre-exposure window are treated as predictable and excluded.
HUNT re-ranks by the ratio of the plain-leverage rank to the
unexpected-leverage rank, demoting therapeutic-failure style events.

Background rates come from one random T-day window per never-exposed
patient; the window start is derived from (seed, patient_id) so results
are reproducible and independent of iteration order or thread count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .ranking import RankedSignalList, build_ranked_list, rank_events
from .store import (DAYS_12_MONTHS, Database, StudyConfig, _KEY_BASE,
                    candidate_events, extract_exposures,
                    first_exposure_per_patient)


@dataclass(frozen=True)
class SupportCounts:
    supp_x: int                 # patients holding a qualifying first episode
    supp_seq_unexpected: int    # event in follow-up, none in pre-window
    supp_seq: int               # event in follow-up, no filter
    supp_bg_unexpected: int     # background supports (never-exposed patients)
    supp_bg: int
    population: int

    def __post_init__(self):
        if not (self.supp_seq_unexpected <= self.supp_seq <= self.supp_x
                <= self.population):
            raise ValueError(f"inconsistent support counts: {self}")


def background_window_start(seed: int, patient_id: str, registration: int,
                            last_active: int, T: int) -> int | None:
    """Deterministic random T-day background window start for one patient.

    Uniform over [registration + 365, last_active - T]; None when the
    active span cannot fit a window.
    """
    lo = registration + DAYS_12_MONTHS
    hi = last_active - T
    if hi < lo:
        return None
    digest = hashlib.blake2b(f"{seed}|{patient_id}".encode(),
                             digest_size=8).digest()
    return lo + int.from_bytes(digest, "big") % (hi - lo + 1)


def _background_starts(db: Database, seed: int, T: int) -> np.ndarray:
    """Per-patient window starts; -1 marks patients without a window."""
    starts = np.empty(db.n_patients, dtype=np.int64)
    for i, pid in enumerate(db.patient_ids):
        s = background_window_start(seed, pid, int(db.registration[i]),
                                    int(db.last_active[i]), T)
        starts[i] = -1 if s is None else s
    return starts


def _flags_by_patient(db, event_code, pts, wstart, wend):
    """Boolean per pts row: does the patient have the event in [wstart, wend]."""
    ep_pid, ep_day = db.events_of_code(event_code)
    key = ep_pid * _KEY_BASE + ep_day
    lo = np.searchsorted(key, pts * _KEY_BASE + wstart)
    hi = np.searchsorted(key, pts * _KEY_BASE + wend, side="right")
    return hi > lo


def support_counts(db: Database, exposures, event_code: str,
                   config: StudyConfig, seed: int,
                   background_starts: np.ndarray | None = None) -> SupportCounts:
    """All MUTARA/HUNT supports for one candidate event.

    Only the first qualifying episode per patient is used.  The
    predictable filter window is [index - pre_window, index] (the
    prescription day included); a pre_window of 0 disables filtering.
    """
    exposures = first_exposure_per_patient(exposures)
    T, pre = config.T, config.pre_window
    if background_starts is None:
        background_starts = _background_starts(db, seed, T)

    x_pts = np.array([db.patient_index(e.patient_id) for e in exposures],
                     dtype=np.int64)
    x_idx = np.array([e.index_date for e in exposures], dtype=np.int64)
    post = _flags_by_patient(db, event_code, x_pts, x_idx + 1, x_idx + T)
    if pre > 0:
        predictable = _flags_by_patient(db, event_code, x_pts, x_idx - pre,
                                        x_idx)
    else:
        predictable = np.zeros(len(x_pts), dtype=bool)
    supp_seq = int(post.sum())
    supp_seq_unexpected = int((post & ~predictable).sum())

    # never-exposed patients with a drawn window
    ever_x = np.zeros(db.n_patients, dtype=bool)
    rx_pid, _ = db.prescriptions_of_drug(config.drug_code)
    ever_x[rx_pid] = True
    bg_pts = np.flatnonzero(~ever_x & (background_starts >= 0))
    bg_start = background_starts[bg_pts]
    bg_post = _flags_by_patient(db, event_code, bg_pts, bg_start + 1,
                                bg_start + T)
    if pre > 0:
        bg_predictable = _flags_by_patient(db, event_code, bg_pts,
                                           bg_start - pre, bg_start)
    else:
        bg_predictable = np.zeros(len(bg_pts), dtype=bool)
    supp_bg = int(bg_post.sum())
    supp_bg_unexpected = int((bg_post & ~bg_predictable).sum())

    return SupportCounts(len(exposures), supp_seq_unexpected, supp_seq,
                         supp_bg_unexpected, supp_bg, db.n_patients)


def unexlev_from_counts(c: SupportCounts) -> float:
    observed = c.supp_seq_unexpected
    background = c.supp_bg_unexpected + c.supp_seq_unexpected
    return observed - c.supp_x * background / c.population


def leverage_from_counts(c: SupportCounts) -> float:
    observed = c.supp_seq
    background = c.supp_bg + c.supp_seq
    return observed - c.supp_x * background / c.population


def unexlev(db: Database, exposures, event_code: str, config: StudyConfig,
            seed: int | None = None) -> float:
    seed = config.rng_seed if seed is None else seed
    return unexlev_from_counts(
        support_counts(db, exposures, event_code, config, seed))


def leverage(db: Database, exposures, event_code: str, config: StudyConfig,
             seed: int | None = None) -> float:
    seed = config.rng_seed if seed is None else seed
    return leverage_from_counts(
        support_counts(db, exposures, event_code, config, seed))


def _all_support_counts(db: Database, config: StudyConfig):
    all_episodes = extract_exposures(db, config)
    # candidate set is shared across algorithms, so derive it from every
    # episode even though scoring uses only the first episode per patient
    cands = sorted(candidate_events(db, all_episodes, config.T,
                                    config.excluded_event_codes,
                                    config.include_day0))
    exposures = first_exposure_per_patient(all_episodes)
    starts = _background_starts(db, config.rng_seed, config.T)
    return {code: support_counts(db, exposures, code, config,
                                 config.rng_seed, starts)
            for code in cands}


def rank_mutara(db: Database, config: StudyConfig) -> RankedSignalList:
    """Candidates in descending unexpected-leverage order."""
    counts = _all_support_counts(db, config)
    scores = {code: unexlev_from_counts(c) for code, c in counts.items()}
    return build_ranked_list("mutara", config.drug_code, scores,
                             seed=config.rng_seed)


def rank_hunt(db: Database, config: StudyConfig) -> RankedSignalList:
    """Candidates in descending rank-ratio (leverage rank / unexlev rank)."""
    counts = _all_support_counts(db, config)
    unex = {code: unexlev_from_counts(c) for code, c in counts.items()}
    lev = {code: leverage_from_counts(c) for code, c in counts.items()}
    rank_unex = rank_events(unex)
    rank_lev = rank_events(lev)
    rr = {code: rank_lev[code] / rank_unex[code] for code in counts}
    return build_ranked_list("hunt", config.drug_code, rr,
                             seed=config.rng_seed)
