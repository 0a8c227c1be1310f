"""Ranked signal lists shared by every detection algorithm."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class RankedEntry:
    event_code: str
    score: float | None   # None marks an undefined score, ranked last
    rank: int


@dataclass
class RankedSignalList:
    algorithm: str
    drug_code: str
    entries: list[RankedEntry]
    seed: int | None = None
    # event_code -> reason, for events removed before ranking (OE filters)
    filtered: dict[str, str] = field(default_factory=dict)

    def event_codes(self) -> list[str]:
        return [e.event_code for e in self.entries]

    def rank_of(self, event_code: str) -> int | None:
        for e in self.entries:
            if e.event_code == event_code:
                return e.rank
        return None


def _sort_key(item):
    code, score = item
    if score is None:
        return (1, 0.0, code)
    return (0, -score, code)


def rank_events(scores: dict[str, float | None]) -> dict[str, int]:
    """1-based ranks: score descending, ties and None broken by event code."""
    ordered = sorted(scores.items(), key=_sort_key)
    return {code: i + 1 for i, (code, _) in enumerate(ordered)}


def build_ranked_list(algorithm: str, drug_code: str,
                      scores: dict[str, float | None],
                      seed: int | None = None,
                      filtered: dict[str, str] | None = None) -> RankedSignalList:
    ordered = sorted(scores.items(), key=_sort_key)
    entries = [RankedEntry(code, score, i + 1)
               for i, (code, score) in enumerate(ordered)]
    return RankedSignalList(algorithm, drug_code, entries, seed,
                            dict(filtered or {}))
