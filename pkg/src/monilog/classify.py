"""Pool classification of anomaly reports, trained passively by triage actions.

Every administrator action (moving a report between pools, adjusting its
criticality) becomes a feedback event.  Pool centroids are incremental means
of the feature vectors of reports moved into them, so the classifier needs no
batch retraining and replaying the event log reproduces its state exactly.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

from .detect import AnomalyReport

DEFAULT_POOL_ID = 0
DEFAULT_POOL_NAME = "default"
DEFAULT_ASSIGNMENT_THRESHOLD = 0.2

CRITICALITY_LEVELS = ("low", "moderate", "high")

EVENT_MOVED_POOL = "moved_pool"
EVENT_SET_CRITICALITY = "set_criticality"


def criticality_rank(level: str) -> int:
    try:
        return CRITICALITY_LEVELS.index(level)
    except ValueError:
        raise ValueError(f"unknown criticality level: {level}") from None


@dataclass(frozen=True)
class Pool:
    pool_id: int
    name: str
    created_at: int
    deletable: bool = True


@dataclass(frozen=True)
class FeedbackEvent:
    event_id: int
    report_id: int
    kind: str  # moved_pool | set_criticality
    from_value: str
    to_value: str
    actor: str
    at: int  # epoch ms

    def to_wire(self) -> dict:
        return {
            "event_id": self.event_id,
            "report_id": self.report_id,
            "kind": self.kind,
            "from": self.from_value,
            "to": self.to_value,
            "actor": self.actor,
            "at": self.at,
        }


FeatureVector = dict[str, float]


def _normalize(vector: Mapping[str, float]) -> FeatureVector:
    norm = math.sqrt(sum(v * v for v in vector.values()))
    if norm <= 0.0:
        return dict(vector)
    return {k: v / norm for k, v in vector.items()}


def _cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    if len(b) < len(a):
        a, b = b, a
    return sum(v * b.get(k, 0.0) for k, v in a.items())


def featurize(report: AnomalyReport) -> FeatureVector:
    """Template-count features over the report context plus a trigger-kind dim."""
    raw: FeatureVector = {}
    for record in report.context_records:
        key = f"t:{record.template_id}"
        raw[key] = raw.get(key, 0.0) + 1.0
    raw[f"k:{report.trigger}"] = 1.0
    return _normalize(raw)


class PoolClassifier:
    """Nearest-centroid pool assignment with event-sourced feedback learning."""

    def __init__(self, assignment_threshold: float = DEFAULT_ASSIGNMENT_THRESHOLD) -> None:
        if not 0.0 <= assignment_threshold <= 1.0:
            raise ValueError("assignment_threshold must be in [0, 1]")
        self.assignment_threshold = assignment_threshold
        self.pools: dict[int, Pool] = {
            DEFAULT_POOL_ID: Pool(DEFAULT_POOL_ID, DEFAULT_POOL_NAME, 0, deletable=False)
        }
        self._next_pool_id = 1
        self._centroid_sums: dict[int, FeatureVector] = {}
        self._example_counts: dict[int, int] = {}
        self._crit_hist: dict[int, Counter] = {}
        self._assignments: dict[int, int] = {}
        self._criticality: dict[int, str] = {}
        self._contributions: dict[int, tuple[int, FeatureVector]] = {}
        self._crit_contrib: dict[int, tuple[int, str]] = {}
        self._applied_events: set[int] = set()

    # -- pools -----------------------------------------------------------

    @property
    def next_pool_id(self) -> int:
        return self._next_pool_id

    def create_pool(self, name: str, created_at: int = 0, pool_id: int | None = None) -> Pool:
        if any(p.name == name for p in self.pools.values()):
            raise ValueError(f"pool name already exists: {name}")
        if pool_id is None:
            pool_id = self._next_pool_id
        if pool_id in self.pools:
            raise ValueError(f"pool id already exists: {pool_id}")
        self._next_pool_id = max(self._next_pool_id, pool_id) + 1
        pool = Pool(pool_id, name, created_at)
        self.pools[pool_id] = pool
        return pool

    def delete_pool(self, pool_id: int) -> list[int]:
        """Drop a pool; its reports move to the default pool.

        Returns the ids of the reassigned reports.
        """
        pool = self.pools.get(pool_id)
        if pool is None:
            raise ValueError(f"unknown pool: {pool_id}")
        if not pool.deletable:
            raise ValueError("the default pool cannot be deleted")
        del self.pools[pool_id]
        self._centroid_sums.pop(pool_id, None)
        self._example_counts.pop(pool_id, None)
        self._crit_hist.pop(pool_id, None)
        moved = [rid for rid, pid in self._assignments.items() if pid == pool_id]
        for rid in moved:
            self._assignments[rid] = DEFAULT_POOL_ID
        for rid in [r for r, (p, _) in self._contributions.items() if p == pool_id]:
            del self._contributions[rid]
        for rid in [r for r, (p, _) in self._crit_contrib.items() if p == pool_id]:
            del self._crit_contrib[rid]
        return sorted(moved)

    def labeled_example_count(self, pool_id: int) -> int:
        return self._example_counts.get(pool_id, 0)

    # -- prediction ------------------------------------------------------

    def centroid(self, pool_id: int) -> FeatureVector:
        if self._example_counts.get(pool_id, 0) <= 0:
            return {}
        return _normalize(self._centroid_sums[pool_id])

    def predict(self, features: Mapping[str, float]) -> tuple[int, str, float]:
        """(pool_id, criticality, confidence) for a feature vector.

        The best pool wins when its cosine similarity reaches the assignment
        threshold; otherwise the report stays in the default pool for human
        review.  Criticality is the mode of the chosen pool's histogram.
        """
        best_pool = None
        best_sim = 0.0
        for pool_id in sorted(self.pools):
            if self._example_counts.get(pool_id, 0) <= 0:
                continue
            sim = _cosine(features, self.centroid(pool_id))
            if best_pool is None or sim > best_sim + 1e-12:
                best_pool, best_sim = pool_id, sim
            elif abs(sim - best_sim) <= 1e-12 and best_pool is not None:
                tie_new = (-self._example_counts.get(pool_id, 0), pool_id)
                tie_old = (-self._example_counts.get(best_pool, 0), best_pool)
                if tie_new < tie_old:
                    best_pool = pool_id
        if best_pool is None or best_sim < self.assignment_threshold:
            chosen = DEFAULT_POOL_ID
        else:
            chosen = best_pool
        return chosen, self.pool_criticality(chosen), best_sim

    def pool_criticality(self, pool_id: int) -> str:
        hist = self._crit_hist.get(pool_id)
        if not hist or sum(hist.values()) <= 0:
            return CRITICALITY_LEVELS[0]
        # Mode; ties resolve toward the more severe level.
        return max(hist.items(), key=lambda kv: (kv[1], criticality_rank(kv[0])))[0]

    # -- report registry -------------------------------------------------

    def register_report(self, report_id: int, pool_id: int, criticality: str) -> None:
        """Record an automatic assignment (does not train the centroids)."""
        if pool_id not in self.pools:
            raise ValueError(f"unknown pool: {pool_id}")
        criticality_rank(criticality)
        self._assignments[report_id] = pool_id
        self._criticality[report_id] = criticality

    def assignment(self, report_id: int) -> int | None:
        return self._assignments.get(report_id)

    def report_criticality(self, report_id: int) -> str | None:
        return self._criticality.get(report_id)

    @property
    def report_ids(self) -> list[int]:
        return sorted(self._assignments)

    # -- feedback --------------------------------------------------------

    def apply_feedback(self, event: FeedbackEvent, features: Mapping[str, float]) -> None:
        """Apply one triage action; replaying an event id is a no-op."""
        if event.event_id in self._applied_events:
            return
        if event.report_id not in self._assignments:
            raise ValueError(f"unknown report: {event.report_id}")
        if event.kind == EVENT_MOVED_POOL:
            dest = int(event.to_value)
            if dest not in self.pools:
                raise ValueError(f"unknown pool: {dest}")
            previous = self._contributions.get(event.report_id)
            if previous is not None:
                old_pool, old_features = previous
                if old_pool in self.pools:
                    sums = self._centroid_sums.get(old_pool, {})
                    for key, value in old_features.items():
                        sums[key] = sums.get(key, 0.0) - value
                        if abs(sums[key]) < 1e-15:
                            del sums[key]
                    self._example_counts[old_pool] = max(
                        0, self._example_counts.get(old_pool, 0) - 1
                    )
            sums = self._centroid_sums.setdefault(dest, {})
            for key, value in features.items():
                sums[key] = sums.get(key, 0.0) + value
            self._example_counts[dest] = self._example_counts.get(dest, 0) + 1
            self._contributions[event.report_id] = (dest, dict(features))
            self._assignments[event.report_id] = dest
        elif event.kind == EVENT_SET_CRITICALITY:
            level = event.to_value
            criticality_rank(level)
            pool_id = self._assignments[event.report_id]
            previous = self._crit_contrib.get(event.report_id)
            if previous is not None:
                old_pool, old_level = previous
                if old_pool in self._crit_hist:
                    self._crit_hist[old_pool][old_level] -= 1
                    if self._crit_hist[old_pool][old_level] <= 0:
                        del self._crit_hist[old_pool][old_level]
            self._crit_hist.setdefault(pool_id, Counter())[level] += 1
            self._crit_contrib[event.report_id] = (pool_id, level)
            self._criticality[event.report_id] = level
        else:
            raise ValueError(f"unknown feedback kind: {event.kind}")
        self._applied_events.add(event.event_id)

    # -- persistence -----------------------------------------------------

    def to_state_dict(self) -> dict:
        return {
            "assignment_threshold": self.assignment_threshold,
            "next_pool_id": self._next_pool_id,
            "pools": [
                {
                    "pool_id": p.pool_id,
                    "name": p.name,
                    "created_at": p.created_at,
                    "deletable": p.deletable,
                }
                for p in sorted(self.pools.values(), key=lambda p: p.pool_id)
            ],
            "centroid_sums": {
                str(pid): dict(sorted(sums.items()))
                for pid, sums in sorted(self._centroid_sums.items())
            },
            "example_counts": {str(k): v for k, v in sorted(self._example_counts.items())},
            "crit_hist": {
                str(pid): dict(sorted(hist.items()))
                for pid, hist in sorted(self._crit_hist.items())
            },
            "assignments": {str(k): v for k, v in sorted(self._assignments.items())},
            "criticality": {str(k): v for k, v in sorted(self._criticality.items())},
            "contributions": {
                str(rid): [pid, dict(sorted(features.items()))]
                for rid, (pid, features) in sorted(self._contributions.items())
            },
            "crit_contrib": {
                str(rid): list(entry) for rid, entry in sorted(self._crit_contrib.items())
            },
            "applied_events": sorted(self._applied_events),
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "PoolClassifier":
        clf = cls(assignment_threshold=state["assignment_threshold"])
        clf.pools = {
            p["pool_id"]: Pool(p["pool_id"], p["name"], p["created_at"], p["deletable"])
            for p in state["pools"]
        }
        clf._next_pool_id = state["next_pool_id"]
        clf._centroid_sums = {int(k): dict(v) for k, v in state["centroid_sums"].items()}
        clf._example_counts = {int(k): v for k, v in state["example_counts"].items()}
        clf._crit_hist = {int(k): Counter(v) for k, v in state["crit_hist"].items()}
        clf._assignments = {int(k): v for k, v in state["assignments"].items()}
        clf._criticality = {int(k): v for k, v in state["criticality"].items()}
        clf._contributions = {
            int(k): (v[0], dict(v[1])) for k, v in state["contributions"].items()
        }
        clf._crit_contrib = {
            int(k): (v[0], v[1]) for k, v in state["crit_contrib"].items()
        }
        clf._applied_events = set(state["applied_events"])
        return clf
