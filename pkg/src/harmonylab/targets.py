"""Rating ingestion and target fixing.

Human ratings land on a 1..5 scale (5 = very harmonic). Re-rating rounds
give per-class deviation distributions on a half-unit grid; iterating
those distributions in a Monte Carlo chain yields the long-run rating
each class would converge to, which motivates merging the five classes
into Bad / Neutral / Good.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

RATING_MIN, RATING_MAX = 1, 5
DEVIATION_GRID = np.round(np.arange(-4.0, 4.0 + 1e-9, 0.5), 1)   # 17 half-unit steps

MERGE_MAP = {1: "Bad", 2: "Neutral", 3: "Neutral", 4: "Good", 5: "Good"}
CLASS_LABELS = ("Bad", "Neutral", "Good")


class RatingError(ValueError):
    pass


@dataclass(frozen=True)
class RatingRecord:
    composition_id: str
    rating: int
    round: int
    rater_id: str
    timestamp: float

    def validate(self) -> None:
        if not isinstance(self.rating, int) or not RATING_MIN <= self.rating <= RATING_MAX:
            raise RatingError(f"rating {self.rating!r} outside {RATING_MIN}..{RATING_MAX}")
        if self.round < 0:
            raise RatingError("round must be >= 0")

    def to_dict(self) -> dict:
        return {"composition_id": self.composition_id, "rating": self.rating,
                "round": self.round, "rater_id": self.rater_id, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, data: dict) -> "RatingRecord":
        rec = cls(data["composition_id"], int(data["rating"]), int(data["round"]),
                  data["rater_id"], float(data["timestamp"]))
        rec.validate()
        return rec


def load_ratings(path) -> list[RatingRecord]:
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(RatingRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise RatingError(f"{path}:{lineno}: bad rating record: {exc}") from exc
    return records


def append_rating(path, record: RatingRecord) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        fh.flush()


def merge_classes(rating: int) -> str:
    """1 -> Bad; 2, 3 -> Neutral; 4, 5 -> Good."""
    if rating not in MERGE_MAP:
        raise RatingError(f"rating {rating!r} outside {RATING_MIN}..{RATING_MAX}")
    return MERGE_MAP[rating]


def _filter(records, rater_id):
    if rater_id is None:
        return list(records)
    return [r for r in records if r.rater_id == rater_id]


def initial_ratings(records, rater_id=None) -> dict[str, int]:
    """Round-0 rating per composition."""
    out: dict[str, int] = {}
    for rec in _filter(records, rater_id):
        if rec.round == 0:
            out[rec.composition_id] = rec.rating
    return out


@dataclass
class DeviationDistribution:
    """Per initial class: probability mass over half-unit deviations."""

    pmf: dict[int, np.ndarray]
    flagged: set[int] = field(default_factory=set)

    def validate(self) -> None:
        for c, p in self.pmf.items():
            if abs(p.sum() - 1.0) > 1e-9:
                raise RatingError(f"class {c} deviation masses sum to {p.sum()}")
            support = DEVIATION_GRID[p > 0]
            if support.size and (support.min() < RATING_MIN - c or support.max() > RATING_MAX - c):
                raise RatingError(f"class {c} has deviations leaving [1, 5]")


def _snap_half(x: float) -> float:
    return float(np.round(x * 2.0) / 2.0)


def deviation_distributions(records, rater_id=None) -> DeviationDistribution:
    """Empirical distribution, per initial class, of (mean re-rating - initial),
    snapped to the half-unit grid. Classes with no re-rated member get a
    degenerate distribution at 0 and are flagged."""
    records = _filter(records, rater_id)
    initial = initial_ratings(records)
    rerates: dict[str, list[int]] = {}
    for rec in records:
        if rec.round >= 1 and rec.composition_id in initial:
            rerates.setdefault(rec.composition_id, []).append(rec.rating)
    grid_index = {v: i for i, v in enumerate(DEVIATION_GRID.tolist())}
    counts = {c: np.zeros(len(DEVIATION_GRID)) for c in range(RATING_MIN, RATING_MAX + 1)}
    for comp_id, rr in rerates.items():
        c = initial[comp_id]
        dev = _snap_half(float(np.mean(rr)) - c)
        counts[c][grid_index[dev]] += 1
    pmf, flagged = {}, set()
    for c, arr in counts.items():
        total = arr.sum()
        if total == 0:
            degenerate = np.zeros(len(DEVIATION_GRID))
            degenerate[grid_index[0.0]] = 1.0
            pmf[c] = degenerate
            flagged.add(c)
        else:
            pmf[c] = arr / total
    dist = DeviationDistribution(pmf, flagged)
    dist.validate()
    return dist


@dataclass
class ConvergedRatings:
    """Long-run mean rating per initial class, with Monte Carlo standard errors."""

    values: dict[int, float]
    stderr: dict[int, float]

    def as_table(self) -> str:
        lines = ["Old rating | New rating", "-----------+-----------"]
        for c in sorted(self.values):
            lines.append(f"{c:>10} | {self.values[c]:.2f}")
        return "\n".join(lines)


def simulate_convergence(dist: DeviationDistribution, rounds: int = 200,
                         trials: int = 10_000, seed: int = 0) -> ConvergedRatings:
    """Monte Carlo of iterated re-rating.

    Each chain starts at its integer class; at every step a deviation is
    drawn from the distribution of the nearest integer class of the
    current value (half-up), added, and clamped to [1, 5]. The converged
    value is the mean over trials of each trial's trajectory average
    after a burn-in of rounds // 2 steps.
    """
    dist.validate()
    burn_in = rounds // 2
    keep = max(rounds - burn_in, 1)
    cdfs = np.stack([np.cumsum(dist.pmf[c]) for c in range(RATING_MIN, RATING_MAX + 1)])
    seeds = np.random.SeedSequence(seed).spawn(RATING_MAX - RATING_MIN + 1)
    values, stderr = {}, {}
    for c in range(RATING_MIN, RATING_MAX + 1):
        rng = np.random.Generator(np.random.PCG64(seeds[c - RATING_MIN]))
        vals = np.full(trials, float(c))
        acc = np.zeros(trials)
        for step in range(rounds):
            cls_idx = np.clip(np.floor(vals + 0.5).astype(int), RATING_MIN, RATING_MAX) - 1
            u = rng.random(trials)
            draw_idx = (u[:, None] <= cdfs[cls_idx]).argmax(axis=1)
            vals = np.clip(vals + DEVIATION_GRID[draw_idx], RATING_MIN, RATING_MAX)
            if step >= burn_in:
                acc += vals
        per_trial = acc / keep
        values[c] = float(per_trial.mean())
        stderr[c] = float(per_trial.std() / np.sqrt(trials))
    return ConvergedRatings(values, stderr)


def rerate_queue(records, subset_size: int, rounds_target: int,
                 rater_id=None) -> list[str]:
    """Composition ids queued for another rating round.

    Membership is a stable class-stratified subset of the already-rated
    compositions (proportional allocation, largest remainder, ids in
    sorted order within each class), so completing a round never swaps
    new compositions into the subset. Each member is brought up to
    rounds_target total rounds; the queue repeats an id once per missing
    round, ordered fewest-completed-rounds-first (ties by id).
    """
    records = _filter(records, rater_id)
    initial = initial_ratings(records)
    if not initial:
        return []
    rounds_done: dict[str, set[int]] = {cid: set() for cid in initial}
    for rec in records:
        if rec.composition_id in rounds_done:
            rounds_done[rec.composition_id].add(rec.round)
    by_class: dict[int, list[str]] = {}
    for cid in sorted(initial):
        by_class.setdefault(initial[cid], []).append(cid)
    subset_size = min(subset_size, len(initial))
    quotas = _proportional_quota({c: len(v) for c, v in by_class.items()}, subset_size)
    chosen: list[str] = []
    for c in sorted(by_class):
        chosen.extend(by_class[c][:quotas[c]])
    heap = sorted(((len(rounds_done[cid]), cid) for cid in chosen))
    queue: list[str] = []
    import heapq
    heapq.heapify(heap)
    while heap:
        done, cid = heapq.heappop(heap)
        if done >= rounds_target:
            continue
        queue.append(cid)
        if done + 1 < rounds_target:
            heapq.heappush(heap, (done + 1, cid))
    return queue


def _proportional_quota(sizes: dict[int, int], total: int) -> dict[int, int]:
    pool = sum(sizes.values())
    raw = {c: total * n / pool for c, n in sizes.items()}
    quota = {c: int(np.floor(v)) for c, v in raw.items()}
    remainder = total - sum(quota.values())
    order = sorted(sizes, key=lambda c: (-(raw[c] - quota[c]), c))
    for c in order[:remainder]:
        quota[c] += 1
    return {c: min(quota[c], sizes[c]) for c in quota}
