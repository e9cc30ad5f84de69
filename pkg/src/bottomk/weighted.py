"""Threshold and priority sampling of weighted items, with subset-sum estimators.

Each item's key is hashed to h in (0, 1) and given priority q = w / h > w.
A priority sample of size k keeps the k highest-priority items plus tau, the
exact (k + 1)-th highest priority; a sampled item's weight estimate is
max(w, tau).  With a fixed threshold t instead, an item is sampled iff
q > t and estimated as max(w, t), which is unbiased whenever every h is
marginally uniform, regardless of independence.

Priorities are computed in double precision.  Ranking ties between distinct
keys are broken by the exact hash (smaller wins), which makes the
unit-weight priority sample coincide with the bottom-k sketch key for key;
ties between the twins of one key (histogram sampling) are broken in favor
of the first set.
"""

from __future__ import annotations

import heapq
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .hashing import UnitHasher

__all__ = [
    "WeightedItem",
    "FractionVector",
    "PriorityEntry",
    "PrioritySample",
    "ThresholdSample",
    "SmallWeightStats",
    "HistogramEstimate",
    "DegenerateSampleError",
    "SampleMismatchError",
    "threshold_sample",
    "threshold_estimate",
    "priority_estimate",
    "small_weight_stats",
    "merge_priority_samples",
    "histogram_twins_sample",
    "histogram_estimate",
    "TAG_A",
    "TAG_B",
]

TAG_A = "A"
TAG_B = "B"


class DegenerateSampleError(ValueError):
    """Fewer items than k + 1 were offered: the sample is exact, tau undefined."""


class SampleMismatchError(ValueError):
    """Samples disagree on capacity or hasher and cannot be combined."""


@dataclass(frozen=True)
class WeightedItem:
    key: int
    weight: float

    def __post_init__(self):
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ValueError(f"item weight must be positive and finite, got {self.weight}")


class FractionVector:
    """Per-key contribution fractions f_i in [0, 1]; unmapped keys contribute 0."""

    def __init__(self, fractions: Mapping[int, float]):
        for key, f in fractions.items():
            if not 0.0 <= f <= 1.0:
                raise ValueError(f"fraction for key {key} outside [0, 1]: {f}")
        self._fractions = {int(k): float(f) for k, f in fractions.items()}

    @classmethod
    def indicator(cls, keys: Iterable[int]) -> "FractionVector":
        """The 0/1 vector of a regular subset."""
        return cls({int(k): 1.0 for k in keys})

    def get(self, key: int) -> float:
        return self._fractions.get(int(key), 0.0)

    @property
    def is_zero(self) -> bool:
        return all(f == 0.0 for f in self._fractions.values())

    def __len__(self) -> int:
        return len(self._fractions)


Fractions = Union[FractionVector, Mapping[int, float], None]


def _fraction_getter(f: Fractions) -> Callable[[int], float]:
    if f is None:
        return lambda key: 1.0
    if isinstance(f, FractionVector):
        return f.get
    return FractionVector(f).get


@dataclass(frozen=True)
class PriorityEntry:
    key: int
    weight: float
    priority: float
    tag: Optional[str] = None


# Internal ranking record: worst-first tuple ordering.  Larger priority is
# better; on (double-precision) priority ties the smaller exact hash wins;
# twins of one key share a hash and the A twin wins.
@dataclass(frozen=True, order=True)
class _Rank:
    q: float
    neg_hash: object
    tag_rank: int  # B=0 < A=1 so that A outranks B


@dataclass(frozen=True)
class _Rec:
    rank: _Rank
    key: int
    weight: float
    tag: Optional[str]

    def entry(self) -> PriorityEntry:
        return PriorityEntry(self.key, self.weight, self.rank.q, self.tag)


def _make_rank(q: float, h_exact, tag: Optional[str]) -> _Rank:
    return _Rank(q, -h_exact, 1 if tag != TAG_B else 0)


class PrioritySample:
    """The k highest-priority weighted items plus the exact (k+1)-th priority.

    Internally retains k + 1 records so that tau is tracked exactly during
    streaming.  Offering the same key twice is an error.  Construction is
    single-writer; finished samples are immutable and freely shareable.
    """

    def __init__(self, k: int, hasher: Optional[UnitHasher] = None, *, hasher_id: Optional[str] = None):
        if k < 1:
            raise ValueError("sample capacity k must be at least 1")
        if hasher is None and hasher_id is None:
            raise ValueError("a hasher or a hasher_id is required")
        self.k = k
        self._hasher = hasher
        self._hasher_id = hasher_id if hasher_id is not None else hasher.hasher_id
        self._heap: List[Tuple[_Rank, _Rec]] = []  # worst-first, size <= k + 1
        self._seen: set[Tuple[int, Optional[str]]] = set()

    # -- construction ----------------------------------------------------

    def offer(self, item: Union[WeightedItem, Tuple[int, float]], weight: Optional[float] = None) -> None:
        """Offer one weighted item (WeightedItem, (key, weight), or key + weight)."""
        if weight is not None:
            key, w = int(item), float(weight)  # type: ignore[arg-type]
        elif isinstance(item, WeightedItem):
            key, w = item.key, item.weight
        else:
            key, w = int(item[0]), float(item[1])
        WeightedItem(key, w)  # validation
        if self._hasher is None:
            raise ValueError("this sample carries no hasher (deserialized?); cannot offer")
        h = self._hasher.hash(key)
        self._offer_with_hash(key, w, h, None)

    def offer_all(self, items: Iterable[Union[WeightedItem, Tuple[int, float]]]) -> None:
        for item in items:
            self.offer(item)

    def _offer_with_hash(self, key: int, weight: float, h_exact, tag: Optional[str]) -> None:
        ident = (key, tag)
        if ident in self._seen:
            raise ValueError(f"duplicate key offered to priority sample: {key!r} (tag={tag!r})")
        self._seen.add(ident)
        q = weight / float(h_exact)
        rec = _Rec(_make_rank(q, h_exact, tag), key, weight, tag)
        if len(self._heap) <= self.k:
            heapq.heappush(self._heap, (rec.rank, rec))
        elif rec.rank > self._heap[0][0]:
            heapq.heappushpop(self._heap, (rec.rank, rec))

    # -- inspection ------------------------------------------------------

    @property
    def hasher_id(self) -> str:
        return self._hasher_id

    @property
    def is_exact(self) -> bool:
        """True when at most k items were offered, so the sample is the whole set."""
        return len(self._heap) <= self.k

    @property
    def tau(self) -> Optional[float]:
        """The exact (k+1)-th highest priority, or None for an exact sample."""
        if self.is_exact:
            return None
        return self._heap[0][0].q

    def _sampled_recs(self) -> List[_Rec]:
        recs = [rec for _, rec in self._heap]
        recs.sort(key=lambda r: r.rank, reverse=True)
        return recs[: self.k]

    @property
    def entries(self) -> List[PriorityEntry]:
        """Sampled items, highest priority first (at most k)."""
        return [rec.entry() for rec in self._sampled_recs()]

    def __len__(self) -> int:
        return min(len(self._heap), self.k)

    def __repr__(self) -> str:  # pragma: no cover
        return f"<PrioritySample k={self.k} |entries|={len(self)} tau={self.tau}>"

    # -- serialization ---------------------------------------------------

    _MAGIC = b"PSAM"
    _VERSION = 1

    def to_bytes(self) -> bytes:
        """Binary layout mirroring the sketch format plus tau.

        All retained records (up to k + 1, including the tau-defining one)
        are stored so a deserialized sample can still be merged.
        """
        hid = self._hasher_id.encode("utf-8")
        tau = self.tau
        recs = sorted(self._heap, key=lambda pair: pair[0], reverse=True)
        parts = [
            struct.pack("<4sBI", self._MAGIC, self._VERSION, self.k),
            struct.pack("<H", len(hid)),
            hid,
            struct.pack("<Bd", 0 if tau is None else 1, 0.0 if tau is None else tau),
            struct.pack("<I", len(recs)),
        ]
        for _, rec in recs:
            tag_byte = b"-" if rec.tag is None else rec.tag.encode("ascii")[:1]
            parts.append(
                struct.pack(
                    "<Qddd1s",
                    rec.key,
                    rec.weight,
                    rec.rank.q,
                    float(-rec.rank.neg_hash),
                    tag_byte,
                )
            )
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PrioritySample":
        magic, version, k = struct.unpack_from("<4sBI", data, 0)
        if magic != cls._MAGIC:
            raise ValueError("not a priority sample byte stream")
        if version != cls._VERSION:
            raise ValueError(f"unsupported sample version {version}")
        off = struct.calcsize("<4sBI")
        (hid_len,) = struct.unpack_from("<H", data, off)
        off += 2
        hid = data[off : off + hid_len].decode("utf-8")
        off += hid_len
        has_tau, _tau = struct.unpack_from("<Bd", data, off)
        off += struct.calcsize("<Bd")
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        sample = cls(k, hasher_id=hid)
        rec_fmt = "<Qddd1s"
        for _ in range(count):
            key, weight, q, h, tag_byte = struct.unpack_from(rec_fmt, data, off)
            off += struct.calcsize(rec_fmt)
            tag = None if tag_byte == b"-" else tag_byte.decode("ascii")
            rec = _Rec(_make_rank(q, h, tag), key, weight, tag)
            # _make_rank recomputes nothing: q and h are stored explicitly.
            heapq.heappush(sample._heap, (rec.rank, rec))
            sample._seen.add((key, tag))
        return sample


def merge_priority_samples(a: PrioritySample, b: PrioritySample) -> PrioritySample:
    """Size-k priority sample of the union of the two sampled sets.

    Re-ranks the at most 2(k + 1) retained records; a key present in both
    inputs must carry the same weight.  Equals direct construction over the
    union exactly.
    """
    if a.k != b.k:
        raise SampleMismatchError(f"capacity mismatch: {a.k} != {b.k}")
    if a.hasher_id != b.hasher_id:
        raise SampleMismatchError("samples are bound to different hashers")
    merged = PrioritySample(a.k, a._hasher or b._hasher, hasher_id=a.hasher_id)
    combined: Dict[Tuple[int, Optional[str]], _Rec] = {}
    for _, rec in list(a._heap) + list(b._heap):
        ident = (rec.key, rec.tag)
        if ident in combined:
            if combined[ident].weight != rec.weight:
                raise SampleMismatchError(
                    f"key {rec.key} has conflicting weights in the two samples"
                )
            continue
        combined[ident] = rec
    for ident, rec in combined.items():
        merged._seen.add(ident)
        if len(merged._heap) <= merged.k:
            heapq.heappush(merged._heap, (rec.rank, rec))
        elif rec.rank > merged._heap[0][0]:
            heapq.heappushpop(merged._heap, (rec.rank, rec))
    return merged


def priority_estimate(sample: PrioritySample, f: Fractions = None) -> float:
    """Estimate the fractional subset sum fw = sum_i f_i * w_i from the sample.

    Sampled items contribute f_i * max(w_i, tau); with an exact sample
    (tau undefined) the sum is exact.
    """
    get = _fraction_getter(f)
    tau = sample.tau
    if tau is None:
        return sum(get(rec.key) * rec.weight for rec in sample._sampled_recs())
    return sum(get(rec.key) * max(rec.weight, tau) for rec in sample._sampled_recs())


@dataclass(frozen=True)
class SmallWeightStats:
    """Decomposition of a priority estimate around its threshold tau.

    ``exact_estimate`` is the contribution of sampled items with w >= tau
    (known exactly: every such item is always sampled); ``variable_estimate``
    is tau times the sampled fractions below tau, the only fluctuating part.
    ``k_le_tau`` is k minus the number of sampled items with weight above
    tau.
    """

    variable_estimate: float
    exact_estimate: float
    k_le_tau: int
    tau: float

    @property
    def total(self) -> float:
        return self.variable_estimate + self.exact_estimate


def small_weight_stats(sample: PrioritySample, f: Fractions = None) -> SmallWeightStats:
    get = _fraction_getter(f)
    tau = sample.tau
    if tau is None:
        raise DegenerateSampleError("sample is exact (no tau); estimates carry no variance")
    exact = 0.0
    variable_fraction = 0.0
    heavier = 0
    for rec in sample._sampled_recs():
        if rec.weight >= tau:
            exact += get(rec.key) * rec.weight
        else:
            variable_fraction += get(rec.key)
        if rec.weight > tau:
            heavier += 1
    return SmallWeightStats(tau * variable_fraction, exact, sample.k - heavier, tau)


@dataclass(frozen=True)
class ThresholdSample:
    """Items whose priority exceeds a fixed threshold t."""

    t: float
    entries: Tuple[PriorityEntry, ...]


def threshold_sample(
    items: Iterable[Union[WeightedItem, Tuple[int, float]]],
    t: float,
    hasher: UnitHasher,
) -> ThresholdSample:
    if not t > 0:
        raise ValueError("threshold t must be positive")
    sampled: List[PriorityEntry] = []
    seen: set[int] = set()
    for item in items:
        if isinstance(item, WeightedItem):
            key, w = item.key, item.weight
        else:
            key, w = int(item[0]), float(item[1])
        WeightedItem(key, w)
        if key in seen:
            raise ValueError(f"duplicate key in threshold sample input: {key}")
        seen.add(key)
        q = w / hasher.hash_float(key)
        if q > t:
            sampled.append(PriorityEntry(key, w, q))
    sampled.sort(key=lambda e: e.priority, reverse=True)
    return ThresholdSample(t, tuple(sampled))


def threshold_estimate(sample: ThresholdSample, f: Fractions = None) -> float:
    """Unbiased fw estimate: sampled items contribute f_i * max(w_i, t)."""
    get = _fraction_getter(f)
    return sum(get(e.key) * max(e.weight, sample.t) for e in sample.entries)


def _normalize_weighted(items: Iterable[Union[WeightedItem, Tuple[int, float]]]) -> Dict[int, float]:
    out: Dict[int, float] = {}
    for item in items:
        if isinstance(item, WeightedItem):
            key, w = item.key, item.weight
        else:
            key, w = int(item[0]), float(item[1])
        if w < 0 or not math.isfinite(w):
            raise ValueError(f"weight for key {key} must be nonnegative and finite")
        if key in out:
            raise ValueError(f"duplicate key {key} in weighted input")
        if w > 0:  # zero weights mean the item is absent from this set
            out[key] = w
    return out


def histogram_twins_sample(
    a_items: Iterable[Union[WeightedItem, Tuple[int, float]]],
    b_items: Iterable[Union[WeightedItem, Tuple[int, float]]],
    k: int,
    hasher: UnitHasher,
) -> PrioritySample:
    """Joint priority sample over per-set twins sharing one hash per key.

    A key with weight in both sets yields twins with priorities w_A / h and
    w_B / h; equal-weight twins tie and the A twin precedes.  The returned
    sample ranks all twins together, with tau the (k+1)-th twin priority.
    """
    a = _normalize_weighted(a_items)
    b = _normalize_weighted(b_items)
    sample = PrioritySample(k, hasher)
    for key in set(a) | set(b):
        h = hasher.hash(key)
        if key in a:
            sample._offer_with_hash(key, a[key], h, TAG_A)
        if key in b:
            sample._offer_with_hash(key, b[key], h, TAG_B)
    return sample


@dataclass(frozen=True)
class HistogramEstimate:
    w_min_hat: float
    w_max_hat: float
    similarity: Optional[float]  # None when 0/0


def histogram_estimate(sample: PrioritySample) -> HistogramEstimate:
    """Histogram similarity estimate from a twins sample.

    A sampled twin preceded by its co-twin (strictly higher priority, or the
    A twin on a weight tie) counts toward the intersection mass; otherwise
    toward the union mass.  Similarity is intersection over union.
    """
    recs = sample._sampled_recs()
    if not recs:
        raise ValueError("cannot estimate from an empty twins sample")
    tau = sample.tau
    by_key: Dict[int, Dict[str, _Rec]] = {}
    for rec in recs:
        if rec.tag not in (TAG_A, TAG_B):
            raise ValueError("histogram estimation needs a twins sample")
        by_key.setdefault(rec.key, {})[rec.tag] = rec
    w_min = 0.0
    w_max = 0.0
    for rec in recs:
        contribution = rec.weight if tau is None else max(rec.weight, tau)
        other = by_key.get(rec.key, {}).get(TAG_A if rec.tag == TAG_B else TAG_B)
        preceded = other is not None and other.rank > rec.rank
        if preceded:
            w_min += contribution
        else:
            w_max += contribution
    similarity = None if w_max == 0.0 else w_min / w_max
    return HistogramEstimate(w_min, w_max, similarity)
