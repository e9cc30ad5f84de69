"""Bottom-k and k-min sketches of unweighted key sets, with estimators.

A bottom-k sketch keeps the k keys with the smallest hash values under one
hasher; it is a uniform sample without replacement and composes under set
union: merging two sketches of A and B gives exactly the sketch that direct
construction over A ∪ B would produce.  The k-min sketch keeps the argmin
key of each of k independent hashers (a sample with replacement) and is kept
here for comparison experiments.

Offers are idempotent by key identity (set semantics).  ``n_seen`` counts
distinct offered keys exactly up to k and saturates at k + 1 ("more than
k"); the saturated count is what keeps merge and direct construction
structurally identical, and estimator semantics only ever need the count
below k, where it is exact.
"""

from __future__ import annotations

import bisect
import heapq
import json
import struct
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

from .hashing import UnitHasher, new_multiply_shift

__all__ = [
    "FrequencyEstimate",
    "BottomKSketch",
    "StreamingBottomKBuilder",
    "KMinSketch",
    "build_bottom_k",
    "merge",
    "estimate_jaccard",
    "estimate_intersection_size",
    "SketchMismatchError",
]


class SketchMismatchError(ValueError):
    """Sketches disagree on capacity or hasher and cannot be combined."""


@dataclass(frozen=True)
class FrequencyEstimate:
    """A subset-frequency estimate: sample_hits / k over an effective sample of size k."""

    estimate: float
    sample_hits: int
    k: int


class BottomKSketch:
    """The k keys with the smallest hash values under one hasher.

    Construction is single-writer; a finished sketch may be shared freely
    across threads.  ``merge`` is a pure function of two finished sketches.
    """

    def __init__(self, k: int, hasher: Optional[UnitHasher] = None, *, hasher_id: Optional[str] = None):
        if k < 1:
            raise ValueError("sketch capacity k must be at least 1")
        if hasher is None and hasher_id is None:
            raise ValueError("a hasher or a hasher_id is required")
        self.k = k
        self._hasher = hasher
        self._hasher_id = hasher_id if hasher_id is not None else hasher.hasher_id
        self._entries: List[Tuple[object, int]] = []  # (hash, key), ascending
        self._keys: set[int] = set()
        self._n_seen = 0

    # -- construction ----------------------------------------------------

    def offer(self, key: int) -> None:
        """Offer one key; re-offers of a key already in the sample are no-ops."""
        if self._hasher is None:
            raise ValueError("this sketch carries no hasher (deserialized?); cannot offer")
        key = int(key)
        if key in self._keys:
            return
        self._n_seen = min(self._n_seen + 1, self.k + 1)
        item = (self._hasher.hash(key), key)
        if len(self._entries) < self.k:
            bisect.insort(self._entries, item)
            self._keys.add(key)
        elif item < self._entries[-1]:
            _, evicted = self._entries.pop()
            self._keys.discard(evicted)
            bisect.insort(self._entries, item)
            self._keys.add(key)

    def offer_all(self, keys: Iterable[int]) -> None:
        for key in keys:
            self.offer(key)

    # -- inspection ------------------------------------------------------

    @property
    def hasher_id(self) -> str:
        return self._hasher_id

    @property
    def n_seen(self) -> int:
        """Distinct keys offered; exact below k, saturating at k + 1."""
        return self._n_seen

    @property
    def entries(self) -> List[Tuple[int, object]]:
        """(key, hash) pairs in increasing hash order."""
        return [(key, h) for h, key in self._entries]

    @property
    def is_full(self) -> bool:
        return len(self._entries) >= self.k

    def __contains__(self, key: int) -> bool:
        return int(key) in self._keys

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BottomKSketch):
            return NotImplemented
        return (
            self.k == other.k
            and self._hasher_id == other._hasher_id
            and self._n_seen == other._n_seen
            and self._entries == other._entries
        )

    def __repr__(self) -> str:  # pragma: no cover
        return f"<BottomKSketch k={self.k} |entries|={len(self._entries)} n_seen={self._n_seen}>"

    # -- estimators ------------------------------------------------------

    def _divisor(self) -> int:
        # min(k, n_seen) == |entries|: exact for sets no larger than k.
        return len(self._entries)

    def estimate_frequency(self, membership: Callable[[int], bool]) -> FrequencyEstimate:
        """Estimate the frequency of the subset defined by `membership`."""
        d = self._divisor()
        if d == 0:
            raise ValueError("cannot estimate from an empty sketch")
        hits = sum(1 for _, key in self._entries if membership(key))
        return FrequencyEstimate(hits / d, hits, d)

    def estimate_cardinality(self) -> float:
        """Estimate |X|: k over the k-th smallest hash; exact when n_seen < k."""
        if self._n_seen < self.k:
            return float(self._n_seen)
        h_k = float(self._entries[-1][0])
        return self.k / h_k

    def merge(self, other: "BottomKSketch") -> "BottomKSketch":
        return merge(self, other)

    # -- serialization ---------------------------------------------------

    _MAGIC = b"BKSK"
    _VERSION = 1

    def to_bytes(self) -> bytes:
        """Versioned binary layout; hashes stored as IEEE-754 doubles."""
        hid = self._hasher_id.encode("utf-8")
        parts = [
            struct.pack("<4sBII", self._MAGIC, self._VERSION, self.k, self._n_seen),
            struct.pack("<H", len(hid)),
            hid,
            struct.pack("<I", len(self._entries)),
        ]
        for h, key in self._entries:
            parts.append(struct.pack("<Qd", key, float(h)))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BottomKSketch":
        magic, version, k, n_seen = struct.unpack_from("<4sBII", data, 0)
        if magic != cls._MAGIC:
            raise ValueError("not a bottom-k sketch byte stream")
        if version != cls._VERSION:
            raise ValueError(f"unsupported sketch version {version}")
        off = struct.calcsize("<4sBII")
        (hid_len,) = struct.unpack_from("<H", data, off)
        off += 2
        hid = data[off : off + hid_len].decode("utf-8")
        off += hid_len
        (n_entries,) = struct.unpack_from("<I", data, off)
        off += 4
        entries = []
        for _ in range(n_entries):
            key, h = struct.unpack_from("<Qd", data, off)
            off += struct.calcsize("<Qd")
            entries.append((h, key))
        return cls._from_parts(k, hid, entries, n_seen)

    def to_debug_json(self) -> str:
        return json.dumps(
            {
                "format": "bottomk-sketch",
                "version": self._VERSION,
                "k": self.k,
                "n_seen": self._n_seen,
                "hasher_id": self._hasher_id,
                "entries": [
                    {"key": key, "hash": float(h), "hash_hex": float(h).hex()}
                    for h, key in self._entries
                ],
            },
            indent=2,
        )

    @classmethod
    def _from_parts(
        cls,
        k: int,
        hasher_id: str,
        entries: Sequence[Tuple[object, int]],
        n_seen: int,
        hasher: Optional[UnitHasher] = None,
    ) -> "BottomKSketch":
        sketch = cls(k, hasher, hasher_id=hasher_id) if hasher is not None else cls(k, hasher_id=hasher_id)
        ordered = sorted(entries)
        if len(ordered) > k:
            raise ValueError("more entries than capacity")
        sketch._entries = list(ordered)
        sketch._keys = {key for _, key in ordered}
        if len(sketch._keys) != len(ordered):
            raise ValueError("duplicate keys in entries")
        sketch._n_seen = min(n_seen, k + 1)
        if len(ordered) != min(k, sketch._n_seen):
            raise ValueError("entry count inconsistent with n_seen")
        return sketch


def build_bottom_k(keys: Iterable[int], k: int, hasher: UnitHasher) -> BottomKSketch:
    sketch = BottomKSketch(k, hasher)
    sketch.offer_all(keys)
    return sketch


def merge(a: BottomKSketch, b: BottomKSketch) -> BottomKSketch:
    """Bottom-k sketch of the union of the two sketched sets.

    Equals direct construction over the union exactly: the union's k
    smallest hashes all appear in one of the two sketches.
    """
    if a.k != b.k:
        raise SketchMismatchError(f"capacity mismatch: {a.k} != {b.k}")
    if a.hasher_id != b.hasher_id:
        raise SketchMismatchError("sketches are bound to different hashers")
    combined: dict[int, object] = {}
    common = 0
    for h, key in list(a._entries) + list(b._entries):
        if key in combined:
            common += 1
        else:
            combined[key] = h
    ordered = sorted((h, key) for key, h in combined.items())[: a.k]
    n_seen = min(a.n_seen + b.n_seen - common, a.k + 1)
    return BottomKSketch._from_parts(
        a.k, a.hasher_id, ordered, n_seen, hasher=a._hasher or b._hasher
    )


def estimate_jaccard(a: BottomKSketch, b: BottomKSketch) -> FrequencyEstimate:
    """Estimate |A ∩ B| / |A ∪ B| from the two bottom-k sketches."""
    union = merge(a, b)
    d = len(union._entries)
    if d == 0:
        raise ValueError("cannot estimate similarity from empty sketches")
    hits = sum(1 for _, key in union._entries if key in a and key in b)
    return FrequencyEstimate(hits / d, hits, d)


def estimate_intersection_size(a: BottomKSketch, b: BottomKSketch) -> float:
    """Estimate |A ∩ B| as Jaccard estimate times union-cardinality estimate."""
    union = merge(a, b)
    jac = estimate_jaccard(a, b)
    return jac.estimate * union.estimate_cardinality()


class StreamingBottomKBuilder:
    """Heap-backed streaming construction; produces entries identical to offer().

    Keeps the current k smallest (hash, key) pairs in a max-heap so each
    offer is O(log k).
    """

    def __init__(self, k: int, hasher: UnitHasher):
        if k < 1:
            raise ValueError("sketch capacity k must be at least 1")
        self.k = k
        self._hasher = hasher
        self._heap: List[Tuple[object, int, int]] = []  # (neg-ish ordering via tuple trick)
        self._keys: set[int] = set()
        self._n_seen = 0

    def offer(self, key: int) -> None:
        key = int(key)
        if key in self._keys:
            return
        self._n_seen = min(self._n_seen + 1, self.k + 1)
        h = self._hasher.hash(key)
        inverted = (-h, -key, key)  # heap root = largest (hash, key)
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, inverted)
            self._keys.add(key)
        elif inverted > self._heap[0]:
            _, _, evicted = heapq.heappushpop(self._heap, inverted)
            self._keys.discard(evicted)
            self._keys.add(key)

    def offer_all(self, keys: Iterable[int]) -> None:
        for key in keys:
            self.offer(key)

    def build(self) -> BottomKSketch:
        entries = sorted((-nh, key) for nh, _, key in self._heap)
        return BottomKSketch._from_parts(
            self.k, self._hasher.hasher_id, entries, self._n_seen, hasher=self._hasher
        )


class KMinSketch:
    """k independent hashers, keeping the argmin key of each (sample with replacement)."""

    def __init__(self, hashers: Sequence[UnitHasher]):
        if not hashers:
            raise ValueError("k-min sketch needs at least one hasher")
        self.hashers = list(hashers)
        self.k = len(self.hashers)
        self._mins: List[Optional[Tuple[object, int]]] = [None] * self.k

    @classmethod
    def of_multiply_shift(cls, k: int, seed: int) -> "KMinSketch":
        return cls([new_multiply_shift(seed + 0x10_0000 * i) for i in range(k)])

    @property
    def hasher_ids(self) -> List[str]:
        return [h.hasher_id for h in self.hashers]

    @property
    def mins(self) -> List[Optional[Tuple[int, object]]]:
        """Per-hasher (key, hash) minima, None where nothing was offered."""
        return [None if m is None else (m[1], m[0]) for m in self._mins]

    def offer(self, key: int) -> None:
        key = int(key)
        for i, hasher in enumerate(self.hashers):
            item = (hasher.hash(key), key)
            if self._mins[i] is None or item < self._mins[i]:
                self._mins[i] = item

    def offer_all(self, keys: Iterable[int]) -> None:
        for key in keys:
            self.offer(key)

    def estimate_frequency(self, membership: Callable[[int], bool]) -> FrequencyEstimate:
        if any(m is None for m in self._mins):
            raise ValueError("cannot estimate from an empty k-min sketch")
        hits = sum(1 for m in self._mins if membership(m[1]))
        return FrequencyEstimate(hits / self.k, hits, self.k)
