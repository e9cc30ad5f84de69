"""Seeded hash families mapping integer keys into the open unit interval.

Every family is a pure deterministic function of the key once constructed:
the same key always gets the same value, distinct keys get distinct values,
and all values lie strictly inside (0, 1).

Collision freedom is realized exactly by appending a fixed bijective
scrambler of the key as low-order tie-break bits below the family's raw
output.  The tie-break bits sit strictly below the raw value's resolution,
so they cannot change the distribution of the raw (high) bits.  ``hash``
returns the exact value as a :class:`fractions.Fraction`; ``hash_float`` is
the IEEE-754 view used in estimator arithmetic (nudged inside the open
interval if rounding would touch an endpoint).
"""

from __future__ import annotations

import hashlib
import math
from fractions import Fraction
from typing import Dict, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "MERSENNE_61",
    "UnitHasher",
    "MultiplyShiftHasher",
    "PolynomialHasher",
    "FullyRandomHasher",
    "AdversarialIntervalHasher",
    "new_multiply_shift",
    "new_polynomial",
    "new_fully_random",
    "new_adversarial_interval",
    "parse_hasher_id",
    "make_hasher",
    "mix32",
    "mix64",
]

MERSENNE_61 = (1 << 61) - 1

_U32 = (1 << 32) - 1
_U64 = (1 << 64) - 1
_ONE_BELOW = math.nextafter(1.0, 0.0)
_ZERO_ABOVE = math.nextafter(0.0, 1.0)

# Subinterval positions for the adversarial family are drawn on a 53-bit
# grid, open at both ends of each subinterval.
_POS_BITS = 53


def mix32(x: int) -> int:
    """Fixed bijective scrambler of a 32-bit word (murmur-style finalizer)."""
    x &= _U32
    x ^= x >> 16
    x = (x * 0x85EBCA6B) & _U32
    x ^= x >> 13
    x = (x * 0xC2B2AE35) & _U32
    x ^= x >> 16
    return x


def mix64(x: int) -> int:
    """Fixed bijective scrambler of a 64-bit word (splitmix-style finalizer)."""
    x &= _U64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _U64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _U64
    x ^= x >> 31
    return x


def mix32_array(keys: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix32` over a uint64 array of 32-bit keys."""
    x = keys.astype(np.uint64) & np.uint64(_U32)
    x ^= x >> np.uint64(16)
    x = (x * np.uint64(0x85EBCA6B)) & np.uint64(_U32)
    x ^= x >> np.uint64(13)
    x = (x * np.uint64(0xC2B2AE35)) & np.uint64(_U32)
    x ^= x >> np.uint64(16)
    return x


def _unit_float(num: int, den: int) -> float:
    """num/den as a float, forced strictly inside (0, 1)."""
    v = num / den
    if v >= 1.0:
        return _ONE_BELOW
    if v <= 0.0:
        return _ZERO_ABOVE
    return v


def _seed_bytes(seed: int, nbytes: int = 16) -> bytes:
    return (seed % (1 << (8 * nbytes))).to_bytes(nbytes, "little")


def _derive_u64(seed: int, label: bytes, count: int) -> list[int]:
    """Derive `count` pseudorandom 64-bit words from a seed and a label."""
    out: list[int] = []
    counter = 0
    material = _seed_bytes(seed)
    while len(out) < count:
        h = hashlib.blake2b(
            material + counter.to_bytes(4, "little"), digest_size=32, person=label
        ).digest()
        for i in range(0, 32, 8):
            out.append(int.from_bytes(h[i : i + 8], "little"))
            if len(out) == count:
                break
        counter += 1
    return out


class UnitHasher:
    """Base class for seeded unit-interval hashers.

    Instances are immutable after construction and safe to share across
    threads.  Subclasses set ``family`` (short tag), ``independence`` and
    implement ``raw_value`` plus ``_num_den``.
    """

    family: str = "?"
    independence: float = 2

    def _num_den(self, key: int) -> tuple[int, int]:
        raise NotImplementedError

    def raw_value(self, key: int) -> int:
        """Family raw output before unit-interval normalization."""
        raise NotImplementedError

    @property
    def hasher_id(self) -> str:
        """Seed material serialized as 'familytag:hexparams'."""
        raise NotImplementedError

    def _check_key(self, key: int) -> int:
        if not isinstance(key, (int, np.integer)):
            raise TypeError(f"key must be an integer, got {type(key).__name__}")
        key = int(key)
        if not 0 <= key <= _U64:
            raise ValueError("key must fit in an unsigned 64-bit integer")
        return key

    def hash(self, key: int) -> Fraction:
        """Exact unit-interval value of `key`; distinct keys, distinct values."""
        num, den = self._num_den(self._check_key(key))
        return Fraction(num, den)

    def hash_float(self, key: int) -> float:
        num, den = self._num_den(self._check_key(key))
        return _unit_float(num, den)

    def hash_float_array(self, keys: np.ndarray) -> np.ndarray:
        out = np.fromiter(
            (self.hash_float(int(k)) for k in keys), dtype=np.float64, count=len(keys)
        )
        return out

    def __repr__(self) -> str:  # pragma: no cover
        return f"<{type(self).__name__} {self.hasher_id}>"


class MultiplyShiftHasher(UnitHasher):
    """2-independent multiply-shift hasher for 32-bit keys.

    The raw value of key x is ((a*x + b) mod 2**64) >> 32 for the two seeded
    64-bit constants a, b; the unit value is
    (raw * 2**32 + mix32(x) + 1) / 2**64.
    """

    family = "ms"
    independence = 2

    def __init__(self, a: int, b: int):
        self.a = a & _U64
        self.b = b & _U64

    @property
    def hasher_id(self) -> str:
        return f"ms:{self.a:016x}:{self.b:016x}"

    def _check_key(self, key: int) -> int:
        key = super()._check_key(key)
        if key > _U32:
            raise ValueError("multiply-shift hashes 32-bit keys only")
        return key

    def raw_value(self, key: int) -> int:
        return ((self.a * self._check_key(key) + self.b) & _U64) >> 32

    def _num_den(self, key: int) -> tuple[int, int]:
        r = ((self.a * key + self.b) & _U64) >> 32
        return (r << 32) + mix32(key) + 1, 1 << 64

    def hash_u64_array(self, keys: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
        """Exact order-preserving integer form of the hash over a key array.

        Returns u with unit value (u + 1) / 2**64; sorting by u is identical
        to sorting by the exact hash, and u values are distinct for distinct
        keys.  `out` may supply a preallocated uint64 buffer of matching
        shape to avoid temporaries on hot paths.
        """
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        if keys.size and int(keys.max()) > _U32:
            raise ValueError("multiply-shift hashes 32-bit keys only")
        if out is None:
            out = np.empty_like(keys)
        np.multiply(keys, np.uint64(self.a), out=out)
        np.add(out, np.uint64(self.b), out=out)
        np.right_shift(out, np.uint64(32), out=out)
        np.left_shift(out, np.uint64(32), out=out)
        np.bitwise_or(out, mix32_array(keys), out=out)
        return out

    def hash_float_array(self, keys: np.ndarray) -> np.ndarray:
        u = self.hash_u64_array(keys)
        v = (u.astype(np.float64) + 1.0) * 2.0**-64
        np.clip(v, _ZERO_ABOVE, _ONE_BELOW, out=v)
        return v


class PolynomialHasher(UnitHasher):
    """d-independent hasher from a random degree d-1 polynomial over GF(2^61 - 1).

    Evaluation is Horner's rule with the usual mask-and-fold reduction for a
    Mersenne modulus.  Keys are reduced mod 2^61 - 1 before evaluation; the
    key tie-break keeps values distinct even across residue collisions (or a
    constant polynomial).
    """

    family = "poly"

    def __init__(self, coefficients: Sequence[int]):
        coeffs = [int(c) for c in coefficients]
        if len(coeffs) < 2:
            raise ValueError("polynomial family needs degree d >= 2 (at least 2 coefficients)")
        if any(not 0 <= c < MERSENNE_61 for c in coeffs):
            raise ValueError("coefficients must lie in [0, 2^61 - 1)")
        self.coefficients = tuple(coeffs)  # coefficients[i] multiplies x**i
        self.independence = len(coeffs)

    @property
    def hasher_id(self) -> str:
        return "poly:" + ":".join(f"{c:x}" for c in self.coefficients)

    @staticmethod
    def _fold(z: int) -> int:
        z = (z & MERSENNE_61) + (z >> 61)
        z = (z & MERSENNE_61) + (z >> 61)
        if z >= MERSENNE_61:
            z -= MERSENNE_61
        return z

    def raw_value(self, key: int) -> int:
        x = self._check_key(key) % MERSENNE_61
        acc = 0
        for c in reversed(self.coefficients):
            acc = self._fold(acc * x + c)
        return acc

    def _num_den(self, key: int) -> tuple[int, int]:
        rho = self.raw_value(key)
        return (rho << 64) + mix64(key) + 1, MERSENNE_61 << 64


class FullyRandomHasher(UnitHasher):
    """Seeded keyed-PRF hasher used as the truly-random reference family."""

    family = "rand"
    independence = math.inf

    def __init__(self, seed: int):
        self.seed = seed % (1 << 128)
        self._key = _seed_bytes(self.seed)

    @property
    def hasher_id(self) -> str:
        return f"rand:{self.seed:032x}"

    def raw_value(self, key: int) -> int:
        digest = hashlib.blake2b(
            self._check_key(key).to_bytes(8, "little"), key=self._key, digest_size=8
        ).digest()
        return int.from_bytes(digest, "little")

    def _num_den(self, key: int) -> tuple[int, int]:
        return (self.raw_value(key) << 64) + mix64(key) + 1, 1 << 128


class AdversarialIntervalHasher(UnitHasher):
    """Structured 2-independent family over a declared set of n keys.

    (0, 1] is divided into n equal subintervals.  With probability 1/n all
    declared keys land in one random subinterval; otherwise the keys are
    assigned to the n distinct subintervals by a uniformly random bijection.
    Positions inside a subinterval are independently uniform.  Pairwise, the
    two cases mix to the exactly uniform joint distribution, so the family
    is 2-independent, yet for n > 2 it is highly restricted.

    This family exists to demonstrate estimator bias; it is not meant for
    production sketching.  Hashing a key outside the declared set is an
    error.
    """

    family = "adv"
    independence = 2

    def __init__(self, n: int, seed: int, keys: Optional[Iterable[int]] = None):
        if n < 1:
            raise ValueError("n must be at least 1")
        self.n = n
        self.seed = seed % (1 << 128)
        declared = list(range(n)) if keys is None else [int(k) for k in keys]
        if len(declared) != n:
            raise ValueError(f"expected exactly {n} declared keys, got {len(declared)}")
        if len(set(declared)) != n:
            raise ValueError("declared keys must be distinct")
        rng = np.random.default_rng(np.random.SeedSequence(self.seed))
        if rng.random() < 1.0 / n:
            sub = np.full(n, int(rng.integers(0, n)), dtype=np.int64)
            self.shared_branch = True
        else:
            sub = rng.permutation(n).astype(np.int64)
            self.shared_branch = False
        pos = rng.integers(0, (1 << _POS_BITS) - 1, size=n)
        # Distinctness: positions may only collide inside one shared
        # subinterval; redraw those entries.
        while True:
            pairs = list(zip(sub.tolist(), pos.tolist()))
            if len(set(pairs)) == n:
                break
            seen: set = set()
            for i, pr in enumerate(pairs):
                if pr in seen:
                    pos[i] = rng.integers(0, (1 << _POS_BITS) - 1)
                else:
                    seen.add(pr)
        den = n << _POS_BITS
        self._table: Dict[int, tuple[int, int]] = {
            key: ((int(s) << _POS_BITS) + int(p) + 1, den)
            for key, s, p in zip(declared, sub, pos)
        }

    @property
    def hasher_id(self) -> str:
        return f"adv:{self.n}:{self.seed:032x}"

    def raw_value(self, key: int) -> int:
        """Subinterval index of a declared key."""
        num, _ = self._lookup(key)
        return num >> _POS_BITS

    def _lookup(self, key: int) -> tuple[int, int]:
        try:
            return self._table[int(key)]
        except KeyError:
            raise ValueError(f"key {key} was not declared to this adversarial hasher") from None

    def _num_den(self, key: int) -> tuple[int, int]:
        return self._lookup(key)

    @staticmethod
    def sample_hash_matrix(n: int, trials: int, rng: np.random.Generator) -> np.ndarray:
        """Draw hash vectors for `trials` independent instances of the family.

        Returns a (trials, n) float array; row t is the hash vector one
        instance assigns to its n declared keys.  Distribution-identical to
        constructing the scalar hasher per trial, vectorized for Monte-Carlo
        experiments.
        """
        shared = rng.random(trials) < 1.0 / n
        perms = np.argsort(rng.random((trials, n)), axis=1)
        shared_j = rng.integers(0, n, size=trials)
        sub = np.where(shared[:, None], shared_j[:, None], perms)
        pos = rng.integers(0, (1 << _POS_BITS) - 1, size=(trials, n))
        return (sub * float(1 << _POS_BITS) + pos + 1.0) / float(n << _POS_BITS)


def new_multiply_shift(seed: int) -> MultiplyShiftHasher:
    """Draw the two 64-bit multiply-shift constants from 128 bits of seed entropy."""
    a, b = _derive_u64(seed, b"bk-ms", 2)
    return MultiplyShiftHasher(a, b)


def new_polynomial(degree: int, seed: int) -> PolynomialHasher:
    """Random degree-(d-1) polynomial over GF(2^61 - 1); independence d."""
    if degree < 2:
        raise ValueError("degree of independence must be at least 2")
    coeffs: list[int] = []
    # Rejection sampling from 61-bit words keeps coefficients exactly uniform.
    pool = iter(_derive_u64(seed, b"bk-poly", 4 * degree))
    while len(coeffs) < degree:
        try:
            w = next(pool) >> 3
        except StopIteration:
            pool = iter(_derive_u64(seed + len(coeffs) + 1, b"bk-poly2", 4 * degree))
            continue
        if w < MERSENNE_61:
            coeffs.append(w)
    return PolynomialHasher(coeffs)


def new_fully_random(seed: int) -> FullyRandomHasher:
    return FullyRandomHasher(seed)


def new_adversarial_interval(
    n: int, seed: int, keys: Optional[Iterable[int]] = None
) -> AdversarialIntervalHasher:
    return AdversarialIntervalHasher(n, seed, keys)


def parse_hasher_id(hasher_id: str, keys: Optional[Iterable[int]] = None) -> UnitHasher:
    """Reconstruct a hasher from its serialized id string."""
    tag, _, rest = hasher_id.partition(":")
    if tag == "ms":
        a_hex, b_hex = rest.split(":")
        return MultiplyShiftHasher(int(a_hex, 16), int(b_hex, 16))
    if tag == "poly":
        return PolynomialHasher([int(c, 16) for c in rest.split(":")])
    if tag == "rand":
        return FullyRandomHasher(int(rest, 16))
    if tag == "adv":
        n_str, seed_hex = rest.split(":")
        return AdversarialIntervalHasher(int(n_str), int(seed_hex, 16), keys)
    raise ValueError(f"unknown hasher id {hasher_id!r}")


def make_hasher(
    name: str, seed: int, keys: Optional[Iterable[int]] = None
) -> UnitHasher:
    """Build a hasher from a CLI-style family name.

    Accepted names: 'multiply-shift', 'polynomial:<d>', 'fully-random',
    'adversarial:<n>'.
    """
    base, _, arg = name.partition(":")
    if base == "multiply-shift":
        return new_multiply_shift(seed)
    if base == "polynomial":
        return new_polynomial(int(arg or 7), seed)
    if base == "fully-random":
        return new_fully_random(seed)
    if base == "adversarial":
        if not arg:
            raise ValueError("adversarial family needs a set size, e.g. adversarial:3")
        return new_adversarial_interval(int(arg), seed, keys)
    raise ValueError(f"unknown hasher family {name!r}")
