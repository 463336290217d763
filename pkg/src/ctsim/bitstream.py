"""Bit strings, lazily evaluated bit sources and the canonical codings.

Every other module speaks in terms of the types defined here:

* :class:`BitString` is an immutable finite string over ``{0, 1}``.  Its text
  form (ASCII ``'0'``/``'1'``, first-emitted bit leftmost) is what ends up in
  CSV and JSON artifacts.
* :class:`SequenceSource` is an append-only, deterministic infinite bit
  stream.  Bits already handed out never change.
* :func:`index_to_program_bits` / :func:`program_bits_to_index` enumerate
  ``{0,1}*`` in length-then-lexicographic order and :func:`cantor_pair` /
  :func:`cantor_unpair` code pairs of naturals.

Randomness comes from :class:`RawStream`, a thin wrapper over numpy's PCG64
with ``SeedSequence`` seeding.  Only the raw 64-bit output words are used, so
the streams are identical across platforms and numpy versions.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isqrt
from typing import Iterable, Iterator, Sequence

import numpy as np


class PreconditionError(ValueError):
    """An operation was called with arguments outside its contract."""


class SourceExhausted(LookupError):
    """A finite source was asked for a bit it will never produce."""


@dataclass(frozen=True)
class BitString:
    """An immutable finite bit string stored in its ASCII text form."""

    text: str = ""

    def __post_init__(self):
        if self.text.strip("01"):
            raise ValueError(f"not a bit string: {self.text!r}")

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> BitString:
        return cls("".join("1" if b else "0" for b in bits))

    def __len__(self) -> int:
        return len(self.text)

    @property
    def length(self) -> int:
        return len(self.text)

    def __iter__(self) -> Iterator[int]:
        return (1 if c == "1" else 0 for c in self.text)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return BitString(self.text[i])
        return 1 if self.text[i] == "1" else 0

    def __add__(self, other: BitString) -> BitString:
        return BitString(self.text + other.text)

    def __str__(self) -> str:
        return self.text

    def prefix(self, n: int) -> BitString:
        if not 0 <= n <= len(self.text):
            raise PreconditionError(f"prefix length {n} outside 0..{len(self.text)}")
        return BitString(self.text[:n])

    def is_prefix_of(self, other: BitString) -> bool:
        return other.text.startswith(self.text)

    def to_list(self) -> list[int]:
        return list(self)


def as_bits(s) -> BitString:
    """Coerce a ``str``, :class:`BitString` or bit sequence to a BitString."""
    if isinstance(s, BitString):
        return s
    if isinstance(s, str):
        return BitString(s.replace(" ", ""))
    return BitString.from_bits(s)


# ---------------------------------------------------------------------------
# canonical codings


def index_to_program_bits(n: int) -> BitString:
    """The ``n``-th bit string in length-then-lexicographic order (0 -> empty)."""
    if n < 0:
        raise PreconditionError("index must be a natural number")
    length = (n + 1).bit_length() - 1
    if length == 0:
        return BitString("")
    return BitString(format(n + 1 - (1 << length), f"0{length}b"))


def program_bits_to_index(bits) -> int:
    """Inverse of :func:`index_to_program_bits`."""
    text = as_bits(bits).text
    return (1 << len(text)) - 1 + (int(text, 2) if text else 0)


def program_length(n: int) -> int:
    """Raw bit length of the program with index ``n``."""
    return (n + 1).bit_length() - 1


def cantor_pair(a: int, b: int) -> int:
    # b sits in the linear term
    if a < 0 or b < 0:
        raise PreconditionError("cantor_pair takes naturals")
    s = a + b
    return s * (s + 1) // 2 + b


def cantor_unpair(code: int) -> tuple[int, int]:
    if code < 0:
        raise PreconditionError("cantor_unpair takes a natural")
    s = (isqrt(8 * code + 1) - 1) // 2
    b = code - s * (s + 1) // 2
    return s - b, b


@dataclass(frozen=True)
class PairCode:
    left: int
    right: int

    @property
    def code(self) -> int:
        return cantor_pair(self.left, self.right)

    @classmethod
    def from_code(cls, code: int) -> PairCode:
        return cls(*cantor_unpair(code))

    def __lt__(self, other: PairCode) -> bool:
        return self.code < other.code


def hamming_distance(x, y) -> int:
    """Number of positions where two equal-length bit strings differ."""
    xs, ys = as_bits(x).text, as_bits(y).text
    if len(xs) != len(ys):
        raise PreconditionError(f"length mismatch: {len(xs)} != {len(ys)}")
    return sum(a != b for a, b in zip(xs, ys))


# ---------------------------------------------------------------------------
# randomness


class RawStream:
    """Sequential 64-bit words from a PCG64 generator.

    ``RawStream(seed, 3, 1)`` and ``RawStream(seed, 3, 2)`` are independent
    children of ``seed``: the extra integers become the SeedSequence spawn key.
    """

    BLOCK = 256

    def __init__(self, seed: int, *path: int):
        ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))
        self._bg = np.random.PCG64(ss)
        self._buf: list[int] = []
        self._pos = 0
        self.seed = seed
        self.path = tuple(path)

    def word(self) -> int:
        if self._pos == len(self._buf):
            self._buf = self._bg.random_raw(self.BLOCK).tolist()
            self._pos = 0
        w = self._buf[self._pos]
        self._pos += 1
        return w

    def uniform(self) -> float:
        """A double in [0, 1) built from the top 53 bits of one word."""
        return (self.word() >> 11) * (1.0 / 9007199254740992.0)

    def bit(self) -> int:
        return self.word() >> 63

    def bernoulli(self, p: float) -> int:
        return 1 if self.uniform() < p else 0


# ---------------------------------------------------------------------------
# sources


class SequenceSource:
    """An append-only infinite bit stream, materialized on demand.

    Subclasses implement :meth:`_produce`, which must append at least one bit
    to ``self._bits`` (or raise :class:`SourceExhausted`).
    """

    kind = "abstract"

    def __init__(self):
        self._bits = bytearray()

    @property
    def bits_emitted(self) -> int:
        return len(self._bits)

    def _produce(self) -> None:
        raise NotImplementedError

    def ensure(self, n: int) -> None:
        while len(self._bits) < n:
            self._produce()

    def bit(self, i: int) -> int:
        if i >= len(self._bits):
            self.ensure(i + 1)
        return self._bits[i]

    def take(self, n: int) -> bytes:
        """The first ``n`` bits as a ``bytes`` of 0/1 values."""
        self.ensure(n)
        return bytes(self._bits[:n])

    def prefix(self, n: int) -> BitString:
        return BitString.from_bits(self.take(n))

    def describe(self) -> str:
        return self.kind


class FixedSource(SequenceSource):
    """A finite, explicitly given stream; asking past its end raises."""

    kind = "fixed"

    def __init__(self, bits):
        super().__init__()
        self._data = bytes(as_bits(bits))

    def _produce(self) -> None:
        n = len(self._bits)
        if n >= len(self._data):
            raise SourceExhausted(f"fixed source has only {len(self._data)} bits")
        self._bits.append(self._data[n])


class CoinSource(SequenceSource):
    """Fair coin tosses: the bits of PCG64 raw words, most significant first."""

    kind = "seeded-coin"

    def __init__(self, seed: int, *path: int):
        super().__init__()
        self._rng = RawStream(seed, *path)

    def _produce(self) -> None:
        w = self._rng.word()
        self._bits.extend((w >> (63 - j)) & 1 for j in range(64))

    def describe(self) -> str:
        return f"coin:{self._rng.seed}{''.join(f'/{p}' for p in self._rng.path)}"


class NoisySource(SequenceSource):
    """Flips each bit of ``base`` independently with probability ``rate``."""

    def __init__(self, base: SequenceSource, rate: float, seed: int, *path: int):
        super().__init__()
        if not 0 <= rate < 0.5:
            raise PreconditionError("flip rate must lie in [0, 1/2)")
        self.base = base
        self.rate = rate
        self.kind = base.kind
        self._rng = RawStream(seed, *path)

    def _produce(self) -> None:
        i = len(self._bits)
        self._bits.append(self.base.bit(i) ^ self._rng.bernoulli(self.rate))

    def describe(self) -> str:
        return f"{self.base.describe()}+flip({self.rate})"


def frequency_of_ones(bits: Sequence[int]) -> float:
    return sum(bits) / len(bits) if len(bits) else 0.0
