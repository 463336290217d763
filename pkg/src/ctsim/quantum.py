"""Alice's computable mixing box and Bob's alternating-basis measurements.

Only the four eigenstates of sigma_z and sigma_x appear, so the Born rule is
a lookup table: measuring in the matching basis returns the encoded bit,
measuring in the other basis is a fair coin.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .bitstream import BitString, RawStream, SequenceSource
from .distinguisher import X, Z, DistinguishConfig, Verdict, distinguish, distinguish_noisy
from .machine import ProgramTable

# Bob measures the 1st, 3rd, 5th, ... qubit in sigma_x and the 2nd, 4th, ... in sigma_z
ODD_POSITION_BASIS = "X"
EVEN_POSITION_BASIS = "Z"


class PureState(enum.Enum):
    Z0 = ("Z", 0)
    Z1 = ("Z", 1)
    XPLUS = ("X", 0)
    XMINUS = ("X", 1)

    @property
    def basis(self) -> str:
        return self.value[0]

    @property
    def bit(self) -> int:
        return self.value[1]

    @classmethod
    def prepare(cls, basis: str, bit: int) -> PureState:
        return cls((basis, bit))


# probability of outcome 1 for (state, measurement basis)
BORN_ONE = {
    (s, b): (float(s.bit) if s.basis == b else 0.5)
    for s in PureState
    for b in ("Z", "X")
}


def measure(state: PureState, basis: str, rng: RawStream) -> int:
    """Projective measurement; one rng word is drawn whatever the outcome."""
    coin = rng.bit()
    p = BORN_ONE[(state, basis)]
    if p == 0.5:
        return coin
    return int(p)


@dataclass
class MixingBox:
    """Prepares qubit ``i`` from chooser bit ``i`` in the hidden basis."""

    basis: str
    chooser: SequenceSource
    flip_rate: float = 0.0
    emitted: int = 0

    def __post_init__(self):
        if self.basis not in ("Z", "X"):
            raise ValueError("basis must be 'Z' or 'X'")
        if not 0 <= self.flip_rate < 0.5:
            raise ValueError("flip rate must lie in [0, 1/2)")

    def emit(self) -> PureState:
        s = PureState.prepare(self.basis, self.chooser.bit(self.emitted))
        self.emitted += 1
        return s


class MeasurementRecord:
    """Bob's running record: qubits measured in order, split by position parity.

    Every qubit costs exactly two rng words (Born-rule coin, flip draw), so
    the record does not depend on how its two halves are consumed.  The flip
    is applied to every recorded bit; on the mismatched side a flipped coin is
    still a coin.
    """

    def __init__(self, box: MixingBox, rng: RawStream):
        self.box = box
        self.rng = rng
        self.qubits = 0
        self.x_bits = bytearray()
        self.z_bits = bytearray()

    def measure_next(self) -> None:
        state = self.box.emit()
        self.qubits += 1
        basis = ODD_POSITION_BASIS if self.qubits % 2 == 1 else EVEN_POSITION_BASIS
        bit = measure(state, basis, self.rng) ^ self.rng.bernoulli(self.box.flip_rate)
        (self.x_bits if basis == "X" else self.z_bits).append(bit)


class MeasurementSource(SequenceSource):
    """One half (``"X"`` or ``"Z"``) of a :class:`MeasurementRecord` as a source."""

    kind = "measurement-driven"

    def __init__(self, record: MeasurementRecord, basis: str):
        super().__init__()
        self.record = record
        self.basis = basis

    def _produce(self) -> None:
        rec = self.record
        mine = rec.x_bits if self.basis == "X" else rec.z_bits
        while len(mine) <= len(self._bits):
            rec.measure_next()
        self._bits.extend(mine[len(self._bits) :])


def alternating_measure(box: MixingBox, n: int, rng: RawStream) -> tuple[BitString, BitString]:
    """Measure ``n`` qubits alternately; returns the (sigma_x, sigma_z) records."""
    rec = MeasurementRecord(box, rng)
    for _ in range(n):
        rec.measure_next()
    return BitString.from_bits(rec.x_bits), BitString.from_bits(rec.z_bits)


@dataclass
class MixtureResult:
    verdict: Verdict
    truth: str
    correct: bool
    qubits_consumed: int
    extra: dict = field(default_factory=dict)


def _run(xs, zs, cfg, table):
    return distinguish_noisy(xs, zs, cfg, table) if cfg.q else distinguish(xs, zs, cfg, table)


def run_mixture_experiment(box: MixingBox, cfg: DistinguishConfig, rng: RawStream,
                           table: ProgramTable | None = None) -> MixtureResult:
    """Measure the box lazily as the distinguisher asks for bits, then score it."""
    rec = MeasurementRecord(box, rng)
    xs, zs = MeasurementSource(rec, "X"), MeasurementSource(rec, "Z")
    v = _run(xs, zs, cfg, table)
    return MixtureResult(v, box.basis, v.answer == box.basis, rec.qubits)


class _SigmaZRecord(SequenceSource):
    """A proper mixture measured entirely in sigma_z."""

    kind = "measurement-driven"

    def __init__(self, box: MixingBox, rng: RawStream):
        super().__init__()
        self.box, self.rng = box, rng

    def _produce(self) -> None:
        bit = measure(self.box.emit(), "Z", self.rng) ^ self.rng.bernoulli(self.box.flip_rate)
        self._bits.append(bit)


def improper_vs_proper_experiment(proper: MixingBox, improper: SequenceSource,
                                  cfg: DistinguishConfig, rng: RawStream,
                                  proper_slot: str = X,
                                  table: ProgramTable | None = None) -> MixtureResult:
    """Both systems measured in sigma_z; the answer should name the proper one.

    ``improper`` stands for sigma_z outcomes on half of a maximally entangled
    pair, i.e. a fair coin.  ``proper_slot`` chooses whether the proper record
    is passed as the first (``"X"``) or second (``"Z"``) sequence.
    """
    if proper.basis != "Z":
        raise ValueError("the proper mixture must be prepared in the sigma_z basis")
    rec = _SigmaZRecord(proper, rng)
    xs, zs = (rec, improper) if proper_slot == X else (improper, rec)
    v = _run(xs, zs, cfg, table)
    truth = proper_slot
    return MixtureResult(v, truth, v.answer == truth, proper.emitted,
                         {"improper_bits": improper.bits_emitted})
