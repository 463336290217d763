"""Identification by next value for a time-bounded class of bit streams.

A stream is in the class with bound ``t`` when some program ``e`` emits its
bit ``i`` within ``c * t(i + 1)`` cumulative steps, for a constant ``c``.
Given the bits seen so far, the learner picks the least Cantor code
``<e, c>`` (``e >= 1``, ``c >= 1``) whose program reproduces them and emits
one more bit within budget, and predicts that bit.

Consistency only gets harder as the history grows, so a ruled-out program
stays ruled out and the minimal ``c`` for each surviving program only grows.
The learner keeps that per-program state instead of re-searching from
scratch; the answers are the same as a fresh search (see
:func:`next_value`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bitstream import BitString, PairCode, SequenceSource, as_bits, cantor_pair
from .machine import Program, ProgramTable, Trace


@dataclass(frozen=True)
class TimeBound:
    """A total, non-decreasing step bound ``t(n)``.

    ``kind`` is ``"polynomial"`` (``max(n, 1) ** degree``), ``"exponential"``
    (``2 ** n``) or ``"table"`` (``values[n]``, last value repeated).
    """

    kind: str
    degree: int = 1
    values: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("polynomial", "exponential", "table"):
            raise ValueError(f"unknown bound kind {self.kind!r}")
        if self.kind == "table":
            v = self.values
            if not v or v[0] < 1 or any(a > b for a, b in zip(v, v[1:])):
                raise ValueError("table bound must be non-empty, >= 1 and non-decreasing")
        if self.kind == "polynomial" and self.degree < 0:
            raise ValueError("degree must be a natural number")

    @classmethod
    def polynomial(cls, degree: int) -> TimeBound:
        return cls("polynomial", degree)

    @classmethod
    def exponential(cls) -> TimeBound:
        return cls("exponential")

    @classmethod
    def table(cls, values) -> TimeBound:
        return cls("table", values=tuple(values))

    @classmethod
    def parse(cls, text: str) -> TimeBound:
        """``exp``, ``poly:D`` or ``table:v0,v1,...``."""
        if text in ("exp", "exponential"):
            return cls.exponential()
        kind, _, arg = text.partition(":")
        if kind in ("poly", "polynomial"):
            return cls.polynomial(int(arg or 1))
        if kind == "table":
            return cls.table(int(v) for v in arg.split(","))
        raise ValueError(f"cannot parse time bound {text!r}")

    def __str__(self) -> str:
        if self.kind == "exponential":
            return "exp"
        if self.kind == "polynomial":
            return f"poly:{self.degree}"
        return "table:" + ",".join(map(str, self.values))

    def eval(self, n: int) -> int:
        if self.kind == "exponential":
            return 1 << n
        if self.kind == "polynomial":
            return max(n, 1) ** self.degree
        return self.values[min(n, len(self.values) - 1)]

    def multiplier(self, steps: int, n: int) -> int:
        """Least ``c >= 1`` with ``steps <= c * t(n)``."""
        if self.kind == "exponential" and n >= steps.bit_length():
            return 1
        return max(1, -(-steps // self.eval(n)))

    def budget(self, c: int, n: int, cap: int) -> int:
        """``min(cap, c * t(n))`` without building huge integers."""
        if self.kind == "exponential" and n >= cap.bit_length():
            return cap
        return min(cap, c * self.eval(n))


@dataclass(frozen=True)
class MindChange:
    round: int
    old: PairCode | None
    new: PairCode | None


@dataclass
class LearnerState:
    history: BitString
    candidate: PairCode | None
    mind_changes: list[MindChange]
    stabilized_at: int | None = None


class _Check:
    __slots__ = ("trace", "budgeted", "matched", "c")

    def __init__(self, trace: Trace):
        self.trace = trace
        self.budgeted = 0  # bits 0..budgeted-1 exist within budget
        self.matched = 0  # bits 0..matched-1 agree with the history
        self.c = 1


class NextValueLearner:
    """Next-value predictor for the class with the given :class:`TimeBound`.

    The search is limited to programs ``1..max_program_index`` and constants
    ``1..max_multiplier``; a single program is never run past ``step_cap``
    steps.  When nothing in range is consistent the learner abstains.
    """

    def __init__(self, bound: TimeBound, max_program_index: int = (1 << 19) - 1,
                 max_multiplier: int = 1024, step_cap: int = 1 << 20,
                 table: ProgramTable | None = None):
        self.bound = bound
        self.max_program_index = max_program_index
        self.max_multiplier = max_multiplier
        self.step_cap = step_cap
        # only the static facts are shared; traces live while a program is alive
        self.table = table if table is not None else ProgramTable()
        self.history = bytearray()
        self.candidate: PairCode | None = None
        self.mind_changes: list[MindChange] = []
        self._alive: list[int] = []
        self._checks: dict[int, _Check] = {}
        self._frontier = 1
        self._searched = False

    # -- consistency -----------------------------------------------------

    def _multiplier(self, e: int) -> int | None:
        """Least ``c`` making program ``e`` consistent, or ``None`` if ruled out."""
        chk = self._checks.get(e)
        if chk is None:
            chk = self._checks[e] = _Check(Trace(Program.from_index(e)))
        tr, hist, bound = chk.trace, self.history, self.bound
        n = len(hist)
        out = tr.out
        while chk.budgeted <= n:
            i = chk.budgeted
            if len(out) <= i:
                tr.run(i + 1, bound.budget(self.max_multiplier, i + 1, self.step_cap))
                if len(out) <= i:
                    return None
            c = bound.multiplier(tr.emit[i], i + 1)
            if c > self.max_multiplier:
                return None
            if c > chk.c:
                chk.c = c
            chk.budgeted = i + 1
            if i < n and out[i] != hist[i]:
                return None
        m = chk.matched
        while m < n:
            if out[m] != hist[m]:
                return None
            m += 1
        chk.matched = m
        return chk.c

    def _kill(self, e: int) -> None:
        self._checks.pop(e, None)

    def _search(self) -> PairCode | None:
        n = len(self.history)
        best: PairCode | None = None
        best_code = -1
        dead = []
        for e in self._alive:
            if best is not None and cantor_pair(e, 1) > best_code:
                break
            c = self._multiplier(e)
            if c is None:
                dead.append(e)
                continue
            code = cantor_pair(e, c)
            if best is None or code < best_code:
                best, best_code = PairCode(e, c), code
        if dead:
            gone = set(dead)
            self._alive = [e for e in self._alive if e not in gone]
            for e in dead:
                self._kill(e)
        bound_of = self.table.static_output_bound
        while self._frontier <= self.max_program_index:
            e = self._frontier
            if best is not None and cantor_pair(e, 1) > best_code:
                break
            self._frontier += 1
            most = bound_of(e)
            if most is not None and most <= n:
                continue
            c = self._multiplier(e)
            if c is None:
                self._kill(e)
                continue
            self._alive.append(e)
            code = cantor_pair(e, c)
            if best is None or code < best_code:
                best, best_code = PairCode(e, c), code
        self._searched = True
        return best

    # -- public API --------------------------------------------------------

    def predict(self) -> int | None:
        """The next bit according to the current candidate, or ``None`` to abstain."""
        if not self._searched:
            self.candidate = self._search()
        if self.candidate is None:
            return None
        return self._checks[self.candidate.left].trace.out[len(self.history)]

    def observe(self, bit: int) -> bool:
        """Append the actual bit; returns ``True`` if the candidate changed."""
        if not self._searched:
            self.candidate = self._search()
        old = self.candidate
        self.history.append(1 if bit else 0)
        new = self._search()
        self.candidate = new
        if new != old:
            self.mind_changes.append(MindChange(len(self.history), old, new))
            return True
        return False

    def feed(self, bits) -> None:
        """Load a history without logging mind changes along the way."""
        self.history.extend(as_bits(bits))
        self.candidate = self._search()

    def state(self) -> LearnerState:
        return LearnerState(BitString.from_bits(self.history), self.candidate,
                            list(self.mind_changes))


def next_value(history, bound: TimeBound, **kwargs) -> tuple[int | None, PairCode | None]:
    """Prediction for the bit after ``history`` and the code that made it."""
    lr = NextValueLearner(bound, **kwargs)
    lr.feed(history)
    return lr.predict(), lr.candidate


@dataclass
class StreamRow:
    round: int
    prediction: int | None
    actual: int
    correct: bool
    candidate: PairCode | None
    mind_change: bool

    CSV_FIELDS = ("round", "prediction", "actual", "correct", "candidate_e",
                  "candidate_c", "mind_change")

    def as_csv(self) -> list:
        e, c = (self.candidate.left, self.candidate.right) if self.candidate else ("", "")
        pred = "" if self.prediction is None else self.prediction
        return [self.round, pred, self.actual, int(self.correct), e, c, int(self.mind_change)]


@dataclass
class StreamReport:
    rows: list[StreamRow]
    mind_changes: list[MindChange]
    last_error_round: int | None
    abstentions: int
    final_candidate: PairCode | None = None
    stats: dict = field(default_factory=dict)

    @property
    def stabilized_at(self) -> int:
        """First round after which every prediction in the horizon was right."""
        return 0 if self.last_error_round is None else self.last_error_round + 1

    @property
    def accuracy(self) -> float:
        return sum(r.correct for r in self.rows) / len(self.rows) if self.rows else 0.0


def predict_stream(source: SequenceSource, bound: TimeBound, n_rounds: int,
                   abstain_guess: int | None = 0, **kwargs) -> StreamReport:
    """Run the learner along ``source`` for ``n_rounds`` rounds.

    While the learner abstains it guesses ``abstain_guess`` (``None`` counts
    every abstention as an error); the row's candidate is then empty.
    """
    lr = NextValueLearner(bound, **kwargs)
    rows = []
    last_error = None
    abstain = 0
    changed = False
    for i in range(n_rounds):
        pred = lr.predict()
        cand = lr.candidate
        if pred is None:
            abstain += 1
            pred = abstain_guess
        actual = source.bit(i)
        ok = pred == actual
        if not ok:
            last_error = i
        rows.append(StreamRow(i, pred, actual, ok, cand, changed))
        changed = lr.observe(actual)
    return StreamReport(rows, lr.mind_changes, last_error, abstain, lr.candidate)
