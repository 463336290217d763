"""CHSH behaviors, the known-input decomposition and the computability attack.

A behavior is a table ``P(a, b | x, y)`` stored as a numpy array indexed
``[a, b, x, y]``.  The attack lets Alice's box learn her own input stream,
send its guess ``x_hat`` (and the round's hidden variable) to Bob's box before
the round, and then reproduce any no-signaling target once the guesses are
right.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bitstream import RawStream, SequenceSource
from .learner import NextValueLearner, TimeBound

NORM_TOL = 1e-12
NS_TOL = 1e-9


class BehaviorError(ValueError):
    """Raised for tables that are not normalized probability distributions."""


def _sign(a, b, x, y) -> int:
    return -1 if (a + b + x * y) % 2 else 1


class Behavior:
    """``P(a, b | x, y)`` for binary inputs and outputs."""

    def __init__(self, probs, name: str = ""):
        p = np.array(probs, dtype=float).reshape(2, 2, 2, 2)
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise BehaviorError("probabilities must be finite and non-negative")
        self.probs = p
        self.name = name

    @classmethod
    def from_function(cls, fn, name: str = "") -> Behavior:
        p = np.zeros((2, 2, 2, 2))
        for a, b, x, y in itertools.product((0, 1), repeat=4):
            p[a, b, x, y] = fn(a, b, x, y)
        return cls(p, name)

    @classmethod
    def from_correlators(cls, corr, name: str = "") -> Behavior:
        """Uniform marginals with ``E(x, y) = corr[x][y]``."""
        return cls.from_function(
            lambda a, b, x, y: (1 + (-1) ** (a ^ b) * corr[x][y]) / 4, name)

    def __getitem__(self, key) -> float:
        return float(self.probs[key])

    def normalization_residual(self) -> float:
        return float(np.max(np.abs(self.probs.sum(axis=(0, 1)) - 1.0)))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return self.normalization_residual() <= tol

    def marginal_a(self) -> np.ndarray:
        """``P(a | x, y)`` indexed ``[a, x, y]``."""
        return self.probs.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        """``P(b | x, y)`` indexed ``[b, x, y]``."""
        return self.probs.sum(axis=0)

    def __repr__(self) -> str:
        return f"Behavior({self.name or 'unnamed'})"


def chsh(b: Behavior) -> float:
    if not b.is_normalized():
        raise BehaviorError(f"behavior not normalized (residual {b.normalization_residual():.3g})")
    total = 0.0
    for x, y in itertools.product((0, 1), repeat=2):
        cell = b.probs[:, :, x, y]
        corr = cell[0, 0] + cell[1, 1] - cell[0, 1] - cell[1, 0]
        total += corr if x * y == 0 else -corr
    return float(total)


# -- built-in behaviors ------------------------------------------------------

def deterministic(fa: tuple[int, int], fb: tuple[int, int]) -> Behavior:
    """``a = fa[x]``, ``b = fb[y]``."""
    return Behavior.from_function(lambda a, b, x, y: float(a == fa[x] and b == fb[y]),
                                  f"det{fa}{fb}")


def uniform() -> Behavior:
    return Behavior(np.full((2, 2, 2, 2), 0.25), "uniform")


def pr_box() -> Behavior:
    return Behavior.from_function(lambda a, b, x, y: 0.5 if a ^ b == x * y else 0.0, "pr")


def quantum_optimal() -> Behavior:
    s = 1 / math.sqrt(2)
    return Behavior.from_correlators([[s, s], [s, -s]], "quantum")


def signaling_copy_x() -> Behavior:
    """Bob's output copies Alice's input; violates no-signaling."""
    return Behavior.from_function(lambda a, b, x, y: 0.5 if b == x else 0.0, "b=x")


TARGETS = {
    "local": lambda: deterministic((0, 0), (0, 0)),
    "uniform": uniform,
    "pr": pr_box,
    "quantum": quantum_optimal,
}


def target(name: str) -> Behavior:
    try:
        return TARGETS[name]()
    except KeyError:
        raise KeyError(f"unknown target {name!r}; known: {', '.join(TARGETS)}") from None


# -- local bound -------------------------------------------------------------

FUNCTIONS = ((0, 0), (0, 1), (1, 0), (1, 1))  # all maps {0,1} -> {0,1} as (f(0), f(1))


def deterministic_chsh(fa, fb) -> int:
    """CHSH value of a deterministic strategy, in integer arithmetic."""
    return sum(_sign(fa[x], fb[y], x, y) for x in (0, 1) for y in (0, 1))


def local_deterministic_max() -> int:
    return max(deterministic_chsh(fa, fb) for fa in FUNCTIONS for fb in FUNCTIONS)


def maximizing_strategies() -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Deterministic strategies attaining the maximum ``S = 2``.

    Every deterministic strategy has ``|S| = 2``; half of them reach ``+2``.
    """
    best = local_deterministic_max()
    return [(fa, fb) for fa in FUNCTIONS for fb in FUNCTIONS
            if deterministic_chsh(fa, fb) == best]


def local_mixture(weights) -> Behavior:
    """Convex mixture of the 16 deterministic behaviors (weights in ``FUNCTIONS`` order)."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (16,) or np.any(w < 0):
        raise BehaviorError("need 16 non-negative weights")
    w = w / w.sum()
    p = sum(wi * deterministic(fa, fb).probs
            for wi, (fa, fb) in zip(w, itertools.product(FUNCTIONS, FUNCTIONS)))
    return Behavior(p, "local-mixture")


@dataclass
class SignalingCheck:
    ok: bool
    alice_residual: float  # max over a, x of |P(a|x,0) - P(a|x,1)|
    bob_residual: float  # max over b, y of |P(b|0,y) - P(b|1,y)|

    def __bool__(self) -> bool:
        return self.ok


def is_no_signaling(b: Behavior, tol: float = NS_TOL) -> SignalingCheck:
    if not b.is_normalized():
        raise BehaviorError("behavior not normalized")
    ma, mb = b.marginal_a(), b.marginal_b()
    ra = float(np.max(np.abs(ma[:, :, 0] - ma[:, :, 1])))
    rb = float(np.max(np.abs(mb[:, 0, :] - mb[:, 1, :])))
    return SignalingCheck(ra <= tol and rb <= tol, ra, rb)


# -- decomposition with a known input ----------------------------------------

@dataclass(frozen=True)
class DeterministicStrategy:
    """Deterministic responses driven by a hidden variable ``lam = (u, v)``.

    The side that does not know the other input answers ``first(inp, lam)``,
    which is 0 iff ``u < marginal[inp]``.  The other side, given a guess
    ``hat`` of that input, recomputes the first side's output and answers
    ``second(inp, lam, hat)``: 0 iff ``v < conditional[first, hat, inp]``.
    ``known`` says whose input is guessed.  Conditionals for outputs that
    never occur are filled with 0 (they are never consulted with a correct
    guess).
    """

    known: str
    marginal: tuple[float, float]
    conditional: tuple  # [out_first][hat][inp] -> P(out_second = 0)

    def first(self, inp: int, lam: tuple[float, float]) -> int:
        return 0 if lam[0] < self.marginal[inp] else 1

    def second(self, inp: int, lam: tuple[float, float], hat: int) -> int:
        o = self.first(hat, lam)
        return 0 if lam[1] < self.conditional[o][hat][inp] else 1

    def f(self, x: int, lam, x_hat: int = 0) -> int:
        """Alice's output."""
        return self.first(x, lam) if self.known == "x" else self.second(x, lam, x_hat)

    def g(self, y: int, lam, x_hat: int = 0) -> int:
        """Bob's output; ``x_hat`` is the guess of the known input."""
        return self.second(y, lam, x_hat) if self.known == "x" else self.first(y, lam)

    @staticmethod
    def draw_lambda(rng: RawStream) -> tuple[float, float]:
        return rng.uniform(), rng.uniform()


def _decompose(p: np.ndarray, known: str) -> DeterministicStrategy:
    # p indexed [out_first, out_second, in_first, in_second]
    marg = p.sum(axis=1)  # [o1, i1, i2]; independent of i2 under no-signaling
    m0 = tuple(float(marg[0, i, 0]) for i in (0, 1))
    cond = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
    for o1, i1, i2 in itertools.product((0, 1), repeat=3):
        den = marg[o1, i1, i2]
        cond[o1][i1][i2] = float(p[o1, 0, i1, i2] / den) if den > 0 else 0.0
    return DeterministicStrategy(known, m0, tuple(tuple(tuple(r) for r in c) for c in cond))


def decompose_known_x(b: Behavior) -> DeterministicStrategy:
    """``P(a,b|x,y) = P(a|x) P(b|y; a, x)`` with Bob's box told ``x``."""
    if not is_no_signaling(b):
        raise BehaviorError("decomposition needs a no-signaling behavior")
    return _decompose(b.probs, "x")


def decompose_known_y(b: Behavior) -> DeterministicStrategy:
    """Mirror image: ``P(b|y) P(a|x; b, y)`` with Alice's box told ``y``."""
    if not is_no_signaling(b):
        raise BehaviorError("decomposition needs a no-signaling behavior")
    return _decompose(b.probs.transpose(1, 0, 3, 2), "y")


def induced_behavior(strategy: DeterministicStrategy, draws: int, rng: RawStream) -> Behavior:
    """Empirical behavior with correct guesses, ``draws`` hidden variables per input pair."""
    counts = np.zeros((2, 2, 2, 2))
    for _ in range(draws):
        lam = strategy.draw_lambda(rng)
        for x, y in itertools.product((0, 1), repeat=2):
            hat = x if strategy.known == "x" else y
            counts[strategy.f(x, lam, hat), strategy.g(y, lam, hat), x, y] += 1
    return Behavior(counts / draws, "induced")


# -- the attack ----------------------------------------------------------------

@dataclass(frozen=True)
class Message:
    """What Alice's box sends to Bob's box between rounds."""

    hat: int
    lam: tuple[float, float]


class AliceBox:
    """Alice's side; it never sees ``y_i`` before round ``i`` is over."""

    def __init__(self, strategy: DeterministicStrategy, learner: NextValueLearner,
                 lam_rng: RawStream):
        self._strategy = strategy
        self._learner = learner
        self._rng = lam_rng
        self._msg: Message | None = None
        self.abstentions = 0

    def prepare(self) -> Message:
        guess = self._learner.predict()
        if guess is None:
            self.abstentions += 1
            guess = 0
        self._msg = Message(guess, self._strategy.draw_lambda(self._rng))
        return self._msg

    def play(self, x: int) -> int:
        return self._strategy.f(x, self._msg.lam, self._msg.hat)

    def after_round(self, x: int, y: int) -> bool:
        """Learn from the finished round; returns whether the learner changed its mind."""
        return self._learner.observe(x if self._strategy.known == "x" else y)


class BobBox:
    """Bob's side; sees only ``y_i`` and the message sent before the round."""

    def __init__(self, strategy: DeterministicStrategy):
        self._strategy = strategy
        self._msg: Message | None = None

    def receive(self, msg: Message) -> None:
        self._msg = msg

    def play(self, y: int) -> int:
        return self._strategy.g(y, self._msg.lam, self._msg.hat)


@dataclass(frozen=True)
class RoundRecord:
    i: int
    x: int
    y: int
    a: int
    b: int
    x_hat: int  # the guessed input (Alice's x unless the attack predicts y)
    guess_correct: bool
    mind_change: bool

    CSV_FIELDS = ("i", "x", "y", "a", "b", "x_hat", "guess_correct", "mind_change")

    def as_csv(self) -> list:
        return [self.i, self.x, self.y, self.a, self.b, self.x_hat,
                int(self.guess_correct), int(self.mind_change)]


def empirical_behavior(records, start: int = 0, stop: int | None = None):
    """Frequencies over ``records[start:stop]`` and the list of empty ``(x, y)`` cells."""
    counts = np.zeros((2, 2, 2, 2), dtype=np.int64)
    for r in records[start:stop]:
        counts[r.a, r.b, r.x, r.y] += 1
    totals = counts.sum(axis=(0, 1))
    empty = [(x, y) for x in (0, 1) for y in (0, 1) if totals[x, y] == 0]
    if empty:
        return None, empty
    return Behavior(counts / totals, "empirical"), []


def empirical_chsh(records, start: int = 0, stop: int | None = None) -> float | None:
    """CHSH estimate, or ``None`` when some input pair never occurred.

    Each correlator is an integer difference over an integer count, so a
    transcript obeying the PR relation gives exactly 4.
    """
    same = np.zeros((2, 2), dtype=np.int64)
    total = np.zeros((2, 2), dtype=np.int64)
    for r in records[start:stop]:
        total[r.x, r.y] += 1
        same[r.x, r.y] += r.a == r.b
    if np.any(total == 0):
        return None
    s = 0.0
    for x, y in itertools.product((0, 1), repeat=2):
        e = (2 * int(same[x, y]) - int(total[x, y])) / int(total[x, y])
        s += -e if x * y else e
    return s


@dataclass
class BellReport:
    n_rounds: int
    target: str
    predict: str
    lock_round: int | None
    s_overall: float | None
    s_post_lock: float | None
    post_lock_rounds: int
    window: int
    s_windows: list = field(default_factory=list)
    guesses_correct: int = 0
    abstentions: int = 0
    mind_changes: int = 0
    final_candidate: tuple[int, int] | None = None

    def to_json(self, **extra) -> str:
        d = asdict(self)
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)


def lock_round(records, min_tail: int = 100) -> int | None:
    """First round after which every guess was correct, if that tail has ``min_tail`` rounds."""
    last_wrong = -1
    for r in records:
        if not r.guess_correct:
            last_wrong = r.i
    start = last_wrong + 1
    return start if len(records) - start >= min_tail else None


def run_bell_attack(fA: SequenceSource, fB: SequenceSource, target_behavior: Behavior,
                    bound: TimeBound, n_rounds: int, seed: int, predict: str = "x",
                    window: int = 500, min_tail: int = 100,
                    learner_kwargs: dict | None = None) -> tuple[BellReport, list[RoundRecord]]:
    """Play ``n_rounds`` with settings ``x_i = fA[i]``, ``y_i = fB[i]``."""
    if predict not in ("x", "y"):
        raise ValueError("predict must be 'x' or 'y'")
    strategy = (decompose_known_x if predict == "x" else decompose_known_y)(target_behavior)
    learner = NextValueLearner(bound, **(learner_kwargs or {}))
    alice = AliceBox(strategy, learner, RawStream(seed, 0))
    bob = BobBox(strategy)
    records = []
    changed = False
    for i in range(n_rounds):
        msg = alice.prepare()
        bob.receive(msg)
        x, y = fA.bit(i), fB.bit(i)
        a, b = alice.play(x), bob.play(y)
        truth = x if predict == "x" else y
        records.append(RoundRecord(i, x, y, a, b, msg.hat, msg.hat == truth, changed))
        changed = alice.after_round(x, y)
    lock = lock_round(records, min_tail)
    cand = learner.candidate
    report = BellReport(
        n_rounds=n_rounds,
        target=target_behavior.name,
        predict=predict,
        lock_round=lock,
        s_overall=empirical_chsh(records),
        s_post_lock=None if lock is None else empirical_chsh(records, lock),
        post_lock_rounds=0 if lock is None else n_rounds - lock,
        window=window,
        s_windows=[empirical_chsh(records, s, s + window) for s in range(0, n_rounds, window)],
        guesses_correct=sum(r.guess_correct for r in records),
        abstentions=alice.abstentions,
        mind_changes=len(learner.mind_changes),
        final_candidate=None if cand is None else (cand.left, cand.right),
    )
    return report, records


def replay_check(records, strategy: DeterministicStrategy, seed: int) -> list[int]:
    """Rounds whose outputs are not reproduced from the permitted inputs alone.

    ``a_i`` is recomputed from ``(x_i, lam_i)`` plus the pre-round guess when
    Alice's box is the informed one, ``b_i`` from ``(y_i, lam_i, x_hat_i)``;
    the hidden variables are regenerated from the preparation seed.
    """
    rng = RawStream(seed, 0)
    bad = []
    for r in records:
        lam = strategy.draw_lambda(rng)
        if strategy.f(r.x, lam, r.x_hat) != r.a or strategy.g(r.y, lam, r.x_hat) != r.b:
            bad.append(r.i)
    return bad
