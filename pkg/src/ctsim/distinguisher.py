"""Telling a computable bit sequence apart from a fair coin.

The search dovetails over (stage ``t``, program ``p``): at stage ``t`` every
program ``p <= t`` is run for ``t`` steps and fires when its first ``k*|p|``
output bits agree with the prefix of ``X`` (checked first) or ``Z``.  With a
flip tolerance ``q > 0`` agreement means Hamming distance ``< q*k*|p|``.

:func:`distinguish_reference` walks the stages literally.  :func:`distinguish`
computes the same verdict faster: program ``p`` first fires at stage
``max(p, t_p)`` where ``t_p`` is the step at which its ``k*|p|``-th bit
appears, so the verdict is the program minimizing ``(max(p, t_p), p)``.  It
searches doubling horizons, skips programs that can never emit ``k*|p|`` bits
and drops a program as soon as its committed output disagrees with both
prefixes beyond the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, log

from .bitstream import (
    CoinSource,
    NoisySource,
    PreconditionError,
    RawStream,
    SequenceSource,
    program_length,
)
from .machine import Program, ProgramSource, ProgramTable, Trace

X, Z, CAP_EXHAUSTED = "X", "Z", "cap-exhausted"

DIVERGENT = math.inf
"""Returned by :func:`noisy_error_bound` when the geometric series does not converge."""


class DomainError(ValueError):
    pass


def _fraction(q) -> Fraction:
    if isinstance(q, Fraction):
        return q
    if isinstance(q, float):
        return Fraction(repr(q))
    return Fraction(q)


@dataclass(frozen=True)
class DistinguishConfig:
    k: int = 4
    q: Fraction = Fraction(0)
    stage_cap: int = 10**6
    min_program_length: int = 1

    def __post_init__(self):
        object.__setattr__(self, "q", _fraction(self.q))
        if self.k < 2:
            raise PreconditionError("k must be at least 2 (k = 1 gives a vacuous bound)")
        if not 0 <= self.q < Fraction(1, 2):
            raise PreconditionError("q must lie in [0, 1/2)")
        if self.stage_cap < 0 or self.min_program_length < 0:
            raise PreconditionError("stage_cap and min_program_length are naturals")

    def tolerance(self, ell: int) -> int:
        """Largest accepted Hamming distance for a program of length ``ell``."""
        if self.q == 0:
            return 0
        # d < q*k*ell  <=>  d <= ceil(q*k*ell) - 1
        return math.ceil(self.q * self.k * ell) - 1


@dataclass(frozen=True)
class Verdict:
    answer: str
    program: Program | None
    stage: int
    prefix_len: int
    bits_consumed_x: int
    bits_consumed_z: int

    @property
    def program_index(self) -> int | None:
        return None if self.program is None else self.program.index

    @property
    def answered(self) -> bool:
        return self.answer in (X, Z)


def _distance(out, src: SequenceSource, n: int) -> int:
    return sum(out[i] != src.bit(i) for i in range(n))


def distinguish_reference(X_src: SequenceSource, Z_src: SequenceSource, cfg: DistinguishConfig) -> Verdict:
    """Stage-by-stage dovetailing with no pruning or static shortcuts.

    Each program keeps its own :class:`~ctsim.machine.Trace`, advanced so that
    at stage ``t`` it has run exactly ``min(t, steps to halt)`` steps; this is
    ``run_bounded(p, t)`` computed incrementally.
    """
    traces: list[Trace | None] = []
    for t in range(cfg.stage_cap + 1):
        traces.append(None)
        for p in range(t + 1):
            ell = program_length(p)
            if ell < cfg.min_program_length:
                continue
            tr = traces[p]
            if tr is None:
                tr = traces[p] = Trace(Program.from_index(p))
            need = cfg.k * ell
            if len(tr.out) < need:
                tr.run(need, t, silent_checks=False)
                if len(tr.out) < need:
                    continue
            tol = cfg.tolerance(ell)
            if _distance(tr.out, X_src, need) <= tol:
                return Verdict(X, tr.program, t, need, need, 0)
            if _distance(tr.out, Z_src, need) <= tol:
                return Verdict(Z, tr.program, t, need, need, need)
    return Verdict(CAP_EXHAUSTED, None, cfg.stage_cap, 0, 0, 0)


class _Candidates:
    """Ascending indices of programs that might emit unboundedly many bits."""

    def __init__(self, table: ProgramTable):
        self.table = table
        self.indices: list[int] = []
        self.scanned = 0  # every index < scanned has been classified

    def upto(self, limit: int) -> list[int]:
        if self.scanned <= limit:
            may = self.table.may_emit_forever
            self.indices.extend(i for i in range(self.scanned, limit + 1) if may(i))
            self.scanned = limit + 1
        return self.indices


_shared_table = ProgramTable()
_shared_candidates = _Candidates(_shared_table)


def shared_table() -> ProgramTable:
    """The process-wide trace cache used when no table is passed explicitly."""
    return _shared_table


def _search(X_src, Z_src, cfg: DistinguishConfig, table: ProgramTable | None) -> Verdict:
    if table is None or table is _shared_table:
        cands = _shared_candidates
    else:
        cands = _Candidates(table)
    table = cands.table
    k, cap = cfg.k, cfg.stage_cap
    if cfg.min_program_length == 0:
        # the empty program matches the empty prefix of X at stage 0
        return Verdict(X, Program(""), 0, 0, 0, 0)
    lo = (1 << cfg.min_program_length) - 1
    progress: dict[int, list[int]] = {}  # p -> [bits compared, mismatches X, mismatches Z]
    dead: set[int] = set()
    scratch: dict = {}
    used_x = used_z = 0
    horizon = min(4096, cap)
    while True:
        best = None  # (stage, p, answer, need)
        indices = cands.upto(horizon)
        # first candidate index >= lo
        a, b = 0, len(indices)
        while a < b:
            m = (a + b) // 2
            if indices[m] < lo:
                a = m + 1
            else:
                b = m
        for j in range(a, len(indices)):
            p = indices[j]
            if p > horizon or (best is not None and p >= best[0]):
                break
            if p in dead:
                continue
            ell = program_length(p)
            need = k * ell
            tol = cfg.tolerance(ell)
            st = progress.get(p)
            if st is None:
                st = progress[p] = [0, 0, 0]
            i, mx, mz = st
            tr = table.trace(p, scratch)
            out = tr.out
            limit = horizon if best is None else min(horizon, best[0] - 1)
            while i < need:
                if i >= len(out):
                    tr.run(need, limit)
                    if i >= len(out):
                        break
                bit = out[i]
                if bit != X_src.bit(i):
                    mx += 1
                if bit != Z_src.bit(i):
                    mz += 1
                i += 1
                if mx > tol and mz > tol:
                    break
            st[0], st[1], st[2] = i, mx, mz
            used_x = max(used_x, i)
            used_z = max(used_z, i)
            if mx > tol and mz > tol or i < need and tr.final:
                dead.add(p)
                scratch.pop(p, None)
                continue
            if i < need:
                continue
            stage = max(p, tr.emit[need - 1])
            if stage > limit:
                continue
            if best is None or stage < best[0]:
                best = (stage, p, X if mx <= tol else Z, need)
        if best is not None:
            stage, p, ans, need = best
            return Verdict(ans, table.trace(p, scratch).program, stage, need, used_x, used_z)
        if horizon >= cap:
            return Verdict(CAP_EXHAUSTED, None, cap, 0, used_x, used_z)
        horizon = min(2 * horizon, cap)


def distinguish(X_src: SequenceSource, Z_src: SequenceSource, cfg: DistinguishConfig,
                table: ProgramTable | None = None) -> Verdict:
    """Name the computable one of two sequences (exact matching)."""
    if cfg.q != 0:
        cfg = DistinguishConfig(cfg.k, 0, cfg.stage_cap, cfg.min_program_length)
    return _search(X_src, Z_src, cfg, table)


def distinguish_noisy(X_src: SequenceSource, Z_src: SequenceSource, cfg: DistinguishConfig,
                      table: ProgramTable | None = None) -> Verdict:
    """As :func:`distinguish` but accepting Hamming distance below ``q*k*|p|``.

    With ``q = 0`` this is exactly :func:`distinguish`.
    """
    return _search(X_src, Z_src, cfg, table)


# ---------------------------------------------------------------------------
# error bounds


def error_bound(k: int) -> float:
    """Upper bound on the miss-recognition probability of the exact protocol."""
    if k < 2:
        raise DomainError("k must be >= 2")
    r = 2.0 ** -(k - 1)
    return r / (1 - r)


def error_bound_exact(k: int) -> Fraction:
    if k < 2:
        raise DomainError("k must be >= 2")
    r = Fraction(1, 2 ** (k - 1))
    return r / (1 - r)


def _log_ratio(k: float, q: float) -> float:
    # natural log of 2^(1+qk-k) * (e/q)^(qk)
    return (1 + q * k - k) * log(2) + q * k * (1 - log(q))


def noisy_error_term(k: float, q: float) -> float:
    """Per-length geometric ratio of the relaxed noisy bound."""
    q = float(q)
    if not 0 < q < 0.5:
        raise DomainError("q must lie in (0, 1/2)")
    lr = _log_ratio(k, q)
    return math.exp(lr) if lr < 700 else math.inf


def noisy_error_bound(k: float, q: float) -> float:
    """Closed-form bound for the noise-tolerant protocol, or ``DIVERGENT``."""
    rho = noisy_error_term(k, q)
    if rho >= 1:
        return DIVERGENT
    return rho / (1 - rho)


def noisy_length_term(k: int, q, ell: int) -> float:
    """Unrelaxed per-length term ``2^l 2^floor(qlk) C(lk, floor(qlk)) / 2^(lk)``."""
    q = _fraction(q)
    m = math.floor(q * ell * k)
    num = comb(ell * k, m) << (ell + m)
    return float(Fraction(num, 1 << (ell * k)))


def noisy_decay_rate(q: float) -> float:
    """``log2`` of the per-unit-``k`` factor of the ratio; negative means decay."""
    q = float(q)
    return q - 1 + q * math.log2(math.e / q)


def noise_threshold(step: Fraction | float = Fraction(1, 200)) -> float:
    """Largest grid value of ``q`` for which the noisy bound tends to zero in ``k``."""
    step = _fraction(step)
    best = None
    i = 1
    while step * i < Fraction(1, 2):
        q = float(step * i)
        # decay must show analytically and at large finite k
        if noisy_decay_rate(q) < 0 and noisy_error_bound(4000, q) < noisy_error_bound(2000, q):
            best = q
        i += 1
    return best


# ---------------------------------------------------------------------------
# Monte Carlo harness


@dataclass
class TrialRow:
    seed: int
    k: int
    q: Fraction
    r: float
    chooser: str
    truth: str
    answer: str
    correct: bool
    stage: int
    program_length: int
    bits_consumed: int

    CSV_FIELDS = ("seed", "k", "q", "r", "chooser", "truth", "answer", "correct",
                  "stage", "program_length", "bits_consumed")

    def as_csv(self) -> list:
        return [self.seed, self.k, str(self.q), repr(self.r), self.chooser, self.truth,
                self.answer, int(self.correct), self.stage, self.program_length, self.bits_consumed]


def run_trial(chooser: Program, cfg: DistinguishConfig, seed: int, r: float = 0.0,
              chooser_name: str = "", table: ProgramTable | None = None) -> TrialRow:
    """One coin-vs-program trial; the computable side is picked by the seed."""
    pick = RawStream(seed, 0)
    truth = X if pick.bit() == 0 else Z
    computable: SequenceSource = ProgramSource(chooser)
    if r > 0:
        computable = NoisySource(computable, r, seed, 2)
    coin = CoinSource(seed, 1)
    xs, zs = (computable, coin) if truth == X else (coin, computable)
    v = _search(xs, zs, cfg, table)
    return TrialRow(
        seed=seed, k=cfg.k, q=cfg.q, r=r, chooser=chooser_name or chooser.raw.text,
        truth=truth, answer=v.answer, correct=v.answer == truth, stage=v.stage,
        program_length=0 if v.program is None else v.program.length,
        bits_consumed=max(v.bits_consumed_x, v.bits_consumed_z),
    )


@dataclass
class TrialSummary:
    trials: int
    errors: int
    cap_exhausted: int
    error_rate: float
    bound: float
    sigma: float

    @property
    def within_bound(self) -> bool:
        return self.error_rate <= self.bound + 3 * self.sigma


def summarize(rows: list[TrialRow], k: int, q: Fraction = Fraction(0)) -> TrialSummary:
    n = len(rows)
    caps = sum(r.answer == CAP_EXHAUSTED for r in rows)
    errors = sum(r.answer not in (CAP_EXHAUSTED, r.truth) for r in rows)
    if q == 0:
        bound = error_bound(k)
    else:
        bound = noisy_error_bound(k, float(q))
    b = min(bound, 1.0)
    sigma = math.sqrt(b * (1 - b) / n) if n else 0.0
    return TrialSummary(n, errors, caps, errors / n if n else 0.0, bound, sigma)


def monte_carlo(choosers, cfg: DistinguishConfig, trials: int, seed: int = 0,
                r: float = 0.0, table: ProgramTable | None = None) -> list[TrialRow]:
    """Trial ``i`` uses seed ``seed + i`` and chooser ``choosers[i % len]``.

    ``choosers`` is a list of ``(name, Program)`` pairs.
    """
    rows = []
    for i in range(trials):
        name, prog = choosers[i % len(choosers)]
        rows.append(run_trial(prog, cfg, seed + i, r, name, table))
    return rows
