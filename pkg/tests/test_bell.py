import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctsim.bell import (
    Behavior,
    BehaviorError,
    RoundRecord,
    chsh,
    decompose_known_x,
    decompose_known_y,
    deterministic,
    deterministic_chsh,
    empirical_behavior,
    empirical_chsh,
    induced_behavior,
    is_no_signaling,
    local_deterministic_max,
    local_mixture,
    lock_round,
    maximizing_strategies,
    pr_box,
    quantum_optimal,
    replay_check,
    run_bell_attack,
    signaling_copy_x,
    target,
    uniform,
)
from ctsim.bitstream import CoinSource, RawStream
from ctsim.corpus import BUILTIN
from ctsim.learner import TimeBound
from ctsim.machine import ProgramSource


def chsh_by_hand(p):
    # E(x,y) = sum over a,b of (-1)^(a+b) P(a,b|x,y)
    def corr(x, y):
        return sum((-1) ** (a + b) * p(a, b, x, y) for a in (0, 1) for b in (0, 1))
    return corr(0, 0) + corr(0, 1) + corr(1, 0) - corr(1, 1)


# -- CHSH values -----------------------------------------------------------------

def test_chsh_reference_values():
    assert chsh(deterministic((0, 0), (0, 0))) == 2.0
    assert chsh(pr_box()) == 4.0
    assert chsh(uniform()) == 0.0
    assert chsh(quantum_optimal()) == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_chsh_agrees_with_hand_sum():
    pr = lambda a, b, x, y: 0.5 if (a ^ b) == (x & y) else 0.0
    assert chsh_by_hand(pr) == chsh(pr_box())
    for b in (quantum_optimal(), uniform(), deterministic((0, 1), (1, 1))):
        assert chsh(b) == pytest.approx(chsh_by_hand(lambda a, bb, x, y: b[a, bb, x, y]), abs=1e-12)


def test_unnormalized_behavior_rejected():
    probs = pr_box().probs.copy()
    probs[0, 0, 0, 0] += 0.1
    with pytest.raises(BehaviorError):
        chsh(Behavior(probs))


def test_targets():
    assert chsh(target("pr")) == 4.0 and chsh(target("local")) == 2.0
    with pytest.raises(KeyError):
        target("gremlin")


# -- local bound --------------------------------------------------------------------

def test_every_deterministic_strategy_has_s_of_magnitude_two():
    vals = [deterministic_chsh(fa, fb)
            for fa in itertools.product((0, 1), repeat=2) for fb in itertools.product((0, 1), repeat=2)]
    assert len(vals) == 16 and set(map(abs, vals)) == {2}
    assert local_deterministic_max() == 2
    assert len(maximizing_strategies()) == 8


@settings(max_examples=100)
@given(st.lists(st.floats(min_value=0, max_value=1), min_size=16, max_size=16).filter(lambda w: sum(w) > 1e-3))
def test_local_mixtures_never_exceed_two(w):
    b = local_mixture(w)
    assert b.is_normalized() and is_no_signaling(b)
    assert chsh(b) <= 2 + 1e-12


def test_local_mixture_from_seeded_weights():
    rng = np.random.default_rng(2024)
    worst = max(chsh(local_mixture(rng.random(16))) for _ in range(100))
    assert worst <= 2 + 1e-12


# -- no-signaling -------------------------------------------------------------------

def test_no_signaling_checks():
    assert is_no_signaling(pr_box())
    assert is_no_signaling(quantum_optimal())
    assert is_no_signaling(uniform())
    bad = is_no_signaling(signaling_copy_x())
    assert not bad and bad.bob_residual > 0.1


# -- decomposition ------------------------------------------------------------------

def test_pr_decomposition():
    s = decompose_known_x(pr_box())
    assert s.marginal == (0.5, 0.5)
    rng = RawStream(1)
    for _ in range(200):
        lam = s.draw_lambda(rng)
        for x, y in itertools.product((0, 1), repeat=2):
            assert s.g(y, lam, x) == s.f(x, lam, x) ^ (x & y)


def test_local_decomposition_is_constant():
    s = decompose_known_x(deterministic((1, 0), (0, 1)))
    rng = RawStream(2)
    for _ in range(50):
        lam = s.draw_lambda(rng)
        assert [s.f(x, lam, x) for x in (0, 1)] == [1, 0]
        assert [s.g(y, lam, x) for x in (0, 1) for y in (0, 1)] == [0, 1, 0, 1]


@pytest.mark.parametrize("decompose", [decompose_known_x, decompose_known_y])
@pytest.mark.parametrize("name", ["pr", "quantum", "uniform"])
def test_induced_behavior_reproduces_target(decompose, name):
    b = target(name)
    got = induced_behavior(decompose(b), 100_000, RawStream(3))
    assert np.max(np.abs(got.probs - b.probs)) < 0.01


def test_decomposition_refuses_signaling_behavior():
    with pytest.raises(BehaviorError):
        decompose_known_x(signaling_copy_x())


# -- estimators -----------------------------------------------------------------------

def rec(i, x, y, a, b, ok=True):
    return RoundRecord(i, x, y, a, b, x, ok, False)


def test_empirical_estimators_and_empty_cells():
    rows = [rec(0, 0, 0, 0, 0), rec(1, 1, 1, 0, 1), rec(2, 0, 1, 1, 1)]
    b, empty = empirical_behavior(rows)
    assert b is None and empty == [(1, 0)]
    assert empirical_chsh(rows) is None
    assert empirical_chsh([]) is None
    rows.append(rec(3, 1, 0, 1, 1))
    b, empty = empirical_behavior(rows)
    assert empty == [] and chsh(b) == 4.0 == empirical_chsh(rows)


def test_lock_round():
    rows = [rec(i, 0, 0, 0, 0, ok=i not in (2, 5)) for i in range(200)]
    assert lock_round(rows) == 6
    assert lock_round(rows[:50]) is None


# -- the attack -------------------------------------------------------------------------

def alternating():
    return ProgramSource(BUILTIN["alternating"])


def test_attack_reaches_pr_value_after_lock():
    rep, rows = run_bell_attack(alternating(), CoinSource(5), pr_box(), TimeBound.exponential(),
                                3000, seed=5)
    assert rep.lock_round is not None and rep.post_lock_rounds >= 1000
    assert rep.s_post_lock == 4.0
    assert all((r.a ^ r.b) == (r.x & r.y) for r in rows[rep.lock_round:])
    assert replay_check(rows, decompose_known_x(pr_box()), 5) == []


def test_attack_predicting_bobs_input():
    rep, rows = run_bell_attack(CoinSource(6), alternating(), pr_box(), TimeBound.exponential(),
                                2000, seed=6, predict="y")
    assert rep.s_post_lock == 4.0
    assert replay_check(rows, decompose_known_y(pr_box()), 6) == []


def test_attack_local_target_stays_local():
    rep, _ = run_bell_attack(alternating(), CoinSource(7), target("local"), TimeBound.exponential(),
                             1000, seed=7)
    assert rep.s_overall == 2.0


def test_replay_detects_tampering():
    rep, rows = run_bell_attack(alternating(), CoinSource(8), pr_box(), TimeBound.exponential(),
                                300, seed=8)
    r = rows[100]
    rows[100] = RoundRecord(r.i, r.x, r.y, r.a, 1 - r.b, r.x_hat, r.guess_correct, r.mind_change)
    assert replay_check(rows, decompose_known_x(pr_box()), 8) == [100]


def test_attack_against_coin_gains_nothing():
    rep, rows = run_bell_attack(CoinSource(9), CoinSource(10), pr_box(), TimeBound.exponential(),
                                2000, seed=9, window=500)
    assert rep.lock_round is None
    # the abstaining box always sends x_hat = 0, which fixes a = b
    assert all(s == 2.0 for s in rep.s_windows)


def test_attack_is_reproducible():
    a = run_bell_attack(alternating(), CoinSource(11), quantum_optimal(), TimeBound.exponential(), 500, seed=3)
    b = run_bell_attack(alternating(), CoinSource(11), quantum_optimal(), TimeBound.exponential(), 500, seed=3)
    assert a == b
    assert a[0].to_json() == b[0].to_json()


def test_bad_predict_mode():
    with pytest.raises(ValueError):
        run_bell_attack(alternating(), CoinSource(0), pr_box(), TimeBound.exponential(), 10, 0, predict="z")
