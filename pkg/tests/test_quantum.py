import pytest

from ctsim.bitstream import CoinSource, RawStream, frequency_of_ones
from ctsim.corpus import BUILTIN
from ctsim.distinguisher import X, Z, DistinguishConfig, error_bound
from ctsim.machine import ProgramSource
from ctsim.quantum import (
    BORN_ONE,
    EVEN_POSITION_BASIS,
    ODD_POSITION_BASIS,
    MeasurementRecord,
    MixingBox,
    PureState,
    alternating_measure,
    improper_vs_proper_experiment,
    measure,
    run_mixture_experiment,
)


def box(basis, name, r=0.0):
    return MixingBox(basis, ProgramSource(BUILTIN[name]), r)


def test_position_convention():
    assert (ODD_POSITION_BASIS, EVEN_POSITION_BASIS) == ("X", "Z")


def test_born_table():
    assert BORN_ONE[(PureState.Z0, "Z")] == 0.0
    assert BORN_ONE[(PureState.Z1, "Z")] == 1.0
    assert BORN_ONE[(PureState.XMINUS, "X")] == 1.0
    # |<0|+>|^2 = 1/2 for every cross-basis pair
    assert {BORN_ONE[(s, b)] for s in PureState for b in "ZX" if s.basis != b} == {0.5}
    assert PureState.prepare("X", 0) is PureState.XPLUS


def test_eigenstate_measurement_is_deterministic():
    rng = RawStream(1)
    assert all(measure(PureState.Z0, "Z", rng) == 0 for _ in range(200))
    assert all(measure(PureState.XMINUS, "X", rng) == 1 for _ in range(200))


def test_cross_basis_measurement_is_fair():
    rng = RawStream(2)
    bits = [measure(PureState.XPLUS, "Z", rng) for _ in range(10_000)]
    assert abs(frequency_of_ones(bits) - 0.5) < 0.02


def test_flipped_eigenstate_frequency():
    rng = RawStream(3)
    bits = [measure(PureState.Z1, "Z", rng) ^ rng.bernoulli(0.1) for _ in range(10_000)]
    assert abs(frequency_of_ones(bits) - 0.9) < 0.02


def test_box_rejects_bad_parameters():
    with pytest.raises(ValueError):
        MixingBox("Y", CoinSource(0))
    with pytest.raises(ValueError):
        MixingBox("Z", CoinSource(0), 0.5)


def test_alternating_measure_z_box():
    xs, zs = alternating_measure(box("Z", "zeros"), 20_000, RawStream(4))
    assert zs.text == "0" * 10_000
    assert abs(frequency_of_ones(list(xs)) - 0.5) < 0.03


def test_alternating_measure_copies_chooser_at_matched_positions():
    # qubit i carries chooser bit i; the sigma_x record sees qubits 1, 3, 5, ...
    n = 40
    xs, zs = alternating_measure(box("X", "period3_011"), n, RawStream(5))
    chooser = ProgramSource(BUILTIN["period3_011"]).prefix(n).text
    assert xs.text == chooser[0::2]
    xs, zs = alternating_measure(box("X", "alternating"), n, RawStream(5))
    assert xs.text == "0" * (n // 2)


def test_alternating_measure_edge_cases():
    assert alternating_measure(box("Z", "ones"), 0, RawStream(0)) == (
        alternating_measure(box("X", "ones"), 0, RawStream(1)))
    xs, zs = alternating_measure(box("Z", "ones"), 5, RawStream(0))
    assert (len(xs), len(zs)) == (3, 2)


def test_record_is_independent_of_consumption_order():
    r1 = MeasurementRecord(box("Z", "alternating", 0.1), RawStream(6))
    r2 = MeasurementRecord(box("Z", "alternating", 0.1), RawStream(6))
    for _ in range(100):
        r1.measure_next()
    for _ in range(100):
        r2.measure_next()
    assert (r1.x_bits, r1.z_bits) == (r2.x_bits, r2.z_bits)


def test_single_qubit_statistics_match_between_bases():
    # both preparations give the same marginal statistics per measured side
    xs_z, zs_z = alternating_measure(MixingBox("Z", CoinSource(7)), 20_000, RawStream(8))
    xs_x, zs_x = alternating_measure(MixingBox("X", CoinSource(7)), 20_000, RawStream(8))
    for rec in (xs_z, zs_z, xs_x, zs_x):
        assert len(rec) == 10_000
        assert abs(frequency_of_ones(list(rec)) - 0.5) < 3 / (2 * len(rec) ** 0.5)


@pytest.mark.parametrize("basis", ["Z", "X"])
def test_mixture_experiment_identifies_basis(basis):
    res = run_mixture_experiment(box(basis, "zeros"), DistinguishConfig(k=4), RawStream(9))
    assert res.correct and res.verdict.answer == basis
    assert res.qubits_consumed >= 2 * 48 - 1


def test_mixture_trials_success_rate():
    cfg = DistinguishConfig(k=4)
    names = sorted(BUILTIN)
    ok = 0
    n = 40
    for i in range(n):
        basis = "X" if RawStream(i, 0).bit() == 0 else "Z"
        ok += run_mixture_experiment(box(basis, names[i % len(names)]), cfg, RawStream(i, 3)).correct
    b = error_bound(4)
    assert ok / n >= 1 - b - 3 * (b * (1 - b) / n) ** 0.5


@pytest.mark.parametrize("slot", [X, Z])
def test_improper_vs_proper(slot):
    res = improper_vs_proper_experiment(box("Z", "zeros"), CoinSource(10), DistinguishConfig(k=4),
                                        RawStream(11), proper_slot=slot)
    assert res.correct and res.verdict.answer == slot


def test_improper_vs_proper_longer_chooser_fires_later():
    cfg = DistinguishConfig(k=4)
    a = improper_vs_proper_experiment(box("Z", "zeros"), CoinSource(12), cfg, RawStream(13))
    b = improper_vs_proper_experiment(box("Z", "period3_011"), CoinSource(12), cfg, RawStream(13))
    assert a.correct and b.correct and b.verdict.stage > a.verdict.stage


def test_improper_requires_sigma_z_preparation():
    with pytest.raises(ValueError):
        improper_vs_proper_experiment(box("X", "zeros"), CoinSource(0), DistinguishConfig(), RawStream(0))
