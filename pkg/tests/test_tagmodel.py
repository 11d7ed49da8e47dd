import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualwpt.harvester import HarvesterStage, StorageCapacitor, integrate_charge
from dualwpt.tagmodel import (
    NotChargedError,
    Tag,
    TagEnergyProfile,
    fix_energy,
    perform_fix,
    storage_feasible,
)

CAP = StorageCapacitor(22e-6)


@pytest.mark.parametrize(
    "profile, joules",
    [
        (TagEnergyProfile(), 12.6e-6),
        (TagEnergyProfile(rangings_per_fix=1), 3.15e-6),
        (TagEnergyProfile(e_tag=5e-6), 20e-6),
    ],
)
def test_fix_energy(profile, joules):
    assert fix_energy(profile) == pytest.approx(joules, rel=1e-12)


def test_profile_decomposition_must_agree():
    TagEnergyProfile(e_tag=3.15e-6, active_power=3.0e-3, rx_window=1e-3, turnon_energy=0.16e-6)
    with pytest.raises(ValueError):
        TagEnergyProfile(e_tag=3.15e-6, active_power=2.0e-3, rx_window=1e-3)


def test_profile_derives_e_tag_from_decomposition():
    profile = TagEnergyProfile(e_tag=None, active_power=3.0e-3, rx_window=1e-3, turnon_energy=0.15e-6)
    assert fix_energy(profile) == pytest.approx(12.6e-6, rel=1e-12)


def test_profile_needs_some_energy_figure():
    with pytest.raises(ValueError):
        TagEnergyProfile(e_tag=None)
    with pytest.raises(ValueError):
        TagEnergyProfile(rangings_per_fix=0)


def test_feasible_with_ldo_losses():
    verdict = storage_feasible(CAP, TagEnergyProfile(), 0.7407)
    assert verdict.feasible
    assert verdict.margin == pytest.approx(1.821429e-6, rel=1e-6)


def test_feasible_lossless_matches_printed_inequality():
    verdict = storage_feasible(CAP, TagEnergyProfile(), 1.0)
    assert verdict.feasible
    assert verdict.margin == pytest.approx(6.87e-6, rel=1e-9)


def test_empty_window_is_infeasible():
    cap = StorageCapacitor(22e-6, v_chrdy=2.8, v_ovdis=2.8)
    verdict = storage_feasible(cap, TagEnergyProfile(), 0.7407)
    assert not verdict.feasible
    assert verdict.margin == pytest.approx(-12.6e-6, rel=1e-12)


def test_perform_fix_lands_on_ovdis():
    cap, record = perform_fix(StorageCapacitor(22e-6, v_now=3.10), now=4.2)
    assert cap.v_now == 2.80
    assert record.time == 4.2
    assert record.energy == pytest.approx(19.47e-6, rel=1e-12)


def test_perform_fix_requires_charge():
    with pytest.raises(NotChargedError):
        perform_fix(StorageCapacitor(22e-6, v_now=3.05), now=0.0)


def test_second_fix_without_recharge_fails():
    cap, _ = perform_fix(StorageCapacitor(22e-6, v_now=3.10), now=0.0)
    with pytest.raises(NotChargedError):
        perform_fix(cap, now=0.0)


def test_tag_stage_count():
    with pytest.raises(ValueError):
        Tag("t", (0, 0, 0), stages=())
    with pytest.raises(ValueError):
        Tag("t", (0, 0, 0), stages=(HarvesterStage(),) * 3)


@given(st.floats(0.0, 2.9), st.floats(0.0, 0.5), st.floats(0.0, 0.5), st.floats(0.5, 1.0))
def test_feasibility_monotone_in_window(v_ovdis, widen_low, widen_high, eta_ldo):
    narrow = StorageCapacitor(22e-6, v_chrdy=v_ovdis + 0.1, v_ovdis=v_ovdis)
    wide = StorageCapacitor(22e-6, v_chrdy=v_ovdis + 0.1 + widen_high, v_ovdis=max(v_ovdis - widen_low, 0.0))
    if storage_feasible(narrow, TagEnergyProfile(), eta_ldo).feasible:
        assert storage_feasible(wide, TagEnergyProfile(), eta_ldo).feasible


@given(st.lists(st.floats(1e-7, 1e-3), min_size=1, max_size=20))
def test_charge_fix_cycles_stay_in_window(charges):
    cap = StorageCapacitor(22e-6, v_now=2.8)
    for energy in charges:
        cap = integrate_charge(cap, [(1.0, energy)], 1.0).capacitor
        assert cap.v_ovdis <= cap.v_now <= cap.ceiling * (1 + 1e-12)
        if cap.v_now >= cap.v_chrdy * (1 - 1e-12):
            cap, _ = perform_fix(cap, 0.0)
            assert cap.v_now == cap.v_ovdis
