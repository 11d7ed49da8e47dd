import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualwpt.harvester import (
    BELOW_SENSITIVITY,
    CHAIN_2400,
    CHAIN_868,
    CLIPPED,
    NO_INPUT,
    OK,
    EfficiencyChain,
    EfficiencyCurve,
    HarvesterStage,
    StorageCapacitor,
    charge_time,
    combine_stages,
    harvested_power,
    integrate_charge,
    max_coldstart_distance,
    storage_energy,
    time_to_voltage,
)
from dualwpt.linkbudget import Antenna, Beacon, PropagationModel
from dualwpt.rfquant import Frequency, PowerQuantity

# Values frozen from a 30-digit evaluation of the closed forms.
P_RX_27_5M = 4.09776297506911e-5  # W, 27 dBm ERP, 2.15 dBi tag, 5 m, 865.7 MHz
P_HARV_27_5M = 8.50246581251272e-6  # W into the capacitor
T_UPDATE_27_5M = 2.289923938458749  # s, 22 uF, 2.8 -> 3.1 V
T_INITIAL_27_5M = 12.432863869259083  # s, 22 uF, 0 -> 3.1 V
T_INITIAL_23_27_5M = 6.843896968614001  # s, 22 uF, 0 -> 2.3 V
COLDSTART_27_M = 7.821061420517671

CAP22 = StorageCapacitor(22e-6)
STAGE = HarvesterStage(CHAIN_868)


def test_table_multiplier_868():
    assert CHAIN_868.charging_multiplier(-10.0) == pytest.approx(0.2075, abs=0.0005)


def test_table_multiplier_2400():
    assert CHAIN_2400.charging_multiplier(-10.0) == pytest.approx(0.0828, abs=0.0005)


@pytest.mark.parametrize(
    "cap, v_from, v_to, joules",
    [
        (StorageCapacitor(22e-6), 2.8, 3.1, 19.47e-6),
        (StorageCapacitor(39.7e-6), 2.8, 3.1, 35.1345e-6),
        (StorageCapacitor(22e-6), 2.8, 2.8, 0.0),
    ],
)
def test_storage_energy(cap, v_from, v_to, joules):
    assert storage_energy(cap, v_from, v_to) == pytest.approx(joules, rel=1e-12, abs=1e-18)


def test_storage_energy_default_window_rounds_to_19_5():
    assert round(storage_energy(CAP22, 2.8, 3.1) * 1e6, 1) == 19.5


def test_storage_energy_rejects_inverted_window():
    with pytest.raises(ValueError):
        storage_energy(CAP22, 3.1, 2.8)


def test_harvested_power_at_5m():
    result = harvested_power(PowerQuantity(P_RX_27_5M), STAGE)
    assert result.status == OK
    assert result.power == pytest.approx(P_HARV_27_5M, rel=1e-12)
    assert result.power == pytest.approx(8.49e-6, rel=2e-3)


def test_harvested_power_below_sensitivity():
    p_rx = PowerQuantity.from_dbm(-19.0).scaled(0.99 / CHAIN_868.eta_d)
    result = harvested_power(p_rx, STAGE)
    assert result == (0.0, pytest.approx(p_rx.watts * CHAIN_868.eta_d), BELOW_SENSITIVITY)


def test_harvested_power_threshold_is_after_antenna_efficiency():
    # -18.5 dBm at the terminals is -19.74 dBm at the harvester input
    assert harvested_power(PowerQuantity.from_dbm(-18.5), STAGE).status == BELOW_SENSITIVITY
    assert harvested_power(PowerQuantity.from_dbm(-17.5), STAGE).status == OK


def test_harvested_power_zero_input():
    assert harvested_power(PowerQuantity(0.0), STAGE) == (0.0, 0.0, NO_INPUT)


def test_harvested_power_clips_above_window():
    big = harvested_power(PowerQuantity.from_dbm(20.0), STAGE)
    edge = harvested_power(PowerQuantity(10 ** ((10.0 - 30) / 10) / CHAIN_868.eta_d), STAGE)
    assert big.clipped
    assert big.power == pytest.approx(edge.power, rel=1e-12)


def test_curve_interpolates_and_holds_ends():
    curve = EfficiencyCurve((-20.0, 0.0, 10.0), (0.2, 0.4, 0.5))
    assert curve(-10.0) == pytest.approx(0.3)
    assert curve(5.0) == pytest.approx(0.45)
    assert curve(-40.0) == 0.2
    assert curve(30.0) == 0.5


def test_curve_validation():
    with pytest.raises(ValueError):
        EfficiencyCurve((0.0, -1.0), (0.2, 0.3))
    with pytest.raises(ValueError):
        EfficiencyCurve((0.0,), (1.2,))


def test_stage_rejects_curve_that_misses_window():
    chain = EfficiencyChain(0.75, EfficiencyCurve((-10.0, 0.0), (0.3, 0.4)), 0.738, 0.74, 0.99)
    with pytest.raises(ValueError):
        HarvesterStage(chain)


def test_curve_from_csv(tmp_path):
    path = tmp_path / "eta.csv"
    path.write_text("input_dbm,eta_rf\n-20,0.2\n0,0.4\n10,0.45\n")
    curve = EfficiencyCurve.from_csv(path)
    assert curve.input_dbm == (-20.0, 0.0, 10.0)
    assert curve(-10.0) == pytest.approx(0.3)


@pytest.mark.parametrize(
    "text",
    [
        "dbm,eta\n0,0.3\n",
        "input_dbm,eta_rf\n0,0.3\n-5,0.2\n",
        "input_dbm,eta_rf\n0,0.3,1\n",
    ],
)
def test_curve_from_csv_rejects_bad_files(tmp_path, text):
    path = tmp_path / "eta.csv"
    path.write_text(text)
    with pytest.raises(ValueError):
        EfficiencyCurve.from_csv(path)


def test_charge_time_update_window():
    t = charge_time(CAP22, *CAP22.window("update"), P_HARV_27_5M)
    assert t == pytest.approx(T_UPDATE_27_5M, rel=1e-12)
    assert t == pytest.approx(2.30, abs=0.02)


def test_charge_time_initial_window():
    t = charge_time(CAP22, *CAP22.window("initial"), P_HARV_27_5M)
    assert t == pytest.approx(T_INITIAL_27_5M, rel=1e-12)
    assert t == pytest.approx(12.45, abs=0.05)


def test_initial_window_alternative_target():
    cap = StorageCapacitor(22e-6, v_initial_target=2.3)
    assert cap.window("initial") == (0.0, 2.3)
    assert charge_time(cap, *cap.window("initial"), P_HARV_27_5M) == pytest.approx(T_INITIAL_23_27_5M, rel=1e-12)


def test_charge_time_zero_power_never_charges():
    assert charge_time(CAP22, 2.8, 3.1, 0.0) == math.inf


def test_charge_time_halves_at_double_power():
    assert charge_time(CAP22, 0.0, 3.1, 2e-5) == pytest.approx(charge_time(CAP22, 0.0, 3.1, 1e-5) / 2, rel=1e-15)


def test_capacitor_invariants():
    with pytest.raises(ValueError):
        StorageCapacitor(22e-6, v_chrdy=2.8, v_ovdis=3.1)
    with pytest.raises(ValueError):
        StorageCapacitor(22e-6, v_now=-0.1)
    with pytest.raises(ValueError):
        StorageCapacitor(0.0)
    StorageCapacitor(22e-6, v_chrdy=2.8, v_ovdis=2.8)  # degenerate window is representable


def test_integrate_inverts_charge_time():
    cap = StorageCapacitor(22e-6, v_now=2.8)
    p = 8.5e-6
    out = integrate_charge(cap, [(1.0, p)], charge_time(cap, 2.8, 3.1, p))
    assert out.capacitor.v_now == pytest.approx(3.1, abs=1e-9)


def test_integrate_zero_power_keeps_voltage():
    cap = StorageCapacitor(22e-6, v_now=1.234)
    out = integrate_charge(cap, [(0.5, 0.0)], 10.0)
    assert out.capacitor.v_now == 1.234
    assert out.energy_in == 0.0


def test_integrate_clamps_at_ceiling():
    cap = StorageCapacitor(22e-6, v_now=3.0)
    out = integrate_charge(cap, [(1.0, 1e-3)], 1.0)
    assert out.capacitor.v_now == pytest.approx(3.1, rel=1e-12)
    assert out.energy_stored < out.energy_in


def test_integrate_custom_ceiling():
    cap = StorageCapacitor(22e-6, v_now=3.0, v_max=3.3)
    assert integrate_charge(cap, [(1.0, 1e-3)], 1.0).capacitor.v_now == pytest.approx(3.3, rel=1e-12)


def test_duty_cycle_stretches_time_to_target():
    p = 8.5e-6
    cap = StorageCapacitor(22e-6, v_now=2.8)
    cw = time_to_voltage(cap, [(1.0, p)], 3.1)
    avg_rate = p * (1.0 / 1.1)
    assert cw == pytest.approx(charge_time(cap, 2.8, 3.1, p), rel=1e-12)
    gated = time_to_voltage(cap, [(1.0, p), (0.1, 0.0)], 3.1)
    # exact stretch holds on average; one OFF period is the quantization slack
    assert abs(gated - cw * 1.1) <= 0.1 + 1e-12
    long_cap = StorageCapacitor(1e-2)
    energy = long_cap.energy_at(3.1)
    assert time_to_voltage(long_cap, [(1.0, p), (0.1, 0.0)], 3.1) == pytest.approx(energy / avg_rate, abs=0.1)


def test_time_to_voltage_without_power():
    assert time_to_voltage(CAP22, [(1.0, 0.0)], 3.1) == math.inf


def test_combine_equal_stages_doubles():
    single = combine_stages([STAGE], [PowerQuantity(P_RX_27_5M)])
    double = combine_stages([STAGE, STAGE], [PowerQuantity(P_RX_27_5M)] * 2)
    assert double == 2 * single


def test_combine_inactive_stage_contributes_nothing():
    active = PowerQuantity(P_RX_27_5M)
    dead = PowerQuantity.from_dbm(-30.0)
    assert combine_stages([STAGE, STAGE], [dead, active]) == combine_stages([STAGE], [active])


def test_combine_dual_band_channels():
    omni = HarvesterStage(CHAIN_868, tuned_channels=frozenset({1, 2}))
    boost = HarvesterStage(CHAIN_868, tuned_channels=frozenset({3, 4}))
    total = combine_stages([omni, boost], [PowerQuantity(P_RX_27_5M)] * 2)
    assert total == pytest.approx(1.698e-5, rel=2e-3)
    assert omni.accepts(1) and not omni.accepts(3)
    assert STAGE.accepts(4)


def test_combine_length_mismatch():
    with pytest.raises(ValueError):
        combine_stages([STAGE], [])


def beacon(erp_dbm):
    return Beacon("b", (0, 0, 0), Antenna(), PowerQuantity.from_dbm(erp_dbm), Frequency.from_mhz(865.7))


def test_coldstart_distance():
    d = max_coldstart_distance(beacon(27.0), Antenna.dipole(), STAGE)
    assert d == pytest.approx(COLDSTART_27_M, rel=1e-12)
    assert d == pytest.approx(7.8, abs=0.05)


def test_coldstart_distance_doubles_with_6_db():
    d = max_coldstart_distance(beacon(27.0), Antenna.dipole(), STAGE)
    d6 = max_coldstart_distance(beacon(27.0 + 20 * math.log10(2)), Antenna.dipole(), STAGE)
    assert d6 / d == pytest.approx(2.0, rel=1e-12)


def test_coldstart_distance_is_the_sensitivity_edge():
    from dualwpt.linkbudget import received_power
    from dualwpt.rfquant import Distance

    d = max_coldstart_distance(beacon(27.0), Antenna.dipole(), STAGE)
    inside = received_power(beacon(27.0), Antenna.dipole(), Distance(d * 0.999))
    outside = received_power(beacon(27.0), Antenna.dipole(), Distance(d * 1.001))
    assert harvested_power(inside, STAGE).status == OK
    assert harvested_power(outside, STAGE).status == BELOW_SENSITIVITY


def test_coldstart_unbounded_threshold():
    stage = HarvesterStage(CHAIN_868, sensitivity_min=PowerQuantity(0.0))
    assert max_coldstart_distance(beacon(27.0), Antenna.dipole(), stage) == math.inf


def test_coldstart_general_exponent():
    model = PropagationModel(path_loss_exponent=3.0)
    d = max_coldstart_distance(beacon(27.0), Antenna.dipole(), STAGE, model)
    # at exponent 3 the range shrinks from 7.82 m to 7.82 ** (2/3) m about the 1 m anchor
    assert d == pytest.approx(COLDSTART_27_M ** (2 / 3), rel=1e-9)


voltages = st.floats(min_value=0.0, max_value=5.0)


@given(voltages, voltages, voltages, st.floats(min_value=1e-9, max_value=1e-2))
def test_charge_time_additive(a, b, c, p):
    v1, v2, v3 = sorted((a, b, c))
    split = charge_time(CAP22, v1, v2, p) + charge_time(CAP22, v2, v3, p)
    whole = charge_time(CAP22, v1, v3, p)
    assert split == pytest.approx(whole, rel=1e-9, abs=1e-300)


@given(
    st.lists(st.tuples(st.floats(0.01, 2.0), st.floats(0.0, 1e-4)), min_size=1, max_size=6),
    st.floats(0.0, 20.0),
    st.floats(0.0, 3.0),
)
def test_integrate_conserves_energy(profile, duration, v0):
    cap = StorageCapacitor(22e-6, v_now=v0, v_max=1e3)
    out = integrate_charge(cap, profile, duration)
    gained = 0.5 * cap.capacitance * (out.capacitor.v_now ** 2 - v0 ** 2)
    assert gained == pytest.approx(out.energy_in, rel=1e-9, abs=1e-18)
    assert out.energy_in == pytest.approx(out.energy_stored, rel=1e-12, abs=1e-18)
    assert math.fsum(e.duration for e in out.ledger) == pytest.approx(duration, abs=1e-9)


@given(st.floats(-40.0, 20.0), st.floats(0.0, 5.0))
def test_harvested_power_monotone(p_dbm, step_db):
    curve = EfficiencyCurve((-20.0, -10.0, 0.0, 10.0), (0.1, 0.3, 0.45, 0.5))
    stage = HarvesterStage(EfficiencyChain(0.75, curve, 0.738, 0.74, 0.99))
    low = harvested_power(PowerQuantity.from_dbm(p_dbm), stage).power
    high = harvested_power(PowerQuantity.from_dbm(p_dbm + step_db), stage).power
    assert high >= low


@given(st.lists(st.floats(-25.0, 5.0), min_size=1, max_size=4), st.randoms())
def test_combine_is_order_independent(levels, rnd):
    pairs = [(STAGE, PowerQuantity.from_dbm(p)) for p in levels]
    total = combine_stages(*zip(*pairs))
    rnd.shuffle(pairs)
    assert combine_stages(*zip(*pairs)) == total
    assert total == pytest.approx(math.fsum(harvested_power(p, s).power for s, p in pairs), rel=1e-15)
