import pytest
from hypothesis import given
from hypothesis import strategies as st

from safegen.reference_controller import (
    A_MAX,
    B_MAX,
    EMERGENCY_DECEL,
    SOFT_DECEL,
    compute_command,
)


class TestEmergencyRule:
    def test_engages_strictly_below_floor(self):
        # floor at v=10 is max(2, 15) = 15
        throttle, brake, emergency = compute_command(14.99, 0.0, 10.0, 0.0)
        assert emergency
        assert throttle == 0.0
        assert brake * B_MAX == pytest.approx(EMERGENCY_DECEL)

    def test_disengaged_at_floor(self):
        _, _, emergency = compute_command(15.0, 0.0, 10.0, 0.0)
        assert not emergency

    def test_floor_clamped_at_low_speed(self):
        # floor at v=0.5 is max(2, 0.75) = 2
        assert compute_command(1.9, 0.0, 0.5, 0.0)[2]
        assert not compute_command(2.1, 0.0, 0.5, 0.0)[2]


class TestPdPolicy:
    def test_equilibrium_coasts(self):
        throttle, brake, emergency = compute_command(10.0, 0.0, 4.0, 0.0)
        assert (throttle, brake, emergency) == (0.0, 0.0, False)

    def test_wide_gap_accelerates(self):
        throttle, brake, _ = compute_command(30.0, 0.0, 4.0, 0.0)
        assert throttle > 0.0 and brake == 0.0

    def test_closing_brakes(self):
        throttle, brake, _ = compute_command(10.0, -3.0, 4.0, 0.0)
        assert throttle == 0.0 and brake > 0.0

    def test_feedforward_follows_lead(self):
        coast = compute_command(10.0, 0.0, 4.0, 0.0)
        lead_braking = compute_command(10.0, 0.0, 4.0, -2.0)
        assert lead_braking[1] > coast[1]

    def test_soft_braking_capped(self):
        _, brake, emergency = compute_command(40.0, -30.0, 0.0, -8.0)
        assert not emergency
        assert brake * B_MAX == pytest.approx(SOFT_DECEL)
        assert brake * B_MAX < 5.0

    def test_throttle_capped(self):
        throttle, _, _ = compute_command(500.0, 30.0, 4.0, 8.0)
        assert throttle == 1.0


@given(
    clearance=st.floats(min_value=0.0, max_value=500.0, allow_nan=False),
    rel_speed=st.floats(min_value=-30.0, max_value=30.0, allow_nan=False),
    ego_speed=st.floats(min_value=0.0, max_value=30.0, allow_nan=False),
    lead_accel=st.floats(min_value=-8.0, max_value=8.0, allow_nan=False),
)
def test_command_envelope(clearance, rel_speed, ego_speed, lead_accel):
    throttle, brake, emergency = compute_command(
        clearance, rel_speed, ego_speed, lead_accel
    )
    assert 0.0 <= throttle <= 1.0
    assert 0.0 <= brake <= 1.0
    assert throttle == 0.0 or brake == 0.0
    if emergency:
        assert throttle == 0.0
    else:
        # commanded deceleration honors the strict non-emergency limit
        assert brake * B_MAX < 5.0
    assert throttle * A_MAX <= A_MAX
