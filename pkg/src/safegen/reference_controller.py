"""Reference gap-keeping controller, runnable as a child process.

A proportional-derivative policy on gap error and relative speed, with a
feedforward term from the estimated lead acceleration. Braking saturates
below the comfort limit unless the clearance floor is breached, in which
case the controller declares an emergency; even then the commanded
deceleration stays under the evaluator's acceleration limit.

Run with: python -m safegen.reference_controller
"""

from __future__ import annotations

import sys

# Policy constants. Gains were fixed by sweeping the closed loop over many
# profile seeds (scripts/tune_reference_gains.py) and committed.
KP = 0.45
KD = 0.9
NOMINAL_GAP = 10.0
C_MIN = 2.0
TAU_MIN = 1.5
A_MAX = 3.0            # full-throttle authority of the plant
B_MAX = 8.0            # full-brake authority of the plant
SOFT_DECEL = 4.5       # self-imposed non-emergency braking cap
EMERGENCY_DECEL = 4.8  # strong but still under the 5 m/s^2 evaluator limit


def compute_command(
    clearance: float,
    rel_speed: float,
    ego_speed: float,
    lead_accel: float,
    kp: float = KP,
    kd: float = KD,
) -> tuple[float, float, bool]:
    """Map one tick's inputs to (throttle, brake, emergency).

    Emergency engages exactly when clearance is below the speed-dependent
    floor max(c_min, tau_min * v); outside that, a PD law with lead-accel
    feedforward tracks the nominal gap.
    """
    floor = max(C_MIN, TAU_MIN * ego_speed)
    if clearance < floor:
        return 0.0, EMERGENCY_DECEL / B_MAX, True
    accel = lead_accel + kp * (clearance - NOMINAL_GAP) + kd * rel_speed
    accel = min(max(accel, -SOFT_DECEL), A_MAX)
    if accel >= 0.0:
        return accel / A_MAX, 0.0, False
    return 0.0, -accel / B_MAX, False


def main(argv: list[str] | None = None) -> int:
    # Optional positional overrides (kp kd) exist purely for the gain-sweep
    # script; normal deployments run with the committed constants.
    args = list(argv or ())
    kp = float(args[0]) if len(args) > 0 else KP
    kd = float(args[1]) if len(args) > 1 else KD
    line = sys.stdin.readline()
    if line.strip() != "HELLO v1":
        return 1
    sys.stdout.write("READY reference-acc\n")
    sys.stdout.flush()
    prev_t: float | None = None
    prev_rel_v: float | None = None
    while True:
        line = sys.stdin.readline()
        if not line or line.strip() == "END":
            return 0
        parts = line.split()
        if len(parts) != 6 or parts[0] != "TICK":
            return 1
        t, ego_v, ego_a, gap, rel_v = (float(p) for p in parts[1:])
        if prev_t is not None and t > prev_t:
            # Relative speed plus own realized acceleration recover the
            # lead's acceleration exactly in this lockstep protocol.
            lead_accel = (rel_v - prev_rel_v) / (t - prev_t) + ego_a
        else:
            lead_accel = 0.0
        prev_t, prev_rel_v = t, rel_v
        throttle, brake, emergency = compute_command(
            gap, rel_v, ego_v, lead_accel, kp=kp, kd=kd
        )
        suffix = " EMERGENCY" if emergency else ""
        sys.stdout.write(f"CMD {throttle:.4f} {brake:.4f}{suffix}\n")
        sys.stdout.flush()


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
