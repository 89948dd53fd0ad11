"""Deterministic two-vehicle longitudinal simulation and behaviour evaluation.

The candidate controller runs as a child process driven in lockstep over a
line-oriented stdin/stdout protocol. Ground-truth kinematics stand in for a
full 3D simulator: the monitoring side evaluates clearance, acceleration,
gap-band occupancy, and timing directly against the behaviour spec.
"""

from __future__ import annotations

import csv
import json
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    ConfigError,
    ControllerCrashed,
    DeadlineExceeded,
    ProtocolViolation,
)
from .rng import Xoshiro256StarStar
from .spec_model import BehaviorSpec


@dataclass(frozen=True)
class SimConfig:
    """Plant constants; physical plausibility values, all configurable."""

    dt: float = 0.05
    a_max: float = 3.0          # full-throttle acceleration, m/s^2
    b_max: float = 8.0          # full-brake deceleration, m/s^2
    v_max: float = 30.0
    vehicle_length: float = 4.5
    initial_speed: float = 15.0
    response_timeout_s: float = 10.0


@dataclass(frozen=True)
class VehicleState:
    position: float
    speed: float
    acceleration: float = 0.0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be nonnegative")


def min_clearance(c_min: float, tau_min: float, v: float) -> float:
    """Speed-dependent minimum clearance: the larger of a floor and tau*v."""
    return max(c_min, tau_min * v)


def step_dynamics(
    state: VehicleState, command_accel: float, dt: float, v_max: float = 30.0
) -> VehicleState:
    """Semi-implicit Euler step with speed clamped to [0, v_max].

    The recorded acceleration is the realized (v' - v)/dt, so clamping at
    standstill reports what the vehicle did, not what was commanded.
    """
    v_new = min(max(state.speed + command_accel * dt, 0.0), v_max)
    x_new = state.position + v_new * dt
    return VehicleState(x_new, v_new, (v_new - state.speed) / dt)


# Lead-profile generation constants. Segments steer the lead toward a slow
# cruising regime so a follower holding the nominal gap can also satisfy the
# speed-dependent clearance floor.
_SEGMENT_DURATION = (2.0, 8.0)
_TARGET_SPEED = (1.0, 4.5)
_ACCEL_CLAMP = 4.0


@dataclass(frozen=True)
class LeadProfile:
    """Piecewise-constant acceleration schedule for the lead vehicle."""

    seed: int
    segments: tuple[tuple[float, float], ...]  # (duration s, accel m/s^2)

    @classmethod
    def generate(
        cls,
        seed: int,
        episode_duration: float,
        initial_speed: float = 15.0,
        v_max: float = 30.0,
    ) -> "LeadProfile":
        rng = Xoshiro256StarStar(seed)
        segments = []
        total = 0.0
        v = initial_speed
        while total < episode_duration:
            duration = rng.uniform(*_SEGMENT_DURATION)
            target_v = rng.uniform(*_TARGET_SPEED)
            accel = (target_v - v) / duration
            accel = min(max(accel, -_ACCEL_CLAMP), _ACCEL_CLAMP)
            segments.append((duration, accel))
            v = min(max(v + accel * duration, 0.0), v_max)
            total += duration
        return cls(seed=seed, segments=tuple(segments))

    def accel_at(self, t: float) -> float:
        elapsed = 0.0
        for duration, accel in self.segments:
            if t < elapsed + duration:
                return accel
            elapsed += duration
        return 0.0


@dataclass(frozen=True)
class ScriptedLead:
    """Hand-written lead schedule for targeted scenarios."""

    segments: tuple[tuple[float, float], ...]

    def accel_at(self, t: float) -> float:
        elapsed = 0.0
        for duration, accel in self.segments:
            if t < elapsed + duration:
                return accel
            elapsed += duration
        return 0.0


@dataclass(frozen=True)
class ControllerCommand:
    throttle: float
    brake: float
    emergency: bool = False

    def __post_init__(self):
        if not (0.0 <= self.throttle <= 1.0):
            raise ProtocolViolation(f"throttle out of range: {self.throttle}")
        if not (0.0 <= self.brake <= 1.0):
            raise ProtocolViolation(f"brake out of range: {self.brake}")


@dataclass(frozen=True)
class Sample:
    t: float
    ego_x: float
    ego_v: float
    ego_a: float
    lead_x: float
    lead_v: float
    gap: float
    throttle: float
    brake: float
    emergency: bool
    latency_ms: float


@dataclass(frozen=True)
class Telemetry:
    samples: tuple[Sample, ...]
    dt: float
    seed: int
    controller_name: str

    def collided(self) -> bool:
        return bool(self.samples) and self.samples[-1].gap <= 0.0


class ControllerEndpoint:
    """Child-process controller spoken to over the tick protocol."""

    def __init__(self, command: list[str]):
        self.command = list(command)
        self.proc: subprocess.Popen | None = None
        self.name = ""

    def start(self, response_timeout_s: float) -> str:
        self.proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._send("HELLO v1")
        line = self._recv_line(response_timeout_s)
        parts = line.split(maxsplit=1)
        if len(parts) != 2 or parts[0] != "READY" or not parts[1].strip():
            raise ProtocolViolation(f"bad handshake reply: {line!r}")
        self.name = parts[1].strip()
        return self.name

    def _send(self, line: str):
        if self.proc is None or self.proc.stdin is None:
            raise ControllerCrashed("controller not running")
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ControllerCrashed(f"controller pipe closed: {exc}") from exc

    def _recv_line(self, timeout_s: float) -> str:
        # Lockstep protocol: exactly one reply line per request. readline
        # blocks, so liveness comes from a watchdog poll on the process.
        if self.proc is None or self.proc.stdout is None:
            raise ControllerCrashed("controller not running")
        import select

        ready, _, _ = select.select([self.proc.stdout], [], [], timeout_s)
        if not ready:
            if self.proc.poll() is not None:
                raise ControllerCrashed(
                    f"controller exited with code {self.proc.returncode}"
                )
            raise TimeoutError
        line = self.proc.stdout.readline()
        if line == "":
            raise ControllerCrashed("controller closed stdout")
        return line.rstrip("\n")

    def tick(
        self,
        t: float,
        ego_v: float,
        ego_a: float,
        gap: float,
        rel_v: float,
        timeout_s: float,
        measure_latency: bool,
    ) -> tuple[ControllerCommand, float]:
        self._send(f"TICK {t:.3f} {ego_v:.4f} {ego_a:.4f} {gap:.4f} {rel_v:.4f}")
        started = time.monotonic() if measure_latency else 0.0
        line = self._recv_line(timeout_s)
        latency_ms = (time.monotonic() - started) * 1000.0 if measure_latency else 0.0
        parts = line.split()
        if len(parts) not in (3, 4) or parts[0] != "CMD":
            raise ProtocolViolation(f"malformed command line: {line!r}")
        emergency = False
        if len(parts) == 4:
            if parts[3] != "EMERGENCY":
                raise ProtocolViolation(f"unknown command suffix: {parts[3]!r}")
            emergency = True
        try:
            throttle = float(parts[1])
            brake = float(parts[2])
        except ValueError as exc:
            raise ProtocolViolation(f"non-numeric command field: {line!r}") from exc
        return ControllerCommand(throttle, brake, emergency), latency_ms

    def end(self):
        if self.proc is not None:
            try:
                self._send("END")
            except ControllerCrashed:
                pass

    def close(self):
        if self.proc is None:
            return
        try:
            self.proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()
        finally:
            for stream in (self.proc.stdin, self.proc.stdout):
                if stream is not None:
                    stream.close()


def run_episode(
    controller_cmd: list[str],
    behavior: BehaviorSpec,
    sim: SimConfig = SimConfig(),
    seed: int | None = None,
    lead=None,
) -> Telemetry:
    """Drive one full episode; terminates early only on collision.

    The ego starts at twice the nominal distance behind the lead, both at
    the initial speed. Latency is measured only when a tick deadline is
    configured, so default-mode telemetry is bit-reproducible.
    """
    episode_seed = behavior.seed if seed is None else seed
    if lead is None:
        lead = LeadProfile.generate(
            episode_seed, behavior.episode_duration, sim.initial_speed, sim.v_max
        )
    measure_latency = behavior.tick_deadline_ms is not None

    ego = VehicleState(0.0, sim.initial_speed)
    lead_state = VehicleState(
        sim.vehicle_length + 2.0 * behavior.nominal_distance, sim.initial_speed
    )
    endpoint = ControllerEndpoint(controller_cmd)
    samples: list[Sample] = []
    try:
        name = endpoint.start(sim.response_timeout_s)
        n_steps = round(behavior.episode_duration / sim.dt)
        for k in range(n_steps):
            t = k * sim.dt
            gap = lead_state.position - ego.position - sim.vehicle_length
            rel_v = lead_state.speed - ego.speed
            try:
                command, latency_ms = endpoint.tick(
                    t, ego.speed, ego.acceleration, gap, rel_v,
                    sim.response_timeout_s, measure_latency,
                )
            except TimeoutError:
                if behavior.tick_deadline_ms is not None:
                    raise DeadlineExceeded(
                        f"no reply within {sim.response_timeout_s:.1f}s at t={t:.2f}"
                    ) from None
                raise ControllerCrashed(
                    f"controller stopped responding at t={t:.2f}"
                ) from None
            net = command.throttle * sim.a_max - command.brake * sim.b_max
            if not command.emergency:
                # Non-emergency braking authority stops at the comfort limit;
                # the emergency flag unlocks the full brake.
                net = max(net, -behavior.a_limit)
            ego = step_dynamics(ego, net, sim.dt, sim.v_max)
            lead_state = step_dynamics(
                lead_state, lead.accel_at(t), sim.dt, sim.v_max
            )
            new_gap = lead_state.position - ego.position - sim.vehicle_length
            samples.append(
                Sample(
                    t=(k + 1) * sim.dt,
                    ego_x=ego.position,
                    ego_v=ego.speed,
                    ego_a=ego.acceleration,
                    lead_x=lead_state.position,
                    lead_v=lead_state.speed,
                    gap=new_gap,
                    throttle=command.throttle,
                    brake=command.brake,
                    emergency=command.emergency,
                    latency_ms=latency_ms,
                )
            )
            if new_gap <= 0.0:
                break
        endpoint.end()
    finally:
        endpoint.close()
    return Telemetry(
        samples=tuple(samples),
        dt=sim.dt,
        seed=episode_seed,
        controller_name=name,
    )


@dataclass(frozen=True)
class EvaluationReport:
    collision_free: bool
    clearance_ok: bool
    accel_ok: bool
    band_occupancy: float
    band_ok: bool
    timing_ok: bool
    worst_clearance_margin: float
    max_abs_accel: float
    max_latency_ms: float
    offending: dict[str, tuple[int, ...]] = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return (
            self.collision_free
            and self.clearance_ok
            and self.accel_ok
            and self.band_ok
            and self.timing_ok
        )

    def failed_criteria(self) -> list[str]:
        names = []
        if not self.collision_free:
            names.append("collision")
        if not self.clearance_ok:
            names.append("clearance")
        if not self.accel_ok:
            names.append("acceleration")
        if not self.band_ok:
            names.append("band_occupancy")
        if not self.timing_ok:
            names.append("timing")
        return names

    def to_dict(self) -> dict:
        return {
            "collision_free": self.collision_free,
            "clearance_ok": self.clearance_ok,
            "accel_ok": self.accel_ok,
            "band_occupancy": self.band_occupancy,
            "band_ok": self.band_ok,
            "timing_ok": self.timing_ok,
            "worst_clearance_margin": self.worst_clearance_margin,
            "max_abs_accel": self.max_abs_accel,
            "max_latency_ms": self.max_latency_ms,
            "overall": self.overall,
            "offending": {k: list(v) for k, v in self.offending.items()},
        }


_OFFENDER_CAP = 20

# Absolute acceleration no sample may exceed, emergency or not. Matches the
# full-brake authority; realized dynamics cannot exceed it, so a breach in
# persisted telemetry means the data did not come from this simulator.
HARD_ACCEL_CEILING = 8.0


def evaluate_data(telemetry: Telemetry, behavior: BehaviorSpec) -> EvaluationReport:
    """Pure evaluation of one episode's telemetry against the behaviour spec.

    Clearance and band occupancy apply only after settle_time (the approach
    transient is excluded by design). The acceleration bound exempts samples
    the controller flagged as emergency, but the full-brake ceiling applies
    to every sample.
    """
    offending: dict[str, list[int]] = {}

    def offend(criterion: str, index: int):
        bucket = offending.setdefault(criterion, [])
        if len(bucket) < _OFFENDER_CAP:
            bucket.append(index)

    collision_free = True
    clearance_ok = True
    accel_ok = True
    timing_ok = True
    worst_margin = float("inf")
    max_abs_accel = 0.0
    max_latency = 0.0
    in_band = 0
    post_settle = 0

    for i, s in enumerate(telemetry.samples):
        if s.gap <= 0.0:
            collision_free = False
            offend("collision", i)
        abs_a = abs(s.ego_a)
        max_abs_accel = max(max_abs_accel, abs_a)
        if not s.emergency and abs_a >= behavior.a_limit:
            accel_ok = False
            offend("acceleration", i)
        if abs_a > HARD_ACCEL_CEILING:
            accel_ok = False
            offend("acceleration", i)
        max_latency = max(max_latency, s.latency_ms)
        if behavior.tick_deadline_ms is not None and s.latency_ms > behavior.tick_deadline_ms:
            timing_ok = False
            offend("timing", i)
        if s.t > behavior.settle_time:
            post_settle += 1
            bound = min_clearance(behavior.c_min, behavior.tau_min, s.ego_v)
            margin = s.gap - bound
            worst_margin = min(worst_margin, margin)
            if margin < 0.0:
                clearance_ok = False
                offend("clearance", i)
            if behavior.band_low <= s.gap <= behavior.band_high:
                in_band += 1

    occupancy = in_band / post_settle if post_settle else 0.0
    band_ok = occupancy >= behavior.band_occupancy_min
    if not band_ok and "band_occupancy" not in offending:
        offending["band_occupancy"] = []
    return EvaluationReport(
        collision_free=collision_free,
        clearance_ok=clearance_ok,
        accel_ok=accel_ok,
        band_occupancy=occupancy,
        band_ok=band_ok,
        timing_ok=timing_ok,
        worst_clearance_margin=worst_margin if post_settle else float("inf"),
        max_abs_accel=max_abs_accel,
        max_latency_ms=max_latency,
        offending={k: tuple(v) for k, v in offending.items()},
    )


def feedback_for_reports(
    reports: list[tuple[int, EvaluationReport]], behavior: BehaviorSpec
) -> str:
    """Sanitized integration feedback: criterion names and worst margins only.

    Lead-profile internals never appear, so refinement cannot overfit to a
    particular randomized scenario.
    """
    lines = []
    for seed, report in reports:
        if report.overall:
            continue
        details = []
        for criterion in report.failed_criteria():
            if criterion == "collision":
                details.append("collision (gap reached zero)")
            elif criterion == "clearance":
                details.append(
                    f"clearance violated by {-report.worst_clearance_margin:.2f} m "
                    f"at worst"
                )
            elif criterion == "acceleration":
                details.append(
                    f"|accel| reached {report.max_abs_accel:.2f} m/s^2, "
                    f"limit {behavior.a_limit:.2f} outside emergencies"
                )
            elif criterion == "band_occupancy":
                details.append(
                    f"gap in [{behavior.band_low:.0f}, {behavior.band_high:.0f}] m "
                    f"only {report.band_occupancy:.0%} of the time, "
                    f"need {behavior.band_occupancy_min:.0%}"
                )
            elif criterion == "timing":
                details.append(
                    f"worst tick latency {report.max_latency_ms:.1f} ms over deadline"
                )
        lines.append(f"episode seed {seed}: " + "; ".join(details))
    return "\n".join(lines)


def run_integration_monitoring(
    controller_cmd: list[str],
    behavior: BehaviorSpec,
    n_seeds: int = 3,
    sim: SimConfig = SimConfig(),
    telemetry_dir: str | Path | None = None,
) -> tuple[bool, list[tuple[int, EvaluationReport]], str]:
    """Run n_seeds episodes on consecutive seeds; all must pass."""
    if n_seeds < 1:
        raise ConfigError("n_seeds must be >= 1")
    reports: list[tuple[int, EvaluationReport]] = []
    for i in range(n_seeds):
        seed = behavior.seed + i
        telemetry = run_episode(controller_cmd, behavior, sim, seed=seed)
        report = evaluate_data(telemetry, behavior)
        reports.append((seed, report))
        if telemetry_dir is not None:
            out = Path(telemetry_dir)
            out.mkdir(parents=True, exist_ok=True)
            write_telemetry_csv(telemetry, out / f"episode_seed{seed}.csv")
            (out / f"episode_seed{seed}.report.json").write_text(
                json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
    overall = all(report.overall for _, report in reports)
    return overall, reports, feedback_for_reports(reports, behavior)


CSV_HEADER = (
    "t,ego_x,ego_v,ego_a,lead_x,lead_v,gap,throttle,brake,emergency,latency_ms"
)


def write_telemetry_csv(telemetry: Telemetry, path: str | Path):
    """Full-precision persistence; repr round-trips floats exactly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for s in telemetry.samples:
            fh.write(
                f"{s.t!r},{s.ego_x!r},{s.ego_v!r},{s.ego_a!r},"
                f"{s.lead_x!r},{s.lead_v!r},{s.gap!r},"
                f"{s.throttle!r},{s.brake!r},{int(s.emergency)},{s.latency_ms!r}\n"
            )


def read_telemetry_csv(path: str | Path) -> Telemetry:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != CSV_HEADER:
            raise ValueError(f"unexpected telemetry header in {path}")
        samples = []
        for row in reader:
            samples.append(
                Sample(
                    t=float(row[0]),
                    ego_x=float(row[1]),
                    ego_v=float(row[2]),
                    ego_a=float(row[3]),
                    lead_x=float(row[4]),
                    lead_v=float(row[5]),
                    gap=float(row[6]),
                    throttle=float(row[7]),
                    brake=float(row[8]),
                    emergency=bool(int(row[9])),
                    latency_ms=float(row[10]),
                )
            )
    dt = samples[1].t - samples[0].t if len(samples) > 1 else 0.05
    return Telemetry(
        samples=tuple(samples), dt=dt, seed=-1, controller_name="unknown"
    )
