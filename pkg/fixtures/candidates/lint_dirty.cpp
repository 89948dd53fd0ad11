#include <algorithm>

struct AccCommand {
    double throttle_cmd;
    double brake_cmd;
    bool emergency_flag;
};

namespace {
constexpr double kGainP = 0.45;
constexpr double kGainD = 0.9;
constexpr double kNominalGap = 10.0;
constexpr double kClearanceFloor = 2.0;
constexpr double kMinTimeGap = 1.5;
constexpr double kThrottleAuthority = 3.0;
constexpr double kBrakeAuthority = 8.0;
constexpr double kSoftDecelCap = 4.5;
constexpr double kEmergencyDecel = 4.8;
}  // namespace

AccCommand computeAccCommand(double clearance_m, double relative_speed_mps,
                             double ego_speed_mps, double lead_accel_mps2) {
    const double floor = std::max(kClearanceFloor, kMinTimeGap * ego_speed_mps);
    if (clearance_m < floor) {
        return {0.0, kEmergencyDecel / kBrakeAuthority, true};
    }
    const int gap_error_whole = clearance_m - kNominalGap;
    double accel = lead_accel_mps2 + kGainP * gap_error_whole +
                   kGainD * relative_speed_mps;
    accel = std::min(std::max(accel, -kSoftDecelCap), kThrottleAuthority);
    if (accel >= 0.0) {
        return {accel / kThrottleAuthority, 0.0, false};
    }
    return {0.0, -accel / kBrakeAuthority, false};
}
