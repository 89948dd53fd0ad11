#include <algorithm>

struct AccCommand {
    double throttle_cmd;
    double brake_cmd;
    bool emergency_flag;
};

AccCommand computeAccCommand(double clearance_m, double relative_speed_mps,
                             double ego_speed_mps, double lead_accel_mps2) {
    const double floor = std::max(2.0, 1.5 * ego_speed_mps);
    if (clearance_m < floor) {
        return {0.0, 0.6, true};
    }
    double accel = lead_accel_mps2 + 0.45 * (clearance_m - nominalGap) +
                   0.9 * relative_speed_mps;
    accel = std::min(std::max(accel, -4.5), 3.0);
    if (accel >= 0.0) {
        return {accel / 3.0, 0.0, false};
    }
    return {0.0, -accel / 8.0, false};
}
