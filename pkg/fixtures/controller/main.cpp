// Wire-protocol wrapper: drives the candidate policy from stdin ticks.
// Protocol: HELLO v1 / READY <name>, then TICK lines answered by CMD lines,
// closed by END. The lead acceleration fed to the policy is recovered from
// consecutive relative-speed readings plus the reported ego acceleration.
#include <cstdio>
#include <iostream>
#include <string>

#include "candidate.cpp"

int main() {
    std::string line;
    if (!std::getline(std::cin, line) || line != "HELLO v1") {
        return 1;
    }
    std::cout << "READY fixture-acc" << std::endl;
    double prev_t = 0.0;
    double prev_rel_v = 0.0;
    bool have_prev = false;
    while (std::getline(std::cin, line)) {
        if (line == "END") {
            return 0;
        }
        double t = 0.0;
        double ego_v = 0.0;
        double ego_a = 0.0;
        double gap = 0.0;
        double rel_v = 0.0;
        if (std::sscanf(line.c_str(), "TICK %lf %lf %lf %lf %lf",
                        &t, &ego_v, &ego_a, &gap, &rel_v) != 5) {
            return 1;
        }
        double lead_accel = 0.0;
        if (have_prev && t > prev_t) {
            lead_accel = (rel_v - prev_rel_v) / (t - prev_t) + ego_a;
        }
        prev_t = t;
        prev_rel_v = rel_v;
        have_prev = true;
        AccCommand cmd = computeAccCommand(gap, rel_v, ego_v, lead_accel);
        std::printf("CMD %.4f %.4f%s\n", cmd.throttle_cmd, cmd.brake_cmd,
                    cmd.emergency_flag ? " EMERGENCY" : "");
        std::fflush(stdout);
    }
    return 0;
}
