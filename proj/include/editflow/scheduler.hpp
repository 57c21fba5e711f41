#pragma once

// Interpolation schedulers. kappa runs monotonically from kappa(0)=0 to
// kappa(1)=1; weight(t) = kappa_dot(t) / (1 - kappa(t)) diverges at t=1, so
// callers sample t strictly below 1 whenever they need weights.

#include <cmath>
#include <stdexcept>
#include <string>

namespace editflow {

enum class SchedulerKind { Linear, Cubic };

struct Scheduler {
    SchedulerKind kind = SchedulerKind::Cubic;

    double kappa(double t) const {
        check_unit(t, "kappa");
        return kind == SchedulerKind::Linear ? t : t * t * t;
    }

    double kappa_dot(double t) const {
        check_unit(t, "kappa_dot");
        return kind == SchedulerKind::Linear ? 1.0 : 3.0 * t * t;
    }

    double kappa_inv(double u) const {
        check_unit(u, "kappa_inv");
        return kind == SchedulerKind::Linear ? u : std::cbrt(u);
    }

    double weight(double t) const { return kappa_dot(t) / (1.0 - kappa(t)); }

private:
    static void check_unit(double v, const char* where) {
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument(std::string(where) + ": argument outside [0,1]");
    }
};

inline Scheduler linear_scheduler() { return Scheduler{SchedulerKind::Linear}; }
inline Scheduler cubic_scheduler() { return Scheduler{SchedulerKind::Cubic}; }

inline const char* to_string(SchedulerKind k) {
    return k == SchedulerKind::Linear ? "linear" : "cubic";
}

inline SchedulerKind scheduler_kind_from_string(const std::string& s) {
    if (s == "linear") return SchedulerKind::Linear;
    if (s == "cubic") return SchedulerKind::Cubic;
    throw std::invalid_argument("unknown scheduler kind: " + s);
}

}  // namespace editflow
