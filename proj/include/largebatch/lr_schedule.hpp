#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace largebatch {

// n workers with b_local examples each; b_total = n * b_local.
class ClusterShape {
public:
    ClusterShape(std::size_t n_workers, std::size_t b_local);

    std::size_t n_workers() const noexcept { return n_workers_; }
    std::size_t b_local() const noexcept { return b_local_; }
    std::size_t b_total() const noexcept { return n_workers_ * b_local_; }

private:
    std::size_t n_workers_;
    std::size_t b_local_;
};

// Linear scaling rule: 0.1 * b_total / 256.
double eta_base(const ClusterShape& shape);

struct LrPhase {
    double start_epoch;  // inclusive
    double end_epoch;    // exclusive
    double multiplier;   // of eta_base
};

// Piecewise-constant schedule over [0, total_epochs). Immutable once built.
class LrSchedule {
public:
    LrSchedule(double eta_base, std::vector<LrPhase> phases);

    double eta_base() const noexcept { return eta_base_; }
    const std::vector<LrPhase>& phases() const noexcept { return phases_; }
    double total_epochs() const noexcept { return phases_.back().end_epoch; }

private:
    double eta_base_;
    std::vector<LrPhase> phases_;
};

// The reference recipes are defined over 90 epochs. For other lengths every
// boundary scales by total_epochs / 90; with iterations_per_epoch > 0 the
// scaled boundaries are rounded to whole iterations.
inline constexpr double kReferenceEpochs = 90.0;

// 0.5 for 40 epochs, 0.075 for 30, 0.01 for 15, 0.001 for the last 5.
LrSchedule slow_start_schedule(double eta_base, double total_epochs = kReferenceEpochs,
                               std::size_t iterations_per_epoch = 0);

// 1.0 for 30 epochs, 0.1 for 30, 0.01 for 20, 0.001 for the last 10.
LrSchedule goyal_schedule(double eta_base, double total_epochs = kReferenceEpochs,
                          std::size_t iterations_per_epoch = 0);

enum class ScheduleKind { slow_start, goyal };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);
LrSchedule make_schedule(ScheduleKind kind, double eta_base, double total_epochs,
                         std::size_t iterations_per_epoch = 0);

// Learning rate at a (fractional) epoch; phases are right-open, so a boundary
// epoch belongs to the later phase. Throws DomainError outside [0, total).
double lr_at(const LrSchedule& schedule, double epoch);

}  // namespace largebatch
