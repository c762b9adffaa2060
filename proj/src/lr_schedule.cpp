#include "largebatch/lr_schedule.hpp"

#include <array>
#include <cmath>
#include <string>

#include "largebatch/error.hpp"

namespace largebatch {

ClusterShape::ClusterShape(std::size_t n_workers, std::size_t b_local) : n_workers_(n_workers), b_local_(b_local) {
    if (n_workers == 0) throw DomainError("ClusterShape: n_workers must be positive");
    if (b_local == 0) throw DomainError("ClusterShape: b_local must be positive");
}

double eta_base(const ClusterShape& shape) { return 0.1 * (static_cast<double>(shape.b_total()) / 256.0); }

LrSchedule::LrSchedule(double eta_base, std::vector<LrPhase> phases) : eta_base_(eta_base), phases_(std::move(phases)) {
    if (!(eta_base > 0.0)) throw DomainError("LrSchedule: eta_base must be positive");
    if (phases_.empty()) throw DomainError("LrSchedule: no phases");
    if (phases_.front().start_epoch != 0.0) throw DomainError("LrSchedule: first phase must start at epoch 0");
    for (std::size_t i = 0; i < phases_.size(); ++i) {
        const auto& p = phases_[i];
        if (!(p.end_epoch > p.start_epoch)) throw DomainError("LrSchedule: empty or reversed phase");
        if (!(p.multiplier > 0.0)) throw DomainError("LrSchedule: multipliers must be positive");
        if (i > 0 && phases_[i - 1].end_epoch != p.start_epoch)
            throw DomainError("LrSchedule: phases must be contiguous");
    }
}

namespace {

struct ReferencePhase {
    double end_epoch;
    double multiplier;
};

LrSchedule scaled_schedule(double eta_base, double total_epochs, std::size_t iterations_per_epoch,
                           const std::array<ReferencePhase, 4>& reference) {
    if (!(total_epochs >= 4.0)) throw DomainError("schedule: total_epochs must be at least 4");
    const double scale = total_epochs / kReferenceEpochs;
    std::vector<LrPhase> phases;
    double start = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        double end = reference[i].end_epoch * scale;
        if (i + 1 == reference.size()) {
            end = total_epochs;
        } else if (iterations_per_epoch > 0) {
            const auto ipe = static_cast<double>(iterations_per_epoch);
            end = std::round(end * ipe) / ipe;
        }
        if (!(end > start)) throw DomainError("schedule: phase collapses at this epoch/iteration granularity");
        phases.push_back({start, end, reference[i].multiplier});
        start = end;
    }
    return LrSchedule(eta_base, std::move(phases));
}

}  // namespace

LrSchedule slow_start_schedule(double eta_base, double total_epochs, std::size_t iterations_per_epoch) {
    return scaled_schedule(eta_base, total_epochs, iterations_per_epoch,
                           {{{40.0, 0.5}, {70.0, 0.075}, {85.0, 0.01}, {90.0, 0.001}}});
}

LrSchedule goyal_schedule(double eta_base, double total_epochs, std::size_t iterations_per_epoch) {
    return scaled_schedule(eta_base, total_epochs, iterations_per_epoch,
                           {{{30.0, 1.0}, {60.0, 0.1}, {80.0, 0.01}, {90.0, 0.001}}});
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "slow_start") return ScheduleKind::slow_start;
    if (name == "goyal") return ScheduleKind::goyal;
    throw ConfigError("unknown schedule '" + std::string(name) + "' (expected slow_start|goyal)");
}

std::string_view to_string(ScheduleKind kind) {
    return kind == ScheduleKind::slow_start ? "slow_start" : "goyal";
}

LrSchedule make_schedule(ScheduleKind kind, double eta_base, double total_epochs, std::size_t iterations_per_epoch) {
    return kind == ScheduleKind::slow_start ? slow_start_schedule(eta_base, total_epochs, iterations_per_epoch)
                                            : goyal_schedule(eta_base, total_epochs, iterations_per_epoch);
}

double lr_at(const LrSchedule& schedule, double epoch) {
    if (!(epoch >= 0.0) || !(epoch < schedule.total_epochs()))
        throw DomainError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(schedule.total_epochs()) + ")");
    for (const auto& p : schedule.phases())
        if (epoch < p.end_epoch) return schedule.eta_base() * p.multiplier;
    return schedule.eta_base() * schedule.phases().back().multiplier;
}

}  // namespace largebatch
