#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "largebatch/collective.hpp"
#include "largebatch/config.hpp"

namespace largebatch {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

inline constexpr const char* kOutDirEnv = "LARGEBATCH_OUT_DIR";

inline constexpr const char* kScheduleCsvHeader = "epoch,lr,alpha_sgd,alpha_rmsprop";
inline constexpr const char* kAllReduceCsvHeader = "workers,elements,precision,rel_l2_error,ring_seconds_model";
inline constexpr const char* kFitParamsCsvHeader = "alpha_latency,beta_bandwidth,gamma_compute";
inline constexpr const char* kFitResidualCsvHeader = "workers,seconds,predicted,residual,efficiency";
inline constexpr const char* kLogSummaryCsvHeader =
    "epoch,mean_train_loss,final_lr,final_alpha_sgd,val_loss,val_accuracy";

// Config file (optional) plus key=value overrides applied in order.
Config resolve_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides);

// Iterations per epoch a run of this config will use when it can be known
// without loading data (explicit setting or synthetic dataset); 0 otherwise.
std::size_t planned_iterations_per_epoch(const Config& config);

struct AllReduceTrial {
    std::size_t workers;
    std::size_t elements;
    CommPrecision precision;
    double rel_l2_error;       // ||result - exact|| / ||exact||, exact = full64
    double ring_seconds_model;
    AllReduceStats stats;
};

// Sums `workers` standard-normal payloads of `elements` values with the given
// precision and compares against the full64 sum.
AllReduceTrial simulate_allreduce(std::size_t workers, std::size_t elements, CommPrecision precision,
                                  std::uint64_t seed, const CostModel& model);

int cmd_train(const std::filesystem::path& config_path, const std::vector<std::string>& overrides, std::ostream& out,
              std::ostream& err);

int cmd_schedule_dump(const std::optional<std::filesystem::path>& config_path,
                      const std::vector<std::string>& overrides, double grid_step, std::ostream& out,
                      std::ostream& err);

int cmd_simulate_allreduce(std::size_t workers, std::size_t elements, const std::string& precision,
                           std::uint64_t seed, const CostModel& model, std::ostream& out, std::ostream& err);

// Input CSV: header `workers,seconds`, at least 3 distinct worker counts.
// Output: the fitted parameters, a blank line, then per-point residuals.
int cmd_fit_costmodel(const std::filesystem::path& measurements_csv, std::size_t payload_bytes, std::ostream& out,
                      std::ostream& err);

// Per-epoch plot-ready summary of a run directory (iterations.csv + epochs.csv).
int cmd_log_summary(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err);

}  // namespace largebatch
