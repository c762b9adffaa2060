#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "largebatch/collective.hpp"
#include "largebatch/config.hpp"
#include "largebatch/dataset.hpp"
#include "largebatch/lr_schedule.hpp"
#include "largebatch/mlp.hpp"
#include "largebatch/optimizer.hpp"

namespace largebatch {

struct IterationRecord {
    std::uint64_t iteration = 0;
    double epoch = 0.0;  // iteration / iterations_per_epoch
    double lr = 0.0;
    double alpha_sgd = 0.0;
    double alpha_rmsprop = 0.0;
    double train_loss = 0.0;
    double comm_seconds_model = 0.0;
};

struct EpochRecord {
    std::size_t epoch = 0;  // completed epochs
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct RunLog {
    std::vector<IterationRecord> iterations;
    std::vector<EpochRecord> epochs;
    AllReduceStats comm;
};

inline constexpr const char* kIterationCsvHeader = "iteration,epoch,lr,alpha_sgd,train_loss,comm_seconds_model";
inline constexpr const char* kEpochCsvHeader = "epoch,val_loss,val_accuracy";

void write_iteration_csv(std::ostream& out, std::span<const IterationRecord> records);
void write_epoch_csv(std::ostream& out, std::span<const EpochRecord> records);

// One simulated worker. Shards are contiguous, disjoint ranges of the
// training split.
struct WorkerReplica {
    std::size_t worker_id = 0;
    Mlp model;
    std::size_t shard_begin = 0;
    std::size_t shard_end = 0;

    std::size_t shard_size() const noexcept { return shard_end - shard_begin; }
};

// Synchronous data-parallel training over config.workers in-process
// replicas. Each step: workers run forward/backward on local minibatches
// (optionally on several threads), gradients are all-reduce-averaged, one
// optimizer update is computed and broadcast to every replica.
class Trainer {
public:
    Trainer(Config config, DatasetSplits data);

    const Config& config() const noexcept { return config_; }
    const DatasetSplits& data() const noexcept { return data_; }
    const LrSchedule& schedule() const noexcept { return schedule_; }
    std::size_t iterations_per_epoch() const noexcept { return iterations_per_epoch_; }
    std::size_t workers() const noexcept { return replicas_.size(); }
    const std::vector<WorkerReplica>& replicas() const noexcept { return replicas_; }
    std::vector<WorkerReplica>& replicas() noexcept { return replicas_; }
    const std::vector<OptimizerState>& optimizer_states() const noexcept { return opt_states_; }
    std::uint64_t completed_iterations() const noexcept { return completed_; }
    const AllReduceStats& comm_stats() const noexcept { return comm_; }

    // iteration / iterations_per_epoch.
    double epoch_at(std::uint64_t iteration) const noexcept;

    // Training-split indices each worker uses at `iteration`: an epoch-seeded
    // permutation of the worker's shard, read b_local at a time.
    std::vector<std::vector<std::size_t>> sample_minibatches(std::uint64_t iteration) const;

    // Full step with the trainer's own sampling.
    IterationRecord train_step(std::uint64_t iteration);

    // Step with caller-supplied minibatches (one per worker, indices into the
    // training split and inside that worker's shard).
    IterationRecord apply_step(std::uint64_t iteration, const std::vector<std::vector<std::size_t>>& batches);

    // Syncs batch-norm statistics, then evaluates the validation split split
    // across workers. `epoch` is only copied into the record.
    EpochRecord validate(std::size_t epoch);

    // Largest absolute parameter difference between any replica and replica 0.
    double max_replica_divergence() const;

private:
    Config config_;
    DatasetSplits data_;
    LrSchedule schedule_;
    OptimizerHyper hyper_;
    std::size_t iterations_per_epoch_ = 0;
    std::vector<WorkerReplica> replicas_;
    std::vector<OptimizerState> opt_states_;
    std::uint64_t completed_ = 0;
    AllReduceStats comm_;
};

// config.iterations_per_epoch when set, else (train_size / workers) / b_local.
std::size_t iterations_per_epoch_for(const Config& config, std::size_t train_size);

// The run's learning-rate schedule, boundaries rounded to whole iterations.
LrSchedule make_run_schedule(const Config& config, std::size_t iterations_per_epoch);

// Synthetic or file dataset as configured.
DatasetSplits load_configured_dataset(const Config& config);

struct RunResult {
    RunLog log;
    std::filesystem::path iteration_csv;
    std::filesystem::path epoch_csv;
    std::filesystem::path checkpoint;
};

// epochs x iterations_per_epoch steps with a validation pass after every
// epoch. Writes iterations.csv, epochs.csv and checkpoint.json to out_dir
// (when non-empty). Logs collected so far are flushed before an error
// propagates.
RunResult run(const Config& config);
RunResult run(const Config& config, DatasetSplits data);

}  // namespace largebatch
