#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "largebatch/optimizer.hpp"
#include "largebatch/tensor.hpp"

namespace largebatch {

class Trainer;

inline constexpr int kCheckpointVersion = 1;

struct BnCheckpoint {
    std::string name;  // e.g. "bn0"
    std::optional<Tensor> synced_mean;
    std::optional<Tensor> synced_var;

    bool operator==(const BnCheckpoint&) const = default;
};

struct NamedOptimizerState {
    std::string name;
    OptimizerState state;

    bool operator==(const NamedOptimizerState&) const = default;
};

// Everything needed to inspect or resume a run: the config echo (minus
// out_dir), the replica parameters (identical on every worker), optimizer
// buffers and the synced batch-norm statistics of worker 0.
struct Checkpoint {
    int version = kCheckpointVersion;
    std::vector<std::pair<std::string, std::string>> config;
    std::uint64_t iteration = 0;
    std::vector<std::pair<std::string, Tensor>> parameters;
    std::vector<NamedOptimizerState> optimizer;
    std::vector<BnCheckpoint> batchnorm;

    bool operator==(const Checkpoint&) const = default;
};

Checkpoint make_checkpoint(const Trainer& trainer);

// JSON text; doubles are written as shortest round-trip decimals.
std::string to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const std::string& text);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace largebatch
