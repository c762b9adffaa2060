#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "largebatch/collective.hpp"
#include "largebatch/lr_schedule.hpp"
#include "largebatch/optimizer.hpp"
#include "largebatch/syncbn.hpp"

namespace largebatch {

// Experiment configuration. Defaults are the desk-scale recipe: 8 workers x
// 32 examples (eta_base 0.1), 30 epochs with the 90-epoch schedules scaled
// down, a [64, 128, 64, 10] batch-norm MLP on 51,200 synthetic examples.
struct Config {
    std::uint64_t seed = 1;
    std::size_t workers = 8;
    std::size_t b_local = 32;
    std::size_t epochs = 30;
    std::size_t iterations_per_epoch = 0;  // 0: shard size / b_local
    std::size_t threads = 1;

    std::vector<std::size_t> layers{64, 128, 64, 10};
    bool batchnorm = true;
    double init_scale = 1.0;
    double bn_eps = kDefaultBnEpsilon;
    VarianceCombine bn_variance = VarianceCombine::simple;

    ScheduleKind schedule = ScheduleKind::slow_start;
    double reference_epochs = kReferenceEpochs;  // schedules and betas scale by epochs / this
    double eta_scale = 1.0;                      // multiplies the linear-scaling eta_base
    OptimizerKind optimizer = OptimizerKind::hybrid;
    OptimizerHyper hyper{};                      // betas in reference-epoch units
    double weight_decay = 1e-4;                  // folded into weight gradients

    CommPrecision precision = CommPrecision::half16;
    CostModel cost{5e-6, 1.6e-10, 0.1};

    std::string dataset = "synthetic";  // or file:<path>
    std::size_t dataset_examples = 51200;
    double dataset_separation = 6.0;

    std::string out_dir;

    // Throws ConfigError on inconsistent values.
    void validate() const;

    ClusterShape cluster() const { return ClusterShape(workers, b_local); }
    double epoch_scale() const { return static_cast<double>(epochs) / reference_epochs; }
    // eta_base(cluster) * eta_scale.
    double base_learning_rate() const;
    // hyper with beta_center / beta_period scaled to this run's length.
    OptimizerHyper scaled_hyper() const;
};

// Applies one `key=value` setting. Unknown keys and unparsable values throw
// ConfigError naming the key.
void apply_setting(Config& config, const std::string& key, const std::string& value);

// Splits "key=value"; throws ConfigError when there is no '='.
std::pair<std::string, std::string> split_assignment(const std::string& text);

// Parses flat key=value text. Blank lines and lines starting with '#' are
// ignored. Does not validate the result.
Config parse_config(const std::string& text, Config base = {});
Config load_config(const std::filesystem::path& path);

// Every key with its current value, in a stable order; parse_config of the
// joined lines reproduces the config.
std::vector<std::pair<std::string, std::string>> config_entries(const Config& config);
std::string to_config_text(const Config& config);

// Shortest decimal that reads back to the same double.
std::string format_number(double value);

}  // namespace largebatch
