#include "largebatch/commands.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "largebatch/dataset.hpp"
#include "largebatch/error.hpp"
#include "largebatch/rng.hpp"
#include "largebatch/trainer.hpp"

namespace largebatch {

Config resolve_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
    Config config = path ? load_config(*path) : Config{};
    for (const auto& o : overrides) {
        auto [key, value] = split_assignment(o);
        apply_setting(config, key, value);
    }
    return config;
}

std::size_t planned_iterations_per_epoch(const Config& config) {
    if (config.iterations_per_epoch > 0) return config.iterations_per_epoch;
    if (config.dataset != "synthetic") return 0;
    return iterations_per_epoch_for(config, train_split_size(config.dataset_examples));
}

AllReduceTrial simulate_allreduce(std::size_t workers, std::size_t elements, CommPrecision precision,
                                  std::uint64_t seed, const CostModel& model) {
    if (workers == 0 || elements == 0) throw DomainError("simulate_allreduce: workers and elements must be positive");
    std::vector<Tensor> payloads;
    for (std::size_t w = 0; w < workers; ++w) {
        Rng rng(seed, w);
        payloads.push_back(rand_normal(rng, {elements}, 0.0, 1.0));
    }
    AllReduceTrial trial{workers, elements, precision, 0.0, 0.0, {}};
    const Tensor exact = all_reduce(payloads, ReduceOp::sum, CommPrecision::full64);
    const Tensor got = all_reduce(payloads, ReduceOp::sum, precision, &trial.stats);
    const Tensor diff = sub(got, exact);
    trial.rel_l2_error = l2_norm(diff.data()) / l2_norm(exact.data());
    trial.ring_seconds_model = ring_time(elements * bytes_per_element(precision), workers, model);
    return trial;
}

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("'" + path.string() + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != header) throw ConfigError("'" + path.string() + "': expected header '" + header + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

double cell_number(const std::vector<std::string>& row, std::size_t i, const std::filesystem::path& path) {
    if (i >= row.size()) throw ConfigError("'" + path.string() + "': short row");
    try {
        std::size_t used = 0;
        const double v = std::stod(row[i], &used);
        if (used != row[i].size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("'" + path.string() + "': bad number '" + row[i] + "'");
    }
}

// Runs fn, mapping ConfigError to exit 2 and other failures to exit 1.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace

int cmd_train(const std::filesystem::path& config_path, const std::vector<std::string>& overrides, std::ostream& out,
              std::ostream& err) {
    Config config;
    const int parsed = guarded(err, [&] {
        if (!std::filesystem::exists(config_path))
            throw ConfigError("config file '" + config_path.string() + "' does not exist");
        config = resolve_config(config_path, overrides);
        if (config.out_dir.empty())
            if (const char* env = std::getenv(kOutDirEnv)) config.out_dir = env;
        if (config.out_dir.empty()) throw ConfigError("out_dir is not set (config key or " + std::string(kOutDirEnv) + ")");
        config.validate();
        return kExitOk;
    });
    if (parsed != kExitOk) return parsed;

    // Data problems (missing dataset file, shape mismatch) are config errors;
    // anything raised while training is a runtime failure.
    DatasetSplits data;
    const int loaded = guarded(err, [&] {
        try {
            data = load_configured_dataset(config);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(e.what());
        }
        return kExitOk;
    });
    if (loaded != kExitOk) return loaded;

    return guarded(err, [&] {
        out << "workers=" << config.workers << " b_total=" << config.cluster().b_total()
            << " eta_base=" << format_number(config.base_learning_rate()) << '\n';
        const RunResult result = run(config, std::move(data));
        if (!result.log.epochs.empty()) {
            const auto& last = result.log.epochs.back();
            out << "final epoch " << last.epoch << ": val_loss=" << format_number(last.val_loss)
                << " val_accuracy=" << format_number(last.val_accuracy) << '\n';
        }
        if (result.log.comm.saturations > 0)
            out << "warning: " << result.log.comm.saturations << " binary16 saturations during communication\n";
        out << "wrote " << result.iteration_csv.string() << ", " << result.epoch_csv.string() << ", "
            << result.checkpoint.string() << '\n';
        return kExitOk;
    });
}

int cmd_schedule_dump(const std::optional<std::filesystem::path>& config_path,
                      const std::vector<std::string>& overrides, double grid_step, std::ostream& out,
                      std::ostream& err) {
    return guarded(err, [&] {
        if (!(grid_step > 0.0)) throw ConfigError("--step must be positive");
        if (config_path && !std::filesystem::exists(*config_path))
            throw ConfigError("config file '" + config_path->string() + "' does not exist");
        const Config config = resolve_config(config_path, overrides);
        config.validate();
        if (config.epochs == 0) throw ConfigError("epochs must be positive for a schedule dump");
        const LrSchedule schedule = make_run_schedule(config, planned_iterations_per_epoch(config));
        const OptimizerHyper hyper = config.scaled_hyper();
        out << kScheduleCsvHeader << '\n';
        for (std::size_t k = 0;; ++k) {
            const double epoch = static_cast<double>(k) * grid_step;
            if (!(epoch < schedule.total_epochs())) break;
            const double lr = lr_at(schedule, epoch);
            const auto blend = blend_for(config.optimizer, epoch, lr, hyper);
            out << format_number(epoch) << ',' << format_number(lr) << ',' << format_number(blend.alpha_sgd) << ','
                << format_number(blend.alpha_rmsprop) << '\n';
        }
        return kExitOk;
    });
}

int cmd_simulate_allreduce(std::size_t workers, std::size_t elements, const std::string& precision,
                           std::uint64_t seed, const CostModel& model, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        if (workers == 0) throw ConfigError("--workers must be at least 1");
        if (elements == 0) throw ConfigError("--elements must be at least 1");
        const CommPrecision p = parse_comm_precision(precision);
        try {
            model.validate();
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
        const auto trial = simulate_allreduce(workers, elements, p, seed, model);
        out << kAllReduceCsvHeader << '\n'
            << workers << ',' << elements << ',' << to_string(p) << ',' << format_number(trial.rel_l2_error) << ','
            << format_number(trial.ring_seconds_model) << '\n';
        if (trial.stats.saturations > 0) err << "warning: " << trial.stats.saturations << " binary16 saturations\n";
        return kExitOk;
    });
}

int cmd_fit_costmodel(const std::filesystem::path& measurements_csv, std::size_t payload_bytes, std::ostream& out,
                      std::ostream& err) {
    return guarded(err, [&] {
        const auto rows = read_csv(measurements_csv, "workers,seconds");
        std::vector<IterationMeasurement> points;
        for (const auto& row : rows) {
            const double w = cell_number(row, 0, measurements_csv);
            if (!(w >= 1.0) || w != std::floor(w)) throw ConfigError("worker counts must be positive integers");
            points.push_back({static_cast<std::size_t>(w), cell_number(row, 1, measurements_csv)});
        }
        CostModelFit fit;
        try {
            fit = fit_cost_model(points, payload_bytes);
        } catch (const DomainError& e) {
            throw ConfigError(e.what());
        }
        const auto& m = fit.model;
        out << kFitParamsCsvHeader << '\n'
            << format_number(m.alpha_latency) << ',' << format_number(m.beta_bandwidth) << ','
            << format_number(m.gamma_compute) << "\n\n"
            << kFitResidualCsvHeader << '\n';
        const bool has_efficiency = m.gamma_compute > 0.0 && m.alpha_latency >= 0.0 && m.beta_bandwidth >= 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            out << points[i].workers << ',' << format_number(points[i].seconds) << ','
                << format_number(points[i].seconds - fit.residuals[i]) << ',' << format_number(fit.residuals[i]) << ',';
            if (has_efficiency) out << format_number(scaling_efficiency(points[i].workers, m, payload_bytes));
            out << '\n';
        }
        if (!has_efficiency) err << "warning: fitted parameters are not all nonnegative; efficiency omitted\n";
        return kExitOk;
    });
}

int cmd_log_summary(const std::filesystem::path& run_dir, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        const auto it_path = run_dir / "iterations.csv";
        const auto ep_path = run_dir / "epochs.csv";
        const auto iters = read_csv(it_path, kIterationCsvHeader);
        const auto epochs = read_csv(ep_path, kEpochCsvHeader);

        struct Acc {
            double loss_sum = 0.0;
            std::size_t count = 0;
            double lr = 0.0, alpha = 0.0;
        };
        std::map<std::size_t, Acc> per_epoch;  // keyed by completed-epoch number
        for (const auto& row : iters) {
            const double epoch = cell_number(row, 1, it_path);
            auto& a = per_epoch[static_cast<std::size_t>(std::floor(epoch)) + 1];
            a.loss_sum += cell_number(row, 4, it_path);
            ++a.count;
            a.lr = cell_number(row, 2, it_path);
            a.alpha = cell_number(row, 3, it_path);
        }
        out << kLogSummaryCsvHeader << '\n';
        for (const auto& row : epochs) {
            const auto e = static_cast<std::size_t>(cell_number(row, 0, ep_path));
            const auto found = per_epoch.find(e);
            if (found == per_epoch.end()) throw ConfigError("epochs.csv lists epoch " + std::to_string(e) +
                                                            " with no iterations");
            const Acc& a = found->second;
            out << e << ',' << format_number(a.loss_sum / static_cast<double>(a.count)) << ','
                << format_number(a.lr) << ',' << format_number(a.alpha) << ',' << row.at(1) << ',' << row.at(2) << '\n';
        }
        return kExitOk;
    });
}

}  // namespace largebatch
