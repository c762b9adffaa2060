// largebatch: large-minibatch training recipe simulator.
//
//   largebatch train CONFIG [key=value ...]
//   largebatch schedule-dump [--config CONFIG] [--step EPOCHS] [key=value ...]
//   largebatch simulate-allreduce --workers W --elements N --precision {full64|half16}
//   largebatch fit-costmodel MEASUREMENTS.csv [--payload-bytes B]
//   largebatch log-summary RUN_DIR

#include <CLI11.hpp>
#include <iostream>

#include "largebatch/commands.hpp"

int main(int argc, char** argv) {
    using namespace largebatch;

    CLI::App app{"Large-minibatch training recipe: hybrid RMSprop/SGD warm-up, slow-start schedule, "
                 "synced batch norm and simulated half-precision all-reduce"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto* train = app.add_subcommand("train", "Run a training experiment");
    train->add_option("config", config_path, "Config file (key=value lines)")->required();
    train->add_option("overrides", overrides, "key=value overrides applied after the file");

    std::string dump_config;
    double step = 1.0;
    auto* dump = app.add_subcommand("schedule-dump", "Print epoch,lr,alpha_sgd,alpha_rmsprop as CSV");
    dump->add_option("--config", dump_config, "Config file; defaults apply when omitted");
    dump->add_option("--step", step, "Epoch grid step")->capture_default_str();
    dump->add_option("overrides", overrides, "key=value overrides");

    std::size_t workers = 0, elements = 0;
    std::string precision = "half16";
    std::uint64_t seed = 1;
    CostModel model = Config{}.cost;
    auto* sim = app.add_subcommand("simulate-allreduce", "Compare a simulated all-reduce against the exact sum");
    sim->add_option("--workers", workers, "Number of workers")->required();
    sim->add_option("--elements", elements, "Elements per payload")->required();
    sim->add_option("--precision", precision, "full64 or half16")->capture_default_str();
    sim->add_option("--seed", seed, "Payload seed")->capture_default_str();
    sim->add_option("--alpha", model.alpha_latency, "Seconds per hop")->capture_default_str();
    sim->add_option("--beta", model.beta_bandwidth, "Seconds per byte")->capture_default_str();

    std::string measurements;
    std::size_t payload_bytes = 51'200'000;
    auto* fit = app.add_subcommand("fit-costmodel", "Least-squares fit of the ring cost model");
    fit->add_option("measurements", measurements, "CSV with header workers,seconds")->required();
    fit->add_option("--payload-bytes", payload_bytes, "Bytes all-reduced per iteration")->capture_default_str();

    std::string run_dir;
    auto* summary = app.add_subcommand("log-summary", "Per-epoch plot-ready CSV from a run directory");
    summary->add_option("run_dir", run_dir, "Directory holding iterations.csv and epochs.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (*train) return cmd_train(config_path, overrides, std::cout, std::cerr);
    if (*dump) {
        std::optional<std::filesystem::path> path;
        if (!dump_config.empty()) path = dump_config;
        return cmd_schedule_dump(path, overrides, step, std::cout, std::cerr);
    }
    if (*sim) return cmd_simulate_allreduce(workers, elements, precision, seed, model, std::cout, std::cerr);
    if (*fit) return cmd_fit_costmodel(measurements, payload_bytes, std::cout, std::cerr);
    if (*summary) return cmd_log_summary(run_dir, std::cout, std::cerr);
    return kExitUsage;
}
