#include "largebatch/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include "largebatch/checkpoint.hpp"
#include "largebatch/error.hpp"

namespace largebatch {

namespace {

// Rng stream tags: every random draw in a run comes from (seed, tag, a, b).
enum StreamTag : std::uint32_t { kDatasetStream = 1, kInitStream = 2, kSampleStream = 3 };

Rng stream_rng(std::uint64_t seed, StreamTag tag, std::uint32_t worker, std::uint32_t epoch) {
    return Rng::split(seed, (static_cast<std::uint32_t>(tag) << 24) | worker, epoch);
}

// Runs fn(i) for i in [0, n) on up to `threads` threads. The exception of the
// lowest failing index is rethrown, so failures do not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    std::vector<std::exception_ptr> errors(n);
    auto body = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < n; i += stride) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t t = std::min(threads, n);
    if (t <= 1) {
        body(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t k = 0; k < t; ++k) pool.emplace_back(body, k, t);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

bool is_weight(const std::string& name) { return name.size() > 7 && name.ends_with(".weight"); }

void write_number(std::ostream& out, double v) { out << format_number(v); }

}  // namespace

void write_iteration_csv(std::ostream& out, std::span<const IterationRecord> records) {
    out << kIterationCsvHeader << '\n';
    for (const auto& r : records) {
        out << r.iteration << ',';
        write_number(out, r.epoch);
        out << ',';
        write_number(out, r.lr);
        out << ',';
        write_number(out, r.alpha_sgd);
        out << ',';
        write_number(out, r.train_loss);
        out << ',';
        write_number(out, r.comm_seconds_model);
        out << '\n';
    }
}

void write_epoch_csv(std::ostream& out, std::span<const EpochRecord> records) {
    out << kEpochCsvHeader << '\n';
    for (const auto& r : records) {
        out << r.epoch << ',';
        write_number(out, r.val_loss);
        out << ',';
        write_number(out, r.val_accuracy);
        out << '\n';
    }
}

std::size_t iterations_per_epoch_for(const Config& config, std::size_t train_size) {
    if (config.iterations_per_epoch > 0) return config.iterations_per_epoch;
    const std::size_t shard = train_size / config.workers;
    const std::size_t ipe = shard / config.b_local;
    if (ipe == 0) throw ConfigError("training split too small for workers x b_local; set iterations_per_epoch");
    return ipe;
}

LrSchedule make_run_schedule(const Config& config, std::size_t ipe) {
    // Runs of zero epochs still need a well-formed schedule object.
    const double total = config.epochs > 0 ? static_cast<double>(config.epochs) : config.reference_epochs;
    return make_schedule(config.schedule, config.base_learning_rate(), total, ipe);
}

namespace {

Config checked(Config c) {
    c.validate();
    return c;
}

DatasetSplits checked(DatasetSplits d) {
    d.train.validate();
    d.validation.validate();
    return d;
}

}  // namespace

Trainer::Trainer(Config config, DatasetSplits data)
    : config_(checked(std::move(config))),
      data_(checked(std::move(data))),
      schedule_(make_run_schedule(config_, iterations_per_epoch_for(config_, data_.train.size()))),
      hyper_(config_.scaled_hyper()),
      iterations_per_epoch_(iterations_per_epoch_for(config_, data_.train.size())) {
    if (data_.train.input_dim() != config_.layers.front())
        throw ConfigError("dataset input_dim " + std::to_string(data_.train.input_dim()) +
                          " does not match model.layers input " + std::to_string(config_.layers.front()));
    if (data_.train.classes != config_.layers.back())
        throw ConfigError("dataset has " + std::to_string(data_.train.classes) + " classes, model.layers ends with " +
                          std::to_string(config_.layers.back()));
    if (data_.train.size() < config_.workers) throw ConfigError("fewer training examples than workers");

    ModelSpec spec = ModelSpec::uniform(config_.layers, config_.batchnorm, config_.init_scale);
    spec.bn_eps = config_.bn_eps;

    // Every replica starts from the same initialization stream.
    const std::size_t n = data_.train.size();
    for (std::size_t w = 0; w < config_.workers; ++w) {
        Rng init = stream_rng(config_.seed, kInitStream, 0, 0);
        replicas_.push_back({w, Mlp(spec, init), w * n / config_.workers, (w + 1) * n / config_.workers});
    }
    for (const auto& p : replicas_[0].model.parameters()) opt_states_.push_back(OptimizerState::zeros(p.value->shape()));
}

double Trainer::epoch_at(std::uint64_t iteration) const noexcept {
    return static_cast<double>(iteration) / static_cast<double>(iterations_per_epoch_);
}

std::vector<std::vector<std::size_t>> Trainer::sample_minibatches(std::uint64_t iteration) const {
    const auto epoch = static_cast<std::uint32_t>(iteration / iterations_per_epoch_);
    const std::size_t position = iteration % iterations_per_epoch_;
    std::vector<std::vector<std::size_t>> batches;
    for (const auto& r : replicas_) {
        std::vector<std::size_t> order(r.shard_size());
        std::iota(order.begin(), order.end(), r.shard_begin);
        Rng rng = stream_rng(config_.seed, kSampleStream, static_cast<std::uint32_t>(r.worker_id), epoch);
        rng.shuffle(order);
        std::vector<std::size_t> batch(config_.b_local);
        for (std::size_t j = 0; j < config_.b_local; ++j)
            batch[j] = order[(position * config_.b_local + j) % order.size()];
        batches.push_back(std::move(batch));
    }
    return batches;
}

IterationRecord Trainer::train_step(std::uint64_t iteration) { return apply_step(iteration, sample_minibatches(iteration)); }

IterationRecord Trainer::apply_step(std::uint64_t iteration, const std::vector<std::vector<std::size_t>>& batches) {
    const std::size_t workers = replicas_.size();
    if (batches.size() != workers) throw DomainError("apply_step: need one minibatch per worker");
    for (std::size_t w = 0; w < workers; ++w) {
        const auto& r = replicas_[w];
        if (batches[w].empty()) throw DomainError("apply_step: empty minibatch");
        for (auto i : batches[w])
            if (i < r.shard_begin || i >= r.shard_end)
                throw DomainError("apply_step: example " + std::to_string(i) + " is outside worker " +
                                  std::to_string(w) + "'s shard");
    }

    const double epoch = epoch_at(iteration);
    const double lr = lr_at(schedule_, epoch);
    const BlendCoefficients blend = blend_for(config_.optimizer, epoch, lr, hyper_);

    // Local forward/backward, possibly concurrent; results land by worker index.
    std::vector<LossAndGrads> local(workers);
    parallel_for(workers, config_.threads, [&](std::size_t w) {
        const Tensor x = data_.train.gather(batches[w]);
        const auto labels = data_.train.gather_labels(batches[w]);
        local[w] = replicas_[w].model.forward_backward(x, labels);
    });

    auto params = replicas_[0].model.parameters();
    const std::size_t total = replicas_[0].model.parameter_count();
    std::vector<Tensor> payloads, losses;
    for (std::size_t w = 0; w < workers; ++w) {
        Tensor flat({total});
        std::size_t at = 0;
        for (const auto& g : local[w].grads) {
            std::copy(g.data().begin(), g.data().end(), flat.data().begin() + static_cast<std::ptrdiff_t>(at));
            at += g.size();
        }
        payloads.push_back(std::move(flat));
        losses.push_back(Tensor({1}, local[w].loss));
    }
    const Tensor grad = all_reduce(payloads, ReduceOp::average, config_.precision, &comm_);
    const double loss = all_reduce(losses, ReduceOp::average, CommPrecision::full64)[0];

    // One update on replica 0, then broadcast.
    std::size_t at = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& theta = *params[p].value;
        Tensor g(theta.shape(), std::vector<double>(grad.data().begin() + static_cast<std::ptrdiff_t>(at),
                                                    grad.data().begin() + static_cast<std::ptrdiff_t>(at + theta.size())));
        at += theta.size();
        if (config_.weight_decay > 0.0 && is_weight(params[p].name))
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += config_.weight_decay * theta[i];
        step_in_place(theta, g, opt_states_[p], blend, hyper_);
    }
    for (std::size_t w = 1; w < workers; ++w) {
        auto dst = replicas_[w].model.parameters();
        for (std::size_t p = 0; p < params.size(); ++p) *dst[p].value = *params[p].value;
    }
    if (max_replica_divergence() != 0.0) throw InvariantError("replica parameters diverged after broadcast");
    completed_ = iteration + 1;

    IterationRecord rec;
    rec.iteration = iteration;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.alpha_sgd = blend.alpha_sgd;
    rec.alpha_rmsprop = blend.alpha_rmsprop;
    rec.train_loss = loss;
    rec.comm_seconds_model = ring_time(total * bytes_per_element(config_.precision), workers, config_.cost);
    return rec;
}

EpochRecord Trainer::validate(std::size_t epoch) {
    const std::size_t workers = replicas_.size();
    const std::size_t layers = replicas_[0].model.bn_layers().size();
    for (std::size_t b = 0; b < layers; ++b) {
        std::vector<BnLayerState*> states;
        for (auto& r : replicas_) states.push_back(&r.model.bn_layers()[b]);
        sync_statistics(states, config_.precision, config_.bn_variance, &comm_);
    }

    const Dataset& val = data_.validation;
    const std::size_t n = val.size();
    std::vector<Tensor> partial(workers, Tensor({2}));
    parallel_for(workers, config_.threads, [&](std::size_t w) {
        const std::size_t lo = w * n / workers, hi = (w + 1) * n / workers;
        constexpr std::size_t kChunk = 1024;
        for (std::size_t start = lo; start < hi; start += kChunk) {
            std::vector<std::size_t> idx(std::min(kChunk, hi - start));
            std::iota(idx.begin(), idx.end(), start);
            const Tensor logits = replicas_[w].model.logits_eval(val.gather(idx));
            const auto labels = val.gather_labels(idx);
            partial[w][0] += softmax_cross_entropy(logits, labels) * static_cast<double>(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < logits.dim(1); ++c)
                    if (logits.at(i, c) > logits.at(i, best)) best = c;
                if (static_cast<int>(best) == labels[i]) partial[w][1] += 1.0;
            }
        }
    });
    const Tensor sums = all_reduce(partial, ReduceOp::sum, CommPrecision::full64);
    if (!std::isfinite(sums[0])) throw NonFiniteError("validation loss", 0);
    return {epoch, sums[0] / static_cast<double>(n), sums[1] / static_cast<double>(n)};
}

double Trainer::max_replica_divergence() const {
    double worst = 0.0;
    const auto ref = replicas_[0].model.parameters();
    for (std::size_t w = 1; w < replicas_.size(); ++w) {
        const auto other = replicas_[w].model.parameters();
        for (std::size_t p = 0; p < ref.size(); ++p) worst = std::max(worst, max_abs_diff(*ref[p].value, *other[p].value));
    }
    return worst;
}

DatasetSplits load_configured_dataset(const Config& config) {
    if (config.dataset.rfind("file:", 0) == 0) return load_dataset_file(config.dataset.substr(5));
    Rng rng = stream_rng(config.seed, kDatasetStream, 0, 0);
    return make_synthetic_dataset(rng, config.layers.back(), config.dataset_examples, config.layers.front(),
                                  config.dataset_separation);
}

RunResult run(const Config& config) {
    config.validate();
    return run(config, load_configured_dataset(config));
}

RunResult run(const Config& config, DatasetSplits data) {
    Trainer trainer(config, std::move(data));
    RunResult result;
    const bool write = !config.out_dir.empty();
    if (write) {
        std::filesystem::create_directories(config.out_dir);
        result.iteration_csv = std::filesystem::path(config.out_dir) / "iterations.csv";
        result.epoch_csv = std::filesystem::path(config.out_dir) / "epochs.csv";
        result.checkpoint = std::filesystem::path(config.out_dir) / "checkpoint.json";
    }
    auto flush_logs = [&] {
        if (!write) return;
        std::ofstream it(result.iteration_csv), ep(result.epoch_csv);
        write_iteration_csv(it, result.log.iterations);
        write_epoch_csv(ep, result.log.epochs);
        if (!it || !ep) throw Error("failed writing run logs to " + config.out_dir);
    };

    try {
        std::uint64_t t = 0;
        for (std::size_t e = 0; e < config.epochs; ++e) {
            for (std::size_t i = 0; i < trainer.iterations_per_epoch(); ++i, ++t)
                result.log.iterations.push_back(trainer.train_step(t));
            result.log.epochs.push_back(trainer.validate(e + 1));
        }
    } catch (...) {
        result.log.comm = trainer.comm_stats();
        flush_logs();
        throw;
    }
    result.log.comm = trainer.comm_stats();
    flush_logs();
    if (write) write_checkpoint(result.checkpoint, make_checkpoint(trainer));
    return result;
}

}  // namespace largebatch
