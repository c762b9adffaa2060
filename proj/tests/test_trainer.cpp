#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "largebatch/checkpoint.hpp"
#include "largebatch/error.hpp"
#include "largebatch/rng.hpp"
#include "largebatch/trainer.hpp"

using namespace largebatch;
namespace fs = std::filesystem;

namespace {

Config small_config() {
    Config c;
    c.workers = 4;
    c.b_local = 8;
    c.epochs = 4;
    c.layers = {12, 16, 4};
    c.dataset_examples = 2000;
    c.dataset_separation = 4.0;
    return c;
}

DatasetSplits data_for(const Config& c) { return load_configured_dataset(c); }

double param_distance(const Mlp& a, const Mlp& b) {
    double d = 0;
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) d = std::max(d, max_abs_diff(*pa[i].value, *pb[i].value));
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("largebatch_test_trainer_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("iterations per epoch and epoch accounting") {
    Config c = small_config();
    const auto data = data_for(c);
    CHECK(data.train.size() == 1600);
    CHECK(iterations_per_epoch_for(c, 1600) == 50);
    Trainer t(c, data);
    CHECK(t.iterations_per_epoch() == 50);
    for (std::uint64_t it : {0, 1, 7, 49, 50, 123}) {
        const auto rec = t.train_step(it);
        CHECK(rec.epoch == static_cast<double>(it) / 50.0);
        CHECK(rec.iteration == it);
        CHECK(rec.lr == lr_at(t.schedule(), rec.epoch));
    }
    c.iterations_per_epoch = 7;
    CHECK(iterations_per_epoch_for(c, 1600) == 7);
}

TEST_CASE("shards partition the training split") {
    Config c = small_config();
    c.workers = 3;
    Trainer t(c, data_for(c));
    std::size_t expect = 0;
    for (const auto& r : t.replicas()) {
        CHECK(r.shard_begin == expect);
        expect = r.shard_end;
    }
    CHECK(expect == t.data().train.size());
    const auto batches = t.sample_minibatches(5);
    for (std::size_t w = 0; w < 3; ++w) {
        CHECK(batches[w].size() == c.b_local);
        for (auto i : batches[w]) {
            CHECK(i >= t.replicas()[w].shard_begin);
            CHECK(i < t.replicas()[w].shard_end);
        }
    }
    std::vector<std::vector<std::size_t>> wrong = batches;
    wrong[0][0] = t.replicas()[1].shard_begin;
    CHECK_THROWS_AS(t.apply_step(5, wrong), DomainError);
}

TEST_CASE("replicas stay bit-identical") {
    Config c = small_config();
    Trainer t(c, data_for(c));
    for (std::uint64_t it = 0; it < 60; ++it) {
        t.train_step(it);
        REQUIRE(t.max_replica_divergence() == 0.0);
    }
}

TEST_CASE("four workers equal one worker with the concatenated batch") {
    Config c = small_config();
    c.batchnorm = false;
    c.precision = CommPrecision::full64;
    c.iterations_per_epoch = 20;
    c.epochs = 10;
    Config one = c;
    one.workers = 1;
    one.b_local = 32;
    const auto data = data_for(c);
    Trainer four(c, data), single(one, data);
    REQUIRE(param_distance(four.replicas()[0].model, single.replicas()[0].model) == 0.0);
    for (std::uint64_t it = 0; it < 100; ++it) {
        const auto batches = four.sample_minibatches(it);
        std::vector<std::size_t> joined;
        for (const auto& b : batches) joined.insert(joined.end(), b.begin(), b.end());
        const auto r4 = four.apply_step(it, batches);
        const auto r1 = single.apply_step(it, {joined});
        CHECK(r4.lr == r1.lr);
        CHECK(r4.train_loss == doctest::Approx(r1.train_loss).epsilon(1e-12));
    }
    const double d = param_distance(four.replicas()[0].model, single.replicas()[0].model);
    MESSAGE("parameter distance after 100 iterations: " << d);
    CHECK(d <= 1e-10);
}

TEST_CASE("sgd run matches an independent distributed momentum-SGD baseline") {
    for (std::size_t workers : {1, 4}) {
        Config c = small_config();
        c.workers = workers;
        c.batchnorm = false;
        c.precision = CommPrecision::full64;
        c.optimizer = OptimizerKind::sgd;
        c.iterations_per_epoch = 10;
        c.epochs = 10;
        const auto data = data_for(c);
        Trainer t(c, data);

        // Baseline: one model copy, per-worker gradients averaged in worker
        // order, weight decay on weights, v <- mu v - g, theta += lr v.
        Mlp model = t.replicas()[0].model;
        auto params = model.parameters();
        std::vector<std::vector<double>> velocity(params.size());
        for (std::size_t p = 0; p < params.size(); ++p) velocity[p].assign(params[p].value->size(), 0.0);

        for (std::uint64_t it = 0; it < 60; ++it) {
            const auto batches = t.sample_minibatches(it);
            std::vector<std::vector<double>> avg(params.size());
            for (std::size_t p = 0; p < params.size(); ++p) avg[p].assign(params[p].value->size(), 0.0);
            for (std::size_t w = 0; w < workers; ++w) {
                Mlp local = model;
                const auto lg = local.forward_backward(data.train.gather(batches[w]), data.train.gather_labels(batches[w]));
                for (std::size_t p = 0; p < params.size(); ++p)
                    for (std::size_t i = 0; i < avg[p].size(); ++i) avg[p][i] += lg.grads[p][i];
            }
            const double lr = lr_at(t.schedule(), static_cast<double>(it) / 10.0);
            for (std::size_t p = 0; p < params.size(); ++p) {
                Tensor& theta = *params[p].value;
                const bool decay = params[p].name.ends_with(".weight");
                for (std::size_t i = 0; i < theta.size(); ++i) {
                    double g = avg[p][i] / static_cast<double>(workers);
                    if (decay) g += c.weight_decay * theta[i];
                    velocity[p][i] = c.hyper.mu1 * velocity[p][i] - g;
                    theta[i] += lr * velocity[p][i];
                }
            }
            const auto rec = t.train_step(it);
            CHECK(rec.alpha_sgd == 1.0);
            CHECK(rec.alpha_rmsprop == 0.0);
        }
        const double d = param_distance(model, t.replicas()[0].model);
        INFO("workers=" << workers << " distance=" << d);
        if (workers == 1) CHECK(d == 0.0);
        CHECK(d <= 1e-10);
    }
}

TEST_CASE("results do not depend on the thread count") {
    Config c = small_config();
    const auto data = data_for(c);
    Config threaded = c;
    threaded.threads = 3;
    Trainer a(c, data), b(threaded, data);
    for (std::uint64_t it = 0; it < 40; ++it) {
        const auto ra = a.train_step(it), rb = b.train_step(it);
        REQUIRE(ra.train_loss == rb.train_loss);
    }
    CHECK(param_distance(a.replicas()[0].model, b.replicas()[0].model) == 0.0);
    const auto va = a.validate(1), vb = b.validate(1);
    CHECK(va.val_loss == vb.val_loss);
    CHECK(va.val_accuracy == vb.val_accuracy);
}

TEST_CASE("validation") {
    Config c = small_config();
    Trainer t(c, data_for(c));
    CHECK_THROWS_AS(t.validate(0), Error);  // batch norm has no statistics yet
    for (std::uint64_t it = 0; it < 10; ++it) t.train_step(it);
    const auto v1 = t.validate(1), v2 = t.validate(1);
    CHECK(v1.val_loss == v2.val_loss);
    CHECK(v1.val_accuracy == v2.val_accuracy);
    for (const auto& r : t.replicas())
        for (const auto& bn : r.model.bn_layers()) {
            REQUIRE(bn.has_synced_statistics());
            CHECK(*bn.synced_mean == *t.replicas()[0].model.bn_layers()[0].synced_mean);
        }
}

TEST_CASE("indistinguishable classes stay at chance") {
    Config c = small_config();
    c.layers = {12, 16, 10};
    c.dataset_examples = 4000;
    c.dataset_separation = 0.0;
    c.epochs = 4;
    const auto result = run(c, data_for(c));
    REQUIRE(result.log.epochs.size() == 4);
    CHECK(result.log.epochs.back().val_accuracy <= 0.1 + 0.05);
}

TEST_CASE("separable classes reach perfect accuracy") {
    Config c = small_config();
    c.layers = {12, 16, 2};
    c.dataset_examples = 4000;
    c.dataset_separation = 14.0;
    const auto result = run(c, data_for(c));
    CHECK(result.log.epochs.back().val_accuracy == 1.0);
}

TEST_CASE("run is deterministic and writes its artifacts") {
    Config c = small_config();
    c.iterations_per_epoch = 10;
    c.out_dir = scratch("a").string();
    Config again = c;
    again.out_dir = scratch("b").string();
    const auto ra = run(c);
    const auto rb = run(again);
    REQUIRE(fs::exists(ra.iteration_csv));
    CHECK(slurp(ra.iteration_csv) == slurp(rb.iteration_csv));
    CHECK(slurp(ra.epoch_csv) == slurp(rb.epoch_csv));
    CHECK(read_checkpoint(ra.checkpoint).parameters == read_checkpoint(rb.checkpoint).parameters);

    std::ifstream it(ra.iteration_csv);
    std::string header;
    std::getline(it, header);
    CHECK(header == "iteration,epoch,lr,alpha_sgd,train_loss,comm_seconds_model");
    std::ifstream ep(ra.epoch_csv);
    std::getline(ep, header);
    CHECK(header == "epoch,val_loss,val_accuracy");

    CHECK(ra.log.iterations.size() == 4 * 10);
    CHECK(ra.log.epochs.size() == 4);
    for (std::size_t i = 0; i < ra.log.iterations.size(); ++i) {
        CHECK(ra.log.iterations[i].iteration == i);
        CHECK(std::isfinite(ra.log.iterations[i].train_loss));
        CHECK(ra.log.iterations[i].comm_seconds_model > 0.0);
    }
    CHECK(ra.log.epochs[0].epoch == 1);
    CHECK(ra.log.epochs[1].epoch == 2);
    fs::remove_all(c.out_dir);
    fs::remove_all(again.out_dir);
}

TEST_CASE("zero epochs leaves the initialization") {
    Config c = small_config();
    c.epochs = 0;
    c.out_dir = scratch("zero").string();
    const auto data = data_for(c);
    const auto r = run(c, data);
    CHECK(r.log.iterations.empty());
    CHECK(r.log.epochs.empty());
    const Checkpoint fresh = make_checkpoint(Trainer(c, data));
    const Checkpoint saved = read_checkpoint(r.checkpoint);
    CHECK(saved.iteration == 0);
    CHECK(saved.parameters == fresh.parameters);
    CHECK(saved.optimizer == fresh.optimizer);
    fs::remove_all(c.out_dir);
}

TEST_CASE("a diverging run flushes its partial log") {
    Config c = small_config();
    c.batchnorm = false;
    c.optimizer = OptimizerKind::sgd;
    c.schedule = ScheduleKind::goyal;
    c.eta_scale = 1e9;
    c.out_dir = scratch("diverge").string();
    CHECK_THROWS_AS(run(c), NonFiniteError);
    REQUIRE(fs::exists(fs::path(c.out_dir) / "iterations.csv"));
    std::ifstream in(fs::path(c.out_dir) / "iterations.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines >= 2);
    fs::remove_all(c.out_dir);
}

TEST_CASE("trainer rejects inconsistent inputs") {
    Config c = small_config();
    auto data = data_for(c);
    Config wrong = c;
    wrong.layers = {13, 16, 4};
    CHECK_THROWS_AS(Trainer(wrong, data), ConfigError);
    wrong = c;
    wrong.layers = {12, 16, 5};
    CHECK_THROWS_AS(Trainer(wrong, data), ConfigError);
}
