#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "largebatch/dataset.hpp"
#include "largebatch/error.hpp"
#include "largebatch/mlp.hpp"
#include "largebatch/rng.hpp"

using namespace largebatch;

namespace {

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
    std::vector<int> l(n);
    for (auto& v : l) v = static_cast<int>(rng.uniform_index(classes));
    return l;
}

// Nearest class-mean classifier fitted on `fit`, scored on `eval`.
double nearest_mean_accuracy(const Dataset& fit, const Dataset& eval) {
    const std::size_t d = fit.input_dim(), c = fit.classes;
    std::vector<double> mean(c * d, 0.0);
    std::vector<double> count(c, 0.0);
    for (std::size_t r = 0; r < fit.size(); ++r) {
        count[fit.labels[r]] += 1;
        for (std::size_t j = 0; j < d; ++j) mean[fit.labels[r] * d + j] += fit.features.at(r, j);
    }
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t j = 0; j < d; ++j) mean[k * d + j] /= count[k];
    std::size_t correct = 0;
    for (std::size_t r = 0; r < eval.size(); ++r) {
        std::size_t best = 0;
        double best_d = INFINITY;
        for (std::size_t k = 0; k < c; ++k) {
            double dist = 0;
            for (std::size_t j = 0; j < d; ++j) dist += std::pow(eval.features.at(r, j) - mean[k * d + j], 2);
            if (dist < best_d) best_d = dist, best = k;
        }
        correct += static_cast<int>(best) == eval.labels[r];
    }
    return double(correct) / double(eval.size());
}

void check_gradients(bool batchnorm, std::uint64_t seed) {
    Rng rng(seed);
    Mlp model(ModelSpec::uniform({5, 7, 6, 3}, batchnorm), rng);
    // Zero biases can put a pre-activation exactly on the ReLU kink, where
    // central differences straddle two slopes.
    for (auto& p : model.parameters())
        if (p.name.ends_with(".bias") || p.name.ends_with(".beta")) *p.value = rand_normal(rng, p.value->shape(), 0, 0.3);
    const Tensor x = rand_normal(rng, {6, 5}, 0, 1);
    const auto labels = random_labels(rng, 6, 3);
    const auto analytic = model.forward_backward(x, labels);
    const double h = 1e-5;
    auto params = model.parameters();
    REQUIRE(analytic.grads.size() == params.size());
    std::size_t checked = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p].value;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double keep = t[i];
            t[i] = keep + h;
            const double up = model.forward_backward(x, labels).loss;
            t[i] = keep - h;
            const double down = model.forward_backward(x, labels).loss;
            t[i] = keep;
            const double num = (up - down) / (2 * h);
            const double a = analytic.grads[p][i];
            if (std::abs(num) < 1e-7 && std::abs(a) < 1e-7) continue;
            INFO(params[p].name << "[" << i << "] analytic=" << a << " numeric=" << num);
            REQUIRE(std::abs(a - num) / std::max(std::abs(a), std::abs(num)) < 1e-4);
            ++checked;
        }
    }
    CHECK(checked > 50);
}

}  // namespace

TEST_CASE("matmul variants agree with a naive product") {
    Rng rng(1);
    const Tensor a = rand_normal(rng, {4, 3}, 0, 1), b = rand_normal(rng, {3, 5}, 0, 1);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 3; ++k) s += a.at(i, k) * b.at(k, j);
            CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    const Tensor d = rand_normal(rng, {4, 5}, 0, 1);
    const Tensor tn = matmul_tn(a, d);  // [3,5]
    const Tensor nt = matmul_nt(d, b);  // [4,3]
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 4; ++k) s += a.at(k, i) * d.at(k, j);
            CHECK(tn.at(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 5; ++k) s += d.at(i, k) * b.at(j, k);
            CHECK(nt.at(i, j) == doctest::Approx(s).epsilon(1e-14));
        }
    CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("softmax cross-entropy") {
    const Tensor logits({2, 3}, std::vector<double>{0, 0, 0, 1000, 0, 0});
    const std::vector<int> labels = {1, 0};
    Tensor g({2, 3});
    const double loss = softmax_cross_entropy(logits, labels, &g);
    CHECK(loss == doctest::Approx(std::log(3.0) / 2).epsilon(1e-14));
    CHECK(g.at(0, 1) == doctest::Approx((1.0 / 3 - 1) / 2).epsilon(1e-14));
    CHECK(g.at(1, 0) == doctest::Approx(0.0));
    const std::vector<int> bad = {3, 0};
    CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), Error);
}

TEST_CASE("gradients match finite differences without batch norm") {
    for (std::uint64_t s = 1; s <= 5; ++s) check_gradients(false, s);
}

TEST_CASE("gradients match finite differences with batch norm") {
    for (std::uint64_t s = 1; s <= 5; ++s) check_gradients(true, s);
}

TEST_CASE("untrained model predicts near-uniformly") {
    for (bool bn : {false, true}) {
        Rng rng(2);
        const auto data = make_synthetic_dataset(rng, 10, 2000, 64, 6.0);
        Mlp model(ModelSpec::uniform({64, 128, 64, 10}, bn), rng);
        std::vector<std::size_t> idx(256);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        const double loss = model.forward_backward(data.train.gather(idx), data.train.gather_labels(idx)).loss;
        CHECK(std::abs(loss - std::log(10.0)) < 0.1);
    }
}

TEST_CASE("duplicating a minibatch leaves loss and gradients unchanged") {
    Rng rng(3);
    Mlp model(ModelSpec::uniform({6, 9, 4}, false), rng);
    const Tensor x = rand_normal(rng, {5, 6}, 0, 1);
    const auto labels = random_labels(rng, 5, 4);
    std::vector<double> xx(x.data().begin(), x.data().end());
    xx.insert(xx.end(), x.data().begin(), x.data().end());
    std::vector<int> ll = labels;
    ll.insert(ll.end(), labels.begin(), labels.end());
    const auto once = model.forward_backward(x, labels);
    const auto twice = model.forward_backward(Tensor({10, 6}, xx), ll);
    CHECK(twice.loss == doctest::Approx(once.loss).epsilon(1e-14));
    for (std::size_t p = 0; p < once.grads.size(); ++p) CHECK(max_abs_diff(once.grads[p], twice.grads[p]) < 1e-14);
}

TEST_CASE("parameter layout") {
    Rng rng(4);
    ModelSpec spec = ModelSpec::uniform({8, 16, 12, 3}, true);
    spec.batchnorm = {true, false};
    Mlp model(spec, rng);
    std::vector<std::string> names;
    for (const auto& p : model.parameters()) names.push_back(p.name);
    CHECK(names == std::vector<std::string>{"fc0.weight", "bn0.gamma", "bn0.beta", "fc1.weight", "fc1.bias",
                                            "out.weight", "out.bias"});
    CHECK(model.parameter_count() == 8 * 16 + 16 + 16 + 16 * 12 + 12 + 12 * 3 + 3);
    CHECK(model.bn_layers().size() == 1);

    Rng a(9), b(9);
    Mlp m1(spec, a), m2(spec, b);
    for (std::size_t i = 0; i < m1.parameters().size(); ++i)
        CHECK(*m1.parameters()[i].value == *m2.parameters()[i].value);

    CHECK_THROWS_AS(ModelSpec::uniform({8}, false).validate(), Error);
    CHECK_THROWS_AS(ModelSpec::uniform({8, 0, 3}, false).validate(), Error);
}

TEST_CASE("non-finite activations name the layer") {
    Rng rng(5);
    Mlp model(ModelSpec::uniform({3, 4, 2}, false), rng);
    model.parameters()[0].value->fill(1e308);
    const Tensor x = Tensor({2, 3}, 1e10);
    const std::vector<int> labels = {0, 1};
    try {
        model.forward_backward(x, labels);
        FAIL("expected non-finite error");
    } catch (const NonFiniteError& e) {
        CHECK(std::string(e.what()).find("hidden layer 0") != std::string::npos);
    }

    Mlp bn_model(ModelSpec::uniform({3, 4, 2}, true), rng);
    CHECK_THROWS_AS(bn_model.logits_eval(Tensor({1, 3})), Error);
}

TEST_CASE("synthetic dataset properties") {
    Rng a(7), b(7);
    const auto d1 = make_synthetic_dataset(a, 10, 1000, 16, 6.0);
    const auto d2 = make_synthetic_dataset(b, 10, 1000, 16, 6.0);
    CHECK(d1.train.features == d2.train.features);
    CHECK(d1.train.labels == d2.train.labels);
    CHECK(d1.validation.features == d2.validation.features);
    CHECK(d1.train.size() == 800);
    CHECK(d1.validation.size() == 200);

    std::vector<int> counts(10, 0);
    for (int l : d1.train.labels) ++counts[l];
    for (int l : d1.validation.labels) ++counts[l];
    for (int c : counts) CHECK(c == 100);

    Rng c(8);
    CHECK_THROWS_AS(make_synthetic_dataset(c, 10, 1000, 5, 1.0), Error);
    CHECK_THROWS_AS(make_synthetic_dataset(c, 10, 5, 16, 1.0), Error);
    CHECK_THROWS_AS(make_synthetic_dataset(c, 10, 100, 16, -1.0), Error);
}

TEST_CASE("well-separated classes are linearly separable") {
    Rng rng(10);
    const auto d = make_synthetic_dataset(rng, 2, 20000, 8, 10.0);
    CHECK(nearest_mean_accuracy(d.train, d.validation) >= 0.999);
    CHECK(nearest_mean_accuracy(d.train, d.train) >= 0.999);
}

TEST_CASE("zero separation is at chance") {
    Rng rng(11);
    const auto d = make_synthetic_dataset(rng, 10, 20000, 16, 0.0);
    CHECK(nearest_mean_accuracy(d.train, d.validation) <= 0.1 + 0.05);
}

TEST_CASE("dataset file round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "largebatch_test_mlp";
    std::filesystem::create_directories(dir);
    Rng rng(12);
    Dataset all;
    all.classes = 3;
    all.features = Tensor({10, 2});
    for (std::size_t i = 0; i < 20; ++i) all.features[i] = double(float(rng.normal()));
    for (int i = 0; i < 10; ++i) all.labels.push_back(i % 3);
    const auto path = dir / "tiny.bin";
    save_dataset_file(path, all);
    CHECK(std::filesystem::file_size(path) == 16 + 20 * 4 + 10 * 2);
    const auto back = load_dataset_file(path);
    CHECK(back.train.size() == 8);
    CHECK(back.validation.size() == 2);
    CHECK(back.train.features.at(0, 0) == all.features.at(0, 0));
    CHECK(back.validation.labels[1] == all.labels[9]);

    std::ofstream(dir / "bad.bin", std::ios::binary) << "nope";
    CHECK_THROWS_AS(load_dataset_file(dir / "bad.bin"), Error);
    CHECK_THROWS_AS(load_dataset_file(dir / "missing.bin"), Error);
    std::filesystem::remove_all(dir);
}
