#include "largebatch/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "largebatch/error.hpp"

namespace largebatch {

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
    const std::size_t dim = input_dim();
    Tensor out({indices.size(), dim});
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = features.data().subspan(indices[r] * dim, dim);
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * dim));
    }
    return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels[i]);
    return out;
}

void Dataset::validate() const {
    if (features.rank() != 2) throw Error("dataset: features must be [examples, input_dim]");
    if (features.dim(0) != labels.size()) throw Error("dataset: label count does not match example count");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw Error("dataset: label out of range at example " + std::to_string(i));
}

std::size_t train_split_size(std::size_t examples) {
    if (examples < 2) throw Error("dataset: need at least 2 examples to split");
    return std::clamp<std::size_t>(examples * 4 / 5, 1, examples - 1);
}

DatasetSplits split_80_20(const Dataset& all) {
    all.validate();
    const std::size_t n = all.size();
    const std::size_t n_train = train_split_size(n);

    auto take = [&](std::size_t lo, std::size_t hi) {
        std::vector<std::size_t> idx(hi - lo);
        std::iota(idx.begin(), idx.end(), lo);
        return Dataset{all.gather(idx), all.gather_labels(idx), all.classes};
    };
    return {take(0, n_train), take(n_train, n)};
}

DatasetSplits make_synthetic_dataset(Rng& rng, std::size_t classes, std::size_t examples, std::size_t input_dim,
                                     double separation) {
    if (classes < 2) throw DomainError("synthetic dataset: need at least 2 classes");
    if (input_dim < classes) throw DomainError("synthetic dataset: input_dim must be >= classes");
    if (examples < classes) throw DomainError("synthetic dataset: examples must be >= classes");
    if (!(separation >= 0.0)) throw DomainError("synthetic dataset: separation must be nonnegative");

    std::vector<int> labels(examples);
    for (std::size_t i = 0; i < examples; ++i) labels[i] = static_cast<int>(i % classes);
    rng.shuffle(labels);

    const double offset = separation / std::sqrt(2.0);
    Dataset all{Tensor({examples, input_dim}), std::move(labels), classes};
    for (std::size_t i = 0; i < examples; ++i) {
        for (std::size_t d = 0; d < input_dim; ++d) all.features.at(i, d) = rng.normal();
        all.features.at(i, static_cast<std::size_t>(all.labels[i])) += offset;
    }
    return split_80_20(all);
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void write_u16(std::ostream& out, std::uint16_t v) {
    out.put(static_cast<char>(v & 0xFF));
    out.put(static_cast<char>(v >> 8));
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw Error("dataset file: truncated");
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint16_t read_u16(std::istream& in) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) throw Error("dataset file: truncated");
    return static_cast<std::uint16_t>(b[0] | b[1] << 8);
}

}  // namespace

void save_dataset_file(const std::filesystem::path& path, const Dataset& all) {
    all.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    write_u32(out, kDatasetMagic);
    write_u32(out, static_cast<std::uint32_t>(all.size()));
    write_u32(out, static_cast<std::uint32_t>(all.input_dim()));
    write_u32(out, static_cast<std::uint32_t>(all.classes));
    for (double v : all.features.data()) write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    for (int label : all.labels) write_u16(out, static_cast<std::uint16_t>(label));
    if (!out) throw Error("failed writing " + path.string());
}

DatasetSplits load_dataset_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open dataset file " + path.string());
    if (read_u32(in) != kDatasetMagic) throw Error("dataset file " + path.string() + ": bad magic");
    const std::size_t examples = read_u32(in);
    const std::size_t input_dim = read_u32(in);
    const std::size_t classes = read_u32(in);
    if (examples == 0 || input_dim == 0 || classes < 2) throw Error("dataset file: degenerate header");

    Dataset all{Tensor({examples, input_dim}), std::vector<int>(examples), classes};
    for (auto& v : all.features.data()) v = static_cast<double>(std::bit_cast<float>(read_u32(in)));
    for (auto& label : all.labels) label = read_u16(in);
    require_finite(all.features.data(), "dataset file features");
    return split_80_20(all);
}

}  // namespace largebatch
