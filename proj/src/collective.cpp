#include "largebatch/collective.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <set>
#include <string>

#include "largebatch/binary16.hpp"
#include "largebatch/error.hpp"

namespace largebatch {

CommPrecision parse_comm_precision(std::string_view name) {
    if (name == "full64") return CommPrecision::full64;
    if (name == "half16") return CommPrecision::half16;
    throw ConfigError("unknown precision '" + std::string(name) + "' (expected full64|half16)");
}

std::string_view to_string(CommPrecision precision) {
    return precision == CommPrecision::full64 ? "full64" : "half16";
}

std::size_t bytes_per_element(CommPrecision precision) noexcept {
    return precision == CommPrecision::full64 ? 8 : 2;
}

AllReduceStats& AllReduceStats::operator+=(const AllReduceStats& other) noexcept {
    hops += other.hops;
    wire_bytes += other.wire_bytes;
    saturations += other.saturations;
    return *this;
}

namespace {

void validate_payloads(std::span<const Tensor> payloads) {
    if (payloads.empty()) throw DomainError("all_reduce: need at least one worker");
    for (std::size_t w = 0; w < payloads.size(); ++w) {
        require_same_shape(payloads[0], payloads[w], "all_reduce");
        require_finite(payloads[w].data(), "all_reduce payload of worker " + std::to_string(w));
    }
}

// One link transfer of values[begin, end) through binary16.
void transmit_half(std::span<const double> src, std::span<double> wire, std::size_t& saturations) {
    for (std::size_t i = 0; i < src.size(); ++i) {
        if (binary16_saturates(src[i])) ++saturations;
        wire[i] = round_to_binary16(src[i]);
    }
}

Tensor ring_all_reduce_half(std::span<const Tensor> payloads, AllReduceStats& stats) {
    const std::size_t workers = payloads.size();
    const std::size_t n = payloads[0].size();
    std::vector<Tensor> buffers(payloads.begin(), payloads.end());

    // Chunk k covers [bounds[k], bounds[k+1]); sizes differ by at most one.
    std::vector<std::size_t> bounds(workers + 1);
    for (std::size_t k = 0; k <= workers; ++k) bounds[k] = k * n / workers;

    std::vector<double> wire;
    auto hop = [&](std::size_t chunk) { stats.wire_bytes += (bounds[chunk + 1] - bounds[chunk]) * 2; };

    // Reduce-scatter: at step s worker r forwards its partial sum of chunk
    // (r - s) mod W to worker r + 1. Within one step each worker sends and
    // receives distinct chunks, so processing senders in order is equivalent
    // to simultaneous exchange.
    for (std::size_t s = 0; s + 1 < workers; ++s) {
        for (std::size_t r = 0; r < workers; ++r) {
            const std::size_t chunk = (r + workers - s % workers) % workers;
            const std::size_t dst = (r + 1) % workers;
            const std::size_t lo = bounds[chunk], len = bounds[chunk + 1] - lo;
            wire.resize(len);
            transmit_half(buffers[r].data().subspan(lo, len), wire, stats.saturations);
            auto acc = buffers[dst].data().subspan(lo, len);
            for (std::size_t i = 0; i < len; ++i) acc[i] += wire[i];
            ++stats.hops;
            hop(chunk);
        }
    }

    // All-gather: worker (k - 1) mod W owns the reduced chunk k and sends it
    // around the ring. Rounding a binary16 value again is exact, so every
    // receiver, the owner included, holds the first-hop wire values.
    Tensor out(payloads[0].shape());
    for (std::size_t k = 0; k < workers; ++k) {
        const std::size_t owner = (k + workers - 1) % workers;
        const std::size_t lo = bounds[k], len = bounds[k + 1] - lo;
        transmit_half(buffers[owner].data().subspan(lo, len), out.data().subspan(lo, len), stats.saturations);
        stats.hops += workers - 1;
        for (std::size_t h = 0; h + 1 < workers; ++h) hop(k);
    }
    return out;
}

}  // namespace

Tensor all_reduce(std::span<const Tensor> payloads, ReduceOp op, CommPrecision precision, AllReduceStats* stats) {
    validate_payloads(payloads);
    const std::size_t workers = payloads.size();
    AllReduceStats local;
    Tensor out;
    if (workers == 1) {
        out = payloads[0];
    } else if (precision == CommPrecision::full64) {
        out = payloads[0];
        for (std::size_t w = 1; w < workers; ++w) {
            auto acc = out.data();
            auto src = payloads[w].data();
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += src[i];
        }
        local.hops = 2 * (workers - 1) * workers;
        local.wire_bytes = 2 * (workers - 1) * payloads[0].size() * 8;
    } else {
        out = ring_all_reduce_half(payloads, local);
    }
    if (op == ReduceOp::average) {
        const auto w = static_cast<double>(workers);
        for (auto& v : out.data()) v /= w;
    }
    if (stats) *stats += local;
    return out;
}

// --- frames ------------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(in[offset + i]) << (8 * i));
    return value;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(std::span<const double> values, CommPrecision precision,
                                       std::size_t* saturations) {
    require_finite(values, "frame payload");
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderBytes + values.size() * bytes_per_element(precision));
    put_le<std::uint32_t>(out, kFrameMagic);
    put_le<std::uint16_t>(out, kFrameVersion);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(precision));
    put_le<std::uint64_t>(out, values.size());
    for (double v : values) {
        if (precision == CommPrecision::full64) {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        } else {
            if (saturations && binary16_saturates(v)) ++*saturations;
            put_le<std::uint16_t>(out, to_binary16(v));
        }
    }
    return out;
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameHeaderBytes) throw Error("frame: truncated header");
    if (get_le<std::uint32_t>(bytes, 0) != kFrameMagic) throw Error("frame: bad magic");
    if (get_le<std::uint16_t>(bytes, 4) != kFrameVersion) throw Error("frame: unsupported version");
    const auto raw_precision = get_le<std::uint16_t>(bytes, 6);
    if (raw_precision > 1) throw Error("frame: unknown precision " + std::to_string(raw_precision));
    const auto precision = static_cast<CommPrecision>(raw_precision);
    const auto count = get_le<std::uint64_t>(bytes, 8);
    const std::size_t width = bytes_per_element(precision);
    if ((bytes.size() - kFrameHeaderBytes) / width < count ||
        bytes.size() != kFrameHeaderBytes + count * width)
        throw Error("frame: payload length does not match element count");

    DecodedFrame frame{precision, std::vector<double>(count)};
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = kFrameHeaderBytes + i * width;
        frame.values[i] = precision == CommPrecision::full64
                              ? std::bit_cast<double>(get_le<std::uint64_t>(bytes, at))
                              : from_binary16(get_le<std::uint16_t>(bytes, at));
    }
    require_finite(frame.values, "frame payload");
    return frame;
}

// --- cost model --------------------------------------------------------------

void CostModel::validate() const {
    if (!(alpha_latency >= 0.0) || !(beta_bandwidth >= 0.0) || !(gamma_compute >= 0.0))
        throw DomainError("cost model parameters must be nonnegative");
}

double ring_time(std::size_t payload_bytes, std::size_t workers, const CostModel& model) {
    model.validate();
    if (workers <= 1) return 0.0;
    const auto w = static_cast<double>(workers);
    const double hops = 2.0 * (w - 1.0);
    return hops * model.alpha_latency + (hops / w) * static_cast<double>(payload_bytes) * model.beta_bandwidth;
}

double iteration_time(std::size_t payload_bytes, std::size_t workers, const CostModel& model) {
    return model.gamma_compute + ring_time(payload_bytes, workers, model);
}

double scaling_efficiency(std::size_t workers, const CostModel& model, std::size_t payload_bytes) {
    if (!(model.gamma_compute > 0.0)) throw DomainError("scaling_efficiency: gamma_compute must be positive");
    return model.gamma_compute / iteration_time(payload_bytes, workers, model);
}

CostModelFit fit_cost_model(std::span<const IterationMeasurement> measurements, std::size_t payload_bytes) {
    std::set<std::size_t> distinct;
    for (const auto& m : measurements) {
        if (m.workers == 0) throw DomainError("fit_cost_model: worker count must be positive");
        if (!std::isfinite(m.seconds)) throw DomainError("fit_cost_model: non-finite time");
        distinct.insert(m.workers);
    }
    if (distinct.size() < 3) throw DomainError("fit_cost_model: need at least 3 distinct worker counts");
    if (payload_bytes == 0) throw DomainError("fit_cost_model: payload_bytes must be positive");

    const auto rows = static_cast<Eigen::Index>(measurements.size());
    Eigen::MatrixXd a(rows, 3);
    Eigen::VectorXd y(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto w = static_cast<double>(measurements[i].workers);
        const double hops = 2.0 * (w - 1.0);
        a(i, 0) = hops;
        a(i, 1) = hops / w * static_cast<double>(payload_bytes);
        a(i, 2) = 1.0;
        y(i) = measurements[i].seconds;
    }
    // Columns differ by many orders of magnitude; equilibrate before solving.
    Eigen::Vector3d scale = a.cwiseAbs().colwise().maxCoeff().transpose();
    for (int c = 0; c < 3; ++c)
        if (scale(c) == 0.0) throw DomainError("fit_cost_model: degenerate design (all single-worker points)");
    const Eigen::MatrixXd scaled = a * scale.cwiseInverse().asDiagonal();
    const Eigen::Vector3d solution = scaled.colPivHouseholderQr().solve(y).cwiseQuotient(scale);

    CostModelFit fit;
    fit.model = {solution(0), solution(1), solution(2)};
    const Eigen::VectorXd residuals = y - a * solution;
    fit.residuals.assign(residuals.data(), residuals.data() + residuals.size());
    return fit;
}

CostModel cost_model_for_efficiency(double gamma_compute, std::size_t payload_bytes, std::size_t large_workers,
                                    double large_efficiency, std::size_t small_workers,
                                    double relative_efficiency) {
    if (!(gamma_compute > 0.0)) throw DomainError("gamma_compute must be positive");
    if (large_workers <= small_workers || small_workers < 2) throw DomainError("need 2 <= small < large workers");
    if (!(large_efficiency > 0.0 && large_efficiency <= 1.0) || !(relative_efficiency > 0.0))
        throw DomainError("efficiencies must lie in (0, 1]");
    const double small_efficiency = large_efficiency / relative_efficiency;
    if (!(small_efficiency <= 1.0)) throw DomainError("implied small-cluster efficiency exceeds 1");

    // Communication time as a fraction of gamma: 1/eff - 1.
    const double k_large = 1.0 / large_efficiency - 1.0;
    const double k_small = 1.0 / small_efficiency - 1.0;
    const auto p = static_cast<double>(payload_bytes);
    const auto wl = static_cast<double>(large_workers);
    const auto ws = static_cast<double>(small_workers);
    const double a11 = 2.0 * (wl - 1.0), a12 = 2.0 * (wl - 1.0) / wl * p;
    const double a21 = 2.0 * (ws - 1.0), a22 = 2.0 * (ws - 1.0) / ws * p;
    const double det = a11 * a22 - a12 * a21;
    if (det == 0.0) throw DomainError("efficiency targets are degenerate");
    const double alpha = gamma_compute * (k_large * a22 - a12 * k_small) / det;
    const double beta = gamma_compute * (a11 * k_small - a21 * k_large) / det;
    if (alpha < 0.0 || beta < 0.0) throw DomainError("no nonnegative latency/bandwidth pair meets these targets");
    return {alpha, beta, gamma_compute};
}

}  // namespace largebatch
