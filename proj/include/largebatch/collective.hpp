#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "largebatch/tensor.hpp"

namespace largebatch {

// Wire precision of the simulated network. Accumulation is always 64-bit.
enum class CommPrecision : std::uint16_t { full64 = 0, half16 = 1 };

CommPrecision parse_comm_precision(std::string_view name);
std::string_view to_string(CommPrecision precision);
std::size_t bytes_per_element(CommPrecision precision) noexcept;

enum class ReduceOp { sum, average };

// Counters collected while simulating a collective. Saturation of a binary16
// payload element is a warning, not an error.
struct AllReduceStats {
    std::size_t hops = 0;         // peer-to-peer chunk transfers
    std::size_t wire_bytes = 0;   // payload bytes moved over all links
    std::size_t saturations = 0;  // elements clamped to +/-65504

    AllReduceStats& operator+=(const AllReduceStats& other) noexcept;
};

// Synchronous all-reduce over payloads.size() workers. Blocks until every
// payload is supplied (the caller hands all of them over at once).
//
// full64: exact left-to-right sum in worker-index order.
// half16: ring reduce-scatter followed by all-gather; every transmitted chunk
// is rounded through binary16 and widened before being added in 64-bit. All
// workers end with the same gathered (wire) values, which is the result. A
// single worker sends nothing and returns its payload unchanged.
//
// average divides the sum by the worker count afterwards.
Tensor all_reduce(std::span<const Tensor> payloads, ReduceOp op, CommPrecision precision,
                  AllReduceStats* stats = nullptr);

// --- chunk wire format -------------------------------------------------------
//
// Little-endian header {u32 magic, u16 version, u16 precision, u64 count}
// followed by `count` elements: IEEE binary64 for full64, binary16 for half16.

inline constexpr std::uint32_t kFrameMagic = 0x41524443u;
inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 16;

struct DecodedFrame {
    CommPrecision precision;
    std::vector<double> values;
};

std::vector<std::uint8_t> encode_frame(std::span<const double> values, CommPrecision precision,
                                       std::size_t* saturations = nullptr);
// Throws Error on a bad magic, version, precision or length.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes);

// --- analytic cost model -----------------------------------------------------

struct CostModel {
    double alpha_latency = 0.0;   // seconds per hop
    double beta_bandwidth = 0.0;  // seconds per byte
    double gamma_compute = 0.0;   // seconds of forward+backward per iteration

    void validate() const;
};

// 2(W-1) alpha + (2(W-1)/W) bytes beta; zero for a single worker.
double ring_time(std::size_t payload_bytes, std::size_t workers, const CostModel& model);

double iteration_time(std::size_t payload_bytes, std::size_t workers, const CostModel& model);

// gamma / (gamma + ring_time). Requires gamma > 0.
double scaling_efficiency(std::size_t workers, const CostModel& model, std::size_t payload_bytes);

struct IterationMeasurement {
    std::size_t workers;
    double seconds;  // full iteration time
};

struct CostModelFit {
    CostModel model;
    std::vector<double> residuals;  // measured - predicted, input order
};

// Least-squares fit of (alpha, beta, gamma) to iteration times, each modelled
// as gamma + ring_time. Needs at least three distinct worker counts; throws
// DomainError otherwise.
CostModelFit fit_cost_model(std::span<const IterationMeasurement> measurements, std::size_t payload_bytes);

// Latency and bandwidth parameters for which, with the given gamma, the
// efficiency at `large_workers` is `large_efficiency` against one worker and
// `relative_efficiency` against `small_workers`. Throws DomainError when
// no nonnegative solution exists.
CostModel cost_model_for_efficiency(double gamma_compute, std::size_t payload_bytes, std::size_t large_workers,
                                    double large_efficiency, std::size_t small_workers,
                                    double relative_efficiency);

}  // namespace largebatch
