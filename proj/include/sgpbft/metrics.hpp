#pragma once

#include <string>
#include <vector>

#include "sgpbft/sim.hpp"

namespace sgpbft {

enum class ProtocolKind : std::uint8_t { Pbft, SgPbft, GPbft, CPbft };

const char* protocol_kind_name(ProtocolKind kind);

// Closed-form per-consensus message counts:
//   PBFT     2n(n-1)         SG-PBFT  (n/2-1)(n/2+1)
//   G-PBFT   (n+3)n/2        CPBFT    n(n-1)
// SG-PBFT requires an even n. Client request/reply legs are excluded.
std::uint64_t formula_messages(ProtocolKind kind, std::uint64_t n);

struct MetricsRecord {
    ProtocolKind protocol{ProtocolKind::Pbft};
    std::uint32_t n{0};
    std::uint32_t f{0};
    std::uint32_t requests{0};
    double mean_delay_ticks{0.0};
    double p99_delay_ticks{0.0};
    double throughput_per_kilotick{0.0};
    std::uint64_t messages_measured{0};
    std::uint64_t messages_formula{0};
    bool analytic{false};
    std::vector<double> batch_mean_delays;  // batch-of-10 means, plot input
    std::string scenario_id;
};

// One record per (protocol, n, f) cell; delays are averaged in batches of
// ten. Reports with mismatching configs in one cell are rejected.
std::vector<MetricsRecord> aggregate(const std::vector<RunReport>& reports);

// Batch-of-10 means over the completed-request delays, in request order; a
// final shorter batch keeps any remainder.
std::vector<double> batch_means(const std::vector<double>& delays, std::size_t batch = 10);

// Analytic baselines for the protocols without an engine: message count from
// the closed form, delay proxy of one phase round-trip each plus the
// per-message processing load spread over n nodes.
MetricsRecord analytic_record(ProtocolKind kind, std::uint32_t n, const LatencyModel& latency);

}  // namespace sgpbft
