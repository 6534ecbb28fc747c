#include "sgpbft/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "sgpbft/report.hpp"

namespace sgpbft {

const char* protocol_kind_name(ProtocolKind kind) {
    switch (kind) {
        case ProtocolKind::Pbft: return "pbft";
        case ProtocolKind::SgPbft: return "sgpbft";
        case ProtocolKind::GPbft: return "gpbft";
        case ProtocolKind::CPbft: return "cpbft";
    }
    return "unknown";
}

std::uint64_t formula_messages(ProtocolKind kind, std::uint64_t n) {
    if (n < 4) throw ConfigError("formula_messages requires n >= 4");
    switch (kind) {
        case ProtocolKind::Pbft:
            return 2 * n * (n - 1);
        case ProtocolKind::SgPbft: {
            if (n % 2 != 0) throw ConfigError("sg-pbft formula requires an even n");
            const std::uint64_t half = n / 2;
            return (half - 1) * (half + 1);
        }
        case ProtocolKind::GPbft:
            return (n + 3) * n / 2;
        case ProtocolKind::CPbft:
            return n * (n - 1);
    }
    throw ConfigError("unknown protocol kind");
}

std::vector<double> batch_means(const std::vector<double>& delays, std::size_t batch) {
    std::vector<double> means;
    if (batch == 0) batch = 1;
    for (std::size_t start = 0; start < delays.size(); start += batch) {
        const std::size_t end = std::min(start + batch, delays.size());
        double sum = 0.0;
        for (std::size_t i = start; i < end; ++i) sum += delays[i];
        means.push_back(sum / static_cast<double>(end - start));
    }
    return means;
}

namespace {

double percentile99(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t rank =
        static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(values.size())));
    return values[std::max<std::size_t>(rank, 1) - 1];
}

}  // namespace

std::vector<MetricsRecord> aggregate(const std::vector<RunReport>& reports) {
    std::map<std::tuple<Protocol, std::uint32_t, std::uint32_t>, std::vector<const RunReport*>> cells;
    for (const RunReport& report : reports) {
        cells[{report.spec.protocol, report.spec.n, report.spec.f}].push_back(&report);
    }

    std::vector<MetricsRecord> records;
    for (const auto& [key, cell] : cells) {
        const auto& [protocol, n, f] = key;
        const std::string first_id = scenario_id(cell.front()->spec);
        for (const RunReport* report : cell) {
            ScenarioSpec probe = report->spec;
            probe.seed = cell.front()->spec.seed;  // seeds may differ within a cell
            ScenarioSpec base = cell.front()->spec;
            base.seed = probe.seed;
            if (scenario_id(probe) != scenario_id(base)) {
                throw ConfigError("aggregate: mixed configurations in one (protocol, n, f) cell");
            }
        }

        MetricsRecord record;
        record.protocol = protocol == Protocol::Pbft ? ProtocolKind::Pbft : ProtocolKind::SgPbft;
        record.n = n;
        record.f = f;
        record.scenario_id = first_id;

        std::vector<double> delays;
        std::uint64_t completed_requests = 0;
        std::uint64_t protocol_msgs = 0;
        double throughput_sum = 0.0;
        for (const RunReport* report : cell) {
            record.requests += report->spec.effective_requests();
            for (std::size_t i = 0; i < report->requests.size(); ++i) {
                if (auto delay = transaction_delay(*report, i)) {
                    delays.push_back(static_cast<double>(*delay));
                    ++completed_requests;
                }
            }
            protocol_msgs += report->protocol_messages();
            throughput_sum += throughput_per_kilotick(*report);
        }

        record.batch_mean_delays = batch_means(delays);
        double total = 0.0;
        for (double d : delays) total += d;
        record.mean_delay_ticks = delays.empty() ? 0.0 : total / static_cast<double>(delays.size());
        record.p99_delay_ticks = percentile99(delays);
        record.throughput_per_kilotick = throughput_sum / static_cast<double>(cell.size());
        record.messages_measured =
            completed_requests == 0 ? 0 : protocol_msgs / completed_requests;
        record.messages_formula = formula_messages(record.protocol, n);
        records.push_back(std::move(record));
    }
    return records;
}

MetricsRecord analytic_record(ProtocolKind kind, std::uint32_t n, const LatencyModel& latency) {
    MetricsRecord record;
    record.protocol = kind;
    record.n = n;
    record.analytic = true;
    record.messages_formula = formula_messages(kind, n);
    record.messages_measured = 0;

    // Delay proxy: one round-trip per protocol phase plus the per-node share
    // of message processing. Phases: request, proposal, vote, confirm.
    const double hop = static_cast<double>(latency.mean_base() + latency.per_message_overhead);
    const double load = static_cast<double>(record.messages_formula) /
                        static_cast<double>(n) *
                        static_cast<double>(latency.per_message_overhead);
    record.mean_delay_ticks = 4.0 * hop + load;
    record.p99_delay_ticks = record.mean_delay_ticks;
    record.throughput_per_kilotick =
        record.mean_delay_ticks > 0.0 ? 1000.0 / record.mean_delay_ticks : 0.0;
    return record;
}

}  // namespace sgpbft
