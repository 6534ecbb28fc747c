#include "sgpbft/report.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace sgpbft {

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

const char* latency_kind_name(LatencyModel::Kind kind) {
    return kind == LatencyModel::Kind::Constant ? "constant" : "uniform";
}

const char* workload_name(WorkloadMode mode) {
    return mode == WorkloadMode::Sequential ? "sequential" : "burst";
}

const char* quorum_name(QuorumMode mode) { return mode == QuorumMode::Geq ? "geq" : "strict"; }

void append_spec(std::ostringstream& out, const ScenarioSpec& spec) {
    out << "protocol = " << protocol_name(spec.protocol) << "\n";
    out << "n = " << spec.n << "\n";
    out << "f = " << spec.f << "\n";
    out << "requests = " << spec.effective_requests() << "\n";
    out << "latency = " << latency_kind_name(spec.latency.kind);
    if (spec.latency.kind == LatencyModel::Kind::Constant) {
        out << ":" << spec.latency.constant;
    } else {
        out << ":" << spec.latency.lo << ".." << spec.latency.hi;
    }
    out << "\n";
    out << "per_message_overhead = " << spec.latency.per_message_overhead << "\n";
    out << "seed = " << spec.seed << "\n";
    out << "timeout_ticks = " << spec.effective_timeout() << "\n";
    if (spec.protocol == Protocol::SgPbft) {
        out << "rotation_m = " << spec.effective_rotation_m() << "\n";
        out << "rotation_period = " << spec.rotation_period << "\n";
        out << "quorum_mode = " << quorum_name(spec.quorum) << "\n";
    }
    out << "workload = " << workload_name(spec.workload) << "\n";
    for (const FaultSpec& fault : spec.faults) {
        out << "fault = " << fault.node.value << " " << fault_behavior_name(fault.behavior);
        if (fault.behavior == FaultBehavior::DelayAll) out << " " << fault.delay_ticks;
        if (fault.behavior == FaultBehavior::DropRate) out << " " << fixed6(fault.drop_rate);
        out << "\n";
    }
}

}  // namespace

std::string hex(const Bytes& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (std::uint8_t b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

std::string hex(const Digest& digest) {
    return hex(Bytes(digest.bytes.begin(), digest.bytes.end()));
}

std::string scenario_id(const ScenarioSpec& spec) {
    std::ostringstream echo;
    append_spec(echo, spec);
    echo << "budget = " << spec.effective_budget() << "\n";
    for (const Bytes& payload : spec.payloads) echo << "payload = " << hex(payload) << "\n";
    const std::string text = echo.str();
    const Digest d = digest_of_bytes(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return hex(d).substr(0, 16);
}

std::string serialize_report(const RunReport& report) {
    std::ostringstream out;
    out << "# run report\n";
    out << "scenario_id = " << scenario_id(report.spec) << "\n";
    append_spec(out, report.spec);
    out << "complete = " << (report.complete ? "true" : "false") << "\n";
    out << "end_tick = " << report.end_tick << "\n";

    out << "\n[requests]\n";
    for (std::size_t i = 0; i < report.requests.size(); ++i) {
        const RequestOutcome& r = report.requests[i];
        out << i << ": injected=" << r.injected;
        if (r.completed) {
            out << " completed=" << *r.completed << " delay=" << (*r.completed - r.injected)
                << " view=" << r.view.value << " seq=" << r.seq.value << " result=" << hex(r.result);
        } else {
            out << " incomplete";
        }
        out << "\n";
    }

    out << "\n[messages]\n";
    for (const auto& [kind, count] : report.sent) {
        out << "sent." << msg_kind_name(kind) << " = " << count << "\n";
    }
    for (const auto& [kind, count] : report.delivered) {
        out << "delivered." << msg_kind_name(kind) << " = " << count << "\n";
    }
    for (const auto& [kind, count] : report.dropped) {
        out << "dropped." << msg_kind_name(kind) << " = " << count << "\n";
    }
    out << "protocol_messages = " << report.protocol_messages() << "\n";
    out << "engine_drops = " << report.engine_drops << "\n";

    if (!report.view_changes.empty()) {
        out << "\n[view_changes]\n";
        for (const ViewChangeRecord& vc : report.view_changes) {
            out << vc.from.value << " -> " << vc.to.value << " convicted=" << vc.convicted.value
                << " at=" << vc.at << "\n";
        }
    }

    if (!report.rounds.empty()) {
        out << "\n[rounds]\n";
        for (const RoundRecord& round : report.rounds) {
            out << round.request_index << ": view=" << round.view.value << " seq=" << round.seq.value
                << " result=" << hex(round.final_result);
            out << " judgments=";
            bool first = true;
            for (const auto& [node, judged] : round.judgments) {
                if (!first) out << ",";
                first = false;
                out << node.value << ":" << hex(judged);
            }
            out << " evidence=";
            first = true;
            for (const NodeId node : round.evidence) {
                if (!first) out << ",";
                first = false;
                out << node.value;
            }
            out << " scores=";
            first = true;
            for (const auto& [node, score] : round.scores_after) {
                if (!first) out << ",";
                first = false;
                out << node.value << ":" << score;
            }
            out << "\n";
        }
    }

    if (!report.rotations.empty()) {
        out << "\n[rotations]\n";
        for (const RotationRecord& rotation : report.rotations) {
            out << "after_round=" << rotation.after_round << " out=";
            bool first = true;
            for (const NodeId node : rotation.moved_out) {
                if (!first) out << ",";
                first = false;
                out << node.value;
            }
            out << " in=";
            first = true;
            for (const NodeId node : rotation.moved_in) {
                if (!first) out << ",";
                first = false;
                out << node.value;
            }
            out << " consensus=";
            first = true;
            for (const NodeId node : rotation.consensus) {
                if (!first) out << ",";
                first = false;
                out << node.value;
            }
            out << "\n";
        }
    }

    if (!report.final_scores.empty()) {
        out << "\n[scores]\n";
        for (const auto& [node, score] : report.final_scores) {
            out << node.value << " = " << score << "\n";
        }
        out << "consensus =";
        for (const NodeId node : report.final_consensus) out << " " << node.value;
        out << "\n";
    }
    return out.str();
}

std::string csv_header() {
    return "scenario_id,protocol,n,f,requests,mean_delay_ticks,p99_delay_ticks,"
           "throughput_per_kilotick,messages_measured,messages_formula,source";
}

std::string csv_row(const MetricsRecord& record) {
    std::ostringstream out;
    out << record.scenario_id << "," << protocol_kind_name(record.protocol) << "," << record.n << ","
        << record.f << "," << record.requests << "," << fixed6(record.mean_delay_ticks) << ","
        << fixed6(record.p99_delay_ticks) << "," << fixed6(record.throughput_per_kilotick) << ","
        << record.messages_measured << "," << record.messages_formula << ","
        << (record.analytic ? "analytic" : "simulated");
    return out.str();
}

}  // namespace sgpbft
