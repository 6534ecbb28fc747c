#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgpbft/faults.hpp"
#include "sgpbft/sg_pbft.hpp"
#include "sgpbft/types.hpp"

namespace sgpbft {

enum class Protocol : std::uint8_t { Pbft, SgPbft };
enum class WorkloadMode : std::uint8_t { Sequential, Burst };

const char* protocol_name(Protocol protocol);

// Transit model. Delivery of a message sent at tick t arrives at
// t + base + extra_delay; the receiving node then spends
// per_message_overhead ticks processing it through a single-server ingress
// queue. Clients process at arrival (they are not simulated nodes).
struct LatencyModel {
    enum class Kind : std::uint8_t { Constant, UniformRange };
    Kind kind{Kind::Constant};
    Tick constant{1};
    Tick lo{1};
    Tick hi{1};
    Tick per_message_overhead{1};

    Tick mean_base() const { return kind == Kind::Constant ? constant : (lo + hi) / 2; }
};

struct ScenarioSpec {
    Protocol protocol{Protocol::Pbft};
    std::uint32_t n{4};
    std::uint32_t f{1};
    std::uint32_t requests{1};
    LatencyModel latency;
    std::uint64_t seed{1};
    std::vector<FaultSpec> faults;
    Tick timeout_ticks{0};          // 0: default 10 x mean one-way latency
    std::uint32_t rotation_m{0};    // 0: default max(1, CN/10)
    std::uint32_t rotation_period{50};
    QuorumMode quorum{QuorumMode::Geq};
    WorkloadMode workload{WorkloadMode::Sequential};
    Tick tick_budget{0};            // 0: derived from scenario size
    std::vector<Bytes> payloads;    // optional explicit operations (one request each)

    Tick effective_timeout() const;
    Tick effective_budget() const;
    std::uint32_t effective_requests() const {
        return payloads.empty() ? requests : static_cast<std::uint32_t>(payloads.size());
    }
    std::uint32_t effective_rotation_m() const;
};

// Throws ConfigError on any violated engine precondition.
void validate(const ScenarioSpec& spec);

struct ExecutionHooks {
    std::function<Executor(NodeId)> make_executor;  // unset: default_executor everywhere
    ApplyFn on_apply;                               // finalized result applied at a node
};

struct RequestOutcome {
    Tick injected{0};
    std::optional<Tick> completed;
    Bytes result;
    View view;
    SeqNum seq;
};

struct RoundRecord {
    std::uint32_t request_index{0};
    View view;
    SeqNum seq;
    Bytes final_result;
    std::map<NodeId, Bytes> judgments;
    std::set<NodeId> evidence;
    std::map<NodeId, int> scores_after;
};

struct RotationRecord {
    std::uint32_t after_round{0};
    std::vector<NodeId> moved_out;
    std::vector<NodeId> moved_in;
    std::vector<NodeId> consensus;
};

struct ViewChangeRecord {
    View from;
    View to;
    NodeId convicted;
    Tick at{0};
};

struct RunReport {
    ScenarioSpec spec;
    std::vector<RequestOutcome> requests;
    std::map<MsgKind, std::uint64_t> sent;
    std::map<MsgKind, std::uint64_t> delivered;
    std::map<MsgKind, std::uint64_t> dropped;
    std::uint64_t engine_drops{0};  // delivered but rejected by protocol checks
    std::vector<RoundRecord> rounds;          // SG-PBFT only
    std::vector<RotationRecord> rotations;    // SG-PBFT only
    std::vector<ViewChangeRecord> view_changes;
    std::map<NodeId, int> final_scores;       // SG-PBFT only
    std::vector<NodeId> final_consensus;      // SG-PBFT only
    bool complete{false};
    Tick end_tick{0};

    // Messages counted by the closed-form analysis: pre-prepare, prepare,
    // commit and response sends (client legs excluded).
    std::uint64_t protocol_messages() const;
    std::uint64_t total_sent() const;
    std::uint64_t total_delivered() const;
    std::uint64_t total_dropped() const;
};

RunReport run_scenario(const ScenarioSpec& spec, const ExecutionHooks& hooks = {});

// Completion tick minus injection tick; absent if the request never completed.
std::optional<Tick> transaction_delay(const RunReport& report, std::size_t request_index);

// Completed requests per 1000 ticks of the active window.
double throughput_per_kilotick(const RunReport& report);

}  // namespace sgpbft
