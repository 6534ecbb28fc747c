#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>

#include "sgpbft/types.hpp"
#include "sgpbft/wire.hpp"

namespace sgpbft {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic state-machine execution: request -> result bytes.
using Executor = std::function<Bytes(const ClientRequest&)>;

// Invoked when a node applies a finalized result (execution on PBFT nodes,
// certified broadcast application on score-grouped nodes).
using ApplyFn = std::function<void(NodeId, View, SeqNum, const Bytes&)>;

Bytes default_executor(const ClientRequest& req);

struct PbftConfig {
    std::uint32_t n_nodes{4};
    std::uint32_t f{1};
    Tick timeout_ticks{10};
};

enum class DropReason : std::uint8_t {
    BadAuth,
    WrongView,
    DigestMismatch,
    BadRequestAuth,
    DuplicateSender,
    NotParticipant,
    StaleViewChange,
    Conflict,
    BadCertificate,
};

// Per-(view, seq) consensus log slot.
struct LogEntry {
    std::optional<ProtocolMessage> pre_prepare;
    std::map<Digest, std::set<NodeId>> prepares;  // digest -> distinct senders (own included)
    std::map<Digest, std::set<NodeId>> commits;
    bool sent_prepare{false};
    bool sent_commit{false};
    bool executed{false};
    std::optional<Bytes> result;
    auto operator<=>(const LogEntry&) const = default;
};

struct PendingRequest {
    ClientRequest request;
    bool done{false};
    auto operator<=>(const PendingRequest&) const = default;
};

struct PbftState {
    View view;
    SeqNum next_seq{1};  // master only; per-view numbering starts at 1
    std::map<std::pair<std::uint64_t, std::uint64_t>, LogEntry> log;  // (view, seq)
    std::map<Digest, PendingRequest> pending;                         // not-yet-executed requests
    std::map<Digest, std::pair<SeqNum, Bytes>> executed;              // digest -> (seq, result)
    std::map<Digest, SeqNum> assigned;                                // master: digest -> seq in current view
    std::map<std::uint64_t, std::set<NodeId>> view_change_votes;      // proposed view -> voters
    std::set<std::uint64_t> view_changes_voted;                       // views this node voted for
    std::set<ProtocolMessage> future;                                 // parked higher-view messages
    std::map<DropReason, std::uint64_t> drops;
    auto operator<=>(const PbftState&) const = default;
};

// Baseline three-phase PBFT replica as a deterministic event-driven
// transition function. The simulator owns delivery order and timers; the
// replica never performs I/O.
class PbftReplica {
public:
    PbftReplica(const PbftConfig& config, NodeId id, std::shared_ptr<const Keyring> keys,
                Executor executor = default_executor, ApplyFn on_apply = {});

    Outbox on_event(const Event& event);

    const PbftState& state() const { return state_; }
    NodeId id() const { return id_; }
    View view() const { return state_.view; }
    bool is_master() const { return master_of(state_.view) == id_; }
    NodeId master_of(View v) const { return NodeId{static_cast<std::uint32_t>(v.value % config_.n_nodes)}; }

    // Misbehavior observed since the last drain (harvested per round).
    std::vector<Evidence> drain_evidence();

private:
    void on_message(const ProtocolMessage& msg, Outbox& out);
    void on_timeout(const TimerKey& key, Outbox& out);
    void dispatch(const ProtocolMessage& msg, Outbox& out);
    bool buffer_if_future(const ProtocolMessage& msg);
    void handle_request(const ClientRequest& req, Outbox& out);
    void handle_pre_prepare(const ProtocolMessage& msg, Outbox& out);
    void handle_prepare(const ProtocolMessage& msg, Outbox& out);
    void handle_commit(const ProtocolMessage& msg, Outbox& out);
    void handle_view_change(const ProtocolMessage& msg, Outbox& out);
    void check_progress(std::uint64_t view, std::uint64_t seq, Outbox& out);
    void adopt_view(View v, Outbox& out);
    void propose(const ClientRequest& req, Outbox& out);
    void broadcast(ProtocolMessage msg, Outbox& out);
    void send_to(NodeId dest, ProtocolMessage msg, Outbox& out);
    ProtocolMessage make_msg(MsgKind kind, View v, SeqNum n, Digest d) const;
    void drop(DropReason reason) { ++state_.drops[reason]; }
    void start_view_change(View proposed, Outbox& out);

    PbftConfig config_;
    NodeId id_;
    std::shared_ptr<const Keyring> keys_;
    Executor executor_;
    ApplyFn on_apply_;
    PbftState state_;
    std::vector<Evidence> evidence_;
};

PbftState pbft_init(const PbftConfig& config, NodeId id);

// Client-side completion tracking: a request is done once 2f+1 distinct
// nodes replied with the same result.
struct ClientState {
    ClientRequest request;
    std::uint32_t quorum{3};  // 2f + 1
    std::map<Bytes, std::set<NodeId>> replies;
    std::optional<Tick> completed_at;
    std::optional<Bytes> accepted_result;
    std::optional<std::pair<View, SeqNum>> accepted_round;
};

void pbft_client_step(ClientState& state, const ProtocolMessage& reply, Tick now);

}  // namespace sgpbft
