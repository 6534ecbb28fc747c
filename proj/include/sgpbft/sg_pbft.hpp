#pragma once

#include <functional>
#include <map>
#include <memory>
#include <set>

#include "sgpbft/pbft.hpp"
#include "sgpbft/types.hpp"
#include "sgpbft/wire.hpp"

namespace sgpbft {

// Initial trust points and the three deltas applied per scored round.
inline constexpr int kInitialScore = 100;
inline constexpr int kScoreCorrect = +1;
inline constexpr int kScoreWrong = -5;
inline constexpr int kScoreConvicted = -20;

enum class QuorumMode : std::uint8_t {
    Geq,     // finalize at >= 2f+1 matching responses (default)
    Strict,  // finalize at >  2f+1
};

// Consensus/candidate partition with per-node trust scores. Owned by the
// scenario coordinator; engines receive read-only copies of the ordering.
struct NodeSets {
    std::vector<NodeId> consensus;   // position in this list is the protocol index
    std::vector<NodeId> candidates;
    std::map<NodeId, int> scores;
    std::uint32_t request_count{0};  // since last rotation
    std::uint32_t rotation_m{1};     // nodes swapped per rotation
    std::uint32_t rotation_period{50};
};

// Position of the master in the consensus list: view mod CN.
std::uint32_t select_master(View view, std::uint32_t cn);

// Random partition of n_total nodes into N/2 consensus + N/2 candidates,
// every score at 100. Requires n_total even and n_total/2 >= 3f + 1.
NodeSets sg_init(std::uint32_t n_total, std::uint32_t f, std::uint64_t seed,
                 std::uint32_t rotation_m = 1, std::uint32_t rotation_period = 50);

// Round scoring: +1 for a judgment equal to the final result, -5 for a
// different one, an extra -20 per node with objective Byzantine evidence.
// Candidates render no judgment and keep their scores. Increments
// request_count.
void apply_scores(NodeSets& sets, const Bytes& final_result,
                  const std::map<NodeId, Bytes>& judgments,
                  const std::set<NodeId>& byzantine_evidence);

// Swap the m lowest-scoring consensus nodes with the m highest-scoring
// candidates and renumber. Ties: lower id wins "highest", higher id loses
// "lowest". Resets request_count.
void update_con_nodes(NodeSets& sets);

struct SgConfig {
    std::uint32_t n_total{8};
    std::uint32_t f{1};
    Tick timeout_ticks{10};
    QuorumMode quorum{QuorumMode::Geq};

    std::uint32_t cn() const { return n_total / 2; }
    std::uint32_t response_quorum() const {
        return quorum == QuorumMode::Geq ? 2 * f + 1 : 2 * f + 2;
    }
};

// Master-side response accumulation for one (view, seq).
struct MasterCollector {
    // result bytes -> responder -> tag over the responder's canonical Response
    std::map<Bytes, std::map<NodeId, AuthTag>> responses;
    std::optional<Bytes> finalized;
    auto operator<=>(const MasterCollector&) const = default;
};

// First result at the quorum threshold, if any.
std::optional<Bytes> collector_quorum(const MasterCollector& collector, std::uint32_t threshold);

struct SgLogEntry {
    std::optional<ProtocolMessage> pre_prepare;
    std::map<Digest, std::set<NodeId>> prepares;
    bool sent_prepare{false};
    bool responded{false};
    std::optional<Bytes> local_result;
    auto operator<=>(const SgLogEntry&) const = default;
};

struct SgState {
    View view;
    SeqNum next_seq{1};
    std::map<std::pair<std::uint64_t, std::uint64_t>, SgLogEntry> log;
    std::map<std::pair<std::uint64_t, std::uint64_t>, MasterCollector> collectors;  // master role
    std::map<Digest, PendingRequest> pending;
    std::map<Digest, SeqNum> assigned;  // master: digest -> seq in current view
    std::map<Digest, Bytes> applied;    // digest -> final result applied to the state machine
    std::map<Digest, std::pair<SeqNum, Bytes>> replied;
    std::map<std::uint64_t, std::set<NodeId>> view_change_votes;
    std::set<std::uint64_t> view_changes_voted;
    std::set<ProtocolMessage> future;
    std::map<DropReason, std::uint64_t> drops;
    auto operator<=>(const SgState&) const = default;
};

// Score-grouped PBFT replica: the commit broadcast is replaced by a single
// Response to the master, which finalizes at quorum and broadcasts a
// certified result to every node, candidates included.
class SgReplica {
public:
    SgReplica(const SgConfig& config, NodeId id, std::vector<NodeId> consensus,
              std::shared_ptr<const Keyring> keys, Executor executor = default_executor,
              ApplyFn on_apply = {});

    Outbox on_event(const Event& event);

    const SgState& state() const { return state_; }
    NodeId id() const { return id_; }
    View view() const { return state_.view; }
    bool in_consensus() const;
    bool is_master() const { return in_consensus() && master_of(state_.view) == id_; }
    NodeId master_of(View v) const;
    const std::vector<NodeId>& consensus_list() const { return consensus_; }

    // Round-boundary updates from the coordinator.
    void set_consensus(std::vector<NodeId> consensus);
    void force_view(View v);

    std::vector<Evidence> drain_evidence();

private:
    void on_message(const ProtocolMessage& msg, Outbox& out);
    void on_timeout(const TimerKey& key, Outbox& out);
    void dispatch(const ProtocolMessage& msg, Outbox& out);
    bool buffer_if_future(const ProtocolMessage& msg);
    void handle_request(const ClientRequest& req, Outbox& out);
    void handle_pre_prepare(const ProtocolMessage& msg, Outbox& out);
    void handle_prepare(const ProtocolMessage& msg, Outbox& out);
    void handle_response(const ProtocolMessage& msg, Outbox& out);
    void handle_result_broadcast(const ProtocolMessage& msg, Outbox& out);
    void handle_view_change(const ProtocolMessage& msg, Outbox& out);
    void check_prepared(std::uint64_t view, std::uint64_t seq, Outbox& out);
    void record_response(std::uint64_t view, std::uint64_t seq, NodeId responder, const Bytes& result,
                         AuthTag tag, Outbox& out);
    void apply_final(const Digest& digest, View v, SeqNum n, const Bytes& result);
    void propose(const ClientRequest& req, Outbox& out);
    void adopt_view(View v, Outbox& out);
    void start_view_change(View proposed, Outbox& out);
    void broadcast_consensus(ProtocolMessage msg, Outbox& out);
    void broadcast_all(ProtocolMessage msg, Outbox& out);
    void send_to(NodeId dest, ProtocolMessage msg, Outbox& out);
    ProtocolMessage make_msg(MsgKind kind, View v, SeqNum n, Digest d) const;
    ProtocolMessage make_response(View v, SeqNum n, Digest d, const Bytes& result, NodeId sender) const;
    bool verify_certificate(const ProtocolMessage& msg) const;
    void drop(DropReason reason) { ++state_.drops[reason]; }

    SgConfig config_;
    NodeId id_;
    std::vector<NodeId> consensus_;
    std::shared_ptr<const Keyring> keys_;
    Executor executor_;
    ApplyFn on_apply_;
    SgState state_;
    std::vector<Evidence> evidence_;
};

}  // namespace sgpbft
