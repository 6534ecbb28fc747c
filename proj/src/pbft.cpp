#include "sgpbft/pbft.hpp"

#include <algorithm>

namespace sgpbft {

Bytes default_executor(const ClientRequest& req) {
    // Echo the first half of the request digest; deterministic and distinct
    // across distinct requests.
    const Digest d = digest_of(req);
    return Bytes(d.bytes.begin(), d.bytes.begin() + 8);
}

PbftState pbft_init(const PbftConfig& config, NodeId id) {
    if (config.n_nodes < 3 * config.f + 1) {
        throw ConfigError("pbft: n_nodes must be >= 3f + 1");
    }
    if (id.value >= config.n_nodes) {
        throw ConfigError("pbft: node id out of range");
    }
    return PbftState{};
}

PbftReplica::PbftReplica(const PbftConfig& config, NodeId id, std::shared_ptr<const Keyring> keys,
                         Executor executor, ApplyFn on_apply)
    : config_(config),
      id_(id),
      keys_(std::move(keys)),
      executor_(std::move(executor)),
      on_apply_(std::move(on_apply)),
      state_(pbft_init(config, id)) {}

std::vector<Evidence> PbftReplica::drain_evidence() {
    std::vector<Evidence> out;
    out.swap(evidence_);
    return out;
}

ProtocolMessage PbftReplica::make_msg(MsgKind kind, View v, SeqNum n, Digest d) const {
    ProtocolMessage msg;
    msg.kind = kind;
    msg.view = v;
    msg.seq = n;
    msg.digest = d;
    msg.sender = Address::node(id_);
    return msg;
}

void PbftReplica::send_to(NodeId dest, ProtocolMessage msg, Outbox& out) {
    msg.auth = keys_->sign_msg(msg.sender, msg);
    out.sends.push_back(OutMessage{Address::node(dest), std::move(msg)});
}

void PbftReplica::broadcast(ProtocolMessage msg, Outbox& out) {
    // Destinations in ascending NodeId order, self excluded; delivery order
    // determinism depends on this.
    for (std::uint32_t i = 0; i < config_.n_nodes; ++i) {
        if (i == id_.value) continue;
        send_to(NodeId{i}, msg, out);
    }
}

Outbox PbftReplica::on_event(const Event& event) {
    Outbox out;
    if (const auto* msg = std::get_if<ProtocolMessage>(&event)) {
        on_message(*msg, out);
    } else {
        on_timeout(std::get<TimerKey>(event), out);
    }
    return out;
}

void PbftReplica::on_message(const ProtocolMessage& msg, Outbox& out) {
    if (msg.kind == MsgKind::Request) {
        // Requests are authenticated by the embedded client tag.
        if (!msg.body || !keys_->verify_request(*msg.body)) {
            drop(DropReason::BadRequestAuth);
            return;
        }
        handle_request(*msg.body, out);
        return;
    }
    if (!keys_->verify_msg(msg)) {
        drop(DropReason::BadAuth);
        return;
    }
    dispatch(msg, out);
}

void PbftReplica::dispatch(const ProtocolMessage& msg, Outbox& out) {
    switch (msg.kind) {
        case MsgKind::PrePrepare: handle_pre_prepare(msg, out); break;
        case MsgKind::Prepare: handle_prepare(msg, out); break;
        case MsgKind::Commit: handle_commit(msg, out); break;
        case MsgKind::ViewChange: handle_view_change(msg, out); break;
        default: drop(DropReason::NotParticipant); break;
    }
}

// Messages for views this node has not adopted yet are parked and replayed
// on adoption; a set keeps the replay idempotent.
bool PbftReplica::buffer_if_future(const ProtocolMessage& msg) {
    if (msg.view.value > state_.view.value) {
        state_.future.insert(msg);
        return true;
    }
    return false;
}

void PbftReplica::handle_request(const ClientRequest& req, Outbox& out) {
    const Digest d = digest_of(req);
    if (auto it = state_.executed.find(d); it != state_.executed.end()) {
        // Retransmission of a completed request: resend the cached reply.
        ProtocolMessage reply = make_msg(MsgKind::Reply, state_.view, it->second.first, d);
        reply.result = it->second.second;
        reply.auth = keys_->sign_msg(reply.sender, reply);
        out.sends.push_back(OutMessage{Address::client(req.client), reply});
        return;
    }
    if (!state_.pending.contains(d)) {
        state_.pending[d] = PendingRequest{req, false};
        // Suspect the master if this request is still unexecuted after the
        // timeout; non-masters learn of requests via client retransmission.
        out.timers.push_back(TimerRequest{TimerKey{state_.view, d}, config_.timeout_ticks});
    }
    if (is_master() && !state_.assigned.contains(d)) {
        propose(req, out);
    }
}

void PbftReplica::propose(const ClientRequest& req, Outbox& out) {
    const Digest d = digest_of(req);
    const SeqNum n = state_.next_seq;
    state_.next_seq.value += 1;
    state_.assigned[d] = n;

    ProtocolMessage pp = make_msg(MsgKind::PrePrepare, state_.view, n, d);
    pp.body = req;
    pp.auth = keys_->sign_msg(pp.sender, pp);

    state_.log[{state_.view.value, n.value}].pre_prepare = pp;
    broadcast(pp, out);
    check_progress(state_.view.value, n.value, out);
}

void PbftReplica::handle_pre_prepare(const ProtocolMessage& msg, Outbox& out) {
    if (msg.sender.is_client || msg.sender != Address::node(master_of(msg.view))) {
        drop(DropReason::NotParticipant);
        return;
    }
    if (buffer_if_future(msg)) return;
    if (msg.view != state_.view) {
        drop(DropReason::WrongView);
        return;
    }
    LogEntry& entry = state_.log[{msg.view.value, msg.seq.value}];
    if (entry.pre_prepare) {
        if (entry.pre_prepare->digest == msg.digest) return;  // duplicate; first one wins
        // Two authenticated conflicting pre-prepares at one (view, seq):
        // objective equivocation proof against the master.
        evidence_.push_back(Evidence{Evidence::Kind::Equivocation, master_of(msg.view), msg.view});
        drop(DropReason::Conflict);
        start_view_change(View{msg.view.value + 1}, out);
        return;
    }
    const bool body_ok = msg.body && keys_->verify_request(*msg.body);
    if (!body_ok || digest_of(*msg.body) != msg.digest) {
        // A master-signed pre-prepare whose digest does not match its body is
        // provable misbehavior: vote for a view change immediately.
        drop(body_ok ? DropReason::DigestMismatch : DropReason::BadRequestAuth);
        start_view_change(View{msg.view.value + 1}, out);
        return;
    }
    entry.pre_prepare = msg;
    if (!state_.pending.contains(msg.digest) && !state_.executed.contains(msg.digest)) {
        state_.pending[msg.digest] = PendingRequest{*msg.body, false};
        out.timers.push_back(TimerRequest{TimerKey{state_.view, msg.digest}, config_.timeout_ticks});
    }
    if (!entry.sent_prepare) {
        entry.sent_prepare = true;
        entry.prepares[msg.digest].insert(id_);  // own prepare counts toward the 2f
        broadcast(make_msg(MsgKind::Prepare, msg.view, msg.seq, msg.digest), out);
    }
    check_progress(msg.view.value, msg.seq.value, out);
}

void PbftReplica::handle_prepare(const ProtocolMessage& msg, Outbox& out) {
    if (msg.sender.is_client) {
        drop(DropReason::NotParticipant);
        return;
    }
    if (buffer_if_future(msg)) return;
    if (msg.view != state_.view) {
        drop(DropReason::WrongView);
        return;
    }
    LogEntry& entry = state_.log[{msg.view.value, msg.seq.value}];
    if (!entry.prepares[msg.digest].insert(NodeId{msg.sender.value}).second) {
        drop(DropReason::DuplicateSender);
        return;
    }
    check_progress(msg.view.value, msg.seq.value, out);
}

void PbftReplica::handle_commit(const ProtocolMessage& msg, Outbox& out) {
    if (msg.sender.is_client) {
        drop(DropReason::NotParticipant);
        return;
    }
    if (buffer_if_future(msg)) return;
    if (msg.view != state_.view) {
        drop(DropReason::WrongView);
        return;
    }
    LogEntry& entry = state_.log[{msg.view.value, msg.seq.value}];
    if (!entry.commits[msg.digest].insert(NodeId{msg.sender.value}).second) {
        drop(DropReason::DuplicateSender);
        return;
    }
    check_progress(msg.view.value, msg.seq.value, out);
}

void PbftReplica::check_progress(std::uint64_t view, std::uint64_t seq, Outbox& out) {
    LogEntry& entry = state_.log[{view, seq}];
    if (!entry.pre_prepare) return;
    const Digest d = entry.pre_prepare->digest;

    // prepared: pre-prepare logged plus 2f matching prepares from distinct
    // nodes (this node's own prepare included once sent).
    const bool prepared = entry.prepares[d].size() >= 2 * config_.f;
    if (prepared && !entry.sent_commit) {
        entry.sent_commit = true;
        entry.commits[d].insert(id_);  // own commit counts; no self-send
        broadcast(make_msg(MsgKind::Commit, View{view}, SeqNum{seq}, d), out);
    }

    // committed-local: prepared plus 2f+1 matching commits (own included).
    const bool committed = prepared && entry.commits[d].size() >= 2 * config_.f + 1;
    if (committed && !entry.executed) {
        entry.executed = true;
        Bytes result;
        if (auto it = state_.executed.find(d); it != state_.executed.end()) {
            result = it->second.second;  // re-proposal of an already executed request
        } else {
            result = executor_(*entry.pre_prepare->body);
            state_.executed[d] = {SeqNum{seq}, result};
            if (on_apply_) on_apply_(id_, View{view}, SeqNum{seq}, result);
        }
        entry.result = result;
        if (auto it = state_.pending.find(d); it != state_.pending.end()) it->second.done = true;

        ProtocolMessage reply = make_msg(MsgKind::Reply, View{view}, SeqNum{seq}, d);
        reply.result = result;
        reply.auth = keys_->sign_msg(reply.sender, reply);
        out.sends.push_back(OutMessage{Address::client(entry.pre_prepare->body->client), reply});
    }
}

void PbftReplica::on_timeout(const TimerKey& key, Outbox& out) {
    if (key.view != state_.view) return;  // armed for an older view
    auto it = state_.pending.find(key.digest);
    if (it == state_.pending.end() || it->second.done) return;
    start_view_change(View{state_.view.value + 1}, out);
}

void PbftReplica::start_view_change(View proposed, Outbox& out) {
    if (proposed.value <= state_.view.value) return;
    if (!state_.view_changes_voted.insert(proposed.value).second) return;
    state_.view_change_votes[proposed.value].insert(id_);
    broadcast(make_msg(MsgKind::ViewChange, proposed, SeqNum{0}, Digest{}), out);
    if (state_.view_change_votes[proposed.value].size() >= 2 * config_.f + 1) {
        adopt_view(proposed, out);
    }
}

void PbftReplica::handle_view_change(const ProtocolMessage& msg, Outbox& out) {
    if (msg.view.value <= state_.view.value) {
        drop(DropReason::StaleViewChange);
        return;
    }
    auto& votes = state_.view_change_votes[msg.view.value];
    if (!votes.insert(NodeId{msg.sender.value}).second) {
        drop(DropReason::DuplicateSender);
        return;
    }
    // Join once f+1 distinct nodes suspect the master: at least one of them
    // is honest.
    if (votes.size() >= config_.f + 1 && !state_.view_changes_voted.contains(msg.view.value)) {
        start_view_change(msg.view, out);
        if (state_.view.value >= msg.view.value) return;  // adopted inside
    }
    if (state_.view_change_votes[msg.view.value].size() >= 2 * config_.f + 1) {
        adopt_view(msg.view, out);
    }
}

void PbftReplica::adopt_view(View v, Outbox& out) {
    if (v.value <= state_.view.value) return;
    const NodeId replaced = master_of(View{v.value - 1});
    evidence_.push_back(Evidence{Evidence::Kind::ViewChangeConviction, replaced, View{v.value - 1}});
    state_.view = v;
    state_.next_seq = SeqNum{1};
    state_.assigned.clear();
    std::erase_if(state_.view_change_votes, [&](const auto& kv) { return kv.first <= v.value; });

    // Replay parked messages for the adopted view; discard older ones.
    std::vector<ProtocolMessage> ready;
    for (auto it = state_.future.begin(); it != state_.future.end();) {
        if (it->view.value < v.value) {
            it = state_.future.erase(it);
        } else if (it->view.value == v.value) {
            ready.push_back(*it);
            it = state_.future.erase(it);
        } else {
            ++it;
        }
    }

    if (is_master()) {
        for (const auto& [digest, pr] : state_.pending) {
            if (!pr.done && !state_.assigned.contains(digest)) propose(pr.request, out);
        }
    } else {
        for (const auto& [digest, pr] : state_.pending) {
            if (!pr.done) out.timers.push_back(TimerRequest{TimerKey{v, digest}, config_.timeout_ticks});
        }
    }
    for (const ProtocolMessage& msg : ready) dispatch(msg, out);
}

void pbft_client_step(ClientState& state, const ProtocolMessage& reply, Tick now) {
    if (reply.kind != MsgKind::Reply || !reply.result) return;
    if (reply.digest != digest_of(state.request)) return;
    if (reply.sender.is_client) return;
    auto& senders = state.replies[*reply.result];
    if (!senders.insert(NodeId{reply.sender.value}).second) return;  // duplicate sender ignored
    if (!state.completed_at && senders.size() >= state.quorum) {
        state.completed_at = now;
        state.accepted_result = *reply.result;
        state.accepted_round = {reply.view, reply.seq};
    }
}

}  // namespace sgpbft
