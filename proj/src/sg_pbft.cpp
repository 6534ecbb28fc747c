#include "sgpbft/sg_pbft.hpp"

#include <algorithm>

#include "sgpbft/rng.hpp"

namespace sgpbft {

std::uint32_t select_master(View view, std::uint32_t cn) {
    return static_cast<std::uint32_t>(view.value % cn);
}

NodeSets sg_init(std::uint32_t n_total, std::uint32_t f, std::uint64_t seed,
                 std::uint32_t rotation_m, std::uint32_t rotation_period) {
    if (n_total % 2 != 0) {
        throw ConfigError("sg-pbft: n_total must be even");
    }
    if (n_total / 2 < 3 * f + 1) {
        throw ConfigError("sg-pbft: consensus set size n/2 must be >= 3f + 1");
    }
    std::vector<NodeId> order;
    order.reserve(n_total);
    for (std::uint32_t i = 0; i < n_total; ++i) order.push_back(NodeId{i});
    Rng rng(seed ^ 0x7a3bd04c91e6f258ULL);
    rng.shuffle(order);

    NodeSets sets;
    sets.consensus.assign(order.begin(), order.begin() + n_total / 2);
    sets.candidates.assign(order.begin() + n_total / 2, order.end());
    for (std::uint32_t i = 0; i < n_total; ++i) sets.scores[NodeId{i}] = kInitialScore;
    sets.rotation_m = rotation_m;
    sets.rotation_period = rotation_period;
    return sets;
}

void apply_scores(NodeSets& sets, const Bytes& final_result,
                  const std::map<NodeId, Bytes>& judgments,
                  const std::set<NodeId>& byzantine_evidence) {
    const std::set<NodeId> members(sets.consensus.begin(), sets.consensus.end());
    for (const auto& [node, judged] : judgments) {
        if (!members.contains(node)) continue;
        sets.scores[node] += (judged == final_result) ? kScoreCorrect : kScoreWrong;
    }
    for (const NodeId node : byzantine_evidence) {
        if (members.contains(node)) sets.scores[node] += kScoreConvicted;
    }
    sets.request_count += 1;
}

void update_con_nodes(NodeSets& sets) {
    sets.request_count = 0;
    const std::uint32_t m =
        std::min<std::uint32_t>(sets.rotation_m, static_cast<std::uint32_t>(sets.candidates.size()));
    if (m == 0) return;

    // m lowest scorers leave: ties resolved against the higher id.
    std::vector<NodeId> leaving = sets.consensus;
    std::sort(leaving.begin(), leaving.end(), [&](NodeId a, NodeId b) {
        if (sets.scores.at(a) != sets.scores.at(b)) return sets.scores.at(a) < sets.scores.at(b);
        return a.value > b.value;
    });
    leaving.resize(m);

    // m highest-scoring candidates enter: ties resolved toward the lower id.
    std::vector<NodeId> entering = sets.candidates;
    std::sort(entering.begin(), entering.end(), [&](NodeId a, NodeId b) {
        if (sets.scores.at(a) != sets.scores.at(b)) return sets.scores.at(a) > sets.scores.at(b);
        return a.value < b.value;
    });
    entering.resize(m);

    const std::set<NodeId> out_set(leaving.begin(), leaving.end());
    const std::set<NodeId> in_set(entering.begin(), entering.end());

    std::vector<NodeId> consensus;
    consensus.reserve(sets.consensus.size());
    for (NodeId id : sets.consensus) {
        if (!out_set.contains(id)) consensus.push_back(id);
    }
    for (NodeId id : entering) consensus.push_back(id);

    std::vector<NodeId> candidates;
    candidates.reserve(sets.candidates.size());
    for (NodeId id : sets.candidates) {
        if (!in_set.contains(id)) candidates.push_back(id);
    }
    for (NodeId id : leaving) candidates.push_back(id);  // appended to the tail

    sets.consensus = std::move(consensus);
    sets.candidates = std::move(candidates);
}

std::optional<Bytes> collector_quorum(const MasterCollector& collector, std::uint32_t threshold) {
    for (const auto& [result, responders] : collector.responses) {
        if (responders.size() >= threshold) return result;
    }
    return std::nullopt;
}

SgReplica::SgReplica(const SgConfig& config, NodeId id, std::vector<NodeId> consensus,
                     std::shared_ptr<const Keyring> keys, Executor executor, ApplyFn on_apply)
    : config_(config),
      id_(id),
      consensus_(std::move(consensus)),
      keys_(std::move(keys)),
      executor_(std::move(executor)),
      on_apply_(std::move(on_apply)) {
    if (config_.n_total / 2 < 3 * config_.f + 1 || config_.n_total % 2 != 0) {
        throw ConfigError("sg-pbft: invalid (n_total, f)");
    }
    if (consensus_.size() != config_.cn()) {
        throw ConfigError("sg-pbft: consensus list size must be n_total/2");
    }
}

bool SgReplica::in_consensus() const {
    return std::find(consensus_.begin(), consensus_.end(), id_) != consensus_.end();
}

NodeId SgReplica::master_of(View v) const {
    return consensus_[select_master(v, static_cast<std::uint32_t>(consensus_.size()))];
}

void SgReplica::set_consensus(std::vector<NodeId> consensus) {
    consensus_ = std::move(consensus);
}

void SgReplica::force_view(View v) {
    if (v.value > state_.view.value) state_.view = v;
}

std::vector<Evidence> SgReplica::drain_evidence() {
    std::vector<Evidence> out;
    out.swap(evidence_);
    return out;
}

ProtocolMessage SgReplica::make_msg(MsgKind kind, View v, SeqNum n, Digest d) const {
    ProtocolMessage msg;
    msg.kind = kind;
    msg.view = v;
    msg.seq = n;
    msg.digest = d;
    msg.sender = Address::node(id_);
    return msg;
}

ProtocolMessage SgReplica::make_response(View v, SeqNum n, Digest d, const Bytes& result,
                                         NodeId sender) const {
    ProtocolMessage msg;
    msg.kind = MsgKind::Response;
    msg.view = v;
    msg.seq = n;
    msg.digest = d;
    msg.sender = Address::node(sender);
    msg.result = result;
    return msg;
}

void SgReplica::send_to(NodeId dest, ProtocolMessage msg, Outbox& out) {
    msg.auth = keys_->sign_msg(msg.sender, msg);
    out.sends.push_back(OutMessage{Address::node(dest), std::move(msg)});
}

void SgReplica::broadcast_consensus(ProtocolMessage msg, Outbox& out) {
    std::vector<NodeId> dests = consensus_;
    std::sort(dests.begin(), dests.end());
    for (NodeId dest : dests) {
        if (dest == id_) continue;
        send_to(dest, msg, out);
    }
}

void SgReplica::broadcast_all(ProtocolMessage msg, Outbox& out) {
    for (std::uint32_t i = 0; i < config_.n_total; ++i) {
        if (i == id_.value) continue;
        send_to(NodeId{i}, msg, out);
    }
}

Outbox SgReplica::on_event(const Event& event) {
    Outbox out;
    if (const auto* msg = std::get_if<ProtocolMessage>(&event)) {
        on_message(*msg, out);
    } else {
        on_timeout(std::get<TimerKey>(event), out);
    }
    return out;
}

void SgReplica::on_message(const ProtocolMessage& msg, Outbox& out) {
    if (msg.kind == MsgKind::Request) {
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

void SgReplica::dispatch(const ProtocolMessage& msg, Outbox& out) {
    // Candidate nodes stay passive: they apply certified result broadcasts
    // and nothing else.
    if (!in_consensus() && msg.kind != MsgKind::ResultBroadcast) {
        drop(DropReason::NotParticipant);
        return;
    }
    switch (msg.kind) {
        case MsgKind::PrePrepare: handle_pre_prepare(msg, out); break;
        case MsgKind::Prepare: handle_prepare(msg, out); break;
        case MsgKind::Response: handle_response(msg, out); break;
        case MsgKind::ResultBroadcast: handle_result_broadcast(msg, out); break;
        case MsgKind::ViewChange: handle_view_change(msg, out); break;
        default: drop(DropReason::NotParticipant); break;
    }
}

bool SgReplica::buffer_if_future(const ProtocolMessage& msg) {
    if (msg.view.value > state_.view.value) {
        state_.future.insert(msg);
        return true;
    }
    return false;
}

void SgReplica::handle_request(const ClientRequest& req, Outbox& out) {
    if (!in_consensus()) return;  // candidates ignore client traffic
    const Digest d = digest_of(req);
    if (state_.applied.contains(d)) {
        if (auto it = state_.replied.find(d); it != state_.replied.end() && is_master()) {
            ProtocolMessage reply = make_msg(MsgKind::Reply, state_.view, it->second.first, d);
            reply.result = it->second.second;
            reply.auth = keys_->sign_msg(reply.sender, reply);
            out.sends.push_back(OutMessage{Address::client(req.client), reply});
        }
        return;
    }
    if (!state_.pending.contains(d)) {
        state_.pending[d] = PendingRequest{req, false};
        out.timers.push_back(TimerRequest{TimerKey{state_.view, d}, config_.timeout_ticks});
    }
    if (is_master() && !state_.assigned.contains(d)) {
        propose(req, out);
    }
}

void SgReplica::propose(const ClientRequest& req, Outbox& out) {
    const Digest d = digest_of(req);
    const SeqNum n = state_.next_seq;
    state_.next_seq.value += 1;
    state_.assigned[d] = n;

    ProtocolMessage pp = make_msg(MsgKind::PrePrepare, state_.view, n, d);
    pp.body = req;
    pp.auth = keys_->sign_msg(pp.sender, pp);

    state_.log[{state_.view.value, n.value}].pre_prepare = pp;
    broadcast_consensus(pp, out);
    check_prepared(state_.view.value, n.value, out);
}

void SgReplica::handle_pre_prepare(const ProtocolMessage& msg, Outbox& out) {
    if (msg.sender.is_client || msg.sender != Address::node(master_of(msg.view))) {
        drop(DropReason::NotParticipant);
        return;
    }
    if (buffer_if_future(msg)) return;
    if (msg.view != state_.view) {
        drop(DropReason::WrongView);
        return;
    }
    SgLogEntry& entry = state_.log[{msg.view.value, msg.seq.value}];
    if (entry.pre_prepare) {
        if (entry.pre_prepare->digest == msg.digest) return;
        evidence_.push_back(Evidence{Evidence::Kind::Equivocation, master_of(msg.view), msg.view});
        drop(DropReason::Conflict);
        start_view_change(View{msg.view.value + 1}, out);
        return;
    }
    const bool body_ok = msg.body && keys_->verify_request(*msg.body);
    if (!body_ok || digest_of(*msg.body) != msg.digest) {
        drop(body_ok ? DropReason::DigestMismatch : DropReason::BadRequestAuth);
        start_view_change(View{msg.view.value + 1}, out);
        return;
    }
    entry.pre_prepare = msg;
    if (!state_.pending.contains(msg.digest) && !state_.applied.contains(msg.digest)) {
        state_.pending[msg.digest] = PendingRequest{*msg.body, false};
        out.timers.push_back(TimerRequest{TimerKey{state_.view, msg.digest}, config_.timeout_ticks});
    }
    if (!entry.sent_prepare) {
        entry.sent_prepare = true;
        entry.prepares[msg.digest].insert(id_);
        broadcast_consensus(make_msg(MsgKind::Prepare, msg.view, msg.seq, msg.digest), out);
    }
    check_prepared(msg.view.value, msg.seq.value, out);
}

void SgReplica::handle_prepare(const ProtocolMessage& msg, Outbox& out) {
    if (msg.sender.is_client) {
        drop(DropReason::NotParticipant);
        return;
    }
    if (buffer_if_future(msg)) return;
    if (msg.view != state_.view) {
        drop(DropReason::WrongView);
        return;
    }
    SgLogEntry& entry = state_.log[{msg.view.value, msg.seq.value}];
    if (!entry.prepares[msg.digest].insert(NodeId{msg.sender.value}).second) {
        drop(DropReason::DuplicateSender);
        return;
    }
    check_prepared(msg.view.value, msg.seq.value, out);
}

void SgReplica::check_prepared(std::uint64_t view, std::uint64_t seq, Outbox& out) {
    SgLogEntry& entry = state_.log[{view, seq}];
    if (!entry.pre_prepare || entry.responded) return;
    const Digest d = entry.pre_prepare->digest;
    if (entry.prepares[d].size() < 2 * config_.f) return;

    // Prepared: compute the local judgment and hand it to the master. The
    // master's own judgment stands in for its response.
    entry.responded = true;
    const Bytes result = state_.applied.contains(d) ? state_.applied.at(d)
                                                    : executor_(*entry.pre_prepare->body);
    entry.local_result = result;

    ProtocolMessage response = make_response(View{view}, SeqNum{seq}, d, result, id_);
    response.auth = keys_->sign_msg(response.sender, response);
    const NodeId master = master_of(View{view});
    if (master == id_) {
        record_response(view, seq, id_, result, response.auth, out);
    } else {
        out.sends.push_back(OutMessage{Address::node(master), response});
    }
}

void SgReplica::handle_response(const ProtocolMessage& msg, Outbox& out) {
    if (msg.sender.is_client || !msg.result) {
        drop(DropReason::NotParticipant);
        return;
    }
    if (buffer_if_future(msg)) return;
    if (msg.view != state_.view) {
        drop(DropReason::WrongView);
        return;
    }
    if (master_of(msg.view) != id_) {
        drop(DropReason::NotParticipant);
        return;
    }
    const NodeId responder{msg.sender.value};
    if (std::find(consensus_.begin(), consensus_.end(), responder) == consensus_.end()) {
        drop(DropReason::NotParticipant);  // responses from non-consensus nodes
        return;
    }
    record_response(msg.view.value, msg.seq.value, responder, *msg.result, msg.auth, out);
}

void SgReplica::record_response(std::uint64_t view, std::uint64_t seq, NodeId responder,
                                const Bytes& result, AuthTag tag, Outbox& out) {
    MasterCollector& collector = state_.collectors[{view, seq}];
    auto& responders = collector.responses[result];
    if (!responders.emplace(responder, tag).second) {
        drop(DropReason::DuplicateSender);
        return;
    }
    if (collector.finalized) return;  // late responses are recorded, never re-broadcast

    if (responders.size() < config_.response_quorum()) return;
    collector.finalized = result;

    SgLogEntry& entry = state_.log[{view, seq}];
    if (!entry.pre_prepare) return;  // cannot happen for an honest master
    const Digest d = entry.pre_prepare->digest;

    std::vector<CertEntry> cert;
    cert.reserve(responders.size());
    for (const auto& [node, node_tag] : responders) cert.push_back(CertEntry{node, node_tag});

    ProtocolMessage bcast = make_msg(MsgKind::ResultBroadcast, View{view}, SeqNum{seq}, d);
    bcast.result = result;
    bcast.cert = cert;
    broadcast_all(bcast, out);

    ProtocolMessage reply = make_msg(MsgKind::Reply, View{view}, SeqNum{seq}, d);
    reply.result = result;
    reply.cert = cert;
    reply.auth = keys_->sign_msg(reply.sender, reply);
    out.sends.push_back(OutMessage{Address::client(entry.pre_prepare->body->client), reply});
    state_.replied[d] = {SeqNum{seq}, result};

    apply_final(d, View{view}, SeqNum{seq}, result);
}

bool SgReplica::verify_certificate(const ProtocolMessage& msg) const {
    if (!msg.result) return false;
    std::set<NodeId> seen;
    for (const CertEntry& entry : msg.cert) {
        if (std::find(consensus_.begin(), consensus_.end(), entry.node) == consensus_.end()) continue;
        ProtocolMessage response =
            make_response(msg.view, msg.seq, msg.digest, *msg.result, entry.node);
        if (!keys_->verify(Address::node(entry.node), canonical_bytes(response), entry.tag)) continue;
        seen.insert(entry.node);
    }
    return seen.size() >= config_.response_quorum();
}

void SgReplica::handle_result_broadcast(const ProtocolMessage& msg, Outbox& out) {
    (void)out;
    if (!msg.result) {
        drop(DropReason::NotParticipant);
        return;
    }
    if (state_.applied.contains(msg.digest)) return;
    if (!verify_certificate(msg)) {
        drop(DropReason::BadCertificate);
        return;
    }
    apply_final(msg.digest, msg.view, msg.seq, *msg.result);
}

void SgReplica::apply_final(const Digest& digest, View v, SeqNum n, const Bytes& result) {
    if (state_.applied.contains(digest)) return;
    state_.applied[digest] = result;
    if (auto it = state_.pending.find(digest); it != state_.pending.end()) it->second.done = true;
    if (on_apply_) on_apply_(id_, v, n, result);
}

void SgReplica::on_timeout(const TimerKey& key, Outbox& out) {
    if (!in_consensus()) return;
    if (key.view != state_.view) return;
    auto it = state_.pending.find(key.digest);
    if (it == state_.pending.end() || it->second.done) return;
    start_view_change(View{state_.view.value + 1}, out);
}

void SgReplica::start_view_change(View proposed, Outbox& out) {
    if (!in_consensus()) return;
    if (proposed.value <= state_.view.value) return;
    if (!state_.view_changes_voted.insert(proposed.value).second) return;
    state_.view_change_votes[proposed.value].insert(id_);
    broadcast_consensus(make_msg(MsgKind::ViewChange, proposed, SeqNum{0}, Digest{}), out);
    if (state_.view_change_votes[proposed.value].size() >= 2 * config_.f + 1) {
        adopt_view(proposed, out);
    }
}

void SgReplica::handle_view_change(const ProtocolMessage& msg, Outbox& out) {
    if (msg.view.value <= state_.view.value) {
        drop(DropReason::StaleViewChange);
        return;
    }
    const NodeId voter{msg.sender.value};
    if (std::find(consensus_.begin(), consensus_.end(), voter) == consensus_.end()) {
        drop(DropReason::NotParticipant);
        return;
    }
    auto& votes = state_.view_change_votes[msg.view.value];
    if (!votes.insert(voter).second) {
        drop(DropReason::DuplicateSender);
        return;
    }
    if (votes.size() >= config_.f + 1 && !state_.view_changes_voted.contains(msg.view.value)) {
        start_view_change(msg.view, out);
        if (state_.view.value >= msg.view.value) return;
    }
    if (state_.view_change_votes[msg.view.value].size() >= 2 * config_.f + 1) {
        adopt_view(msg.view, out);
    }
}

void SgReplica::adopt_view(View v, Outbox& out) {
    if (v.value <= state_.view.value) return;
    const NodeId replaced = master_of(View{v.value - 1});
    evidence_.push_back(Evidence{Evidence::Kind::ViewChangeConviction, replaced, View{v.value - 1}});
    state_.view = v;
    state_.next_seq = SeqNum{1};
    state_.assigned.clear();
    std::erase_if(state_.view_change_votes, [&](const auto& kv) { return kv.first <= v.value; });

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
            if (!pr.done) propose(pr.request, out);
        }
    } else {
        for (const auto& [digest, pr] : state_.pending) {
            if (!pr.done) out.timers.push_back(TimerRequest{TimerKey{v, digest}, config_.timeout_ticks});
        }
    }
    for (const ProtocolMessage& msg : ready) dispatch(msg, out);
}

}  // namespace sgpbft
