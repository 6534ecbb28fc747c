#include "sgpbft/sim.hpp"

#include <algorithm>
#include <queue>

namespace sgpbft {

const char* protocol_name(Protocol protocol) {
    return protocol == Protocol::Pbft ? "pbft" : "sgpbft";
}

Tick ScenarioSpec::effective_timeout() const {
    if (timeout_ticks > 0) return timeout_ticks;
    return std::max<Tick>(1, 10 * latency.mean_base());
}

Tick ScenarioSpec::effective_budget() const {
    if (tick_budget > 0) return tick_budget;
    const Tick hop = latency.mean_base() + latency.per_message_overhead;
    const Tick per_request = 5 * effective_timeout() + 50 * hop +
                             4 * static_cast<Tick>(n) * std::max<Tick>(1, latency.per_message_overhead);
    Tick delay_extra = 0;
    for (const FaultSpec& fault : faults) delay_extra += fault.delay_ticks;
    return 1000 + static_cast<Tick>(effective_requests()) * (per_request + delay_extra);
}

std::uint32_t ScenarioSpec::effective_rotation_m() const {
    if (rotation_m > 0) return rotation_m;
    return std::max<std::uint32_t>(1, (n / 2) / 10);
}

void validate(const ScenarioSpec& spec) {
    if (spec.protocol == Protocol::Pbft) {
        if (spec.n < 3 * spec.f + 1) throw ConfigError("pbft requires n >= 3f + 1");
    } else {
        if (spec.n % 2 != 0) throw ConfigError("sg-pbft requires an even n");
        if (spec.n / 2 < 3 * spec.f + 1) throw ConfigError("sg-pbft requires n/2 >= 3f + 1");
    }
    if (spec.latency.kind == LatencyModel::Kind::Constant) {
        if (spec.latency.constant < 1) throw ConfigError("latency must be >= 1 tick");
    } else {
        if (spec.latency.lo < 1 || spec.latency.hi < spec.latency.lo) {
            throw ConfigError("uniform latency requires 1 <= lo <= hi");
        }
    }
    if (spec.latency.per_message_overhead < 0) throw ConfigError("per_message_overhead must be >= 0");
    std::set<std::uint32_t> seen;
    for (const FaultSpec& fault : spec.faults) {
        if (fault.node.value >= spec.n) throw ConfigError("fault node id out of range");
        if (!seen.insert(fault.node.value).second) {
            throw ConfigError("at most one fault behavior per node");
        }
        if (fault.behavior == FaultBehavior::DropRate &&
            (fault.drop_rate < 0.0 || fault.drop_rate > 1.0)) {
            throw ConfigError("drop rate must be within [0, 1]");
        }
        if (fault.behavior == FaultBehavior::DelayAll && fault.delay_ticks < 0) {
            throw ConfigError("delay must be >= 0");
        }
    }
}

std::uint64_t RunReport::protocol_messages() const {
    std::uint64_t total = 0;
    for (const MsgKind kind : {MsgKind::PrePrepare, MsgKind::Prepare, MsgKind::Commit, MsgKind::Response}) {
        if (auto it = sent.find(kind); it != sent.end()) total += it->second;
    }
    return total;
}

std::uint64_t RunReport::total_sent() const {
    std::uint64_t total = 0;
    for (const auto& [kind, count] : sent) total += count;
    return total;
}

std::uint64_t RunReport::total_delivered() const {
    std::uint64_t total = 0;
    for (const auto& [kind, count] : delivered) total += count;
    return total;
}

std::uint64_t RunReport::total_dropped() const {
    std::uint64_t total = 0;
    for (const auto& [kind, count] : dropped) total += count;
    return total;
}

std::optional<Tick> transaction_delay(const RunReport& report, std::size_t request_index) {
    if (request_index >= report.requests.size()) return std::nullopt;
    const RequestOutcome& outcome = report.requests[request_index];
    if (!outcome.completed) return std::nullopt;
    return *outcome.completed - outcome.injected;
}

double throughput_per_kilotick(const RunReport& report) {
    Tick first_injection = 0;
    bool any = false;
    Tick last_completion = 0;
    std::uint64_t completed = 0;
    for (const RequestOutcome& outcome : report.requests) {
        if (!any) {
            first_injection = outcome.injected;
            any = true;
        }
        first_injection = std::min(first_injection, outcome.injected);
        if (outcome.completed) {
            ++completed;
            last_completion = std::max(last_completion, *outcome.completed);
        }
    }
    if (completed == 0) return 0.0;
    const Tick window = last_completion - first_injection;
    if (window <= 0) return 0.0;
    return static_cast<double>(completed) / static_cast<double>(window) * 1000.0;
}

namespace {

// Timeline event payloads.
struct Deliver {
    Address dest;
    ProtocolMessage msg;
};
struct NodeEffect {  // message leaves a node's ingress queue and is processed
    NodeId dest;
    ProtocolMessage msg;
};
struct NodeTimer {
    NodeId node;
    TimerKey key;
};
struct ClientTimer {
    std::uint32_t request_index;
};
struct Inject {
    std::uint32_t request_index;
};

using SimPayload = std::variant<Deliver, NodeEffect, NodeTimer, ClientTimer, Inject>;

struct SimEvent {
    Tick at;
    std::uint64_t order;  // insertion sequence; total order at equal ticks
    SimPayload payload;
};

struct EventLater {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
        if (a.at != b.at) return a.at > b.at;
        return a.order > b.order;
    }
};

struct ClientTracker {
    ClientRequest request;
    Digest digest;
    Tick injected{0};
    std::optional<Tick> completed;
    Bytes result;
    View view;
    SeqNum seq;
    NodeId replied_master;  // SG: master that produced the accepted certificate
    std::map<Bytes, std::set<NodeId>> replies;  // PBFT quorum accounting
};

class Simulation {
public:
    Simulation(const ScenarioSpec& spec, const ExecutionHooks& hooks)
        : spec_(spec),
          rng_(std::make_shared<Rng>(spec.seed)),
          latency_rng_(rng_->fork(0x4c6174656e637921ULL)),
          fault_rng_(std::make_shared<Rng>(rng_->fork(0x4661756c74732121ULL))),
          keys_(std::make_shared<Keyring>(spec.seed, spec.n, 1)) {
        validate(spec_);
        timeout_ = spec_.effective_timeout();
        budget_ = spec_.effective_budget();
        build_nodes(hooks);
        build_requests();
    }

    RunReport run();

private:
    void build_nodes(const ExecutionHooks& hooks);
    void build_requests();
    void push(Tick at, SimPayload payload);
    void dispatch_outbox(NodeId origin, Tick now, Outbox&& out);
    void handle_deliver(Tick now, const Deliver& deliver);
    void handle_effect(Tick now, const NodeEffect& effect);
    void handle_client_message(Tick now, const ProtocolMessage& msg);
    void handle_client_timer(Tick now, const ClientTimer& timer);
    void handle_inject(Tick now, const Inject& inject);
    void step_node(NodeId node, Tick now, const Event& event);
    void after_event(Tick now);
    void close_round(std::uint32_t request_index, Tick now);
    void maybe_rotate(Tick now);
    bool round_drained(const ClientTracker& tracker) const;
    NodeId current_master() const;
    View canonical_view() const;
    Tick draw_base_latency();
    bool verify_reply_certificate(const ProtocolMessage& reply) const;
    static std::pair<std::uint64_t, std::uint64_t> round_key(View v, SeqNum n) {
        return {v.value, n.value};
    }

    ScenarioSpec spec_;
    std::shared_ptr<Rng> rng_;
    Rng latency_rng_;
    std::shared_ptr<Rng> fault_rng_;
    std::shared_ptr<const Keyring> keys_;

    Tick timeout_{10};
    Tick budget_{0};

    // One engine per node; exactly one of the two pointers is set.
    struct Slot {
        std::unique_ptr<PbftReplica> pbft;
        std::unique_ptr<SgReplica> sg;
        EngineStep step;
        Tick busy_until{0};
    };
    std::vector<Slot> nodes_;
    NodeSets sets_;  // SG only

    std::priority_queue<SimEvent, std::vector<SimEvent>, EventLater> queue_;
    std::uint64_t order_counter_{0};
    Tick now_{0};

    std::vector<ClientTracker> trackers_;
    std::set<std::uint32_t> open_rounds_;
    std::uint32_t next_to_inject_{0};
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::uint64_t> in_flight_finalization_;
    bool rotation_pending_{false};

    RunReport report_;
    View last_seen_view_{0};
};

void Simulation::build_nodes(const ExecutionHooks& hooks) {
    const auto executor_for = [&](NodeId id) -> Executor {
        if (hooks.make_executor) return hooks.make_executor(id);
        return default_executor;
    };
    ApplyFn apply = hooks.on_apply;

    nodes_.resize(spec_.n);
    if (spec_.protocol == Protocol::SgPbft) {
        sets_ = sg_init(spec_.n, spec_.f, spec_.seed, spec_.effective_rotation_m(),
                        spec_.rotation_period);
        SgConfig config{spec_.n, spec_.f, timeout_, spec_.quorum};
        for (std::uint32_t i = 0; i < spec_.n; ++i) {
            nodes_[i].sg = std::make_unique<SgReplica>(config, NodeId{i}, sets_.consensus, keys_,
                                                       executor_for(NodeId{i}), apply);
            SgReplica* replica = nodes_[i].sg.get();
            nodes_[i].step = [replica](const Event& event) { return replica->on_event(event); };
        }
    } else {
        PbftConfig config{spec_.n, spec_.f, timeout_};
        for (std::uint32_t i = 0; i < spec_.n; ++i) {
            nodes_[i].pbft = std::make_unique<PbftReplica>(config, NodeId{i}, keys_,
                                                           executor_for(NodeId{i}), apply);
            PbftReplica* replica = nodes_[i].pbft.get();
            nodes_[i].step = [replica](const Event& event) { return replica->on_event(event); };
        }
    }
    for (const FaultSpec& fault : spec_.faults) {
        Slot& slot = nodes_[fault.node.value];
        slot.step = wrap(slot.step, fault, keys_, fault.node, fault_rng_);
    }
}

void Simulation::build_requests() {
    const std::uint32_t count = spec_.effective_requests();
    trackers_.resize(count);
    Tick prev_t = -1;
    for (std::uint32_t i = 0; i < count; ++i) {
        ClientRequest req;
        if (!spec_.payloads.empty()) {
            req.op = spec_.payloads[i];
        } else {
            Encoder enc;
            enc.put_u32(i);
            enc.put_u64(spec_.seed);
            req.op = enc.take();
        }
        req.timestamp = prev_t + 1;
        prev_t = req.timestamp;
        req.client = ClientId{0};
        req.auth = keys_->sign_request(req);
        trackers_[i].request = req;
        trackers_[i].digest = digest_of(req);
    }
}

void Simulation::push(Tick at, SimPayload payload) {
    queue_.push(SimEvent{at, order_counter_++, std::move(payload)});
}

Tick Simulation::draw_base_latency() {
    if (spec_.latency.kind == LatencyModel::Kind::Constant) return spec_.latency.constant;
    const std::uint64_t span = static_cast<std::uint64_t>(spec_.latency.hi - spec_.latency.lo) + 1;
    return spec_.latency.lo + static_cast<Tick>(latency_rng_.next_below(span));
}

void Simulation::dispatch_outbox(NodeId origin, Tick now, Outbox&& out) {
    for (OutMessage& send : out.sends) {
        ++report_.sent[send.msg.kind];
        if (send.dropped) {
            ++report_.dropped[send.msg.kind];
            continue;
        }
        const Tick arrive = now + send.extra_delay + draw_base_latency();
        if (send.msg.kind == MsgKind::Response || send.msg.kind == MsgKind::ResultBroadcast) {
            ++in_flight_finalization_[round_key(send.msg.view, send.msg.seq)];
        }
        push(arrive, Deliver{send.dest, std::move(send.msg)});
    }
    for (const TimerRequest& timer : out.timers) {
        push(now + timer.delay, NodeTimer{origin, timer.key});
    }
}

void Simulation::step_node(NodeId node, Tick now, const Event& event) {
    Outbox out = nodes_[node.value].step(event);
    dispatch_outbox(node, now, std::move(out));
}

void Simulation::handle_deliver(Tick now, const Deliver& deliver) {
    ++report_.delivered[deliver.msg.kind];
    if (deliver.dest.is_client) {
        handle_client_message(now, deliver.msg);
        if (deliver.msg.kind == MsgKind::Response || deliver.msg.kind == MsgKind::ResultBroadcast) {
            --in_flight_finalization_[round_key(deliver.msg.view, deliver.msg.seq)];
        }
        return;
    }
    // Single-server ingress queue: per_message_overhead ticks per message.
    Slot& slot = nodes_[deliver.dest.value];
    const Tick effect_at = std::max(now, slot.busy_until) + spec_.latency.per_message_overhead;
    slot.busy_until = effect_at;
    push(effect_at, NodeEffect{NodeId{deliver.dest.value}, deliver.msg});
}

void Simulation::handle_effect(Tick now, const NodeEffect& effect) {
    if (effect.msg.kind == MsgKind::Response || effect.msg.kind == MsgKind::ResultBroadcast) {
        --in_flight_finalization_[round_key(effect.msg.view, effect.msg.seq)];
    }
    step_node(effect.dest, now, Event{effect.msg});
}

bool Simulation::verify_reply_certificate(const ProtocolMessage& reply) const {
    if (!reply.result) return false;
    const std::set<NodeId> members(sets_.consensus.begin(), sets_.consensus.end());
    std::set<NodeId> valid;
    for (const CertEntry& entry : reply.cert) {
        if (!members.contains(entry.node)) continue;
        ProtocolMessage response;
        response.kind = MsgKind::Response;
        response.view = reply.view;
        response.seq = reply.seq;
        response.digest = reply.digest;
        response.sender = Address::node(entry.node);
        response.result = *reply.result;
        if (!keys_->verify(Address::node(entry.node), canonical_bytes(response), entry.tag)) continue;
        valid.insert(entry.node);
    }
    const std::uint32_t quorum =
        spec_.quorum == QuorumMode::Geq ? 2 * spec_.f + 1 : 2 * spec_.f + 2;
    return valid.size() >= quorum;
}

void Simulation::handle_client_message(Tick now, const ProtocolMessage& msg) {
    if (msg.kind != MsgKind::Reply || !msg.result) return;
    if (msg.sender.is_client) return;
    if (!keys_->verify_msg(msg)) return;
    for (std::uint32_t i = 0; i < trackers_.size(); ++i) {
        ClientTracker& tracker = trackers_[i];
        if (tracker.digest != msg.digest || tracker.completed) continue;
        if (spec_.protocol == Protocol::Pbft) {
            auto& senders = tracker.replies[*msg.result];
            if (!senders.insert(NodeId{msg.sender.value}).second) return;
            if (senders.size() >= 2 * spec_.f + 1) {
                tracker.completed = now;
                tracker.result = *msg.result;
                tracker.view = msg.view;
                tracker.seq = msg.seq;
            }
        } else {
            // A single master reply suffices if its quorum certificate holds.
            if (!verify_reply_certificate(msg)) return;
            tracker.completed = now;
            tracker.result = *msg.result;
            tracker.view = msg.view;
            tracker.seq = msg.seq;
            tracker.replied_master = NodeId{msg.sender.value};
        }
        return;
    }
}

void Simulation::handle_client_timer(Tick now, const ClientTimer& timer) {
    ClientTracker& tracker = trackers_[timer.request_index];
    if (tracker.completed) return;
    // Retransmit to every node; replicas learn of the request and arm their
    // own master-suspicion timers.
    ProtocolMessage req;
    req.kind = MsgKind::Request;
    req.digest = tracker.digest;
    req.sender = Address::client(ClientId{0});
    req.body = tracker.request;
    req.auth = tracker.request.auth;
    for (std::uint32_t i = 0; i < spec_.n; ++i) {
        ++report_.sent[MsgKind::Request];
        push(now + draw_base_latency(), Deliver{Address::node(NodeId{i}), req});
    }
    push(now + timeout_, ClientTimer{timer.request_index});
}

void Simulation::handle_inject(Tick now, const Inject& inject) {
    ClientTracker& tracker = trackers_[inject.request_index];
    tracker.injected = now;
    open_rounds_.insert(inject.request_index);

    ProtocolMessage req;
    req.kind = MsgKind::Request;
    req.digest = tracker.digest;
    req.sender = Address::client(ClientId{0});
    req.body = tracker.request;
    req.auth = tracker.request.auth;

    // The request reaches the master at the injection tick; the delay clock
    // starts here.
    step_node(current_master(), now, Event{req});
    push(now + timeout_, ClientTimer{inject.request_index});
}

NodeId Simulation::current_master() const {
    const View v = canonical_view();
    if (spec_.protocol == Protocol::Pbft) {
        return NodeId{static_cast<std::uint32_t>(v.value % spec_.n)};
    }
    return sets_.consensus[select_master(v, static_cast<std::uint32_t>(sets_.consensus.size()))];
}

View Simulation::canonical_view() const {
    View v{0};
    if (spec_.protocol == Protocol::Pbft) {
        for (const Slot& slot : nodes_) v = std::max(v, slot.pbft->view());
    } else {
        for (const NodeId member : sets_.consensus) v = std::max(v, nodes_[member.value].sg->view());
    }
    return v;
}

bool Simulation::round_drained(const ClientTracker& tracker) const {
    auto it = in_flight_finalization_.find(round_key(tracker.view, tracker.seq));
    return it == in_flight_finalization_.end() || it->second == 0;
}

void Simulation::after_event(Tick now) {
    // View-change log: record transitions of the canonical view.
    const View v = canonical_view();
    while (last_seen_view_.value < v.value) {
        const View from = last_seen_view_;
        NodeId convicted;
        if (spec_.protocol == Protocol::Pbft) {
            convicted = NodeId{static_cast<std::uint32_t>(from.value % spec_.n)};
        } else {
            convicted =
                sets_.consensus[select_master(from, static_cast<std::uint32_t>(sets_.consensus.size()))];
        }
        report_.view_changes.push_back(ViewChangeRecord{from, View{from.value + 1}, convicted, now});
        last_seen_view_.value += 1;
    }

    // Close rounds in injection order once complete (and, for SG-PBFT, once
    // responses and result broadcasts have drained so judgments are final).
    while (!open_rounds_.empty()) {
        const std::uint32_t index = *open_rounds_.begin();
        ClientTracker& tracker = trackers_[index];
        if (!tracker.completed) break;
        if (spec_.protocol == Protocol::SgPbft && !round_drained(tracker)) break;
        close_round(index, now);
    }
}

void Simulation::close_round(std::uint32_t request_index, Tick now) {
    open_rounds_.erase(request_index);
    ClientTracker& tracker = trackers_[request_index];

    if (spec_.protocol == Protocol::SgPbft) {
        RoundRecord record;
        record.request_index = request_index;
        record.view = tracker.view;
        record.seq = tracker.seq;
        record.final_result = tracker.result;

        // Judgments: the finalizing master's collected responses.
        const SgReplica& master = *nodes_[tracker.replied_master.value].sg;
        if (auto it = master.state().collectors.find({tracker.view.value, tracker.seq.value});
            it != master.state().collectors.end()) {
            for (const auto& [result, responders] : it->second.responses) {
                for (const auto& [node, tag] : responders) {
                    record.judgments.emplace(node, result);
                }
            }
        }
        // Objective evidence harvested from every node.
        for (Slot& slot : nodes_) {
            for (const Evidence& item : slot.sg->drain_evidence()) {
                record.evidence.insert(item.accused);
            }
        }
        apply_scores(sets_, record.final_result, record.judgments, record.evidence);
        record.scores_after = sets_.scores;
        report_.rounds.push_back(std::move(record));
        maybe_rotate(now);
    } else {
        for (Slot& slot : nodes_) slot.pbft->drain_evidence();  // keep buffers bounded
    }

    if (spec_.workload == WorkloadMode::Sequential && next_to_inject_ < trackers_.size()) {
        push(now, Inject{next_to_inject_++});
    }
}

void Simulation::maybe_rotate(Tick now) {
    (void)now;
    if (sets_.request_count >= sets_.rotation_period) rotation_pending_ = true;
    if (!rotation_pending_ || !open_rounds_.empty()) return;
    rotation_pending_ = false;

    const std::vector<NodeId> before = sets_.consensus;
    update_con_nodes(sets_);

    RotationRecord record;
    record.after_round = static_cast<std::uint32_t>(report_.rounds.size());
    const std::set<NodeId> now_in(sets_.consensus.begin(), sets_.consensus.end());
    const std::set<NodeId> was_in(before.begin(), before.end());
    for (const NodeId id : before) {
        if (!now_in.contains(id)) record.moved_out.push_back(id);
    }
    for (const NodeId id : sets_.consensus) {
        if (!was_in.contains(id)) record.moved_in.push_back(id);
    }
    record.consensus = sets_.consensus;
    report_.rotations.push_back(std::move(record));

    const View v = canonical_view();
    for (Slot& slot : nodes_) {
        slot.sg->set_consensus(sets_.consensus);
        slot.sg->force_view(v);
    }
}

RunReport Simulation::run() {
    report_.spec = spec_;
    report_.requests.resize(trackers_.size());

    if (spec_.workload == WorkloadMode::Burst) {
        for (std::uint32_t i = 0; i < trackers_.size(); ++i) push(0, Inject{i});
        next_to_inject_ = static_cast<std::uint32_t>(trackers_.size());
    } else if (!trackers_.empty()) {
        push(0, Inject{next_to_inject_++});
    }

    while (!queue_.empty()) {
        SimEvent event = queue_.top();
        queue_.pop();
        now_ = event.at;
        if (now_ > budget_) break;
        std::visit(
            [&](const auto& payload) {
                using T = std::decay_t<decltype(payload)>;
                if constexpr (std::is_same_v<T, Deliver>) {
                    handle_deliver(now_, payload);
                } else if constexpr (std::is_same_v<T, NodeEffect>) {
                    handle_effect(now_, payload);
                } else if constexpr (std::is_same_v<T, NodeTimer>) {
                    step_node(payload.node, now_, Event{payload.key});
                } else if constexpr (std::is_same_v<T, ClientTimer>) {
                    handle_client_timer(now_, payload);
                } else {
                    handle_inject(now_, payload);
                }
            },
            event.payload);
        after_event(now_);
    }

    report_.end_tick = now_;
    report_.complete = true;
    for (std::uint32_t i = 0; i < trackers_.size(); ++i) {
        const ClientTracker& tracker = trackers_[i];
        RequestOutcome& outcome = report_.requests[i];
        outcome.injected = tracker.injected;
        outcome.completed = tracker.completed;
        outcome.result = tracker.result;
        outcome.view = tracker.view;
        outcome.seq = tracker.seq;
        if (!tracker.completed) report_.complete = false;
    }

    std::uint64_t engine_drops = 0;
    for (const Slot& slot : nodes_) {
        const auto& drops = slot.pbft ? slot.pbft->state().drops : slot.sg->state().drops;
        for (const auto& [reason, count] : drops) engine_drops += count;
    }
    report_.engine_drops = engine_drops;

    if (spec_.protocol == Protocol::SgPbft) {
        report_.final_scores = sets_.scores;
        report_.final_consensus = sets_.consensus;
    }
    return report_;
}

}  // namespace

RunReport run_scenario(const ScenarioSpec& spec, const ExecutionHooks& hooks) {
    Simulation sim(spec, hooks);
    return sim.run();
}

}  // namespace sgpbft
