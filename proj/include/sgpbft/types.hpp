#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace sgpbft {

using Bytes = std::vector<std::uint8_t>;
using Tick = std::int64_t;

struct NodeId {
    std::uint32_t value{0};
    auto operator<=>(const NodeId&) const = default;
};

struct ClientId {
    std::uint32_t value{0};
    auto operator<=>(const ClientId&) const = default;
};

// A message endpoint: either a protocol node or a client.
struct Address {
    bool is_client{false};
    std::uint32_t value{0};
    auto operator<=>(const Address&) const = default;

    static Address node(NodeId id) { return Address{false, id.value}; }
    static Address client(ClientId id) { return Address{true, id.value}; }
};

struct View {
    std::uint64_t value{0};
    auto operator<=>(const View&) const = default;
};

struct SeqNum {
    std::uint64_t value{0};
    auto operator<=>(const SeqNum&) const = default;
};

// 128-bit content hash; fixed width by construction.
struct Digest {
    std::array<std::uint8_t, 16> bytes{};
    auto operator<=>(const Digest&) const = default;
};

// Keyed digest over the canonical encoding; stands in for a signature.
struct AuthTag {
    std::uint64_t value{0};
    auto operator<=>(const AuthTag&) const = default;
};

enum class MsgKind : std::uint8_t {
    Request = 0,
    PrePrepare = 1,
    Prepare = 2,
    Commit = 3,
    Response = 4,
    ResultBroadcast = 5,
    Reply = 6,
    ViewChange = 7,
};

const char* msg_kind_name(MsgKind kind);

struct ClientRequest {
    Bytes op;            // opaque operation payload
    Tick timestamp{0};   // simulated-time units; (client, timestamp) unique per scenario
    ClientId client;
    AuthTag auth;
    auto operator<=>(const ClientRequest&) const = default;
};

// One vote of a quorum certificate: the responder and its tag over the
// canonical Response encoding.
struct CertEntry {
    NodeId node;
    AuthTag tag;
    auto operator<=>(const CertEntry&) const = default;
};

struct ProtocolMessage {
    MsgKind kind{MsgKind::Request};
    View view;
    SeqNum seq;
    Digest digest;
    Address sender;
    std::optional<ClientRequest> body;  // full request; PrePrepare and Request only
    std::optional<Bytes> result;        // Response / Reply / ResultBroadcast
    std::vector<CertEntry> cert;        // quorum certificate on Reply / ResultBroadcast
    AuthTag auth;
    auto operator<=>(const ProtocolMessage&) const = default;
};

// Timers are keyed by (view, request digest): a replica may need to suspect
// the master before any sequence number was assigned.
struct TimerKey {
    View view;
    Digest digest;
    auto operator<=>(const TimerKey&) const = default;
};

struct TimerRequest {
    TimerKey key;
    Tick delay{0};
};

// One emitted message. Fault injectors may tag entries with an extra delay
// or mark them dropped; the simulator then counts them sent-and-dropped.
struct OutMessage {
    Address dest;
    ProtocolMessage msg;
    Tick extra_delay{0};
    bool dropped{false};
};

struct Outbox {
    std::vector<OutMessage> sends;
    std::vector<TimerRequest> timers;

    bool empty() const { return sends.empty() && timers.empty(); }
};

// What an engine consumes: a delivered message or one of its timers firing.
using Event = std::variant<ProtocolMessage, TimerKey>;

// Objective misbehavior observed by a replica. Feeds score penalties.
struct Evidence {
    enum class Kind : std::uint8_t { Equivocation, ViewChangeConviction };
    Kind kind{Kind::Equivocation};
    NodeId accused;
    View view;
    auto operator<=>(const Evidence&) const = default;
};

}  // namespace sgpbft
