#include "sgpbft/wire.hpp"

#include <cstring>

#include "sgpbft/rng.hpp"

namespace sgpbft {

const char* msg_kind_name(MsgKind kind) {
    switch (kind) {
        case MsgKind::Request: return "request";
        case MsgKind::PrePrepare: return "pre_prepare";
        case MsgKind::Prepare: return "prepare";
        case MsgKind::Commit: return "commit";
        case MsgKind::Response: return "response";
        case MsgKind::ResultBroadcast: return "result_broadcast";
        case MsgKind::Reply: return "reply";
        case MsgKind::ViewChange: return "view_change";
    }
    return "unknown";
}

void Encoder::put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Encoder::put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Encoder::put_bytes(std::span<const std::uint8_t> data) {
    put_u32(static_cast<std::uint32_t>(data.size()));
    put_raw(data);
}

void Encoder::put_raw(std::span<const std::uint8_t> data) {
    buf_.insert(buf_.end(), data.begin(), data.end());
}

namespace {

inline std::uint64_t rotl(std::uint64_t x, int b) { return (x << b) | (x >> (64 - b)); }

inline void sipround(std::uint64_t& v0, std::uint64_t& v1, std::uint64_t& v2, std::uint64_t& v3) {
    v0 += v1;
    v1 = rotl(v1, 13);
    v1 ^= v0;
    v0 = rotl(v0, 32);
    v2 += v3;
    v3 = rotl(v3, 16);
    v3 ^= v2;
    v0 += v3;
    v3 = rotl(v3, 21);
    v3 ^= v0;
    v2 += v1;
    v1 = rotl(v1, 17);
    v1 ^= v2;
    v2 = rotl(v2, 32);
}

}  // namespace

std::uint64_t siphash24(std::uint64_t k0, std::uint64_t k1, std::span<const std::uint8_t> data) {
    std::uint64_t v0 = 0x736f6d6570736575ULL ^ k0;
    std::uint64_t v1 = 0x646f72616e646f6dULL ^ k1;
    std::uint64_t v2 = 0x6c7967656e657261ULL ^ k0;
    std::uint64_t v3 = 0x7465646279746573ULL ^ k1;

    const std::size_t n = data.size();
    const std::size_t end = n - (n % 8);
    for (std::size_t i = 0; i < end; i += 8) {
        std::uint64_t m = 0;
        std::memcpy(&m, data.data() + i, 8);
        v3 ^= m;
        sipround(v0, v1, v2, v3);
        sipround(v0, v1, v2, v3);
        v0 ^= m;
    }
    std::uint64_t last = static_cast<std::uint64_t>(n & 0xff) << 56;
    for (std::size_t i = end; i < n; ++i) {
        last |= static_cast<std::uint64_t>(data[i]) << (8 * (i - end));
    }
    v3 ^= last;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    v0 ^= last;
    v2 ^= 0xff;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    return v0 ^ v1 ^ v2 ^ v3;
}

Bytes canonical_bytes(const ClientRequest& req) {
    Encoder enc;
    enc.put_bytes(req.op);
    enc.put_u64(static_cast<std::uint64_t>(req.timestamp));
    enc.put_u32(req.client.value);
    return enc.take();
}

Bytes canonical_bytes(const ProtocolMessage& msg) {
    Encoder enc;
    enc.put_u8(static_cast<std::uint8_t>(msg.kind));
    enc.put_u64(msg.view.value);
    enc.put_u64(msg.seq.value);
    enc.put_raw(msg.digest.bytes);
    enc.put_u8(msg.sender.is_client ? 1 : 0);
    enc.put_u32(msg.sender.value);
    enc.put_u8(msg.body.has_value() ? 1 : 0);
    if (msg.body) {
        enc.put_bytes(canonical_bytes(*msg.body));
        enc.put_u64(msg.body->auth.value);
    }
    enc.put_u8(msg.result.has_value() ? 1 : 0);
    if (msg.result) enc.put_bytes(*msg.result);
    enc.put_u32(static_cast<std::uint32_t>(msg.cert.size()));
    for (const CertEntry& e : msg.cert) {
        enc.put_u32(e.node.value);
        enc.put_u64(e.tag.value);
    }
    return enc.take();
}

namespace {
// Domain-separation constants for the two digest halves.
constexpr std::uint64_t kDigestKeyA0 = 0x8f1c9a4e5b6d7081ULL;
constexpr std::uint64_t kDigestKeyA1 = 0x2e4a6c8e0f132547ULL;
constexpr std::uint64_t kDigestKeyB0 = 0x69d2b18a4c3e5f70ULL;
constexpr std::uint64_t kDigestKeyB1 = 0x13579bdf02468aceULL;
}  // namespace

Digest digest_of_bytes(std::span<const std::uint8_t> data) {
    Digest d;
    const std::uint64_t lo = siphash24(kDigestKeyA0, kDigestKeyA1, data);
    const std::uint64_t hi = siphash24(kDigestKeyB0, kDigestKeyB1, data);
    for (int i = 0; i < 8; ++i) {
        d.bytes[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(lo >> (8 * i));
        d.bytes[static_cast<std::size_t>(8 + i)] = static_cast<std::uint8_t>(hi >> (8 * i));
    }
    return d;
}

Digest digest_of(const ClientRequest& req) {
    return digest_of_bytes(canonical_bytes(req));
}

Keyring::Keyring(std::uint64_t seed, std::uint32_t n_nodes, std::uint32_t n_clients) {
    Rng rng = Rng(seed ^ 0x5ee8d1a3c4b59672ULL);
    for (std::uint32_t i = 0; i < n_nodes; ++i) {
        keys_[Address::node(NodeId{i})] = Key{rng.next_u64(), rng.next_u64()};
    }
    for (std::uint32_t i = 0; i < n_clients; ++i) {
        keys_[Address::client(ClientId{i})] = Key{rng.next_u64(), rng.next_u64()};
    }
}

AuthTag Keyring::sign(Address sender, std::span<const std::uint8_t> data) const {
    auto it = keys_.find(sender);
    if (it == keys_.end()) return AuthTag{0};
    return AuthTag{siphash24(it->second.k0, it->second.k1, data)};
}

bool Keyring::verify(Address sender, std::span<const std::uint8_t> data, AuthTag tag) const {
    auto it = keys_.find(sender);
    if (it == keys_.end()) return false;
    return siphash24(it->second.k0, it->second.k1, data) == tag.value;
}

AuthTag Keyring::sign_msg(Address sender, const ProtocolMessage& msg) const {
    return sign(sender, canonical_bytes(msg));
}

bool Keyring::verify_msg(const ProtocolMessage& msg) const {
    return verify(msg.sender, canonical_bytes(msg), msg.auth);
}

AuthTag Keyring::sign_request(const ClientRequest& req) const {
    return sign(Address::client(req.client), canonical_bytes(req));
}

bool Keyring::verify_request(const ClientRequest& req) const {
    return verify(Address::client(req.client), canonical_bytes(req), req.auth);
}

}  // namespace sgpbft
