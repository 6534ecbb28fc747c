#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string_view>

#include "sgpbft/types.hpp"

namespace sgpbft {

// Canonical encoding: length-prefixed field concatenation in declaration
// order. Fixed-width integers are little-endian; variable-length fields carry
// a u32 length prefix; optional fields a presence byte. The encoding is
// injective on the message fields, so digests and authenticator tags are
// reproducible bit-for-bit.
class Encoder {
public:
    void put_u8(std::uint8_t v) { buf_.push_back(v); }
    void put_u32(std::uint32_t v);
    void put_u64(std::uint64_t v);
    void put_bytes(std::span<const std::uint8_t> data);  // with length prefix
    void put_raw(std::span<const std::uint8_t> data);    // no prefix

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

// SipHash-2-4 keyed 64-bit PRF.
std::uint64_t siphash24(std::uint64_t k0, std::uint64_t k1, std::span<const std::uint8_t> data);

// Canonical bytes of a request, excluding its authenticator (both the digest
// and the client tag are computed over these bytes).
Bytes canonical_bytes(const ClientRequest& req);

// Canonical bytes of a full message, excluding its own authenticator but
// including any embedded request together with the request's tag.
Bytes canonical_bytes(const ProtocolMessage& msg);

Digest digest_of(const ClientRequest& req);
Digest digest_of_bytes(std::span<const std::uint8_t> data);

// Shared-key authenticator table. Every scenario participant (nodes and
// clients) gets a key derived from the scenario seed; verification against an
// unregistered sender fails rather than aborting.
class Keyring {
public:
    Keyring(std::uint64_t seed, std::uint32_t n_nodes, std::uint32_t n_clients = 1);

    AuthTag sign(Address sender, std::span<const std::uint8_t> data) const;
    bool verify(Address sender, std::span<const std::uint8_t> data, AuthTag tag) const;

    AuthTag sign_msg(Address sender, const ProtocolMessage& msg) const;
    bool verify_msg(const ProtocolMessage& msg) const;

    AuthTag sign_request(const ClientRequest& req) const;
    bool verify_request(const ClientRequest& req) const;

private:
    struct Key {
        std::uint64_t k0;
        std::uint64_t k1;
    };
    std::map<Address, Key> keys_;
};

}  // namespace sgpbft
