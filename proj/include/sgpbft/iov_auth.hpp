#pragma once

#include <map>
#include <memory>
#include <string>

#include "sgpbft/sim.hpp"
#include "sgpbft/types.hpp"

namespace sgpbft {

// Short Weierstrass curve arithmetic over a 61-bit prime field. Explicitly a
// toy instantiation: deterministic and fast, with no production security
// claims.
namespace ec {

struct Point {
    std::uint64_t x{0};
    std::uint64_t y{0};
    bool infinity{true};
    auto operator<=>(const Point&) const = default;
};

struct Curve {
    std::uint64_t p;  // field modulus
    std::uint64_t a;
    std::uint64_t b;
    std::uint64_t q;  // prime order of the generator subgroup
    Point g;

    bool nonsingular() const;
    bool on_curve(const Point& pt) const;
    Point add(const Point& lhs, const Point& rhs) const;
    Point mul(std::uint64_t k, const Point& pt) const;
};

// Fixed verified parameters: p = 2^61 - 1, y^2 = x^3 - 3x + 40, generator of
// a 59-bit prime-order subgroup (cofactor 7).
const Curve& toy_curve();

}  // namespace ec

struct SystemParams {
    std::uint64_t p;
    std::uint64_t q;
    std::uint64_t a;
    std::uint64_t b;
    ec::Point generator;
    ec::Point public_key;

    // H1: bytes -> Z_q*; H2: group point -> Z_q* (declared for parameter
    // completeness; the credential scheme itself only uses H1).
    std::uint64_t h1(std::span<const std::uint8_t> data) const;
    std::uint64_t h2(const ec::Point& pt) const;
};

struct SpPrivateKey {
    std::uint64_t value{0};
};

// Schnorr-style credential over (pseudo_id, registration_time), verifiable
// with the service provider's public key.
struct VehicleCredential {
    std::uint64_t pseudo_id{0};  // h in Z_q*
    Tick registered_at{0};       // T
    std::uint64_t sig_e{0};      // S = (e, s)
    std::uint64_t sig_s{0};

    Bytes to_op_bytes() const;
    static std::optional<VehicleCredential> from_op_bytes(const Bytes& op);
};

std::pair<SystemParams, SpPrivateKey> sp_init(std::uint64_t seed);

bool verify_credential(const SystemParams& params, const VehicleCredential& cred);

struct AuthError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Service provider: system initialization and vehicle registration. Stores
// the identity -> pseudo-id mapping and a salted password hash; passwords
// play no further protocol role.
class ServiceProvider {
public:
    explicit ServiceProvider(std::uint64_t seed);

    const SystemParams& params() const { return params_; }

    // Draws the registration nonce from the scenario RNG; duplicate
    // identities are rejected.
    VehicleCredential register_vehicle(const std::string& id, const std::string& password);

    VehicleCredential sign_credential(std::uint64_t pseudo_id, Tick registered_at) const;

private:
    SystemParams params_;
    SpPrivateKey key_;
    Rng rng_;
    Tick clock_{0};
    std::map<std::string, std::uint64_t> registered_;      // identity -> pseudo id
    std::map<std::string, std::uint64_t> password_hashes_;
};

// Append-only authentication ledger; one replica per RSU.
struct LedgerEntry {
    std::uint64_t pseudo_id;
    Tick registered_at;
    View view;
    SeqNum seq;
    auto operator<=>(const LedgerEntry&) const = default;
};

class Ledger {
public:
    bool contains(std::uint64_t pseudo_id) const { return ids_.contains(pseudo_id); }
    void append(const LedgerEntry& entry);
    const std::vector<LedgerEntry>& entries() const { return entries_; }
    std::string serialize() const;  // "pseudo_id_hex, T, view, seq" lines

private:
    std::vector<LedgerEntry> entries_;
    std::set<std::uint64_t> ids_;
};

// Consensus-backed authentication: RSUs run SG-PBFT; each honest RSU's
// execution verifies the credential and pseudo-id uniqueness; finalized
// accepts append to every RSU ledger.
struct AuthOutcome {
    std::vector<bool> accepted;                     // per credential
    RunReport report;
    std::map<NodeId, Ledger> rsu_ledgers;           // one per RSU, candidates included
    Ledger authoritative;                           // replay of client-certified accepts
};

AuthOutcome authenticate(const SystemParams& params, const std::vector<VehicleCredential>& creds,
                         ScenarioSpec scenario);

// Result bytes: 'A'/'R' + pseudo id (little endian).
Bytes auth_result_bytes(bool accept, std::uint64_t pseudo_id);
bool auth_result_accepted(const Bytes& result);

}  // namespace sgpbft
