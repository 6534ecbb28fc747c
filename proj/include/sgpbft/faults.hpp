#pragma once

#include <functional>
#include <memory>

#include "sgpbft/rng.hpp"
#include "sgpbft/types.hpp"
#include "sgpbft/wire.hpp"

namespace sgpbft {

// An engine as the simulator sees it: one deterministic transition per event.
using EngineStep = std::function<Outbox(const Event&)>;

enum class FaultBehavior : std::uint8_t {
    Silent,
    EquivocatePrePrepare,
    WrongResult,
    DelayAll,
    DropRate,
};

struct FaultSpec {
    NodeId node;
    FaultBehavior behavior{FaultBehavior::Silent};
    Tick delay_ticks{0};     // DelayAll
    double drop_rate{0.0};   // DropRate

    static FaultSpec silent(NodeId n) { return {n, FaultBehavior::Silent, 0, 0.0}; }
    static FaultSpec equivocate(NodeId n) { return {n, FaultBehavior::EquivocatePrePrepare, 0, 0.0}; }
    static FaultSpec wrong_result(NodeId n) { return {n, FaultBehavior::WrongResult, 0, 0.0}; }
    static FaultSpec delay_all(NodeId n, Tick d) { return {n, FaultBehavior::DelayAll, d, 0.0}; }
    static FaultSpec drop_rate(NodeId n, double p) { return {n, FaultBehavior::DropRate, 0, p}; }
};

const char* fault_behavior_name(FaultBehavior behavior);

// Wraps an honest engine step into a Byzantine one. Only the emitted message
// list is transformed; the wrapped engine's state transitions are untouched.
// `rng` drives DropRate draws and must be the scenario RNG for reproducible
// runs. `keys` re-signs mutated messages with the faulty node's own key.
EngineStep wrap(EngineStep inner, const FaultSpec& spec, std::shared_ptr<const Keyring> keys,
                NodeId self, std::shared_ptr<Rng> rng);

}  // namespace sgpbft
