#include "sgpbft/faults.hpp"

namespace sgpbft {

const char* fault_behavior_name(FaultBehavior behavior) {
    switch (behavior) {
        case FaultBehavior::Silent: return "silent";
        case FaultBehavior::EquivocatePrePrepare: return "equivocate";
        case FaultBehavior::WrongResult: return "wrong_result";
        case FaultBehavior::DelayAll: return "delay";
        case FaultBehavior::DropRate: return "drop";
    }
    return "unknown";
}

namespace {

void flip_first_byte(Bytes& bytes) {
    if (bytes.empty()) {
        bytes.push_back(0x01);
    } else {
        bytes[0] ^= 0x01;
    }
}

void equivocate_pre_prepares(std::vector<OutMessage>& sends, const Keyring& keys) {
    // Split the pre-prepare destinations in emission order: the first half
    // keeps the true digest, the second half gets a conflicting one.
    std::vector<std::size_t> pp_idx;
    for (std::size_t i = 0; i < sends.size(); ++i) {
        if (sends[i].msg.kind == MsgKind::PrePrepare) pp_idx.push_back(i);
    }
    const std::size_t keep = pp_idx.size() / 2;
    for (std::size_t j = keep; j < pp_idx.size(); ++j) {
        ProtocolMessage& msg = sends[pp_idx[j]].msg;
        msg.digest.bytes[0] ^= 0x01;
        msg.auth = keys.sign_msg(msg.sender, msg);
    }
}

void corrupt_results(std::vector<OutMessage>& sends, const Keyring& keys) {
    for (OutMessage& send : sends) {
        if (send.msg.kind != MsgKind::Response && send.msg.kind != MsgKind::Reply &&
            send.msg.kind != MsgKind::ResultBroadcast) {
            continue;
        }
        if (!send.msg.result) continue;
        flip_first_byte(*send.msg.result);
        // The certificate, if any, still vouches for the original result; a
        // Byzantine node cannot forge the other responders' tags.
        send.msg.auth = keys.sign_msg(send.msg.sender, send.msg);
    }
}

}  // namespace

EngineStep wrap(EngineStep inner, const FaultSpec& spec, std::shared_ptr<const Keyring> keys,
                NodeId self, std::shared_ptr<Rng> rng) {
    (void)self;
    return [inner = std::move(inner), spec, keys = std::move(keys),
            rng = std::move(rng)](const Event& event) -> Outbox {
        Outbox out = inner(event);
        switch (spec.behavior) {
            case FaultBehavior::Silent:
                out.sends.clear();
                break;
            case FaultBehavior::EquivocatePrePrepare:
                // On a non-master node there is no pre-prepare to equivocate;
                // the transform is a no-op then.
                equivocate_pre_prepares(out.sends, *keys);
                break;
            case FaultBehavior::WrongResult:
                corrupt_results(out.sends, *keys);
                break;
            case FaultBehavior::DelayAll:
                for (OutMessage& send : out.sends) send.extra_delay += spec.delay_ticks;
                break;
            case FaultBehavior::DropRate:
                for (OutMessage& send : out.sends) {
                    if (rng->next_unit() < spec.drop_rate) send.dropped = true;
                }
                break;
        }
        return out;
    };
}

}  // namespace sgpbft
