#pragma once

#include <string>

#include "sgpbft/metrics.hpp"
#include "sgpbft/sim.hpp"

namespace sgpbft {

// Stable identifier of a scenario: hex digest of the canonical config
// encoding. Identical configs map to identical ids.
std::string scenario_id(const ScenarioSpec& spec);

// Human-readable, byte-reproducible run report (scenario echo + outcomes +
// counters + round/rotation/view-change logs).
std::string serialize_report(const RunReport& report);

// results.csv column set; the header line is part of the interface.
std::string csv_header();
std::string csv_row(const MetricsRecord& record);

std::string hex(const Bytes& bytes);
std::string hex(const Digest& digest);

}  // namespace sgpbft
