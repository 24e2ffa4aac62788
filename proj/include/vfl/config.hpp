#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "vfl/simulator.hpp"

namespace vfl::cli {

inline constexpr std::string_view kVersion = "0.1.0";

// Experiment defaults: 20 vehicles split 12/5/3, 5 epochs, learning rate
// 0.01, batch size 10, v_h = 1.0, desk-scale 25 rounds and 6000/1000 data
// subsamples.
sim::ExperimentConfig default_config();

nlohmann::json config_to_json(const sim::ExperimentConfig& cfg);

// Builds a config from JSON text merged over the defaults, then applies
// key=value overrides (dotted paths). Unknown keys are rejected with the
// offending key named.
sim::ExperimentConfig config_from_json(const nlohmann::json& json,
                                       const std::vector<std::string>& overrides = {});

// Reads the file (JSON; empty file means all defaults) and merges overrides.
sim::ExperimentConfig parse_config(const std::string& path,
                                   const std::vector<std::string>& overrides = {});

}  // namespace vfl::cli
