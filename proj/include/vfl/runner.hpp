#pragma once

#include <string>
#include <vector>

#include "vfl/simulator.hpp"

namespace vfl::cli {

struct RunOutputs {
    std::vector<sim::RoundMetrics> metrics;
    std::string metrics_csv_path;
    std::string plot_path;
    std::string chain_path;  // empty in vanilla mode
    std::string manifest_path;
};

// Executes one experiment and writes manifest.json, metrics.csv,
// accuracy.svg, and (protocol mode) chain.bin into out_dir.
RunOutputs run_and_emit(const sim::ExperimentConfig& cfg, const std::string& out_dir,
                        const std::string& config_path, const sim::RoundSink& sink = {});

struct CompareOutputs {
    std::vector<sim::RoundMetrics> protocol_metrics;
    std::vector<sim::RoundMetrics> vanilla_metrics;
    std::string protocol_csv_path;
    std::string vanilla_csv_path;
    std::string plot_path;
    std::string manifest_path;
};

// Runs protocol and vanilla modes with shared seeds and emits one CSV per
// mode plus a single overlay plot.
CompareOutputs compare_and_emit(const sim::ExperimentConfig& cfg, const std::string& out_dir,
                                const std::string& config_path);

}  // namespace vfl::cli
