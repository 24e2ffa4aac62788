#pragma once

#include <string>
#include <vector>

#include "vfl/simulator.hpp"

namespace vfl::cli {

// Header plus one row per round; accuracy carries six decimal places and the
// miner column holds a 16-hex-digit key prefix (empty on failed rounds).
// Output bytes are a pure function of the input.
std::string metrics_csv(const std::vector<sim::RoundMetrics>& metrics);
void emit_metrics_csv(const std::vector<sim::RoundMetrics>& metrics, const std::string& path);

struct PlotSeries {
    std::string label;
    std::vector<double> accuracies;  // one point per round
};

PlotSeries plot_series(std::string label, const std::vector<sim::RoundMetrics>& metrics);

// Self-contained static SVG line chart: accuracy (0-1) against round, one
// polyline per series with a legend. No external assets.
std::string accuracy_plot_svg(const std::vector<PlotSeries>& series);
void emit_accuracy_plot(const std::vector<PlotSeries>& series, const std::string& path);

struct ManifestPaths {
    std::string config_path;  // as given on the command line, may be empty
    std::vector<std::string> outputs;
};

// Reproducibility record: config snapshot, master seed, version, timestamps.
// Written before round 1 and finalized after the run.
void write_manifest(const sim::ExperimentConfig& cfg, const ManifestPaths& paths,
                    const std::string& manifest_path, const std::string& started_at,
                    const std::string& finished_at = "");

std::string timestamp_now();

}  // namespace vfl::cli
