#include "vfl/runner.hpp"

#include <filesystem>

#include "vfl/report.hpp"

namespace vfl::cli {

namespace fs = std::filesystem;

RunOutputs run_and_emit(const sim::ExperimentConfig& cfg, const std::string& out_dir,
                        const std::string& config_path, const sim::RoundSink& sink) {
    fs::create_directories(out_dir);
    RunOutputs out;
    out.metrics_csv_path = (fs::path(out_dir) / "metrics.csv").string();
    out.plot_path = (fs::path(out_dir) / "accuracy.svg").string();
    out.manifest_path = (fs::path(out_dir) / "manifest.json").string();
    if (cfg.mode == sim::Mode::Protocol)
        out.chain_path = (fs::path(out_dir) / "chain.bin").string();

    sim::SimulationState state = sim::make_initial_state(cfg);

    ManifestPaths paths;
    paths.config_path = config_path;
    paths.outputs = {out.metrics_csv_path, out.plot_path};
    if (!out.chain_path.empty()) paths.outputs.push_back(out.chain_path);
    const std::string started = timestamp_now();
    write_manifest(cfg, paths, out.manifest_path, started);

    out.metrics = sim::run_rounds(state, cfg, sink);

    emit_metrics_csv(out.metrics, out.metrics_csv_path);
    const std::string label =
        cfg.mode == sim::Mode::Protocol ? "protocol" : "vanilla fl";
    emit_accuracy_plot({plot_series(label, out.metrics)}, out.plot_path);
    if (!out.chain_path.empty())
        chain::save_ledger(state.ledgers.at(state.vehicles.front().id()), out.chain_path);

    write_manifest(cfg, paths, out.manifest_path, started, timestamp_now());
    return out;
}

CompareOutputs compare_and_emit(const sim::ExperimentConfig& cfg, const std::string& out_dir,
                                const std::string& config_path) {
    fs::create_directories(out_dir);
    CompareOutputs out;
    out.protocol_csv_path = (fs::path(out_dir) / "protocol.csv").string();
    out.vanilla_csv_path = (fs::path(out_dir) / "vanilla.csv").string();
    out.plot_path = (fs::path(out_dir) / "compare.svg").string();
    out.manifest_path = (fs::path(out_dir) / "manifest.json").string();

    sim::ExperimentConfig protocol_cfg = cfg;
    protocol_cfg.mode = sim::Mode::Protocol;
    sim::ExperimentConfig vanilla_cfg = cfg;
    vanilla_cfg.mode = sim::Mode::VanillaFL;

    ManifestPaths paths;
    paths.config_path = config_path;
    paths.outputs = {out.protocol_csv_path, out.vanilla_csv_path, out.plot_path};
    const std::string started = timestamp_now();
    write_manifest(protocol_cfg, paths, out.manifest_path, started);

    out.protocol_metrics = sim::run_experiment(protocol_cfg);
    out.vanilla_metrics = sim::run_vanilla_fl(vanilla_cfg);

    emit_metrics_csv(out.protocol_metrics, out.protocol_csv_path);
    emit_metrics_csv(out.vanilla_metrics, out.vanilla_csv_path);
    emit_accuracy_plot({plot_series("protocol", out.protocol_metrics),
                        plot_series("vanilla fl", out.vanilla_metrics)},
                       out.plot_path);

    write_manifest(protocol_cfg, paths, out.manifest_path, started, timestamp_now());
    return out;
}

}  // namespace vfl::cli
