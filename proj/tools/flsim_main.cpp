#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vfl/config.hpp"
#include "vfl/report.hpp"
#include "vfl/runner.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config file (JSON)");
    cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
    cmd->add_option("--out", args.out_dir, "output directory (default $VFLSIM_OUT or ./out)");
    cmd->add_option("--seed", args.seed, "master seed override")
        ->each([&args](const std::string&) { args.seed_given = true; });
}

std::string resolve_out_dir(const CommonArgs& args) {
    if (!args.out_dir.empty()) return args.out_dir;
    if (const char* env = std::getenv("VFLSIM_OUT"); env && *env) return env;
    return "out";
}

vfl::sim::ExperimentConfig load_config(const CommonArgs& args) {
    vfl::sim::ExperimentConfig cfg =
        args.config_path.empty() ? vfl::cli::config_from_json(json::object(), args.overrides)
                                 : vfl::cli::parse_config(args.config_path, args.overrides);
    if (args.seed_given) cfg.master_seed = args.seed;
    return cfg;
}

int cmd_run(const CommonArgs& args, vfl::sim::Mode mode) {
    vfl::sim::ExperimentConfig cfg = load_config(args);
    cfg.mode = mode;
    const vfl::cli::RunOutputs out =
        vfl::cli::run_and_emit(cfg, resolve_out_dir(args), args.config_path);
    std::cerr << "completed " << out.metrics.size() << " rounds; final accuracy "
              << (out.metrics.empty() ? 0.0 : out.metrics.back().global_accuracy) << "\n";
    std::cerr << "wrote " << out.metrics_csv_path << ", " << out.plot_path;
    if (!out.chain_path.empty()) std::cerr << ", " << out.chain_path;
    std::cerr << "\n";
    return kExitOk;
}

int cmd_compare(const CommonArgs& args) {
    const vfl::sim::ExperimentConfig cfg = load_config(args);
    const vfl::cli::CompareOutputs out =
        vfl::cli::compare_and_emit(cfg, resolve_out_dir(args), args.config_path);
    const double protocol_final =
        out.protocol_metrics.empty() ? 0.0 : out.protocol_metrics.back().global_accuracy;
    const double vanilla_final =
        out.vanilla_metrics.empty() ? 0.0 : out.vanilla_metrics.back().global_accuracy;
    std::cerr << "protocol final accuracy " << protocol_final << ", vanilla final accuracy "
              << vanilla_final << "\n";
    std::cerr << "wrote " << out.protocol_csv_path << ", " << out.vanilla_csv_path << ", "
              << out.plot_path << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::string& arch_name, double eps, std::uint64_t seed) {
    std::vector<std::pair<std::string, vfl::learner::Architecture>> archs;
    if (arch_name == "mlp" || arch_name == "both")
        archs.emplace_back("mlp", vfl::learner::Architecture::mlp(784, {128}, 10));
    if (arch_name == "cnn" || arch_name == "both")
        archs.emplace_back("cnn", vfl::learner::Architecture::cnn(28, 28, 10));
    if (archs.empty())
        throw vfl::sim::ConfigError("gradcheck arch must be \"mlp\", \"cnn\", or \"both\"");

    bool ok = true;
    for (const auto& [name, arch] : archs) {
        const double err = vfl::learner::grad_check(arch, eps, seed);
        std::cerr << "gradcheck " << name << ": max relative error = " << err << "\n";
        ok = ok && err < 1e-4;
    }
    return ok ? kExitOk : kExitRuntimeError;
}

json block_to_json(const vfl::chain::Block& block) {
    json j = {
        {"index", block.index},
        {"prev_digest", block.prev_digest.hex()},
        {"miner", block.miner.hex()},
        {"digest", block.digest.hex()},
        {"miner_signature", vfl::to_hex(block.miner_signature.view())},
        {"total_positive_votes", block.total_positive_votes},
        {"total_rewards", block.total_rewards},
    };
    if (block.index == 0) {
        j["payload"] = {{"initial_model_digest", vfl::to_hex(block.payload)}};
        return j;
    }
    const vfl::protocol::BlockPayload payload = vfl::protocol::decode_payload(block.payload);
    json tallies = json::array();
    for (const auto& t : payload.tallies)
        tallies.push_back(
            {{"worker", t.worker.hex()}, {"positive", t.positive}, {"negative", t.negative}});
    json updates = json::array();
    if (payload.full_updates) {
        for (const auto& u : payload.updates) {
            vfl::Encoder enc;
            vfl::learner::encode(enc, u.update);
            updates.push_back({{"worker", u.worker.hex()},
                               {"sample_count", u.sample_count},
                               {"param_count", u.update.values.size()},
                               {"update_digest", vfl::identity::digest(enc.bytes()).hex()}});
        }
    } else {
        for (const auto& [worker, dg] : payload.update_digests)
            updates.push_back({{"worker", worker.hex()}, {"update_digest", dg.hex()}});
    }
    json rewards = json::array();
    for (const auto& r : payload.rewards)
        rewards.push_back({{"vehicle", r.vehicle.hex()},
                           {"role", vfl::protocol::to_string(r.role)},
                           {"amount", r.amount}});
    j["payload"] = {{"tallies", tallies}, {"updates", updates}, {"rewards", rewards}};
    return j;
}

int cmd_inspect_chain(const std::string& chain_path, const std::string& out_path) {
    const vfl::chain::Ledger ledger = vfl::chain::load_ledger(chain_path);
    std::cerr << "height " << ledger.height() << ", chain "
              << (vfl::chain::verify_chain(ledger) ? "valid" : "INVALID") << "\n";

    json dump = json::array();
    for (const auto& block : ledger.blocks) dump.push_back(block_to_json(*block));
    const std::string text = dump.dump(2) + "\n";
    if (out_path.empty() || out_path == "-") {
        std::cout << text;
    } else {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        out << text;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic simulator of blockchain-validated federated learning"};
    app.require_subcommand(1);

    CommonArgs run_args, vanilla_args, compare_args;
    CLI::App* run_cmd = app.add_subcommand("run", "run the protocol experiment");
    add_common(run_cmd, run_args);
    CLI::App* vanilla_cmd = app.add_subcommand("vanilla", "run the vanilla FL baseline");
    add_common(vanilla_cmd, vanilla_args);
    CLI::App* compare_cmd =
        app.add_subcommand("compare", "run protocol and vanilla with shared seeds");
    add_common(compare_cmd, compare_args);

    std::string gradcheck_arch = "both";
    double gradcheck_eps = 1e-5;
    std::uint64_t gradcheck_seed = 42;
    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "finite-difference check of the backprop gradients");
    gradcheck_cmd->add_option("--arch", gradcheck_arch, "mlp, cnn, or both");
    gradcheck_cmd->add_option("--eps", gradcheck_eps, "central-difference step");
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "probe seed");

    std::string inspect_path, inspect_out = "-";
    CLI::App* inspect_cmd = app.add_subcommand("inspect-chain", "dump a chain file as JSON");
    inspect_cmd->add_option("chain", inspect_path, "chain.bin written by run")->required();
    inspect_cmd->add_option("--out", inspect_out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_args, vfl::sim::Mode::Protocol);
        if (vanilla_cmd->parsed()) return cmd_run(vanilla_args, vfl::sim::Mode::VanillaFL);
        if (compare_cmd->parsed()) return cmd_compare(compare_args);
        if (gradcheck_cmd->parsed())
            return cmd_gradcheck(gradcheck_arch, gradcheck_eps, gradcheck_seed);
        if (inspect_cmd->parsed()) return cmd_inspect_chain(inspect_path, inspect_out);
    } catch (const vfl::sim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitConfigError;
}
