#include "vfl/report.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "vfl/config.hpp"

namespace vfl::cli {

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("failed writing " + path);
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b"};

}  // namespace

std::string metrics_csv(const std::vector<sim::RoundMetrics>& metrics) {
    std::string out = "round,global_accuracy,excluded,blacklist_size,winning_miner,round_failed\n";
    for (const sim::RoundMetrics& m : metrics) {
        out += std::to_string(m.round);
        out += ',';
        out += fmt("%.6f", m.global_accuracy);
        out += ',';
        out += std::to_string(m.excluded_update_count);
        out += ',';
        out += std::to_string(m.blacklist_size);
        out += ',';
        if (m.winning_miner) out += m.winning_miner->short_hex();
        out += ',';
        out += m.round_failed ? '1' : '0';
        out += '\n';
    }
    return out;
}

void emit_metrics_csv(const std::vector<sim::RoundMetrics>& metrics, const std::string& path) {
    write_file(path, metrics_csv(metrics));
}

PlotSeries plot_series(std::string label, const std::vector<sim::RoundMetrics>& metrics) {
    PlotSeries s;
    s.label = std::move(label);
    s.accuracies.reserve(metrics.size());
    for (const sim::RoundMetrics& m : metrics) s.accuracies.push_back(m.global_accuracy);
    return s;
}

std::string accuracy_plot_svg(const std::vector<PlotSeries>& series) {
    if (series.empty()) throw std::invalid_argument("accuracy_plot_svg: no series");

    constexpr double width = 860, height = 520;
    constexpr double left = 62, right = 840, top = 24, bottom = 474;

    std::size_t max_rounds = 1;
    for (const PlotSeries& s : series) max_rounds = std::max(max_rounds, s.accuracies.size());

    const auto x_of = [&](std::size_t round_index) {
        const double span = max_rounds > 1 ? static_cast<double>(max_rounds - 1) : 1.0;
        return left + (right - left) * static_cast<double>(round_index) / span;
    };
    const auto y_of = [&](double accuracy) { return bottom - (bottom - top) * accuracy; };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) +
           "\" height=\"" + fmt("%.0f", height) + "\" viewBox=\"0 0 " + fmt("%.0f", width) + " " +
           fmt("%.0f", height) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // gridlines and y labels every 0.1
    for (int i = 0; i <= 10; ++i) {
        const double acc = i / 10.0;
        const double y = y_of(acc);
        svg += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", y) + "\" x2=\"" +
               fmt("%.1f", right) + "\" y2=\"" + fmt("%.1f", y) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt("%.1f", left - 8) + "\" y=\"" + fmt("%.1f", y + 4) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" +
               fmt("%.1f", acc) + "</text>\n";
    }
    // x ticks
    const std::size_t step = std::max<std::size_t>(1, (max_rounds + 9) / 10);
    for (std::size_t r = 0; r < max_rounds; r += step) {
        const double x = x_of(r);
        svg += "<line x1=\"" + fmt("%.1f", x) + "\" y1=\"" + fmt("%.1f", bottom) + "\" x2=\"" +
               fmt("%.1f", x) + "\" y2=\"" + fmt("%.1f", bottom + 5) +
               "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", bottom + 20) +
               "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
               std::to_string(r + 1) + "</text>\n";
    }
    // axes
    svg += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top) + "\" x2=\"" +
           fmt("%.1f", left) + "\" y2=\"" + fmt("%.1f", bottom) +
           "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
    svg += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", bottom) + "\" x2=\"" +
           fmt("%.1f", right) + "\" y2=\"" + fmt("%.1f", bottom) +
           "\" stroke=\"#333333\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + fmt("%.1f", (left + right) / 2) + "\" y=\"" + fmt("%.1f", height - 6) +
           "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">round</text>\n";
    svg += "<text x=\"16\" y=\"" + fmt("%.1f", (top + bottom) / 2) +
           "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
           "transform=\"rotate(-90 16 " +
           fmt("%.1f", (top + bottom) / 2) + ")\">global accuracy</text>\n";

    for (std::size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const char* color = kPalette[si % std::size(kPalette)];
        std::string points;
        for (std::size_t r = 0; r < s.accuracies.size(); ++r) {
            points += fmt("%.2f", x_of(r)) + "," + fmt("%.2f", y_of(s.accuracies[r]));
            if (r + 1 < s.accuracies.size()) points += ' ';
        }
        svg += "<polyline fill=\"none\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";

        const double ly = top + 18 + 18 * static_cast<double>(si);
        svg += "<line x1=\"" + fmt("%.1f", right - 170) + "\" y1=\"" + fmt("%.1f", ly - 4) +
               "\" x2=\"" + fmt("%.1f", right - 140) + "\" y2=\"" + fmt("%.1f", ly - 4) +
               "\" stroke=\"";
        svg += color;
        svg += "\" stroke-width=\"2\"/>\n";
        svg += "<text x=\"" + fmt("%.1f", right - 134) + "\" y=\"" + fmt("%.1f", ly) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + s.label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

void emit_accuracy_plot(const std::vector<PlotSeries>& series, const std::string& path) {
    write_file(path, accuracy_plot_svg(series));
}

void write_manifest(const sim::ExperimentConfig& cfg, const ManifestPaths& paths,
                    const std::string& manifest_path, const std::string& started_at,
                    const std::string& finished_at) {
    nlohmann::json manifest = {
        {"version", std::string(kVersion)},
        {"master_seed", cfg.master_seed},
        {"config", config_to_json(cfg)},
        {"config_path", paths.config_path},
        {"started_at", started_at},
        {"finished_at", finished_at.empty() ? nlohmann::json() : nlohmann::json(finished_at)},
        {"outputs", paths.outputs},
    };
    write_file(manifest_path, manifest.dump(2) + "\n");
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace vfl::cli
