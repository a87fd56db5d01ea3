// Backtesting CLI: replay a recorded or synthetic series through an online
// prediction-set controller and emit step logs, summaries, and plot data.
//
//   copid run <config.json> [--out DIR] [--seed N] [--formats steps,summary,plotdata]
//   copid sweep <config.json> --controllers p,pi,aci --rates 0.01,0.05 [--out DIR] [--seed N]
//
// Exit code 0 on success; any failure prints a diagnostic to stderr and
// returns nonzero.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "copid/copid.hpp"

namespace {

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

copid::EmitFormats parse_formats(const std::string& csv) {
    copid::EmitFormats formats;
    formats.steps = false;
    formats.summary = false;
    formats.plotdata = false;
    for (const std::string& name : split_list(csv)) {
        if (name == "steps") {
            formats.steps = true;
        } else if (name == "summary") {
            formats.summary = true;
        } else if (name == "plotdata") {
            formats.plotdata = true;
        } else {
            throw std::invalid_argument("unknown format \"" + name +
                                        "\" (expected steps, summary, or plotdata)");
        }
    }
    return formats;
}

std::string sanitize_rate(double rate) {
    std::ostringstream ss;
    ss << rate;
    std::string s = ss.str();
    for (char& c : s) {
        if (c == '.') c = 'p';
        if (c == '-') c = 'm';
    }
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"online prediction-set backtester"};
    app.require_subcommand(1);

    std::string run_config_path;
    std::string run_out = "out";
    std::int64_t seed = -1;
    std::string formats_csv = "steps,summary,plotdata";
    CLI::App* run_cmd = app.add_subcommand("run", "execute one configured run");
    run_cmd->add_option("config", run_config_path, "path to the JSON run config")->required();
    run_cmd->add_option("--out", run_out, "output directory");
    run_cmd->add_option("--seed", seed, "override the synthetic-source seed");
    run_cmd->add_option("--formats", formats_csv,
                        "comma-separated artifacts to write: steps,summary,plotdata");

    std::string sweep_config_path;
    std::string sweep_out = "out";
    std::string controllers_csv;
    std::string rates_csv;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a controller x rate grid");
    sweep_cmd->add_option("config", sweep_config_path, "path to the JSON run config")->required();
    sweep_cmd->add_option("--controllers", controllers_csv, "comma-separated controller modes")
        ->required();
    sweep_cmd->add_option("--rates", rates_csv, "comma-separated adaptation rates")->required();
    sweep_cmd->add_option("--out", sweep_out, "output directory");
    sweep_cmd->add_option("--seed", seed, "override the synthetic-source seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            copid::RunConfig cfg = copid::load_run_config(run_config_path);
            if (seed >= 0) cfg.source.synth.seed = static_cast<std::uint64_t>(seed);
            const copid::EmitFormats formats = parse_formats(formats_csv);
            const copid::RunResult result = copid::run_experiment(cfg);
            copid::emit(result, run_out, formats);
            std::cout << "run \"" << result.summary.name << "\": " << result.summary.steps
                      << " steps, marginal coverage "
                      << copid::detail::format_double(result.summary.marginal_coverage) << " (target "
                      << copid::detail::format_double(1.0 - cfg.alpha) << ")\n";
            for (const std::string& w : result.summary.warnings) {
                std::cerr << "warning: " << w << "\n";
            }
            return 0;
        }
        // sweep
        copid::RunConfig base = copid::load_run_config(sweep_config_path);
        if (seed >= 0) base.source.synth.seed = static_cast<std::uint64_t>(seed);
        const std::vector<std::string> controllers = split_list(controllers_csv);
        std::vector<double> rates;
        for (const std::string& r : split_list(rates_csv)) {
            try {
                std::size_t used = 0;
                rates.push_back(std::stod(r, &used));
                if (used != r.size()) throw std::invalid_argument(r);
            } catch (const std::exception&) {
                throw std::invalid_argument("--rates: \"" + r + "\" is not a number");
            }
        }
        const std::vector<copid::SweepCell> cells = copid::sweep(base, controllers, rates);
        std::filesystem::create_directories(sweep_out);
        const std::filesystem::path out_dir(sweep_out);
        {
            std::ofstream out(out_dir / "sweep_summary.json");
            if (!out.good()) throw std::runtime_error("cannot open sweep_summary.json");
            out << copid::sweep_to_json(cells).dump(2) << "\n";
        }
        bool any_failed = false;
        for (const copid::SweepCell& cell : cells) {
            const std::string label = cell.controller + "_" + sanitize_rate(cell.rate);
            if (!cell.ok) {
                any_failed = true;
                std::cerr << "cell " << label << " failed: " << cell.error << "\n";
                continue;
            }
            std::cout << "cell " << label << ": coverage "
                      << copid::detail::format_double(cell.summary.marginal_coverage) << "\n";
        }
        // Re-run the successful cells to emit their full artifacts.
        for (const copid::SweepCell& cell : cells) {
            if (!cell.ok) continue;
            const copid::Mode mode = copid::parse_mode(cell.controller);
            const copid::RunConfig cfg = copid::apply_sweep_rate(base, mode, cell.rate);
            const copid::RunResult result = copid::run_experiment(cfg);
            copid::emit(result, out_dir / (cell.controller + "_" + sanitize_rate(cell.rate)));
        }
        return any_failed ? 2 : 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
