// twinbeam: simulate, analyze and fit twin-beam sub-shot-noise imaging runs.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "twinbeam/twinbeam.hpp"

namespace fs = std::filesystem;
using namespace twinbeam;

namespace {

RunConfig config_from(const std::string& path)
{
    return path.empty() ? RunConfig{} : load_config(path);
}

FilterMode mode_from(const std::string& m)
{
    return m == "sliding" ? FilterMode::Sliding : FilterMode::Block;
}

std::vector<std::size_t> scales_from(const std::string& text)
{
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t v = 0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size() || v == 0)
            throw ConfigError("--scales expects positive integers separated by commas, got '" + text + "'");
        out.push_back(v);
    }
    return out;
}

int run(int argc, char** argv)
{
    CLI::App app{"Twin-beam sub-shot-noise imaging: simulation, analysis and model fits"};
    app.require_subcommand(1);

    std::string configPath;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> shots;
    std::string outDir;
    std::string scales;
    std::string scheme = "all";
    std::string mode = "block";

    auto* sim = app.add_subcommand("sim", "Generate calibration and sample frame stacks");
    sim->add_option("--config", configPath, "Configuration file (key = value)")->check(CLI::ExistingFile);
    sim->add_option("--seed", seed, "Override the seed");
    sim->add_option("--shots", shots, "Override the shot count of both stacks");
    sim->add_option("--out", outDir, "Output directory");

    std::string stacksDir;
    auto* analyze = app.add_subcommand("analyze", "NRF/Fano/SNR tables, NRF map, cross-correlation and absorption maps");
    analyze->add_option("--config", configPath, "Configuration file")->check(CLI::ExistingFile);
    analyze->add_option("--stacks", stacksDir, "Directory holding calibration/ and sample/ (default: config out)");
    analyze->add_option("--out", outDir, "Output directory (default: <stacks>/analysis)");
    analyze->add_option("--scales", scales, "Filter scales d1,d2,...");
    analyze->add_option("--scheme", scheme, "Imaging scheme")->check(CLI::IsMember({"dr", "dc", "ssn", "all"}));
    analyze->add_option("--mode", mode,
                        "Neighbourhood filter (the 'quantum-enhanced median filter', which averages)")
        ->check(CLI::IsMember({"block", "sliding"}));

    std::string input;
    auto* filter = app.add_subcommand("filter", "d x d neighbourhood mean of a TBF1 frame");
    filter->add_option("input", input, "TBF1 frame")->required()->check(CLI::ExistingFile);
    filter->add_option("--out", outDir, "Output TBF1 path")->required();
    filter->add_option("--scales", scales, "Filter scale d")->required();
    filter->add_option("--mode", mode, "Filter mode")->check(CLI::IsMember({"block", "sliding"}));

    FitSettings fitSettings;
    auto* fit = app.add_subcommand("fit", "Fit eta0, r and delta to an NRF-vs-L curve");
    fit->add_option("curve", input, "CSV with L_um,sigma_eff,stderr")->required()->check(CLI::ExistingFile);
    fit->add_option("--out", outDir, "Directory for fit.txt and fit.csv");
    fit->add_option("--beta", fitSettings.beta, "Border-mode collection (fixed)");
    fit->add_option("--mu", fitSettings.mu, "Photons per mode (fixed)");
    fit->add_option("--gamma", fitSettings.gamma, "Channel balance (fixed)");
    fit->add_option("--eta0-guess", fitSettings.eta0Guess, "Starting eta0");
    fit->add_option("--r-guess", fitSettings.rGuess, "Starting r in micrometres");
    fit->add_option("--delta-guess", fitSettings.deltaGuess, "Starting delta in micrometres");

    auto* theoryCmd = app.add_subcommand("theory", "Closed-form noise model");
    theoryCmd->require_subcommand(1);
    std::string formula;
    std::vector<std::string> assignments;
    std::string formulaHelp = "Formula:";
    for (const auto& [name, params] : theory_formulas())
        formulaHelp += "\n  " + name + "  " + params;
    auto* eval = theoryCmd->add_subcommand("eval", "Evaluate a formula, e.g. eta_coll X=5 D=0");
    eval->add_option("formula", formula, formulaHelp)->required();
    eval->add_option("params", assignments, "key=value parameters");

    std::string reportDir;
    auto* report = app.add_subcommand("report", "Print the tables of an analysis directory");
    report->add_option("dir", reportDir, "Analysis directory")->required()->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (*sim) {
        RunConfig c = config_from(configPath);
        if (seed)
            c.params.seed = *seed;
        if (shots) {
            c.shots = *shots;
            c.calibrationShots = *shots;
        }
        if (!outDir.empty())
            c.out = outDir;
        const SimOutputs o = cmd_sim(c);
        std::cout << o.calibrationManifest.string() << "\n" << o.sampleManifest.string() << "\n";
    } else if (*analyze) {
        RunConfig c = config_from(configPath);
        const fs::path stacks = stacksDir.empty() ? c.out : fs::path(stacksDir);
        AnalyzeOptions opt;
        opt.scales = scales.empty() ? c.scales : scales_from(scales);
        opt.mode = analyze->count("--mode") ? mode_from(mode) : c.filterMode;
        opt.scheme = analyze->count("--scheme") ? scheme : c.scheme;
        opt.out = outDir.empty() ? stacks / "analysis" : fs::path(outDir);
        cmd_analyze(c, stacks / "calibration" / "manifest.txt", stacks / "sample" / "manifest.txt", opt);
        std::cout << opt.out.string() << "\n";
    } else if (*filter) {
        const auto d = scales_from(scales);
        if (d.size() != 1)
            throw ConfigError("filter takes a single scale");
        cmd_filter(input, outDir, d.front(), mode_from(mode));
    } else if (*fit) {
        cmd_fit(input, fitSettings, std::cout, outDir.empty() ? std::nullopt : std::optional<fs::path>(outDir));
    } else if (*eval) {
        std::map<std::string, double> args;
        for (const auto& kv : assignments) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ConfigError("expected key=value, got '" + kv + "'");
            const std::string value = kv.substr(eq + 1);
            double v = 0.0;
            const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
            if (value.empty() || res.ec != std::errc() || res.ptr != value.data() + value.size())
                throw ConfigError("cannot parse value in '" + kv + "'");
            args[kv.substr(0, eq)] = v;
        }
        std::cout << cmd_theory_eval(formula, args);
    } else if (*report) {
        std::cout << cmd_report(reportDir);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
