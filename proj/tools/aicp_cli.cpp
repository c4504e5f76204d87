// Command-line front end: draw model ensembles, execute experiment sweeps,
// aggregate traces into metrics, and run the library's self-checks.
//
// Exit codes: 0 on success, 2 on configuration or usage errors, 1 on runtime
// failures.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <aicp/aicp.hpp>

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    return nlohmann::json::parse(in);
}

std::vector<aicp::LinearScm> load_ensemble(const std::string& path) {
    nlohmann::json arr = load_json(path);
    if (!arr.is_array()) throw std::invalid_argument("ensemble file must hold a JSON array");
    std::vector<aicp::LinearScm> out;
    out.reserve(arr.size());
    for (const auto& j : arr) out.push_back(aicp::scm_from_json(j));
    return out;
}

void write_ensemble(const std::string& path, const std::vector<aicp::LinearScm>& ensemble) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& scm : ensemble) arr.push_back(scm);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << arr.dump(2) << "\n";
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t master_seed = 0;
    bool master_seed_set = false;
};

aicp::ExperimentConfig load_config(const CommonArgs& args) {
    aicp::ExperimentConfig cfg = aicp::config_from_json(load_json(args.config_path));
    if (args.master_seed_set) cfg.master_seed = args.master_seed;
    return cfg;
}

std::string ensemble_path(const CommonArgs& args) {
    return (std::filesystem::path(args.out_dir) / "ensemble.json").string();
}

int do_gen(const CommonArgs& args) {
    aicp::ExperimentConfig cfg = load_config(args);
    std::filesystem::create_directories(args.out_dir);
    write_ensemble(ensemble_path(args), aicp::make_ensemble(cfg));
    std::cout << "wrote " << cfg.num_scms << " models to " << ensemble_path(args) << "\n";
    return 0;
}

int do_run(const CommonArgs& args, int workers) {
    aicp::ExperimentConfig cfg = load_config(args);
    std::filesystem::create_directories(args.out_dir);

    std::vector<aicp::LinearScm> ensemble;
    if (std::filesystem::exists(ensemble_path(args))) {
        ensemble = load_ensemble(ensemble_path(args));
        if (static_cast<int>(ensemble.size()) != cfg.num_scms)
            throw std::invalid_argument("ensemble file disagrees with num_scms");
    } else {
        ensemble = aicp::make_ensemble(cfg);
        write_ensemble(ensemble_path(args), ensemble);
    }

    std::vector<aicp::AicpTrace> traces = aicp::run_experiment(cfg, ensemble, workers);
    std::string traces_path = (std::filesystem::path(args.out_dir) / "traces.jsonl").string();
    std::ofstream out(traces_path);
    if (!out) throw std::runtime_error("cannot write '" + traces_path + "'");
    aicp::write_traces_jsonl(out, traces);
    std::cout << "wrote " << traces.size() << " traces to " << traces_path << "\n";
    return 0;
}

int do_metrics(const std::string& out_dir, std::string traces_path) {
    if (traces_path.empty())
        traces_path = (std::filesystem::path(out_dir) / "traces.jsonl").string();
    std::ifstream in(traces_path);
    if (!in) throw std::invalid_argument("cannot open '" + traces_path + "'");
    aicp::MetricsSummary summary = aicp::compute_metrics(aicp::read_traces_jsonl(in));

    std::filesystem::create_directories(out_dir);
    std::string jpath = (std::filesystem::path(out_dir) / "jaccard.csv").string();
    std::string spath = (std::filesystem::path(out_dir) / "summary.csv").string();
    std::ofstream jout(jpath), sout(spath);
    if (!jout || !sout) throw std::runtime_error("cannot write metric files");
    aicp::write_jaccard_csv(jout, summary);
    aicp::write_summary_csv(sout, summary);
    std::cout << "wrote " << jpath << " and " << spath << "\n";
    return 0;
}

int do_check(int cases, int replicates) {
    aicp::LemmaCheckReport lemmas = aicp::run_lemma_checks(cases, 12345);
    std::cout << "lemma suite: " << lemmas.cases << " cases"
              << ", intervened-parent=" << lemmas.intervened_parent_missing
              << ", child-descendants=" << lemmas.child_descendant_overlap
              << ", empty-set=" << lemmas.empty_set_mismatch
              << ", ancestor-ratio=" << lemmas.ancestor_ratio_below_half
              << ", ancestor-closure=" << lemmas.ancestor_closure_broken << " -> "
              << (lemmas.passed() ? "PASS" : "FAIL") << "\n";

    aicp::CalibrationReport calib = aicp::run_calibration_checks(replicates, 67890);
    std::cout << "calibration (" << calib.replicates << " replicates): welch=" << calib.welch_rate
              << ", f=" << calib.f_rate << ", invariance=" << calib.invariance_rate << " -> "
              << (calib.passed() ? "PASS" : "FAIL") << "\n";
    return lemmas.passed() && calib.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"active invariant-causal-prediction experiments"};
    app.require_subcommand(1);

    CommonArgs args;
    int workers = 1;
    int cases = 500;
    int replicates = 2000;
    std::string traces_path;

    auto add_common = [&](CLI::App* cmd, bool config_required) {
        if (config_required)
            cmd->add_option("--config", args.config_path, "experiment config JSON")->required();
        cmd->add_option("--out", args.out_dir, "output directory");
        cmd->add_option("--master-seed", args.master_seed, "override the config's master seed")
            ->each([&](const std::string&) { args.master_seed_set = true; });
    };

    CLI::App* gen = app.add_subcommand("gen", "draw the model ensemble for a config");
    add_common(gen, true);
    CLI::App* run = app.add_subcommand("run", "execute the configured sweep");
    add_common(run, true);
    run->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    CLI::App* metrics = app.add_subcommand("metrics", "aggregate traces into CSV metrics");
    metrics->add_option("--out", args.out_dir, "output directory");
    metrics->add_option("--traces", traces_path, "trace file (default: <out>/traces.jsonl)");
    CLI::App* check = app.add_subcommand("check", "run the library's property and calibration suites");
    check->add_option("--cases", cases, "DAG/target pairs for the lemma suite")->check(CLI::PositiveNumber);
    check->add_option("--replicates", replicates, "replicates for the calibration suite")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return do_gen(args);
        if (run->parsed()) return do_run(args, workers);
        if (metrics->parsed()) return do_metrics(args.out_dir, traces_path);
        return do_check(cases, replicates);
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
