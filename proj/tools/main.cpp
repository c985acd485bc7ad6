// rationalets: ingest -> build-base -> infer -> eval -> sweep -> report.
#include <atomic>
#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "rationalets/error.hpp"
#include "rationalets/pipeline.hpp"
#include "rationalets/util.hpp"

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) {
    // Second Ctrl-C kills immediately.
    if (g_cancel.exchange(true)) std::_Exit(130);
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= csv.size()) {
        auto comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        out.push_back(std::stod(csv.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace rationalets;
    CLI::App app{"Rationale-grounded in-context time series reasoning"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string task_name;
    std::string backend_kind;
    std::optional<std::size_t> k;
    std::optional<double> lambda;
    std::string mode;
    std::string variant;
    std::string retrieval;
    std::optional<std::uint64_t> seed;
    bool audit = false;
    std::optional<int> jobs;
    std::optional<std::size_t> max_queries;
    std::string data_path;
    std::string samples_dir;
    std::string base_dir;
    std::string run_dir;
    std::string cache_dir;
    std::string sweep_k;
    std::string sweep_lambda;

    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--task", task_name, "Task preset: finance, traffic, power");
    app.add_option("--backend", backend_kind, "Override the default backend kind: mock or http");
    app.add_option("--k", k, "Rationales (or exemplars) per query");
    app.add_option("--lambda", lambda, "Weight of the data-centric similarity in [0, 1]");
    app.add_option("--mode", mode,
                   "rationale-grounded, textual-zs, textual-cot, textual-icl, visual-zs, visual-cot, visual-icl");
    app.add_option("--variant", variant, "full, A.1 (charts), A.2 (labels), A.3 (both), B.1, B.2, B.3");
    app.add_option("--retrieval", retrieval, "hybrid, data-only, semantic-only, random");
    app.add_option("--seed", seed, "Seed for random retrieval");
    app.add_flag("--audit", audit, "Write rendered prompts to <run>/prompts/");
    app.add_option("--jobs", jobs, "Worker threads");
    app.add_option("--max-queries", max_queries, "Use only the first N query samples");
    app.add_option("--data", data_path, "Source CSV");
    app.add_option("--samples-dir", samples_dir);
    app.add_option("--base-dir", base_dir);
    app.add_option("--run-dir", run_dir);
    app.add_option("--cache-dir", cache_dir);

    auto* ingest = app.add_subcommand("ingest", "Window, label and split a dataset");
    auto* build = app.add_subcommand("build-base", "Generate rationales and embeddings for the base split");
    auto* infer = app.add_subcommand("infer", "Run one inference mode over the query split");
    auto* eval = app.add_subcommand("eval", "Score the records of a run directory");
    std::string eval_dir;
    eval->add_option("run", eval_dir, "Run directory (default: --run-dir)");
    auto* sweep = app.add_subcommand("sweep", "Inference and evaluation over a K x lambda grid");
    sweep->add_option("--ks", sweep_k, "Comma-separated K values");
    sweep->add_option("--lambdas", sweep_lambda, "Comma-separated lambda values");
    auto* report = app.add_subcommand("report", "Combine the reports of several runs");
    std::vector<std::string> report_dirs;
    std::string report_out;
    report->add_option("runs", report_dirs, "Run or sweep directories")->required();
    report->add_option("-o,--out", report_out, "Directory for the combined report.txt / report.jsonl");

    CLI11_PARSE(app, argc, argv);

    std::signal(SIGINT, on_sigint);
    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        if (!task_name.empty()) cfg.task = task_preset(task_name);
        if (!backend_kind.empty()) {
            auto& b = cfg.backends["default"];
            if (backend_kind == "mock") {
                b.kind = BackendConfig::Kind::Mock;
            } else if (backend_kind == "http") {
                b.kind = BackendConfig::Kind::Http;
                if (b.base_url.empty()) b.base_url = "https://api.openai.com/v1";
            } else {
                throw ConfigError("--backend must be 'mock' or 'http'");
            }
        }
        if (k) cfg.k = *k;
        if (lambda) cfg.lambda = *lambda;
        if (!mode.empty()) cfg.mode = inference_mode_from_string(mode);
        if (!variant.empty()) cfg.variant = variant;
        if (!retrieval.empty()) cfg.retrieval = retrieval_mode_from_string(retrieval);
        if (seed) cfg.seed = *seed;
        if (cfg.resolved_variant().retrieval == RetrievalMode::Random && !seed && config_path.empty()) {
            throw ConfigError("random retrieval needs --seed");
        }
        if (audit) cfg.audit = true;
        if (jobs) cfg.jobs = *jobs;
        if (max_queries) cfg.max_queries = *max_queries;
        if (!data_path.empty()) cfg.data_path = data_path;
        if (!samples_dir.empty()) cfg.samples_dir = samples_dir;
        if (!base_dir.empty()) cfg.base_dir = base_dir;
        if (!run_dir.empty()) cfg.run_dir = run_dir;
        if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
        if (!sweep_k.empty()) {
            cfg.sweep.k_values.clear();
            for (double v : parse_doubles(sweep_k)) cfg.sweep.k_values.push_back(static_cast<std::size_t>(v));
        }
        if (!sweep_lambda.empty()) cfg.sweep.lambda_values = parse_doubles(sweep_lambda);

        if (*ingest) return cmd_ingest(cfg, std::cout);
        if (*build) return cmd_build_base(cfg, std::cout, &g_cancel);
        if (*infer) return cmd_infer(cfg, std::cout, &g_cancel);
        if (*eval) return cmd_eval(eval_dir.empty() ? cfg.run_dir : std::filesystem::path(eval_dir), std::cout);
        if (*sweep) return cmd_sweep(cfg, std::cout, &g_cancel);
        if (*report) {
            std::vector<std::filesystem::path> dirs(report_dirs.begin(), report_dirs.end());
            return cmd_report(dirs, report_out, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return g_cancel.load() ? 130 : 1;
    }
    return 0;
}
