#include "rationalets/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "rationalets/error.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

// ----------------------------------------------------------------- config

Variant RunConfig::resolved_variant() const {
    Variant v = mode == InferenceMode::RationaleGrounded ? variant_from_name(variant)
                                                         : variant_from_name(to_string(mode));
    if (retrieval && v.mode == InferenceMode::RationaleGrounded) {
        v.retrieval = *retrieval;
        v.name = variant_name(v.mode, v.flags, v.retrieval);
    }
    return v;
}

void RunConfig::validate() const {
    task.validate();
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("lambda must lie in [0, 1]");
    if (k == 0) throw ParameterError("K must be at least 1");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    if (!backends.count("default")) throw ConfigError("no 'default' backend configured");
    for (const auto* role : {&generator, &summarizer, &predictor}) {
        if (!backends.count(role->backend)) throw ConfigError("role refers to unknown backend '" + role->backend + "'");
    }
    if (!backends.count(embedder)) throw ConfigError("embedder refers to unknown backend '" + embedder + "'");
    if (temporal_encoder == TemporalEncoderKind::RemoteService && !backends.count(encoder_backend)) {
        throw ConfigError("remote temporal encoder needs backend '" + encoder_backend + "'");
    }
    for (const auto& [name, b] : backends) b.validate();
    if (fallback_label && (*fallback_label < 0 || *fallback_label >= static_cast<int>(task.num_classes()))) {
        throw ConfigError("fallback_label outside the task's label set");
    }
    (void)resolved_variant();
}

namespace {

nlohmann::json role_json(const RoleConfig& r) {
    return {{"backend", r.backend}, {"model", r.model}, {"temperature", r.temperature}, {"max_tokens", r.max_tokens}};
}

void read_role(const nlohmann::json& j, RoleConfig& r) {
    if (j.is_string()) {
        r.model = j.get<std::string>();
        return;
    }
    r.backend = j.value("backend", r.backend);
    r.model = j.value("model", r.model);
    r.temperature = j.value("temperature", r.temperature);
    r.max_tokens = j.value("max_tokens", r.max_tokens);
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& c) {
    nlohmann::json backends = nlohmann::json::object();
    for (const auto& [name, b] : c.backends) {
        nlohmann::json bj = b;
        // Scripted replies can be long; the manifest keeps their digest.
        if (bj.contains("rules")) bj["rules_digest"] = sha256_hex(bj.at("rules").dump());
        bj.erase("rules");
        backends[name] = bj;
    }
    // Same layout that from_json reads, so a run manifest can be replayed.
    nlohmann::json data = {
        {"path", c.data_path.string()},
        {"stride", c.stride == 0 ? c.task.stride() : c.stride},
        {"split_ratio", c.split_ratio},
    };
    if (c.schema) {
        data["schema"] = {
            {"timestamp_column", c.schema->timestamp_column},
            {"timestamp_format", c.schema->timestamp_format == TimestampFormat::Iso8601 ? "iso8601" : "epoch"},
            {"variables", c.schema->variables},
            {"delimiter", std::string(1, c.schema->delimiter)},
        };
    }
    j = {
        {"task", c.task},
        {"data", data},
        {"paths",
         {{"samples_dir", c.samples_dir.string()},
          {"base_dir", c.base_dir.string()},
          {"run_dir", c.run_dir.string()},
          {"cache_dir", c.cache_dir.string()}}},
        {"backends", backends},
        {"roles",
         {{"generator", role_json(c.generator)},
          {"summarizer", role_json(c.summarizer)},
          {"predictor", role_json(c.predictor)},
          {"embedder", c.embedder}}},
        {"temporal_encoder", c.temporal_encoder == TemporalEncoderKind::BuiltinStats ? "builtin" : "remote"},
        {"encoder_backend", c.encoder_backend},
        {"K", c.k},
        {"lambda", c.lambda},
        {"mode", to_string(c.mode)},
        {"variant", c.variant},
        {"resolved_variant", c.resolved_variant().name},
        {"seed", c.seed},
        {"allow_self_match", c.allow_self_match},
        {"audit", c.audit},
        {"jobs", c.jobs},
        {"max_regen", c.max_regen},
        {"sweep", {{"K", c.sweep.k_values}, {"lambda", c.sweep.lambda_values}}},
        {"chart",
         {{"width", c.chart_style.width},
          {"panel_height", c.chart_style.panel_height},
          {"line_width", c.chart_style.line_width},
          {"gridlines", c.chart_style.gridlines}}},
    };
    if (c.retrieval) j["retrieval"] = to_string(*c.retrieval);
    if (c.max_queries) j["max_queries"] = *c.max_queries;
    if (c.fallback_label) j["fallback_label"] = *c.fallback_label;
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    if (j.contains("task")) {
        const auto& t = j.at("task");
        c.task = t.is_string() ? task_preset(t.get<std::string>()) : t.get<TaskSpec>();
    }
    if (j.contains("data")) {
        const auto& d = j.at("data");
        if (d.contains("path")) c.data_path = d.at("path").get<std::string>();
        c.stride = d.value("stride", c.stride);
        c.split_ratio = d.value("split_ratio", c.split_ratio);
        if (d.contains("schema")) {
            const auto& s = d.at("schema");
            ColumnSchema schema = default_schema(c.task);
            schema.timestamp_column = s.value("timestamp_column", schema.timestamp_column);
            const auto fmt = s.value("timestamp_format", std::string("iso8601"));
            if (fmt == "iso8601") {
                schema.timestamp_format = TimestampFormat::Iso8601;
            } else if (fmt == "epoch") {
                schema.timestamp_format = TimestampFormat::EpochSeconds;
            } else {
                throw ConfigError("timestamp_format must be 'iso8601' or 'epoch'");
            }
            if (s.contains("variables")) schema.variables = s.at("variables").get<std::vector<std::string>>();
            const auto delim = s.value("delimiter", std::string(","));
            if (delim.size() != 1) throw ConfigError("delimiter must be one character");
            schema.delimiter = delim[0];
            c.schema = schema;
        }
    }
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        if (p.contains("samples_dir")) c.samples_dir = p.at("samples_dir").get<std::string>();
        if (p.contains("base_dir")) c.base_dir = p.at("base_dir").get<std::string>();
        if (p.contains("run_dir")) c.run_dir = p.at("run_dir").get<std::string>();
        if (p.contains("cache_dir")) c.cache_dir = p.at("cache_dir").get<std::string>();
    }
    if (j.contains("backends")) {
        for (const auto& [name, b] : j.at("backends").items()) c.backends[name] = b.get<BackendConfig>();
    }
    if (j.contains("roles")) {
        const auto& r = j.at("roles");
        if (r.contains("generator")) read_role(r.at("generator"), c.generator);
        if (r.contains("summarizer")) read_role(r.at("summarizer"), c.summarizer);
        if (r.contains("predictor")) read_role(r.at("predictor"), c.predictor);
        if (r.contains("embedder")) c.embedder = r.at("embedder").get<std::string>();
    }
    if (j.contains("temporal_encoder")) {
        const auto e = j.at("temporal_encoder").get<std::string>();
        if (e == "builtin") {
            c.temporal_encoder = TemporalEncoderKind::BuiltinStats;
        } else if (e == "remote") {
            c.temporal_encoder = TemporalEncoderKind::RemoteService;
        } else {
            throw ConfigError("temporal_encoder must be 'builtin' or 'remote'");
        }
    }
    c.encoder_backend = j.value("encoder_backend", c.encoder_backend);
    c.k = j.value("K", c.k);
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("mode")) c.mode = inference_mode_from_string(j.at("mode").get<std::string>());
    c.variant = j.value("variant", c.variant);
    if (j.contains("retrieval")) c.retrieval = retrieval_mode_from_string(j.at("retrieval").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.allow_self_match = j.value("allow_self_match", c.allow_self_match);
    if (j.contains("fallback_label") && !j.at("fallback_label").is_null()) c.fallback_label = j.at("fallback_label").get<int>();
    c.audit = j.value("audit", c.audit);
    c.jobs = j.value("jobs", c.jobs);
    c.max_regen = j.value("max_regen", c.max_regen);
    if (j.contains("max_queries")) c.max_queries = j.at("max_queries").get<std::size_t>();
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        if (s.contains("K")) c.sweep.k_values = s.at("K").get<std::vector<std::size_t>>();
        if (s.contains("lambda")) c.sweep.lambda_values = s.at("lambda").get<std::vector<double>>();
    }
    if (j.contains("chart")) {
        const auto& ch = j.at("chart");
        c.chart_style.width = ch.value("width", c.chart_style.width);
        c.chart_style.panel_height = ch.value("panel_height", c.chart_style.panel_height);
        c.chart_style.line_width = ch.value("line_width", c.chart_style.line_width);
        c.chart_style.gridlines = ch.value("gridlines", c.chart_style.gridlines);
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    RunConfig c;
    try {
        c = j.get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    // Relative paths are taken relative to the config file.
    const auto root = path.parent_path();
    auto resolve = [&](std::filesystem::path& p, bool given) {
        if (given && !p.empty() && p.is_relative()) p = root / p;
    };
    resolve(c.data_path, j.contains("data") && j.at("data").contains("path"));
    const auto paths = j.value("paths", nlohmann::json::object());
    resolve(c.samples_dir, paths.contains("samples_dir"));
    resolve(c.base_dir, paths.contains("base_dir"));
    resolve(c.run_dir, paths.contains("run_dir"));
    resolve(c.cache_dir, paths.contains("cache_dir"));
    return c;
}

std::vector<MockRule> default_mock_rules(const TaskSpec& task) {
    std::vector<MockRule> rules;
    rules.push_back({"gold-standard",
                     "",
                     {"- " + task.target_variable +
                      " path {{digest:6}} shows a sustained shift -> the level has been persistent across the window\n"
                      "- Cross-variable co-movement {{digest_mod:97}} -> coordinated dynamics among the drivers\n"
                      "- Volatility signature {{digest:3}} -> regime of the recent fluctuations"}});
    rules.push_back({"factual summary of the most prominent patterns",
                     "",
                     {"The chart shows pattern {{digest:6}} in " + task.target_variable +
                      " with co-movement {{digest_mod:97}} across the other variables."}});
    rules.push_back({"'reasoning' and 'prediction' keys",
                     "",
                     {"{\"reasoning\": \"Pattern {{digest:8}} matches the reference dynamics.\", \"prediction\": "
                      "{{digest_mod:" + std::to_string(task.num_classes()) + "}}}"}});
    return rules;
}

BackendSet::BackendSet(const RunConfig& cfg) {
    for (const auto& [name, b] : cfg.backends) {
        BackendConfig c = b;
        if (c.kind == BackendConfig::Kind::Mock && c.rules.empty() && c.replay_ledger.empty()) {
            c.rules = default_mock_rules(cfg.task);
        }
        if (c.cache_dir.empty() && !cfg.cache_dir.empty()) c.cache_dir = cfg.cache_dir / name;
        backends_[name] = std::make_unique<Backend>(std::move(c));
    }
}

Backend& BackendSet::get(const std::string& name) {
    const auto it = backends_.find(name);
    if (it == backends_.end()) throw ConfigError("unknown backend '" + name + "'");
    return *it->second;
}

ChatRole BackendSet::generator_role(const RunConfig& cfg) {
    return {&get(cfg.generator.backend), cfg.generator.model, cfg.generator.temperature, cfg.generator.max_tokens};
}

InferenceRoles BackendSet::inference_roles(const RunConfig& cfg) {
    InferenceRoles r;
    r.summarizer = {&get(cfg.summarizer.backend), cfg.summarizer.model, cfg.summarizer.temperature,
                    cfg.summarizer.max_tokens};
    r.predictor = {&get(cfg.predictor.backend), cfg.predictor.model, cfg.predictor.temperature,
                   cfg.predictor.max_tokens};
    r.embedder = &get(cfg.embedder);
    r.temporal_encoder = cfg.temporal_encoder;
    if (cfg.temporal_encoder == TemporalEncoderKind::RemoteService) r.temporal_remote = &get(cfg.encoder_backend);
    return r;
}

int majority_label(const std::vector<Sample>& samples, std::size_t num_classes) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const auto& s : samples) {
        if (s.label && *s.label >= 0 && static_cast<std::size_t>(*s.label) < num_classes) ++counts[*s.label];
    }
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::string distribution_table(const TaskSpec& task,
                               const std::vector<std::pair<std::string, std::vector<Sample>>>& splits) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-8s %8s", "split", "samples");
    out += buf;
    for (std::size_t c = 0; c < task.num_classes(); ++c) {
        std::snprintf(buf, sizeof buf, "  %14s", ("class " + std::to_string(c)).c_str());
        out += buf;
    }
    out += "\n";
    for (const auto& [name, samples] : splits) {
        std::vector<std::size_t> counts(task.num_classes(), 0);
        for (const auto& s : samples) {
            if (s.label) ++counts.at(static_cast<std::size_t>(*s.label));
        }
        std::snprintf(buf, sizeof buf, "%-8s %8zu", name.c_str(), samples.size());
        out += buf;
        for (auto n : counts) {
            const double pct = samples.empty() ? 0.0 : 100.0 * static_cast<double>(n) / static_cast<double>(samples.size());
            std::snprintf(buf, sizeof buf, "  %6zu %6.2f%%", n, pct);
            out += buf;
        }
        out += "\n";
    }
    for (std::size_t c = 0; c < task.num_classes(); ++c) {
        out += "  class " + std::to_string(c) + ": " + task.classes[c].meaning + "\n";
    }
    return out;
}

// --------------------------------------------------------------- commands

namespace {

std::vector<Sample> load_split(const RunConfig& cfg, const std::string& name) {
    const auto path = cfg.samples_dir / (name + ".jsonl");
    if (!std::filesystem::exists(path)) {
        throw StateError("missing " + path.string() + "; run `ingest` first");
    }
    return load_samples(path);
}

int fallback_for(const RunConfig& cfg, const std::vector<Sample>& base_samples) {
    return cfg.fallback_label ? *cfg.fallback_label : majority_label(base_samples, cfg.task.num_classes());
}

InferenceParams inference_params(const RunConfig& cfg, const std::vector<Sample>& base_samples) {
    InferenceParams p;
    p.variant = cfg.resolved_variant();
    p.retrieval.k = cfg.k;
    p.retrieval.lambda = cfg.lambda;
    p.retrieval.seed = cfg.seed;
    p.retrieval.allow_self_match = cfg.allow_self_match;
    p.fallback_label = fallback_for(cfg, base_samples);
    p.chart_style = cfg.chart_style;
    return p;
}

std::vector<Sample> limit(std::vector<Sample> v, const std::optional<std::size_t>& n) {
    if (n && v.size() > *n) v.resize(*n);
    return v;
}

void print_failures(const std::vector<InferenceRecord>& records, std::ostream& out) {
    std::size_t shown = 0;
    for (const auto& r : records) {
        if (r.stage.empty() || r.stage == "parse") continue;
        if (shown++ < 5) out << "  " << r.query_id << " failed at " << r.stage << ": " << r.error << "\n";
    }
    if (shown > 5) out << "  ... " << (shown - 5) << " more stage failures\n";
}

}  // namespace

int cmd_ingest(const RunConfig& cfg, std::ostream& out) {
    cfg.task.validate();
    if (cfg.data_path.empty()) throw ConfigError("no data path configured");
    if (!std::filesystem::exists(cfg.data_path)) throw SchemaError("dataset not found: " + cfg.data_path.string());
    const ColumnSchema schema = cfg.schema ? *cfg.schema : default_schema(cfg.task);
    const SeriesTable series = load_dataset(cfg.data_path, schema);
    cfg.task.validate(series.variable_names);
    const std::size_t stride = cfg.stride == 0 ? cfg.task.stride() : cfg.stride;
    auto samples = window_samples(series, cfg.task, stride);
    if (samples.empty()) throw InsufficientDataError("no complete windows in " + cfg.data_path.string());
    auto [base, query] = split(samples, cfg.split_ratio);
    std::filesystem::create_directories(cfg.samples_dir);
    save_samples(cfg.samples_dir / "base.jsonl", base);
    save_samples(cfg.samples_dir / "query.jsonl", query);
    const std::string table = distribution_table(cfg.task, {{"all", samples}, {"base", base}, {"query", query}});
    write_file_atomic(cfg.samples_dir / "distribution.txt", table);
    out << "task " << cfg.task.name << ", " << series.rows() << " rows, stride " << stride << "\n" << table;
    return 0;
}

int cmd_build_base(const RunConfig& cfg, std::ostream& out, const std::atomic<bool>* cancel) {
    cfg.validate();
    const auto base_samples = load_split(cfg, "base");
    BackendSet backends(cfg);
    BuildPolicy policy;
    policy.max_regen = cfg.max_regen;
    policy.jobs = cfg.jobs;
    policy.chart_style = cfg.chart_style;
    policy.temporal_encoder = cfg.temporal_encoder;
    if (cfg.temporal_encoder == TemporalEncoderKind::RemoteService) policy.temporal_remote = &backends.get(cfg.encoder_backend);
    policy.cancel = cancel;
    const auto base = build_base(base_samples, cfg.task, backends.generator_role(cfg), backends.get(cfg.embedder),
                                 policy, cfg.base_dir);
    std::size_t leaky = 0;
    std::size_t unformatted = 0;
    for (const auto& r : base.rationales) {
        leaky += r.leak_warning ? 1 : 0;
        unformatted += r.format_warning ? 1 : 0;
    }
    out << "rationale base: " << base.size() << " rationales at " << cfg.base_dir.string() << "\n"
        << "  temporal encoder " << base.manifest.temporal_encoder_id << " (dim " << base.temporal.dim << ")\n"
        << "  semantic encoder " << base.manifest.semantic_encoder_id << " (dim " << base.semantic.dim << ")\n"
        << "  leak warnings " << leaky << ", format warnings " << unformatted << "\n"
        << "  digest " << base.manifest.content_digest << "\n";
    return 0;
}

int cmd_infer(const RunConfig& cfg, std::ostream& out, const std::atomic<bool>* cancel) {
    cfg.validate();
    const auto base_samples = load_split(cfg, "base");
    const auto queries = limit(load_split(cfg, "query"), cfg.max_queries);
    const auto params = inference_params(cfg, base_samples);
    BackendSet backends(cfg);
    const auto roles = backends.inference_roles(cfg);

    std::optional<RationaleBase> base;
    std::optional<ExemplarPool> pool;
    if (uses_rationale_base(params.variant.mode)) base = load_base(cfg.base_dir);
    if (is_icl(params.variant.mode)) pool = ExemplarPool::from_samples(base_samples);

    RunOptions options;
    options.jobs = cfg.jobs;
    options.audit = cfg.audit;
    options.cancel = cancel;
    const auto prepared = prepare_queries(queries, cfg.task, params.variant.mode, roles, cfg.chart_style, cfg.jobs);
    const nlohmann::json manifest = {{"config", cfg}};
    const auto records = run_queries(prepared, base ? &*base : nullptr, pool ? &*pool : nullptr, cfg.task, params,
                                     roles, options, cfg.run_dir, manifest);
    out << "variant " << params.variant.name << ": " << records.size() << " records at " << cfg.run_dir.string() << "\n";
    print_failures(records, out);

    const bool labeled = std::all_of(records.begin(), records.end(), [](const auto& r) { return r.true_label.has_value(); });
    if (labeled && !records.empty()) {
        const auto report = evaluate(records, cfg.task, cfg.k, params.retrieval.effective_lambda(), params.fallback_label);
        write_reports({report}, cfg.run_dir);
        out << render_report_table({report});
    }
    return 0;
}

int cmd_eval(const std::filesystem::path& run_dir, std::ostream& out) {
    const auto manifest = nlohmann::json::parse(read_file(run_dir / "manifest"));
    const auto task = manifest.at("task").get<TaskSpec>();
    const auto records = load_records(run_dir);
    const double lambda = manifest.at("retrieval_mode") == "data-only"       ? 1.0
                          : manifest.at("retrieval_mode") == "semantic-only" ? 0.0
                                                                             : manifest.at("lambda").get<double>();
    const auto report =
        evaluate(records, task, manifest.at("K").get<std::size_t>(), lambda, manifest.at("fallback_label").get<int>());
    write_reports({report}, run_dir);
    out << render_report_table({report});
    for (const auto& w : report.warnings) out << "warning: " << w << "\n";
    return 0;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out, const std::atomic<bool>* cancel) {
    cfg.validate();
    const auto base_samples = load_split(cfg, "base");
    const auto queries = limit(load_split(cfg, "query"), cfg.max_queries);
    auto params = inference_params(cfg, base_samples);
    BackendSet backends(cfg);
    const auto roles = backends.inference_roles(cfg);
    const auto base = load_base(cfg.base_dir);
    RunOptions options;
    options.jobs = cfg.jobs;
    options.audit = cfg.audit;
    options.cancel = cancel;
    const nlohmann::json manifest = {{"config", cfg}};
    const auto reports = sweep(base, queries, cfg.task, cfg.sweep, params, roles, options, cfg.run_dir, manifest);
    out << render_report_table(reports);
    return 0;
}

int cmd_report(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out_dir, std::ostream& out) {
    std::vector<EvalReport> reports;
    for (const auto& d : dirs) {
        const auto path = d / "report.jsonl";
        if (!std::filesystem::exists(path)) throw StateError("no report.jsonl in " + d.string() + "; run `eval` first");
        const std::string text = read_file(path);
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto eol = text.find('\n', pos);
            if (eol == std::string::npos) eol = text.size();
            const auto line = trim(std::string_view(text).substr(pos, eol - pos));
            pos = eol + 1;
            if (!line.empty()) reports.push_back(report_from_json(nlohmann::json::parse(line)));
        }
    }
    if (reports.empty()) throw StateError("no reports found");
    if (!out_dir.empty()) write_reports(reports, out_dir);
    out << render_report_table(reports);
    return 0;
}

}  // namespace rationalets
