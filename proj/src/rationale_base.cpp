#include "rationalets/rationale_base.hpp"

#include <bit>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <regex>

#include <json.hpp>

#include "rationalets/error.hpp"
#include "rationalets/prompts.hpp"
#include "rationalets/util.hpp"

namespace rationalets {

static_assert(std::endian::native == std::endian::little, "embedding files are written as little-endian float32");

// ------------------------------------------------------------------ parsing

namespace {

constexpr std::string_view kUnicodeBullet = "\xE2\x80\xA2";  // •
constexpr std::string_view kUnicodeArrow = "\xE2\x86\x92";   // →

// Returns the byte length of the bullet marker (including trailing space) or 0.
std::size_t bullet_marker_length(std::string_view s) {
    auto space_at = [&](std::size_t i) { return i < s.size() && (s[i] == ' ' || s[i] == '\t'); };
    if (s.empty()) return 0;
    if ((s[0] == '-' || s[0] == '*' || s[0] == '+') && space_at(1)) return 2;
    if (s.substr(0, kUnicodeBullet.size()) == kUnicodeBullet && space_at(kUnicodeBullet.size())) {
        return kUnicodeBullet.size() + 1;
    }
    std::size_t i = 0;
    while (i < s.size() && i < 3 && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')') && space_at(i + 1)) return i + 2;
    return 0;
}

}  // namespace

ParsedRationale parse_rationale(std::string_view text) {
    ParsedRationale out;
    std::vector<std::string> bullets;
    bool in_bullet = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        pos = eol + 1;

        const std::string stripped = trim(line);
        const bool indented = !line.empty() && (line[0] == ' ' || line[0] == '\t');
        if (const auto marker = bullet_marker_length(stripped); marker > 0) {
            bullets.push_back(trim(std::string_view(stripped).substr(marker)));
            in_bullet = true;
        } else if (stripped.empty()) {
            in_bullet = false;
        } else if (in_bullet && indented) {
            bullets.back() += " " + stripped;
        } else {
            in_bullet = false;
        }
        if (eol == text.size()) break;
    }

    for (const auto& b : bullets) {
        const auto ascii = b.find("->");
        const auto uni = b.find(kUnicodeArrow);
        std::size_t cut = std::string::npos;
        std::size_t cut_len = 0;
        if (ascii != std::string::npos && (uni == std::string::npos || ascii < uni)) {
            cut = ascii;
            cut_len = 2;
        } else if (uni != std::string::npos) {
            cut = uni;
            cut_len = kUnicodeArrow.size();
        }
        ReasoningPath p;
        if (cut == std::string::npos) {
            p.observation = b;
            out.warnings.push_back("bullet without arrow: " + b);
        } else {
            p.observation = trim(std::string_view(b).substr(0, cut));
            p.implication = trim(std::string_view(b).substr(cut + cut_len));
        }
        if (p.observation.empty()) {
            out.warnings.push_back("bullet with empty observation skipped: " + b);
            continue;
        }
        out.paths.push_back(std::move(p));
    }
    if (out.paths.empty()) throw FormatError("no reasoning-path bullets found");
    return out;
}

std::string render_paths(const std::vector<ReasoningPath>& paths) {
    std::string out;
    for (std::size_t i = 0; i < paths.size(); ++i) {
        if (i > 0) out += '\n';
        out += "- " + paths[i].observation;
        if (!paths[i].implication.empty()) out += " -> " + paths[i].implication;
    }
    return out;
}

// --------------------------------------------------------------- leak scan

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool contains_word(std::string_view hay, std::string_view word) {
    std::size_t pos = 0;
    while ((pos = hay.find(word, pos)) != std::string_view::npos) {
        const bool left = pos == 0 || !is_word_char(hay[pos - 1]);
        const bool right = pos + word.size() >= hay.size() || !is_word_char(hay[pos + word.size()]);
        if (left && right) return true;
        ++pos;
    }
    return false;
}

const std::vector<std::string_view> kForwardCues = {"will", "next", "future", "upcoming", "expected",
                                                    "likely", "outcome", "forecast", "going to"};

}  // namespace

std::vector<LeakViolation> validate_no_leak(std::string_view text, const TaskSpec& task) {
    const std::string lower = to_lower(text);
    std::vector<LeakViolation> out;
    auto add = [&](LeakViolation::Kind kind, std::size_t off, std::size_t len) {
        for (const auto& v : out) {
            if (v.offset == off) return;
        }
        out.push_back({kind, off, len, std::string(text.substr(off, len))});
    };

    for (const auto& c : task.classes) {
        const std::string phrase = to_lower(c.meaning);
        if (phrase.empty()) continue;
        for (auto pos = lower.find(phrase); pos != std::string::npos; pos = lower.find(phrase, pos + 1)) {
            add(LeakViolation::Kind::ClassMeaning, pos, phrase.size());
        }
    }

    static const std::regex label_token(R"(\b(label(ed)?(\s+as)?|prediction|class)\s*[:=]?\s*\(?[0-9]\b)");
    for (auto it = std::sregex_iterator(lower.begin(), lower.end(), label_token); it != std::sregex_iterator(); ++it) {
        add(LeakViolation::Kind::LabelToken, static_cast<std::size_t>(it->position()),
            static_cast<std::size_t>(it->length()));
    }

    std::vector<std::string> targets{to_lower(task.target_variable)};
    for (const auto& a : task.target_aliases) targets.push_back(to_lower(a));
    std::size_t start = 0;
    while (start < lower.size()) {
        auto end = lower.find_first_of(".!?\n", start);
        if (end == std::string::npos) end = lower.size();
        const std::string_view sentence(lower.data() + start, end - start);
        const bool names_target = std::any_of(targets.begin(), targets.end(), [&](const std::string& t) {
            return !t.empty() && sentence.find(t) != std::string_view::npos;
        });
        const bool forward = std::any_of(kForwardCues.begin(), kForwardCues.end(),
                                         [&](std::string_view cue) { return contains_word(sentence, cue); });
        if (names_target && forward) {
            for (const auto& c : task.classes) {
                const std::string kw = to_lower(c.keyword);
                if (kw.empty()) continue;
                if (const auto pos = sentence.find(kw); pos != std::string_view::npos) {
                    add(LeakViolation::Kind::TargetOutcome, start + pos, kw.size());
                }
            }
        }
        start = end + 1;
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });
    return out;
}

// ------------------------------------------------------------- base store

void EmbeddingTable::append(const std::vector<double>& v) {
    if (rows == 0 && dim == 0) dim = v.size();
    if (v.size() != dim) {
        throw ShapeError("embedding of dim " + std::to_string(v.size()) + " appended to table of dim " +
                         std::to_string(dim));
    }
    for (double x : v) data.push_back(static_cast<float>(x));
    ++rows;
}

std::vector<std::string> RationaleBase::ids() const {
    std::vector<std::string> out;
    out.reserve(rationales.size());
    for (const auto& r : rationales) out.push_back(r.sample_id);
    return out;
}

void RationaleBase::validate() const {
    if (temporal.rows != rationales.size() || semantic.rows != rationales.size()) {
        throw ConsistencyError("rationale base misaligned: " + std::to_string(rationales.size()) + " rationales, " +
                               std::to_string(temporal.rows) + " temporal rows, " + std::to_string(semantic.rows) +
                               " semantic rows");
    }
    if (temporal.data.size() != temporal.rows * temporal.dim || semantic.data.size() != semantic.rows * semantic.dim) {
        throw ConsistencyError("embedding table size does not match rows * dim");
    }
}

namespace {

nlohmann::json rationale_json(const Rationale& r) {
    nlohmann::json paths = nlohmann::json::array();
    for (const auto& p : r.paths) paths.push_back({{"observation", p.observation}, {"implication", p.implication}});
    return {
        {"sample_id", r.sample_id},   {"label", r.label},
        {"paths", paths},             {"raw_text", r.raw_text},
        {"leak_warning", r.leak_warning}, {"format_warning", r.format_warning},
        {"attempts", r.attempts},     {"chart_ref", r.chart_ref},
        {"label_text", r.label_text},
    };
}

Rationale rationale_from_json(const nlohmann::json& j) {
    Rationale r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.label = j.at("label").get<int>();
    for (const auto& p : j.at("paths")) {
        r.paths.push_back({p.at("observation").get<std::string>(), p.at("implication").get<std::string>()});
    }
    r.raw_text = j.at("raw_text").get<std::string>();
    r.leak_warning = j.value("leak_warning", false);
    r.format_warning = j.value("format_warning", false);
    r.attempts = j.value("attempts", 1);
    r.chart_ref = j.value("chart_ref", std::string{});
    r.label_text = j.value("label_text", std::string{});
    return r;
}

std::string serialize_rationales(const std::vector<Rationale>& rationales) {
    std::string out;
    for (const auto& r : rationales) {
        out += rationale_json(r).dump();
        out += '\n';
    }
    return out;
}

std::string_view table_bytes(const EmbeddingTable& t) {
    return {reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float)};
}

EmbeddingTable read_table(const std::filesystem::path& path, std::size_t rows, std::size_t dim) {
    const std::string bytes = read_file(path);
    if (bytes.size() != rows * dim * sizeof(float)) {
        throw ConsistencyError(path.string() + " holds " + std::to_string(bytes.size()) + " bytes, expected " +
                               std::to_string(rows * dim * sizeof(float)));
    }
    EmbeddingTable t;
    t.rows = rows;
    t.dim = dim;
    t.data.resize(rows * dim);
    std::memcpy(t.data.data(), bytes.data(), bytes.size());
    return t;
}

}  // namespace

std::string base_content_digest(const RationaleBase& base) {
    std::string all = serialize_rationales(base.rationales);
    all += table_bytes(base.temporal);
    all += table_bytes(base.semantic);
    return sha256_hex(all);
}

void save_base(const RationaleBase& base, const std::filesystem::path& dir) {
    base.validate();
    std::filesystem::create_directories(dir);
    const std::string rationales = serialize_rationales(base.rationales);
    write_file_atomic(dir / "rationales", rationales);
    write_file_atomic(dir / "H_b.bin", table_bytes(base.temporal));
    write_file_atomic(dir / "H_s.bin", table_bytes(base.semantic));
    const nlohmann::json manifest = {
        {"task", base.manifest.task_name},
        {"temporal_encoder_id", base.manifest.temporal_encoder_id},
        {"semantic_encoder_id", base.manifest.semantic_encoder_id},
        {"generator_model", base.manifest.generator_model},
        {"created_at", base.manifest.created_at},
        {"rows", base.size()},
        {"temporal_dim", base.temporal.dim},
        {"semantic_dim", base.semantic.dim},
        {"digests",
         {{"rationales", sha256_hex(rationales)},
          {"H_b", sha256_hex(table_bytes(base.temporal))},
          {"H_s", sha256_hex(table_bytes(base.semantic))}}},
        {"content_digest", base_content_digest(base)},
    };
    // Manifest last: a directory with a manifest is a complete base.
    write_file_atomic(dir / "manifest", manifest.dump(2) + "\n");
}

RationaleBase load_base(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest")) throw StateError("no rationale base at " + dir.string());
    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest"));
    RationaleBase base;
    base.root = dir;
    base.manifest.task_name = manifest.at("task").get<std::string>();
    base.manifest.temporal_encoder_id = manifest.at("temporal_encoder_id").get<std::string>();
    base.manifest.semantic_encoder_id = manifest.at("semantic_encoder_id").get<std::string>();
    base.manifest.generator_model = manifest.value("generator_model", std::string{});
    base.manifest.created_at = manifest.value("created_at", std::string{});
    const auto rows = manifest.at("rows").get<std::size_t>();

    const std::string rationales = read_file(dir / "rationales");
    std::size_t pos = 0;
    while (pos < rationales.size()) {
        auto eol = rationales.find('\n', pos);
        if (eol == std::string::npos) eol = rationales.size();
        const auto line = rationales.substr(pos, eol - pos);
        pos = eol + 1;
        if (trim(line).empty()) continue;
        base.rationales.push_back(rationale_from_json(nlohmann::json::parse(line)));
    }
    if (base.rationales.size() != rows) throw ConsistencyError("manifest rows do not match rationale count");
    base.temporal = read_table(dir / "H_b.bin", rows, manifest.at("temporal_dim").get<std::size_t>());
    base.semantic = read_table(dir / "H_s.bin", rows, manifest.at("semantic_dim").get<std::size_t>());
    base.manifest.content_digest = base_content_digest(base);
    if (manifest.contains("content_digest") &&
        manifest.at("content_digest").get<std::string>() != base.manifest.content_digest) {
        throw ConsistencyError("rationale base at " + dir.string() + " does not match its manifest digest");
    }
    base.validate();
    return base;
}

// --------------------------------------------------------------- building

ChatRequest to_request(const PromptText& prompt, const ChatRole& role) {
    ChatRequest r;
    r.model_id = role.model;
    r.system_text = prompt.system;
    r.user_parts = prompt.user_parts;
    r.temperature = role.temperature;
    r.max_tokens = role.max_tokens;
    return r;
}

ChatRequest build_rationale_prompt(const Sample& sample, const TaskSpec& task, const ChatRole& role,
                                   const ChartImage& chart) {
    if (!sample.label) throw TaskError("sample '" + sample.id + "' has no label; rationales need the true outcome");
    return to_request(rationale_generation_prompt(task, *sample.label, chart_data_url(chart)), role);
}

namespace {

struct BuiltEntry {
    Rationale rationale;
    std::vector<double> temporal;
    std::vector<double> semantic;
    std::string temporal_id;
    std::string semantic_id;
};

nlohmann::json entry_json(const BuiltEntry& e) {
    return {{"rationale", rationale_json(e.rationale)},
            {"temporal", e.temporal},
            {"semantic", e.semantic},
            {"temporal_id", e.temporal_id},
            {"semantic_id", e.semantic_id}};
}

std::map<std::string, BuiltEntry> read_checkpoint(const std::filesystem::path& path) {
    std::map<std::string, BuiltEntry> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            BuiltEntry e;
            e.rationale = rationale_from_json(j.at("rationale"));
            e.temporal = j.at("temporal").get<std::vector<double>>();
            e.semantic = j.at("semantic").get<std::vector<double>>();
            e.temporal_id = j.at("temporal_id").get<std::string>();
            e.semantic_id = j.at("semantic_id").get<std::string>();
            out[e.rationale.sample_id] = std::move(e);
        } catch (const nlohmann::json::exception&) {
            // A torn trailing line from an interrupted write; the sample is rebuilt.
        }
    }
    return out;
}

}  // namespace

RationaleBase build_base(const std::vector<Sample>& base_samples, const TaskSpec& task, const ChatRole& generator,
                         Backend& embedder, const BuildPolicy& policy, const std::filesystem::path& dir) {
    if (base_samples.empty()) throw StateError("cannot build a rationale base from zero samples");
    if (generator.backend == nullptr) throw ConfigError("generator role has no backend");
    for (const auto& s : base_samples) {
        if (!s.label) throw TaskError("base sample '" + s.id + "' has no label");
    }
    std::filesystem::create_directories(dir / "charts");
    const auto checkpoint_path = dir / "checkpoint.jsonl";
    auto done = read_checkpoint(checkpoint_path);

    std::vector<std::optional<BuiltEntry>> entries(base_samples.size());
    for (std::size_t i = 0; i < base_samples.size(); ++i) {
        if (auto it = done.find(base_samples[i].id); it != done.end()) entries[i] = it->second;
    }

    std::mutex checkpoint_mutex;
    std::ofstream checkpoint(checkpoint_path, std::ios::app);
    if (!checkpoint) throw Error("cannot open checkpoint " + checkpoint_path.string());

    parallel_for(base_samples.size(), policy.jobs, [&](std::size_t i) {
        if (entries[i]) return;
        if (policy.cancel && policy.cancel->load()) throw Error("rationale base build cancelled");
        const Sample& sample = base_samples[i];
        const ChartImage chart = render_chart(sample, policy.chart_style);
        save_chart(chart, dir / "charts");

        BuiltEntry e;
        Rationale& r = e.rationale;
        r.sample_id = sample.id;
        r.label = *sample.label;
        r.chart_ref = "charts/" + sample.id + ".png";
        r.label_text = task.class_info(r.label).meaning;

        ChatRequest request = build_rationale_prompt(sample, task, generator, chart);
        bool accepted = false;
        for (int attempt = 0; attempt <= policy.max_regen && !accepted; ++attempt) {
            request.attempt = attempt;
            const ChatResponse reply = generator.backend->chat(request);
            r.raw_text = reply.text;
            r.attempts = attempt + 1;
            try {
                auto parsed = parse_rationale(reply.text);
                r.paths = std::move(parsed.paths);
                r.format_warning = false;
                r.leak_warning = !validate_no_leak(reply.text, task).empty();
                accepted = !r.leak_warning;
            } catch (const FormatError&) {
                r.paths.clear();
                r.format_warning = true;
            }
        }
        if (r.paths.empty()) {
            const std::string whole = trim(r.raw_text);
            if (whole.empty()) throw FormatError("generator returned an empty rationale for '" + sample.id + "'");
            r.paths.push_back({whole, ""});
            r.leak_warning = !validate_no_leak(whole, task).empty();
        }

        const auto temporal = encode_temporal(tabularize(sample), policy.temporal_encoder, policy.temporal_remote);
        const auto semantic = encode_text(r.text(), embedder);
        e.temporal = temporal.values;
        e.semantic = semantic.values;
        e.temporal_id = temporal.encoder_id;
        e.semantic_id = semantic.encoder_id;

        {
            std::lock_guard lock(checkpoint_mutex);
            checkpoint << entry_json(e).dump() << '\n';
            checkpoint.flush();
        }
        entries[i] = std::move(e);
    });
    checkpoint.close();

    RationaleBase base;
    base.manifest.task_name = task.name;
    base.manifest.generator_model = generator.model;
    base.manifest.created_at = policy.created_at;
    for (auto& e : entries) {
        if (base.manifest.temporal_encoder_id.empty()) {
            base.manifest.temporal_encoder_id = e->temporal_id;
            base.manifest.semantic_encoder_id = e->semantic_id;
        } else if (base.manifest.temporal_encoder_id != e->temporal_id ||
                   base.manifest.semantic_encoder_id != e->semantic_id) {
            throw ConsistencyError("checkpoint mixes encoders; delete " + checkpoint_path.string() + " and rebuild");
        }
        base.temporal.append(e->temporal);
        base.semantic.append(e->semantic);
        base.rationales.push_back(std::move(e->rationale));
    }
    base.manifest.content_digest = base_content_digest(base);
    save_base(base, dir);
    base.root = dir;
    std::filesystem::remove(checkpoint_path);
    return base;
}

}  // namespace rationalets
