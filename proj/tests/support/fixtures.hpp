#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rationalets/data.hpp"
#include "rationalets/rationale_base.hpp"
#include "rationalets/retrieval.hpp"

namespace fixtures {

std::filesystem::path source_dir();  // tests/
std::string read_golden(const std::string& name);

// Three hourly rows of Intensity/Occupancy used by the prompt goldens.
rationalets::Sample tiny_traffic_sample(const std::string& id = "tiny-000000", std::optional<int> label = {});

// A scratch directory under the build tree, emptied on creation.
std::filesystem::path scratch_dir(const std::string& name);

// --- label rule fixtures ----------------------------------------------------

struct LabelCase {
    std::string note;
    std::function<double(std::size_t)> history;  // target value at history step t
    std::function<double(std::size_t)> horizon;  // target value at horizon step t
    int expected;
};

// 30 hand-built cases per task ("finance", "traffic", "power"); expected
// labels were worked out by hand from the task definitions.
std::vector<LabelCase> label_cases(const std::string& task);

// Builds a two-column series (target + a distractor) for one case and runs
// it through window_samples; returns the single sample's label.
int label_via_windowing(const rationalets::TaskSpec& task, const LabelCase& c);

// --- leak fixtures ------------------------------------------------------------

struct LeakText {
    std::string task;
    std::string text;
};

std::vector<LeakText> planted_leaks();      // 20 texts, each leaks the outcome
std::vector<LeakText> clean_rationales();   // 10 texts with no leak

// --- retrieval oracle ---------------------------------------------------------

struct OracleBase {
    std::vector<std::string> ids;
    rationalets::EmbeddingTable temporal;
    rationalets::EmbeddingTable semantic;
};

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim);
OracleBase random_base(std::mt19937_64& rng, std::size_t d, std::size_t dim_b, std::size_t dim_s);

// Full-sort selection: score every row with an independent cosine, stable
// sort by fused score descending, keep K.
std::vector<std::string> brute_force_top_k(const OracleBase& base, const std::vector<double>& qb,
                                           const std::vector<double>& qs, std::size_t k, double lambda);

// Ranking of a single space, same tie rule.
std::vector<std::string> brute_force_single(const rationalets::EmbeddingTable& table, const std::vector<std::string>& ids,
                                            const std::vector<double>& q, std::size_t k);

// --- metric oracles -----------------------------------------------------------

// Per-class precision/recall from record lists, F1 = 2PR/(P+R), macro mean x100.
double oracle_macro_f1(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes);

// Balanced-accuracy identity for one-hot scores, macro over classes with
// both positives and negatives, x100.
double oracle_auc_balanced(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes);

// Trapezoid integration of the ROC curve traced by thresholding the one-hot
// score, macro x100.
double oracle_auc_trapezoid(const std::vector<int>& truth, const std::vector<int>& pred, std::size_t classes);

// --- end-to-end fixture ---------------------------------------------------------

// Ingests tests/fixtures/traffic_small.csv (30 base / 10 query samples),
// builds a base on the mock backend and sweeps K {1,5} x lambda {0,0.5,1}
// into `dir`. Returns the concatenated report files.
std::string run_fixture_sweep(const std::filesystem::path& dir);

}  // namespace fixtures
