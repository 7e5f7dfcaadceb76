// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "evidencesql/errors.hpp"
#include "evidencesql/fusion.hpp"
#include "evidencesql/knowledge.hpp"
#include "evidencesql/pipeline.hpp"
#include "evidencesql/report.hpp"
#include "evidencesql/sql_exec.hpp"
#include "evidencesql/sql_guard.hpp"
#include "evidencesql/sql_parser.hpp"
#include "gen/generators.hpp"
#include "oracle/brute_force.hpp"

namespace fs = std::filesystem;
using namespace evidencesql;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kFixtures = EVIDENCESQL_FIXTURE_DIR;

struct Outcome {
    bool pass = true;
    std::string detail;
    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("evidencesql_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

// 1 ------------------------------------------------------------------------
Outcome oracle_equivalence() {
    Outcome o;
    const auto t0 = Clock::now();
    testgen::Rng rng(0x5eed0001);
    const SchemaManifest manifest = testgen::oracle_manifest();
    int errors_matched = 0;
    for (int i = 0; i < 1000 && o.pass; ++i) {
        const FeatureTable table = testgen::random_table(rng, 100);
        const sql::QueryAst ast = testgen::random_query(rng);
        const std::string text = sql::render(ast);
        GuardOutcome g = validate_pipeline(text, manifest, SourceAgent::Manual);
        const auto* vq = std::get_if<ValidatedQuery>(&g);
        if (!vq) {
            const auto& rej = std::get<GuardRejection>(g);
            o.fail("pair " + std::to_string(i) + ": guard rejected at " + guard_stage_name(rej.stage) + " (" +
                   rej.reason + "): " + text);
            break;
        }
        if (!vq->repair_log().empty() || !(vq->ast() == ast)) {
            o.fail("pair " + std::to_string(i) + ": guard altered generated query: " + text + " -> " +
                   vq->canonical_text());
            break;
        }
        std::map<std::string, FeatureTable> tables;
        tables.emplace("t", table);
        const CaseBundle bundle("oracle_case", std::move(tables), std::nullopt, std::nullopt);
        const oracle::OracleResult expected = oracle::evaluate(ast, table);
        try {
            const ResultTable got = execute(*vq, bundle);
            if (expected.error_kind) {
                o.fail("pair " + std::to_string(i) + ": oracle raised " + *expected.error_kind + ", engine did not: " + text);
            } else if (auto diff = oracle::compare(got, expected, 1e-9)) {
                o.fail("pair " + std::to_string(i) + ": " + *diff + " in " + text);
            }
        } catch (const Error& e) {
            if (!expected.error_kind || *expected.error_kind != e.kind()) {
                o.fail("pair " + std::to_string(i) + ": engine raised " + e.kind() + " (" + e.what() + "): " + text);
            } else {
                ++errors_matched;
            }
        }
    }
    const double secs = seconds_since(t0);
    if (o.pass && secs >= 60.0) o.fail("runtime " + std::to_string(secs) + " s exceeds 60 s");
    if (o.pass) {
        std::ostringstream d;
        d << "1000 pairs matched (" << errors_matched << " matching domain errors), " << secs << " s";
        o.detail = d.str();
    }
    return o;
}

// 2 ------------------------------------------------------------------------
Outcome parser_round_trip() {
    Outcome o;
    const auto t0 = Clock::now();
    testgen::Rng rng(0x5eed0002);
    for (int i = 0; i < 1000 && o.pass; ++i) {
        const sql::QueryAst ast = testgen::random_ast(rng);
        const std::string text = sql::render(ast);
        try {
            if (!(sql::parse(text) == ast)) o.fail("AST " + std::to_string(i) + " changed across round trip: " + text);
        } catch (const Error& e) {
            o.fail("AST " + std::to_string(i) + " failed to reparse (" + e.what() + "): " + text);
        }
    }
    const double secs = seconds_since(t0);
    if (o.pass && secs >= 10.0) o.fail("runtime " + std::to_string(secs) + " s exceeds 10 s");
    if (o.pass) o.detail = "1000 ASTs, " + std::to_string(secs) + " s";
    return o;
}

// 3 ------------------------------------------------------------------------
Outcome guard_corpus() {
    Outcome o;
    const SchemaManifest manifest = load_manifest(kFixtures / "manifest.json");
    const Json corpus = Json::parse(slurp(kFixtures / "guard_corpus.json"));
    if (corpus.size() < 40) o.fail("corpus holds only " + std::to_string(corpus.size()) + " entries");

    const std::vector<std::pair<std::string, Json>> required = {
        {"SELECT avg(are) FROM cells",
         Json::array({{{"kind", "identifier_fix"}, {"before", "are"}, {"after", "area"}, {"edit_distance", 1}}})},
        {"SELCT COUNT(*) FROM cells",
         Json::array({{{"kind", "keyword_fix"}, {"before", "SELCT"}, {"after", "SELECT"}, {"edit_distance", 1}}})},
        {"SELECT AVG(zzz) FROM cells", nullptr},
    };
    for (const auto& [input, log] : required) {
        const bool present = std::any_of(corpus.begin(), corpus.end(), [&](const Json& e) {
            if (e.at("input") != input) return false;
            if (log.is_null()) return e.at("status") == "rejected" && e.at("stage") == "repair_exhausted";
            return e.at("status") == "validated" && e.at("repair_log") == log;
        });
        if (!present) o.fail("corpus lacks the repair example '" + input + "'");
    }

    std::map<std::string, int> stages;
    for (const auto& e : corpus) {
        const std::string input = e.at("input");
        GuardOutcome g = validate_pipeline(input, manifest, SourceAgent::Manual);
        if (e.at("status") == "validated") {
            const auto* vq = std::get_if<ValidatedQuery>(&g);
            if (!vq) {
                o.fail("expected acceptance of: " + input + " (got " + std::get<GuardRejection>(g).reason + ")");
                continue;
            }
            Json log = Json::array();
            for (const auto& a : vq->repair_log()) log.push_back(repair_action_to_json(a));
            if (vq->canonical_text() != e.at("canonical_text")) o.fail("canonical text of: " + input);
            if (log != e.at("repair_log")) o.fail("repair log of: " + input + " was " + log.dump());
            if (!check_schema(vq->ast(), manifest).empty()) o.fail("repaired query violates schema: " + input);
            ++stages["validated"];
        } else {
            const auto* rej = std::get_if<GuardRejection>(&g);
            if (!rej) {
                o.fail("expected rejection of: " + input);
                continue;
            }
            if (guard_stage_name(rej->stage) != e.at("stage").get<std::string>()) {
                o.fail("stage of: " + input + " was " + guard_stage_name(rej->stage));
            }
            if (e.contains("reason") && rej->reason != e.at("reason")) o.fail("reason of: " + input + " was " + rej->reason);
            ++stages[guard_stage_name(rej->stage)];
        }
    }
    if (o.pass) {
        std::ostringstream d;
        d << corpus.size() << " inputs:";
        for (const auto& [k, v] : stages) d << ' ' << k << '=' << v;
        o.detail = d.str();
    }
    return o;
}

// 4 ------------------------------------------------------------------------
FeatureFinding finding_with(const std::vector<std::string>& options, const std::vector<std::optional<FitCategory>>& fits) {
    FeatureFinding f;
    f.feature_key = "f";
    f.observed = Value::real(0.0);
    f.query_id = "q0";
    for (std::size_t i = 0; i < options.size(); ++i) f.fits[options[i]] = fits[i];
    return f;
}

std::size_t rank_of(const std::vector<std::pair<std::string, double>>& conf, const std::string& label) {
    // position after sorting by descending confidence, canonical order on ties
    std::vector<std::size_t> idx(conf.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return conf[a].second > conf[b].second; });
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (conf[idx[r]].first == label) return r;
    }
    return idx.size();
}

Outcome fit_calibration() {
    Outcome o;
    const ReferenceRange range{"f", "A", 0.3, 0.6, RangeSource::Empirical, std::nullopt};
    if (score_fit(0.45, range).category != FitCategory::Excellent) o.fail("0.45 in [0.3, 0.6] is not Excellent");
    if (score_fit(0.66, range).category != FitCategory::Good) o.fail("0.66 vs [0.3, 0.6] is not Good");
    if (score_fit(1.2, range).category != FitCategory::NoFit) o.fail("1.2 vs [0.3, 0.6] is not NoFit");

    const std::vector<std::string> ab = {"A", "B"};
    const ConfidenceResult worked =
        calibrate_confidence({finding_with(ab, {FitCategory::Excellent, FitCategory::Poor})}, ab);
    if (worked.confidences != std::vector<std::pair<std::string, double>>{{"A", 0.8}, {"B", 0.2}}) {
        o.fail("fits {Excellent, Poor} did not give confidence {0.8, 0.2}");
    }
    if (worked.raw_scores != std::vector<double>{1.0, 0.25}) o.fail("raw scores are not {1.0, 0.25}");

    testgen::Rng rng(0x5eed0004);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (int trial = 0; trial < 10000 && o.pass; ++trial) {
        std::vector<std::string> options;
        const int n_opt = pick(2, 5);
        for (int i = 0; i < n_opt; ++i) options.push_back("opt" + std::to_string(i));
        std::vector<FeatureFinding> findings;
        const int n_find = pick(1, 6);
        for (int f = 0; f < n_find; ++f) {
            std::vector<std::optional<FitCategory>> fits;
            for (int i = 0; i < n_opt; ++i) {
                if (pick(0, 5) == 0) {
                    fits.push_back(std::nullopt);
                } else {
                    fits.push_back(static_cast<FitCategory>(pick(0, 4)));
                }
            }
            findings.push_back(finding_with(options, fits));
        }
        if (!std::any_of(findings.begin(), findings.end(), [](const FeatureFinding& f) {
                return std::any_of(f.fits.begin(), f.fits.end(), [](const auto& kv) { return kv.second.has_value(); });
            })) {
            findings[0].fits[options[0]] = FitCategory::Fair;
        }
        const ConfidenceResult r = calibrate_confidence(findings, options);
        double sum = 0;
        for (const auto& [label, c] : r.confidences) {
            if (!(c >= 0.0 && c <= 1.0)) o.fail("confidence outside [0, 1] in trial " + std::to_string(trial));
            sum += c;
        }
        if (std::fabs(sum - 1.0) > 1e-9) o.fail("confidences do not sum to 1 in trial " + std::to_string(trial));

        // upgrade one finding's fit for one option by one band
        const std::size_t fi = static_cast<std::size_t>(pick(0, n_find - 1));
        const std::string target = options[static_cast<std::size_t>(pick(0, n_opt - 1))];
        std::vector<FeatureFinding> upgraded = findings;
        auto& slot = upgraded[fi].fits[target];
        if (!slot || *slot == FitCategory::Excellent) continue;
        slot = static_cast<FitCategory>(static_cast<int>(*slot) - 1);
        const ConfidenceResult u = calibrate_confidence(upgraded, options);
        const std::size_t ti = static_cast<std::size_t>(std::find(options.begin(), options.end(), target) - options.begin());
        if (u.raw_scores[ti] < r.raw_scores[ti]) o.fail("upgrade lowered raw score in trial " + std::to_string(trial));
        if (rank_of(u.confidences, target) > rank_of(r.confidences, target)) {
            o.fail("upgrade worsened rank in trial " + std::to_string(trial));
        }
    }
    if (o.pass) o.detail = "worked examples exact; simplex and monotonicity over 10000 random finding sets";
    return o;
}

// 5 ------------------------------------------------------------------------
std::size_t first_max(const std::vector<double>& xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) best = i;
    }
    return best;
}

Outcome fusion_identities() {
    Outcome o;
    {
        Question q{"case", "which?", {"A", "B"}};
        Hypothesis h;
        h.ranked_options = {{"B", 0.8}, {"A", 0.2}};
        const FusedDecision d = fuse(q, CnnOutput{{{"A", 0.6}, {"B", 0.4}}}, h, 0.7);
        if (d.fused != std::vector<std::pair<std::string, double>>{{"A", 0.48}, {"B", 0.52}}) o.fail("worked example fused vector");
        if (d.label != "B" || !d.review_flag || d.cnn_label != "A" || d.sql_label != "B") o.fail("worked example label/flag");
    }
    testgen::Rng rng(0x5eed0005);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto random_dist = [&](int n) {
        std::vector<double> w(static_cast<std::size_t>(n));
        const bool coarse = pick(0, 3) == 0;  // coarse grids produce ties
        double total = 0;
        for (auto& x : w) {
            x = coarse ? static_cast<double>(pick(0, 2)) : u(rng);
            total += x;
        }
        if (total == 0) {
            w[0] = 1;
            total = 1;
        }
        for (auto& x : w) x /= total;
        return w;
    };
    for (int trial = 0; trial < 10000 && o.pass; ++trial) {
        const int n = pick(2, 6);
        Question q;
        q.case_id = "case";
        q.prompt_text = "which?";
        for (int i = 0; i < n; ++i) q.options.push_back("o" + std::to_string(i));
        const auto c = random_dist(n);
        const auto s = random_dist(n);
        CnnOutput cnn;
        Hypothesis h;
        for (int i = 0; i < n; ++i) {
            cnn.probs.push_back({q.options[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(i)]});
            h.ranked_options.push_back({q.options[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(i)]});
        }
        std::shuffle(h.ranked_options.begin(), h.ranked_options.end(), rng);

        auto vec = [](const FusedDecision& d) {
            std::vector<double> v;
            for (const auto& kv : d.fused) v.push_back(kv.second);
            return v;
        };
        if (vec(fuse(q, cnn, h, 1.0)) != c) o.fail("alpha=1 does not reproduce cnn in trial " + std::to_string(trial));
        if (vec(fuse(q, cnn, h, 0.0)) != s) o.fail("alpha=0 does not reproduce sql in trial " + std::to_string(trial));
        const double alpha = u(rng);
        const FusedDecision d = fuse(q, cnn, h, alpha);
        const auto f = vec(d);
        double sum = 0;
        for (double x : f) {
            if (x < 0.0 || x > 1.0) o.fail("fused component outside [0, 1]");
            sum += x;
        }
        if (std::fabs(sum - 1.0) > 1e-9) o.fail("fused vector off the simplex in trial " + std::to_string(trial));
        const bool disagree = first_max(c) != first_max(s);
        if (d.review_flag != disagree) o.fail("review flag unsound in trial " + std::to_string(trial));
        if (d.label != q.options[first_max(f)]) o.fail("label is not the fused argmax in trial " + std::to_string(trial));
    }
    if (o.pass) o.detail = "worked example exact; endpoints, simplex and flag soundness over 10000 random pairs";
    return o;
}

// 6 and 7 --------------------------------------------------------------------
struct EvalRun {
    EvalSummary summary;
    fs::path out;
};

EvalRun run_eval(Mode mode, const std::string& tag) {
    const SchemaManifest manifest = load_manifest(kFixtures / "manifest.json");
    RunConfig config;
    config.manifest_path = kFixtures / "manifest.json";
    config.ranges_path = kFixtures / "ranges.json";
    config.mode = mode;
    config.alpha = 0.7;
    config.out_dir = scratch_dir(tag);
    config.workers = 4;
    TemplateBackend backend(manifest);
    const auto ranges = load_ranges(*config.ranges_path);
    const auto questions = load_questions(kFixtures / "questions.json");
    EvalSummary s = batch_eval(config, manifest, ranges, kFixtures / "eval", questions, backend);
    return {s, config.out_dir};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
    std::set<std::string> files_a, files_b;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file()) files_a.insert(fs::relative(e.path(), a).generic_string());
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) {
        if (e.is_regular_file()) files_b.insert(fs::relative(e.path(), b).generic_string());
    }
    if (files_a != files_b) {
        why = "different file sets";
        return false;
    }
    for (const auto& f : files_a) {
        if (f == "run.json") continue;  // records its own output directory
        if (slurp(a / f) != slurp(b / f)) {
            why = f + " differs";
            return false;
        }
    }
    return true;
}

std::vector<EvalRun> g_runs;

Outcome end_to_end_correction() {
    Outcome o;
    const auto t0 = Clock::now();
    const EvalRun cnn = run_eval(Mode::CnnOnly, "cnn_only");
    const EvalRun sql = run_eval(Mode::SqlOnly, "sql_only");
    const EvalRun full = run_eval(Mode::Full, "full");
    const EvalRun full_again = run_eval(Mode::Full, "full_again");
    const double secs = seconds_since(t0);
    g_runs = {cnn, sql, full};

    auto check = [&](const EvalRun& r, double acc, std::size_t flagged) {
        const auto& s = r.summary;
        if (s.n_cases != 20 || !s.failures.empty()) o.fail(s.mode + ": expected 20 clean cases");
        if (s.accuracy != acc) o.fail(s.mode + " accuracy " + format_fixed6(s.accuracy) + " != " + format_fixed6(acc));
        if (s.n_flagged != flagged) o.fail(s.mode + " flagged " + std::to_string(s.n_flagged));
    };
    check(cnn, 0.85, 0);
    check(sql, 1.0, 0);
    check(full, 1.0, 3);
    std::string why;
    if (!same_tree(full.out, full_again.out, why)) o.fail("full-mode rerun not byte-identical: " + why);
    if (o.pass && secs >= 30.0) o.fail("runtime " + std::to_string(secs) + " s exceeds 30 s");
    if (o.pass) {
        std::ostringstream d;
        d << "cnn_only=" << format_fixed6(cnn.summary.accuracy) << " sql_only=" << format_fixed6(sql.summary.accuracy)
          << " full=" << format_fixed6(full.summary.accuracy) << " n_flagged=" << full.summary.n_flagged
          << ", rerun byte-identical, " << secs << " s";
        o.detail = d.str();
    }
    return o;
}

Outcome audit_replay() {
    Outcome o;
    if (g_runs.empty()) {
        o.fail("criterion 6 produced no reports");
        return o;
    }
    const SchemaManifest manifest = load_manifest(kFixtures / "manifest.json");
    std::size_t reports = 0, entries = 0;
    for (const auto& run : g_runs) {
        for (const auto& e : fs::directory_iterator(run.out / "reports")) {
            if (e.path().extension() != ".json") continue;
            ++reports;
            const Json report = Json::parse(slurp(e.path()));
            const std::string case_id = report.at("case_id");
            const CaseBundle bundle = load_case_dir(manifest, kFixtures / "eval" / case_id);
            const auto mismatched = replay_report(report, manifest, bundle);
            if (!mismatched.empty()) o.fail(case_id + ": replay mismatch in " + mismatched.front());
            std::set<std::string> ids;
            for (const auto& t : report.at("sql_trace")) {
                ids.insert(t.at("query_id").get<std::string>());
                ++entries;
            }
            if (report.contains("hypothesis") && !report.at("hypothesis").is_null()) {
                for (const auto& f : report.at("hypothesis").at("findings")) {
                    if (!ids.count(f.at("query_id").get<std::string>())) o.fail(case_id + ": dangling query_id");
                }
            }
            for (const auto& f : report.at("contributing_features")) {
                if (!ids.count(f.at("query_id").get<std::string>())) o.fail(case_id + ": dangling contributing query_id");
            }
        }
    }
    if (reports != 60) o.fail("expected 60 reports, found " + std::to_string(reports));
    if (o.pass) o.detail = std::to_string(reports) + " reports, " + std::to_string(entries) + " trace entries replayed exactly";
    return o;
}

// 8 ------------------------------------------------------------------------
Outcome range_oracle() {
    Outcome o;
    testgen::Rng rng(0x5eed0008);
    const SchemaManifest manifest = testgen::range_manifest();
    const std::vector<std::string> labels = {"A", "B", "C"};
    const std::vector<FeatureSpec> features = {FeatureSpec::column("global_features.ratio"),
                                               FeatureSpec::column("cells.area")};
    std::size_t checked = 0;
    for (int split = 0; split < 100 && o.pass; ++split) {
        const auto cases = testgen::random_training_split(rng, labels);
        std::vector<CaseBundle> bundles;
        for (const auto& c : cases) bundles.push_back(testgen::make_range_bundle(c));
        const double q = std::uniform_real_distribution<double>(0.001, 0.499)(rng);
        const RangeCalibration cal = compute_empirical_ranges(bundles, features, labels, q, manifest);

        std::size_t expected_count = 0;
        for (const auto& label : labels) {
            std::vector<double> ratio, area;
            for (const auto& c : cases) {
                if (c.label != label) continue;
                ratio.push_back(c.global_value);
                double s = 0;
                for (double v : c.local_values) s += v;
                area.push_back(s / static_cast<double>(c.local_values.size()));
            }
            for (const auto& [key, xs] : {std::pair<std::string, std::vector<double>>{"global_features.ratio", ratio},
                                          {"cells.area", area}}) {
                const auto it = std::find_if(cal.ranges.begin(), cal.ranges.end(), [&](const ReferenceRange& r) {
                    return r.feature_key == key && r.option_label == label;
                });
                if (xs.size() < 3) {
                    if (it != cal.ranges.end()) o.fail("range emitted for an option with fewer than 3 cases");
                    continue;
                }
                ++expected_count;
                if (it == cal.ranges.end()) {
                    o.fail("missing range " + key + "/" + label + " in split " + std::to_string(split));
                    continue;
                }
                const double lo = oracle::sorted_quantile(xs, q);
                const double hi = oracle::sorted_quantile(xs, 1.0 - q);
                if (std::fabs(it->low - lo) > 1e-9 || std::fabs(it->high - hi) > 1e-9) {
                    o.fail("range " + key + "/" + label + " off by more than 1e-9 in split " + std::to_string(split));
                }
                ++checked;
            }
        }
        if (cal.ranges.size() != expected_count) o.fail("unexpected extra ranges in split " + std::to_string(split));
    }
    if (o.pass) o.detail = "100 splits, " + std::to_string(checked) + " ranges within 1e-9 of the sort-and-interpolate oracle";
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"SQL engine oracle equivalence", oracle_equivalence},
        {"parser round-trip", parser_round_trip},
        {"guard safety corpus", guard_corpus},
        {"fit/calibration arithmetic", fit_calibration},
        {"fusion identities", fusion_identities},
        {"end-to-end correction fixture", end_to_end_correction},
        {"audit closure replay", audit_replay},
        {"empirical-range oracle", range_oracle},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.fail(std::string("uncaught exception: ") + e.what());
        }
        failures += o.pass ? 0 : 1;
        std::cout << "criterion " << (i + 1) << ": " << (o.pass ? "PASS" : "FAIL") << " - " << criteria[i].first << " ("
                  << o.detail << ")" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
