// evidencesql command-line front end.
//
// Exit codes: 0 success, 1 pipeline error, 2 configuration or usage error.
// Errors are reported on stderr as {"error": {"kind", "message"}}.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

#include "evidencesql/errors.hpp"
#include "evidencesql/pipeline.hpp"
#include "evidencesql/sql_exec.hpp"
#include "evidencesql/sql_guard.hpp"

namespace fs = std::filesystem;
using namespace evidencesql;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPipeline = 1;
constexpr int kExitConfig = 2;

struct GlobalFlags {
    std::string manifest;
    std::string config;
    std::string out;
    std::string mode;
    std::optional<double> alpha;
    std::optional<int> workers;
    bool json = false;
};

int report_error(const std::string& kind, const std::string& message, int code) {
    std::cerr << Json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
    return code;
}

bool is_config_error(const Error& e) {
    return e.kind() == "ConfigError" || e.kind() == "ManifestError" || e.kind() == "PreconditionViolation";
}

RunConfig effective_config(const GlobalFlags& g) {
    RunConfig c;
    if (!g.config.empty()) {
        Json j;
        try {
            j = Json::parse(read_text_file(g.config));
        } catch (const Json::exception& e) {
            throw ConfigError("config file " + g.config + ": " + e.what());
        } catch (const ParseError& e) {
            throw ConfigError(e.what());
        }
        c.apply_json(j, fs::path(g.config).parent_path());
    }
    if (!g.manifest.empty()) c.manifest_path = g.manifest;
    if (!g.out.empty()) c.out_dir = g.out;
    if (!g.mode.empty()) c.mode = mode_from_name(g.mode);
    if (g.alpha) c.alpha = *g.alpha;
    if (g.workers) c.workers = *g.workers;
    c.validate();
    if (c.manifest_path.empty()) throw ConfigError("no manifest given (use --manifest or the config file)");
    return c;
}

SchemaManifest manifest_of(const RunConfig& c) {
    try {
        return load_manifest(c.manifest_path);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

std::string read_query_arg(const std::string& sql, const std::string& file) {
    if (!sql.empty() && !file.empty()) throw ConfigError("give either --sql or --query-file, not both");
    if (!file.empty()) return read_text_file(file);
    if (sql.empty()) throw ConfigError("a query is required (--sql or --query-file)");
    return sql;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guarded SQL reasoning over multi-scale pathology feature tables"};
    app.require_subcommand(1);
    GlobalFlags g;
    app.add_option("--manifest", g.manifest, "Schema manifest JSON");
    app.add_option("--config", g.config, "Run configuration JSON");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--mode", g.mode, "full, sql_only or cnn_only");
    app.add_option("--alpha", g.alpha, "CNN weight in fusion, in [0, 1]");
    app.add_option("--workers", g.workers, "Parallel cases for batch-eval");
    app.add_flag("--json", g.json, "Machine-readable output");

    std::string case_dir, sidecar;
    auto* ingest = app.add_subcommand("ingest", "Load and validate one case directory");
    ingest->add_option("--case", case_dir, "Case directory")->required();

    std::string sql_text, query_file;
    auto* validate = app.add_subcommand("validate", "Run the guard pipeline on a query");
    validate->add_option("--sql", sql_text, "Query text");
    validate->add_option("--query-file", query_file, "File holding the query text");

    bool csv = false;
    auto* query = app.add_subcommand("query", "Validate and execute a query against a case");
    query->add_option("--case", case_dir, "Case directory")->required();
    query->add_option("--sql", sql_text, "Query text");
    query->add_option("--query-file", query_file, "File holding the query text");
    query->add_flag("--csv", csv, "CSV output");

    std::string training_dir, features_file, options_arg, ranges_out;
    std::vector<std::string> feature_args;
    double quantile = kDefaultQuantile;
    auto* calibrate = app.add_subcommand("calibrate-ranges", "Compute empirical reference ranges");
    calibrate->add_option("--training", training_dir, "Training split directory")->required();
    calibrate->add_option("--features", features_file, "JSON list of features");
    calibrate->add_option("--feature", feature_args, "Feature key table.column (repeatable)");
    calibrate->add_option("--options", options_arg, "Comma-separated option labels");
    calibrate->add_option("--quantile", quantile, "Lower quantile q in (0, 0.5)");
    calibrate->add_option("--output", ranges_out, "Ranges file (default <out>/ranges.json)");

    std::string questions_file, ranges_file, dataset_dir;
    auto* ask = app.add_subcommand("ask", "Answer a question about one case");
    ask->add_option("--case", case_dir, "Case directory")->required();
    ask->add_option("--questions", questions_file, "Questions JSON")->required();
    ask->add_option("--ranges", ranges_file, "Reference ranges JSON");

    auto* batch = app.add_subcommand("batch-eval", "Evaluate every case of a labeled dataset");
    batch->add_option("--dataset", dataset_dir, "Directory with one subdirectory per case")->required();
    batch->add_option("--questions", questions_file, "Questions JSON")->required();
    batch->add_option("--ranges", ranges_file, "Reference ranges JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("UsageError", e.what(), kExitConfig);
    }

    try {
        RunConfig config = effective_config(g);
        if (!ranges_file.empty()) config.ranges_path = ranges_file;
        const SchemaManifest manifest = manifest_of(config);

        if (ingest->parsed()) {
            const CaseBundle b = load_case_dir(manifest, case_dir);
            Json tables = Json::object();
            for (const auto& [name, t] : b.tables()) tables[name] = t.row_count();
            Json j = {{"case_id", b.case_id()}, {"row_counts", tables}};
            j["has_cnn_probs"] = b.cnn_probs().has_value();
            j["ground_truth"] = b.ground_truth() ? Json(*b.ground_truth()) : Json(nullptr);
            if (g.json) {
                std::cout << dump_canonical(j) << '\n';
            } else {
                std::cout << "case " << b.case_id() << '\n';
                for (const auto& [name, t] : b.tables()) std::cout << "  " << name << ": " << t.row_count() << " rows\n";
            }
            return kExitOk;
        }

        if (validate->parsed() || query->parsed()) {
            const std::string text = read_query_arg(sql_text, query_file);
            GuardOutcome outcome = validate_pipeline(text, manifest, SourceAgent::Manual);
            if (auto* rej = std::get_if<GuardRejection>(&outcome)) {
                std::cerr << Json{{"rejection", rej->to_json()}}.dump() << '\n';
                return kExitPipeline;
            }
            const ValidatedQuery& vq = std::get<ValidatedQuery>(outcome);
            if (validate->parsed()) {
                std::cout << (g.json ? dump_canonical(vq.to_json()) : vq.canonical_text()) << '\n';
                return kExitOk;
            }
            const CaseBundle b = load_case_dir(manifest, case_dir);
            const ResultTable r = execute(vq, b);
            if (g.json) {
                std::cout << dump_canonical(r.to_json()) << '\n';
            } else if (csv) {
                std::cout << result_to_csv(r);
            } else {
                std::cout << result_to_text(r);
            }
            return kExitOk;
        }

        if (calibrate->parsed()) {
            std::vector<FeatureSpec> features;
            if (!features_file.empty()) features = load_feature_list(features_file);
            for (const auto& f : feature_args) features.push_back(FeatureSpec::column(f));
            if (features.empty()) throw ConfigError("no features given (--features or --feature)");
            std::optional<std::vector<std::string>> options;
            if (!options_arg.empty()) options = split_csv(options_arg);
            if (!(quantile > 0.0 && quantile < 0.5)) throw ConfigError("quantile must lie in (0, 0.5)");
            const RangeCalibration cal = calibrate_ranges(manifest, training_dir, features, options, quantile);
            const fs::path target = ranges_out.empty() ? config.out_dir / "ranges.json" : fs::path(ranges_out);
            write_file_atomic(target, dump_canonical(ranges_to_json(cal.ranges)) + "\n");
            write_run_record(target.parent_path().empty() ? fs::path(".") : target.parent_path(), config,
                             "calibrate-ranges");
            if (g.json) {
                std::cout << dump_canonical(Json{{"ranges_file", target.generic_string()},
                                                 {"n_ranges", cal.ranges.size()},
                                                 {"notes", cal.notes}})
                          << '\n';
            } else {
                std::cout << "wrote " << cal.ranges.size() << " ranges to " << target.string() << '\n';
                for (const auto& n : cal.notes) std::cout << "note: " << n << '\n';
            }
            return kExitOk;
        }

        std::vector<ReferenceRange> ranges;
        if (config.ranges_path) ranges = load_ranges(*config.ranges_path);
        const auto questions = load_questions(questions_file);
        auto backend = make_backend(config.backend, manifest);

        if (ask->parsed()) {
            const CaseBundle b = load_case_dir(manifest, case_dir);
            const CaseOutcome o = run_case(b, question_for_case(questions, b.case_id()), manifest, ranges, *backend, config);
            write_case_outputs(o, config.out_dir);
            write_run_record(config.out_dir, config, "ask");
            if (g.json) {
                std::cout << render_report(o.report, ReportFormat::Json);
            } else {
                std::cout << "case " << b.case_id() << ": " << o.decision.label
                          << (o.decision.review_flag ? " (flagged for review)" : "") << '\n'
                          << "report: " << (config.out_dir / "reports" / (b.case_id() + ".md")).string() << '\n';
            }
            return kExitOk;
        }

        if (batch->parsed()) {
            const EvalSummary s = batch_eval(config, manifest, ranges, dataset_dir, questions, *backend);
            write_run_record(config.out_dir, config, "batch-eval");
            if (g.json) {
                std::cout << dump_canonical(s.to_json()) << '\n';
            } else {
                std::cout << s.mode << ": " << s.n_correct << '/' << s.n_cases << " correct (accuracy "
                          << format_fixed6(s.accuracy) << "), " << s.n_flagged << " flagged, " << s.failures.size()
                          << " failed\n";
            }
            return kExitOk;
        }
    } catch (const Error& e) {
        return report_error(e.kind(), e.what(), is_config_error(e) ? kExitConfig : kExitPipeline);
    } catch (const std::exception& e) {
        return report_error("InternalError", e.what(), kExitPipeline);
    }
    return kExitConfig;
}
