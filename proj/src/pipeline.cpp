#include "evidencesql/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include "evidencesql/errors.hpp"

namespace evidencesql {

namespace fs = std::filesystem;

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Full: return "full";
        case Mode::SqlOnly: return "sql_only";
        case Mode::CnnOnly: return "cnn_only";
    }
    return "?";
}

Mode mode_from_name(const std::string& name) {
    if (name == "full") return Mode::Full;
    if (name == "sql_only") return Mode::SqlOnly;
    if (name == "cnn_only") return Mode::CnnOnly;
    throw ConfigError("unknown mode '" + name + "' (expected full, sql_only or cnn_only)");
}

void RunConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (!(quantile > 0.0 && quantile < 0.5)) throw ConfigError("quantile must lie in (0, 0.5)");
}

Json RunConfig::to_json() const {
    Json j = {{"manifest", manifest_path.generic_string()},
              {"backend", backend.to_json()},
              {"alpha", alpha},
              {"out", out_dir.generic_string()},
              {"mode", mode_name(mode)},
              {"workers", workers},
              {"quantile", quantile}};
    j["ranges"] = ranges_path ? Json(ranges_path->generic_string()) : Json(nullptr);
    return j;
}

void RunConfig::apply_json(const Json& j, const fs::path& base) {
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    try {
        if (j.contains("manifest")) manifest_path = resolve(j["manifest"].get<std::string>());
        if (j.contains("ranges") && !j["ranges"].is_null()) ranges_path = resolve(j["ranges"].get<std::string>());
        if (j.contains("alpha")) alpha = j["alpha"].get<double>();
        if (j.contains("out")) out_dir = resolve(j["out"].get<std::string>());
        if (j.contains("mode")) mode = mode_from_name(j["mode"].get<std::string>());
        if (j.contains("workers")) workers = j["workers"].get<int>();
        if (j.contains("quantile")) quantile = j["quantile"].get<double>();
        if (j.contains("backend")) {
            backend = j["backend"].is_string() ? BackendConfig::from_json(Json{{"backend", j["backend"]}})
                                               : BackendConfig::from_json(j["backend"]);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("bad config file: ") + e.what());
    }
}

AgentSettings RunConfig::agent_settings() const {
    return {backend.temperature, backend.timeout_seconds, backend.max_retries};
}

Json CaseOutcome::transcripts_json() const {
    Json agents = Json::array();
    for (const auto& t : transcripts) agents.push_back(t.to_json());
    return {{"case_id", question.case_id}, {"agents", agents}};
}

namespace {

CnnOutput cnn_from_bundle(const CaseBundle& b) { return CnnOutput{*b.cnn_probs()}; }

void execute_into(const std::vector<ValidatedQuery>& queries, const CaseBundle& bundle, std::vector<TraceEntry>& trace,
                  std::vector<ResultTable>& results, std::vector<Observation>& observations,
                  std::vector<std::string>& notes) {
    for (const auto& q : queries) {
        TraceEntry e;
        e.query_id = "q" + std::to_string(trace.size());
        e.source = q.source_agent();
        e.canonical_text = q.canonical_text();
        e.repair_log = q.repair_log();
        try {
            ResultTable r = execute(q, bundle);
            auto obs = extract_observations(q, r, e.query_id);
            observations.insert(observations.end(), obs.begin(), obs.end());
            results.push_back(r);
            e.result = std::move(r);
        } catch (const ArithmeticDomain& err) {
            e.error = ExecError{err.kind(), err.what(), err.row()};
        } catch (const Error& err) {
            e.error = ExecError{err.kind(), err.what(), std::nullopt};
        }
        if (e.error) notes.push_back("query " + e.query_id + " failed: " + e.error->message);
        trace.push_back(std::move(e));
    }
}

std::string narrative_prompt(const CaseOutcome& o) {
    std::string s = "Write one short paragraph explaining this diagnosis using only the facts below.\n";
    s += "Diagnosis: " + o.decision.label + "\n";
    if (o.hypothesis) {
        for (const auto& f : o.hypothesis->findings) s += "- " + f.feature_key + ": " + f.rationale + "\n";
    }
    return s;
}

}  // namespace

CaseOutcome run_case(const CaseBundle& bundle, Question question, const SchemaManifest& manifest,
                     const std::vector<ReferenceRange>& ranges, LlmBackend& backend, const RunConfig& config) {
    question.case_id = bundle.case_id();
    question.validate();
    if ((config.mode == Mode::Full || config.mode == Mode::CnnOnly) && !bundle.cnn_probs()) {
        throw ConfigError("mode " + std::string(mode_name(config.mode)) + " needs CNN probabilities but case '" +
                          bundle.case_id() + "' has no cnn_probs sidecar");
    }
    CaseOutcome out;
    out.question = question;
    out.report.question = question;
    out.report.transcripts_ref = "transcripts/" + bundle.case_id() + ".json";

    if (config.mode == Mode::CnnOnly) {
        out.decision = fuse_cnn_only(question, cnn_from_bundle(bundle));
        out.report.decision = out.decision;
        return out;
    }

    const AgentSettings settings = config.agent_settings();
    std::vector<TraceEntry> trace;
    std::vector<ResultTable> global_results, local_results;
    std::vector<Observation> observations;
    std::vector<std::string> notes;

    GlobalStage global = plan_global(question, manifest, backend, settings);
    execute_into(global.queries, bundle, trace, global_results, observations, notes);
    LocalStage local = plan_local(question, global.plan, global_results, manifest, backend, settings);
    execute_into(local.queries, bundle, trace, local_results, observations, notes);
    out.transcripts.push_back(global.transcript);
    out.transcripts.push_back(local.transcript);

    // Features already covered by the ranges file are core; the rest go to the model.
    AgentTranscript knowledge(AgentKind::Knowledge);
    std::vector<ReferenceRange> llm_ranges;
    if (backend.provides_knowledge()) {
        std::vector<std::string> dynamic;
        for (const auto& o : observations) {
            if (!o.observed.is_numeric()) continue;
            const bool core = std::any_of(ranges.begin(), ranges.end(),
                                          [&](const ReferenceRange& r) { return r.feature_key == o.feature_key; });
            if (!core && std::find(dynamic.begin(), dynamic.end(), o.feature_key) == dynamic.end()) {
                dynamic.push_back(o.feature_key);
            }
        }
        try {
            RangeCalibration fetched = fetch_llm_ranges(dynamic, question.options, backend, settings, &knowledge);
            llm_ranges = std::move(fetched.ranges);
            notes.insert(notes.end(), fetched.notes.begin(), fetched.notes.end());
        } catch (const BackendError& e) {
            notes.push_back(std::string("model ranges unavailable: ") + e.what());
        }
    }
    out.transcripts.push_back(knowledge);

    std::vector<FeatureFinding> findings = build_findings(observations, merge_ranges(ranges, llm_ranges), question.options);
    std::vector<std::pair<std::string, double>> confidences;
    try {
        ConfidenceResult c = calibrate_confidence(findings, question.options);
        confidences = std::move(c.confidences);
        if (c.note) notes.push_back(*c.note);
    } catch (const NoEvidence&) {
        for (const auto& o : question.options) confidences.emplace_back(o, 1.0 / static_cast<double>(question.options.size()));
        notes.push_back("no finding could be scored against a reference range; confidence is uniform");
    }
    out.hypothesis = build_hypothesis(question, std::move(findings), confidences, std::move(notes));

    out.decision = config.mode == Mode::Full ? fuse(question, cnn_from_bundle(bundle), *out.hypothesis, config.alpha)
                                             : fuse_sql_only(question, *out.hypothesis);
    out.report.decision = out.decision;
    out.report.hypothesis = out.hypothesis;
    out.report.trace = std::move(trace);

    AgentTranscript report_agent(AgentKind::Report);
    if (backend.is_remote()) {
        Exchange ex;
        ex.system_prompt = "You are the report agent. Do not introduce facts that are not given.";
        ex.user_prompt = narrative_prompt(out);
        try {
            ex.raw_response = backend.complete(
                {ex.system_prompt, ex.user_prompt, settings.temperature, settings.timeout_seconds, LlmTask::Narrative});
            out.report.narrative = ex.raw_response;
        } catch (const BackendError& e) {
            ex.notes.push_back(e.what());
            out.report.notes.push_back(std::string("narrative unavailable: ") + e.what());
        }
        report_agent.append(std::move(ex));
    }
    out.transcripts.push_back(report_agent);
    check_audit_chain(out.report);
    return out;
}

void write_case_outputs(const CaseOutcome& outcome, const fs::path& out_dir) {
    const std::string& id = outcome.question.case_id;
    write_file_atomic(out_dir / "reports" / (id + ".json"), render_report(outcome.report, ReportFormat::Json));
    write_file_atomic(out_dir / "reports" / (id + ".md"), render_report(outcome.report, ReportFormat::Markdown));
    write_file_atomic(out_dir / "transcripts" / (id + ".json"), dump_canonical(outcome.transcripts_json()) + "\n");
}

void write_run_record(const fs::path& out_dir, const RunConfig& config, const std::string& command) {
    const Json cfg = config.to_json();
    const Json record = {{"command", command}, {"config", cfg}, {"config_hash", fnv1a_hex(dump_canonical(cfg))}};
    write_file_atomic(out_dir / "run.json", dump_canonical(record) + "\n");
}

std::vector<Question> load_questions(const fs::path& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw ParseError("questions file " + path.string() + ": " + e.what());
    }
    if (j.is_object()) j = Json::array({j});
    if (!j.is_array() || j.empty()) throw ParseError("questions file must hold a nonempty JSON list");
    std::vector<Question> out;
    for (const auto& q : j) out.push_back(Question::from_json(q));
    return out;
}

Question question_for_case(const std::vector<Question>& questions, const std::string& case_id) {
    for (const auto& q : questions) {
        if (q.case_id == case_id) return q;
    }
    for (const auto& q : questions) {
        if (q.case_id == "*") {
            Question specific = q;
            specific.case_id = case_id;
            return specific;
        }
    }
    throw ConfigError("no question applies to case '" + case_id + "'");
}

Json EvalSummary::to_json() const {
    Json f = Json::array();
    for (const auto& x : failures) f.push_back({{"case_id", x.case_id}, {"kind", x.kind}, {"message", x.message}});
    return {{"mode", mode},
            {"n_cases", n_cases},
            {"n_correct", n_correct},
            {"accuracy", accuracy},
            {"n_flagged", n_flagged},
            {"per_class_accuracy", per_class_accuracy},
            {"failures", f}};
}

namespace {

std::vector<fs::path> case_dirs(const fs::path& root) {
    if (!fs::is_directory(root)) throw ConfigError("dataset directory not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end(), [](const fs::path& a, const fs::path& b) {
        return a.filename().string() < b.filename().string();
    });
    return dirs;
}

struct CaseResult {
    std::string case_id;
    std::optional<std::string> truth;
    std::optional<std::string> predicted;
    bool flagged = false;
    std::optional<CaseFailure> failure;
};

}  // namespace

EvalSummary batch_eval(const RunConfig& config, const SchemaManifest& manifest,
                       const std::vector<ReferenceRange>& ranges, const fs::path& dataset_dir,
                       const std::vector<Question>& questions, LlmBackend& backend) {
    const std::vector<fs::path> dirs = case_dirs(dataset_dir);
    std::vector<CaseResult> results(dirs.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (std::size_t i = next++; i < dirs.size(); i = next++) {
            CaseResult& r = results[i];
            r.case_id = dirs[i].filename().string();
            try {
                CaseBundle bundle = load_case_dir(manifest, dirs[i]);
                r.truth = bundle.ground_truth();
                if (!r.truth) throw MissingLabel("case '" + r.case_id + "' has no ground_truth label");
                CaseOutcome o = run_case(bundle, question_for_case(questions, r.case_id), manifest, ranges, backend, config);
                write_case_outputs(o, config.out_dir);
                r.predicted = o.decision.label;
                r.flagged = o.decision.review_flag;
            } catch (const Error& e) {
                r.failure = CaseFailure{r.case_id, e.kind(), e.what()};
            } catch (const std::exception& e) {
                r.failure = CaseFailure{r.case_id, "InternalError", e.what()};
            }
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(dirs.size(), 1));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    // Reduce in case order so the summary does not depend on scheduling.
    EvalSummary s;
    s.mode = mode_name(config.mode);
    s.n_cases = results.size();
    std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;
    for (const auto& r : results) {
        if (r.failure) s.failures.push_back(*r.failure);
        if (r.truth) per_class[*r.truth].second++;
        if (r.flagged) s.n_flagged++;
        if (r.truth && r.predicted && *r.truth == *r.predicted) {
            s.n_correct++;
            per_class[*r.truth].first++;
        }
    }
    s.accuracy = s.n_cases ? static_cast<double>(s.n_correct) / static_cast<double>(s.n_cases) : 0.0;
    for (const auto& [label, counts] : per_class) {
        s.per_class_accuracy[label] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    write_file_atomic(config.out_dir / "summary.json", dump_canonical(s.to_json()) + "\n");
    return s;
}

RangeCalibration calibrate_ranges(const SchemaManifest& manifest, const fs::path& training_dir,
                                  const std::vector<FeatureSpec>& features,
                                  std::optional<std::vector<std::string>> options, double q) {
    const std::vector<CaseBundle> training = load_training_split(manifest, training_dir);
    if (!options) {
        std::set<std::string> labels;
        for (const auto& b : training) {
            if (!b.ground_truth()) throw MissingLabel("training case '" + b.case_id() + "' has no ground_truth label");
            labels.insert(*b.ground_truth());
        }
        options = std::vector<std::string>(labels.begin(), labels.end());
    }
    return compute_empirical_ranges(training, features, *options, q, manifest);
}

std::vector<FeatureSpec> load_feature_list(const fs::path& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw ParseError("feature list " + path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw ParseError("feature list must hold a JSON list");
    std::vector<FeatureSpec> out;
    for (const auto& f : j) out.push_back(FeatureSpec::from_json(f));
    return out;
}

std::vector<ReferenceRange> load_ranges(const fs::path& path) {
    try {
        return ranges_from_json(Json::parse(read_text_file(path)));
    } catch (const Json::exception& e) {
        throw ParseError("ranges file " + path.string() + ": " + e.what());
    }
}

}  // namespace evidencesql
