#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "evidencesql/errors.hpp"
#include "evidencesql/fusion.hpp"
#include "evidencesql/knowledge.hpp"
#include "evidencesql/pipeline.hpp"
#include "evidencesql/sql_exec.hpp"
#include "evidencesql/sql_guard.hpp"
#include "evidencesql/sql_parser.hpp"

namespace py = pybind11;
using namespace evidencesql;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
std::string guard_json(const std::string& manifest_path, const std::string& text) {
    const SchemaManifest m = load_manifest(manifest_path);
    GuardOutcome o = validate_pipeline(text, m, SourceAgent::Manual);
    if (auto* vq = std::get_if<ValidatedQuery>(&o)) {
        Json j = vq->to_json();
        j["status"] = "validated";
        return j.dump();
    }
    Json j = std::get<GuardRejection>(o).to_json();
    j["status"] = "rejected";
    return j.dump();
}

std::string query_json(const std::string& manifest_path, const std::string& case_dir, const std::string& text) {
    const SchemaManifest m = load_manifest(manifest_path);
    GuardOutcome o = validate_pipeline(text, m, SourceAgent::Manual);
    if (auto* rej = std::get_if<GuardRejection>(&o)) {
        throw PreconditionViolation("query rejected at " + std::string(guard_stage_name(rej->stage)) + ": " +
                                    rej->reason);
    }
    return execute(std::get<ValidatedQuery>(o), load_case_dir(m, case_dir)).to_json().dump();
}

std::string ask_json(const std::string& manifest_path, const std::string& case_dir, const std::string& questions_path,
                     const std::optional<std::string>& ranges_path, const std::string& mode, double alpha) {
    RunConfig c;
    c.manifest_path = manifest_path;
    c.mode = mode_from_name(mode);
    c.alpha = alpha;
    c.validate();
    const SchemaManifest m = load_manifest(manifest_path);
    std::vector<ReferenceRange> ranges;
    if (ranges_path) ranges = load_ranges(*ranges_path);
    const CaseBundle b = load_case_dir(m, case_dir);
    TemplateBackend backend(m);
    const CaseOutcome o = run_case(b, question_for_case(load_questions(questions_path), b.case_id()), m, ranges,
                                   backend, c);
    return render_report(o.report, ReportFormat::Json);
}

std::string fit(double observed, double low, double high) {
    return fit_category_name(score_fit(observed, ReferenceRange{"x", "o", low, high, RangeSource::Empirical, {}}).category);
}

std::vector<std::pair<std::string, double>> confidence(const std::vector<std::map<std::string, std::optional<std::string>>>& fits,
                                                       const std::vector<std::string>& options) {
    std::vector<FeatureFinding> findings;
    for (const auto& f : fits) {
        FeatureFinding ff;
        for (const auto& [label, cat] : f) {
            ff.fits[label] = cat ? std::optional<FitCategory>(fit_category_from_name(*cat)) : std::nullopt;
        }
        findings.push_back(std::move(ff));
    }
    return calibrate_confidence(findings, options).confidences;
}

py::dict fuse_probs(const std::vector<std::pair<std::string, double>>& cnn,
                    const std::vector<std::pair<std::string, double>>& sql, double alpha) {
    Question q;
    q.case_id = "python";
    for (const auto& kv : cnn) q.options.push_back(kv.first);
    Hypothesis h;
    h.ranked_options = sql;
    const FusedDecision d = fuse(q, CnnOutput{cnn}, h, alpha);
    py::dict out;
    out["label"] = d.label;
    out["fused"] = d.fused;
    out["review_flag"] = d.review_flag;
    out["cnn_label"] = d.cnn_label;
    out["sql_label"] = d.sql_label;
    return out;
}

}  // namespace

PYBIND11_MODULE(_evidencesql, m) {
    m.doc() = "Guarded SQL reasoning engine (native core)";

    py::register_exception<Error>(m, "EvidenceSqlError");

    m.def("render", [](const std::string& text) { return sql::render(sql::parse(text)); },
          "Parse a query and return its canonical text", py::arg("sql"));
    m.def("levenshtein", [](const std::string& a, const std::string& b) { return levenshtein(a, b); });
    m.def("guard_json", &guard_json, py::arg("manifest"), py::arg("sql"));
    m.def("query_json", &query_json, py::arg("manifest"), py::arg("case_dir"), py::arg("sql"));
    m.def("ask_json", &ask_json, py::arg("manifest"), py::arg("case_dir"), py::arg("questions"),
          py::arg("ranges") = py::none(), py::arg("mode") = "sql_only", py::arg("alpha") = kDefaultAlpha);
    m.def("score_fit", &fit, py::arg("observed"), py::arg("low"), py::arg("high"));
    m.def("calibrate_confidence", &confidence, py::arg("fits"), py::arg("options"));
    m.def("fuse", &fuse_probs, py::arg("cnn"), py::arg("sql"), py::arg("alpha") = kDefaultAlpha);
}
