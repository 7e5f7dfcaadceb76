#include "evidencesql/report.hpp"

#include <algorithm>
#include <sstream>

#include "evidencesql/errors.hpp"
#include "evidencesql/sql_parser.hpp"

namespace evidencesql {

Json TraceEntry::to_json() const {
    Json log = Json::array();
    for (const auto& a : repair_log) log.push_back(repair_action_to_json(a));
    Json j = {{"query_id", query_id},
              {"source_agent", source_agent_name(source)},
              {"canonical_text", canonical_text},
              {"repair_log", log}};
    if (result) {
        Json rows = Json::array();
        for (const auto& r : result->rows) {
            Json jr = Json::array();
            for (const auto& v : r) jr.push_back(value_to_json(v));
            rows.push_back(std::move(jr));
        }
        j["columns"] = result->column_names;
        j["rows"] = rows;
    } else {
        j["columns"] = Json::array();
        j["rows"] = Json::array();
    }
    j["error"] = error ? error->to_json() : Json(nullptr);
    return j;
}

void check_audit_chain(const ReportInputs& in) {
    for (const auto& t : in.trace) {
        try {
            (void)sql::parse(t.canonical_text);
        } catch (const Error& e) {
            throw PreconditionViolation("trace entry " + t.query_id + " does not reparse: " + e.what());
        }
    }
    if (!in.hypothesis) return;
    for (const auto& f : in.hypothesis->findings) {
        auto it = std::find_if(in.trace.begin(), in.trace.end(),
                               [&](const TraceEntry& t) { return t.query_id == f.query_id; });
        if (it == in.trace.end()) {
            throw DanglingQueryId("finding " + f.feature_key + " references unknown query '" + f.query_id + "'");
        }
        if (!it->result) {
            throw DanglingQueryId("finding " + f.feature_key + " references failed query '" + f.query_id + "'");
        }
    }
}

std::vector<ContributingFeature> contributing_features(const Hypothesis& h, const std::vector<std::string>& options) {
    std::vector<ContributingFeature> out;
    for (const auto& f : h.findings) {
        const std::string* best = nullptr;
        FitCategory best_cat = FitCategory::NoFit;
        for (const auto& o : options) {
            auto it = f.fits.find(o);
            if (it == f.fits.end() || !it->second) continue;
            if (!best || fit_weight(*it->second) > fit_weight(best_cat)) {
                best = &o;
                best_cat = *it->second;
            }
        }
        if (best) out.push_back({f.feature_key, f.observed, *best, best_cat, f.query_id});
    }
    return out;
}

Json render_report_json(const ReportInputs& in) {
    check_audit_chain(in);
    double label_conf = 0.0;
    for (const auto& [l, p] : in.decision.fused) {
        if (l == in.decision.label) label_conf = p;
    }
    Json contributing = Json::array();
    if (in.hypothesis) {
        for (const auto& c : contributing_features(*in.hypothesis, in.question.options)) {
            contributing.push_back({{"feature_key", c.feature_key},
                                    {"observed", value_to_json(c.observed)},
                                    {"best_fit_option", c.best_option},
                                    {"fit_category", fit_category_name(c.category)},
                                    {"query_id", c.query_id}});
        }
    }
    Json trace = Json::array();
    for (const auto& t : in.trace) trace.push_back(t.to_json());

    Json j = {{"schema_version", kReportSchemaVersion},
              {"case_id", in.question.case_id},
              {"question", {{"prompt", in.question.prompt_text}, {"options", in.question.options}}},
              {"mode", in.decision.mode},
              {"diagnosis", {{"label", in.decision.label}, {"confidence", label_conf}}},
              {"decision", in.decision.to_json()},
              {"contributing_features", contributing},
              {"sql_trace", trace},
              {"transcripts_ref", in.transcripts_ref},
              {"data_quality_notes", in.notes}};
    j["hypothesis"] = in.hypothesis ? in.hypothesis->to_json() : Json(nullptr);
    if (in.narrative) j["narrative"] = {{"label", "generated narrative"}, {"text", *in.narrative}};
    return j;
}

namespace {

std::string md_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '|') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out;
}

std::string show(const Value& v) { return v.is_real() ? format_fixed6(v.as_real()) : v.to_string(); }

constexpr std::size_t kMarkdownRowCap = 50;

}  // namespace

std::string render_report_markdown(const ReportInputs& in) {
    check_audit_chain(in);
    const FusedDecision& d = in.decision;
    std::ostringstream out;
    double label_conf = 0.0;
    for (const auto& [l, p] : d.fused) {
        if (l == d.label) label_conf = p;
    }
    out << "# Case " << in.question.case_id << "\n\n";
    out << "**Diagnosis:** " << d.label << " (fused confidence " << format_fixed6(label_conf) << ")\n\n";
    out << "**Mode:** " << d.mode;
    if (d.mode == "full") out << ", alpha " << format_fixed6(d.alpha);
    out << "\n\n";
    if (d.mode == "full") {
        out << "**Review flag:** "
            << (d.review_flag ? "yes, the CNN favours " + d.cnn_label + " and the SQL branch favours " + d.sql_label
                              : std::string("no, both branches favour ") + d.label)
            << "\n\n";
    }
    out << "## Question\n\n" << in.question.prompt_text << "\n\nOptions: ";
    for (std::size_t i = 0; i < in.question.options.size(); ++i) out << (i ? ", " : "") << in.question.options[i];
    out << "\n\n## Fused probabilities\n\n| option | probability |\n|---|---|\n";
    for (const auto& [l, p] : d.fused) out << "| " << md_escape(l) << " | " << format_fixed6(p) << " |\n";

    if (in.hypothesis) {
        out << "\n## Ranked options (SQL branch)\n\n| option | confidence |\n|---|---|\n";
        for (const auto& [l, c] : in.hypothesis->ranked_options) {
            out << "| " << md_escape(l) << " | " << format_fixed6(c) << " |\n";
        }
        out << "\n## Contributing features\n\n";
        const auto contributing = contributing_features(*in.hypothesis, in.question.options);
        if (contributing.empty()) {
            out << "No feature had a reference range.\n";
        } else {
            out << "| feature | observed | best-fit option | fit | query |\n|---|---|---|---|---|\n";
            for (const auto& c : contributing) {
                out << "| " << md_escape(c.feature_key) << " | " << show(c.observed) << " | " << md_escape(c.best_option)
                    << " | " << fit_category_name(c.category) << " | " << c.query_id << " |\n";
            }
        }
        if (!in.hypothesis->findings.empty()) {
            out << "\n### Rationales\n\n";
            for (const auto& f : in.hypothesis->findings) {
                out << "- `" << f.feature_key << "`: " << f.rationale;
                if (f.quality_note) out << " (" << *f.quality_note << ")";
                out << '\n';
            }
        }
    }

    std::vector<std::string> notes = in.notes;
    if (in.hypothesis) {
        notes.insert(notes.end(), in.hypothesis->data_quality_notes.begin(), in.hypothesis->data_quality_notes.end());
    }
    if (!notes.empty()) {
        out << "\n## Data-quality notes\n\n";
        for (const auto& n : notes) out << "- " << n << '\n';
    }

    out << "\n## SQL trace\n";
    if (in.trace.empty()) out << "\nNo queries were executed.\n";
    for (const auto& t : in.trace) {
        out << "\n### " << t.query_id << " (" << source_agent_name(t.source) << ")\n\n```sql\n"
            << t.canonical_text << "\n```\n\n";
        if (t.repair_log.empty()) {
            out << "Repairs: none\n";
        } else {
            out << "Repairs:\n";
            for (const auto& a : t.repair_log) {
                out << "- " << repair_kind_name(a.kind) << ": `" << a.before << "` -> `" << a.after << "` (distance "
                    << a.edit_distance << ")\n";
            }
        }
        if (t.error) {
            out << "\nExecution failed: " << t.error->kind << ": " << t.error->message << '\n';
            continue;
        }
        if (!t.result) continue;
        const ResultTable& r = *t.result;
        out << "\n|";
        for (const auto& c : r.column_names) out << ' ' << md_escape(c) << " |";
        out << "\n|";
        for (std::size_t i = 0; i < r.column_names.size(); ++i) out << "---|";
        out << '\n';
        for (std::size_t i = 0; i < r.rows.size() && i < kMarkdownRowCap; ++i) {
            out << '|';
            for (const auto& v : r.rows[i]) out << ' ' << md_escape(show(v)) << " |";
            out << '\n';
        }
        if (r.rows.size() > kMarkdownRowCap) {
            out << "\n(" << r.rows.size() - kMarkdownRowCap << " more rows in the JSON report)\n";
        }
    }

    out << "\nTranscripts: `" << in.transcripts_ref << "`\n";
    if (in.narrative) out << "\n## Generated narrative\n\n" << *in.narrative << '\n';
    return out.str();
}

std::string render_report(const ReportInputs& in, ReportFormat format) {
    if (format == ReportFormat::Json) return dump_canonical(render_report_json(in)) + "\n";
    return render_report_markdown(in);
}

std::vector<std::string> replay_report(const Json& report, const SchemaManifest& manifest, const CaseBundle& bundle) {
    std::vector<std::string> mismatched;
    for (const auto& entry : report.at("sql_trace")) {
        if (!entry.at("error").is_null()) continue;
        const std::string id = entry.at("query_id").get<std::string>();
        GuardOutcome o = validate_pipeline(entry.at("canonical_text").get<std::string>(), manifest, SourceAgent::Manual);
        auto* vq = std::get_if<ValidatedQuery>(&o);
        if (!vq || !vq->repair_log().empty()) {
            mismatched.push_back(id);
            continue;
        }
        try {
            const ResultTable r = execute(*vq, bundle);
            TraceEntry replayed{id, SourceAgent::Manual, vq->canonical_text(), {}, r, std::nullopt};
            const Json fresh = replayed.to_json();
            if (dump_canonical(fresh.at("rows")) != dump_canonical(entry.at("rows")) ||
                fresh.at("columns") != entry.at("columns")) {
                mismatched.push_back(id);
            }
        } catch (const Error&) {
            mismatched.push_back(id);
        }
    }
    return mismatched;
}

}  // namespace evidencesql
