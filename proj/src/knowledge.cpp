#include "evidencesql/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "evidencesql/errors.hpp"
#include "evidencesql/sql_parser.hpp"

namespace evidencesql {

const char* range_source_name(RangeSource s) {
    return s == RangeSource::Empirical ? "empirical" : "llm_knowledge";
}

Json ReferenceRange::to_json() const {
    Json j = {{"feature_key", feature_key},
              {"option_label", option_label},
              {"low", low},
              {"high", high},
              {"source", range_source_name(source)}};
    if (unit) j["unit"] = *unit;
    return j;
}

ReferenceRange ReferenceRange::from_json(const Json& j) {
    ReferenceRange r;
    try {
        r.feature_key = j.at("feature_key").get<std::string>();
        r.option_label = j.at("option_label").get<std::string>();
        r.low = j.at("low").get<double>();
        r.high = j.at("high").get<double>();
        const std::string source = j.value("source", "empirical");
        if (source == "empirical") {
            r.source = RangeSource::Empirical;
        } else if (source == "llm_knowledge") {
            r.source = RangeSource::LlmKnowledge;
        } else {
            throw ParseError("unknown range source '" + source + "'");
        }
        if (j.contains("unit") && !j["unit"].is_null()) r.unit = j["unit"].get<std::string>();
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed reference range: ") + e.what());
    }
    if (!std::isfinite(r.low) || !std::isfinite(r.high) || r.low > r.high) {
        throw ParseError("reference range for " + r.feature_key + "/" + r.option_label + " has low > high");
    }
    return r;
}

Json ranges_to_json(const std::vector<ReferenceRange>& ranges) {
    Json out = Json::array();
    for (const auto& r : ranges) out.push_back(r.to_json());
    return out;
}

std::vector<ReferenceRange> ranges_from_json(const Json& j) {
    if (!j.is_array()) throw ParseError("ranges file must hold a JSON list");
    std::vector<ReferenceRange> out;
    for (const auto& item : j) out.push_back(ReferenceRange::from_json(item));
    return out;
}

const char* fit_category_name(FitCategory c) {
    switch (c) {
        case FitCategory::Excellent: return "Excellent";
        case FitCategory::Good: return "Good";
        case FitCategory::Fair: return "Fair";
        case FitCategory::Poor: return "Poor";
        case FitCategory::NoFit: return "NoFit";
    }
    return "?";
}

FitCategory fit_category_from_name(const std::string& name) {
    for (FitCategory c : {FitCategory::Excellent, FitCategory::Good, FitCategory::Fair, FitCategory::Poor,
                          FitCategory::NoFit}) {
        if (name == fit_category_name(c)) return c;
    }
    throw ParseError("unknown fit category '" + name + "'");
}

double fit_weight(FitCategory c) {
    switch (c) {
        case FitCategory::Excellent: return 1.0;
        case FitCategory::Good: return 0.75;
        case FitCategory::Fair: return 0.5;
        case FitCategory::Poor: return 0.25;
        case FitCategory::NoFit: return 0.0;
    }
    return 0.0;
}

FitScore make_fit(FitCategory c) { return {c, fit_weight(c)}; }

Json FeatureFinding::to_json() const {
    Json jf = Json::object();
    for (const auto& [label, fit] : fits) jf[label] = fit ? Json(fit_category_name(*fit)) : Json(nullptr);
    Json j = {{"feature_key", feature_key},
              {"observed", value_to_json(observed)},
              {"query_id", query_id},
              {"fits", jf},
              {"rationale", rationale}};
    if (quality_note) j["quality_note"] = *quality_note;
    return j;
}

FeatureFinding FeatureFinding::from_json(const Json& j) {
    FeatureFinding f;
    try {
        f.feature_key = j.at("feature_key").get<std::string>();
        f.observed = value_from_json(j.at("observed"));
        f.query_id = j.at("query_id").get<std::string>();
        for (const auto& [label, fit] : j.at("fits").items()) {
            f.fits[label] = fit.is_null() ? std::nullopt
                                          : std::optional<FitCategory>(fit_category_from_name(fit.get<std::string>()));
        }
        f.rationale = j.at("rationale").get<std::string>();
        if (j.contains("quality_note") && !j["quality_note"].is_null()) {
            f.quality_note = j["quality_note"].get<std::string>();
        }
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed finding: ") + e.what());
    }
    return f;
}

Json Hypothesis::to_json() const {
    Json ranked = Json::array();
    for (const auto& [label, c] : ranked_options) ranked.push_back({{"label", label}, {"confidence", c}});
    Json jf = Json::array();
    for (const auto& f : findings) jf.push_back(f.to_json());
    return {{"schema_version", schema_version},
            {"case_id", case_id},
            {"ranked_options", ranked},
            {"findings", jf},
            {"data_quality_notes", data_quality_notes}};
}

Hypothesis Hypothesis::from_json(const Json& j) {
    Hypothesis h;
    try {
        h.schema_version = j.at("schema_version").get<std::string>();
        h.case_id = j.at("case_id").get<std::string>();
        for (const auto& r : j.at("ranked_options")) {
            h.ranked_options.emplace_back(r.at("label").get<std::string>(), r.at("confidence").get<double>());
        }
        for (const auto& f : j.at("findings")) h.findings.push_back(FeatureFinding::from_json(f));
        h.data_quality_notes = j.at("data_quality_notes").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed hypothesis: ") + e.what());
    }
    return h;
}

double Hypothesis::confidence(const std::string& label) const {
    for (const auto& [l, c] : ranked_options) {
        if (l == label) return c;
    }
    return 0.0;
}

FeatureSpec FeatureSpec::from_json(const Json& j) {
    if (j.is_string()) return column(j.get<std::string>());
    try {
        return {j.at("name").get<std::string>(), j.at("sql").get<std::string>()};
    } catch (const Json::exception& e) {
        throw ParseError(std::string("feature spec must be \"table.column\" or {name, sql}: ") + e.what());
    }
}

Json FeatureSpec::to_json() const {
    if (!sql) return name;
    return {{"name", name}, {"sql", *sql}};
}

// ---------------------------------------------------------------------------
// empirical ranges

double quantile_linear(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw PreconditionViolation("quantile of an empty sample");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

struct ColumnKey {
    const TableSchema* table;
    std::size_t index;
};

ColumnKey resolve_column_key(const std::string& key, const SchemaManifest& manifest) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) throw PreconditionViolation("feature '" + key + "' is not of the form table.column");
    const TableSchema* t = manifest.find_table(key.substr(0, dot));
    if (!t) throw PreconditionViolation("feature '" + key + "' names an unknown table");
    const auto idx = t->column_index(key.substr(dot + 1));
    if (!idx) throw PreconditionViolation("feature '" + key + "' names an unknown column");
    if (t->columns[*idx].dtype == Dtype::Text) throw PreconditionViolation("feature '" + key + "' is not numeric");
    return {t, *idx};
}

ValidatedQuery validate_metric(const FeatureSpec& f, const SchemaManifest& manifest) {
    GuardOutcome o = validate_pipeline(*f.sql, manifest, SourceAgent::Manual);
    if (auto* rej = std::get_if<GuardRejection>(&o)) {
        throw PreconditionViolation("metric '" + f.name + "' query rejected at " + guard_stage_name(rej->stage) +
                                    ": " + rej->reason);
    }
    return std::get<ValidatedQuery>(std::move(o));
}

std::optional<double> metric_value(const ValidatedQuery& q, const CaseBundle& bundle) {
    const ResultTable r = execute(q, bundle);
    if (r.rows.empty() || r.rows.front().empty()) return std::nullopt;
    const Value& v = r.rows.front().front();
    if (!v.is_numeric()) return std::nullopt;
    return v.as_number();
}

std::optional<double> column_value(const CaseBundle& bundle, const ColumnKey& key) {
    const FeatureTable* t = bundle.find_table(key.table->name);
    if (!t) throw TableNotInBundle("table '" + key.table->name + "' missing from case '" + bundle.case_id() + "'");
    double sum = 0.0, comp = 0.0;
    std::size_t n = 0;
    for (const auto& v : t->column(key.index)) {
        if (!v.is_numeric()) continue;
        const double x = v.as_number();
        const double s = sum + x;
        comp += std::fabs(sum) >= std::fabs(x) ? (sum - s) + x : (x - s) + sum;
        sum = s;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return (sum + comp) / static_cast<double>(n);
}

}  // namespace

std::optional<double> case_feature_value(const CaseBundle& bundle, const FeatureSpec& feature,
                                         const SchemaManifest& manifest) {
    if (feature.sql) return metric_value(validate_metric(feature, manifest), bundle);
    return column_value(bundle, resolve_column_key(feature.name, manifest));
}

RangeCalibration compute_empirical_ranges(const std::vector<CaseBundle>& training,
                                          const std::vector<FeatureSpec>& features,
                                          const std::vector<std::string>& options, double q,
                                          const SchemaManifest& manifest) {
    if (!(q > 0.0 && q < 0.5)) throw PreconditionViolation("quantile q must lie in (0, 0.5)");
    for (const auto& b : training) {
        if (!b.ground_truth()) throw MissingLabel("training case '" + b.case_id() + "' has no ground_truth label");
    }

    RangeCalibration out;
    std::set<std::string> foreign;
    for (const auto& b : training) {
        if (std::find(options.begin(), options.end(), *b.ground_truth()) == options.end() &&
            foreign.insert(*b.ground_truth()).second) {
            out.notes.push_back("training label '" + *b.ground_truth() + "' is not among the options; ignored");
        }
    }

    for (const auto& f : features) {
        std::optional<ValidatedQuery> metric;
        std::optional<ColumnKey> key;
        std::optional<std::string> unit;
        if (f.sql) {
            metric = validate_metric(f, manifest);
        } else {
            key = resolve_column_key(f.name, manifest);
            unit = key->table->columns[key->index].unit;
        }
        std::map<std::string, std::vector<double>> per_option;
        for (const auto& b : training) {
            const std::optional<double> v = metric ? metric_value(*metric, b) : column_value(b, *key);
            if (!v) {
                out.notes.push_back("feature " + f.name + ": case '" + b.case_id() + "' has no value");
                continue;
            }
            per_option[*b.ground_truth()].push_back(*v);
        }
        for (const auto& option : options) {
            auto& xs = per_option[option];
            if (xs.size() < kMinCasesPerOption) {
                out.notes.push_back("feature " + f.name + ", option " + option + ": " + std::to_string(xs.size()) +
                                    " labeled case(s), need " + std::to_string(kMinCasesPerOption) + "; no range");
                continue;
            }
            std::sort(xs.begin(), xs.end());
            out.ranges.push_back(
                {f.name, option, quantile_linear(xs, q), quantile_linear(xs, 1.0 - q), RangeSource::Empirical, unit});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// model ranges

std::optional<std::pair<double, double>> parse_range_response(const std::string& text) {
    for (std::size_t open = text.find('{'); open != std::string::npos; open = text.find('{', open + 1)) {
        for (std::size_t close = text.find('}', open); close != std::string::npos; close = text.find('}', close + 1)) {
            const Json j = Json::parse(text.substr(open, close - open + 1), nullptr, false);
            if (j.is_discarded() || !j.is_object()) continue;
            if (!j.contains("low") || !j.contains("high") || !j["low"].is_number() || !j["high"].is_number()) break;
            const double low = j["low"].get<double>();
            const double high = j["high"].get<double>();
            if (!std::isfinite(low) || !std::isfinite(high)) break;
            return std::make_pair(low, high);
        }
    }
    return std::nullopt;
}

RangeCalibration fetch_llm_ranges(const std::vector<std::string>& feature_keys,
                                  const std::vector<std::string>& options, LlmBackend& backend,
                                  const AgentSettings& settings, AgentTranscript* transcript) {
    RangeCalibration out;
    if (!backend.provides_knowledge()) return out;
    const std::string system =
        "You are a pathology knowledge agent. Reply with one JSON object {\"low\": number, \"high\": number} giving "
        "the typical range of the feature for the diagnosis. No other text.";
    for (const auto& key : feature_keys) {
        for (const auto& option : options) {
            Exchange ex;
            ex.system_prompt = system;
            ex.user_prompt = "Feature: " + key + "\nDiagnosis: " + option;
            ex.raw_response = backend.complete(
                {ex.system_prompt, ex.user_prompt, settings.temperature, settings.timeout_seconds, LlmTask::ReferenceRange});
            const auto parsed = parse_range_response(ex.raw_response);
            if (!parsed) {
                const std::string note = "model range for " + key + "/" + option + " dropped: no numeric low/high";
                ex.notes.push_back(note);
                out.notes.push_back(note);
            } else if (parsed->first > parsed->second) {
                const std::string note = "model range for " + key + "/" + option + " dropped: low > high";
                ex.notes.push_back(note);
                out.notes.push_back(note);
            } else {
                out.ranges.push_back({key, option, parsed->first, parsed->second, RangeSource::LlmKnowledge, std::nullopt});
            }
            if (transcript) transcript->append(std::move(ex));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// scoring

FitScore score_fit(double observed, const ReferenceRange& range) {
    if (!std::isfinite(observed)) throw NonFiniteObservation("observed value is not finite");
    if (range.low > range.high) throw PreconditionViolation("reference range has low > high");
    if (observed >= range.low && observed <= range.high) return make_fit(FitCategory::Excellent);
    constexpr double kEps = 1e-9;
    const double w = range.high > range.low ? range.high - range.low : kEps;
    const double d = observed < range.low ? range.low - observed : observed - range.high;
    const double r = d / w;
    if (r <= 0.25) return make_fit(FitCategory::Good);
    if (r <= 0.75) return make_fit(FitCategory::Fair);
    if (r <= 1.5) return make_fit(FitCategory::Poor);
    return make_fit(FitCategory::NoFit);
}

FitScore score_fit(const Value& observed, const ReferenceRange& range) {
    if (!observed.is_numeric()) throw NonFiniteObservation("observed value is " + observed.to_string());
    return score_fit(observed.as_number(), range);
}

ConfidenceResult calibrate_confidence(const std::vector<FeatureFinding>& findings,
                                      const std::vector<std::string>& options) {
    if (findings.empty()) throw NoEvidence("no feature findings");
    ConfidenceResult out;
    bool any_fit = false;
    for (const auto& option : options) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& f : findings) {
            auto it = f.fits.find(option);
            if (it == f.fits.end() || !it->second) continue;
            sum += fit_weight(*it->second);
            ++n;
        }
        any_fit = any_fit || n > 0;
        out.raw_scores.push_back(n ? sum / static_cast<double>(n) : 0.0);
    }
    if (!any_fit) throw NoEvidence("no finding carries a fit score");

    double total = 0.0;
    for (double r : out.raw_scores) total += r;
    for (std::size_t i = 0; i < options.size(); ++i) {
        const double c = total > 0.0 ? out.raw_scores[i] / total : 1.0 / static_cast<double>(options.size());
        out.confidences.emplace_back(options[i], c);
    }
    if (total <= 0.0) out.note = "every option scored zero fit weight; confidence is uniform";
    return out;
}

Hypothesis build_hypothesis(const Question& question, std::vector<FeatureFinding> findings,
                            const std::vector<std::pair<std::string, double>>& confidences,
                            std::vector<std::string> notes) {
    Hypothesis h;
    h.case_id = question.case_id;
    for (const auto& option : question.options) {
        auto it = std::find_if(confidences.begin(), confidences.end(),
                               [&](const auto& p) { return p.first == option; });
        if (it == confidences.end()) throw PreconditionViolation("no confidence for option '" + option + "'");
        h.ranked_options.push_back(*it);
    }
    std::stable_sort(h.ranked_options.begin(), h.ranked_options.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    h.findings = std::move(findings);
    h.data_quality_notes = std::move(notes);
    return h;
}

// ---------------------------------------------------------------------------
// observations and findings

namespace {

bool whole_table_avg_of_column(const sql::Expr& e, std::string& column) {
    const auto* agg = e.as<sql::AggCall>();
    if (!agg || agg->fn != sql::AggFn::Avg || agg->distinct || !agg->arg) return false;
    const auto* c = (*agg->arg)->as<sql::ColumnRef>();
    if (!c) return false;
    column = c->name;
    return true;
}

}  // namespace

std::vector<Observation> extract_observations(const ValidatedQuery& query, const ResultTable& result,
                                              const std::string& query_id) {
    const sql::QueryAst& ast = query.ast();
    std::vector<Observation> out;
    const bool plain = !ast.where_clause && ast.group_by.empty();
    const bool grouped = !ast.group_by.empty();
    if (!grouped && result.rows.size() != 1) return out;

    // Output column -> projection, with SELECT * expanded.
    std::vector<const sql::Projection*> proj_of;
    for (const auto& p : ast.projections) {
        if (p.expr.as<sql::Star>()) {
            const std::size_t star_width = result.column_names.size() - (ast.projections.size() - 1);
            for (std::size_t i = 0; i < star_width; ++i) proj_of.push_back(&p);
        } else {
            proj_of.push_back(&p);
        }
    }

    auto is_group_key = [&](const sql::Expr& e) {
        return std::any_of(ast.group_by.begin(), ast.group_by.end(), [&](const sql::Expr& g) { return g == e; });
    };

    for (std::size_t r = 0; r < result.rows.size(); ++r) {
        std::string suffix;
        if (grouped) {
            std::vector<std::string> parts;
            for (std::size_t c = 0; c < proj_of.size(); ++c) {
                if (!proj_of[c]->expr.as<sql::Star>() && is_group_key(proj_of[c]->expr)) {
                    parts.push_back(result.column_names[c] + "=" + result.rows[r][c].to_string());
                }
            }
            suffix = parts.empty() ? "[row=" + std::to_string(r) + "]" : "[";
            for (std::size_t i = 0; i < parts.size(); ++i) suffix += (i ? "," : "") + parts[i];
            if (!parts.empty()) suffix += "]";
        }
        for (std::size_t c = 0; c < proj_of.size(); ++c) {
            const sql::Projection& p = *proj_of[c];
            const Value& v = result.rows[r][c];
            if (v.is_text()) continue;
            if (grouped && !p.expr.as<sql::Star>() && is_group_key(p.expr)) continue;
            std::string key;
            std::string column;
            if (p.expr.as<sql::Star>()) {
                key = ast.from_table + "." + result.column_names[c];
                if (!plain) key = result.column_names[c];
            } else if (plain && p.expr.as<sql::ColumnRef>()) {
                key = ast.from_table + "." + p.expr.as<sql::ColumnRef>()->name;
            } else if (plain && whole_table_avg_of_column(p.expr, column)) {
                key = ast.from_table + "." + column;
            } else {
                key = result.column_names[c];
            }
            out.push_back({key + suffix, v, query_id});
        }
    }
    return out;
}

std::vector<ReferenceRange> merge_ranges(const std::vector<ReferenceRange>& empirical,
                                         const std::vector<ReferenceRange>& llm) {
    std::vector<ReferenceRange> out = empirical;
    for (const auto& r : llm) {
        const bool covered = std::any_of(empirical.begin(), empirical.end(), [&](const ReferenceRange& e) {
            return e.feature_key == r.feature_key && e.option_label == r.option_label;
        });
        if (!covered) out.push_back(r);
    }
    return out;
}

std::vector<FeatureFinding> build_findings(const std::vector<Observation>& observations,
                                           const std::vector<ReferenceRange>& ranges,
                                           const std::vector<std::string>& options) {
    std::vector<FeatureFinding> out;
    std::set<std::string> seen;
    for (const auto& obs : observations) {
        if (seen.count(obs.feature_key)) continue;
        std::map<std::string, const ReferenceRange*> by_option;
        for (const auto& r : ranges) {
            if (r.feature_key != obs.feature_key) continue;
            if (std::find(options.begin(), options.end(), r.option_label) == options.end()) continue;
            auto& slot = by_option[r.option_label];
            // empirical wins if both are present
            if (!slot || (slot->source != RangeSource::Empirical && r.source == RangeSource::Empirical)) slot = &r;
        }
        if (by_option.empty()) continue;
        seen.insert(obs.feature_key);

        FeatureFinding f;
        f.feature_key = obs.feature_key;
        f.observed = obs.observed;
        f.query_id = obs.query_id;
        std::ostringstream rationale;
        const bool usable = obs.observed.is_numeric();
        rationale << "observed " << (obs.observed.is_real() ? format_fixed6(obs.observed.as_real()) : obs.observed.to_string());
        std::vector<std::string> missing;
        for (const auto& option : options) {
            auto it = by_option.find(option);
            if (it == by_option.end()) {
                f.fits[option] = std::nullopt;
                missing.push_back(option);
                continue;
            }
            const ReferenceRange& r = *it->second;
            rationale << "; " << option << " [" << format_fixed6(r.low) << ", " << format_fixed6(r.high) << "] "
                      << range_source_name(r.source);
            if (!usable) {
                f.fits[option] = std::nullopt;
                continue;
            }
            const FitScore s = score_fit(obs.observed, r);
            f.fits[option] = s.category;
            rationale << " -> " << fit_category_name(s.category);
        }
        if (!usable) {
            f.quality_note = "observed value is null; no fit scored";
        } else if (!missing.empty()) {
            std::string note = "no reference range for";
            for (std::size_t i = 0; i < missing.size(); ++i) note += (i ? ", " : " ") + missing[i];
            f.quality_note = note;
        }
        f.rationale = rationale.str();
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace evidencesql
