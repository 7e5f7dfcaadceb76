#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evidencesql/agents.hpp"
#include "evidencesql/feature_store.hpp"
#include "evidencesql/json_util.hpp"
#include "evidencesql/llm_backend.hpp"
#include "evidencesql/sql_exec.hpp"

namespace evidencesql {

inline constexpr const char* kHypothesisSchemaVersion = "evidencesql.hypothesis/1";
inline constexpr double kDefaultQuantile = 0.05;
inline constexpr std::size_t kMinCasesPerOption = 3;

enum class RangeSource { Empirical, LlmKnowledge };
const char* range_source_name(RangeSource s);

/// Feature keys are "table.column" for stored columns or the projection alias
/// for metrics computed inside SQL.
struct ReferenceRange {
    std::string feature_key;
    std::string option_label;
    double low = 0.0;
    double high = 0.0;
    RangeSource source = RangeSource::Empirical;
    std::optional<std::string> unit;

    bool operator==(const ReferenceRange&) const = default;
    Json to_json() const;
    static ReferenceRange from_json(const Json& j);
};

Json ranges_to_json(const std::vector<ReferenceRange>& ranges);
std::vector<ReferenceRange> ranges_from_json(const Json& j);

enum class FitCategory { Excellent, Good, Fair, Poor, NoFit };
const char* fit_category_name(FitCategory c);
FitCategory fit_category_from_name(const std::string& name);
double fit_weight(FitCategory c);

struct FitScore {
    FitCategory category;
    double weight;
    bool operator==(const FitScore&) const = default;
};

FitScore make_fit(FitCategory c);

struct FeatureFinding {
    std::string feature_key;
    Value observed;
    std::string query_id;
    /// One entry per question option; empty when no range exists for it.
    std::map<std::string, std::optional<FitCategory>> fits;
    std::string rationale;
    std::optional<std::string> quality_note;

    bool operator==(const FeatureFinding&) const = default;
    Json to_json() const;
    static FeatureFinding from_json(const Json& j);
};

struct Hypothesis {
    std::string schema_version = kHypothesisSchemaVersion;
    std::string case_id;
    /// Descending confidence, ties in canonical option order.
    std::vector<std::pair<std::string, double>> ranked_options;
    std::vector<FeatureFinding> findings;
    std::vector<std::string> data_quality_notes;

    bool operator==(const Hypothesis&) const = default;
    Json to_json() const;
    static Hypothesis from_json(const Json& j);
    /// Confidence for an option label (0 if absent).
    double confidence(const std::string& label) const;
};

/// What to calibrate: a stored column ("table.column") or a single-value
/// metric computed by a query and named by `name`.
struct FeatureSpec {
    std::string name;
    std::optional<std::string> sql;

    static FeatureSpec column(std::string key) { return {std::move(key), std::nullopt}; }
    static FeatureSpec from_json(const Json& j);
    Json to_json() const;
};

struct RangeCalibration {
    std::vector<ReferenceRange> ranges;
    std::vector<std::string> notes;
};

/// Linear-interpolation quantile of already sorted samples.
double quantile_linear(const std::vector<double>& sorted, double p);

/// Per-case value of a feature: the single row of a global column, the mean
/// of a local column, or the single value a metric query returns.
std::optional<double> case_feature_value(const CaseBundle& bundle, const FeatureSpec& feature,
                                         const SchemaManifest& manifest);

/// Throws MissingLabel (naming the case) or PreconditionViolation for q outside (0, 0.5).
RangeCalibration compute_empirical_ranges(const std::vector<CaseBundle>& training,
                                          const std::vector<FeatureSpec>& features,
                                          const std::vector<std::string>& options, double q,
                                          const SchemaManifest& manifest);

/// Extracts a {"low": x, "high": y} object from a model response.
std::optional<std::pair<double, double>> parse_range_response(const std::string& text);

/// Asks the backend for ranges of every (feature, option) pair. Returns
/// nothing when the backend declines knowledge requests; propagates BackendError.
RangeCalibration fetch_llm_ranges(const std::vector<std::string>& feature_keys,
                                  const std::vector<std::string>& options, LlmBackend& backend,
                                  const AgentSettings& settings, AgentTranscript* transcript = nullptr);

/// Throws NonFiniteObservation for non-finite input.
FitScore score_fit(double observed, const ReferenceRange& range);
FitScore score_fit(const Value& observed, const ReferenceRange& range);

struct ConfidenceResult {
    std::vector<std::pair<std::string, double>> confidences;  // canonical option order
    std::vector<double> raw_scores;
    std::optional<std::string> note;
};

/// Mean fit weight per option, normalized to sum 1 (uniform when all zero).
/// Throws NoEvidence when no finding carries a fit.
ConfidenceResult calibrate_confidence(const std::vector<FeatureFinding>& findings,
                                      const std::vector<std::string>& options);

Hypothesis build_hypothesis(const Question& question, std::vector<FeatureFinding> findings,
                            const std::vector<std::pair<std::string, double>>& confidences,
                            std::vector<std::string> notes);

/// A numeric observation pulled out of a query result.
struct Observation {
    std::string feature_key;
    Value observed;
    std::string query_id;
};

/// Key rule: a bare column (or AVG of a column over the whole table) in a
/// one-row result is keyed "table.column"; any other projection by its alias
/// or rendered text, with "[group=value]" suffixes for grouped rows.
std::vector<Observation> extract_observations(const ValidatedQuery& query, const ResultTable& result,
                                              const std::string& query_id);

/// Empirical ranges win over model ranges for the same (feature, option).
std::vector<ReferenceRange> merge_ranges(const std::vector<ReferenceRange>& empirical,
                                         const std::vector<ReferenceRange>& llm);

/// One finding per observed feature with at least one range; observations
/// without ranges are skipped.
std::vector<FeatureFinding> build_findings(const std::vector<Observation>& observations,
                                           const std::vector<ReferenceRange>& ranges,
                                           const std::vector<std::string>& options);

}  // namespace evidencesql
