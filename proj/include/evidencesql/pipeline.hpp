#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evidencesql/agents.hpp"
#include "evidencesql/feature_store.hpp"
#include "evidencesql/fusion.hpp"
#include "evidencesql/knowledge.hpp"
#include "evidencesql/llm_backend.hpp"
#include "evidencesql/report.hpp"

namespace evidencesql {

enum class Mode { Full, SqlOnly, CnnOnly };
const char* mode_name(Mode m);
/// Throws ConfigError for unknown names.
Mode mode_from_name(const std::string& name);

struct RunConfig {
    std::filesystem::path manifest_path;
    std::optional<std::filesystem::path> ranges_path;
    BackendConfig backend;
    double alpha = kDefaultAlpha;
    std::filesystem::path out_dir = "out";
    Mode mode = Mode::Full;
    int workers = 1;
    double quantile = kDefaultQuantile;

    /// Throws ConfigError.
    void validate() const;
    Json to_json() const;
    /// Reads the optional config file; relative paths resolve against `base`.
    void apply_json(const Json& j, const std::filesystem::path& base);
    AgentSettings agent_settings() const;
};

struct CaseOutcome {
    Question question;
    std::optional<Hypothesis> hypothesis;
    FusedDecision decision;
    ReportInputs report;
    std::vector<AgentTranscript> transcripts;

    Json transcripts_json() const;
};

/// ingest (already done) -> agents -> guard -> exec -> knowledge -> fusion.
/// Throws ConfigError when the mode needs CNN probabilities the case lacks.
CaseOutcome run_case(const CaseBundle& bundle, Question question, const SchemaManifest& manifest,
                     const std::vector<ReferenceRange>& ranges, LlmBackend& backend, const RunConfig& config);

/// Writes reports/<case>.{json,md} and transcripts/<case>.json atomically.
void write_case_outputs(const CaseOutcome& outcome, const std::filesystem::path& out_dir);

/// run.json: the effective configuration and its FNV-1a fingerprint.
void write_run_record(const std::filesystem::path& out_dir, const RunConfig& config, const std::string& command);

std::vector<Question> load_questions(const std::filesystem::path& path);
/// Case-specific question first, then the shared ("*") one.
Question question_for_case(const std::vector<Question>& questions, const std::string& case_id);

struct CaseFailure {
    std::string case_id;
    std::string kind;
    std::string message;
};

struct EvalSummary {
    std::string mode;
    std::size_t n_cases = 0;
    std::size_t n_correct = 0;
    double accuracy = 0.0;
    std::size_t n_flagged = 0;
    std::map<std::string, double> per_class_accuracy;
    std::vector<CaseFailure> failures;

    Json to_json() const;
};

/// Evaluates every case directory under `dataset_dir`; failures are counted
/// and listed, never fatal. Writes per-case outputs and summary.json.
EvalSummary batch_eval(const RunConfig& config, const SchemaManifest& manifest,
                       const std::vector<ReferenceRange>& ranges, const std::filesystem::path& dataset_dir,
                       const std::vector<Question>& questions, LlmBackend& backend);

/// Options default to the sorted distinct training labels.
RangeCalibration calibrate_ranges(const SchemaManifest& manifest, const std::filesystem::path& training_dir,
                                  const std::vector<FeatureSpec>& features,
                                  std::optional<std::vector<std::string>> options, double q);

std::vector<FeatureSpec> load_feature_list(const std::filesystem::path& path);
std::vector<ReferenceRange> load_ranges(const std::filesystem::path& path);

}  // namespace evidencesql
