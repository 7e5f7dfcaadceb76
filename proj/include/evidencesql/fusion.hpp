#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evidencesql/agents.hpp"
#include "evidencesql/json_util.hpp"
#include "evidencesql/knowledge.hpp"

namespace evidencesql {

inline constexpr double kDefaultAlpha = 0.7;

/// Classifier probabilities keyed by option label.
struct CnnOutput {
    std::vector<std::pair<std::string, double>> probs;

    /// Throws OptionMismatch unless the labels match the options and the
    /// vector is a probability distribution (each in [0,1], sum 1 within 1e-6).
    void validate(const std::vector<std::string>& options) const;
    double prob(const std::string& label) const;
};

struct FusedDecision {
    std::string label;
    /// Canonical option order.
    std::vector<std::pair<std::string, double>> fused;
    double alpha = kDefaultAlpha;
    bool review_flag = false;
    std::string cnn_label;
    std::string sql_label;
    /// "full", "sql_only" or "cnn_only".
    std::string mode = "full";

    bool operator==(const FusedDecision&) const = default;
    Json to_json() const;
};

/// First index holding the maximum; earlier options win ties.
std::size_t argmax_canonical(const std::vector<double>& xs);

/// fused[o] = alpha * cnn[o] + (1 - alpha) * sql[o].
FusedDecision fuse(const Question& question, const CnnOutput& cnn, const Hypothesis& hypothesis, double alpha);
FusedDecision fuse_sql_only(const Question& question, const Hypothesis& hypothesis);
FusedDecision fuse_cnn_only(const Question& question, const CnnOutput& cnn);

}  // namespace evidencesql
