#include "evidencesql/fusion.hpp"

#include <cmath>
#include <set>

#include "evidencesql/errors.hpp"

namespace evidencesql {

void CnnOutput::validate(const std::vector<std::string>& options) const {
    std::set<std::string> have, want(options.begin(), options.end());
    for (const auto& [label, p] : probs) {
        have.insert(label);
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw OptionMismatch("CNN probability for '" + label + "' is outside [0, 1]");
        }
    }
    if (have != want || probs.size() != options.size()) {
        throw OptionMismatch("CNN labels do not match the question options");
    }
    double total = 0.0;
    for (const auto& kv : probs) total += kv.second;
    if (std::fabs(total - 1.0) > 1e-6) throw OptionMismatch("CNN probabilities do not sum to 1");
}

double CnnOutput::prob(const std::string& label) const {
    for (const auto& [l, p] : probs) {
        if (l == label) return p;
    }
    throw OptionMismatch("CNN output has no probability for '" + label + "'");
}

Json FusedDecision::to_json() const {
    Json jf = Json::object();
    for (const auto& [label, p] : fused) jf[label] = p;
    return {{"label", label},
            {"fused", jf},
            {"alpha", alpha},
            {"review_flag", review_flag},
            {"branch_labels", {{"cnn", cnn_label}, {"sql", sql_label}}},
            {"mode", mode}};
}

std::size_t argmax_canonical(const std::vector<double>& xs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        if (xs[i] > xs[best]) best = i;
    }
    return best;
}

namespace {

std::vector<double> sql_vector(const Question& q, const Hypothesis& h) {
    std::set<std::string> have;
    for (const auto& kv : h.ranked_options) have.insert(kv.first);
    if (have != std::set<std::string>(q.options.begin(), q.options.end()) || h.ranked_options.size() != q.options.size()) {
        throw OptionMismatch("hypothesis options do not match the question options");
    }
    std::vector<double> out;
    for (const auto& o : q.options) out.push_back(h.confidence(o));
    return out;
}

}  // namespace

FusedDecision fuse(const Question& question, const CnnOutput& cnn, const Hypothesis& hypothesis, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionViolation("alpha must lie in [0, 1]");
    cnn.validate(question.options);
    const std::vector<double> sql = sql_vector(question, hypothesis);
    std::vector<double> c, fused;
    for (std::size_t i = 0; i < question.options.size(); ++i) {
        c.push_back(cnn.prob(question.options[i]));
        fused.push_back(alpha * c[i] + (1.0 - alpha) * sql[i]);
    }
    FusedDecision d;
    d.alpha = alpha;
    for (std::size_t i = 0; i < fused.size(); ++i) d.fused.emplace_back(question.options[i], fused[i]);
    d.label = question.options[argmax_canonical(fused)];
    d.cnn_label = question.options[argmax_canonical(c)];
    d.sql_label = question.options[argmax_canonical(sql)];
    d.review_flag = d.cnn_label != d.sql_label;
    d.mode = "full";
    return d;
}

FusedDecision fuse_sql_only(const Question& question, const Hypothesis& hypothesis) {
    const std::vector<double> sql = sql_vector(question, hypothesis);
    FusedDecision d;
    d.alpha = 0.0;
    for (std::size_t i = 0; i < sql.size(); ++i) d.fused.emplace_back(question.options[i], sql[i]);
    d.label = question.options[argmax_canonical(sql)];
    d.cnn_label = d.label;
    d.sql_label = d.label;
    d.review_flag = false;
    d.mode = "sql_only";
    return d;
}

FusedDecision fuse_cnn_only(const Question& question, const CnnOutput& cnn) {
    cnn.validate(question.options);
    std::vector<double> c;
    FusedDecision d;
    d.alpha = 1.0;
    for (const auto& o : question.options) {
        c.push_back(cnn.prob(o));
        d.fused.emplace_back(o, c.back());
    }
    d.label = question.options[argmax_canonical(c)];
    d.cnn_label = d.label;
    d.sql_label = d.label;
    d.review_flag = false;
    d.mode = "cnn_only";
    return d;
}

}  // namespace evidencesql
