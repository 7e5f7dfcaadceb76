#include "evidencesql/agents.hpp"

#include <algorithm>
#include <functional>
#include <regex>
#include <set>
#include <sstream>

#include "evidencesql/errors.hpp"
#include "evidencesql/sql_parser.hpp"

namespace evidencesql {

void Question::validate() const {
    if (options.size() < 2) throw PreconditionViolation("a question needs at least two options");
    std::set<std::string> seen;
    for (const auto& o : options) {
        if (o.empty()) throw PreconditionViolation("option labels must be nonempty");
        if (!seen.insert(o).second) throw PreconditionViolation("duplicate option '" + o + "'");
    }
}

Json Question::to_json() const { return {{"case_id", case_id}, {"prompt", prompt_text}, {"options", options}}; }

Question Question::from_json(const Json& j) {
    Question q;
    try {
        q.case_id = j.value("case_id", "*");
        q.prompt_text = j.at("prompt").get<std::string>();
        q.options = j.at("options").get<std::vector<std::string>>();
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed question: ") + e.what());
    }
    q.validate();
    return q;
}

Json ReasoningPlan::to_json() const {
    Json targets_json = Json::array();
    for (const auto& t : targets) {
        targets_json.push_back({{"table", t.table}, {"column", t.column}, {"rationale", t.rationale}});
    }
    return {{"focus", focus == PlanFocus::Global ? "global" : "local"}, {"target_features", targets_json}};
}

const char* agent_kind_name(AgentKind k) {
    switch (k) {
        case AgentKind::Global: return "global";
        case AgentKind::Local: return "local";
        case AgentKind::Knowledge: return "knowledge";
        case AgentKind::Report: return "report";
    }
    return "?";
}

Json Exchange::to_json() const {
    Json outcomes = Json::array();
    for (const auto& o : guard_outcomes) {
        if (const auto* vq = std::get_if<ValidatedQuery>(&o)) {
            Json j = vq->to_json();
            j["status"] = "validated";
            outcomes.push_back(std::move(j));
        } else {
            Json j = std::get<GuardRejection>(o).to_json();
            j["status"] = "rejected";
            outcomes.push_back(std::move(j));
        }
    }
    return {{"system_prompt", system_prompt},
            {"user_prompt", user_prompt},
            {"raw_response", raw_response},
            {"extracted_queries", extracted_queries},
            {"guard_outcomes", outcomes},
            {"notes", notes}};
}

Json AgentTranscript::to_json() const {
    Json ex = Json::array();
    for (const auto& e : exchanges_) ex.push_back(e.to_json());
    return {{"agent", agent_kind_name(agent_)}, {"exchanges", ex}};
}

std::vector<std::string> extract_sql(std::string_view raw) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = raw.find("```", pos)) != std::string_view::npos) {
        const std::size_t eol = raw.find('\n', pos + 3);
        if (eol == std::string_view::npos) break;
        const std::string tag = sql::to_lower(raw.substr(pos + 3, eol - pos - 3));
        const std::size_t close = raw.find("```", eol + 1);
        if (close == std::string_view::npos) break;
        std::string_view body = raw.substr(eol + 1, close - eol - 1);
        pos = close + 3;

        std::string trimmed_tag;
        for (char c : tag) {
            if (!std::isspace(static_cast<unsigned char>(c))) trimmed_tag += c;
        }
        while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
        while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
        if (body.empty()) continue;

        bool take = trimmed_tag == "sql";
        if (trimmed_tag.empty()) {
            std::size_t n = 0;
            while (n < body.size() && std::isalpha(static_cast<unsigned char>(body[n]))) ++n;
            take = sql::to_upper(body.substr(0, n)) == "SELECT";
        }
        if (take) out.emplace_back(body);
    }
    return out;
}

namespace {

const char* kGrammarNotes =
    "SQL rules: one read-only SELECT per fenced block, from a single table. Allowed: WHERE, GROUP BY, HAVING, "
    "ORDER BY (ASC/DESC), LIMIT; operators + - * / = != < <= > >= AND OR NOT, IN (literal list), "
    "BETWEEN low AND high, IS [NOT] NULL; functions SQRT, ABS, ROUND and aggregates COUNT, SUM, AVG, MIN, MAX, "
    "STDDEV (sample). Not allowed: JOIN, subqueries, WITH, window functions, comments, semicolons. Strings use "
    "single quotes. Alias every computed projection with AS.";

const char* kFenceNote = "Put each SQL query in its own ```sql fenced block.";

std::string level_list(const SchemaManifest& m, bool global) {
    std::string out;
    for (const auto& t : m.tables()) {
        if (t.is_global() != global) continue;
        if (!out.empty()) out += ", ";
        out += t.name;
    }
    return out;
}

std::string options_block(const Question& q) {
    std::ostringstream out;
    for (std::size_t i = 0; i < q.options.size(); ++i) out << (i + 1) << ". " << q.options[i] << '\n';
    return out.str();
}

std::string retry_note(int attempt, int total) {
    return "\n\nAttempt " + std::to_string(attempt + 1) + " of " + std::to_string(total) +
           ": the previous response contained no valid SQL query in a ```sql fenced block.";
}

const std::regex& plan_line_regex() {
    static const std::regex re(R"(^\s*[-*]\s*([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*:\s*(.*?)\s*$)");
    return re;
}

// Plan lines of the form "- table.column: rationale".
std::vector<PlanTarget> parse_plan(const std::string& raw, const SchemaManifest& manifest, std::vector<std::string>& notes) {
    std::vector<PlanTarget> out;
    std::istringstream in(raw);
    std::string line;
    bool in_fence = false;
    while (std::getline(in, line)) {
        if (line.rfind("```", 0) == 0) {
            in_fence = !in_fence;
            continue;
        }
        std::smatch m;
        if (in_fence || !std::regex_match(line, m, plan_line_regex())) continue;
        PlanTarget t{m[1].str(), m[2].str(), m[3].str()};
        const TableSchema* table = manifest.find_table(t.table);
        if (!table || !table->find_column(t.column)) {
            notes.push_back("plan target " + t.table + "." + t.column + " dropped: not in the manifest");
            continue;
        }
        if (!table->is_global()) {
            notes.push_back("plan target " + t.table + "." + t.column + " dropped: not a global-level table");
            continue;
        }
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
    }
    return out;
}

void collect_columns(const sql::Expr& e, std::vector<std::string>& out) {
    if (const auto* c = e.as<sql::ColumnRef>()) {
        if (std::find(out.begin(), out.end(), c->name) == out.end()) out.push_back(c->name);
        return;
    }
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, sql::UnaryExpr>) {
                collect_columns(*n.operand, out);
            } else if constexpr (std::is_same_v<T, sql::BinaryExpr>) {
                collect_columns(*n.lhs, out);
                collect_columns(*n.rhs, out);
            } else if constexpr (std::is_same_v<T, sql::InExpr> || std::is_same_v<T, sql::BetweenExpr>) {
                collect_columns(*n.operand, out);
            } else if constexpr (std::is_same_v<T, sql::ScalarCall>) {
                for (const auto& a : n.args) collect_columns(a, out);
            } else if constexpr (std::is_same_v<T, sql::AggCall>) {
                if (n.arg) collect_columns(**n.arg, out);
            }
        },
        e.node);
}

std::vector<PlanTarget> targets_from_queries(const std::vector<ValidatedQuery>& qs, const SchemaManifest& manifest) {
    std::vector<PlanTarget> out;
    for (const auto& q : qs) {
        const TableSchema* t = manifest.find_table(q.ast().from_table);
        std::vector<std::string> cols;
        for (const auto& p : q.ast().projections) {
            if (p.expr.as<sql::Star>()) {
                for (const auto& c : t->columns) cols.push_back(c.name);
            } else {
                collect_columns(p.expr, cols);
            }
        }
        for (const auto& c : cols) {
            PlanTarget target{t->name, c, "referenced by a generated query"};
            if (std::find(out.begin(), out.end(), target) == out.end()) out.push_back(std::move(target));
        }
    }
    return out;
}

struct AttemptResult {
    std::vector<std::string> raw_sql;
    std::vector<ValidatedQuery> queries;
    bool extracted_any = false;
};

// Shared retry loop: call, extract, guard, enforce the level rule.
template <class Transcript>
AttemptResult run_attempts(const std::string& system_prompt, const std::string& user_prompt, LlmTask task,
                           SourceAgent source, bool want_global, const SchemaManifest& manifest, LlmBackend& backend,
                           const AgentSettings& settings, Transcript& transcript,
                           const std::function<void(const std::string&, Exchange&)>& on_response) {
    AttemptResult result;
    const int total = settings.max_retries + 1;
    for (int attempt = 0; attempt < total; ++attempt) {
        Exchange ex;
        ex.system_prompt = system_prompt;
        ex.user_prompt = attempt == 0 ? user_prompt : user_prompt + retry_note(attempt, total);
        ex.raw_response = backend.complete(
            LlmRequest{ex.system_prompt, ex.user_prompt, settings.temperature, settings.timeout_seconds, task});
        if (on_response) on_response(ex.raw_response, ex);
        ex.extracted_queries = extract_sql(ex.raw_response);
        if (!ex.extracted_queries.empty()) result.extracted_any = true;

        std::vector<std::string> raw_ok;
        std::vector<ValidatedQuery> ok;
        for (const auto& raw : ex.extracted_queries) {
            GuardOutcome outcome = validate_pipeline(raw, manifest, source);
            if (auto* vq = std::get_if<ValidatedQuery>(&outcome)) {
                const TableSchema* t = manifest.find_table(vq->ast().from_table);
                if (t->is_global() != want_global) {
                    const std::string reason = std::string(want_global ? "global" : "local") +
                                               " agent query targets " + level_name(t->level) + " table " + t->name;
                    ex.notes.push_back("dropped: " + reason);
                    outcome = GuardRejection{GuardStage::Schema, reason, std::nullopt, {}};
                } else {
                    raw_ok.push_back(raw);
                    ok.push_back(*vq);
                }
            }
            ex.guard_outcomes.push_back(std::move(outcome));
        }
        if (ex.extracted_queries.empty()) ex.notes.push_back("no SQL extracted from the response");
        transcript.append(std::move(ex));
        if (!ok.empty()) {
            result.raw_sql = std::move(raw_ok);
            result.queries = std::move(ok);
            break;
        }
    }
    return result;
}

}  // namespace

std::string render_data_dictionary(const SchemaManifest& manifest) {
    std::ostringstream out;
    out << "schema version " << manifest.version() << '\n';
    for (const auto& t : manifest.tables()) {
        out << "table " << t.name << " (" << level_name(t.level) << (t.is_global() ? ", one row per case" : "")
            << ")\n";
        for (const auto& c : t.columns) {
            out << "  " << c.name << ' ' << dtype_name(c.dtype);
            if (c.unit) out << " [" << *c.unit << ']';
            if (c.categorical_domain) {
                out << " one of {";
                for (std::size_t i = 0; i < c.categorical_domain->size(); ++i) {
                    out << (i ? ", " : "") << (*c.categorical_domain)[i];
                }
                out << '}';
            }
            out << '\n';
        }
    }
    return out.str();
}

std::string global_system_prompt(const SchemaManifest& manifest) {
    return "You are the global feature reasoning agent for a pathology question. Choose the macro-scale features "
           "that best separate the answer options and query them. Global tables: " +
           level_list(manifest, true) + ".\n\nData dictionary:\n" + render_data_dictionary(manifest) + '\n' +
           kGrammarNotes + '\n' + kFenceNote;
}

std::string local_system_prompt(const SchemaManifest& manifest) {
    return "You are the local feature reasoning agent. Following the global plan, write queries over the cellular "
           "and architectural tables that test it: use WHERE for cell-type specificity and GROUP BY for "
           "cross-population comparisons. Local tables: " +
           level_list(manifest, false) + ".\n\nData dictionary:\n" + render_data_dictionary(manifest) + '\n' +
           kGrammarNotes + '\n' + kFenceNote;
}

std::string global_user_prompt(const Question& q) {
    return "Question: " + q.prompt_text + "\nOptions:\n" + options_block(q) +
           "\nList the relevant global features as lines \"- table.column: rationale\", then give SQL queries over "
           "global tables only.";
}

std::string local_user_prompt(const Question& q, const ReasoningPlan& plan,
                              const std::vector<ResultTable>& global_results) {
    std::ostringstream out;
    out << "Question: " << q.prompt_text << "\nOptions:\n" << options_block(q) << "\nGlobal plan:\n";
    for (const auto& t : plan.targets) out << "- " << t.table << '.' << t.column << ": " << t.rationale << '\n';
    if (!global_results.empty()) {
        out << "\nGlobal results:\n";
        for (const auto& r : global_results) out << r.query_text << '\n' << result_to_text(r) << '\n';
    }
    out << "\nWrite SQL queries over local tables only.";
    return out.str();
}

GlobalStage plan_global(const Question& question, const SchemaManifest& manifest, LlmBackend& backend,
                        const AgentSettings& settings) {
    if (manifest.tables_at(Level::Global).empty()) {
        throw PreconditionViolation("the manifest has no global-level table");
    }
    GlobalStage stage;
    std::vector<PlanTarget> plan_targets;
    auto on_response = [&](const std::string& raw, Exchange& ex) {
        auto targets = parse_plan(raw, manifest, ex.notes);
        if (!targets.empty()) plan_targets = std::move(targets);
    };
    AttemptResult r = run_attempts(global_system_prompt(manifest), global_user_prompt(question), LlmTask::GlobalPlan,
                                   SourceAgent::Global, true, manifest, backend, settings, stage.transcript,
                                   on_response);
    if (!r.extracted_any && plan_targets.empty()) {
        throw EmptyGeneration("global agent produced no plan or SQL after " +
                              std::to_string(settings.max_retries + 1) + " attempts");
    }
    stage.plan.focus = PlanFocus::Global;
    stage.plan.targets = plan_targets.empty() ? targets_from_queries(r.queries, manifest) : std::move(plan_targets);
    stage.raw_sql = std::move(r.raw_sql);
    stage.queries = std::move(r.queries);
    return stage;
}

LocalStage plan_local(const Question& question, const ReasoningPlan& plan,
                      const std::vector<ResultTable>& global_results, const SchemaManifest& manifest,
                      LlmBackend& backend, const AgentSettings& settings) {
    if (plan.focus != PlanFocus::Global) throw PreconditionViolation("the local agent consumes a global plan");
    LocalStage stage;
    AttemptResult r = run_attempts(local_system_prompt(manifest), local_user_prompt(question, plan, global_results),
                                   LlmTask::LocalQueries, SourceAgent::Local, false, manifest, backend, settings,
                                   stage.transcript, {});
    if (!r.extracted_any) {
        throw EmptyGeneration("local agent produced no SQL after " + std::to_string(settings.max_retries + 1) +
                              " attempts");
    }
    stage.raw_sql = std::move(r.raw_sql);
    stage.queries = std::move(r.queries);
    return stage;
}

}  // namespace evidencesql
