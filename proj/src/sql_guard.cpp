#include "evidencesql/sql_guard.hpp"

#include <algorithm>
#include <cctype>

#include "evidencesql/errors.hpp"
#include "evidencesql/sql_parser.hpp"

namespace evidencesql {

using namespace sql;

const char* source_agent_name(SourceAgent s) {
    switch (s) {
        case SourceAgent::Global: return "global";
        case SourceAgent::Local: return "local";
        case SourceAgent::Manual: return "manual";
    }
    return "?";
}

const char* repair_kind_name(RepairKind k) {
    switch (k) {
        case RepairKind::KeywordFix: return "keyword_fix";
        case RepairKind::IdentifierFix: return "identifier_fix";
        case RepairKind::QuoteFix: return "quote_fix";
        case RepairKind::ClauseDrop: return "clause_drop";
    }
    return "?";
}

const char* guard_stage_name(GuardStage s) {
    switch (s) {
        case GuardStage::Sanitize: return "sanitize";
        case GuardStage::Parse: return "parse";
        case GuardStage::Schema: return "schema";
        case GuardStage::RepairExhausted: return "repair_exhausted";
    }
    return "?";
}

const char* violation_kind_name(ViolationKind k) {
    switch (k) {
        case ViolationKind::UnknownTable: return "UnknownTable";
        case ViolationKind::UnknownColumn: return "UnknownColumn";
        case ViolationKind::TypeError: return "TypeError";
        case ViolationKind::GroupingError: return "GroupingError";
        case ViolationKind::Unsupported: return "Unsupported";
    }
    return "?";
}

Json GuardRejection::to_json() const {
    Json j = {{"stage", guard_stage_name(stage)}, {"reason", reason}, {"residual", residual}};
    j["position"] = position ? Json(*position) : Json(nullptr);
    return j;
}

Json repair_action_to_json(const RepairAction& a) {
    return {{"kind", repair_kind_name(a.kind)}, {"before", a.before}, {"after", a.after},
            {"edit_distance", a.edit_distance}};
}

ValidatedQuery::ValidatedQuery(QueryAst ast, std::vector<RepairAction> log, SourceAgent source)
    : ast_(std::move(ast)), canonical_text_(render(ast_)), repair_log_(std::move(log)), source_(source) {}

Json ValidatedQuery::to_json() const {
    Json log = Json::array();
    for (const auto& a : repair_log_) log.push_back(repair_action_to_json(a));
    return {{"canonical_text", canonical_text_}, {"repair_log", log}, {"source_agent", source_agent_name(source_)}};
}

struct GuardAccess {
    static ValidatedQuery make(QueryAst ast, std::vector<RepairAction> log, SourceAgent source) {
        return ValidatedQuery(std::move(ast), std::move(log), source);
    }
};

std::size_t levenshtein(std::string_view a, std::string_view b) {
    if (a.size() > b.size()) std::swap(a, b);
    std::vector<std::size_t> row(a.size() + 1);
    for (std::size_t i = 0; i <= a.size(); ++i) row[i] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
        std::size_t diag = row[0];
        row[0] = j;
        for (std::size_t i = 1; i <= a.size(); ++i) {
            const std::size_t up = row[i];
            row[i] = a[i - 1] == b[j - 1] ? diag : 1 + std::min({diag, row[i - 1], row[i]});
            diag = up;
        }
    }
    return row[a.size()];
}

// ---------------------------------------------------------------------------
// sanitize

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

std::string first_word_upper(std::string_view line) {
    line = trim(line);
    std::size_t n = 0;
    while (n < line.size() && (std::isalnum(static_cast<unsigned char>(line[n])) || line[n] == '_')) ++n;
    return to_upper(line.substr(0, n));
}

bool is_forbidden_head(const std::string& upper) {
    const auto& heads = forbidden_statement_heads();
    return std::find(heads.begin(), heads.end(), upper) != heads.end();
}

bool looks_like_statement_head(const std::string& upper) {
    if (upper.empty()) return false;
    if (upper == "SELECT" || upper == "WITH" || is_forbidden_head(upper)) return true;
    return upper.size() >= 4 && levenshtein(upper, "SELECT") <= kMaxRepairDistance;
}

std::string_view strip_fence(std::string_view s) {
    const auto open = s.find("```");
    if (open == std::string_view::npos) return s;
    std::string_view rest = s.substr(open + 3);
    const auto eol = rest.find('\n');
    std::string_view tag = eol == std::string_view::npos ? rest : rest.substr(0, eol);
    const bool tag_only = std::all_of(tag.begin(), tag.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == ' ' || c == '\r';
    }) && first_word_upper(tag) != "SELECT";
    if (tag_only && eol != std::string_view::npos) rest = rest.substr(eol + 1);
    const auto close = rest.find("```");
    return close == std::string_view::npos ? rest : rest.substr(0, close);
}

std::string_view strip_prose(std::string_view s) {
    // Locate the first line that starts like a statement and keep the block
    // up to the next blank line.
    std::size_t line_start = 0;
    std::optional<std::size_t> begin;
    while (line_start <= s.size()) {
        std::size_t eol = s.find('\n', line_start);
        if (eol == std::string_view::npos) eol = s.size();
        if (looks_like_statement_head(first_word_upper(s.substr(line_start, eol - line_start)))) {
            begin = line_start;
            break;
        }
        line_start = eol + 1;
    }
    if (!begin) {
        // Fall back to the first standalone SELECT anywhere ("Query: SELECT ...").
        const std::string upper = to_upper(s);
        std::size_t pos = 0;
        while ((pos = upper.find("SELECT", pos)) != std::string::npos) {
            const bool left_ok = pos == 0 || !(std::isalnum(static_cast<unsigned char>(upper[pos - 1])) ||
                                               upper[pos - 1] == '_');
            const bool right_ok = pos + 6 >= upper.size() ||
                                  !(std::isalnum(static_cast<unsigned char>(upper[pos + 6])) || upper[pos + 6] == '_');
            if (left_ok && right_ok) {
                begin = pos;
                break;
            }
            pos += 6;
        }
    }
    if (!begin) return s;
    std::string_view body = s.substr(*begin);
    std::size_t blank = std::string_view::npos;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '\n') continue;
        std::size_t j = i + 1;
        while (j < body.size() && (body[j] == ' ' || body[j] == '\t' || body[j] == '\r')) ++j;
        if (j < body.size() && body[j] == '\n') {
            blank = i;
            break;
        }
    }
    return blank == std::string_view::npos ? body : body.substr(0, blank);
}

struct ScanHit {
    std::string what;
    std::size_t offset;
};

// Quote-aware scan: statement heads, comment tokens and separators outside
// string literals.
void scan_text(std::string_view s, std::optional<ScanHit>& forbidden, std::optional<ScanHit>& comment,
               std::optional<ScanHit>& separator) {
    bool at_head = true;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (c == '\'' || c == '"' || c == '`') {
            const char q = c;
            ++i;
            while (i < s.size()) {
                if (s[i] == q) {
                    if (i + 1 < s.size() && s[i + 1] == q) {
                        i += 2;
                        continue;
                    }
                    break;
                }
                ++i;
            }
            ++i;
            at_head = false;
            continue;
        }
        if ((c == '-' && i + 1 < s.size() && s[i + 1] == '-') || (c == '/' && i + 1 < s.size() && s[i + 1] == '*') ||
            (c == '*' && i + 1 < s.size() && s[i + 1] == '/') || c == '#') {
            if (!comment) comment = ScanHit{"comment token", i};
            i += c == '#' ? 1 : 2;
            continue;
        }
        if (c == ';') {
            if (!separator) separator = ScanHit{"statement separator", i};
            at_head = true;
            ++i;
            continue;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
            const std::string word = to_upper(s.substr(i, j - i));
            if (at_head && is_forbidden_head(word) && !forbidden) forbidden = ScanHit{"forbidden keyword " + word, i};
            at_head = false;
            i = j;
            continue;
        }
        if (!std::isspace(static_cast<unsigned char>(c)) && c != '(') at_head = false;
        ++i;
    }
}

}  // namespace

std::variant<std::string, GuardRejection> sanitize(std::string_view raw) {
    std::string_view s = trim(raw);
    if (s.find("```") != std::string_view::npos) {
        s = strip_fence(s);
    } else {
        s = strip_prose(s);
    }
    s = trim(s);
    if (!s.empty() && s.back() == ';') s = trim(s.substr(0, s.size() - 1));
    if (s.empty()) return GuardRejection{GuardStage::Sanitize, "empty query", std::nullopt, {}};

    std::optional<ScanHit> forbidden, comment, separator;
    scan_text(s, forbidden, comment, separator);
    const std::size_t base = static_cast<std::size_t>(s.data() - raw.data());
    for (const auto* hit : {&forbidden, &comment, &separator}) {
        if (*hit) return GuardRejection{GuardStage::Sanitize, (*hit)->what, base + (*hit)->offset, {}};
    }
    return std::string(s);
}

// ---------------------------------------------------------------------------
// check_schema

namespace {

enum class SqlType { Int, Real, Text, Bool, Null, Unknown };

bool numeric(SqlType t) { return t == SqlType::Int || t == SqlType::Real || t == SqlType::Null || t == SqlType::Unknown; }
bool valueish(SqlType t) { return t != SqlType::Bool; }
bool boolish(SqlType t) { return t == SqlType::Bool || t == SqlType::Null || t == SqlType::Unknown; }

SqlType literal_type(const Value& v) {
    if (v.is_null()) return SqlType::Null;
    if (v.is_int()) return SqlType::Int;
    if (v.is_real()) return SqlType::Real;
    return SqlType::Text;
}

bool compatible(SqlType a, SqlType b) {
    if (a == SqlType::Null || b == SqlType::Null || a == SqlType::Unknown || b == SqlType::Unknown) return true;
    if (a == SqlType::Bool || b == SqlType::Bool) return false;
    const bool an = a == SqlType::Int || a == SqlType::Real;
    const bool bn = b == SqlType::Int || b == SqlType::Real;
    return an == bn;
}

class SchemaChecker {
public:
    SchemaChecker(const QueryAst& q, const TableSchema* table) : q_(q), table_(table) {}

    std::vector<SchemaViolation> run() {
        const bool grouped = is_aggregate_query(q_);
        for (const auto& p : q_.projections) {
            if (p.expr.as<Star>()) {
                if (grouped) grouping("SELECT * cannot be combined with aggregation");
                continue;
            }
            const SqlType t = infer(p.expr, false);
            if (t == SqlType::Bool) type_error("boolean expression " + render_expr(p.expr) + " cannot be projected");
            if (grouped) check_grouped(p.expr, false);
        }
        if (q_.where_clause) {
            if (contains_aggregate(*q_.where_clause)) grouping("aggregate functions are not allowed in WHERE");
            const SqlType t = infer(*q_.where_clause, false);
            if (!boolish(t)) type_error("WHERE clause must be a boolean condition");
        }
        for (const auto& g : q_.group_by) {
            if (contains_aggregate(g)) grouping("aggregate functions are not allowed in GROUP BY");
            const SqlType t = infer(g, false);
            if (t == SqlType::Bool) type_error("cannot group by a boolean expression");
        }
        if (q_.having) {
            const SqlType t = infer(*q_.having, false);
            if (!boolish(t)) type_error("HAVING clause must be a boolean condition");
            check_grouped(*q_.having, false);
        }
        for (const auto& o : q_.order_by) {
            if (const auto* lit = o.expr.as<Literal>(); lit && lit->value.is_int()) {
                out_.push_back({ViolationKind::Unsupported, "", "positional ORDER BY is not supported"});
                continue;
            }
            const SqlType t = infer(o.expr, true);
            if (t == SqlType::Bool) type_error("cannot order by a boolean expression");
            if (grouped) check_grouped(o.expr, true);
        }
        return std::move(out_);
    }

private:
    const QueryAst& q_;
    const TableSchema* table_;
    std::vector<SchemaViolation> out_;

    void type_error(std::string msg) { out_.push_back({ViolationKind::TypeError, "", std::move(msg)}); }
    void grouping(std::string msg) { out_.push_back({ViolationKind::GroupingError, "", std::move(msg)}); }

    const Projection* alias_target(const std::string& name) const {
        for (const auto& p : q_.projections) {
            if (p.alias && *p.alias == name) return &p;
        }
        return nullptr;
    }

    const ColumnSchema* column(const std::string& name) const {
        return table_ ? table_->find_column(name) : nullptr;
    }

    bool is_categorical(const Expr& e) const {
        if (const auto* c = e.as<ColumnRef>()) {
            const ColumnSchema* col = column(c->name);
            return col && col->categorical_domain.has_value();
        }
        return false;
    }

    // Text literals compared to a categorical column must name a domain member.
    void check_domain(const Expr& col, const Value& v) {
        const auto* c = col.as<ColumnRef>();
        if (!c || !v.is_text()) return;
        const ColumnSchema* schema = column(c->name);
        if (!schema || !schema->categorical_domain) return;
        const auto& domain = *schema->categorical_domain;
        if (std::find(domain.begin(), domain.end(), v.as_text()) == domain.end()) {
            type_error(render_literal(v) + " is not in the domain of categorical column " + c->name);
        }
    }

    SqlType infer(const Expr& e, bool order_ctx) {
        return std::visit([&](const auto& n) { return infer_node(n, e, order_ctx); }, e.node);
    }

    SqlType infer_node(const ColumnRef& n, const Expr&, bool order_ctx) {
        if (order_ctx) {
            if (const Projection* p = alias_target(n.name)) return infer(p->expr, false);
        }
        if (!table_) return SqlType::Unknown;
        const ColumnSchema* col = column(n.name);
        if (!col) {
            out_.push_back({ViolationKind::UnknownColumn, n.name,
                            "unknown column '" + n.name + "' in table '" + table_->name + "'"});
            return SqlType::Unknown;
        }
        switch (col->dtype) {
            case Dtype::Integer: return SqlType::Int;
            case Dtype::Real: return SqlType::Real;
            case Dtype::Text: return SqlType::Text;
        }
        return SqlType::Unknown;
    }

    SqlType infer_node(const Literal& n, const Expr&, bool) { return literal_type(n.value); }

    SqlType infer_node(const Star&, const Expr&, bool) { return SqlType::Unknown; }

    SqlType infer_node(const UnaryExpr& n, const Expr&, bool order_ctx) {
        const SqlType t = infer(*n.operand, order_ctx);
        switch (n.op) {
            case UnaryOp::Neg:
                if (!numeric(t)) type_error("unary minus on non-numeric operand " + render_expr(*n.operand));
                return t == SqlType::Null ? SqlType::Null : t;
            case UnaryOp::Not:
                if (!boolish(t)) type_error("NOT applied to non-boolean operand " + render_expr(*n.operand));
                return SqlType::Bool;
            case UnaryOp::IsNull:
            case UnaryOp::IsNotNull:
                if (!valueish(t)) type_error("IS NULL applied to a boolean expression");
                return SqlType::Bool;
        }
        return SqlType::Unknown;
    }

    SqlType infer_node(const BinaryExpr& n, const Expr&, bool order_ctx) {
        const SqlType l = infer(*n.lhs, order_ctx);
        const SqlType r = infer(*n.rhs, order_ctx);
        if (is_arithmetic(n.op)) {
            if (!numeric(l) || !numeric(r)) {
                type_error(std::string("operator ") + binary_op_text(n.op) + " requires numeric operands");
                return SqlType::Unknown;
            }
            if (l == SqlType::Unknown || r == SqlType::Unknown) return SqlType::Unknown;
            if (n.op == BinaryOp::Div || l == SqlType::Real || r == SqlType::Real) return SqlType::Real;
            if (l == SqlType::Null && r == SqlType::Null) return SqlType::Null;
            return SqlType::Int;
        }
        if (is_comparison(n.op)) {
            if (l == SqlType::Bool || r == SqlType::Bool || !compatible(l, r)) {
                type_error(std::string("comparison ") + binary_op_text(n.op) + " between incompatible types in " +
                           render_expr(*n.lhs) + " " + binary_op_text(n.op) + " " + render_expr(*n.rhs));
            } else if (n.op != BinaryOp::Eq && n.op != BinaryOp::Ne &&
                       (is_categorical(*n.lhs) || is_categorical(*n.rhs))) {
                type_error(std::string("ordering comparison ") + binary_op_text(n.op) +
                           " on categorical column; use = , != or IN");
            } else if (const auto* lit = n.rhs->as<Literal>()) {
                check_domain(*n.lhs, lit->value);
            } else if (const auto* lit_l = n.lhs->as<Literal>()) {
                check_domain(*n.rhs, lit_l->value);
            }
            return SqlType::Bool;
        }
        if (!boolish(l) || !boolish(r)) {
            type_error(std::string(binary_op_text(n.op)) + " requires boolean operands");
        }
        return SqlType::Bool;
    }

    SqlType infer_node(const InExpr& n, const Expr&, bool order_ctx) {
        const SqlType t = infer(*n.operand, order_ctx);
        if (t == SqlType::Bool) type_error("IN applied to a boolean expression");
        for (const auto& v : n.items) {
            if (!compatible(t, literal_type(v))) {
                type_error("IN list item " + render_literal(v) + " is incompatible with " + render_expr(*n.operand));
                break;
            }
            check_domain(*n.operand, v);
        }
        return SqlType::Bool;
    }

    SqlType infer_node(const BetweenExpr& n, const Expr&, bool order_ctx) {
        const SqlType t = infer(*n.operand, order_ctx);
        if (t == SqlType::Bool || !compatible(t, literal_type(n.low)) || !compatible(t, literal_type(n.high))) {
            type_error("BETWEEN bounds are incompatible with " + render_expr(*n.operand));
        } else if (is_categorical(*n.operand)) {
            type_error("BETWEEN on categorical column " + render_expr(*n.operand));
        }
        return SqlType::Bool;
    }

    SqlType infer_node(const ScalarCall& n, const Expr&, bool order_ctx) {
        const SqlType t = infer(n.args[0], order_ctx);
        const std::string name = scalar_fn_name(n.fn);
        if (!numeric(t)) {
            const std::string what = t == SqlType::Text ? "text" : "boolean";
            const auto* col = n.args[0].as<ColumnRef>();
            type_error(name + " on " + what + (col ? " column " + col->name : " expression"));
        }
        if (n.fn == ScalarFn::Round && n.args.size() == 2) {
            const SqlType d = infer(n.args[1], order_ctx);
            if (d != SqlType::Int && d != SqlType::Null && d != SqlType::Unknown) {
                type_error("ROUND precision must be an integer");
            }
        }
        switch (n.fn) {
            case ScalarFn::Abs: return t == SqlType::Int ? SqlType::Int : SqlType::Real;
            default: return SqlType::Real;
        }
    }

    SqlType infer_node(const AggCall& n, const Expr&, bool order_ctx) {
        if (!n.arg) return SqlType::Int;
        const SqlType t = infer(**n.arg, order_ctx);
        const std::string name = agg_fn_name(n.fn);
        if (t == SqlType::Bool) {
            type_error(name + " over a boolean expression");
            return SqlType::Unknown;
        }
        switch (n.fn) {
            case AggFn::Count: return SqlType::Int;
            case AggFn::Min:
            case AggFn::Max: return t == SqlType::Null ? SqlType::Unknown : t;
            case AggFn::Sum:
            case AggFn::Avg:
            case AggFn::Stddev:
                if (!numeric(t)) {
                    const auto* col = (*n.arg)->as<ColumnRef>();
                    type_error(name + " on text" + (col ? " column " + col->name : " expression"));
                    return SqlType::Unknown;
                }
                if (n.fn == AggFn::Sum && t == SqlType::Int) return SqlType::Int;
                return SqlType::Real;
        }
        return SqlType::Unknown;
    }

    bool matches_group_key(const Expr& e) const {
        return std::any_of(q_.group_by.begin(), q_.group_by.end(), [&](const Expr& g) { return g == e; });
    }

    // Every column reference outside an aggregate must be (part of) a group key.
    void check_grouped(const Expr& e, bool order_ctx) {
        if (matches_group_key(e) || e.as<AggCall>() || e.as<Literal>()) return;
        if (const auto* c = e.as<ColumnRef>()) {
            if (order_ctx && alias_target(c->name)) return;
            if (table_ && !column(c->name)) return;  // already reported as unknown
            grouping("column '" + c->name + "' must appear in GROUP BY or inside an aggregate");
            return;
        }
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, UnaryExpr>) {
                    check_grouped(*n.operand, order_ctx);
                } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                    check_grouped(*n.lhs, order_ctx);
                    check_grouped(*n.rhs, order_ctx);
                } else if constexpr (std::is_same_v<T, InExpr> || std::is_same_v<T, BetweenExpr>) {
                    check_grouped(*n.operand, order_ctx);
                } else if constexpr (std::is_same_v<T, ScalarCall>) {
                    for (const auto& a : n.args) check_grouped(a, order_ctx);
                }
            },
            e.node);
    }
};

}  // namespace

std::vector<SchemaViolation> check_schema(const QueryAst& ast, const SchemaManifest& manifest) {
    const TableSchema* table = manifest.find_table(ast.from_table);
    std::vector<SchemaViolation> out;
    if (!table) {
        out.push_back({ViolationKind::UnknownTable, ast.from_table, "unknown table '" + ast.from_table + "'"});
    }
    auto rest = SchemaChecker(ast, table).run();
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

// ---------------------------------------------------------------------------
// repair

namespace {

struct NearestMatch {
    std::optional<std::string> unique;
    std::size_t distance = 0;
};

// Unique nearest candidate within the distance threshold, compared case-folded.
NearestMatch nearest(std::string_view word, const std::vector<std::string>& candidates) {
    const std::string folded = to_lower(word);
    std::size_t best = kMaxRepairDistance + 1;
    std::vector<std::string> at_best;
    for (const auto& c : candidates) {
        const std::size_t d = levenshtein(folded, to_lower(c));
        if (d < best) {
            best = d;
            at_best = {c};
        } else if (d == best && std::find(at_best.begin(), at_best.end(), c) == at_best.end()) {
            at_best.push_back(c);
        }
    }
    if (best > kMaxRepairDistance || at_best.size() != 1) return {std::nullopt, best};
    return {at_best.front(), best};
}

enum class FixStatus { Applied, NoCandidate, NotRepairable };

struct ParseFix {
    FixStatus status = FixStatus::NotRepairable;
    std::string new_text;
    std::vector<RepairAction> actions;
    std::string reason;
};

const Token* token_at(const std::vector<Token>& tokens, std::size_t offset) {
    for (const auto& t : tokens) {
        if (t.offset == offset && t.kind != TokenKind::End) return &t;
    }
    return nullptr;
}

std::vector<std::string> manifest_identifiers(const SchemaManifest& m) {
    std::vector<std::string> out;
    for (const auto& t : m.tables()) {
        out.push_back(t.name);
        for (const auto& c : t.columns) out.push_back(c.name);
    }
    return out;
}

ParseFix fix_double_quotes(std::string_view text, const std::vector<Token>& tokens, const SchemaManifest& manifest) {
    ParseFix fix;
    const auto idents = manifest_identifiers(manifest);
    std::string out;
    std::size_t cursor = 0;
    for (const auto& t : tokens) {
        if (t.kind != TokenKind::DoubleQuoted) continue;
        const std::string before(text.substr(t.offset, t.length));
        std::string after;
        if (std::find(idents.begin(), idents.end(), t.text) != idents.end()) {
            after = t.text;  // "area" is a quoted identifier
        } else {
            after = render_literal(Value::text(t.text));
        }
        out.append(text.substr(cursor, t.offset - cursor));
        out += after;
        cursor = t.offset + t.length;
        fix.actions.push_back({RepairKind::QuoteFix, before, after, levenshtein(before, after)});
    }
    out.append(text.substr(cursor));
    fix.status = FixStatus::Applied;
    fix.new_text = std::move(out);
    return fix;
}

ParseFix plan_parse_fix(std::string_view text, const Error& err, std::size_t offset,
                        const std::vector<std::string>& expected, const SchemaManifest& manifest) {
    ParseFix fix;
    std::vector<Token> tokens;
    try {
        tokens = tokenize(text);
    } catch (const SyntaxError&) {
        return fix;  // lexical errors are not repairable
    }
    const Token* tok = token_at(tokens, offset);
    if (!tok) return fix;

    if (tok->kind == TokenKind::DoubleQuoted) return fix_double_quotes(text, tokens, manifest);

    if (const auto* unsupported = dynamic_cast<const UnsupportedFeature*>(&err)) {
        const std::string upper = to_upper(tok->text);
        if (tok->kind != TokenKind::Word || !is_droppable_clause_keyword(upper)) return fix;
        std::string_view prefix = trim(text.substr(0, offset));
        try {
            (void)parse(prefix);
        } catch (const Error&) {
            return fix;
        }
        const std::string dropped(trim(text.substr(offset)));
        fix.status = FixStatus::Applied;
        fix.new_text = std::string(prefix);
        fix.actions.push_back({RepairKind::ClauseDrop, dropped, "", dropped.size()});
        (void)unsupported;
        return fix;
    }

    if (tok->kind != TokenKind::Word) return fix;
    const std::string upper = to_upper(tok->text);
    const auto& keywords = subset_keywords();
    if (std::find(keywords.begin(), keywords.end(), upper) != keywords.end()) return fix;

    std::vector<std::string> candidates;
    for (const auto& e : expected) {
        if (std::find(keywords.begin(), keywords.end(), e) != keywords.end()) candidates.push_back(e);
    }
    if (candidates.empty()) candidates = keywords;
    const NearestMatch m = nearest(upper, candidates);
    if (!m.unique) {
        fix.status = FixStatus::NoCandidate;
        fix.reason = "no unique keyword within distance " + std::to_string(kMaxRepairDistance) + " of '" +
                     tok->text + "'";
        return fix;
    }
    // Refuse fixes that sit as close to a write keyword as to the subset keyword.
    for (const auto& head : forbidden_statement_heads()) {
        if (levenshtein(upper, head) <= m.distance) {
            fix.status = FixStatus::NoCandidate;
            fix.reason = "'" + tok->text + "' is as close to " + head + " as to " + *m.unique;
            return fix;
        }
    }
    fix.status = FixStatus::Applied;
    fix.new_text = std::string(text.substr(0, tok->offset)) + *m.unique +
                   std::string(text.substr(tok->offset + tok->length));
    fix.actions.push_back({RepairKind::KeywordFix, tok->text, *m.unique, m.distance});
    return fix;
}

void rename_columns(Expr& e, const std::string& from, const std::string& to);

template <class F>
void for_each_child(Expr& e, F&& f) {
    std::visit(
        [&](auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, UnaryExpr>) {
                f(n.operand.get_mut());
            } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                f(n.lhs.get_mut());
                f(n.rhs.get_mut());
            } else if constexpr (std::is_same_v<T, InExpr> || std::is_same_v<T, BetweenExpr>) {
                f(n.operand.get_mut());
            } else if constexpr (std::is_same_v<T, ScalarCall>) {
                for (auto& a : n.args) f(a);
            } else if constexpr (std::is_same_v<T, AggCall>) {
                if (n.arg) f(n.arg->get_mut());
            }
        },
        e.node);
}

void rename_columns(Expr& e, const std::string& from, const std::string& to) {
    if (auto* c = std::get_if<ColumnRef>(&e.node)) {
        if (c->name == from) c->name = to;
        return;
    }
    for_each_child(e, [&](Expr& child) { rename_columns(child, from, to); });
}

void rename_in_query(QueryAst& q, const std::string& from, const std::string& to) {
    for (auto& p : q.projections) rename_columns(p.expr, from, to);
    if (q.where_clause) rename_columns(*q.where_clause, from, to);
    for (auto& g : q.group_by) rename_columns(g, from, to);
    if (q.having) rename_columns(*q.having, from, to);
    for (auto& o : q.order_by) {
        // alias references in ORDER BY are not column typos
        if (const auto* c = o.expr.as<ColumnRef>()) {
            const bool is_alias = std::any_of(q.projections.begin(), q.projections.end(),
                                              [&](const Projection& p) { return p.alias && *p.alias == c->name; });
            if (is_alias) continue;
        }
        rename_columns(o.expr, from, to);
    }
}

std::vector<std::string> describe(const std::vector<SchemaViolation>& vs) {
    std::vector<std::string> out;
    for (const auto& v : vs) out.push_back(std::string(violation_kind_name(v.kind)) + ": " + v.message);
    return out;
}

}  // namespace

GuardOutcome repair(std::string_view sanitized, const SchemaManifest& manifest, SourceAgent source) {
    std::string text(sanitized);
    std::vector<RepairAction> log;
    int passes = 0;

    while (true) {
        QueryAst ast;
        try {
            ast = parse(text);
        } catch (const Error& e) {
            std::size_t offset = 0;
            std::vector<std::string> expected;
            if (const auto* se = dynamic_cast<const SyntaxError*>(&e)) {
                offset = se->offset();
                expected = se->expected();
            } else if (const auto* uf = dynamic_cast<const UnsupportedFeature*>(&e)) {
                offset = uf->offset();
            }
            ParseFix fix = plan_parse_fix(text, e, offset, expected, manifest);
            if (fix.status == FixStatus::NotRepairable) {
                if (log.empty()) return GuardRejection{GuardStage::Parse, e.what(), offset, {}};
                return GuardRejection{GuardStage::RepairExhausted, e.what(), offset, {e.what()}};
            }
            if (fix.status == FixStatus::NoCandidate || passes >= kRepairPassBudget) {
                const std::string why = fix.status == FixStatus::NoCandidate ? fix.reason : "repair budget exhausted";
                return GuardRejection{GuardStage::RepairExhausted, why, offset, {e.what()}};
            }
            ++passes;
            for (auto& a : fix.actions) log.push_back(std::move(a));
            text = std::move(fix.new_text);
            continue;
        }

        auto violations = check_schema(ast, manifest);
        if (violations.empty()) return GuardAccess::make(std::move(ast), std::move(log), source);

        const bool only_identifiers = std::all_of(violations.begin(), violations.end(), [](const SchemaViolation& v) {
            return v.kind == ViolationKind::UnknownColumn || v.kind == ViolationKind::UnknownTable;
        });
        if (!only_identifiers) {
            const GuardStage stage = log.empty() ? GuardStage::Schema : GuardStage::RepairExhausted;
            return GuardRejection{stage, violations.front().message, std::nullopt, describe(violations)};
        }
        if (passes >= kRepairPassBudget) {
            return GuardRejection{GuardStage::RepairExhausted, "repair budget exhausted", std::nullopt,
                                  describe(violations)};
        }

        std::vector<RepairAction> actions;
        std::vector<std::string> seen;
        for (const auto& v : violations) {
            if (std::find(seen.begin(), seen.end(), v.identifier) != seen.end()) continue;
            seen.push_back(v.identifier);
            std::vector<std::string> candidates;
            if (v.kind == ViolationKind::UnknownTable) {
                for (const auto& t : manifest.tables()) candidates.push_back(t.name);
            } else if (const TableSchema* t = manifest.find_table(ast.from_table)) {
                for (const auto& c : t->columns) candidates.push_back(c.name);
            }
            const NearestMatch m = nearest(v.identifier, candidates);
            if (!m.unique) {
                return GuardRejection{GuardStage::RepairExhausted,
                                      "no unique " + std::string(v.kind == ViolationKind::UnknownTable ? "table" : "column") +
                                          " within distance " + std::to_string(kMaxRepairDistance) + " of '" +
                                          v.identifier + "'",
                                      std::nullopt, describe(violations)};
            }
            if (v.kind == ViolationKind::UnknownTable) {
                ast.from_table = *m.unique;
                actions.push_back({RepairKind::IdentifierFix, v.identifier, *m.unique, m.distance});
                // column typos are judged against the corrected table on the next pass
                break;
            }
            rename_in_query(ast, v.identifier, *m.unique);
            actions.push_back({RepairKind::IdentifierFix, v.identifier, *m.unique, m.distance});
        }
        ++passes;
        for (auto& a : actions) log.push_back(std::move(a));
        text = render(ast);
    }
}

GuardOutcome validate_pipeline(std::string_view raw, const SchemaManifest& manifest, SourceAgent source) {
    auto sanitized = sanitize(raw);
    if (auto* rej = std::get_if<GuardRejection>(&sanitized)) return std::move(*rej);
    return repair(std::get<std::string>(sanitized), manifest, source);
}

}  // namespace evidencesql
