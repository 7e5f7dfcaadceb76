#include "evidencesql/sql_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "evidencesql/errors.hpp"

namespace evidencesql::sql {

namespace {

const std::set<std::string, std::less<>>& core_keywords() {
    static const std::set<std::string, std::less<>> kw = {
        "SELECT", "FROM", "WHERE", "GROUP", "BY", "HAVING", "ORDER", "ASC", "DESC", "LIMIT", "AND",
        "OR",     "NOT",  "IN",    "BETWEEN", "AS", "DISTINCT", "NULL", "IS"};
    return kw;
}

// Recognized SQL outside the subset. Reserved so they never become identifiers.
const std::set<std::string, std::less<>>& unsupported_keywords() {
    static const std::set<std::string, std::less<>> kw = {
        "JOIN",  "INNER",  "LEFT",    "RIGHT",  "FULL",    "OUTER",  "CROSS",  "NATURAL", "ON",
        "USING", "UNION",  "INTERSECT", "EXCEPT", "WITH", "OVER",   "PARTITION", "CASE", "WHEN",
        "THEN",  "ELSE",   "END",     "LIKE",   "ILIKE",   "GLOB",   "REGEXP", "SIMILAR", "EXISTS",
        "CAST",  "OFFSET", "FETCH",   "FOR",    "WINDOW",  "QUALIFY", "INTO",  "VALUES",  "LATERAL",
        "ALL",   "ANY",    "SOME",    "NULLS",  "TRUE",    "FALSE",  "COLLATE", "ESCAPE", "SET",
        "TABLE", "EXPLAIN", "BEGIN",  "COMMIT", "ROLLBACK", "TRANSACTION", "RETURNING"};
    return kw;
}

const std::set<std::string, std::less<>>& droppable_clauses() {
    static const std::set<std::string, std::less<>> kw = {"OFFSET", "FETCH", "FOR", "WINDOW", "QUALIFY"};
    return kw;
}

const std::set<std::string, std::less<>>& unsupported_functions() {
    static const std::set<std::string, std::less<>> fns = {
        "LOWER", "UPPER", "LENGTH", "COALESCE", "IFNULL", "NULLIF", "LOG",  "LN",        "EXP",
        "POWER", "POW",   "FLOOR",  "CEIL",     "CEILING", "SUBSTR", "SUBSTRING", "TRIM", "CONCAT",
        "VARIANCE", "VAR_SAMP", "VAR_POP", "STDDEV_POP", "MEDIAN", "PERCENTILE_CONT", "PERCENTILE_DISC",
        "GREATEST", "LEAST", "MOD",   "SIGN",   "COUNT_IF", "IIF",  "TOTAL", "GROUP_CONCAT", "STRING_AGG",
        "ROW_NUMBER", "RANK", "DENSE_RANK", "LAG", "LEAD", "NTILE", "RANDOM", "RAND", "NOW", "DATE"};
    return fns;
}

bool in_set(const std::set<std::string, std::less<>>& s, std::string_view w) { return s.find(w) != s.end(); }

std::optional<AggFn> agg_from_name(std::string_view upper) {
    if (upper == "COUNT") return AggFn::Count;
    if (upper == "SUM") return AggFn::Sum;
    if (upper == "AVG") return AggFn::Avg;
    if (upper == "MIN") return AggFn::Min;
    if (upper == "MAX") return AggFn::Max;
    if (upper == "STDDEV" || upper == "STDDEV_SAMP") return AggFn::Stddev;
    return std::nullopt;
}

std::optional<ScalarFn> scalar_from_name(std::string_view upper) {
    if (upper == "SQRT") return ScalarFn::Sqrt;
    if (upper == "ABS") return ScalarFn::Abs;
    if (upper == "ROUND") return ScalarFn::Round;
    return std::nullopt;
}

std::vector<std::string> function_names() {
    return {"COUNT", "SUM", "AVG", "MIN", "MAX", "STDDEV", "SQRT", "ABS", "ROUND"};
}

bool is_word_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

    QueryAst parse_query() {
        const Token& head = peek();
        if (head.kind == TokenKind::Word) {
            const std::string upper = to_upper(head.text);
            const auto& forbidden = forbidden_statement_heads();
            if (std::find(forbidden.begin(), forbidden.end(), upper) != forbidden.end() || upper == "EXPLAIN" ||
                upper == "BEGIN" || upper == "COMMIT" || upper == "ROLLBACK" || upper == "SET") {
                throw UnsupportedFeature(head.offset, upper + " statement");
            }
            if (upper == "WITH") throw UnsupportedFeature(head.offset, "WITH (common table expression)");
        }
        expect_word("SELECT", {"SELECT"});
        if (peek_word("DISTINCT")) throw UnsupportedFeature(peek().offset, "SELECT DISTINCT");
        if (peek_word("ALL")) throw UnsupportedFeature(peek().offset, "SELECT ALL");

        QueryAst q;
        q.projections.push_back(parse_select_item());
        while (peek_symbol(",")) {
            advance();
            q.projections.push_back(parse_select_item());
        }
        expect_word("FROM", {",", "AS", "FROM"});
        if (peek_symbol("(")) throw UnsupportedFeature(peek().offset, "subquery");
        q.from_table = expect_identifier();
        if (peek_symbol(",")) throw UnsupportedFeature(peek().offset, "multiple tables in FROM");
        if (peek().kind == TokenKind::Word) {
            const std::string u = to_upper(peek().text);
            if (u == "JOIN" || u == "INNER" || u == "LEFT" || u == "RIGHT" || u == "FULL" || u == "CROSS" ||
                u == "NATURAL" || u == "OUTER") {
                throw UnsupportedFeature(peek().offset, "JOIN");
            }
        }

        if (peek_word("WHERE")) {
            advance();
            q.where_clause = parse_expr();
        }
        if (peek_word("GROUP")) {
            advance();
            expect_word("BY", {"BY"});
            q.group_by.push_back(parse_expr());
            while (peek_symbol(",")) {
                advance();
                q.group_by.push_back(parse_expr());
            }
        }
        std::size_t having_offset = 0;
        if (peek_word("HAVING")) {
            having_offset = peek().offset;
            advance();
            q.having = parse_expr();
        }
        if (peek_word("ORDER")) {
            advance();
            expect_word("BY", {"BY"});
            q.order_by.push_back(parse_order_item());
            while (peek_symbol(",")) {
                advance();
                q.order_by.push_back(parse_order_item());
            }
        }
        if (peek_word("LIMIT")) {
            advance();
            const Token& t = peek();
            if (t.kind != TokenKind::Integer) {
                throw SyntaxError(t.offset, {"nonnegative integer"}, "LIMIT must be a nonnegative integer");
            }
            q.limit = parse_int_text(t.text, t.offset);
            advance();
        }

        if (peek_symbol(";")) {
            throw SyntaxError(peek().offset, {"end of input"}, "statement separator is not allowed");
        }
        if (peek().kind != TokenKind::End) {
            const Token& t = peek();
            if (t.kind == TokenKind::Word) {
                const std::string u = to_upper(t.text);
                if (in_set(unsupported_keywords(), u)) throw UnsupportedFeature(t.offset, u);
            }
            if (t.kind == TokenKind::DoubleQuoted) double_quote_error(t);
            throw SyntaxError(t.offset, trailing_expected(q), "unexpected token '" + t.text + "'");
        }

        if (q.having && q.group_by.empty()) {
            const bool all_aggregated = std::all_of(q.projections.begin(), q.projections.end(),
                                                    [](const Projection& p) { return contains_aggregate(p.expr); });
            if (!all_aggregated) {
                throw SyntaxError(having_offset, {}, "HAVING requires GROUP BY or aggregate projections");
            }
        }
        return q;
    }

private:
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    bool in_aggregate_ = false;

    const Token& peek(std::size_t ahead = 0) const {
        return tokens_[std::min(pos_ + ahead, tokens_.size() - 1)];
    }
    void advance() {
        if (pos_ + 1 < tokens_.size()) ++pos_;
    }
    bool peek_word(std::string_view upper, std::size_t ahead = 0) const {
        const Token& t = peek(ahead);
        return t.kind == TokenKind::Word && to_upper(t.text) == upper;
    }
    bool peek_symbol(std::string_view sym, std::size_t ahead = 0) const {
        const Token& t = peek(ahead);
        return t.kind == TokenKind::Symbol && t.text == sym;
    }

    [[noreturn]] static void double_quote_error(const Token& t) {
        throw SyntaxError(t.offset, {"string literal"}, "double-quoted literal \"" + t.text + "\"; use single quotes");
    }

    [[noreturn]] static void unexpected(const Token& t, std::vector<std::string> expected) {
        if (t.kind == TokenKind::DoubleQuoted) double_quote_error(t);
        if (t.kind == TokenKind::End) throw SyntaxError(t.offset, std::move(expected), "unexpected end of input");
        throw SyntaxError(t.offset, std::move(expected), "unexpected token '" + t.text + "'");
    }

    static std::vector<std::string> trailing_expected(const QueryAst& q) {
        std::vector<std::string> out;
        if (!q.where_clause && q.group_by.empty() && !q.having && q.order_by.empty() && !q.limit) {
            out.push_back("WHERE");
        }
        if (q.group_by.empty() && !q.having && q.order_by.empty() && !q.limit) out.push_back("GROUP");
        if (!q.having && q.order_by.empty() && !q.limit) out.push_back("HAVING");
        if (q.order_by.empty() && !q.limit) out.push_back("ORDER");
        if (!q.limit) out.push_back("LIMIT");
        out.push_back(";");
        return out;
    }

    void expect_word(std::string_view upper, std::vector<std::string> expected) {
        if (!peek_word(upper)) unexpected(peek(), std::move(expected));
        advance();
    }

    void expect_symbol(std::string_view sym) {
        if (!peek_symbol(sym)) unexpected(peek(), {std::string(sym)});
        advance();
    }

    std::string expect_identifier() {
        const Token& t = peek();
        if (t.kind != TokenKind::Word || is_reserved_word(t.text)) unexpected(t, {"identifier"});
        std::string name = t.text;
        advance();
        if (peek_symbol(".")) throw UnsupportedFeature(peek().offset, "qualified name");
        return name;
    }

    static std::int64_t parse_int_text(std::string_view digits, std::size_t offset) {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
        if (ec != std::errc() || ptr != digits.data() + digits.size()) {
            throw SyntaxError(offset, {}, "integer literal out of range: " + std::string(digits));
        }
        return v;
    }

    static double parse_real_text(std::string_view text, std::size_t offset) {
        double v = 0;
        auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
            throw SyntaxError(offset, {}, "numeric literal out of range: " + std::string(text));
        }
        return v;
    }

    Projection parse_select_item() {
        if (peek_symbol("*")) {
            advance();
            return Projection{Expr{Star{}}, std::nullopt};
        }
        Projection p{parse_expr(), std::nullopt};
        if (peek_word("AS")) {
            advance();
            p.alias = expect_identifier();
        }
        return p;
    }

    OrderItem parse_order_item() {
        OrderItem item{parse_expr(), Direction::Asc};
        if (peek_word("ASC")) {
            advance();
        } else if (peek_word("DESC")) {
            advance();
            item.direction = Direction::Desc;
        }
        if (peek_word("NULLS")) throw UnsupportedFeature(peek().offset, "NULLS FIRST/LAST");
        return item;
    }

    Expr parse_expr() { return parse_or(); }

    Expr parse_or() {
        Expr lhs = parse_and();
        while (peek_word("OR")) {
            advance();
            lhs = make_binary(BinaryOp::Or, std::move(lhs), parse_and());
        }
        return lhs;
    }

    Expr parse_and() {
        Expr lhs = parse_not();
        while (peek_word("AND")) {
            advance();
            lhs = make_binary(BinaryOp::And, std::move(lhs), parse_not());
        }
        return lhs;
    }

    Expr parse_not() {
        if (peek_word("NOT")) {
            advance();
            if (peek_word("EXISTS")) throw UnsupportedFeature(peek().offset, "EXISTS");
            return make_unary(UnaryOp::Not, parse_not());
        }
        return parse_predicate();
    }

    Expr parse_predicate() {
        Expr lhs = parse_additive();
        const Token& t = peek();
        if (t.kind == TokenKind::Symbol) {
            static const std::pair<const char*, BinaryOp> ops[] = {
                {"=", BinaryOp::Eq}, {"!=", BinaryOp::Ne}, {"<>", BinaryOp::Ne}, {"<", BinaryOp::Lt},
                {"<=", BinaryOp::Le}, {">", BinaryOp::Gt}, {">=", BinaryOp::Ge}};
            for (const auto& [sym, op] : ops) {
                if (t.text == sym) {
                    advance();
                    return make_binary(op, std::move(lhs), parse_additive());
                }
            }
            return lhs;
        }
        if (t.kind != TokenKind::Word) return lhs;
        const std::string u = to_upper(t.text);
        if (u == "IS") {
            advance();
            bool negated = false;
            if (peek_word("NOT")) {
                advance();
                negated = true;
            }
            expect_word("NULL", {"NULL", "NOT"});
            return make_unary(negated ? UnaryOp::IsNotNull : UnaryOp::IsNull, std::move(lhs));
        }
        if (u == "NOT") {
            if (peek_word("IN", 1)) {
                advance();
                return make_unary(UnaryOp::Not, parse_in(std::move(lhs)));
            }
            if (peek_word("BETWEEN", 1)) {
                advance();
                return make_unary(UnaryOp::Not, parse_between(std::move(lhs)));
            }
            const Token& next = peek(1);
            if (next.kind == TokenKind::Word && in_set(unsupported_keywords(), to_upper(next.text))) {
                throw UnsupportedFeature(next.offset, to_upper(next.text));
            }
            unexpected(next, {"IN", "BETWEEN"});
        }
        if (u == "IN") return parse_in(std::move(lhs));
        if (u == "BETWEEN") return parse_between(std::move(lhs));
        if (u == "LIKE" || u == "ILIKE" || u == "GLOB" || u == "REGEXP" || u == "SIMILAR") {
            throw UnsupportedFeature(t.offset, u);
        }
        return lhs;
    }

    Expr parse_in(Expr lhs) {
        advance();  // IN
        expect_symbol("(");
        if (peek_word("SELECT")) throw UnsupportedFeature(peek().offset, "subquery");
        InExpr in{std::move(lhs), {}};
        in.items.push_back(parse_literal_value());
        while (peek_symbol(",")) {
            advance();
            in.items.push_back(parse_literal_value());
        }
        expect_symbol(")");
        return Expr{std::move(in)};
    }

    Expr parse_between(Expr lhs) {
        advance();  // BETWEEN
        Value low = parse_literal_value();
        expect_word("AND", {"AND"});
        Value high = parse_literal_value();
        return Expr{BetweenExpr{std::move(lhs), std::move(low), std::move(high)}};
    }

    Value parse_literal_value() {
        const Token& t = peek();
        if (t.kind == TokenKind::Symbol && t.text == "-") {
            const Token& num = peek(1);
            if (num.kind == TokenKind::Integer || num.kind == TokenKind::Decimal) {
                advance();
                return negative_number(num);
            }
            unexpected(num, {"number"});
        }
        if (t.kind == TokenKind::Integer) {
            advance();
            return Value::integer(parse_int_text(t.text, t.offset));
        }
        if (t.kind == TokenKind::Decimal) {
            advance();
            return Value::real(parse_real_text(t.text, t.offset));
        }
        if (t.kind == TokenKind::String) {
            advance();
            return Value::text(t.text);
        }
        if (peek_word("NULL")) {
            advance();
            return Value{};
        }
        unexpected(t, {"literal"});
    }

    Value negative_number(const Token& num) {
        advance();
        if (num.kind == TokenKind::Integer) {
            return Value::integer(parse_int_text("-" + num.text, num.offset));
        }
        return Value::real(-parse_real_text(num.text, num.offset));
    }

    Expr parse_additive() {
        Expr lhs = parse_multiplicative();
        while (true) {
            if (peek_symbol("+")) {
                advance();
                lhs = make_binary(BinaryOp::Add, std::move(lhs), parse_multiplicative());
            } else if (peek_symbol("-")) {
                advance();
                lhs = make_binary(BinaryOp::Sub, std::move(lhs), parse_multiplicative());
            } else {
                return lhs;
            }
        }
    }

    Expr parse_multiplicative() {
        Expr lhs = parse_unary();
        while (true) {
            if (peek_symbol("*")) {
                advance();
                lhs = make_binary(BinaryOp::Mul, std::move(lhs), parse_unary());
            } else if (peek_symbol("/")) {
                advance();
                lhs = make_binary(BinaryOp::Div, std::move(lhs), parse_unary());
            } else if (peek_symbol("%")) {
                throw UnsupportedFeature(peek().offset, "modulo operator");
            } else {
                return lhs;
            }
        }
    }

    Expr parse_unary() {
        if (peek_symbol("-")) {
            const Token& num = peek(1);
            if (num.kind == TokenKind::Integer || num.kind == TokenKind::Decimal) {
                advance();
                return make_literal(negative_number(num));
            }
            advance();
            return make_unary(UnaryOp::Neg, parse_unary());
        }
        return parse_primary();
    }

    Expr parse_primary() {
        const Token& t = peek();
        switch (t.kind) {
            case TokenKind::Integer:
                advance();
                return make_literal(Value::integer(parse_int_text(t.text, t.offset)));
            case TokenKind::Decimal:
                advance();
                return make_literal(Value::real(parse_real_text(t.text, t.offset)));
            case TokenKind::String:
                advance();
                return make_literal(Value::text(t.text));
            case TokenKind::Symbol:
                if (t.text == "(") {
                    advance();
                    if (peek_word("SELECT")) throw UnsupportedFeature(peek().offset, "subquery");
                    Expr inner = parse_expr();
                    expect_symbol(")");
                    return inner;
                }
                unexpected(t, {"expression"});
            case TokenKind::Word:
                return parse_word_primary();
            default:
                unexpected(t, {"expression"});
        }
    }

    Expr parse_word_primary() {
        const Token& t = peek();
        const std::string u = to_upper(t.text);
        if (u == "NULL") {
            advance();
            return make_literal(Value{});
        }
        if (peek_symbol("(", 1)) return parse_call();
        if (is_reserved_word(t.text)) {
            if (in_set(unsupported_keywords(), u)) throw UnsupportedFeature(t.offset, u);
            unexpected(t, {"expression"});
        }
        advance();
        if (peek_symbol(".")) throw UnsupportedFeature(peek().offset, "qualified column reference");
        return make_column(t.text);
    }

    Expr parse_call() {
        const Token name = peek();
        const std::string u = to_upper(name.text);
        if (auto agg = agg_from_name(u)) {
            if (in_aggregate_) {
                throw SyntaxError(name.offset, {}, "nested aggregate functions are not allowed");
            }
            advance();
            advance();  // (
            AggCall call{*agg, std::nullopt, false};
            if (peek_symbol("*")) {
                if (*agg != AggFn::Count) throw SyntaxError(peek().offset, {"expression"}, "only COUNT accepts *");
                advance();
            } else {
                if (peek_word("DISTINCT")) {
                    advance();
                    call.distinct = true;
                }
                in_aggregate_ = true;
                call.arg = Box<Expr>(parse_expr());
                in_aggregate_ = false;
            }
            expect_symbol(")");
            if (peek_word("OVER")) throw UnsupportedFeature(peek().offset, "window function");
            if (peek_word("FILTER")) throw UnsupportedFeature(peek().offset, "aggregate FILTER");
            return Expr{std::move(call)};
        }
        if (auto fn = scalar_from_name(u)) {
            advance();
            advance();  // (
            std::vector<Expr> args;
            if (!peek_symbol(")")) {
                args.push_back(parse_expr());
                while (peek_symbol(",")) {
                    advance();
                    args.push_back(parse_expr());
                }
            }
            expect_symbol(")");
            const std::size_t max_args = *fn == ScalarFn::Round ? 2 : 1;
            if (args.empty() || args.size() > max_args) {
                throw SyntaxError(name.offset, {}, std::string(scalar_fn_name(*fn)) + " called with " +
                                                       std::to_string(args.size()) + " arguments");
            }
            return make_scalar(*fn, std::move(args));
        }
        if (in_set(unsupported_functions(), u) || in_set(unsupported_keywords(), u)) {
            throw UnsupportedFeature(name.offset, "function " + u);
        }
        throw SyntaxError(name.offset, function_names(), "unknown function " + name.text);
    }
};

// Precedence levels used by the renderer; must mirror the parser.
constexpr int kPrecOr = 1;
constexpr int kPrecAnd = 2;
constexpr int kPrecNot = 3;
constexpr int kPrecPredicate = 4;
constexpr int kPrecAdditive = 5;
constexpr int kPrecMultiplicative = 6;
constexpr int kPrecUnary = 7;
constexpr int kPrecAtom = 8;

int precedence(const Expr& e) {
    if (const auto* b = e.as<BinaryExpr>()) {
        switch (b->op) {
            case BinaryOp::Or: return kPrecOr;
            case BinaryOp::And: return kPrecAnd;
            case BinaryOp::Add:
            case BinaryOp::Sub: return kPrecAdditive;
            case BinaryOp::Mul:
            case BinaryOp::Div: return kPrecMultiplicative;
            default: return kPrecPredicate;
        }
    }
    if (const auto* u = e.as<UnaryExpr>()) {
        switch (u->op) {
            case UnaryOp::Not: return kPrecNot;
            case UnaryOp::Neg: return kPrecUnary;
            default: return kPrecPredicate;
        }
    }
    if (e.as<InExpr>() || e.as<BetweenExpr>()) return kPrecPredicate;
    return kPrecAtom;
}

std::string wrap_if(const Expr& e, bool wrap) {
    std::string s = render_expr(e);
    return wrap ? "(" + s + ")" : s;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if ((c == '-' && i + 1 < n && text[i + 1] == '-') || (c == '/' && i + 1 < n && text[i + 1] == '*')) {
            throw SyntaxError(i, {}, "comment syntax is not allowed");
        }
        const std::size_t start = i;
        if (is_word_start(c)) {
            while (i < n && is_word_char(text[i])) ++i;
            out.push_back({TokenKind::Word, std::string(text.substr(start, i - start)), start, i - start});
            continue;
        }
        if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(text[i + 1]))) {
            bool decimal = false;
            while (i < n && is_digit(text[i])) ++i;
            if (i < n && text[i] == '.') {
                decimal = true;
                ++i;
                while (i < n && is_digit(text[i])) ++i;
            }
            if (i < n && (text[i] == 'e' || text[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < n && (text[j] == '+' || text[j] == '-')) ++j;
                if (j < n && is_digit(text[j])) {
                    decimal = true;
                    i = j;
                    while (i < n && is_digit(text[i])) ++i;
                }
            }
            if (i < n && is_word_char(text[i])) {
                throw SyntaxError(start, {}, "malformed numeric literal");
            }
            out.push_back({decimal ? TokenKind::Decimal : TokenKind::Integer, std::string(text.substr(start, i - start)),
                           start, i - start});
            continue;
        }
        if (c == '\'' || c == '"') {
            std::string value;
            ++i;
            bool closed = false;
            while (i < n) {
                if (text[i] == c) {
                    if (i + 1 < n && text[i + 1] == c) {
                        value += c;
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                value += text[i++];
            }
            if (!closed) throw SyntaxError(start, {}, "unterminated quoted literal");
            out.push_back({c == '\'' ? TokenKind::String : TokenKind::DoubleQuoted, std::move(value), start, i - start});
            continue;
        }
        static const char* two_char[] = {"<=", ">=", "!=", "<>"};
        bool matched = false;
        for (const char* sym : two_char) {
            if (text.substr(i, 2) == sym) {
                out.push_back({TokenKind::Symbol, sym, i, 2});
                i += 2;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (std::string_view("<>=+-*/(),;.%").find(c) != std::string_view::npos) {
            out.push_back({TokenKind::Symbol, std::string(1, c), i, 1});
            ++i;
            continue;
        }
        throw SyntaxError(i, {}, std::string("unexpected character '") + c + "'");
    }
    out.push_back({TokenKind::End, "", n, 0});
    return out;
}

QueryAst parse(std::string_view text) {
    Parser p(text);
    return p.parse_query();
}

std::string render_literal(const Value& v) {
    if (v.is_null()) return "NULL";
    if (v.is_int()) return std::to_string(v.as_int());
    if (v.is_real()) return format_real_roundtrip(v.as_real());
    std::string out = "'";
    for (char c : v.as_text()) {
        if (c == '\'') out += '\'';
        out += c;
    }
    out += '\'';
    return out;
}

std::string render_expr(const Expr& e) {
    return std::visit(
        [&](const auto& n) -> std::string {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, ColumnRef>) {
                return n.name;
            } else if constexpr (std::is_same_v<T, Literal>) {
                return render_literal(n.value);
            } else if constexpr (std::is_same_v<T, Star>) {
                return "*";
            } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                const Expr& x = *n.operand;
                switch (n.op) {
                    case UnaryOp::Neg: {
                        // numeric literals would fold into a negative literal; "--" would lex as a comment
                        const bool wrap = precedence(x) < kPrecUnary || x.as<UnaryExpr>() != nullptr ||
                                          (x.as<Literal>() && x.as<Literal>()->value.is_numeric());
                        return "-" + wrap_if(x, wrap);
                    }
                    case UnaryOp::Not:
                        return "NOT " + wrap_if(x, precedence(x) < kPrecNot);
                    case UnaryOp::IsNull:
                        return wrap_if(x, precedence(x) <= kPrecPredicate) + " IS NULL";
                    case UnaryOp::IsNotNull:
                        return wrap_if(x, precedence(x) <= kPrecPredicate) + " IS NOT NULL";
                }
                return "";
            } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                const int p = precedence(e);
                const bool non_assoc = p == kPrecPredicate;
                const bool wrap_l = non_assoc ? precedence(*n.lhs) <= p : precedence(*n.lhs) < p;
                const bool wrap_r = precedence(*n.rhs) <= p;
                return wrap_if(*n.lhs, wrap_l) + " " + binary_op_text(n.op) + " " + wrap_if(*n.rhs, wrap_r);
            } else if constexpr (std::is_same_v<T, InExpr>) {
                std::string out = wrap_if(*n.operand, precedence(*n.operand) <= kPrecPredicate) + " IN (";
                for (std::size_t i = 0; i < n.items.size(); ++i) {
                    if (i) out += ", ";
                    out += render_literal(n.items[i]);
                }
                return out + ")";
            } else if constexpr (std::is_same_v<T, BetweenExpr>) {
                return wrap_if(*n.operand, precedence(*n.operand) <= kPrecPredicate) + " BETWEEN " +
                       render_literal(n.low) + " AND " + render_literal(n.high);
            } else if constexpr (std::is_same_v<T, ScalarCall>) {
                std::string out = std::string(scalar_fn_name(n.fn)) + "(";
                for (std::size_t i = 0; i < n.args.size(); ++i) {
                    if (i) out += ", ";
                    out += render_expr(n.args[i]);
                }
                return out + ")";
            } else {
                static_assert(std::is_same_v<T, AggCall>);
                std::string out = std::string(agg_fn_name(n.fn)) + "(";
                if (!n.arg) return out + "*)";
                if (n.distinct) out += "DISTINCT ";
                return out + render_expr(**n.arg) + ")";
            }
        },
        e.node);
}

std::string render(const QueryAst& q) {
    std::string out = "SELECT ";
    for (std::size_t i = 0; i < q.projections.size(); ++i) {
        if (i) out += ", ";
        out += render_expr(q.projections[i].expr);
        if (q.projections[i].alias) out += " AS " + *q.projections[i].alias;
    }
    out += " FROM " + q.from_table;
    if (q.where_clause) out += " WHERE " + render_expr(*q.where_clause);
    if (!q.group_by.empty()) {
        out += " GROUP BY ";
        for (std::size_t i = 0; i < q.group_by.size(); ++i) {
            if (i) out += ", ";
            out += render_expr(q.group_by[i]);
        }
    }
    if (q.having) out += " HAVING " + render_expr(*q.having);
    if (!q.order_by.empty()) {
        out += " ORDER BY ";
        for (std::size_t i = 0; i < q.order_by.size(); ++i) {
            if (i) out += ", ";
            out += render_expr(q.order_by[i].expr);
            out += q.order_by[i].direction == Direction::Desc ? " DESC" : " ASC";
        }
    }
    if (q.limit) out += " LIMIT " + std::to_string(*q.limit);
    return out;
}

bool is_reserved_word(std::string_view word) {
    const std::string u = to_upper(word);
    if (in_set(core_keywords(), u) || in_set(unsupported_keywords(), u)) return true;
    const auto& heads = forbidden_statement_heads();
    return std::find(heads.begin(), heads.end(), u) != heads.end();
}

const std::vector<std::string>& subset_keywords() {
    static const std::vector<std::string> kw = [] {
        std::vector<std::string> v(core_keywords().begin(), core_keywords().end());
        for (auto& f : function_names()) v.push_back(f);
        std::sort(v.begin(), v.end());
        return v;
    }();
    return kw;
}

const std::vector<std::string>& forbidden_statement_heads() {
    static const std::vector<std::string> heads = {"INSERT", "UPDATE", "DELETE",   "DROP",   "ALTER",
                                                   "CREATE", "ATTACH", "PRAGMA",   "DETACH", "REPLACE",
                                                   "TRUNCATE", "GRANT", "REVOKE",  "MERGE",  "VACUUM"};
    return heads;
}

bool is_droppable_clause_keyword(std::string_view upper_word) { return in_set(droppable_clauses(), upper_word); }

bool is_identifier(std::string_view word) {
    if (word.empty() || !is_word_start(word[0])) return false;
    return std::all_of(word.begin(), word.end(), is_word_char);
}

std::string to_upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace evidencesql::sql
