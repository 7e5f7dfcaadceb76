#include "evidencesql/sql_ast.hpp"

namespace evidencesql::sql {

Expr make_column(std::string name) { return Expr{ColumnRef{std::move(name)}}; }

Expr make_literal(Value v) { return Expr{Literal{std::move(v)}}; }

Expr make_unary(UnaryOp op, Expr operand) { return Expr{UnaryExpr{op, std::move(operand)}}; }

Expr make_binary(BinaryOp op, Expr lhs, Expr rhs) {
    return Expr{BinaryExpr{op, std::move(lhs), std::move(rhs)}};
}

Expr make_agg(AggFn fn, std::optional<Expr> arg, bool distinct) {
    AggCall call{fn, std::nullopt, distinct};
    if (arg) call.arg = Box<Expr>(std::move(*arg));
    return Expr{std::move(call)};
}

Expr make_scalar(ScalarFn fn, std::vector<Expr> args) { return Expr{ScalarCall{fn, std::move(args)}}; }

bool contains_aggregate(const Expr& e) {
    return std::visit(
        [](const auto& n) -> bool {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, AggCall>) {
                return true;
            } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                return contains_aggregate(*n.operand);
            } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                return contains_aggregate(*n.lhs) || contains_aggregate(*n.rhs);
            } else if constexpr (std::is_same_v<T, InExpr> || std::is_same_v<T, BetweenExpr>) {
                return contains_aggregate(*n.operand);
            } else if constexpr (std::is_same_v<T, ScalarCall>) {
                for (const auto& a : n.args) {
                    if (contains_aggregate(a)) return true;
                }
                return false;
            } else {
                return false;
            }
        },
        e.node);
}

bool is_aggregate_query(const QueryAst& q) {
    if (!q.group_by.empty() || q.having) return true;
    for (const auto& p : q.projections) {
        if (contains_aggregate(p.expr)) return true;
    }
    for (const auto& o : q.order_by) {
        if (contains_aggregate(o.expr)) return true;
    }
    return false;
}

const char* binary_op_text(BinaryOp op) {
    switch (op) {
        case BinaryOp::Add: return "+";
        case BinaryOp::Sub: return "-";
        case BinaryOp::Mul: return "*";
        case BinaryOp::Div: return "/";
        case BinaryOp::Eq: return "=";
        case BinaryOp::Ne: return "!=";
        case BinaryOp::Lt: return "<";
        case BinaryOp::Le: return "<=";
        case BinaryOp::Gt: return ">";
        case BinaryOp::Ge: return ">=";
        case BinaryOp::And: return "AND";
        case BinaryOp::Or: return "OR";
    }
    return "?";
}

const char* agg_fn_name(AggFn fn) {
    switch (fn) {
        case AggFn::Count: return "COUNT";
        case AggFn::Sum: return "SUM";
        case AggFn::Avg: return "AVG";
        case AggFn::Min: return "MIN";
        case AggFn::Max: return "MAX";
        case AggFn::Stddev: return "STDDEV";
    }
    return "?";
}

const char* scalar_fn_name(ScalarFn fn) {
    switch (fn) {
        case ScalarFn::Sqrt: return "SQRT";
        case ScalarFn::Abs: return "ABS";
        case ScalarFn::Round: return "ROUND";
    }
    return "?";
}

bool is_comparison(BinaryOp op) {
    switch (op) {
        case BinaryOp::Eq:
        case BinaryOp::Ne:
        case BinaryOp::Lt:
        case BinaryOp::Le:
        case BinaryOp::Gt:
        case BinaryOp::Ge:
            return true;
        default:
            return false;
    }
}

bool is_arithmetic(BinaryOp op) {
    return op == BinaryOp::Add || op == BinaryOp::Sub || op == BinaryOp::Mul || op == BinaryOp::Div;
}

}  // namespace evidencesql::sql
