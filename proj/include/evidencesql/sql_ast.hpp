#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "evidencesql/value.hpp"

namespace evidencesql::sql {

/// Owning pointer with value semantics: copies deep-copy, == compares pointees.
template <class T>
class Box {
public:
    Box(T value) : ptr_(std::make_unique<T>(std::move(value))) {}  // NOLINT(implicit)
    Box(const Box& other) : ptr_(std::make_unique<T>(*other.ptr_)) {}
    Box(Box&&) noexcept = default;
    Box& operator=(const Box& other) {
        if (this != &other) ptr_ = std::make_unique<T>(*other.ptr_);
        return *this;
    }
    Box& operator=(Box&&) noexcept = default;

    const T& operator*() const { return *ptr_; }
    const T* operator->() const { return ptr_.get(); }
    T& get_mut() { return *ptr_; }

    friend bool operator==(const Box& a, const Box& b) { return *a.ptr_ == *b.ptr_; }

private:
    std::unique_ptr<T> ptr_;
};

struct Expr;

struct ColumnRef {
    std::string name;
    bool operator==(const ColumnRef&) const = default;
};

struct Literal {
    Value value;
    bool operator==(const Literal&) const = default;
};

enum class UnaryOp { Neg, Not, IsNull, IsNotNull };

struct UnaryExpr {
    UnaryOp op;
    Box<Expr> operand;
    bool operator==(const UnaryExpr&) const = default;
};

enum class BinaryOp { Add, Sub, Mul, Div, Eq, Ne, Lt, Le, Gt, Ge, And, Or };

struct BinaryExpr {
    BinaryOp op;
    Box<Expr> lhs;
    Box<Expr> rhs;
    bool operator==(const BinaryExpr&) const = default;
};

struct InExpr {
    Box<Expr> operand;
    std::vector<Value> items;
    bool operator==(const InExpr&) const = default;
};

struct BetweenExpr {
    Box<Expr> operand;
    Value low;
    Value high;
    bool operator==(const BetweenExpr&) const = default;
};

enum class ScalarFn { Sqrt, Abs, Round };

struct ScalarCall {
    ScalarFn fn;
    std::vector<Expr> args;
    bool operator==(const ScalarCall&) const;
};

enum class AggFn { Count, Sum, Avg, Min, Max, Stddev };

struct AggCall {
    AggFn fn;
    /// Empty means `*` (COUNT only).
    std::optional<Box<Expr>> arg;
    bool distinct = false;
    bool operator==(const AggCall&) const = default;
};

/// `SELECT *`; only valid as a whole projection.
struct Star {
    bool operator==(const Star&) const = default;
};

struct Expr {
    std::variant<ColumnRef, Literal, UnaryExpr, BinaryExpr, InExpr, BetweenExpr, ScalarCall, AggCall, Star>
        node;
    bool operator==(const Expr&) const = default;

    template <class T>
    const T* as() const { return std::get_if<T>(&node); }
};

inline bool ScalarCall::operator==(const ScalarCall& o) const { return fn == o.fn && args == o.args; }

Expr make_column(std::string name);
Expr make_literal(Value v);
Expr make_unary(UnaryOp op, Expr operand);
Expr make_binary(BinaryOp op, Expr lhs, Expr rhs);
Expr make_agg(AggFn fn, std::optional<Expr> arg, bool distinct = false);
Expr make_scalar(ScalarFn fn, std::vector<Expr> args);

struct Projection {
    Expr expr;
    std::optional<std::string> alias;
    bool operator==(const Projection&) const = default;
};

enum class Direction { Asc, Desc };

struct OrderItem {
    Expr expr;
    Direction direction = Direction::Asc;
    bool operator==(const OrderItem&) const = default;
};

struct QueryAst {
    std::vector<Projection> projections;
    std::string from_table;
    std::optional<Expr> where_clause;
    std::vector<Expr> group_by;
    std::optional<Expr> having;
    std::vector<OrderItem> order_by;
    std::optional<std::int64_t> limit;
    bool operator==(const QueryAst&) const = default;
};

bool contains_aggregate(const Expr& e);
/// True when the query groups rows: GROUP BY present or any aggregate in the
/// projections, HAVING or ORDER BY.
bool is_aggregate_query(const QueryAst& q);

const char* binary_op_text(BinaryOp op);
const char* agg_fn_name(AggFn fn);
const char* scalar_fn_name(ScalarFn fn);
bool is_comparison(BinaryOp op);
bool is_arithmetic(BinaryOp op);

}  // namespace evidencesql::sql
