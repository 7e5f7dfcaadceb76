#include "brute_force.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "evidencesql/sql_parser.hpp"

namespace evidencesql::oracle {

using namespace sql;

namespace {

struct DomainError {
    std::string kind;
};

__extension__ typedef __int128 I128;
using Row = std::map<std::string, Value>;

// Working value: text, exact integer or extended-precision real.
struct Num {
    enum Kind { Null, Int, Real, Text } kind = Null;
    I128 i = 0;
    long double r = 0;
    std::string s;

    static Num from(const Value& v) {
        Num n;
        if (v.is_int()) {
            n.kind = Int;
            n.i = v.as_int();
        } else if (v.is_real()) {
            n.kind = Real;
            n.r = v.as_real();
        } else if (v.is_text()) {
            n.kind = Text;
            n.s = v.as_text();
        }
        return n;
    }
    long double number() const { return kind == Int ? static_cast<long double>(i) : r; }
    Value to_value() const {
        switch (kind) {
            case Int: return Value::integer(static_cast<std::int64_t>(i));
            case Real: {
                const double d = static_cast<double>(r);
                if (!std::isfinite(d)) throw DomainError{"ArithmeticDomain"};
                return Value::real(d);
            }
            case Text: return Value::text(s);
            default: return Value{};
        }
    }
};

enum class Tri { False, True, Unknown };

Num real_num(long double r) {
    Num n;
    n.kind = Num::Real;
    n.r = r;
    return n;
}

Num int_num(I128 i) {
    Num n;
    n.kind = Num::Int;
    n.i = i;
    return n;
}

// -1/0/1 for non-null operands.
int order(const Num& a, const Num& b) {
    if (a.kind == Num::Text) return a.s < b.s ? -1 : (a.s > b.s ? 1 : 0);
    const long double x = a.number(), y = b.number();
    return x < y ? -1 : (x > y ? 1 : 0);
}

bool has_aggregate(const Expr& e) {
    if (e.as<AggCall>()) return true;
    if (const auto* u = e.as<UnaryExpr>()) return has_aggregate(*u->operand);
    if (const auto* b = e.as<BinaryExpr>()) return has_aggregate(*b->lhs) || has_aggregate(*b->rhs);
    if (const auto* in = e.as<InExpr>()) return has_aggregate(*in->operand);
    if (const auto* bt = e.as<BetweenExpr>()) return has_aggregate(*bt->operand);
    if (const auto* s = e.as<ScalarCall>()) {
        for (const auto& a : s->args) {
            if (has_aggregate(a)) return true;
        }
    }
    return false;
}

class Evaluator {
public:
    Evaluator(const QueryAst& q, std::vector<Row> rows) : q_(q), rows_(std::move(rows)) {}

    // Value context. `group` is null for per-row evaluation.
    Num value(const Expr& e, const Row* row, const std::vector<const Row*>* group) {
        if (const auto* c = e.as<ColumnRef>()) {
            if (row) return Num::from(row->at(c->name));
            // group context: a grouping column has one value across the group
            return Num::from(group->front()->at(c->name));
        }
        if (const auto* l = e.as<Literal>()) return Num::from(l->value);
        if (const auto* u = e.as<UnaryExpr>()) {
            if (u->op == UnaryOp::Neg) {
                Num v = value(*u->operand, row, group);
                if (v.kind == Num::Int) v.i = -v.i;
                if (v.kind == Num::Real) v.r = -v.r;
                return v;
            }
            return from_tri(truth(e, row, group));
        }
        if (const auto* b = e.as<BinaryExpr>()) {
            if (!is_arithmetic(b->op)) return from_tri(truth(e, row, group));
            const Num l = value(*b->lhs, row, group);
            const Num r = value(*b->rhs, row, group);
            if (l.kind == Num::Null || r.kind == Num::Null) return Num{};
            if (b->op == BinaryOp::Div) {
                if (r.number() == 0) return Num{};
                return real_num(l.number() / r.number());
            }
            if (l.kind == Num::Int && r.kind == Num::Int) {
                if (b->op == BinaryOp::Add) return int_num(l.i + r.i);
                if (b->op == BinaryOp::Sub) return int_num(l.i - r.i);
                return int_num(l.i * r.i);
            }
            if (b->op == BinaryOp::Add) return real_num(l.number() + r.number());
            if (b->op == BinaryOp::Sub) return real_num(l.number() - r.number());
            return real_num(l.number() * r.number());
        }
        if (e.as<InExpr>() || e.as<BetweenExpr>()) return from_tri(truth(e, row, group));
        if (const auto* s = e.as<ScalarCall>()) {
            const Num x = value(s->args[0], row, group);
            if (x.kind == Num::Null) return x;
            if (s->fn == ScalarFn::Sqrt) {
                if (x.number() < 0) throw DomainError{"ArithmeticDomain"};
                return real_num(std::sqrt(x.number()));
            }
            if (s->fn == ScalarFn::Abs) {
                Num v = x;
                if (v.kind == Num::Int && v.i < 0) v.i = -v.i;
                if (v.kind == Num::Real) v.r = std::fabs(v.r);
                return v;
            }
            long double digits = 0;
            if (s->args.size() > 1) {
                const Num d = value(s->args[1], row, group);
                if (d.kind == Num::Null) return Num{};
                digits = d.number();
            }
            if (digits > 15) return real_num(x.number());
            if (digits < -15) return real_num(0);
            const long double scale = std::pow(10.0L, digits);
            return real_num(std::round(x.number() * scale) / scale);
        }
        if (const auto* a = e.as<AggCall>()) return aggregate(*a, *group);
        throw DomainError{"UnsupportedInOracle"};
    }

    static Num from_tri(Tri t) {
        if (t == Tri::Unknown) return Num{};
        return int_num(t == Tri::True ? 1 : 0);
    }

    static Tri tri_of(const Num& n) {
        if (n.kind == Num::Null) return Tri::Unknown;
        return n.number() != 0 ? Tri::True : Tri::False;
    }

    // Predicate context with three-valued logic; both operands of AND/OR are
    // always evaluated.
    Tri truth(const Expr& e, const Row* row, const std::vector<const Row*>* group) {
        if (const auto* u = e.as<UnaryExpr>()) {
            switch (u->op) {
                case UnaryOp::Not: {
                    const Tri t = truth(*u->operand, row, group);
                    return t == Tri::Unknown ? t : (t == Tri::True ? Tri::False : Tri::True);
                }
                case UnaryOp::IsNull: return value(*u->operand, row, group).kind == Num::Null ? Tri::True : Tri::False;
                case UnaryOp::IsNotNull:
                    return value(*u->operand, row, group).kind == Num::Null ? Tri::False : Tri::True;
                case UnaryOp::Neg: return tri_of(value(e, row, group));
            }
        }
        if (const auto* b = e.as<BinaryExpr>()) {
            if (b->op == BinaryOp::And || b->op == BinaryOp::Or) {
                const Tri l = truth(*b->lhs, row, group);
                const Tri r = truth(*b->rhs, row, group);
                if (b->op == BinaryOp::And) {
                    if (l == Tri::False || r == Tri::False) return Tri::False;
                    if (l == Tri::Unknown || r == Tri::Unknown) return Tri::Unknown;
                    return Tri::True;
                }
                if (l == Tri::True || r == Tri::True) return Tri::True;
                if (l == Tri::Unknown || r == Tri::Unknown) return Tri::Unknown;
                return Tri::False;
            }
            if (is_comparison(b->op)) {
                const Num l = value(*b->lhs, row, group);
                const Num r = value(*b->rhs, row, group);
                if (l.kind == Num::Null || r.kind == Num::Null) return Tri::Unknown;
                const int c = order(l, r);
                bool res = false;
                switch (b->op) {
                    case BinaryOp::Eq: res = c == 0; break;
                    case BinaryOp::Ne: res = c != 0; break;
                    case BinaryOp::Lt: res = c < 0; break;
                    case BinaryOp::Le: res = c <= 0; break;
                    case BinaryOp::Gt: res = c > 0; break;
                    default: res = c >= 0; break;
                }
                return res ? Tri::True : Tri::False;
            }
            return tri_of(value(e, row, group));
        }
        if (const auto* in = e.as<InExpr>()) {
            const Num v = value(*in->operand, row, group);
            if (v.kind == Num::Null) return Tri::Unknown;
            bool unknown = false;
            for (const auto& item : in->items) {
                const Num it = Num::from(item);
                if (it.kind == Num::Null) {
                    unknown = true;
                } else if (order(v, it) == 0) {
                    return Tri::True;
                }
            }
            return unknown ? Tri::Unknown : Tri::False;
        }
        if (const auto* bt = e.as<BetweenExpr>()) {
            const Num v = value(*bt->operand, row, group);
            const Num lo = Num::from(bt->low), hi = Num::from(bt->high);
            const Tri a = (v.kind == Num::Null || lo.kind == Num::Null) ? Tri::Unknown
                                                                         : (order(v, lo) >= 0 ? Tri::True : Tri::False);
            const Tri b = (v.kind == Num::Null || hi.kind == Num::Null) ? Tri::Unknown
                                                                         : (order(v, hi) <= 0 ? Tri::True : Tri::False);
            if (a == Tri::False || b == Tri::False) return Tri::False;
            if (a == Tri::Unknown || b == Tri::Unknown) return Tri::Unknown;
            return Tri::True;
        }
        return tri_of(value(e, row, group));
    }

    Num aggregate(const AggCall& a, const std::vector<const Row*>& group) {
        if (!a.arg) return int_num(static_cast<long long>(group.size()));
        std::vector<Num> xs;
        for (const Row* r : group) {
            Num v = value(**a.arg, r, nullptr);
            if (v.kind == Num::Null) continue;
            if (a.distinct) {
                bool seen = false;
                for (const auto& x : xs) {
                    if (x.kind == v.kind && order(x, v) == 0) seen = true;
                }
                if (seen) continue;
            }
            xs.push_back(v);
        }
        if (a.fn == AggFn::Count) return int_num(static_cast<long long>(xs.size()));
        if (xs.empty()) return Num{};
        bool ints = true;
        for (const auto& x : xs) ints = ints && x.kind == Num::Int;
        switch (a.fn) {
            case AggFn::Min:
            case AggFn::Max: {
                Num best = xs[0];
                for (const auto& x : xs) {
                    const int c = order(x, best);
                    if ((a.fn == AggFn::Min && c < 0) || (a.fn == AggFn::Max && c > 0)) best = x;
                }
                return best;
            }
            case AggFn::Sum: {
                if (ints) {
                    I128 t = 0;
                    for (const auto& x : xs) t += x.i;
                    return int_num(t);
                }
                long double t = 0;
                for (const auto& x : xs) t += x.number();
                return real_num(t);
            }
            case AggFn::Avg: {
                long double t = 0;
                for (const auto& x : xs) t += x.number();
                return real_num(t / static_cast<long double>(xs.size()));
            }
            case AggFn::Stddev: {
                if (xs.size() < 2) return Num{};
                long double mean = 0;
                for (const auto& x : xs) mean += x.number();
                mean /= static_cast<long double>(xs.size());
                long double ss = 0;
                for (const auto& x : xs) ss += (x.number() - mean) * (x.number() - mean);
                return real_num(std::sqrt(ss / static_cast<long double>(xs.size() - 1)));
            }
            default: break;
        }
        return Num{};
    }

    OracleResult run(const TableSchema& schema) {
        OracleResult out;
        bool star = false;
        for (const auto& p : q_.projections) {
            if (p.expr.as<Star>()) {
                star = true;
                for (const auto& c : schema.columns) out.column_names.push_back(c.name);
            } else {
                out.column_names.push_back(p.alias ? *p.alias : render_expr(p.expr));
            }
        }

        // 1. filter
        std::vector<const Row*> kept;
        for (const auto& r : rows_) {
            if (!q_.where_clause || truth(*q_.where_clause, &r, nullptr) == Tri::True) kept.push_back(&r);
        }

        bool grouped = !q_.group_by.empty();
        for (const auto& p : q_.projections) grouped = grouped || has_aggregate(p.expr);
        if (q_.having && has_aggregate(*q_.having)) grouped = true;
        for (const auto& o : q_.order_by) grouped = grouped || has_aggregate(o.expr);

        struct Out {
            std::vector<Value> values;
            std::vector<Num> keys;
        };
        std::vector<Out> produced;

        auto order_keys = [&](Out& o, const Row* row, const std::vector<const Row*>* group) {
            for (const auto& item : q_.order_by) {
                const auto* c = item.expr.as<ColumnRef>();
                bool done = false;
                if (c) {
                    for (std::size_t i = 0; i < q_.projections.size() && !star; ++i) {
                        if (q_.projections[i].alias == c->name) {
                            o.keys.push_back(Num::from(o.values[i]));
                            done = true;
                            break;
                        }
                    }
                }
                if (!done) o.keys.push_back(value(item.expr, row, group));
            }
        };

        if (grouped) {
            // 2. nested-loop grouping in first-appearance order
            std::vector<std::vector<const Row*>> groups;
            if (q_.group_by.empty()) {
                groups.push_back(kept);
            } else {
                std::vector<std::vector<Num>> group_keys;
                for (const Row* r : kept) {
                    std::vector<Num> key;
                    for (const auto& g : q_.group_by) key.push_back(value(g, r, nullptr));
                    std::size_t found = groups.size();
                    for (std::size_t i = 0; i < groups.size(); ++i) {
                        bool same = true;
                        for (std::size_t j = 0; j < key.size() && same; ++j) {
                            const Num& x = key[j];
                            const Num& y = group_keys[i][j];
                            if (x.kind != y.kind) {
                                same = false;
                            } else if (x.kind != Num::Null) {
                                same = order(x, y) == 0;
                            }
                        }
                        if (same) {
                            found = i;
                            break;
                        }
                    }
                    if (found == groups.size()) {
                        groups.emplace_back();
                        group_keys.push_back(key);
                    }
                    groups[found].push_back(r);
                }
            }
            for (const auto& g : groups) {
                // An empty whole-table group has no representative row; only
                // aggregates can be evaluated over it.
                if (q_.having && truth(*q_.having, nullptr, &g) != Tri::True) continue;
                Out o;
                for (const auto& p : q_.projections) o.values.push_back(value(p.expr, nullptr, &g).to_value());
                order_keys(o, nullptr, &g);
                produced.push_back(std::move(o));
            }
        } else {
            for (const Row* r : kept) {
                Out o;
                for (const auto& p : q_.projections) {
                    if (p.expr.as<Star>()) {
                        for (const auto& c : schema.columns) o.values.push_back(r->at(c.name));
                    } else {
                        o.values.push_back(value(p.expr, r, nullptr).to_value());
                    }
                }
                order_keys(o, r, nullptr);
                produced.push_back(std::move(o));
            }
        }

        // 3. stable insertion sort, nulls last in both directions
        auto before = [&](const Out& a, const Out& b) {
            for (std::size_t i = 0; i < q_.order_by.size(); ++i) {
                const Num& x = a.keys[i];
                const Num& y = b.keys[i];
                const bool xn = x.kind == Num::Null, yn = y.kind == Num::Null;
                if (xn && yn) continue;
                if (xn != yn) return yn;
                const int c = order(x, y);
                if (c == 0) continue;
                return q_.order_by[i].direction == Direction::Asc ? c < 0 : c > 0;
            }
            return false;
        };
        for (std::size_t i = 1; i < produced.size(); ++i) {
            std::size_t j = i;
            while (j > 0 && before(produced[i], produced[j - 1])) --j;
            if (j != i) {
                Out moving = std::move(produced[i]);
                produced.erase(produced.begin() + static_cast<std::ptrdiff_t>(i));
                produced.insert(produced.begin() + static_cast<std::ptrdiff_t>(j), std::move(moving));
            }
        }

        // 4. limit
        std::size_t n = produced.size();
        if (q_.limit) n = std::min<std::size_t>(n, static_cast<std::size_t>(*q_.limit));
        for (std::size_t i = 0; i < n; ++i) out.rows.push_back(std::move(produced[i].values));
        return out;
    }

private:
    const QueryAst& q_;
    std::vector<Row> rows_;
};

std::string describe(const Value& v) {
    if (v.is_null()) return "NULL";
    if (v.is_int()) return "Int(" + v.to_string() + ")";
    if (v.is_real()) return "Real(" + v.to_string() + ")";
    return "Text(" + v.as_text() + ")";
}

}  // namespace

OracleResult evaluate(const QueryAst& query, const FeatureTable& table) {
    std::vector<Row> rows;
    for (std::size_t r = 0; r < table.row_count(); ++r) {
        Row row;
        for (std::size_t c = 0; c < table.column_count(); ++c) row[table.schema().columns[c].name] = table.at(r, c);
        rows.push_back(std::move(row));
    }
    try {
        return Evaluator(query, std::move(rows)).run(table.schema());
    } catch (const DomainError& e) {
        OracleResult out;
        out.error_kind = e.kind;
        return out;
    }
}

std::optional<std::string> compare(const ResultTable& engine, const OracleResult& expected, double rel_tol) {
    if (engine.column_names != expected.column_names) return std::string("column names differ");
    if (engine.rows.size() != expected.rows.size()) {
        return "row count " + std::to_string(engine.rows.size()) + " vs oracle " + std::to_string(expected.rows.size());
    }
    for (std::size_t r = 0; r < engine.rows.size(); ++r) {
        for (std::size_t c = 0; c < engine.rows[r].size(); ++c) {
            const Value& a = engine.rows[r][c];
            const Value& b = expected.rows[r][c];
            bool ok = false;
            if (a.is_real() && b.is_real()) {
                const double x = a.as_real(), y = b.as_real();
                ok = std::fabs(x - y) <= rel_tol * std::max(std::fabs(x), std::fabs(y));
            } else {
                ok = a == b;
            }
            if (!ok) {
                std::ostringstream msg;
                msg << "row " << r << " column " << engine.column_names[c] << ": engine " << describe(a) << " vs oracle "
                    << describe(b);
                return msg.str();
            }
        }
    }
    return std::nullopt;
}

double sorted_quantile(std::vector<double> samples, double p) {
    std::sort(samples.begin(), samples.end());
    const double rank = static_cast<double>(samples.size() - 1) * p;
    const std::size_t below = static_cast<std::size_t>(std::floor(rank));
    const std::size_t above = std::min(below + 1, samples.size() - 1);
    const double frac = rank - static_cast<double>(below);
    return samples[below] * (1.0 - frac) + samples[above] * frac;
}

}  // namespace evidencesql::oracle
