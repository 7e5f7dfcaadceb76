#include "evidencesql/sql_exec.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "evidencesql/errors.hpp"
#include "evidencesql/sql_parser.hpp"

namespace evidencesql {

using namespace sql;

Json ResultTable::to_json() const {
    Json jrows = Json::array();
    for (const auto& r : rows) {
        Json jr = Json::array();
        for (const auto& v : r) jr.push_back(value_to_json(v));
        jrows.push_back(std::move(jr));
    }
    return {{"columns", column_names}, {"rows", jrows}, {"query", query_text}, {"case_id", case_id}};
}

ResultTable ResultTable::from_json(const Json& j) {
    ResultTable t;
    t.column_names = j.at("columns").get<std::vector<std::string>>();
    for (const auto& jr : j.at("rows")) {
        std::vector<Value> row;
        for (const auto& v : jr) row.push_back(value_from_json(v));
        t.rows.push_back(std::move(row));
    }
    t.query_text = j.value("query", "");
    t.case_id = j.value("case_id", "");
    return t;
}

Json ExecError::to_json() const {
    Json j = {{"kind", kind}, {"message", message}};
    j["row"] = row ? Json(*row) : Json(nullptr);
    return j;
}

namespace {

__extension__ typedef __int128 Int128;

// Booleans travel as Int 0/1, unknown as Null.
const Value kTrue = Value::integer(1);
const Value kFalse = Value::integer(0);

Value boolean(bool b) { return b ? kTrue : kFalse; }
bool is_true(const Value& v) { return v.is_int() && v.as_int() != 0; }

Value make_real(double d, std::optional<std::size_t> row, const char* what) {
    if (!std::isfinite(d)) throw ArithmeticDomain(std::string(what) + " produced a non-finite result", row);
    return Value::real(d);
}

// Three-way comparison of two non-null values of compatible type.
int compare(const Value& a, const Value& b) {
    if (a.is_text() || b.is_text()) {
        const int c = a.as_text().compare(b.as_text());
        return (c > 0) - (c < 0);
    }
    if (a.is_int() && b.is_int()) return (a.as_int() > b.as_int()) - (a.as_int() < b.as_int());
    // long double holds every int64 exactly on the platforms we build for
    const long double x = a.is_int() ? static_cast<long double>(a.as_int()) : a.as_real();
    const long double y = b.is_int() ? static_cast<long double>(b.as_int()) : b.as_real();
    return (x > y) - (x < y);
}

// Total order over group keys: null < numbers < text; Int and Real with equal
// numeric value are still distinct keys.
struct KeyLess {
    static int rank(const Value& v) { return v.is_null() ? 0 : (v.is_text() ? 2 : 1); }
    bool operator()(const std::vector<Value>& a, const std::vector<Value>& b) const {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const int ra = rank(a[i]), rb = rank(b[i]);
            if (ra != rb) return ra < rb;
            if (ra == 0) continue;
            const int c = compare(a[i], b[i]);
            if (c != 0) return c < 0;
            if (a[i].is_int() != b[i].is_int()) return a[i].is_int();
        }
        return false;
    }
};

std::int64_t checked(Int128 v, std::optional<std::size_t> row, const char* what) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min()) {
        throw ArithmeticDomain(std::string("integer overflow in ") + what, row);
    }
    return static_cast<std::int64_t>(v);
}

Value arith(BinaryOp op, const Value& l, const Value& r, std::optional<std::size_t> row) {
    if (l.is_null() || r.is_null()) return Value{};
    if (op == BinaryOp::Div) {
        const double d = r.as_number();
        if (d == 0.0) return Value{};
        return make_real(l.as_number() / d, row, "division");
    }
    if (l.is_int() && r.is_int()) {
        const Int128 a = l.as_int(), b = r.as_int();
        switch (op) {
            case BinaryOp::Add: return Value::integer(checked(a + b, row, "addition"));
            case BinaryOp::Sub: return Value::integer(checked(a - b, row, "subtraction"));
            default: return Value::integer(checked(a * b, row, "multiplication"));
        }
    }
    const double a = l.as_number(), b = r.as_number();
    switch (op) {
        case BinaryOp::Add: return make_real(a + b, row, "addition");
        case BinaryOp::Sub: return make_real(a - b, row, "subtraction");
        default: return make_real(a * b, row, "multiplication");
    }
}

Value compare_op(BinaryOp op, const Value& l, const Value& r) {
    if (l.is_null() || r.is_null()) return Value{};
    const int c = compare(l, r);
    switch (op) {
        case BinaryOp::Eq: return boolean(c == 0);
        case BinaryOp::Ne: return boolean(c != 0);
        case BinaryOp::Lt: return boolean(c < 0);
        case BinaryOp::Le: return boolean(c <= 0);
        case BinaryOp::Gt: return boolean(c > 0);
        default: return boolean(c >= 0);
    }
}

Value and_op(const Value& l, const Value& r) {
    if ((!l.is_null() && !is_true(l)) || (!r.is_null() && !is_true(r))) return kFalse;
    if (l.is_null() || r.is_null()) return Value{};
    return kTrue;
}

Value or_op(const Value& l, const Value& r) {
    if (is_true(l) || is_true(r)) return kTrue;
    if (l.is_null() || r.is_null()) return Value{};
    return kFalse;
}

Value round_value(const Value& x, const Value& digits, std::optional<std::size_t> row) {
    if (x.is_null() || digits.is_null()) return Value{};
    const double v = x.as_number();
    const std::int64_t d = digits.as_int();
    if (d > 15) return Value::real(v);
    if (d < -15) return Value::real(0.0);
    const double scale = std::pow(10.0, static_cast<double>(d));
    return make_real(std::round(v * scale) / scale, row, "ROUND");
}

// Neumaier compensated sum.
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::fabs(sum) >= std::fabs(x)) {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + comp; }
};

Value aggregate(const AggCall& call, const std::vector<Value>& args, std::size_t row_count) {
    if (!call.arg) return Value::integer(static_cast<std::int64_t>(row_count));

    std::vector<Value> vals;
    vals.reserve(args.size());
    for (const auto& v : args) {
        if (v.is_null()) continue;
        if (call.distinct && std::find(vals.begin(), vals.end(), v) != vals.end()) continue;
        vals.push_back(v);
    }
    if (call.fn == AggFn::Count) return Value::integer(static_cast<std::int64_t>(vals.size()));
    if (vals.empty()) return Value{};

    const bool all_int = std::all_of(vals.begin(), vals.end(), [](const Value& v) { return v.is_int(); });
    const double n = static_cast<double>(vals.size());
    switch (call.fn) {
        case AggFn::Min:
        case AggFn::Max: {
            const Value* best = &vals.front();
            for (const auto& v : vals) {
                const int c = compare(v, *best);
                if (call.fn == AggFn::Min ? c < 0 : c > 0) best = &v;
            }
            return *best;
        }
        case AggFn::Sum:
        case AggFn::Avg: {
            if (all_int) {
                Int128 total = 0;
                for (const auto& v : vals) total += v.as_int();
                if (call.fn == AggFn::Sum) return Value::integer(checked(total, std::nullopt, "SUM"));
                return make_real(static_cast<double>(static_cast<long double>(total) / vals.size()), std::nullopt,
                                 "AVG");
            }
            CompensatedSum s;
            for (const auto& v : vals) s.add(v.as_number());
            if (call.fn == AggFn::Sum) return make_real(s.value(), std::nullopt, "SUM");
            return make_real(s.value() / n, std::nullopt, "AVG");
        }
        case AggFn::Stddev: {
            if (vals.size() < 2) return Value{};
            const Value& first = vals.front();
            if (std::all_of(vals.begin(), vals.end(), [&](const Value& v) { return compare(v, first) == 0; })) {
                return Value::real(0.0);
            }
            CompensatedSum s;
            for (const auto& v : vals) s.add(v.as_number());
            const double mean = s.value() / n;
            CompensatedSum sq, dev;
            for (const auto& v : vals) {
                const double d = v.as_number() - mean;
                sq.add(d * d);
                dev.add(d);
            }
            const double ss = std::max(0.0, sq.value() - dev.value() * dev.value() / n);
            return make_real(std::sqrt(ss / (n - 1.0)), std::nullopt, "STDDEV");
        }
        case AggFn::Count: break;
    }
    return Value{};
}

struct Group {
    std::vector<Value> key;
    std::vector<std::size_t> rows;
};

class Executor {
public:
    Executor(const QueryAst& q, const FeatureTable& table) : q_(q), table_(table) {}

    std::pair<std::vector<std::string>, std::vector<std::vector<Value>>> run() {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < table_.row_count(); ++r) {
            if (!q_.where_clause || is_true(eval_row(*q_.where_clause, r))) rows.push_back(r);
        }

        std::vector<std::string> names;
        for (const auto& p : q_.projections) {
            if (p.expr.as<Star>()) {
                for (const auto& c : table_.schema().columns) names.push_back(c.name);
            } else {
                names.push_back(p.alias ? *p.alias : render_expr(p.expr));
            }
        }

        struct OutRow {
            std::vector<Value> values;
            std::vector<Value> sort_keys;
        };
        std::vector<OutRow> out;

        if (is_aggregate_query(q_)) {
            for (const Group& g : make_groups(rows)) {
                group_ = &g;
                if (q_.having && !is_true(eval_group(*q_.having))) continue;
                OutRow o;
                for (const auto& p : q_.projections) o.values.push_back(eval_group(p.expr));
                for (const auto& item : q_.order_by) o.sort_keys.push_back(order_key(item.expr, o.values, nullptr));
                out.push_back(std::move(o));
            }
            group_ = nullptr;
        } else {
            for (std::size_t r : rows) {
                OutRow o;
                for (const auto& p : q_.projections) {
                    if (p.expr.as<Star>()) {
                        for (std::size_t c = 0; c < table_.column_count(); ++c) o.values.push_back(table_.at(r, c));
                    } else {
                        o.values.push_back(eval_row(p.expr, r));
                    }
                }
                for (const auto& item : q_.order_by) o.sort_keys.push_back(order_key(item.expr, o.values, &r));
                out.push_back(std::move(o));
            }
        }

        if (!q_.order_by.empty()) {
            std::stable_sort(out.begin(), out.end(), [&](const OutRow& a, const OutRow& b) {
                for (std::size_t i = 0; i < q_.order_by.size(); ++i) {
                    const Value& x = a.sort_keys[i];
                    const Value& y = b.sort_keys[i];
                    if (x.is_null() || y.is_null()) {
                        if (x.is_null() == y.is_null()) continue;
                        return y.is_null();  // nulls last in either direction
                    }
                    const int c = compare(x, y);
                    if (c == 0) continue;
                    return q_.order_by[i].direction == Direction::Asc ? c < 0 : c > 0;
                }
                return false;
            });
        }
        if (q_.limit && out.size() > static_cast<std::size_t>(*q_.limit)) out.resize(static_cast<std::size_t>(*q_.limit));

        std::vector<std::vector<Value>> result;
        result.reserve(out.size());
        for (auto& o : out) result.push_back(std::move(o.values));
        return {std::move(names), std::move(result)};
    }

private:
    const QueryAst& q_;
    const FeatureTable& table_;
    const Group* group_ = nullptr;

    std::vector<Group> make_groups(const std::vector<std::size_t>& rows) {
        std::vector<Group> groups;
        if (q_.group_by.empty()) {
            groups.push_back({{}, rows});
            return groups;
        }
        std::map<std::vector<Value>, std::size_t, KeyLess> index;
        for (std::size_t r : rows) {
            std::vector<Value> key;
            for (const auto& g : q_.group_by) key.push_back(eval_row(g, r));
            auto [it, inserted] = index.emplace(key, groups.size());
            if (inserted) groups.push_back({std::move(key), {}});
            groups[it->second].rows.push_back(r);
        }
        return groups;
    }

    // ORDER BY bare identifiers resolve to output aliases first.
    Value order_key(const Expr& e, const std::vector<Value>& values, const std::size_t* row) {
        if (const auto* c = e.as<ColumnRef>()) {
            std::size_t pos = 0;
            for (const auto& p : q_.projections) {
                if (p.expr.as<Star>()) {
                    pos += table_.column_count();
                    continue;
                }
                if (p.alias && *p.alias == c->name) return values[pos];
                ++pos;
            }
        }
        return row ? eval_row(e, *row) : eval_group(e);
    }

    Value column_value(const std::string& name, std::size_t row) const {
        const auto idx = table_.schema().column_index(name);
        return table_.at(row, *idx);
    }

    Value eval_row(const Expr& e, std::size_t row) {
        return std::visit([&](const auto& n) { return eval(n, std::optional<std::size_t>(row)); }, e.node);
    }

    Value eval_group(const Expr& e) {
        for (std::size_t i = 0; i < q_.group_by.size(); ++i) {
            if (q_.group_by[i] == e) return group_->key[i];
        }
        return std::visit([&](const auto& n) { return eval(n, std::optional<std::size_t>()); }, e.node);
    }

    Value sub(const Expr& e, std::optional<std::size_t> row) { return row ? eval_row(e, *row) : eval_group(e); }

    Value eval(const ColumnRef& n, std::optional<std::size_t> row) {
        if (!row) {
            // A grouped column outside GROUP BY is rejected by the guard; a key
            // matched above never reaches here.
            throw PreconditionViolation("column '" + n.name + "' referenced outside its group");
        }
        return column_value(n.name, *row);
    }

    Value eval(const Literal& n, std::optional<std::size_t>) { return n.value; }

    Value eval(const Star&, std::optional<std::size_t>) { return Value{}; }

    Value eval(const UnaryExpr& n, std::optional<std::size_t> row) {
        const Value v = sub(*n.operand, row);
        switch (n.op) {
            case UnaryOp::Neg:
                if (v.is_null()) return v;
                if (v.is_int()) return Value::integer(checked(-static_cast<Int128>(v.as_int()), row, "negation"));
                return Value::real(-v.as_real());
            case UnaryOp::Not:
                return v.is_null() ? v : boolean(!is_true(v));
            case UnaryOp::IsNull: return boolean(v.is_null());
            case UnaryOp::IsNotNull: return boolean(!v.is_null());
        }
        return Value{};
    }

    Value eval(const BinaryExpr& n, std::optional<std::size_t> row) {
        const Value l = sub(*n.lhs, row);
        const Value r = sub(*n.rhs, row);
        if (is_arithmetic(n.op)) return arith(n.op, l, r, row);
        if (is_comparison(n.op)) return compare_op(n.op, l, r);
        return n.op == BinaryOp::And ? and_op(l, r) : or_op(l, r);
    }

    Value eval(const InExpr& n, std::optional<std::size_t> row) {
        const Value v = sub(*n.operand, row);
        if (v.is_null()) return v;
        bool saw_null = false;
        for (const auto& item : n.items) {
            if (item.is_null()) {
                saw_null = true;
            } else if (compare(v, item) == 0) {
                return kTrue;
            }
        }
        return saw_null ? Value{} : kFalse;
    }

    Value eval(const BetweenExpr& n, std::optional<std::size_t> row) {
        const Value v = sub(*n.operand, row);
        return and_op(compare_op(BinaryOp::Ge, v, n.low), compare_op(BinaryOp::Le, v, n.high));
    }

    Value eval(const ScalarCall& n, std::optional<std::size_t> row) {
        const Value x = sub(n.args[0], row);
        switch (n.fn) {
            case ScalarFn::Sqrt:
                if (x.is_null()) return x;
                if (x.as_number() < 0) {
                    throw ArithmeticDomain("SQRT of negative value " + x.to_string(), row);
                }
                return make_real(std::sqrt(x.as_number()), row, "SQRT");
            case ScalarFn::Abs:
                if (x.is_null()) return x;
                if (x.is_int()) return Value::integer(checked(x.as_int() < 0 ? -static_cast<Int128>(x.as_int())
                                                                             : x.as_int(),
                                                              row, "ABS"));
                return Value::real(std::fabs(x.as_real()));
            case ScalarFn::Round:
                return round_value(x, n.args.size() > 1 ? sub(n.args[1], row) : Value::integer(0), row);
        }
        return Value{};
    }

    Value eval(const AggCall& n, std::optional<std::size_t>) {
        std::vector<Value> args;
        if (n.arg) {
            args.reserve(group_->rows.size());
            for (std::size_t r : group_->rows) args.push_back(eval_row(**n.arg, r));
        }
        return aggregate(n, args, group_->rows.size());
    }
};

}  // namespace

ResultTable execute(const ValidatedQuery& query, const CaseBundle& bundle) {
    const QueryAst& ast = query.ast();
    const FeatureTable* table = bundle.find_table(ast.from_table);
    if (!table) {
        throw TableNotInBundle("table '" + ast.from_table + "' is not present in case '" + bundle.case_id() + "'");
    }
    auto [names, rows] = Executor(ast, *table).run();
    return ResultTable{std::move(names), std::move(rows), query.canonical_text(), bundle.case_id()};
}

std::vector<BatchEntry> execute_batch(const std::vector<ValidatedQuery>& queries, const CaseBundle& bundle) {
    std::vector<BatchEntry> out;
    out.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        try {
            out.push_back({i, execute(queries[i], bundle)});
        } catch (const ArithmeticDomain& e) {
            out.push_back({i, ExecError{e.kind(), e.what(), e.row()}});
        } catch (const Error& e) {
            out.push_back({i, ExecError{e.kind(), e.what(), std::nullopt}});
        }
    }
    return out;
}

namespace {

std::string csv_field(const Value& v) {
    if (v.is_null()) return "";
    std::string s = v.to_string();
    if (v.is_text() && (s.empty() || s.find_first_of(",\"\n\r") != std::string::npos)) {
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + "\"";
    }
    return s;
}

}  // namespace

std::string result_to_csv(const ResultTable& table) {
    std::ostringstream out;
    for (std::size_t i = 0; i < table.column_names.size(); ++i) {
        if (i) out << ',';
        out << csv_field(Value::text(table.column_names[i]));
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << csv_field(row[i]);
        }
        out << '\n';
    }
    return out.str();
}

std::string result_to_text(const ResultTable& table) {
    const std::size_t ncol = table.column_names.size();
    std::vector<std::vector<std::string>> cells;
    cells.push_back(table.column_names);
    for (const auto& row : table.rows) {
        std::vector<std::string> line;
        for (const auto& v : row) line.push_back(v.to_string());
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(ncol, 0);
    for (const auto& line : cells) {
        for (std::size_t i = 0; i < ncol; ++i) width[i] = std::max(width[i], line[i].size());
    }
    std::ostringstream out;
    for (std::size_t li = 0; li < cells.size(); ++li) {
        for (std::size_t i = 0; i < ncol; ++i) {
            if (i) out << " | ";
            out << cells[li][i] << std::string(width[i] - cells[li][i].size(), ' ');
        }
        out << '\n';
        if (li == 0) {
            for (std::size_t i = 0; i < ncol; ++i) {
                if (i) out << "-+-";
                out << std::string(width[i], '-');
            }
            out << '\n';
        }
    }
    out << "(" << table.rows.size() << (table.rows.size() == 1 ? " row)" : " rows)") << '\n';
    return out.str();
}

}  // namespace evidencesql
