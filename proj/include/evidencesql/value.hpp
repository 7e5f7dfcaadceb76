#pragma once

#include <cstdint>
#include <string>
#include <variant>

namespace evidencesql {

enum class Dtype { Integer, Real, Text };

/// A single cell: Int, finite Real, Text or Null.
class Value {
public:
    Value() = default;

    static Value integer(std::int64_t v);
    /// Throws std::domain_error for NaN or infinities.
    static Value real(double v);
    static Value text(std::string v);

    bool is_null() const { return std::holds_alternative<std::monostate>(data_); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(data_); }
    bool is_real() const { return std::holds_alternative<double>(data_); }
    bool is_text() const { return std::holds_alternative<std::string>(data_); }
    bool is_numeric() const { return is_int() || is_real(); }

    std::int64_t as_int() const { return std::get<std::int64_t>(data_); }
    double as_real() const { return std::get<double>(data_); }
    const std::string& as_text() const { return std::get<std::string>(data_); }
    /// Int or Real widened to double.
    double as_number() const;

    /// Structural equality: Int(1) != Real(1.0); Null == Null.
    friend bool operator==(const Value& a, const Value& b) { return a.data_ == b.data_; }

    /// Human-readable rendering; reals use the shortest round-trip form.
    std::string to_string() const;

private:
    std::variant<std::monostate, std::int64_t, double, std::string> data_;
};

/// Shortest decimal text that parses back to exactly `v`, always containing
/// a '.' or an exponent so that it re-reads as a real.
std::string format_real_roundtrip(double v);

const char* dtype_name(Dtype d);

}  // namespace evidencesql
