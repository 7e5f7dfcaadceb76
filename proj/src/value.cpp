#include "evidencesql/value.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace evidencesql {

Value Value::integer(std::int64_t v) {
    Value out;
    out.data_ = v;
    return out;
}

Value Value::real(double v) {
    if (!std::isfinite(v)) {
        throw std::domain_error("real value must be finite");
    }
    Value out;
    out.data_ = v;
    return out;
}

Value Value::text(std::string v) {
    Value out;
    out.data_ = std::move(v);
    return out;
}

double Value::as_number() const {
    if (is_int()) return static_cast<double>(as_int());
    return as_real();
}

std::string Value::to_string() const {
    if (is_null()) return "NULL";
    if (is_int()) return std::to_string(as_int());
    if (is_real()) return format_real_roundtrip(as_real());
    return as_text();
}

std::string format_real_roundtrip(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string out(buf, end);
    if (out.find_first_of(".eE") == std::string::npos) {
        out += ".0";
    }
    return out;
}

const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::Integer: return "integer";
        case Dtype::Real: return "real";
        case Dtype::Text: return "text";
    }
    return "?";
}

}  // namespace evidencesql
