#include "ormlens/value.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

namespace ormlens {

namespace {

int kind_rank(const Value& v)
{
    switch (v.index()) {
    case 0: return 0;
    case 1: return 1;
    case 2:
    case 3: return 2;
    default: return 3;
    }
}

bool is_numeric(const Value& v) { return v.index() == 2 || v.index() == 3; }

std::string format_double(double d)
{
    if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) {
        std::ostringstream os;
        os << static_cast<long long>(d) << ".0";
        return os.str();
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    // shortest representation that round-trips
    for (int prec = 1; prec <= 17; ++prec) {
        char trial[64];
        std::snprintf(trial, sizeof trial, "%.*g", prec, d);
        if (std::strtod(trial, nullptr) == d)
            return trial;
    }
    return buf;
}

} // namespace

std::partial_ordering compare_values(const Value& a, const Value& b)
{
    if (is_null(a) || is_null(b))
        return std::partial_ordering::unordered;
    if (is_numeric(a) && is_numeric(b)) {
        if (a.index() == 2 && b.index() == 2)
            return std::get<std::int64_t>(a) <=> std::get<std::int64_t>(b);
        return as_number(a) <=> as_number(b);
    }
    if (a.index() != b.index())
        return std::partial_ordering::unordered;
    if (auto* s = std::get_if<std::string>(&a))
        return s->compare(std::get<std::string>(b)) <=> 0;
    if (auto* x = std::get_if<bool>(&a))
        return *x <=> std::get<bool>(b);
    return std::partial_ordering::unordered;
}

bool value_less(const Value& a, const Value& b)
{
    int ra = kind_rank(a), rb = kind_rank(b);
    if (ra != rb)
        return ra < rb;
    if (ra == 0)
        return false;
    if (ra == 2) {
        if (a.index() == 2 && b.index() == 2)
            return std::get<std::int64_t>(a) < std::get<std::int64_t>(b);
        double x = as_number(a), y = as_number(b);
        if (x != y)
            return x < y;
        return a.index() < b.index();
    }
    if (ra == 1)
        return std::get<bool>(a) < std::get<bool>(b);
    return std::get<std::string>(a) < std::get<std::string>(b);
}

bool truthy(const Value& v)
{
    switch (v.index()) {
    case 0: return false;
    case 1: return std::get<bool>(v);
    case 2: return std::get<std::int64_t>(v) != 0;
    case 3: return std::get<double>(v) != 0.0;
    default: return !std::get<std::string>(v).empty();
    }
}

double as_number(const Value& v)
{
    switch (v.index()) {
    case 1: return std::get<bool>(v) ? 1.0 : 0.0;
    case 2: return static_cast<double>(std::get<std::int64_t>(v));
    case 3: return std::get<double>(v);
    case 4: return std::strtod(std::get<std::string>(v).c_str(), nullptr);
    default: return 0.0;
    }
}

std::int64_t as_int(const Value& v)
{
    switch (v.index()) {
    case 1: return std::get<bool>(v) ? 1 : 0;
    case 2: return std::get<std::int64_t>(v);
    case 3: return static_cast<std::int64_t>(std::get<double>(v));
    case 4: return std::strtoll(std::get<std::string>(v).c_str(), nullptr, 10);
    default: return 0;
    }
}

std::string sql_literal(const Value& v)
{
    switch (v.index()) {
    case 0: return "NULL";
    case 1: return std::get<bool>(v) ? "TRUE" : "FALSE";
    case 2: return std::to_string(std::get<std::int64_t>(v));
    case 3: return format_double(std::get<double>(v));
    default: {
        std::string out = "'";
        for (char c : std::get<std::string>(v)) {
            if (c == '\'')
                out += "''";
            else
                out += c;
        }
        out += "'";
        return out;
    }
    }
}

std::string display_value(const Value& v)
{
    switch (v.index()) {
    case 0: return "nil";
    case 1: return std::get<bool>(v) ? "true" : "false";
    case 2: return std::to_string(std::get<std::int64_t>(v));
    case 3: return format_double(std::get<double>(v));
    default: return "\"" + std::get<std::string>(v) + "\"";
    }
}

std::string to_string(const SourceLoc& loc)
{
    return std::to_string(loc.line) + ":" + std::to_string(loc.column);
}

} // namespace ormlens
