#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <variant>

namespace ormlens {

/// Scalar value stored in a table cell or produced by a literal.
/// Datetimes are carried as epoch seconds in the integer alternative.
using Value = std::variant<std::monostate, bool, std::int64_t, double, std::string>;

inline bool is_null(const Value& v) { return std::holds_alternative<std::monostate>(v); }

/// SQL-style comparison. Returns nullopt-like "unknown" as `std::partial_ordering::unordered`
/// when either side is null or the kinds are not comparable.
std::partial_ordering compare_values(const Value& a, const Value& b);

/// Total order used for sorting and grouping: null < bool < number < string.
bool value_less(const Value& a, const Value& b);

bool truthy(const Value& v);

/// Numeric view; null and non-numeric strings read as 0 (Ruby's `to_i` convention).
double as_number(const Value& v);
std::int64_t as_int(const Value& v);

/// Literal rendering used in canonical SQL: 'str' with '' escaping, TRUE/FALSE, NULL.
std::string sql_literal(const Value& v);

/// Rendering used in reports and text output.
std::string display_value(const Value& v);

/// Source position of a statement or expression. `stmt` is the file-order statement id
/// (-1 for declarations that are not statements).
struct SourceLoc {
    int line = 0;
    int column = 0;
    int stmt = -1;

    friend auto operator<=>(const SourceLoc&, const SourceLoc&) = default;
    friend bool operator==(const SourceLoc&, const SourceLoc&) = default;
};

std::string to_string(const SourceLoc& loc);

} // namespace ormlens
