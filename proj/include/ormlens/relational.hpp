#pragma once

// Relational form of ORM queries. SQL emission, the rewrites and the in-memory engine all
// work on RelQuery, so a suggested rewrite can be executed exactly as it is printed.

#include "ormlens/afg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ormlens {

struct RelColumn {
    std::string alias;
    std::string column;
    friend auto operator<=>(const RelColumn&, const RelColumn&) = default;
    friend bool operator==(const RelColumn&, const RelColumn&) = default;
};

/// A bound operand value: one scalar, or a list for IN.
struct BoundValue {
    std::vector<Value> values;
    bool list = false;
    friend bool operator==(const BoundValue&, const BoundValue&) = default;
};

enum class OperandKind { Column, Const, Param, Hole };

struct RelOperand {
    OperandKind kind = OperandKind::Const;
    RelColumn column;                // Column
    std::string name;                // Param
    std::optional<BoundValue> value; // Const always; Param and Hole once bound

    static RelOperand col(std::string alias, std::string column);
    static RelOperand constant(Value v);
    static RelOperand param(std::string name);
    static RelOperand hole();
    bool bound() const { return kind == OperandKind::Column || value.has_value(); }
    friend bool operator==(const RelOperand&, const RelOperand&) = default;
};

struct RelPredicate {
    RelColumn lhs;
    CmpOp op = CmpOp::Eq;
    RelOperand rhs;
    friend bool operator==(const RelPredicate&, const RelPredicate&) = default;
};

/// sources[0] is the FROM table (or view); later entries are INNER JOINs.
struct RelSource {
    std::string table;
    std::string alias;
    std::vector<RelPredicate> on;
    std::string assoc; // association that produced the join, if any
    friend bool operator==(const RelSource&, const RelSource&) = default;
};

struct RelOutput {
    RelColumn column;
    std::string as;
    friend bool operator==(const RelOutput&, const RelOutput&) = default;
};

enum class RelKind { Select, Insert, Update };
enum class Projection { All, SourceAll, Columns, Count };

struct RelQuery {
    RelKind kind = RelKind::Select;
    std::vector<RelSource> sources;
    std::vector<RelPredicate> where;
    Projection projection = Projection::All;
    int projectedSource = 0; // SourceAll
    std::vector<RelOutput> columns;
    bool distinct = false;
    bool any = false; // COUNT(*) consumed as a boolean
    std::optional<RelColumn> groupBy;
    std::optional<RelColumn> orderBy;
    std::optional<RelOperand> limit;
    std::optional<RelOperand> offset;
    std::vector<std::pair<std::string, RelOperand>> sets; // Insert / Update

    int source_index(const std::string& alias) const;
    bool aliased() const;
    friend bool operator==(const RelQuery&, const RelQuery&) = default;
};

struct ViewDef {
    std::string name;
    RelQuery query; // projection is Columns with every output named
    friend bool operator==(const ViewDef&, const ViewDef&) = default;
};

/// Values for the holes of one descriptor, by predicate index, plus limit/offset and writes.
struct QueryBindings {
    std::vector<std::optional<BoundValue>> predicates;
    std::optional<Value> limit;
    std::optional<Value> offset;
    std::vector<std::optional<Value>> writes; // Insert: by write index; Save: by non-key field order
};

/// Lower a descriptor. Literal operands become constants, `param(x)` operands become `:x`
/// parameters and everything else a `?` hole; `bindings` fills parameters and holes.
RelQuery lower_query(const AppIR& ir, const QueryDescriptor& q, const QueryBindings* bindings = nullptr);

/// Canonical SQL. Bound operands print as literals, unbound parameters as `:name`, holes as `?`.
std::string emit_sql(const RelQuery& q);
std::string emit_sql(const QueryDescriptor& q, const AppIR& ir);
std::string emit_view_sql(const ViewDef& v);

} // namespace ormlens
