#pragma once

// Action Flow Graphs: per-action control/data graphs with helpers inlined, plus the
// next-action edges that link actions through rendered links and forms.

#include "ormlens/app_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ormlens {

enum class NodeKind {
    Entry,
    Exit,
    Query,
    Render,
    Branch,
    LoopHead,
    LoopEnd,
    Assign,
    GlobalAssign,
    Link,
    Form,
    ParamRead,
    GlobalRead, // initial value of a global read inside the action
    NoOp,       // replaces a recursive helper call beyond depth 1
};
const char* node_kind_name(NodeKind k);

enum class EdgeKind { Control, Data, NextAction };
const char* edge_kind_name(EdgeKind k);

enum class SinkCategory { QueryParam, RenderedInView, BranchCondition, GlobalVariable };
enum class SourceCategory { UserInput, ReadQuery, ConstantValue, UtilityCall, GlobalVariable };
const char* sink_category_name(SinkCategory c);
const char* source_category_name(SourceCategory c);

enum class ValueSourceKind { Const, Param, Var, QueryResult, Global, Utility };
const char* value_source_kind_name(ValueSourceKind k);

struct ValueSource {
    ValueSourceKind kind = ValueSourceKind::Const;
    Value constant;     // Const
    std::string name;   // Param, Global, Utility
    int node = -1;      // Var, QueryResult
    std::string column; // Var, QueryResult (empty = whole value)
    friend auto operator<=>(const ValueSource& a, const ValueSource& b)
    {
        if (auto c = a.kind <=> b.kind; c != 0)
            return c;
        if (auto c = a.name <=> b.name; c != 0)
            return c;
        if (auto c = a.node <=> b.node; c != 0)
            return c;
        if (auto c = a.column <=> b.column; c != 0)
            return c;
        if (value_less(a.constant, b.constant))
            return std::strong_ordering::less;
        if (value_less(b.constant, a.constant))
            return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }
    friend bool operator==(const ValueSource& a, const ValueSource& b) { return (a <=> b) == 0; }
};

enum class QueryKind { Select, Insert, Save };
enum class Aggregate { None, Count, Any, FindByPk };
const char* query_kind_name(QueryKind k);
const char* aggregate_name(Aggregate a);

/// A column as seen by a query result. `binding` is empty for the root model and names the
/// eager-loaded association otherwise.
struct ColumnRef {
    std::string binding;
    std::string model;
    std::string column;
    friend auto operator<=>(const ColumnRef&, const ColumnRef&) = default;
    friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
};
std::string to_string(const ColumnRef& c);

struct Predicate {
    ColumnPath column;
    CmpOp op = CmpOp::Eq;
    ExprRef value;
    std::vector<ValueSource> sources;
};

struct WriteColumn {
    std::string column;
    ExprRef value;
    std::vector<ValueSource> sources;
};

/// Canonical form of one ORM query chain.
struct QueryDescriptor {
    QueryKind kind = QueryKind::Select;
    std::string rootModel;
    std::vector<Predicate> predicates;
    std::vector<std::string> eagerLoads;
    std::optional<ColumnPath> orderBy;
    std::optional<ColumnPath> groupBy;
    ExprRef limit;
    ExprRef offset;
    std::vector<ValueSource> limitSources;
    std::vector<ValueSource> offsetSources;
    Aggregate aggregate = Aggregate::None;
    std::vector<std::string> select; // explicit root projection, empty = all columns
    std::vector<ColumnRef> projection;
    std::vector<WriteColumn> writes; // Insert
    int chainPrefixOf = -1;

    bool is_read() const { return kind == QueryKind::Select; }
};

/// Fold a list of chain operations over `model` into a descriptor (sources left empty).
/// Throws UnresolvedReference for unknown models, associations or columns.
QueryDescriptor descriptor_from_ops(const AppIR& ir, const std::string& model, const std::vector<QueryOp>& ops);

/// Recompute `projection` from rootModel, select and eagerLoads.
void compute_projection(const AppIR& ir, QueryDescriptor& q);

/// Model reached through an association binding of `root` ("" = root itself).
const ModelDecl* binding_model(const AppIR& ir, const ModelDecl& root, const std::string& binding);

/// Slots identify which part of a node a use or local source belongs to.
namespace slot {
inline constexpr int General = -1;
inline constexpr int Limit = 1000;
inline constexpr int Offset = 1001;
inline constexpr int WriteBase = 2000;
inline constexpr int ChainBase = 3000; // relation variable a chain extends; carries no data edge
} // namespace slot

struct VarUse {
    std::string var;
    std::vector<std::string> path; // field/association accesses applied to the variable
    bool alias = false;            // the node's defined value is exactly this variable (+path)
    bool whole = false;            // the value is consumed as a whole record (render, link arg)
    int slot = slot::General;
    std::vector<int> defs;         // reaching definitions, filled by the builder
};

struct LocalSource {
    SourceCategory category = SourceCategory::ConstantValue;
    Value constant;
    std::string name;
    int slot = slot::General;
};

struct AfgNode {
    int id = 0;
    NodeKind kind = NodeKind::Entry;
    SourceLoc loc;
    std::string defines; // variable (or `obj.field` pseudo-variable) defined here
    std::vector<VarUse> uses;
    std::vector<LocalSource> locals;

    // Assign to a persisted field: target object variable, field and owning model.
    std::string target;
    std::string field;
    std::string model;

    std::optional<QueryDescriptor> query;
    bool issued = true; // false for a relation that is only ever extended by other chains

    ActionId linkTarget;                 // Link / Form
    std::vector<std::string> formFields; // Form: user-filled fields
    std::string name;                    // ParamRead / GlobalRead / GlobalAssign name

    int loop = -1;    // innermost enclosing LoopHead
    int partner = -1; // LoopHead <-> LoopEnd

    bool persistent_write() const { return kind == NodeKind::Assign && !model.empty(); }
};

struct AfgEdge {
    int from = 0;
    int to = 0;
    EdgeKind kind = EdgeKind::Control;
    std::string var; // Data edges: the variable carried
    friend bool operator==(const AfgEdge&, const AfgEdge&) = default;
};

class Afg {
public:
    ActionId action;
    HttpMethod method = HttpMethod::Get;
    std::vector<AfgNode> nodes;
    std::vector<AfgEdge> edges;
    int entry = 0;
    int exit = 1;

    const AfgNode& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
    std::vector<int> successors(int id, EdgeKind kind) const;
    std::vector<int> predecessors(int id, EdgeKind kind) const;
    /// Issued query nodes (reads and writes) in id order.
    std::vector<int> query_nodes() const;
    std::vector<int> nodes_of_kind(NodeKind k) const;
    /// True if `node` lies inside the body of `loopHead`.
    bool in_loop(int node, int loopHead) const;
};

/// Throws Error(UnknownAction) if the action is not declared.
Afg build_afg(const AppIR& ir, const ActionId& action);

struct NextActionEdge {
    ActionId from;
    ActionId to;
    int viaNode = -1; // Link/Form node in the source AFG
    HttpMethod method = HttpMethod::Get;
    SourceLoc loc;
};

struct ActionGraph {
    std::vector<Afg> afgs;
    std::vector<NextActionEdge> edges;

    const Afg* afg(const ActionId& id) const;
    std::vector<const NextActionEdge*> outgoing(const ActionId& id) const;
};

std::vector<Afg> build_all_afgs(const AppIR& ir);

/// Throws Error(UnroutedTarget) when a link or form names an undeclared action.
ActionGraph build_action_graph(const AppIR& ir, std::vector<Afg> afgs);

/// Graphviz rendering of every AFG plus next-action edges.
std::string to_dot(const ActionGraph& graph);

} // namespace ormlens
