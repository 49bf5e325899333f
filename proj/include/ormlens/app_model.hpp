#pragma once

// Application IR for RailLite sources: models, controllers/actions, helpers and the
// statement/expression AST of their bodies.

#include "ormlens/value.hpp"

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ormlens {

/// Immutable shared node handle whose equality is structural.
template <class T>
class Ref {
public:
    Ref() = default;
    Ref(std::shared_ptr<const T> p) : p_(std::move(p)) {}

    const T& operator*() const { return *p_; }
    const T* operator->() const { return p_.get(); }
    const T* get() const { return p_.get(); }
    explicit operator bool() const { return p_ != nullptr; }

    friend bool operator==(const Ref& a, const Ref& b)
    {
        if (!a.p_ || !b.p_)
            return a.p_ == b.p_;
        return a.p_ == b.p_ || *a.p_ == *b.p_;
    }

private:
    std::shared_ptr<const T> p_;
};

struct Expr;
struct Stmt;
using ExprRef = Ref<Expr>;
using StmtRef = Ref<Stmt>;
using Block = std::vector<StmtRef>;

enum class BinOp { Eq, Ne, Lt, Gt, Le, Ge, In, Add, Sub, Mul, Div, And, Or };
enum class UnOp { Not, Neg };
/// Comparison operators admitted inside `where(...)`.
enum class CmpOp { Eq, Ne, Lt, Gt, In };

const char* binop_text(BinOp op);
const char* cmpop_text(CmpOp op);

/// Column named inside a query chain: `col` or `assoc.col` (an eager-loaded association).
struct ColumnPath {
    std::string assoc;
    std::string column;
    friend bool operator==(const ColumnPath&, const ColumnPath&) = default;
};

struct WhereTerm {
    ColumnPath column;
    CmpOp op = CmpOp::Eq;
    ExprRef value;
    friend bool operator==(const WhereTerm&, const WhereTerm&) = default;
};

enum class QueryOpKind { Where, Includes, Order, Limit, Offset, Group, Select, Count, Any, Find };
const char* query_op_name(QueryOpKind k);
bool is_terminal_op(QueryOpKind k);

struct QueryOp {
    QueryOpKind kind = QueryOpKind::Where;
    std::vector<WhereTerm> terms;     // where
    std::vector<std::string> names;   // includes, select
    ColumnPath column;                // order, group
    ExprRef arg;                      // limit, offset, find
    friend bool operator==(const QueryOp&, const QueryOp&) = default;
};

struct NamedArg {
    std::string name;
    ExprRef value;
    friend bool operator==(const NamedArg&, const NamedArg&) = default;
};

struct LiteralExpr {
    Value value;
    friend bool operator==(const LiteralExpr&, const LiteralExpr&) = default;
};
struct ParamExpr {
    std::string name;
    friend bool operator==(const ParamExpr&, const ParamExpr&) = default;
};
struct VarExpr {
    std::string name;
    friend bool operator==(const VarExpr&, const VarExpr&) = default;
};
struct FieldExpr {
    ExprRef base;
    std::string field;
    friend bool operator==(const FieldExpr&, const FieldExpr&) = default;
};
struct BinaryExpr {
    BinOp op = BinOp::Eq;
    ExprRef lhs;
    ExprRef rhs;
    friend bool operator==(const BinaryExpr&, const BinaryExpr&) = default;
};
struct UnaryExpr {
    UnOp op = UnOp::Not;
    ExprRef operand;
    friend bool operator==(const UnaryExpr&, const UnaryExpr&) = default;
};
/// Call of a helper `def` or of a builtin utility (now, today, rand, uuid, ...).
struct CallExpr {
    std::string callee;
    std::vector<ExprRef> args;
    friend bool operator==(const CallExpr&, const CallExpr&) = default;
};
/// ORM query chain. Either rooted at a model (`Todo.where(...)`) or extending an expression
/// holding a relation (`issues.includes(statuses)`).
struct QueryExpr {
    std::string model;
    ExprRef base;
    std::vector<QueryOp> ops;
    friend bool operator==(const QueryExpr&, const QueryExpr&) = default;
};
struct NewExpr {
    std::string model;
    friend bool operator==(const NewExpr&, const NewExpr&) = default;
};
struct CreateExpr {
    std::string model;
    std::vector<NamedArg> fields;
    friend bool operator==(const CreateExpr&, const CreateExpr&) = default;
};

struct Expr {
    int id = 0;
    SourceLoc loc;
    std::variant<LiteralExpr, ParamExpr, VarExpr, FieldExpr, BinaryExpr, UnaryExpr, CallExpr, QueryExpr,
                 NewExpr, CreateExpr>
        node;
    friend bool operator==(const Expr&, const Expr&) = default;
};

struct LetStmt {
    std::string name;
    ExprRef value;
    friend bool operator==(const LetStmt&, const LetStmt&) = default;
};
struct AssignStmt {
    std::string name;
    ExprRef value;
    friend bool operator==(const AssignStmt&, const AssignStmt&) = default;
};
struct FieldAssignStmt {
    std::string target;
    std::string field;
    ExprRef value;
    friend bool operator==(const FieldAssignStmt&, const FieldAssignStmt&) = default;
};
struct ForStmt {
    std::string var;
    ExprRef collection;
    Block body;
    friend bool operator==(const ForStmt&, const ForStmt&) = default;
};
struct IfStmt {
    ExprRef cond;
    Block then_body;
    Block else_body;
    friend bool operator==(const IfStmt&, const IfStmt&) = default;
};
struct RenderStmt {
    std::vector<ExprRef> args;
    friend bool operator==(const RenderStmt&, const RenderStmt&) = default;
};
struct LinkStmt {
    std::string controller;
    std::string action;
    std::vector<NamedArg> args;
    friend bool operator==(const LinkStmt&, const LinkStmt&) = default;
};
/// `form_to C.a(title, id: t.id)`: bare names are user-filled fields, named args are hidden values.
struct FormStmt {
    std::string controller;
    std::string action;
    std::vector<std::string> fields;
    std::vector<NamedArg> hidden;
    friend bool operator==(const FormStmt&, const FormStmt&) = default;
};
struct GlobalAssignStmt {
    std::string name;
    ExprRef value;
    friend bool operator==(const GlobalAssignStmt&, const GlobalAssignStmt&) = default;
};
struct ReturnStmt {
    ExprRef value;
    friend bool operator==(const ReturnStmt&, const ReturnStmt&) = default;
};
struct SaveStmt {
    std::string target;
    friend bool operator==(const SaveStmt&, const SaveStmt&) = default;
};
struct ExprStmt {
    ExprRef expr;
    friend bool operator==(const ExprStmt&, const ExprStmt&) = default;
};

struct Stmt {
    int id = 0;
    SourceLoc loc;
    std::variant<LetStmt, AssignStmt, FieldAssignStmt, ForStmt, IfStmt, RenderStmt, LinkStmt, FormStmt,
                 GlobalAssignStmt, ReturnStmt, SaveStmt, ExprStmt>
        node;
    friend bool operator==(const Stmt&, const Stmt&) = default;
};

enum class FieldKind { Int, Float, Bool, Datetime, String, Text };
const char* field_kind_name(FieldKind k);

struct FieldDecl {
    std::string name;
    FieldKind kind = FieldKind::Int;
    int maxLen = 0;
    SourceLoc loc;
    friend bool operator==(const FieldDecl&, const FieldDecl&) = default;
};

enum class AssocKind { BelongsTo, HasOne, HasMany };
const char* assoc_kind_name(AssocKind k);

struct Association {
    AssocKind kind = AssocKind::BelongsTo;
    std::string name;
    std::string target;
    /// belongs_to: column of the declaring model; has_one/has_many: column of the target.
    std::string foreignKey;
    SourceLoc loc;
    friend bool operator==(const Association&, const Association&) = default;
};

struct ModelDecl {
    std::string name;
    std::string table;
    std::vector<FieldDecl> fields; // fields[0] is always the implicit `id: int`
    std::vector<Association> associations;
    SourceLoc loc;

    const FieldDecl* field(std::string_view n) const;
    const Association* association(std::string_view n) const;
    friend bool operator==(const ModelDecl&, const ModelDecl&) = default;
};

enum class HttpMethod { Get, Post };
const char* http_method_name(HttpMethod m);

struct ActionDecl {
    std::string controller;
    std::string name;
    HttpMethod method = HttpMethod::Get;
    std::vector<std::string> params;
    Block body;
    SourceLoc loc;
    friend bool operator==(const ActionDecl&, const ActionDecl&) = default;
};

struct ControllerDecl {
    std::string name;
    std::vector<ActionDecl> actions;
    SourceLoc loc;
    friend bool operator==(const ControllerDecl&, const ControllerDecl&) = default;
};

struct HelperParam {
    std::string name;
    std::string type; // optional annotation, informational
    friend bool operator==(const HelperParam&, const HelperParam&) = default;
};

struct HelperDecl {
    std::string name;
    std::vector<HelperParam> params;
    Block body;
    SourceLoc loc;
    friend bool operator==(const HelperDecl&, const HelperDecl&) = default;
};

struct GlobalDecl {
    std::string name;
    Value init;
    SourceLoc loc;
    friend bool operator==(const GlobalDecl&, const GlobalDecl&) = default;
};

struct Route {
    std::string controller;
    std::string action;
    HttpMethod method = HttpMethod::Get;
    std::string path;
    friend bool operator==(const Route&, const Route&) = default;
};

struct ActionId {
    std::string controller;
    std::string action;
    friend auto operator<=>(const ActionId&, const ActionId&) = default;
    friend bool operator==(const ActionId&, const ActionId&) = default;
};
std::string to_string(const ActionId& a);

struct AppIR {
    std::string name;
    std::vector<ModelDecl> models;
    std::vector<ControllerDecl> controllers;
    std::vector<HelperDecl> helpers;
    std::vector<GlobalDecl> globals;
    std::vector<Route> routes;

    const ModelDecl* model(std::string_view name) const;
    const ModelDecl* model_by_table(std::string_view table) const;
    const ActionDecl* action(const ActionId& id) const;
    const HelperDecl* helper(std::string_view name) const;
    bool has_global(std::string_view name) const;
    /// All actions in declaration order.
    std::vector<ActionId> action_ids() const;
    std::size_t action_count() const;
    friend bool operator==(const AppIR&, const AppIR&) = default;
};

/// Builtin zero-side-effect utility functions recognised in call position.
bool is_utility_function(std::string_view name);
/// Number of arguments a utility takes; -1 for variadic ones (concat, format).
int utility_arity(std::string_view name);

/// Bytes a column occupies for unused-data accounting.
int column_byte_size(const FieldDecl& field);

/// Default table name: lower-case model name, naive English plural.
std::string default_table_name(std::string_view model);

/// Rebuild `routes` from controller/action declarations.
void rebuild_routes(AppIR& ir);

} // namespace ormlens
