#include "ormlens/validate.hpp"

#include "typing.hpp"

#include <functional>
#include <map>
#include <set>

namespace ormlens {

namespace {

class Validator {
public:
    explicit Validator(const AppIR& ir) : ir_(ir) {}

    std::vector<Diagnostic> run()
    {
        check_models();
        check_routes();
        for (const auto& h : ir_.helpers) {
            Scope scope;
            for (const auto& p : h.params) {
                scope.vars.insert(p.name);
                if (ir_.model(p.type))
                    scope.types[p.name] = p.type;
            }
            detail::collect_types(ir_, h.body, scope.types);
            scope.params = nullptr;
            check_block(h.body, scope);
        }
        for (const auto& c : ir_.controllers) {
            for (const auto& a : c.actions) {
                Scope scope;
                std::set<std::string> params(a.params.begin(), a.params.end());
                scope.params = &params;
                detail::collect_types(ir_, a.body, scope.types);
                check_block(a.body, scope);
            }
        }
        return std::move(out_);
    }

private:
    struct Scope {
        std::set<std::string> vars;
        detail::TypeEnv types;
        const std::set<std::string>* params = nullptr; // null inside helpers
    };

    void unresolved(const std::string& name, SourceLoc loc, const std::string& what)
    {
        out_.push_back({DiagnosticKind::UnresolvedReference, name, what + " '" + name + "' is not declared", loc});
    }

    void invalid(const std::string& name, SourceLoc loc, const std::string& message)
    {
        out_.push_back({DiagnosticKind::InvalidDeclaration, name, message, loc});
    }

    void check_models()
    {
        std::set<std::string> tables;
        for (const auto& m : ir_.models) {
            if (!tables.insert(m.table).second)
                invalid(m.table, m.loc, "table '" + m.table + "' is mapped by more than one model");
            int ids = 0;
            std::set<std::string> names;
            for (const auto& f : m.fields) {
                if (f.name == "id")
                    ++ids;
                if (!names.insert(f.name).second && f.name != "id")
                    invalid(f.name, f.loc, "field '" + f.name + "' declared twice in " + m.name);
                if (f.kind == FieldKind::String && f.maxLen <= 0)
                    invalid(f.name, f.loc, "string field '" + f.name + "' needs a positive length");
            }
            if (ids != 1 || m.fields.empty() || m.fields.front().name != "id")
                invalid(m.name, m.loc, "model " + m.name + " must have exactly one primary key 'id' first");
            for (const auto& a : m.associations) {
                const ModelDecl* target = ir_.model(a.target);
                if (!target) {
                    unresolved(a.target, a.loc, "model");
                    continue;
                }
                const ModelDecl& owner = a.kind == AssocKind::BelongsTo ? m : *target;
                if (!owner.field(a.foreignKey))
                    unresolved(a.foreignKey, a.loc, "foreign key column of " + owner.name);
            }
        }
    }

    void check_routes()
    {
        std::map<std::pair<std::string, std::string>, HttpMethod> seen;
        for (const auto& r : ir_.routes) {
            auto [it, fresh] = seen.emplace(std::pair{r.controller, r.action}, r.method);
            if (!fresh && it->second != r.method)
                invalid(r.controller + "." + r.action, {}, "route maps to two HTTP methods");
            if (!ir_.action({r.controller, r.action}))
                unresolved(r.controller + "." + r.action, {}, "action");
        }
    }

    // Params referenced by a helper, including through helpers it calls.
    const std::set<std::pair<std::string, SourceLoc>>& helper_params(const HelperDecl& h)
    {
        if (auto it = helperParams_.find(h.name); it != helperParams_.end())
            return it->second;
        auto& acc = helperParams_[h.name]; // empty while in progress: breaks recursion
        std::set<std::pair<std::string, SourceLoc>> found;
        std::function<void(const Expr&)> expr = [&](const Expr& e) {
            visit_expr(e, [&](const Expr& sub) {
                if (const auto* p = std::get_if<ParamExpr>(&sub.node))
                    found.insert({p->name, sub.loc});
                if (const auto* c = std::get_if<CallExpr>(&sub.node))
                    if (const HelperDecl* callee = ir_.helper(c->callee))
                        for (const auto& x : helper_params(*callee))
                            found.insert(x);
            });
        };
        for_each_expr(h.body, expr);
        acc = found;
        return helperParams_[h.name];
    }

    static void visit_expr(const Expr& e, const std::function<void(const Expr&)>& fn)
    {
        fn(e);
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, FieldExpr>) {
                    visit_expr(*n.base, fn);
                } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                    visit_expr(*n.lhs, fn);
                    visit_expr(*n.rhs, fn);
                } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                    visit_expr(*n.operand, fn);
                } else if constexpr (std::is_same_v<T, CallExpr>) {
                    for (const auto& a : n.args)
                        visit_expr(*a, fn);
                } else if constexpr (std::is_same_v<T, QueryExpr>) {
                    if (n.base)
                        visit_expr(*n.base, fn);
                    for (const auto& op : n.ops) {
                        for (const auto& t : op.terms)
                            visit_expr(*t.value, fn);
                        if (op.arg)
                            visit_expr(*op.arg, fn);
                    }
                } else if constexpr (std::is_same_v<T, CreateExpr>) {
                    for (const auto& f : n.fields)
                        visit_expr(*f.value, fn);
                }
            },
            e.node);
    }

    static void for_each_expr(const Block& body, const std::function<void(const Expr&)>& fn)
    {
        for (const auto& s : body) {
            std::visit(
                [&](const auto& n) {
                    using T = std::decay_t<decltype(n)>;
                    if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt> ||
                                  std::is_same_v<T, FieldAssignStmt> || std::is_same_v<T, GlobalAssignStmt> ||
                                  std::is_same_v<T, ReturnStmt>) {
                        fn(*n.value);
                    } else if constexpr (std::is_same_v<T, ExprStmt>) {
                        fn(*n.expr);
                    } else if constexpr (std::is_same_v<T, ForStmt>) {
                        fn(*n.collection);
                        for_each_expr(n.body, fn);
                    } else if constexpr (std::is_same_v<T, IfStmt>) {
                        fn(*n.cond);
                        for_each_expr(n.then_body, fn);
                        for_each_expr(n.else_body, fn);
                    } else if constexpr (std::is_same_v<T, RenderStmt>) {
                        for (const auto& a : n.args)
                            fn(*a);
                    } else if constexpr (std::is_same_v<T, LinkStmt>) {
                        for (const auto& a : n.args)
                            fn(*a.value);
                    } else if constexpr (std::is_same_v<T, FormStmt>) {
                        for (const auto& a : n.hidden)
                            fn(*a.value);
                    }
                },
                s->node);
        }
    }

    void check_column(const ModelDecl& m, const ColumnPath& c, SourceLoc loc)
    {
        const ModelDecl* target = &m;
        if (!c.assoc.empty()) {
            const Association* a = m.association(c.assoc);
            if (!a) {
                unresolved(c.assoc, loc, "association of " + m.name);
                return;
            }
            target = ir_.model(a->target);
            if (!target)
                return;
        }
        if (!target->field(c.column))
            unresolved(c.column, loc, "column of " + target->name);
    }

    void check_expr(const Expr& e, Scope& scope)
    {
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, ParamExpr>) {
                    if (scope.params && !scope.params->count(n.name))
                        unresolved(":" + n.name, e.loc, "parameter");
                } else if constexpr (std::is_same_v<T, VarExpr>) {
                    if (!scope.vars.count(n.name) && !ir_.has_global(n.name))
                        unresolved(n.name, e.loc, "variable");
                } else if constexpr (std::is_same_v<T, FieldExpr>) {
                    check_expr(*n.base, scope);
                } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                    check_expr(*n.lhs, scope);
                    check_expr(*n.rhs, scope);
                } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                    check_expr(*n.operand, scope);
                } else if constexpr (std::is_same_v<T, CallExpr>) {
                    for (const auto& a : n.args)
                        check_expr(*a, scope);
                    if (const HelperDecl* h = ir_.helper(n.callee)) {
                        if (h->params.size() != n.args.size())
                            invalid(n.callee, e.loc,
                                    "helper " + n.callee + " takes " + std::to_string(h->params.size()) + " arguments");
                        if (scope.params)
                            for (const auto& [p, loc] : helper_params(*h))
                                if (!scope.params->count(p))
                                    unresolved(":" + p, loc, "parameter");
                    } else if (is_utility_function(n.callee)) {
                        int arity = utility_arity(n.callee);
                        if (arity >= 0 && static_cast<std::size_t>(arity) != n.args.size())
                            invalid(n.callee, e.loc,
                                    n.callee + " takes " + std::to_string(arity) + " arguments");
                    } else {
                        unresolved(n.callee, e.loc, "function");
                    }
                } else if constexpr (std::is_same_v<T, QueryExpr>) {
                    std::string model = n.model;
                    if (n.base) {
                        check_expr(*n.base, scope);
                        model = detail::expr_model(ir_, *n.base, scope.types);
                    } else if (!ir_.model(n.model)) {
                        unresolved(n.model, e.loc, "model");
                        return;
                    }
                    const ModelDecl* m = ir_.model(model);
                    for (const auto& op : n.ops) {
                        for (const auto& t : op.terms) {
                            check_expr(*t.value, scope);
                            if (m)
                                check_column(*m, t.column, e.loc);
                        }
                        if (op.arg)
                            check_expr(*op.arg, scope);
                        if (!m)
                            continue;
                        if (op.kind == QueryOpKind::Includes) {
                            for (const auto& a : op.names)
                                if (!m->association(a))
                                    unresolved(a, e.loc, "association of " + m->name);
                        } else if (op.kind == QueryOpKind::Select) {
                            for (const auto& c : op.names)
                                if (!m->field(c))
                                    unresolved(c, e.loc, "column of " + m->name);
                        } else if (op.kind == QueryOpKind::Order || op.kind == QueryOpKind::Group) {
                            check_column(*m, op.column, e.loc);
                        }
                    }
                } else if constexpr (std::is_same_v<T, NewExpr>) {
                    if (!ir_.model(n.model))
                        unresolved(n.model, e.loc, "model");
                } else if constexpr (std::is_same_v<T, CreateExpr>) {
                    const ModelDecl* m = ir_.model(n.model);
                    if (!m)
                        unresolved(n.model, e.loc, "model");
                    for (const auto& f : n.fields) {
                        check_expr(*f.value, scope);
                        if (m && !m->field(f.name))
                            unresolved(f.name, f.value->loc, "column of " + m->name);
                    }
                }
            },
            e.node);
    }

    void check_target(const std::string& controller, const std::string& action, SourceLoc loc)
    {
        if (!ir_.action({controller, action}))
            unresolved(controller + "." + action, loc, "action");
    }

    void check_block(const Block& body, Scope& scope)
    {
        for (const auto& s : body) {
            std::visit(
                [&](const auto& n) {
                    using T = std::decay_t<decltype(n)>;
                    if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
                        check_expr(*n.value, scope);
                        scope.vars.insert(n.name);
                    } else if constexpr (std::is_same_v<T, FieldAssignStmt>) {
                        check_expr(*n.value, scope);
                        if (!scope.vars.count(n.target)) {
                            unresolved(n.target, s->loc, "variable");
                        } else if (auto it = scope.types.find(n.target); it != scope.types.end()) {
                            const ModelDecl* m = ir_.model(it->second);
                            if (m && !m->field(n.field))
                                unresolved(n.field, s->loc, "column of " + m->name);
                        }
                    } else if constexpr (std::is_same_v<T, SaveStmt>) {
                        if (!scope.vars.count(n.target))
                            unresolved(n.target, s->loc, "variable");
                    } else if constexpr (std::is_same_v<T, ForStmt>) {
                        check_expr(*n.collection, scope);
                        scope.vars.insert(n.var);
                        check_block(n.body, scope);
                    } else if constexpr (std::is_same_v<T, IfStmt>) {
                        check_expr(*n.cond, scope);
                        check_block(n.then_body, scope);
                        check_block(n.else_body, scope);
                    } else if constexpr (std::is_same_v<T, RenderStmt>) {
                        for (const auto& a : n.args)
                            check_expr(*a, scope);
                    } else if constexpr (std::is_same_v<T, LinkStmt>) {
                        for (const auto& a : n.args)
                            check_expr(*a.value, scope);
                        check_target(n.controller, n.action, s->loc);
                    } else if constexpr (std::is_same_v<T, FormStmt>) {
                        for (const auto& a : n.hidden)
                            check_expr(*a.value, scope);
                        check_target(n.controller, n.action, s->loc);
                    } else if constexpr (std::is_same_v<T, GlobalAssignStmt>) {
                        check_expr(*n.value, scope);
                        if (!ir_.has_global(n.name))
                            unresolved(n.name, s->loc, "global");
                    } else if constexpr (std::is_same_v<T, ReturnStmt>) {
                        check_expr(*n.value, scope);
                    } else if constexpr (std::is_same_v<T, ExprStmt>) {
                        check_expr(*n.expr, scope);
                    }
                },
                s->node);
        }
    }

    const AppIR& ir_;
    std::vector<Diagnostic> out_;
    std::map<std::string, std::set<std::pair<std::string, SourceLoc>>> helperParams_;
};

} // namespace

std::vector<Diagnostic> validate(const AppIR& ir)
{
    return Validator(ir).run();
}

} // namespace ormlens
