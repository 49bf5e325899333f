#include "typing.hpp"

namespace ormlens::detail {

namespace {

constexpr int kMaxHelperDepth = 4;

std::string return_model(const AppIR& ir, const Block& body, const TypeEnv& env, int depth)
{
    for (const auto& s : body) {
        if (const auto* r = std::get_if<ReturnStmt>(&s->node))
            return expr_model(ir, *r->value, env, depth);
        std::string nested;
        if (const auto* f = std::get_if<ForStmt>(&s->node))
            nested = return_model(ir, f->body, env, depth);
        else if (const auto* i = std::get_if<IfStmt>(&s->node)) {
            nested = return_model(ir, i->then_body, env, depth);
            if (nested.empty())
                nested = return_model(ir, i->else_body, env, depth);
        }
        if (!nested.empty())
            return nested;
    }
    return {};
}

} // namespace

std::string expr_model(const AppIR& ir, const Expr& e, const TypeEnv& env, int depth)
{
    if (const auto* q = std::get_if<QueryExpr>(&e.node)) {
        if (!q->ops.empty()) {
            auto k = q->ops.back().kind;
            if (k == QueryOpKind::Count || k == QueryOpKind::Any)
                return {};
        }
        if (!q->model.empty())
            return q->model;
        return q->base ? expr_model(ir, *q->base, env, depth) : std::string();
    }
    if (const auto* v = std::get_if<VarExpr>(&e.node)) {
        auto it = env.find(v->name);
        return it == env.end() ? std::string() : it->second;
    }
    if (const auto* f = std::get_if<FieldExpr>(&e.node)) {
        std::string base = expr_model(ir, *f->base, env, depth);
        const ModelDecl* m = ir.model(base);
        if (!m)
            return {};
        const Association* a = m->association(f->field);
        return a ? a->target : std::string();
    }
    if (const auto* n = std::get_if<NewExpr>(&e.node))
        return n->model;
    if (const auto* c = std::get_if<CreateExpr>(&e.node))
        return c->model;
    if (const auto* call = std::get_if<CallExpr>(&e.node)) {
        const HelperDecl* h = ir.helper(call->callee);
        if (!h || depth >= kMaxHelperDepth)
            return {};
        TypeEnv inner;
        for (std::size_t i = 0; i < h->params.size(); ++i) {
            std::string t;
            if (ir.model(h->params[i].type))
                t = h->params[i].type;
            else if (i < call->args.size())
                t = expr_model(ir, *call->args[i], env, depth);
            if (!t.empty())
                inner[h->params[i].name] = t;
        }
        collect_types(ir, h->body, inner, depth + 1);
        return return_model(ir, h->body, inner, depth + 1);
    }
    return {};
}

void collect_types(const AppIR& ir, const Block& body, TypeEnv& env, int depth)
{
    auto bind = [&](const std::string& name, const ExprRef& value) {
        std::string t = expr_model(ir, *value, env, depth);
        if (!t.empty())
            env[name] = t;
    };
    for (const auto& s : body) {
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
                    bind(n.name, n.value);
                } else if constexpr (std::is_same_v<T, ForStmt>) {
                    bind(n.var, n.collection);
                    collect_types(ir, n.body, env, depth);
                } else if constexpr (std::is_same_v<T, IfStmt>) {
                    collect_types(ir, n.then_body, env, depth);
                    collect_types(ir, n.else_body, env, depth);
                }
            },
            s->node);
    }
}

} // namespace ormlens::detail
