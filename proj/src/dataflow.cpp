#include "ormlens/dataflow.hpp"

#include <deque>

namespace ormlens {

namespace {

// `q` plus every query that extends it, directly or through other extensions.
std::set<int> chain_closure(const Afg& afg, int q)
{
    std::set<int> out{q};
    bool grew = true;
    while (grew) {
        grew = false;
        for (const auto& n : afg.nodes)
            if (n.query && n.query->chainPrefixOf >= 0 && out.count(n.query->chainPrefixOf) && out.insert(n.id).second)
                grew = true;
    }
    return out;
}

std::optional<SinkCategory> sink_kind(NodeKind k)
{
    switch (k) {
    case NodeKind::Query: return SinkCategory::QueryParam;
    case NodeKind::Render:
    case NodeKind::Link:
    case NodeKind::Form: return SinkCategory::RenderedInView;
    case NodeKind::Branch: return SinkCategory::BranchCondition;
    case NodeKind::GlobalAssign: return SinkCategory::GlobalVariable;
    default: return std::nullopt;
    }
}

} // namespace

SinkSet query_sinks(const Afg& afg, int q)
{
    SinkSet out;
    std::set<int> seen;
    std::deque<int> work;
    for (int s : chain_closure(afg, q))
        work.push_back(s);
    std::set<int> starts(work.begin(), work.end());
    while (!work.empty()) {
        int cur = work.front();
        work.pop_front();
        for (const auto& e : afg.edges) {
            if (e.kind != EdgeKind::Data || e.from != cur)
                continue;
            if (auto cat = sink_kind(afg.node(e.to).kind)) {
                out.insert({*cat, e.to});
                continue;
            }
            if (seen.insert(e.to).second && !starts.count(e.to))
                work.push_back(e.to);
        }
    }
    return out;
}

std::vector<SourceTerminal> source_terminals(const Afg& afg, int node)
{
    std::vector<SourceTerminal> out;
    std::set<int> seen{node};
    std::deque<int> work{node};
    auto locals = [&](const AfgNode& n) {
        for (const auto& l : n.locals)
            out.push_back({l.category, n.id, l.constant, l.name});
    };
    while (!work.empty()) {
        int cur = work.front();
        work.pop_front();
        const AfgNode& n = afg.node(cur);
        if (cur != node) {
            if (n.kind == NodeKind::Query) {
                out.push_back({SourceCategory::ReadQuery, cur, {}, {}});
                continue;
            }
            if (n.kind == NodeKind::ParamRead) {
                out.push_back({SourceCategory::UserInput, cur, {}, n.name});
                continue;
            }
            if (n.kind == NodeKind::GlobalRead || n.kind == NodeKind::GlobalAssign) {
                out.push_back({SourceCategory::GlobalVariable, cur, {}, n.name});
                continue;
            }
        }
        locals(n);
        for (const auto& e : afg.edges)
            if (e.kind == EdgeKind::Data && e.to == cur && seen.insert(e.from).second)
                work.push_back(e.from);
    }
    return out;
}

std::set<SourceCategory> value_sources(const Afg& afg, int node)
{
    std::set<SourceCategory> out;
    for (const auto& t : source_terminals(afg, node))
        out.insert(t.category);
    return out;
}

namespace {

struct Walk {
    std::set<ColumnRef> columns;
    std::set<std::string> traversed;
    std::set<AliasSite> aliases;
};

bool carries_alias(const AfgNode& n)
{
    return (n.kind == NodeKind::Assign && n.model.empty()) || n.kind == NodeKind::LoopHead;
}

Walk walk_result(const Afg& afg, const AppIR& ir, int q)
{
    Walk w;
    const AfgNode& qn = afg.node(q);
    if (!qn.query || !qn.query->is_read())
        return w;
    const QueryDescriptor& d = *qn.query;
    const ModelDecl* root = ir.model(d.rootModel);
    if (!root || d.aggregate == Aggregate::Count || d.aggregate == Aggregate::Any)
        return w;
    auto eager = [&](const std::string& a) {
        return std::find(d.eagerLoads.begin(), d.eagerLoads.end(), a) != d.eagerLoads.end();
    };
    auto add = [&](const std::string& binding, const ModelDecl& m, const std::string& col) {
        if (col != "id" && m.field(col))
            w.columns.insert({binding, m.name, col});
    };
    auto add_all = [&](const std::string& binding, const ModelDecl& m) {
        for (const auto& f : m.fields)
            add(binding, m, f.name);
    };
    // Lazy traversal of an association reads the key that links to it.
    auto lazy = [&](const std::string& binding, const ModelDecl& m, const Association& a) {
        if (a.kind == AssocKind::BelongsTo)
            add(binding, m, a.foreignKey);
    };

    std::deque<std::pair<int, std::string>> work{{q, ""}};
    std::set<std::pair<int, std::string>> seen{{q, ""}};
    auto push = [&](int n, const std::string& b) {
        if (seen.insert({n, b}).second)
            work.push_back({n, b});
    };
    while (!work.empty()) {
        auto [defNode, binding] = work.front();
        work.pop_front();
        const std::string& var = afg.node(defNode).defines;
        w.aliases.insert({defNode, var, binding});
        const ModelDecl* bm = binding_model(ir, *root, binding);
        if (!bm)
            continue;
        for (const auto& n : afg.nodes) {
            for (const auto& u : n.uses) {
                if (u.slot == slot::ChainBase || u.var != var ||
                    std::find(u.defs.begin(), u.defs.end(), defNode) == u.defs.end())
                    continue;
                if (u.path.empty()) {
                    if (u.alias && carries_alias(n))
                        push(n.id, binding);
                    else if (u.whole && n.kind == NodeKind::Render)
                        add_all(binding, *bm);
                    continue;
                }
                const std::string& head = u.path.front();
                if (const Association* a = bm->association(head)) {
                    if (binding.empty() && eager(head)) {
                        w.traversed.insert(head);
                        const ModelDecl* target = binding_model(ir, *root, head);
                        if (!target)
                            continue;
                        if (u.path.size() >= 2) {
                            if (const Association* nested = target->association(u.path[1]))
                                lazy(head, *target, *nested);
                            else
                                add(head, *target, u.path[1]);
                        } else if (u.alias && carries_alias(n)) {
                            push(n.id, head);
                        } else if (u.whole && n.kind == NodeKind::Render) {
                            add_all(head, *target);
                        }
                    } else {
                        lazy(binding, *bm, *a);
                    }
                } else {
                    add(binding, *bm, head);
                }
            }
        }
    }
    return w;
}

} // namespace

std::set<ColumnRef> used_columns(const Afg& afg, const AppIR& ir, int q)
{
    return walk_result(afg, ir, q).columns;
}

std::set<std::string> traversed_associations(const Afg& afg, const AppIR& ir, int q)
{
    return walk_result(afg, ir, q).traversed;
}

std::set<AliasSite> result_aliases(const Afg& afg, int q)
{
    std::set<AliasSite> out;
    std::deque<int> work{q};
    std::set<int> seen{q};
    while (!work.empty()) {
        int d = work.front();
        work.pop_front();
        const std::string& var = afg.node(d).defines;
        out.insert({d, var, ""});
        for (const auto& n : afg.nodes)
            for (const auto& u : n.uses)
                if (u.var == var && u.alias && u.path.empty() && carries_alias(n) &&
                    std::find(u.defs.begin(), u.defs.end(), d) != u.defs.end() && seen.insert(n.id).second)
                    work.push_back(n.id);
    }
    return out;
}

std::vector<std::set<int>> reaching_definitions(const Afg& afg, std::optional<std::pair<int, int>> skip)
{
    const std::size_t n = afg.nodes.size();
    std::vector<std::vector<int>> preds(n);
    for (const auto& e : afg.edges)
        if (e.kind == EdgeKind::Control && !(skip && skip->first == e.from && skip->second == e.to))
            preds[static_cast<std::size_t>(e.to)].push_back(e.from);
    auto kills = [](const std::string& def, const std::string& var) {
        return var == def ||
               (var.size() > def.size() && var.compare(0, def.size(), def) == 0 && var[def.size()] == '.');
    };
    std::vector<std::set<int>> in(n), out(n);
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::set<int> inSet;
            for (int p : preds[i])
                inSet.insert(out[static_cast<std::size_t>(p)].begin(), out[static_cast<std::size_t>(p)].end());
            std::set<int> outSet;
            const std::string& def = afg.nodes[i].defines;
            for (int d : inSet)
                if (def.empty() || !kills(def, afg.node(d).defines))
                    outSet.insert(d);
            if (!def.empty())
                outSet.insert(static_cast<int>(i));
            if (inSet != in[i] || outSet != out[i]) {
                in[i] = std::move(inSet);
                out[i] = std::move(outSet);
                changed = true;
            }
        }
    }
    return in;
}

} // namespace ormlens
