// Brute-force oracles for the dataflow analyses on small random actions.

#include "support.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/detectors.hpp"
#include "ormlens/error.hpp"
#include "ormlens/rng.hpp"

#include <doctest.h>

#include <functional>
#include <optional>

using namespace ormlens;

namespace {

const char* kModels = "model B { field b1: int field b2: string(8) has_many kids: A fk b_id }\n"
                      "model A { field a1: int field a2: string(8) field a3: text field b_id: int"
                      " belongs_to b: B }\n";

// Random action bodies with branches, loops, aliases and query parameters.
struct ProgramGen {
    SplitMix64 g;
    std::vector<std::pair<std::string, std::string>> recs; // variable, model ("" = scalar)
    int next = 0;

    std::string col(const std::string& m)
    {
        static const std::vector<std::string> a{"a1", "a2", "a3", "b_id", "b", "b.b1"}, b{"b1", "b2", "kids", "kids.a2"};
        const auto& cs = m == "A" ? a : b;
        return cs[g.below(cs.size())];
    }

    std::string scalar_expr()
    {
        std::vector<std::string> opts{"1", "param(p)", "now()", "g"};
        for (const auto& [v, m] : recs)
            opts.push_back(m.empty() ? v : v + "." + (m == "A" ? "a1" : "b1"));
        return opts[g.below(opts.size())];
    }

    std::string query()
    {
        bool isA = g.below(3) != 0;
        std::string q = isA ? "A.where(a1 == " + scalar_expr() + ")" : "B.where(b1 < " + scalar_expr() + ")";
        switch (g.below(5)) {
        case 0: q += isA ? ".includes(b)" : ".includes(kids)"; break;
        case 1: q += ".count"; break;
        default: break;
        }
        return q;
    }

    std::string block(int depth, int n)
    {
        std::string out;
        std::size_t scope = recs.size();
        for (int i = 0; i < n; ++i)
            out += stmt(depth) + "\n";
        recs.resize(scope);
        return out;
    }

    std::string stmt(int depth)
    {
        std::uint64_t k = g.below(depth < 2 ? 10 : 8);
        if (recs.empty() && k > 1 && k < 8)
            k = 0;
        switch (k) {
        case 0: {
            std::string v = "v" + std::to_string(next++);
            std::string q = query();
            recs.push_back({v, q.find(".count") != std::string::npos ? "" : (q[0] == 'A' ? "A" : "B")});
            return "let " + v + " = " + q;
        }
        case 1: {
            std::string v = "v" + std::to_string(next++);
            std::string e = scalar_expr();
            recs.push_back({v, ""});
            return "let " + v + " = " + e;
        }
        case 2: {
            auto [v, m] = recs[g.below(recs.size())];
            return "render(" + (m.empty() ? v : v + "." + col(m)) + ")";
        }
        case 3: {
            auto [v, m] = recs[g.below(recs.size())];
            return "render(" + v + ")";
        }
        case 4: {
            auto [v, m] = recs[g.below(recs.size())];
            std::string w = "v" + std::to_string(next++);
            recs.push_back({w, m});
            return "let " + w + " = " + v;
        }
        case 5: {
            // Reassign an existing variable; inside a loop this carries a value to the next iteration.
            auto& [v, m] = recs[g.below(recs.size())];
            if (m.empty())
                return v + " = " + scalar_expr();
            return v + " = " + (m == "A" ? "A.where(a1 == " + scalar_expr() + ")" : "B.where(b1 < " + scalar_expr() + ")");
        }
        case 6: {
            auto [v, m] = recs[g.below(recs.size())];
            return g.below(2) ? "global g = " + scalar_expr() : "link_to C.a(p: " + (m.empty() ? v : v + ".id") + ")";
        }
        case 7: return "render(" + query() + ")";
        case 8: {
            std::string cond = scalar_expr() + " > 2";
            std::string t = block(depth + 1, 1 + static_cast<int>(g.below(2)));
            std::string e = g.below(2) ? block(depth + 1, 1) : "";
            return "if " + cond + " {\n" + t + "} else {\n" + e + "}";
        }
        default: {
            std::string x = "x" + std::to_string(next++);
            std::string coll;
            std::string model = "A";
            std::vector<std::pair<std::string, std::string>> rels;
            for (const auto& r : recs)
                if (!r.second.empty())
                    rels.push_back(r);
            if (!rels.empty() && g.below(2)) {
                auto [v, m] = rels[g.below(rels.size())];
                coll = v;
                model = m;
            } else {
                coll = "A.where(a1 == " + scalar_expr() + ")";
            }
            recs.push_back({x, model});
            std::string body = block(depth + 1, 1 + static_cast<int>(g.below(3)));
            recs.pop_back();
            return "for " + x + " in " + coll + " {\n" + body + "}";
        }
        }
    }

    std::string program()
    {
        std::string body = block(0, 2 + static_cast<int>(g.below(4)));
        return std::string(kModels) + "global g = 0\ncontroller C {\naction a(p) {\n" + body + "}\n}\n";
    }
};

// Generate `count` parseable actions whose AFG has at most `maxNodes` nodes.
template <class F>
int for_random_afgs(std::uint64_t seed, int count, std::size_t maxNodes, F&& check)
{
    SplitMix64 seeds(seed);
    int accepted = 0;
    for (int attempt = 0; accepted < count && attempt < count * 50; ++attempt) {
        ProgramGen gen{SplitMix64(seeds.next()), {}, 0};
        std::string src = gen.program();
        AppIR ir;
        Afg afg;
        try {
            ir = parse_app(src);
            afg = build_afg(ir, {"C", "a"});
        } catch (const Error&) {
            continue;
        }
        if (afg.nodes.size() > maxNodes || afg.query_nodes().empty())
            continue;
        CAPTURE(src);
        check(ir, afg);
        ++accepted;
    }
    return accepted;
}

// --- sinks and sources: Warshall closure over the data-edge matrix -------------------------

using Matrix = std::vector<std::vector<bool>>;

void warshall(Matrix& m)
{
    const std::size_t n = m.size();
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i)
            if (m[i][k])
                for (std::size_t j = 0; j < n; ++j)
                    if (m[k][j])
                        m[i][j] = true;
}

std::optional<SinkCategory> sink_of(NodeKind k)
{
    if (k == NodeKind::Query)
        return SinkCategory::QueryParam;
    if (k == NodeKind::Render || k == NodeKind::Link || k == NodeKind::Form)
        return SinkCategory::RenderedInView;
    if (k == NodeKind::Branch)
        return SinkCategory::BranchCondition;
    if (k == NodeKind::GlobalAssign)
        return SinkCategory::GlobalVariable;
    return std::nullopt;
}

std::set<int> chain_of(const Afg& afg, int q)
{
    std::set<int> out{q};
    for (std::size_t round = 0; round < afg.nodes.size(); ++round)
        for (const auto& n : afg.nodes)
            if (n.query && out.count(n.query->chainPrefixOf))
                out.insert(n.id);
    return out;
}

SinkSet oracle_sinks(const Afg& afg, int q)
{
    const std::size_t n = afg.nodes.size();
    std::set<int> starts = chain_of(afg, q);
    Matrix m(n, std::vector<bool>(n, false));
    for (const auto& e : afg.edges)
        if (e.kind == EdgeKind::Data && (starts.count(e.from) || !sink_of(afg.node(e.from).kind)))
            m[static_cast<std::size_t>(e.from)][static_cast<std::size_t>(e.to)] = true;
    warshall(m);
    SinkSet out;
    for (int s : starts)
        for (std::size_t t = 0; t < n; ++t)
            if (m[static_cast<std::size_t>(s)][t])
                if (auto c = sink_of(afg.nodes[t].kind))
                    out.insert({*c, static_cast<int>(t)});
    return out;
}

std::optional<SourceCategory> terminal_of(const AfgNode& n)
{
    switch (n.kind) {
    case NodeKind::Query: return SourceCategory::ReadQuery;
    case NodeKind::ParamRead: return SourceCategory::UserInput;
    case NodeKind::GlobalRead:
    case NodeKind::GlobalAssign: return SourceCategory::GlobalVariable;
    default: return std::nullopt;
    }
}

std::set<std::tuple<SourceCategory, int, std::string>> oracle_sources(const Afg& afg, int node)
{
    const std::size_t n = afg.nodes.size();
    // m[a][b]: b feeds a, and a lets the backward walk continue.
    Matrix m(n, std::vector<bool>(n, false));
    for (const auto& e : afg.edges)
        if (e.kind == EdgeKind::Data && (e.to == node || !terminal_of(afg.node(e.to))))
            m[static_cast<std::size_t>(e.to)][static_cast<std::size_t>(e.from)] = true;
    warshall(m);
    std::set<std::tuple<SourceCategory, int, std::string>> out;
    for (std::size_t t = 0; t < n; ++t) {
        if (t != static_cast<std::size_t>(node) && !m[static_cast<std::size_t>(node)][t])
            continue;
        const AfgNode& a = afg.nodes[t];
        auto term = terminal_of(a);
        if (term && t != static_cast<std::size_t>(node)) {
            out.insert({*term, a.id, a.kind == NodeKind::Query ? std::string() : a.name});
            continue;
        }
        for (const auto& l : a.locals)
            out.insert({l.category, a.id, l.name});
    }
    return out;
}

// --- loop-carried: DFS across control edges without the back edge ---------------------------

bool kills(const std::string& def, const std::string& var)
{
    return !def.empty() && (var == def || (var.size() > def.size() && var.compare(0, def.size(), def) == 0 &&
                                           var[def.size()] == '.'));
}

// True if the value `var` defined at `from` reaches `to` in the same iteration of `head`.
bool same_iteration(const Afg& afg, int head, int from, int to, const std::string& var)
{
    int end = afg.node(head).partner;
    std::vector<bool> seen(afg.nodes.size(), false);
    std::function<bool(int)> dfs = [&](int cur) {
        for (const auto& e : afg.edges) {
            if (e.kind != EdgeKind::Control || e.from != cur || (e.from == end && e.to == head))
                continue;
            if (e.to == to)
                return true;
            if (seen[static_cast<std::size_t>(e.to)] || kills(afg.node(e.to).defines, var))
                continue;
            seen[static_cast<std::size_t>(e.to)] = true;
            if (dfs(e.to))
                return true;
        }
        return false;
    };
    return dfs(from);
}

std::set<std::string> oracle_carried(const Afg& afg, int head)
{
    const AfgNode& h = afg.node(head);
    std::set<std::string> out;
    for (const auto& e : afg.edges) {
        if (e.kind != EdgeKind::Data || e.to == head || e.var == h.defines)
            continue;
        if (!afg.in_loop(e.from, head) || !afg.in_loop(e.to, head))
            continue;
        if (!same_iteration(afg, head, e.from, e.to, e.var))
            out.insert(e.var);
    }
    return out;
}

// --- used columns: enumerate control paths and follow the result along each ----------------

bool carrier_node(const AfgNode& n)
{
    return (n.kind == NodeKind::Assign && n.model.empty()) || n.kind == NodeKind::LoopHead;
}

std::set<ColumnRef> oracle_used(const Afg& afg, const AppIR& ir, int q, bool& complete)
{
    std::set<ColumnRef> out;
    const QueryDescriptor& d = *afg.node(q).query;
    if (d.aggregate == Aggregate::Count || d.aggregate == Aggregate::Any)
        return out;
    const ModelDecl& root = *ir.model(d.rootModel);
    auto eager = [&](const std::string& a) {
        return std::find(d.eagerLoads.begin(), d.eagerLoads.end(), a) != d.eagerLoads.end();
    };
    auto add = [&](const std::string& b, const ModelDecl& m, const std::string& c) {
        if (c != "id" && m.field(c))
            out.insert({b, m.name, c});
    };
    auto add_all = [&](const std::string& b, const ModelDecl& m) {
        for (const auto& f : m.fields)
            add(b, m, f.name);
    };
    auto lazy = [&](const std::string& b, const ModelDecl& m, const Association& a) {
        if (a.kind == AssocKind::BelongsTo)
            add(b, m, a.foreignKey);
    };

    // Per path: variable -> (defining node, binding if that definition holds q's result).
    using State = std::map<std::string, std::pair<int, std::optional<std::string>>>;
    std::vector<int> visits(afg.nodes.size(), 0);
    std::size_t paths = 0;
    std::function<void(int, State)> step = [&](int cur, State st) {
        if (paths > 200000) {
            complete = false;
            return;
        }
        const AfgNode& n = afg.node(cur);
        std::optional<std::string> carried;
        for (const auto& u : n.uses) {
            if (u.slot == slot::ChainBase)
                continue;
            auto it = st.find(u.var);
            if (it == st.end() || !it->second.second)
                continue;
            const std::string b = *it->second.second;
            const ModelDecl* bm = binding_model(ir, root, b);
            if (!bm)
                continue;
            if (u.path.empty()) {
                if (u.alias && carrier_node(n))
                    carried = b;
                else if (u.whole && n.kind == NodeKind::Render)
                    add_all(b, *bm);
                continue;
            }
            const std::string& head = u.path.front();
            const Association* a = bm->association(head);
            if (!a) {
                add(b, *bm, head);
                continue;
            }
            if (!b.empty() || !eager(head)) {
                lazy(b, *bm, *a);
                continue;
            }
            const ModelDecl* target = binding_model(ir, root, head);
            if (u.path.size() >= 2) {
                if (const Association* nested = target->association(u.path[1]))
                    lazy(head, *target, *nested);
                else
                    add(head, *target, u.path[1]);
            } else if (u.alias && carrier_node(n)) {
                carried = head;
            } else if (u.whole && n.kind == NodeKind::Render) {
                add_all(head, *target);
            }
        }
        if (!n.defines.empty()) {
            for (auto it = st.begin(); it != st.end();)
                it = kills(n.defines, it->first) ? st.erase(it) : std::next(it);
            st[n.defines] = {cur, cur == q ? std::optional<std::string>("") : carried};
        }
        if (cur == afg.exit) {
            ++paths;
            return;
        }
        for (const auto& e : afg.edges) {
            if (e.kind != EdgeKind::Control || e.from != cur || visits[static_cast<std::size_t>(e.to)] >= 4)
                continue;
            ++visits[static_cast<std::size_t>(e.to)];
            step(e.to, st);
            --visits[static_cast<std::size_t>(e.to)];
        }
    };
    visits[static_cast<std::size_t>(afg.entry)] = 1;
    step(afg.entry, {});
    return out;
}

} // namespace

TEST_CASE("query sinks agree with a Warshall closure")
{
    std::size_t queries = 0;
    int n = for_random_afgs(101, 250, 12, [&](const AppIR&, const Afg& afg) {
        for (int q : afg.query_nodes()) {
            CHECK(query_sinks(afg, q) == oracle_sinks(afg, q));
            ++queries;
        }
    });
    CHECK(n >= 200);
    CHECK(queries >= 200);
}

TEST_CASE("value sources agree with a Warshall closure")
{
    int n = for_random_afgs(202, 250, 12, [&](const AppIR&, const Afg& afg) {
        for (const auto& node : afg.nodes) {
            std::set<std::tuple<SourceCategory, int, std::string>> got;
            for (const auto& t : source_terminals(afg, node.id))
                got.insert({t.category, t.node, t.name});
            CHECK(got == oracle_sources(afg, node.id));
            std::set<SourceCategory> cats;
            for (const auto& t : got)
                cats.insert(std::get<0>(t));
            CHECK(value_sources(afg, node.id) == cats);
        }
    });
    CHECK(n >= 200);
}

TEST_CASE("used columns agree with control-path enumeration")
{
    std::size_t compared = 0, nonEmpty = 0, viaAssoc = 0;
    int n = for_random_afgs(303, 250, 12, [&](const AppIR& ir, const Afg& afg) {
        for (int q : afg.query_nodes()) {
            if (!afg.node(q).query->is_read())
                continue;
            bool complete = true;
            auto want = oracle_used(afg, ir, q, complete);
            if (!complete)
                continue;
            CHECK(used_columns(afg, ir, q) == want);
            ++compared;
            nonEmpty += !want.empty();
            viaAssoc += std::any_of(want.begin(), want.end(), [](const ColumnRef& c) { return !c.binding.empty(); });
        }
    });
    CHECK(n >= 200);
    CHECK(compared >= 200);
    CHECK(nonEmpty >= 50);
    CHECK(viaAssoc > 0);
}

TEST_CASE("loop-carried dependencies agree with a back-edge-free DFS")
{
    std::size_t loops = 0, carried = 0;
    SplitMix64 seeds(404);
    int accepted = 0;
    for (int attempt = 0; accepted < 200 && attempt < 20000; ++attempt) {
        ProgramGen gen{SplitMix64(seeds.next()), {}, 0};
        std::string src = gen.program();
        if (src.find("for ") == std::string::npos)
            continue;
        AppIR ir;
        Afg afg;
        try {
            ir = parse_app(src);
            afg = build_afg(ir, {"C", "a"});
        } catch (const Error&) {
            continue;
        }
        if (afg.nodes.size() > 16)
            continue;
        CAPTURE(src);
        LoopReport r = detect_loop_queries(afg);
        for (const auto& l : r.loops) {
            auto want = oracle_carried(afg, l.loopHead);
            CHECK(std::set<std::string>(l.carriedVars.begin(), l.carriedVars.end()) == want);
            CHECK(l.loopCarried == !want.empty());
            ++loops;
            carried += !want.empty();
        }
        ++accepted;
    }
    CHECK(accepted >= 200);
    CHECK(loops >= 200);
    CHECK(carried > 0);
}
