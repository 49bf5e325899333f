#include "support.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/error.hpp"

#include <doctest.h>

using namespace ormlens;

namespace {

Afg afg_of(const AppIR& ir, const char* controller, const char* action) { return build_afg(ir, {controller, action}); }

// Issued query nodes whose descriptor matches `pred`.
template <class P>
int find_query(const Afg& g, P pred)
{
    for (int id : g.query_nodes())
        if (pred(*g.node(id).query))
            return id;
    return -1;
}

std::set<std::string> column_names(const std::set<ColumnRef>& cols)
{
    std::set<std::string> out;
    for (const auto& c : cols)
        out.insert(c.binding.empty() ? c.column : c.binding + "." + c.column);
    return out;
}

} // namespace

TEST_CASE("recent-todos action has one query with three eager loads")
{
    AppIR ir = testing::load("fix1_unused_join.rlite");
    Afg g = afg_of(ir, "Todos", "show_recent_todos");
    auto qs = g.query_nodes();
    REQUIRE(qs.size() == 1);
    const auto& q = *g.node(qs[0]).query;
    CHECK(q.rootModel == "Todo");
    CHECK(q.eagerLoads == std::vector<std::string>{"projs", "tags", "preds"});
    CHECK(q.predicates.size() == 1);
    CHECK(q.predicates[0].sources.size() == 1);
    CHECK(q.predicates[0].sources[0].kind == ValueSourceKind::Var);
    // helper inlined: no call nodes, helper-local variable renamed
    CHECK(g.node(qs[0]).defines.rfind("load_todo#", 0) == 0);
}

TEST_CASE("empty action is Entry -> Exit")
{
    AppIR ir = parse_app("controller C { action a() {} }");
    Afg g = afg_of(ir, "C", "a");
    CHECK(g.nodes.size() == 2);
    REQUIRE(g.edges.size() == 1);
    CHECK(g.edges[0] == AfgEdge{g.entry, g.exit, EdgeKind::Control, {}});
}

TEST_CASE("unknown action")
{
    AppIR ir = parse_app("controller C { action a() {} }");
    CHECK_THROWS_AS(afg_of(ir, "C", "b"), Error);
}

TEST_CASE("self-recursive helper is inlined once")
{
    AppIR ir = parse_app("model A { field x: int } def f() { render(A.where()) f() } "
                         "controller C { action a() { f() } }");
    Afg g = afg_of(ir, "C", "a");
    CHECK(g.nodes_of_kind(NodeKind::NoOp).size() == 1);
    CHECK(g.query_nodes().size() == 1);
}

TEST_CASE("mutually recursive helpers terminate")
{
    AppIR ir = parse_app("def f() { g() } def g() { f() } controller C { action a() { f() } }");
    Afg g = afg_of(ir, "C", "a");
    CHECK(g.nodes_of_kind(NodeKind::NoOp).size() == 1);
}

TEST_CASE("loops: one body copy with a back edge")
{
    AppIR ir = testing::load("fix3_blog.rlite");
    Afg g = afg_of(ir, "Blogs", "index");
    auto heads = g.nodes_of_kind(NodeKind::LoopHead);
    auto ends = g.nodes_of_kind(NodeKind::LoopEnd);
    REQUIRE(heads.size() == 1);
    REQUIRE(ends.size() == 1);
    CHECK(g.node(heads[0]).partner == ends[0]);
    auto succ = g.successors(ends[0], EdgeKind::Control);
    CHECK(succ == std::vector<int>{heads[0]});
    int link = g.nodes_of_kind(NodeKind::Link)[0];
    CHECK(g.in_loop(link, heads[0]));
}

TEST_CASE("branches contribute both arms")
{
    AppIR ir = parse_app("model A { field x: int } controller C { action a(p) {"
                         " if param(p) > 1 { render(A.where(x == 1)) } else { render(A.where(x == 2)) } } }");
    Afg g = afg_of(ir, "C", "a");
    CHECK(g.query_nodes().size() == 2);
    int br = g.nodes_of_kind(NodeKind::Branch)[0];
    CHECK(g.successors(br, EdgeKind::Control).size() == 2);
}

TEST_CASE("AFG construction is deterministic")
{
    AppIR ir = testing::load("fix5_state_domain.rlite");
    for (const auto& id : ir.action_ids()) {
        Afg a = build_afg(ir, id);
        Afg b = build_afg(ir, id);
        CHECK(a.edges == b.edges);
        REQUIRE(a.nodes.size() == b.nodes.size());
        for (std::size_t i = 0; i < a.nodes.size(); ++i) {
            CHECK(a.nodes[i].kind == b.nodes[i].kind);
            CHECK(a.nodes[i].defines == b.nodes[i].defines);
        }
    }
}

TEST_CASE("blog index links to show with a GET edge")
{
    AppIR ir = testing::load("fix3_blog.rlite");
    ActionGraph ag = build_action_graph(ir, build_all_afgs(ir));
    auto out = ag.outgoing({"Blogs", "index"});
    REQUIRE(out.size() == 1);
    CHECK(out[0]->to == ActionId{"Blogs", "show"});
    CHECK(out[0]->method == HttpMethod::Get);
    CHECK(ag.afg({"Blogs", "index"})->node(out[0]->viaNode).kind == NodeKind::Link);
    CHECK(ag.outgoing({"Blogs", "show"}).empty());
}

TEST_CASE("one next-action edge per link or form node")
{
    AppIR ir = parse_app("controller C { action a() { link_to C.b() link_to C.b() form_to C.b(x) } action b(x) {} }");
    ActionGraph ag = build_action_graph(ir, build_all_afgs(ir));
    const Afg& a = *ag.afg({"C", "a"});
    std::size_t oracle = a.nodes_of_kind(NodeKind::Link).size() + a.nodes_of_kind(NodeKind::Form).size();
    CHECK(ag.edges.size() == oracle);
    CHECK(ag.edges.size() == 3);
    CHECK(ag.edges[2].method == HttpMethod::Post);
}

TEST_CASE("unrouted link target")
{
    AppIR ir = parse_app_unchecked("controller C { action a() { link_to C.zzz() } }");
    CHECK_THROWS_AS(build_action_graph(ir, build_all_afgs(ir)), Error);
}

TEST_CASE("members result only feeds the issues query")
{
    AppIR ir = testing::load("fix2_query_combine.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    int q1 = find_query(g, [](const QueryDescriptor& d) { return d.rootModel == "Member"; });
    int q2 = find_query(g, [](const QueryDescriptor& d) { return d.rootModel == "Issue"; });
    REQUIRE(q1 >= 0);
    REQUIRE(q2 >= 0);
    CHECK(query_sinks(g, q1) == SinkSet{{SinkCategory::QueryParam, q2}});
    const auto& p = g.node(q2).query->predicates[0];
    REQUIRE(p.sources.size() == 1);
    CHECK(p.sources[0].kind == ValueSourceKind::QueryResult);
    CHECK(p.sources[0].node == q1);
    CHECK(p.sources[0].column == "id");
}

TEST_CASE("never-read query has no sinks")
{
    AppIR ir = parse_app("model A { field x: int } controller C { action a() { let r = A.where() } }");
    Afg g = afg_of(ir, "C", "a");
    CHECK(query_sinks(g, g.query_nodes()[0]).empty());
}

TEST_CASE("the stored relation reaches the branch and the view")
{
    AppIR ir = testing::load("fix4_shared_subexpr.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    int base = -1;
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::Query && n.defines == "issues")
            base = n.id;
    REQUIRE(base >= 0);
    CHECK_FALSE(g.node(base).issued);
    SinkSet s = query_sinks(g, base);
    int br = g.nodes_of_kind(NodeKind::Branch)[0];
    int render = g.nodes_of_kind(NodeKind::Render)[0];
    CHECK(s.count({SinkCategory::BranchCondition, br}));
    CHECK(s.count({SinkCategory::RenderedInView, render}));
    auto qs = g.query_nodes();
    REQUIRE(qs.size() == 2);
    for (int q : qs)
        CHECK(g.node(q).query->chainPrefixOf == base);
    CHECK(g.node(qs[0]).query->aggregate == Aggregate::Any);
    CHECK(g.node(qs[1]).query->eagerLoads == std::vector<std::string>{"projects", "statuses"});
    CHECK(g.node(qs[1]).query->predicates.size() == 2);
}

TEST_CASE("value sources of persistent writes")
{
    AppIR ir5 = testing::load("fix5_state_domain.rlite");
    for (const char* act : {"create", "mark_done", "mark_deferred"}) {
        Afg g = afg_of(ir5, "Todos", act);
        for (const auto& n : g.nodes)
            if (n.persistent_write() && n.field == "state")
                CHECK(value_sources(g, n.id) == std::set<SourceCategory>{SourceCategory::ConstantValue});
    }
    AppIR ir6 = testing::load("fix6_funcdep.rlite");
    Afg g = afg_of(ir6, "Projects", "create");
    int seen = 0;
    for (const auto& n : g.nodes) {
        if (!n.persistent_write())
            continue;
        ++seen;
        if (n.field == "status")
            CHECK(value_sources(g, n.id) == std::set<SourceCategory>{SourceCategory::ReadQuery});
        else
            CHECK(value_sources(g, n.id) == std::set<SourceCategory>{SourceCategory::UserInput});
    }
    CHECK(seen == 3);
}

TEST_CASE("blog index uses excerpt and content")
{
    AppIR ir = testing::load("fix3_blog.rlite");
    Afg g = afg_of(ir, "Blogs", "index");
    CHECK(column_names(used_columns(g, ir, g.query_nodes()[0])) == std::set<std::string>{"excerpt", "content"});
}

TEST_CASE("used columns: unused result and branch-only use")
{
    AppIR ir = parse_app("model A { field x: int field y: int } controller C { action a(p) {"
                         " let r = A.find(1) let s = A.find(2)"
                         " if param(p) > 1 { render(s.y) } } }");
    Afg g = afg_of(ir, "C", "a");
    auto qs = g.query_nodes();
    CHECK(used_columns(g, ir, qs[0]).empty());
    CHECK(column_names(used_columns(g, ir, qs[1])) == std::set<std::string>{"y"});
}

TEST_CASE("eager loads: only preds traversed")
{
    AppIR ir = testing::load("fix1_unused_join.rlite");
    Afg g = afg_of(ir, "Todos", "show_recent_todos");
    int q = g.query_nodes()[0];
    CHECK(traversed_associations(g, ir, q) == std::set<std::string>{"preds"});
    auto used = column_names(used_columns(g, ir, q));
    CHECK(used.count("preds.description"));
    CHECK_FALSE(used.count("projs.name"));
}

TEST_CASE("global reads and writes")
{
    AppIR ir = parse_app("model A { field x: int } global limit = 5 controller C { action a() {"
                         " render(A.where(x < limit)) global limit = 6 } }");
    Afg g = afg_of(ir, "C", "a");
    auto reads = g.nodes_of_kind(NodeKind::GlobalRead);
    REQUIRE(reads.size() == 1);
    CHECK(g.successors(g.entry, EdgeKind::Control) == reads);
    int q = g.query_nodes()[0];
    CHECK(value_sources(g, q) == std::set<SourceCategory>{SourceCategory::GlobalVariable});
    CHECK(g.node(q).query->predicates[0].sources[0].kind == ValueSourceKind::Global);
}

TEST_CASE("DOT output names every action and node kind")
{
    AppIR ir = testing::load("fix3_blog.rlite");
    std::string dot = to_dot(build_action_graph(ir, build_all_afgs(ir)));
    CHECK(dot.rfind("digraph afg {", 0) == 0);
    CHECK(dot.find("Blogs#index") != std::string::npos);
    CHECK(dot.find("shape=cylinder") != std::string::npos);
    CHECK(dot.find("GET via") != std::string::npos);
}
