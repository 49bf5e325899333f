#include "support.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/detectors.hpp"
#include "ormlens/error.hpp"

#include <doctest.h>

using namespace ormlens;

namespace {

Afg afg_of(const AppIR& ir, const char* controller, const char* action) { return build_afg(ir, {controller, action}); }

const ColumnSourceFinding* column(const std::vector<ColumnSourceFinding>& cs, const char* model, const char* col)
{
    for (const auto& c : cs)
        if (c.model == model && c.column == col)
            return &c;
    return nullptr;
}

} // namespace

TEST_CASE("projs and tags unused, preds used")
{
    AppIR ir = testing::load("fix1_unused_join.rlite");
    Afg g = afg_of(ir, "Todos", "show_recent_todos");
    auto f = detect_unused_eager_loads(g, ir);
    REQUIRE(f.size() == 3);
    std::map<std::string, bool> used;
    for (const auto& e : f)
        used[e.eagerLoad] = e.used;
    CHECK(used == std::map<std::string, bool>{{"projs", false}, {"tags", false}, {"preds", true}});
}

TEST_CASE("eager loads: none declared, and all rendered")
{
    AppIR ir = parse_app("model A { field x: int } controller C { action a() { render(A.where(x == 1)) } }");
    CHECK(detect_unused_eager_loads(afg_of(ir, "C", "a"), ir).empty());

    std::string src = testing::read_fixture("fix1_unused_join.rlite");
    auto pos = src.find("render(pred)");
    src.replace(pos, 12, "render(pred) for t in todos { render(t.projs.name, t.tags.name) }");
    AppIR all = parse_app(src);
    Afg g = afg_of(all, "Todos", "show_recent_todos");
    int q = g.query_nodes()[0];
    std::set<std::string> oracle;
    for (const auto& c : used_columns(g, all, q))
        if (!c.binding.empty())
            oracle.insert(c.binding);
    for (const auto& e : detect_unused_eager_loads(g, all)) {
        CHECK(e.used);
        CHECK(oracle.count(e.eagerLoad));
    }
}

TEST_CASE("members query only feeds the issues query")
{
    AppIR ir = testing::load("fix2_query_combine.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    auto f = detect_query_only_sinks(g);
    REQUIRE(f.size() == 1);
    CHECK(g.node(f[0].query).query->rootModel == "Member");
    REQUIRE(f[0].consumers.size() == 1);
    CHECK(g.node(f[0].consumers[0]).query->rootModel == "Issue");
}

TEST_CASE("query-only sinks: mixed and empty sinks are not flagged")
{
    AppIR ir = parse_app("model A { field x: int } model B { field a_id: int } controller C { action a() {"
                         " let m = A.where(x == 1) render(B.where(a_id in m.id)) render(m) } }");
    CHECK(detect_query_only_sinks(afg_of(ir, "C", "a")).empty());
    AppIR dead = parse_app("model A { field x: int } controller C { action a() { let r = A.where() } }");
    Afg g = afg_of(dead, "C", "a");
    CHECK(query_sinks(g, g.query_nodes()[0]).empty());
    CHECK(detect_query_only_sinks(g).empty());
}

TEST_CASE("blog index: created_at unused, 8 bytes wasted")
{
    AppIR ir = testing::load("fix3_blog.rlite");
    Afg g = afg_of(ir, "Blogs", "index");
    auto f = detect_unused_columns(g, ir);
    REQUIRE(f.size() == 1);
    REQUIRE(f[0].unused.size() == 1);
    CHECK(f[0].unused[0].column == "created_at");
    CHECK(f[0].wastedBytes == 8);
    CHECK(f[0].used.size() + f[0].unused.size() == f[0].projection.size());
}

TEST_CASE("unused text body costs 2450 bytes")
{
    AppIR ir = parse_app("model Post { field title: string(20) field body: text }"
                         " controller C { action a() { for p in Post.where() { render(p.title) } } }");
    Afg g = afg_of(ir, "C", "a");
    auto f = detect_unused_columns(g, ir);
    REQUIRE(f.size() == 1);
    CHECK(f[0].wastedBytes == 2450);
}

TEST_CASE("any? and the join share the stored relation")
{
    AppIR ir = testing::load("fix4_shared_subexpr.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    auto f = detect_shared_subexpressions(g);
    REQUIRE(f.size() == 1);
    CHECK_FALSE(f[0].baseIssued);
    REQUIRE(f[0].members.size() == 2);
    CHECK(g.node(f[0].members[0]).query->aggregate == Aggregate::Any);
    CHECK(g.node(f[0].members[1]).query->eagerLoads.size() == 2);
}

TEST_CASE("shared subexpressions: independent equal queries and a three-way extension")
{
    AppIR ir = parse_app("model A { field x: int } controller C { action a() {"
                         " render(A.where(x == 1)) render(A.where(x == 1)) } }");
    CHECK(detect_shared_subexpressions(afg_of(ir, "C", "a")).empty());

    AppIR three = parse_app("model A { field x: int field y: int } controller C { action a() {"
                            " let r = A.where(x == 1) render(r)"
                            " render(r.count) render(r.order(y)) render(r.where(y > 2)) } }");
    Afg g = afg_of(three, "C", "a");
    auto f = detect_shared_subexpressions(g);
    REQUIRE(f.size() == 1);
    CHECK(f[0].baseIssued);
    // oracle: query nodes whose chainPrefixOf chain reaches the base, plus the base
    std::vector<int> oracle{f[0].base};
    for (const auto& n : g.nodes)
        if (n.query && n.query->chainPrefixOf == f[0].base)
            oracle.push_back(n.id);
    CHECK(f[0].members == oracle);
    CHECK(f[0].members.size() == 4);
}

TEST_CASE("boundedness: twelve hand-labelled cases")
{
    AppIR ir = testing::load("boundedness.rlite");
    Afg g = afg_of(ir, "Posts", "cases");
    auto f = detect_boundedness(g, ir);
    const std::vector<Boundedness> expected{
        Boundedness::SingleValue, Boundedness::SingleRecord, Boundedness::Limited,   Boundedness::Limited,
        Boundedness::Unbounded,   Boundedness::Unbounded,    Boundedness::Unbounded, Boundedness::SingleValue,
        Boundedness::SingleRecord, Boundedness::Limited,     Boundedness::Unbounded, Boundedness::Unbounded,
    };
    REQUIRE(f.size() == expected.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        CAPTURE(i);
        CHECK(f[i].label == expected[i]);
    }
}

TEST_CASE("pagination query is limited")
{
    AppIR ir = testing::load("fix7_pagination.rlite");
    Afg g = afg_of(ir, "Posts", "index");
    CHECK(classify_boundedness(*g.node(g.query_nodes()[0]).query, ir) == Boundedness::Limited);
}

TEST_CASE("todo state is drawn from three constants")
{
    AppIR ir = testing::load("fix5_state_domain.rlite");
    auto cs = classify_column_sources(build_all_afgs(ir), ir);
    const auto* state = column(cs, "Todo", "state");
    REQUIRE(state);
    CHECK(state->label == ColumnSourceLabel::OnlyConst);
    CHECK(state->domain == std::vector<Value>{std::string("active"), std::string("complete"), std::string("deferred")});
    CHECK(state->writes.size() == 3);
    CHECK(column(cs, "Todo", "description")->label == ColumnSourceLabel::HasInput);
}

TEST_CASE("project status is derived from another query")
{
    AppIR ir = testing::load("fix6_funcdep.rlite");
    auto cs = classify_column_sources(build_all_afgs(ir), ir);
    const auto* status = column(cs, "Project", "status");
    REQUIRE(status);
    CHECK(status->label == ColumnSourceLabel::OnlyOtherQuery);
    CHECK(status->sourceColumns == std::vector<std::string>{"projects.status"});
    CHECK(column(cs, "Project", "parent_id")->label == ColumnSourceLabel::HasInput);
}

TEST_CASE("column sources: union over actions, utility sources and never written")
{
    AppIR ir = parse_app("model A { field x: int field y: int field z: datetime } controller C {"
                         " action a(v) POST { let r = A.new() r.x = param(v) r.save }"
                         " action b() POST { let r = A.new() r.x = 3 r.z = now() r.save } }");
    auto cs = classify_column_sources(build_all_afgs(ir), ir);
    CHECK(column(cs, "A", "x")->label == ColumnSourceLabel::HasInput);
    CHECK(column(cs, "A", "y")->label == ColumnSourceLabel::NeverWritten);
    CHECK(column(cs, "A", "z")->label == ColumnSourceLabel::OtherWithoutInput);
}

TEST_CASE("db-sensitive branches")
{
    AppIR ir = testing::load("fix4_shared_subexpr.rlite");
    auto f = detect_db_sensitive_branches(afg_of(ir, "Issues", "index"));
    REQUIRE(f.size() == 1);
    CHECK(f[0].dbSensitive);

    AppIR p = parse_app("model A { field x: int } controller C { action a(page) {"
                        " if param(page) > 1 { render(1) }"
                        " if 3 < A.where(x == 1).count { render(2) } } }");
    auto g = detect_db_sensitive_branches(afg_of(p, "C", "a"));
    REQUIRE(g.size() == 2);
    CHECK_FALSE(g[0].dbSensitive);
    CHECK(g[1].dbSensitive);
}

TEST_CASE("pagination next page is prefetchable from the same template")
{
    AppIR ir = testing::load("fix7_pagination.rlite");
    auto f = detect_prefetchable(build_action_graph(ir, build_all_afgs(ir)));
    REQUIRE(f.size() == 1);
    CHECK(f[0].method == HttpMethod::Get);
    CHECK(f[0].prefetchable);
    CHECK(f[0].sameTemplate);
}

TEST_CASE("POST insert from form input is not prefetchable")
{
    AppIR ir = testing::load("fix5_state_domain.rlite");
    auto f = detect_prefetchable(build_action_graph(ir, build_all_afgs(ir)));
    bool sawCreate = false;
    for (const auto& p : f) {
        if (p.next == ActionId{"Todos", "create"}) {
            sawCreate = true;
            CHECK(p.method == HttpMethod::Post);
            CHECK_FALSE(p.prefetchable);
        }
        // mark_done finds by a hidden id, not a user-filled field
        if (p.next == ActionId{"Todos", "mark_done"})
            CHECK(p.prefetchable);
    }
    CHECK(sawCreate);
}

TEST_CASE("GET edge to an action reading a global is prefetchable")
{
    AppIR ir = parse_app("model A { field x: int } global cap = 5 controller C {"
                         " action a() { link_to C.b() } action b() { render(A.where(x < cap)) } }");
    auto f = detect_prefetchable(build_action_graph(ir, build_all_afgs(ir)));
    REQUIRE(f.size() == 1);
    CHECK(f[0].prefetchable);
    CHECK_FALSE(f[0].sameTemplate);
}

TEST_CASE("loop queries and loop-carried dependencies")
{
    AppIR ir = parse_app("model Blog { field t: int } model Comment { field blog_id: int }"
                         " model Todo { field pred_id: int } controller C {"
                         " action a() { for b in Blog.where() { render(Comment.where(blog_id == b.id)) } }"
                         " action b() { let x = 0 for b in Blog.where() { x = Todo.where(pred_id == x).count } }"
                         " action c() { render(Blog.where()) } }");
    LoopReport a = detect_loop_queries(afg_of(ir, "C", "a"));
    REQUIRE(a.loops.size() == 1);
    CHECK(a.inLoopQueries.size() == 1);
    CHECK_FALSE(a.loops[0].loopCarried);
    LoopReport b = detect_loop_queries(afg_of(ir, "C", "b"));
    REQUIRE(b.loops.size() == 1);
    CHECK(b.loops[0].loopCarried);
    CHECK(b.loops[0].carriedVars == std::vector<std::string>{"x"});
    LoopReport c = detect_loop_queries(afg_of(ir, "C", "c"));
    CHECK(c.loops.empty());
    CHECK(c.inLoopQueries.empty());
}

TEST_CASE("detector list parsing")
{
    CHECK(parse_detector_list("boundedness") == detector_bit(DetectorId::Boundedness));
    CHECK(parse_detector_list("loop, prefetchable") ==
          (detector_bit(DetectorId::Loop) | detector_bit(DetectorId::Prefetchable)));
    CHECK(parse_detector_list("all") == kAllDetectors);
    CHECK_THROWS_AS(parse_detector_list("nope"), Error);
    CHECK_THROWS_AS(parse_detector_list(""), Error);
    for (int i = 0; i < kDetectorCount; ++i) {
        auto d = static_cast<DetectorId>(i);
        CHECK(detector_from_name(detector_name(d)) == d);
    }
}

TEST_CASE("findings are deterministic and sorted by action then location")
{
    AppIR ir = testing::load("fix5_state_domain.rlite");
    auto a = collect_findings(analyze_app(ir));
    auto b = collect_findings(analyze_app(ir));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(finding_to_json(a[i]) == finding_to_json(b[i]));
    CHECK(std::is_sorted(a.begin(), a.end(), [&](const Finding& x, const Finding& y) {
        bool xa = x.action.controller.empty(), ya = y.action.controller.empty();
        if (xa != ya)
            return xa < ya;
        return false;
    }));
}

TEST_CASE("detector mask restricts findings")
{
    AppIR ir = testing::load("fix1_unused_join.rlite");
    auto f = collect_findings(analyze_app(ir, detector_bit(DetectorId::Boundedness)));
    REQUIRE_FALSE(f.empty());
    for (const auto& x : f)
        CHECK(x.kind == DetectorId::Boundedness);
    auto all = collect_findings(analyze_app(ir));
    bool eager = false;
    for (const auto& x : all)
        if (x.kind == DetectorId::UnusedEagerLoads) {
            eager = true;
            CHECK(x.payload["eagerLoads"] == nlohmann::json::array({"projs", "tags"}));
        }
    CHECK(eager);
}
