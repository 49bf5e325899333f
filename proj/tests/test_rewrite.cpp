#include "support.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/engine.hpp"
#include "ormlens/error.hpp"
#include "ormlens/rewrite.hpp"

#include <doctest.h>

using namespace ormlens;

namespace {

Afg afg_of(const AppIR& ir, const char* controller, const char* action) { return build_afg(ir, {controller, action}); }

const QueryDescriptor& first_query(const Afg& g) { return *g.node(g.query_nodes()[0]).query; }

} // namespace

TEST_CASE("pagination query text")
{
    AppIR ir = testing::load("fix7_pagination.rlite");
    Afg g = afg_of(ir, "Posts", "index");
    const QueryDescriptor& q = first_query(g);
    CHECK(emit_sql(q, ir) == "SELECT * FROM posts ORDER BY created_at LIMIT 40 OFFSET ?");
    QueryBindings b;
    b.offset = std::int64_t{0};
    CHECK(emit_sql(lower_query(ir, q, &b)) == "SELECT * FROM posts ORDER BY created_at LIMIT 40 OFFSET 0");
}

TEST_CASE("bare where and parameter placeholders")
{
    AppIR ir = parse_app("model Model { field x: int } controller C { action a(p) {"
                         " render(Model.where()) render(Model.where(x == param(p))) render(Model.where(x > 1 + 2)) } }");
    Afg g = afg_of(ir, "C", "a");
    auto qs = g.query_nodes();
    CHECK(emit_sql(*g.node(qs[0]).query, ir) == "SELECT * FROM models");
    CHECK(emit_sql(*g.node(qs[1]).query, ir) == "SELECT * FROM models WHERE x = :p");
    CHECK(emit_sql(*g.node(qs[2]).query, ir) == "SELECT * FROM models WHERE x > ?");
}

TEST_CASE("eager join text")
{
    AppIR ir = testing::load("fix1_unused_join.rlite");
    Afg g = afg_of(ir, "Todos", "show_recent_todos");
    CHECK(emit_sql(first_query(g), ir) ==
          "SELECT * FROM todos AS t1 INNER JOIN projs AS t2 ON t2.id = t1.proj_id INNER JOIN tags AS t3 ON t3.id = "
          "t1.tag_id INNER JOIN todos AS t4 ON t4.id = t1.pred_id WHERE t1.created_at > ?");
}

TEST_CASE("aggregates, finds, groups and writes")
{
    AppIR ir = testing::load("boundedness.rlite");
    Afg g = afg_of(ir, "Posts", "cases");
    auto qs = g.query_nodes();
    auto sql = [&](std::size_t i) { return emit_sql(*g.node(qs[i]).query, ir); };
    CHECK(sql(0) == "SELECT COUNT(*) FROM posts WHERE score < 50");
    CHECK(sql(1) == "SELECT * FROM posts WHERE id = :id");
    CHECK(sql(6) == "SELECT * FROM posts GROUP BY author_id");
    CHECK(sql(7) == "SELECT COUNT(*) FROM posts WHERE score > 20");
    CHECK(sql(10) == "SELECT * FROM posts AS t1 INNER JOIN authors AS t2 ON t2.id = t1.author_id WHERE t2.score < 50");

    AppIR w = testing::load("fix5_state_domain.rlite");
    Afg c = afg_of(w, "Todos", "create");
    CHECK(emit_sql(first_query(c), w) == "UPDATE todos SET description = ?, state = ? WHERE id = ?");
    AppIR ins = parse_app("model A { field x: int field s: string(4) } controller C { action a(v) POST {"
                          " let r = A.create(x: param(v), s: \"o'k\") } }");
    CHECK(emit_sql(first_query(afg_of(ins, "C", "a")), ins) == "INSERT INTO as (x, s) VALUES (:v, 'o''k')");
}

TEST_CASE("implicit joins for association predicates keep the root projection")
{
    AppIR ir = parse_app("model A { field n: int } model B { field a_id: int belongs_to a: A }"
                         " controller C { action x() { render(B.where(a.n > 3)) } }");
    CHECK(emit_sql(first_query(afg_of(ir, "C", "x")), ir) ==
          "SELECT t1.* FROM bs AS t1 INNER JOIN as AS t2 ON t2.id = t1.a_id WHERE t2.n > 3");
}

TEST_CASE("emit_sql is deterministic")
{
    AppIR ir = testing::load("fix4_shared_subexpr.rlite");
    Afg a = afg_of(ir, "Issues", "index");
    Afg b = afg_of(ir, "Issues", "index");
    for (std::size_t i = 0; i < a.query_nodes().size(); ++i)
        CHECK(emit_sql(*a.node(a.query_nodes()[i]).query, ir) == emit_sql(*b.node(b.query_nodes()[i]).query, ir));
}

TEST_CASE("prune blog projection")
{
    AppIR ir = testing::load("fix3_blog.rlite");
    Afg g = afg_of(ir, "Blogs", "index");
    int q = g.query_nodes()[0];
    auto used = used_columns(g, ir, q);
    RewriteSuggestion s = prune_projection(ir, *g.node(q).query, used);
    REQUIRE(s.suggestedSql.size() == 1);
    CHECK(s.suggestedSql[0] == "SELECT t1.id, t1.excerpt, t1.content FROM blogs AS t1");

    std::set<ColumnRef> all;
    for (const auto& c : g.node(q).query->projection)
        all.insert(c);
    CHECK_THROWS_AS(prune_projection(ir, *g.node(q).query, all), Error);
    try {
        prune_projection(ir, *g.node(q).query, all);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NothingToPrune);
    }
    try {
        prune_projection(ir, *g.node(q).query, {});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidArgument);
    }
}

TEST_CASE("combining members into issues")
{
    AppIR ir = testing::load("fix2_query_combine.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    auto qs = g.query_nodes();
    RewriteSuggestion s = combine_query_nodes(ir, g, qs[0], qs[1]);
    REQUIRE(s.suggestedSql.size() == 1);
    CHECK(s.suggestedSql[0] == "SELECT * FROM issues AS t1 INNER JOIN members AS t2 ON t2.group_id = 1 AND "
                               "t1.creator_id = t2.id AND t1.is_public = 1");
}

TEST_CASE("combine refuses aggregates, groups and limits")
{
    AppIR ir = parse_app("model A { field x: int } model B { field y: int } controller C { action a() {"
                         " let n = A.where(x == 1).count render(B.where(y == n))"
                         " let g = A.group(x) render(B.where(y in g.x))"
                         " let l = A.limit(3) render(B.where(y in l.x)) } }");
    Afg g = afg_of(ir, "C", "a");
    auto qs = g.query_nodes();
    REQUIRE(qs.size() == 6);
    for (int i : {0, 2, 4}) {
        CAPTURE(i);
        try {
            combine_query_nodes(ir, g, qs[i], qs[i + 1]);
            FAIL("expected NotCombinable");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NotCombinable);
        }
    }
}

TEST_CASE("non-key link keeps consumer rows distinct")
{
    AppIR ir = parse_app("model A { field x: int } model B { field y: int } controller C { action a() {"
                         " let m = A.where(x > 1) render(B.where(y in m.x)) } }");
    Afg g = afg_of(ir, "C", "a");
    auto qs = g.query_nodes();
    RewriteSuggestion s = combine_query_nodes(ir, g, qs[0], qs[1]);
    CHECK(s.suggestedSql[0] == "SELECT DISTINCT t1.* FROM bs AS t1 INNER JOIN as AS t2 ON t2.x > 1 AND t1.y = t2.x");
}

TEST_CASE("every query-only sink on the fixtures is combined or refused with a reason")
{
    for (const char* f : {"fix1_unused_join.rlite", "fix2_query_combine.rlite", "fix3_blog.rlite",
                          "fix4_shared_subexpr.rlite", "fix5_state_domain.rlite", "fix6_funcdep.rlite",
                          "fix7_pagination.rlite", "boundedness.rlite"}) {
        CAPTURE(f);
        AppIR ir = testing::load(f);
        AppAnalysis a = analyze_app(ir);
        RewriteReport r = suggest_rewrites(ir, a);
        std::size_t sinks = 0, combines = 0;
        for (const auto& af : a.actions)
            for (const auto& s : af.queryOnlySinks)
                sinks += s.consumers.size();
        for (const auto& s : r.suggestions)
            combines += s.kind == RewriteKind::CombineQueries;
        for (const auto& s : r.skipped) {
            combines += s.kind == RewriteKind::CombineQueries;
            CHECK_FALSE(s.reason.empty());
        }
        CHECK(combines == sinks);
    }
}

TEST_CASE("shared view text")
{
    AppIR ir = testing::load("fix4_shared_subexpr.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    auto f = detect_shared_subexpressions(g);
    REQUIRE(f.size() == 1);
    RewriteSuggestion s = suggest_shared_view(ir, g, f[0]);
    REQUIRE(s.suggestedSql.size() == 3);
    CHECK(s.suggestedSql[0].rfind("CREATE VIEW shared_issues_", 0) == 0);
    CHECK(s.suggestedSql[0].find("INNER JOIN projects AS t2 ON t2.id = t1.project_id WHERE t2.lft > :lft AND "
                                 "t2.rgt < :rgt") != std::string::npos);
    CHECK(s.suggestedSql[1].rfind("SELECT COUNT(*) FROM shared_issues_", 0) == 0);
    CHECK(s.suggestedSql[2].find("INNER JOIN statuses AS t2 ON t2.id = t1.issues_status_id") != std::string::npos);
}

TEST_CASE("grouped shared prefix is flagged")
{
    AppIR ir = parse_app("model A { field x: int field y: int } controller C { action a() {"
                         " let r = A.group(x) render(r.count) render(r.where(y > 1)) } }");
    Afg g = afg_of(ir, "C", "a");
    auto f = detect_shared_subexpressions(g);
    REQUIRE(f.size() == 1);
    RewriteSuggestion s = suggest_shared_view(ir, g, f[0]);
    CHECK(s.suggestedSql[0].find("GROUP BY t1.x") != std::string::npos);
    CHECK(s.rationale.find("must not aggregate") != std::string::npos);
}

TEST_CASE("two identical extensions give a view and two equal selects")
{
    AppIR ir = parse_app("model A { field x: int } controller C { action a() {"
                         " let r = A.where(x == 1) render(r.order(x)) render(r.order(x)) } }");
    Afg g = afg_of(ir, "C", "a");
    auto f = detect_shared_subexpressions(g);
    REQUIRE(f.size() == 1);
    RewriteSuggestion s = suggest_shared_view(ir, g, f[0]);
    REQUIRE(s.suggestedSql.size() == 3);
    CHECK(s.suggestedSql[1] == s.suggestedSql[2]);
}
