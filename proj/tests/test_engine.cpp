#include "support.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/detectors.hpp"
#include "ormlens/engine.hpp"
#include "ormlens/error.hpp"
#include "ormlens/rewrite.hpp"
#include "ormlens/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <functional>

using namespace ormlens;

namespace {

Afg afg_of(const AppIR& ir, const char* c, const char* a) { return build_afg(ir, {c, a}); }

std::vector<std::int64_t> root_ids(const ResultSet& r)
{
    std::vector<std::int64_t> out;
    for (const auto& ids : r.identities)
        out.push_back(ids.at(0).id);
    return out;
}

// --- reference evaluator --------------------------------------------------------------

bool ref_holds(const Value& a, CmpOp op, const Value& b)
{
    auto c = compare_values(a, b);
    if (op == CmpOp::Eq || op == CmpOp::In)
        return c == std::partial_ordering::equivalent;
    if (op == CmpOp::Ne)
        return c == std::partial_ordering::less || c == std::partial_ordering::greater;
    if (op == CmpOp::Lt)
        return c == std::partial_ordering::less;
    return c == std::partial_ordering::greater;
}

struct RefTuple {
    std::vector<const Row*> rows;
};

const Value& ref_cell(const TableStore& s, const RelQuery& q, const RefTuple& t, const RelColumn& c)
{
    int i = q.source_index(c.alias);
    const Table* tab = s.table(q.sources[static_cast<std::size_t>(i)].table);
    return t.rows[static_cast<std::size_t>(i)]->cells[static_cast<std::size_t>(tab->column_index(c.column))];
}

bool ref_pred(const TableStore& s, const RelQuery& q, const RefTuple& t, const RelPredicate& p)
{
    const Value& l = ref_cell(s, q, t, p.lhs);
    if (p.rhs.kind == OperandKind::Column)
        return ref_holds(l, p.op, ref_cell(s, q, t, p.rhs.column));
    const auto& vs = p.rhs.value->values;
    if (p.op == CmpOp::In) {
        for (const auto& v : vs)
            if (ref_holds(l, p.op, v))
                return true;
        return false;
    }
    return ref_holds(l, p.op, vs.empty() ? Value{} : vs[0]);
}

bool same_group(const Value& a, const Value& b)
{
    if (is_null(a) || is_null(b))
        return is_null(a) && is_null(b);
    return compare_values(a, b) == std::partial_ordering::equivalent;
}

ResultSet reference(const TableStore& s, const RelQuery& q)
{
    std::vector<RefTuple> all;
    RefTuple cur;
    std::function<void(std::size_t)> rec = [&](std::size_t k) {
        if (k == q.sources.size()) {
            for (std::size_t j = 1; j < q.sources.size(); ++j)
                for (const auto& p : q.sources[j].on)
                    if (!ref_pred(s, q, cur, p))
                        return;
            for (const auto& p : q.where)
                if (!ref_pred(s, q, cur, p))
                    return;
            all.push_back(cur);
            return;
        }
        for (const auto& r : s.table(q.sources[k].table)->rows) {
            cur.rows.push_back(&r);
            rec(k + 1);
            cur.rows.pop_back();
        }
    };
    rec(0);

    if (q.groupBy) {
        std::vector<RefTuple> g;
        for (const auto& t : all) {
            bool seen = false;
            for (const auto& u : g)
                seen = seen || same_group(ref_cell(s, q, u, *q.groupBy), ref_cell(s, q, t, *q.groupBy));
            if (!seen)
                g.push_back(t);
        }
        all = g;
    }
    std::vector<RelColumn> out;
    auto whole = [&](std::size_t i) {
        for (const auto& c : s.table(q.sources[i].table)->columns)
            out.push_back({q.sources[i].alias, c});
    };
    if (q.projection == Projection::All)
        for (std::size_t i = 0; i < q.sources.size(); ++i)
            whole(i);
    if (q.projection == Projection::SourceAll)
        whole(static_cast<std::size_t>(q.projectedSource));
    if (q.projection == Projection::Columns)
        for (const auto& c : q.columns)
            out.push_back(c.column);
    std::vector<std::pair<RefTuple, std::vector<Value>>> rows;
    for (const auto& t : all) {
        std::vector<Value> r;
        for (const auto& c : out)
            r.push_back(ref_cell(s, q, t, c));
        if (q.distinct && std::any_of(rows.begin(), rows.end(), [&](const auto& x) { return x.second == r; }))
            continue;
        rows.push_back({t, r});
    }
    if (q.orderBy) // insertion sort keeps equal keys in place
        for (std::size_t i = 1; i < rows.size(); ++i)
            for (std::size_t j = i; j > 0 && value_less(ref_cell(s, q, rows[j].first, *q.orderBy),
                                                        ref_cell(s, q, rows[j - 1].first, *q.orderBy));
                 --j)
                std::swap(rows[j], rows[j - 1]);
    std::size_t begin = q.offset ? std::min<std::size_t>(rows.size(), as_int(q.offset->value->values[0])) : 0;
    std::size_t end = rows.size();
    if (q.limit)
        end = std::min<std::size_t>(end, begin + as_int(q.limit->value->values[0]));
    ResultSet r;
    if (q.projection == Projection::Count) {
        r.scalar = true;
        std::int64_t n = static_cast<std::int64_t>(end - begin);
        r.value = q.any ? Value(n > 0) : Value(n);
        return r;
    }
    std::set<int> used;
    for (const auto& c : out)
        used.insert(q.source_index(c.alias));
    for (std::size_t i = begin; i < end; ++i) {
        r.rows.push_back(rows[i].second);
        std::vector<RowIdentity> ids;
        for (int si : used)
            ids.push_back({q.sources[static_cast<std::size_t>(si)].table,
                           std::get<std::int64_t>(rows[i].first.rows[static_cast<std::size_t>(si)]->cells[0]),
                           rows[i].first.rows[static_cast<std::size_t>(si)]->version, si});
        r.identities.push_back(ids);
    }
    return r;
}

// --- random stores and queries -----------------------------------------------------------

struct Schema {
    std::string table;
    std::vector<std::string> cols;
};

const std::vector<Schema> kSchemas = {
    {"ta", {"id", "x", "y", "s"}},
    {"tb", {"id", "a_id", "x", "s"}},
    {"tc", {"id", "b_id", "z", "flag"}},
};

Value random_cell(SplitMix64& g, const std::string& col, int n)
{
    if (g.below(10) == 0)
        return {};
    if (col == "s")
        return std::string(1, static_cast<char>('a' + g.below(3)));
    if (col == "flag")
        return g.below(2) == 1;
    if (col == "a_id" || col == "b_id")
        return static_cast<std::int64_t>(1 + g.below(static_cast<std::uint64_t>(n + 2)));
    return static_cast<std::int64_t>(g.below(6));
}

TableStore random_store(SplitMix64& g, int maxRows)
{
    TableStore s;
    for (const auto& sc : kSchemas) {
        Table t;
        t.name = sc.table;
        t.columns = sc.cols;
        int n = static_cast<int>(g.below(static_cast<std::uint64_t>(maxRows + 1)));
        for (int i = 1; i <= n; ++i) {
            Row r;
            r.cells.push_back(std::int64_t{i});
            for (std::size_t c = 1; c < sc.cols.size(); ++c)
                r.cells.push_back(random_cell(g, sc.cols[c], n));
            r.version = g.below(3);
            t.rows.push_back(r);
        }
        t.nextId = n + 1;
        s.tables[t.name] = t;
    }
    return s;
}

RelColumn random_column(SplitMix64& g, const RelQuery& q, std::size_t upto)
{
    std::size_t i = g.below(upto);
    const Schema* sc = nullptr;
    for (const auto& x : kSchemas)
        if (x.table == q.sources[i].table)
            sc = &x;
    return {q.sources[i].alias, sc->cols[g.below(sc->cols.size())]};
}

Value random_const(SplitMix64& g)
{
    switch (g.below(5)) {
    case 0: return {};
    case 1: return std::string(1, static_cast<char>('a' + g.below(3)));
    case 2: return g.below(2) == 1;
    default: return static_cast<std::int64_t>(g.below(6));
    }
}

RelPredicate random_predicate(SplitMix64& g, const RelQuery& q, std::size_t upto)
{
    RelPredicate p;
    p.lhs = random_column(g, q, upto);
    p.op = static_cast<CmpOp>(g.below(5));
    if (p.op != CmpOp::In && g.below(3) == 0) {
        RelColumn c = random_column(g, q, upto);
        p.rhs = RelOperand::col(c.alias, c.column);
        return p;
    }
    if (p.op == CmpOp::In) {
        BoundValue b;
        b.list = true;
        for (std::uint64_t k = g.below(4); k > 0; --k)
            b.values.push_back(random_const(g));
        p.rhs = RelOperand::hole();
        p.rhs.value = b;
        return p;
    }
    p.rhs = RelOperand::constant(random_const(g));
    return p;
}

RelQuery random_query(SplitMix64& g, int nsrc)
{
    RelQuery q;
    for (int i = 0; i < nsrc; ++i) {
        RelSource s;
        s.table = kSchemas[g.below(kSchemas.size())].table;
        s.alias = "t" + std::to_string(i + 1);
        q.sources.push_back(s);
    }
    for (std::size_t j = 1; j < q.sources.size(); ++j) {
        RelPredicate key;
        const std::string& t = q.sources[j].table;
        std::string fk = t == "tb" ? "a_id" : t == "tc" ? "b_id" : "x";
        key.lhs = {q.sources[j].alias, g.below(2) ? std::string("id") : fk};
        key.op = CmpOp::Eq;
        RelColumn other = random_column(g, q, j);
        key.rhs = RelOperand::col(other.alias, other.column);
        q.sources[j].on.push_back(key);
        if (g.below(3) == 0)
            q.sources[j].on.push_back(random_predicate(g, q, j + 1));
    }
    for (std::uint64_t k = g.below(4); k > 0; --k)
        q.where.push_back(random_predicate(g, q, q.sources.size()));
    switch (g.below(4)) {
    case 0: q.projection = Projection::All; break;
    case 1:
        q.projection = Projection::SourceAll;
        q.projectedSource = static_cast<int>(g.below(q.sources.size()));
        break;
    case 2:
        q.projection = Projection::Columns;
        for (std::uint64_t k = 1 + g.below(3); k > 0; --k)
            q.columns.push_back({random_column(g, q, q.sources.size()), ""});
        break;
    default:
        q.projection = Projection::Count;
        q.any = g.below(2) == 1;
    }
    q.distinct = g.below(5) == 0;
    if (g.below(5) == 0)
        q.groupBy = random_column(g, q, q.sources.size());
    if (g.below(2) == 0)
        q.orderBy = random_column(g, q, q.sources.size());
    if (g.below(3) == 0) {
        q.limit = RelOperand::constant(static_cast<std::int64_t>(g.below(10)));
    }
    if (g.below(3) == 0)
        q.offset = RelOperand::constant(static_cast<std::int64_t>(g.below(6)));
    return q;
}

void check_same(const ResultSet& got, const ResultSet& want)
{
    CHECK(got.scalar == want.scalar);
    if (want.scalar) {
        CHECK(display_value(got.value) == display_value(want.value));
        return;
    }
    REQUIRE(got.rows.size() == want.rows.size());
    CHECK(got.rows == want.rows);
    CHECK(got.identities == want.identities);
}

std::multiset<std::vector<std::pair<std::string, std::int64_t>>> identity_multiset(const ResultSet& r)
{
    std::multiset<std::vector<std::pair<std::string, std::int64_t>>> out;
    for (const auto& ids : r.identities) {
        std::vector<std::pair<std::string, std::int64_t>> v;
        for (const auto& id : ids)
            v.push_back({id.table, id.id});
        std::sort(v.begin(), v.end());
        out.insert(v);
    }
    return out;
}

} // namespace

TEST_CASE("generated data is deterministic and sized")
{
    AppIR ir = testing::load("fix1_unused_join.rlite");
    TableStore a = generate_data(ir, 42, 30);
    TableStore b = generate_data(ir, 42, 30);
    CHECK(a == b);
    CHECK_FALSE(a == generate_data(ir, 43, 30));
    for (const auto& [name, t] : a.tables) {
        CHECK(t.rows.size() == 30);
        CHECK(t.nextId == 31);
    }
    CHECK(generate_data(ir, 42, 0).row_count() == 0);
}

TEST_CASE("generated foreign keys reference existing parents")
{
    AppIR ir = testing::load("fix4_shared_subexpr.rlite");
    TableStore s = generate_data(ir, 9, 25);
    for (const auto& r : s.table("issues")->rows) {
        CHECK(s.table("projects")->find(as_int(r.cells[1])) != nullptr);
        CHECK(s.table("statuses")->find(as_int(r.cells[2])) != nullptr);
    }
}

TEST_CASE("constant domain drives generated state values")
{
    AppIR ir = testing::load("fix5_state_domain.rlite");
    AppAnalysis a = analyze_app(ir);
    // Oracle: the domain the column-source classifier reports.
    std::set<std::string> domain;
    for (const auto& c : a.columns)
        if (c.table == "todos" && c.column == "state")
            for (const auto& v : c.domain)
                domain.insert(std::get<std::string>(v));
    REQUIRE(domain == std::set<std::string>{"active", "complete", "deferred"});
    TableStore s = generate_data(ir, 5, 200, &a.columns);
    int state = s.table("todos")->column_index("state");
    for (const auto& r : s.table("todos")->rows)
        CHECK(domain.count(std::get<std::string>(r.cells[static_cast<std::size_t>(state)])) == 1);
}

TEST_CASE("count over an empty table is zero")
{
    AppIR ir = testing::load("boundedness.rlite");
    Afg g = afg_of(ir, "Posts", "cases");
    ResultSet r = execute_query(empty_store(ir), ir, *g.node(g.query_nodes()[0]).query, {});
    CHECK(r.scalar);
    CHECK(r.value == Value(std::int64_t{0}));
}

TEST_CASE("pagination query returns the first 40 posts by creation time")
{
    AppIR ir = testing::load("fix7_pagination.rlite");
    Afg g = afg_of(ir, "Posts", "index");
    TableStore s = generate_data(ir, 3, 100);
    QueryBindings b;
    b.offset = std::int64_t{0};
    ResultSet r = execute_query(s, ir, *g.node(g.query_nodes()[0]).query, b);
    REQUIRE(r.rows.size() == 40);
    int c = s.table("posts")->column_index("created_at");
    std::vector<Value> all;
    for (const auto& row : s.table("posts")->rows)
        all.push_back(row.cells[static_cast<std::size_t>(c)]);
    std::stable_sort(all.begin(), all.end(), value_less);
    for (std::size_t i = 0; i < 40; ++i)
        CHECK(r.rows[i][static_cast<std::size_t>(c)] == all[i]);
}

TEST_CASE("join without matching keys is empty")
{
    AppIR ir = testing::load("fix1_unused_join.rlite");
    Afg g = afg_of(ir, "Todos", "show_recent_todos");
    TableStore s = generate_data(ir, 1, 10);
    s.tables["projs"].rows.clear();
    QueryBindings b;
    b.predicates = {BoundValue{{std::int64_t{0}}, false}};
    CHECK(execute_query(s, ir, *g.node(g.query_nodes()[0]).query, b).rows.empty());
}

TEST_CASE("unbound operands and unknown columns are rejected")
{
    AppIR ir = testing::load("fix7_pagination.rlite");
    Afg g = afg_of(ir, "Posts", "index");
    TableStore s = generate_data(ir, 3, 5);
    try {
        execute_query(s, ir, *g.node(g.query_nodes()[0]).query, {});
        FAIL("expected UnboundParameter");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnboundParameter);
    }
    RelQuery q;
    q.sources.push_back({"posts", "t1", {}, {}});
    q.orderBy = RelColumn{"t1", "nope"};
    try {
        execute(s, q);
        FAIL("expected UnknownColumn");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownColumn);
    }
}

TEST_CASE("writes allocate ids and bump versions")
{
    AppIR ir = testing::load("fix5_state_domain.rlite");
    TableStore s = generate_data(ir, 2, 3);
    RelQuery ins;
    ins.kind = RelKind::Insert;
    ins.sources.push_back({"todos", "t1", {}, {}});
    ins.sets = {{"description", RelOperand::constant(std::string("d"))}, {"state", RelOperand::constant(std::string("active"))}};
    auto a = execute_write(s, ins);
    REQUIRE(a.size() == 1);
    CHECK(a[0].id == 4);
    RelQuery up;
    up.kind = RelKind::Update;
    up.sources.push_back({"todos", "t1", {}, {}});
    up.sets = {{"state", RelOperand::constant(std::string("complete"))}};
    up.where.push_back({{"t1", "id"}, CmpOp::Eq, RelOperand::constant(std::int64_t{4})});
    auto u = execute_write(s, up);
    REQUIRE(u.size() == 1);
    CHECK(u[0].version == 1);
    CHECK(s.table("todos")->find(4)->cells[2] == Value(std::string("complete")));
}

TEST_CASE("engine agrees with a nested-loop reference evaluator")
{
    SplitMix64 g(20240601);
    int cases = 0;
    for (; cases < 600; ++cases) {
        int nsrc = 1 + static_cast<int>(g.below(3));
        TableStore s = random_store(g, nsrc == 1 ? 200 : 14);
        RelQuery q = random_query(g, nsrc);
        CAPTURE(cases);
        CAPTURE(emit_sql(q));
        check_same(execute(s, q), reference(s, q));
    }
    CHECK(cases == 600);
}

TEST_CASE("shared view rewrite preserves the consumed results")
{
    AppIR ir = testing::load("fix4_shared_subexpr.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    auto groups = detect_shared_subexpressions(g);
    REQUIRE(groups.size() == 1);
    RewriteSuggestion sug = suggest_shared_view(ir, g, groups[0]);
    const auto& members = groups[0].members;
    REQUIRE(sug.suggested.size() == members.size());
    SplitMix64 rng(77);
    for (int seed = 0; seed < 100; ++seed) {
        CAPTURE(seed);
        TableStore s = generate_data(ir, static_cast<std::uint64_t>(seed), 1 + static_cast<int>(rng.below(60)));
        std::map<std::string, Value> params{{"lft", static_cast<std::int64_t>(rng.below(100))},
                                            {"rgt", static_cast<std::int64_t>(rng.below(100))}};
        TableStore withViews = s;
        for (const auto& v : sug.views) {
            ViewDef bound = v;
            bind_params(bound.query, params);
            add_view(withViews, bound);
        }
        for (std::size_t i = 0; i < members.size(); ++i) {
            RelQuery orig = lower_query(ir, *g.node(members[i]).query);
            bind_params(orig, params);
            RelQuery rew = sug.suggested[i];
            bind_params(rew, params);
            ResultSet a = execute(s, orig);
            ResultSet b = execute(withViews, rew);
            CHECK(a.scalar == b.scalar);
            if (a.scalar)
                CHECK(display_value(a.value) == display_value(b.value));
            else
                CHECK(identity_multiset(a) == identity_multiset(b));
        }
    }
}

TEST_CASE("combined query returns the consumer's rows")
{
    AppIR ir = testing::load("fix2_query_combine.rlite");
    Afg g = afg_of(ir, "Issues", "index");
    auto qs = g.query_nodes();
    RewriteSuggestion sug = combine_query_nodes(ir, g, qs[0], qs[1]);
    for (int seed = 0; seed < 100; ++seed) {
        CAPTURE(seed);
        TableStore s = generate_data(ir, static_cast<std::uint64_t>(seed), 1 + seed % 40);
        ResultSet members = execute_query(s, ir, *g.node(qs[0]).query, {});
        BoundValue ids;
        ids.list = true;
        for (const auto& r : members.rows)
            ids.values.push_back(r[0]);
        QueryBindings b;
        b.predicates = {ids, std::nullopt};
        ResultSet orig = execute_query(s, ir, *g.node(qs[1]).query, b);
        ResultSet comb = execute(s, sug.suggested[0]);
        auto a = root_ids(orig), c = root_ids(comb);
        std::sort(a.begin(), a.end());
        std::sort(c.begin(), c.end());
        CHECK(a == c);
    }
}

TEST_CASE("pruned projection keeps the consumed columns")
{
    AppIR ir = testing::load("fix3_blog.rlite");
    Afg g = afg_of(ir, "Blogs", "index");
    int q = g.query_nodes()[0];
    RewriteSuggestion sug = prune_projection(ir, *g.node(q).query, used_columns(g, ir, q));
    for (int seed = 0; seed < 100; ++seed) {
        TableStore s = generate_data(ir, static_cast<std::uint64_t>(seed), seed % 30);
        ResultSet a = execute_query(s, ir, *g.node(q).query, {});
        ResultSet b = execute(s, sug.suggested[0]);
        REQUIRE(a.rows.size() == b.rows.size());
        CHECK(root_ids(a) == root_ids(b));
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            CHECK(a.rows[i][1] == b.rows[i][1]);
            CHECK(a.rows[i][2] == b.rows[i][2]);
        }
    }
}
