#include "ormlens/detectors.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/error.hpp"
#include "ormlens/ir_json.hpp"

#include <algorithm>
#include <deque>
#include <map>

namespace ormlens {

using nlohmann::json;

namespace {

constexpr std::pair<DetectorId, const char*> kNames[] = {
    {DetectorId::Loop, "loop"},
    {DetectorId::UnusedColumns, "unused-columns"},
    {DetectorId::UnusedEagerLoads, "unused-eager-loads"},
    {DetectorId::QueryOnlySinks, "query-only-sinks"},
    {DetectorId::SharedSubexpressions, "shared-subexpressions"},
    {DetectorId::Boundedness, "boundedness"},
    {DetectorId::ColumnSources, "column-sources"},
    {DetectorId::DbSensitiveBranches, "db-sensitive-branches"},
    {DetectorId::Prefetchable, "prefetchable"},
};

bool is_issued_read(const AfgNode& n)
{
    return n.kind == NodeKind::Query && n.issued && n.query && n.query->is_read();
}

bool returns_records(const QueryDescriptor& q)
{
    return q.aggregate != Aggregate::Count && q.aggregate != Aggregate::Any;
}

int chain_root(const Afg& afg, int q)
{
    std::set<int> seen;
    while (seen.insert(q).second) {
        int p = afg.node(q).query ? afg.node(q).query->chainPrefixOf : -1;
        if (p < 0)
            break;
        q = p;
    }
    return q;
}

std::set<int> backward_closure(const Afg& afg, int node)
{
    std::set<int> seen{node};
    std::deque<int> work{node};
    while (!work.empty()) {
        int cur = work.front();
        work.pop_front();
        if (cur != node && afg.node(cur).kind == NodeKind::Query)
            continue;
        for (const auto& e : afg.edges)
            if (e.kind == EdgeKind::Data && e.to == cur && seen.insert(e.from).second)
                work.push_back(e.from);
    }
    return seen;
}

json loc_json(const SourceLoc& l) { return json{{"line", l.line}, {"column", l.column}}; }

json columns_json(const std::vector<ColumnRef>& cols)
{
    json a = json::array();
    for (const auto& c : cols)
        a.push_back(c.binding.empty() ? c.column : c.binding + "." + c.column);
    return a;
}

} // namespace

const char* detector_name(DetectorId d)
{
    for (const auto& [id, name] : kNames)
        if (id == d)
            return name;
    return "?";
}

std::optional<DetectorId> detector_from_name(std::string_view name)
{
    for (const auto& [id, n] : kNames)
        if (name == n)
            return id;
    return std::nullopt;
}

unsigned parse_detector_list(std::string_view list)
{
    unsigned mask = 0;
    std::size_t pos = 0;
    while (pos <= list.size()) {
        std::size_t comma = list.find(',', pos);
        std::string_view item = list.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        while (!item.empty() && item.front() == ' ')
            item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ')
            item.remove_suffix(1);
        if (!item.empty()) {
            if (item == "all")
                mask |= kAllDetectors;
            else if (auto d = detector_from_name(item))
                mask |= detector_bit(*d);
            else
                throw Error(ErrorCode::InvalidArgument, "unknown detector '" + std::string(item) + "'");
        }
        if (comma == std::string_view::npos)
            break;
        pos = comma + 1;
    }
    if (mask == 0)
        throw Error(ErrorCode::InvalidArgument, "empty detector list");
    return mask;
}

LoopReport detect_loop_queries(const Afg& afg)
{
    LoopReport r;
    for (int q : afg.query_nodes())
        if (afg.node(q).loop != -1)
            r.inLoopQueries.push_back(q);
    for (int head : afg.nodes_of_kind(NodeKind::LoopHead)) {
        const AfgNode& h = afg.node(head);
        LoopFinding f;
        f.loopHead = head;
        f.loc = h.loc;
        for (int q : r.inLoopQueries)
            if (afg.in_loop(q, head))
                f.queries.push_back(q);
        auto rd = reaching_definitions(afg, std::make_pair(h.partner, head));
        std::set<std::string> carried;
        for (const auto& e : afg.edges) {
            if (e.kind != EdgeKind::Data || e.to == head || e.var == h.defines)
                continue;
            if (!afg.in_loop(e.from, head) || !afg.in_loop(e.to, head))
                continue;
            if (!rd[static_cast<std::size_t>(e.to)].count(e.from))
                carried.insert(e.var);
        }
        f.loopCarried = !carried.empty();
        f.carriedVars.assign(carried.begin(), carried.end());
        r.loops.push_back(std::move(f));
    }
    return r;
}

std::vector<UnusedColumnsFinding> detect_unused_columns(const Afg& afg, const AppIR& ir)
{
    std::vector<UnusedColumnsFinding> out;
    for (const auto& n : afg.nodes) {
        if (!is_issued_read(n) || !returns_records(*n.query))
            continue;
        const ModelDecl* root = ir.model(n.query->rootModel);
        if (!root)
            continue;
        UnusedColumnsFinding f;
        f.query = n.id;
        f.loc = n.loc;
        std::set<ColumnRef> used = used_columns(afg, ir, n.id);
        for (const auto& c : n.query->projection) {
            if (c.column == "id")
                continue;
            f.projection.push_back(c);
            if (used.count(c)) {
                f.used.push_back(c);
                continue;
            }
            f.unused.push_back(c);
            if (const ModelDecl* m = binding_model(ir, *root, c.binding))
                if (const FieldDecl* fd = m->field(c.column))
                    f.wastedBytes += column_byte_size(*fd);
        }
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<EagerLoadFinding> detect_unused_eager_loads(const Afg& afg, const AppIR& ir)
{
    std::vector<EagerLoadFinding> out;
    for (const auto& n : afg.nodes) {
        if (!is_issued_read(n) || n.query->eagerLoads.empty())
            continue;
        std::set<ColumnRef> used = used_columns(afg, ir, n.id);
        std::set<std::string> traversed = traversed_associations(afg, ir, n.id);
        for (const auto& a : n.query->eagerLoads) {
            bool u = traversed.count(a) > 0 ||
                     std::any_of(used.begin(), used.end(), [&](const ColumnRef& c) { return c.binding == a; });
            out.push_back({n.id, n.loc, a, u});
        }
    }
    return out;
}

std::vector<QueryOnlySinkFinding> detect_query_only_sinks(const Afg& afg)
{
    std::vector<QueryOnlySinkFinding> out;
    for (const auto& n : afg.nodes) {
        if (!is_issued_read(n))
            continue;
        SinkSet sinks = query_sinks(afg, n.id);
        if (sinks.empty())
            continue;
        bool onlyQueries = std::all_of(sinks.begin(), sinks.end(),
                                       [](const auto& s) { return s.first == SinkCategory::QueryParam; });
        if (!onlyQueries)
            continue;
        QueryOnlySinkFinding f{n.id, n.loc, {}};
        for (const auto& s : sinks)
            f.consumers.push_back(s.second);
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<SharedSubexprFinding> detect_shared_subexpressions(const Afg& afg)
{
    std::map<int, std::vector<int>> groups;
    for (const auto& n : afg.nodes)
        if (n.kind == NodeKind::Query && n.issued && n.query)
            groups[chain_root(afg, n.id)].push_back(n.id);
    std::vector<SharedSubexprFinding> out;
    for (auto& [root, members] : groups) {
        if (members.size() < 2)
            continue;
        const AfgNode& r = afg.node(root);
        out.push_back({root, r.loc, r.issued, members});
    }
    return out;
}

const char* boundedness_name(Boundedness b)
{
    switch (b) {
    case Boundedness::SingleValue: return "BoundedSingleValue";
    case Boundedness::SingleRecord: return "BoundedSingleRecord";
    case Boundedness::Limited: return "BoundedLimited";
    case Boundedness::Unbounded: return "Unbounded";
    }
    return "?";
}

Boundedness classify_boundedness(const QueryDescriptor& q, const AppIR&)
{
    if (q.aggregate == Aggregate::Count || q.aggregate == Aggregate::Any)
        return Boundedness::SingleValue;
    if (q.aggregate == Aggregate::FindByPk)
        return Boundedness::SingleRecord;
    for (const auto& p : q.predicates)
        if (p.column.assoc.empty() && p.column.column == "id" && p.op == CmpOp::Eq)
            return Boundedness::SingleRecord;
    if (q.limit)
        return Boundedness::Limited;
    return Boundedness::Unbounded;
}

std::vector<BoundednessFinding> detect_boundedness(const Afg& afg, const AppIR& ir)
{
    std::vector<BoundednessFinding> out;
    for (const auto& n : afg.nodes)
        if (is_issued_read(n))
            out.push_back({n.id, n.loc, classify_boundedness(*n.query, ir)});
    return out;
}

const char* column_source_label_name(ColumnSourceLabel l)
{
    switch (l) {
    case ColumnSourceLabel::OnlyConst: return "onlyConst";
    case ColumnSourceLabel::OnlyOtherQuery: return "onlyOtherQuery";
    case ColumnSourceLabel::HasInput: return "hasInput";
    case ColumnSourceLabel::OtherWithoutInput: return "otherWithoutInput";
    case ColumnSourceLabel::NeverWritten: return "neverWritten";
    }
    return "?";
}

std::vector<ColumnSourceFinding> classify_column_sources(const std::vector<Afg>& afgs, const AppIR& ir)
{
    std::vector<ColumnSourceFinding> out;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const auto& m : ir.models)
        for (const auto& f : m.fields) {
            if (f.name == "id")
                continue;
            index[{m.name, f.name}] = out.size();
            ColumnSourceFinding c;
            c.model = m.name;
            c.table = m.table;
            c.column = f.name;
            c.loc = f.loc;
            out.push_back(std::move(c));
        }

    std::vector<std::set<std::string>> srcCols(out.size());
    for (const auto& afg : afgs) {
        for (const auto& n : afg.nodes) {
            if (!n.persistent_write())
                continue;
            auto it = index.find({n.model, n.field});
            if (it == index.end())
                continue;
            ColumnSourceFinding& c = out[it->second];
            c.writes.push_back({afg.action, n.id, n.loc});
            std::set<int> closure;
            bool closureBuilt = false;
            for (const auto& t : source_terminals(afg, n.id)) {
                c.sources.insert(t.category);
                if (t.category == SourceCategory::ConstantValue) {
                    bool dup = std::any_of(c.domain.begin(), c.domain.end(),
                                           [&](const Value& v) { return v == t.constant; });
                    if (!dup)
                        c.domain.push_back(t.constant);
                }
                if (t.category != SourceCategory::ReadQuery)
                    continue;
                if (!closureBuilt) {
                    closure = backward_closure(afg, n.id);
                    closureBuilt = true;
                }
                const AfgNode& q = afg.node(t.node);
                const ModelDecl* qm = q.query ? ir.model(q.query->rootModel) : nullptr;
                std::string table = qm ? qm->table : "?";
                bool found = false;
                for (int user : closure)
                    for (const auto& u : afg.node(user).uses)
                        if (!u.path.empty() && std::count(u.defs.begin(), u.defs.end(), t.node) &&
                            qm && qm->field(u.path.back())) {
                            srcCols[it->second].insert(table + "." + u.path.back());
                            found = true;
                        }
                if (found)
                    continue;
                if (q.query && !q.query->select.empty())
                    for (const auto& s : q.query->select)
                        srcCols[it->second].insert(table + "." + s);
                else
                    srcCols[it->second].insert(table + ".*");
            }
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        ColumnSourceFinding& c = out[i];
        const auto& s = c.sources;
        if (c.writes.empty())
            c.label = ColumnSourceLabel::NeverWritten;
        else if (s.count(SourceCategory::UserInput))
            c.label = ColumnSourceLabel::HasInput;
        else if (s == std::set<SourceCategory>{SourceCategory::ConstantValue})
            c.label = ColumnSourceLabel::OnlyConst;
        else if (s == std::set<SourceCategory>{SourceCategory::ReadQuery})
            c.label = ColumnSourceLabel::OnlyOtherQuery;
        else
            c.label = ColumnSourceLabel::OtherWithoutInput;
        if (c.label == ColumnSourceLabel::OnlyConst)
            std::sort(c.domain.begin(), c.domain.end(), value_less);
        else
            c.domain.clear();
        if (c.label == ColumnSourceLabel::OnlyOtherQuery)
            c.sourceColumns.assign(srcCols[i].begin(), srcCols[i].end());
    }
    return out;
}

std::vector<BranchFinding> detect_db_sensitive_branches(const Afg& afg)
{
    std::vector<BranchFinding> out;
    for (int b : afg.nodes_of_kind(NodeKind::Branch)) {
        auto terms = source_terminals(afg, b);
        bool db = std::any_of(terms.begin(), terms.end(),
                              [](const SourceTerminal& t) { return t.category == SourceCategory::ReadQuery; });
        out.push_back({b, afg.node(b).loc, db});
    }
    return out;
}

std::vector<PrefetchFinding> detect_prefetchable(const ActionGraph& graph)
{
    std::vector<PrefetchFinding> out;
    for (const auto& e : graph.edges) {
        const Afg* src = graph.afg(e.from);
        const Afg* dst = graph.afg(e.to);
        if (!src || !dst)
            continue;
        const AfgNode& via = src->node(e.viaNode);
        std::set<SourceLoc> srcLocs;
        for (int q : src->query_nodes())
            srcLocs.insert(src->node(q).loc);
        for (int q : dst->query_nodes()) {
            PrefetchFinding f;
            f.current = e.from;
            f.next = e.to;
            f.viaNode = e.viaNode;
            f.method = e.method;
            f.query = q;
            f.loc = dst->node(q).loc;
            f.prefetchable = true;
            if (e.method == HttpMethod::Post) {
                for (const auto& t : source_terminals(*dst, q))
                    if (t.category == SourceCategory::UserInput &&
                        std::count(via.formFields.begin(), via.formFields.end(), t.name))
                        f.prefetchable = false;
            }
            f.sameTemplate = srcLocs.count(f.loc) > 0;
            out.push_back(std::move(f));
        }
    }
    return out;
}

AppAnalysis analyze_app(const AppIR& ir, unsigned detectors)
{
    AppAnalysis a;
    a.app = ir.name;
    a.detectors = detectors & kAllDetectors;
    a.graph = build_action_graph(ir, build_all_afgs(ir));
    for (const auto& g : a.graph.afgs) {
        ActionFindings f;
        f.action = g.action;
        f.method = g.method;
        for (int q : g.query_nodes()) {
            ++f.queries;
            if (g.node(q).query->is_read())
                ++f.readQueries;
        }
        if (a.enabled(DetectorId::Loop))
            f.loops = detect_loop_queries(g);
        if (a.enabled(DetectorId::UnusedColumns))
            f.unusedColumns = detect_unused_columns(g, ir);
        if (a.enabled(DetectorId::UnusedEagerLoads))
            f.eagerLoads = detect_unused_eager_loads(g, ir);
        if (a.enabled(DetectorId::QueryOnlySinks))
            f.queryOnlySinks = detect_query_only_sinks(g);
        if (a.enabled(DetectorId::SharedSubexpressions))
            f.shared = detect_shared_subexpressions(g);
        if (a.enabled(DetectorId::Boundedness))
            f.boundedness = detect_boundedness(g, ir);
        if (a.enabled(DetectorId::DbSensitiveBranches))
            f.branches = detect_db_sensitive_branches(g);
        a.actions.push_back(std::move(f));
    }
    if (a.enabled(DetectorId::ColumnSources))
        a.columns = classify_column_sources(a.graph.afgs, ir);
    if (a.enabled(DetectorId::Prefetchable))
        a.prefetch = detect_prefetchable(a.graph);
    return a;
}

std::vector<Finding> collect_findings(const AppAnalysis& analysis)
{
    std::vector<Finding> perAction;
    std::map<ActionId, std::size_t> order;
    for (const auto& af : analysis.actions)
        order.emplace(af.action, order.size());

    for (const auto& af : analysis.actions) {
        const Afg* g = analysis.graph.afg(af.action);
        auto loc_of = [&](int node) { return loc_json(g->node(node).loc); };
        auto node_list = [&](const std::vector<int>& nodes) {
            json a = json::array();
            for (int n : nodes)
                a.push_back({{"node", n}, {"loc", loc_of(n)}});
            return a;
        };
        for (const auto& l : af.loops.loops) {
            if (l.queries.empty() && !l.loopCarried)
                continue;
            perAction.push_back({DetectorId::Loop, af.action, l.loc, l.loopHead,
                                 {{"queries", node_list(l.queries)},
                                  {"loopCarried", l.loopCarried},
                                  {"carriedVars", l.carriedVars}}});
        }
        for (const auto& u : af.unusedColumns) {
            if (u.unused.empty())
                continue;
            perAction.push_back({DetectorId::UnusedColumns, af.action, u.loc, u.query,
                                 {{"unusedColumns", columns_json(u.unused)},
                                  {"usedColumns", columns_json(u.used)},
                                  {"projectionSize", u.projection.size()},
                                  {"wastedBytes", u.wastedBytes}}});
        }
        std::map<int, std::pair<std::vector<std::string>, std::vector<std::string>>> eager;
        for (const auto& e : af.eagerLoads)
            (e.used ? eager[e.query].second : eager[e.query].first).push_back(e.eagerLoad);
        for (const auto& [q, split] : eager) {
            if (split.first.empty())
                continue;
            perAction.push_back({DetectorId::UnusedEagerLoads, af.action, g->node(q).loc, q,
                                 {{"eagerLoads", split.first}, {"usedEagerLoads", split.second}}});
        }
        for (const auto& s : af.queryOnlySinks)
            perAction.push_back({DetectorId::QueryOnlySinks, af.action, s.loc, s.query,
                                 {{"consumerQueries", node_list(s.consumers)}}});
        for (const auto& s : af.shared)
            perAction.push_back({DetectorId::SharedSubexpressions, af.action, s.loc, s.base,
                                 {{"baseIssued", s.baseIssued},
                                  {"members", node_list(s.members)},
                                  {"groupSize", s.members.size()}}});
        for (const auto& b : af.boundedness)
            perAction.push_back({DetectorId::Boundedness, af.action, b.loc, b.query,
                                 {{"label", boundedness_name(b.label)}}});
        for (const auto& b : af.branches)
            if (b.dbSensitive)
                perAction.push_back({DetectorId::DbSensitiveBranches, af.action, b.loc, b.branch,
                                     {{"dbSensitive", true}}});
    }
    for (const auto& p : analysis.prefetch) {
        const Afg* src = analysis.graph.afg(p.current);
        perAction.push_back({DetectorId::Prefetchable, p.current, src->node(p.viaNode).loc, p.viaNode,
                             {{"next", to_string(p.next)},
                              {"method", http_method_name(p.method)},
                              {"query", {{"node", p.query}, {"loc", loc_json(p.loc)}}},
                              {"prefetchable", p.prefetchable},
                              {"sameTemplate", p.sameTemplate}}});
    }
    std::stable_sort(perAction.begin(), perAction.end(), [&](const Finding& a, const Finding& b) {
        auto ka = std::make_tuple(order.at(a.action), a.loc, static_cast<int>(a.kind), a.node);
        auto kb = std::make_tuple(order.at(b.action), b.loc, static_cast<int>(b.kind), b.node);
        return ka < kb;
    });

    std::vector<Finding> out = std::move(perAction);
    for (const auto& c : analysis.columns) {
        json domain = json::array();
        for (const auto& v : c.domain)
            domain.push_back(value_to_json(v));
        json sources = json::array();
        for (auto s : c.sources)
            sources.push_back(source_category_name(s));
        out.push_back({DetectorId::ColumnSources, {}, c.loc, -1,
                       {{"table", c.table},
                        {"column", c.column},
                        {"model", c.model},
                        {"label", column_source_label_name(c.label)},
                        {"sources", sources},
                        {"domain", domain},
                        {"sourceColumns", c.sourceColumns},
                        {"writes", c.writes.size()}}});
    }
    return out;
}

json finding_to_json(const Finding& f)
{
    return json{{"kind", detector_name(f.kind)},
                {"action", f.action.controller.empty() ? json(nullptr) : json(to_string(f.action))},
                {"loc", loc_json(f.loc)},
                {"node", f.node},
                {"payload", f.payload}};
}

} // namespace ormlens
