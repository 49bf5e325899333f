#include "ormlens/rewrite.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/error.hpp"

#include <algorithm>

namespace ormlens {

const char* rewrite_kind_name(RewriteKind k)
{
    switch (k) {
    case RewriteKind::PruneProjection: return "PruneProjection";
    case RewriteKind::CombineQueries: return "CombineQueries";
    case RewriteKind::SharedView: return "SharedView";
    }
    return "?";
}

namespace {

template <class F>
void for_each_column(RelQuery& q, F f)
{
    auto pred = [&](RelPredicate& p) {
        f(p.lhs);
        if (p.rhs.kind == OperandKind::Column)
            f(p.rhs.column);
    };
    for (auto& s : q.sources)
        for (auto& p : s.on)
            pred(p);
    for (auto& p : q.where)
        pred(p);
    for (auto& c : q.columns)
        f(c.column);
    if (q.groupBy)
        f(*q.groupBy);
    if (q.orderBy)
        f(*q.orderBy);
}

template <class F>
void for_each_operand(RelQuery& q, F f)
{
    for (auto& s : q.sources)
        for (auto& p : s.on)
            f(p.rhs, p.op == CmpOp::In);
    for (auto& p : q.where)
        f(p.rhs, p.op == CmpOp::In);
    if (q.limit)
        f(*q.limit, false);
    if (q.offset)
        f(*q.offset, false);
    for (auto& s : q.sets)
        f(s.second, false);
}

std::string alias_n(std::size_t n) { return "t" + std::to_string(n); }

bool returns_records(const QueryDescriptor& q)
{
    return q.is_read() && q.aggregate != Aggregate::Count && q.aggregate != Aggregate::Any;
}

} // namespace

void bind_params(RelQuery& q, const std::map<std::string, Value>& bindings)
{
    for_each_operand(q, [&](RelOperand& o, bool list) {
        if (o.kind != OperandKind::Param)
            return;
        if (auto it = bindings.find(o.name); it != bindings.end())
            o.value = BoundValue{{it->second}, list};
    });
}

RewriteSuggestion prune_projection(const AppIR& ir, const QueryDescriptor& q, const std::set<ColumnRef>& used)
{
    if (!returns_records(q))
        throw Error(ErrorCode::InvalidArgument, "projection pruning needs a record-returning query");
    std::vector<ColumnRef> keep;
    bool missing = false;
    for (const auto& c : q.projection) {
        if (c.column == "id")
            continue;
        if (used.count(c))
            keep.push_back(c);
        else
            missing = true;
    }
    if (keep.empty())
        throw Error(ErrorCode::InvalidArgument, "no column of the result is used");
    if (!missing)
        throw Error(ErrorCode::NothingToPrune, "every retrieved column is used");

    RelQuery r = lower_query(ir, q);
    r.projection = Projection::Columns;
    r.columns.clear();
    std::vector<std::string> bindings{""};
    bindings.insert(bindings.end(), q.eagerLoads.begin(), q.eagerLoads.end());
    for (const auto& b : bindings) {
        std::string alias = "t1";
        for (const auto& s : r.sources)
            if (!b.empty() && s.assoc == b)
                alias = s.alias;
        bool any = false;
        for (const auto& c : keep)
            if (c.binding == b) {
                if (!any)
                    r.columns.push_back({{alias, "id"}, {}});
                any = true;
                r.columns.push_back({{alias, c.column}, {}});
            }
    }

    RewriteSuggestion s;
    s.kind = RewriteKind::PruneProjection;
    s.finding = DetectorId::UnusedColumns;
    s.originalSql.push_back(emit_sql(q, ir));
    s.suggestedSql.push_back(emit_sql(r));
    s.suggested.push_back(std::move(r));
    s.rationale = "retrieve only the " + std::to_string(keep.size()) + " used columns plus keys";
    return s;
}

RewriteSuggestion combine_queries(const AppIR& ir, const QueryDescriptor& producer, const QueryDescriptor& consumer,
                                  std::size_t predicate, const std::string& linkColumn)
{
    auto refuse = [](const std::string& why) { throw Error(ErrorCode::NotCombinable, why); };
    if (!producer.is_read() || !consumer.is_read())
        refuse("writes cannot be combined");
    if (producer.aggregate == Aggregate::Count || producer.aggregate == Aggregate::Any)
        refuse("producer is an aggregate");
    if (producer.groupBy)
        refuse("producer groups rows");
    if (producer.limit)
        refuse("producer has a LIMIT");
    if (producer.offset)
        refuse("producer has an OFFSET");
    if (predicate >= consumer.predicates.size())
        throw Error(ErrorCode::InvalidArgument, "consumer has no predicate " + std::to_string(predicate));
    const Predicate& link = consumer.predicates[predicate];
    if (link.op != CmpOp::Eq && link.op != CmpOp::In)
        refuse("link predicate is neither == nor IN");
    const ModelDecl* pm = ir.model(producer.rootModel);
    if (!pm || linkColumn.empty() || !pm->field(linkColumn))
        refuse("producer result is not linked through one of its columns");

    RelQuery c = lower_query(ir, consumer);
    RelQuery p = lower_query(ir, producer);
    std::size_t shift = c.sources.size();
    for_each_column(p, [&](RelColumn& col) {
        std::size_t n = std::stoul(col.alias.substr(1));
        col.alias = alias_n(n + shift);
    });
    for (auto& s : p.sources)
        s.alias = alias_n(std::stoul(s.alias.substr(1)) + shift);

    bool keyLink = linkColumn == "id";
    if (!keyLink && c.projection == Projection::Count)
        refuse("consumer counts rows over a non-key link");

    std::vector<RelPredicate> on = p.where;
    on.push_back({c.where[predicate].lhs, CmpOp::Eq, RelOperand::col(p.sources[0].alias, linkColumn)});
    for (std::size_t i = 0; i < c.where.size(); ++i)
        if (i != predicate)
            on.push_back(c.where[i]);
    std::size_t consumerSources = c.sources.size();
    for (auto& s : p.sources)
        c.sources.push_back(std::move(s));
    auto& last = c.sources.back().on;
    last.insert(last.end(), on.begin(), on.end());
    c.where.clear();

    if (!keyLink) {
        c.distinct = true;
        if (c.projection == Projection::All) {
            if (consumerSources == 1) {
                c.projection = Projection::SourceAll;
                c.projectedSource = 0;
            } else {
                c.projection = Projection::Columns;
                for (const auto& col : consumer.projection) {
                    std::string alias = "t1";
                    for (std::size_t i = 0; i < consumerSources; ++i)
                        if (!col.binding.empty() && c.sources[i].assoc == col.binding)
                            alias = c.sources[i].alias;
                    c.columns.push_back({{alias, col.column}, {}});
                }
            }
        }
    }

    RewriteSuggestion s;
    s.kind = RewriteKind::CombineQueries;
    s.finding = DetectorId::QueryOnlySinks;
    s.originalSql = {emit_sql(producer, ir), emit_sql(consumer, ir)};
    s.suggestedSql.push_back(emit_sql(c));
    s.suggested.push_back(std::move(c));
    s.rationale = "the producer's rows only feed the consumer's " + link.column.column + " predicate; join them" +
                  (keyLink ? "" : " and keep distinct consumer rows");
    return s;
}

RewriteSuggestion combine_query_nodes(const AppIR& ir, const Afg& afg, int producer, int consumer)
{
    const AfgNode& pn = afg.node(producer);
    const AfgNode& cn = afg.node(consumer);
    if (!pn.query || !cn.query)
        throw Error(ErrorCode::InvalidArgument, "combine expects two query nodes");
    const auto& preds = cn.query->predicates;
    for (std::size_t i = 0; i < preds.size(); ++i)
        for (const auto& src : preds[i].sources)
            if (src.kind == ValueSourceKind::QueryResult && src.node == producer) {
                RewriteSuggestion s = combine_queries(ir, *pn.query, *cn.query, i, src.column);
                s.action = afg.action;
                s.loc = cn.loc;
                s.originalQueries = {producer, consumer};
                return s;
            }
    throw Error(ErrorCode::NotCombinable, "consumer uses the producer outside its predicates");
}

RewriteSuggestion suggest_shared_view(const AppIR& ir, const Afg& afg, const SharedSubexprFinding& group)
{
    const AfgNode& bn = afg.node(group.base);
    if (!bn.query || group.members.size() < 2)
        throw Error(ErrorCode::InvalidArgument, "shared view needs a group of at least two queries");
    const QueryDescriptor& base = *bn.query;
    const ModelDecl* root = ir.model(base.rootModel);
    if (!root)
        throw UnresolvedReference(base.rootModel, bn.loc);

    RelQuery bq = lower_query(ir, base);
    ViewDef view;
    view.name = "shared_" + root->table + "_" + std::to_string(bn.loc.line);
    view.query = bq;
    view.query.projection = Projection::Columns;
    view.query.any = false;
    view.query.columns.clear();
    // prefix used for each source's columns in the view
    std::map<std::string, std::string> prefix; // assoc ("" = root) -> prefix
    for (const auto& s : bq.sources) {
        std::string pre = s.assoc.empty() ? root->table : s.assoc;
        prefix[s.assoc] = pre;
        const ModelDecl* m = ir.model_by_table(s.table);
        for (const auto& f : m->fields)
            view.query.columns.push_back({{s.alias, f.name}, pre + "_" + f.name});
    }

    RewriteSuggestion out;
    out.kind = RewriteKind::SharedView;
    out.finding = DetectorId::SharedSubexpressions;
    out.action = afg.action;
    out.loc = bn.loc;
    out.views.push_back(view);
    out.suggestedSql.push_back(emit_view_sql(view));
    std::vector<std::string> notes;
    if (base.groupBy)
        notes.push_back("the shared prefix groups rows, so members must not aggregate again");
    if (base.limit || base.offset)
        notes.push_back("the shared prefix bounds rows before member filters apply");

    for (int m : group.members) {
        const QueryDescriptor& d = *afg.node(m).query;
        out.originalQueries.push_back(m);
        out.originalSql.push_back(emit_sql(d, ir));
        RelQuery dq = lower_query(ir, d);
        RelQuery r;
        r.sources.push_back({view.name, "t1", {}, {}});
        std::map<std::string, RelColumn> rename; // "alias.column" -> new column
        std::map<std::string, std::string> joinAlias;
        for (const auto& s : dq.sources) {
            if (prefix.count(s.assoc))
                continue;
            const Association* a = root->association(s.assoc);
            RelSource j;
            j.table = s.table;
            j.alias = alias_n(r.sources.size() + 1);
            j.assoc = s.assoc;
            if (a->kind == AssocKind::BelongsTo)
                j.on.push_back({{j.alias, "id"}, CmpOp::Eq, RelOperand::col("t1", root->table + "_" + a->foreignKey)});
            else
                j.on.push_back({{j.alias, a->foreignKey}, CmpOp::Eq, RelOperand::col("t1", root->table + "_id")});
            joinAlias[s.alias] = j.alias;
            r.sources.push_back(std::move(j));
        }
        auto map_col = [&](RelColumn& c) {
            const RelSource& s = dq.sources[static_cast<std::size_t>(dq.source_index(c.alias))];
            if (auto p = prefix.find(s.assoc); p != prefix.end())
                c = {"t1", p->second + "_" + c.column};
            else
                c.alias = joinAlias.at(c.alias);
        };
        for (std::size_t i = bq.where.size(); i < dq.where.size(); ++i) {
            RelPredicate p = dq.where[i];
            map_col(p.lhs);
            if (p.rhs.kind == OperandKind::Column)
                map_col(p.rhs.column);
            r.where.push_back(std::move(p));
        }
        if (dq.orderBy) {
            r.orderBy = dq.orderBy;
            map_col(*r.orderBy);
        }
        if (dq.groupBy && !bq.groupBy) {
            r.groupBy = dq.groupBy;
            map_col(*r.groupBy);
        }
        if (dq.limit && !bq.limit)
            r.limit = dq.limit;
        if (dq.offset && !bq.offset)
            r.offset = dq.offset;
        r.projection = dq.projection;
        r.any = dq.any;
        if (dq.projection == Projection::Columns || dq.projection == Projection::SourceAll) {
            r.projection = Projection::Columns;
            if (dq.projection == Projection::SourceAll)
                for (const auto& f : root->fields)
                    r.columns.push_back({{"t1", root->table + "_" + f.name}, {}});
            for (auto c : dq.columns) {
                map_col(c.column);
                r.columns.push_back(std::move(c));
            }
        }
        if (dq.groupBy && bq.groupBy && (dq.projection == Projection::Count))
            notes.push_back("member " + std::to_string(m) + " counts over grouped rows");
        out.suggestedSql.push_back(emit_sql(r));
        out.suggested.push_back(std::move(r));
    }
    out.rationale = std::to_string(group.members.size()) + " queries share the prefix stored at line " +
                    std::to_string(bn.loc.line) + "; evaluate it once as view " + view.name;
    for (const auto& n : notes)
        out.rationale += "; " + n;
    return out;
}

RewriteReport suggest_rewrites(const AppIR& ir, const AppAnalysis& analysis)
{
    RewriteReport out;
    for (const auto& af : analysis.actions) {
        const Afg& g = *analysis.graph.afg(af.action);
        auto attempt = [&](RewriteKind kind, SourceLoc loc, std::vector<int> queries, auto make) {
            try {
                RewriteSuggestion s = make();
                s.action = af.action;
                s.loc = loc;
                if (s.originalQueries.empty())
                    s.originalQueries = queries;
                out.suggestions.push_back(std::move(s));
            } catch (const Error& e) {
                out.skipped.push_back({kind, af.action, loc, std::move(queries),
                                       std::string(error_code_name(e.code())) + ": " + e.what()});
            }
        };
        for (const auto& u : af.unusedColumns) {
            if (u.unused.empty())
                continue;
            std::set<ColumnRef> used(u.used.begin(), u.used.end());
            attempt(RewriteKind::PruneProjection, u.loc, {u.query},
                    [&] { return prune_projection(ir, *g.node(u.query).query, used); });
        }
        for (const auto& s : af.queryOnlySinks)
            for (int c : s.consumers)
                attempt(RewriteKind::CombineQueries, g.node(c).loc, {s.query, c},
                        [&] { return combine_query_nodes(ir, g, s.query, c); });
        for (const auto& grp : af.shared)
            attempt(RewriteKind::SharedView, grp.loc, grp.members, [&] { return suggest_shared_view(ir, g, grp); });
    }
    return out;
}

} // namespace ormlens
