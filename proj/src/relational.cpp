#include "ormlens/relational.hpp"

#include "ormlens/error.hpp"

#include <sstream>

namespace ormlens {

RelOperand RelOperand::col(std::string alias, std::string column)
{
    RelOperand o;
    o.kind = OperandKind::Column;
    o.column = {std::move(alias), std::move(column)};
    return o;
}

RelOperand RelOperand::constant(Value v)
{
    RelOperand o;
    o.kind = OperandKind::Const;
    o.value = BoundValue{{std::move(v)}, false};
    return o;
}

RelOperand RelOperand::param(std::string name)
{
    RelOperand o;
    o.kind = OperandKind::Param;
    o.name = std::move(name);
    return o;
}

RelOperand RelOperand::hole()
{
    RelOperand o;
    o.kind = OperandKind::Hole;
    return o;
}

int RelQuery::source_index(const std::string& alias) const
{
    for (std::size_t i = 0; i < sources.size(); ++i)
        if (sources[i].alias == alias)
            return static_cast<int>(i);
    return alias.empty() && !sources.empty() ? 0 : -1;
}

bool RelQuery::aliased() const
{
    return sources.size() > 1 || projection == Projection::Columns || projection == Projection::SourceAll;
}

namespace {

RelOperand operand_for(const ExprRef& e)
{
    if (!e)
        return RelOperand::hole();
    if (const auto* lit = std::get_if<LiteralExpr>(&e->node))
        return RelOperand::constant(lit->value);
    if (const auto* p = std::get_if<ParamExpr>(&e->node))
        return RelOperand::param(p->name);
    return RelOperand::hole();
}

void bind(RelOperand& o, const std::optional<BoundValue>& v)
{
    if (v && o.kind != OperandKind::Const)
        o.value = *v;
}

void bind(RelOperand& o, const std::optional<Value>& v)
{
    if (v && o.kind != OperandKind::Const)
        o.value = BoundValue{{*v}, false};
}

struct Joiner {
    const AppIR& ir;
    const ModelDecl& root;
    RelQuery& rq;

    // Alias of an association's join, adding the join when it is not there yet.
    std::string alias_for(const std::string& assoc)
    {
        if (assoc.empty())
            return "t1";
        for (const auto& s : rq.sources)
            if (s.assoc == assoc)
                return s.alias;
        const Association* a = root.association(assoc);
        const ModelDecl* target = a ? ir.model(a->target) : nullptr;
        if (!a || !target)
            throw UnresolvedReference(assoc, {});
        RelSource s;
        s.table = target->table;
        s.alias = "t" + std::to_string(rq.sources.size() + 1);
        s.assoc = assoc;
        if (a->kind == AssocKind::BelongsTo)
            s.on.push_back({{s.alias, "id"}, CmpOp::Eq, RelOperand::col("t1", a->foreignKey)});
        else
            s.on.push_back({{s.alias, a->foreignKey}, CmpOp::Eq, RelOperand::col("t1", "id")});
        rq.sources.push_back(std::move(s));
        return rq.sources.back().alias;
    }

    RelColumn column(const ColumnPath& c) { return {alias_for(c.assoc), c.column}; }
};

} // namespace

RelQuery lower_query(const AppIR& ir, const QueryDescriptor& q, const QueryBindings* b)
{
    const ModelDecl* root = ir.model(q.rootModel);
    if (!root)
        throw UnresolvedReference(q.rootModel, {});
    RelQuery rq;
    rq.sources.push_back({root->table, "t1", {}, {}});

    if (q.kind == QueryKind::Insert) {
        rq.kind = RelKind::Insert;
        for (std::size_t i = 0; i < q.writes.size(); ++i) {
            RelOperand o = operand_for(q.writes[i].value);
            if (b && i < b->writes.size())
                bind(o, b->writes[i]);
            rq.sets.push_back({q.writes[i].column, std::move(o)});
        }
        return rq;
    }
    if (q.kind == QueryKind::Save) {
        rq.kind = RelKind::Update;
        std::size_t i = 0;
        for (const auto& f : root->fields) {
            if (f.name == "id")
                continue;
            RelOperand o = RelOperand::hole();
            if (b && i < b->writes.size())
                bind(o, b->writes[i]);
            rq.sets.push_back({f.name, std::move(o)});
            ++i;
        }
        RelOperand id = RelOperand::hole();
        if (b && !b->predicates.empty())
            bind(id, b->predicates[0]);
        rq.where.push_back({{"t1", "id"}, CmpOp::Eq, std::move(id)});
        return rq;
    }

    Joiner j{ir, *root, rq};
    for (const auto& e : q.eagerLoads)
        j.alias_for(e);
    std::size_t eagerJoins = rq.sources.size();
    for (std::size_t i = 0; i < q.predicates.size(); ++i) {
        const Predicate& p = q.predicates[i];
        RelOperand o = operand_for(p.value);
        if (b && i < b->predicates.size())
            bind(o, b->predicates[i]);
        if (p.op == CmpOp::In && o.value)
            o.value->list = true;
        rq.where.push_back({j.column(p.column), p.op, std::move(o)});
    }
    if (q.groupBy)
        rq.groupBy = j.column(*q.groupBy);
    if (q.orderBy)
        rq.orderBy = j.column(*q.orderBy);
    if (q.limit) {
        rq.limit = operand_for(q.limit);
        if (b)
            bind(*rq.limit, b->limit);
    }
    if (q.offset) {
        rq.offset = operand_for(q.offset);
        if (b)
            bind(*rq.offset, b->offset);
    }

    bool implicitJoins = rq.sources.size() > eagerJoins;
    if (q.aggregate == Aggregate::Count || q.aggregate == Aggregate::Any) {
        rq.projection = Projection::Count;
        rq.any = q.aggregate == Aggregate::Any;
    } else if (!q.select.empty() || (implicitJoins && !q.eagerLoads.empty())) {
        rq.projection = Projection::Columns;
        for (const auto& c : q.projection)
            rq.columns.push_back({{j.alias_for(c.binding), c.column}, {}});
    } else if (implicitJoins) {
        rq.projection = Projection::SourceAll;
        rq.projectedSource = 0;
    }
    return rq;
}

namespace {

const char* cmp_sql(CmpOp op)
{
    switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "<>";
    case CmpOp::Lt: return "<";
    case CmpOp::Gt: return ">";
    case CmpOp::In: return "IN";
    }
    return "?";
}

struct Printer {
    const RelQuery& q;
    bool aliased = q.aliased();

    std::string column(const RelColumn& c) const
    {
        if (!aliased || c.alias.empty())
            return c.column;
        return c.alias + "." + c.column;
    }

    std::string operand(const RelOperand& o, bool list) const
    {
        switch (o.kind) {
        case OperandKind::Column: return column(o.column);
        case OperandKind::Const:
        case OperandKind::Param:
        case OperandKind::Hole:
            if (o.value) {
                if (!list && !o.value->list)
                    return o.value->values.empty() ? "NULL" : sql_literal(o.value->values.front());
                std::string s = "(";
                for (std::size_t i = 0; i < o.value->values.size(); ++i)
                    s += (i ? ", " : "") + sql_literal(o.value->values[i]);
                if (o.value->values.empty())
                    s += "NULL";
                return s + ")";
            }
            if (o.kind == OperandKind::Param)
                return list ? "(:" + o.name + ")" : ":" + o.name;
            return list ? "(?)" : "?";
        }
        return "?";
    }

    std::string predicate(const RelPredicate& p) const
    {
        return column(p.lhs) + " " + cmp_sql(p.op) + " " + operand(p.rhs, p.op == CmpOp::In);
    }

    std::string conj(const std::vector<RelPredicate>& ps) const
    {
        std::string s;
        for (std::size_t i = 0; i < ps.size(); ++i)
            s += (i ? " AND " : "") + predicate(ps[i]);
        return s;
    }

    std::string select() const
    {
        std::ostringstream os;
        if (q.kind == RelKind::Insert) {
            os << "INSERT INTO " << q.sources[0].table << " (";
            for (std::size_t i = 0; i < q.sets.size(); ++i)
                os << (i ? ", " : "") << q.sets[i].first;
            os << ") VALUES (";
            for (std::size_t i = 0; i < q.sets.size(); ++i)
                os << (i ? ", " : "") << operand(q.sets[i].second, false);
            os << ")";
            return os.str();
        }
        if (q.kind == RelKind::Update) {
            os << "UPDATE " << q.sources[0].table << " SET ";
            for (std::size_t i = 0; i < q.sets.size(); ++i)
                os << (i ? ", " : "") << q.sets[i].first << " = " << operand(q.sets[i].second, false);
            if (!q.where.empty())
                os << " WHERE " << conj(q.where);
            return os.str();
        }
        os << "SELECT ";
        if (q.distinct)
            os << "DISTINCT ";
        switch (q.projection) {
        case Projection::All: os << "*"; break;
        case Projection::Count: os << "COUNT(*)"; break;
        case Projection::SourceAll: os << q.sources[static_cast<std::size_t>(q.projectedSource)].alias << ".*"; break;
        case Projection::Columns:
            for (std::size_t i = 0; i < q.columns.size(); ++i) {
                os << (i ? ", " : "") << column(q.columns[i].column);
                if (!q.columns[i].as.empty())
                    os << " AS " << q.columns[i].as;
            }
            break;
        }
        os << " FROM " << q.sources[0].table;
        if (aliased)
            os << " AS " << q.sources[0].alias;
        for (std::size_t i = 1; i < q.sources.size(); ++i) {
            const RelSource& s = q.sources[i];
            os << " INNER JOIN " << s.table << " AS " << s.alias;
            if (!s.on.empty())
                os << " ON " << conj(s.on);
        }
        if (!q.where.empty())
            os << " WHERE " << conj(q.where);
        if (q.groupBy)
            os << " GROUP BY " << column(*q.groupBy);
        if (q.orderBy)
            os << " ORDER BY " << column(*q.orderBy);
        if (q.limit)
            os << " LIMIT " << operand(*q.limit, false);
        if (q.offset)
            os << " OFFSET " << operand(*q.offset, false);
        return os.str();
    }
};

} // namespace

std::string emit_sql(const RelQuery& q)
{
    if (q.sources.empty())
        throw Error(ErrorCode::InvalidArgument, "query has no source table");
    return Printer{q}.select();
}

std::string emit_sql(const QueryDescriptor& q, const AppIR& ir) { return emit_sql(lower_query(ir, q)); }

std::string emit_view_sql(const ViewDef& v) { return "CREATE VIEW " + v.name + " AS " + emit_sql(v.query); }

} // namespace ormlens
