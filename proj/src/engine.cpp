#include "ormlens/engine.hpp"

#include "ormlens/detectors.hpp"
#include "ormlens/error.hpp"
#include "ormlens/rng.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

namespace ormlens {

int Table::column_index(std::string_view column) const
{
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == column)
            return static_cast<int>(i);
    return -1;
}

const Row* Table::find(std::int64_t id) const
{
    auto it = std::lower_bound(rows.begin(), rows.end(), id,
                               [](const Row& r, std::int64_t v) { return std::get<std::int64_t>(r.cells[0]) < v; });
    if (it == rows.end() || std::get<std::int64_t>(it->cells[0]) != id)
        return nullptr;
    return &*it;
}

Row* Table::find(std::int64_t id) { return const_cast<Row*>(static_cast<const Table*>(this)->find(id)); }

const Table* TableStore::table(std::string_view name) const
{
    auto it = tables.find(std::string(name));
    return it == tables.end() ? nullptr : &it->second;
}

Table* TableStore::table(std::string_view name)
{
    auto it = tables.find(std::string(name));
    return it == tables.end() ? nullptr : &it->second;
}

std::size_t TableStore::row_count() const
{
    std::size_t n = 0;
    for (const auto& [_, t] : tables)
        n += t.rows.size();
    return n;
}

TableStore empty_store(const AppIR& ir)
{
    TableStore s;
    for (const auto& m : ir.models) {
        Table t;
        t.name = m.table;
        t.model = m.name;
        for (const auto& f : m.fields)
            t.columns.push_back(f.name);
        s.tables.emplace(m.table, std::move(t));
    }
    return s;
}

namespace {

constexpr std::int64_t kEpoch2016 = 1451606400; // 2016-01-01T00:00:00Z
constexpr std::int64_t kWindowSeconds = 366 * 86400;
constexpr char kAlnum[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

std::string random_string(SplitMix64& rng, int maxLen)
{
    int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, maxLen))));
    std::string s;
    for (int i = 0; i < len; ++i)
        s += kAlnum[rng.below(sizeof kAlnum - 1)];
    return s;
}

} // namespace

TableStore generate_data(const AppIR& ir, std::uint64_t seed, int rowsPerModel,
                         const std::vector<ColumnSourceFinding>* columns)
{
    TableStore store = empty_store(ir);
    if (rowsPerModel <= 0)
        return store;
    // (model, fk column) -> referenced model
    std::map<std::pair<std::string, std::string>, std::string> parents;
    for (const auto& m : ir.models)
        for (const auto& a : m.associations) {
            if (a.kind == AssocKind::BelongsTo)
                parents[{m.name, a.foreignKey}] = a.target;
            else
                parents[{a.target, a.foreignKey}] = m.name;
        }
    std::map<std::pair<std::string, std::string>, const std::vector<Value>*> domains;
    if (columns)
        for (const auto& c : *columns)
            if (c.label == ColumnSourceLabel::OnlyConst && !c.domain.empty())
                domains[{c.model, c.column}] = &c.domain;

    SplitMix64 root(seed);
    for (const auto& m : ir.models) {
        SplitMix64 rng = root.split();
        Table& t = *store.table(m.table);
        for (int i = 1; i <= rowsPerModel; ++i) {
            Row r;
            r.cells.push_back(std::int64_t{i});
            for (std::size_t fi = 1; fi < m.fields.size(); ++fi) {
                const FieldDecl& f = m.fields[fi];
                if (auto d = domains.find({m.name, f.name}); d != domains.end()) {
                    r.cells.push_back((*d->second)[rng.below(d->second->size())]);
                    continue;
                }
                if (auto p = parents.find({m.name, f.name}); p != parents.end()) {
                    r.cells.push_back(std::int64_t(1 + static_cast<std::int64_t>(rng.below(rowsPerModel))));
                    continue;
                }
                switch (f.kind) {
                case FieldKind::Int: r.cells.push_back(static_cast<std::int64_t>(rng.below(100))); break;
                case FieldKind::Float: r.cells.push_back(rng.unit() * 100.0); break;
                case FieldKind::Bool: r.cells.push_back(rng.below(2) == 1); break;
                case FieldKind::Datetime:
                    r.cells.push_back(kEpoch2016 + static_cast<std::int64_t>(rng.below(kWindowSeconds)));
                    break;
                case FieldKind::String: r.cells.push_back(random_string(rng, std::min(f.maxLen, 16))); break;
                case FieldKind::Text: r.cells.push_back(random_string(rng, 32)); break;
                }
            }
            t.rows.push_back(std::move(r));
        }
        t.nextId = rowsPerModel + 1;
    }
    return store;
}

void add_view(TableStore& store, const ViewDef& view) { store.views[view.name] = view.query; }

namespace {

// Hash key that is equal whenever compare_values reports equality.
struct Key {
    int kind = 0; // 0 null, 1 number, 2 string
    double num = 0;
    std::string str;
    bool operator==(const Key&) const = default;
};

struct KeyHash {
    std::size_t operator()(const Key& k) const
    {
        return std::hash<int>()(k.kind) ^ (std::hash<double>()(k.num) << 1) ^ (std::hash<std::string>()(k.str) << 2);
    }
};

Key key_of(const Value& v)
{
    if (is_null(v))
        return {};
    if (const auto* s = std::get_if<std::string>(&v))
        return {2, 0, *s};
    return {1, as_number(v), {}};
}

struct Source {
    std::string table;
    std::vector<std::string> columns;
    std::vector<std::vector<Value>> rows;
    std::vector<std::vector<RowIdentity>> ids;
};

Source materialize(const TableStore& store, const RelSource& s, int index, int depth)
{
    Source out;
    out.table = s.table;
    if (auto v = store.views.find(s.table); v != store.views.end()) {
        if (depth > 8)
            throw Error(ErrorCode::InvalidArgument, "view nesting too deep: " + s.table);
        ResultSet r = execute(store, v->second);
        for (const auto& c : r.columns)
            out.columns.push_back(c.name);
        out.rows = std::move(r.rows);
        out.ids = std::move(r.identities);
        for (auto& ids : out.ids)
            for (auto& id : ids)
                id.source = index;
        return out;
    }
    const Table* t = store.table(s.table);
    if (!t)
        throw Error(ErrorCode::UnknownColumn, "unknown table " + s.table);
    out.columns = t->columns;
    for (const auto& r : t->rows) {
        out.rows.push_back(r.cells);
        out.ids.push_back({{t->name, std::get<std::int64_t>(r.cells[0]), r.version, index}});
    }
    return out;
}

bool compare_op(const Value& a, CmpOp op, const Value& b)
{
    auto c = compare_values(a, b);
    switch (op) {
    case CmpOp::Eq:
    case CmpOp::In: return c == 0;
    case CmpOp::Ne: return c < 0 || c > 0;
    case CmpOp::Lt: return c < 0;
    case CmpOp::Gt: return c > 0;
    }
    return false;
}

class Executor {
public:
    Executor(const TableStore& store, const RelQuery& q, int depth) : store_(store), q_(q)
    {
        for (std::size_t i = 0; i < q.sources.size(); ++i)
            sources_.push_back(materialize(store, q.sources[i], static_cast<int>(i), depth + 1));
    }

    ResultSet run()
    {
        check_bound();
        using Tuple = std::vector<int>;
        std::vector<Tuple> tuples;
        for (std::size_t r = 0; r < sources_[0].rows.size(); ++r)
            tuples.push_back({static_cast<int>(r)});
        for (std::size_t j = 1; j < q_.sources.size(); ++j)
            tuples = join(tuples, static_cast<int>(j));
        std::vector<Tuple> kept;
        for (auto& t : tuples)
            if (matches(q_.where, t))
                kept.push_back(std::move(t));
        tuples = std::move(kept);

        if (q_.groupBy) {
            auto [s, c] = resolve(*q_.groupBy);
            std::vector<Key> seen;
            std::vector<Tuple> grouped;
            for (auto& t : tuples) {
                Key k = key_of(cell(t, s, c));
                if (std::find(seen.begin(), seen.end(), k) != seen.end())
                    continue;
                seen.push_back(std::move(k));
                grouped.push_back(std::move(t));
            }
            tuples = std::move(grouped);
        }

        ResultSet out;
        out.sourceColumns.resize(q_.sources.size());
        std::vector<std::pair<int, int>> outCols = output_columns(out);

        std::vector<std::vector<Value>> projected;
        for (const auto& t : tuples) {
            std::vector<Value> row;
            for (auto [s, c] : outCols)
                row.push_back(cell(t, s, c));
            projected.push_back(std::move(row));
        }
        std::vector<std::size_t> order(tuples.size());
        for (std::size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        if (q_.distinct) {
            std::vector<std::size_t> unique;
            for (std::size_t i : order) {
                bool dup = std::any_of(unique.begin(), unique.end(),
                                       [&](std::size_t u) { return projected[u] == projected[i]; });
                if (!dup)
                    unique.push_back(i);
            }
            order = std::move(unique);
        }
        if (q_.orderBy) {
            auto [s, c] = resolve(*q_.orderBy);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return value_less(cell(tuples[a], s, c), cell(tuples[b], s, c));
            });
        }
        std::size_t begin = 0, end = order.size();
        if (q_.offset)
            begin = std::min(end, static_cast<std::size_t>(std::max<std::int64_t>(0, as_int(scalar(*q_.offset)))));
        if (q_.limit)
            end = std::min(end, begin + static_cast<std::size_t>(std::max<std::int64_t>(0, as_int(scalar(*q_.limit)))));

        if (q_.projection == Projection::Count) {
            out.scalar = true;
            std::int64_t n = static_cast<std::int64_t>(end - begin);
            out.value = q_.any ? Value(n > 0) : Value(n);
            return out;
        }
        for (std::size_t i = begin; i < end; ++i) {
            const Tuple& t = tuples[order[i]];
            out.rows.push_back(std::move(projected[order[i]]));
            std::vector<RowIdentity> ids;
            for (std::size_t s = 0; s < t.size(); ++s)
                if (!out.sourceColumns[s].empty())
                    for (const auto& id : sources_[s].ids[static_cast<std::size_t>(t[s])])
                        ids.push_back(id);
            out.identities.push_back(std::move(ids));
        }
        return out;
    }

private:
    const TableStore& store_;
    const RelQuery& q_;
    std::vector<Source> sources_;

    std::pair<int, int> resolve(const RelColumn& c) const
    {
        int s = c.alias.empty() ? 0 : q_.source_index(c.alias);
        if (s < 0)
            throw Error(ErrorCode::UnknownColumn, "unknown alias " + c.alias);
        const auto& cols = sources_[static_cast<std::size_t>(s)].columns;
        auto it = std::find(cols.begin(), cols.end(), c.column);
        if (it == cols.end())
            throw Error(ErrorCode::UnknownColumn, "unknown column " + (c.alias.empty() ? "" : c.alias + ".") + c.column);
        return {s, static_cast<int>(it - cols.begin())};
    }

    const Value& cell(const std::vector<int>& t, int s, int c) const
    {
        return sources_[static_cast<std::size_t>(s)].rows[static_cast<std::size_t>(t[static_cast<std::size_t>(s)])]
                       [static_cast<std::size_t>(c)];
    }

    static Value scalar(const RelOperand& o)
    {
        if (!o.value || o.value->values.empty())
            return {};
        return o.value->values.front();
    }

    void check_operand(const RelOperand& o) const
    {
        if (o.kind == OperandKind::Column) {
            resolve(o.column);
            return;
        }
        if (!o.value)
            throw Error(ErrorCode::UnboundParameter,
                        o.kind == OperandKind::Param ? "unbound parameter :" + o.name : "unbound query operand");
    }

    void check_bound() const
    {
        for (const auto& s : q_.sources)
            for (const auto& p : s.on) {
                resolve(p.lhs);
                check_operand(p.rhs);
            }
        for (const auto& p : q_.where) {
            resolve(p.lhs);
            check_operand(p.rhs);
        }
        if (q_.limit)
            check_operand(*q_.limit);
        if (q_.offset)
            check_operand(*q_.offset);
    }

    bool holds(const RelPredicate& p, const std::vector<int>& t) const
    {
        auto [s, c] = resolve(p.lhs);
        const Value& lhs = cell(t, s, c);
        if (p.rhs.kind == OperandKind::Column) {
            auto [rs, rc] = resolve(p.rhs.column);
            return compare_op(lhs, p.op, cell(t, rs, rc));
        }
        const BoundValue& v = *p.rhs.value;
        if (p.op == CmpOp::In)
            return std::any_of(v.values.begin(), v.values.end(), [&](const Value& x) { return compare_op(lhs, p.op, x); });
        return compare_op(lhs, p.op, v.values.empty() ? Value{} : v.values.front());
    }

    bool matches(const std::vector<RelPredicate>& ps, const std::vector<int>& t) const
    {
        return std::all_of(ps.begin(), ps.end(), [&](const RelPredicate& p) { return holds(p, t); });
    }

    std::vector<std::vector<int>> join(const std::vector<std::vector<int>>& in, int j)
    {
        const RelSource& src = q_.sources[static_cast<std::size_t>(j)];
        const Source& rows = sources_[static_cast<std::size_t>(j)];
        // An equality between the new source and an already joined one drives a hash join.
        std::optional<std::pair<int, std::pair<int, int>>> hashOn;
        for (const auto& p : src.on) {
            if (p.op != CmpOp::Eq || p.rhs.kind != OperandKind::Column)
                continue;
            auto l = resolve(p.lhs);
            auto r = resolve(p.rhs.column);
            if (l.first == j && r.first < j)
                hashOn = {{l.second, r}};
            else if (r.first == j && l.first < j)
                hashOn = {{r.second, l}};
            if (hashOn)
                break;
        }
        std::vector<std::vector<int>> out;
        if (hashOn) {
            std::unordered_map<Key, std::vector<int>, KeyHash> index;
            for (std::size_t r = 0; r < rows.rows.size(); ++r) {
                const Value& v = rows.rows[r][static_cast<std::size_t>(hashOn->first)];
                if (!is_null(v))
                    index[key_of(v)].push_back(static_cast<int>(r));
            }
            auto [os, oc] = hashOn->second;
            for (const auto& t : in) {
                const Value& v = cell(t, os, oc);
                if (is_null(v))
                    continue;
                auto it = index.find(key_of(v));
                if (it == index.end())
                    continue;
                for (int r : it->second) {
                    std::vector<int> nt = t;
                    nt.push_back(r);
                    if (matches(src.on, nt))
                        out.push_back(std::move(nt));
                }
            }
            return out;
        }
        for (const auto& t : in)
            for (std::size_t r = 0; r < rows.rows.size(); ++r) {
                std::vector<int> nt = t;
                nt.push_back(static_cast<int>(r));
                if (matches(src.on, nt))
                    out.push_back(std::move(nt));
            }
        return out;
    }

    std::vector<std::pair<int, int>> output_columns(ResultSet& out) const
    {
        std::vector<std::pair<int, int>> cols;
        auto add_source = [&](int s) {
            const Source& src = sources_[static_cast<std::size_t>(s)];
            for (std::size_t c = 0; c < src.columns.size(); ++c) {
                cols.push_back({s, static_cast<int>(c)});
                out.columns.push_back({s, src.columns[c], src.columns[c]});
                out.sourceColumns[static_cast<std::size_t>(s)].push_back(src.columns[c]);
            }
        };
        switch (q_.projection) {
        case Projection::Count: break;
        case Projection::All:
            for (std::size_t s = 0; s < sources_.size(); ++s)
                add_source(static_cast<int>(s));
            break;
        case Projection::SourceAll: add_source(q_.projectedSource); break;
        case Projection::Columns:
            for (const auto& o : q_.columns) {
                auto [s, c] = resolve(o.column);
                cols.push_back({s, c});
                out.columns.push_back({s, o.column.column, o.as.empty() ? o.column.column : o.as});
                auto& sc = out.sourceColumns[static_cast<std::size_t>(s)];
                if (std::find(sc.begin(), sc.end(), o.column.column) == sc.end())
                    sc.push_back(o.column.column);
            }
            break;
        }
        return cols;
    }
};

} // namespace

ResultSet execute(const TableStore& store, const RelQuery& q)
{
    if (q.kind != RelKind::Select)
        throw Error(ErrorCode::InvalidArgument, "execute expects a SELECT");
    if (q.sources.empty())
        throw Error(ErrorCode::InvalidArgument, "query has no source table");
    return Executor(store, q, 0).run();
}

std::vector<RowIdentity> execute_write(TableStore& store, const RelQuery& q)
{
    if (q.sources.empty())
        throw Error(ErrorCode::InvalidArgument, "write has no target table");
    Table* t = store.table(q.sources[0].table);
    if (!t)
        throw Error(ErrorCode::UnknownColumn, "unknown table " + q.sources[0].table);
    auto value_of = [](const RelOperand& o) -> Value {
        if (o.kind == OperandKind::Column)
            throw Error(ErrorCode::InvalidArgument, "column operand in a write");
        if (!o.value)
            throw Error(ErrorCode::UnboundParameter,
                        o.kind == OperandKind::Param ? "unbound parameter :" + o.name : "unbound write operand");
        return o.value->values.empty() ? Value{} : o.value->values.front();
    };
    auto set_cells = [&](Row& r) {
        for (const auto& [col, o] : q.sets) {
            int c = t->column_index(col);
            if (c < 0)
                throw Error(ErrorCode::UnknownColumn, "unknown column " + col);
            if (c == 0)
                continue;
            r.cells[static_cast<std::size_t>(c)] = value_of(o);
        }
    };
    if (q.kind == RelKind::Insert) {
        Row r;
        r.cells.resize(t->columns.size());
        r.cells[0] = t->nextId++;
        set_cells(r);
        t->rows.push_back(std::move(r));
        return {{t->name, std::get<std::int64_t>(t->rows.back().cells[0]), 0, 0}};
    }
    if (q.kind != RelKind::Update)
        throw Error(ErrorCode::InvalidArgument, "execute_write expects INSERT or UPDATE");
    std::vector<RowIdentity> out;
    for (auto& r : t->rows) {
        bool all = true;
        for (const auto& p : q.where) {
            int c = t->column_index(p.lhs.column);
            if (c < 0)
                throw Error(ErrorCode::UnknownColumn, "unknown column " + p.lhs.column);
            if (!compare_op(r.cells[static_cast<std::size_t>(c)], p.op, value_of(p.rhs)))
                all = false;
        }
        if (!all)
            continue;
        set_cells(r);
        ++r.version;
        out.push_back({t->name, std::get<std::int64_t>(r.cells[0]), r.version, 0});
    }
    return out;
}

ResultSet execute_query(const TableStore& store, const AppIR& ir, const QueryDescriptor& q,
                        const QueryBindings& bindings)
{
    return execute(store, lower_query(ir, q, &bindings));
}

} // namespace ormlens
