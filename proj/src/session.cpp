#include "ormlens/session.hpp"

#include "ormlens/detectors.hpp"
#include "ormlens/error.hpp"
#include "ormlens/ir_json.hpp"
#include "ormlens/rng.hpp"

#include <algorithm>
#include <memory>
#include <sstream>

namespace ormlens {

namespace {

constexpr std::int64_t kNow = 1483228800; // 2017-01-01T00:00:00Z
constexpr std::size_t kStepQueryBudget = 20000;
constexpr int kCallDepthLimit = 32;

struct Record;
struct Relation;

struct RtValue {
    enum class Kind { Scalar, Record, Relation, List };
    Kind kind = Kind::Scalar;
    Value v;
    std::shared_ptr<Record> rec;
    std::shared_ptr<Relation> rel;
    std::shared_ptr<std::vector<RtValue>> list;
    bool input = false;

    static RtValue scalar(Value x, bool in = false)
    {
        RtValue r;
        r.v = std::move(x);
        r.input = in;
        return r;
    }
    static RtValue of_list(std::vector<RtValue> xs, bool in = false)
    {
        RtValue r;
        r.kind = Kind::List;
        r.list = std::make_shared<std::vector<RtValue>>(std::move(xs));
        r.input = in;
        return r;
    }
};

struct Record {
    std::string model;
    std::map<std::string, Value> fields;
    std::set<std::string> inputFields;
    std::set<std::string> eager;
    std::map<std::string, RtValue> assocs;
    bool persisted = false;
    int entry = -1;
    std::string binding;
};

struct Relation {
    std::string model;
    std::vector<QueryOp> ops;
    std::vector<std::optional<BoundValue>> preds;
    std::optional<Value> limit;
    std::optional<Value> offset;
    SourceLoc loc;
    bool lazy = false;
    bool input = false;
    std::optional<RtValue> loaded;
};

struct StepAbort {};

// Random alphanumeric text of length 1..maxLen.
std::string random_text(SplitMix64& rng, int maxLen)
{
    static constexpr char kAlnum[] = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
    std::size_t n = 1 + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(std::max(maxLen, 1))));
    std::string s;
    for (std::size_t i = 0; i < n; ++i)
        s.push_back(kAlnum[rng.below(sizeof(kAlnum) - 1)]);
    return s;
}

bool is_int_like(const Value& v) { return is_null(v) || std::holds_alternative<std::int64_t>(v) || std::holds_alternative<bool>(v); }

Value arith(BinOp op, const Value& a, const Value& b)
{
    if (op == BinOp::Add && (std::holds_alternative<std::string>(a) || std::holds_alternative<std::string>(b)))
        return display_value(a) + display_value(b);
    if (is_int_like(a) && is_int_like(b)) {
        std::int64_t x = as_int(a), y = as_int(b);
        switch (op) {
        case BinOp::Add: return x + y;
        case BinOp::Sub: return x - y;
        case BinOp::Mul: return x * y;
        default:
            if (y == 0)
                return {};
            return x / y;
        }
    }
    double x = as_number(a), y = as_number(b);
    switch (op) {
    case BinOp::Add: return x + y;
    case BinOp::Sub: return x - y;
    case BinOp::Mul: return x * y;
    default:
        if (y == 0)
            return {};
        return x / y;
    }
}

bool values_equal(const Value& a, const Value& b)
{
    if (is_null(a) || is_null(b))
        return is_null(a) && is_null(b);
    return compare_values(a, b) == std::partial_ordering::equivalent;
}

class Interpreter {
public:
    Interpreter(const AppIR& ir, TableStore& store, std::vector<QueryLogEntry>& log, SplitMix64& rng)
        : ir_(ir), store_(store), log_(log), rng_(rng)
    {
        for (const auto& g : ir.globals)
            globals_[g.name] = RtValue::scalar(g.init);
    }

    std::vector<PageLink> run(const SessionStep& step)
    {
        step_ = &step;
        links_.clear();
        stepStart_ = log_.size();
        const ActionDecl* a = ir_.action(step.action);
        if (!a)
            throw Error(ErrorCode::UnknownAction, "unknown action " + to_string(step.action));
        frames_.clear();
        frames_.emplace_back();
        returned_.reset();
        try {
            exec_block(a->body);
        } catch (const StepAbort&) {
        }
        frames_.clear();
        return links_;
    }

private:
    using Frame = std::map<std::string, RtValue>;

    const AppIR& ir_;
    TableStore& store_;
    std::vector<QueryLogEntry>& log_;
    SplitMix64& rng_;
    std::map<std::string, RtValue> globals_;
    std::vector<Frame> frames_;
    std::vector<PageLink> links_;
    const SessionStep* step_ = nullptr;
    std::size_t stepStart_ = 0;
    std::optional<RtValue> returned_;

    // --- values ---------------------------------------------------------------------
    Value scalar_of(const RtValue& v)
    {
        switch (v.kind) {
        case RtValue::Kind::Scalar: return v.v;
        case RtValue::Kind::Record: {
            auto it = v.rec->fields.find("id");
            return it == v.rec->fields.end() ? Value{} : it->second;
        }
        default: return {};
        }
    }

    std::vector<RtValue> elements(const RtValue& v)
    {
        switch (v.kind) {
        case RtValue::Kind::List: return *v.list;
        case RtValue::Kind::Relation: {
            RtValue m = materialize(*v.rel);
            if (m.kind == RtValue::Kind::List)
                return *m.list;
            if (m.kind == RtValue::Kind::Record)
                return {m};
            return {};
        }
        case RtValue::Kind::Record: return {v};
        case RtValue::Kind::Scalar:
            if (is_null(v.v))
                return {};
            return {v};
        }
        return {};
    }

    BoundValue bound_of(const RtValue& v, bool list)
    {
        BoundValue b;
        b.list = list;
        if (v.kind == RtValue::Kind::Scalar || v.kind == RtValue::Kind::Record) {
            b.values.push_back(scalar_of(v));
        } else {
            for (const auto& e : elements(v))
                b.values.push_back(scalar_of(e));
            if (!list) {
                Value first = b.values.empty() ? Value{} : b.values.front();
                b.values = {first};
            }
        }
        return b;
    }

    bool truthy_rt(const RtValue& v) { return v.kind != RtValue::Kind::Scalar || truthy(v.v); }

    void touch(const Record& r, const std::string& column)
    {
        if (column == "id" || r.entry < 0 || static_cast<std::size_t>(r.entry) >= log_.size())
            return;
        log_[static_cast<std::size_t>(r.entry)].accessed.insert({r.binding, column});
    }

    // --- queries --------------------------------------------------------------------
    QueryLogEntry& new_entry(SourceLoc loc, LogKind kind)
    {
        if (log_.size() - stepStart_ >= kStepQueryBudget)
            throw StepAbort{};
        QueryLogEntry e;
        e.seq = log_.size();
        e.step = step_->index;
        e.action = step_->action;
        e.via = step_->via;
        e.restart = step_->restart;
        e.loc = loc;
        e.kind = kind;
        log_.push_back(std::move(e));
        return log_.back();
    }

    RtValue execute_relation(Relation& r)
    {
        QueryDescriptor d;
        RelQuery rq;
        ResultSet rs;
        try {
            d = descriptor_from_ops(ir_, r.model, r.ops);
            QueryBindings b;
            b.predicates = r.preds;
            b.limit = r.limit;
            b.offset = r.offset;
            rq = lower_query(ir_, d, &b);
            rs = execute(store_, rq);
        } catch (const Error&) {
            return {};
        }
        int entry = static_cast<int>(log_.size());
        QueryLogEntry& e = new_entry(r.loc, LogKind::Read);
        e.lazy = r.lazy;
        e.usesInput = r.input;
        e.sql = emit_sql(rq);
        e.scalar = rs.scalar;
        e.value = rs.value;
        std::map<std::pair<std::string, std::int64_t>, std::size_t> rowIndex;
        for (const auto& ids : rs.identities)
            for (const auto& id : ids) {
                auto key = std::make_pair(id.table, id.id);
                std::size_t at;
                if (auto it = rowIndex.find(key); it != rowIndex.end()) {
                    at = it->second;
                } else {
                    at = e.rows.size();
                    rowIndex[key] = at;
                    e.rows.push_back({id.table, id.id, id.version, {}});
                }
                auto& cols = e.rows[at].columns;
                if (static_cast<std::size_t>(id.source) < rs.sourceColumns.size())
                    for (const auto& c : rs.sourceColumns[static_cast<std::size_t>(id.source)])
                        if (std::find(cols.begin(), cols.end(), c) == cols.end())
                            cols.push_back(c);
            }
        if (rs.scalar)
            return RtValue::scalar(rs.value);
        RtValue list = records_from(rs, rq, d, entry);
        if (d.aggregate == Aggregate::FindByPk)
            return list.list->empty() ? RtValue{} : list.list->front();
        return list;
    }

    RtValue records_from(const ResultSet& rs, const RelQuery& rq, const QueryDescriptor& d, int entry)
    {
        const ModelDecl* root = ir_.model(d.rootModel);
        std::vector<RtValue> out;
        std::map<std::int64_t, std::shared_ptr<Record>> byId;
        for (const auto& row : rs.rows) {
            std::vector<std::map<std::string, Value>> per(rq.sources.size());
            for (std::size_t c = 0; c < rs.columns.size() && c < row.size(); ++c) {
                const ResultColumn& rc = rs.columns[c];
                if (static_cast<std::size_t>(rc.source) < per.size())
                    per[static_cast<std::size_t>(rc.source)][rc.column] = row[c];
            }
            std::shared_ptr<Record> rec;
            auto idIt = per[0].find("id");
            std::optional<std::int64_t> id;
            if (idIt != per[0].end() && std::holds_alternative<std::int64_t>(idIt->second))
                id = std::get<std::int64_t>(idIt->second);
            if (id) {
                if (auto it = byId.find(*id); it != byId.end())
                    rec = it->second;
            }
            if (!rec) {
                rec = std::make_shared<Record>();
                rec->model = d.rootModel;
                rec->fields = per[0];
                rec->persisted = true;
                rec->entry = entry;
                rec->eager.insert(d.eagerLoads.begin(), d.eagerLoads.end());
                if (id)
                    byId[*id] = rec;
                RtValue v;
                v.kind = RtValue::Kind::Record;
                v.rec = rec;
                out.push_back(v);
            }
            for (std::size_t s = 1; s < rq.sources.size(); ++s) {
                const std::string& assoc = rq.sources[s].assoc;
                if (assoc.empty() || !rec->eager.count(assoc) || !root)
                    continue;
                const Association* a = root->association(assoc);
                if (!a)
                    continue;
                auto child = std::make_shared<Record>();
                child->model = a->target;
                child->fields = per[s];
                child->persisted = true;
                child->entry = entry;
                child->binding = assoc;
                RtValue cv;
                cv.kind = RtValue::Kind::Record;
                cv.rec = child;
                if (a->kind == AssocKind::HasMany) {
                    auto& slot = rec->assocs[assoc];
                    if (slot.kind != RtValue::Kind::List)
                        slot = RtValue::of_list({});
                    Value cid = child->fields.count("id") ? child->fields["id"] : Value{};
                    bool dup = std::any_of(slot.list->begin(), slot.list->end(), [&](const RtValue& x) {
                        return values_equal(scalar_of(x), cid);
                    });
                    if (!dup)
                        slot.list->push_back(cv);
                } else if (!rec->assocs.count(assoc)) {
                    rec->assocs[assoc] = cv;
                }
            }
        }
        return RtValue::of_list(std::move(out));
    }

    RtValue materialize(Relation& r)
    {
        if (!r.loaded)
            r.loaded = execute_relation(r);
        return *r.loaded;
    }

    static QueryOp where_op(const std::string& column)
    {
        QueryOp op;
        op.kind = QueryOpKind::Where;
        op.terms.push_back({{"", column}, CmpOp::Eq, {}});
        return op;
    }

    RtValue association(Record& r, const Association& a)
    {
        if (r.eager.count(a.name)) {
            if (auto it = r.assocs.find(a.name); it != r.assocs.end())
                return it->second;
            return a.kind == AssocKind::HasMany ? RtValue::of_list({}) : RtValue{};
        }
        auto rel = std::make_shared<Relation>();
        rel->model = a.target;
        rel->lazy = true;
        rel->loc = current_loc_;
        if (a.kind == AssocKind::BelongsTo) {
            touch(r, a.foreignKey);
            Value fk = r.fields.count(a.foreignKey) ? r.fields[a.foreignKey] : Value{};
            if (is_null(fk))
                return {};
            QueryOp op;
            op.kind = QueryOpKind::Find;
            rel->ops.push_back(op);
            rel->preds.push_back(BoundValue{{fk}, false});
            return execute_relation(*rel);
        }
        Value id = r.fields.count("id") ? r.fields["id"] : Value{};
        rel->ops.push_back(where_op(a.foreignKey));
        rel->preds.push_back(BoundValue{{id}, false});
        if (a.kind == AssocKind::HasOne) {
            QueryOp lim;
            lim.kind = QueryOpKind::Limit;
            rel->ops.push_back(lim);
            rel->limit = std::int64_t{1};
            RtValue v = execute_relation(*rel);
            if (v.kind == RtValue::Kind::List)
                return v.list->empty() ? RtValue{} : v.list->front();
            return v;
        }
        RtValue v;
        v.kind = RtValue::Kind::Relation;
        v.rel = rel;
        return v;
    }

    RtValue field_of(const RtValue& base, const std::string& field)
    {
        switch (base.kind) {
        case RtValue::Kind::Scalar: return {};
        case RtValue::Kind::Record: {
            Record& r = *base.rec;
            const ModelDecl* m = ir_.model(r.model);
            if (m) {
                if (const Association* a = m->association(field))
                    return association(r, *a);
            }
            touch(r, field);
            auto it = r.fields.find(field);
            if (it == r.fields.end())
                return {};
            return RtValue::scalar(it->second, r.inputFields.count(field) > 0);
        }
        case RtValue::Kind::Relation:
        case RtValue::Kind::List: {
            std::vector<RtValue> out;
            bool in = base.input;
            for (const auto& e : elements(base)) {
                RtValue x = field_of(e, field);
                in = in || x.input;
                if (x.kind == RtValue::Kind::List || x.kind == RtValue::Kind::Relation) {
                    for (auto& y : elements(x))
                        out.push_back(y);
                } else {
                    out.push_back(x);
                }
            }
            return RtValue::of_list(std::move(out), in);
        }
        }
        return {};
    }

    RtValue eval_query(const QueryExpr& q, SourceLoc loc)
    {
        auto rel = std::make_shared<Relation>();
        if (q.base) {
            RtValue b = eval(*q.base);
            if (b.kind != RtValue::Kind::Relation)
                return {};
            rel->model = b.rel->model;
            rel->ops = b.rel->ops;
            rel->preds = b.rel->preds;
            rel->limit = b.rel->limit;
            rel->offset = b.rel->offset;
            rel->input = b.rel->input;
            if (!rel->ops.empty() && is_terminal_op(rel->ops.back().kind))
                return {};
        } else {
            rel->model = q.model;
        }
        rel->loc = loc;
        for (const auto& op : q.ops) {
            rel->ops.push_back(op);
            for (const auto& t : op.terms) {
                RtValue v = eval(*t.value);
                rel->input = rel->input || v.input;
                rel->preds.push_back(bound_of(v, t.op == CmpOp::In));
            }
            if (op.kind == QueryOpKind::Find || op.kind == QueryOpKind::Limit || op.kind == QueryOpKind::Offset) {
                RtValue v = eval(*op.arg);
                rel->input = rel->input || v.input;
                Value x = scalar_of(v);
                if (op.kind == QueryOpKind::Find)
                    rel->preds.push_back(BoundValue{{x}, false});
                else if (op.kind == QueryOpKind::Limit)
                    rel->limit = as_int(x);
                else
                    rel->offset = as_int(x);
            }
        }
        if (!rel->ops.empty() && is_terminal_op(rel->ops.back().kind))
            return execute_relation(*rel);
        RtValue v;
        v.kind = RtValue::Kind::Relation;
        v.rel = rel;
        return v;
    }

    void execute_write(const QueryDescriptor& d, const QueryBindings& b, SourceLoc loc, bool input,
                       std::vector<RowIdentity>& affected, std::string& sql)
    {
        RelQuery rq = lower_query(ir_, d, &b);
        sql = emit_sql(rq);
        affected = ormlens::execute_write(store_, rq);
        QueryLogEntry& e = new_entry(loc, LogKind::Write);
        e.usesInput = input;
        e.sql = sql;
        std::vector<std::string> cols;
        for (const auto& s : rq.sets)
            cols.push_back(s.first);
        for (const auto& a : affected)
            e.rows.push_back({a.table, a.id, a.version, cols});
    }

    // Insert or update `r` with its current field values.
    void save(Record& r, SourceLoc loc)
    {
        const ModelDecl* m = ir_.model(r.model);
        if (!m)
            return;
        bool input = !r.inputFields.empty();
        std::vector<RowIdentity> affected;
        std::string sql;
        QueryDescriptor d;
        d.rootModel = m->name;
        QueryBindings b;
        Value id = r.fields.count("id") ? r.fields["id"] : Value{};
        try {
            if (r.persisted && std::holds_alternative<std::int64_t>(id)) {
                d.kind = QueryKind::Save;
                const Table* t = store_.table(m->table);
                const Row* row = t ? t->find(std::get<std::int64_t>(id)) : nullptr;
                for (std::size_t i = 1; i < m->fields.size(); ++i) {
                    const std::string& f = m->fields[i].name;
                    if (auto it = r.fields.find(f); it != r.fields.end())
                        b.writes.push_back(it->second);
                    else if (row)
                        b.writes.push_back(row->cells[i]);
                    else
                        b.writes.push_back(Value{});
                }
                b.predicates.push_back(BoundValue{{id}, false});
                execute_write(d, b, loc, input, affected, sql);
            } else {
                d.kind = QueryKind::Insert;
                for (std::size_t i = 1; i < m->fields.size(); ++i) {
                    const std::string& f = m->fields[i].name;
                    d.writes.push_back({f, {}, {}});
                    b.writes.push_back(r.fields.count(f) ? r.fields[f] : Value{});
                }
                execute_write(d, b, loc, input, affected, sql);
                if (!affected.empty()) {
                    r.fields["id"] = affected.front().id;
                    r.persisted = true;
                }
            }
        } catch (const Error&) {
        }
    }

    RtValue create(const CreateExpr& c, SourceLoc loc)
    {
        const ModelDecl* m = ir_.model(c.model);
        if (!m)
            return {};
        QueryDescriptor d;
        d.kind = QueryKind::Insert;
        d.rootModel = c.model;
        QueryBindings b;
        auto rec = std::make_shared<Record>();
        rec->model = c.model;
        bool input = false;
        for (const auto& f : c.fields) {
            RtValue v = eval(*f.value);
            Value x = scalar_of(v);
            d.writes.push_back({f.name, f.value, {}});
            b.writes.push_back(x);
            rec->fields[f.name] = x;
            if (v.input) {
                rec->inputFields.insert(f.name);
                input = true;
            }
        }
        std::vector<RowIdentity> affected;
        std::string sql;
        try {
            execute_write(d, b, loc, input, affected, sql);
        } catch (const Error&) {
            return {};
        }
        if (!affected.empty()) {
            const Table* t = store_.table(m->table);
            if (const Row* row = t ? t->find(affected.front().id) : nullptr)
                for (std::size_t i = 0; i < t->columns.size(); ++i)
                    rec->fields[t->columns[i]] = row->cells[i];
            rec->persisted = true;
        }
        RtValue v;
        v.kind = RtValue::Kind::Record;
        v.rec = rec;
        return v;
    }

    // --- expressions ----------------------------------------------------------------
    SourceLoc current_loc_;

    RtValue* lookup(const std::string& name)
    {
        if (!frames_.empty())
            if (auto it = frames_.back().find(name); it != frames_.back().end())
                return &it->second;
        if (auto it = globals_.find(name); it != globals_.end())
            return &it->second;
        return nullptr;
    }

    RtValue call_utility(const CallExpr& c)
    {
        std::vector<RtValue> args;
        bool in = false;
        for (const auto& a : c.args) {
            args.push_back(eval(*a));
            in = in || args.back().input;
        }
        auto arg = [&](std::size_t i) { return i < args.size() ? scalar_of(args[i]) : Value{}; };
        Value out;
        const std::string& f = c.callee;
        if (f == "now") {
            out = kNow;
        } else if (f == "today") {
            out = kNow - kNow % 86400;
        } else if (f == "rand") {
            out = static_cast<std::int64_t>(rng_.below(100));
        } else if (f == "uuid") {
            static constexpr char kHex[] = "0123456789abcdef";
            std::string s;
            for (int i = 0; i < 32; ++i)
                s.push_back(kHex[rng_.below(16)]);
            out = s;
        } else if (f == "upcase" || f == "downcase") {
            std::string s = display_value(arg(0));
            for (auto& ch : s)
                ch = static_cast<char>(f == "upcase" ? std::toupper(static_cast<unsigned char>(ch))
                                                     : std::tolower(static_cast<unsigned char>(ch)));
            out = s;
        } else if (f == "length") {
            if (args.empty())
                out = std::int64_t{0};
            else if (args[0].kind == RtValue::Kind::Scalar)
                out = static_cast<std::int64_t>(display_value(args[0].v).size());
            else
                out = static_cast<std::int64_t>(elements(args[0]).size());
        } else if (f == "days_ago") {
            out = kNow - as_int(arg(0)) * 86400;
        } else if (f == "concat") {
            std::string s;
            for (std::size_t i = 0; i < args.size(); ++i)
                s += display_value(arg(i));
            out = s;
        } else if (f == "format") {
            std::string s;
            for (std::size_t i = 0; i < args.size(); ++i) {
                if (i)
                    s += " ";
                s += display_value(arg(i));
            }
            out = s;
        }
        return RtValue::scalar(out, in);
    }

    RtValue call_helper(const HelperDecl& h, const CallExpr& c)
    {
        if (frames_.size() > kCallDepthLimit)
            return {};
        Frame f;
        for (std::size_t i = 0; i < h.params.size(); ++i)
            f[h.params[i].name] = i < c.args.size() ? eval(*c.args[i]) : RtValue{};
        frames_.push_back(std::move(f));
        returned_.reset();
        exec_block(h.body);
        RtValue out = returned_ ? *returned_ : RtValue{};
        returned_.reset();
        frames_.pop_back();
        return out;
    }

    RtValue eval(const Expr& e)
    {
        SourceLoc saved = current_loc_;
        current_loc_ = e.loc;
        RtValue out = std::visit(
            [&](const auto& n) -> RtValue {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, LiteralExpr>) {
                    return RtValue::scalar(n.value);
                } else if constexpr (std::is_same_v<T, ParamExpr>) {
                    auto it = step_->params.find(n.name);
                    Value v = it == step_->params.end() ? Value{} : it->second;
                    return RtValue::scalar(v, step_->inputs.count(n.name) > 0);
                } else if constexpr (std::is_same_v<T, VarExpr>) {
                    RtValue* v = lookup(n.name);
                    return v ? *v : RtValue{};
                } else if constexpr (std::is_same_v<T, FieldExpr>) {
                    RtValue b = eval(*n.base);
                    current_loc_ = e.loc;
                    return field_of(b, n.field);
                } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                    return eval_binary(n);
                } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                    RtValue x = eval(*n.operand);
                    if (n.op == UnOp::Not)
                        return RtValue::scalar(!truthy_rt(x), x.input);
                    Value s = scalar_of(x);
                    if (is_int_like(s))
                        return RtValue::scalar(-as_int(s), x.input);
                    return RtValue::scalar(-as_number(s), x.input);
                } else if constexpr (std::is_same_v<T, CallExpr>) {
                    if (const HelperDecl* h = ir_.helper(n.callee))
                        return call_helper(*h, n);
                    return call_utility(n);
                } else if constexpr (std::is_same_v<T, QueryExpr>) {
                    return eval_query(n, e.loc);
                } else if constexpr (std::is_same_v<T, NewExpr>) {
                    RtValue v;
                    v.kind = RtValue::Kind::Record;
                    v.rec = std::make_shared<Record>();
                    v.rec->model = n.model;
                    return v;
                } else {
                    return create(n, e.loc);
                }
            },
            e.node);
        current_loc_ = saved;
        return out;
    }

    RtValue eval_binary(const BinaryExpr& b)
    {
        RtValue l = eval(*b.lhs);
        if (b.op == BinOp::And || b.op == BinOp::Or) {
            bool lt = truthy_rt(l);
            if (b.op == BinOp::And ? !lt : lt)
                return RtValue::scalar(lt, l.input);
            RtValue r = eval(*b.rhs);
            return RtValue::scalar(truthy_rt(r), l.input || r.input);
        }
        RtValue r = eval(*b.rhs);
        bool in = l.input || r.input;
        Value x = scalar_of(l);
        if (b.op == BinOp::In) {
            for (const auto& e : elements(r))
                if (values_equal(x, scalar_of(e)))
                    return RtValue::scalar(true, in);
            return RtValue::scalar(false, in);
        }
        Value y = scalar_of(r);
        auto ord = compare_values(x, y);
        switch (b.op) {
        case BinOp::Eq: return RtValue::scalar(values_equal(x, y), in);
        case BinOp::Ne: return RtValue::scalar(!values_equal(x, y), in);
        case BinOp::Lt: return RtValue::scalar(ord == std::partial_ordering::less, in);
        case BinOp::Gt: return RtValue::scalar(ord == std::partial_ordering::greater, in);
        case BinOp::Le:
            return RtValue::scalar(ord == std::partial_ordering::less || ord == std::partial_ordering::equivalent, in);
        case BinOp::Ge:
            return RtValue::scalar(ord == std::partial_ordering::greater || ord == std::partial_ordering::equivalent,
                                   in);
        default: return RtValue::scalar(arith(b.op, x, y), in);
        }
    }

    // --- statements -----------------------------------------------------------------
    void render(const RtValue& v)
    {
        switch (v.kind) {
        case RtValue::Kind::Scalar: return;
        case RtValue::Kind::Record:
            for (const auto& [f, _] : v.rec->fields)
                touch(*v.rec, f);
            return;
        default:
            for (const auto& e : elements(v))
                render(e);
        }
    }

    std::map<std::string, Value> named_args(const std::vector<NamedArg>& args)
    {
        std::map<std::string, Value> out;
        for (const auto& a : args)
            out[a.name] = scalar_of(eval(*a.value));
        return out;
    }

    // Value stored into a record field: a relation contributes its first row's first column.
    Value stored_value(const RtValue& v)
    {
        if (v.kind == RtValue::Kind::Relation) {
            auto xs = elements(v);
            if (xs.empty())
                return {};
            const RtValue& first = xs.front();
            if (first.kind != RtValue::Kind::Record)
                return scalar_of(first);
            QueryDescriptor d;
            try {
                d = descriptor_from_ops(ir_, v.rel->model, v.rel->ops);
            } catch (const Error&) {
                return {};
            }
            std::string col = d.select.empty() ? "id" : d.select.front();
            touch(*first.rec, col);
            auto it = first.rec->fields.find(col);
            return it == first.rec->fields.end() ? Value{} : it->second;
        }
        if (v.kind == RtValue::Kind::List)
            return v.list->empty() ? Value{} : scalar_of(v.list->front());
        return scalar_of(v);
    }

    void assign(const std::string& name, RtValue v)
    {
        if (frames_.back().count(name) || !globals_.count(name))
            frames_.back()[name] = std::move(v);
        else
            globals_[name] = std::move(v);
    }

    void exec_block(const Block& b)
    {
        for (const auto& s : b) {
            exec(*s);
            if (returned_)
                return;
        }
    }

    void exec(const Stmt& s)
    {
        current_loc_ = s.loc;
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, LetStmt>) {
                    frames_.back()[n.name] = eval(*n.value);
                } else if constexpr (std::is_same_v<T, AssignStmt>) {
                    assign(n.name, eval(*n.value));
                } else if constexpr (std::is_same_v<T, FieldAssignStmt>) {
                    RtValue v = eval(*n.value);
                    RtValue* t = lookup(n.target);
                    if (!t || t->kind != RtValue::Kind::Record)
                        return;
                    t->rec->fields[n.field] = stored_value(v);
                    if (v.input)
                        t->rec->inputFields.insert(n.field);
                    else
                        t->rec->inputFields.erase(n.field);
                } else if constexpr (std::is_same_v<T, ForStmt>) {
                    RtValue c = eval(*n.collection);
                    for (const auto& e : elements(c)) {
                        frames_.back()[n.var] = e;
                        exec_block(n.body);
                        if (returned_)
                            return;
                    }
                } else if constexpr (std::is_same_v<T, IfStmt>) {
                    if (truthy_rt(eval(*n.cond)))
                        exec_block(n.then_body);
                    else
                        exec_block(n.else_body);
                } else if constexpr (std::is_same_v<T, RenderStmt>) {
                    for (const auto& a : n.args)
                        render(eval(*a));
                } else if constexpr (std::is_same_v<T, LinkStmt>) {
                    links_.push_back({s.loc, {n.controller, n.action}, HttpMethod::Get, named_args(n.args), {}});
                } else if constexpr (std::is_same_v<T, FormStmt>) {
                    links_.push_back(
                        {s.loc, {n.controller, n.action}, HttpMethod::Post, named_args(n.hidden), n.fields});
                } else if constexpr (std::is_same_v<T, GlobalAssignStmt>) {
                    globals_[n.name] = eval(*n.value);
                } else if constexpr (std::is_same_v<T, ReturnStmt>) {
                    RtValue v = n.value ? eval(*n.value) : RtValue{};
                    if (frames_.size() > 1)
                        returned_ = std::move(v);
                    else
                        returned_ = RtValue{};
                } else if constexpr (std::is_same_v<T, SaveStmt>) {
                    RtValue* t = lookup(n.target);
                    if (t && t->kind == RtValue::Kind::Record)
                        save(*t->rec, s.loc);
                } else {
                    eval(*n.expr);
                }
            },
            s.node);
    }

};

// Synthetic value for a user-filled form field.
Value form_value(const AppIR& ir, const std::string& field, SplitMix64& rng, int rowsPerModel)
{
    std::uint64_t n = static_cast<std::uint64_t>(std::max(rowsPerModel, 1));
    bool key = field == "id" || (field.size() > 3 && field.compare(field.size() - 3, 3, "_id") == 0);
    if (key)
        return static_cast<std::int64_t>(1 + rng.below(n));
    for (const auto& m : ir.models) {
        const FieldDecl* f = m.field(field);
        if (!f)
            continue;
        switch (f->kind) {
        case FieldKind::Int: return static_cast<std::int64_t>(rng.below(100));
        case FieldKind::Float: return rng.unit() * 100.0;
        case FieldKind::Bool: return rng.below(2) == 1;
        case FieldKind::Datetime: return kNow - static_cast<std::int64_t>(rng.below(366 * 86400));
        case FieldKind::String: return random_text(rng, std::min(f->maxLen, 16));
        case FieldKind::Text: return random_text(rng, 32);
        }
    }
    return random_text(rng, 8);
}

} // namespace

ActionRun run_action(const AppIR& ir, TableStore& store, const ActionId& action,
                     const std::map<std::string, Value>& params, std::uint64_t seed)
{
    ActionRun out;
    SplitMix64 rng(seed);
    Interpreter in(ir, store, out.entries, rng);
    SessionStep step;
    step.action = action;
    step.params = params;
    out.links = in.run(step);
    return out;
}

SessionLog run_session(const AppIR& ir, const ActionGraph& graph, TableStore store, const SessionConfig& cfg)
{
    std::vector<ActionId> actions = ir.action_ids();
    if (actions.empty())
        throw Error(ErrorCode::InvalidArgument, "application has no actions");
    if (cfg.length < 1)
        throw Error(ErrorCode::InvalidArgument, "session length must be at least 1");
    if (cfg.startAction && !ir.action(*cfg.startAction))
        throw Error(ErrorCode::UnknownAction, "unknown start action " + to_string(*cfg.startAction));

    SessionLog log;
    log.seed = cfg.seed;
    SplitMix64 root(cfg.seed);
    SplitMix64 walk = root.split();
    SplitMix64 data = root.split();
    Interpreter interp(ir, store, log.entries, data);

    SessionStep step;
    step.action = cfg.startAction ? *cfg.startAction : actions[walk.below(actions.size())];
    step.params = cfg.startParams;
    for (int i = 0; i < cfg.length; ++i) {
        step.index = i;
        log.steps.push_back(step);
        std::vector<PageLink> links = interp.run(log.steps.back());
        if (i + 1 == cfg.length)
            break;

        // Edges whose link or form was actually produced on this page.
        std::vector<std::pair<const NextActionEdge*, std::vector<const PageLink*>>> live;
        for (const NextActionEdge* e : graph.outgoing(step.action)) {
            std::vector<const PageLink*> inst;
            for (const auto& l : links)
                if (l.loc == e->loc && l.target == e->to && l.method == e->method)
                    inst.push_back(&l);
            if (!inst.empty())
                live.push_back({e, std::move(inst)});
        }
        SessionStep next;
        if (live.empty()) {
            next.action = actions[walk.below(actions.size())];
            next.restart = true;
        } else {
            const auto& [edge, inst] = live[walk.below(live.size())];
            const PageLink& l = *inst[walk.below(inst.size())];
            next.action = edge->to;
            next.via = edge->method;
            next.params = l.args;
            for (const auto& f : l.userFields) {
                next.params[f] = form_value(ir, f, data, cfg.rowsPerModel);
                next.inputs.insert(f);
            }
        }
        step = std::move(next);
    }
    return log;
}

std::string log_to_ndjson(const SessionLog& log)
{
    std::ostringstream out;
    for (const auto& e : log.entries) {
        nlohmann::ordered_json j;
        j["seq"] = e.seq;
        j["step"] = e.step;
        j["action"] = to_string(e.action);
        j["via"] = e.via ? nlohmann::ordered_json(http_method_name(*e.via)) : nlohmann::ordered_json(nullptr);
        j["restart"] = e.restart;
        j["loc"] = {{"line", e.loc.line}, {"column", e.loc.column}};
        j["kind"] = e.kind == LogKind::Read ? "read" : "write";
        j["lazy"] = e.lazy;
        j["usesInput"] = e.usesInput;
        j["sql"] = e.sql;
        if (e.scalar)
            j["value"] = value_to_json(e.value);
        auto rows = nlohmann::ordered_json::array();
        for (const auto& r : e.rows)
            rows.push_back({{"table", r.table}, {"id", r.id}, {"version", r.version}, {"columns", r.columns}});
        j["rows"] = std::move(rows);
        out << j.dump() << "\n";
    }
    return out.str();
}

namespace {

using RowKey = std::pair<std::string, std::int64_t>;

// What two syntactically equal reads are compared on.
struct ResultSignature {
    std::set<std::tuple<std::string, std::int64_t, std::uint64_t>> rows;
    bool scalar = false;
    Value value;
    bool operator==(const ResultSignature& o) const
    {
        return rows == o.rows && scalar == o.scalar && !value_less(value, o.value) && !value_less(o.value, value);
    }
};

ResultSignature signature(const QueryLogEntry& e)
{
    ResultSignature s;
    for (const auto& r : e.rows)
        s.rows.insert({r.table, r.id, r.version});
    s.scalar = e.scalar;
    s.value = e.value;
    return s;
}

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

} // namespace

std::vector<CacheFlags> classify_cache(const SessionLog& log)
{
    std::vector<CacheFlags> out(log.entries.size());
    std::map<RowKey, std::size_t> lastWrite; // seq of the latest write to a row
    struct Seen {
        std::size_t seq;
        int step;
        std::set<std::string> columns;
    };
    std::map<RowKey, std::vector<Seen>> seen;
    std::map<std::string, std::vector<std::size_t>> bySql; // read entry indices in order

    for (std::size_t i = 0; i < log.entries.size(); ++i) {
        const QueryLogEntry& e = log.entries[i];
        if (e.kind == LogKind::Write) {
            for (const auto& r : e.rows)
                lastWrite[{r.table, r.id}] = e.seq;
            continue;
        }
        CacheFlags& f = out[i];
        f.read = true;
        if (!e.rows.empty() && !e.scalar) {
            f.hit = std::all_of(e.rows.begin(), e.rows.end(), [&](const LoggedRow& r) {
                RowKey key{r.table, r.id};
                auto w = lastWrite.find(key);
                auto s = seen.find(key);
                if (s == seen.end())
                    return false;
                return std::any_of(s->second.begin(), s->second.end(), [&](const Seen& p) {
                    if (p.step >= e.step || (w != lastWrite.end() && p.seq < w->second))
                        return false;
                    return std::all_of(r.columns.begin(), r.columns.end(),
                                       [&](const std::string& c) { return p.columns.count(c) > 0; });
                });
            });
        }
        auto& peers = bySql[e.sql];
        for (auto it = peers.rbegin(); it != peers.rend(); ++it) {
            const QueryLogEntry& p = log.entries[*it];
            if (p.step >= e.step)
                continue;
            f.syntacticEquiv = true;
            f.equivDifferingResults = !(signature(p) == signature(e));
            break;
        }
        peers.push_back(i);
        for (const auto& r : e.rows)
            seen[{r.table, r.id}].push_back({e.seq, e.step, {r.columns.begin(), r.columns.end()}});
    }
    return out;
}

std::vector<PrefetchFlags> classify_prefetch(const SessionLog& log)
{
    std::vector<PrefetchFlags> out(log.entries.size());
    std::map<int, std::set<SourceLoc>> locsByStep;
    for (const auto& e : log.entries)
        locsByStep[e.step].insert(e.loc);
    for (std::size_t i = 0; i < log.entries.size(); ++i) {
        const QueryLogEntry& e = log.entries[i];
        if (e.step == 0 || e.restart || !e.via)
            continue;
        PrefetchFlags& f = out[i];
        f.counted = true;
        f.prefetchable = *e.via == HttpMethod::Get || !e.usesInput;
        auto prev = locsByStep.find(e.step - 1);
        f.sameTemplate = prev != locsByStep.end() && prev->second.count(e.loc) > 0;
    }
    return out;
}

namespace {

CacheStats cache_from(const std::vector<CacheFlags>& flags, const std::vector<bool>* mask = nullptr)
{
    CacheStats s;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (!flags[i].read || (mask && !(*mask)[i]))
            continue;
        ++s.reads;
        s.hits += flags[i].hit;
        s.syntacticEquiv += flags[i].syntacticEquiv;
        s.equivDifferingResults += flags[i].equivDifferingResults;
    }
    s.hitFraction = ratio(s.hits, s.reads);
    s.syntacticEquivFraction = ratio(s.syntacticEquiv, s.reads);
    s.equivDifferingResultsFraction = ratio(s.equivDifferingResults, s.reads);
    return s;
}

PrefetchStats prefetch_from(const std::vector<PrefetchFlags>& flags, const std::vector<bool>* mask = nullptr)
{
    PrefetchStats s;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (!flags[i].counted || (mask && !(*mask)[i]))
            continue;
        ++s.queries;
        s.prefetchable += flags[i].prefetchable;
        s.sameTemplate += flags[i].sameTemplate;
    }
    s.prefetchableFraction = ratio(s.prefetchable, s.queries);
    s.sameTemplateFraction = ratio(s.sameTemplate, s.queries);
    return s;
}

} // namespace

CacheStats cache_stats(const SessionLog& log) { return cache_from(classify_cache(log)); }

PrefetchStats prefetch_stats(const SessionLog& log) { return prefetch_from(classify_prefetch(log)); }

SimulationResult simulate(const AppIR& ir, const AppAnalysis& analysis, const SimulationConfig& cfg)
{
    if (cfg.sessions < 0 || cfg.rowsPerModel < 0)
        throw Error(ErrorCode::InvalidArgument, "sessions and rows per model must be non-negative");
    SimulationResult out;
    TableStore store = generate_data(ir, cfg.seed, cfg.rowsPerModel, &analysis.columns);
    SplitMix64 seeds(cfg.seed ^ 0x5E5510A5EEDull);
    for (int i = 0; i < cfg.sessions; ++i) {
        SessionConfig sc;
        sc.seed = seeds.next();
        sc.length = cfg.length;
        sc.startAction = cfg.startAction;
        sc.rowsPerModel = cfg.rowsPerModel;
        SessionLog log = run_session(ir, analysis.graph, store, sc);
        auto cf = classify_cache(log);
        auto pf = classify_prefetch(log);
        out.cache.push_back(cache_from(cf));
        out.prefetch.push_back(prefetch_from(pf));
        for (const auto& s : log.steps)
            ++out.perAction[s.action].visits;
        for (std::size_t k = 0; k < log.entries.size(); ++k) {
            ActionSimStats& a = out.perAction[log.entries[k].action];
            if (cf[k].read) {
                ++a.cache.reads;
                a.cache.hits += cf[k].hit;
                a.cache.syntacticEquiv += cf[k].syntacticEquiv;
                a.cache.equivDifferingResults += cf[k].equivDifferingResults;
            }
            if (pf[k].counted) {
                ++a.prefetch.queries;
                a.prefetch.prefetchable += pf[k].prefetchable;
                a.prefetch.sameTemplate += pf[k].sameTemplate;
            }
        }
        out.sessions.push_back(std::move(log));
    }
    for (auto& [_, a] : out.perAction) {
        a.cache.hitFraction = ratio(a.cache.hits, a.cache.reads);
        a.cache.syntacticEquivFraction = ratio(a.cache.syntacticEquiv, a.cache.reads);
        a.cache.equivDifferingResultsFraction = ratio(a.cache.equivDifferingResults, a.cache.reads);
        a.prefetch.prefetchableFraction = ratio(a.prefetch.prefetchable, a.prefetch.queries);
        a.prefetch.sameTemplateFraction = ratio(a.prefetch.sameTemplate, a.prefetch.queries);
    }

    std::size_t cacheN = 0, prefetchN = 0;
    for (std::size_t i = 0; i < out.cache.size(); ++i) {
        const CacheStats& c = out.cache[i];
        out.meanCache.reads += c.reads;
        out.meanCache.hits += c.hits;
        out.meanCache.syntacticEquiv += c.syntacticEquiv;
        out.meanCache.equivDifferingResults += c.equivDifferingResults;
        if (c.reads > 0) {
            ++cacheN;
            out.meanCache.hitFraction += c.hitFraction;
            out.meanCache.syntacticEquivFraction += c.syntacticEquivFraction;
            out.meanCache.equivDifferingResultsFraction += c.equivDifferingResultsFraction;
        }
        const PrefetchStats& p = out.prefetch[i];
        out.meanPrefetch.queries += p.queries;
        out.meanPrefetch.prefetchable += p.prefetchable;
        out.meanPrefetch.sameTemplate += p.sameTemplate;
        if (p.queries > 0) {
            ++prefetchN;
            out.meanPrefetch.prefetchableFraction += p.prefetchableFraction;
            out.meanPrefetch.sameTemplateFraction += p.sameTemplateFraction;
        }
    }
    if (cacheN) {
        out.meanCache.hitFraction /= static_cast<double>(cacheN);
        out.meanCache.syntacticEquivFraction /= static_cast<double>(cacheN);
        out.meanCache.equivDifferingResultsFraction /= static_cast<double>(cacheN);
    }
    if (prefetchN) {
        out.meanPrefetch.prefetchableFraction /= static_cast<double>(prefetchN);
        out.meanPrefetch.sameTemplateFraction /= static_cast<double>(prefetchN);
    }
    return out;
}

} // namespace ormlens
