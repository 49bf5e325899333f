#include "ormlens/afg.hpp"

#include "ormlens/dataflow.hpp"
#include "ormlens/error.hpp"
#include "typing.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace ormlens {

const char* node_kind_name(NodeKind k)
{
    switch (k) {
    case NodeKind::Entry: return "Entry";
    case NodeKind::Exit: return "Exit";
    case NodeKind::Query: return "Query";
    case NodeKind::Render: return "Render";
    case NodeKind::Branch: return "Branch";
    case NodeKind::LoopHead: return "LoopHead";
    case NodeKind::LoopEnd: return "LoopEnd";
    case NodeKind::Assign: return "Assign";
    case NodeKind::GlobalAssign: return "GlobalAssign";
    case NodeKind::Link: return "Link";
    case NodeKind::Form: return "Form";
    case NodeKind::ParamRead: return "ParamRead";
    case NodeKind::GlobalRead: return "GlobalRead";
    case NodeKind::NoOp: return "NoOp";
    }
    return "?";
}

const char* edge_kind_name(EdgeKind k)
{
    switch (k) {
    case EdgeKind::Control: return "control";
    case EdgeKind::Data: return "data";
    case EdgeKind::NextAction: return "next-action";
    }
    return "?";
}

const char* sink_category_name(SinkCategory c)
{
    switch (c) {
    case SinkCategory::QueryParam: return "QueryParam";
    case SinkCategory::RenderedInView: return "RenderedInView";
    case SinkCategory::BranchCondition: return "BranchCondition";
    case SinkCategory::GlobalVariable: return "GlobalVariable";
    }
    return "?";
}

const char* source_category_name(SourceCategory c)
{
    switch (c) {
    case SourceCategory::UserInput: return "UserInput";
    case SourceCategory::ReadQuery: return "ReadQuery";
    case SourceCategory::ConstantValue: return "ConstantValue";
    case SourceCategory::UtilityCall: return "UtilityCall";
    case SourceCategory::GlobalVariable: return "GlobalVariable";
    }
    return "?";
}

const char* value_source_kind_name(ValueSourceKind k)
{
    switch (k) {
    case ValueSourceKind::Const: return "Const";
    case ValueSourceKind::Param: return "Param";
    case ValueSourceKind::Var: return "Var";
    case ValueSourceKind::QueryResult: return "QueryResult";
    case ValueSourceKind::Global: return "Global";
    case ValueSourceKind::Utility: return "Utility";
    }
    return "?";
}

const char* query_kind_name(QueryKind k)
{
    switch (k) {
    case QueryKind::Select: return "SELECT";
    case QueryKind::Insert: return "INSERT";
    case QueryKind::Save: return "SAVE";
    }
    return "?";
}

const char* aggregate_name(Aggregate a)
{
    switch (a) {
    case Aggregate::None: return "NONE";
    case Aggregate::Count: return "COUNT";
    case Aggregate::Any: return "ANY";
    case Aggregate::FindByPk: return "FIND_BY_PK";
    }
    return "?";
}

std::string to_string(const ColumnRef& c)
{
    return c.binding.empty() ? c.model + "." + c.column : c.binding + ":" + c.model + "." + c.column;
}

const ModelDecl* binding_model(const AppIR& ir, const ModelDecl& root, const std::string& binding)
{
    if (binding.empty())
        return &root;
    const Association* a = root.association(binding);
    return a ? ir.model(a->target) : nullptr;
}

void compute_projection(const AppIR& ir, QueryDescriptor& q)
{
    q.projection.clear();
    if (q.aggregate == Aggregate::Count || q.aggregate == Aggregate::Any || !q.is_read())
        return;
    const ModelDecl* root = ir.model(q.rootModel);
    if (!root)
        return;
    if (q.select.empty()) {
        for (const auto& f : root->fields)
            q.projection.push_back({"", root->name, f.name});
    } else {
        for (const auto& c : q.select)
            q.projection.push_back({"", root->name, c});
    }
    for (const auto& e : q.eagerLoads) {
        const ModelDecl* m = binding_model(ir, *root, e);
        if (!m)
            continue;
        for (const auto& f : m->fields)
            q.projection.push_back({e, m->name, f.name});
    }
}

QueryDescriptor descriptor_from_ops(const AppIR& ir, const std::string& model, const std::vector<QueryOp>& ops)
{
    const ModelDecl* root = ir.model(model);
    if (!root)
        throw UnresolvedReference(model, {});
    auto check_column = [&](const ColumnPath& c) {
        const ModelDecl* m = root;
        if (!c.assoc.empty()) {
            if (!root->association(c.assoc))
                throw UnresolvedReference(c.assoc, {});
            m = binding_model(ir, *root, c.assoc);
            if (!m)
                throw UnresolvedReference(c.assoc, {});
        }
        if (!m->field(c.column))
            throw UnresolvedReference(c.column, {});
    };
    QueryDescriptor q;
    q.rootModel = model;
    for (const auto& op : ops) {
        switch (op.kind) {
        case QueryOpKind::Where:
            for (const auto& t : op.terms) {
                check_column(t.column);
                q.predicates.push_back({t.column, t.op, t.value, {}});
            }
            break;
        case QueryOpKind::Includes:
            for (const auto& n : op.names) {
                if (!root->association(n))
                    throw UnresolvedReference(n, {});
                if (std::find(q.eagerLoads.begin(), q.eagerLoads.end(), n) == q.eagerLoads.end())
                    q.eagerLoads.push_back(n);
            }
            break;
        case QueryOpKind::Order:
            check_column(op.column);
            q.orderBy = op.column;
            break;
        case QueryOpKind::Group:
            check_column(op.column);
            q.groupBy = op.column;
            break;
        case QueryOpKind::Limit: q.limit = op.arg; break;
        case QueryOpKind::Offset: q.offset = op.arg; break;
        case QueryOpKind::Select:
            for (const auto& n : op.names) {
                check_column({"", n});
                if (std::find(q.select.begin(), q.select.end(), n) == q.select.end())
                    q.select.push_back(n);
            }
            break;
        case QueryOpKind::Count: q.aggregate = Aggregate::Count; break;
        case QueryOpKind::Any: q.aggregate = Aggregate::Any; break;
        case QueryOpKind::Find:
            q.aggregate = Aggregate::FindByPk;
            q.predicates.push_back({{"", "id"}, CmpOp::Eq, op.arg, {}});
            break;
        }
    }
    compute_projection(ir, q);
    return q;
}

std::vector<int> Afg::successors(int id, EdgeKind kind) const
{
    std::vector<int> out;
    for (const auto& e : edges)
        if (e.kind == kind && e.from == id)
            out.push_back(e.to);
    return out;
}

std::vector<int> Afg::predecessors(int id, EdgeKind kind) const
{
    std::vector<int> out;
    for (const auto& e : edges)
        if (e.kind == kind && e.to == id)
            out.push_back(e.from);
    return out;
}

std::vector<int> Afg::query_nodes() const
{
    std::vector<int> out;
    for (const auto& n : nodes)
        if (n.kind == NodeKind::Query && n.issued)
            out.push_back(n.id);
    return out;
}

std::vector<int> Afg::nodes_of_kind(NodeKind k) const
{
    std::vector<int> out;
    for (const auto& n : nodes)
        if (n.kind == k)
            out.push_back(n.id);
    return out;
}

bool Afg::in_loop(int node, int loopHead) const
{
    for (int l = this->node(node).loop; l != -1; l = this->node(l).loop)
        if (l == loopHead)
            return true;
    return false;
}

namespace {

struct Operand {
    std::vector<VarUse> uses;
    std::vector<LocalSource> locals;
    bool plainVar = false; // the value is exactly uses[0].var with uses[0].path applied
};

void append(Operand& into, Operand from)
{
    for (auto& u : from.uses)
        into.uses.push_back(std::move(u));
    for (auto& l : from.locals)
        into.locals.push_back(std::move(l));
    into.plainVar = false;
}

void set_slot(Operand& o, int slot)
{
    for (auto& u : o.uses)
        u.slot = slot;
    for (auto& l : o.locals)
        l.slot = slot;
}

class Builder {
public:
    Builder(const AppIR& ir, const ActionDecl& action) : ir_(ir), action_(action) {}

    Afg run()
    {
        afg_.action = {action_.controller, action_.name};
        afg_.method = action_.method;
        raw(NodeKind::Entry, action_.loc);
        raw(NodeKind::Exit, action_.loc);
        frontier_ = {afg_.entry};
        Frame frame;
        detail::collect_types(ir_, action_.body, frame.types);
        build_block(action_.body, frame);
        connect_frontier(afg_.exit);
        chain_globals();
        reaching_definitions();
        resolve_chains();
        data_edges();
        fill_sources();
        mark_issued();
        return std::move(afg_);
    }

private:
    struct Frame {
        std::map<std::string, std::string> rename; // source name -> AFG variable
        detail::TypeEnv types;                     // source name -> model
        std::string prefix;
        std::string retVar;
    };

    int raw(NodeKind k, SourceLoc loc)
    {
        AfgNode n;
        n.id = static_cast<int>(afg_.nodes.size());
        n.kind = k;
        n.loc = loc;
        n.loop = loops_.empty() ? -1 : loops_.back();
        afg_.nodes.push_back(std::move(n));
        return afg_.nodes.back().id;
    }

    void control(int from, int to)
    {
        AfgEdge e{from, to, EdgeKind::Control, {}};
        if (std::find(afg_.edges.begin(), afg_.edges.end(), e) == afg_.edges.end())
            afg_.edges.push_back(e);
    }

    void connect_frontier(int to)
    {
        for (int f : frontier_)
            control(f, to);
        frontier_ = {to};
    }

    int add(NodeKind k, SourceLoc loc)
    {
        int id = raw(k, loc);
        connect_frontier(id);
        return id;
    }

    AfgNode& node(int id) { return afg_.nodes[static_cast<std::size_t>(id)]; }

    std::string fresh(const char* stem) { return std::string("%") + stem + std::to_string(temp_++); }

    static void attach(AfgNode& n, Operand o)
    {
        if (o.plainVar && o.uses.size() == 1)
            o.uses[0].alias = true;
        for (auto& u : o.uses)
            n.uses.push_back(std::move(u));
        for (auto& l : o.locals)
            n.locals.push_back(std::move(l));
    }

    // --- variables ---------------------------------------------------------------
    std::string declare(Frame& f, const std::string& name)
    {
        auto it = f.rename.find(name);
        if (it != f.rename.end())
            return it->second;
        std::string v = f.prefix + name;
        f.rename[name] = v;
        return v;
    }

    Operand read_var(Frame& f, const std::string& name)
    {
        Operand o;
        o.plainVar = true;
        if (auto it = f.rename.find(name); it != f.rename.end()) {
            o.uses.push_back({it->second, {}, false, false, slot::General, {}});
        } else if (ir_.has_global(name)) {
            global_read(name);
            o.uses.push_back({"$" + name, {}, false, false, slot::General, {}});
        } else {
            o.uses.push_back({f.prefix + name, {}, false, false, slot::General, {}});
        }
        return o;
    }

    void global_read(const std::string& name)
    {
        if (globalReads_.count(name))
            return;
        int id = raw(NodeKind::GlobalRead, action_.loc);
        node(id).loop = -1;
        node(id).name = name;
        node(id).defines = "$" + name;
        globalReads_[name] = id;
        globalOrder_.push_back(id);
    }

    // Global initial values flow in right after Entry.
    void chain_globals()
    {
        if (globalOrder_.empty())
            return;
        int last = globalOrder_.back();
        for (auto& e : afg_.edges)
            if (e.kind == EdgeKind::Control && e.from == afg_.entry)
                e.from = last;
        std::vector<AfgEdge> chain;
        int prev = afg_.entry;
        for (int g : globalOrder_) {
            chain.push_back({prev, g, EdgeKind::Control, {}});
            prev = g;
        }
        afg_.edges.insert(afg_.edges.begin(), chain.begin(), chain.end());
    }

    // --- expressions ------------------------------------------------------------
    Operand flatten(const Expr& e, Frame& f)
    {
        return std::visit(
            [&](const auto& n) -> Operand {
                using T = std::decay_t<decltype(n)>;
                Operand o;
                if constexpr (std::is_same_v<T, LiteralExpr>) {
                    o.locals.push_back({SourceCategory::ConstantValue, n.value, {}, slot::General});
                } else if constexpr (std::is_same_v<T, ParamExpr>) {
                    int id = add(NodeKind::ParamRead, e.loc);
                    node(id).name = n.name;
                    node(id).defines = fresh("p");
                    o.uses.push_back({node(id).defines, {}, false, false, slot::General, {}});
                    o.plainVar = true;
                } else if constexpr (std::is_same_v<T, VarExpr>) {
                    o = read_var(f, n.name);
                } else if constexpr (std::is_same_v<T, FieldExpr>) {
                    o = flatten(*n.base, f);
                    if (o.plainVar)
                        o.uses[0].path.push_back(n.field);
                } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                    o = flatten(*n.lhs, f);
                    append(o, flatten(*n.rhs, f));
                } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                    o = flatten(*n.operand, f);
                    o.plainVar = false;
                } else if constexpr (std::is_same_v<T, CallExpr>) {
                    if (ir_.helper(n.callee))
                        return inline_call(n, e.loc, f);
                    for (const auto& a : n.args)
                        append(o, flatten(*a, f));
                    o.locals.push_back({SourceCategory::UtilityCall, {}, n.callee, slot::General});
                    o.plainVar = false;
                } else if constexpr (std::is_same_v<T, QueryExpr>) {
                    int id = emit_query(n, e.loc, f, {});
                    o.uses.push_back({node(id).defines, {}, false, false, slot::General, {}});
                    o.plainVar = true;
                } else if constexpr (std::is_same_v<T, CreateExpr>) {
                    int id = emit_create(n, e.loc, f, {});
                    o.uses.push_back({node(id).defines, {}, false, false, slot::General, {}});
                    o.plainVar = true;
                }
                // NewExpr: a fresh unsaved record has no data sources
                return o;
            },
            e.node);
    }

    Operand inline_call(const CallExpr& call, SourceLoc loc, Frame& caller)
    {
        Operand result;
        if (std::find(stack_.begin(), stack_.end(), call.callee) != stack_.end()) {
            add(NodeKind::NoOp, loc);
            return result;
        }
        const HelperDecl& h = *ir_.helper(call.callee);
        Frame f;
        f.prefix = h.name + "#" + std::to_string(++inlines_) + ".";
        f.retVar = fresh("r");
        for (std::size_t i = 0; i < h.params.size(); ++i) {
            const auto& p = h.params[i];
            std::string var = declare(f, p.name);
            if (ir_.model(p.type))
                f.types[p.name] = p.type;
            if (i >= call.args.size())
                continue;
            std::string t = detail::expr_model(ir_, *call.args[i], caller.types);
            if (!t.empty() && !f.types.count(p.name))
                f.types[p.name] = t;
            Operand a = flatten(*call.args[i], caller);
            int id = add(NodeKind::Assign, call.args[i]->loc);
            node(id).defines = var;
            attach(node(id), std::move(a));
        }
        detail::collect_types(ir_, h.body, f.types);
        stack_.push_back(h.name);
        bool returned = build_block(h.body, f);
        stack_.pop_back();
        if (returned) {
            result.uses.push_back({f.retVar, {}, false, false, slot::General, {}});
            result.plainVar = true;
        } else {
            result.locals.push_back({SourceCategory::ConstantValue, {}, {}, slot::General});
        }
        return result;
    }

    std::string model_of(const Expr& e, const Frame& f) const { return detail::expr_model(ir_, e, f.types); }

    int emit_query(const QueryExpr& q, SourceLoc loc, Frame& f, const std::string& target)
    {
        std::string model = q.model;
        std::vector<VarUse> baseUses;
        std::vector<LocalSource> baseLocals;
        bool extension = false;
        if (q.base) {
            model = model_of(*q.base, f);
            if (model.empty())
                throw Error(ErrorCode::Analysis, "cannot determine the model of the relation extended here", loc);
            Operand b = flatten(*q.base, f);
            if (b.plainVar && b.uses.size() == 1 && b.uses[0].path.empty()) {
                extension = true;
                b.uses[0].slot = slot::ChainBase;
            }
            baseUses = std::move(b.uses);
            baseLocals = std::move(b.locals);
        }
        QueryDescriptor d = descriptor_from_ops(ir_, model, q.ops);
        std::vector<Operand> parts;
        int pred = 0;
        for (const auto& op : q.ops) {
            for (const auto& t : op.terms) {
                Operand o = flatten(*t.value, f);
                set_slot(o, pred++);
                parts.push_back(std::move(o));
            }
            if (op.kind == QueryOpKind::Find) {
                Operand o = flatten(*op.arg, f);
                set_slot(o, pred++);
                parts.push_back(std::move(o));
            } else if (op.kind == QueryOpKind::Limit || op.kind == QueryOpKind::Offset) {
                Operand o = flatten(*op.arg, f);
                set_slot(o, op.kind == QueryOpKind::Limit ? slot::Limit : slot::Offset);
                parts.push_back(std::move(o));
            }
        }
        int id = add(NodeKind::Query, loc);
        AfgNode& n = node(id);
        n.defines = target.empty() ? fresh("q") : target;
        n.model = model;
        for (auto& u : baseUses)
            n.uses.push_back(std::move(u));
        for (auto& l : baseLocals)
            n.locals.push_back(std::move(l));
        for (auto& p : parts) {
            for (auto& u : p.uses)
                n.uses.push_back(std::move(u));
            for (auto& l : p.locals)
                n.locals.push_back(std::move(l));
        }
        n.query = std::move(d);
        ops_[id] = q.ops;
        if (extension)
            extensions_.push_back(id);
        return id;
    }

    int emit_create(const CreateExpr& c, SourceLoc loc, Frame& f, const std::string& target)
    {
        std::string var = target.empty() ? fresh("c") : target;
        std::vector<VarUse> uses;
        QueryDescriptor d;
        d.kind = QueryKind::Insert;
        d.rootModel = c.model;
        int i = 0;
        for (const auto& fa : c.fields) {
            Operand o = flatten(*fa.value, f);
            int id = add(NodeKind::Assign, fa.value->loc);
            node(id).defines = var + "." + fa.name;
            node(id).target = var;
            node(id).field = fa.name;
            node(id).model = c.model;
            attach(node(id), std::move(o));
            uses.push_back({var + "." + fa.name, {}, false, false, slot::WriteBase + i, {}});
            d.writes.push_back({fa.name, fa.value, {}});
            ++i;
        }
        int id = add(NodeKind::Query, loc);
        node(id).defines = var;
        node(id).model = c.model;
        node(id).uses = std::move(uses);
        node(id).query = std::move(d);
        return id;
    }

    // --- statements ---------------------------------------------------------------
    // Returns true if a `return` was seen (helpers only).
    bool build_block(const Block& body, Frame& f)
    {
        bool returned = false;
        for (const auto& s : body)
            returned = build_stmt(*s, f) || returned;
        return returned;
    }

    void bind(const std::string& name, const ExprRef& value, SourceLoc loc, Frame& f)
    {
        std::string model = model_of(*value, f);
        std::string var = declare(f, name);
        if (const auto* q = std::get_if<QueryExpr>(&value->node)) {
            emit_query(*q, value->loc, f, var);
        } else if (const auto* c = std::get_if<CreateExpr>(&value->node)) {
            emit_create(*c, value->loc, f, var);
        } else {
            Operand o = flatten(*value, f);
            int id = add(NodeKind::Assign, loc);
            node(id).defines = var;
            attach(node(id), std::move(o));
        }
        if (!model.empty())
            f.types[name] = model;
    }

    bool build_stmt(const Stmt& s, Frame& f)
    {
        bool returned = false;
        std::visit(
            [&](const auto& n) {
                using T = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<T, LetStmt> || std::is_same_v<T, AssignStmt>) {
                    bind(n.name, n.value, s.loc, f);
                } else if constexpr (std::is_same_v<T, FieldAssignStmt>) {
                    Operand o = flatten(*n.value, f);
                    int id = add(NodeKind::Assign, s.loc);
                    std::string target = read_var(f, n.target).uses[0].var;
                    node(id).defines = target + "." + n.field;
                    node(id).target = target;
                    node(id).field = n.field;
                    if (auto it = f.types.find(n.target); it != f.types.end()) {
                        const ModelDecl* m = ir_.model(it->second);
                        if (m && m->field(n.field))
                            node(id).model = m->name;
                    }
                    attach(node(id), std::move(o));
                } else if constexpr (std::is_same_v<T, SaveStmt>) {
                    std::string target = read_var(f, n.target).uses[0].var;
                    QueryDescriptor d;
                    d.kind = QueryKind::Save;
                    if (auto it = f.types.find(n.target); it != f.types.end())
                        d.rootModel = it->second;
                    int id = add(NodeKind::Query, s.loc);
                    node(id).model = d.rootModel;
                    node(id).uses.push_back({target, {}, false, false, slot::General, {}});
                    if (const ModelDecl* m = ir_.model(d.rootModel)) {
                        int i = 0;
                        for (const auto& fd : m->fields)
                            node(id).uses.push_back(
                                {target + "." + fd.name, {}, false, false, slot::WriteBase + i++, {}});
                    }
                    node(id).query = std::move(d);
                } else if constexpr (std::is_same_v<T, ForStmt>) {
                    std::string model = model_of(*n.collection, f);
                    Operand o = flatten(*n.collection, f);
                    int head = add(NodeKind::LoopHead, s.loc);
                    node(head).defines = declare(f, n.var);
                    attach(node(head), std::move(o));
                    if (!model.empty())
                        f.types[n.var] = model;
                    loops_.push_back(head);
                    returned = build_block(n.body, f);
                    int end = add(NodeKind::LoopEnd, s.loc);
                    loops_.pop_back();
                    node(head).partner = end;
                    node(end).partner = head;
                    control(end, head);
                    frontier_ = {head};
                } else if constexpr (std::is_same_v<T, IfStmt>) {
                    Operand o = flatten(*n.cond, f);
                    int br = add(NodeKind::Branch, s.loc);
                    attach(node(br), std::move(o));
                    returned = build_block(n.then_body, f);
                    std::vector<int> thenEnd = frontier_;
                    frontier_ = {br};
                    returned = build_block(n.else_body, f) || returned;
                    for (int x : thenEnd)
                        if (std::find(frontier_.begin(), frontier_.end(), x) == frontier_.end())
                            frontier_.push_back(x);
                } else if constexpr (std::is_same_v<T, RenderStmt>) {
                    std::vector<Operand> args;
                    for (const auto& a : n.args)
                        args.push_back(flatten(*a, f));
                    int id = add(NodeKind::Render, s.loc);
                    for (auto& a : args) {
                        if (a.plainVar)
                            a.uses[0].whole = true;
                        a.plainVar = false;
                        attach(node(id), std::move(a));
                    }
                } else if constexpr (std::is_same_v<T, LinkStmt> || std::is_same_v<T, FormStmt>) {
                    std::vector<Operand> args;
                    const auto& named = [&]() -> const std::vector<NamedArg>& {
                        if constexpr (std::is_same_v<T, LinkStmt>)
                            return n.args;
                        else
                            return n.hidden;
                    }();
                    for (const auto& a : named)
                        args.push_back(flatten(*a.value, f));
                    int id = add(std::is_same_v<T, LinkStmt> ? NodeKind::Link : NodeKind::Form, s.loc);
                    node(id).linkTarget = {n.controller, n.action};
                    if constexpr (std::is_same_v<T, FormStmt>)
                        node(id).formFields = n.fields;
                    for (auto& a : args) {
                        if (a.plainVar)
                            a.uses[0].whole = true;
                        a.plainVar = false;
                        attach(node(id), std::move(a));
                    }
                } else if constexpr (std::is_same_v<T, GlobalAssignStmt>) {
                    Operand o = flatten(*n.value, f);
                    int id = add(NodeKind::GlobalAssign, s.loc);
                    node(id).name = n.name;
                    node(id).defines = "$" + n.name;
                    attach(node(id), std::move(o));
                } else if constexpr (std::is_same_v<T, ReturnStmt>) {
                    Operand o = flatten(*n.value, f);
                    if (!f.retVar.empty()) {
                        int id = add(NodeKind::Assign, s.loc);
                        node(id).defines = f.retVar;
                        attach(node(id), std::move(o));
                        returned = true;
                    }
                } else if constexpr (std::is_same_v<T, ExprStmt>) {
                    flatten(*n.expr, f);
                }
            },
            s.node);
        return returned;
    }

    // --- dataflow ---------------------------------------------------------------
    void reaching_definitions()
    {
        const std::size_t n = afg_.nodes.size();
        std::vector<std::set<int>> in = ormlens::reaching_definitions(afg_);
        for (std::size_t i = 0; i < n; ++i) {
            for (auto& u : afg_.nodes[i].uses) {
                std::string field = u.path.empty() ? std::string() : u.var + "." + u.path.front();
                for (int d : in[i]) {
                    const std::string& dv = afg_.nodes[static_cast<std::size_t>(d)].defines;
                    if (dv == u.var || (!field.empty() && dv == field))
                        u.defs.push_back(d);
                }
            }
        }
    }

    // Query definitions a relation variable use may refer to, looking through alias assigns.
    void query_defs(const std::vector<int>& defs, std::set<int>& out, std::set<int>& seen) const
    {
        for (int d : defs) {
            if (!seen.insert(d).second)
                continue;
            const AfgNode& n = afg_.node(d);
            if (n.kind == NodeKind::Query && n.query && n.query->is_read()) {
                out.insert(d);
            } else if (n.kind == NodeKind::Assign && n.uses.size() == 1 && n.uses[0].alias &&
                       n.uses[0].path.empty()) {
                query_defs(n.uses[0].defs, out, seen);
            }
        }
    }

    void resolve_chains()
    {
        std::sort(extensions_.begin(), extensions_.end());
        for (int id : extensions_) {
            AfgNode& n = node(id);
            auto it = std::find_if(n.uses.begin(), n.uses.end(), [](const VarUse& u) { return u.slot == slot::ChainBase; });
            std::set<int> bases, seen;
            query_defs(it->defs, bases, seen);
            if (bases.empty())
                continue;
            int base = *bases.begin();
            const AfgNode& b = afg_.node(base);
            std::vector<QueryOp> ops = ops_[base];
            const std::vector<QueryOp>& own = ops_[id];
            if (!ops.empty() && is_terminal_op(ops.back().kind))
                throw Error(ErrorCode::Analysis, "query chain extends a terminal query", n.loc);
            int shift = static_cast<int>(b.query->predicates.size());
            ops.insert(ops.end(), own.begin(), own.end());
            QueryDescriptor d = descriptor_from_ops(ir_, b.query->rootModel, ops);
            d.chainPrefixOf = base;
            std::vector<VarUse> uses = b.uses;
            for (auto& u : n.uses) {
                if (u.slot >= 0 && u.slot < slot::Limit)
                    u.slot += shift;
                uses.push_back(u);
            }
            std::vector<LocalSource> locals = b.locals;
            for (auto& l : n.locals) {
                if (l.slot >= 0 && l.slot < slot::Limit)
                    l.slot += shift;
                locals.push_back(l);
            }
            n.uses = std::move(uses);
            n.locals = std::move(locals);
            n.query = std::move(d);
            n.model = n.query->rootModel;
            ops_[id] = std::move(ops);
        }
    }

    void data_edges()
    {
        std::set<std::tuple<int, int, std::string>> seen;
        for (const auto& n : afg_.nodes) {
            for (const auto& u : n.uses) {
                if (u.slot == slot::ChainBase)
                    continue;
                for (int d : u.defs) {
                    const std::string& var = afg_.node(d).defines;
                    if (seen.insert({d, n.id, var}).second)
                        afg_.edges.push_back({d, n.id, EdgeKind::Data, var});
                }
            }
        }
    }

    std::vector<ValueSource> sources_for(const AfgNode& n, int s) const
    {
        std::vector<ValueSource> out;
        for (const auto& u : n.uses) {
            if (u.slot != s)
                continue;
            for (int d : u.defs) {
                const AfgNode& dn = afg_.node(d);
                ValueSource v;
                std::string column = u.path.empty() ? std::string() : u.path.back();
                if (dn.kind == NodeKind::ParamRead) {
                    v.kind = ValueSourceKind::Param;
                    v.name = dn.name;
                } else if (dn.kind == NodeKind::GlobalRead || dn.kind == NodeKind::GlobalAssign) {
                    v.kind = ValueSourceKind::Global;
                    v.name = dn.name;
                } else if (dn.kind == NodeKind::Query) {
                    v.kind = ValueSourceKind::QueryResult;
                    v.node = d;
                    v.column = column;
                } else {
                    v.kind = ValueSourceKind::Var;
                    v.node = d;
                    v.column = column;
                }
                out.push_back(std::move(v));
            }
        }
        for (const auto& l : n.locals) {
            if (l.slot != s)
                continue;
            ValueSource v;
            if (l.category == SourceCategory::UtilityCall) {
                v.kind = ValueSourceKind::Utility;
                v.name = l.name;
            } else {
                v.kind = ValueSourceKind::Const;
                v.constant = l.constant;
            }
            out.push_back(std::move(v));
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    void fill_sources()
    {
        for (auto& n : afg_.nodes) {
            if (!n.query)
                continue;
            auto& q = *n.query;
            for (std::size_t i = 0; i < q.predicates.size(); ++i)
                q.predicates[i].sources = sources_for(n, static_cast<int>(i));
            q.limitSources = sources_for(n, slot::Limit);
            q.offsetSources = sources_for(n, slot::Offset);
            for (std::size_t i = 0; i < q.writes.size(); ++i)
                q.writes[i].sources = sources_for(n, slot::WriteBase + static_cast<int>(i));
        }
    }

    // A relation that is only ever extended (never read itself) is not sent to the database.
    void mark_issued()
    {
        std::set<int> bases;
        for (const auto& n : afg_.nodes)
            if (n.query && n.query->chainPrefixOf >= 0)
                bases.insert(n.query->chainPrefixOf);
        for (int b : bases) {
            bool read = false;
            std::vector<int> work{b};
            std::set<int> seen{b};
            while (!work.empty() && !read) {
                int cur = work.back();
                work.pop_back();
                for (const auto& e : afg_.edges) {
                    if (e.kind != EdgeKind::Data || e.from != cur)
                        continue;
                    const AfgNode& to = afg_.node(e.to);
                    bool aliasOnly = to.kind == NodeKind::Assign && to.model.empty() && to.uses.size() == 1 &&
                                     to.uses[0].alias && to.uses[0].path.empty();
                    if (!aliasOnly) {
                        read = true;
                        break;
                    }
                    if (seen.insert(e.to).second)
                        work.push_back(e.to);
                }
            }
            node(b).issued = read;
        }
    }

    const AppIR& ir_;
    const ActionDecl& action_;
    Afg afg_;
    std::vector<int> frontier_;
    std::vector<int> loops_;
    std::vector<std::string> stack_;
    std::map<std::string, int> globalReads_;
    std::vector<int> globalOrder_;
    std::map<int, std::vector<QueryOp>> ops_;
    std::vector<int> extensions_;
    int temp_ = 1;
    int inlines_ = 0;
};

} // namespace

Afg build_afg(const AppIR& ir, const ActionId& action)
{
    const ActionDecl* a = ir.action(action);
    if (!a)
        throw Error(ErrorCode::UnknownAction, "unknown action " + to_string(action));
    return Builder(ir, *a).run();
}

std::vector<Afg> build_all_afgs(const AppIR& ir)
{
    std::vector<Afg> out;
    for (const auto& id : ir.action_ids())
        out.push_back(build_afg(ir, id));
    return out;
}

const Afg* ActionGraph::afg(const ActionId& id) const
{
    for (const auto& a : afgs)
        if (a.action == id)
            return &a;
    return nullptr;
}

std::vector<const NextActionEdge*> ActionGraph::outgoing(const ActionId& id) const
{
    std::vector<const NextActionEdge*> out;
    for (const auto& e : edges)
        if (e.from == id)
            out.push_back(&e);
    return out;
}

ActionGraph build_action_graph(const AppIR& ir, std::vector<Afg> afgs)
{
    ActionGraph g;
    g.afgs = std::move(afgs);
    for (const auto& a : g.afgs) {
        for (const auto& n : a.nodes) {
            if (n.kind != NodeKind::Link && n.kind != NodeKind::Form)
                continue;
            if (!ir.action(n.linkTarget))
                throw Error(ErrorCode::UnroutedTarget, "link target " + to_string(n.linkTarget) + " is not an action",
                            n.loc);
            g.edges.push_back({a.action, n.linkTarget, n.id,
                               n.kind == NodeKind::Link ? HttpMethod::Get : HttpMethod::Post, n.loc});
        }
    }
    return g;
}

namespace {

const char* shape_of(NodeKind k)
{
    switch (k) {
    case NodeKind::Entry:
    case NodeKind::Exit: return "circle";
    case NodeKind::Query: return "cylinder";
    case NodeKind::Branch: return "diamond";
    case NodeKind::LoopHead:
    case NodeKind::LoopEnd: return "trapezium";
    case NodeKind::Render:
    case NodeKind::Link:
    case NodeKind::Form: return "note";
    default: return "box";
    }
}

std::string dot_escape(const std::string& s)
{
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\')
            out += '\\';
        out += c;
    }
    return out;
}

} // namespace

std::string to_dot(const ActionGraph& graph)
{
    std::ostringstream os;
    os << "digraph afg {\n  compound=true;\n";
    std::map<ActionId, std::size_t> index;
    for (std::size_t i = 0; i < graph.afgs.size(); ++i)
        index[graph.afgs[i].action] = i;
    for (std::size_t i = 0; i < graph.afgs.size(); ++i) {
        const Afg& a = graph.afgs[i];
        os << "  subgraph cluster_" << i << " {\n    label=\"" << dot_escape(to_string(a.action)) << " ["
           << http_method_name(a.method) << "]\";\n";
        for (const auto& n : a.nodes) {
            std::string label = node_kind_name(n.kind);
            if (!n.defines.empty())
                label += "\\n" + dot_escape(n.defines);
            if (n.loc.line > 0)
                label += "\\n@" + to_string(n.loc);
            os << "    a" << i << "_n" << n.id << " [shape=" << shape_of(n.kind) << ", label=\"" << label << "\"];\n";
        }
        for (const auto& e : a.edges) {
            os << "    a" << i << "_n" << e.from << " -> a" << i << "_n" << e.to;
            if (e.kind == EdgeKind::Data)
                os << " [style=dashed, label=\"" << dot_escape(e.var) << "\"]";
            os << ";\n";
        }
        os << "  }\n";
    }
    for (const auto& e : graph.edges) {
        auto from = index.find(e.from);
        auto to = index.find(e.to);
        if (from == index.end() || to == index.end())
            continue;
        const Afg& src = graph.afgs[from->second];
        const Afg& dst = graph.afgs[to->second];
        os << "  a" << from->second << "_n" << src.exit << " -> a" << to->second << "_n" << dst.entry
           << " [style=bold, color=blue, label=\"" << http_method_name(e.method) << " via n" << e.viaNode << "\"];\n";
    }
    os << "}\n";
    return os.str();
}

} // namespace ormlens
