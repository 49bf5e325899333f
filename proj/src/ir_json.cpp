#include "ormlens/ir_json.hpp"

#include "ormlens/error.hpp"

namespace ormlens {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what)
{
    throw Error(ErrorCode::InvalidArgument, "invalid IR document: " + what);
}

const json& at(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key))
        bad(std::string("missing key '") + key + "'");
    return j.at(key);
}

std::string str(const json& j, const char* key)
{
    const json& v = at(j, key);
    if (!v.is_string())
        bad(std::string("'") + key + "' must be a string");
    return v.get<std::string>();
}

int num(const json& j, const char* key)
{
    const json& v = at(j, key);
    if (!v.is_number_integer())
        bad(std::string("'") + key + "' must be an integer");
    return v.get<int>();
}

json loc_to_json(const SourceLoc& l) { return json::array({l.line, l.column, l.stmt}); }

SourceLoc loc_from_json(const json& j)
{
    if (!j.is_array() || j.size() != 3)
        bad("location must be [line, column, stmt]");
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

template <class E>
E enum_from(const json& j, const char* key, std::initializer_list<std::pair<const char*, E>> table)
{
    std::string s = str(j, key);
    for (const auto& [name, v] : table)
        if (s == name)
            return v;
    bad("unknown " + std::string(key) + " '" + s + "'");
}

const std::initializer_list<std::pair<const char*, BinOp>> kBinOps = {
    {"==", BinOp::Eq}, {"!=", BinOp::Ne},  {"<", BinOp::Lt},  {">", BinOp::Gt},   {"<=", BinOp::Le},
    {">=", BinOp::Ge}, {"in", BinOp::In},  {"+", BinOp::Add}, {"-", BinOp::Sub},  {"*", BinOp::Mul},
    {"/", BinOp::Div}, {"and", BinOp::And}, {"or", BinOp::Or}};
const std::initializer_list<std::pair<const char*, CmpOp>> kCmpOps = {
    {"==", CmpOp::Eq}, {"!=", CmpOp::Ne}, {"<", CmpOp::Lt}, {">", CmpOp::Gt}, {"in", CmpOp::In}};
const std::initializer_list<std::pair<const char*, QueryOpKind>> kOpKinds = {
    {"where", QueryOpKind::Where}, {"includes", QueryOpKind::Includes}, {"order", QueryOpKind::Order},
    {"limit", QueryOpKind::Limit}, {"offset", QueryOpKind::Offset},     {"group", QueryOpKind::Group},
    {"select", QueryOpKind::Select}, {"count", QueryOpKind::Count},     {"any", QueryOpKind::Any},
    {"find", QueryOpKind::Find}};
const std::initializer_list<std::pair<const char*, FieldKind>> kFieldKinds = {
    {"int", FieldKind::Int},           {"float", FieldKind::Float},   {"bool", FieldKind::Bool},
    {"datetime", FieldKind::Datetime}, {"string", FieldKind::String}, {"text", FieldKind::Text}};
const std::initializer_list<std::pair<const char*, AssocKind>> kAssocKinds = {
    {"belongs_to", AssocKind::BelongsTo}, {"has_one", AssocKind::HasOne}, {"has_many", AssocKind::HasMany}};
const std::initializer_list<std::pair<const char*, HttpMethod>> kMethods = {{"GET", HttpMethod::Get},
                                                                            {"POST", HttpMethod::Post}};

const char* binop_name(BinOp op)
{
    for (const auto& [n, v] : kBinOps)
        if (v == op)
            return n;
    return "?";
}

json expr_to_json(const ExprRef& e);
ExprRef expr_from_json(const json& j);

json opt_expr(const ExprRef& e) { return e ? expr_to_json(e) : json(nullptr); }
ExprRef opt_expr_from(const json& j) { return j.is_null() ? ExprRef{} : expr_from_json(j); }

json column_path_json(const ColumnPath& c) { return json{{"assoc", c.assoc}, {"column", c.column}}; }
ColumnPath column_path_from(const json& j) { return {str(j, "assoc"), str(j, "column")}; }

json named_args_json(const std::vector<NamedArg>& args)
{
    json a = json::array();
    for (const auto& n : args)
        a.push_back({{"name", n.name}, {"value", expr_to_json(n.value)}});
    return a;
}

std::vector<NamedArg> named_args_from(const json& j)
{
    std::vector<NamedArg> out;
    for (const auto& a : j)
        out.push_back({str(a, "name"), expr_from_json(at(a, "value"))});
    return out;
}

json expr_to_json(const ExprRef& e)
{
    json j{{"id", e->id}, {"loc", loc_to_json(e->loc)}};
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, LiteralExpr>) {
                j["kind"] = "literal";
                j["value"] = value_to_json(n.value);
            } else if constexpr (std::is_same_v<T, ParamExpr>) {
                j["kind"] = "param";
                j["name"] = n.name;
            } else if constexpr (std::is_same_v<T, VarExpr>) {
                j["kind"] = "var";
                j["name"] = n.name;
            } else if constexpr (std::is_same_v<T, FieldExpr>) {
                j["kind"] = "field";
                j["base"] = expr_to_json(n.base);
                j["field"] = n.field;
            } else if constexpr (std::is_same_v<T, BinaryExpr>) {
                j["kind"] = "binary";
                j["op"] = binop_name(n.op);
                j["lhs"] = expr_to_json(n.lhs);
                j["rhs"] = expr_to_json(n.rhs);
            } else if constexpr (std::is_same_v<T, UnaryExpr>) {
                j["kind"] = "unary";
                j["op"] = n.op == UnOp::Not ? "not" : "neg";
                j["operand"] = expr_to_json(n.operand);
            } else if constexpr (std::is_same_v<T, CallExpr>) {
                j["kind"] = "call";
                j["callee"] = n.callee;
                j["args"] = json::array();
                for (const auto& a : n.args)
                    j["args"].push_back(expr_to_json(a));
            } else if constexpr (std::is_same_v<T, QueryExpr>) {
                j["kind"] = "query";
                j["model"] = n.model;
                j["base"] = opt_expr(n.base);
                json ops = json::array();
                for (const auto& op : n.ops) {
                    json o{{"op", query_op_name(op.kind)}};
                    json terms = json::array();
                    for (const auto& t : op.terms)
                        terms.push_back({{"column", column_path_json(t.column)},
                                         {"cmp", cmpop_text(t.op)},
                                         {"value", expr_to_json(t.value)}});
                    o["terms"] = terms;
                    o["names"] = op.names;
                    o["column"] = column_path_json(op.column);
                    o["arg"] = opt_expr(op.arg);
                    ops.push_back(o);
                }
                j["ops"] = ops;
            } else if constexpr (std::is_same_v<T, NewExpr>) {
                j["kind"] = "new";
                j["model"] = n.model;
            } else if constexpr (std::is_same_v<T, CreateExpr>) {
                j["kind"] = "create";
                j["model"] = n.model;
                j["fields"] = named_args_json(n.fields);
            }
        },
        e->node);
    return j;
}

ExprRef expr_from_json(const json& j)
{
    auto e = std::make_shared<Expr>();
    e->id = num(j, "id");
    e->loc = loc_from_json(at(j, "loc"));
    std::string kind = str(j, "kind");
    if (kind == "literal") {
        e->node = LiteralExpr{value_from_json(at(j, "value"))};
    } else if (kind == "param") {
        e->node = ParamExpr{str(j, "name")};
    } else if (kind == "var") {
        e->node = VarExpr{str(j, "name")};
    } else if (kind == "field") {
        e->node = FieldExpr{expr_from_json(at(j, "base")), str(j, "field")};
    } else if (kind == "binary") {
        e->node = BinaryExpr{enum_from(j, "op", kBinOps), expr_from_json(at(j, "lhs")), expr_from_json(at(j, "rhs"))};
    } else if (kind == "unary") {
        std::string op = str(j, "op");
        if (op != "not" && op != "neg")
            bad("unknown unary op '" + op + "'");
        e->node = UnaryExpr{op == "not" ? UnOp::Not : UnOp::Neg, expr_from_json(at(j, "operand"))};
    } else if (kind == "call") {
        CallExpr c{str(j, "callee"), {}};
        for (const auto& a : at(j, "args"))
            c.args.push_back(expr_from_json(a));
        e->node = std::move(c);
    } else if (kind == "query") {
        QueryExpr q{str(j, "model"), opt_expr_from(at(j, "base")), {}};
        for (const auto& o : at(j, "ops")) {
            QueryOp op;
            op.kind = enum_from(o, "op", kOpKinds);
            for (const auto& t : at(o, "terms"))
                op.terms.push_back(
                    {column_path_from(at(t, "column")), enum_from(t, "cmp", kCmpOps), expr_from_json(at(t, "value"))});
            op.names = at(o, "names").get<std::vector<std::string>>();
            op.column = column_path_from(at(o, "column"));
            op.arg = opt_expr_from(at(o, "arg"));
            q.ops.push_back(std::move(op));
        }
        e->node = std::move(q);
    } else if (kind == "new") {
        e->node = NewExpr{str(j, "model")};
    } else if (kind == "create") {
        e->node = CreateExpr{str(j, "model"), named_args_from(at(j, "fields"))};
    } else {
        bad("unknown expression kind '" + kind + "'");
    }
    return ExprRef(std::move(e));
}

json block_to_json(const Block& b);
Block block_from_json(const json& j);

json stmt_to_json(const StmtRef& s)
{
    json j{{"id", s->id}, {"loc", loc_to_json(s->loc)}};
    std::visit(
        [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, LetStmt>) {
                j["kind"] = "let";
                j["name"] = n.name;
                j["value"] = expr_to_json(n.value);
            } else if constexpr (std::is_same_v<T, AssignStmt>) {
                j["kind"] = "assign";
                j["name"] = n.name;
                j["value"] = expr_to_json(n.value);
            } else if constexpr (std::is_same_v<T, FieldAssignStmt>) {
                j["kind"] = "field_assign";
                j["target"] = n.target;
                j["field"] = n.field;
                j["value"] = expr_to_json(n.value);
            } else if constexpr (std::is_same_v<T, ForStmt>) {
                j["kind"] = "for";
                j["var"] = n.var;
                j["collection"] = expr_to_json(n.collection);
                j["body"] = block_to_json(n.body);
            } else if constexpr (std::is_same_v<T, IfStmt>) {
                j["kind"] = "if";
                j["cond"] = expr_to_json(n.cond);
                j["then"] = block_to_json(n.then_body);
                j["else"] = block_to_json(n.else_body);
            } else if constexpr (std::is_same_v<T, RenderStmt>) {
                j["kind"] = "render";
                j["args"] = json::array();
                for (const auto& a : n.args)
                    j["args"].push_back(expr_to_json(a));
            } else if constexpr (std::is_same_v<T, LinkStmt>) {
                j["kind"] = "link";
                j["controller"] = n.controller;
                j["action"] = n.action;
                j["args"] = named_args_json(n.args);
            } else if constexpr (std::is_same_v<T, FormStmt>) {
                j["kind"] = "form";
                j["controller"] = n.controller;
                j["action"] = n.action;
                j["fields"] = n.fields;
                j["hidden"] = named_args_json(n.hidden);
            } else if constexpr (std::is_same_v<T, GlobalAssignStmt>) {
                j["kind"] = "global_assign";
                j["name"] = n.name;
                j["value"] = expr_to_json(n.value);
            } else if constexpr (std::is_same_v<T, ReturnStmt>) {
                j["kind"] = "return";
                j["value"] = expr_to_json(n.value);
            } else if constexpr (std::is_same_v<T, SaveStmt>) {
                j["kind"] = "save";
                j["target"] = n.target;
            } else if constexpr (std::is_same_v<T, ExprStmt>) {
                j["kind"] = "expr";
                j["expr"] = expr_to_json(n.expr);
            }
        },
        s->node);
    return j;
}

StmtRef stmt_from_json(const json& j)
{
    auto s = std::make_shared<Stmt>();
    s->id = num(j, "id");
    s->loc = loc_from_json(at(j, "loc"));
    std::string kind = str(j, "kind");
    if (kind == "let")
        s->node = LetStmt{str(j, "name"), expr_from_json(at(j, "value"))};
    else if (kind == "assign")
        s->node = AssignStmt{str(j, "name"), expr_from_json(at(j, "value"))};
    else if (kind == "field_assign")
        s->node = FieldAssignStmt{str(j, "target"), str(j, "field"), expr_from_json(at(j, "value"))};
    else if (kind == "for")
        s->node = ForStmt{str(j, "var"), expr_from_json(at(j, "collection")), block_from_json(at(j, "body"))};
    else if (kind == "if")
        s->node = IfStmt{expr_from_json(at(j, "cond")), block_from_json(at(j, "then")), block_from_json(at(j, "else"))};
    else if (kind == "render") {
        RenderStmt r;
        for (const auto& a : at(j, "args"))
            r.args.push_back(expr_from_json(a));
        s->node = std::move(r);
    } else if (kind == "link")
        s->node = LinkStmt{str(j, "controller"), str(j, "action"), named_args_from(at(j, "args"))};
    else if (kind == "form")
        s->node = FormStmt{str(j, "controller"), str(j, "action"), at(j, "fields").get<std::vector<std::string>>(),
                           named_args_from(at(j, "hidden"))};
    else if (kind == "global_assign")
        s->node = GlobalAssignStmt{str(j, "name"), expr_from_json(at(j, "value"))};
    else if (kind == "return")
        s->node = ReturnStmt{expr_from_json(at(j, "value"))};
    else if (kind == "save")
        s->node = SaveStmt{str(j, "target")};
    else if (kind == "expr")
        s->node = ExprStmt{expr_from_json(at(j, "expr"))};
    else
        bad("unknown statement kind '" + kind + "'");
    return StmtRef(std::move(s));
}

json block_to_json(const Block& b)
{
    json a = json::array();
    for (const auto& s : b)
        a.push_back(stmt_to_json(s));
    return a;
}

Block block_from_json(const json& j)
{
    if (!j.is_array())
        bad("statement block must be an array");
    Block b;
    for (const auto& s : j)
        b.push_back(stmt_from_json(s));
    return b;
}

} // namespace

json value_to_json(const Value& v)
{
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>)
                return nullptr;
            else if constexpr (std::is_same_v<T, double>)
                return json{{"float", x}}; // keeps 2.0 distinct from 2
            else
                return x;
        },
        v);
}

Value value_from_json(const json& j)
{
    if (j.is_null())
        return {};
    if (j.is_boolean())
        return j.get<bool>();
    if (j.is_number_integer())
        return j.get<std::int64_t>();
    if (j.is_number_float())
        return j.get<double>();
    if (j.is_string())
        return j.get<std::string>();
    if (j.is_object() && j.contains("float") && j.at("float").is_number())
        return j.at("float").get<double>();
    bad("unsupported literal value");
}

json app_to_json(const AppIR& ir)
{
    json doc;
    doc["irVersion"] = kIrVersion;
    doc["name"] = ir.name;
    json models = json::array();
    for (const auto& m : ir.models) {
        json fields = json::array();
        for (const auto& f : m.fields)
            fields.push_back({{"name", f.name}, {"kind", field_kind_name(f.kind)}, {"maxLen", f.maxLen},
                              {"loc", loc_to_json(f.loc)}});
        json assocs = json::array();
        for (const auto& a : m.associations)
            assocs.push_back({{"kind", assoc_kind_name(a.kind)}, {"name", a.name}, {"target", a.target},
                              {"foreignKey", a.foreignKey}, {"loc", loc_to_json(a.loc)}});
        models.push_back({{"name", m.name}, {"table", m.table}, {"fields", fields}, {"associations", assocs},
                          {"loc", loc_to_json(m.loc)}});
    }
    doc["models"] = models;
    json controllers = json::array();
    for (const auto& c : ir.controllers) {
        json actions = json::array();
        for (const auto& a : c.actions)
            actions.push_back({{"name", a.name}, {"method", http_method_name(a.method)}, {"params", a.params},
                               {"body", block_to_json(a.body)}, {"loc", loc_to_json(a.loc)}});
        controllers.push_back({{"name", c.name}, {"actions", actions}, {"loc", loc_to_json(c.loc)}});
    }
    doc["controllers"] = controllers;
    json helpers = json::array();
    for (const auto& h : ir.helpers) {
        json params = json::array();
        for (const auto& p : h.params)
            params.push_back({{"name", p.name}, {"type", p.type}});
        helpers.push_back(
            {{"name", h.name}, {"params", params}, {"body", block_to_json(h.body)}, {"loc", loc_to_json(h.loc)}});
    }
    doc["helpers"] = helpers;
    json globals = json::array();
    for (const auto& g : ir.globals)
        globals.push_back({{"name", g.name}, {"init", value_to_json(g.init)}, {"loc", loc_to_json(g.loc)}});
    doc["globals"] = globals;
    json routes = json::array();
    for (const auto& r : ir.routes)
        routes.push_back({{"controller", r.controller}, {"action", r.action}, {"method", http_method_name(r.method)},
                          {"path", r.path}});
    doc["routes"] = routes;
    return doc;
}

AppIR app_from_json(const json& doc)
{
    if (!doc.is_object())
        bad("document must be an object");
    if (num(doc, "irVersion") != kIrVersion)
        bad("unsupported irVersion " + std::to_string(num(doc, "irVersion")));
    AppIR ir;
    ir.name = str(doc, "name");
    try {
        for (const auto& m : at(doc, "models")) {
            ModelDecl md;
            md.name = str(m, "name");
            md.table = str(m, "table");
            md.loc = loc_from_json(at(m, "loc"));
            for (const auto& f : at(m, "fields"))
                md.fields.push_back(
                    {str(f, "name"), enum_from(f, "kind", kFieldKinds), num(f, "maxLen"), loc_from_json(at(f, "loc"))});
            for (const auto& a : at(m, "associations"))
                md.associations.push_back({enum_from(a, "kind", kAssocKinds), str(a, "name"), str(a, "target"),
                                           str(a, "foreignKey"), loc_from_json(at(a, "loc"))});
            ir.models.push_back(std::move(md));
        }
        for (const auto& c : at(doc, "controllers")) {
            ControllerDecl cd;
            cd.name = str(c, "name");
            cd.loc = loc_from_json(at(c, "loc"));
            for (const auto& a : at(c, "actions")) {
                ActionDecl ad;
                ad.controller = cd.name;
                ad.name = str(a, "name");
                ad.method = enum_from(a, "method", kMethods);
                ad.params = at(a, "params").get<std::vector<std::string>>();
                ad.body = block_from_json(at(a, "body"));
                ad.loc = loc_from_json(at(a, "loc"));
                cd.actions.push_back(std::move(ad));
            }
            ir.controllers.push_back(std::move(cd));
        }
        for (const auto& h : at(doc, "helpers")) {
            HelperDecl hd;
            hd.name = str(h, "name");
            for (const auto& p : at(h, "params"))
                hd.params.push_back({str(p, "name"), str(p, "type")});
            hd.body = block_from_json(at(h, "body"));
            hd.loc = loc_from_json(at(h, "loc"));
            ir.helpers.push_back(std::move(hd));
        }
        for (const auto& g : at(doc, "globals"))
            ir.globals.push_back({str(g, "name"), value_from_json(at(g, "init")), loc_from_json(at(g, "loc"))});
        for (const auto& r : at(doc, "routes"))
            ir.routes.push_back(
                {str(r, "controller"), str(r, "action"), enum_from(r, "method", kMethods), str(r, "path")});
    } catch (const nlohmann::json::exception& e) {
        bad(e.what());
    }
    return ir;
}

} // namespace ormlens
