#include "ormlens/app_model.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace ormlens {

const char* binop_text(BinOp op)
{
    switch (op) {
    case BinOp::Eq: return "==";
    case BinOp::Ne: return "!=";
    case BinOp::Lt: return "<";
    case BinOp::Gt: return ">";
    case BinOp::Le: return "<=";
    case BinOp::Ge: return ">=";
    case BinOp::In: return "in";
    case BinOp::Add: return "+";
    case BinOp::Sub: return "-";
    case BinOp::Mul: return "*";
    case BinOp::Div: return "/";
    case BinOp::And: return "and";
    case BinOp::Or: return "or";
    }
    return "?";
}

const char* cmpop_text(CmpOp op)
{
    switch (op) {
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Gt: return ">";
    case CmpOp::In: return "in";
    }
    return "?";
}

const char* query_op_name(QueryOpKind k)
{
    switch (k) {
    case QueryOpKind::Where: return "where";
    case QueryOpKind::Includes: return "includes";
    case QueryOpKind::Order: return "order";
    case QueryOpKind::Limit: return "limit";
    case QueryOpKind::Offset: return "offset";
    case QueryOpKind::Group: return "group";
    case QueryOpKind::Select: return "select";
    case QueryOpKind::Count: return "count";
    case QueryOpKind::Any: return "any";
    case QueryOpKind::Find: return "find";
    }
    return "?";
}

bool is_terminal_op(QueryOpKind k)
{
    return k == QueryOpKind::Count || k == QueryOpKind::Any || k == QueryOpKind::Find;
}

const char* field_kind_name(FieldKind k)
{
    switch (k) {
    case FieldKind::Int: return "int";
    case FieldKind::Float: return "float";
    case FieldKind::Bool: return "bool";
    case FieldKind::Datetime: return "datetime";
    case FieldKind::String: return "string";
    case FieldKind::Text: return "text";
    }
    return "?";
}

const char* assoc_kind_name(AssocKind k)
{
    switch (k) {
    case AssocKind::BelongsTo: return "belongs_to";
    case AssocKind::HasOne: return "has_one";
    case AssocKind::HasMany: return "has_many";
    }
    return "?";
}

const char* http_method_name(HttpMethod m) { return m == HttpMethod::Get ? "GET" : "POST"; }

std::string to_string(const ActionId& a) { return a.controller + "#" + a.action; }

const FieldDecl* ModelDecl::field(std::string_view n) const
{
    for (const auto& f : fields)
        if (f.name == n)
            return &f;
    return nullptr;
}

const Association* ModelDecl::association(std::string_view n) const
{
    for (const auto& a : associations)
        if (a.name == n)
            return &a;
    return nullptr;
}

const ModelDecl* AppIR::model(std::string_view n) const
{
    for (const auto& m : models)
        if (m.name == n)
            return &m;
    return nullptr;
}

const ModelDecl* AppIR::model_by_table(std::string_view t) const
{
    for (const auto& m : models)
        if (m.table == t)
            return &m;
    return nullptr;
}

const ActionDecl* AppIR::action(const ActionId& id) const
{
    for (const auto& c : controllers) {
        if (c.name != id.controller)
            continue;
        for (const auto& a : c.actions)
            if (a.name == id.action)
                return &a;
    }
    return nullptr;
}

const HelperDecl* AppIR::helper(std::string_view n) const
{
    for (const auto& h : helpers)
        if (h.name == n)
            return &h;
    return nullptr;
}

bool AppIR::has_global(std::string_view n) const
{
    return std::any_of(globals.begin(), globals.end(), [&](const GlobalDecl& g) { return g.name == n; });
}

std::vector<ActionId> AppIR::action_ids() const
{
    std::vector<ActionId> out;
    for (const auto& c : controllers)
        for (const auto& a : c.actions)
            out.push_back({c.name, a.name});
    return out;
}

std::size_t AppIR::action_count() const
{
    std::size_t n = 0;
    for (const auto& c : controllers)
        n += c.actions.size();
    return n;
}

bool is_utility_function(std::string_view name)
{
    static constexpr std::array<std::string_view, 10> kUtilities = {
        "now", "today", "rand", "uuid", "concat", "format", "upcase", "downcase", "length", "days_ago"};
    return std::find(kUtilities.begin(), kUtilities.end(), name) != kUtilities.end();
}

int utility_arity(std::string_view name)
{
    if (name == "concat" || name == "format")
        return -1;
    if (name == "upcase" || name == "downcase" || name == "length" || name == "days_ago")
        return 1;
    return 0;
}

namespace {

bool contains_ci(std::string_view haystack, std::string_view needle)
{
    auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                          [](char a, char b) { return std::tolower(static_cast<unsigned char>(a)) == b; });
    return it != haystack.end();
}

} // namespace

int column_byte_size(const FieldDecl& field)
{
    switch (field.kind) {
    case FieldKind::Int: return 4;
    case FieldKind::Float: return 8;
    case FieldKind::Bool: return 1;
    case FieldKind::Datetime: return 8;
    case FieldKind::String: return field.maxLen;
    case FieldKind::Text:
        if (contains_ci(field.name, "comment"))
            return 200;
        if (contains_ci(field.name, "name") || contains_ci(field.name, "email") || contains_ci(field.name, "url"))
            return 128;
        return 2450;
    }
    return 0;
}

std::string default_table_name(std::string_view model)
{
    std::string t;
    for (char c : model)
        t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    auto ends = [&](std::string_view s) { return t.size() >= s.size() && t.compare(t.size() - s.size(), s.size(), s) == 0; };
    if (ends("s") || ends("x") || ends("z") || ends("ch") || ends("sh"))
        return t + "es";
    if (t.size() >= 2 && t.back() == 'y' && std::string_view("aeiou").find(t[t.size() - 2]) == std::string_view::npos)
        return t.substr(0, t.size() - 1) + "ies";
    return t + "s";
}

void rebuild_routes(AppIR& ir)
{
    ir.routes.clear();
    for (const auto& c : ir.controllers)
        for (const auto& a : c.actions)
        {
            std::string path = "/";
            for (char ch : c.name)
                path += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            ir.routes.push_back({c.name, a.name, a.method, path + "/" + a.name});
        }
}

} // namespace ormlens
