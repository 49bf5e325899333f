#include "ormlens/parser.hpp"

#include "ormlens/error.hpp"
#include "ormlens/validate.hpp"

#include <array>
#include <cctype>
#include <set>

namespace ormlens {

namespace {

enum class Tok { Ident, Int, Float, String, Symbol, Punct, End };

struct Token {
    Tok kind = Tok::End;
    std::string text;
    SourceLoc loc;
};

constexpr std::array<std::string_view, 15> kReserved = {"model", "field", "controller", "action", "def",
                                                         "let",   "for",   "in",         "if",     "else",
                                                         "render", "link_to", "form_to", "global", "param"};

bool is_reserved(std::string_view s)
{
    for (auto k : kReserved)
        if (k == s)
            return true;
    return false;
}

std::string describe(const Token& t)
{
    switch (t.kind) {
    case Tok::End: return "end of input";
    case Tok::String: return "string literal";
    case Tok::Int:
    case Tok::Float: return "number '" + t.text + "'";
    case Tok::Symbol: return "symbol ':" + t.text + "'";
    default: return "'" + t.text + "'";
    }
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run()
    {
        std::vector<Token> out;
        for (;;) {
            skip_space();
            Token t;
            t.loc = {line_, col_, -1};
            if (pos_ >= src_.size()) {
                t.kind = Tok::End;
                out.push_back(t);
                return out;
            }
            char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                t.kind = Tok::Ident;
                while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    t.text += advance();
                if (pos_ < src_.size() && src_[pos_] == '?')
                    advance(); // Ruby-style predicate suffix: any? == any
            } else if (std::isdigit(static_cast<unsigned char>(c))) {
                t.kind = Tok::Int;
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    t.text += advance();
                if (pos_ + 1 < src_.size() && src_[pos_] == '.' && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))) {
                    t.kind = Tok::Float;
                    t.text += advance();
                    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                        t.text += advance();
                }
            } else if (c == '"' || c == '\'') {
                t.kind = Tok::String;
                char quote = advance();
                for (;;) {
                    if (pos_ >= src_.size() || src_[pos_] == '\n')
                        throw SyntaxError(t.loc, "closing quote", "end of line");
                    char ch = advance();
                    if (ch == quote)
                        break;
                    if (ch == '\\' && pos_ < src_.size()) {
                        char e = advance();
                        t.text += e == 'n' ? '\n' : e == 't' ? '\t' : e;
                    } else {
                        t.text += ch;
                    }
                }
            } else if (c == ':' && pos_ + 1 < src_.size() &&
                       (std::isalpha(static_cast<unsigned char>(src_[pos_ + 1])) || src_[pos_ + 1] == '_')) {
                t.kind = Tok::Symbol;
                advance();
                while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                    t.text += advance();
            } else {
                t.kind = Tok::Punct;
                static constexpr std::array<std::string_view, 6> kTwo = {"==", "!=", "<=", ">=", "&&", "||"};
                bool matched = false;
                for (auto op : kTwo) {
                    if (src_.substr(pos_, 2) == op) {
                        t.text = std::string(op);
                        advance();
                        advance();
                        matched = true;
                        break;
                    }
                }
                if (!matched) {
                    if (std::string_view("(){}[],.:;=<>+-*/!").find(c) == std::string_view::npos)
                        throw SyntaxError(t.loc, "token", std::string("character '") + c + "'");
                    t.text = std::string(1, advance());
                }
            }
            out.push_back(std::move(t));
        }
    }

private:
    char advance()
    {
        char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skip_space()
    {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '#' || (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/')) {
                while (pos_ < src_.size() && src_[pos_] != '\n')
                    advance();
            } else {
                break;
            }
        }
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

bool is_chain_method(std::string_view n)
{
    static constexpr std::array<std::string_view, 10> kOps = {"where", "includes", "order", "limit", "offset",
                                                              "group", "select",   "count", "any",   "find"};
    for (auto k : kOps)
        if (k == n)
            return true;
    return false;
}

QueryOpKind chain_kind(std::string_view n)
{
    if (n == "where") return QueryOpKind::Where;
    if (n == "includes") return QueryOpKind::Includes;
    if (n == "order") return QueryOpKind::Order;
    if (n == "limit") return QueryOpKind::Limit;
    if (n == "offset") return QueryOpKind::Offset;
    if (n == "group") return QueryOpKind::Group;
    if (n == "select") return QueryOpKind::Select;
    if (n == "count") return QueryOpKind::Count;
    if (n == "any") return QueryOpKind::Any;
    return QueryOpKind::Find;
}

bool capitalized(std::string_view s) { return !s.empty() && std::isupper(static_cast<unsigned char>(s[0])); }

class Parser {
public:
    Parser(std::vector<Token> toks, std::string_view appName) : toks_(std::move(toks)) { app_.name = appName; }

    AppIR run()
    {
        while (!at_end()) {
            const Token& t = peek();
            if (is_word("model"))
                parse_model();
            else if (is_word("controller"))
                parse_controller();
            else if (is_word("def"))
                parse_helper();
            else if (is_word("global"))
                parse_global_decl();
            else
                throw SyntaxError(t.loc, "'model', 'controller', 'def' or 'global'", describe(t));
        }
        finish();
        return std::move(app_);
    }

private:
    // --- token helpers -------------------------------------------------------------
    const Token& peek(std::size_t ahead = 0) const
    {
        std::size_t i = std::min(pos_ + ahead, toks_.size() - 1);
        return toks_[i];
    }
    bool at_end() const { return peek().kind == Tok::End; }
    bool is_word(std::string_view w, std::size_t ahead = 0) const
    {
        const Token& t = peek(ahead);
        return t.kind == Tok::Ident && t.text == w;
    }
    bool is_punct(std::string_view p, std::size_t ahead = 0) const
    {
        const Token& t = peek(ahead);
        return t.kind == Tok::Punct && t.text == p;
    }
    Token next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
    Token expect_punct(std::string_view p)
    {
        if (!is_punct(p))
            throw SyntaxError(peek().loc, "'" + std::string(p) + "'", describe(peek()));
        return next();
    }
    void expect_word(std::string_view w)
    {
        if (!is_word(w))
            throw SyntaxError(peek().loc, "'" + std::string(w) + "'", describe(peek()));
        next();
    }
    bool accept_punct(std::string_view p)
    {
        if (is_punct(p)) {
            next();
            return true;
        }
        return false;
    }
    Token expect_ident(std::string_view what = "identifier")
    {
        const Token& t = peek();
        if (t.kind != Tok::Ident || is_reserved(t.text))
            throw SyntaxError(t.loc, std::string(what), describe(t));
        return next();
    }

    // --- declarations --------------------------------------------------------------
    void parse_model()
    {
        Token kw = next();
        Token name = expect_ident("model name");
        if (!capitalized(name.text))
            throw SyntaxError(name.loc, "capitalized model name", describe(name));
        ModelDecl m;
        m.name = name.text;
        m.loc = kw.loc;
        if (is_word("table")) {
            next();
            m.table = expect_ident("table name").text;
        }
        expect_punct("{");
        std::set<std::string> names;
        while (!is_punct("}")) {
            const Token& t = peek();
            if (is_word("field")) {
                Token fkw = next();
                Token fname = expect_ident("field name");
                expect_punct(":");
                FieldDecl f;
                f.name = fname.text;
                f.loc = fkw.loc;
                Token ty = expect_ident("field type");
                if (ty.text == "int") f.kind = FieldKind::Int;
                else if (ty.text == "float") f.kind = FieldKind::Float;
                else if (ty.text == "bool") f.kind = FieldKind::Bool;
                else if (ty.text == "datetime") f.kind = FieldKind::Datetime;
                else if (ty.text == "text") f.kind = FieldKind::Text;
                else if (ty.text == "string") {
                    f.kind = FieldKind::String;
                    expect_punct("(");
                    const Token& n = peek();
                    if (n.kind != Tok::Int)
                        throw SyntaxError(n.loc, "string length", describe(n));
                    f.maxLen = std::stoi(next().text);
                    expect_punct(")");
                } else {
                    throw SyntaxError(ty.loc, "int, float, bool, datetime, text or string(n)", describe(ty));
                }
                if (f.name == "id" || !names.insert(f.name).second)
                    throw DuplicateDeclaration(f.name, fname.loc);
                m.fields.push_back(f);
            } else if (is_word("belongs_to") || is_word("has_one") || is_word("has_many")) {
                Token akw = next();
                Association a;
                a.kind = akw.text == "belongs_to" ? AssocKind::BelongsTo
                         : akw.text == "has_one"  ? AssocKind::HasOne
                                                  : AssocKind::HasMany;
                a.loc = akw.loc;
                Token aname = expect_ident("association name");
                a.name = aname.text;
                expect_punct(":");
                a.target = expect_ident("target model").text;
                if (is_word("fk")) {
                    next();
                    a.foreignKey = expect_ident("foreign key column").text;
                }
                if (!names.insert(a.name).second)
                    throw DuplicateDeclaration(a.name, aname.loc);
                m.associations.push_back(a);
            } else {
                throw SyntaxError(t.loc, "'field', 'belongs_to', 'has_one', 'has_many' or '}'", describe(t));
            }
            accept_punct(";");
        }
        expect_punct("}");
        for (const auto& other : app_.models)
            if (other.name == m.name)
                throw DuplicateDeclaration(m.name, name.loc);
        FieldDecl id;
        id.name = "id";
        id.kind = FieldKind::Int;
        id.loc = m.loc;
        m.fields.insert(m.fields.begin(), id);
        app_.models.push_back(std::move(m));
    }

    void parse_controller()
    {
        Token kw = next();
        Token name = expect_ident("controller name");
        ControllerDecl c;
        c.name = name.text;
        c.loc = kw.loc;
        for (const auto& other : app_.controllers)
            if (other.name == c.name)
                throw DuplicateDeclaration(c.name, name.loc);
        expect_punct("{");
        while (!is_punct("}")) {
            if (!is_word("action"))
                throw SyntaxError(peek().loc, "'action' or '}'", describe(peek()));
            Token akw = next();
            Token aname = expect_ident("action name");
            ActionDecl a;
            a.controller = c.name;
            a.name = aname.text;
            a.loc = akw.loc;
            expect_punct("(");
            if (!is_punct(")")) {
                do {
                    Token p = is_punct(":") ? (next(), expect_ident("parameter")) : peek().kind == Tok::Symbol ? next() : expect_ident("parameter");
                    for (const auto& existing : a.params)
                        if (existing == p.text)
                            throw DuplicateDeclaration(p.text, p.loc);
                    a.params.push_back(p.text);
                } while (accept_punct(","));
            }
            expect_punct(")");
            if (is_word("GET")) {
                next();
                a.method = HttpMethod::Get;
            } else if (is_word("POST")) {
                next();
                a.method = HttpMethod::Post;
            }
            for (const auto& other : c.actions)
                if (other.name == a.name)
                    throw DuplicateDeclaration(a.name, aname.loc);
            a.body = parse_block();
            c.actions.push_back(std::move(a));
        }
        expect_punct("}");
        app_.controllers.push_back(std::move(c));
    }

    void parse_helper()
    {
        Token kw = next();
        Token name = expect_ident("helper name");
        HelperDecl h;
        h.name = name.text;
        h.loc = kw.loc;
        for (const auto& other : app_.helpers)
            if (other.name == h.name)
                throw DuplicateDeclaration(h.name, name.loc);
        expect_punct("(");
        if (!is_punct(")")) {
            do {
                Token p = expect_ident("parameter");
                HelperParam hp{p.text, {}};
                if (accept_punct(":"))
                    hp.type = next().text;
                for (const auto& existing : h.params)
                    if (existing.name == hp.name)
                        throw DuplicateDeclaration(hp.name, p.loc);
                h.params.push_back(hp);
            } while (accept_punct(","));
        }
        expect_punct(")");
        h.body = parse_block();
        app_.helpers.push_back(std::move(h));
    }

    void parse_global_decl()
    {
        Token kw = next();
        Token name = expect_ident("global name");
        expect_punct("=");
        GlobalDecl g;
        g.name = name.text;
        g.loc = kw.loc;
        bool negative = accept_punct("-");
        const Token& t = peek();
        if (t.kind == Tok::Int)
            g.init = static_cast<std::int64_t>(std::stoll(next().text)) * (negative ? -1 : 1);
        else if (t.kind == Tok::Float)
            g.init = std::stod(next().text) * (negative ? -1.0 : 1.0);
        else if (t.kind == Tok::String && !negative)
            g.init = next().text;
        else if (!negative && (is_word("true") || is_word("false")))
            g.init = next().text == "true";
        else if (!negative && is_word("nil"))
            next();
        else
            throw SyntaxError(t.loc, "literal", describe(t));
        for (const auto& other : app_.globals)
            if (other.name == g.name)
                throw DuplicateDeclaration(g.name, name.loc);
        app_.globals.push_back(std::move(g));
    }

    // --- statements ----------------------------------------------------------------
    Block parse_block()
    {
        expect_punct("{");
        Block b;
        while (!is_punct("}")) {
            if (at_end())
                throw SyntaxError(peek().loc, "'}'", describe(peek()));
            b.push_back(parse_stmt());
            accept_punct(";");
        }
        expect_punct("}");
        return b;
    }

    StmtRef make_stmt(SourceLoc loc, decltype(Stmt::node) node, int id)
    {
        auto s = std::make_shared<Stmt>();
        s->id = id;
        s->loc = loc;
        s->loc.stmt = id;
        s->node = std::move(node);
        return StmtRef(std::move(s));
    }

    StmtRef parse_stmt()
    {
        const Token start = peek();
        SourceLoc loc = start.loc;
        int id = nextStmt_++;
        if (is_word("let")) {
            next();
            Token name = expect_ident("variable name");
            expect_punct("=");
            return make_stmt(loc, LetStmt{name.text, parse_expr()}, id);
        }
        if (is_word("for")) {
            next();
            Token var = expect_ident("loop variable");
            expect_word("in");
            ExprRef coll = parse_expr();
            return make_stmt(loc, ForStmt{var.text, coll, parse_block()}, id);
        }
        if (is_word("if"))
            return parse_if(id);
        if (is_word("render")) {
            next();
            expect_punct("(");
            RenderStmt r;
            if (!is_punct(")")) {
                do
                    r.args.push_back(parse_expr());
                while (accept_punct(","));
            }
            expect_punct(")");
            return make_stmt(loc, std::move(r), id);
        }
        if (is_word("link_to")) {
            next();
            LinkStmt l;
            l.controller = expect_ident("controller name").text;
            expect_punct(".");
            l.action = expect_ident("action name").text;
            expect_punct("(");
            if (!is_punct(")")) {
                do
                    l.args.push_back(parse_named_arg());
                while (accept_punct(","));
            }
            expect_punct(")");
            return make_stmt(loc, std::move(l), id);
        }
        if (is_word("form_to")) {
            next();
            FormStmt f;
            f.controller = expect_ident("controller name").text;
            expect_punct(".");
            f.action = expect_ident("action name").text;
            expect_punct("(");
            if (!is_punct(")")) {
                do {
                    if (peek().kind == Tok::Ident && is_punct(":", 1))
                        f.hidden.push_back(parse_named_arg());
                    else
                        f.fields.push_back(expect_ident("form field").text);
                } while (accept_punct(","));
            }
            expect_punct(")");
            return make_stmt(loc, std::move(f), id);
        }
        if (is_word("global")) {
            next();
            Token name = expect_ident("global name");
            expect_punct("=");
            return make_stmt(loc, GlobalAssignStmt{name.text, parse_expr()}, id);
        }
        if (start.kind == Tok::Ident && !is_reserved(start.text)) {
            if (start.text == "return" && !is_punct("=", 1) && !is_punct(".", 1)) {
                next();
                return make_stmt(loc, ReturnStmt{parse_expr()}, id);
            }
            if (is_punct("=", 1)) {
                next();
                next();
                return make_stmt(loc, AssignStmt{start.text, parse_expr()}, id);
            }
            if (is_punct(".", 1) && peek(2).kind == Tok::Ident) {
                if (is_punct("=", 3)) {
                    next();
                    next();
                    Token field = expect_ident("field name");
                    next();
                    return make_stmt(loc, FieldAssignStmt{start.text, field.text, parse_expr()}, id);
                }
                if (peek(2).text == "save") {
                    next();
                    next();
                    next();
                    if (accept_punct("("))
                        expect_punct(")");
                    return make_stmt(loc, SaveStmt{start.text}, id);
                }
            }
        }
        ExprRef e = parse_expr();
        return make_stmt(loc, ExprStmt{e}, id);
    }

    StmtRef parse_if(int id)
    {
        SourceLoc loc = peek().loc;
        next();
        IfStmt s;
        s.cond = parse_expr();
        s.then_body = parse_block();
        if (is_word("else")) {
            next();
            if (is_word("if")) {
                int nested = nextStmt_++;
                s.else_body.push_back(parse_if(nested));
            } else {
                s.else_body = parse_block();
            }
        }
        return make_stmt(loc, std::move(s), id);
    }

    NamedArg parse_named_arg()
    {
        Token name = expect_ident("argument name");
        expect_punct(":");
        return NamedArg{name.text, parse_expr()};
    }

    // --- expressions ---------------------------------------------------------------
    ExprRef make_expr(SourceLoc loc, decltype(Expr::node) node)
    {
        auto e = std::make_shared<Expr>();
        e->id = nextExpr_++;
        e->loc = loc;
        e->node = std::move(node);
        return ExprRef(std::move(e));
    }

    ExprRef parse_expr() { return parse_or(); }

    ExprRef parse_or()
    {
        ExprRef lhs = parse_and();
        while (is_word("or") || is_punct("||")) {
            SourceLoc loc = next().loc;
            lhs = make_expr(loc, BinaryExpr{BinOp::Or, lhs, parse_and()});
        }
        return lhs;
    }

    ExprRef parse_and()
    {
        ExprRef lhs = parse_not();
        while (is_word("and") || is_punct("&&")) {
            SourceLoc loc = next().loc;
            lhs = make_expr(loc, BinaryExpr{BinOp::And, lhs, parse_not()});
        }
        return lhs;
    }

    ExprRef parse_not()
    {
        if (is_word("not") || is_punct("!")) {
            SourceLoc loc = next().loc;
            return make_expr(loc, UnaryExpr{UnOp::Not, parse_not()});
        }
        return parse_cmp();
    }

    std::optional<BinOp> cmp_op() const
    {
        const Token& t = peek();
        if (t.kind == Tok::Punct) {
            if (t.text == "==") return BinOp::Eq;
            if (t.text == "!=") return BinOp::Ne;
            if (t.text == "<") return BinOp::Lt;
            if (t.text == ">") return BinOp::Gt;
            if (t.text == "<=") return BinOp::Le;
            if (t.text == ">=") return BinOp::Ge;
        }
        if (is_word("in"))
            return BinOp::In;
        return std::nullopt;
    }

    ExprRef parse_cmp()
    {
        ExprRef lhs = parse_add();
        if (auto op = cmp_op()) {
            SourceLoc loc = next().loc;
            lhs = make_expr(loc, BinaryExpr{*op, lhs, parse_add()});
        }
        return lhs;
    }

    ExprRef parse_add()
    {
        ExprRef lhs = parse_mul();
        while (is_punct("+") || is_punct("-")) {
            Token op = next();
            lhs = make_expr(op.loc, BinaryExpr{op.text == "+" ? BinOp::Add : BinOp::Sub, lhs, parse_mul()});
        }
        return lhs;
    }

    ExprRef parse_mul()
    {
        ExprRef lhs = parse_unary();
        while (is_punct("*") || is_punct("/")) {
            Token op = next();
            lhs = make_expr(op.loc, BinaryExpr{op.text == "*" ? BinOp::Mul : BinOp::Div, lhs, parse_unary()});
        }
        return lhs;
    }

    ExprRef parse_unary()
    {
        if (is_punct("-")) {
            SourceLoc loc = next().loc;
            return make_expr(loc, UnaryExpr{UnOp::Neg, parse_unary()});
        }
        return parse_postfix();
    }

    struct Primary {
        ExprRef expr;
        std::string modelRef; // bare capitalized name awaiting `.method`
        SourceLoc loc;
    };

    Primary parse_primary()
    {
        const Token t = peek();
        switch (t.kind) {
        case Tok::Int: next(); return {make_expr(t.loc, LiteralExpr{static_cast<std::int64_t>(std::stoll(t.text))}), {}, t.loc};
        case Tok::Float: next(); return {make_expr(t.loc, LiteralExpr{std::stod(t.text)}), {}, t.loc};
        case Tok::String: next(); return {make_expr(t.loc, LiteralExpr{t.text}), {}, t.loc};
        case Tok::Symbol: next(); return {make_expr(t.loc, LiteralExpr{t.text}), {}, t.loc};
        case Tok::Punct:
            if (t.text == "(") {
                next();
                ExprRef e = parse_expr();
                expect_punct(")");
                // parenthesised chains are extended by a new chain over them, not in place
                return {e, {}, t.loc};
            }
            break;
        case Tok::Ident: {
            if (t.text == "true" || t.text == "false") {
                next();
                return {make_expr(t.loc, LiteralExpr{t.text == "true"}), {}, t.loc};
            }
            if (t.text == "nil") {
                next();
                return {make_expr(t.loc, LiteralExpr{}), {}, t.loc};
            }
            if (t.text == "param") {
                next();
                expect_punct("(");
                std::string name;
                if (peek().kind == Tok::Symbol)
                    name = next().text;
                else {
                    accept_punct(":");
                    name = expect_ident("parameter name").text;
                }
                expect_punct(")");
                return {make_expr(t.loc, ParamExpr{name}), {}, t.loc};
            }
            if (is_reserved(t.text))
                break;
            next();
            if (is_punct("(")) {
                next();
                CallExpr c{t.text, {}};
                if (!is_punct(")")) {
                    do
                        c.args.push_back(parse_expr());
                    while (accept_punct(","));
                }
                expect_punct(")");
                return {make_expr(t.loc, std::move(c)), {}, t.loc};
            }
            if (capitalized(t.text))
                return {ExprRef{}, t.text, t.loc};
            return {make_expr(t.loc, VarExpr{t.text}), {}, t.loc};
        }
        default: break;
        }
        throw SyntaxError(t.loc, "expression", describe(t));
    }

    ExprRef parse_postfix()
    {
        Primary p = parse_primary();
        ExprRef cur = p.expr;
        std::string modelRef = p.modelRef;
        SourceLoc chainLoc = p.loc;
        // the QueryExpr currently being extended in place, if any
        std::shared_ptr<Expr> openChain;

        while (is_punct(".")) {
            next();
            Token m = expect_ident("method or field name");
            if (is_chain_method(m.text)) {
                QueryOp op = parse_chain_op(chain_kind(m.text));
                if (!modelRef.empty()) {
                    auto e = std::make_shared<Expr>();
                    e->id = nextExpr_++;
                    e->loc = chainLoc;
                    e->node = QueryExpr{modelRef, {}, {op}};
                    openChain = e;
                    cur = ExprRef(e);
                    modelRef.clear();
                } else if (openChain) {
                    auto& q = std::get<QueryExpr>(openChain->node);
                    if (is_terminal_op(q.ops.back().kind))
                        throw SyntaxError(m.loc, "field access after terminal query method", "'" + m.text + "'");
                    q.ops.push_back(std::move(op));
                } else {
                    auto e = std::make_shared<Expr>();
                    e->id = nextExpr_++;
                    e->loc = chainLoc;
                    e->node = QueryExpr{{}, cur, {op}};
                    openChain = e;
                    cur = ExprRef(e);
                }
                continue;
            }
            if (!modelRef.empty()) {
                if (m.text == "new") {
                    expect_punct("(");
                    expect_punct(")");
                    cur = make_expr(chainLoc, NewExpr{modelRef});
                } else if (m.text == "create") {
                    expect_punct("(");
                    CreateExpr c{modelRef, {}};
                    if (!is_punct(")")) {
                        do
                            c.fields.push_back(parse_named_arg());
                        while (accept_punct(","));
                    }
                    expect_punct(")");
                    cur = make_expr(chainLoc, std::move(c));
                } else {
                    throw SyntaxError(m.loc, "query method, 'new' or 'create'", "'" + m.text + "'");
                }
                modelRef.clear();
                openChain.reset();
                continue;
            }
            if (is_punct("("))
                throw SyntaxError(peek().loc, "field access (unknown method '" + m.text + "')", "'('");
            cur = make_expr(m.loc, FieldExpr{cur, m.text});
            openChain.reset();
        }
        if (!modelRef.empty())
            throw SyntaxError(peek().loc, "'.' after model name " + modelRef, describe(peek()));
        return cur;
    }

    ColumnPath parse_column_path()
    {
        ColumnPath c;
        Token first = expect_ident("column name");
        if (accept_punct(".")) {
            c.assoc = first.text;
            c.column = expect_ident("column name").text;
        } else {
            c.column = first.text;
        }
        return c;
    }

    QueryOp parse_chain_op(QueryOpKind kind)
    {
        QueryOp op;
        op.kind = kind;
        bool parens = accept_punct("(");
        if (!parens) {
            if (kind == QueryOpKind::Count || kind == QueryOpKind::Any || kind == QueryOpKind::Where)
                return op;
            throw SyntaxError(peek().loc, "'('", describe(peek()));
        }
        switch (kind) {
        case QueryOpKind::Where:
            if (!is_punct(")")) {
                do {
                    WhereTerm term;
                    term.column = parse_column_path();
                    const Token& o = peek();
                    if (o.kind == Tok::Punct && o.text == "==") term.op = CmpOp::Eq;
                    else if (o.kind == Tok::Punct && o.text == "!=") term.op = CmpOp::Ne;
                    else if (o.kind == Tok::Punct && o.text == "<") term.op = CmpOp::Lt;
                    else if (o.kind == Tok::Punct && o.text == ">") term.op = CmpOp::Gt;
                    else if (is_word("in")) term.op = CmpOp::In;
                    else
                        throw SyntaxError(o.loc, "one of == != < > in", describe(o));
                    next();
                    term.value = parse_add();
                    op.terms.push_back(std::move(term));
                } while (accept_punct(","));
            }
            break;
        case QueryOpKind::Includes:
        case QueryOpKind::Select:
            do
                op.names.push_back((peek().kind == Tok::Symbol ? next() : expect_ident("name")).text);
            while (accept_punct(","));
            break;
        case QueryOpKind::Order:
        case QueryOpKind::Group:
            op.column = parse_column_path();
            break;
        case QueryOpKind::Limit:
        case QueryOpKind::Offset:
        case QueryOpKind::Find:
            op.arg = parse_expr();
            break;
        case QueryOpKind::Count:
        case QueryOpKind::Any:
            break;
        }
        expect_punct(")");
        return op;
    }

    void finish()
    {
        for (auto& m : app_.models) {
            if (m.table.empty())
                m.table = default_table_name(m.name);
            for (auto& a : m.associations) {
                if (!a.foreignKey.empty())
                    continue;
                if (a.kind == AssocKind::BelongsTo) {
                    a.foreignKey = a.name + "_id";
                } else {
                    std::string owner;
                    for (char c : m.name)
                        owner += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                    a.foreignKey = owner + "_id";
                }
            }
        }
        rebuild_routes(app_);
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    int nextStmt_ = 0;
    int nextExpr_ = 0;
    AppIR app_;
};

} // namespace

AppIR parse_app_unchecked(std::string_view source, std::string_view appName)
{
    Parser p(Lexer(source).run(), appName);
    return p.run();
}

AppIR parse_app(std::string_view source, std::string_view appName)
{
    AppIR ir = parse_app_unchecked(source, appName);
    auto diags = validate(ir);
    if (!diags.empty())
        throw UnresolvedReference(diags.front().name, diags.front().loc);
    return ir;
}

} // namespace ormlens
