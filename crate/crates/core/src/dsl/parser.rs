use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;

const KEYWORDS: &[&str] = &[
    "class", "public", "private", "static", "new", "return", "if", "else", "while", "true",
    "false", "this", "void", "int", "boolean", "bool", "String", "List", "ArrayList",
];

/// Parses DSL source into a [`Program`]. Never panics on malformed input.
pub fn parse_program(source: &str) -> Result<Program, ParseError> {
    let tokens = tokenize(source)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut classes: Vec<ClassDecl> = Vec::new();
    while !parser.at_eof() {
        let class = parser.class_decl()?;
        if classes.iter().any(|c| c.name == class.name) {
            return Err(ParseError::DuplicateClass(class.name));
        }
        classes.push(class);
    }

    let mains: Vec<String> = classes
        .iter()
        .filter(|c| c.methods.iter().any(|m| m.name == "main" && m.is_static))
        .map(|c| c.name.clone())
        .collect();
    let entry = match mains.as_slice() {
        [] => {
            let eof = parser.peek_token();
            return Err(ParseError::syntax(eof.line, eof.col, "a static `main` method", "end of input"));
        }
        [one] => one.clone(),
        _ => return Err(ParseError::MultipleMain(mains)),
    };

    let class_names: HashSet<String> = classes.iter().map(|c| c.name.clone()).collect();
    for class in &mut classes {
        let owner = class.name.clone();
        for method in class.constructors.iter_mut().chain(class.methods.iter_mut()) {
            let mut scope: Vec<String> = method.params.iter().map(|p| p.name.clone()).collect();
            let is_static = method.is_static;
            resolve_stmts(&mut method.body, &mut scope, &class_names, &owner, is_static);
        }
        for field in &mut class.fields {
            if let Some(init) = &mut field.init {
                resolve_expr(init, &[], &class_names, &owner, false);
            }
        }
    }

    Ok(Program { classes, entry })
}

/// Rewrites `Name.m(..)` into a static call when `Name` is a class and not a
/// local in scope, and unqualified calls inside static methods into static
/// calls on the enclosing class.
fn resolve_stmts(
    stmts: &mut [Stmt],
    scope: &mut Vec<String>,
    classes: &HashSet<String>,
    owner: &str,
    is_static: bool,
) {
    let mark = scope.len();
    for stmt in stmts.iter_mut() {
        match stmt {
            Stmt::Let { name, init, .. } => {
                resolve_expr(init, scope, classes, owner, is_static);
                scope.push(name.clone());
            }
            Stmt::Assign { value, .. } | Stmt::FieldAssign { value, .. } => {
                resolve_expr(value, scope, classes, owner, is_static)
            }
            Stmt::Expr(e) | Stmt::Return(Some(e)) => resolve_expr(e, scope, classes, owner, is_static),
            Stmt::Return(None) => {}
            Stmt::If { cond, then_body, else_body } => {
                resolve_expr(cond, scope, classes, owner, is_static);
                resolve_stmts(then_body, scope, classes, owner, is_static);
                resolve_stmts(else_body, scope, classes, owner, is_static);
            }
            Stmt::While { cond, body } => {
                resolve_expr(cond, scope, classes, owner, is_static);
                resolve_stmts(body, scope, classes, owner, is_static);
            }
        }
    }
    scope.truncate(mark);
}

fn resolve_expr(expr: &mut Expr, scope: &[String], classes: &HashSet<String>, owner: &str, is_static: bool) {
    let rewrite = match expr {
        Expr::Call { receiver: Some(recv), method, args } => match recv.as_ref() {
            Expr::Var(name) if !scope.contains(name) && classes.contains(name) => Some(Expr::StaticCall {
                class: name.clone(),
                method: method.clone(),
                args: std::mem::take(args),
            }),
            _ => None,
        },
        Expr::Call { receiver: None, method, args } if is_static => Some(Expr::StaticCall {
            class: owner.to_string(),
            method: method.clone(),
            args: std::mem::take(args),
        }),
        _ => None,
    };
    if let Some(new) = rewrite {
        *expr = new;
    }
    match expr {
        Expr::Field { target, .. } => resolve_expr(target, scope, classes, owner, is_static),
        Expr::Unary { expr, .. } => resolve_expr(expr, scope, classes, owner, is_static),
        Expr::Binary { lhs, rhs, .. } => {
            resolve_expr(lhs, scope, classes, owner, is_static);
            resolve_expr(rhs, scope, classes, owner, is_static);
        }
        Expr::New { args, .. }
        | Expr::StaticCall { args, .. }
        | Expr::Builtin { args, .. }
        | Expr::ListLit(args) => {
            for a in args {
                resolve_expr(a, scope, classes, owner, is_static);
            }
        }
        Expr::Call { receiver, args, .. } => {
            if let Some(r) = receiver {
                resolve_expr(r, scope, classes, owner, is_static);
            }
            for a in args {
                resolve_expr(a, scope, classes, owner, is_static);
            }
        }
        _ => {}
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_token(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek(&self) -> &Tok {
        &self.peek_token().tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        &self.tokens[(self.pos + offset).min(self.tokens.len() - 1)].tok
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> Token {
        let t = self.peek_token().clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> ParseError {
        let t = self.peek_token();
        ParseError::syntax(t.line, t.col, expected, &t.tok.describe())
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.is_keyword(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&format!("`{p}`")))
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("`{kw}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.advance();
                Ok(name)
            }
            _ => Err(self.error(what)),
        }
    }

    fn class_decl(&mut self) -> Result<ClassDecl, ParseError> {
        let mut annotation = None;
        while let Tok::Annotation(name) = self.peek().clone() {
            let value = match name.as_str() {
                "Trusted" => Annotation::Trusted,
                "Untrusted" => Annotation::Untrusted,
                "Neutral" => Annotation::Neutral,
                _ => return Err(self.error("`@Trusted`, `@Untrusted` or `@Neutral`")),
            };
            if annotation.is_some() {
                return Err(self.error("a single annotation per class"));
            }
            annotation = Some(value);
            self.advance();
        }
        self.eat_keyword("public");
        self.expect_keyword("class")?;
        let name = self.ident("class name")?;
        self.expect_punct("{")?;

        let mut class = ClassDecl {
            name,
            annotation: annotation.unwrap_or(Annotation::Neutral),
            fields: Vec::new(),
            constructors: Vec::new(),
            methods: Vec::new(),
        };
        while !self.eat_punct("}") {
            if self.at_eof() {
                return Err(self.error("`}`"));
            }
            self.member(&mut class)?;
        }
        Ok(class)
    }

    fn member(&mut self, class: &mut ClassDecl) -> Result<(), ParseError> {
        let visibility = if self.eat_keyword("private") {
            Visibility::Private
        } else {
            self.eat_keyword("public");
            Visibility::Public
        };
        let is_static = self.eat_keyword("static");

        let is_ctor = matches!(self.peek(), Tok::Ident(n) if *n == class.name)
            && matches!(self.peek_at(1), Tok::Punct("("));
        if is_ctor {
            if is_static {
                return Err(self.error("constructor without `static`"));
            }
            self.advance();
            let params = self.params(&class.name, &class.name)?;
            let body = self.block()?;
            if !class.constructors.is_empty() || class.methods.iter().any(|m| m.name == class.name) {
                return Err(ParseError::DuplicateMethod { class: class.name.clone(), method: class.name.clone() });
            }
            class.constructors.push(MethodDecl {
                name: class.name.clone(),
                visibility,
                params,
                ret: TypeRef::Unit,
                body,
                is_constructor: true,
                is_static: false,
            });
            return Ok(());
        }

        let ty = self.type_ref(true)?;
        if matches!(self.peek(), Tok::Ident(n) if *n == class.name) {
            return Err(self.error("a member name different from the class name"));
        }
        let name = self.ident("member name")?;
        if self.is_punct("(") {
            let params = self.params(&class.name, &name)?;
            let body = self.block()?;
            if class.methods.iter().any(|m| m.name == name) {
                return Err(ParseError::DuplicateMethod { class: class.name.clone(), method: name });
            }
            class.methods.push(MethodDecl {
                name,
                visibility,
                params,
                ret: ty,
                body,
                is_constructor: false,
                is_static,
            });
        } else {
            if is_static {
                return Err(self.error("`(` (static fields are not supported)"));
            }
            if ty == TypeRef::Unit {
                return Err(self.error("a field type other than `void`"));
            }
            let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
            self.expect_punct(";")?;
            if class.fields.iter().any(|f| f.name == name) {
                return Err(ParseError::DuplicateField { class: class.name.clone(), field: name });
            }
            class.fields.push(FieldDecl { name, ty, visibility, init });
        }
        Ok(())
    }

    fn params(&mut self, class: &str, method: &str) -> Result<Vec<Param>, ParseError> {
        self.expect_punct("(")?;
        let mut params: Vec<Param> = Vec::new();
        if !self.eat_punct(")") {
            loop {
                let ty = self.type_ref(false)?;
                let name = self.ident("parameter name")?;
                if params.iter().any(|p| p.name == name) {
                    return Err(ParseError::DuplicateParam {
                        class: class.to_string(),
                        method: method.to_string(),
                        param: name,
                    });
                }
                params.push(Param { name, ty });
                if self.eat_punct(")") {
                    break;
                }
                self.expect_punct(",")?;
            }
        }
        Ok(params)
    }

    fn type_ref(&mut self, allow_void: bool) -> Result<TypeRef, ParseError> {
        let name = match self.peek().clone() {
            Tok::Ident(n) => n,
            _ => return Err(self.error("type")),
        };
        let mut ty = match name.as_str() {
            "void" if allow_void => {
                self.advance();
                return Ok(TypeRef::Unit);
            }
            "int" | "Integer" | "long" => {
                self.advance();
                TypeRef::Int
            }
            "boolean" | "bool" | "Boolean" => {
                self.advance();
                TypeRef::Bool
            }
            "String" => {
                self.advance();
                TypeRef::Str
            }
            "List" | "ArrayList" => {
                self.advance();
                self.expect_punct("<")?;
                let elem = self.type_ref(false)?;
                self.expect_punct(">")?;
                TypeRef::list_of(elem)
            }
            _ => TypeRef::Class(self.ident("type")?),
        };
        while self.is_punct("[") && matches!(self.peek_at(1), Tok::Punct("]")) {
            self.advance();
            self.advance();
            ty = TypeRef::list_of(ty);
        }
        Ok(ty)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.eat_punct("}") {
            if self.at_eof() {
                return Err(self.error("`}`"));
            }
            stmts.push(self.stmt()?);
        }
        Ok(stmts)
    }

    fn is_decl_start(&self) -> bool {
        match self.peek() {
            Tok::Ident(n) => match n.as_str() {
                "int" | "boolean" | "bool" | "String" | "List" | "ArrayList" | "Integer" | "Boolean" | "long" => true,
                _ if KEYWORDS.contains(&n.as_str()) => false,
                _ => match self.peek_at(1) {
                    Tok::Ident(_) => true,
                    Tok::Punct("[") => matches!(self.peek_at(2), Tok::Punct("]")),
                    _ => false,
                },
            },
            _ => false,
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        if self.eat_keyword("return") {
            if self.eat_punct(";") {
                return Ok(Stmt::Return(None));
            }
            let e = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Return(Some(e)));
        }
        if self.eat_keyword("if") {
            return self.if_rest();
        }
        if self.eat_keyword("while") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let body = self.block()?;
            return Ok(Stmt::While { cond, body });
        }
        if self.is_decl_start() {
            let ty = self.type_ref(false)?;
            let name = self.ident("variable name")?;
            self.expect_punct("=")?;
            let init = self.expr()?;
            self.expect_punct(";")?;
            return Ok(Stmt::Let { name, ty, init });
        }
        // this.f = e; / this.f += e;
        if self.is_keyword("this")
            && matches!(self.peek_at(1), Tok::Punct("."))
            && matches!(self.peek_at(2), Tok::Ident(_))
            && matches!(self.peek_at(3), Tok::Punct("=" | "+=" | "-="))
        {
            self.advance();
            self.advance();
            let field = self.ident("field name")?;
            let op = self.advance();
            let rhs = self.expr()?;
            self.expect_punct(";")?;
            let current = Expr::Field { target: Box::new(Expr::This), name: field.clone() };
            let value = compound(op.tok, current, rhs);
            return Ok(Stmt::FieldAssign { field, value });
        }
        if matches!(self.peek(), Tok::Ident(n) if !KEYWORDS.contains(&n.as_str()))
            && matches!(self.peek_at(1), Tok::Punct("=" | "+=" | "-="))
        {
            let name = self.ident("variable name")?;
            let op = self.advance();
            let rhs = self.expr()?;
            self.expect_punct(";")?;
            let value = compound(op.tok, Expr::Var(name.clone()), rhs);
            return Ok(Stmt::Assign { name, value });
        }
        let e = self.expr()?;
        self.expect_punct(";")?;
        Ok(Stmt::Expr(e))
    }

    fn if_rest(&mut self) -> Result<Stmt, ParseError> {
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_body = self.block()?;
        let else_body = if self.eat_keyword("else") {
            if self.eat_keyword("if") {
                vec![self.if_rest()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(Stmt::If { cond, then_body, else_body })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else { return None };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            if op.precedence() < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_punct("-") {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Int(v) => Expr::Int(v.wrapping_neg()),
                other => Expr::Unary { op: UnOp::Neg, expr: Box::new(other) },
            });
        }
        if self.eat_punct("!") {
            let inner = self.unary()?;
            return Ok(Expr::Unary { op: UnOp::Not, expr: Box::new(inner) });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while self.eat_punct(".") {
            let name = match self.peek().clone() {
                Tok::Ident(n) => {
                    self.advance();
                    n
                }
                _ => return Err(self.error("member name")),
            };
            if self.is_punct("(") {
                let args = self.args("(", ")")?;
                e = Expr::Call { receiver: Some(Box::new(e)), method: name, args };
            } else {
                e = Expr::Field { target: Box::new(e), name };
            }
        }
        Ok(e)
    }

    fn args(&mut self, open: &str, close: &str) -> Result<Vec<Expr>, ParseError> {
        self.expect_punct(open)?;
        let mut args = Vec::new();
        if self.eat_punct(close) {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_punct(close) {
                return Ok(args);
            }
            self.expect_punct(",")?;
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.advance();
                Ok(Expr::Int(v))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::Str(s))
            }
            Tok::Punct("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("[") => {
                let items = self.args("[", "]")?;
                if items.is_empty() {
                    return Err(self.error("at least one list element (use `new List<T>()`)"));
                }
                Ok(Expr::ListLit(items))
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => {
                    self.advance();
                    Ok(Expr::Bool(true))
                }
                "false" => {
                    self.advance();
                    Ok(Expr::Bool(false))
                }
                "this" => {
                    self.advance();
                    Ok(Expr::This)
                }
                "new" => {
                    self.advance();
                    if self.is_keyword("List") || self.is_keyword("ArrayList") {
                        self.advance();
                        self.expect_punct("<")?;
                        let elem = self.type_ref(false)?;
                        self.expect_punct(">")?;
                        self.expect_punct("(")?;
                        self.expect_punct(")")?;
                        return Ok(Expr::NewList { elem });
                    }
                    let class = self.ident("class name")?;
                    let args = self.args("(", ")")?;
                    Ok(Expr::New { class, args })
                }
                _ if KEYWORDS.contains(&name.as_str()) => Err(self.error("expression")),
                _ => {
                    self.advance();
                    if self.is_punct("(") {
                        let args = self.args("(", ")")?;
                        Ok(match Builtin::from_name(&name) {
                            Some(func) => Expr::Builtin { func, args },
                            None => Expr::Call { receiver: None, method: name, args },
                        })
                    } else {
                        Ok(Expr::Var(name))
                    }
                }
            },
            _ => Err(self.error("expression")),
        }
    }
}

fn compound(op: Tok, current: Expr, rhs: Expr) -> Expr {
    let bin = match op {
        Tok::Punct("+=") => BinOp::Add,
        Tok::Punct("-=") => BinOp::Sub,
        _ => return rhs,
    };
    Expr::Binary { op: bin, lhs: Box::new(current), rhs: Box::new(rhs) }
}
