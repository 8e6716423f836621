//! Expression typing shared by validation and call-graph construction.
//!
//! Checking a method body yields both the type issues found and the exact
//! call targets, since the language has static dispatch only.

use super::ast::*;
use super::validate::Rule;

/// A statically resolved call site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallTarget {
    Constructor { class: String },
    Method { class: String, method: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub rule: Rule,
    pub message: String,
}

#[derive(Debug, Default, Clone)]
pub struct MethodFacts {
    pub calls: Vec<CallTarget>,
    /// Every type mentioned by the body: locals, allocations, call results.
    pub types: Vec<TypeRef>,
    pub issues: Vec<Issue>,
}

impl MethodFacts {
    pub fn unresolved(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.rule == Rule::UnresolvedName)
    }
}

pub fn check_method(program: &Program, class: &ClassDecl, method: &MethodDecl) -> MethodFacts {
    let mut cx = Checker::new(program, class, method.is_static);
    for p in &method.params {
        cx.check_type(&p.ty);
        cx.locals.push((p.name.clone(), p.ty.clone()));
    }
    cx.check_type(&method.ret);
    cx.ret = method.ret.clone();
    if method.is_constructor {
        for field in &class.fields {
            if let Some(init) = &field.init {
                let ty = cx.expr(init);
                cx.expect_assignable(&field.ty, &ty, &format!("initializer of field `{}`", field.name));
            }
        }
    }
    cx.block(&method.body);
    if method.ret != TypeRef::Unit && !definitely_returns(&method.body) {
        cx.issue(Rule::MissingReturn, format!("method `{}` may finish without returning a value", method.name));
    }
    cx.facts
}

fn definitely_returns(body: &[Stmt]) -> bool {
    match body.last() {
        Some(Stmt::Return(_)) => true,
        Some(Stmt::If { then_body, else_body, .. }) => definitely_returns(then_body) && definitely_returns(else_body),
        _ => false,
    }
}

pub fn assignable(expected: &TypeRef, actual: &TypeRef) -> bool {
    expected == actual && *actual != TypeRef::Unit
}

struct Checker<'p> {
    program: &'p Program,
    class: &'p ClassDecl,
    is_static: bool,
    locals: Vec<(String, TypeRef)>,
    ret: TypeRef,
    facts: MethodFacts,
}

/// Type used after an error so checking can continue without cascades.
/// No declared class can have an empty name.
fn poison() -> TypeRef {
    TypeRef::Class(String::new())
}

fn is_poison(t: &TypeRef) -> bool {
    matches!(t, TypeRef::Class(n) if n.is_empty())
}

impl<'p> Checker<'p> {
    fn new(program: &'p Program, class: &'p ClassDecl, is_static: bool) -> Self {
        Checker { program, class, is_static, locals: Vec::new(), ret: TypeRef::Unit, facts: MethodFacts::default() }
    }

    fn issue(&mut self, rule: Rule, message: String) {
        self.facts.issues.push(Issue { rule, message });
    }

    fn check_type(&mut self, ty: &TypeRef) {
        let mut names = Vec::new();
        ty.class_names(&mut names);
        for name in names {
            if self.program.class(name).is_none() {
                self.issue(Rule::UnresolvedType, format!("unknown type `{name}`"));
            }
        }
        if *ty != TypeRef::Unit {
            self.facts.types.push(ty.clone());
        }
    }

    fn expect_assignable(&mut self, expected: &TypeRef, actual: &TypeRef, what: &str) {
        if !is_poison(actual) && !assignable(expected, actual) {
            self.issue(Rule::TypeError, format!("{what}: expected `{expected}`, found `{actual}`"));
        }
    }

    fn lookup(&self, name: &str) -> Option<&TypeRef> {
        self.locals.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn block(&mut self, stmts: &[Stmt]) {
        let mark = self.locals.len();
        for s in stmts {
            self.stmt(s);
        }
        self.locals.truncate(mark);
    }

    fn stmt(&mut self, stmt: &Stmt) {
        match stmt {
            Stmt::Let { name, ty, init } => {
                self.check_type(ty);
                let actual = self.expr(init);
                self.expect_assignable(ty, &actual, &format!("initializer of `{name}`"));
                if self.lookup(name).is_some() {
                    self.issue(Rule::TypeError, format!("variable `{name}` is already defined"));
                }
                self.locals.push((name.clone(), ty.clone()));
            }
            Stmt::Assign { name, value } => {
                let actual = self.expr(value);
                match self.lookup(name).cloned() {
                    Some(ty) => self.expect_assignable(&ty, &actual, &format!("assignment to `{name}`")),
                    None => self.issue(Rule::UnresolvedName, format!("unknown variable `{name}`")),
                }
            }
            Stmt::FieldAssign { field, value } => {
                let actual = self.expr(value);
                if self.is_static {
                    self.issue(Rule::ThisInStatic, format!("field `{field}` assigned in a static method"));
                    return;
                }
                match self.class.field(field) {
                    Some(f) => {
                        let ty = f.ty.clone();
                        self.expect_assignable(&ty, &actual, &format!("assignment to field `{field}`"));
                    }
                    None => self.issue(Rule::UnresolvedName, format!("unknown field `{}.{field}`", self.class.name)),
                }
            }
            Stmt::Expr(e) => {
                self.expr(e);
            }
            Stmt::Return(value) => {
                let actual = value.as_ref().map(|e| self.expr(e)).unwrap_or(TypeRef::Unit);
                let ret = self.ret.clone();
                if ret == TypeRef::Unit {
                    if value.is_some() {
                        self.issue(Rule::TypeError, "returning a value from a `void` method".into());
                    }
                } else if value.is_none() {
                    self.issue(Rule::TypeError, format!("missing return value of type `{ret}`"));
                } else {
                    self.expect_assignable(&ret, &actual, "return value");
                }
            }
            Stmt::If { cond, then_body, else_body } => {
                let c = self.expr(cond);
                self.expect_assignable(&TypeRef::Bool, &c, "condition");
                self.block(then_body);
                self.block(else_body);
            }
            Stmt::While { cond, body } => {
                let c = self.expr(cond);
                self.expect_assignable(&TypeRef::Bool, &c, "loop condition");
                self.block(body);
            }
        }
    }

    fn args(&mut self, params: &[TypeRef], args: &[Expr], what: &str) {
        if params.len() != args.len() {
            self.issue(
                Rule::TypeError,
                format!("{what} takes {} argument(s), {} given", params.len(), args.len()),
            );
        }
        for (i, a) in args.iter().enumerate() {
            let actual = self.expr(a);
            if let Some(p) = params.get(i) {
                self.expect_assignable(p, &actual, &format!("argument {} of {what}", i + 1));
            }
        }
    }

    fn expr(&mut self, expr: &Expr) -> TypeRef {
        match expr {
            Expr::Int(_) => TypeRef::Int,
            Expr::Bool(_) => TypeRef::Bool,
            Expr::Str(_) => TypeRef::Str,
            Expr::Var(name) => match self.lookup(name) {
                Some(t) => t.clone(),
                None => {
                    self.issue(Rule::UnresolvedName, format!("unknown variable `{name}`"));
                    poison()
                }
            },
            Expr::This => {
                if self.is_static {
                    self.issue(Rule::ThisInStatic, "`this` used in a static method".into());
                    return poison();
                }
                TypeRef::Class(self.class.name.clone())
            }
            Expr::Field { target, name } => {
                if !matches!(target.as_ref(), Expr::This) {
                    self.expr(target);
                    self.issue(
                        Rule::FieldAccess,
                        format!("field `{name}` read on another object; use a method instead"),
                    );
                    return poison();
                }
                if self.is_static {
                    self.issue(Rule::ThisInStatic, "`this` used in a static method".into());
                    return poison();
                }
                match self.class.field(name) {
                    Some(f) => f.ty.clone(),
                    None => {
                        self.issue(Rule::UnresolvedName, format!("unknown field `{}.{name}`", self.class.name));
                        poison()
                    }
                }
            }
            Expr::Unary { op, expr } => {
                let t = self.expr(expr);
                let want = match op {
                    UnOp::Neg => TypeRef::Int,
                    UnOp::Not => TypeRef::Bool,
                };
                self.expect_assignable(&want, &t, "operand");
                want
            }
            Expr::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs);
                let r = self.expr(rhs);
                self.binary(*op, l, r)
            }
            Expr::New { class, args } => {
                let Some(decl) = self.program.class(class) else {
                    self.issue(Rule::UnresolvedName, format!("unknown class `{class}`"));
                    for a in args {
                        self.expr(a);
                    }
                    return poison();
                };
                let ctor = decl.constructor();
                if ctor.visibility == Visibility::Private && decl.name != self.class.name {
                    self.issue(Rule::Visibility, format!("constructor of `{class}` is private"));
                }
                let params: Vec<TypeRef> = ctor.param_types().cloned().collect();
                self.args(&params, args, &format!("`new {class}`"));
                self.facts.calls.push(CallTarget::Constructor { class: class.clone() });
                let ty = TypeRef::Class(class.clone());
                self.facts.types.push(ty.clone());
                ty
            }
            Expr::NewList { elem } => {
                let ty = TypeRef::list_of(elem.clone());
                self.check_type(&ty);
                ty
            }
            Expr::ListLit(items) => {
                let mut elem = None;
                for item in items {
                    let t = self.expr(item);
                    match &elem {
                        None => elem = Some(t),
                        Some(first) => {
                            let first = first.clone();
                            self.expect_assignable(&first, &t, "list element");
                        }
                    }
                }
                match elem {
                    Some(t) if !is_poison(&t) => {
                        let ty = TypeRef::list_of(t);
                        self.facts.types.push(ty.clone());
                        ty
                    }
                    _ => poison(),
                }
            }
            Expr::Call { receiver, method, args } => {
                let recv_ty = match receiver {
                    Some(r) => self.expr(r),
                    None => self.expr(&Expr::This),
                };
                match recv_ty {
                    TypeRef::List(elem) => self.list_call(&elem, method, args),
                    TypeRef::Class(class) => self.instance_call(&class, method, args),
                    t if is_poison(&t) => {
                        for a in args {
                            self.expr(a);
                        }
                        poison()
                    }
                    other => {
                        self.issue(Rule::TypeError, format!("cannot call `{method}` on a value of type `{other}`"));
                        poison()
                    }
                }
            }
            Expr::StaticCall { class, method, args } => {
                let Some(decl) = self.program.class(class) else {
                    self.issue(Rule::UnresolvedName, format!("unknown class `{class}`"));
                    return poison();
                };
                let Some(m) = decl.method(method).filter(|m| m.is_static) else {
                    self.issue(Rule::UnresolvedName, format!("unknown static method `{class}.{method}`"));
                    for a in args {
                        self.expr(a);
                    }
                    return poison();
                };
                if m.visibility == Visibility::Private && decl.name != self.class.name {
                    self.issue(Rule::Visibility, format!("method `{class}.{method}` is private"));
                }
                let params: Vec<TypeRef> = m.param_types().cloned().collect();
                let ret = m.ret.clone();
                self.args(&params, args, &format!("`{class}.{method}`"));
                self.facts.calls.push(CallTarget::Method { class: class.clone(), method: method.clone() });
                ret
            }
            Expr::Builtin { func, args } => self.builtin(*func, args),
        }
    }

    fn binary(&mut self, op: BinOp, l: TypeRef, r: TypeRef) -> TypeRef {
        if is_poison(&l) || is_poison(&r) {
            return poison();
        }
        let printable = |t: &TypeRef| matches!(t, TypeRef::Int | TypeRef::Bool | TypeRef::Str);
        let result = match op {
            BinOp::Add if (l == TypeRef::Str || r == TypeRef::Str) && printable(&l) && printable(&r) => {
                Some(TypeRef::Str)
            }
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem
                if l == TypeRef::Int && r == TypeRef::Int =>
            {
                Some(TypeRef::Int)
            }
            BinOp::Eq | BinOp::Ne if l == r && printable(&l) => Some(TypeRef::Bool),
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge if l == TypeRef::Int && r == TypeRef::Int => {
                Some(TypeRef::Bool)
            }
            BinOp::And | BinOp::Or if l == TypeRef::Bool && r == TypeRef::Bool => Some(TypeRef::Bool),
            _ => None,
        };
        result.unwrap_or_else(|| {
            self.issue(Rule::TypeError, format!("operator `{}` not defined for `{l}` and `{r}`", op.symbol()));
            poison()
        })
    }

    fn list_call(&mut self, elem: &TypeRef, method: &str, args: &[Expr]) -> TypeRef {
        match method {
            "get" => {
                self.args(&[TypeRef::Int], args, "`get`");
                elem.clone()
            }
            "append" | "add" => {
                self.args(&[elem.clone()], args, "`append`");
                TypeRef::Unit
            }
            "len" | "size" => {
                self.args(&[], args, "`len`");
                TypeRef::Int
            }
            _ => {
                self.issue(Rule::UnresolvedName, format!("unknown list operation `{method}`"));
                poison()
            }
        }
    }

    fn instance_call(&mut self, class: &str, method: &str, args: &[Expr]) -> TypeRef {
        let Some(decl) = self.program.class(class) else {
            return poison();
        };
        let Some(m) = decl.method(method).filter(|m| !m.is_static) else {
            self.issue(Rule::UnresolvedName, format!("unknown method `{class}.{method}`"));
            for a in args {
                self.expr(a);
            }
            return poison();
        };
        if m.visibility == Visibility::Private && decl.name != self.class.name {
            self.issue(Rule::Visibility, format!("method `{class}.{method}` is private"));
        }
        let params: Vec<TypeRef> = m.param_types().cloned().collect();
        let ret = m.ret.clone();
        self.args(&params, args, &format!("`{class}.{method}`"));
        self.facts.calls.push(CallTarget::Method { class: class.to_string(), method: method.to_string() });
        if ret != TypeRef::Unit {
            self.facts.types.push(ret.clone());
        }
        ret
    }

    fn builtin(&mut self, func: Builtin, args: &[Expr]) -> TypeRef {
        match func {
            Builtin::Print => {
                if args.len() != 1 {
                    self.issue(Rule::TypeError, format!("`print` takes 1 argument, {} given", args.len()));
                }
                for a in args {
                    let t = self.expr(a);
                    if !matches!(t, TypeRef::Int | TypeRef::Bool | TypeRef::Str) && !is_poison(&t) {
                        self.issue(Rule::TypeError, format!("`print` cannot print a value of type `{t}`"));
                    }
                }
                TypeRef::Unit
            }
            Builtin::FileWrite => {
                self.args(&[TypeRef::Str, TypeRef::Str], args, "`file_write`");
                TypeRef::Unit
            }
            Builtin::FileRead => {
                self.args(&[TypeRef::Str], args, "`file_read`");
                TypeRef::Str
            }
            Builtin::Compute => {
                self.args(&[TypeRef::Int], args, "`compute`");
                TypeRef::Unit
            }
            Builtin::Gc => {
                self.args(&[], args, "`gc`");
                TypeRef::Unit
            }
        }
    }
}
