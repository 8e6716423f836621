//! Abstract syntax tree for annotated programs.
//!
//! The tree carries no source positions so that structurally equal programs
//! compare equal regardless of formatting.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Annotation {
    Trusted,
    Untrusted,
    Neutral,
}

impl Annotation {
    pub fn is_annotated(self) -> bool {
        self != Annotation::Neutral
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Annotation::Trusted => "trusted",
            Annotation::Untrusted => "untrusted",
            Annotation::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeRef {
    Int,
    Bool,
    Str,
    List(Box<TypeRef>),
    Class(String),
    Unit,
}

impl TypeRef {
    pub fn list_of(elem: TypeRef) -> TypeRef {
        TypeRef::List(Box::new(elem))
    }

    /// Every class name mentioned by this type, including list element types.
    pub fn class_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            TypeRef::Class(name) => out.push(name),
            TypeRef::List(elem) => elem.class_names(out),
            _ => {}
        }
    }
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Int => f.write_str("int"),
            TypeRef::Bool => f.write_str("boolean"),
            TypeRef::Str => f.write_str("String"),
            TypeRef::List(elem) => write!(f, "List<{elem}>"),
            TypeRef::Class(name) => f.write_str(name),
            TypeRef::Unit => f.write_str("void"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: TypeRef,
    pub visibility: Visibility,
    pub init: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    pub visibility: Visibility,
    pub params: Vec<Param>,
    pub ret: TypeRef,
    pub body: Vec<Stmt>,
    pub is_constructor: bool,
    pub is_static: bool,
}

impl MethodDecl {
    pub fn param_types(&self) -> impl Iterator<Item = &TypeRef> {
        self.params.iter().map(|p| &p.ty)
    }

    /// `name(T1,T2)` as used in listings and diagnostics.
    pub fn signature(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|p| p.ty.to_string()).collect();
        format!("{}({})", self.name, params.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub annotation: Annotation,
    pub fields: Vec<FieldDecl>,
    pub constructors: Vec<MethodDecl>,
    pub methods: Vec<MethodDecl>,
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name)
    }

    /// The declared constructor, or the implicit public no-argument one.
    pub fn constructor(&self) -> MethodDecl {
        self.constructors
            .first()
            .cloned()
            .unwrap_or_else(|| implicit_constructor(&self.name))
    }

    /// Public constructor followed by public instance methods, in declaration order.
    pub fn public_members(&self) -> Vec<MethodDecl> {
        let mut out = Vec::new();
        let ctor = self.constructor();
        if ctor.visibility == Visibility::Public {
            out.push(ctor);
        }
        out.extend(
            self.methods
                .iter()
                .filter(|m| m.visibility == Visibility::Public && !m.is_static)
                .cloned(),
        );
        out
    }
}

pub fn implicit_constructor(class: &str) -> MethodDecl {
    MethodDecl {
        name: class.to_string(),
        visibility: Visibility::Public,
        params: Vec::new(),
        ret: TypeRef::Unit,
        body: Vec::new(),
        is_constructor: true,
        is_static: false,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    /// Name of the class holding the unique `main` method.
    pub entry: String,
}

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_id(&self, name: &str) -> Option<u32> {
        self.classes.iter().position(|c| c.name == name).map(|i| i as u32)
    }

    pub fn main_class(&self) -> &ClassDecl {
        self.class(&self.entry).expect("entry class exists")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Print,
    FileWrite,
    FileRead,
    Compute,
    Gc,
}

impl Builtin {
    pub fn from_name(name: &str) -> Option<Builtin> {
        Some(match name {
            "print" => Builtin::Print,
            "file_write" => Builtin::FileWrite,
            "file_read" => Builtin::FileRead,
            "compute" => Builtin::Compute,
            "gc" => Builtin::Gc,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Print => "print",
            Builtin::FileWrite => "file_write",
            Builtin::FileRead => "file_read",
            Builtin::Compute => "compute",
            Builtin::Gc => "gc",
        }
    }

    /// Builtins that touch the outside world and are relayed by the shim.
    pub fn is_io(self) -> bool {
        matches!(self, Builtin::Print | Builtin::FileWrite | Builtin::FileRead)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Str(String),
    Var(String),
    This,
    /// `target.name` without call parentheses. Only `this.name` is legal.
    Field { target: Box<Expr>, name: String },
    Unary { op: UnOp, expr: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    New { class: String, args: Vec<Expr> },
    NewList { elem: TypeRef },
    ListLit(Vec<Expr>),
    /// `receiver.method(args)`; an omitted receiver means `this`. List
    /// operations (`get`, `append`/`add`, `len`/`size`) are calls on a
    /// list-typed receiver.
    Call { receiver: Option<Box<Expr>>, method: String, args: Vec<Expr> },
    StaticCall { class: String, method: String, args: Vec<Expr> },
    Builtin { func: Builtin, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Let { name: String, ty: TypeRef, init: Expr },
    Assign { name: String, value: Expr },
    FieldAssign { field: String, value: Expr },
    Expr(Expr),
    Return(Option<Expr>),
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Vec<Stmt> },
    While { cond: Expr, body: Vec<Stmt> },
}

/// Walks every expression in a statement list, depth first.
pub fn visit_exprs<'a>(stmts: &'a [Stmt], f: &mut dyn FnMut(&'a Expr)) {
    for stmt in stmts {
        match stmt {
            Stmt::Let { init, .. } => visit_expr(init, f),
            Stmt::Assign { value, .. } | Stmt::FieldAssign { value, .. } => visit_expr(value, f),
            Stmt::Expr(e) => visit_expr(e, f),
            Stmt::Return(Some(e)) => visit_expr(e, f),
            Stmt::Return(None) => {}
            Stmt::If { cond, then_body, else_body } => {
                visit_expr(cond, f);
                visit_exprs(then_body, f);
                visit_exprs(else_body, f);
            }
            Stmt::While { cond, body } => {
                visit_expr(cond, f);
                visit_exprs(body, f);
            }
        }
    }
}

pub fn visit_expr<'a>(expr: &'a Expr, f: &mut dyn FnMut(&'a Expr)) {
    f(expr);
    match expr {
        Expr::Field { target, .. } => visit_expr(target, f),
        Expr::Unary { expr, .. } => visit_expr(expr, f),
        Expr::Binary { lhs, rhs, .. } => {
            visit_expr(lhs, f);
            visit_expr(rhs, f);
        }
        Expr::New { args, .. }
        | Expr::StaticCall { args, .. }
        | Expr::Builtin { args, .. }
        | Expr::ListLit(args) => args.iter().for_each(|a| visit_expr(a, f)),
        Expr::Call { receiver, args, .. } => {
            if let Some(r) = receiver {
                visit_expr(r, f);
            }
            args.iter().for_each(|a| visit_expr(a, f));
        }
        Expr::Int(_)
        | Expr::Bool(_)
        | Expr::Str(_)
        | Expr::Var(_)
        | Expr::This
        | Expr::NewList { .. } => {}
    }
}
