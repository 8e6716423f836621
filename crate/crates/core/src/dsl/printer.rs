//! Canonical pretty-printer. `parse_program(&print_program(p)) == p` for
//! every parsed program.

use std::fmt::Write;

use super::ast::*;

pub fn print_program(program: &Program) -> String {
    let mut out = String::new();
    for (i, class) in program.classes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_class(&mut out, class);
    }
    out
}

fn print_class(out: &mut String, class: &ClassDecl) {
    match class.annotation {
        Annotation::Trusted => out.push_str("@Trusted\n"),
        Annotation::Untrusted => out.push_str("@Untrusted\n"),
        Annotation::Neutral => {}
    }
    let _ = writeln!(out, "public class {} {{", class.name);
    for field in &class.fields {
        let _ = write!(out, "    {} {} {}", vis(field.visibility), field.ty, field.name);
        if let Some(init) = &field.init {
            out.push_str(" = ");
            print_expr(out, init);
        }
        out.push_str(";\n");
    }
    for ctor in &class.constructors {
        let _ = write!(out, "    {} {}(", vis(ctor.visibility), class.name);
        print_params(out, &ctor.params);
        out.push_str(") ");
        print_block(out, &ctor.body, 1);
        out.push('\n');
    }
    for m in &class.methods {
        let stat = if m.is_static { "static " } else { "" };
        let _ = write!(out, "    {} {}{} {}(", vis(m.visibility), stat, m.ret, m.name);
        print_params(out, &m.params);
        out.push_str(") ");
        print_block(out, &m.body, 1);
        out.push('\n');
    }
    out.push_str("}\n");
}

fn vis(v: Visibility) -> &'static str {
    match v {
        Visibility::Public => "public",
        Visibility::Private => "private",
    }
}

fn print_params(out: &mut String, params: &[Param]) {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{} {}", p.ty, p.name);
    }
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn print_block(out: &mut String, body: &[Stmt], level: usize) {
    if body.is_empty() {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    for stmt in body {
        print_stmt(out, stmt, level + 1);
    }
    indent(out, level);
    out.push('}');
}

fn print_stmt(out: &mut String, stmt: &Stmt, level: usize) {
    indent(out, level);
    match stmt {
        Stmt::Let { name, ty, init } => {
            let _ = write!(out, "{ty} {name} = ");
            print_expr(out, init);
            out.push(';');
        }
        Stmt::Assign { name, value } => {
            let _ = write!(out, "{name} = ");
            print_expr(out, value);
            out.push(';');
        }
        Stmt::FieldAssign { field, value } => {
            let _ = write!(out, "this.{field} = ");
            print_expr(out, value);
            out.push(';');
        }
        Stmt::Expr(e) => {
            print_expr(out, e);
            out.push(';');
        }
        Stmt::Return(None) => out.push_str("return;"),
        Stmt::Return(Some(e)) => {
            out.push_str("return ");
            print_expr(out, e);
            out.push(';');
        }
        Stmt::If { .. } => print_if(out, stmt, level),
        Stmt::While { cond, body } => {
            out.push_str("while (");
            print_expr(out, cond);
            out.push_str(") ");
            print_block(out, body, level);
        }
    }
    out.push('\n');
}

fn print_if(out: &mut String, stmt: &Stmt, level: usize) {
    let Stmt::If { cond, then_body, else_body } = stmt else { unreachable!() };
    out.push_str("if (");
    print_expr(out, cond);
    out.push_str(") ");
    print_block(out, then_body, level);
    match else_body.as_slice() {
        [] => {}
        [nested @ Stmt::If { .. }] => {
            out.push_str(" else ");
            print_if(out, nested, level);
        }
        body => {
            out.push_str(" else ");
            print_block(out, body, level);
        }
    }
}

fn print_args(out: &mut String, args: &[Expr]) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        print_expr(out, a);
    }
}

fn print_receiver(out: &mut String, e: &Expr) {
    let needs_parens = matches!(e, Expr::Binary { .. } | Expr::Unary { .. })
        || matches!(e, Expr::Int(v) if *v < 0);
    if needs_parens {
        out.push('(');
        print_expr(out, e);
        out.push(')');
    } else {
        print_expr(out, e);
    }
}

pub fn print_expr(out: &mut String, expr: &Expr) {
    match expr {
        Expr::Int(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Str(s) => print_string(out, s),
        Expr::Var(name) => out.push_str(name),
        Expr::This => out.push_str("this"),
        Expr::Field { target, name } => {
            print_receiver(out, target);
            let _ = write!(out, ".{name}");
        }
        Expr::Unary { op, expr } => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            print_receiver(out, expr);
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = op.precedence();
            let wrap_l = matches!(lhs.as_ref(), Expr::Binary { op: l, .. } if l.precedence() < prec);
            let wrap_r = matches!(rhs.as_ref(), Expr::Binary { op: r, .. } if r.precedence() <= prec);
            print_wrapped(out, lhs, wrap_l);
            let _ = write!(out, " {} ", op.symbol());
            print_wrapped(out, rhs, wrap_r);
        }
        Expr::New { class, args } => {
            let _ = write!(out, "new {class}(");
            print_args(out, args);
            out.push(')');
        }
        Expr::NewList { elem } => {
            let _ = write!(out, "new List<{elem}>()");
        }
        Expr::ListLit(items) => {
            out.push('[');
            print_args(out, items);
            out.push(']');
        }
        Expr::Call { receiver, method, args } => {
            if let Some(r) = receiver {
                print_receiver(out, r);
                out.push('.');
            }
            let _ = write!(out, "{method}(");
            print_args(out, args);
            out.push(')');
        }
        Expr::StaticCall { class, method, args } => {
            let _ = write!(out, "{class}.{method}(");
            print_args(out, args);
            out.push(')');
        }
        Expr::Builtin { func, args } => {
            let _ = write!(out, "{}(", func.name());
            print_args(out, args);
            out.push(')');
        }
    }
}

fn print_wrapped(out: &mut String, e: &Expr, wrap: bool) {
    if wrap {
        out.push('(');
        print_expr(out, e);
        out.push(')');
    } else {
        print_expr(out, e);
    }
}

fn print_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out.push('"');
}
