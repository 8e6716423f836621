//! Tree-walking evaluator. Every operand that must survive the evaluation of
//! a sibling is parked on the isolate's temp stack so a collection triggered
//! in between sees it as a root.

use std::sync::atomic::Ordering;
use std::sync::Arc;

use crate::dsl::{BinOp, Builtin, Expr, MethodDecl, Stmt, UnOp};
use crate::partitioner::Side;

use super::heap::{HeapObject, ObjRef, Value};
use super::isolate::{ConcreteData, Frame, RtClass};
use super::{DualRuntime, ErrorKind, RuntimeError};

type R<T> = Result<T, RuntimeError>;

pub(crate) enum Flow {
    Next,
    Return(Value),
}

impl DualRuntime {
    pub(crate) fn frame(&self, side: Side) -> R<&Frame> {
        self.iso(side).frames.last().ok_or_else(|| RuntimeError::new(ErrorKind::Internal("no active frame".into())))
    }

    fn frame_mut(&mut self, side: Side) -> R<&mut Frame> {
        self.iso_mut(side)
            .frames
            .last_mut()
            .ok_or_else(|| RuntimeError::new(ErrorKind::Internal("no active frame".into())))
    }

    /// Evaluates `exprs` onto the temp stack and returns the stack height
    /// before them.
    fn eval_onto_temps(&mut self, side: Side, exprs: &[Expr]) -> R<usize> {
        let base = self.iso(side).temps.len();
        for e in exprs {
            match self.eval(side, e) {
                Ok(v) => self.iso_mut(side).temps.push(v),
                Err(err) => {
                    self.iso_mut(side).temps.truncate(base);
                    return Err(err);
                }
            }
        }
        Ok(base)
    }

    pub(crate) fn take_temps(&mut self, side: Side, base: usize) -> Vec<Value> {
        self.iso_mut(side).temps.split_off(base)
    }

    fn exec_block(&mut self, side: Side, stmts: &[Stmt]) -> R<Flow> {
        let mark = self.frame(side)?.locals.len();
        let mut flow = Flow::Next;
        for stmt in stmts {
            match self.exec_stmt(side, stmt) {
                Ok(Flow::Next) => {}
                Ok(ret) => {
                    flow = ret;
                    break;
                }
                Err(e) => {
                    self.frame_mut(side)?.locals.truncate(mark);
                    return Err(e);
                }
            }
        }
        self.frame_mut(side)?.locals.truncate(mark);
        Ok(flow)
    }

    fn exec_stmt(&mut self, side: Side, stmt: &Stmt) -> R<Flow> {
        self.safe_point();
        match stmt {
            Stmt::Let { name, init, .. } => {
                let v = self.eval(side, init)?;
                self.frame_mut(side)?.locals.push((name.clone(), v));
            }
            Stmt::Assign { name, value } => {
                let v = self.eval(side, value)?;
                let frame = self.frame_mut(side)?;
                match frame.locals.iter_mut().rev().find(|(n, _)| n == name) {
                    Some(slot) => slot.1 = v,
                    None => return Err(RuntimeError::new(ErrorKind::Internal(format!("unknown local `{name}`")))),
                }
            }
            Stmt::FieldAssign { field, value } => {
                let v = self.eval(side, value)?;
                let this = self.frame(side)?.this.clone();
                self.write_field(side, &this, field, v)?;
            }
            Stmt::Expr(e) => {
                self.eval(side, e)?;
            }
            Stmt::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(side, e)?,
                    None => Value::Unit,
                };
                return Ok(Flow::Return(v));
            }
            Stmt::If { cond, then_body, else_body } => {
                let body = if self.eval_bool(side, cond)? { then_body } else { else_body };
                return self.exec_block(side, body);
            }
            Stmt::While { cond, body } => {
                while self.eval_bool(side, cond)? {
                    if let Flow::Return(v) = self.exec_block(side, body)? {
                        return Ok(Flow::Return(v));
                    }
                }
            }
        }
        Ok(Flow::Next)
    }

    /// Runs a pending live-mode helper scan when no transition is in flight.
    fn safe_point(&mut self) {
        if self.depth == 0 {
            if let Some(flag) = &self.live_flag {
                if flag.swap(false, Ordering::AcqRel) {
                    self.scan_step();
                }
            }
        }
    }

    fn eval_bool(&mut self, side: Side, e: &Expr) -> R<bool> {
        match self.eval(side, e)? {
            Value::Bool(b) => Ok(b),
            other => Err(RuntimeError::mismatch(format!("expected boolean, found {other}"))),
        }
    }

    fn eval_int(&mut self, side: Side, e: &Expr) -> R<i64> {
        match self.eval(side, e)? {
            Value::Int(v) => Ok(v),
            other => Err(RuntimeError::mismatch(format!("expected int, found {other}"))),
        }
    }

    pub(crate) fn eval(&mut self, side: Side, expr: &Expr) -> R<Value> {
        match expr {
            Expr::Int(v) => Ok(Value::Int(*v)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Str(s) => Ok(Value::str(s)),
            Expr::Var(name) => {
                let frame = self.frame(side)?;
                frame
                    .locals
                    .iter()
                    .rev()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| RuntimeError::new(ErrorKind::Internal(format!("unknown local `{name}`"))))
            }
            Expr::This => Ok(self.frame(side)?.this.clone()),
            Expr::Field { target, name } => {
                let obj = self.eval(side, target)?;
                self.read_field(side, &obj, name)
            }
            Expr::Unary { op, expr } => match op {
                UnOp::Neg => Ok(Value::Int(self.eval_int(side, expr)?.wrapping_neg())),
                UnOp::Not => Ok(Value::Bool(!self.eval_bool(side, expr)?)),
            },
            Expr::Binary { op, lhs, rhs } => self.eval_binary(side, *op, lhs, rhs),
            Expr::New { class, args } => {
                let base = self.eval_onto_temps(side, args)?;
                self.instantiate_at(side, class, base)
            }
            Expr::NewList { .. } => {
                let r = self.alloc_checked(side, HeapObject::List { items: Vec::new() });
                Ok(Value::Ref(r))
            }
            Expr::ListLit(items) => {
                let base = self.eval_onto_temps(side, items)?;
                let r = self.alloc_checked(side, HeapObject::List { items: Vec::new() });
                let items = self.take_temps(side, base);
                if let Some(HeapObject::List { items: slot }) = self.iso_mut(side).heap.get_mut(r) {
                    *slot = items;
                }
                Ok(Value::Ref(r))
            }
            Expr::Call { receiver, method, args } => {
                let recv = match receiver {
                    Some(r) => self.eval(side, r)?,
                    None => self.frame(side)?.this.clone(),
                };
                self.iso_mut(side).temps.push(recv);
                let base = match self.eval_onto_temps(side, args) {
                    Ok(b) => b,
                    Err(e) => {
                        self.iso_mut(side).temps.pop();
                        return Err(e);
                    }
                };
                let mut vals = self.take_temps(side, base - 1);
                let recv = vals.remove(0);
                self.call_on(side, recv, method, vals)
            }
            Expr::StaticCall { class, method, args } => {
                let base = self.eval_onto_temps(side, args)?;
                let args = self.take_temps(side, base);
                let data = self.concrete_by_name(side, class)?;
                let m = data
                    .methods
                    .get(method)
                    .cloned()
                    .ok_or_else(|| RuntimeError::new(ErrorKind::UnknownTarget(format!("{class}.{method}"))))?;
                self.invoke_concrete(side, &data, &m, Value::Unit, args)
            }
            Expr::Builtin { func, args } => {
                let base = self.eval_onto_temps(side, args)?;
                let args = self.take_temps(side, base);
                self.builtin(side, *func, args)
            }
        }
    }

    fn eval_binary(&mut self, side: Side, op: BinOp, lhs: &Expr, rhs: &Expr) -> R<Value> {
        match op {
            BinOp::And => return Ok(Value::Bool(self.eval_bool(side, lhs)? && self.eval_bool(side, rhs)?)),
            BinOp::Or => return Ok(Value::Bool(self.eval_bool(side, lhs)? || self.eval_bool(side, rhs)?)),
            _ => {}
        }
        let l = self.eval(side, lhs)?;
        self.iso_mut(side).temps.push(l);
        let r = self.eval(side, rhs);
        let l = self.iso_mut(side).temps.pop().unwrap_or(Value::Unit);
        let r = r?;
        match (op, &l, &r) {
            (BinOp::Eq, _, _) => Ok(Value::Bool(l == r)),
            (BinOp::Ne, _, _) => Ok(Value::Bool(l != r)),
            (BinOp::Add, Value::Str(_), _) | (BinOp::Add, _, Value::Str(_)) => Ok(Value::str(&format!("{l}{r}"))),
            (_, Value::Int(a), Value::Int(b)) => {
                let (a, b) = (*a, *b);
                Ok(match op {
                    BinOp::Add => Value::Int(a.wrapping_add(b)),
                    BinOp::Sub => Value::Int(a.wrapping_sub(b)),
                    BinOp::Mul => Value::Int(a.wrapping_mul(b)),
                    BinOp::Div | BinOp::Rem if b == 0 => return Err(RuntimeError::new(ErrorKind::DivisionByZero)),
                    BinOp::Div => Value::Int(a.wrapping_div(b)),
                    BinOp::Rem => Value::Int(a.wrapping_rem(b)),
                    BinOp::Lt => Value::Bool(a < b),
                    BinOp::Le => Value::Bool(a <= b),
                    BinOp::Gt => Value::Bool(a > b),
                    BinOp::Ge => Value::Bool(a >= b),
                    BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!(),
                })
            }
            _ => Err(RuntimeError::mismatch(format!("operator `{}` on {l} and {r}", op.symbol()))),
        }
    }

    fn object_class(&self, side: Side, obj: &Value) -> R<(ObjRef, u32)> {
        let r = match obj {
            Value::Ref(r) => *r,
            Value::Unit => return Err(RuntimeError::new(ErrorKind::NullDereference)),
            other => return Err(RuntimeError::mismatch(format!("expected an object, found {other}"))),
        };
        match self.iso(side).heap.get(r) {
            Some(HeapObject::Instance { class, .. }) => Ok((r, *class)),
            Some(_) => Err(RuntimeError::mismatch("field access on a list or proxy".into())),
            None => Err(RuntimeError::new(ErrorKind::Internal("dangling reference".into()))),
        }
    }

    fn field_slot(&self, side: Side, class: u32, name: &str) -> R<usize> {
        self.iso(side)
            .classes
            .concrete(class)
            .and_then(|c| c.decl.field_index(name))
            .ok_or_else(|| RuntimeError::new(ErrorKind::UnknownTarget(format!("field {name}"))))
    }

    fn read_field(&mut self, side: Side, obj: &Value, name: &str) -> R<Value> {
        let (r, class) = self.object_class(side, obj)?;
        let idx = self.field_slot(side, class, name)?;
        self.charge_field(side);
        match self.iso(side).heap.get(r) {
            Some(HeapObject::Instance { fields, .. }) => Ok(fields[idx].clone()),
            _ => unreachable!("checked by object_class"),
        }
    }

    pub(crate) fn write_field(&mut self, side: Side, obj: &Value, name: &str, v: Value) -> R<()> {
        let (r, class) = self.object_class(side, obj)?;
        let idx = self.field_slot(side, class, name)?;
        self.charge_field(side);
        if let Some(HeapObject::Instance { fields, .. }) = self.iso_mut(side).heap.get_mut(r) {
            fields[idx] = v;
        }
        Ok(())
    }

    pub(crate) fn concrete_by_name(&self, side: Side, class: &str) -> R<Arc<ConcreteData>> {
        let iso = self.iso(side);
        iso.classes
            .id(class)
            .and_then(|id| iso.classes.concrete(id))
            .cloned()
            .ok_or_else(|| RuntimeError::new(ErrorKind::UnknownClass(format!("{class} in {side} isolate"))))
    }

    /// `new C(args)` where the arguments sit on the temp stack from `base`.
    pub(crate) fn instantiate_at(&mut self, side: Side, class: &str, base: usize) -> R<Value> {
        let iso = self.iso(side);
        let loaded = iso.classes.id(class).and_then(|id| iso.classes.get(id).cloned());
        match loaded {
            Some(RtClass::Concrete(data)) => self.construct_concrete(side, &data, base),
            Some(RtClass::Proxy(proxy)) => self.construct_remote(side, &proxy, base),
            None => {
                self.iso_mut(side).temps.truncate(base);
                Err(RuntimeError::new(ErrorKind::UnknownClass(format!("{class} in {side} isolate"))))
            }
        }
    }

    /// Allocates, runs field initializers and the constructor body.
    pub(crate) fn construct_concrete(&mut self, side: Side, data: &Arc<ConcreteData>, base: usize) -> R<Value> {
        let obj = self.alloc_checked(side, HeapObject::Instance { class: data.id, fields: data.field_defaults() });
        let args = self.take_temps(side, base);
        let this = Value::Ref(obj);
        let ctor = data.ctor.clone();
        self.enter(side, data, &ctor, this.clone(), args)?;
        let result = self.run_initializers(side, data).and_then(|_| self.exec_block(side, &ctor.body));
        self.leave(side, data, &ctor, result)?;
        Ok(this)
    }

    fn run_initializers(&mut self, side: Side, data: &ConcreteData) -> R<()> {
        let this = self.frame(side)?.this.clone();
        for field in &data.decl.fields {
            if let Some(init) = &field.init {
                let v = self.eval(side, init)?;
                self.write_field(side, &this, &field.name, v)?;
            }
        }
        Ok(())
    }

    fn enter(&mut self, side: Side, data: &ConcreteData, m: &MethodDecl, this: Value, args: Vec<Value>) -> R<()> {
        if self.call_depth >= self.config.max_call_depth {
            return Err(RuntimeError::new(ErrorKind::StackOverflow)
                .with_frame(format!("at {}.{} [{side}]", data.decl.name, m.name)));
        }
        if args.len() != m.params.len() {
            return Err(RuntimeError::mismatch(format!(
                "{}.{} expects {} argument(s), got {}",
                data.decl.name,
                m.name,
                m.params.len(),
                args.len()
            )));
        }
        self.call_depth += 1;
        let locals = m.params.iter().map(|p| p.name.clone()).zip(args).collect();
        self.iso_mut(side).frames.push(Frame { this, locals });
        Ok(())
    }

    fn leave(&mut self, side: Side, data: &ConcreteData, m: &MethodDecl, result: R<Flow>) -> R<Value> {
        self.iso_mut(side).frames.pop();
        self.call_depth -= 1;
        match result {
            Ok(Flow::Return(v)) => Ok(v),
            Ok(Flow::Next) => Ok(Value::Unit),
            Err(e) => Err(e.with_frame(format!("at {}.{} [{side}]", data.decl.name, m.name))),
        }
    }

    pub(crate) fn invoke_concrete(
        &mut self,
        side: Side,
        data: &Arc<ConcreteData>,
        m: &Arc<MethodDecl>,
        this: Value,
        args: Vec<Value>,
    ) -> R<Value> {
        self.enter(side, data, m, this, args)?;
        let result = self.exec_block(side, &m.body);
        self.leave(side, data, m, result)
    }

    /// Dispatch on the receiver's runtime shape: list operation, local
    /// method, or remote invocation through a proxy.
    pub(crate) fn call_on(&mut self, side: Side, recv: Value, method: &str, args: Vec<Value>) -> R<Value> {
        let r = match recv {
            Value::Ref(r) => r,
            Value::Unit => return Err(RuntimeError::new(ErrorKind::NullDereference)),
            other => return Err(RuntimeError::mismatch(format!("cannot call `{method}` on {other}"))),
        };
        let shape = match self.iso(side).heap.get(r) {
            Some(HeapObject::List { .. }) => None,
            Some(HeapObject::Instance { class, .. }) => Some((*class, None)),
            Some(HeapObject::Proxy { class, hash }) => Some((*class, Some(*hash))),
            None => return Err(RuntimeError::new(ErrorKind::Internal("dangling receiver".into()))),
        };
        match shape {
            None => self.list_op(side, r, method, args),
            Some((class, None)) => {
                let data = self.iso(side).classes.concrete(class).cloned().ok_or_else(|| {
                    RuntimeError::new(ErrorKind::UnknownClass(self.iso(side).class_name(class).to_string()))
                })?;
                let m = data.methods.get(method).cloned().ok_or_else(|| {
                    RuntimeError::new(ErrorKind::UnknownTarget(format!("{}.{method}", data.decl.name)))
                })?;
                self.invoke_concrete(side, &data, &m, Value::Ref(r), args)
            }
            Some((class, Some(hash))) => {
                self.iso_mut(side).temps.push(Value::Ref(r));
                let out = self.invoke_remote(side, class, hash, method, args);
                self.iso_mut(side).temps.pop();
                out
            }
        }
    }

    fn list_op(&mut self, side: Side, r: ObjRef, method: &str, mut args: Vec<Value>) -> R<Value> {
        self.charge_field(side);
        let Some(HeapObject::List { items }) = self.iso_mut(side).heap.get_mut(r) else {
            unreachable!("checked by call_on")
        };
        match (method, args.as_slice()) {
            ("get", [Value::Int(i)]) => {
                let i = *i;
                usize::try_from(i)
                    .ok()
                    .and_then(|u| items.get(u).cloned())
                    .ok_or_else(|| RuntimeError::new(ErrorKind::IndexOutOfBounds { index: i, len: items.len() }))
            }
            ("append" | "add", [_]) => {
                items.push(args.pop().unwrap());
                Ok(Value::Unit)
            }
            ("len" | "size", []) => Ok(Value::Int(items.len() as i64)),
            _ => Err(RuntimeError::new(ErrorKind::UnknownTarget(format!("List.{method}")))),
        }
    }

    fn builtin(&mut self, side: Side, func: Builtin, args: Vec<Value>) -> R<Value> {
        match func {
            Builtin::Compute => {
                let n = match args.as_slice() {
                    [Value::Int(n)] => (*n).max(0) as u64,
                    _ => return Err(RuntimeError::mismatch("compute(int)".into())),
                };
                let base = n.saturating_mul(self.config.cost.compute_unit_cost);
                let cycles = self.config.cost.local(side, base);
                self.iso_mut(side).ledger.compute += cycles;
                Ok(Value::Unit)
            }
            Builtin::Gc => {
                self.gc_builtin(side);
                Ok(Value::Unit)
            }
            Builtin::Print | Builtin::FileWrite | Builtin::FileRead => match side {
                Side::Untrusted => self.perform_io(func, args),
                Side::Trusted => self.shim_call(func, args),
            },
        }
    }
}
