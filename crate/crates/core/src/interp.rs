//! Reference interpreter for the Python subset.
//!
//! Big-step, deterministic, and total: every loop iteration, statement, and
//! call costs a step against a budget, so evaluation always terminates with
//! one of `ok`, `step-limit`, or `runtime-error`. The transform module uses
//! it as the semantic-equivalence oracle: a variant is accepted only if its
//! [`Outcome`] matches the original's on every oracle input.
//!
//! Values have plain value semantics (lists are copied on assignment, not
//! aliased); `list.append` mutates through an lvalue path. That is narrower
//! than CPython but identical on both sides of every equivalence check.

use crate::frontend::{NodeId, NodeKind, SyntaxTree};
use std::collections::BTreeMap;
use std::fmt;

pub const DEFAULT_STEP_LIMIT: u64 = 100_000;
const MAX_CALL_DEPTH: usize = 200;

/// A runtime value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    None,
    List(Vec<Value>),
    Tuple(Vec<Value>),
    Dict(Vec<(Value, Value)>),
    Range(i64, i64, i64),
    /// User-defined function: index of its function-def node.
    Function(NodeId),
    Builtin(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    StepLimit,
    RuntimeError(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => write!(f, "ok"),
            Status::StepLimit => write!(f, "step-limit"),
            Status::RuntimeError(m) => write!(f, "runtime-error: {m}"),
        }
    }
}

/// Result of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub return_value: Value,
    pub captured_output: String,
    pub steps_used: u64,
    pub status: Status,
}

impl Outcome {
    /// Observable behavior: status, return value, and captured output.
    /// `steps_used` is a budget diagnostic and deliberately excluded, since
    /// equivalent programs may differ in statement count.
    pub fn semantic_eq(&self, other: &Outcome) -> bool {
        self.status == other.status
            && self.return_value == other.return_value
            && self.captured_output == other.captured_output
    }
}

pub const BUILTINS: &[&str] =
    &["range", "len", "print", "abs", "min", "max", "int", "str", "float", "bool"];

/// Run the module body, then call `entry` with `args` if given.
pub fn evaluate(
    tree: &SyntaxTree,
    entry: Option<&str>,
    args: &[Value],
    step_limit: u64,
) -> Outcome {
    let mut interp = Interp {
        tree,
        globals: BTreeMap::new(),
        output: String::new(),
        steps: 0,
        limit: step_limit,
        depth: 0,
    };
    let result = interp.run(entry, args);
    let (return_value, status) = match result {
        Ok(v) => (v, Status::Ok),
        Err(Interrupt::StepLimit) => (Value::None, Status::StepLimit),
        Err(Interrupt::Runtime(m)) => (Value::None, Status::RuntimeError(m)),
    };
    Outcome {
        return_value,
        captured_output: interp.output,
        steps_used: interp.steps,
        status,
    }
}

enum Interrupt {
    Runtime(String),
    StepLimit,
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

type EvalResult<T> = Result<T, Interrupt>;

fn rt(msg: impl Into<String>) -> Interrupt {
    Interrupt::Runtime(msg.into())
}

struct Interp<'t> {
    tree: &'t SyntaxTree,
    globals: BTreeMap<String, Value>,
    output: String,
    steps: u64,
    limit: u64,
    depth: usize,
}

/// Local bindings of the active call; module-level code runs with `None`
/// and reads/writes the globals directly.
struct Scope {
    locals: Option<BTreeMap<String, Value>>,
}

impl<'t> Interp<'t> {
    fn run(&mut self, entry: Option<&str>, args: &[Value]) -> EvalResult<Value> {
        let root = self.tree.root();
        let mut scope = Scope { locals: None };
        match self.exec_suite(root, &mut scope)? {
            Flow::Normal => {}
            _ => return Err(rt("break/continue/return outside a function or loop")),
        }
        match entry {
            None => Ok(Value::None),
            Some(name) => {
                let func = self
                    .globals
                    .get(name)
                    .cloned()
                    .ok_or_else(|| rt(format!("entry function not found: {name}")))?;
                self.call_value(func, args.to_vec())
            }
        }
    }

    fn charge(&mut self) -> EvalResult<()> {
        self.steps += 1;
        if self.steps > self.limit {
            Err(Interrupt::StepLimit)
        } else {
            Ok(())
        }
    }

    fn lookup(&self, scope: &Scope, name: &str) -> EvalResult<Value> {
        if let Some(locals) = &scope.locals {
            if let Some(v) = locals.get(name) {
                return Ok(v.clone());
            }
        }
        if let Some(v) = self.globals.get(name) {
            return Ok(v.clone());
        }
        if BUILTINS.contains(&name) {
            return Ok(Value::Builtin(BUILTINS.iter().find(|b| **b == name).unwrap()));
        }
        Err(rt(format!("unknown name: {name}")))
    }

    fn bind(&mut self, scope: &mut Scope, name: &str, value: Value) {
        match &mut scope.locals {
            Some(locals) => {
                locals.insert(name.to_string(), value);
            }
            None => {
                self.globals.insert(name.to_string(), value);
            }
        }
    }

    // ---- statements ----

    fn exec_suite(&mut self, suite: NodeId, scope: &mut Scope) -> EvalResult<Flow> {
        for &stmt in self.tree.children(suite) {
            match self.exec_stmt(stmt, scope)? {
                Flow::Normal => {}
                flow => return Ok(flow),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_stmt(&mut self, stmt: NodeId, scope: &mut Scope) -> EvalResult<Flow> {
        self.charge()?;
        let ch = self.tree.children(stmt);
        match self.tree.kind(stmt) {
            NodeKind::Assignment => {
                let value = self.eval(ch[2], scope)?;
                self.assign(ch[0], value, scope)?;
                Ok(Flow::Normal)
            }
            NodeKind::AnnotatedAssignment => {
                if ch.len() == 5 {
                    let value = self.eval(ch[4], scope)?;
                    self.assign(ch[0], value, scope)?;
                }
                Ok(Flow::Normal)
            }
            NodeKind::AugmentedAssignment => {
                let op_text = self.tree.text(ch[1]).unwrap();
                let op = &op_text[..op_text.len() - 1]; // strip '='
                let current = self.eval(ch[0], scope)?;
                let rhs = self.eval(ch[2], scope)?;
                let value = self.binary_op(op, current, rhs)?;
                self.assign(ch[0], value, scope)?;
                Ok(Flow::Normal)
            }
            NodeKind::ExpressionStatement => {
                self.eval(ch[0], scope)?;
                Ok(Flow::Normal)
            }
            NodeKind::ReturnStatement => {
                let value = if ch.len() > 1 { self.eval(ch[1], scope)? } else { Value::None };
                Ok(Flow::Return(value))
            }
            NodeKind::BreakStatement => Ok(Flow::Break),
            NodeKind::ContinueStatement => Ok(Flow::Continue),
            NodeKind::PassStatement => Ok(Flow::Normal),
            NodeKind::FunctionDef => {
                let name = self.tree.text(ch[1]).unwrap().to_string();
                self.bind(scope, &name, Value::Function(stmt));
                Ok(Flow::Normal)
            }
            NodeKind::IfStatement => {
                if truthy(&self.eval(ch[1], scope)?) {
                    return self.exec_suite(ch[3], scope);
                }
                for &clause in &ch[4..] {
                    let cch = self.tree.children(clause);
                    match self.tree.kind(clause) {
                        NodeKind::ElifClause => {
                            if truthy(&self.eval(cch[1], scope)?) {
                                return self.exec_suite(cch[3], scope);
                            }
                        }
                        NodeKind::ElseClause => return self.exec_suite(cch[2], scope),
                        _ => unreachable!(),
                    }
                }
                Ok(Flow::Normal)
            }
            NodeKind::WhileStatement => {
                loop {
                    self.charge()?; // one step per iteration check
                    if !truthy(&self.eval(ch[1], scope)?) {
                        break;
                    }
                    match self.exec_suite(ch[3], scope)? {
                        Flow::Normal | Flow::Continue => {}
                        Flow::Break => break,
                        ret @ Flow::Return(_) => return Ok(ret),
                    }
                }
                Ok(Flow::Normal)
            }
            NodeKind::ForStatement => {
                let target = self.tree.text(ch[1]).unwrap().to_string();
                let iterable = self.eval(ch[3], scope)?;
                let items = self.iterate(iterable)?;
                for item in items {
                    self.charge()?;
                    self.bind(scope, &target, item);
                    match self.exec_suite(ch[5], scope)? {
                        Flow::Normal | Flow::Continue => {}
                        Flow::Break => break,
                        ret @ Flow::Return(_) => return Ok(ret),
                    }
                }
                Ok(Flow::Normal)
            }
            other => Err(rt(format!("unsupported statement: {}", other.label()))),
        }
    }

    fn iterate(&mut self, value: Value) -> EvalResult<Vec<Value>> {
        match value {
            Value::List(xs) | Value::Tuple(xs) => Ok(xs),
            Value::Str(s) => Ok(s.chars().map(|c| Value::Str(c.to_string())).collect()),
            Value::Range(start, stop, step) => Ok(range_items(start, stop, step)),
            Value::Dict(pairs) => Ok(pairs.into_iter().map(|(k, _)| k).collect()),
            other => Err(rt(format!("not iterable: {}", type_name(&other)))),
        }
    }

    /// Assign through an identifier or a subscript chain rooted at one.
    fn assign(&mut self, target: NodeId, value: Value, scope: &mut Scope) -> EvalResult<()> {
        match self.tree.kind(target) {
            NodeKind::Identifier => {
                let name = self.tree.text(target).unwrap().to_string();
                self.bind(scope, &name, value);
                Ok(())
            }
            NodeKind::Subscript => {
                let (root, indices) = self.lvalue_path(target, scope)?;
                let slot = self.resolve_slot(&root, &indices, scope)?;
                *slot = value;
                Ok(())
            }
            NodeKind::Attribute => Err(rt("cannot assign to attribute")),
            other => Err(rt(format!("invalid assignment target: {}", other.label()))),
        }
    }

    /// Flatten `a[i][j]...` into the root name plus evaluated indices.
    fn lvalue_path(
        &mut self,
        node: NodeId,
        scope: &mut Scope,
    ) -> EvalResult<(String, Vec<Value>)> {
        match self.tree.kind(node) {
            NodeKind::Identifier => Ok((self.tree.text(node).unwrap().to_string(), Vec::new())),
            NodeKind::Subscript => {
                let ch = self.tree.children(node).to_vec();
                let (root, mut indices) = self.lvalue_path(ch[0], scope)?;
                indices.push(self.eval(ch[2], scope)?);
                Ok((root, indices))
            }
            other => Err(rt(format!("invalid assignment target: {}", other.label()))),
        }
    }

    /// Mutable slot for `root[idx0][idx1]...`. The last index may create a
    /// new dict entry; everything before it must already exist.
    fn resolve_slot<'a>(
        &'a mut self,
        root: &str,
        indices: &[Value],
        scope: &'a mut Scope,
    ) -> EvalResult<&'a mut Value> {
        let map = match &mut scope.locals {
            Some(locals) if locals.contains_key(root) => locals,
            _ => &mut self.globals,
        };
        let mut slot = map
            .get_mut(root)
            .ok_or_else(|| rt(format!("unknown name: {root}")))?;
        for (i, idx) in indices.iter().enumerate() {
            let last = i + 1 == indices.len();
            slot = match slot {
                Value::List(xs) => {
                    let k = list_index(idx, xs.len())?;
                    &mut xs[k]
                }
                Value::Dict(pairs) => {
                    if let Some(pos) = pairs.iter().position(|(k, _)| k == idx) {
                        &mut pairs[pos].1
                    } else if last {
                        pairs.push((idx.clone(), Value::None));
                        let end = pairs.len() - 1;
                        &mut pairs[end].1
                    } else {
                        return Err(rt(format!("key error: {}", py_repr(idx))));
                    }
                }
                other => {
                    return Err(rt(format!("not subscript-assignable: {}", type_name(other))))
                }
            };
        }
        Ok(slot)
    }

    // ---- expressions ----

    fn eval(&mut self, node: NodeId, scope: &mut Scope) -> EvalResult<Value> {
        let ch = self.tree.children(node);
        match self.tree.kind(node) {
            NodeKind::IntLiteral => self
                .tree
                .text(node)
                .unwrap()
                .parse::<i64>()
                .map(Value::Int)
                .map_err(|_| rt("integer literal out of range")),
            NodeKind::FloatLiteral => self
                .tree
                .text(node)
                .unwrap()
                .parse::<f64>()
                .map(Value::Float)
                .map_err(|_| rt("malformed float literal")),
            NodeKind::StringLiteral => Ok(Value::Str(unescape(self.tree.text(node).unwrap()))),
            NodeKind::BoolLiteral => Ok(Value::Bool(self.tree.text(node).unwrap() == "True")),
            NodeKind::NoneLiteral => Ok(Value::None),
            NodeKind::Identifier => self.lookup(scope, self.tree.text(node).unwrap()),
            NodeKind::List => {
                let mut items = Vec::new();
                for &c in ch {
                    if self.tree.kind(c) != NodeKind::Operator {
                        items.push(self.eval(c, scope)?);
                    }
                }
                Ok(Value::List(items))
            }
            NodeKind::Tuple => {
                let elems: Vec<NodeId> = ch
                    .iter()
                    .copied()
                    .filter(|&c| self.tree.kind(c) != NodeKind::Operator)
                    .collect();
                let mut items = Vec::new();
                for c in elems {
                    items.push(self.eval(c, scope)?);
                }
                Ok(Value::Tuple(items))
            }
            NodeKind::Dict => {
                let mut pairs = Vec::new();
                for &c in ch {
                    if self.tree.kind(c) == NodeKind::Pair {
                        let pch = self.tree.children(c);
                        let k = self.eval(pch[0], scope)?;
                        let v = self.eval(pch[2], scope)?;
                        if let Some(pos) = pairs.iter().position(|(pk, _)| *pk == k) {
                            pairs[pos] = (k, v);
                        } else {
                            pairs.push((k, v));
                        }
                    }
                }
                Ok(Value::Dict(pairs))
            }
            NodeKind::BooleanOperator => {
                let op = self.tree.text(ch[1]).unwrap();
                let lhs = self.eval(ch[0], scope)?;
                match (op, truthy(&lhs)) {
                    ("and", false) | ("or", true) => Ok(lhs),
                    _ => self.eval(ch[2], scope),
                }
            }
            NodeKind::UnaryOperator => {
                let op = self.tree.text(ch[0]).unwrap();
                let operand = self.eval(ch[1], scope)?;
                match op {
                    "not" => Ok(Value::Bool(!truthy(&operand))),
                    "-" => match operand {
                        Value::Int(i) => i
                            .checked_neg()
                            .map(Value::Int)
                            .ok_or_else(|| rt("integer overflow")),
                        Value::Float(f) => Ok(Value::Float(-f)),
                        Value::Bool(b) => Ok(Value::Int(-(b as i64))),
                        other => Err(rt(format!("cannot negate {}", type_name(&other)))),
                    },
                    _ => Err(rt(format!("unknown unary operator: {op}"))),
                }
            }
            NodeKind::BinaryOperator => {
                let op = self.tree.text(ch[1]).unwrap().to_string();
                let lhs = self.eval(ch[0], scope)?;
                let rhs = self.eval(ch[2], scope)?;
                self.binary_op(&op, lhs, rhs)
            }
            NodeKind::Comparison => {
                let op = self.tree.text(ch[1]).unwrap().to_string();
                let lhs = self.eval(ch[0], scope)?;
                let rhs = self.eval(ch[2], scope)?;
                compare(&op, &lhs, &rhs).map(Value::Bool)
            }
            NodeKind::Subscript => {
                let obj = self.eval(ch[0], scope)?;
                let idx = self.eval(ch[2], scope)?;
                subscript(&obj, &idx)
            }
            NodeKind::Attribute => {
                // bare attribute reads have no object model behind them;
                // method calls are handled in Call
                Err(rt("attribute access is only supported as a method call"))
            }
            NodeKind::Call => self.eval_call(node, scope),
            other => Err(rt(format!("unsupported expression: {}", other.label()))),
        }
    }

    fn eval_call(&mut self, node: NodeId, scope: &mut Scope) -> EvalResult<Value> {
        let ch = self.tree.children(node).to_vec();
        let callee = ch[0];
        let args = self.eval_args(ch[1], scope)?;
        // method-call form: obj.name(args)
        if self.tree.kind(callee) == NodeKind::Attribute {
            let ach = self.tree.children(callee).to_vec();
            let method = self.tree.text(ach[2]).unwrap().to_string();
            return self.call_method(ach[0], &method, args, scope);
        }
        let func = self.eval(callee, scope)?;
        self.call_value(func, args)
    }

    fn eval_args(&mut self, arglist: NodeId, scope: &mut Scope) -> EvalResult<Vec<Value>> {
        let mut args = Vec::new();
        for &a in self.tree.children(arglist) {
            if self.tree.kind(a) != NodeKind::Operator {
                args.push(self.eval(a, scope)?);
            }
        }
        Ok(args)
    }

    fn call_method(
        &mut self,
        receiver: NodeId,
        method: &str,
        mut args: Vec<Value>,
        scope: &mut Scope,
    ) -> EvalResult<Value> {
        self.charge()?;
        match method {
            "append" => {
                if args.len() != 1 {
                    return Err(rt("append expects exactly one argument"));
                }
                let (root, indices) = self.lvalue_path(receiver, scope)?;
                let slot = self.resolve_slot(&root, &indices, scope)?;
                match slot {
                    Value::List(xs) => {
                        xs.push(args.pop().unwrap());
                        Ok(Value::None)
                    }
                    other => Err(rt(format!("append on non-list: {}", type_name(other)))),
                }
            }
            other => Err(rt(format!("unknown method: {other}"))),
        }
    }

    fn call_value(&mut self, func: Value, args: Vec<Value>) -> EvalResult<Value> {
        self.charge()?;
        match func {
            Value::Builtin(name) => self.call_builtin(name, args),
            Value::Function(def) => {
                if self.depth >= MAX_CALL_DEPTH {
                    return Err(rt("recursion depth exceeded"));
                }
                let ch = self.tree.children(def).to_vec();
                let name = self.tree.text(ch[1]).unwrap();
                let params: Vec<String> = self
                    .tree
                    .children(ch[2])
                    .iter()
                    .filter(|&&p| self.tree.kind(p) == NodeKind::Identifier)
                    .map(|&p| self.tree.text(p).unwrap().to_string())
                    .collect();
                if params.len() != args.len() {
                    return Err(rt(format!(
                        "{name} expects {} arguments, got {}",
                        params.len(),
                        args.len()
                    )));
                }
                let mut locals = BTreeMap::new();
                for (p, a) in params.into_iter().zip(args) {
                    locals.insert(p, a);
                }
                let mut scope = Scope { locals: Some(locals) };
                self.depth += 1;
                let flow = self.exec_suite(ch[4], &mut scope);
                self.depth -= 1;
                match flow? {
                    Flow::Return(v) => Ok(v),
                    Flow::Normal => Ok(Value::None),
                    _ => Err(rt("break/continue outside a loop")),
                }
            }
            other => Err(rt(format!("not callable: {}", type_name(&other)))),
        }
    }

    fn call_builtin(&mut self, name: &str, args: Vec<Value>) -> EvalResult<Value> {
        match name {
            "print" => {
                let rendered: Vec<String> = args.iter().map(py_str).collect();
                self.output.push_str(&rendered.join(" "));
                self.output.push('\n');
                Ok(Value::None)
            }
            "range" => {
                let ints: Vec<i64> = args
                    .iter()
                    .map(|v| match v {
                        Value::Int(i) => Ok(*i),
                        Value::Bool(b) => Ok(*b as i64),
                        other => Err(rt(format!("range expects ints, got {}", type_name(other)))),
                    })
                    .collect::<EvalResult<_>>()?;
                match ints.as_slice() {
                    [stop] => Ok(Value::Range(0, *stop, 1)),
                    [start, stop] => Ok(Value::Range(*start, *stop, 1)),
                    [start, stop, step] => {
                        if *step == 0 {
                            Err(rt("range step must not be zero"))
                        } else {
                            Ok(Value::Range(*start, *stop, *step))
                        }
                    }
                    _ => Err(rt("range expects 1 to 3 arguments")),
                }
            }
            "len" => match args.as_slice() {
                [Value::Str(s)] => Ok(Value::Int(s.chars().count() as i64)),
                [Value::List(xs)] | [Value::Tuple(xs)] => Ok(Value::Int(xs.len() as i64)),
                [Value::Dict(pairs)] => Ok(Value::Int(pairs.len() as i64)),
                [Value::Range(start, stop, step)] => {
                    Ok(Value::Int(range_len(*start, *stop, *step)))
                }
                [other] => Err(rt(format!("len of {}", type_name(other)))),
                _ => Err(rt("len expects exactly one argument")),
            },
            "abs" => match args.as_slice() {
                [Value::Int(i)] => {
                    i.checked_abs().map(Value::Int).ok_or_else(|| rt("integer overflow"))
                }
                [Value::Float(f)] => Ok(Value::Float(f.abs())),
                [Value::Bool(b)] => Ok(Value::Int(*b as i64)),
                _ => Err(rt("abs expects one numeric argument")),
            },
            "min" | "max" => {
                let items: Vec<Value> = match args.as_slice() {
                    [] => return Err(rt(format!("{name} expects at least one argument"))),
                    [only] => self.iterate(only.clone())?,
                    many => many.to_vec(),
                };
                if items.is_empty() {
                    return Err(rt(format!("{name} of empty sequence")));
                }
                let mut best = items[0].clone();
                for item in &items[1..] {
                    let swap = if name == "min" {
                        compare("<", item, &best)?
                    } else {
                        compare(">", item, &best)?
                    };
                    if swap {
                        best = item.clone();
                    }
                }
                Ok(best)
            }
            "int" => match args.as_slice() {
                [Value::Int(i)] => Ok(Value::Int(*i)),
                [Value::Bool(b)] => Ok(Value::Int(*b as i64)),
                [Value::Float(f)] => Ok(Value::Int(f.trunc() as i64)),
                [Value::Str(s)] => s
                    .trim()
                    .parse::<i64>()
                    .map(Value::Int)
                    .map_err(|_| rt(format!("invalid int literal: {s:?}"))),
                _ => Err(rt("int expects one argument")),
            },
            "float" => match args.as_slice() {
                [Value::Int(i)] => Ok(Value::Float(*i as f64)),
                [Value::Bool(b)] => Ok(Value::Float(*b as i64 as f64)),
                [Value::Float(f)] => Ok(Value::Float(*f)),
                [Value::Str(s)] => s
                    .trim()
                    .parse::<f64>()
                    .map(Value::Float)
                    .map_err(|_| rt(format!("invalid float literal: {s:?}"))),
                _ => Err(rt("float expects one argument")),
            },
            "str" => match args.as_slice() {
                [v] => Ok(Value::Str(py_str(v))),
                _ => Err(rt("str expects one argument")),
            },
            "bool" => match args.as_slice() {
                [v] => Ok(Value::Bool(truthy(v))),
                _ => Err(rt("bool expects one argument")),
            },
            other => Err(rt(format!("unknown builtin: {other}"))),
        }
    }

    fn binary_op(&mut self, op: &str, lhs: Value, rhs: Value) -> EvalResult<Value> {
        use Value::*;
        // bool participates in arithmetic as an int
        let lhs = if let Bool(b) = lhs { Int(b as i64) } else { lhs };
        let rhs = if let Bool(b) = rhs { Int(b as i64) } else { rhs };
        match (op, &lhs, &rhs) {
            ("+", Str(a), Str(b)) => Ok(Str(format!("{a}{b}"))),
            ("+", List(a), List(b)) => {
                let mut out = a.clone();
                out.extend(b.iter().cloned());
                Ok(List(out))
            }
            ("+", Tuple(a), Tuple(b)) => {
                let mut out = a.clone();
                out.extend(b.iter().cloned());
                Ok(Tuple(out))
            }
            ("*", Str(s), Int(n)) | ("*", Int(n), Str(s)) => {
                Ok(Str(s.repeat((*n).max(0) as usize)))
            }
            ("*", List(xs), Int(n)) | ("*", Int(n), List(xs)) => {
                let mut out = Vec::new();
                for _ in 0..(*n).max(0) {
                    out.extend(xs.iter().cloned());
                }
                Ok(List(out))
            }
            (_, Int(a), Int(b)) => int_arith(op, *a, *b),
            (_, Float(_), Int(_)) | (_, Int(_), Float(_)) | (_, Float(_), Float(_)) => {
                let a = as_f64(&lhs).unwrap();
                let b = as_f64(&rhs).unwrap();
                float_arith(op, a, b)
            }
            _ => Err(rt(format!(
                "unsupported operand types for {op}: {} and {}",
                type_name(&lhs),
                type_name(&rhs)
            ))),
        }
    }
}

fn int_arith(op: &str, a: i64, b: i64) -> EvalResult<Value> {
    use Value::*;
    let overflow = || rt("integer overflow");
    match op {
        "+" => a.checked_add(b).map(Int).ok_or_else(overflow),
        "-" => a.checked_sub(b).map(Int).ok_or_else(overflow),
        "*" => a.checked_mul(b).map(Int).ok_or_else(overflow),
        "/" => {
            if b == 0 {
                Err(rt("division by zero"))
            } else {
                Ok(Float(a as f64 / b as f64))
            }
        }
        "//" => {
            if b == 0 {
                Err(rt("division by zero"))
            } else {
                Ok(Int(a.div_euclid(b) - if a.rem_euclid(b) != 0 && b < 0 { 1 } else { 0 }))
            }
        }
        "%" => {
            if b == 0 {
                Err(rt("division by zero"))
            } else {
                Ok(Int(py_mod_i64(a, b)))
            }
        }
        "**" => {
            if b < 0 {
                Ok(Float((a as f64).powf(b as f64)))
            } else {
                let exp = u32::try_from(b).map_err(|_| rt("exponent too large"))?;
                a.checked_pow(exp).map(Int).ok_or_else(overflow)
            }
        }
        other => Err(rt(format!("unknown operator: {other}"))),
    }
}

fn float_arith(op: &str, a: f64, b: f64) -> EvalResult<Value> {
    use Value::*;
    match op {
        "+" => Ok(Float(a + b)),
        "-" => Ok(Float(a - b)),
        "*" => Ok(Float(a * b)),
        "/" => {
            if b == 0.0 {
                Err(rt("division by zero"))
            } else {
                Ok(Float(a / b))
            }
        }
        "//" => {
            if b == 0.0 {
                Err(rt("division by zero"))
            } else {
                Ok(Float((a / b).floor()))
            }
        }
        "%" => {
            if b == 0.0 {
                Err(rt("division by zero"))
            } else {
                let m = a % b;
                Ok(Float(if m != 0.0 && (m < 0.0) != (b < 0.0) { m + b } else { m }))
            }
        }
        "**" => Ok(Float(a.powf(b))),
        other => Err(rt(format!("unknown operator: {other}"))),
    }
}

/// Python floor-mod: the result takes the sign of the divisor.
fn py_mod_i64(a: i64, b: i64) -> i64 {
    let m = a % b;
    if m != 0 && (m < 0) != (b < 0) {
        m + b
    } else {
        m
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        Value::Bool(b) => Some(*b as i64 as f64),
        _ => None,
    }
}

fn compare(op: &str, lhs: &Value, rhs: &Value) -> EvalResult<bool> {
    match op {
        "==" => Ok(value_eq(lhs, rhs)),
        "!=" => Ok(!value_eq(lhs, rhs)),
        _ => {
            let ord = match (as_f64(lhs), as_f64(rhs)) {
                (Some(a), Some(b)) => a.partial_cmp(&b),
                _ => match (lhs, rhs) {
                    (Value::Str(a), Value::Str(b)) => Some(a.cmp(b)),
                    _ => None,
                },
            };
            let ord = ord.ok_or_else(|| {
                rt(format!(
                    "cannot order {} and {}",
                    type_name(lhs),
                    type_name(rhs)
                ))
            })?;
            Ok(match op {
                "<" => ord == std::cmp::Ordering::Less,
                ">" => ord == std::cmp::Ordering::Greater,
                "<=" => ord != std::cmp::Ordering::Greater,
                ">=" => ord != std::cmp::Ordering::Less,
                _ => return Err(rt(format!("unknown comparison: {op}"))),
            })
        }
    }
}

/// Equality with numeric coercion, mirroring Python (`1 == 1.0`, `True == 1`).
fn value_eq(lhs: &Value, rhs: &Value) -> bool {
    if let (Some(a), Some(b)) = (as_f64(lhs), as_f64(rhs)) {
        if matches!(lhs, Value::Int(_) | Value::Float(_) | Value::Bool(_))
            && matches!(rhs, Value::Int(_) | Value::Float(_) | Value::Bool(_))
        {
            return a == b;
        }
    }
    match (lhs, rhs) {
        (Value::List(a), Value::List(b)) | (Value::Tuple(a), Value::Tuple(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| value_eq(x, y))
        }
        (Value::Dict(a), Value::Dict(b)) => {
            a.len() == b.len()
                && a.iter().all(|(k, v)| {
                    b.iter().any(|(k2, v2)| value_eq(k, k2) && value_eq(v, v2))
                })
        }
        _ => lhs == rhs,
    }
}

fn subscript(obj: &Value, idx: &Value) -> EvalResult<Value> {
    match obj {
        Value::List(xs) | Value::Tuple(xs) => {
            let k = list_index(idx, xs.len())?;
            Ok(xs[k].clone())
        }
        Value::Str(s) => {
            let chars: Vec<char> = s.chars().collect();
            let k = list_index(idx, chars.len())?;
            Ok(Value::Str(chars[k].to_string()))
        }
        Value::Dict(pairs) => pairs
            .iter()
            .find(|(k, _)| value_eq(k, idx))
            .map(|(_, v)| v.clone())
            .ok_or_else(|| rt(format!("key error: {}", py_repr(idx)))),
        other => Err(rt(format!("not subscriptable: {}", type_name(other)))),
    }
}

/// Normalize a (possibly negative) index against `len`, Python style.
fn list_index(idx: &Value, len: usize) -> EvalResult<usize> {
    let i = match idx {
        Value::Int(i) => *i,
        Value::Bool(b) => *b as i64,
        other => return Err(rt(format!("index must be int, got {}", type_name(other)))),
    };
    let adjusted = if i < 0 { i + len as i64 } else { i };
    if adjusted < 0 || adjusted as usize >= len {
        Err(rt(format!("index out of range: {i}")))
    } else {
        Ok(adjusted as usize)
    }
}

fn range_items(start: i64, stop: i64, step: i64) -> Vec<Value> {
    let mut out = Vec::new();
    let mut i = start;
    if step > 0 {
        while i < stop {
            out.push(Value::Int(i));
            i += step;
        }
    } else {
        while i > stop {
            out.push(Value::Int(i));
            i += step;
        }
    }
    out
}

fn range_len(start: i64, stop: i64, step: i64) -> i64 {
    if step > 0 {
        ((stop - start).max(0) + step - 1) / step
    } else {
        ((start - stop).max(0) + (-step) - 1) / (-step)
    }
}

pub fn truthy(v: &Value) -> bool {
    match v {
        Value::Bool(b) => *b,
        Value::Int(i) => *i != 0,
        Value::Float(f) => *f != 0.0,
        Value::Str(s) => !s.is_empty(),
        Value::None => false,
        Value::List(xs) | Value::Tuple(xs) => !xs.is_empty(),
        Value::Dict(pairs) => !pairs.is_empty(),
        Value::Range(start, stop, step) => range_len(*start, *stop, *step) > 0,
        Value::Function(_) | Value::Builtin(_) => true,
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Int(_) => "int",
        Value::Float(_) => "float",
        Value::Str(_) => "str",
        Value::Bool(_) => "bool",
        Value::None => "NoneType",
        Value::List(_) => "list",
        Value::Tuple(_) => "tuple",
        Value::Dict(_) => "dict",
        Value::Range(..) => "range",
        Value::Function(_) => "function",
        Value::Builtin(_) => "builtin",
    }
}

/// Strip quotes and process escape sequences of a raw string-literal token.
fn unescape(raw: &str) -> String {
    let inner = if raw.len() >= 6 && (raw.starts_with("\"\"\"") || raw.starts_with("'''")) {
        &raw[3..raw.len() - 3]
    } else {
        &raw[1..raw.len() - 1]
    };
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some('\'') => out.push('\''),
            Some('"') => out.push('"'),
            Some('0') => out.push('\0'),
            Some(other) => {
                // unknown escapes stay literal, as in CPython
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// `str()`-style rendering: strings bare, floats with a trailing `.0` kept.
pub fn py_str(v: &Value) -> String {
    match v {
        Value::Str(s) => s.clone(),
        other => py_repr(other),
    }
}

/// `repr()`-style rendering used inside containers.
pub fn py_repr(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Bool(true) => "True".to_string(),
        Value::Bool(false) => "False".to_string(),
        Value::None => "None".to_string(),
        Value::Str(s) => {
            if s.contains('\'') && !s.contains('"') {
                format!("\"{}\"", escape_str(s, '"'))
            } else {
                format!("'{}'", escape_str(s, '\''))
            }
        }
        Value::List(xs) => {
            let inner: Vec<String> = xs.iter().map(py_repr).collect();
            format!("[{}]", inner.join(", "))
        }
        Value::Tuple(xs) => {
            let inner: Vec<String> = xs.iter().map(py_repr).collect();
            if xs.len() == 1 {
                format!("({},)", inner[0])
            } else {
                format!("({})", inner.join(", "))
            }
        }
        Value::Dict(pairs) => {
            let inner: Vec<String> =
                pairs.iter().map(|(k, v)| format!("{}: {}", py_repr(k), py_repr(v))).collect();
            format!("{{{}}}", inner.join(", "))
        }
        Value::Range(start, stop, step) => {
            if *step == 1 {
                format!("range({start}, {stop})")
            } else {
                format!("range({start}, {stop}, {step})")
            }
        }
        Value::Function(_) => "<function>".to_string(),
        Value::Builtin(name) => format!("<built-in function {name}>"),
    }
}

fn escape_str(s: &str, quote: char) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}
