//! Fine-grained type labeling of identifier tokens and a from-scratch BPE
//! subword tokenizer with subtoken label inheritance.
//!
//! The inferencer is rule-based and flow-insensitive: annotations dominate,
//! literal assignments type their target, arithmetic propagates (any float
//! operand makes the result float, `str + str` stays str), builtin calls use
//! a fixed signature table, and conflicting evidence collapses to `unknown`.
//! Every identifier occurrence is labeled; everything else gets the `O`
//! sentinel, which is excluded from the type-inference training loss.

use crate::frontend::{NodeId, NodeKind, SyntaxTree};
use crate::interp::BUILTINS;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------
// type vocabulary
// ---------------------------------------------------------------------

/// The label set: ten type classes plus the non-identifier sentinel `O`.
/// Class indices are stable; `O` sits past the classifier range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TypeLabel {
    Int,
    Float,
    Str,
    Bool,
    NoneType,
    List,
    Tuple,
    Dict,
    Callable,
    Unknown,
    O,
}

/// Number of classifier classes (everything except `O`).
pub const TYPE_CLASS_COUNT: usize = 10;

impl TypeLabel {
    pub const ALL: [TypeLabel; 11] = [
        TypeLabel::Int,
        TypeLabel::Float,
        TypeLabel::Str,
        TypeLabel::Bool,
        TypeLabel::NoneType,
        TypeLabel::List,
        TypeLabel::Tuple,
        TypeLabel::Dict,
        TypeLabel::Callable,
        TypeLabel::Unknown,
        TypeLabel::O,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|l| *l == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<TypeLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TypeLabel::Int => "int",
            TypeLabel::Float => "float",
            TypeLabel::Str => "str",
            TypeLabel::Bool => "bool",
            TypeLabel::NoneType => "none",
            TypeLabel::List => "list",
            TypeLabel::Tuple => "tuple",
            TypeLabel::Dict => "dict",
            TypeLabel::Callable => "callable",
            TypeLabel::Unknown => "unknown",
            TypeLabel::O => "O",
        }
    }

    pub fn from_name(name: &str) -> Option<TypeLabel> {
        Self::ALL.iter().copied().find(|l| l.name() == name)
    }
}

/// PL tokens with one label per token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedTokenSequence {
    pub tokens: Vec<String>,
    pub labels: Vec<TypeLabel>,
}

// ---------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Bottom,
    Ty(TypeLabel),
    Conflict,
}

impl Ev {
    fn join(self, other: Ev) -> Ev {
        match (self, other) {
            (Ev::Bottom, x) | (x, Ev::Bottom) => x,
            (Ev::Ty(a), Ev::Ty(b)) if a == b => Ev::Ty(a),
            _ => Ev::Conflict,
        }
    }

    fn label(self) -> TypeLabel {
        match self {
            Ev::Ty(t) => t,
            _ => TypeLabel::Unknown,
        }
    }
}

struct ScopeInfo {
    parent: Option<usize>,
    bound: BTreeMap<String, ()>,
}

struct Inference<'t> {
    tree: &'t SyntaxTree,
    scopes: Vec<ScopeInfo>,
    scope_of_def: BTreeMap<NodeId, usize>,
    annotations: BTreeMap<(usize, String), Ev>,
    env: BTreeMap<(usize, String), Ev>,
}

/// Label every PL token of the tree. Deterministic and idempotent.
pub fn infer_types(tree: &SyntaxTree) -> TypedTokenSequence {
    let mut inf = Inference {
        tree,
        scopes: vec![ScopeInfo { parent: None, bound: BTreeMap::new() }],
        scope_of_def: BTreeMap::new(),
        annotations: BTreeMap::new(),
        env: BTreeMap::new(),
    };
    inf.collect_scopes(tree.root(), 0);
    inf.collect_annotations(tree.root(), 0);
    // evidence fixpoint: recompute from syntax under the previous env until
    // stable; the lattice has height 2 so this converges quickly
    for _ in 0..32 {
        let mut next = BTreeMap::new();
        inf.collect_evidence(tree.root(), 0, &mut next);
        if next == inf.env {
            break;
        }
        inf.env = next;
    }
    let mut tokens = Vec::new();
    let mut labels = Vec::new();
    inf.emit(tree.root(), 0, false, &mut tokens, &mut labels);
    TypedTokenSequence { tokens, labels }
}

impl<'t> Inference<'t> {
    // pass A: scopes and bound names
    fn collect_scopes(&mut self, node: NodeId, scope: usize) {
        let ch = self.tree.children(node).to_vec();
        match self.tree.kind(node) {
            NodeKind::FunctionDef => {
                let name = self.tree.text(ch[1]).unwrap().to_string();
                self.scopes[scope].bound.insert(name, ());
                let child = self.scopes.len();
                self.scopes.push(ScopeInfo { parent: Some(scope), bound: BTreeMap::new() });
                self.scope_of_def.insert(node, child);
                for &p in self.tree.children(ch[2]) {
                    if self.tree.kind(p) == NodeKind::Identifier {
                        let pname = self.tree.text(p).unwrap().to_string();
                        self.scopes[child].bound.insert(pname, ());
                    }
                }
                self.collect_scopes(ch[4], child);
            }
            NodeKind::Assignment | NodeKind::AnnotatedAssignment | NodeKind::AugmentedAssignment => {
                if self.tree.kind(ch[0]) == NodeKind::Identifier {
                    let name = self.tree.text(ch[0]).unwrap().to_string();
                    self.scopes[scope].bound.insert(name, ());
                }
                for &c in &ch {
                    self.collect_scopes(c, scope);
                }
            }
            NodeKind::ForStatement => {
                let name = self.tree.text(ch[1]).unwrap().to_string();
                self.scopes[scope].bound.insert(name, ());
                for &c in &ch {
                    self.collect_scopes(c, scope);
                }
            }
            _ => {
                for &c in &ch {
                    self.collect_scopes(c, scope);
                }
            }
        }
    }

    /// Innermost scope (starting at `scope`) that binds `name`.
    fn binding_scope(&self, scope: usize, name: &str) -> Option<usize> {
        let mut cur = Some(scope);
        while let Some(s) = cur {
            if self.scopes[s].bound.contains_key(name) {
                return Some(s);
            }
            cur = self.scopes[s].parent;
        }
        None
    }

    fn annotation_label(&self, node: NodeId) -> Option<TypeLabel> {
        match self.tree.kind(node) {
            NodeKind::Identifier => match self.tree.text(node).unwrap() {
                "int" => Some(TypeLabel::Int),
                "float" => Some(TypeLabel::Float),
                "str" => Some(TypeLabel::Str),
                "bool" => Some(TypeLabel::Bool),
                "list" => Some(TypeLabel::List),
                "tuple" => Some(TypeLabel::Tuple),
                "dict" => Some(TypeLabel::Dict),
                _ => None,
            },
            NodeKind::NoneLiteral => Some(TypeLabel::NoneType),
            _ => None,
        }
    }

    // pass B: annotations dominate all other evidence
    fn collect_annotations(&mut self, node: NodeId, scope: usize) {
        let ch = self.tree.children(node).to_vec();
        match self.tree.kind(node) {
            NodeKind::FunctionDef => {
                let child = self.scope_of_def[&node];
                self.collect_annotations(ch[4], child);
            }
            NodeKind::AnnotatedAssignment => {
                if self.tree.kind(ch[0]) == NodeKind::Identifier {
                    let name = self.tree.text(ch[0]).unwrap().to_string();
                    if let Some(label) = self.annotation_label(ch[2]) {
                        let key = (scope, name);
                        let ev = self.annotations.get(&key).copied().unwrap_or(Ev::Bottom);
                        self.annotations.insert(key, ev.join(Ev::Ty(label)));
                    }
                }
            }
            _ => {
                for &c in &ch {
                    self.collect_annotations(c, scope);
                }
            }
        }
    }

    // pass C (iterated): assignment evidence under the previous env
    fn collect_evidence(&self, node: NodeId, scope: usize, out: &mut BTreeMap<(usize, String), Ev>) {
        let ch = self.tree.children(node).to_vec();
        let add = |key: (usize, String), ev: Ev, out: &mut BTreeMap<(usize, String), Ev>| {
            if ev == Ev::Bottom {
                return;
            }
            let cur = out.get(&key).copied().unwrap_or(Ev::Bottom);
            out.insert(key, cur.join(ev));
        };
        match self.tree.kind(node) {
            NodeKind::FunctionDef => {
                let name = self.tree.text(ch[1]).unwrap().to_string();
                add((scope, name), Ev::Ty(TypeLabel::Callable), out);
                let child = self.scope_of_def[&node];
                self.collect_evidence(ch[4], child, out);
            }
            NodeKind::Assignment => {
                if self.tree.kind(ch[0]) == NodeKind::Identifier {
                    let name = self.tree.text(ch[0]).unwrap().to_string();
                    let ty = self.expr_type(ch[2], scope);
                    add((scope, name), ty.map_or(Ev::Bottom, Ev::Ty), out);
                }
                self.collect_evidence(ch[2], scope, out);
            }
            NodeKind::AnnotatedAssignment => {
                if ch.len() == 5 {
                    if self.tree.kind(ch[0]) == NodeKind::Identifier {
                        let name = self.tree.text(ch[0]).unwrap().to_string();
                        let ty = self.expr_type(ch[4], scope);
                        add((scope, name), ty.map_or(Ev::Bottom, Ev::Ty), out);
                    }
                    self.collect_evidence(ch[4], scope, out);
                }
            }
            NodeKind::AugmentedAssignment => {
                if self.tree.kind(ch[0]) == NodeKind::Identifier {
                    let name = self.tree.text(ch[0]).unwrap().to_string();
                    let op_text = self.tree.text(ch[1]).unwrap();
                    let op = &op_text[..op_text.len() - 1];
                    let lhs = self.ident_type(ch[0], scope);
                    let rhs = self.expr_type(ch[2], scope);
                    let ty = binary_result(op, lhs, rhs);
                    add((scope, name), ty.map_or(Ev::Bottom, Ev::Ty), out);
                }
                self.collect_evidence(ch[2], scope, out);
            }
            NodeKind::ForStatement => {
                let name = self.tree.text(ch[1]).unwrap().to_string();
                let ty = self.iteration_type(ch[3], scope);
                add((scope, name), ty.map_or(Ev::Bottom, Ev::Ty), out);
                self.collect_evidence(ch[3], scope, out);
                self.collect_evidence(ch[5], scope, out);
            }
            _ => {
                for &c in &ch {
                    self.collect_evidence(c, scope, out);
                }
            }
        }
    }

    fn ident_type(&self, node: NodeId, scope: usize) -> Option<TypeLabel> {
        let name = self.tree.text(node).unwrap();
        match self.binding_scope(scope, name) {
            Some(s) => {
                let key = (s, name.to_string());
                if let Some(ev) = self.annotations.get(&key) {
                    return match ev {
                        Ev::Ty(t) => Some(*t),
                        _ => None,
                    };
                }
                match self.env.get(&key) {
                    Some(Ev::Ty(t)) => Some(*t),
                    _ => None,
                }
            }
            None if BUILTINS.contains(&name) => Some(TypeLabel::Callable),
            None => None,
        }
    }

    /// Element type when iterating over the expression.
    fn iteration_type(&self, node: NodeId, scope: usize) -> Option<TypeLabel> {
        if let Some("range") = self.call_to_builtin(node, scope) {
            return Some(TypeLabel::Int);
        }
        match self.expr_type(node, scope) {
            Some(TypeLabel::Str) => Some(TypeLabel::Str),
            _ => None,
        }
    }

    /// `Some(name)` when the node is a call to an unshadowed builtin.
    fn call_to_builtin(&self, node: NodeId, scope: usize) -> Option<&'static str> {
        if self.tree.kind(node) != NodeKind::Call {
            return None;
        }
        let callee = self.tree.children(node)[0];
        if self.tree.kind(callee) != NodeKind::Identifier {
            return None;
        }
        let name = self.tree.text(callee).unwrap();
        if self.binding_scope(scope, name).is_some() {
            return None;
        }
        BUILTINS.iter().copied().find(|b| *b == name)
    }

    fn expr_type(&self, node: NodeId, scope: usize) -> Option<TypeLabel> {
        let ch = self.tree.children(node);
        match self.tree.kind(node) {
            NodeKind::IntLiteral => Some(TypeLabel::Int),
            NodeKind::FloatLiteral => Some(TypeLabel::Float),
            NodeKind::StringLiteral => Some(TypeLabel::Str),
            NodeKind::BoolLiteral => Some(TypeLabel::Bool),
            NodeKind::NoneLiteral => Some(TypeLabel::NoneType),
            NodeKind::List => Some(TypeLabel::List),
            NodeKind::Tuple => Some(TypeLabel::Tuple),
            NodeKind::Dict => Some(TypeLabel::Dict),
            NodeKind::Identifier => self.ident_type(node, scope),
            NodeKind::Comparison => Some(TypeLabel::Bool),
            NodeKind::BooleanOperator => {
                let a = self.expr_type(ch[0], scope);
                let b = self.expr_type(ch[2], scope);
                if a == b {
                    a
                } else {
                    None
                }
            }
            NodeKind::UnaryOperator => {
                let op = self.tree.text(ch[0]).unwrap();
                if op == "not" {
                    return Some(TypeLabel::Bool);
                }
                match self.expr_type(ch[1], scope) {
                    Some(TypeLabel::Int) | Some(TypeLabel::Bool) => Some(TypeLabel::Int),
                    Some(TypeLabel::Float) => Some(TypeLabel::Float),
                    _ => None,
                }
            }
            NodeKind::BinaryOperator => {
                let op = self.tree.text(ch[1]).unwrap();
                let a = self.expr_type(ch[0], scope);
                let b = self.expr_type(ch[2], scope);
                binary_result(op, a, b)
            }
            NodeKind::Call => {
                let builtin = self.call_to_builtin(node, scope)?;
                let args: Vec<NodeId> = self
                    .tree
                    .children(ch[1])
                    .iter()
                    .copied()
                    .filter(|&a| self.tree.kind(a) != NodeKind::Operator)
                    .collect();
                match builtin {
                    "len" => Some(TypeLabel::Int),
                    "range" => Some(TypeLabel::List),
                    "print" => Some(TypeLabel::NoneType),
                    "int" => Some(TypeLabel::Int),
                    "float" => Some(TypeLabel::Float),
                    "str" => Some(TypeLabel::Str),
                    "bool" => Some(TypeLabel::Bool),
                    "abs" => match args.first().and_then(|&a| self.expr_type(a, scope)) {
                        Some(TypeLabel::Int) | Some(TypeLabel::Bool) => Some(TypeLabel::Int),
                        Some(TypeLabel::Float) => Some(TypeLabel::Float),
                        _ => None,
                    },
                    "min" | "max" => {
                        if args.len() < 2 {
                            return None;
                        }
                        let tys: Vec<Option<TypeLabel>> =
                            args.iter().map(|&a| self.expr_type(a, scope)).collect();
                        let first = tys[0]?;
                        if tys.iter().all(|t| *t == Some(first)) {
                            Some(first)
                        } else {
                            None
                        }
                    }
                    _ => None,
                }
            }
            NodeKind::Subscript => match self.expr_type(ch[0], scope) {
                Some(TypeLabel::Str) => Some(TypeLabel::Str),
                _ => None,
            },
            _ => None,
        }
    }

    // pass D: emit one label per leaf
    fn emit(
        &self,
        node: NodeId,
        scope: usize,
        attr_name: bool,
        tokens: &mut Vec<String>,
        labels: &mut Vec<TypeLabel>,
    ) {
        let ch = self.tree.children(node).to_vec();
        match self.tree.kind(node) {
            NodeKind::Identifier => {
                tokens.push(self.tree.text(node).unwrap().to_string());
                labels.push(if attr_name { TypeLabel::O } else { self.occurrence_label(node, scope) });
            }
            kind if kind.is_leaf() => {
                tokens.push(self.tree.text(node).unwrap().to_string());
                labels.push(TypeLabel::O);
            }
            NodeKind::FunctionDef => {
                let child = self.scope_of_def[&node];
                for (i, &c) in ch.iter().enumerate() {
                    // name sits in the enclosing scope, params and body in the new one
                    let s = if i < 2 { scope } else { child };
                    self.emit(c, s, false, tokens, labels);
                }
            }
            NodeKind::Attribute => {
                self.emit(ch[0], scope, false, tokens, labels);
                self.emit(ch[1], scope, false, tokens, labels); // '.'
                self.emit(ch[2], scope, true, tokens, labels); // attribute name
            }
            _ => {
                for &c in &ch {
                    self.emit(c, scope, false, tokens, labels);
                }
            }
        }
    }

    fn occurrence_label(&self, node: NodeId, scope: usize) -> TypeLabel {
        let name = self.tree.text(node).unwrap();
        match self.binding_scope(scope, name) {
            Some(s) => {
                let key = (s, name.to_string());
                if let Some(ev) = self.annotations.get(&key) {
                    return ev.label();
                }
                self.env.get(&key).copied().unwrap_or(Ev::Bottom).label()
            }
            None if BUILTINS.contains(&name) => TypeLabel::Callable,
            None => TypeLabel::Unknown,
        }
    }
}

fn binary_result(
    op: &str,
    a: Option<TypeLabel>,
    b: Option<TypeLabel>,
) -> Option<TypeLabel> {
    use TypeLabel::*;
    let (a, b) = (a?, b?);
    // bools behave as ints in arithmetic
    let a = if a == Bool { Int } else { a };
    let b = if b == Bool { Int } else { b };
    match op {
        "+" => match (a, b) {
            (Str, Str) => Some(Str),
            (List, List) => Some(List),
            (Tuple, Tuple) => Some(Tuple),
            (Int, Int) => Some(Int),
            (Float, Int) | (Int, Float) | (Float, Float) => Some(Float),
            _ => None,
        },
        "-" => numeric(a, b),
        "*" => match (a, b) {
            (Str, Int) | (Int, Str) => Some(Str),
            (List, Int) | (Int, List) => Some(List),
            _ => numeric(a, b),
        },
        "/" => match (a, b) {
            (Int, Int) | (Int, Float) | (Float, Int) | (Float, Float) => Some(Float),
            _ => None,
        },
        "//" | "%" => numeric(a, b),
        "**" => numeric(a, b),
        _ => None,
    }
}

fn numeric(a: TypeLabel, b: TypeLabel) -> Option<TypeLabel> {
    use TypeLabel::*;
    match (a, b) {
        (Int, Int) => Some(Int),
        (Float, Int) | (Int, Float) | (Float, Float) => Some(Float),
        _ => None,
    }
}

// ---------------------------------------------------------------------
// BPE
// ---------------------------------------------------------------------

/// End-of-word marker attached to the final character of every token.
pub const END_OF_WORD: &str = "</w>";

/// Atomic special tokens; never split, never produced by merges.
pub const SPECIAL_TOKENS: [&str; 6] = ["<PAD>", "<UNK>", "<CLS>", "<SEP>", "<MASK>", "<blk>"];

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const MASK_ID: u32 = 4;
pub const BLK_ID: u32 = 5;

/// A trained byte-pair-encoding model: ordered merges over within-token
/// character sequences plus the base alphabet and special tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpeModel {
    pub merges: Vec<(String, String)>,
    pub alphabet: Vec<String>,
    vocab: Vec<String>,
    ids: BTreeMap<String, u32>,
    merge_rank: BTreeMap<(String, String), usize>,
}

impl BpeModel {
    fn assemble(merges: Vec<(String, String)>, alphabet: Vec<String>) -> BpeModel {
        let mut vocab: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut ids = BTreeMap::new();
        for (i, s) in vocab.iter().enumerate() {
            ids.insert(s.clone(), i as u32);
        }
        for sym in &alphabet {
            if !ids.contains_key(sym) {
                ids.insert(sym.clone(), vocab.len() as u32);
                vocab.push(sym.clone());
            }
        }
        let mut merge_rank = BTreeMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            merge_rank.insert((l.clone(), r.clone()), rank);
            let product = format!("{l}{r}");
            if !ids.contains_key(&product) {
                ids.insert(product.clone(), vocab.len() as u32);
                vocab.push(product);
            }
        }
        BpeModel { merges, alphabet, vocab, ids, merge_rank }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Subword strings for one token. Special tokens stay atomic.
    pub fn encode_token(&self, token: &str) -> Vec<String> {
        if SPECIAL_TOKENS.contains(&token) {
            return vec![token.to_string()];
        }
        let mut symbols = symbolize(token);
        if symbols.is_empty() {
            return symbols;
        }
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, position)
            for i in 0..symbols.len() - 1 {
                let key = (symbols[i].clone(), symbols[i + 1].clone());
                if let Some(&rank) = self.merge_rank.get(&key) {
                    if best.is_none() || rank < best.unwrap().0 {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((rank, _)) = best else { break };
            let (l, r) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == *l && symbols[i + 1] == *r {
                    merged.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            symbols = merged;
        }
        symbols
    }

    /// Vocabulary id of a subtoken, `<UNK>` when unseen.
    pub fn subtoken_id(&self, subtoken: &str) -> u32 {
        self.ids.get(subtoken).copied().unwrap_or(UNK_ID)
    }

    pub fn subtoken_text(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    /// Inverse of [`BpeModel::encode_token`] for tokens covered by the
    /// alphabet.
    pub fn detokenize(&self, subtokens: &[String]) -> String {
        let joined: String = subtokens.concat();
        joined.strip_suffix(END_OF_WORD).unwrap_or(&joined).to_string()
    }

    // -- text serialization: header lines then one merge per line --

    pub fn to_text(&self) -> String {
        let mut out = String::from("bpe v1\n");
        out.push_str("specials");
        for s in SPECIAL_TOKENS {
            out.push(' ');
            out.push_str(s);
        }
        out.push('\n');
        out.push_str("alphabet");
        for sym in &self.alphabet {
            out.push(' ');
            out.push_str(&escape_symbol(sym));
        }
        out.push('\n');
        out.push_str(&format!("merges {}\n", self.merges.len()));
        for (l, r) in &self.merges {
            out.push_str(&format!("{} {}\n", escape_symbol(l), escape_symbol(r)));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<BpeModel, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty bpe file")?;
        if header != "bpe v1" {
            return Err(format!("unsupported bpe header: {header}"));
        }
        let specials = lines.next().ok_or("missing specials line")?;
        if !specials.starts_with("specials ") {
            return Err("missing specials line".into());
        }
        let alphabet_line = lines.next().ok_or("missing alphabet line")?;
        let alphabet: Vec<String> = alphabet_line
            .strip_prefix("alphabet")
            .ok_or("missing alphabet line")?
            .split_whitespace()
            .map(unescape_symbol)
            .collect();
        let count_line = lines.next().ok_or("missing merges line")?;
        let count: usize = count_line
            .strip_prefix("merges ")
            .and_then(|n| n.parse().ok())
            .ok_or("malformed merges line")?;
        let mut merges = Vec::with_capacity(count);
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let (l, r) = line.split_once(' ').ok_or_else(|| format!("bad merge line: {line}"))?;
            merges.push((unescape_symbol(l), unescape_symbol(r)));
        }
        if merges.len() != count {
            return Err(format!("expected {count} merges, found {}", merges.len()));
        }
        Ok(BpeModel::assemble(merges, alphabet))
    }
}

fn symbolize(token: &str) -> Vec<String> {
    let chars: Vec<char> = token.chars().collect();
    let n = chars.len();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

/// Symbols may contain spaces (string-literal tokens); escape for the
/// space-separated file format.
fn escape_symbol(sym: &str) -> String {
    sym.replace('\\', "\\\\").replace(' ', "\\s")
}

fn unescape_symbol(sym: &str) -> String {
    let mut out = String::new();
    let mut chars = sym.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('s') => out.push(' '),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

/// Train a BPE model: greedy most-frequent-pair merging with lexicographic
/// tie-breaking, deterministic for a fixed corpus and merge count. Merges
/// past saturation are no-ops.
pub fn train_bpe<S: AsRef<str>>(corpus: &[Vec<S>], merges: usize) -> BpeModel {
    let mut word_counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    let mut alphabet: BTreeMap<String, ()> = BTreeMap::new();
    for seq in corpus {
        for token in seq {
            let token = token.as_ref();
            if token.is_empty() || SPECIAL_TOKENS.contains(&token) {
                continue;
            }
            let symbols = symbolize(token);
            for s in &symbols {
                alphabet.insert(s.clone(), ());
            }
            *word_counts.entry(symbols).or_insert(0) += 1;
        }
    }

    let mut merge_list = Vec::new();
    let mut words: Vec<(Vec<String>, u64)> = word_counts.into_iter().collect();
    for _ in 0..merges {
        let mut pair_counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (symbols, count) in &words {
            for w in symbols.windows(2) {
                *pair_counts.entry((w[0].clone(), w[1].clone())).or_insert(0) += count;
            }
        }
        // most frequent pair; ties break toward the lexicographically
        // smallest pair (BTreeMap iterates in sorted order); a pair whose
        // product would collide with a special token is never selected,
        // keeping specials atomic in both directions
        let Some((best_pair, _)) = pair_counts
            .iter()
            .filter(|((l, r), _)| !SPECIAL_TOKENS.contains(&format!("{l}{r}").as_str()))
            .fold(None::<(&(String, String), u64)>, |acc, (pair, &count)| match acc {
                Some((_, best)) if count <= best => acc,
                _ => Some((pair, count)),
            })
        else {
            break;
        };
        let (l, r) = best_pair.clone();
        let product = format!("{l}{r}");
        for (symbols, _) in &mut words {
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == l && symbols[i + 1] == r {
                    merged.push(product.clone());
                    i += 2;
                } else {
                    merged.push(symbols[i].clone());
                    i += 1;
                }
            }
            *symbols = merged;
        }
        merge_list.push((l, r));
    }
    BpeModel::assemble(merge_list, alphabet.into_keys().collect())
}

/// PL tokens of the canonical source with aligned labels. The canonical
/// text re-derives grouping parentheses from precedence, so the token view
/// faithfully encodes structure like `(a + b) * c`; the inserted parens
/// carry `O`.
pub fn typed_pl_tokens(tree: &SyntaxTree) -> TypedTokenSequence {
    let leaf = infer_types(tree);
    let canonical = crate::frontend::unparse(tree);
    let tokens = canonical_token_texts(&canonical);
    let labels = align_labels(&tokens, &leaf.tokens, &leaf.labels);
    TypedTokenSequence { tokens, labels }
}

/// Non-synthetic token texts of canonical source text.
pub fn canonical_token_texts(canonical: &str) -> Vec<String> {
    crate::frontend::tokenize(canonical)
        .expect("canonical source lexes")
        .into_iter()
        .filter(|t| !t.is_synthetic())
        .map(|t| t.text)
        .collect()
}

/// Align leaf labels onto a canonical token stream: canonical tokens match
/// the tree's leaf texts in order, with re-derived grouping parentheses
/// interleaved (labeled `O`).
pub fn align_labels(
    tokens: &[String],
    leaf_tokens: &[String],
    leaf_labels: &[TypeLabel],
) -> Vec<TypeLabel> {
    let mut labels = Vec::with_capacity(tokens.len());
    let mut li = 0;
    for token in tokens {
        if li < leaf_tokens.len() && *token == leaf_tokens[li] {
            labels.push(leaf_labels[li]);
            li += 1;
        } else {
            debug_assert!(
                token == "(" || token == ")",
                "unexpected inserted token {token:?}"
            );
            labels.push(TypeLabel::O);
        }
    }
    debug_assert_eq!(li, leaf_tokens.len(), "leaf tokens left unmatched");
    labels
}

/// Replace each token by its subtokens; every subtoken inherits the parent
/// token's label verbatim.
pub fn encode_with_types(seq: &TypedTokenSequence, bpe: &BpeModel) -> (Vec<String>, Vec<TypeLabel>) {
    let mut subtokens = Vec::new();
    let mut sublabels = Vec::new();
    for (token, label) in seq.tokens.iter().zip(&seq.labels) {
        for sub in bpe.encode_token(token) {
            subtokens.push(sub);
            sublabels.push(*label);
        }
    }
    (subtokens, sublabels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_source;

    fn label_of(seq: &TypedTokenSequence, token: &str) -> Vec<TypeLabel> {
        seq.tokens
            .iter()
            .zip(&seq.labels)
            .filter(|(t, _)| t.as_str() == token)
            .map(|(_, l)| *l)
            .collect()
    }

    #[test]
    fn annotation_dominates() {
        let tree = parse_source("x: int = 0").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "x"), vec![TypeLabel::Int]);
    }

    #[test]
    fn annotation_beats_conflicting_assignment() {
        let tree = parse_source("x: int = 0\nx = 'oops'\n").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "x"), vec![TypeLabel::Int, TypeLabel::Int]);
    }

    #[test]
    fn float_propagates() {
        let tree = parse_source("y = 0.5\nz = y + 1\n").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "y"), vec![TypeLabel::Float, TypeLabel::Float]);
        assert_eq!(label_of(&seq, "z"), vec![TypeLabel::Float]);
    }

    #[test]
    fn propagation_is_order_insensitive() {
        let tree = parse_source("z = y + 1\ny = 0.5\n").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "z"), vec![TypeLabel::Float]);
    }

    #[test]
    fn conflict_means_unknown() {
        let tree = parse_source("a = 1\na = \"s\"\n").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "a"), vec![TypeLabel::Unknown, TypeLabel::Unknown]);
    }

    #[test]
    fn non_identifiers_are_o() {
        let tree = parse_source("y = 0").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(seq.tokens, vec!["y", "=", "0"]);
        assert_eq!(seq.labels, vec![TypeLabel::Int, TypeLabel::O, TypeLabel::O]);
    }

    #[test]
    fn functions_and_builtins_are_callable() {
        let tree = parse_source("def f(a):\n    return len(a)\nx = f([1])\n").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "f"), vec![TypeLabel::Callable, TypeLabel::Callable]);
        assert_eq!(label_of(&seq, "len"), vec![TypeLabel::Callable]);
        // f's return type is not inferred interprocedurally
        assert_eq!(label_of(&seq, "x"), vec![TypeLabel::Unknown]);
    }

    #[test]
    fn scopes_are_separate() {
        let src = "def f():\n    v = 1\n    return v\ndef g():\n    v = 'a'\n    return v\n";
        let tree = parse_source(src).unwrap();
        let seq = infer_types(&tree);
        assert_eq!(
            label_of(&seq, "v"),
            vec![TypeLabel::Int, TypeLabel::Int, TypeLabel::Str, TypeLabel::Str]
        );
    }

    #[test]
    fn for_over_range_is_int() {
        let tree = parse_source("for i in range(3):\n    s = i\n").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "i"), vec![TypeLabel::Int, TypeLabel::Int]);
        assert_eq!(label_of(&seq, "range"), vec![TypeLabel::Callable]);
    }

    #[test]
    fn attribute_names_are_o() {
        let tree = parse_source("xs = []\nxs.append(1)\n").unwrap();
        let seq = infer_types(&tree);
        assert_eq!(label_of(&seq, "append"), vec![TypeLabel::O]);
        assert_eq!(label_of(&seq, "xs"), vec![TypeLabel::List, TypeLabel::List]);
    }

    #[test]
    fn canonical_pl_tokens_keep_grouping_and_labels() {
        let tree = parse_source("y = (1 + 2) * 3\n").unwrap();
        let seq = typed_pl_tokens(&tree);
        assert_eq!(seq.tokens, vec!["y", "=", "(", "1", "+", "2", ")", "*", "3"]);
        assert_eq!(seq.labels[0], TypeLabel::Int); // y: int op int
        assert_eq!(seq.labels[2], TypeLabel::O); // re-derived paren
        assert_eq!(seq.labels[6], TypeLabel::O);
        // same label multiset as the leaf-aligned sequence
        let leaf = infer_types(&tree);
        let count = |labels: &[TypeLabel]| labels.iter().filter(|l| **l != TypeLabel::O).count();
        assert_eq!(count(&seq.labels), count(&leaf.labels));
    }

    #[test]
    fn inference_is_idempotent_and_deterministic() {
        let src = "def f(n):\n    total = 0\n    for i in range(n):\n        total += i\n    return total\n";
        let tree = parse_source(src).unwrap();
        let a = infer_types(&tree);
        let b = infer_types(&tree);
        assert_eq!(a, b);
    }

    // ---- BPE ----

    #[test]
    fn zero_merges_is_character_model() {
        let model = train_bpe(&[vec!["ab"]], 0);
        assert_eq!(model.encode_token("ab"), vec!["a", "b</w>"]);
        assert!(model.merges.is_empty());
    }

    #[test]
    fn most_frequent_pair_merges_first() {
        let corpus = vec![
            vec!["low"; 5].into_iter().map(str::to_string).collect::<Vec<_>>(),
            vec!["lower"; 2].into_iter().map(str::to_string).collect::<Vec<_>>(),
        ];
        let model = train_bpe(&corpus, 2);
        // ("l","o") occurs 7 times, more than any other pair
        assert_eq!(model.merges[0], ("l".to_string(), "o".to_string()));
        assert_eq!(model.merges[1], ("lo".to_string(), "w</w>".to_string()));
        assert_eq!(model.encode_token("low"), vec!["low</w>"]);
        assert_eq!(model.encode_token("lower"), vec!["lo", "w", "e", "r</w>"]);
    }

    #[test]
    fn encode_detokenize_roundtrip() {
        let corpus: Vec<Vec<String>> = vec![
            "def add ( a , b ) : return a + b".split(' ').map(str::to_string).collect(),
            "counter = counter + 1".split(' ').map(str::to_string).collect(),
            "\"a string literal\"".split('\u{0}').map(str::to_string).collect(),
        ];
        let model = train_bpe(&corpus, 50);
        for seq in &corpus {
            for token in seq {
                let subs = model.encode_token(token);
                assert_eq!(&model.detokenize(&subs), token);
            }
        }
    }

    #[test]
    fn merges_beyond_saturation_are_noops() {
        let a = train_bpe(&[vec!["ab", "ab"]], 5);
        let b = train_bpe(&[vec!["ab", "ab"]], 500);
        assert_eq!(a.merges, b.merges);
    }

    #[test]
    fn specials_are_atomic() {
        let model = train_bpe(&[vec!["<blk>", "abc", "<blk>"]], 10);
        assert_eq!(model.encode_token("<blk>"), vec!["<blk>"]);
        assert_eq!(model.subtoken_id("<blk>"), BLK_ID);
        assert_eq!(model.subtoken_id("<CLS>"), CLS_ID);
    }

    #[test]
    fn unknown_characters_map_to_unk() {
        let model = train_bpe(&[vec!["abc"]], 0);
        assert_eq!(model.subtoken_id("q</w>"), UNK_ID);
    }

    #[test]
    fn merges_never_produce_special_strings() {
        // string-literal tokens can contain a sentinel's characters; the
        // merge selection must route around producing the sentinel itself
        let corpus = vec![vec!["\"<blk>\"".to_string(); 8]];
        let model = train_bpe(&corpus, 30);
        for (l, r) in &model.merges {
            let product = format!("{l}{r}");
            assert!(!SPECIAL_TOKENS.contains(&product.as_str()), "merge produced {product}");
        }
        // the token itself still round-trips
        let subs = model.encode_token("\"<blk>\"");
        assert_eq!(model.detokenize(&subs), "\"<blk>\"");
    }

    #[test]
    fn training_is_deterministic() {
        let corpus: Vec<Vec<String>> = vec![
            "for i in range ( 10 ) :".split(' ').map(str::to_string).collect(),
            "while i < 10 :".split(' ').map(str::to_string).collect(),
        ];
        let a = train_bpe(&corpus, 30);
        let b = train_bpe(&corpus, 30);
        assert_eq!(a.merges, b.merges);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn text_roundtrip_with_spaces_and_backslashes() {
        let corpus: Vec<Vec<String>> = vec![vec![
            "\"hello world\"".to_string(),
            "\"a\\nb\"".to_string(),
            "plain".to_string(),
        ]];
        let model = train_bpe(&corpus, 25);
        let text = model.to_text();
        let back = BpeModel::from_text(&text).unwrap();
        assert_eq!(model, back);
        for token in ["\"hello world\"", "\"a\\nb\"", "plain"] {
            assert_eq!(back.encode_token(token), model.encode_token(token));
        }
    }

    #[test]
    fn subtokens_inherit_labels() {
        let corpus = vec![vec!["count".to_string(), "er".to_string()]];
        let model = train_bpe(&corpus, 10);
        let seq = TypedTokenSequence {
            tokens: vec!["counter".to_string(), "=".to_string(), "1".to_string()],
            labels: vec![TypeLabel::Int, TypeLabel::O, TypeLabel::O],
        };
        let (subs, labels) = encode_with_types(&seq, &model);
        assert!(subs.len() > 3, "counter must split: {subs:?}");
        let counter_subs = subs.len() - 2;
        for l in &labels[..counter_subs] {
            assert_eq!(*l, TypeLabel::Int);
        }
        assert_eq!(labels[counter_subs..], [TypeLabel::O, TypeLabel::O]);
    }

    #[test]
    fn atomic_token_single_subtoken_same_label() {
        let model = train_bpe(&[vec!["x"]], 5);
        let seq = TypedTokenSequence {
            tokens: vec!["x".to_string()],
            labels: vec![TypeLabel::Float],
        };
        let (subs, labels) = encode_with_types(&seq, &model);
        assert_eq!(subs, vec!["x</w>"]);
        assert_eq!(labels, vec![TypeLabel::Float]);
    }

    #[test]
    fn label_multiset_cardinality_conserved() {
        let src = "def f(a):\n    counter = 0\n    counter = counter + a\n    return counter\n";
        let tree = parse_source(src).unwrap();
        let seq = infer_types(&tree);
        let model = train_bpe(std::slice::from_ref(&seq.tokens), 20);
        let (subs, sublabels) = encode_with_types(&seq, &model);
        let expected: usize = seq
            .tokens
            .iter()
            .zip(&seq.labels)
            .filter(|(_, l)| **l != TypeLabel::O)
            .map(|(t, _)| model.encode_token(t).len())
            .sum();
        let got = sublabels.iter().filter(|l| **l != TypeLabel::O).count();
        assert_eq!(got, expected);
        assert_eq!(subs.len(), sublabels.len());
    }

    #[test]
    fn type_label_indices_stable() {
        assert_eq!(TypeLabel::Int.index(), 0);
        assert_eq!(TypeLabel::Unknown.index(), 9);
        assert_eq!(TypeLabel::O.index(), 10);
        assert_eq!(TYPE_CLASS_COUNT, 10);
        for l in TypeLabel::ALL {
            assert_eq!(TypeLabel::from_index(l.index()), Some(l));
            assert_eq!(TypeLabel::from_name(l.name()), Some(l));
        }
    }
}
