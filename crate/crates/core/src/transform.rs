//! Semantics-preserving program transformations: identifier renaming, loop
//! exchange, and dead-code insertion. Each heuristic returns a fresh tree
//! plus a [`TransformReport`]; composition order is fixed (rename, then
//! loop exchange, then dead code) so variants are reproducible from a seed.
//!
//! Loop exchange is deliberately conservative. A `for` over `range(...)`
//! becomes `init; while; increment` only when that is provably equivalent:
//! literal step, loop variable neither reassigned in the body nor read after
//! the loop, no `continue` at the loop's own level (it would skip the
//! increment), and no rebinding of names the bounds read. The reverse
//! direction applies the mirrored conditions. Everything that fails a guard
//! is counted as skipped, not an error.

use crate::frontend::{NodeId, NodeKind, Span, SyntaxTree};
use crate::interp::BUILTINS;
use crate::views::{build_cfg, StmtAnchor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heuristic {
    Rename,
    LoopExchange,
    DeadCode,
}

/// What a heuristic did: how many sites changed under which seed.
/// `sites == 0` implies the output tree equals the input tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformReport {
    pub heuristic: Heuristic,
    pub sites: usize,
    pub skipped: usize,
    pub seed: u64,
}

/// Name-level rename map: every binding of one original name maps to the
/// same fresh name, so shadowing structure is preserved exactly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenameMap {
    pub map: BTreeMap<String, String>,
}

// ---------------------------------------------------------------------
// renaming
// ---------------------------------------------------------------------

/// Rename user-defined functions to `FUNC_i` and variables/parameters to
/// `VAR_i`. Indices follow first occurrence in DFS order; builtins,
/// attribute names, and free (never-bound) names are left alone. The `seed`
/// is carried in the report for provenance; the mapping itself is
/// deterministic.
pub fn rename_identifiers(tree: &SyntaxTree, seed: u64) -> (SyntaxTree, TransformReport) {
    let (out, map) = rename_with_map(tree, seed);
    let sites = map.1;
    (out, TransformReport { heuristic: Heuristic::Rename, sites, skipped: 0, seed })
}

/// Like [`rename_identifiers`] but also returns the name map.
pub fn rename_with_map(tree: &SyntaxTree, _seed: u64) -> (SyntaxTree, (RenameMap, usize)) {
    let func_names = collect_def_names(tree);
    let bound = collect_bound_names(tree);
    let existing = tree.identifier_names();

    let mut out = tree.clone();
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    let mut next_var = 0usize;
    let mut next_func = 0usize;
    let mut sites = 0usize;

    let renameable = renameable_leaves(tree);
    for leaf in renameable {
        let name = tree.text(leaf).unwrap().to_string();
        if !bound.contains(&name) || BUILTINS.contains(&name.as_str()) {
            continue;
        }
        let fresh = map.entry(name.clone()).or_insert_with(|| {
            if func_names.contains(&name) {
                next_fresh("FUNC", &mut next_func, &existing)
            } else {
                next_fresh("VAR", &mut next_var, &existing)
            }
        });
        out.node_mut(leaf).text = Some(fresh.clone());
        sites += 1;
    }
    (out, (RenameMap { map }, sites))
}

fn next_fresh(prefix: &str, counter: &mut usize, existing: &BTreeSet<String>) -> String {
    loop {
        let candidate = format!("{prefix}_{counter}");
        *counter += 1;
        if !existing.contains(&candidate) {
            return candidate;
        }
    }
}

fn collect_def_names(tree: &SyntaxTree) -> BTreeSet<String> {
    tree.dfs(tree.root())
        .into_iter()
        .filter(|&n| tree.kind(n) == NodeKind::FunctionDef)
        .map(|n| tree.text(tree.children(n)[1]).unwrap().to_string())
        .collect()
}

/// Names bound anywhere by user code: def names, parameters, assignment
/// targets, and for-loop targets.
fn collect_bound_names(tree: &SyntaxTree) -> BTreeSet<String> {
    let mut bound = BTreeSet::new();
    for n in tree.dfs(tree.root()) {
        let ch = tree.children(n);
        match tree.kind(n) {
            NodeKind::FunctionDef => {
                bound.insert(tree.text(ch[1]).unwrap().to_string());
                for &p in tree.children(ch[2]) {
                    if tree.kind(p) == NodeKind::Identifier {
                        bound.insert(tree.text(p).unwrap().to_string());
                    }
                }
            }
            NodeKind::Assignment | NodeKind::AnnotatedAssignment | NodeKind::AugmentedAssignment => {
                if tree.kind(ch[0]) == NodeKind::Identifier {
                    bound.insert(tree.text(ch[0]).unwrap().to_string());
                }
            }
            NodeKind::ForStatement => {
                bound.insert(tree.text(ch[1]).unwrap().to_string());
            }
            _ => {}
        }
    }
    bound
}

/// Identifier leaves in DFS order, excluding attribute-name positions
/// (`obj.name`: `name` is not a variable reference).
fn renameable_leaves(tree: &SyntaxTree) -> Vec<NodeId> {
    let mut out = Vec::new();
    fn walk(tree: &SyntaxTree, node: NodeId, out: &mut Vec<NodeId>) {
        if tree.kind(node) == NodeKind::Attribute {
            let ch = tree.children(node);
            walk(tree, ch[0], out); // skip '.' and the attribute name
            return;
        }
        if tree.kind(node) == NodeKind::Identifier {
            out.push(node);
            return;
        }
        for &c in tree.children(node) {
            walk(tree, c, out);
        }
    }
    walk(tree, tree.root(), &mut out);
    out
}

// ---------------------------------------------------------------------
// loop exchange
// ---------------------------------------------------------------------

/// Flip range-based `for` loops into `init; while; increment` form and
/// affine `init; while; increment` patterns into `for` loops. Non-matching
/// loops are counted as skipped.
pub fn exchange_loops(tree: &SyntaxTree) -> (SyntaxTree, TransformReport) {
    let mut out = SyntaxTree::new();
    let mut stats = LoopStats::default();
    let stmts = rebuild_suite(tree, tree.root(), &mut out, &mut stats);
    let root = out.root();
    for s in stmts {
        out.add_child(root, s);
    }
    (
        out,
        TransformReport {
            heuristic: Heuristic::LoopExchange,
            sites: stats.exchanged,
            skipped: stats.skipped,
            seed: 0,
        },
    )
}

#[derive(Default)]
struct LoopStats {
    exchanged: usize,
    skipped: usize,
}

const SYN: Span = Span { line: 1, col: 1 };

fn rebuild_suite(
    old: &SyntaxTree,
    suite: NodeId,
    out: &mut SyntaxTree,
    stats: &mut LoopStats,
) -> Vec<NodeId> {
    let stmts = old.children(suite).to_vec();
    let mut result = Vec::new();
    let mut i = 0;
    while i < stmts.len() {
        let s = stmts[i];
        match old.kind(s) {
            NodeKind::ForStatement => {
                if let Some(pat) = match_range_for(old, s) {
                    result.extend(emit_for_as_while(old, s, &pat, out, stats));
                    stats.exchanged += 1;
                    i += 1;
                    continue;
                }
                stats.skipped += 1;
            }
            NodeKind::WhileStatement => {
                // the affine pattern consumes the preceding init statement,
                // so it is matched from the init position below
                let preceded = i > 0 && old.kind(stmts[i - 1]) == NodeKind::Assignment;
                if !preceded || match_affine_while(old, stmts[i - 1], s).is_none() {
                    stats.skipped += 1;
                }
            }
            NodeKind::Assignment if i + 1 < stmts.len()
                && old.kind(stmts[i + 1]) == NodeKind::WhileStatement => {
                    if let Some(pat) = match_affine_while(old, s, stmts[i + 1]) {
                        result.push(emit_while_as_for(old, &pat, out, stats));
                        stats.exchanged += 1;
                        i += 2;
                        continue;
                    }
                }
            _ => {}
        }
        result.push(rebuild_stmt(old, s, out, stats));
        i += 1;
    }
    result
}

/// Copy a statement, recursing into nested blocks so inner loops are
/// transformed too.
fn rebuild_stmt(
    old: &SyntaxTree,
    stmt: NodeId,
    out: &mut SyntaxTree,
    stats: &mut LoopStats,
) -> NodeId {
    match old.kind(stmt) {
        NodeKind::IfStatement
        | NodeKind::ElifClause
        | NodeKind::ElseClause
        | NodeKind::WhileStatement
        | NodeKind::ForStatement
        | NodeKind::FunctionDef => {
            let node = out.push_interior(old.kind(stmt), old.node(stmt).span);
            for &c in old.children(stmt) {
                let nc = match old.kind(c) {
                    NodeKind::Block => {
                        let b = out.push_interior(NodeKind::Block, old.node(c).span);
                        for st in rebuild_suite(old, c, out, stats) {
                            out.add_child(b, st);
                        }
                        b
                    }
                    NodeKind::ElifClause | NodeKind::ElseClause => {
                        rebuild_stmt(old, c, out, stats)
                    }
                    _ => out.import(old, c),
                };
                out.add_child(node, nc);
            }
            node
        }
        _ => out.import(old, stmt),
    }
}

/// Matched `for VAR in range(start, stop, step)` with its safety guarantees.
struct RangeForPattern {
    var: String,
    start: Option<NodeId>, // None: implicit 0
    stop: NodeId,
    step: i64,
}

fn match_range_for(tree: &SyntaxTree, stmt: NodeId) -> Option<RangeForPattern> {
    let ch = tree.children(stmt);
    let var = tree.text(ch[1])?.to_string();
    let iter = ch[3];
    let body = ch[5];
    if tree.kind(iter) != NodeKind::Call {
        return None;
    }
    let call_ch = tree.children(iter);
    let callee = call_ch[0];
    if tree.kind(callee) != NodeKind::Identifier || tree.text(callee) != Some("range") {
        return None;
    }
    // a shadowed `range` is not the builtin
    if collect_bound_names(tree).contains("range") {
        return None;
    }
    let args: Vec<NodeId> = tree
        .children(call_ch[1])
        .iter()
        .copied()
        .filter(|&a| tree.kind(a) != NodeKind::Operator)
        .collect();
    let (start, stop, step_node) = match args.as_slice() {
        [stop] => (None, *stop, None),
        [start, stop] => (Some(*start), *stop, None),
        [start, stop, step] => (Some(*start), *stop, Some(*step)),
        _ => return None,
    };
    let step = match step_node {
        None => 1,
        Some(n) => int_literal_value(tree, n)?,
    };
    if step == 0 {
        return None;
    }
    for arg in [start, Some(stop)].into_iter().flatten() {
        if !safe_bound_expr(tree, arg, &var, body) {
            return None;
        }
    }
    if assigns_name(tree, body, &var)
        || has_continue_at_level(tree, body)
        || occurs_outside(tree, &var, &[stmt])
    {
        return None;
    }
    Some(RangeForPattern { var, start, stop, step })
}

/// Bounds may be int literals, negated int literals, or identifiers that
/// are distinct from the loop variable and never assigned in the body.
fn safe_bound_expr(tree: &SyntaxTree, node: NodeId, var: &str, body: NodeId) -> bool {
    if int_literal_value(tree, node).is_some() {
        return true;
    }
    if tree.kind(node) == NodeKind::Identifier {
        let name = tree.text(node).unwrap();
        return name != var && !assigns_name(tree, body, name);
    }
    false
}

fn int_literal_value(tree: &SyntaxTree, node: NodeId) -> Option<i64> {
    match tree.kind(node) {
        NodeKind::IntLiteral => tree.text(node)?.parse().ok(),
        NodeKind::UnaryOperator => {
            let ch = tree.children(node);
            if tree.text(ch[0]) == Some("-") && tree.kind(ch[1]) == NodeKind::IntLiteral {
                tree.text(ch[1])?.parse::<i64>().ok().map(|v| -v)
            } else {
                None
            }
        }
        _ => None,
    }
}

fn emit_for_as_while(
    old: &SyntaxTree,
    _stmt: NodeId,
    pat: &RangeForPattern,
    out: &mut SyntaxTree,
    stats: &mut LoopStats,
) -> Vec<NodeId> {
    let body = {
        // body of the original for-statement
        let ch = old.children(_stmt);
        ch[5]
    };
    // init: var = start
    let init = out.push_interior(NodeKind::Assignment, SYN);
    let target = out.push_leaf(NodeKind::Identifier, SYN, &pat.var);
    let eq = out.push_leaf(NodeKind::Operator, SYN, "=");
    let start = match pat.start {
        Some(n) => out.import(old, n),
        None => out.push_leaf(NodeKind::IntLiteral, SYN, "0"),
    };
    for c in [target, eq, start] {
        out.add_child(init, c);
    }
    // while var < stop (or > for negative step)
    let while_node = out.push_interior(NodeKind::WhileStatement, SYN);
    let kw = out.push_leaf(NodeKind::Keyword, SYN, "while");
    let cond = out.push_interior(NodeKind::Comparison, SYN);
    let cvar = out.push_leaf(NodeKind::Identifier, SYN, &pat.var);
    let cop = out.push_leaf(NodeKind::Operator, SYN, if pat.step > 0 { "<" } else { ">" });
    let cstop = out.import(old, pat.stop);
    for c in [cvar, cop, cstop] {
        out.add_child(cond, c);
    }
    let colon = out.push_leaf(NodeKind::Operator, SYN, ":");
    let block = out.push_interior(NodeKind::Block, SYN);
    for st in rebuild_suite(old, body, out, stats) {
        out.add_child(block, st);
    }
    // increment: var = var + step  (var = var - |step| for negative steps)
    let inc = out.push_interior(NodeKind::Assignment, SYN);
    let ivar = out.push_leaf(NodeKind::Identifier, SYN, &pat.var);
    let ieq = out.push_leaf(NodeKind::Operator, SYN, "=");
    let sum = out.push_interior(NodeKind::BinaryOperator, SYN);
    let svar = out.push_leaf(NodeKind::Identifier, SYN, &pat.var);
    let sop = out.push_leaf(NodeKind::Operator, SYN, if pat.step > 0 { "+" } else { "-" });
    let samt = out.push_leaf(NodeKind::IntLiteral, SYN, pat.step.unsigned_abs().to_string());
    for c in [svar, sop, samt] {
        out.add_child(sum, c);
    }
    for c in [ivar, ieq, sum] {
        out.add_child(inc, c);
    }
    out.add_child(block, inc);
    for c in [kw, cond, colon, block] {
        out.add_child(while_node, c);
    }
    vec![init, while_node]
}

/// Matched `var = start; while var <op> stop: body...; var = var + step`.
struct AffineWhilePattern {
    var: String,
    start: NodeId,
    stop: NodeId,
    step: i64,
    body: NodeId,
    body_len: usize, // statements excluding the increment
}

fn match_affine_while(
    tree: &SyntaxTree,
    init: NodeId,
    while_stmt: NodeId,
) -> Option<AffineWhilePattern> {
    let init_ch = tree.children(init);
    if tree.kind(init_ch[0]) != NodeKind::Identifier {
        return None;
    }
    let var = tree.text(init_ch[0])?.to_string();
    let start = init_ch[2];

    let wch = tree.children(while_stmt);
    let cond = wch[1];
    let body = wch[3];
    if tree.kind(cond) != NodeKind::Comparison {
        return None;
    }
    let cch = tree.children(cond);
    if tree.kind(cch[0]) != NodeKind::Identifier || tree.text(cch[0]) != Some(var.as_str()) {
        return None;
    }
    let op = tree.text(cch[1])?;
    if op != "<" && op != ">" {
        return None;
    }
    let stop = cch[2];

    let body_stmts = tree.children(body);
    if body_stmts.len() < 2 {
        return None; // need at least one real statement plus the increment
    }
    let last = *body_stmts.last().unwrap();
    let step = match_increment(tree, last, &var)?;
    if (op == "<" && step <= 0) || (op == ">" && step >= 0) {
        return None;
    }

    // guards, mirroring the for->while direction
    if !safe_affine_operand(tree, start, &var, body, body_stmts.len() - 1) {
        return None;
    }
    if !safe_affine_operand(tree, stop, &var, body, body_stmts.len() - 1) {
        return None;
    }
    for (i, &stmt) in body_stmts.iter().enumerate() {
        if i + 1 == body_stmts.len() {
            break;
        }
        if assigns_name_stmt(tree, stmt, &var) {
            return None;
        }
    }
    if has_continue_at_level(tree, body) {
        return None;
    }
    if occurs_outside(tree, &var, &[init, while_stmt]) {
        return None;
    }
    Some(AffineWhilePattern {
        var,
        start,
        stop,
        step,
        body,
        body_len: body_stmts.len() - 1,
    })
}

fn safe_affine_operand(
    tree: &SyntaxTree,
    node: NodeId,
    var: &str,
    body: NodeId,
    body_len: usize,
) -> bool {
    if int_literal_value(tree, node).is_some() {
        return true;
    }
    if tree.kind(node) == NodeKind::Identifier {
        let name = tree.text(node).unwrap();
        if name == var {
            return false;
        }
        // must not be reassigned by the loop body (increment excluded)
        let body_stmts = tree.children(body);
        return body_stmts[..body_len]
            .iter()
            .all(|&s| !assigns_name_stmt(tree, s, name));
    }
    false
}

/// `var = var + N`, `var = var - N`, or `var += N` with a literal N.
fn match_increment(tree: &SyntaxTree, stmt: NodeId, var: &str) -> Option<i64> {
    let ch = tree.children(stmt);
    match tree.kind(stmt) {
        NodeKind::Assignment => {
            if tree.kind(ch[0]) != NodeKind::Identifier || tree.text(ch[0]) != Some(var) {
                return None;
            }
            let value = ch[2];
            if tree.kind(value) != NodeKind::BinaryOperator {
                return None;
            }
            let vch = tree.children(value);
            if tree.kind(vch[0]) != NodeKind::Identifier || tree.text(vch[0]) != Some(var) {
                return None;
            }
            let amount = int_literal_value(tree, vch[2])?;
            match tree.text(vch[1])? {
                "+" => Some(amount),
                "-" => Some(-amount),
                _ => None,
            }
        }
        NodeKind::AugmentedAssignment => {
            if tree.kind(ch[0]) != NodeKind::Identifier || tree.text(ch[0]) != Some(var) {
                return None;
            }
            let amount = int_literal_value(tree, ch[2])?;
            match tree.text(ch[1])? {
                "+=" => Some(amount),
                "-=" => Some(-amount),
                _ => None,
            }
        }
        _ => None,
    }
}

fn emit_while_as_for(
    old: &SyntaxTree,
    pat: &AffineWhilePattern,
    out: &mut SyntaxTree,
    stats: &mut LoopStats,
) -> NodeId {
    let node = out.push_interior(NodeKind::ForStatement, SYN);
    let kw = out.push_leaf(NodeKind::Keyword, SYN, "for");
    let target = out.push_leaf(NodeKind::Identifier, SYN, &pat.var);
    let in_kw = out.push_leaf(NodeKind::Keyword, SYN, "in");

    let call = out.push_interior(NodeKind::Call, SYN);
    let callee = out.push_leaf(NodeKind::Identifier, SYN, "range");
    let args = out.push_interior(NodeKind::ArgumentList, SYN);
    let open = out.push_leaf(NodeKind::Operator, SYN, "(");
    out.add_child(args, open);
    let start = out.import(old, pat.start);
    out.add_child(args, start);
    let comma = out.push_leaf(NodeKind::Operator, SYN, ",");
    out.add_child(args, comma);
    let stop = out.import(old, pat.stop);
    out.add_child(args, stop);
    if pat.step != 1 {
        let comma2 = out.push_leaf(NodeKind::Operator, SYN, ",");
        out.add_child(args, comma2);
        let step = if pat.step < 0 {
            let neg = out.push_interior(NodeKind::UnaryOperator, SYN);
            let minus = out.push_leaf(NodeKind::Operator, SYN, "-");
            let lit =
                out.push_leaf(NodeKind::IntLiteral, SYN, pat.step.unsigned_abs().to_string());
            out.add_child(neg, minus);
            out.add_child(neg, lit);
            neg
        } else {
            out.push_leaf(NodeKind::IntLiteral, SYN, pat.step.to_string())
        };
        out.add_child(args, step);
    }
    let close = out.push_leaf(NodeKind::Operator, SYN, ")");
    out.add_child(args, close);
    out.add_child(call, callee);
    out.add_child(call, args);

    let colon = out.push_leaf(NodeKind::Operator, SYN, ":");
    let block = out.push_interior(NodeKind::Block, SYN);
    let body_stmts = old.children(pat.body).to_vec();
    for &s in &body_stmts[..pat.body_len] {
        let st = rebuild_stmt(old, s, out, stats);
        out.add_child(block, st);
    }
    for c in [kw, target, in_kw, call, colon, block] {
        out.add_child(node, c);
    }
    node
}

// ---- shared safety predicates ----

/// Does any statement in the subtree bind `name` (assignment, augmented or
/// annotated assignment, for-target, def name, or parameter)?
fn assigns_name(tree: &SyntaxTree, subtree: NodeId, name: &str) -> bool {
    tree.dfs(subtree).into_iter().any(|n| {
        let ch = tree.children(n);
        match tree.kind(n) {
            NodeKind::Assignment | NodeKind::AnnotatedAssignment | NodeKind::AugmentedAssignment => {
                tree.kind(ch[0]) == NodeKind::Identifier && tree.text(ch[0]) == Some(name)
            }
            NodeKind::ForStatement => tree.text(ch[1]) == Some(name),
            NodeKind::FunctionDef => {
                tree.text(ch[1]) == Some(name)
                    || tree
                        .children(ch[2])
                        .iter()
                        .any(|&p| tree.kind(p) == NodeKind::Identifier && tree.text(p) == Some(name))
            }
            _ => false,
        }
    })
}

fn assigns_name_stmt(tree: &SyntaxTree, stmt: NodeId, name: &str) -> bool {
    assigns_name(tree, stmt, name)
}

/// `continue` reachable at this block's own loop level (not inside a nested
/// loop, where it binds to the inner loop instead).
fn has_continue_at_level(tree: &SyntaxTree, block: NodeId) -> bool {
    tree.children(block).iter().any(|&stmt| match tree.kind(stmt) {
        NodeKind::ContinueStatement => true,
        NodeKind::IfStatement => tree.children(stmt).iter().any(|&c| match tree.kind(c) {
            NodeKind::Block => has_continue_at_level(tree, c),
            NodeKind::ElifClause => has_continue_at_level(tree, tree.children(c)[3]),
            NodeKind::ElseClause => has_continue_at_level(tree, tree.children(c)[2]),
            _ => false,
        }),
        _ => false, // nested while/for own their continues
    })
}

/// Is `name` referenced anywhere outside the `excluded` subtrees?
/// Attribute-name positions do not count as references.
fn occurs_outside(tree: &SyntaxTree, name: &str, excluded: &[NodeId]) -> bool {
    fn walk(tree: &SyntaxTree, node: NodeId, name: &str, excluded: &[NodeId]) -> bool {
        if excluded.contains(&node) {
            return false;
        }
        match tree.kind(node) {
            NodeKind::Identifier => tree.text(node) == Some(name),
            NodeKind::Attribute => {
                let ch = tree.children(node);
                walk(tree, ch[0], name, excluded)
            }
            _ => tree.children(node).iter().any(|&c| walk(tree, c, name, excluded)),
        }
    }
    walk(tree, tree.root(), name, excluded)
}

// ---------------------------------------------------------------------
// dead code
// ---------------------------------------------------------------------

/// Insert one side-effect-free snippet at a seeded position inside a seeded
/// basic block (blocks from [`build_cfg`]). Fresh `_dead_k` names never
/// collide with existing identifiers.
pub fn insert_dead_code(tree: &SyntaxTree, seed: u64) -> (SyntaxTree, TransformReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let existing = tree.identifier_names();
    let fresh = {
        let mut k = 0usize;
        loop {
            let candidate = format!("_dead_{k}");
            if !existing.contains(&candidate) {
                break candidate;
            }
            k += 1;
        }
    };
    // `len` may be shadowed by user code, in which case the snippet that
    // calls it would change behavior
    let bound = collect_bound_names(tree);
    let mut pool: Vec<String> = vec![
        format!("{fresh} = 0"),
        "if False:\n    pass".to_string(),
    ];
    if !bound.contains("len") {
        pool.push(format!("{fresh} = len(\"\")"));
    }
    let snippet_src = &pool[rng.random_range(0..pool.len())];

    // insertion site: uniform block among those with anchored statements,
    // then a uniform position within that block
    let anchor = match build_cfg(tree) {
        Ok(cfg) => {
            let candidates: Vec<Vec<StmtAnchor>> = cfg
                .blocks
                .iter()
                .map(|b| b.items.iter().filter_map(|i| i.anchor).collect::<Vec<_>>())
                .filter(|anchors| !anchors.is_empty())
                .collect();
            if candidates.is_empty() {
                None
            } else {
                let block = &candidates[rng.random_range(0..candidates.len())];
                let position = rng.random_range(0..=block.len());
                Some(if position == block.len() {
                    let last = block[block.len() - 1];
                    StmtAnchor { suite: last.suite, index: last.index + 1 }
                } else {
                    block[position]
                })
            }
        }
        Err(_) => None,
    };

    let mut out = tree.clone();
    let snippet_tree = crate::frontend::parse_source(snippet_src)
        .expect("dead-code snippets are valid subset programs");
    let snippet_stmt = snippet_tree.children(snippet_tree.root())[0];
    let imported = out.import(&snippet_tree, snippet_stmt);
    match anchor {
        Some(StmtAnchor { suite, index }) => {
            out.node_mut(suite).children.insert(index, imported);
        }
        None => {
            // empty body: append at module level
            let root = out.root();
            out.add_child(root, imported);
        }
    }
    (out, TransformReport { heuristic: Heuristic::DeadCode, sites: 1, skipped: 0, seed })
}

// ---------------------------------------------------------------------
// variant generation
// ---------------------------------------------------------------------

/// Bit mask over the three heuristics, applied in fixed order:
/// 1 = rename, 2 = loop exchange, 4 = dead code.
pub fn apply_heuristics(
    tree: &SyntaxTree,
    mask: u8,
    seed: u64,
) -> (SyntaxTree, Vec<TransformReport>) {
    let mut current = tree.clone();
    let mut reports = Vec::new();
    if mask & 1 != 0 {
        let (t, r) = rename_identifiers(&current, seed);
        current = t;
        reports.push(r);
    }
    if mask & 2 != 0 {
        let (t, r) = exchange_loops(&current);
        current = t;
        reports.push(r);
    }
    if mask & 4 != 0 {
        let (t, r) = insert_dead_code(&current, seed);
        current = t;
        reports.push(r);
    }
    (current, reports)
}

/// Generate `k` variants, each from a seeded non-empty subset of the three
/// heuristics. Deterministic given `(tree, seed, k)`.
pub fn generate_variants(tree: &SyntaxTree, seed: u64, k: usize) -> Vec<SyntaxTree> {
    (0..k)
        .map(|j| {
            let variant_seed = mix_seed(seed, j as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(variant_seed);
            let mask = rng.random_range(1u8..8);
            apply_heuristics(tree, mask, variant_seed).0
        })
        .collect()
}

fn mix_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step keeps per-variant streams independent
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_source, unparse};
    use crate::interp::{evaluate, Value, DEFAULT_STEP_LIMIT};
    use crate::views::node_kind_sequence;

    fn assert_equivalent(src: &str, variant: &SyntaxTree, entry: &str, inputs: &[Vec<Value>]) {
        let original = parse_source(src).unwrap();
        for args in inputs {
            let a = evaluate(&original, Some(entry), args, DEFAULT_STEP_LIMIT);
            let b = evaluate(variant, Some(entry), args, DEFAULT_STEP_LIMIT);
            assert!(
                a.semantic_eq(&b),
                "outcomes diverge for {src:?} args {args:?}:\n  {a:?}\nvs\n  {b:?}\nvariant:\n{}",
                unparse(variant)
            );
        }
    }

    #[test]
    fn rename_add_example() {
        let tree = parse_source("def add(a, b):\n    return a + b\n").unwrap();
        let (renamed, report) = rename_identifiers(&tree, 0);
        assert_eq!(unparse(&renamed), "def FUNC_0(VAR_0, VAR_1):\n    return VAR_0 + VAR_1\n");
        assert_eq!(report.sites, 5);
    }

    #[test]
    fn rename_pass_unchanged() {
        let tree = parse_source("pass").unwrap();
        let (out, report) = rename_identifiers(&tree, 7);
        assert_eq!(report.sites, 0);
        assert!(out.structural_eq(&tree));
    }

    #[test]
    fn rename_keeps_builtins_and_attributes() {
        let src = "def f(xs):\n    xs.append(len(xs))\n    return xs\n";
        let tree = parse_source(src).unwrap();
        let (renamed, _) = rename_identifiers(&tree, 0);
        let text = unparse(&renamed);
        assert!(text.contains("VAR_0.append"), "{text}");
        assert!(text.contains("len(VAR_0)"), "{text}");
    }

    #[test]
    fn rename_is_alpha_consistent() {
        let src = "def f(x):\n    y = x + 1\n    return y + x\n\ndef g(x):\n    return x\n";
        let tree = parse_source(src).unwrap();
        let (_, (map, _)) = rename_with_map(&tree, 0);
        // name-level bijection: injective with disjoint image
        let values: BTreeSet<&String> = map.map.values().collect();
        assert_eq!(values.len(), map.map.len());
        for fresh in values {
            assert!(!tree.identifier_names().contains(fresh.as_str()));
        }
    }

    #[test]
    fn rename_preserves_node_kind_sequence() {
        for src in [
            "def add(a, b):\n    return a + b\n",
            "def f(n):\n    s = 0\n    for i in range(n):\n        s += i\n    return s\n",
        ] {
            let tree = parse_source(src).unwrap();
            let (renamed, _) = rename_identifiers(&tree, 3);
            assert_eq!(node_kind_sequence(&tree), node_kind_sequence(&renamed));
        }
    }

    #[test]
    fn rename_equivalence() {
        let src = "def fact(n):\n    if n <= 1:\n        return 1\n    return n * fact(n - 1)\n";
        let tree = parse_source(src).unwrap();
        let (renamed, _) = rename_identifiers(&tree, 0);
        for i in 0..6 {
            let args = [Value::Int(i)];
            let a = evaluate(&tree, Some("fact"), &args, DEFAULT_STEP_LIMIT);
            let b = evaluate(&renamed, Some("FUNC_0"), &args, DEFAULT_STEP_LIMIT);
            assert!(a.semantic_eq(&b), "diverged at {i}:\n{}", unparse(&renamed));
        }
    }

    #[test]
    fn for_to_while_golden() {
        let src = "def f(s):\n    for i in range(3):\n        s = s + i\n    return s\n";
        let tree = parse_source(src).unwrap();
        let (out, report) = exchange_loops(&tree);
        assert_eq!(report.sites, 1);
        assert_eq!(
            unparse(&out),
            "def f(s):\n    i = 0\n    while i < 3:\n        s = s + i\n        i = i + 1\n    return s\n"
        );
        for s in [0i64, 5, -1] {
            let a = evaluate(&tree, Some("f"), &[Value::Int(s)], DEFAULT_STEP_LIMIT);
            let b = evaluate(&out, Some("f"), &[Value::Int(s)], DEFAULT_STEP_LIMIT);
            assert!(a.semantic_eq(&b));
        }
    }

    #[test]
    fn no_loops_unchanged() {
        let src = "def f(a):\n    return a\n";
        let tree = parse_source(src).unwrap();
        let (out, report) = exchange_loops(&tree);
        assert_eq!(report.sites, 0);
        assert!(out.structural_eq(&tree));
    }

    #[test]
    fn while_to_for_direction() {
        let src = "def f(n):\n    s = 0\n    i = 0\n    while i < n:\n        s = s + i\n        i = i + 1\n    return s\n";
        let tree = parse_source(src).unwrap();
        let (out, report) = exchange_loops(&tree);
        assert_eq!(report.sites, 1);
        let text = unparse(&out);
        assert!(text.contains("for i in range(0, n):"), "{text}");
        let inputs: Vec<Vec<Value>> = [0i64, 1, 4, 10].iter().map(|&n| vec![Value::Int(n)]).collect();
        assert_equivalent(src, &out, "f", &inputs);
    }

    #[test]
    fn double_application_restores_trip_count() {
        let src = "def f(s):\n    for i in range(2, 9, 3):\n        s = s + i\n    return s\n";
        let tree = parse_source(src).unwrap();
        let (once, r1) = exchange_loops(&tree);
        assert_eq!(r1.sites, 1);
        let (twice, r2) = exchange_loops(&once);
        assert_eq!(r2.sites, 1);
        let text = unparse(&twice);
        assert!(text.contains("for i in range(2, 9, 3):"), "{text}");
        for s in [0i64, 5, -1] {
            let a = evaluate(&tree, Some("f"), &[Value::Int(s)], DEFAULT_STEP_LIMIT);
            let b = evaluate(&twice, Some("f"), &[Value::Int(s)], DEFAULT_STEP_LIMIT);
            assert!(a.semantic_eq(&b));
        }
    }

    #[test]
    fn unsafe_loops_skipped() {
        // loop variable read after the loop
        let a = "def f(n):\n    for i in range(n):\n        pass\n    return i\n";
        // loop variable reassigned in the body
        let b = "def f(n):\n    for i in range(n):\n        i = i + 10\n    return n\n";
        // continue would skip the synthetic increment
        let c = "def f(n):\n    s = 0\n    for i in range(n):\n        if i % 2 == 0:\n            continue\n        s += i\n    return s\n";
        // non-literal step
        let d = "def f(n, k):\n    s = 0\n    for i in range(0, n, k):\n        s += i\n    return s\n";
        for src in [a, b, c, d] {
            let tree = parse_source(src).unwrap();
            let (out, report) = exchange_loops(&tree);
            assert_eq!(report.sites, 0, "must skip: {src}");
            assert!(report.skipped >= 1, "{src}");
            assert!(out.structural_eq(&tree), "{src}");
        }
    }

    #[test]
    fn negative_step_loops() {
        let src = "def f(s):\n    for i in range(5, 0, -2):\n        s = s + i\n    return s\n";
        let tree = parse_source(src).unwrap();
        let (out, report) = exchange_loops(&tree);
        assert_eq!(report.sites, 1);
        let text = unparse(&out);
        assert!(text.contains("while i > 0:"), "{text}");
        assert!(text.contains("i = i - 2"), "{text}");
        let inputs: Vec<Vec<Value>> = (0..5).map(|i| vec![Value::Int(i)]).collect();
        assert_equivalent(src, &out, "f", &inputs);
    }

    #[test]
    fn nested_loops_both_flipped() {
        let src = "def f(n):\n    s = 0\n    for i in range(n):\n        for j in range(n):\n            s = s + i * j\n    return s\n";
        let tree = parse_source(src).unwrap();
        let (out, report) = exchange_loops(&tree);
        assert_eq!(report.sites, 2);
        let inputs: Vec<Vec<Value>> = (0..5).map(|i| vec![Value::Int(i)]).collect();
        assert_equivalent(src, &out, "f", &inputs);
    }

    #[test]
    fn dead_code_inserts_one_statement() {
        let src = "def f(a):\n    b = a + 1\n    return b\n";
        let tree = parse_source(src).unwrap();
        for seed in 0..20 {
            let (out, report) = insert_dead_code(&tree, seed);
            assert_eq!(report.sites, 1);
            // one extra statement somewhere, original order intact
            let original_tokens = tree.leaf_texts(tree.root());
            let new_tokens = out.leaf_texts(out.root());
            assert!(new_tokens.len() > original_tokens.len());
            let mut it = new_tokens.iter();
            for tok in &original_tokens {
                assert!(it.any(|t| t == tok), "original token order broken (seed {seed})");
            }
            let inputs: Vec<Vec<Value>> = (0..5).map(|i| vec![Value::Int(i)]).collect();
            assert_equivalent(src, &out, "f", &inputs);
        }
    }

    #[test]
    fn dead_code_names_fresh() {
        let src = "_dead_0 = 1\n_dead_1 = 2\nx = _dead_0 + _dead_1\n";
        let tree = parse_source(src).unwrap();
        for seed in 0..10 {
            let (out, _) = insert_dead_code(&tree, seed);
            let names = out.identifier_names();
            let original_names = tree.identifier_names();
            let fresh: Vec<&String> = names.difference(&original_names).collect();
            for name in fresh {
                // only the fresh _dead_k name and the builtin reference in
                // the len-snippet may appear
                assert!(name.starts_with("_dead_") || name == "len", "{name}");
                assert!(name != "_dead_0" && name != "_dead_1");
            }
        }
    }

    #[test]
    fn dead_code_on_empty_module() {
        let tree = parse_source("").unwrap();
        let (out, report) = insert_dead_code(&tree, 0);
        assert_eq!(report.sites, 1);
        assert_eq!(out.children(out.root()).len(), 1);
    }

    #[test]
    fn variants_deterministic_and_distinct() {
        let src = "def add(a, b):\n    return a + b\n";
        let tree = parse_source(src).unwrap();
        let v1 = generate_variants(&tree, 42, 3);
        let v2 = generate_variants(&tree, 42, 3);
        assert_eq!(v1.len(), 3);
        for (a, b) in v1.iter().zip(&v2) {
            assert_eq!(unparse(a), unparse(b));
        }
        let texts: BTreeSet<String> = v1.iter().map(unparse).collect();
        assert_eq!(texts.len(), 3, "variants collided: {texts:?}");
    }

    #[test]
    fn all_heuristic_subsets_equivalent() {
        let src = "def f(n):\n    s = 0\n    for i in range(n):\n        if i % 2 == 0:\n            s = s + i\n    return s\n";
        let tree = parse_source(src).unwrap();
        let inputs: Vec<Vec<Value>> = (0..6).map(|i| vec![Value::Int(i)]).collect();
        for mask in 1u8..8 {
            let (variant, _) = apply_heuristics(&tree, mask, 11);
            let entry = if mask & 1 != 0 { "FUNC_0" } else { "f" };
            let original = parse_source(src).unwrap();
            for args in &inputs {
                let a = evaluate(&original, Some("f"), args, DEFAULT_STEP_LIMIT);
                let b = evaluate(&variant, Some(entry), args, DEFAULT_STEP_LIMIT);
                assert!(a.semantic_eq(&b), "mask {mask} diverged:\n{}", unparse(&variant));
            }
        }
    }
}

