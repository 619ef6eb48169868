//! The AST and CFG views of a program, both as deterministic token sequences.
//!
//! The AST view is a depth-first pre-order walk: non-leaf nodes contribute
//! their kind label, leaves contribute their text. The CFG view lowers one
//! function or module body into basic blocks joined by typed edges, then
//! linearizes the blocks in reverse post-order with a `<blk>` sentinel
//! between block segments.

use crate::frontend::{NodeId, NodeKind, SyntaxTree};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator emitted between block segments in the linearized CFG view.
pub const BLOCK_SENTINEL: &str = "<blk>";

/// Depth-first pre-order linearization of a syntax tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstTokenSequence {
    pub tokens: Vec<String>,
}

pub fn linearize_ast(tree: &SyntaxTree) -> AstTokenSequence {
    let tokens = tree
        .dfs(tree.root())
        .into_iter()
        .map(|id| match tree.text(id) {
            Some(t) => t.to_string(),
            None => tree.kind(id).label().to_string(),
        })
        .collect();
    AstTokenSequence { tokens }
}

/// Node-kind labels of the tree in the same pre-order. Renaming identifiers
/// must leave this sequence untouched.
pub fn node_kind_sequence(tree: &SyntaxTree) -> Vec<&'static str> {
    tree.dfs(tree.root()).into_iter().map(|id| tree.kind(id).label()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Seq,
    BranchTrue,
    BranchFalse,
    LoopBack,
    LoopExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// Where a statement sits in its suite; insertion point for dead code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StmtAnchor {
    pub suite: NodeId,
    pub index: usize,
}

/// One entry of a basic block: a statement subtree, or a branch condition /
/// loop header expression (those carry no anchor).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockItem {
    pub node: NodeId,
    pub anchor: Option<StmtAnchor>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: usize,
    pub items: Vec<BlockItem>,
}

impl BasicBlock {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Control-flow graph of one body. Block 0 is the (empty) entry, the last
/// block is the (empty) exit; interior blocks are non-empty and reachable
/// from the entry by construction. Statements that can never execute
/// (a suite tail after `return`/`break`/`continue`) are not represented.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlFlowGraph {
    pub blocks: Vec<BasicBlock>,
    pub edges: Vec<Edge>,
}

impl ControlFlowGraph {
    pub fn entry(&self) -> usize {
        0
    }

    pub fn exit(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn successors(&self, block: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.src == block)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("unsupported statement kind {kind:?} in CFG construction")]
    UnsupportedStatement { kind: String },
}

/// Pick the body the CFG should describe: the body of a lone top-level
/// function, otherwise the module itself.
pub fn cfg_scope(tree: &SyntaxTree) -> NodeId {
    let root = tree.root();
    let stmts = tree.children(root);
    if stmts.len() == 1 && tree.kind(stmts[0]) == NodeKind::FunctionDef {
        let def = tree.children(stmts[0]);
        return def[4]; // block
    }
    root
}

/// Build the CFG of [`cfg_scope`].
pub fn build_cfg(tree: &SyntaxTree) -> Result<ControlFlowGraph, CfgError> {
    build_cfg_for(tree, cfg_scope(tree))
}

/// Exit placeholder while blocks are still being created.
const VIRTUAL_EXIT: usize = usize::MAX;

/// Build the CFG for the statements of `body` (a block node or the module
/// root).
pub fn build_cfg_for(tree: &SyntaxTree, body: NodeId) -> Result<ControlFlowGraph, CfgError> {
    let mut b = Builder {
        tree,
        items: vec![Vec::new()], // entry
        edges: Vec::new(),
    };
    let end = b.lower_suite(body, vec![(0, EdgeKind::Seq)], None)?;
    for (src, kind) in end {
        b.edges.push((src, kind, VIRTUAL_EXIT));
    }
    let exit = b.items.len();
    b.items.push(Vec::new());
    let blocks = b
        .items
        .into_iter()
        .enumerate()
        .map(|(id, items)| BasicBlock { id, items })
        .collect();
    let mut edges: Vec<Edge> = b
        .edges
        .into_iter()
        .map(|(src, kind, dst)| Edge {
            src,
            dst: if dst == VIRTUAL_EXIT { exit } else { dst },
            kind,
        })
        .collect();
    edges.sort_by_key(|e| (e.src, e.kind, e.dst));
    edges.dedup();
    Ok(ControlFlowGraph { blocks, edges })
}

/// Sources (with edge kinds) waiting to be wired to the next block created.
/// An empty frontier means the position is unreachable.
type Frontier = Vec<(usize, EdgeKind)>;

struct LoopCtx {
    cond_block: usize,
    break_edges: Vec<(usize, EdgeKind)>,
}

struct Builder<'t> {
    tree: &'t SyntaxTree,
    items: Vec<Vec<BlockItem>>,
    edges: Vec<(usize, EdgeKind, usize)>,
}

impl<'t> Builder<'t> {
    fn new_block(&mut self, frontier: Frontier) -> usize {
        let id = self.items.len();
        self.items.push(Vec::new());
        for (src, kind) in frontier {
            self.edges.push((src, kind, id));
        }
        id
    }

    fn ensure_open(&mut self, open: &mut Option<usize>, frontier: &mut Frontier) -> usize {
        match *open {
            Some(b) => b,
            None => {
                let b = self.new_block(std::mem::take(frontier));
                *open = Some(b);
                b
            }
        }
    }

    fn lower_suite(
        &mut self,
        suite: NodeId,
        frontier: Frontier,
        mut loop_ctx: Option<&mut LoopCtx>,
    ) -> Result<Frontier, CfgError> {
        let mut frontier = frontier;
        let mut open: Option<usize> = None;
        let stmts: Vec<(usize, NodeId)> =
            self.tree.children(suite).iter().copied().enumerate().collect();
        for (index, stmt) in stmts {
            if frontier.is_empty() && open.is_none() {
                break; // unreachable tail of the suite
            }
            let anchor = Some(StmtAnchor { suite, index });
            match self.tree.kind(stmt) {
                NodeKind::Assignment
                | NodeKind::AnnotatedAssignment
                | NodeKind::AugmentedAssignment
                | NodeKind::ExpressionStatement
                | NodeKind::PassStatement
                | NodeKind::FunctionDef => {
                    let b = self.ensure_open(&mut open, &mut frontier);
                    self.items[b].push(BlockItem { node: stmt, anchor });
                }
                NodeKind::ReturnStatement => {
                    let b = self.ensure_open(&mut open, &mut frontier);
                    self.items[b].push(BlockItem { node: stmt, anchor });
                    self.edges.push((b, EdgeKind::Seq, VIRTUAL_EXIT));
                    frontier = Vec::new();
                    open = None;
                }
                NodeKind::BreakStatement => {
                    let b = self.ensure_open(&mut open, &mut frontier);
                    self.items[b].push(BlockItem { node: stmt, anchor });
                    if let Some(ctx) = loop_ctx.as_deref_mut() {
                        ctx.break_edges.push((b, EdgeKind::LoopExit));
                    }
                    frontier = Vec::new();
                    open = None;
                }
                NodeKind::ContinueStatement => {
                    let b = self.ensure_open(&mut open, &mut frontier);
                    self.items[b].push(BlockItem { node: stmt, anchor });
                    if let Some(ctx) = loop_ctx.as_deref_mut() {
                        self.edges.push((b, EdgeKind::LoopBack, ctx.cond_block));
                    }
                    frontier = Vec::new();
                    open = None;
                }
                NodeKind::IfStatement => {
                    let cond_block = self.ensure_open(&mut open, &mut frontier);
                    frontier = self.lower_if(stmt, cond_block, loop_ctx.as_deref_mut())?;
                    open = None;
                }
                NodeKind::WhileStatement | NodeKind::ForStatement => {
                    let mut pends = std::mem::take(&mut frontier);
                    if let Some(b) = open.take() {
                        pends.push((b, EdgeKind::Seq));
                    }
                    frontier = self.lower_loop(stmt, pends)?;
                }
                other => {
                    return Err(CfgError::UnsupportedStatement {
                        kind: other.label().to_string(),
                    })
                }
            }
        }
        if let Some(b) = open {
            frontier.push((b, EdgeKind::Seq));
        }
        Ok(frontier)
    }

    fn lower_if(
        &mut self,
        stmt: NodeId,
        cond_block: usize,
        mut loop_ctx: Option<&mut LoopCtx>,
    ) -> Result<Frontier, CfgError> {
        let ch = self.tree.children(stmt).to_vec();
        // children: if, cond, :, block, (elif-clause | else-clause)*
        self.items[cond_block].push(BlockItem { node: ch[1], anchor: None });
        let mut joined: Frontier = Vec::new();
        let then_end = self.lower_suite(
            ch[3],
            vec![(cond_block, EdgeKind::BranchTrue)],
            loop_ctx.as_deref_mut(),
        )?;
        joined.extend(then_end);

        let mut false_frontier = vec![(cond_block, EdgeKind::BranchFalse)];
        for &clause in &ch[4..] {
            let cch = self.tree.children(clause).to_vec();
            match self.tree.kind(clause) {
                NodeKind::ElifClause => {
                    let elif_cond = self.new_block(false_frontier);
                    self.items[elif_cond].push(BlockItem { node: cch[1], anchor: None });
                    let arm_end = self.lower_suite(
                        cch[3],
                        vec![(elif_cond, EdgeKind::BranchTrue)],
                        loop_ctx.as_deref_mut(),
                    )?;
                    joined.extend(arm_end);
                    false_frontier = vec![(elif_cond, EdgeKind::BranchFalse)];
                }
                NodeKind::ElseClause => {
                    let arm_end =
                        self.lower_suite(cch[2], false_frontier, loop_ctx.as_deref_mut())?;
                    joined.extend(arm_end);
                    false_frontier = Vec::new();
                }
                other => {
                    return Err(CfgError::UnsupportedStatement {
                        kind: other.label().to_string(),
                    })
                }
            }
        }
        joined.extend(false_frontier); // no else: condition falls through
        Ok(joined)
    }

    fn lower_loop(&mut self, stmt: NodeId, pends: Frontier) -> Result<Frontier, CfgError> {
        let ch = self.tree.children(stmt).to_vec();
        let cond_block = self.new_block(pends);
        let body = match self.tree.kind(stmt) {
            NodeKind::WhileStatement => {
                // children: while, cond, :, block
                self.items[cond_block].push(BlockItem { node: ch[1], anchor: None });
                ch[3]
            }
            NodeKind::ForStatement => {
                // children: for, target, in, iter, :, block
                self.items[cond_block].push(BlockItem { node: ch[1], anchor: None });
                self.items[cond_block].push(BlockItem { node: ch[3], anchor: None });
                ch[5]
            }
            _ => unreachable!(),
        };
        let mut ctx = LoopCtx { cond_block, break_edges: Vec::new() };
        let body_end = self.lower_suite(
            body,
            vec![(cond_block, EdgeKind::BranchTrue)],
            Some(&mut ctx),
        )?;
        for (src, kind) in body_end {
            // plain fall-through becomes the loop's back edge; a branch or
            // inner-loop exit landing here keeps its kind so branch pairs
            // stay typed, it just targets the condition block
            let kind = if kind == EdgeKind::Seq { EdgeKind::LoopBack } else { kind };
            self.edges.push((src, kind, cond_block));
        }
        let mut out = vec![(cond_block, EdgeKind::LoopExit)];
        out.extend(ctx.break_edges);
        Ok(out)
    }
}

/// Linearized CFG view: block token segments in reverse post-order joined
/// by [`BLOCK_SENTINEL`]. Loop back-edges exist in the graph but are
/// traversed once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfgTokenSequence {
    pub tokens: Vec<String>,
}

pub fn linearize_cfg(tree: &SyntaxTree, cfg: &ControlFlowGraph) -> CfgTokenSequence {
    let order = reverse_post_order(cfg);
    let mut tokens = Vec::new();
    let mut first = true;
    for block in order {
        let items = &cfg.blocks[block].items;
        if items.is_empty() {
            continue;
        }
        if !first {
            tokens.push(BLOCK_SENTINEL.to_string());
        }
        for item in items {
            tokens.extend(item_tokens(tree, item));
        }
        first = false;
    }
    CfgTokenSequence { tokens }
}

/// Canonical token texts of one block item (a statement subtree or a
/// branch/loop-header expression): grouping parentheses re-derived, so the
/// emitted tokens carry the structure the statement actually has.
pub fn item_tokens(tree: &SyntaxTree, item: &BlockItem) -> Vec<String> {
    let text = if is_statement_kind(tree.kind(item.node)) {
        crate::frontend::unparse_statement(tree, item.node)
    } else {
        crate::frontend::unparse_expression(tree, item.node)
    };
    crate::typing::canonical_token_texts(&text)
}

fn is_statement_kind(kind: NodeKind) -> bool {
    matches!(
        kind,
        NodeKind::Assignment
            | NodeKind::AnnotatedAssignment
            | NodeKind::AugmentedAssignment
            | NodeKind::ExpressionStatement
            | NodeKind::ReturnStatement
            | NodeKind::BreakStatement
            | NodeKind::ContinueStatement
            | NodeKind::PassStatement
            | NodeKind::FunctionDef
            | NodeKind::IfStatement
            | NodeKind::WhileStatement
            | NodeKind::ForStatement
    )
}

/// Reverse post-order from the entry. Ties break branch-true before
/// branch-false, then by ascending destination block id.
pub fn reverse_post_order(cfg: &ControlFlowGraph) -> Vec<usize> {
    fn rank(kind: EdgeKind) -> u8 {
        match kind {
            EdgeKind::BranchTrue => 0,
            EdgeKind::BranchFalse => 1,
            EdgeKind::LoopExit => 2,
            EdgeKind::Seq => 3,
            EdgeKind::LoopBack => 4,
        }
    }
    let mut visited = vec![false; cfg.blocks.len()];
    let mut postorder = Vec::new();
    enum Step {
        Enter(usize),
        Leave(usize),
    }
    let mut stack = vec![Step::Enter(cfg.entry())];
    while let Some(step) = stack.pop() {
        match step {
            Step::Enter(b) => {
                if visited[b] {
                    continue;
                }
                visited[b] = true;
                stack.push(Step::Leave(b));
                let mut succ: Vec<(u8, usize)> =
                    cfg.successors(b).map(|e| (rank(e.kind), e.dst)).collect();
                succ.sort();
                succ.dedup();
                // preferred successor pushed first so it is popped last and
                // finishes last, putting it earliest in the reversed order
                for (_, dst) in succ {
                    stack.push(Step::Enter(dst));
                }
            }
            Step::Leave(b) => postorder.push(b),
        }
    }
    postorder.reverse();
    postorder
}
