use serde::{Deserialize, Serialize};

/// Index of a node inside its [`SyntaxTree`] arena.
pub type NodeId = usize;

/// Node kinds for the supported subset. Non-leaf kinds label grammar
/// constructs; leaf kinds classify source tokens. The kind label strings
/// (see [`NodeKind::label`]) are the vocabulary of the AST view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    // non-leaf
    Module,
    FunctionDef,
    Parameters,
    Block,
    IfStatement,
    ElifClause,
    ElseClause,
    WhileStatement,
    ForStatement,
    ReturnStatement,
    BreakStatement,
    ContinueStatement,
    PassStatement,
    Assignment,
    AnnotatedAssignment,
    AugmentedAssignment,
    ExpressionStatement,
    BooleanOperator,
    Comparison,
    BinaryOperator,
    UnaryOperator,
    Call,
    ArgumentList,
    Attribute,
    Subscript,
    List,
    Tuple,
    Dict,
    Pair,
    // leaves
    Identifier,
    IntLiteral,
    FloatLiteral,
    StringLiteral,
    BoolLiteral,
    NoneLiteral,
    Keyword,
    Operator,
}

impl NodeKind {
    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Module => "module",
            NodeKind::FunctionDef => "function-def",
            NodeKind::Parameters => "parameters",
            NodeKind::Block => "block",
            NodeKind::IfStatement => "if-statement",
            NodeKind::ElifClause => "elif-clause",
            NodeKind::ElseClause => "else-clause",
            NodeKind::WhileStatement => "while-statement",
            NodeKind::ForStatement => "for-statement",
            NodeKind::ReturnStatement => "return-statement",
            NodeKind::BreakStatement => "break-statement",
            NodeKind::ContinueStatement => "continue-statement",
            NodeKind::PassStatement => "pass-statement",
            NodeKind::Assignment => "assignment",
            NodeKind::AnnotatedAssignment => "annotated-assignment",
            NodeKind::AugmentedAssignment => "augmented-assignment",
            NodeKind::ExpressionStatement => "expression-statement",
            NodeKind::BooleanOperator => "boolean-operator",
            NodeKind::Comparison => "comparison",
            NodeKind::BinaryOperator => "binary-operator",
            NodeKind::UnaryOperator => "unary-operator",
            NodeKind::Call => "call",
            NodeKind::ArgumentList => "argument-list",
            NodeKind::Attribute => "attribute",
            NodeKind::Subscript => "subscript",
            NodeKind::List => "list",
            NodeKind::Tuple => "tuple",
            NodeKind::Dict => "dict",
            NodeKind::Pair => "pair",
            NodeKind::Identifier => "identifier",
            NodeKind::IntLiteral => "int-literal",
            NodeKind::FloatLiteral => "float-literal",
            NodeKind::StringLiteral => "string-literal",
            NodeKind::BoolLiteral => "bool-literal",
            NodeKind::NoneLiteral => "none-literal",
            NodeKind::Keyword => "keyword",
            NodeKind::Operator => "operator",
        }
    }

    pub fn is_leaf(self) -> bool {
        matches!(
            self,
            NodeKind::Identifier
                | NodeKind::IntLiteral
                | NodeKind::FloatLiteral
                | NodeKind::StringLiteral
                | NodeKind::BoolLiteral
                | NodeKind::NoneLiteral
                | NodeKind::Keyword
                | NodeKind::Operator
        )
    }
}

/// (line, col) of the first token under a node; (1, 1) for synthesized nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntaxNode {
    pub kind: NodeKind,
    pub span: Span,
    pub children: Vec<NodeId>,
    /// Source text; `Some` exactly for leaves.
    pub text: Option<String>,
}

/// Arena-backed syntax tree. The root is always a `module` node. Transforms
/// build new trees rather than mutating shared ones, so ids stay stable for
/// the lifetime of a tree.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntaxTree {
    nodes: Vec<SyntaxNode>,
    root: NodeId,
}

impl SyntaxTree {
    pub fn new() -> Self {
        let root = SyntaxNode {
            kind: NodeKind::Module,
            span: Span { line: 1, col: 1 },
            children: Vec::new(),
            text: None,
        };
        SyntaxTree { nodes: vec![root], root: 0 }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> &SyntaxNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SyntaxNode {
        &mut self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id].kind
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id].children
    }

    pub fn text(&self, id: NodeId) -> Option<&str> {
        self.nodes[id].text.as_deref()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.nodes[id].kind.is_leaf()
    }

    pub fn push_interior(&mut self, kind: NodeKind, span: Span) -> NodeId {
        self.nodes.push(SyntaxNode { kind, span, children: Vec::new(), text: None });
        self.nodes.len() - 1
    }

    pub fn push_leaf(&mut self, kind: NodeKind, span: Span, text: impl Into<String>) -> NodeId {
        self.nodes.push(SyntaxNode { kind, span, children: Vec::new(), text: Some(text.into()) });
        self.nodes.len() - 1
    }

    pub fn add_child(&mut self, parent: NodeId, child: NodeId) {
        self.nodes[parent].children.push(child);
    }

    /// Node ids in depth-first pre-order starting at `id`.
    pub fn dfs(&self, id: NodeId) -> Vec<NodeId> {
        let mut order = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            order.push(n);
            for &c in self.nodes[n].children.iter().rev() {
                stack.push(c);
            }
        }
        order
    }

    /// Leaf texts under `id` in source order: the PL token view of a subtree.
    pub fn leaf_texts(&self, id: NodeId) -> Vec<String> {
        self.dfs(id)
            .into_iter()
            .filter_map(|n| self.nodes[n].text.clone())
            .collect()
    }

    /// Leaf node ids under `id` in source order.
    pub fn leaf_ids(&self, id: NodeId) -> Vec<NodeId> {
        self.dfs(id).into_iter().filter(|&n| self.is_leaf(n)).collect()
    }

    /// Structural equality from the roots down: node kinds and leaf texts,
    /// ignoring spans. This is the round-trip comparison.
    pub fn structural_eq(&self, other: &SyntaxTree) -> bool {
        fn eq(a: &SyntaxTree, an: NodeId, b: &SyntaxTree, bn: NodeId) -> bool {
            let (na, nb) = (a.node(an), b.node(bn));
            na.kind == nb.kind
                && na.text == nb.text
                && na.children.len() == nb.children.len()
                && na
                    .children
                    .iter()
                    .zip(&nb.children)
                    .all(|(&ca, &cb)| eq(a, ca, b, cb))
        }
        eq(self, self.root, other, other.root)
    }

    /// Deep-copy the subtree at `src_id` in `src` into this tree, returning
    /// the new id. Used by the transforms when splicing rewritten fragments.
    pub fn import(&mut self, src: &SyntaxTree, src_id: NodeId) -> NodeId {
        let node = src.node(src_id);
        let new_id = match &node.text {
            Some(t) => self.push_leaf(node.kind, node.span, t.clone()),
            None => self.push_interior(node.kind, node.span),
        };
        for &c in &node.children {
            let nc = self.import(src, c);
            self.add_child(new_id, nc);
        }
        new_id
    }

    /// All distinct identifier-leaf texts in the tree.
    pub fn identifier_names(&self) -> std::collections::BTreeSet<String> {
        self.dfs(self.root)
            .into_iter()
            .filter(|&n| self.kind(n) == NodeKind::Identifier)
            .filter_map(|n| self.text(n).map(str::to_owned))
            .collect()
    }
}

impl Default for SyntaxTree {
    fn default() -> Self {
        Self::new()
    }
}
