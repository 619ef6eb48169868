use super::lexer::{Token, TokenKind};
use super::tree::{NodeId, NodeKind, Span, SyntaxTree};
use super::ParseFailure;

/// Parse a token stream (from [`super::tokenize`]) into a syntax tree.
///
/// The tree keeps every source token as a leaf: keywords, operators, and
/// structural punctuation included. Grouping parentheses are the one
/// exception; the unparser re-derives them from precedence.
pub fn parse(tokens: &[Token]) -> Result<SyntaxTree, ParseFailure> {
    let mut p = Parser { tokens, pos: 0, tree: SyntaxTree::new(), depth: 0 };
    let root = p.tree.root();
    while !p.at_end() {
        let stmt = p.statement()?;
        p.tree.add_child(root, stmt);
    }
    // uniform bound on tree depth so every recursive consumer (unparser,
    // interpreter, transforms) stays within stack limits
    if tree_depth(&p.tree) > MAX_TREE_DEPTH {
        return Err(ParseFailure::new("program nesting too deep", 1, 1));
    }
    Ok(p.tree)
}

/// Parser recursion bound: deeper paren/statement nesting is rejected.
const MAX_NESTING_DEPTH: usize = 200;
/// Bound on the resulting tree's depth (long unary chains parse
/// iteratively but still build deep trees).
const MAX_TREE_DEPTH: usize = 500;

fn tree_depth(tree: &SyntaxTree) -> usize {
    let mut max = 0;
    let mut stack = vec![(tree.root(), 1usize)];
    while let Some((node, depth)) = stack.pop() {
        max = max.max(depth);
        for &c in tree.children(node) {
            stack.push((c, depth + 1));
        }
    }
    max
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    tree: SyntaxTree,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<TokenKind> {
        self.peek().map(|t| t.kind)
    }

    fn bump(&mut self) -> &Token {
        let t = &self.tokens[self.pos];
        self.pos += 1;
        t
    }

    fn span_here(&self) -> Span {
        match self.peek() {
            Some(t) => Span { line: t.line, col: t.col },
            None => self
                .tokens
                .last()
                .map(|t| Span { line: t.line, col: t.col })
                .unwrap_or(Span { line: 1, col: 1 }),
        }
    }

    fn unexpected(&self, expected: &str) -> ParseFailure {
        match self.peek() {
            Some(t) => {
                let shown = match t.kind {
                    TokenKind::Indent => "<indent>".to_string(),
                    TokenKind::Dedent => "<dedent>".to_string(),
                    TokenKind::Newline => "<newline>".to_string(),
                    _ => format!("'{}'", t.text),
                };
                ParseFailure::new(format!("expected {expected}, found {shown}"), t.line, t.col)
            }
            None => {
                let s = self.span_here();
                ParseFailure::new(format!("expected {expected}, found end of input"), s.line, s.col)
            }
        }
    }

    fn at_op(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.kind == TokenKind::Operator && t.text == text)
    }

    fn at_kw(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.kind == TokenKind::Keyword && t.text == text)
    }

    /// Consume the next token as a leaf node of the given kind.
    fn leaf(&mut self, kind: NodeKind) -> NodeId {
        let t = self.bump().clone();
        self.tree.push_leaf(kind, Span { line: t.line, col: t.col }, t.text)
    }

    fn expect_op(&mut self, text: &str) -> Result<NodeId, ParseFailure> {
        if self.at_op(text) {
            Ok(self.leaf(NodeKind::Operator))
        } else {
            Err(self.unexpected(&format!("'{text}'")))
        }
    }

    fn expect_kw(&mut self, text: &str) -> Result<NodeId, ParseFailure> {
        if self.at_kw(text) {
            Ok(self.leaf(NodeKind::Keyword))
        } else {
            Err(self.unexpected(&format!("'{text}'")))
        }
    }

    fn expect_newline(&mut self) -> Result<(), ParseFailure> {
        if self.peek_kind() == Some(TokenKind::Newline) {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected("end of line"))
        }
    }

    fn expect_identifier_leaf(&mut self) -> Result<NodeId, ParseFailure> {
        if self.peek_kind() == Some(TokenKind::Identifier) {
            Ok(self.leaf(NodeKind::Identifier))
        } else {
            Err(self.unexpected("an identifier"))
        }
    }

    // ---- statements ----

    fn statement(&mut self) -> Result<NodeId, ParseFailure> {
        if self.depth >= MAX_NESTING_DEPTH {
            return Err(self.unexpected("shallower nesting"));
        }
        self.depth += 1;
        let result = self.statement_inner();
        self.depth -= 1;
        result
    }

    fn statement_inner(&mut self) -> Result<NodeId, ParseFailure> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Keyword => match t.text.as_str() {
                "if" => self.if_statement(),
                "while" => self.while_statement(),
                "for" => self.for_statement(),
                "def" => self.function_def(),
                "return" | "break" | "continue" | "pass" => {
                    let stmt = self.simple_keyword_statement()?;
                    self.expect_newline()?;
                    Ok(stmt)
                }
                "True" | "False" | "None" | "not" => {
                    let stmt = self.expr_or_assignment()?;
                    self.expect_newline()?;
                    Ok(stmt)
                }
                other => Err(self.unexpected(&format!("a statement (not '{other}')"))),
            },
            Some(_) => {
                let stmt = self.expr_or_assignment()?;
                self.expect_newline()?;
                Ok(stmt)
            }
            None => Err(self.unexpected("a statement")),
        }
    }

    fn simple_keyword_statement(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let kw = self.peek().unwrap().text.clone();
        let (kind, takes_value) = match kw.as_str() {
            "return" => (NodeKind::ReturnStatement, true),
            "break" => (NodeKind::BreakStatement, false),
            "continue" => (NodeKind::ContinueStatement, false),
            "pass" => (NodeKind::PassStatement, false),
            _ => unreachable!(),
        };
        let node = self.tree.push_interior(kind, span);
        let kw_leaf = self.leaf(NodeKind::Keyword);
        self.tree.add_child(node, kw_leaf);
        if takes_value && self.peek_kind() != Some(TokenKind::Newline) {
            let value = self.expression()?;
            self.tree.add_child(node, value);
        }
        Ok(node)
    }

    fn expr_or_assignment(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let first = self.expression()?;
        if self.at_op("=") {
            self.check_target(first)?;
            let node = self.tree.push_interior(NodeKind::Assignment, span);
            let eq = self.leaf(NodeKind::Operator);
            let value = self.expression()?;
            self.tree.add_child(node, first);
            self.tree.add_child(node, eq);
            self.tree.add_child(node, value);
            Ok(node)
        } else if self.at_op(":") {
            self.check_target(first)?;
            let node = self.tree.push_interior(NodeKind::AnnotatedAssignment, span);
            let colon = self.leaf(NodeKind::Operator);
            let annotation = self.expression()?;
            self.tree.add_child(node, first);
            self.tree.add_child(node, colon);
            self.tree.add_child(node, annotation);
            if self.at_op("=") {
                let eq = self.leaf(NodeKind::Operator);
                let value = self.expression()?;
                self.tree.add_child(node, eq);
                self.tree.add_child(node, value);
            }
            Ok(node)
        } else if let Some(op) = AUG_OPS.iter().find(|op| self.at_op(op)) {
            let _ = op;
            self.check_target(first)?;
            let node = self.tree.push_interior(NodeKind::AugmentedAssignment, span);
            let op_leaf = self.leaf(NodeKind::Operator);
            let value = self.expression()?;
            self.tree.add_child(node, first);
            self.tree.add_child(node, op_leaf);
            self.tree.add_child(node, value);
            Ok(node)
        } else {
            let node = self.tree.push_interior(NodeKind::ExpressionStatement, span);
            self.tree.add_child(node, first);
            Ok(node)
        }
    }

    fn check_target(&self, target: NodeId) -> Result<(), ParseFailure> {
        match self.tree.kind(target) {
            NodeKind::Identifier | NodeKind::Attribute | NodeKind::Subscript => Ok(()),
            _ => {
                let s = self.tree.node(target).span;
                Err(ParseFailure::new("invalid assignment target", s.line, s.col))
            }
        }
    }

    fn if_statement(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let node = self.tree.push_interior(NodeKind::IfStatement, span);
        let kw = self.expect_kw("if")?;
        let cond = self.expression()?;
        let colon = self.expect_op(":")?;
        let block = self.block()?;
        for c in [kw, cond, colon, block] {
            self.tree.add_child(node, c);
        }
        while self.at_kw("elif") {
            let espan = self.span_here();
            let clause = self.tree.push_interior(NodeKind::ElifClause, espan);
            let kw = self.expect_kw("elif")?;
            let cond = self.expression()?;
            let colon = self.expect_op(":")?;
            let block = self.block()?;
            for c in [kw, cond, colon, block] {
                self.tree.add_child(clause, c);
            }
            self.tree.add_child(node, clause);
        }
        if self.at_kw("else") {
            let espan = self.span_here();
            let clause = self.tree.push_interior(NodeKind::ElseClause, espan);
            let kw = self.expect_kw("else")?;
            let colon = self.expect_op(":")?;
            let block = self.block()?;
            for c in [kw, colon, block] {
                self.tree.add_child(clause, c);
            }
            self.tree.add_child(node, clause);
        }
        Ok(node)
    }

    fn while_statement(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let node = self.tree.push_interior(NodeKind::WhileStatement, span);
        let kw = self.expect_kw("while")?;
        let cond = self.expression()?;
        let colon = self.expect_op(":")?;
        let block = self.block()?;
        for c in [kw, cond, colon, block] {
            self.tree.add_child(node, c);
        }
        Ok(node)
    }

    fn for_statement(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let node = self.tree.push_interior(NodeKind::ForStatement, span);
        let kw = self.expect_kw("for")?;
        let target = self.expect_identifier_leaf()?;
        let in_kw = self.expect_kw("in")?;
        let iter = self.expression()?;
        let colon = self.expect_op(":")?;
        let block = self.block()?;
        for c in [kw, target, in_kw, iter, colon, block] {
            self.tree.add_child(node, c);
        }
        Ok(node)
    }

    fn function_def(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let node = self.tree.push_interior(NodeKind::FunctionDef, span);
        let kw = self.expect_kw("def")?;
        let name = self.expect_identifier_leaf()?;
        let pspan = self.span_here();
        let params = self.tree.push_interior(NodeKind::Parameters, pspan);
        let open = self.expect_op("(")?;
        self.tree.add_child(params, open);
        if !self.at_op(")") {
            loop {
                let p = self.expect_identifier_leaf()?;
                self.tree.add_child(params, p);
                if self.at_op(",") {
                    let comma = self.leaf(NodeKind::Operator);
                    self.tree.add_child(params, comma);
                } else {
                    break;
                }
            }
        }
        let close = self.expect_op(")")?;
        self.tree.add_child(params, close);
        let colon = self.expect_op(":")?;
        let block = self.block()?;
        for c in [kw, name, params, colon, block] {
            self.tree.add_child(node, c);
        }
        Ok(node)
    }

    fn block(&mut self) -> Result<NodeId, ParseFailure> {
        self.expect_newline()?;
        if self.peek_kind() != Some(TokenKind::Indent) {
            return Err(self.unexpected("an indented block"));
        }
        self.bump();
        let span = self.span_here();
        let block = self.tree.push_interior(NodeKind::Block, span);
        loop {
            match self.peek_kind() {
                Some(TokenKind::Dedent) => {
                    self.bump();
                    break;
                }
                Some(_) => {
                    let stmt = self.statement()?;
                    self.tree.add_child(block, stmt);
                }
                None => return Err(self.unexpected("a statement or dedent")),
            }
        }
        if self.tree.children(block).is_empty() {
            let s = self.tree.node(block).span;
            return Err(ParseFailure::new("empty block", s.line, s.col));
        }
        Ok(block)
    }

    // ---- expressions ----

    fn expression(&mut self) -> Result<NodeId, ParseFailure> {
        if self.depth >= MAX_NESTING_DEPTH {
            return Err(self.unexpected("shallower nesting"));
        }
        self.depth += 1;
        let result = self.or_expr();
        self.depth -= 1;
        result
    }

    fn or_expr(&mut self) -> Result<NodeId, ParseFailure> {
        let mut lhs = self.and_expr()?;
        while self.at_kw("or") {
            let span = self.tree.node(lhs).span;
            let node = self.tree.push_interior(NodeKind::BooleanOperator, span);
            let op = self.leaf(NodeKind::Keyword);
            let rhs = self.and_expr()?;
            for c in [lhs, op, rhs] {
                self.tree.add_child(node, c);
            }
            lhs = node;
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<NodeId, ParseFailure> {
        let mut lhs = self.not_expr()?;
        while self.at_kw("and") {
            let span = self.tree.node(lhs).span;
            let node = self.tree.push_interior(NodeKind::BooleanOperator, span);
            let op = self.leaf(NodeKind::Keyword);
            let rhs = self.not_expr()?;
            for c in [lhs, op, rhs] {
                self.tree.add_child(node, c);
            }
            lhs = node;
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> Result<NodeId, ParseFailure> {
        // iterative over `not not ...` chains
        let mut ops = Vec::new();
        while self.at_kw("not") {
            let span = self.span_here();
            let op = self.leaf(NodeKind::Keyword);
            ops.push((span, op));
        }
        let mut expr = self.comparison()?;
        for (span, op) in ops.into_iter().rev() {
            let node = self.tree.push_interior(NodeKind::UnaryOperator, span);
            self.tree.add_child(node, op);
            self.tree.add_child(node, expr);
            expr = node;
        }
        Ok(expr)
    }

    fn comparison(&mut self) -> Result<NodeId, ParseFailure> {
        let lhs = self.arith()?;
        let is_comp = COMPARE_OPS.iter().any(|op| self.at_op(op));
        if is_comp {
            let span = self.tree.node(lhs).span;
            let node = self.tree.push_interior(NodeKind::Comparison, span);
            let op = self.leaf(NodeKind::Operator);
            let rhs = self.arith()?;
            for c in [lhs, op, rhs] {
                self.tree.add_child(node, c);
            }
            // chained comparisons are outside the subset
            if COMPARE_OPS.iter().any(|op| self.at_op(op)) {
                return Err(self.unexpected("no further comparison (chains unsupported)"));
            }
            Ok(node)
        } else {
            Ok(lhs)
        }
    }

    fn arith(&mut self) -> Result<NodeId, ParseFailure> {
        let mut lhs = self.term()?;
        while self.at_op("+") || self.at_op("-") {
            let span = self.tree.node(lhs).span;
            let node = self.tree.push_interior(NodeKind::BinaryOperator, span);
            let op = self.leaf(NodeKind::Operator);
            let rhs = self.term()?;
            for c in [lhs, op, rhs] {
                self.tree.add_child(node, c);
            }
            lhs = node;
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<NodeId, ParseFailure> {
        let mut lhs = self.factor()?;
        while ["*", "/", "//", "%"].iter().any(|op| self.at_op(op)) {
            let span = self.tree.node(lhs).span;
            let node = self.tree.push_interior(NodeKind::BinaryOperator, span);
            let op = self.leaf(NodeKind::Operator);
            let rhs = self.factor()?;
            for c in [lhs, op, rhs] {
                self.tree.add_child(node, c);
            }
            lhs = node;
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<NodeId, ParseFailure> {
        // guards the `**` exponent recursion, which re-enters here
        if self.depth >= MAX_NESTING_DEPTH {
            return Err(self.unexpected("shallower nesting"));
        }
        self.depth += 1;
        let result = self.factor_inner();
        self.depth -= 1;
        result
    }

    fn factor_inner(&mut self) -> Result<NodeId, ParseFailure> {
        // iterative over `--x` chains
        let mut ops = Vec::new();
        while self.at_op("-") {
            let span = self.span_here();
            let op = self.leaf(NodeKind::Operator);
            ops.push((span, op));
        }
        let mut expr = self.power()?;
        for (span, op) in ops.into_iter().rev() {
            let node = self.tree.push_interior(NodeKind::UnaryOperator, span);
            self.tree.add_child(node, op);
            self.tree.add_child(node, expr);
            expr = node;
        }
        Ok(expr)
    }

    fn power(&mut self) -> Result<NodeId, ParseFailure> {
        let base = self.postfix()?;
        if self.at_op("**") {
            let span = self.tree.node(base).span;
            let node = self.tree.push_interior(NodeKind::BinaryOperator, span);
            let op = self.leaf(NodeKind::Operator);
            // right-associative; unary minus allowed on the exponent
            let exp = self.factor()?;
            for c in [base, op, exp] {
                self.tree.add_child(node, c);
            }
            Ok(node)
        } else {
            Ok(base)
        }
    }

    fn postfix(&mut self) -> Result<NodeId, ParseFailure> {
        let mut expr = self.atom()?;
        loop {
            if self.at_op("(") {
                let span = self.tree.node(expr).span;
                let node = self.tree.push_interior(NodeKind::Call, span);
                let args = self.argument_list()?;
                self.tree.add_child(node, expr);
                self.tree.add_child(node, args);
                expr = node;
            } else if self.at_op(".") {
                let span = self.tree.node(expr).span;
                let node = self.tree.push_interior(NodeKind::Attribute, span);
                let dot = self.leaf(NodeKind::Operator);
                let name = self.expect_identifier_leaf()?;
                for c in [expr, dot, name] {
                    self.tree.add_child(node, c);
                }
                expr = node;
            } else if self.at_op("[") {
                let span = self.tree.node(expr).span;
                let node = self.tree.push_interior(NodeKind::Subscript, span);
                let open = self.leaf(NodeKind::Operator);
                let index = self.expression()?;
                let close = self.expect_op("]")?;
                for c in [expr, open, index, close] {
                    self.tree.add_child(node, c);
                }
                expr = node;
            } else {
                return Ok(expr);
            }
        }
    }

    fn argument_list(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let node = self.tree.push_interior(NodeKind::ArgumentList, span);
        let open = self.expect_op("(")?;
        self.tree.add_child(node, open);
        if !self.at_op(")") {
            loop {
                let arg = self.expression()?;
                self.tree.add_child(node, arg);
                if self.at_op(",") {
                    let comma = self.leaf(NodeKind::Operator);
                    self.tree.add_child(node, comma);
                } else {
                    break;
                }
            }
        }
        let close = self.expect_op(")")?;
        self.tree.add_child(node, close);
        Ok(node)
    }

    fn atom(&mut self) -> Result<NodeId, ParseFailure> {
        match self.peek() {
            Some(t) => match t.kind {
                TokenKind::IntLiteral => Ok(self.leaf(NodeKind::IntLiteral)),
                TokenKind::FloatLiteral => Ok(self.leaf(NodeKind::FloatLiteral)),
                TokenKind::StringLiteral => Ok(self.leaf(NodeKind::StringLiteral)),
                TokenKind::Identifier => Ok(self.leaf(NodeKind::Identifier)),
                TokenKind::Keyword if t.text == "True" || t.text == "False" => {
                    Ok(self.leaf(NodeKind::BoolLiteral))
                }
                TokenKind::Keyword if t.text == "None" => Ok(self.leaf(NodeKind::NoneLiteral)),
                TokenKind::Operator if t.text == "(" => self.paren_or_tuple(),
                TokenKind::Operator if t.text == "[" => self.list_literal(),
                TokenKind::Operator if t.text == "{" => self.dict_literal(),
                _ => Err(self.unexpected("an expression")),
            },
            None => Err(self.unexpected("an expression")),
        }
    }

    /// `(e)` is grouping and contributes no node; `(e, ...)`, `(e,)` and
    /// `()` are tuple literals that keep their punctuation leaves.
    fn paren_or_tuple(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let open_tok = self.bump().clone(); // '('
        if self.at_op(")") {
            let node = self.tree.push_interior(NodeKind::Tuple, span);
            let open = self.tree.push_leaf(
                NodeKind::Operator,
                Span { line: open_tok.line, col: open_tok.col },
                "(",
            );
            self.tree.add_child(node, open);
            let close = self.expect_op(")")?;
            self.tree.add_child(node, close);
            return Ok(node);
        }
        let first = self.expression()?;
        if self.at_op(")") {
            self.bump(); // grouping: drop both parens
            return Ok(first);
        }
        if !self.at_op(",") {
            return Err(self.unexpected("',' or ')'"));
        }
        let node = self.tree.push_interior(NodeKind::Tuple, span);
        let open = self.tree.push_leaf(
            NodeKind::Operator,
            Span { line: open_tok.line, col: open_tok.col },
            "(",
        );
        self.tree.add_child(node, open);
        self.tree.add_child(node, first);
        while self.at_op(",") {
            let comma = self.leaf(NodeKind::Operator);
            self.tree.add_child(node, comma);
            if self.at_op(")") {
                break;
            }
            let elem = self.expression()?;
            self.tree.add_child(node, elem);
        }
        let close = self.expect_op(")")?;
        self.tree.add_child(node, close);
        Ok(node)
    }

    fn list_literal(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let node = self.tree.push_interior(NodeKind::List, span);
        let open = self.expect_op("[")?;
        self.tree.add_child(node, open);
        if !self.at_op("]") {
            loop {
                let elem = self.expression()?;
                self.tree.add_child(node, elem);
                if self.at_op(",") {
                    let comma = self.leaf(NodeKind::Operator);
                    self.tree.add_child(node, comma);
                } else {
                    break;
                }
            }
        }
        let close = self.expect_op("]")?;
        self.tree.add_child(node, close);
        Ok(node)
    }

    fn dict_literal(&mut self) -> Result<NodeId, ParseFailure> {
        let span = self.span_here();
        let node = self.tree.push_interior(NodeKind::Dict, span);
        let open = self.expect_op("{")?;
        self.tree.add_child(node, open);
        if !self.at_op("}") {
            loop {
                let pspan = self.span_here();
                let pair = self.tree.push_interior(NodeKind::Pair, pspan);
                let key = self.expression()?;
                let colon = self.expect_op(":")?;
                let value = self.expression()?;
                for c in [key, colon, value] {
                    self.tree.add_child(pair, c);
                }
                self.tree.add_child(node, pair);
                if self.at_op(",") {
                    let comma = self.leaf(NodeKind::Operator);
                    self.tree.add_child(node, comma);
                } else {
                    break;
                }
            }
        }
        let close = self.expect_op("}")?;
        self.tree.add_child(node, close);
        Ok(node)
    }
}

const AUG_OPS: &[&str] = &["+=", "-=", "*=", "/=", "//=", "%=", "**="];
const COMPARE_OPS: &[&str] = &["<", ">", "<=", ">=", "==", "!="];

#[cfg(test)]
mod tests {
    use super::super::{parse_source, tokenize};
    use super::*;

    fn kinds_of(tree: &SyntaxTree, id: NodeId) -> Vec<NodeKind> {
        tree.children(id).iter().map(|&c| tree.kind(c)).collect()
    }

    #[test]
    fn assignment_three_leaves() {
        let tree = parse_source("y = 0").unwrap();
        let module = tree.root();
        assert_eq!(tree.kind(module), NodeKind::Module);
        assert_eq!(tree.children(module).len(), 1);
        let assign = tree.children(module)[0];
        assert_eq!(tree.kind(assign), NodeKind::Assignment);
        assert_eq!(
            kinds_of(&tree, assign),
            vec![NodeKind::Identifier, NodeKind::Operator, NodeKind::IntLiteral]
        );
        let texts: Vec<&str> =
            tree.children(assign).iter().map(|&c| tree.text(c).unwrap()).collect();
        assert_eq!(texts, vec!["y", "=", "0"]);
    }

    #[test]
    fn pass_statement() {
        let tree = parse_source("pass").unwrap();
        let module = tree.root();
        let stmt = tree.children(module)[0];
        assert_eq!(tree.kind(stmt), NodeKind::PassStatement);
        assert_eq!(kinds_of(&tree, stmt), vec![NodeKind::Keyword]);
    }

    #[test]
    fn function_def_shape() {
        // child kinds and arity per docs/grammar.md
        let tree = parse_source("def f(a):\n    return a\n").unwrap();
        let module = tree.root();
        let def = tree.children(module)[0];
        assert_eq!(tree.kind(def), NodeKind::FunctionDef);
        assert_eq!(
            kinds_of(&tree, def),
            vec![
                NodeKind::Keyword,
                NodeKind::Identifier,
                NodeKind::Parameters,
                NodeKind::Operator,
                NodeKind::Block,
            ]
        );
        assert_eq!(tree.text(tree.children(def)[1]), Some("f"));
        let params = tree.children(def)[2];
        assert_eq!(
            kinds_of(&tree, params),
            vec![NodeKind::Operator, NodeKind::Identifier, NodeKind::Operator]
        );
        let block = tree.children(def)[4];
        assert_eq!(kinds_of(&tree, block), vec![NodeKind::ReturnStatement]);
        let ret = tree.children(block)[0];
        assert_eq!(kinds_of(&tree, ret), vec![NodeKind::Keyword, NodeKind::Identifier]);
    }

    #[test]
    fn grouping_parens_dropped() {
        let a = parse_source("x = (1)").unwrap();
        let b = parse_source("x = 1").unwrap();
        assert!(a.structural_eq(&b));
    }

    #[test]
    fn tuple_keeps_punctuation() {
        let tree = parse_source("x = (1, 2)").unwrap();
        let assign = tree.children(tree.root())[0];
        let tuple = tree.children(assign)[2];
        assert_eq!(tree.kind(tuple), NodeKind::Tuple);
        assert_eq!(tree.children(tuple).len(), 5); // ( 1 , 2 )
    }

    #[test]
    fn single_element_tuple() {
        let tree = parse_source("x = (1,)").unwrap();
        let assign = tree.children(tree.root())[0];
        let tuple = tree.children(assign)[2];
        assert_eq!(tree.kind(tuple), NodeKind::Tuple);
        assert_eq!(tree.children(tuple).len(), 4); // ( 1 , )
    }

    #[test]
    fn precedence_mul_over_add() {
        // 1 + 2 * 3 parses as 1 + (2 * 3)
        let tree = parse_source("x = 1 + 2 * 3").unwrap();
        let assign = tree.children(tree.root())[0];
        let add = tree.children(assign)[2];
        assert_eq!(tree.kind(add), NodeKind::BinaryOperator);
        assert_eq!(tree.text(tree.children(add)[1]), Some("+"));
        let rhs = tree.children(add)[2];
        assert_eq!(tree.kind(rhs), NodeKind::BinaryOperator);
        assert_eq!(tree.text(tree.children(rhs)[1]), Some("*"));
    }

    #[test]
    fn power_right_associative() {
        let a = parse_source("x = 2 ** 3 ** 2").unwrap();
        let b = parse_source("x = 2 ** (3 ** 2)").unwrap();
        assert!(a.structural_eq(&b));
    }

    #[test]
    fn unexpected_token_reported() {
        let toks = tokenize("if x\n    pass\n").unwrap();
        let err = parse(&toks).unwrap_err();
        assert!(err.message.contains("':'"), "got: {}", err.message);
        assert_eq!(err.line, 1);
    }

    #[test]
    fn chained_comparison_rejected() {
        assert!(parse_source("x = 1 < 2 < 3").is_err());
    }

    #[test]
    fn empty_source_is_empty_module() {
        let tree = parse_source("").unwrap();
        assert_eq!(tree.children(tree.root()).len(), 0);
        assert_eq!(tree.len(), 1);
    }

    #[test]
    fn pathological_nesting_rejected_not_overflowed() {
        for src in [
            format!("x = {}1{}", "(".repeat(20_000), ")".repeat(20_000)),
            format!("x = 1{}", " ** 1".repeat(20_000)),
            format!("x = {}True", "not ".repeat(20_000)),
            format!("x = {}1", "-".repeat(20_000)),
            format!("x = {}1{}", "[".repeat(20_000), "]".repeat(20_000)),
        ] {
            assert!(parse_source(&src).is_err(), "must reject: {}...", &src[..24]);
        }
        // moderate nesting stays accepted
        let fine = format!("x = {}1{}", "(".repeat(50), ")".repeat(50));
        assert!(parse_source(&fine).is_ok());
        let chain = format!("x = {}True", "not ".repeat(300));
        assert!(parse_source(&chain).is_ok(), "iterative chains within the tree bound parse");
    }

    #[test]
    fn annotated_assignment_with_and_without_value() {
        let tree = parse_source("x: int = 0\ny: float\n").unwrap();
        let module = tree.root();
        let ann1 = tree.children(module)[0];
        assert_eq!(tree.kind(ann1), NodeKind::AnnotatedAssignment);
        assert_eq!(tree.children(ann1).len(), 5);
        let ann2 = tree.children(module)[1];
        assert_eq!(tree.children(ann2).len(), 3);
    }
}
