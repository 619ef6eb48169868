use super::tree::{NodeId, NodeKind, SyntaxTree};

/// Render a tree back to canonical source: 4-space indentation, single
/// spaces around binary operators, grouping parentheses re-derived from
/// precedence. `parse(unparse(t))` equals `t` node-for-node.
pub fn unparse(tree: &SyntaxTree) -> String {
    let mut out = String::new();
    for &stmt in tree.children(tree.root()) {
        statement(tree, stmt, 0, &mut out);
    }
    out
}

/// Canonical text of a single statement subtree at indent level zero.
pub fn unparse_statement(tree: &SyntaxTree, id: NodeId) -> String {
    let mut out = String::new();
    statement(tree, id, 0, &mut out);
    out
}

/// Canonical text of a single expression subtree, grouping parens included.
pub fn unparse_expression(tree: &SyntaxTree, id: NodeId) -> String {
    let mut out = String::new();
    expr(tree, id, 0, &mut out);
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn statement(tree: &SyntaxTree, id: NodeId, level: usize, out: &mut String) {
    let ch = tree.children(id);
    match tree.kind(id) {
        NodeKind::Assignment => {
            indent(level, out);
            expr(tree, ch[0], 0, out);
            out.push_str(" = ");
            expr(tree, ch[2], 0, out);
            out.push('\n');
        }
        NodeKind::AnnotatedAssignment => {
            indent(level, out);
            expr(tree, ch[0], 0, out);
            out.push_str(": ");
            expr(tree, ch[2], 0, out);
            if ch.len() == 5 {
                out.push_str(" = ");
                expr(tree, ch[4], 0, out);
            }
            out.push('\n');
        }
        NodeKind::AugmentedAssignment => {
            indent(level, out);
            expr(tree, ch[0], 0, out);
            out.push(' ');
            out.push_str(tree.text(ch[1]).unwrap());
            out.push(' ');
            expr(tree, ch[2], 0, out);
            out.push('\n');
        }
        NodeKind::ExpressionStatement => {
            indent(level, out);
            expr(tree, ch[0], 0, out);
            out.push('\n');
        }
        NodeKind::ReturnStatement => {
            indent(level, out);
            out.push_str("return");
            if ch.len() > 1 {
                out.push(' ');
                expr(tree, ch[1], 0, out);
            }
            out.push('\n');
        }
        NodeKind::BreakStatement => {
            indent(level, out);
            out.push_str("break\n");
        }
        NodeKind::ContinueStatement => {
            indent(level, out);
            out.push_str("continue\n");
        }
        NodeKind::PassStatement => {
            indent(level, out);
            out.push_str("pass\n");
        }
        NodeKind::IfStatement => {
            indent(level, out);
            out.push_str("if ");
            expr(tree, ch[1], 0, out);
            out.push_str(":\n");
            block(tree, ch[3], level + 1, out);
            for &clause in &ch[4..] {
                let cch = tree.children(clause);
                match tree.kind(clause) {
                    NodeKind::ElifClause => {
                        indent(level, out);
                        out.push_str("elif ");
                        expr(tree, cch[1], 0, out);
                        out.push_str(":\n");
                        block(tree, cch[3], level + 1, out);
                    }
                    NodeKind::ElseClause => {
                        indent(level, out);
                        out.push_str("else:\n");
                        block(tree, cch[2], level + 1, out);
                    }
                    other => panic!("unexpected if clause: {other:?}"),
                }
            }
        }
        NodeKind::WhileStatement => {
            indent(level, out);
            out.push_str("while ");
            expr(tree, ch[1], 0, out);
            out.push_str(":\n");
            block(tree, ch[3], level + 1, out);
        }
        NodeKind::ForStatement => {
            indent(level, out);
            out.push_str("for ");
            out.push_str(tree.text(ch[1]).unwrap());
            out.push_str(" in ");
            expr(tree, ch[3], 0, out);
            out.push_str(":\n");
            block(tree, ch[5], level + 1, out);
        }
        NodeKind::FunctionDef => {
            indent(level, out);
            out.push_str("def ");
            out.push_str(tree.text(ch[1]).unwrap());
            out.push('(');
            let params = tree.children(ch[2]);
            let mut first = true;
            for &p in params {
                if tree.kind(p) == NodeKind::Identifier {
                    if !first {
                        out.push_str(", ");
                    }
                    out.push_str(tree.text(p).unwrap());
                    first = false;
                }
            }
            out.push_str("):\n");
            block(tree, ch[4], level + 1, out);
        }
        other => panic!("not a statement kind: {other:?}"),
    }
}

fn block(tree: &SyntaxTree, id: NodeId, level: usize, out: &mut String) {
    for &stmt in tree.children(id) {
        statement(tree, stmt, level, out);
    }
}

/// Binding strength of an expression node; higher binds tighter.
fn precedence(tree: &SyntaxTree, id: NodeId) -> u8 {
    match tree.kind(id) {
        NodeKind::BooleanOperator => {
            if tree.text(tree.children(id)[1]) == Some("or") {
                1
            } else {
                2
            }
        }
        NodeKind::UnaryOperator => {
            if tree.text(tree.children(id)[0]) == Some("not") {
                3
            } else {
                7
            }
        }
        NodeKind::Comparison => 4,
        NodeKind::BinaryOperator => match tree.text(tree.children(id)[1]).unwrap() {
            "+" | "-" => 5,
            "*" | "/" | "//" | "%" => 6,
            "**" => 8,
            op => panic!("unknown binary operator {op:?}"),
        },
        NodeKind::Call | NodeKind::Attribute | NodeKind::Subscript => 9,
        _ => 10,
    }
}

/// Emit an expression, parenthesizing when its precedence is below what the
/// surrounding context requires.
fn expr(tree: &SyntaxTree, id: NodeId, min_prec: u8, out: &mut String) {
    let prec = precedence(tree, id);
    let need_parens = prec < min_prec;
    if need_parens {
        out.push('(');
    }
    let ch = tree.children(id);
    match tree.kind(id) {
        NodeKind::Identifier
        | NodeKind::IntLiteral
        | NodeKind::FloatLiteral
        | NodeKind::StringLiteral
        | NodeKind::BoolLiteral
        | NodeKind::NoneLiteral => out.push_str(tree.text(id).unwrap()),
        NodeKind::BooleanOperator | NodeKind::BinaryOperator | NodeKind::Comparison => {
            let op = tree.text(ch[1]).unwrap();
            let (left_min, right_min) = match op {
                "**" => (9, 7),
                // comparisons are non-associative in the subset
                "<" | ">" | "<=" | ">=" | "==" | "!=" => (prec + 1, prec + 1),
                _ => (prec, prec + 1),
            };
            expr(tree, ch[0], left_min, out);
            out.push(' ');
            out.push_str(op);
            out.push(' ');
            expr(tree, ch[2], right_min, out);
        }
        NodeKind::UnaryOperator => {
            let op = tree.text(ch[0]).unwrap();
            out.push_str(op);
            if op == "not" {
                out.push(' ');
            }
            expr(tree, ch[1], prec, out);
        }
        NodeKind::Call => {
            expr(tree, ch[0], 9, out);
            let args = tree.children(ch[1]);
            out.push('(');
            let mut first = true;
            for &a in args {
                if tree.kind(a) == NodeKind::Operator {
                    continue;
                }
                if !first {
                    out.push_str(", ");
                }
                expr(tree, a, 0, out);
                first = false;
            }
            out.push(')');
        }
        NodeKind::Attribute => {
            expr(tree, ch[0], 9, out);
            out.push('.');
            out.push_str(tree.text(ch[2]).unwrap());
        }
        NodeKind::Subscript => {
            expr(tree, ch[0], 9, out);
            out.push('[');
            expr(tree, ch[2], 0, out);
            out.push(']');
        }
        NodeKind::List => {
            out.push('[');
            comma_separated(tree, ch, out);
            out.push(']');
        }
        NodeKind::Tuple => {
            out.push('(');
            let elems: Vec<NodeId> = ch
                .iter()
                .copied()
                .filter(|&c| tree.kind(c) != NodeKind::Operator)
                .collect();
            for (i, &e) in elems.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(tree, e, 0, out);
            }
            if elems.len() == 1 {
                out.push(',');
            }
            out.push(')');
        }
        NodeKind::Dict => {
            out.push('{');
            let pairs: Vec<NodeId> = ch
                .iter()
                .copied()
                .filter(|&c| tree.kind(c) == NodeKind::Pair)
                .collect();
            for (i, &p) in pairs.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let pch = tree.children(p);
                expr(tree, pch[0], 0, out);
                out.push_str(": ");
                expr(tree, pch[2], 0, out);
            }
            out.push('}');
        }
        other => panic!("not an expression kind: {other:?}"),
    }
    if need_parens {
        out.push(')');
    }
}

fn comma_separated(tree: &SyntaxTree, children: &[NodeId], out: &mut String) {
    let mut first = true;
    for &c in children {
        if tree.kind(c) == NodeKind::Operator {
            continue;
        }
        if !first {
            out.push_str(", ");
        }
        expr(tree, c, 0, out);
        first = false;
    }
}
