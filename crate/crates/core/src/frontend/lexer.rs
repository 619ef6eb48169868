use super::ParseFailure;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Operator,
    IntLiteral,
    FloatLiteral,
    StringLiteral,
    Indent,
    Dedent,
    Newline,
}

/// One lexical token. `line`/`col` are 1-based and point at the first
/// character of the token in the source; synthetic tokens (indent, dedent,
/// newline at end of input) carry the position where they were produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub col: usize,
}

impl Token {
    fn new(kind: TokenKind, text: impl Into<String>, line: usize, col: usize) -> Self {
        Token { kind, text: text.into(), line, col }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self.kind, TokenKind::Indent | TokenKind::Dedent | TokenKind::Newline)
    }
}

pub const KEYWORDS: &[&str] = &[
    "def", "return", "if", "elif", "else", "while", "for", "in", "break", "continue", "pass",
    "and", "or", "not", "True", "False", "None",
];

// longest match first
const OPERATORS: &[&str] = &[
    "**=", "//=", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "**", "//", "=", "+", "-",
    "*", "/", "%", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".",
];

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col: usize,
    /// nesting depth of () [] {}; newlines and indentation are ignored inside
    bracket_depth: usize,
    indent_stack: Vec<usize>,
    tokens: Vec<Token>,
}

/// Tokenize source text. Block structure becomes synthetic indent/dedent
/// tokens, each logical line ends with a newline token, and `#` comments are
/// dropped. String literals (including docstrings) keep their raw text with
/// quotes. Fails on illegal characters, tabs in indentation, unterminated
/// strings, and dedents to a level never opened.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseFailure> {
    let mut lx = Lexer {
        chars: source.chars().collect(),
        pos: 0,
        line: 1,
        col: 1,
        bracket_depth: 0,
        indent_stack: vec![0],
        tokens: Vec::new(),
    };
    lx.run()?;
    Ok(lx.tokens)
}

impl Lexer {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn fail(&self, msg: impl Into<String>) -> ParseFailure {
        ParseFailure::new(msg, self.line, self.col)
    }

    fn run(&mut self) -> Result<(), ParseFailure> {
        loop {
            if self.bracket_depth == 0 && self.col == 1
                && !self.handle_line_start()? {
                    break;
                }
            match self.peek() {
                None => break,
                Some('\n') => {
                    if self.bracket_depth == 0 {
                        self.emit_newline();
                    }
                    self.bump();
                }
                Some(' ') => {
                    self.bump();
                }
                Some('\t') => {
                    return Err(self.fail("tab character is not supported"));
                }
                Some('\r') => {
                    self.bump();
                }
                Some('#') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                Some(c) if c.is_ascii_digit() => self.lex_number()?,
                Some('.') if self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) => {
                    self.lex_number()?
                }
                Some(c) if c == '_' || c.is_alphabetic() => self.lex_word(),
                Some(c) if c == '"' || c == '\'' => self.lex_string()?,
                Some(_) => self.lex_operator()?,
            }
        }
        // close the final logical line and any open blocks
        if self
            .tokens
            .last()
            .is_some_and(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Dedent))
        {
            self.emit_newline();
        }
        while self.indent_stack.len() > 1 {
            self.indent_stack.pop();
            self.tokens.push(Token::new(TokenKind::Dedent, "", self.line, self.col));
        }
        Ok(())
    }

    /// Measure indentation of the line starting at `self.pos`. Blank and
    /// comment-only lines produce no tokens at all. Returns false at EOF.
    fn handle_line_start(&mut self) -> Result<bool, ParseFailure> {
        loop {
            let mut width = 0;
            let mut look = self.pos;
            while let Some(&c) = self.chars.get(look) {
                match c {
                    ' ' => width += 1,
                    '\t' => {
                        return Err(ParseFailure::new(
                            "tab character in indentation",
                            self.line,
                            width + 1,
                        ))
                    }
                    _ => break,
                }
                look += 1;
            }
            match self.chars.get(look) {
                None => return Ok(false),
                Some('\n') | Some('\r') | Some('#') => {
                    // blank or comment-only line: consume and retry
                    while let Some(c) = self.peek() {
                        let done = c == '\n';
                        self.bump();
                        if done {
                            break;
                        }
                    }
                    if self.peek().is_none() {
                        return Ok(false);
                    }
                    continue;
                }
                Some(_) => {
                    self.apply_indent(width)?;
                    // skip over the measured spaces
                    while self.pos < look {
                        self.bump();
                    }
                    return Ok(true);
                }
            }
        }
    }

    fn apply_indent(&mut self, width: usize) -> Result<(), ParseFailure> {
        let current = *self.indent_stack.last().unwrap();
        if width > current {
            self.indent_stack.push(width);
            self.tokens.push(Token::new(TokenKind::Indent, "", self.line, 1));
        } else if width < current {
            while *self.indent_stack.last().unwrap() > width {
                self.indent_stack.pop();
                self.tokens.push(Token::new(TokenKind::Dedent, "", self.line, 1));
            }
            if *self.indent_stack.last().unwrap() != width {
                return Err(ParseFailure::new(
                    "inconsistent indentation",
                    self.line,
                    width + 1,
                ));
            }
        }
        Ok(())
    }

    fn emit_newline(&mut self) {
        // collapse consecutive newlines; never start a stream with one
        if self
            .tokens
            .last()
            .is_some_and(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Indent))
        {
            self.tokens.push(Token::new(TokenKind::Newline, "", self.line, self.col));
        }
    }

    fn lex_number(&mut self) -> Result<(), ParseFailure> {
        let (line, col) = (self.line, self.col);
        let mut text = String::new();
        let mut is_float = false;
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                text.push(c);
                self.bump();
            } else if c == '.' && !is_float {
                // attribute access on an int literal is not in the subset,
                // so a dot after digits always starts the fraction
                is_float = true;
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        if self.peek().is_some_and(|c| c.is_alphabetic() || c == '_') {
            return Err(self.fail("malformed number"));
        }
        let kind = if is_float { TokenKind::FloatLiteral } else { TokenKind::IntLiteral };
        self.tokens.push(Token::new(kind, text, line, col));
        Ok(())
    }

    fn lex_word(&mut self) {
        let (line, col) = (self.line, self.col);
        let mut text = String::new();
        while let Some(c) = self.peek() {
            if c == '_' || c.is_alphanumeric() {
                text.push(c);
                self.bump();
            } else {
                break;
            }
        }
        let kind = if KEYWORDS.contains(&text.as_str()) {
            TokenKind::Keyword
        } else {
            TokenKind::Identifier
        };
        self.tokens.push(Token::new(kind, text, line, col));
    }

    fn lex_string(&mut self) -> Result<(), ParseFailure> {
        let (line, col) = (self.line, self.col);
        let quote = self.peek().unwrap();
        let triple = self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote);
        let mut text = String::new();
        let delim_len = if triple { 3 } else { 1 };
        for _ in 0..delim_len {
            text.push(self.bump().unwrap());
        }
        loop {
            match self.peek() {
                None => return Err(ParseFailure::new("unterminated string literal", line, col)),
                Some('\n') if !triple => {
                    return Err(ParseFailure::new("unterminated string literal", line, col))
                }
                Some('\\') => {
                    text.push(self.bump().unwrap());
                    match self.bump() {
                        Some(c) => text.push(c),
                        None => {
                            return Err(ParseFailure::new(
                                "unterminated string literal",
                                line,
                                col,
                            ))
                        }
                    }
                }
                Some(c) if c == quote => {
                    if triple {
                        if self.peek_at(1) == Some(quote) && self.peek_at(2) == Some(quote) {
                            for _ in 0..3 {
                                text.push(self.bump().unwrap());
                            }
                            break;
                        }
                        text.push(self.bump().unwrap());
                    } else {
                        text.push(self.bump().unwrap());
                        break;
                    }
                }
                Some(_) => text.push(self.bump().unwrap()),
            }
        }
        self.tokens.push(Token::new(TokenKind::StringLiteral, text, line, col));
        Ok(())
    }

    fn lex_operator(&mut self) -> Result<(), ParseFailure> {
        let (line, col) = (self.line, self.col);
        for op in OPERATORS {
            let len = op.chars().count();
            if (0..len).all(|i| self.peek_at(i) == op.chars().nth(i)) {
                for _ in 0..len {
                    self.bump();
                }
                match *op {
                    "(" | "[" | "{" => self.bracket_depth += 1,
                    ")" | "]" | "}" => self.bracket_depth = self.bracket_depth.saturating_sub(1),
                    _ => {}
                }
                self.tokens.push(Token::new(TokenKind::Operator, *op, line, col));
                return Ok(());
            }
        }
        Err(self.fail(format!("illegal character {:?}", self.peek().unwrap())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn minimal_statement() {
        let toks = tokenize("y = 0").unwrap();
        let got: Vec<(TokenKind, &str)> =
            toks.iter().map(|t| (t.kind, t.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (TokenKind::Identifier, "y"),
                (TokenKind::Operator, "="),
                (TokenKind::IntLiteral, "0"),
                (TokenKind::Newline, ""),
            ]
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(tokenize("").unwrap(), vec![]);
        assert_eq!(tokenize("\n\n").unwrap(), vec![]);
        assert_eq!(tokenize("# only a comment\n").unwrap(), vec![]);
    }

    #[test]
    fn one_indent_one_dedent() {
        let toks = tokenize("if x:\n    y = 1\n").unwrap();
        let indents = toks.iter().filter(|t| t.kind == TokenKind::Indent).count();
        let dedents = toks.iter().filter(|t| t.kind == TokenKind::Dedent).count();
        assert_eq!((indents, dedents), (1, 1));
    }

    #[test]
    fn indent_dedent_balanced() {
        for src in [
            "if a:\n    if b:\n        x = 1\ny = 2\n",
            "def f(a):\n    return a",
            "while x:\n    x = x - 1\n    if x:\n        pass\n",
        ] {
            let ks = kinds(src);
            let open = ks.iter().filter(|k| **k == TokenKind::Indent).count();
            let close = ks.iter().filter(|k| **k == TokenKind::Dedent).count();
            assert_eq!(open, close, "unbalanced for {src:?}");
        }
    }

    #[test]
    fn comments_stripped_strings_kept() {
        let toks = tokenize("x = 1  # set x\ns = \"a # b\"\n").unwrap();
        assert!(toks.iter().all(|t| !t.text.contains("set")));
        assert!(toks.iter().any(|t| t.text == "\"a # b\""));
    }

    #[test]
    fn triple_quoted_docstring() {
        let toks = tokenize("def f():\n    \"\"\"doc\n    string\"\"\"\n    pass\n").unwrap();
        let doc = toks.iter().find(|t| t.kind == TokenKind::StringLiteral).unwrap();
        assert!(doc.text.starts_with("\"\"\"") && doc.text.ends_with("\"\"\""));
    }

    #[test]
    fn positions_strictly_increase() {
        let toks = tokenize("a = 1\nbb = 22\nif a:\n    b = a\n").unwrap();
        let mut prev = (0usize, 0usize);
        for t in toks.iter().filter(|t| !t.is_synthetic()) {
            let cur = (t.line, t.col);
            assert!(cur > prev, "positions must increase: {prev:?} then {cur:?}");
            prev = cur;
        }
    }

    #[test]
    fn bracket_continuation_suppresses_newline() {
        let toks = tokenize("x = [1,\n     2]\n").unwrap();
        let newlines = toks.iter().filter(|t| t.kind == TokenKind::Newline).count();
        assert_eq!(newlines, 1);
    }

    #[test]
    fn illegal_character_reports_position() {
        let err = tokenize("x = 1\ny = $\n").unwrap_err();
        assert_eq!((err.line, err.col), (2, 5));
    }

    #[test]
    fn inconsistent_dedent_rejected() {
        assert!(tokenize("if a:\n        x = 1\n    y = 2\n").is_err());
    }

    #[test]
    fn tab_rejected() {
        assert!(tokenize("if a:\n\tx = 1\n").is_err());
    }

    #[test]
    fn float_and_int_tokens() {
        let toks = tokenize("a = 1.5\nb = 2\nc = .5\n").unwrap();
        let kinds: Vec<TokenKind> = toks
            .iter()
            .filter(|t| matches!(t.kind, TokenKind::IntLiteral | TokenKind::FloatLiteral))
            .map(|t| t.kind)
            .collect();
        assert_eq!(
            kinds,
            vec![TokenKind::FloatLiteral, TokenKind::IntLiteral, TokenKind::FloatLiteral]
        );
    }
}
