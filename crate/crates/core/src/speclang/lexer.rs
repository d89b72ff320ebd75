use std::fmt;

use crate::speclang::{Span, SyntaxError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// `'a`
    TypeVar(String),
    Int(String),
    Float(String),
    Str(String),
    Keyword(&'static str),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::TypeVar(s) => write!(f, "type variable `'{s}`"),
            Tok::Int(s) | Tok::Float(s) => write!(f, "number `{s}`"),
            Tok::Str(s) => write!(f, "string {s:?}"),
            Tok::Keyword(k) => write!(f, "`{k}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

pub const KEYWORDS: &[&str] = &[
    "goal",
    "let",
    "in",
    "function",
    "predicate",
    "type",
    "if",
    "then",
    "else",
    "forall",
    "exists",
    "not",
    "fun",
    "true",
    "false",
    "requires",
    "ensures",
];

// Longest first so that maximal munch falls out of a linear scan.
const SYMBOLS: &[&str] = &[
    ".<=", ".>=", "->", "/\\", "\\/", "&&", "||", "<>", "<=", ">=", ".<", ".>", ".+", ".-", ".*",
    "./", "@@", "=", "<", ">", "+", "-", "*", "/", "(", ")", "[", "]", "{", "}", ",", ":", ".",
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut lexer = Lexer {
        src: source.as_bytes(),
        text: source,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        lexer.skip_trivia()?;
        let span = lexer.span();
        if lexer.pos >= lexer.src.len() {
            out.push(Token {
                tok: Tok::Eof,
                span,
            });
            return Ok(out);
        }
        let tok = lexer.next_token()?;
        out.push(Token { tok, span });
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'\''
}

impl Lexer<'_> {
    fn span(&self) -> Span {
        Span {
            line: self.line,
            col: self.col,
            offset: self.pos,
        }
    }

    fn peek(&self, k: usize) -> Option<u8> {
        self.src.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> u8 {
        let c = self.src[self.pos];
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.col = 1;
        } else if c & 0xC0 != 0x80 {
            self.col += 1;
        }
        c
    }

    fn error(&self, span: Span, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            span,
            message: message.into(),
        }
    }

    fn skip_trivia(&mut self) -> Result<(), SyntaxError> {
        loop {
            match self.peek(0) {
                Some(c) if c.is_ascii_whitespace() => {
                    self.bump();
                }
                Some(b'(') if self.peek(1) == Some(b'*') && self.peek(2) != Some(b')') => {
                    let start = self.span();
                    self.bump();
                    self.bump();
                    let mut depth = 1;
                    while depth > 0 {
                        match (self.peek(0), self.peek(1)) {
                            (None, _) => return Err(self.error(start, "unterminated comment")),
                            (Some(b'('), Some(b'*')) => {
                                self.bump();
                                self.bump();
                                depth += 1;
                            }
                            (Some(b'*'), Some(b')')) => {
                                self.bump();
                                self.bump();
                                depth -= 1;
                            }
                            _ => {
                                self.bump();
                            }
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn next_token(&mut self) -> Result<Tok, SyntaxError> {
        let start = self.span();
        let c = self.peek(0).unwrap();
        if is_ident_start(c) {
            let mut name = self.ident();
            // Qualified names: `Model.read_model`, `Vector.has_length`.
            while name.as_bytes()[0].is_ascii_uppercase()
                && self.peek(0) == Some(b'.')
                && self.peek(1).is_some_and(is_ident_start)
            {
                self.bump();
                name.push('.');
                name.push_str(&self.ident());
            }
            return Ok(match KEYWORDS.iter().find(|k| **k == name) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(name),
            });
        }
        if c.is_ascii_digit() {
            return Ok(self.number());
        }
        if c == b'"' {
            return self.string(start);
        }
        if c == b'\'' && self.peek(1).is_some_and(is_ident_start) {
            self.bump();
            return Ok(Tok::TypeVar(self.ident()));
        }
        let rest = &self.text[self.pos..];
        if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            for _ in 0..sym.len() {
                self.bump();
            }
            return Ok(Tok::Sym(sym));
        }
        let ch = rest.chars().next().unwrap();
        Err(self.error(start, format!("unexpected character `{ch}`")))
    }

    fn ident(&mut self) -> String {
        let begin = self.pos;
        while self.peek(0).is_some_and(is_ident_char) {
            self.bump();
        }
        self.text[begin..self.pos].to_string()
    }

    fn number(&mut self) -> Tok {
        let begin = self.pos;
        while self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let mut float = false;
        if self.peek(0) == Some(b'.') && self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
            float = true;
            self.bump();
            while self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        if matches!(self.peek(0), Some(b'e' | b'E')) {
            let signed = matches!(self.peek(1), Some(b'+' | b'-'));
            let digit_at = if signed { 2 } else { 1 };
            if self.peek(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                float = true;
                for _ in 0..digit_at {
                    self.bump();
                }
                while self.peek(0).is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                }
            }
        }
        let text = self.text[begin..self.pos].to_string();
        if float {
            Tok::Float(text)
        } else {
            Tok::Int(text)
        }
    }

    fn string(&mut self, start: Span) -> Result<Tok, SyntaxError> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.peek(0) {
                None | Some(b'\n') => return Err(self.error(start, "unterminated string literal")),
                Some(b'"') => {
                    self.bump();
                    return Ok(Tok::Str(out));
                }
                Some(b'\\') => {
                    self.bump();
                    let esc = self
                        .peek(0)
                        .ok_or_else(|| self.error(start, "unterminated string literal"))?;
                    self.bump();
                    out.push(match esc {
                        b'n' => '\n',
                        b't' => '\t',
                        b'\\' => '\\',
                        b'"' => '"',
                        other => {
                            return Err(self.error(
                                self.span(),
                                format!("unknown escape `\\{}`", other as char),
                            ))
                        }
                    });
                }
                Some(_) => {
                    let begin = self.pos;
                    self.bump();
                    while self.peek(0).is_some_and(|c| c & 0xC0 == 0x80) {
                        self.bump();
                    }
                    out.push_str(&self.text[begin..self.pos]);
                }
            }
        }
    }
}
