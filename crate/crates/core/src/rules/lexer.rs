//! Tokenizer for the scoring-rule language. Whitespace-insensitive; `#`
//! starts a comment that runs to end of line.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    Plus,
    Minus,
    Star,
    Slash,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = input.chars().peekable();

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let (tok_line, tok_col) = (line, col);
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '(' => {
                bump!();
                tokens.push(Token { kind: TokenKind::LParen, line: tok_line, col: tok_col });
            }
            ')' => {
                bump!();
                tokens.push(Token { kind: TokenKind::RParen, line: tok_line, col: tok_col });
            }
            ',' => {
                bump!();
                tokens.push(Token { kind: TokenKind::Comma, line: tok_line, col: tok_col });
            }
            '+' => {
                bump!();
                tokens.push(Token { kind: TokenKind::Plus, line: tok_line, col: tok_col });
            }
            '-' => {
                bump!();
                tokens.push(Token { kind: TokenKind::Minus, line: tok_line, col: tok_col });
            }
            '*' => {
                bump!();
                tokens.push(Token { kind: TokenKind::Star, line: tok_line, col: tok_col });
            }
            '/' => {
                bump!();
                tokens.push(Token { kind: TokenKind::Slash, line: tok_line, col: tok_col });
            }
            '<' => {
                bump!();
                let kind = if chars.peek() == Some(&'=') {
                    bump!();
                    TokenKind::Le
                } else {
                    TokenKind::Lt
                };
                tokens.push(Token { kind, line: tok_line, col: tok_col });
            }
            '>' => {
                bump!();
                let kind = if chars.peek() == Some(&'=') {
                    bump!();
                    TokenKind::Ge
                } else {
                    TokenKind::Gt
                };
                tokens.push(Token { kind, line: tok_line, col: tok_col });
            }
            '=' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    tokens.push(Token { kind: TokenKind::EqEq, line: tok_line, col: tok_col });
                } else {
                    return Err(ParseError::new(tok_line, tok_col, "expected `==`".into()));
                }
            }
            '!' => {
                bump!();
                if chars.peek() == Some(&'=') {
                    bump!();
                    tokens.push(Token { kind: TokenKind::Ne, line: tok_line, col: tok_col });
                } else {
                    return Err(ParseError::new(tok_line, tok_col, "expected `!=`".into()));
                }
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match chars.peek() {
                        Some('"') => {
                            bump!();
                            break;
                        }
                        Some('\n') | None => {
                            return Err(ParseError::new(
                                tok_line,
                                tok_col,
                                "unterminated string literal".into(),
                            ));
                        }
                        Some(&c) => {
                            s.push(c);
                            bump!();
                        }
                    }
                }
                tokens.push(Token { kind: TokenKind::Str(s), line: tok_line, col: tok_col });
            }
            c if c.is_ascii_digit() => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                // Optional exponent part.
                if matches!(chars.peek(), Some('e') | Some('E')) {
                    let mut look = s.clone();
                    look.push('e');
                    bump!();
                    if matches!(chars.peek(), Some('+') | Some('-')) {
                        look.push(*chars.peek().unwrap());
                        bump!();
                    }
                    let mut digits = false;
                    while let Some(&c) = chars.peek() {
                        if c.is_ascii_digit() {
                            look.push(c);
                            digits = true;
                            bump!();
                        } else {
                            break;
                        }
                    }
                    if !digits {
                        return Err(ParseError::new(
                            tok_line,
                            tok_col,
                            format!("malformed number `{look}`"),
                        ));
                    }
                    s = look;
                }
                let value: f64 = s.parse().map_err(|_| {
                    ParseError::new(tok_line, tok_col, format!("malformed number `{s}`"))
                })?;
                tokens.push(Token { kind: TokenKind::Number(value), line: tok_line, col: tok_col });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                tokens.push(Token { kind: TokenKind::Ident(s), line: tok_line, col: tok_col });
            }
            other => {
                return Err(ParseError::new(
                    tok_line,
                    tok_col,
                    format!("unexpected character `{other}`"),
                ));
            }
        }
    }
    Ok(tokens)
}
