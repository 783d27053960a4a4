//! Tokenizer for form files and point expressions.

use super::FormError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Equals,
    Newline,
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, FormError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1usize;
    let mut col = 1usize;
    // Newlines inside parentheses or brackets continue the statement.
    let mut depth = 0usize;
    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, col);
        let mut push = |t: Tok| out.push(Token { tok: t, line: tl, col: tc });
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
                if depth == 0 {
                    push(Tok::Newline);
                }
                continue;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
                continue;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
                continue;
            }
            '\'' | '"' => {
                let quote = c;
                chars.next();
                col += 1;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        Some(c) if c == quote => {
                            col += 1;
                            break;
                        }
                        Some('\n') | None => {
                            return Err(FormError::SyntaxError {
                                line: tl,
                                col: tc,
                                message: "unterminated string".into(),
                            });
                        }
                        Some(c) => {
                            s.push(c);
                            col += 1;
                        }
                    }
                }
                push(Tok::Str(s));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() || c == '.' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else if c == 'e' || c == 'E' {
                        // Exponent only when followed by digit or sign+digit.
                        let mut ahead = chars.clone();
                        ahead.next();
                        match ahead.peek() {
                            Some(&d) if d.is_ascii_digit() => {}
                            Some(&('+' | '-')) => {
                                ahead.next();
                                match ahead.peek() {
                                    Some(d) if d.is_ascii_digit() => {}
                                    _ => break,
                                }
                            }
                            _ => break,
                        }
                        s.push(c);
                        chars.next();
                        col += 1;
                        if let Some(&sign @ ('+' | '-')) = chars.peek() {
                            s.push(sign);
                            chars.next();
                            col += 1;
                        }
                    } else {
                        break;
                    }
                }
                let v: f64 = s.parse().map_err(|_| FormError::SyntaxError {
                    line: tl,
                    col: tc,
                    message: format!("bad number '{s}'"),
                })?;
                push(Tok::Number(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                push(Tok::Ident(s));
            }
            _ => {
                chars.next();
                col += 1;
                let t = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => {
                        depth += 1;
                        Tok::LParen
                    }
                    ')' => {
                        depth = depth.saturating_sub(1);
                        Tok::RParen
                    }
                    '[' => {
                        depth += 1;
                        Tok::LBracket
                    }
                    ']' => {
                        depth = depth.saturating_sub(1);
                        Tok::RBracket
                    }
                    ',' => Tok::Comma,
                    '=' => Tok::Equals,
                    _ => {
                        return Err(FormError::SyntaxError {
                            line: tl,
                            col: tc,
                            message: format!("unexpected character '{c}'"),
                        });
                    }
                };
                push(t);
            }
        }
    }
    out.push(Token { tok: Tok::Newline, line, col });
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
