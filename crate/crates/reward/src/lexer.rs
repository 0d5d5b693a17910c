//! Tokenizer. Tracks line/column for error reporting and collects the
//! leading comment block as the program's "thoughts".

use crate::parser::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Let,
    Return,
    Cur,
    Nxt,
    Action,
    And,
    Or,
    Not,
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Assign,
    Plus,
    Minus,
    Star,
    StarStar,
    Slash,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

pub struct LexOutput {
    pub tokens: Vec<Spanned>,
    /// Comment lines seen before the first token, stripped of `#`.
    pub thoughts: String,
}

pub fn lex(source: &str) -> Result<LexOutput, ParseError> {
    let mut tokens = Vec::new();
    let mut thoughts_lines: Vec<String> = Vec::new();
    let mut chars = source.chars().peekable();
    let mut line = 1u32;
    let mut col = 1u32;
    let mut leading = true;

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
        let (tline, tcol) = (line, col);
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                let mut text = String::new();
                bump!();
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    text.push(c);
                    bump!();
                }
                if leading {
                    thoughts_lines.push(text.trim().to_string());
                }
            }
            '0'..='9' | '.' => {
                let mut text = String::new();
                let mut saw_dot = false;
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        text.push(c);
                        bump!();
                    } else if c == '.' && !saw_dot {
                        saw_dot = true;
                        text.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                let value: f64 = text.parse().map_err(|_| ParseError {
                    line: tline,
                    col: tcol,
                    message: format!("malformed number literal `{text}`"),
                })?;
                tokens.push(Spanned { tok: Tok::Number(value), line: tline, col: tcol });
                leading = false;
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut text = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        text.push(c);
                        bump!();
                    } else {
                        break;
                    }
                }
                let tok = match text.as_str() {
                    "let" => Tok::Let,
                    "return" => Tok::Return,
                    "cur" => Tok::Cur,
                    "nxt" => Tok::Nxt,
                    "action" => Tok::Action,
                    "and" => Tok::And,
                    "or" => Tok::Or,
                    "not" => Tok::Not,
                    _ => Tok::Ident(text),
                };
                tokens.push(Spanned { tok, line: tline, col: tcol });
                leading = false;
            }
            _ => {
                bump!();
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semi,
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '/' => Tok::Slash,
                    '*' => {
                        if chars.peek() == Some(&'*') {
                            bump!();
                            Tok::StarStar
                        } else {
                            Tok::Star
                        }
                    }
                    '<' => {
                        if chars.peek() == Some(&'=') {
                            bump!();
                            Tok::Le
                        } else {
                            Tok::Lt
                        }
                    }
                    '>' => {
                        if chars.peek() == Some(&'=') {
                            bump!();
                            Tok::Ge
                        } else {
                            Tok::Gt
                        }
                    }
                    '=' => {
                        if chars.peek() == Some(&'=') {
                            bump!();
                            Tok::EqEq
                        } else {
                            Tok::Assign
                        }
                    }
                    '!' => {
                        if chars.peek() == Some(&'=') {
                            bump!();
                            Tok::Ne
                        } else {
                            return Err(ParseError {
                                line: tline,
                                col: tcol,
                                message: "unexpected `!`; use `not` or `!=`".to_string(),
                            });
                        }
                    }
                    other => {
                        return Err(ParseError {
                            line: tline,
                            col: tcol,
                            message: format!("unexpected character `{other}`"),
                        })
                    }
                };
                tokens.push(Spanned { tok, line: tline, col: tcol });
                leading = false;
            }
        }
    }
    Ok(LexOutput { tokens, thoughts: thoughts_lines.join("\n") })
}
