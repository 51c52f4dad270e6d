//! Tokenizer shared by the kernel DSL and the textual IR.

use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(u64),
    Float(f64),
    /// `%name.id` (IR only).
    Value(String, u32),
    /// `@name` (IR only).
    Buffer(String),
    Punct(&'static str),
    Eof,
}

impl std::fmt::Display for Tok {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(i) => write!(f, "`{i}`"),
            Tok::Float(x) => write!(f, "`{x:?}`"),
            Tok::Value(n, i) => write!(f, "`%{n}.{i}`"),
            Tok::Buffer(n) => write!(f, "`@{n}`"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const PUNCTS: &[&str] = &[
    "..", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "(", ")", "{", "}", "[", "]", ",", ";",
    ":", "=", "+", "-", "*", "/", "%", "<", ">", "!", ".",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Dsl,
    Ir,
}

pub fn tokenize(src: &str, mode: Mode) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let is_ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let ir_comment = mode == Mode::Ir && c == ';';
        if ir_comment || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let (start_line, start_col) = (line, col);
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && is_ident(chars[i]) {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    float = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            if float {
                Tok::Float(text.parse().map_err(|_| {
                    ParseError::new(start_line, start_col, format!("bad float literal {text}"))
                })?)
            } else {
                Tok::Int(text.parse().map_err(|_| {
                    ParseError::new(start_line, start_col, format!("integer literal {text} out of range"))
                })?)
            }
        } else if mode == Mode::Ir && c == '%' && chars.get(i + 1).is_some_and(|c| is_ident(*c)) {
            i += 1;
            let name_start = i;
            while i < chars.len() && is_ident(chars[i]) {
                i += 1;
            }
            let name: String = chars[name_start..i].iter().collect();
            // The trailing `.id` is mandatory; names themselves may contain digits.
            if i >= chars.len() || chars[i] != '.' {
                return Err(ParseError::new(start_line, start_col, format!("value %{name} lacks an id")));
            }
            i += 1;
            let id_start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let id: String = chars[id_start..i].iter().collect();
            let id = id.parse().map_err(|_| {
                ParseError::new(start_line, start_col, format!("value %{name} lacks an id"))
            })?;
            Tok::Value(name, id)
        } else if mode == Mode::Ir && c == '@' {
            i += 1;
            let name_start = i;
            while i < chars.len() && is_ident(chars[i]) {
                i += 1;
            }
            if i == name_start {
                return Err(ParseError::new(start_line, start_col, "expected buffer name after @"));
            }
            Tok::Buffer(chars[name_start..i].iter().collect())
        } else {
            let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
                Some(p) => {
                    i += p.len();
                    Tok::Punct(p)
                }
                None => {
                    return Err(ParseError::new(
                        start_line,
                        start_col,
                        format!("unexpected character {c:?}"),
                    ))
                }
            }
        };
        col += i - start;
        out.push(Token {
            tok,
            line: start_line,
            col: start_col,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

/// Cursor over a token stream with the usual expect/eat helpers.
pub struct Cursor {
    toks: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(toks: Vec<Token>) -> Self {
        Cursor { toks, pos: 0 }
    }

    pub fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    pub fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    pub fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub fn error(&self, msg: impl Into<String>) -> ParseError {
        let (l, c) = self.here();
        ParseError::new(l, c, msg)
    }

    pub fn unexpected(&self, what: &str) -> ParseError {
        self.error(format!("syntax error: expected {what}, found {}", self.peek()))
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    pub fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{p}`")))
        }
    }

    pub fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("`{kw}`")))
        }
    }

    pub fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    /// An optionally negated integer literal.
    pub fn signed_int(&mut self) -> Result<i64, ParseError> {
        let neg = self.eat_punct("-");
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                if neg {
                    if v > i64::MAX as u64 + 1 {
                        return Err(self.error("integer literal out of range"));
                    }
                    Ok((v as i64).wrapping_neg())
                } else if v > i64::MAX as u64 {
                    Err(self.error("integer literal out of range"))
                } else {
                    Ok(v as i64)
                }
            }
            _ => Err(self.unexpected("integer")),
        }
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str, m: Mode) -> Vec<Tok> {
        tokenize(s, m).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn ranges_are_not_floats() {
        assert_eq!(
            toks("1..5", Mode::Dsl),
            vec![Tok::Int(1), Tok::Punct(".."), Tok::Int(5), Tok::Eof]
        );
        assert_eq!(toks("1.5e3", Mode::Dsl), vec![Tok::Float(1500.0), Tok::Eof]);
    }

    #[test]
    fn percent_depends_on_mode() {
        assert_eq!(
            toks("a %b", Mode::Dsl),
            vec![Tok::Ident("a".into()), Tok::Punct("%"), Tok::Ident("b".into()), Tok::Eof]
        );
        assert_eq!(
            toks("%b2.7 @w", Mode::Ir),
            vec![Tok::Value("b2".into(), 7), Tok::Buffer("w".into()), Tok::Eof]
        );
    }

    #[test]
    fn positions_track_lines() {
        let t = tokenize("a\n  b", Mode::Dsl).unwrap();
        assert_eq!((t[1].line, t[1].col), (2, 3));
    }
}
