use super::ParseError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Annotation(String),
    Int(i64),
    Str(String),
    Punct(&'static str),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Annotation(s) => format!("annotation `@{s}`"),
            Tok::Int(v) => format!("integer `{v}`"),
            Tok::Str(_) => "string literal".to_string(),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

// Longest first so that `<=` wins over `<`.
const PUNCTS: &[&str] = &[
    "+=", "-=", "==", "!=", "<=", ">=", "&&", "||", "{", "}", "(", ")", "[", "]", "<", ">", ";",
    ",", ".", "=", "+", "-", "*", "/", "%", "!",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut col = 1;

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        let (tl, tc) = (line, col);
        if c == '@' {
            bump!();
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            if start == i {
                return Err(ParseError::syntax(tl, tc, "annotation name", "`@`"));
            }
            let name: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Annotation(name), line: tl, col: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                bump!();
            }
            let name: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Ident(name), line: tl, col: tc });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                bump!();
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<i64>()
                .map_err(|_| ParseError::syntax(tl, tc, "integer in 64-bit range", &text))?;
            out.push(Token { tok: Tok::Int(value), line: tl, col: tc });
            continue;
        }
        if c == '"' {
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(ParseError::syntax(tl, tc, "closing `\"`", "end of input"));
                }
                let ch = chars[i];
                if ch == '"' {
                    bump!();
                    break;
                }
                if ch == '\n' {
                    return Err(ParseError::syntax(line, col, "closing `\"`", "newline"));
                }
                if ch == '\\' {
                    bump!();
                    let esc = chars.get(i).copied();
                    let decoded = match esc {
                        Some('n') => '\n',
                        Some('t') => '\t',
                        Some('r') => '\r',
                        Some('0') => '\0',
                        Some('\\') => '\\',
                        Some('"') => '"',
                        other => {
                            let found = other.map(|c| format!("`\\{c}`")).unwrap_or_else(|| "end of input".into());
                            return Err(ParseError::syntax(line, col, "escape sequence", &found));
                        }
                    };
                    s.push(decoded);
                    bump!();
                    continue;
                }
                s.push(ch);
                bump!();
            }
            out.push(Token { tok: Tok::Str(s), line: tl, col: tc });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match PUNCTS.iter().find(|p| rest.starts_with(**p)) {
            Some(p) => {
                for _ in 0..p.len() {
                    bump!();
                }
                out.push(Token { tok: Tok::Punct(p), line: tl, col: tc });
            }
            None => {
                return Err(ParseError::syntax(tl, tc, "token", &format!("`{c}`")));
            }
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}
