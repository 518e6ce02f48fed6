use super::{Diagnostic, DiagnosticKind};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Word(String),
    Number(f64),
    LParen,
    RParen,
    Comma,
    Equals,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    /// 1-based character columns, end exclusive.
    pub col: usize,
    pub end: usize,
}

/// Splits one line (comment already allowed) into tokens.
pub(crate) fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            '=' => Some(Tok::Equals),
            _ => None,
        };
        if let Some(tok) = single {
            i += 1;
            out.push(Token { tok, col: start + 1, end: i + 1 });
            continue;
        }
        if c.is_ascii_alphabetic() {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '-' || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Word(word), col: start + 1, end: i + 1 });
            continue;
        }
        if c.is_ascii_digit() || c == '.' || c == '-' || c == '+' {
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let text: String = chars[start..i].iter().collect();
            return_or_push(&mut out, &text, start, i, line_no)?;
            continue;
        }
        return Err(Diagnostic::new(
            DiagnosticKind::Syntax,
            line_no,
            start + 1,
            start + 2,
            format!("unexpected character `{c}`"),
        ));
    }
    Ok(out)
}

fn return_or_push(
    out: &mut Vec<Token>,
    text: &str,
    start: usize,
    end: usize,
    line_no: usize,
) -> Result<(), Diagnostic> {
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => {
            out.push(Token { tok: Tok::Number(v), col: start + 1, end: end + 1 });
            Ok(())
        }
        _ => Err(Diagnostic::new(
            DiagnosticKind::Syntax,
            line_no,
            start + 1,
            end + 1,
            format!("invalid number `{text}`"),
        )),
    }
}
