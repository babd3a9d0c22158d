use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const SYMBOLS: &[&str] = &[
    "<>", "!=", "<=", ">=", "=", "<", ">", "(", ")", ",", ";", ".", "*", "{", "}", "-",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };

    while i < chars.len() {
        let c = chars[i];
        let (start_line, start_col) = (line, col);
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        // -- comment to end of line
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                let c = chars[i];
                advance(&mut i, &mut line, &mut col, c);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                let c = chars[i];
                advance(&mut i, &mut line, &mut col, c);
            }
            out.push(Token {
                tok: Tok::Ident(s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let mut s = String::new();
            let mut float = false;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign =
                    (d == '+' || d == '-') && matches!(s.chars().last(), Some('e' | 'E'));
                if d.is_ascii_digit() || exp_sign {
                } else if (d == '.' && !float) || ((d == 'e' || d == 'E') && !s.contains(['e', 'E'])) {
                    float = true;
                } else {
                    break;
                }
                s.push(d);
                advance(&mut i, &mut line, &mut col, d);
            }
            let bad =
                || ParseError::syntax(format!("malformed number \"{s}\""), start_line, start_col);
            let tok = if float {
                Tok::Float(s.parse().map_err(|_| bad())?)
            } else {
                Tok::Int(s.parse().map_err(|_| bad())?)
            };
            out.push(Token {
                tok,
                line: start_line,
                col: start_col,
            });
            continue;
        }
        // Double quotes are accepted as string delimiters too, so CALL
        // arguments can be written either way.
        if c == '\'' || c == '"' {
            let q = c;
            let mut s = String::new();
            advance(&mut i, &mut line, &mut col, c);
            loop {
                match chars.get(i) {
                    None => {
                        return Err(ParseError::syntax(
                            "unterminated string literal",
                            start_line,
                            start_col,
                        ))
                    }
                    Some(&d) if d == q && chars.get(i + 1) == Some(&q) => {
                        s.push(q);
                        advance(&mut i, &mut line, &mut col, q);
                        advance(&mut i, &mut line, &mut col, q);
                    }
                    Some(&d) if d == q => {
                        advance(&mut i, &mut line, &mut col, q);
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        advance(&mut i, &mut line, &mut col, ch);
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: start_line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                for ch in sym.chars() {
                    advance(&mut i, &mut line, &mut col, ch);
                }
                let sym = if *sym == "!=" { "<>" } else { sym };
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line: start_line,
                    col: start_col,
                });
            }
            None => {
                return Err(ParseError::syntax(
                    format!("unexpected character '{c}'"),
                    start_line,
                    start_col,
                ))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("SELECT\n  a >= 1.5e3").unwrap();
        assert_eq!((toks[0].line, toks[0].col), (1, 1));
        assert_eq!((toks[1].line, toks[1].col), (2, 3));
        assert_eq!(toks[2].tok, Tok::Sym(">="));
        assert_eq!(toks[3].tok, Tok::Float(1500.0));
    }

    #[test]
    fn strings_and_comments() {
        let toks = tokenize("'it''s' -- trailing\n!=").unwrap();
        assert_eq!(toks[0].tok, Tok::Str("it's".into()));
        assert_eq!(toks[1].tok, Tok::Sym("<>"));
        assert_eq!(tokenize("\"Data_Set_1\"").unwrap()[0].tok, Tok::Str("Data_Set_1".into()));
        let err = tokenize("'open").unwrap_err();
        assert_eq!((err.line, err.column), (1, 1));
    }
}
