use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use crate::value::{ColumnKind, Value};

/// Words that end an identifier position; using one where a name is
/// expected is a syntax error.
const RESERVED: &[&str] = &[
    "select", "from", "where", "and", "insert", "into", "values", "explain", "analyze", "call",
    "set", "show", "or", "not", "group", "order", "by", "limit", "join", "on", "having", "union",
    "null",
];

const UNSUPPORTED: &[&str] = &[
    "or", "group", "order", "limit", "join", "having", "union", "not", "in", "like", "between",
    "distinct", "as", "exists",
];

pub fn parse(text: &str) -> Result<Statement, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        end: end_position(text),
    };
    let stmt = p.statement()?;
    p.eat_sym(";");
    if let Some(t) = p.peek() {
        let t = t.clone();
        return Err(p.unexpected(&t, "end of statement"));
    }
    Ok(stmt)
}

fn end_position(text: &str) -> (usize, usize) {
    let line = text.matches('\n').count() + 1;
    let col = text
        .rsplit('\n')
        .next()
        .map(|l| l.chars().count())
        .unwrap_or(0)
        + 1;
    (line, col)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: (usize, usize),
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Result<Token, ParseError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(ParseError::syntax(
                "unexpected end of input",
                self.end.0,
                self.end.1,
            )),
        }
    }

    fn unexpected(&self, t: &Token, wanted: &str) -> ParseError {
        let found = match &t.tok {
            Tok::Ident(s) => {
                if UNSUPPORTED.contains(&s.to_ascii_lowercase().as_str()) {
                    return ParseError::unsupported(
                        format!("{} is not supported", s.to_ascii_uppercase()),
                        t.line,
                        t.col,
                    );
                }
                s.clone()
            }
            Tok::Str(s) => format!("'{s}'"),
            Tok::Int(v) => v.to_string(),
            Tok::Float(v) => v.to_string(),
            Tok::Sym(s) => s.to_string(),
        };
        ParseError::syntax(
            format!("expected {wanted}, found \"{found}\""),
            t.line,
            t.col,
        )
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Ident(s), .. }) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Ident(s) if s.eq_ignore_ascii_case(kw) => Ok(()),
            _ => Err(self.unexpected(&t, &kw.to_ascii_uppercase())),
        }
    }

    fn peek_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Sym(s), .. }) if *s == sym)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.peek_sym(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Sym(s) if *s == sym => Ok(()),
            _ => Err(self.unexpected(&t, &format!("\"{sym}\""))),
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        let t = self.next()?;
        match &t.tok {
            Tok::Ident(s) if !RESERVED.contains(&s.to_ascii_lowercase().as_str()) => {
                Ok(s.to_ascii_lowercase())
            }
            _ => Err(self.unexpected(&t, "identifier")),
        }
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        let t = match self.peek() {
            Some(t) => t.clone(),
            None => {
                return Err(ParseError::syntax(
                    "empty statement",
                    self.end.0,
                    self.end.1,
                ))
            }
        };
        let word = match &t.tok {
            Tok::Ident(s) => s.to_ascii_lowercase(),
            _ => return Err(self.unexpected(&t, "statement")),
        };
        match word.as_str() {
            "select" => Ok(Statement::Query(QueryAst::Select(self.select()?))),
            "explain" => {
                self.pos += 1;
                let analyze = self.eat_keyword("analyze");
                if !self.peek_keyword("select") {
                    let t = self.next()?;
                    return Err(self.unexpected(&t, "SELECT after EXPLAIN"));
                }
                let query = self.select()?;
                Ok(Statement::Query(QueryAst::Explain { analyze, query }))
            }
            "insert" => Ok(Statement::Query(QueryAst::Insert(self.insert()?))),
            "call" => Ok(Statement::Control(self.call()?)),
            "set" => {
                self.pos += 1;
                let var = self.ident()?;
                if !self.eat_keyword("to") {
                    self.expect_sym("=")?;
                }
                let value = self.set_value()?;
                Ok(Statement::Control(ControlCommand {
                    verb: ControlVerb::Set,
                    args: vec![CallArg::Str(var), CallArg::Str(value)],
                }))
            }
            "show" => {
                self.pos += 1;
                let t = self.next()?;
                let what = match &t.tok {
                    Tok::Ident(s) => s.to_ascii_lowercase(),
                    _ => return Err(self.unexpected(&t, "name")),
                };
                Ok(Statement::Control(ControlCommand {
                    verb: ControlVerb::Show,
                    args: vec![CallArg::Str(what)],
                }))
            }
            "create" => self.create_table(),
            "copy" => self.copy(),
            "analyze" => {
                self.pos += 1;
                let table = self.ident()?;
                Ok(Statement::Ddl(DdlStatement::Analyze { table }))
            }
            "update" | "delete" | "drop" | "alter" | "with" | "begin" | "commit" => {
                Err(ParseError::unsupported(
                    format!("{} is not supported", word.to_uppercase()),
                    t.line,
                    t.col,
                ))
            }
            _ => Err(self.unexpected(&t, "statement")),
        }
    }

    fn select(&mut self) -> Result<SelectQuery, ParseError> {
        self.expect_keyword("select")?;
        let select = if self.eat_sym("*") {
            SelectList::Star
        } else if self.peek_keyword("count") {
            self.pos += 1;
            self.expect_sym("(")?;
            self.expect_sym("*")?;
            self.expect_sym(")")?;
            SelectList::CountStar
        } else {
            let mut cols = vec![self.column_ref()?];
            while self.eat_sym(",") {
                cols.push(self.column_ref()?);
            }
            SelectList::Columns(cols)
        };
        self.expect_keyword("from")?;
        if self.peek_sym("(") {
            let t = self.peek().cloned().expect("peeked");
            return Err(ParseError::unsupported(
                "subqueries are not supported",
                t.line,
                t.col,
            ));
        }
        let mut from = vec![self.ident()?];
        while self.eat_sym(",") {
            from.push(self.ident()?);
        }
        let mut predicates = Vec::new();
        if self.eat_keyword("where") {
            predicates.push(self.predicate()?);
            while self.eat_keyword("and") {
                predicates.push(self.predicate()?);
            }
        }
        Ok(SelectQuery {
            select,
            from,
            predicates,
        })
    }

    fn column_ref(&mut self) -> Result<ColumnRef, ParseError> {
        let first = self.ident()?;
        if self.eat_sym(".") {
            let column = self.ident()?;
            Ok(ColumnRef {
                table: Some(first),
                column,
            })
        } else {
            Ok(ColumnRef {
                table: None,
                column: first,
            })
        }
    }

    fn is_literal_start(&self) -> bool {
        matches!(
            self.peek(),
            Some(Token {
                tok: Tok::Int(_) | Tok::Float(_) | Tok::Str(_) | Tok::Sym("-"),
                ..
            })
        ) || self.peek_keyword("null")
    }

    fn literal(&mut self) -> Result<Value, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Int(v) => Ok(Value::Int(v)),
            Tok::Float(v) => Ok(Value::Float(v)),
            Tok::Str(s) => Ok(Value::Text(s)),
            Tok::Sym("-") => {
                let n = self.next()?;
                match n.tok {
                    Tok::Int(v) => Ok(Value::Int(-v)),
                    Tok::Float(v) => Ok(Value::Float(-v)),
                    _ => Err(self.unexpected(&n, "number")),
                }
            }
            Tok::Ident(ref s) if s.eq_ignore_ascii_case("null") => Ok(Value::Null),
            _ => Err(self.unexpected(&t, "literal")),
        }
    }

    fn compare_op(&mut self) -> Result<CompareOp, ParseError> {
        let t = self.next()?;
        Ok(match t.tok {
            Tok::Sym("=") => CompareOp::Eq,
            Tok::Sym("<>") => CompareOp::Ne,
            Tok::Sym("<") => CompareOp::Lt,
            Tok::Sym("<=") => CompareOp::Le,
            Tok::Sym(">") => CompareOp::Gt,
            Tok::Sym(">=") => CompareOp::Ge,
            _ => return Err(self.unexpected(&t, "comparison operator")),
        })
    }

    fn predicate(&mut self) -> Result<Predicate, ParseError> {
        if self.peek_sym("(") {
            let t = self.peek().cloned().expect("peeked");
            return Err(ParseError::unsupported(
                "parenthesized expressions are not supported",
                t.line,
                t.col,
            ));
        }
        let start = self.peek().cloned();
        if self.is_literal_start() {
            let value = self.literal()?;
            let op = self.compare_op()?;
            let column = self.column_ref()?;
            return self.filter(column, op.flipped(), value, start);
        }
        let left = self.column_ref()?;
        let op = self.compare_op()?;
        if self.is_literal_start() {
            let value = self.literal()?;
            return self.filter(left, op, value, start);
        }
        let right = self.column_ref()?;
        if op != CompareOp::Eq {
            let t = start.expect("predicate start");
            return Err(ParseError::unsupported(
                "only equality is supported between two columns",
                t.line,
                t.col,
            ));
        }
        Ok(Predicate::Join { left, right })
    }

    fn filter(
        &self,
        column: ColumnRef,
        op: CompareOp,
        value: Value,
        start: Option<Token>,
    ) -> Result<Predicate, ParseError> {
        if value.is_null() {
            let t = start.expect("predicate start");
            return Err(ParseError::unsupported(
                "comparison with NULL",
                t.line,
                t.col,
            ));
        }
        Ok(Predicate::Filter { column, op, value })
    }

    fn insert(&mut self) -> Result<InsertQuery, ParseError> {
        self.expect_keyword("insert")?;
        self.expect_keyword("into")?;
        let table = self.ident()?;
        let columns = if self.eat_sym("(") {
            let mut cols = vec![self.ident()?];
            while self.eat_sym(",") {
                cols.push(self.ident()?);
            }
            self.expect_sym(")")?;
            Some(cols)
        } else {
            None
        };
        self.expect_keyword("values")?;
        let mut rows = Vec::new();
        loop {
            self.expect_sym("(")?;
            let mut row = vec![self.literal()?];
            while self.eat_sym(",") {
                row.push(self.literal()?);
            }
            self.expect_sym(")")?;
            rows.push(row);
            if !self.eat_sym(",") {
                break;
            }
        }
        Ok(InsertQuery {
            table,
            columns,
            rows,
        })
    }

    fn call(&mut self) -> Result<ControlCommand, ParseError> {
        self.expect_keyword("call")?;
        let t = self.next()?;
        let verb = match &t.tok {
            Tok::Ident(s) => ControlVerb::from_name(s).ok_or_else(|| {
                ParseError::syntax(format!("unknown procedure \"{s}\""), t.line, t.col)
            })?,
            _ => return Err(self.unexpected(&t, "procedure name")),
        };
        self.expect_sym("(")?;
        let mut args = Vec::new();
        if !self.eat_sym(")") {
            loop {
                args.push(self.call_arg()?);
                if self.eat_sym(")") {
                    break;
                }
                self.expect_sym(",")?;
            }
        }
        let (lo, hi) = verb.arity();
        if args.len() < lo || args.len() > hi {
            let expected = if lo == hi {
                lo.to_string()
            } else {
                format!("{lo} to {hi}")
            };
            return Err(ParseError::syntax(
                format!(
                    "{} takes {expected} arguments, got {}",
                    verb.name(),
                    args.len()
                ),
                t.line,
                t.col,
            ));
        }
        Ok(ControlCommand { verb, args })
    }

    fn call_arg(&mut self) -> Result<CallArg, ParseError> {
        if self.eat_sym("{") {
            let mut items = Vec::new();
            if !self.eat_sym("}") {
                loop {
                    items.push(self.string_item()?);
                    if self.eat_sym("}") {
                        break;
                    }
                    self.expect_sym(",")?;
                }
            }
            return Ok(CallArg::Set(items));
        }
        Ok(CallArg::Str(self.string_item()?))
    }

    fn string_item(&mut self) -> Result<String, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Str(s) => Ok(s),
            Tok::Ident(s) => Ok(s.to_ascii_lowercase()),
            _ => Err(self.unexpected(&t, "string")),
        }
    }

    fn set_value(&mut self) -> Result<String, ParseError> {
        let t = self.next()?;
        match t.tok {
            Tok::Str(s) => Ok(s),
            Tok::Ident(s) => Ok(s.to_ascii_lowercase()),
            Tok::Int(v) => Ok(v.to_string()),
            Tok::Float(v) => Ok(v.to_string()),
            _ => Err(self.unexpected(&t, "value")),
        }
    }

    fn create_table(&mut self) -> Result<Statement, ParseError> {
        self.expect_keyword("create")?;
        self.expect_keyword("table")?;
        let name = self.ident()?;
        self.expect_sym("(")?;
        let mut columns = Vec::new();
        let mut primary_key = None;
        loop {
            if self.eat_keyword("primary") {
                self.expect_keyword("key")?;
                self.expect_sym("(")?;
                primary_key = Some(self.ident()?);
                self.expect_sym(")")?;
            } else {
                let col = self.ident()?;
                let t = self.next()?;
                let kind = match &t.tok {
                    Tok::Ident(s) => ColumnKind::parse(s),
                    _ => None,
                }
                .ok_or_else(|| self.unexpected(&t, "column type (int64, float64, text)"))?;
                if self.eat_keyword("primary") {
                    self.expect_keyword("key")?;
                    primary_key = Some(col.clone());
                }
                columns.push((col, kind));
            }
            if self.eat_sym(")") {
                break;
            }
            self.expect_sym(",")?;
        }
        Ok(Statement::Ddl(DdlStatement::CreateTable {
            name,
            columns,
            primary_key,
        }))
    }

    fn copy(&mut self) -> Result<Statement, ParseError> {
        self.expect_keyword("copy")?;
        let table = self.ident()?;
        self.expect_keyword("from")?;
        let t = self.next()?;
        let path = match t.tok {
            Tok::Str(s) => s,
            _ => return Err(self.unexpected(&t, "quoted file path")),
        };
        let mut header = false;
        if self.eat_keyword("with") {
            self.expect_keyword("header")?;
            header = true;
        }
        Ok(Statement::Ddl(DdlStatement::Copy {
            table,
            path,
            header,
        }))
    }
}
