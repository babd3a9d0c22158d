//! Statement splitting, result formatting and the script/interactive drivers
//! behind `baihe-mini`.

use std::io::{self, BufRead, Write};

use crate::engine::{Engine, EngineError, StatementResult};
use crate::exec::QueryOutput;
use crate::session::SessionState;

/// One `;`-terminated statement and the script line it starts on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    pub line: usize,
}

/// Splits text into statements at `;` outside quotes and `--` comments.
/// Chunks holding only whitespace and comments are dropped. The second value
/// is the unterminated remainder, if it contains anything significant.
pub fn split_statements(text: &str) -> (Vec<Chunk>, Option<Chunk>) {
    let mut chunks = Vec::new();
    let mut cur = String::new();
    let mut start: Option<usize> = None;
    let mut line = 1;
    let mut quote: Option<char> = None;
    let mut comment = false;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if comment {
            if c == '\n' {
                comment = false;
            }
        } else if let Some(q) = quote {
            if c == q {
                quote = None;
            }
        } else if c == '-' && chars.peek() == Some(&'-') {
            comment = true;
        } else if c == '\'' || c == '"' {
            quote = Some(c);
        } else if c == ';' {
            if let Some(l) = start.take() {
                chunks.push(Chunk {
                    text: std::mem::take(&mut cur),
                    line: l,
                });
            }
            cur.clear();
            continue;
        }
        if start.is_none() && !comment && !c.is_whitespace() {
            start = Some(line);
        }
        if start.is_some() {
            cur.push(c);
        }
        if c == '\n' {
            line += 1;
        }
    }
    let rest = start.map(|l| Chunk { text: cur, line: l });
    (chunks, rest)
}

/// Render rows as an aligned text table followed by a row count.
pub fn format_table(out: &QueryOutput) -> String {
    let cells: Vec<Vec<String>> = out
        .rows
        .iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect())
        .collect();
    let mut widths: Vec<usize> = out.columns.iter().map(|c| c.chars().count()).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!(" {c:<w$} "))
            .collect();
        parts.join("|").trim_end().to_string()
    };
    let mut s = fmt_row(&out.columns);
    s.push('\n');
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();
    s.push_str(&rule.join("+"));
    s.push('\n');
    for row in &cells {
        s.push_str(&fmt_row(row));
        s.push('\n');
    }
    let n = out.rows.len();
    s.push_str(&format!("({n} row{})\n", if n == 1 { "" } else { "s" }));
    s
}

pub fn format_result(result: &StatementResult) -> String {
    match result {
        StatementResult::Rows(out) => format_table(out),
        StatementResult::Explain(text) => text.clone(),
        StatementResult::Inserted(n) => format!("INSERT {n}\n"),
        StatementResult::Message(m) => format!("{m}\n"),
    }
}

/// Error text for a statement starting at script line `line`. Parse errors
/// carry a position inside the statement, which is mapped back to the script.
pub fn describe_error(err: &EngineError, line: usize) -> String {
    match err {
        EngineError::Parse(p) => {
            let mut p = p.clone();
            p.line += line - 1;
            format!("ERROR: {p}")
        }
        other => format!("ERROR at line {line}: {other}"),
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ScriptSummary {
    pub statements: usize,
    pub errors: usize,
}

/// Run every statement in `text`, writing results to `out` and errors to
/// `err`. With `stop_on_error` the first failing statement ends the run.
pub fn run_script(
    engine: &mut Engine,
    session: &mut SessionState,
    text: &str,
    stop_on_error: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> io::Result<ScriptSummary> {
    let (mut chunks, rest) = split_statements(text);
    chunks.extend(rest);
    let mut summary = ScriptSummary::default();
    for chunk in chunks {
        summary.statements += 1;
        match engine.execute(session, &chunk.text) {
            Ok(r) => out.write_all(format_result(&r).as_bytes())?,
            Err(e) => {
                summary.errors += 1;
                writeln!(err, "{}", describe_error(&e, chunk.line))?;
                if stop_on_error {
                    break;
                }
            }
        }
    }
    out.flush()?;
    Ok(summary)
}

/// Interactive loop: statements end at `;`, errors are reported and the
/// session carries on. Returns at end of input.
pub fn repl(
    engine: &mut Engine,
    session: &mut SessionState,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> io::Result<()> {
    let mut pending = String::new();
    let mut line_no = 0;
    let mut pending_start = 1;
    loop {
        write!(out, "{}", if pending.trim().is_empty() { "baihe> " } else { "  ...> " })?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            return Ok(());
        }
        line_no += 1;
        if pending.trim().is_empty() {
            pending.clear();
            pending_start = line_no;
        }
        pending.push_str(&line);
        let (chunks, rest) = split_statements(&pending);
        for chunk in chunks {
            let at = pending_start + chunk.line - 1;
            match engine.execute(session, &chunk.text) {
                Ok(r) => out.write_all(format_result(&r).as_bytes())?,
                Err(e) => writeln!(out, "{}", describe_error(&e, at))?,
            }
        }
        pending = match rest {
            Some(r) => {
                pending_start += r.line - 1;
                r.text
            }
            None => String::new(),
        };
    }
}
