//! Report document model: an ordered key/value tree rendered either as
//! indented `key: value` text or as JSON with the same field order.

/// One report value. Maps preserve insertion order in both renderings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Val {
    Str(String),
    Int(i64),
    Bool(bool),
    List(Vec<Val>),
    Map(Vec<(String, Val)>),
}

impl Val {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Val::Map(fields) => {
                for (k, v) in fields {
                    render_entry(k, v, 0, &mut out);
                }
            }
            other => render_value_block(other, 0, &mut out),
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut out = String::new();
        render_json(self, 0, &mut out);
        out.push('\n');
        out
    }
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn is_scalar(v: &Val) -> bool {
    matches!(v, Val::Str(_) | Val::Int(_) | Val::Bool(_))
}

fn scalar_text(v: &Val) -> String {
    match v {
        Val::Str(s) if s.contains('\n') => {
            // Multi-line strings render as an indented block; the caller
            // handles them separately.
            s.clone()
        }
        Val::Str(s) => s.clone(),
        Val::Int(i) => i.to_string(),
        Val::Bool(b) => b.to_string(),
        _ => unreachable!(),
    }
}

fn render_entry(key: &str, v: &Val, level: usize, out: &mut String) {
    match v {
        Val::Str(s) if s.contains('\n') => {
            indent(level, out);
            out.push_str(key);
            out.push_str(": |\n");
            for line in s.lines() {
                indent(level + 1, out);
                out.push_str(line);
                out.push('\n');
            }
        }
        v if is_scalar(v) => {
            indent(level, out);
            out.push_str(key);
            out.push_str(": ");
            out.push_str(&scalar_text(v));
            out.push('\n');
        }
        Val::List(items) if items.is_empty() => {
            indent(level, out);
            out.push_str(key);
            out.push_str(": []\n");
        }
        Val::Map(fields) if fields.is_empty() => {
            indent(level, out);
            out.push_str(key);
            out.push_str(": {}\n");
        }
        _ => {
            indent(level, out);
            out.push_str(key);
            out.push_str(":\n");
            render_value_block(v, level + 1, out);
        }
    }
}

fn render_value_block(v: &Val, level: usize, out: &mut String) {
    match v {
        Val::List(items) => {
            for item in items {
                match item {
                    i if is_scalar(i) && !matches!(i, Val::Str(s) if s.contains('\n')) => {
                        indent(level, out);
                        out.push_str("- ");
                        out.push_str(&scalar_text(i));
                        out.push('\n');
                    }
                    Val::Map(fields) => {
                        for (n, (k, fv)) in fields.iter().enumerate() {
                            if n == 0 {
                                indent(level, out);
                                out.push_str("- ");
                                // Render the first field inline after the dash.
                                let mut tmp = String::new();
                                render_entry(k, fv, 0, &mut tmp);
                                out.push_str(tmp.trim_start());
                            } else {
                                render_entry(k, fv, level + 1, out);
                            }
                        }
                    }
                    other => {
                        indent(level, out);
                        out.push_str("-\n");
                        render_value_block(other, level + 1, out);
                    }
                }
            }
        }
        Val::Map(fields) => {
            for (k, fv) in fields {
                render_entry(k, fv, level, out);
            }
        }
        scalar => {
            indent(level, out);
            out.push_str(&scalar_text(scalar));
            out.push('\n');
        }
    }
}

fn json_escape(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn render_json(v: &Val, level: usize, out: &mut String) {
    match v {
        Val::Str(s) => json_escape(s, out),
        Val::Int(i) => out.push_str(&i.to_string()),
        Val::Bool(b) => out.push_str(&b.to_string()),
        Val::List(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(level + 1, out);
                render_json(item, level + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push(']');
        }
        Val::Map(fields) => {
            if fields.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (k, fv)) in fields.iter().enumerate() {
                indent(level + 1, out);
                json_escape(k, out);
                out.push_str(": ");
                render_json(fv, level + 1, out);
                if i + 1 < fields.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            indent(level, out);
            out.push('}');
        }
    }
}
