//! Structured DTDs: parsing, validation, and the induced element graph.
//!
//! A structured DTD restricts every production rule to one of five shapes:
//! text content (`#str`), empty content (`epsilon`), a sequence of distinct
//! element types, a disjunction of distinct element types, or a single starred
//! type. Content models over arbitrary regular expressions are out of scope.
//!
//! The concrete file syntax is line based:
//!
//! ```text
//! dtd root R
//! R -> A + B + J + K
//! A -> C , D
//! B -> E *
//! F -> #str
//! E -> epsilon
//! ```
//!
//! Lines whose first non-blank character is `#` are comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Name of an element type. Names are case-sensitive tokens made of ASCII
/// letters, digits and underscores.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ElementType(String);

impl ElementType {
    pub fn new(name: impl Into<String>) -> Self {
        ElementType(name.into())
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ElementType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ElementType({})", self.0)
    }
}

impl From<&str> for ElementType {
    fn from(s: &str) -> Self {
        ElementType::new(s)
    }
}

/// Right-hand side of a production rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ContentModel {
    /// `A -> #str`: the element carries a single text child.
    Str,
    /// `A -> epsilon`: the element has no children.
    Empty,
    /// `A -> B1 , B2 , ...`: exactly one child of each listed type.
    Sequence(Vec<ElementType>),
    /// `A -> B1 + B2 + ...`: exactly one child, of one of the listed types.
    Choice(Vec<ElementType>),
    /// `A -> B *`: zero or more children of the given type.
    Star(ElementType),
}

impl ContentModel {
    /// The element types mentioned on the right-hand side, in rule order.
    pub fn subelements(&self) -> &[ElementType] {
        match self {
            ContentModel::Str | ContentModel::Empty => &[],
            ContentModel::Sequence(ts) | ContentModel::Choice(ts) => ts,
            ContentModel::Star(t) => std::slice::from_ref(t),
        }
    }
}

/// A validated structured DTD: a root type plus one production rule per
/// element type. The subelement relation is acyclic and every element type is
/// reachable from the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Dtd {
    root: ElementType,
    rules: BTreeMap<ElementType, ContentModel>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SchemaError {
    #[error("line {line}, col {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("line {line}: duplicate production rule for `{name}`")]
    DuplicateProduction { line: usize, name: String },
    #[error("line {line}: rule for `{rule}` lists subelement `{child}` twice")]
    DuplicateChild { line: usize, rule: String, child: String },
    #[error("element `{name}` is referenced but has no production rule")]
    UndefinedElement { name: String },
    #[error("missing production rule for root `{name}`")]
    MissingRoot { name: String },
    #[error("recursive DTD: cycle through {cycle:?}")]
    Recursive { cycle: Vec<String> },
    #[error("element `{name}` is not reachable from the root")]
    Unreachable { name: String },
    #[error("unknown element type `{name}`")]
    UnknownElement { name: String },
}

impl Dtd {
    /// Builds a DTD from explicit parts, enforcing every invariant that
    /// [`parse_dtd`] enforces.
    pub fn new(
        root: ElementType,
        rules: BTreeMap<ElementType, ContentModel>,
    ) -> Result<Self, SchemaError> {
        let dtd = Dtd { root, rules };
        dtd.validate()?;
        Ok(dtd)
    }

    pub fn root(&self) -> &ElementType {
        &self.root
    }

    /// Production rule for `a`, if `a` is declared.
    pub fn rule(&self, a: &ElementType) -> Option<&ContentModel> {
        self.rules.get(a)
    }

    /// All declared element types, in lexicographic order.
    pub fn elements(&self) -> impl Iterator<Item = &ElementType> {
        self.rules.keys()
    }

    pub fn rules(&self) -> impl Iterator<Item = (&ElementType, &ContentModel)> {
        self.rules.iter()
    }

    pub fn contains(&self, a: &ElementType) -> bool {
        self.rules.contains_key(a)
    }

    fn validate(&self) -> Result<(), SchemaError> {
        if !self.rules.contains_key(&self.root) {
            return Err(SchemaError::MissingRoot {
                name: self.root.name().to_string(),
            });
        }
        for (name, model) in &self.rules {
            let subs = model.subelements();
            let mut seen = BTreeSet::new();
            for child in subs {
                if !self.rules.contains_key(child) {
                    return Err(SchemaError::UndefinedElement {
                        name: child.name().to_string(),
                    });
                }
                if !seen.insert(child) {
                    return Err(SchemaError::DuplicateChild {
                        line: 0,
                        rule: name.name().to_string(),
                        child: child.name().to_string(),
                    });
                }
            }
        }
        self.check_acyclic()?;
        // Reachability keeps every declared type meaningful: a privilege at an
        // unreachable context could never match an operation on any instance.
        let mut reach = BTreeSet::new();
        let mut stack = vec![self.root.clone()];
        while let Some(a) = stack.pop() {
            if reach.insert(a.clone()) {
                for child in self.rules[&a].subelements() {
                    stack.push(child.clone());
                }
            }
        }
        for name in self.rules.keys() {
            if !reach.contains(name) {
                return Err(SchemaError::Unreachable {
                    name: name.name().to_string(),
                });
            }
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), SchemaError> {
        #[derive(Clone, Copy, PartialEq)]
        enum State {
            Open,
            Done,
        }
        let mut state: BTreeMap<&ElementType, State> = BTreeMap::new();
        let mut stack: Vec<(&ElementType, usize)> = Vec::new();
        for start in self.rules.keys() {
            if state.contains_key(start) {
                continue;
            }
            stack.push((start, 0));
            state.insert(start, State::Open);
            while let Some((node, idx)) = stack.pop() {
                let subs = self.rules[node].subelements();
                if idx < subs.len() {
                    stack.push((node, idx + 1));
                    let child = &subs[idx];
                    match state.get(child) {
                        Some(State::Open) => {
                            let mut cycle: Vec<String> =
                                stack.iter().map(|(n, _)| n.name().to_string()).collect();
                            cycle.push(child.name().to_string());
                            let pos = cycle.iter().position(|n| n == child.name()).unwrap();
                            return Err(SchemaError::Recursive {
                                cycle: cycle[pos..].to_vec(),
                            });
                        }
                        Some(State::Done) => {}
                        None => {
                            state.insert(child, State::Open);
                            stack.push((child, 0));
                        }
                    }
                } else {
                    state.insert(node, State::Done);
                }
            }
        }
        Ok(())
    }

    /// Topological order of element types, parents before children.
    pub fn topological_order(&self) -> Vec<ElementType> {
        let mut order = Vec::new();
        let mut done = BTreeSet::new();
        fn visit(
            dtd: &Dtd,
            a: &ElementType,
            done: &mut BTreeSet<ElementType>,
            order: &mut Vec<ElementType>,
        ) {
            if done.contains(a) {
                return;
            }
            done.insert(a.clone());
            for child in dtd.rules[a].subelements() {
                visit(dtd, child, done, order);
            }
            order.push(a.clone());
        }
        for a in self.rules.keys() {
            visit(self, a, &mut done, &mut order);
        }
        order.reverse();
        order
    }

    /// `below(a, c)`: true iff `c` is reachable from `a` through the
    /// subelement relation, including `a == c`.
    pub fn below(&self, a: &ElementType, c: &ElementType) -> Result<bool, SchemaError> {
        for x in [a, c] {
            if !self.rules.contains_key(x) {
                return Err(SchemaError::UnknownElement {
                    name: x.name().to_string(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![a];
        while let Some(x) = stack.pop() {
            if x == c {
                return Ok(true);
            }
            if seen.insert(x) {
                for child in self.rules[x].subelements() {
                    stack.push(child);
                }
            }
        }
        Ok(false)
    }

    /// For each element type, the set of types at or below it (its reflexive
    /// transitive subelements). Useful when `below` is queried in bulk.
    pub fn descendants_map(&self) -> BTreeMap<ElementType, BTreeSet<ElementType>> {
        let mut map: BTreeMap<ElementType, BTreeSet<ElementType>> = BTreeMap::new();
        for a in self.topological_order().iter().rev() {
            let mut set = BTreeSet::new();
            set.insert(a.clone());
            for child in self.rules[a].subelements() {
                set.extend(map[child].iter().cloned());
            }
            map.insert(a.clone(), set);
        }
        map
    }

    pub fn graph(&self) -> DtdGraph {
        let mut vertices: BTreeSet<GraphNode> = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for (a, model) in &self.rules {
            vertices.insert(GraphNode::Element(a.clone()));
            for child in model.subelements() {
                edges.insert((a.clone(), GraphNode::Element(child.clone())));
            }
            if matches!(model, ContentModel::Str) {
                vertices.insert(GraphNode::Str);
                edges.insert((a.clone(), GraphNode::Str));
            }
        }
        DtdGraph {
            vertices: vertices.into_iter().collect(),
            edges,
            root: self.root.clone(),
        }
    }
}

/// A vertex of the DTD graph: an element type or the text pseudo-vertex.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum GraphNode {
    /// `#str` sorts before any element type so graph listings show text
    /// leaves first.
    Str,
    Element(ElementType),
}

impl fmt::Display for GraphNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphNode::Str => f.write_str("#str"),
            GraphNode::Element(e) => write!(f, "{e}"),
        }
    }
}

/// The DAG induced by a DTD: one vertex per element type plus `#str`, one
/// edge per subelement occurrence (and `A -> #str` per text rule).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DtdGraph {
    pub vertices: Vec<GraphNode>,
    pub edges: BTreeSet<(ElementType, GraphNode)>,
    pub root: ElementType,
}

impl DtdGraph {
    /// Element-type vertices in topological order (parents first). `#str` is
    /// excluded; it is always a sink.
    pub fn topological_elements(&self, dtd: &Dtd) -> Vec<ElementType> {
        dtd.topological_order()
    }
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

struct Cursor<'a> {
    text: &'a str,
    line: usize,
}

impl Cursor<'_> {
    fn err(&self, col: usize, msg: impl Into<String>) -> SchemaError {
        SchemaError::Syntax {
            line: self.line,
            col,
            msg: msg.into(),
        }
    }
}

fn split_name(cur: &Cursor, s: &str, offset: usize) -> Result<(String, usize), SchemaError> {
    let s2 = s.trim_start();
    let col = offset + (s.len() - s2.len());
    let end = s2.find(|c| !is_name_char(c)).unwrap_or(s2.len());
    if end == 0 {
        return Err(cur.err(col + 1, "expected an element name"));
    }
    Ok((s2[..end].to_string(), col + end))
}

/// Parses the DTD file format. See the module docs for the syntax.
pub fn parse_dtd(text: &str) -> Result<Dtd, SchemaError> {
    let mut root: Option<ElementType> = None;
    let mut rules: BTreeMap<ElementType, ContentModel> = BTreeMap::new();
    let mut rule_lines: BTreeMap<ElementType, usize> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let cur = Cursor {
            text: raw,
            line: idx + 1,
        };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if root.is_none() {
            let rest = line
                .strip_prefix("dtd")
                .and_then(|r| r.trim_start().strip_prefix("root"))
                .ok_or_else(|| cur.err(1, "expected header `dtd root <Name>`"))?;
            let (name, after) = split_name(&cur, rest, line.len() - rest.len())?;
            if !rest.trim_end().ends_with(name.as_str()) || rest[..].trim().len() != name.len() {
                // Guard against trailing junk after the root name.
                let trailing = rest.trim();
                if trailing != name {
                    return Err(cur.err(after, "unexpected text after root name"));
                }
            }
            root = Some(ElementType::new(name));
            continue;
        }

        let arrow = line
            .find("->")
            .ok_or_else(|| cur.err(1, "expected `<Name> -> <content>`"))?;
        let (lhs, _) = split_name(&cur, &line[..arrow], 0)?;
        if line[..arrow].trim() != lhs {
            return Err(cur.err(1, "rule left-hand side must be a single element name"));
        }
        let name = ElementType::new(lhs);
        if rules.contains_key(&name) {
            return Err(SchemaError::DuplicateProduction {
                line: cur.line,
                name: name.name().to_string(),
            });
        }
        let rhs = line[arrow + 2..].trim();
        let model = parse_content(&cur, rhs, arrow + 3)?;
        if let ContentModel::Sequence(ts) | ContentModel::Choice(ts) = &model {
            let mut seen = BTreeSet::new();
            for t in ts {
                if !seen.insert(t.clone()) {
                    return Err(SchemaError::DuplicateChild {
                        line: cur.line,
                        rule: name.name().to_string(),
                        child: t.name().to_string(),
                    });
                }
            }
        }
        rule_lines.insert(name.clone(), cur.line);
        rules.insert(name, model);
    }

    let root = root.ok_or(SchemaError::Syntax {
        line: 1,
        col: 1,
        msg: "missing `dtd root <Name>` header".into(),
    })?;
    Dtd::new(root, rules)
}

fn parse_content(cur: &Cursor, rhs: &str, col: usize) -> Result<ContentModel, SchemaError> {
    if rhs.is_empty() {
        return Err(cur.err(col, "empty right-hand side"));
    }
    if rhs == "#str" {
        return Ok(ContentModel::Str);
    }
    if rhs == "epsilon" {
        return Ok(ContentModel::Empty);
    }
    if let Some(stem) = rhs.strip_suffix('*') {
        let stem = stem.trim();
        if stem.chars().all(is_name_char) && !stem.is_empty() {
            return Ok(ContentModel::Star(ElementType::new(stem)));
        }
        return Err(cur.err(col, "`*` applies to a single element name, e.g. `B *`"));
    }
    let has_comma = rhs.contains(',');
    let has_plus = rhs.contains('+');
    if has_comma && has_plus {
        return Err(cur.err(col, "cannot mix `,` and `+` in one rule"));
    }
    let sep = if has_plus { '+' } else { ',' };
    let mut items = Vec::new();
    for part in rhs.split(sep) {
        let part = part.trim();
        if part.is_empty() || !part.chars().all(is_name_char) {
            return Err(cur.err(col, format!("expected an element name, found `{part}`")));
        }
        if part == "epsilon" || cur.text.is_empty() && false {
            return Err(cur.err(col, "`epsilon` cannot appear inside a list"));
        }
        items.push(ElementType::new(part));
    }
    if has_plus {
        if items.len() < 2 {
            return Err(cur.err(col, "a disjunction needs at least two alternatives"));
        }
        Ok(ContentModel::Choice(items))
    } else {
        Ok(ContentModel::Sequence(items))
    }
}

/// Renders a DTD back into the file format. `parse_dtd(render_dtd(d)) == d`.
pub fn render_dtd(dtd: &Dtd) -> String {
    let mut out = format!("dtd root {}\n", dtd.root());
    for (name, model) in dtd.rules() {
        let rhs = match model {
            ContentModel::Str => "#str".to_string(),
            ContentModel::Empty => "epsilon".to_string(),
            ContentModel::Sequence(ts) => ts
                .iter()
                .map(|t| t.name())
                .collect::<Vec<_>>()
                .join(" , "),
            ContentModel::Choice(ts) => ts
                .iter()
                .map(|t| t.name())
                .collect::<Vec<_>>()
                .join(" + "),
            ContentModel::Star(t) => format!("{t} *"),
        };
        out.push_str(&format!("{name} -> {rhs}\n"));
    }
    out
}
