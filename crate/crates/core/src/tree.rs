//! Unordered XML trees: conformance, isomorphism via canonical forms, and
//! bounded instance enumeration.
//!
//! Trees are immutable values. Node identity matters (update operations
//! address nodes by id), so structural equality of two trees is decided by
//! the canonical form, not by `==`.
//!
//! The term syntax used by tests and the CLI writes a tree as
//! `R(B(E(G(H("x")))))`: a quoted string denotes a `#str` child carrying that
//! value.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::schema::{ContentModel, Dtd, ElementType, SchemaError};

/// Node identifier, unique within a tree. Fresh ids never collide with ids
/// already present in the tree they extend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Node label: an element type or the text marker.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Label {
    Str,
    Element(ElementType),
}

impl Label {
    pub fn element(&self) -> Option<&ElementType> {
        match self {
            Label::Element(e) => Some(e),
            Label::Str => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Str => f.write_str("#str"),
            Label::Element(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
struct NodeData {
    label: Label,
    value: Option<String>,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
}

/// Rooted unordered labeled tree. `value` is defined exactly on `#str` nodes,
/// which are always leaves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct XmlTree {
    root: NodeId,
    nodes: BTreeMap<NodeId, NodeData>,
}

/// Allocator for node ids. Share one generator across a tree and every
/// subtree that will be inserted into it, and the disjointness precondition
/// of update operations holds by construction.
#[derive(Clone, Debug, Default)]
pub struct IdGen(u32);

impl IdGen {
    pub fn new() -> Self {
        IdGen(0)
    }

    pub fn starting_at(n: u32) -> Self {
        IdGen(n)
    }

    /// A generator whose ids are all fresh for `t`.
    pub fn after(t: &XmlTree) -> Self {
        IdGen(t.max_id() + 1)
    }

    pub fn fresh(&mut self) -> NodeId {
        let id = NodeId(self.0);
        self.0 += 1;
        id
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("unknown element type label `{name}`")]
    UnknownLabel { name: String },
    #[error("tree literal error at byte {pos}: {msg}")]
    Literal { pos: usize, msg: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl XmlTree {
    /// Single element node without children.
    pub fn leaf(gen: &mut IdGen, label: ElementType) -> XmlTree {
        let id = gen.fresh();
        let mut nodes = BTreeMap::new();
        nodes.insert(
            id,
            NodeData {
                label: Label::Element(label),
                value: None,
                parent: None,
                children: Vec::new(),
            },
        );
        XmlTree { root: id, nodes }
    }

    /// Single `#str` node carrying `value`.
    pub fn text(gen: &mut IdGen, value: impl Into<String>) -> XmlTree {
        let id = gen.fresh();
        let mut nodes = BTreeMap::new();
        nodes.insert(
            id,
            NodeData {
                label: Label::Str,
                value: Some(value.into()),
                parent: None,
                children: Vec::new(),
            },
        );
        XmlTree { root: id, nodes }
    }

    /// Element node over the given child subtrees. The subtrees must have
    /// pairwise disjoint ids (guaranteed when built from one generator).
    pub fn node(gen: &mut IdGen, label: ElementType, children: Vec<XmlTree>) -> XmlTree {
        let mut tree = XmlTree::leaf(gen, label);
        let root = tree.root;
        for child in children {
            tree.graft(root, child);
        }
        tree
    }

    /// Element node with a single `#str` child, the usual shape of a text
    /// element.
    pub fn text_element(
        gen: &mut IdGen,
        label: ElementType,
        value: impl Into<String>,
    ) -> XmlTree {
        let text = XmlTree::text(gen, value);
        XmlTree::node(gen, label, vec![text])
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a tree always has a root
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains_key(&n)
    }

    pub fn label(&self, n: NodeId) -> &Label {
        &self.nodes[&n].label
    }

    pub fn value(&self, n: NodeId) -> Option<&str> {
        self.nodes[&n].value.as_deref()
    }

    pub fn parent(&self, n: NodeId) -> Option<NodeId> {
        self.nodes[&n].parent
    }

    pub fn children(&self, n: NodeId) -> &[NodeId] {
        &self.nodes[&n].children
    }

    /// All node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn max_id(&self) -> u32 {
        self.nodes.keys().map(|n| n.0).max().unwrap_or(0)
    }

    /// Ids of `n` and all its descendants.
    pub fn subtree_ids(&self, n: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![n];
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children(x).iter().copied());
        }
        out.sort();
        out
    }

    /// True iff `anc` is `n` or an ancestor of `n`.
    pub fn is_ancestor_or_self(&self, anc: NodeId, n: NodeId) -> bool {
        let mut cur = Some(n);
        while let Some(x) = cur {
            if x == anc {
                return true;
            }
            cur = self.parent(x);
        }
        false
    }

    /// The subtree rooted at `n`, keeping node ids.
    pub fn subtree(&self, n: NodeId) -> XmlTree {
        let ids = self.subtree_ids(n);
        let mut nodes = BTreeMap::new();
        for id in ids {
            let mut data = self.nodes[&id].clone();
            if id == n {
                data.parent = None;
            }
            nodes.insert(id, data);
        }
        XmlTree { root: n, nodes }
    }

    /// An isomorphic copy whose ids are drawn from `gen`.
    pub fn relabeled(&self, gen: &mut IdGen) -> XmlTree {
        let mut mapping: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for id in self.nodes.keys() {
            mapping.insert(*id, gen.fresh());
        }
        let mut nodes = BTreeMap::new();
        for (id, data) in &self.nodes {
            nodes.insert(
                mapping[id],
                NodeData {
                    label: data.label.clone(),
                    value: data.value.clone(),
                    parent: data.parent.map(|p| mapping[&p]),
                    children: data.children.iter().map(|c| mapping[c]).collect(),
                },
            );
        }
        XmlTree {
            root: mapping[&self.root],
            nodes,
        }
    }

    pub fn ids_disjoint_from(&self, other: &XmlTree) -> bool {
        self.nodes.keys().all(|id| !other.nodes.contains_key(id))
    }

    pub(crate) fn graft(&mut self, target: NodeId, sub: XmlTree) {
        debug_assert!(sub.ids_disjoint_from(self));
        let sub_root = sub.root;
        for (id, mut data) in sub.nodes {
            if id == sub_root {
                data.parent = Some(target);
            }
            self.nodes.insert(id, data);
        }
        self.nodes.get_mut(&target).unwrap().children.push(sub_root);
    }

    pub(crate) fn remove_subtree(&mut self, n: NodeId) {
        if let Some(p) = self.parent(n) {
            let children = &mut self.nodes.get_mut(&p).unwrap().children;
            children.retain(|c| *c != n);
        }
        for id in self.subtree_ids(n) {
            self.nodes.remove(&id);
        }
    }

    pub(crate) fn set_value(&mut self, n: NodeId, value: String) {
        self.nodes.get_mut(&n).unwrap().value = Some(value);
    }
}

/// Canonical byte encoding of a tree modulo isomorphism: two trees are
/// isomorphic exactly when their canonical forms are equal.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CanonicalForm(String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn escape_value(v: &str, out: &mut String) {
    for c in v.chars() {
        if matches!(c, '\\' | '(' | ')' | ',') {
            out.push('\\');
        }
        out.push(c);
    }
}

fn canon_rec(t: &XmlTree, n: NodeId, out: &mut String) {
    match t.label(n) {
        Label::Str => {
            out.push('#');
            escape_value(t.value(n).unwrap_or(""), out);
        }
        Label::Element(e) => out.push_str(e.name()),
    }
    let children = t.children(n);
    if !children.is_empty() {
        let mut encs: Vec<String> = children
            .iter()
            .map(|c| {
                let mut s = String::new();
                canon_rec(t, *c, &mut s);
                s
            })
            .collect();
        encs.sort();
        out.push('(');
        out.push_str(&encs.join(","));
        out.push(')');
    }
}

/// Sorted-encoding canonicalization: children encodings are sorted and
/// concatenated under the node label, so the result is invariant under any
/// reordering of siblings.
pub fn canon(t: &XmlTree) -> CanonicalForm {
    let mut out = String::new();
    canon_rec(t, t.root(), &mut out);
    CanonicalForm(out)
}

/// Label-, value-, root- and edge-preserving bijection test, decided through
/// canonical forms.
pub fn isomorphic(t1: &XmlTree, t2: &XmlTree) -> bool {
    canon(t1) == canon(t2)
}

/// Does `t` conform to `d` at element type `a`? Children are matched as a
/// multiset: a sequence rule wants exactly one child per listed type, a
/// choice rule exactly one child of one alternative, a star rule any number
/// of children of the starred type, and a text rule a single `#str` leaf.
pub fn conforms_at(t: &XmlTree, d: &Dtd, a: &ElementType) -> Result<bool, TreeError> {
    for n in t.node_ids() {
        if let Label::Element(e) = t.label(n) {
            if !d.contains(e) {
                return Err(TreeError::UnknownLabel {
                    name: e.name().to_string(),
                });
            }
        }
    }
    if t.label(t.root()) != &Label::Element(a.clone()) {
        return Ok(false);
    }
    for n in t.node_ids() {
        match t.label(n) {
            Label::Str => {
                if !t.children(n).is_empty() || t.value(n).is_none() {
                    return Ok(false);
                }
            }
            Label::Element(e) => {
                if t.value(n).is_some() {
                    return Ok(false);
                }
                let children = t.children(n);
                let ok = match d.rule(e).expect("checked above") {
                    ContentModel::Str => {
                        children.len() == 1 && t.label(children[0]) == &Label::Str
                    }
                    ContentModel::Empty => children.is_empty(),
                    ContentModel::Sequence(ts) => {
                        let mut want: Vec<&ElementType> = ts.iter().collect();
                        want.sort();
                        let mut got: Vec<&ElementType> = Vec::with_capacity(children.len());
                        for c in children {
                            match t.label(*c) {
                                Label::Element(ce) => got.push(ce),
                                Label::Str => return Ok(false),
                            }
                        }
                        got.sort();
                        got == want
                    }
                    ContentModel::Choice(ts) => {
                        children.len() == 1
                            && match t.label(children[0]) {
                                Label::Element(ce) => ts.contains(ce),
                                Label::Str => false,
                            }
                    }
                    ContentModel::Star(b) => children
                        .iter()
                        .all(|c| t.label(*c) == &Label::Element(b.clone())),
                };
                if !ok {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Deterministic minimal instance of `a`: a choice picks its
/// lexicographically least alternative, a star picks zero children, text is
/// the empty string.
pub fn gen_instance(d: &Dtd, a: &ElementType) -> XmlTree {
    let mut gen = IdGen::new();
    gen_instance_with(d, a, &mut gen)
}

/// As [`gen_instance`], drawing node ids from the caller's generator.
pub fn gen_instance_with(d: &Dtd, a: &ElementType, gen: &mut IdGen) -> XmlTree {
    let model = d.rule(a).expect("element defined in DTD");
    let children = match model {
        ContentModel::Str => vec![XmlTree::text(gen, "")],
        ContentModel::Empty => Vec::new(),
        ContentModel::Star(_) => Vec::new(),
        ContentModel::Choice(ts) => {
            let least = ts.iter().min().expect("choice is nonempty");
            vec![gen_instance_with(d, least, gen)]
        }
        ContentModel::Sequence(ts) => ts.iter().map(|t| gen_instance_with(d, t, gen)).collect(),
    };
    XmlTree::node(gen, a.clone(), children)
}

/// Minimal instance of `from` that contains at least one node labeled
/// `target`. Requires `target` to be reachable from `from`.
pub fn instance_containing(
    d: &Dtd,
    from: &ElementType,
    target: &ElementType,
    gen: &mut IdGen,
) -> XmlTree {
    let path = element_path(d, from, target).expect("target reachable from source");
    build_along_path(d, &path, 0, gen)
}

/// Lexicographically least shortest chain of element types from `from` to
/// `target` along the subelement relation, both endpoints included.
pub fn element_path(d: &Dtd, from: &ElementType, target: &ElementType) -> Option<Vec<ElementType>> {
    use std::collections::VecDeque;
    let mut prev: BTreeMap<ElementType, ElementType> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back(from.clone());
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(from.clone());
    while let Some(x) = queue.pop_front() {
        if &x == target {
            let mut path = vec![x.clone()];
            let mut cur = x;
            while let Some(p) = prev.get(&cur) {
                path.push(p.clone());
                cur = p.clone();
            }
            path.reverse();
            return Some(path);
        }
        let mut subs: Vec<ElementType> = d.rule(&x)?.subelements().to_vec();
        subs.sort();
        for child in subs {
            if seen.insert(child.clone()) {
                prev.insert(child.clone(), x.clone());
                queue.push_back(child);
            }
        }
    }
    None
}

/// Minimal instance of `path[0]` whose spine follows the given element
/// chain; each consecutive pair must be a subelement step.
pub fn instance_containing_along(d: &Dtd, path: &[ElementType], gen: &mut IdGen) -> XmlTree {
    build_along_path(d, path, 0, gen)
}

fn build_along_path(d: &Dtd, path: &[ElementType], idx: usize, gen: &mut IdGen) -> XmlTree {
    let a = &path[idx];
    if idx + 1 == path.len() {
        return gen_instance_with(d, a, gen);
    }
    let next = &path[idx + 1];
    let children = match d.rule(a).expect("element defined") {
        ContentModel::Star(_) | ContentModel::Choice(_) => {
            vec![build_along_path(d, path, idx + 1, gen)]
        }
        ContentModel::Sequence(ts) => ts
            .iter()
            .map(|t| {
                if t == next {
                    build_along_path(d, path, idx + 1, gen)
                } else {
                    gen_instance_with(d, t, gen)
                }
            })
            .collect(),
        ContentModel::Str | ContentModel::Empty => unreachable!("path steps into subelements"),
    };
    XmlTree::node(gen, a.clone(), children)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Shape {
    Text(String),
    Node(ElementType, Vec<Shape>),
}

impl Shape {
    fn size(&self) -> usize {
        match self {
            Shape::Text(_) => 1,
            Shape::Node(_, cs) => 1 + cs.iter().map(Shape::size).sum::<usize>(),
        }
    }

    fn materialize(&self, gen: &mut IdGen) -> XmlTree {
        match self {
            Shape::Text(v) => XmlTree::text(gen, v.clone()),
            Shape::Node(e, cs) => {
                let children = cs.iter().map(|c| c.materialize(gen)).collect();
                XmlTree::node(gen, e.clone(), children)
            }
        }
    }
}

fn shapes(
    d: &Dtd,
    a: &ElementType,
    budget: usize,
    values: &[String],
    memo: &mut BTreeMap<(ElementType, usize), Vec<Shape>>,
) -> Vec<Shape> {
    if let Some(cached) = memo.get(&(a.clone(), budget)) {
        return cached.clone();
    }
    let mut out = Vec::new();
    if budget >= 1 {
        match d.rule(a).expect("element defined") {
            ContentModel::Str => {
                if budget >= 2 {
                    for v in values {
                        out.push(Shape::Node(a.clone(), vec![Shape::Text(v.clone())]));
                    }
                }
            }
            ContentModel::Empty => out.push(Shape::Node(a.clone(), Vec::new())),
            ContentModel::Choice(ts) => {
                let mut alts = ts.to_vec();
                alts.sort();
                for alt in alts {
                    for sub in shapes(d, &alt, budget - 1, values, memo) {
                        out.push(Shape::Node(a.clone(), vec![sub]));
                    }
                }
            }
            ContentModel::Star(b) => {
                let pool = shapes(d, b, budget - 1, values, memo);
                let mut stack: Vec<(usize, usize, Vec<Shape>)> = vec![(0, budget - 1, Vec::new())];
                while let Some((start, left, acc)) = stack.pop() {
                    out.push(Shape::Node(a.clone(), acc.clone()));
                    // Non-decreasing pool indices make each multiset unique.
                    for (i, cand) in pool.iter().enumerate().skip(start) {
                        let sz = cand.size();
                        if sz <= left {
                            let mut next = acc.clone();
                            next.push(cand.clone());
                            stack.push((i, left - sz, next));
                        }
                    }
                }
            }
            ContentModel::Sequence(ts) => {
                let mut partial: Vec<(usize, Vec<Shape>)> = vec![(budget - 1, Vec::new())];
                for t in ts {
                    let mut next = Vec::new();
                    for (left, acc) in &partial {
                        for sub in shapes(d, t, *left, values, memo) {
                            let sz = sub.size();
                            if sz <= *left {
                                let mut acc2 = acc.clone();
                                acc2.push(sub);
                                next.push((left - sz, acc2));
                            }
                        }
                    }
                    partial = next;
                }
                for (_, acc) in partial {
                    out.push(Shape::Node(a.clone(), acc));
                }
            }
        }
    }
    out.retain(|s| s.size() <= budget);
    out.sort_by_key(|s| (s.size(), canon(&s.materialize(&mut IdGen::new()))));
    out.dedup();
    memo.insert((a.clone(), budget), out.clone());
    out
}

/// Every instance of `a` with at most `max_nodes` nodes, pairwise
/// non-isomorphic, ordered by node count then canonical form. Exhaustive for
/// the given bound and value alphabet.
pub fn enumerate_instances(
    d: &Dtd,
    a: &ElementType,
    max_nodes: usize,
    values: &[String],
) -> Vec<XmlTree> {
    assert!(max_nodes >= 1, "max_nodes must be at least 1");
    assert!(!values.is_empty(), "value alphabet must be nonempty");
    let mut memo = BTreeMap::new();
    shapes(d, a, max_nodes, values, &mut memo)
        .into_iter()
        .map(|s| s.materialize(&mut IdGen::new()))
        .collect()
}

/// Parses the parenthesized term syntax, e.g. `R(B(E(G(H("x")))))`.
pub fn parse_tree_literal(text: &str) -> Result<XmlTree, TreeError> {
    let bytes = text.as_bytes();
    let mut pos = 0usize;
    let mut gen = IdGen::new();
    let tree = parse_node(text, bytes, &mut pos, &mut gen)?;
    skip_ws(bytes, &mut pos);
    if pos != bytes.len() {
        return Err(TreeError::Literal {
            pos,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(tree)
}

fn skip_ws(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
}

fn parse_node(
    text: &str,
    bytes: &[u8],
    pos: &mut usize,
    gen: &mut IdGen,
) -> Result<XmlTree, TreeError> {
    skip_ws(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && (bytes[*pos].is_ascii_alphanumeric() || bytes[*pos] == b'_') {
        *pos += 1;
    }
    if *pos == start {
        return Err(TreeError::Literal {
            pos: *pos,
            msg: "expected an element name".into(),
        });
    }
    let name = ElementType::new(&text[start..*pos]);
    skip_ws(bytes, pos);
    let mut children = Vec::new();
    if *pos < bytes.len() && bytes[*pos] == b'(' {
        *pos += 1;
        loop {
            skip_ws(bytes, pos);
            if *pos < bytes.len() && bytes[*pos] == b'"' {
                let value = parse_string(text, bytes, pos)?;
                children.push(XmlTree::text(gen, value));
            } else {
                children.push(parse_node(text, bytes, pos, gen)?);
            }
            skip_ws(bytes, pos);
            match bytes.get(*pos) {
                Some(b',') => {
                    *pos += 1;
                }
                Some(b')') => {
                    *pos += 1;
                    break;
                }
                _ => {
                    return Err(TreeError::Literal {
                        pos: *pos,
                        msg: "expected `,` or `)`".into(),
                    })
                }
            }
        }
    }
    Ok(XmlTree::node(gen, name, children))
}

fn parse_string(text: &str, bytes: &[u8], pos: &mut usize) -> Result<String, TreeError> {
    debug_assert_eq!(bytes[*pos], b'"');
    *pos += 1;
    let mut out = String::new();
    loop {
        match bytes.get(*pos) {
            None => {
                return Err(TreeError::Literal {
                    pos: *pos,
                    msg: "unterminated string".into(),
                })
            }
            Some(b'"') => {
                *pos += 1;
                return Ok(out);
            }
            Some(b'\\') => {
                *pos += 1;
                match bytes.get(*pos) {
                    Some(b'"') => out.push('"'),
                    Some(b'\\') => out.push('\\'),
                    _ => {
                        return Err(TreeError::Literal {
                            pos: *pos,
                            msg: "bad escape; only \\\" and \\\\ are supported".into(),
                        })
                    }
                }
                *pos += 1;
            }
            Some(_) => {
                let c = text[*pos..].chars().next().unwrap();
                out.push(c);
                *pos += c.len_utf8();
            }
        }
    }
}

/// Renders a tree in the term syntax with children in canonical order, so
/// isomorphic trees print identically.
pub fn format_tree_literal(t: &XmlTree) -> String {
    let mut out = String::new();
    format_rec(t, t.root(), &mut out);
    out
}

fn format_rec(t: &XmlTree, n: NodeId, out: &mut String) {
    match t.label(n) {
        Label::Str => {
            out.push('"');
            for c in t.value(n).unwrap_or("").chars() {
                if matches!(c, '"' | '\\') {
                    out.push('\\');
                }
                out.push(c);
            }
            out.push('"');
        }
        Label::Element(e) => {
            out.push_str(e.name());
            let children = sorted_children(t, n);
            if !children.is_empty() {
                out.push('(');
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    format_rec(t, *c, out);
                }
                out.push(')');
            }
        }
    }
}

/// Children of `n` ordered by (canonical form, id): the order used for
/// rendering and for path ordinals.
pub fn sorted_children(t: &XmlTree, n: NodeId) -> Vec<NodeId> {
    let mut children: Vec<NodeId> = t.children(n).to_vec();
    children.sort_by_key(|c| (canon(&t.subtree(*c)), *c));
    children
}
