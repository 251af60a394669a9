//! Atomic update operations on unordered trees, sequence application, and
//! normalization into delete–replace–insert shape.
//!
//! The four operations mirror the unordered fragment of XML update
//! facilities: insert a subtree under a node, replace a subtree, replace a
//! text value, and delete a subtree. Deleting or replacing a node removes the
//! whole subtree rooted there; the root itself can never be deleted or
//! replaced.
//!
//! `normalize` rewrites a valid sequence into an equivalent one (same result
//! up to isomorphism) in which all deletes come first, then replacements,
//! then inserts. The rewrite rules move inserts forward past later
//! operations, move deletes backward, and chain or merge replacements.

use std::fmt;

use thiserror::Error;

use crate::tree::{
    isomorphic, sorted_children, IdGen, Label, NodeId, XmlTree,
};

/// An atomic update. Payload subtrees must be node-disjoint from any tree the
/// operation is applied to; this is checked at apply time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UpdateOp {
    /// Add `subtree` as a new child of `target`.
    Insert { target: NodeId, subtree: XmlTree },
    /// Remove the subtree rooted at `target` and graft `subtree` under the
    /// parent of `target`.
    ReplaceTree { target: NodeId, subtree: XmlTree },
    /// Overwrite the string value of the `#str` node `target`.
    ReplaceText { target: NodeId, text: String },
    /// Remove the subtree rooted at `target`.
    Delete { target: NodeId },
}

pub type UpdateSeq = Vec<UpdateOp>;

impl UpdateOp {
    pub fn target(&self) -> NodeId {
        match self {
            UpdateOp::Insert { target, .. }
            | UpdateOp::ReplaceTree { target, .. }
            | UpdateOp::ReplaceText { target, .. }
            | UpdateOp::Delete { target } => *target,
        }
    }

    pub fn payload(&self) -> Option<&XmlTree> {
        match self {
            UpdateOp::Insert { subtree, .. } | UpdateOp::ReplaceTree { subtree, .. } => {
                Some(subtree)
            }
            _ => None,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            UpdateOp::Insert { .. } => "insert",
            UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. } => "replace",
            UpdateOp::Delete { .. } => "delete",
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UpdateError {
    #[error("target node {node} is not in the tree")]
    TargetMissing { node: NodeId },
    #[error("cannot delete or replace the root node {node}")]
    RootRemoval { node: NodeId },
    #[error("replace(text) target {node} is not a #str node")]
    NotTextNode { node: NodeId },
    #[error("payload subtree shares node ids with the tree")]
    OverlappingIds,
    #[error("operation {index} in sequence is invalid: {source}")]
    InvalidAt {
        index: usize,
        #[source]
        source: Box<UpdateError>,
    },
    #[error("bad update literal: {msg}")]
    Literal { msg: String },
    #[error("path `{path}` does not resolve to a node")]
    PathUnresolved { path: String },
}

/// Validity of a single operation against a tree: the target exists, payload
/// ids are disjoint, the root is never deleted or replaced, and text
/// replacement only applies to `#str` nodes.
pub fn is_valid_op(op: &UpdateOp, t: &XmlTree) -> bool {
    check_op(op, t).is_ok()
}

fn check_op(op: &UpdateOp, t: &XmlTree) -> Result<(), UpdateError> {
    let target = op.target();
    if !t.contains(target) {
        return Err(UpdateError::TargetMissing { node: target });
    }
    if let Some(payload) = op.payload() {
        if !payload.ids_disjoint_from(t) {
            return Err(UpdateError::OverlappingIds);
        }
    }
    match op {
        UpdateOp::Delete { .. } | UpdateOp::ReplaceTree { .. } => {
            if target == t.root() {
                return Err(UpdateError::RootRemoval { node: target });
            }
        }
        UpdateOp::ReplaceText { .. } => {
            if t.label(target) != &Label::Str {
                return Err(UpdateError::NotTextNode { node: target });
            }
        }
        UpdateOp::Insert { .. } => {}
    }
    Ok(())
}

/// Applies one operation. Surviving nodes keep their ids, labels, and values;
/// only the affected subtree changes.
pub fn apply(op: &UpdateOp, t: &XmlTree) -> Result<XmlTree, UpdateError> {
    check_op(op, t)?;
    let mut out = t.clone();
    match op {
        UpdateOp::Insert { target, subtree } => {
            out.graft(*target, subtree.clone());
        }
        UpdateOp::ReplaceTree { target, subtree } => {
            let parent = t.parent(*target).expect("non-root has a parent");
            out.remove_subtree(*target);
            out.graft(parent, subtree.clone());
        }
        UpdateOp::ReplaceText { target, text } => {
            out.set_value(*target, text.clone());
        }
        UpdateOp::Delete { target } => {
            out.remove_subtree(*target);
        }
    }
    Ok(out)
}

/// Left-to-right fold of [`apply`]; fails with the index of the first
/// operation that is invalid on its intermediate tree.
pub fn apply_seq(seq: &[UpdateOp], t: &XmlTree) -> Result<XmlTree, UpdateError> {
    let mut cur = t.clone();
    for (index, op) in seq.iter().enumerate() {
        cur = apply(op, &cur).map_err(|e| UpdateError::InvalidAt {
            index,
            source: Box::new(e),
        })?;
    }
    Ok(cur)
}

pub fn is_valid_seq(seq: &[UpdateOp], t: &XmlTree) -> bool {
    apply_seq(seq, t).is_ok()
}

/// True when the sequence has the delete–replace–insert shape.
pub fn is_normal_shape(seq: &[UpdateOp]) -> bool {
    let phase = |op: &UpdateOp| match op {
        UpdateOp::Delete { .. } => 0,
        UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. } => 1,
        UpdateOp::Insert { .. } => 2,
    };
    seq.windows(2).all(|w| phase(&w[0]) <= phase(&w[1]))
}

enum Rewrite {
    /// No rule applies to this pair.
    Keep,
    Into(Vec<UpdateOp>),
}

/// Rewrites an adjacent pair `insert(n, u); op2`, moving the insert towards
/// the end of the sequence. `pre` is the tree before the insert.
fn rewrite_insert_pair(ins: &UpdateOp, op2: &UpdateOp, pre: &XmlTree) -> Rewrite {
    let (n, u) = match ins {
        UpdateOp::Insert { target, subtree } => (*target, subtree),
        _ => unreachable!(),
    };
    let m = op2.target();
    match op2 {
        UpdateOp::Insert { .. } => {
            if u.contains(m) {
                let merged = apply(op2, u).expect("payload edit is valid");
                Rewrite::Into(vec![UpdateOp::Insert {
                    target: n,
                    subtree: merged,
                }])
            } else {
                Rewrite::Keep
            }
        }
        UpdateOp::ReplaceTree { subtree: v, .. } => {
            if m == u.root() {
                Rewrite::Into(vec![UpdateOp::Insert {
                    target: n,
                    subtree: v.clone(),
                }])
            } else if u.contains(m) {
                let merged = apply(op2, u).expect("payload edit is valid");
                Rewrite::Into(vec![UpdateOp::Insert {
                    target: n,
                    subtree: merged,
                }])
            } else if pre.is_ancestor_or_self(m, n) {
                Rewrite::Into(vec![op2.clone()])
            } else {
                Rewrite::Into(vec![op2.clone(), ins.clone()])
            }
        }
        UpdateOp::ReplaceText { .. } => {
            if u.contains(m) {
                let merged = apply(op2, u).expect("payload edit is valid");
                Rewrite::Into(vec![UpdateOp::Insert {
                    target: n,
                    subtree: merged,
                }])
            } else {
                // A text overwrite removes no nodes, so it commutes with the
                // insert regardless of where the two targets sit.
                Rewrite::Into(vec![op2.clone(), ins.clone()])
            }
        }
        UpdateOp::Delete { .. } => {
            if m == u.root() {
                Rewrite::Into(Vec::new())
            } else if u.contains(m) {
                let merged = apply(op2, u).expect("payload edit is valid");
                Rewrite::Into(vec![UpdateOp::Insert {
                    target: n,
                    subtree: merged,
                }])
            } else if pre.is_ancestor_or_self(m, n) {
                Rewrite::Into(vec![op2.clone()])
            } else {
                Rewrite::Into(vec![op2.clone(), ins.clone()])
            }
        }
    }
}

/// Rewrites an adjacent pair `replace…; delete(m)`, moving the delete
/// towards the front. `pre` is the tree before the replace.
fn rewrite_delete_pair(op1: &UpdateOp, del: &UpdateOp, pre: &XmlTree) -> Rewrite {
    let m = del.target();
    match op1 {
        UpdateOp::ReplaceTree { target: n, subtree: u } => {
            if m == u.root() {
                Rewrite::Into(vec![UpdateOp::Delete { target: *n }])
            } else if u.contains(m) {
                let merged = apply(del, u).expect("payload edit is valid");
                Rewrite::Into(vec![UpdateOp::ReplaceTree {
                    target: *n,
                    subtree: merged,
                }])
            } else if pre.is_ancestor_or_self(m, *n) {
                // m is a strict ancestor (m == n cannot survive the replace).
                Rewrite::Into(vec![del.clone()])
            } else {
                Rewrite::Into(vec![del.clone(), op1.clone()])
            }
        }
        UpdateOp::ReplaceText { target: n, .. } => {
            if pre.is_ancestor_or_self(m, *n) {
                Rewrite::Into(vec![del.clone()])
            } else {
                Rewrite::Into(vec![del.clone(), op1.clone()])
            }
        }
        _ => Rewrite::Keep,
    }
}

/// Rewrites an adjacent pair of replacements: payload-internal edits merge,
/// an ancestor replacement swallows the earlier one, and a replacement of the
/// previous payload root is a chain link and stays put.
fn rewrite_replace_pair(op1: &UpdateOp, op2: &UpdateOp, pre: &XmlTree) -> Rewrite {
    let m = op2.target();
    match (op1, op2) {
        (UpdateOp::ReplaceTree { target: n, subtree: u }, _) => {
            if m == u.root() {
                Rewrite::Keep // chain link
            } else if u.contains(m) {
                let merged = apply(op2, u).expect("payload edit is valid");
                Rewrite::Into(vec![UpdateOp::ReplaceTree {
                    target: *n,
                    subtree: merged,
                }])
            } else if pre.contains(m)
                && pre.is_ancestor_or_self(m, *n)
                && matches!(op2, UpdateOp::ReplaceTree { .. })
            {
                Rewrite::Into(vec![op2.clone()])
            } else {
                Rewrite::Keep
            }
        }
        (UpdateOp::ReplaceText { target: n, .. }, UpdateOp::ReplaceTree { .. }) => {
            if pre.is_ancestor_or_self(m, *n) {
                Rewrite::Into(vec![op2.clone()])
            } else {
                Rewrite::Keep
            }
        }
        (UpdateOp::ReplaceText { target: n, .. }, UpdateOp::ReplaceText { .. }) => {
            if m == *n {
                Rewrite::Into(vec![op2.clone()])
            } else {
                Rewrite::Keep
            }
        }
        _ => Rewrite::Keep,
    }
}

/// Can two middle-block replacements swap places? Both targets must live in
/// the tree before the first one and be in disjoint subtrees.
fn replaces_commute(op1: &UpdateOp, op2: &UpdateOp, pre: &XmlTree) -> bool {
    let (a, b) = (op1.target(), op2.target());
    pre.contains(a)
        && pre.contains(b)
        && !pre.is_ancestor_or_self(a, b)
        && !pre.is_ancestor_or_self(b, a)
}

/// Rewrites `seq` into an equivalent sequence shaped deletes, then
/// replacements (chained where one replaces the payload root of the
/// previous), then inserts. The input must be valid on `t`.
pub fn normalize(seq: &[UpdateOp], t: &XmlTree) -> Result<UpdateSeq, UpdateError> {
    apply_seq(seq, t)?;
    let mut ops: Vec<UpdateOp> = seq.to_vec();

    // Inserts forward.
    bubble(&mut ops, t, |op1, op2, pre| {
        if matches!(op1, UpdateOp::Insert { .. }) && !matches!(op2, UpdateOp::Insert { .. }) {
            rewrite_insert_pair(op1, op2, pre)
        } else {
            Rewrite::Keep
        }
    });

    // Deletes backward.
    bubble(&mut ops, t, |op1, op2, pre| {
        if matches!(
            op1,
            UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. }
        ) && matches!(op2, UpdateOp::Delete { .. })
        {
            rewrite_delete_pair(op1, op2, pre)
        } else {
            Rewrite::Keep
        }
    });

    // Merge and chain replacements.
    loop {
        let merged = bubble(&mut ops, t, |op1, op2, pre| {
            if matches!(
                op1,
                UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. }
            ) && matches!(
                op2,
                UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. }
            ) {
                rewrite_replace_pair(op1, op2, pre)
            } else {
                Rewrite::Keep
            }
        });
        let grouped = group_chains(&mut ops, t);
        if !merged && !grouped {
            break;
        }
    }

    debug_assert!(is_normal_shape(&ops));
    debug_assert!(isomorphic(
        &apply_seq(&ops, t).expect("normalized sequence stays valid"),
        &apply_seq(seq, t).unwrap()
    ));
    Ok(ops)
}

/// Repeatedly applies a pairwise rewrite rule to adjacent operations until no
/// rule fires. The rule receives the tree state before the first operation of
/// the pair; prefix states are maintained incrementally.
fn bubble(
    ops: &mut Vec<UpdateOp>,
    t: &XmlTree,
    rule: impl Fn(&UpdateOp, &UpdateOp, &XmlTree) -> Rewrite,
) -> bool {
    // pres[i] is the tree before ops[i]; pres[0] is the input tree.
    let mut pres: Vec<XmlTree> = vec![t.clone()];
    let mut any_change = false;
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 1 < ops.len() {
            while pres.len() <= i {
                let k = pres.len();
                let next = apply(&ops[k - 1], &pres[k - 1]).expect("valid prefix");
                pres.push(next);
            }
            match rule(&ops[i], &ops[i + 1], &pres[i]) {
                Rewrite::Keep => i += 1,
                Rewrite::Into(new_ops) => {
                    ops.splice(i..i + 2, new_ops);
                    pres.truncate(i + 1);
                    changed = true;
                    any_change = true;
                    i = i.saturating_sub(1);
                }
            }
        }
        if !changed {
            break;
        }
    }
    any_change
}

/// Moves each chain successor (a replacement whose target is the payload root
/// of an earlier replacement) next to its predecessor, commuting it past
/// unrelated replacements.
fn group_chains(ops: &mut [UpdateOp], t: &XmlTree) -> bool {
    let has_chain_successor = ops.iter().enumerate().any(|(j, op)| {
        matches!(op, UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. })
            && ops[..j].iter().any(|earlier| {
                matches!(earlier, UpdateOp::ReplaceTree { .. })
                    && earlier.payload().is_some_and(|p| p.root() == op.target())
            })
    });
    if !has_chain_successor {
        return false;
    }
    let mut any_moved = false;
    loop {
        let mut moved = false;
        for j in 1..ops.len() {
            let target = ops[j].target();
            if !matches!(
                ops[j],
                UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. }
            ) {
                continue;
            }
            // Find the chain predecessor, if any.
            let pred = ops[..j].iter().position(|op| {
                matches!(op, UpdateOp::ReplaceTree { .. })
                    && op.payload().is_some_and(|p| p.root() == target)
            });
            let Some(p) = pred else { continue };
            if p + 1 == j {
                continue;
            }
            // Try to swap ops[j] with ops[j-1].
            let pre = apply_seq(&ops[..j - 1], t).expect("valid prefix");
            if matches!(
                ops[j - 1],
                UpdateOp::ReplaceTree { .. } | UpdateOp::ReplaceText { .. }
            ) && replaces_commute(&ops[j - 1], &ops[j], &pre)
            {
                ops.swap(j - 1, j);
                moved = true;
                any_moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    any_moved
}

// ---------------------------------------------------------------------------
// Path-based literals: `delete(R/B/E[2])`, `insert(R/B, E(G(H("x"))))`,
// `replace(R/B/E[1]/G[1]/H[1]/#str, "y")`.
// ---------------------------------------------------------------------------

/// Path of `n` from the root: slash-separated labels with 1-based ordinals
/// among same-labeled siblings (in canonical child order). The ordinal is
/// omitted when the label is unique among its siblings.
pub fn node_path(t: &XmlTree, n: NodeId) -> String {
    let mut chain = Vec::new();
    let mut cur = Some(n);
    while let Some(x) = cur {
        chain.push(x);
        cur = t.parent(x);
    }
    chain.reverse();
    let mut segments = Vec::new();
    for (i, x) in chain.iter().enumerate() {
        let label = t.label(*x).to_string();
        if i == 0 {
            segments.push(label);
            continue;
        }
        let siblings = sorted_children(t, chain[i - 1]);
        let same: Vec<NodeId> = siblings
            .iter()
            .copied()
            .filter(|s| t.label(*s) == t.label(*x))
            .collect();
        if same.len() == 1 {
            segments.push(label);
        } else {
            let ord = same.iter().position(|s| s == x).unwrap() + 1;
            segments.push(format!("{label}[{ord}]"));
        }
    }
    segments.join("/")
}

/// Resolves a path produced by [`node_path`] against a tree.
pub fn resolve_path(t: &XmlTree, path: &str) -> Result<NodeId, UpdateError> {
    let unresolved = || UpdateError::PathUnresolved {
        path: path.to_string(),
    };
    let mut segments = path.split('/');
    let first = segments.next().ok_or_else(unresolved)?;
    let (label, ord) = parse_segment(first)?;
    let mut cur = t.root();
    if t.label(cur).to_string() != label || ord.unwrap_or(1) != 1 {
        return Err(unresolved());
    }
    for seg in segments {
        let (label, ord) = parse_segment(seg)?;
        let same: Vec<NodeId> = sorted_children(t, cur)
            .into_iter()
            .filter(|c| t.label(*c).to_string() == label)
            .collect();
        let idx = ord.unwrap_or(1) - 1;
        cur = *same.get(idx).ok_or_else(unresolved)?;
    }
    Ok(cur)
}

fn parse_segment(seg: &str) -> Result<(String, Option<usize>), UpdateError> {
    if let Some(open) = seg.find('[') {
        let close = seg.rfind(']').ok_or_else(|| UpdateError::Literal {
            msg: format!("missing `]` in segment `{seg}`"),
        })?;
        let ord: usize = seg[open + 1..close]
            .parse()
            .map_err(|_| UpdateError::Literal {
                msg: format!("bad ordinal in segment `{seg}`"),
            })?;
        if ord == 0 {
            return Err(UpdateError::Literal {
                msg: "ordinals are 1-based".into(),
            });
        }
        Ok((seg[..open].to_string(), Some(ord)))
    } else {
        Ok((seg.to_string(), None))
    }
}

/// Renders an operation as a literal, addressing its target by path in the
/// tree the operation applies to.
pub fn format_op(op: &UpdateOp, pre: &XmlTree) -> String {
    let path = node_path(pre, op.target());
    match op {
        UpdateOp::Delete { .. } => format!("delete({path})"),
        UpdateOp::Insert { subtree, .. } => {
            format!(
                "insert({path}, {})",
                crate::tree::format_tree_literal(subtree)
            )
        }
        UpdateOp::ReplaceTree { subtree, .. } => {
            format!(
                "replace({path}, {})",
                crate::tree::format_tree_literal(subtree)
            )
        }
        UpdateOp::ReplaceText { text, .. } => {
            let mut quoted = String::from("\"");
            for c in text.chars() {
                if matches!(c, '"' | '\\') {
                    quoted.push('\\');
                }
                quoted.push(c);
            }
            quoted.push('"');
            format!("replace({path}, {quoted})")
        }
    }
}

/// Renders a sequence, each operation against its own intermediate tree.
pub fn format_seq(seq: &[UpdateOp], t: &XmlTree) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = t.clone();
    for op in seq {
        out.push(format_op(op, &cur));
        cur = apply(op, &cur).expect("sequence is valid");
    }
    out
}

/// Parses an operation literal against the tree it will apply to, drawing
/// payload node ids from `gen`.
pub fn parse_op(text: &str, pre: &XmlTree, gen: &mut IdGen) -> Result<UpdateOp, UpdateError> {
    let text = text.trim();
    let (kind, rest) = text.split_once('(').ok_or_else(|| UpdateError::Literal {
        msg: "expected `op(...)`".into(),
    })?;
    let body = rest.strip_suffix(')').ok_or_else(|| UpdateError::Literal {
        msg: "missing closing `)`".into(),
    })?;
    match kind.trim() {
        "delete" => {
            let target = resolve_path(pre, body.trim())?;
            Ok(UpdateOp::Delete { target })
        }
        "insert" | "replace" => {
            let (path, arg) = split_top_level(body).ok_or_else(|| UpdateError::Literal {
                msg: format!("`{kind}` takes two arguments"),
            })?;
            let target = resolve_path(pre, path.trim())?;
            let arg = arg.trim();
            if kind.trim() == "insert" {
                let subtree = parse_payload(arg, gen)?;
                Ok(UpdateOp::Insert { target, subtree })
            } else if arg.starts_with('"') {
                let mut pos = 0usize;
                let value = super::update::parse_quoted(arg, &mut pos)?;
                Ok(UpdateOp::ReplaceText {
                    target,
                    text: value,
                })
            } else {
                let subtree = parse_payload(arg, gen)?;
                Ok(UpdateOp::ReplaceTree { target, subtree })
            }
        }
        other => Err(UpdateError::Literal {
            msg: format!("unknown operation `{other}`"),
        }),
    }
}

fn parse_payload(text: &str, gen: &mut IdGen) -> Result<XmlTree, UpdateError> {
    let parsed = crate::tree::parse_tree_literal(text).map_err(|e| UpdateError::Literal {
        msg: e.to_string(),
    })?;
    Ok(parsed.relabeled(gen))
}

fn parse_quoted(text: &str, pos: &mut usize) -> Result<String, UpdateError> {
    let bytes = text.as_bytes();
    if bytes.get(*pos) != Some(&b'"') {
        return Err(UpdateError::Literal {
            msg: "expected a quoted string".into(),
        });
    }
    *pos += 1;
    let mut out = String::new();
    while let Some(&b) = bytes.get(*pos) {
        match b {
            b'"' => {
                *pos += 1;
                return Ok(out);
            }
            b'\\' => {
                *pos += 1;
                match bytes.get(*pos) {
                    Some(b'"') => out.push('"'),
                    Some(b'\\') => out.push('\\'),
                    _ => {
                        return Err(UpdateError::Literal {
                            msg: "bad escape".into(),
                        })
                    }
                }
                *pos += 1;
            }
            _ => {
                let c = text[*pos..].chars().next().unwrap();
                out.push(c);
                *pos += c.len_utf8();
            }
        }
    }
    Err(UpdateError::Literal {
        msg: "unterminated string".into(),
    })
}

/// Splits `a, b` at the first comma not nested in parentheses or quotes.
fn split_top_level(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_str {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => return Some((&s[..i], &s[i + 1..])),
            _ => {}
        }
    }
    None
}

impl fmt::Display for UpdateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind_name(), self.target())
    }
}
