//! Brute-force semantic ground truth.
//!
//! The oracle decides nothing in the abstract: it searches bounded instance
//! spaces for concrete counterexamples. [`find_witness`] enumerates
//! conforming trees, forbidden operations on them, and allowed update
//! sequences, looking for a sequence whose result is isomorphic to the
//! forbidden operation's result. [`minimal_repair_bruteforce`] finds exact
//! minimum repairs by subset enumeration on small allow sets.
//! [`digraph_reduction`] turns an arbitrary digraph into a schema/policy pair
//! whose only possible inconsistencies are transitivity violations of that
//! exact graph, which ties minimal repairs to minimum edge deletions.
//!
//! A forbidden operation whose result is isomorphic to the input tree (a
//! text overwrite with the unchanged value) is skipped: an effect
//! indistinguishable from doing nothing is not a vulnerability, and counting
//! it would flag every policy with a reachable forbidden text privilege.
//!
//! The search refutes consistency or exhausts its bounds; it never proves
//! consistency.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{Analyzer, RemovalChecker, Violation};
use crate::policy::{is_allowed_seq, is_forbidden_op, valid_set, Policy, Uat};
use crate::schema::{ContentModel, Dtd, ElementType, SchemaError};
use crate::tree::{
    canon, element_path, enumerate_instances, gen_instance_with, instance_containing, isomorphic,
    CanonicalForm, IdGen, Label, NodeId, XmlTree,
};
use crate::update::{apply, apply_seq, UpdateOp, UpdateSeq};

/// Bounds of the exhaustive search.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchBounds {
    pub max_tree_nodes: usize,
    pub max_seq_len: usize,
    pub max_insert_nodes: usize,
    pub value_alphabet: Vec<String>,
}

impl SearchBounds {
    pub fn new(max_tree_nodes: usize, max_seq_len: usize, max_insert_nodes: usize) -> Self {
        SearchBounds {
            max_tree_nodes,
            max_seq_len,
            max_insert_nodes,
            value_alphabet: vec!["s".to_string()],
        }
    }
}

/// A concrete inconsistency: on `tree`, the forbidden operation's effect
/// equals the allowed sequence's effect up to isomorphism.
#[derive(Clone, Debug)]
pub struct Witness {
    pub tree: XmlTree,
    pub forbidden_op: UpdateOp,
    pub allowed_seq: UpdateSeq,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("allow set of size {size} exceeds the subset-enumeration guard of {limit}")]
    InstanceTooLarge { size: usize, limit: usize },
    #[error("digraph has a self-loop at `{vertex}`")]
    SelfLoop { vertex: String },
    #[error("digraph needs at least two vertices")]
    TooFewVertices,
    #[error("digraph line {line}: {msg}")]
    DigraphSyntax { line: usize, msg: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Checks the three witness conditions: the operation is forbidden on the
/// tree, the sequence is allowed on it, and both produce isomorphic results.
pub fn validate_witness(d: &Dtd, p: &Policy, w: &Witness) -> bool {
    if !is_forbidden_op(d, p, &w.tree, &w.forbidden_op) {
        return false;
    }
    if !is_allowed_seq(d, p, &w.tree, &w.allowed_seq) {
        return false;
    }
    match (
        apply(&w.forbidden_op, &w.tree),
        apply_seq(&w.allowed_seq, &w.tree),
    ) {
        (Ok(a), Ok(b)) => isomorphic(&a, &b),
        _ => false,
    }
}

/// All operations on `t` matching some privilege in `uats`, in a fixed
/// deterministic order. Payload trees are drawn from the bounded instance
/// enumeration and relabeled fresh for `t`.
pub fn matching_ops(
    d: &Dtd,
    uats: &BTreeSet<Uat>,
    t: &XmlTree,
    bounds: &SearchBounds,
    payloads: &mut BTreeMap<(ElementType, usize), Vec<XmlTree>>,
) -> Vec<UpdateOp> {
    let mut out = Vec::new();
    let mut nodes_by_label: BTreeMap<&ElementType, Vec<NodeId>> = BTreeMap::new();
    let mut str_nodes: Vec<NodeId> = Vec::new();
    for n in t.node_ids() {
        match t.label(n) {
            Label::Element(e) => nodes_by_label.entry(e).or_default().push(n),
            Label::Str => str_nodes.push(n),
        }
    }
    let mut instances = |e: &ElementType| -> Vec<XmlTree> {
        payloads
            .entry((e.clone(), bounds.max_insert_nodes))
            .or_insert_with(|| {
                enumerate_instances(d, e, bounds.max_insert_nodes, &bounds.value_alphabet)
            })
            .clone()
    };
    for u in uats {
        match u {
            Uat::Insert { ctx, child } => {
                for n in nodes_by_label.get(ctx).into_iter().flatten() {
                    for payload in instances(child) {
                        let mut gen = IdGen::after(t);
                        out.push(UpdateOp::Insert {
                            target: *n,
                            subtree: payload.relabeled(&mut gen),
                        });
                    }
                }
            }
            Uat::Delete { ctx, child } => {
                for n in nodes_by_label.get(child).into_iter().flatten() {
                    let parent_ok = t
                        .parent(*n)
                        .is_some_and(|p| t.label(p) == &Label::Element(ctx.clone()));
                    if parent_ok {
                        out.push(UpdateOp::Delete { target: *n });
                    }
                }
            }
            Uat::Replace { ctx, from, to } => {
                for n in nodes_by_label.get(from).into_iter().flatten() {
                    let parent_ok = t
                        .parent(*n)
                        .is_some_and(|p| t.label(p) == &Label::Element(ctx.clone()));
                    if !parent_ok || *n == t.root() {
                        continue;
                    }
                    for payload in instances(to) {
                        let mut gen = IdGen::after(t);
                        out.push(UpdateOp::ReplaceTree {
                            target: *n,
                            subtree: payload.relabeled(&mut gen),
                        });
                    }
                }
            }
            Uat::ReplaceStr { ctx } => {
                for n in &str_nodes {
                    let parent_ok = t
                        .parent(*n)
                        .is_some_and(|p| t.label(p) == &Label::Element(ctx.clone()));
                    if parent_ok {
                        for v in &bounds.value_alphabet {
                            out.push(UpdateOp::ReplaceText {
                                target: *n,
                                text: v.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Breadth-first exploration of trees reachable from `t` by allowed
/// sequences of at most `max_seq_len` operations. Returns the first
/// (shortest, discovery-ordered) sequence per canonical form.
/// All schema-respecting operations on `t`: those matching any privilege
/// valid for the DTD, with payloads within the bounds.
pub fn all_valid_ops(d: &Dtd, t: &XmlTree, bounds: &SearchBounds) -> Vec<UpdateOp> {
    let mut cache = BTreeMap::new();
    matching_ops(d, &valid_set(d), t, bounds, &mut cache)
}

fn reachable_by_allowed(
    d: &Dtd,
    p: &Policy,
    t: &XmlTree,
    bounds: &SearchBounds,
    payloads: &mut BTreeMap<(ElementType, usize), Vec<XmlTree>>,
) -> BTreeMap<CanonicalForm, UpdateSeq> {
    let mut reached: BTreeMap<CanonicalForm, UpdateSeq> = BTreeMap::new();
    reached.insert(canon(t), Vec::new());
    let mut frontier: Vec<(XmlTree, UpdateSeq)> = vec![(t.clone(), Vec::new())];
    for _ in 0..bounds.max_seq_len {
        let mut next = Vec::new();
        for (state, seq) in &frontier {
            for op in matching_ops(d, &p.allow, state, bounds, payloads) {
                let out = apply(&op, state).expect("generated ops are valid");
                let form = canon(&out);
                if reached.contains_key(&form) {
                    continue;
                }
                let mut seq2 = seq.clone();
                seq2.push(op);
                reached.insert(form, seq2.clone());
                next.push((out, seq2));
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    reached
}

/// Exhaustive bounded search for an inconsistency witness. Trees are
/// explored by ascending node count and canonical form, forbidden candidate
/// operations in a fixed deterministic order, and sequences shortest-first,
/// so the returned witness is the least one under that order. Returns `None`
/// when the bounded space holds no witness; that never proves consistency.
pub fn find_witness(d: &Dtd, p: &Policy, bounds: &SearchBounds) -> Option<Witness> {
    let mut payloads = BTreeMap::new();
    let trees = enumerate_instances(
        d,
        d.root(),
        bounds.max_tree_nodes,
        &bounds.value_alphabet,
    );
    for t in trees {
        let forbidden_ops = matching_ops(d, &p.forbid, &t, bounds, &mut payloads);
        if forbidden_ops.is_empty() {
            continue;
        }
        let start = canon(&t);
        let mut targets: Vec<(CanonicalForm, UpdateOp)> = Vec::new();
        for op in forbidden_ops {
            let out = apply(&op, &t).expect("generated ops are valid");
            let form = canon(&out);
            if form == start {
                continue; // no observable effect
            }
            targets.push((form, op));
        }
        if targets.is_empty() {
            continue;
        }
        let reached = reachable_by_allowed(d, p, &t, bounds, &mut payloads);
        for (form, op) in targets {
            if let Some(seq) = reached.get(&form) {
                let w = Witness {
                    tree: t.clone(),
                    forbidden_op: op,
                    allowed_seq: seq.clone(),
                };
                debug_assert!(validate_witness(d, p, &w));
                return Some(w);
            }
        }
    }
    None
}

/// Builds a minimal conforming instance whose spine runs from the root to a
/// node labeled with the last element of `spine`, and grafts `site` as that
/// node's child subtree.
fn build_spine_with_site(d: &Dtd, spine: &[ElementType], site: XmlTree, gen: &mut IdGen) -> XmlTree {
    let (parent, rest) = spine.split_last().expect("spine is nonempty");
    debug_assert_eq!(parent, spine.last().unwrap());
    let site_label = match site.label(site.root()) {
        Label::Element(e) => e.clone(),
        Label::Str => unreachable!("sites are element-rooted"),
    };
    let parent_subtree = match d.rule(parent).expect("declared element") {
        ContentModel::Star(b) => {
            debug_assert_eq!(b, &site_label);
            XmlTree::node(gen, parent.clone(), vec![site])
        }
        ContentModel::Choice(ts) => {
            debug_assert!(ts.contains(&site_label));
            XmlTree::node(gen, parent.clone(), vec![site])
        }
        ContentModel::Sequence(ts) => {
            let children = ts
                .iter()
                .map(|t| {
                    if t == &site_label {
                        site.clone()
                    } else {
                        gen_instance_with(d, t, gen)
                    }
                })
                .collect();
            XmlTree::node(gen, parent.clone(), children)
        }
        _ => unreachable!("spine parents have subelements"),
    };
    // Wrap upwards along the rest of the spine.
    let mut cur = parent_subtree;
    for a in rest.iter().rev() {
        let cur_label = match cur.label(cur.root()) {
            Label::Element(e) => e.clone(),
            Label::Str => unreachable!(),
        };
        cur = match d.rule(a).expect("declared element") {
            ContentModel::Star(_) | ContentModel::Choice(_) => {
                XmlTree::node(gen, a.clone(), vec![cur])
            }
            ContentModel::Sequence(ts) => {
                let children = ts
                    .iter()
                    .map(|t| {
                        if t == &cur_label {
                            cur.clone()
                        } else {
                            gen_instance_with(d, t, gen)
                        }
                    })
                    .collect();
                XmlTree::node(gen, a.clone(), children)
            }
            _ => unreachable!(),
        };
    }
    cur
}

/// An instance of `root_type` containing a site where an operation matching
/// `f` can apply, plus that operation. The operation always has an
/// observable effect.
fn forbidden_site(d: &Dtd, root_type: &ElementType, f: &Uat, gen: &mut IdGen) -> (XmlTree, UpdateOp) {
    match f {
        Uat::Insert { ctx, child } => {
            let t = instance_containing(d, root_type, ctx, gen);
            let target = first_labeled(&t, ctx);
            let payload = gen_instance_with(d, child, gen);
            (t, UpdateOp::Insert { target, subtree: payload })
        }
        Uat::Delete { ctx, child } => {
            let base = instance_containing(d, root_type, ctx, gen);
            let ctx_node = first_labeled(&base, ctx);
            let mut t = base;
            let extra = gen_instance_with(d, child, gen);
            let extra_root = extra.root();
            t.graft(ctx_node, extra);
            (t, UpdateOp::Delete { target: extra_root })
        }
        Uat::Replace { ctx, from, to } => {
            let mut path = element_path(d, root_type, ctx).expect("context reachable");
            path.push(from.clone());
            let t = crate::tree::instance_containing_along(d, &path, gen);
            let from_node = nth_on_path(&t, &path);
            let payload = gen_instance_with(d, to, gen);
            (
                t,
                UpdateOp::ReplaceTree {
                    target: from_node,
                    subtree: payload,
                },
            )
        }
        Uat::ReplaceStr { ctx } => {
            let t = instance_containing(d, root_type, ctx, gen);
            let ctx_node = first_labeled(&t, ctx);
            let target = t.children(ctx_node)[0];
            debug_assert_eq!(t.label(target), &Label::Str);
            // Generated instances carry empty strings, so any nonempty value
            // gives the operation an observable effect.
            (
                t,
                UpdateOp::ReplaceText {
                    target,
                    text: "w".to_string(),
                },
            )
        }
    }
}

fn first_labeled(t: &XmlTree, e: &ElementType) -> NodeId {
    t.node_ids()
        .find(|n| t.label(*n) == &Label::Element(e.clone()))
        .expect("label present by construction")
}

fn nth_on_path(t: &XmlTree, path: &[ElementType]) -> NodeId {
    // Walk the unique spine: at each step descend into the child with the
    // next path label (first such child in id order).
    let mut cur = t.root();
    for want in &path[1..] {
        cur = t
            .children(cur)
            .iter()
            .copied()
            .find(|c| t.label(*c) == &Label::Element(want.clone()))
            .expect("spine child present by construction");
    }
    cur
}

/// Expands an analysis violation into a concrete witness, realizing the
/// simulation that the violation promises.
pub fn expand_violation(d: &Dtd, _p: &Policy, v: &Violation) -> Witness {
    let mut gen = IdGen::new();
    match v {
        Violation::InsDel {
            ctx,
            star_child,
            witness_forbidden,
        } => {
            let site = {
                let (site_tree, _) = forbidden_site(d, star_child, witness_forbidden, &mut gen);
                site_tree
            };
            // Rebuild the site op against the grafted copy below.
            let spine = element_path(d, d.root(), ctx).expect("context reachable");
            let t = build_spine_with_site(d, &spine, site, &mut gen);
            let ctx_node = deepest_labeled(&t, ctx);
            let site_root = t.children(ctx_node)[0];
            let (_, op0) = rebuild_site_op(d, &t, site_root, witness_forbidden, &mut gen);
            let modified = apply(&op0, &t.subtree(site_root)).expect("site op valid");
            let seq = vec![
                UpdateOp::Delete { target: site_root },
                UpdateOp::Insert {
                    target: ctx_node,
                    subtree: modified.relabeled(&mut gen),
                },
            ];
            Witness {
                tree: t,
                forbidden_op: op0,
                allowed_seq: seq,
            }
        }
        Violation::ForbiddenTransitivity { ctx, from, to, path } => {
            let spine = element_path(d, d.root(), ctx).expect("context reachable");
            let site = gen_instance_with(d, from, &mut gen);
            let t = build_spine_with_site(d, &spine, site, &mut gen);
            let ctx_node = deepest_labeled(&t, ctx);
            let site_root = t.children(ctx_node)[0];
            let op0 = UpdateOp::ReplaceTree {
                target: site_root,
                subtree: gen_instance_with(d, to, &mut gen),
            };
            let mut seq = Vec::new();
            let mut target = site_root;
            for step in &path[1..] {
                let payload = gen_instance_with(d, step, &mut gen);
                let payload_root = payload.root();
                seq.push(UpdateOp::ReplaceTree {
                    target,
                    subtree: payload,
                });
                target = payload_root;
            }
            Witness {
                tree: t,
                forbidden_op: op0,
                allowed_seq: seq,
            }
        }
        Violation::NegativeCycle {
            ctx,
            vertex,
            cycle,
            witness_forbidden,
        } => {
            let site = {
                let (site_tree, _) = forbidden_site(d, vertex, witness_forbidden, &mut gen);
                site_tree
            };
            let spine = element_path(d, d.root(), ctx).expect("context reachable");
            let t = build_spine_with_site(d, &spine, site, &mut gen);
            let ctx_node = deepest_labeled(&t, ctx);
            let site_root = t.children(ctx_node)[0];
            let (_, op0) = rebuild_site_op(d, &t, site_root, witness_forbidden, &mut gen);
            let modified = apply(&op0, &t.subtree(site_root)).expect("site op valid");
            // Walk the cycle; the final replacement installs the edited copy.
            let mut seq = Vec::new();
            let mut target = site_root;
            for step in &cycle[1..cycle.len() - 1] {
                let payload = gen_instance_with(d, step, &mut gen);
                let payload_root = payload.root();
                seq.push(UpdateOp::ReplaceTree {
                    target,
                    subtree: payload,
                });
                target = payload_root;
            }
            seq.push(UpdateOp::ReplaceTree {
                target,
                subtree: modified.relabeled(&mut gen),
            });
            Witness {
                tree: t,
                forbidden_op: op0,
                allowed_seq: seq,
            }
        }
    }
}

/// The deepest node labeled `e` (ties broken by id). The spine construction
/// places the interesting context at the bottom of the built path.
fn deepest_labeled(t: &XmlTree, e: &ElementType) -> NodeId {
    let depth = |mut n: NodeId| {
        let mut d = 0;
        while let Some(p) = t.parent(n) {
            d += 1;
            n = p;
        }
        d
    };
    t.node_ids()
        .filter(|n| t.label(*n) == &Label::Element(e.clone()))
        .max_by_key(|n| (depth(*n), std::cmp::Reverse(*n)))
        .expect("label present by construction")
}

/// Rebuilds the forbidden operation against the grafted site inside `t`.
fn rebuild_site_op(
    d: &Dtd,
    t: &XmlTree,
    site_root: NodeId,
    f: &Uat,
    gen: &mut IdGen,
) -> (NodeId, UpdateOp) {
    let sub = t.subtree(site_root);
    match f {
        Uat::Insert { ctx, child } => {
            let target = first_labeled_in(&sub, ctx);
            (
                target,
                UpdateOp::Insert {
                    target,
                    subtree: gen_instance_with(d, child, gen),
                },
            )
        }
        Uat::Delete { ctx, child } => {
            let ctx_node = first_labeled_in(&sub, ctx);
            let target = sub
                .children(ctx_node)
                .iter()
                .copied()
                .find(|c| sub.label(*c) == &Label::Element(child.clone()))
                .expect("child grafted by construction");
            (target, UpdateOp::Delete { target })
        }
        Uat::Replace { ctx, from, to } => {
            let ctx_node = sub
                .node_ids()
                .find(|n| {
                    sub.label(*n) == &Label::Element(ctx.clone())
                        && sub
                            .children(*n)
                            .iter()
                            .any(|c| sub.label(*c) == &Label::Element(from.clone()))
                })
                .expect("context with matching alternative present");
            let target = sub
                .children(ctx_node)
                .iter()
                .copied()
                .find(|c| sub.label(*c) == &Label::Element(from.clone()))
                .unwrap();
            (
                target,
                UpdateOp::ReplaceTree {
                    target,
                    subtree: gen_instance_with(d, to, gen),
                },
            )
        }
        Uat::ReplaceStr { ctx } => {
            let ctx_node = first_labeled_in(&sub, ctx);
            let target = sub.children(ctx_node)[0];
            (
                target,
                UpdateOp::ReplaceText {
                    target,
                    text: "w".to_string(),
                },
            )
        }
    }
}

fn first_labeled_in(t: &XmlTree, e: &ElementType) -> NodeId {
    t.node_ids()
        .find(|n| t.label(*n) == &Label::Element(e.clone()))
        .expect("label present by construction")
}

/// How consistency is decided during brute-force repair search.
pub enum ConsistencyProbe {
    /// Use the polynomial-time checker.
    Analytic,
    /// Declare consistent when no witness exists within the bounds. Slower
    /// but entirely independent of the analytic path.
    Bounded(SearchBounds),
}

const BRUTEFORCE_ALLOW_LIMIT: usize = 20;

/// Exact minimum repair by enumerating subsets of the allow set in size
/// order. Returns the smallest removal count and one witness subset.
pub fn minimal_repair_bruteforce(
    d: &Dtd,
    p: &Policy,
    total: bool,
    probe: &ConsistencyProbe,
) -> Result<(usize, BTreeSet<Uat>), OracleError> {
    let allow: Vec<Uat> = p.allow.iter().cloned().collect();
    if allow.len() > BRUTEFORCE_ALLOW_LIMIT {
        return Err(OracleError::InstanceTooLarge {
            size: allow.len(),
            limit: BRUTEFORCE_ALLOW_LIMIT,
        });
    }
    let analyzer = Analyzer::new(d);
    let checker = match probe {
        ConsistencyProbe::Analytic => RemovalChecker::new(&analyzer, p, total),
        ConsistencyProbe::Bounded(_) => None,
    };
    let valid = valid_set(d);
    let consistent = |idx: &[usize]| -> bool {
        if let Some(checker) = &checker {
            return checker.consistent(idx);
        }
        let removed: BTreeSet<Uat> = idx.iter().map(|i| allow[*i].clone()).collect();
        match probe {
            ConsistencyProbe::Analytic => analyzer.consistent_after_removal(p, &removed, total),
            ConsistencyProbe::Bounded(bounds) => {
                let allow2: BTreeSet<Uat> = p.allow.difference(&removed).cloned().collect();
                let forbid2: BTreeSet<Uat> = if total {
                    valid.iter().filter(|u| !allow2.contains(*u)).cloned().collect()
                } else {
                    p.forbid.clone()
                };
                let q = Policy {
                    allow: allow2,
                    forbid: forbid2,
                };
                find_witness(d, &q, bounds).is_none()
            }
        }
    };
    for k in 0..=allow.len() {
        let mut found: Option<Vec<usize>> = None;
        for_each_combination(allow.len(), k, &mut |idx| {
            if found.is_some() {
                return;
            }
            if consistent(idx) {
                found = Some(idx.to_vec());
            }
        });
        if let Some(found) = found {
            let removed: BTreeSet<Uat> = found.iter().map(|i| allow[*i].clone()).collect();
            return Ok((k, removed));
        }
    }
    unreachable!("removing the whole allow set is always consistent");
}

fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        // advance
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// A loopless directed graph over named vertices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Digraph {
    pub vertices: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

/// Parses the digraph format: a `digraph` header, then `v1 -> v2` edge lines
/// or bare vertex names for isolated vertices.
pub fn parse_digraph(text: &str) -> Result<Digraph, OracleError> {
    let mut seen_header = false;
    let mut vertices = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != "digraph" {
                return Err(OracleError::DigraphSyntax {
                    line: line_no,
                    msg: "expected `digraph` header".into(),
                });
            }
            seen_header = true;
            continue;
        }
        if let Some((a, b)) = line.split_once("->") {
            let (a, b) = (a.trim().to_string(), b.trim().to_string());
            if a.is_empty() || b.is_empty() {
                return Err(OracleError::DigraphSyntax {
                    line: line_no,
                    msg: "expected `v1 -> v2`".into(),
                });
            }
            vertices.insert(a.clone());
            vertices.insert(b.clone());
            edges.insert((a, b));
        } else {
            vertices.insert(line.to_string());
        }
    }
    if !seen_header {
        return Err(OracleError::DigraphSyntax {
            line: 1,
            msg: "missing `digraph` header".into(),
        });
    }
    Ok(Digraph { vertices, edges })
}

/// Encodes a digraph as a schema/policy pair: a root disjunction over the
/// vertices (each a text element), allowed replacements exactly along the
/// edges, every text replacement allowed, everything else forbidden. The
/// root replace graph of the produced policy equals the input digraph, and a
/// minimal total repair removes exactly a minimum set of edges whose
/// deletion makes the digraph transitive.
pub fn digraph_reduction(g: &Digraph) -> Result<(Dtd, Policy), OracleError> {
    if g.vertices.len() < 2 {
        return Err(OracleError::TooFewVertices);
    }
    for (a, b) in &g.edges {
        if a == b {
            return Err(OracleError::SelfLoop { vertex: a.clone() });
        }
    }
    let mut root_name = "Root".to_string();
    while g.vertices.contains(&root_name) {
        root_name.push('_');
    }
    let root = ElementType::new(root_name);
    let mut rules: BTreeMap<ElementType, ContentModel> = BTreeMap::new();
    let alternatives: Vec<ElementType> = g.vertices.iter().map(ElementType::new).collect();
    rules.insert(root.clone(), ContentModel::Choice(alternatives.clone()));
    for v in &alternatives {
        rules.insert(v.clone(), ContentModel::Str);
    }
    let dtd = Dtd::new(root.clone(), rules)?;
    let mut allow: BTreeSet<Uat> = g
        .edges
        .iter()
        .map(|(a, b)| Uat::Replace {
            ctx: root.clone(),
            from: ElementType::new(a),
            to: ElementType::new(b),
        })
        .collect();
    for v in &alternatives {
        allow.insert(Uat::ReplaceStr { ctx: v.clone() });
    }
    let forbid = valid_set(&dtd)
        .into_iter()
        .filter(|u| !allow.contains(u))
        .collect();
    Ok((dtd, Policy { allow, forbid }))
}

/// Exact minimum number of edges to delete from `g` so the remaining graph
/// is transitive. Branch and bound on violating compositions, independent of
/// the policy machinery.
pub fn min_edge_deletions_to_transitivity(g: &Digraph) -> usize {
    let verts: Vec<&String> = g.vertices.iter().collect();
    let n = verts.len();
    assert!(n * n <= 128, "solver supports up to 11 vertices");
    let index = |v: &String| verts.iter().position(|x| *x == v).unwrap();
    let mut mask: u128 = 0;
    for (a, b) in &g.edges {
        mask |= 1 << (index(a) * n + index(b));
    }

    fn first_violation(mask: u128, n: usize) -> Option<(usize, usize, usize)> {
        for i in 0..n {
            for j in 0..n {
                if i == j || mask >> (i * n + j) & 1 == 0 {
                    continue;
                }
                for k in 0..n {
                    if k == j || k == i {
                        continue;
                    }
                    if mask >> (j * n + k) & 1 == 1 && mask >> (i * n + k) & 1 == 0 {
                        return Some((i, j, k));
                    }
                }
            }
        }
        None
    }

    fn solve(mask: u128, n: usize, depth: usize, best: &mut usize) {
        if depth >= *best {
            return;
        }
        match first_violation(mask, n) {
            None => *best = depth,
            Some((i, j, k)) => {
                solve(mask & !(1 << (i * n + j)), n, depth + 1, best);
                solve(mask & !(1 << (j * n + k)), n, depth + 1, best);
            }
        }
    }

    let mut best = g.edges.len();
    solve(mask, n, 0, &mut best);
    best
}
