//! Consistency analysis: marked DTD graphs, replace graphs, the
//! polynomial-time consistency check, and least-privilege extension of
//! partial policies.
//!
//! A policy is inconsistent when a forbidden operation can be reproduced by
//! allowed ones. Exactly three patterns make that possible:
//!
//! 1. *insert-delete*: a star rule `A -> B *` with both `(A, insert(B))` and
//!    `(A, delete(B))` allowed, while something is forbidden at or below `B`.
//!    Deleting a `B` subtree and inserting an edited copy reproduces the
//!    forbidden change.
//! 2. *forbidden transitivity*: a choice rule whose replace graph has an
//!    allowed path from `X` to `Z` while `(A, replace(X,Z))` is forbidden.
//!    Chaining the replacements along the path reproduces the forbidden one.
//! 3. *negative cycle*: a replace-graph cycle through a vertex `X` with
//!    something forbidden at or below `X`. Replacing around the cycle swaps
//!    the whole `X` subtree for an edited copy.
//!
//! The checker enumerates every violating site. Partial policies are handled
//! by the same three checks; the closure operator [`closure_t`] makes the
//! connection precise and yields the least-privilege consistent extension.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::policy::{valid_set, Policy, Uat};
use crate::schema::{ContentModel, Dtd, DtdGraph, ElementType};

pub type Edge = (ElementType, ElementType);

/// Replace graph of one choice rule: vertices are the alternatives, edges the
/// allowed replacements, and forbidden edges the denied ones.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplaceGraph {
    pub ctx: ElementType,
    pub vertices: Vec<ElementType>,
    pub edges: BTreeSet<Edge>,
    pub forbidden: BTreeSet<Edge>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mark {
    Plus,
    Minus,
}

/// DTD graph annotated with `mu` (is anything forbidden at or below each
/// element?) and the set of star contexts whose insert/delete pair is fully
/// allowed while `mu` is negative.
#[derive(Clone, Debug, Serialize)]
pub struct MarkedGraph {
    pub graph: DtdGraph,
    pub mu: BTreeMap<ElementType, Mark>,
    pub chi: BTreeSet<ElementType>,
}

impl MarkedGraph {
    pub fn minus(&self, a: &ElementType) -> bool {
        self.mu.get(a) == Some(&Mark::Minus)
    }
}

/// One violating site. Every violation carries enough detail to rebuild a
/// concrete counterexample: a tree, a forbidden operation, and an allowed
/// sequence reproducing it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// Class 1: allowed insert/delete pair above a forbidden privilege.
    InsDel {
        ctx: ElementType,
        star_child: ElementType,
        witness_forbidden: Uat,
    },
    /// Class 2: allowed replacement path realizing a forbidden edge.
    ForbiddenTransitivity {
        ctx: ElementType,
        from: ElementType,
        to: ElementType,
        /// Vertices of one allowed path from `from` to `to`, inclusive.
        path: Vec<ElementType>,
    },
    /// Class 3: replace cycle through a vertex with a forbidden privilege
    /// below it.
    NegativeCycle {
        ctx: ElementType,
        vertex: ElementType,
        /// Vertices of one cycle, starting and ending at `vertex`.
        cycle: Vec<ElementType>,
        witness_forbidden: Uat,
    },
}

impl Violation {
    /// Violation class (1 = insert-delete, 2 = forbidden transitivity,
    /// 3 = negative cycle).
    pub fn class(&self) -> u8 {
        match self {
            Violation::InsDel { .. } => 1,
            Violation::ForbiddenTransitivity { .. } => 2,
            Violation::NegativeCycle { .. } => 3,
        }
    }

    pub fn ctx(&self) -> &ElementType {
        match self {
            Violation::InsDel { ctx, .. }
            | Violation::ForbiddenTransitivity { ctx, .. }
            | Violation::NegativeCycle { ctx, .. } => ctx,
        }
    }

    fn sort_key(&self) -> (u8, ElementType, ElementType, ElementType) {
        match self {
            Violation::InsDel { ctx, star_child, .. } => {
                (1, ctx.clone(), star_child.clone(), star_child.clone())
            }
            Violation::ForbiddenTransitivity { ctx, from, to, .. } => {
                (2, ctx.clone(), from.clone(), to.clone())
            }
            Violation::NegativeCycle { ctx, vertex, .. } => {
                (3, ctx.clone(), vertex.clone(), vertex.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub consistent: bool,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("`{0}` does not have a disjunction rule, so it has no replace graph")]
    NotAChoiceRule(ElementType),
}

/// Marks the DTD graph bottom-up: `mu(X)` is minus exactly when some
/// forbidden privilege has a context at or below `X`.
pub fn mark_graph(d: &Dtd, p: &Policy) -> MarkedGraph {
    let forbidden_ctxs: BTreeSet<&ElementType> = p.forbid.iter().map(Uat::ctx).collect();
    let mut mu: BTreeMap<ElementType, Mark> = BTreeMap::new();
    for a in d.topological_order().iter().rev() {
        let minus = forbidden_ctxs.contains(a)
            || d.rule(a)
                .expect("declared element")
                .subelements()
                .iter()
                .any(|b| mu[b] == Mark::Minus);
        mu.insert(a.clone(), if minus { Mark::Minus } else { Mark::Plus });
    }
    let mut chi = BTreeSet::new();
    for (a, model) in d.rules() {
        if let ContentModel::Star(b) = model {
            let ins = Uat::Insert {
                ctx: a.clone(),
                child: b.clone(),
            };
            let del = Uat::Delete {
                ctx: a.clone(),
                child: b.clone(),
            };
            if p.allow.contains(&ins) && p.allow.contains(&del) && mu[a] == Mark::Minus {
                chi.insert(a.clone());
            }
        }
    }
    MarkedGraph {
        graph: d.graph(),
        mu,
        chi,
    }
}

/// Builds the replace graph of a choice rule.
pub fn replace_graph(d: &Dtd, p: &Policy, a: &ElementType) -> Result<ReplaceGraph, AnalysisError> {
    let Some(ContentModel::Choice(ts)) = d.rule(a) else {
        return Err(AnalysisError::NotAChoiceRule(a.clone()));
    };
    let mut edges = BTreeSet::new();
    let mut forbidden = BTreeSet::new();
    for u in &p.allow {
        if let Uat::Replace { ctx, from, to } = u {
            if ctx == a {
                edges.insert((from.clone(), to.clone()));
            }
        }
    }
    for u in &p.forbid {
        if let Uat::Replace { ctx, from, to } = u {
            if ctx == a {
                forbidden.insert((from.clone(), to.clone()));
            }
        }
    }
    Ok(ReplaceGraph {
        ctx: a.clone(),
        vertices: ts.clone(),
        edges,
        forbidden,
    })
}

/// Transitive closure over paths of length >= 1; a self-loop `(x,x)` appears
/// exactly when `x` lies on a cycle.
pub fn transitive_closure(edges: &BTreeSet<Edge>) -> BTreeSet<Edge> {
    let mut succ: BTreeMap<&ElementType, BTreeSet<&ElementType>> = BTreeMap::new();
    for (x, y) in edges {
        succ.entry(x).or_default().insert(y);
    }
    let sources: Vec<&ElementType> = succ.keys().copied().collect();
    let mut out = BTreeSet::new();
    for src in sources {
        let mut seen: BTreeSet<&ElementType> = BTreeSet::new();
        let mut stack: Vec<&ElementType> = succ[src].iter().copied().collect();
        while let Some(y) = stack.pop() {
            if seen.insert(y) {
                out.insert((src.clone(), y.clone()));
                if let Some(next) = succ.get(y) {
                    stack.extend(next.iter().copied());
                }
            }
        }
    }
    out
}

/// Lexicographically least among the shortest paths `from -> to` of length
/// one or more in the edge set, as a vertex list including both endpoints.
/// For `from == to` this is the least shortest cycle through the vertex.
pub fn shortest_path(edges: &BTreeSet<Edge>, from: &ElementType, to: &ElementType) -> Option<Vec<ElementType>> {
    let mut succ: BTreeMap<&ElementType, Vec<&ElementType>> = BTreeMap::new();
    for (x, y) in edges {
        succ.entry(x).or_default().push(y);
    }
    // BFS over paths; queue explored in lexicographic layer order so the
    // first hit is the least shortest path.
    let mut queue: VecDeque<Vec<&ElementType>> = VecDeque::new();
    queue.push_back(vec![from]);
    let mut best_dist: BTreeMap<&ElementType, usize> = BTreeMap::new();
    while let Some(path) = queue.pop_front() {
        let last = *path.last().unwrap();
        if path.len() > 1 && last == to {
            return Some(path.into_iter().cloned().collect());
        }
        if path.len() > edges.len() + 1 {
            continue;
        }
        for next in succ.get(last).into_iter().flatten() {
            // Allow revisiting only the target (for cycles).
            let dist = path.len();
            let seen_better = best_dist.get(*next).is_some_and(|d| *d <= dist) && *next != to;
            if seen_better {
                continue;
            }
            if *next != to {
                best_dist.insert(*next, dist);
            }
            let mut p2 = path.clone();
            p2.push(*next);
            queue.push_back(p2);
        }
    }
    None
}

fn least_forbidden_below(
    p: &Policy,
    b: &ElementType,
    desc: &BTreeMap<ElementType, BTreeSet<ElementType>>,
) -> Option<Uat> {
    let below = &desc[b];
    p.forbid.iter().find(|u| below.contains(u.ctx())).cloned()
}

/// Per-DTD analysis context. Caching the derived structures pays off when
/// many policies over one schema are checked, as the brute-force repair
/// search does.
pub struct Analyzer<'d> {
    dtd: &'d Dtd,
    desc: BTreeMap<ElementType, BTreeSet<ElementType>>,
    star_rules: Vec<(ElementType, ElementType)>,
    choice_rules: Vec<(ElementType, Vec<ElementType>)>,
    valid: BTreeSet<Uat>,
}

impl<'d> Analyzer<'d> {
    pub fn new(dtd: &'d Dtd) -> Self {
        let mut star_rules = Vec::new();
        let mut choice_rules = Vec::new();
        for (a, model) in dtd.rules() {
            match model {
                ContentModel::Star(b) => star_rules.push((a.clone(), b.clone())),
                ContentModel::Choice(ts) => choice_rules.push((a.clone(), ts.clone())),
                _ => {}
            }
        }
        Analyzer {
            dtd,
            desc: dtd.descendants_map(),
            star_rules,
            choice_rules,
            valid: crate::policy::valid_set(dtd),
        }
    }

    pub fn dtd(&self) -> &Dtd {
        self.dtd
    }

    pub fn valid(&self) -> &BTreeSet<Uat> {
        &self.valid
    }

    /// Full check with violation enumeration; see [`check_consistency`].
    pub fn check(&self, p: &Policy) -> Verdict {
        let marks = mark_graph(self.dtd, p);
        let mut violations = Vec::new();
        for (a, b) in &self.star_rules {
            let ins = Uat::Insert {
                ctx: a.clone(),
                child: b.clone(),
            };
            let del = Uat::Delete {
                ctx: a.clone(),
                child: b.clone(),
            };
            if p.allow.contains(&ins) && p.allow.contains(&del) {
                if let Some(witness) = least_forbidden_below(p, b, &self.desc) {
                    debug_assert!(marks.chi.contains(a));
                    violations.push(Violation::InsDel {
                        ctx: a.clone(),
                        star_child: b.clone(),
                        witness_forbidden: witness,
                    });
                }
            }
        }
        for (a, vertices) in &self.choice_rules {
            let g = replace_graph(self.dtd, p, a).expect("choice rule");
            let closure = transitive_closure(&g.edges);
            for (x, z) in &closure {
                if x != z && g.forbidden.contains(&(x.clone(), z.clone())) {
                    let path = shortest_path(&g.edges, x, z).expect("closure edge has a path");
                    violations.push(Violation::ForbiddenTransitivity {
                        ctx: a.clone(),
                        from: x.clone(),
                        to: z.clone(),
                        path,
                    });
                }
            }
            for x in vertices {
                if closure.contains(&(x.clone(), x.clone())) && marks.minus(x) {
                    let cycle = shortest_path(&g.edges, x, x).expect("self-loop has a cycle");
                    let witness = least_forbidden_below(p, x, &self.desc)
                        .expect("minus mark implies a forbidden privilege below");
                    violations.push(Violation::NegativeCycle {
                        ctx: a.clone(),
                        vertex: x.clone(),
                        cycle,
                        witness_forbidden: witness,
                    });
                }
            }
        }
        violations.sort_by_key(Violation::sort_key);
        Verdict {
            consistent: violations.is_empty(),
            violations,
        }
    }

    /// Early-exit consistency of the policy obtained by removing `removed`
    /// from the allow set and, when `total`, forbidding everything else.
    /// Decides the same three conditions as [`Analyzer::check`] without
    /// materializing the candidate policy or its violations.
    pub fn consistent_after_removal(
        &self,
        p: &Policy,
        removed: &BTreeSet<Uat>,
        total: bool,
    ) -> bool {
        let allowed = |u: &Uat| p.allow.contains(u) && !removed.contains(u);
        let forbidden = |u: &Uat| {
            if total {
                !allowed(u)
            } else {
                p.forbid.contains(u)
            }
        };
        // Contexts carrying at least one forbidden privilege.
        let seeds: BTreeSet<&ElementType> = self
            .valid
            .iter()
            .filter(|u| forbidden(u))
            .map(Uat::ctx)
            .collect();
        let minus_below =
            |x: &ElementType| -> bool { self.desc[x].iter().any(|c| seeds.contains(c)) };
        for (a, b) in &self.star_rules {
            let ins = Uat::Insert {
                ctx: a.clone(),
                child: b.clone(),
            };
            let del = Uat::Delete {
                ctx: a.clone(),
                child: b.clone(),
            };
            if allowed(&ins) && allowed(&del) && minus_below(b) {
                return false;
            }
        }
        for (a, _vertices) in &self.choice_rules {
            let edges: BTreeSet<Edge> = p
                .allow
                .iter()
                .filter(|u| !removed.contains(*u))
                .filter_map(|u| match u {
                    Uat::Replace { ctx, from, to } if ctx == a => {
                        Some((from.clone(), to.clone()))
                    }
                    _ => None,
                })
                .collect();
            if edges.is_empty() {
                continue;
            }
            let closure = transitive_closure(&edges);
            for (x, z) in &closure {
                if x == z {
                    if minus_below(x) {
                        return false;
                    }
                } else if forbidden(&Uat::Replace {
                    ctx: a.clone(),
                    from: x.clone(),
                    to: z.clone(),
                }) {
                    return false;
                }
            }
        }
        true
    }
}

/// Decides consistency and enumerates every violating site.
///
/// For total policies the transitivity condition on each replace graph and
/// the forbidden-edge condition coincide; for partial policies the check is
/// exactly emptiness of `closure_t(allow) ∩ forbid`.
pub fn check_consistency(d: &Dtd, p: &Policy) -> Verdict {
    Analyzer::new(d).check(p)
}

/// Index-based variant of [`Analyzer::consistent_after_removal`] for tight
/// enumeration loops: everything is precomputed against one fixed policy, a
/// removal candidate is a sorted slice of indices into the allow set, and the
/// three conditions are decided over bitmasks. Supports DTDs with at most 64
/// element types.
pub struct RemovalChecker {
    /// (context index, allow index if allowed, forbidden in the base policy)
    valid_info: Vec<(usize, Option<usize>, bool)>,
    /// star rules with both pair members allowed in the base policy:
    /// (insert allow index, delete allow index, below-child element mask)
    star_pairs: Vec<(usize, usize, u64)>,
    /// per choice rule: vertex count, per ordered pair (allow index,
    /// forbidden in base), per vertex its below mask
    choices: Vec<ChoiceInfo>,
    total: bool,
    /// seeds from the base forbid set (partial mode only needs these)
    static_seed_mask: u64,
}

struct ChoiceInfo {
    m: usize,
    /// `pairs[i * m + j]`: allow index and base-forbid flag of replace(i,j)
    pairs: Vec<(Option<usize>, bool)>,
    below: Vec<u64>,
}

impl RemovalChecker {
    pub fn new(analyzer: &Analyzer<'_>, p: &Policy, total: bool) -> Option<RemovalChecker> {
        let elements: Vec<&ElementType> = analyzer.dtd.elements().collect();
        if elements.len() > 64 {
            return None;
        }
        let el_idx = |e: &ElementType| elements.iter().position(|x| *x == e).unwrap();
        let below_mask = |e: &ElementType| -> u64 {
            analyzer.desc[e]
                .iter()
                .fold(0u64, |acc, c| acc | 1 << el_idx(c))
        };
        let allow_vec: Vec<&Uat> = p.allow.iter().collect();
        let allow_index =
            |u: &Uat| -> Option<usize> { allow_vec.binary_search_by(|a| (*a).cmp(u)).ok() };
        let mut valid_info = Vec::new();
        let mut static_seed_mask = 0u64;
        for u in &analyzer.valid {
            let ctx = el_idx(u.ctx());
            let forbid = p.forbid.contains(u);
            if forbid {
                static_seed_mask |= 1 << ctx;
            }
            valid_info.push((ctx, allow_index(u), forbid));
        }
        let mut star_pairs = Vec::new();
        for (a, b) in &analyzer.star_rules {
            let ins = Uat::Insert {
                ctx: a.clone(),
                child: b.clone(),
            };
            let del = Uat::Delete {
                ctx: a.clone(),
                child: b.clone(),
            };
            if let (Some(i), Some(d)) = (allow_index(&ins), allow_index(&del)) {
                star_pairs.push((i, d, below_mask(b)));
            }
        }
        let mut choices = Vec::new();
        for (a, vertices) in &analyzer.choice_rules {
            let m = vertices.len();
            let mut pairs = vec![(None, false); m * m];
            for (i, from) in vertices.iter().enumerate() {
                for (j, to) in vertices.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let u = Uat::Replace {
                        ctx: a.clone(),
                        from: from.clone(),
                        to: to.clone(),
                    };
                    pairs[i * m + j] = (allow_index(&u), p.forbid.contains(&u));
                }
            }
            let below = vertices.iter().map(below_mask).collect();
            choices.push(ChoiceInfo { m, pairs, below });
        }
        Some(RemovalChecker {
            valid_info,
            star_pairs,
            choices,
            total,
            static_seed_mask,
        })
    }

    /// Is the policy consistent after removing the allow entries at the given
    /// sorted indices (in the iteration order of the allow set)?
    pub fn consistent(&self, removed: &[usize]) -> bool {
        let removed_has = |ai: usize| removed.binary_search(&ai).is_ok();
        let allowed = |allow_idx: Option<usize>| allow_idx.is_some_and(|ai| !removed_has(ai));
        let seed_mask = if self.total {
            let mut mask = 0u64;
            for (ctx, allow_idx, _) in &self.valid_info {
                if !allowed(*allow_idx) {
                    mask |= 1 << ctx;
                }
            }
            mask
        } else {
            self.static_seed_mask
        };
        for (ins, del, below) in &self.star_pairs {
            if !removed_has(*ins) && !removed_has(*del) && below & seed_mask != 0 {
                return false;
            }
        }
        for choice in &self.choices {
            let m = choice.m;
            let mut adj = [0u64; 64];
            let mut any = false;
            for (i, row) in adj.iter_mut().enumerate().take(m) {
                for j in 0..m {
                    if i != j && allowed(choice.pairs[i * m + j].0) {
                        *row |= 1 << j;
                        any = true;
                    }
                }
            }
            if !any {
                continue;
            }
            // reach[i]: vertices reachable from i by one or more steps
            let mut reach = [0u64; 64];
            for (i, slot) in reach.iter_mut().enumerate().take(m) {
                let mut r = adj[i];
                loop {
                    let mut next = r;
                    let mut bits = r;
                    while bits != 0 {
                        let k = bits.trailing_zeros() as usize;
                        bits &= bits - 1;
                        next |= adj[k];
                    }
                    if next == r {
                        break;
                    }
                    r = next;
                }
                *slot = r;
            }
            for (i, r) in reach.iter().enumerate().take(m) {
                if r >> i & 1 == 1 && choice.below[i] & seed_mask != 0 {
                    return false;
                }
                let mut bits = r & !(1 << i);
                while bits != 0 {
                    let j = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    let (allow_idx, base_forbid) = choice.pairs[i * m + j];
                    let forbidden_now = if self.total {
                        !allowed(allow_idx)
                    } else {
                        base_forbid
                    };
                    if forbidden_now {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// One step of the simulability closure: everything below an allowed
/// insert/delete pair, everything below a replace-cycle vertex, and every
/// replacement realized by an allowed path.
fn t_step(d: &Dtd, s: &BTreeSet<Uat>, desc: &BTreeMap<ElementType, BTreeSet<ElementType>>, valid: &BTreeSet<Uat>) -> BTreeSet<Uat> {
    let mut out = s.clone();
    let add_below = |root: &ElementType, out: &mut BTreeSet<Uat>| {
        let below = &desc[root];
        for u in valid {
            if below.contains(u.ctx()) {
                out.insert(u.clone());
            }
        }
    };
    for (a, model) in d.rules() {
        match model {
            ContentModel::Star(b) => {
                let ins = Uat::Insert {
                    ctx: a.clone(),
                    child: b.clone(),
                };
                let del = Uat::Delete {
                    ctx: a.clone(),
                    child: b.clone(),
                };
                if s.contains(&ins) && s.contains(&del) {
                    add_below(b, &mut out);
                }
            }
            ContentModel::Choice(_) => {
                let edges: BTreeSet<Edge> = s
                    .iter()
                    .filter_map(|u| match u {
                        Uat::Replace { ctx, from, to } if ctx == a => {
                            Some((from.clone(), to.clone()))
                        }
                        _ => None,
                    })
                    .collect();
                let closure = transitive_closure(&edges);
                for (x, z) in &closure {
                    if x == z {
                        add_below(x, &mut out);
                    } else {
                        out.insert(Uat::Replace {
                            ctx: a.clone(),
                            from: x.clone(),
                            to: z.clone(),
                        });
                    }
                }
            }
            _ => {}
        }
    }
    out
}

/// Least fixpoint of the simulability operator containing `s`: every
/// privilege whose operations can be reproduced using privileges in `s`.
/// Inflationary, monotone, and idempotent.
pub fn closure_t(d: &Dtd, s: &BTreeSet<Uat>) -> BTreeSet<Uat> {
    let valid = valid_set(d);
    debug_assert!(s.is_subset(&valid));
    let desc = d.descendants_map();
    let mut cur = s.clone();
    loop {
        let next = t_step(d, &cur, &desc, &valid);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// Outcome of least-privilege extension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpceOutcome {
    /// The unique least-privilege consistent total extension.
    Extended(Policy),
    /// No consistent total extension exists; the witness privilege is
    /// simulable from the allow set yet forbidden.
    NotQuasiconsistent { witness: Uat },
}

/// Least-privilege consistent extension: allow exactly the closure of the
/// allow set, forbid the rest. Exists iff the closure avoids the forbid set.
pub fn lpce(d: &Dtd, p: &Policy) -> LpceOutcome {
    let closed = closure_t(d, &p.allow);
    if let Some(w) = closed.intersection(&p.forbid).next() {
        return LpceOutcome::NotQuasiconsistent { witness: w.clone() };
    }
    let forbid = valid_set(d)
        .into_iter()
        .filter(|u| !closed.contains(u))
        .collect();
    LpceOutcome::Extended(Policy {
        allow: closed,
        forbid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::parse_policy;
    use crate::schema::parse_dtd;
    use crate::test_fixtures::{example2_total, fig1a, QUASI_COUNTEREXAMPLE};

    fn el(s: &str) -> ElementType {
        s.into()
    }

    fn edge(a: &str, b: &str) -> Edge {
        (el(a), el(b))
    }

    #[test]
    fn marks_of_running_example() {
        let d = fig1a();
        let p = example2_total(&d);
        let m = mark_graph(&d, &p);
        let minus: BTreeSet<&str> = m
            .mu
            .iter()
            .filter(|(_, v)| **v == Mark::Minus)
            .map(|(k, _)| k.name())
            .collect();
        assert_eq!(minus, ["B", "E", "G", "J", "R"].into_iter().collect());
        let chi: BTreeSet<&str> = m.chi.iter().map(ElementType::name).collect();
        assert_eq!(chi, ["B", "E", "J"].into_iter().collect());
    }

    #[test]
    fn empty_forbid_marks_everything_plus() {
        let d = fig1a();
        let p = crate::test_fixtures::example2_partial(&d);
        let m = mark_graph(&d, &p);
        assert!(m.mu.values().all(|v| *v == Mark::Plus));
        assert!(m.chi.is_empty());
    }

    #[test]
    fn replace_graph_of_r() {
        let d = fig1a();
        let p = example2_total(&d);
        let g = replace_graph(&d, &p, &el("R")).unwrap();
        let expected: BTreeSet<Edge> = [
            edge("A", "B"),
            edge("B", "J"),
            edge("J", "K"),
            edge("K", "J"),
            edge("K", "B"),
        ]
        .into_iter()
        .collect();
        assert_eq!(g.edges, expected);
        for e in [edge("A", "J"), edge("A", "K"), edge("B", "K")] {
            assert!(g.forbidden.contains(&e));
        }
        assert_eq!(g.forbidden.len(), 7);
        assert!(matches!(
            replace_graph(&d, &p, &el("B")),
            Err(AnalysisError::NotAChoiceRule(_))
        ));
    }

    #[test]
    fn closure_detects_cycles_via_self_loops() {
        let edges: BTreeSet<Edge> = [edge("J", "K"), edge("K", "J"), edge("A", "B")]
            .into_iter()
            .collect();
        let tc = transitive_closure(&edges);
        assert!(tc.contains(&edge("J", "J")));
        assert!(tc.contains(&edge("K", "K")));
        assert!(!tc.contains(&edge("A", "A")));
        assert!(!tc.contains(&edge("B", "B")));
    }

    #[test]
    fn running_example_is_inconsistent_with_expected_sites() {
        let d = fig1a();
        let p = example2_total(&d);
        let v = check_consistency(&d, &p);
        assert!(!v.consistent);

        let insdel: Vec<&str> = v
            .violations
            .iter()
            .filter_map(|x| match x {
                Violation::InsDel { ctx, .. } => Some(ctx.name()),
                _ => None,
            })
            .collect();
        assert_eq!(insdel, vec!["B", "E", "J"]);

        let trans: Vec<(String, String)> = v
            .violations
            .iter()
            .filter_map(|x| match x {
                Violation::ForbiddenTransitivity { from, to, .. } => {
                    Some((from.name().to_string(), to.name().to_string()))
                }
                _ => None,
            })
            .collect();
        // The three edges called out in the worked example plus (J,B), which
        // is realized by the allowed path J -> K -> B and is forbidden.
        assert_eq!(
            trans,
            vec![
                ("A".to_string(), "J".to_string()),
                ("A".to_string(), "K".to_string()),
                ("B".to_string(), "K".to_string()),
                ("J".to_string(), "B".to_string()),
            ]
        );

        let cycles: Vec<&str> = v
            .violations
            .iter()
            .filter_map(|x| match x {
                Violation::NegativeCycle { vertex, .. } => Some(vertex.name()),
                _ => None,
            })
            .collect();
        assert_eq!(cycles, vec!["B", "J"]);

        // Witness details point at the forbidden replace under G.
        for x in &v.violations {
            if let Violation::InsDel {
                witness_forbidden, ..
            } = x
            {
                assert_eq!(witness_forbidden.to_string(), "G replace(H,I)");
            }
        }
    }

    #[test]
    fn empty_allow_total_policy_is_consistent() {
        let d = fig1a();
        let p = parse_policy("policy mode total\n", &d).unwrap();
        assert_eq!(p.forbid.len(), 28);
        let v = check_consistency(&d, &p);
        assert!(v.consistent);
        assert!(v.violations.is_empty());
    }

    #[test]
    fn quasiconsistency_counterexample_is_inconsistent() {
        let d = fig1a();
        let p = parse_policy(QUASI_COUNTEREXAMPLE, &d).unwrap();
        let v = check_consistency(&d, &p);
        assert!(!v.consistent);
        assert_eq!(v.violations.len(), 1);
        match &v.violations[0] {
            Violation::InsDel {
                ctx,
                star_child,
                witness_forbidden,
            } => {
                assert_eq!(ctx.name(), "B");
                assert_eq!(star_child.name(), "E");
                assert_eq!(witness_forbidden.to_string(), "H replace(str,str)");
            }
            other => panic!("expected an insert-delete violation, got {other:?}"),
        }
    }

    #[test]
    fn removal_predicates_agree_with_full_check() {
        use rand::{Rng, SeedableRng};
        let d = fig1a();
        let p = example2_total(&d);
        let analyzer = Analyzer::new(&d);
        let valid = valid_set(&d);
        let allow_vec: Vec<Uat> = p.allow.iter().cloned().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for total in [true, false] {
            let checker = RemovalChecker::new(&analyzer, &p, total).expect("small schema");
            for _ in 0..300 {
                let removed_idx: Vec<usize> = (0..allow_vec.len())
                    .filter(|_| rng.gen_bool(0.3))
                    .collect();
                let removed: BTreeSet<Uat> =
                    removed_idx.iter().map(|i| allow_vec[*i].clone()).collect();
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
                let reference = check_consistency(&d, &q).consistent;
                assert_eq!(
                    analyzer.consistent_after_removal(&p, &removed, total),
                    reference,
                    "removed {removed:?} total {total}"
                );
                assert_eq!(
                    checker.consistent(&removed_idx),
                    reference,
                    "indexed checker, removed {removed:?} total {total}"
                );
            }
        }
    }

    #[test]
    fn partial_check_agrees_with_closure_emptiness() {
        // The three-condition check and the closure formulation must agree.
        use rand::{Rng, SeedableRng};
        let d = fig1a();
        let valid: Vec<Uat> = valid_set(&d).into_iter().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let mut allow = BTreeSet::new();
            let mut forbid = BTreeSet::new();
            for u in &valid {
                match rng.gen_range(0..3) {
                    0 => {
                        allow.insert(u.clone());
                    }
                    1 => {
                        forbid.insert(u.clone());
                    }
                    _ => {}
                }
            }
            let p = Policy { allow, forbid };
            let by_conditions = check_consistency(&d, &p).consistent;
            let by_closure = closure_t(&d, &p.allow).is_disjoint(&p.forbid);
            assert_eq!(by_conditions, by_closure);
        }
    }

    #[test]
    fn closure_contains_expected_privileges() {
        let d = fig1a();
        let p = example2_total(&d);
        let closed = closure_t(&d, &p.allow);
        assert!(closed.contains(&Uat::Replace {
            ctx: el("G"),
            from: el("H"),
            to: el("I"),
        }));

        assert!(closure_t(&d, &BTreeSet::new()).is_empty());

        let s: BTreeSet<Uat> = [
            Uat::Replace {
                ctx: el("R"),
                from: el("A"),
                to: el("B"),
            },
            Uat::Replace {
                ctx: el("R"),
                from: el("B"),
                to: el("J"),
            },
        ]
        .into_iter()
        .collect();
        let closed = closure_t(&d, &s);
        assert!(closed.contains(&Uat::Replace {
            ctx: el("R"),
            from: el("A"),
            to: el("J"),
        }));
        assert_eq!(closed.len(), 3);
    }

    #[test]
    fn closure_is_a_closure_operator() {
        use rand::{Rng, SeedableRng};
        let d = fig1a();
        let valid: Vec<Uat> = valid_set(&d).into_iter().collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let s1: BTreeSet<Uat> = valid
                .iter()
                .filter(|_| rng.gen_bool(0.3))
                .cloned()
                .collect();
            let s2: BTreeSet<Uat> = s1
                .union(
                    &valid
                        .iter()
                        .filter(|_| rng.gen_bool(0.2))
                        .cloned()
                        .collect(),
                )
                .cloned()
                .collect();
            let c1 = closure_t(&d, &s1);
            let c2 = closure_t(&d, &s2);
            assert!(s1.is_subset(&c1), "inflationary");
            assert!(c1.is_subset(&c2), "monotone");
            assert_eq!(closure_t(&d, &c1), c1, "idempotent");
        }
    }

    #[test]
    fn lpce_of_counterexample_reports_witness() {
        let d = fig1a();
        let p = parse_policy(QUASI_COUNTEREXAMPLE, &d).unwrap();
        match lpce(&d, &p) {
            LpceOutcome::NotQuasiconsistent { witness } => {
                assert_eq!(witness.to_string(), "H replace(str,str)");
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn lpce_of_consistent_total_policy_is_identity() {
        let d = fig1a();
        let p = parse_policy("policy mode total\nallow B insert(E)\n", &d).unwrap();
        assert!(check_consistency(&d, &p).consistent);
        match lpce(&d, &p) {
            LpceOutcome::Extended(q) => assert_eq!(q, p),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lpce_grants_text_replace_below_granted_pair() {
        let d = fig1a();
        let p = parse_policy(
            "policy mode partial\nallow C insert(F)\nallow C delete(F)\n",
            &d,
        )
        .unwrap();
        match lpce(&d, &p) {
            LpceOutcome::Extended(q) => {
                assert!(q.allow.contains(&Uat::ReplaceStr { ctx: el("F") }));
                assert_eq!(q.allow.len(), 3);
                assert!(check_consistency(&d, &q).consistent);
                assert!(q.is_total(&d));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn consistency_check_is_fast_on_a_wide_synthetic_dtd() {
        // 200 element types: a root choice over 66 types, each a star over a
        // text element. Everything allowed except one text replacement.
        let mut text = String::from("dtd root Root\n");
        let n = 66;
        let alts: Vec<String> = (0..n).map(|i| format!("C{i:02}")).collect();
        text.push_str(&format!("Root -> {}\n", alts.join(" + ")));
        for i in 0..n {
            text.push_str(&format!("C{i:02} -> S{i:02} *\n"));
            text.push_str(&format!("S{i:02} -> T{i:02} ,  U{i:02}\n"));
            text.push_str(&format!("T{i:02} -> #str\n"));
            text.push_str(&format!("U{i:02} -> epsilon\n"));
        }
        let d = parse_dtd(&text).unwrap();
        assert!(d.elements().count() > 200);
        let mut policy_text = String::from("policy mode partial\n");
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    policy_text.push_str(&format!("allow Root replace(C{i:02},C{j:02})\n"));
                }
            }
            policy_text.push_str(&format!("allow C{i:02} insert(S{i:02})\n"));
            policy_text.push_str(&format!("allow C{i:02} delete(S{i:02})\n"));
        }
        policy_text.push_str("forbid T00 replace(str,str)\n");
        let p = parse_policy(&policy_text, &d).unwrap();
        let start = std::time::Instant::now();
        let v = check_consistency(&d, &p);
        let elapsed = start.elapsed();
        assert!(!v.consistent);
        assert!(
            elapsed < std::time::Duration::from_secs(1),
            "check took {elapsed:?}"
        );
    }
}
