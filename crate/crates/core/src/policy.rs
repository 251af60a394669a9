//! Update access types (schema-level privileges), their validity against a
//! DTD, and allow/forbid policies.
//!
//! A privilege names a context element type and an operation shape:
//! `(A, insert(B))` and `(A, delete(B))` exist for star rules `A -> B *`,
//! `(A, replace(B1,B2))` for distinct alternatives of a choice rule, and
//! `(A, replace(str,str))` for text rules. `replace(B,B)` is deliberately not
//! a privilege: it could smuggle in any change below a `B` node, so policies
//! must grant finer-grained rights instead.
//!
//! Policy files are line based:
//!
//! ```text
//! policy mode total
//! allow B insert(E)
//! allow G replace(I,H)
//! forbid H replace(str,str)
//! ```
//!
//! In `total` mode the forbid set is the complement of the allow set; any
//! forbid lines present are cross-checked against that complement.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::schema::{ContentModel, Dtd, ElementType};
use crate::tree::{conforms_at, Label, XmlTree};
use crate::update::{apply, is_valid_op, UpdateOp};

/// A schema-level update privilege.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Uat {
    Insert { ctx: ElementType, child: ElementType },
    Delete { ctx: ElementType, child: ElementType },
    Replace {
        ctx: ElementType,
        from: ElementType,
        to: ElementType,
    },
    ReplaceStr { ctx: ElementType },
}

impl Uat {
    pub fn ctx(&self) -> &ElementType {
        match self {
            Uat::Insert { ctx, .. }
            | Uat::Delete { ctx, .. }
            | Uat::Replace { ctx, .. }
            | Uat::ReplaceStr { ctx } => ctx,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Uat::Insert { .. } => 0,
            Uat::Delete { .. } => 1,
            Uat::Replace { .. } => 2,
            Uat::ReplaceStr { .. } => 3,
        }
    }

    fn args(&self) -> (Option<&ElementType>, Option<&ElementType>) {
        match self {
            Uat::Insert { child, .. } | Uat::Delete { child, .. } => (Some(child), None),
            Uat::Replace { from, to, .. } => (Some(from), Some(to)),
            Uat::ReplaceStr { .. } => (None, None),
        }
    }
}

impl Ord for Uat {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.ctx(), self.rank(), self.args()).cmp(&(other.ctx(), other.rank(), other.args()))
    }
}

impl PartialOrd for Uat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Uat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Uat::Insert { ctx, child } => write!(f, "{ctx} insert({child})"),
            Uat::Delete { ctx, child } => write!(f, "{ctx} delete({child})"),
            Uat::Replace { ctx, from, to } => write!(f, "{ctx} replace({from},{to})"),
            Uat::ReplaceStr { ctx } => write!(f, "{ctx} replace(str,str)"),
        }
    }
}

/// Disjoint allow/forbid sets of valid privileges over one DTD.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Policy {
    pub allow: BTreeSet<Uat>,
    pub forbid: BTreeSet<Uat>,
}

impl Policy {
    pub fn new(allow: BTreeSet<Uat>, forbid: BTreeSet<Uat>, d: &Dtd) -> Result<Self, PolicyError> {
        let valid = valid_set(d);
        for u in allow.iter().chain(forbid.iter()) {
            if !valid.contains(u) {
                return Err(PolicyError::InvalidUat {
                    line: 0,
                    uat: u.to_string(),
                    reason: validity_reason(u, d),
                });
            }
        }
        if let Some(u) = allow.intersection(&forbid).next() {
            return Err(PolicyError::Overlap {
                uat: u.to_string(),
            });
        }
        Ok(Policy { allow, forbid })
    }

    /// Total means every valid privilege is classified.
    pub fn is_total(&self, d: &Dtd) -> bool {
        let valid = valid_set(d);
        self.allow.union(&self.forbid).count() == valid.len()
    }

    /// The total completion that forbids everything not explicitly allowed.
    pub fn least_privilege_completion(&self, d: &Dtd) -> Policy {
        let forbid = valid_set(d)
            .into_iter()
            .filter(|u| !self.allow.contains(u))
            .collect();
        Policy {
            allow: self.allow.clone(),
            forbid,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown element type `{name}`")]
    UnknownElement { line: usize, name: String },
    #[error("line {line}: `{uat}` is not valid for this DTD: {reason}")]
    InvalidUat {
        line: usize,
        uat: String,
        reason: String,
    },
    #[error(
        "line {line}: `{uat}` replaces a type by itself; such a privilege would let any \
         change below the node slip through and is not allowed in policies"
    )]
    SelfReplace { line: usize, uat: String },
    #[error("`{uat}` appears in both allow and forbid")]
    Overlap { uat: String },
    #[error(
        "total policy lists a forbid set that is not the complement of allow \
         (missing: {missing:?}, extra: {extra:?})"
    )]
    TotalForbidMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
}

/// Is the privilege compatible with the DTD's production rules?
pub fn is_valid_uat(u: &Uat, d: &Dtd) -> bool {
    match u {
        Uat::Insert { ctx, child } | Uat::Delete { ctx, child } => {
            matches!(d.rule(ctx), Some(ContentModel::Star(b)) if b == child)
        }
        Uat::ReplaceStr { ctx } => matches!(d.rule(ctx), Some(ContentModel::Str)),
        Uat::Replace { ctx, from, to } => match d.rule(ctx) {
            Some(ContentModel::Choice(ts)) => {
                from != to && ts.contains(from) && ts.contains(to)
            }
            _ => false,
        },
    }
}

fn validity_reason(u: &Uat, d: &Dtd) -> String {
    match u {
        Uat::Insert { ctx, child } | Uat::Delete { ctx, child } => format!(
            "insert/delete privileges require the rule `{ctx} -> {child} *`, but `{ctx}` has {}",
            rule_shape(d, ctx)
        ),
        Uat::ReplaceStr { ctx } => format!(
            "replace(str,str) requires the rule `{ctx} -> #str`, but `{ctx}` has {}",
            rule_shape(d, ctx)
        ),
        Uat::Replace { ctx, from, to } => format!(
            "replace({from},{to}) requires `{ctx}` to be a disjunction listing both types, \
             but `{ctx}` has {}",
            rule_shape(d, ctx)
        ),
    }
}

fn rule_shape(d: &Dtd, a: &ElementType) -> String {
    match d.rule(a) {
        None => "no rule".to_string(),
        Some(ContentModel::Str) => "a text rule".to_string(),
        Some(ContentModel::Empty) => "an empty rule".to_string(),
        Some(ContentModel::Sequence(_)) => "a sequence rule".to_string(),
        Some(ContentModel::Choice(ts)) => format!(
            "the disjunction {}",
            ts.iter().map(|t| t.name()).collect::<Vec<_>>().join(" + ")
        ),
        Some(ContentModel::Star(b)) => format!("the star rule {b} *"),
    }
}

/// Every privilege valid for `d`, in canonical order.
pub fn valid_set(d: &Dtd) -> BTreeSet<Uat> {
    let mut out = BTreeSet::new();
    for (a, model) in d.rules() {
        match model {
            ContentModel::Star(b) => {
                out.insert(Uat::Insert {
                    ctx: a.clone(),
                    child: b.clone(),
                });
                out.insert(Uat::Delete {
                    ctx: a.clone(),
                    child: b.clone(),
                });
            }
            ContentModel::Str => {
                out.insert(Uat::ReplaceStr { ctx: a.clone() });
            }
            ContentModel::Choice(ts) => {
                for from in ts {
                    for to in ts {
                        if from != to {
                            out.insert(Uat::Replace {
                                ctx: a.clone(),
                                from: from.clone(),
                                to: to.clone(),
                            });
                        }
                    }
                }
            }
            ContentModel::Empty | ContentModel::Sequence(_) => {}
        }
    }
    out
}

/// Does a concrete operation on `t` fall under the privilege?
pub fn matches(op: &UpdateOp, u: &Uat, t: &XmlTree, d: &Dtd) -> bool {
    debug_assert!(is_valid_op(op, t));
    let parent_label = |n| t.parent(n).map(|p| t.label(p));
    match (op, u) {
        (UpdateOp::Insert { target, subtree }, Uat::Insert { ctx, child }) => {
            t.label(*target) == &Label::Element(ctx.clone())
                && conforms_at(subtree, d, child).unwrap_or(false)
        }
        (UpdateOp::Delete { target }, Uat::Delete { ctx, child }) => {
            t.label(*target) == &Label::Element(child.clone())
                && parent_label(*target) == Some(&Label::Element(ctx.clone()))
        }
        (UpdateOp::ReplaceTree { target, subtree }, Uat::Replace { ctx, from, to }) => {
            t.label(*target) == &Label::Element(from.clone())
                && parent_label(*target) == Some(&Label::Element(ctx.clone()))
                && conforms_at(subtree, d, to).unwrap_or(false)
        }
        (UpdateOp::ReplaceText { target, .. }, Uat::ReplaceStr { ctx }) => {
            t.label(*target) == &Label::Str
                && parent_label(*target) == Some(&Label::Element(ctx.clone()))
        }
        _ => false,
    }
}

/// Is `op` covered by some allowed privilege on `t`?
pub fn is_allowed_op(d: &Dtd, p: &Policy, t: &XmlTree, op: &UpdateOp) -> bool {
    p.allow.iter().any(|u| matches(op, u, t, d))
}

/// Is `op` covered by some forbidden privilege on `t`?
pub fn is_forbidden_op(d: &Dtd, p: &Policy, t: &XmlTree, op: &UpdateOp) -> bool {
    p.forbid.iter().any(|u| matches(op, u, t, d))
}

/// A sequence is allowed when it is valid and each operation is allowed on
/// the tree it actually applies to. This is stronger than each operation
/// being allowed on the initial tree.
pub fn is_allowed_seq(d: &Dtd, p: &Policy, t: &XmlTree, seq: &[UpdateOp]) -> bool {
    let mut cur = t.clone();
    for op in seq {
        if !is_valid_op(op, &cur) || !is_allowed_op(d, p, &cur, op) {
            return false;
        }
        cur = apply(op, &cur).expect("validity checked");
    }
    true
}

fn parse_uat(line_no: usize, ctx: &str, rest: &str, d: &Dtd) -> Result<Uat, PolicyError> {
    let syntax = |msg: String| PolicyError::Syntax {
        line: line_no,
        msg,
    };
    let ctx_ty = ElementType::new(ctx);
    if !d.contains(&ctx_ty) {
        return Err(PolicyError::UnknownElement {
            line: line_no,
            name: ctx.to_string(),
        });
    }
    let rest = rest.trim();
    let (op, args) = rest
        .split_once('(')
        .ok_or_else(|| syntax(format!("expected `insert(...)`, `delete(...)` or `replace(...)`, found `{rest}`")))?;
    let args = args
        .strip_suffix(')')
        .ok_or_else(|| syntax("missing closing `)`".to_string()))?;
    let uat = match op.trim() {
        "insert" | "delete" => {
            let child = ElementType::new(args.trim());
            if !d.contains(&child) {
                return Err(PolicyError::UnknownElement {
                    line: line_no,
                    name: args.trim().to_string(),
                });
            }
            if op.trim() == "insert" {
                Uat::Insert {
                    ctx: ctx_ty,
                    child,
                }
            } else {
                Uat::Delete {
                    ctx: ctx_ty,
                    child,
                }
            }
        }
        "replace" => {
            let (a, b) = args
                .split_once(',')
                .ok_or_else(|| syntax("replace takes two arguments".to_string()))?;
            let (a, b) = (a.trim(), b.trim());
            if a == "str" && b == "str" {
                Uat::ReplaceStr { ctx: ctx_ty }
            } else {
                for name in [a, b] {
                    if name == "str" {
                        return Err(syntax(
                            "replace mixes `str` with an element type".to_string(),
                        ));
                    }
                    if !d.contains(&ElementType::new(name)) {
                        return Err(PolicyError::UnknownElement {
                            line: line_no,
                            name: name.to_string(),
                        });
                    }
                }
                if a == b {
                    return Err(PolicyError::SelfReplace {
                        line: line_no,
                        uat: format!("{ctx} replace({a},{b})"),
                    });
                }
                Uat::Replace {
                    ctx: ctx_ty,
                    from: a.into(),
                    to: b.into(),
                }
            }
        }
        other => return Err(syntax(format!("unknown operation `{other}`"))),
    };
    if !is_valid_uat(&uat, d) {
        return Err(PolicyError::InvalidUat {
            line: line_no,
            uat: uat.to_string(),
            reason: validity_reason(&uat, d),
        });
    }
    Ok(uat)
}

/// Parses the policy file format against a DTD. See the module docs.
pub fn parse_policy(text: &str, d: &Dtd) -> Result<Policy, PolicyError> {
    let mut total: Option<bool> = None;
    let mut allow = BTreeSet::new();
    let mut forbid = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let syntax = |msg: String| PolicyError::Syntax { line: line_no, msg };
        if total.is_none() {
            let mode = line
                .strip_prefix("policy")
                .map(str::trim)
                .and_then(|r| r.strip_prefix("mode"))
                .map(str::trim)
                .ok_or_else(|| syntax("expected header `policy mode total|partial`".into()))?;
            total = Some(match mode {
                "total" => true,
                "partial" => false,
                other => return Err(syntax(format!("unknown policy mode `{other}`"))),
            });
            continue;
        }
        let mut parts = line.splitn(3, char::is_whitespace);
        let verb = parts.next().unwrap_or_default();
        let ctx = parts
            .next()
            .ok_or_else(|| syntax("expected `<verb> <Ctx> <op>`".into()))?;
        let rest = parts
            .next()
            .ok_or_else(|| syntax("expected an operation after the context".into()))?;
        let uat = parse_uat(line_no, ctx, rest, d)?;
        match verb {
            "allow" => {
                if forbid.contains(&uat) {
                    return Err(PolicyError::Overlap {
                        uat: uat.to_string(),
                    });
                }
                allow.insert(uat);
            }
            "forbid" => {
                if allow.contains(&uat) {
                    return Err(PolicyError::Overlap {
                        uat: uat.to_string(),
                    });
                }
                forbid.insert(uat);
            }
            other => return Err(syntax(format!("unknown verb `{other}`"))),
        }
    }
    let total = total.ok_or(PolicyError::Syntax {
        line: 1,
        msg: "missing `policy mode total|partial` header".into(),
    })?;
    if total {
        let complement: BTreeSet<Uat> = valid_set(d)
            .into_iter()
            .filter(|u| !allow.contains(u))
            .collect();
        if !forbid.is_empty() && forbid != complement {
            // Redundant forbid listings are allowed but must be exact; a
            // stale file is an error, not a silent reinterpretation.
            let missing = complement
                .difference(&forbid)
                .map(Uat::to_string)
                .collect();
            let extra = forbid
                .difference(&complement)
                .map(Uat::to_string)
                .collect();
            return Err(PolicyError::TotalForbidMismatch { missing, extra });
        }
        forbid = complement;
    }
    Ok(Policy { allow, forbid })
}

/// Renders a policy in the file format. Total policies list only the allow
/// set; partial policies list both sides.
pub fn render_policy(p: &Policy, d: &Dtd) -> String {
    let total = p.is_total(d);
    let mut out = String::from(if total {
        "policy mode total\n"
    } else {
        "policy mode partial\n"
    });
    for u in &p.allow {
        out.push_str(&format!("allow {u}\n"));
    }
    if !total {
        for u in &p.forbid {
            out.push_str(&format!("forbid {u}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_fixtures::{example2_partial, example2_total, fig1a, QUASI_COUNTEREXAMPLE};
    use crate::tree::{parse_tree_literal, IdGen, NodeId};

    fn uat(s: &str, d: &Dtd) -> Uat {
        let mut parts = s.splitn(2, ' ');
        parse_uat(0, parts.next().unwrap(), parts.next().unwrap(), d).unwrap()
    }

    #[test]
    fn validity_rules() {
        let d = fig1a();
        assert!(is_valid_uat(&uat("B insert(E)", &d), &d));
        assert!(is_valid_uat(&uat("G replace(H,I)", &d), &d));
        assert!(is_valid_uat(&uat("F replace(str,str)", &d), &d));
        // deletes under sequence or choice rules make no sense
        assert!(!is_valid_uat(
            &Uat::Delete {
                ctx: "A".into(),
                child: "C".into()
            },
            &d
        ));
        assert!(!is_valid_uat(
            &Uat::Insert {
                ctx: "R".into(),
                child: "A".into()
            },
            &d
        ));
        assert!(!is_valid_uat(
            &Uat::Delete {
                ctx: "R".into(),
                child: "A".into()
            },
            &d
        ));
    }

    #[test]
    fn valid_set_of_running_example() {
        let d = fig1a();
        let valid = valid_set(&d);
        // 5 star rules contribute 2 each, R contributes 4*3 replaces, G
        // contributes 2, and 4 text rules contribute 1 each.
        assert_eq!(valid.len(), 28);
        let p = example2_total(&d);
        assert!(p.allow.is_subset(&valid));
        assert!(valid.contains(&uat("G replace(H,I)", &d)));
        let r_replaces = valid
            .iter()
            .filter(|u| matches!(u, Uat::Replace { ctx, .. } if ctx.name() == "R"))
            .count();
        assert_eq!(r_replaces, 12);
    }

    #[test]
    fn valid_set_counts_match_rule_inspection() {
        let d = fig1a();
        let stars = d
            .rules()
            .filter(|(_, m)| matches!(m, ContentModel::Star(_)))
            .count();
        let strs = d
            .rules()
            .filter(|(_, m)| matches!(m, ContentModel::Str))
            .count();
        let choice_pairs: usize = d
            .rules()
            .filter_map(|(_, m)| match m {
                ContentModel::Choice(ts) => Some(ts.len() * (ts.len() - 1)),
                _ => None,
            })
            .sum();
        assert_eq!(valid_set(&d).len(), 2 * stars + choice_pairs + strs);
    }

    #[test]
    fn valid_set_of_text_only_dtd() {
        let d = crate::schema::parse_dtd("dtd root R\nR -> #str").unwrap();
        let valid = valid_set(&d);
        assert_eq!(valid.len(), 1);
        assert!(valid.contains(&Uat::ReplaceStr { ctx: "R".into() }));
    }

    #[test]
    fn example2_policy_parses_with_expected_sizes() {
        let d = fig1a();
        let p = example2_total(&d);
        assert_eq!(p.allow.len(), 20);
        assert_eq!(p.forbid.len(), 8);
        assert!(p.is_total(&d));
        assert!(p.forbid.contains(&uat("G replace(H,I)", &d)));
        assert!(p.forbid.contains(&uat("R replace(A,J)", &d)));
        assert!(p.allow.is_disjoint(&p.forbid));

        let partial = example2_partial(&d);
        assert_eq!(partial.allow, p.allow);
        assert!(partial.forbid.is_empty());
        assert!(!partial.is_total(&d));
    }

    #[test]
    fn quasi_counterexample_parses() {
        let d = fig1a();
        let p = parse_policy(QUASI_COUNTEREXAMPLE, &d).unwrap();
        assert_eq!(p.allow.len(), 2);
        assert_eq!(p.forbid.len(), 1);
    }

    #[test]
    fn self_replace_is_rejected() {
        let d = fig1a();
        let err = parse_policy("policy mode partial\nallow G replace(H,H)\n", &d).unwrap_err();
        assert!(matches!(err, PolicyError::SelfReplace { line: 2, .. }), "{err}");
    }

    #[test]
    fn overlap_and_unknowns_are_rejected() {
        let d = fig1a();
        let err = parse_policy(
            "policy mode partial\nallow B insert(E)\nforbid B insert(E)\n",
            &d,
        )
        .unwrap_err();
        assert!(matches!(err, PolicyError::Overlap { .. }));
        let err = parse_policy("policy mode partial\nallow Z insert(E)\n", &d).unwrap_err();
        assert!(matches!(err, PolicyError::UnknownElement { line: 2, .. }));
        let err = parse_policy("policy mode partial\nallow A delete(C)\n", &d).unwrap_err();
        assert!(matches!(err, PolicyError::InvalidUat { .. }), "{err}");
    }

    #[test]
    fn total_forbid_listing_must_match_complement() {
        let d = crate::schema::parse_dtd("dtd root R\nR -> T *\nT -> #str").unwrap();
        let ok = parse_policy(
            "policy mode total\nallow R insert(T)\nforbid R delete(T)\nforbid T replace(str,str)\n",
            &d,
        )
        .unwrap();
        assert_eq!(ok.forbid.len(), 2);
        let err = parse_policy(
            "policy mode total\nallow R insert(T)\nforbid R delete(T)\n",
            &d,
        )
        .unwrap_err();
        assert!(matches!(err, PolicyError::TotalForbidMismatch { .. }), "{err}");
    }

    #[test]
    fn render_round_trips() {
        let d = fig1a();
        for p in [example2_total(&d), example2_partial(&d)] {
            let rendered = render_policy(&p, &d);
            let reparsed = parse_policy(&rendered, &d).unwrap();
            assert_eq!(p, reparsed);
        }
    }

    fn find(t: &XmlTree, name: &str) -> NodeId {
        t.node_ids()
            .find(|n| t.label(*n).to_string() == name)
            .unwrap()
    }

    #[test]
    fn matches_rules() {
        let d = fig1a();
        let t = parse_tree_literal(r#"R(B(E(G(H("x")))))"#).unwrap();
        let mut gen = IdGen::after(&t);
        let g = find(&t, "G");
        let h = find(&t, "H");

        let del = UpdateOp::Delete { target: g };
        assert!(matches(&del, &uat("E delete(G)", &d), &t, &d));
        assert!(!matches(&del, &uat("B delete(E)", &d), &t, &d));

        let payload = parse_tree_literal(r#"I("t")"#).unwrap().relabeled(&mut gen);
        let rep = UpdateOp::ReplaceTree {
            target: h,
            subtree: payload,
        };
        assert!(matches(&rep, &uat("G replace(H,I)", &d), &t, &d));
        assert!(!matches(&rep, &uat("G replace(I,H)", &d), &t, &d));

        // non-conforming payload fails the instance-membership side condition
        let bad = XmlTree::leaf(&mut gen, "I".into());
        let rep_bad = UpdateOp::ReplaceTree {
            target: h,
            subtree: bad,
        };
        assert!(!matches(&rep_bad, &uat("G replace(H,I)", &d), &t, &d));
    }

    #[test]
    fn no_op_matches_two_constructors() {
        let d = fig1a();
        let t = parse_tree_literal(r#"R(B(E(G(H("x")))))"#).unwrap();
        let mut gen = IdGen::after(&t);
        let valid = valid_set(&d);
        let ops = vec![
            UpdateOp::Delete {
                target: find(&t, "G"),
            },
            UpdateOp::Insert {
                target: find(&t, "E"),
                subtree: parse_tree_literal(r#"G(H("s"))"#).unwrap().relabeled(&mut gen),
            },
            UpdateOp::ReplaceText {
                target: find(&t, "#str"),
                text: "y".into(),
            },
        ];
        for op in &ops {
            let kinds: BTreeSet<u8> = valid
                .iter()
                .filter(|u| matches(op, u, &t, &d))
                .map(Uat::rank)
                .collect();
            assert!(kinds.len() <= 1, "op {op} matched multiple constructors");
        }
    }

    #[test]
    fn allowed_ops_under_example2() {
        let d = fig1a();
        let p = example2_total(&d);
        let t = parse_tree_literal(r#"R(B(E(G(H("x")))))"#).unwrap();
        let mut gen = IdGen::after(&t);
        let del_g = UpdateOp::Delete {
            target: find(&t, "G"),
        };
        assert!(is_allowed_op(&d, &p, &t, &del_g));
        let rep_h = UpdateOp::ReplaceTree {
            target: find(&t, "H"),
            subtree: parse_tree_literal(r#"I("t")"#).unwrap().relabeled(&mut gen),
        };
        assert!(is_forbidden_op(&d, &p, &t, &rep_h));
        assert!(!is_allowed_op(&d, &p, &t, &rep_h));

        let empty = Policy {
            allow: BTreeSet::new(),
            forbid: BTreeSet::new(),
        };
        assert!(!is_allowed_op(&d, &empty, &t, &del_g));
    }

    #[test]
    fn allowed_sequences_check_intermediate_trees() {
        let d = fig1a();
        let p = example2_total(&d);
        let t = parse_tree_literal(r#"R(B(E(G(H("x")))))"#).unwrap();
        let mut gen = IdGen::after(&t);
        assert!(is_allowed_seq(&d, &p, &t, &[]));
        let seq = vec![
            UpdateOp::Delete {
                target: find(&t, "G"),
            },
            UpdateOp::Insert {
                target: find(&t, "E"),
                subtree: parse_tree_literal(r#"G(I("t"))"#).unwrap().relabeled(&mut gen),
            },
        ];
        assert!(is_allowed_seq(&d, &p, &t, &seq));

        // A second op whose match depends on a node removed by the first is
        // not allowed, even though it is allowed on the original tree.
        let seq2 = vec![
            UpdateOp::Delete {
                target: find(&t, "E"),
            },
            UpdateOp::Delete {
                target: find(&t, "G"),
            },
        ];
        assert!(!is_allowed_seq(&d, &p, &t, &seq2));
    }
}
