//! Static analysis for write-access-control policies over structured XML DTDs.
//!
//! A policy grants or denies schema-level update privileges (insert, delete,
//! replace) on a non-recursive structured DTD. Such a policy can be
//! *inconsistent*: an update that is explicitly forbidden may still be
//! reproducible, up to tree isomorphism, by a sequence of allowed updates.
//! This crate provides:
//!
//! - the schema, tree, update and policy models ([`schema`], [`tree`],
//!   [`update`], [`policy`]);
//! - a polynomial-time consistency checker and least-privilege extension of
//!   partial policies ([`analysis`]);
//! - repair algorithms that restore consistency by revoking a small number of
//!   allowed privileges ([`repair`]);
//! - a brute-force semantic oracle that searches for concrete simulations of
//!   forbidden updates on bounded instances ([`oracle`]).

pub mod analysis;
pub mod oracle;
pub mod policy;
pub mod repair;
pub mod schema;
pub mod tree;
pub mod update;

#[cfg(test)]
pub(crate) mod test_fixtures;

pub use analysis::{check_consistency, closure_t, lpce, LpceOutcome, Verdict, Violation};
pub use policy::{Policy, Uat};
pub use schema::{ContentModel, Dtd, ElementType};
pub use tree::{Label, NodeId, XmlTree};
pub use update::{UpdateOp, UpdateSeq};
