//! Static robustness analysis of transaction templates against
//! multiversion Read Committed.
//!
//! A workload is parsed from the template language ([`dsl`]), classified
//! into a decidable fragment ([`schema`]) and handed to the matching
//! decider ([`mtb`] or [`acyclic`]). Counterexamples come with a concrete
//! database and split schedule that [`witness::verify_witness`] re-checks
//! from scratch. [`oracle`] is a bounded brute-force cross-check.

pub mod acyclic;
pub mod dsl;
pub mod egraph;
pub mod error;
pub mod fixtures;
pub mod implication;
pub mod model;
pub mod mtb;
pub mod oracle;
pub mod schema;
pub mod witness;

pub use error::{Error, Result};

use schema::{classify, Fragment, FragmentReport};
use witness::{Step, Witness};

/// A chain of template copies with the schedule it materializes to.
#[derive(Clone, Debug)]
pub struct Counterexample {
    /// `(template, o, p)` per transaction.
    pub steps: Vec<Step>,
    /// Human-readable rendering of each step.
    pub description: Vec<String>,
    pub witness: Witness,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Robust,
    NotRobust(Box<Counterexample>),
}

impl Verdict {
    pub fn is_robust(&self) -> bool {
        matches!(self, Verdict::Robust)
    }

    pub fn counterexample(&self) -> Option<&Counterexample> {
        match self {
            Verdict::Robust => None,
            Verdict::NotRobust(c) => Some(c),
        }
    }
}

/// Classifies and runs the decider for the fragment.
pub fn decide(w: &model::Workload, path_cap: usize) -> Result<(FragmentReport, Verdict)> {
    let report = classify(w);
    let verdict = match report.fragment {
        Fragment::VarTemp | Fragment::MTBTemp => mtb::decide_mtb(w)?,
        f if f.is_acyclic() => acyclic::decide_acyclic(w, path_cap)?,
        _ => {
            let why = match &report.cycle {
                Some(c) => format!("cyclic schema graph ({})", c.join(" -> ")),
                None => "no decidable fragment applies".to_string(),
            };
            return Err(Error::Unsupported(why));
        }
    };
    Ok((report, verdict))
}
