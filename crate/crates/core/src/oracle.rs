//! Bounded brute-force robustness search and seeded random workloads.
//!
//! The search enumerates chains `(τ_i, o_i, p_i)` of fresh template copies,
//! identifies linked variables in an [`EGraph`] and checks the split
//! conditions on the freest database, which is optimal because clashes and
//! dirty writes only ever appear as more tuples are identified.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::egraph::EGraph;
use crate::error::{Error, Result};
use crate::model::*;
use crate::schema::{classify, Fragment};
use crate::witness::{assemble, Database, Step, Witness};
use crate::Counterexample;

pub use crate::witness::verify_witness;

#[derive(Debug)]
pub enum BoundedVerdict {
    NotRobust(Box<Counterexample>),
    RobustUpTo(usize),
}

impl BoundedVerdict {
    pub fn is_robust(&self) -> bool {
        matches!(self, BoundedVerdict::RobustUpTo(_))
    }
}

#[derive(Clone)]
struct State {
    eg: EGraph,
    steps: Vec<Step>,
    base: Vec<usize>,
    rel: Vec<usize>,
}

impl State {
    fn push(&mut self, w: &Workload, step: Step) {
        let t = &w.templates[step.0];
        let b = self.eg.len();
        for v in &t.vars {
            self.eg.add_node();
            self.rel.push(v.rel);
        }
        for c in &t.eqs {
            self.eg.add_eq(b + c.target, c.func, b + c.source);
        }
        for &(x, y) in &t.neqs {
            self.eg.add_neq(b + x, b + y);
        }
        self.base.push(b);
        self.steps.push(step);
    }

    fn node(&self, w: &Workload, i: usize, op: usize) -> usize {
        self.base[i] + w.templates[self.steps[i].0].ops[op].var
    }

    /// No write of `prefix(τ1, o1)` shares a tuple and an attribute with a
    /// write of another copy.
    fn no_dirty_write(&self, w: &Workload) -> bool {
        let (t1, o1, _) = self.steps[0];
        let first = &w.templates[t1];
        for a in first.ops.iter().take(o1 + 1).filter(|op| op.is_write()) {
            let na = self.base[0] + a.var;
            for (i, &(t, _, _)) in self.steps.iter().enumerate().skip(1) {
                for b in w.templates[t].ops.iter().filter(|op| op.is_write()) {
                    if a.write_set.intersects(b.write_set) && self.eg.same(na, self.base[i] + b.var) {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn viable(&self, w: &Workload) -> bool {
        self.eg.consistent() && self.no_dirty_write(w)
    }
}

fn dfs(w: &Workload, st: &State, m: usize) -> Option<State> {
    let i = st.steps.len();
    let (pt, po, _) = st.steps[i - 1];
    let prev = &w.templates[pt];
    for (t, tpl) in w.templates.iter().enumerate() {
        for p in 0..tpl.ops.len() {
            let k = potential_conflict(prev, po, tpl, p);
            if !(if i == 1 { k.rw } else { k.any() }) {
                continue;
            }
            for o in 0..tpl.ops.len() {
                let mut next = st.clone();
                next.push(w, (t, o, p));
                let (a, b) = (next.node(w, i - 1, po), next.node(w, i, p));
                next.eg.union(a, b);
                if !next.viable(w) {
                    continue;
                }
                if i + 1 < m {
                    if let Some(found) = dfs(w, &next, m) {
                        return Some(found);
                    }
                    continue;
                }
                let (t1, o1, p1) = next.steps[0];
                let close = potential_conflict(tpl, o, &w.templates[t1], p1);
                if !close.any() || !(o1 < p1 || close.rw) {
                    continue;
                }
                let (a, b) = (next.node(w, i, o), next.node(w, 0, p1));
                next.eg.union(a, b);
                if next.viable(w) {
                    return Some(next);
                }
            }
        }
    }
    None
}

fn witness_of(w: &Workload, st: &State) -> Result<Witness> {
    let cls = st.eg.classes();
    let name = |n: usize| -> Arc<str> { Arc::from(format!("t{}", cls[n])) };
    let mut db = Database::new(&w.schema);
    let mut rep: BTreeMap<usize, usize> = BTreeMap::new();
    for n in 0..st.eg.len() {
        rep.entry(cls[n]).or_insert(n);
        db.add_tuple(&name(n), st.rel[n])?;
    }
    for (a, f, b) in st.eg.class_edges() {
        db.set(f, &name(rep[&a]), &name(rep[&b]))?;
    }
    let mu = st
        .steps
        .iter()
        .enumerate()
        .map(|(i, &(t, _, _))| (0..w.templates[t].vars.len()).map(|v| name(st.base[i] + v)).collect())
        .collect();
    assemble(w, &st.steps, mu, db)
}

/// Searches split schedules over chains of 2 to `m_max` transactions,
/// shortest first.
pub fn oracle_decide(w: &Workload, m_max: usize) -> Result<BoundedVerdict> {
    if m_max < 2 {
        return Err(Error::Usage("the oracle bound must be at least 2".into()));
    }
    let mut roots = Vec::new();
    for (t, tpl) in w.templates.iter().enumerate() {
        for o in 0..tpl.ops.len() {
            for p in 0..tpl.ops.len() {
                let mut st = State {
                    eg: EGraph::new(),
                    steps: Vec::new(),
                    base: Vec::new(),
                    rel: Vec::new(),
                };
                st.push(w, (t, o, p));
                if st.eg.consistent() {
                    roots.push(st);
                }
            }
        }
    }
    for m in 2..=m_max {
        if let Some(st) = roots.par_iter().find_map_first(|r| dfs(w, r, m)) {
            let witness = witness_of(w, &st)?;
            let report = verify_witness(w, &witness);
            if !report.is_counterexample() || !witness.conditions.iter().all(|c| *c) {
                return Err(Error::Internal(format!(
                    "oracle witness fails verification: {report:?}\n{}",
                    witness.render()
                )));
            }
            let description = st
                .steps
                .iter()
                .map(|&(t, o, p)| {
                    let tpl = &w.templates[t];
                    let op = |i: usize| format!("{} {}", tpl.ops[i].kind, tpl.vars[tpl.ops[i].var].name);
                    format!("({}, {}, {})", tpl.name, op(o), op(p))
                })
                .collect();
            return Ok(BoundedVerdict::NotRobust(Box::new(Counterexample {
                steps: st.steps.clone(),
                description,
                witness,
            })));
        }
    }
    Ok(BoundedVerdict::RobustUpTo(m_max))
}

/// Which classification the generated workload must receive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FragmentBias {
    Any,
    VarTemp,
    MTBTemp,
    AcyclicRestricted,
    AcyclicBoundedK,
    AcyclicGeneral,
    /// Any of the acyclic fragments.
    Acyclic,
}

impl FragmentBias {
    fn accepts(self, f: Fragment) -> bool {
        match self {
            FragmentBias::Any => true,
            FragmentBias::VarTemp => f == Fragment::VarTemp,
            FragmentBias::MTBTemp => f == Fragment::MTBTemp,
            FragmentBias::AcyclicRestricted => f == Fragment::AcyclicRestricted,
            FragmentBias::AcyclicBoundedK => matches!(f, Fragment::AcyclicBoundedK(_)),
            FragmentBias::AcyclicGeneral => f == Fragment::AcyclicGeneral,
            FragmentBias::Acyclic => f.is_acyclic(),
        }
    }
}

/// Size bounds: templates, operations per template, relations and functions
/// are upper bounds, each at least 1 and operations at most 3 per variable
/// count; attributes per relation at most 3.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RandomParams {
    pub n_templates: usize,
    pub n_ops: usize,
    pub n_relations: usize,
    pub n_functions: usize,
    pub p_constraint: f64,
    pub fragment_bias: FragmentBias,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams {
            n_templates: 3,
            n_ops: 4,
            n_relations: 3,
            n_functions: 4,
            p_constraint: 0.5,
            fragment_bias: FragmentBias::Any,
        }
    }
}

pub const MAX_ATTEMPTS: usize = 10_000;

fn random_schema(rng: &mut ChaCha8Rng, p: &RandomParams) -> Schema {
    let n_rel = rng.gen_range(1..=p.n_relations.max(1));
    let relations = (0..n_rel)
        .map(|r| Relation {
            name: format!("R{r}"),
            attrs: (0..rng.gen_range(1..=3)).map(|a| format!("a{a}")).collect(),
        })
        .collect();
    let mut functions = Vec::new();
    let add = |dom: usize, range: usize, fs: &mut Vec<Function>| {
        fs.push(Function {
            name: format!("f{}", fs.len()),
            dom,
            range,
        })
    };
    match p.fragment_bias {
        FragmentBias::MTBTemp => {
            for r in 1..n_rel {
                if functions.len() + 2 > p.n_functions {
                    break;
                }
                let parent = rng.gen_range(0..r);
                add(r, parent, &mut functions);
                add(parent, r, &mut functions);
            }
        }
        FragmentBias::Any | FragmentBias::VarTemp => {
            for _ in 0..rng.gen_range(0..=p.n_functions) {
                let (a, b) = (rng.gen_range(0..n_rel), rng.gen_range(0..n_rel));
                add(a, b, &mut functions);
            }
        }
        _ => {
            if n_rel > 1 {
                for _ in 0..rng.gen_range(1..=p.n_functions.max(1)) {
                    let a = rng.gen_range(1..n_rel);
                    let b = rng.gen_range(0..a);
                    add(a, b, &mut functions);
                }
            }
        }
    }
    Schema { relations, functions }
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> AttrSet {
    AttrSet(rng.gen_range(1..(1u64 << n)))
}

fn random_template(rng: &mut ChaCha8Rng, s: &Schema, p: &RandomParams, idx: usize, pairs: &[(usize, usize)]) -> Template {
    let n_ops = rng.gen_range(1..=p.n_ops.max(1));
    let mut vars: Vec<Variable> = Vec::new();
    let mut ops: Vec<TemplateOp> = Vec::new();
    while ops.len() < n_ops {
        let reuse = !vars.is_empty() && rng.gen_bool(0.4);
        let var = if reuse {
            rng.gen_range(0..vars.len())
        } else {
            vars.push(Variable {
                name: format!("X{}", vars.len()),
                rel: rng.gen_range(0..s.relations.len()),
            });
            vars.len() - 1
        };
        let kind = *[OpKind::R, OpKind::W, OpKind::U].choose(rng).unwrap();
        if ops.iter().any(|o| o.var == var && o.kind == kind) {
            continue;
        }
        let n = s.relations[vars[var].rel].attrs.len();
        let (read_set, write_set) = match kind {
            OpKind::R => (random_set(rng, n), AttrSet::EMPTY),
            OpKind::W => (AttrSet::EMPTY, random_set(rng, n)),
            OpKind::U => (random_set(rng, n), random_set(rng, n)),
        };
        ops.push(TemplateOp {
            kind,
            var,
            read_set,
            write_set,
        });
    }
    let mut eqs = Vec::new();
    for (f, func) in s.functions.iter().enumerate() {
        for x in 0..vars.len() {
            for y in 0..vars.len() {
                if x == y || vars[x].rel != func.dom || vars[y].rel != func.range || !rng.gen_bool(p.p_constraint) {
                    continue;
                }
                if eqs.iter().any(|c: &EqConstraint| c.source == x && c.func == f) {
                    continue;
                }
                eqs.push(EqConstraint {
                    target: y,
                    func: f,
                    source: x,
                });
                if let Some(&(a, b)) = pairs.iter().find(|&&(a, b)| a == f || b == f) {
                    let g = if a == f { b } else { a };
                    if !eqs.iter().any(|c| c.source == y && c.func == g) {
                        eqs.push(EqConstraint {
                            target: x,
                            func: g,
                            source: y,
                        });
                    }
                }
            }
        }
    }
    let mut neqs = Vec::new();
    for x in 0..vars.len() {
        for y in x + 1..vars.len() {
            if vars[x].rel == vars[y].rel && rng.gen_bool(p.p_constraint / 4.0) {
                neqs.push((x, y));
            }
        }
    }
    Template {
        name: format!("T{idx}"),
        vars,
        ops,
        eqs,
        neqs,
    }
}

/// A workload drawn deterministically from `seed`, resampled until its
/// classification matches the bias.
pub fn random_workload(seed: u64, params: &RandomParams) -> Result<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let schema = random_schema(&mut rng, params);
        let pairs: Vec<(usize, usize)> = if params.fragment_bias == FragmentBias::MTBTemp {
            (0..schema.functions.len() / 2).map(|i| (2 * i, 2 * i + 1)).collect()
        } else {
            Vec::new()
        };
        let n_t = rng.gen_range(1..=params.n_templates.max(1));
        let mut templates: Vec<Template> = (0..n_t)
            .map(|i| random_template(&mut rng, &schema, params, i, &pairs))
            .collect();
        if params.fragment_bias == FragmentBias::VarTemp {
            for t in &mut templates {
                t.eqs.clear();
                t.neqs.clear();
            }
        }
        let w = Workload { schema, templates };
        if w.validate().is_ok() && params.fragment_bias.accepts(classify(&w).fragment) {
            return Ok(w);
        }
    }
    Err(Error::Usage(format!(
        "no workload classified as {:?} within {MAX_ATTEMPTS} attempts",
        params.fragment_bias
    )))
}
