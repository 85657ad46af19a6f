//! Counterexample witnesses: database, transactions and split schedule,
//! plus the independent checks run on them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::dsl::schedule_to_document;
use crate::egraph::EGraph;
use crate::error::{Error, Result};
use crate::model::*;

/// Tuples with their types and one finite map per schema function.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Database {
    pub tuples: BTreeMap<Arc<str>, usize>,
    pub functions: Vec<BTreeMap<Arc<str>, Arc<str>>>,
}

impl Database {
    pub fn new(schema: &Schema) -> Self {
        Database {
            tuples: BTreeMap::new(),
            functions: vec![BTreeMap::new(); schema.functions.len()],
        }
    }

    pub fn add_tuple(&mut self, id: &Arc<str>, rel: usize) -> Result<()> {
        match self.tuples.insert(id.clone(), rel) {
            Some(r) if r != rel => Err(Error::Internal(format!("tuple {id} given two types"))),
            _ => Ok(()),
        }
    }

    /// Sets `f(from) = to`, failing on a contradicting earlier value.
    pub fn set(&mut self, f: usize, from: &Arc<str>, to: &Arc<str>) -> Result<()> {
        match self.functions[f].insert(from.clone(), to.clone()) {
            Some(prev) if prev != *to => Err(Error::Internal(format!(
                "function {f} maps {from} to both {prev} and {to}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn get(&self, f: usize, t: &str) -> Option<&Arc<str>> {
        self.functions[f].get(t)
    }

    /// Sends every unmapped tuple to a per-relation sink tuple.
    pub fn make_total(&mut self, schema: &Schema) {
        loop {
            let mut added = false;
            for (f, func) in schema.functions.iter().enumerate() {
                let missing: Vec<Arc<str>> = self
                    .tuples
                    .iter()
                    .filter(|(t, &r)| r == func.dom && !self.functions[f].contains_key(*t))
                    .map(|(t, _)| t.clone())
                    .collect();
                for t in missing {
                    let sink: Arc<str> = Arc::from(format!("sink_{}", schema.relations[func.range].name));
                    self.tuples.insert(sink.clone(), func.range);
                    self.functions[f].insert(t, sink);
                    added = true;
                }
            }
            if !added {
                return;
            }
        }
    }

    /// Every function total on its domain and well typed.
    pub fn check(&self, schema: &Schema) -> Vec<String> {
        let mut out = Vec::new();
        for (f, func) in schema.functions.iter().enumerate() {
            for (t, &r) in &self.tuples {
                if r != func.dom {
                    continue;
                }
                match self.functions[f].get(t) {
                    None => out.push(format!("{}({t}) undefined", func.name)),
                    Some(v) if self.tuples.get(v) != Some(&func.range) => {
                        out.push(format!("{}({t}) = {v} has the wrong type", func.name))
                    }
                    _ => {}
                }
            }
        }
        out
    }

    pub fn to_json(&self, schema: &Schema) -> Value {
        let tuples: BTreeMap<&str, &str> = self
            .tuples
            .iter()
            .map(|(t, &r)| (&**t, schema.relations[r].name.as_str()))
            .collect();
        let functions: BTreeMap<&str, BTreeMap<&str, &str>> = schema
            .functions
            .iter()
            .enumerate()
            .map(|(f, func)| {
                let m = self.functions[f].iter().map(|(a, b)| (&**a, &**b)).collect();
                (func.name.as_str(), m)
            })
            .collect();
        json!({ "tuples": tuples, "functions": functions })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessTx {
    pub template: usize,
    /// Tuple per template variable.
    pub assignment: Vec<Arc<str>>,
    pub tx: Transaction,
}

#[derive(Clone, Debug)]
pub struct Witness {
    pub database: Database,
    pub transactions: Vec<WitnessTx>,
    pub chain: Vec<ConflictQuadruple>,
    pub split_op: usize,
    pub schedule: Schedule,
    pub conditions: [bool; 3],
}

/// Template index and the operations `o_i` and `p_i` of each step.
pub type Step = (usize, usize, usize);

/// Instantiates the steps under `mu`, chains `o_i` to `p_{i+1}` and lays out
/// the split schedule around `o_1`.
pub fn assemble(w: &Workload, steps: &[Step], mu: Vec<Vec<Arc<str>>>, mut database: Database) -> Result<Witness> {
    let m = steps.len();
    let mut transactions = Vec::with_capacity(m);
    for (i, (&(t, _, _), assignment)) in steps.iter().zip(mu).enumerate() {
        let tpl = &w.templates[t];
        for (v, id) in assignment.iter().enumerate() {
            database.add_tuple(id, tpl.vars[v].rel)?;
        }
        let tx = instantiate(&w.schema, tpl, i as u32 + 1, &assignment);
        transactions.push(WitnessTx {
            template: t,
            assignment,
            tx,
        });
    }
    database.make_total(&w.schema);
    let chain: Vec<ConflictQuadruple> = (0..m)
        .map(|i| ConflictQuadruple {
            tx_before: i,
            op_before: steps[i].1,
            op_after: steps[(i + 1) % m].2,
            tx_after: (i + 1) % m,
        })
        .collect();
    let txs: Vec<Transaction> = transactions.iter().map(|t| t.tx.clone()).collect();
    let split_op = steps[0].1;
    let split = build_split_schedule(&txs, &chain, split_op)?;
    Ok(Witness {
        database,
        transactions,
        chain,
        split_op,
        schedule: split.schedule,
        conditions: split.conditions,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub consistent: bool,
    pub rc_allowed: bool,
    pub serializable: bool,
    pub problems: Vec<String>,
}

impl VerifyReport {
    /// Consistent, allowed under RC and not conflict serializable.
    pub fn is_counterexample(&self) -> bool {
        self.consistent && self.rc_allowed && !self.serializable
    }
}

/// Admissibility of `mu` for `db` against the template constraints.
pub fn admissibility_problems(w: &Workload, t: &Template, mu: &[Arc<str>], db: &Database) -> Vec<String> {
    let mut out = Vec::new();
    if mu.len() != t.vars.len() {
        out.push(format!("{}: assignment has the wrong arity", t.name));
        return out;
    }
    for (v, id) in mu.iter().enumerate() {
        if db.tuples.get(id) != Some(&t.vars[v].rel) {
            out.push(format!("{}: {} = {id} is not a {} tuple", t.name, t.vars[v].name, w.schema.relations[t.vars[v].rel].name));
        }
    }
    for c in &t.eqs {
        let got = db.get(c.func, &mu[c.source]);
        if got != Some(&mu[c.target]) {
            out.push(format!(
                "{}: {} = {}({}) fails, {}({}) is {}",
                t.name,
                t.vars[c.target].name,
                w.schema.functions[c.func].name,
                t.vars[c.source].name,
                w.schema.functions[c.func].name,
                mu[c.source],
                got.map_or("undefined".to_string(), |g| g.to_string())
            ));
        }
    }
    for &(x, y) in &t.neqs {
        if mu[x] == mu[y] {
            out.push(format!("{}: {} != {} fails on {}", t.name, t.vars[x].name, t.vars[y].name, mu[x]));
        }
    }
    out
}

fn schedule_transactions(s: &Schedule) -> BTreeMap<u32, Vec<ConcreteOp>> {
    let mut out: BTreeMap<u32, Vec<ConcreteOp>> = BTreeMap::new();
    for op in &s.ops[1..] {
        if op.kind != ConcreteKind::Commit {
            out.entry(op.tx).or_default().push(op.clone());
        }
    }
    out
}

pub fn verify_witness(w: &Workload, wit: &Witness) -> VerifyReport {
    let mut problems = wit.database.check(&w.schema);
    for wt in &wit.transactions {
        let Some(t) = w.templates.get(wt.template) else {
            problems.push(format!("T{}: unknown template", wt.tx.id));
            continue;
        };
        problems.extend(admissibility_problems(w, t, &wt.assignment, &wit.database));
        if wt.assignment.len() == t.vars.len() && instantiate(&w.schema, t, wt.tx.id, &wt.assignment) != wt.tx {
            problems.push(format!("T{} is not the instantiation of {}", wt.tx.id, t.name));
        }
    }
    let listed: BTreeMap<u32, Vec<ConcreteOp>> =
        wit.transactions.iter().map(|t| (t.tx.id, t.tx.ops.clone())).collect();
    if schedule_transactions(&wit.schedule) != listed {
        problems.push("schedule transactions differ from the listed transactions".into());
    }
    VerifyReport {
        consistent: problems.is_empty(),
        rc_allowed: is_rc_allowed(&wit.schedule),
        serializable: is_conflict_serializable(&wit.schedule),
        problems,
    }
}

impl Witness {
    pub fn to_json(&self, w: &Workload) -> Value {
        let txs: Vec<Value> = self
            .transactions
            .iter()
            .map(|t| {
                let tpl = &w.templates[t.template];
                let asg: BTreeMap<&str, &str> = tpl
                    .vars
                    .iter()
                    .zip(&t.assignment)
                    .map(|(v, id)| (v.name.as_str(), &**id))
                    .collect();
                json!({ "id": t.tx.id, "template": tpl.name, "assignment": asg })
            })
            .collect();
        let chain: Vec<Value> = self
            .chain
            .iter()
            .map(|q| {
                json!([
                    self.transactions[q.tx_before].tx.id,
                    q.op_before,
                    q.op_after,
                    self.transactions[q.tx_after].tx.id
                ])
            })
            .collect();
        json!({
            "database": self.database.to_json(&w.schema),
            "transactions": txs,
            "chain": chain,
            "split_op": [self.transactions[0].tx.id, self.split_op],
            "schedule": schedule_to_document(&self.schedule),
        })
    }

    /// Row-per-transaction layout, one column per schedule position.
    pub fn render(&self) -> String {
        render_schedule(&self.schedule)
    }
}

pub fn render_schedule(s: &Schedule) -> String {
    let cells: Vec<String> = s.ops[1..].iter().map(|o| o.to_string()).collect();
    let widths: Vec<usize> = cells.iter().map(|c| c.chars().count()).collect();
    let mut out = String::new();
    for tx in s.transactions() {
        let mut line = format!("T{tx}: ");
        for (i, op) in s.ops[1..].iter().enumerate() {
            let cell = if op.tx == tx { cells[i].as_str() } else { "" };
            line.push_str(&format!("{cell:<w$} ", w = widths[i]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Result of checking a standalone schedule against a workload.
#[derive(Clone, Debug, Serialize)]
pub struct ScheduleReport {
    pub consistent: bool,
    pub rc_allowed: bool,
    pub serializable: bool,
    /// Template matched per transaction, when consistent.
    pub templates: BTreeMap<u32, String>,
    pub problems: Vec<String>,
}

/// Assignments (tuple per operation variable, `None` for variables without
/// operations) under which `t` instantiates to `ops`.
fn match_template(w: &Workload, t: &Template, ops: &[ConcreteOp]) -> Option<Vec<Option<Arc<str>>>> {
    if t.ops.len() != ops.len() {
        return None;
    }
    let mut mu: Vec<Option<Arc<str>>> = vec![None; t.vars.len()];
    for (top, cop) in t.ops.iter().zip(ops) {
        let rel = &w.schema.relations[t.vars[top.var].rel];
        let tuple = cop.tuple.as_ref()?;
        if ConcreteKind::from(top.kind) != cop.kind
            || *tuple.rel != *rel.name
            || rel.names(top.read_set) != cop.read_set
            || rel.names(top.write_set) != cop.write_set
        {
            return None;
        }
        match &mu[top.var] {
            Some(id) if *id != tuple.id => return None,
            _ => mu[top.var] = Some(tuple.id.clone()),
        }
    }
    Some(mu)
}

const MAX_COMBINATIONS: usize = 4096;

/// Searches template matches for every transaction of `s` and a database
/// making all of them admissible at once, then runs the RC and
/// serializability checks.
pub fn explain_schedule(w: &Workload, s: &Schedule) -> ScheduleReport {
    let txs = schedule_transactions(s);
    let mut options: Vec<(u32, Vec<(usize, Vec<Option<Arc<str>>>)>)> = Vec::new();
    let mut problems = Vec::new();
    for (&id, ops) in &txs {
        let m: Vec<_> = w
            .templates
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match_template(w, t, ops).map(|mu| (i, mu)))
            .collect();
        if m.is_empty() {
            problems.push(format!("T{id} matches no template"));
        }
        options.push((id, m));
    }
    let mut templates = BTreeMap::new();
    if problems.is_empty() {
        let mut choice = vec![0usize; options.len()];
        let mut tried = 0;
        let mut last = Vec::new();
        loop {
            tried += 1;
            let picked: Vec<(u32, usize, &Vec<Option<Arc<str>>>)> = options
                .iter()
                .zip(&choice)
                .map(|((id, o), &c)| (*id, o[c].0, &o[c].1))
                .collect();
            match jointly_admissible(w, &picked) {
                Ok(()) => {
                    for &(id, t, _) in &picked {
                        templates.insert(id, w.templates[t].name.clone());
                    }
                    last.clear();
                    break;
                }
                Err(p) => last = p,
            }
            // next combination
            let mut k = 0;
            while k < choice.len() {
                choice[k] += 1;
                if choice[k] < options[k].1.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == choice.len() || tried >= MAX_COMBINATIONS {
                if tried >= MAX_COMBINATIONS && k < choice.len() {
                    last.push("template match search capped".into());
                }
                break;
            }
        }
        problems.extend(last);
    }
    ScheduleReport {
        consistent: problems.is_empty(),
        rc_allowed: is_rc_allowed(s),
        serializable: is_conflict_serializable(s),
        templates,
        problems,
    }
}

/// Congruence closure over named tuples and the unnamed constraint-only
/// variables; admissible iff no two names merge and no disequality collapses.
/// Constraints are added one at a time so the first offending one is named.
fn jointly_admissible(
    w: &Workload,
    picked: &[(u32, usize, &Vec<Option<Arc<str>>>)],
) -> std::result::Result<(), Vec<String>> {
    let mut g = EGraph::new();
    let mut named: BTreeMap<Arc<str>, usize> = BTreeMap::new();
    for &(id, t, mu) in picked {
        let tpl = &w.templates[t];
        let ids: Vec<usize> = mu
            .iter()
            .map(|m| match m {
                Some(x) => *named.entry(x.clone()).or_insert_with(|| g.add_constant(x.clone())),
                None => g.add_node(),
            })
            .collect();
        for &(x, y) in &tpl.neqs {
            g.add_neq(ids[x], ids[y]);
            if !g.consistent() {
                return Err(vec![format!(
                    "T{id} ({}): {} != {} cannot hold",
                    tpl.name, tpl.vars[x].name, tpl.vars[y].name
                )]);
            }
        }
        for c in &tpl.eqs {
            g.add_eq(ids[c.target], c.func, ids[c.source]);
            if !g.consistent() {
                let show = |v: usize| mu[v].as_deref().unwrap_or(&tpl.vars[v].name).to_string();
                return Err(vec![format!(
                    "T{id} ({}): {} = {}({}) contradicts the other transactions ({} vs {}({}))",
                    tpl.name,
                    tpl.vars[c.target].name,
                    w.schema.functions[c.func].name,
                    tpl.vars[c.source].name,
                    show(c.target),
                    w.schema.functions[c.func].name,
                    show(c.source),
                )]);
            }
        }
    }
    Ok(())
}

/// Tuple ids mentioned by a set of transactions.
pub fn mentioned_tuples(txs: &[Transaction]) -> BTreeSet<Arc<str>> {
    txs.iter()
        .flat_map(|t| t.ops.iter())
        .filter_map(|o| o.tuple.as_ref().map(|t| t.id.clone()))
        .collect()
}
