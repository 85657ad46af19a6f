//! Robustness for workloads admitting multi-tree bijectivity, by search over
//! quintuples of templates, operation pairs and four symbolic type mappings.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::implication::{sequence_connectivity, template_connectivity};
use crate::model::*;
use crate::schema::{classify, Fragment};
use crate::witness::{assemble, verify_witness, Database, Step};
use crate::{Counterexample, Verdict};

/// Number of symbolic type mappings.
pub const MAPPINGS: u8 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MtbQuintuple {
    pub template: usize,
    pub o: usize,
    pub c_o: u8,
    pub p: usize,
    pub c_p: u8,
}

impl MtbQuintuple {
    pub fn display<'a>(&'a self, w: &'a Workload) -> impl fmt::Display + 'a {
        struct D<'a>(&'a MtbQuintuple, &'a Workload);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let (q, w) = (self.0, self.1);
                let t = &w.templates[q.template];
                let op = |i: usize| format!("{} {}", t.ops[i].kind, t.vars[t.ops[i].var].name);
                write!(f, "({}, {}, c{}, {}, c{})", t.name, op(q.o), q.c_o, op(q.p), q.c_p)
            }
        }
        D(self, w)
    }
}

struct TemplateInfo {
    conn: Vec<usize>,
    satisfiable: bool,
    linked: BTreeSet<(usize, usize)>,
}

impl TemplateInfo {
    fn new(t: &Template) -> Self {
        let conn = template_connectivity(t);
        let satisfiable = t.neqs.iter().all(|&(x, y)| conn[x] != conn[y]);
        let linked = t
            .neqs
            .iter()
            .flat_map(|&(x, y)| [(conn[x], conn[y]), (conn[y], conn[x])])
            .collect();
        TemplateInfo {
            conn,
            satisfiable,
            linked,
        }
    }

    fn op_class(&self, t: &Template, op: usize) -> usize {
        self.conn[t.ops[op].var]
    }
}

fn check_fragment(w: &Workload) -> Result<()> {
    match classify(w).fragment {
        Fragment::VarTemp | Fragment::MTBTemp => Ok(()),
        f => Err(Error::Unsupported(format!("workload is {f}, not MTBTemp"))),
    }
}

fn quintuples(w: &Workload, info: &[TemplateInfo]) -> Vec<MtbQuintuple> {
    let mut out = Vec::new();
    for (ti, t) in w.templates.iter().enumerate() {
        let inf = &info[ti];
        if !inf.satisfiable {
            continue;
        }
        for o in 0..t.ops.len() {
            for p in 0..t.ops.len() {
                let (co, cp) = (inf.op_class(t, o), inf.op_class(t, p));
                for c_o in 1..=MAPPINGS {
                    for c_p in 1..=MAPPINGS {
                        if co == cp && c_o != c_p {
                            continue;
                        }
                        if inf.linked.contains(&(co, cp)) && c_o == c_p {
                            continue;
                        }
                        out.push(MtbQuintuple {
                            template: ti,
                            o,
                            c_o,
                            p,
                            c_p,
                        });
                    }
                }
            }
        }
    }
    out
}

/// All quintuples meeting the per-quintuple conditions, in template, operation
/// and mapping order.
pub fn enumerate_mtb_quintuples(w: &Workload) -> Result<Vec<MtbQuintuple>> {
    check_fragment(w)?;
    let info: Vec<TemplateInfo> = w.templates.iter().map(TemplateInfo::new).collect();
    Ok(quintuples(w, &info))
}

/// Write sets of `prefix(τ1, o1)` per mapping id and relation, restricted
/// to operations connected to an operation of the first quintuple.
fn prefix_writes(w: &Workload, info: &[TemplateInfo], first: &MtbQuintuple) -> Vec<Vec<AttrSet>> {
    let n_rel = w.schema.relations.len();
    let mut out = vec![vec![AttrSet::EMPTY; n_rel]; MAPPINGS as usize + 1];
    let t = &w.templates[first.template];
    let inf = &info[first.template];
    for (q, c) in [(first.o, first.c_o), (first.p, first.c_p)] {
        let cls = inf.op_class(t, q);
        for op in t.ops.iter().take(first.o + 1) {
            if op.is_write() && inf.conn[op.var] == cls {
                let r = t.vars[op.var].rel;
                out[c as usize][r] = out[c as usize][r].union(op.write_set);
            }
        }
    }
    out
}

fn no_dirty_write(w: &Workload, info: &[TemplateInfo], pw: &[Vec<AttrSet>], q: &MtbQuintuple) -> bool {
    let t = &w.templates[q.template];
    let inf = &info[q.template];
    [(q.o, q.c_o), (q.p, q.c_p)].iter().all(|&(op, c)| {
        let cls = inf.op_class(t, op);
        t.ops.iter().all(|x| {
            !(x.is_write() && inf.conn[x.var] == cls && pw[c as usize][t.vars[x.var].rel].intersects(x.write_set))
        })
    })
}

fn conflicts(w: &Workload, a: &MtbQuintuple, b: &MtbQuintuple) -> ConflictKinds {
    potential_conflict(&w.templates[a.template], a.o, &w.templates[b.template], b.p)
}

/// Shortest quintuple sequence starting with `first`, if any.
fn search_from(w: &Workload, info: &[TemplateInfo], all: &[MtbQuintuple], first: &MtbQuintuple) -> Option<Vec<MtbQuintuple>> {
    let pw = prefix_writes(w, info, first);
    let nodes: Vec<usize> = (0..all.len()).filter(|&i| no_dirty_write(w, info, &pw, &all[i])).collect();
    let is_end = |q: &MtbQuintuple| {
        let k = potential_conflict(&w.templates[q.template], q.o, &w.templates[first.template], first.p);
        k.any() && q.c_o == first.c_p && (first.o < first.p || k.rw)
    };
    let mut parent: Vec<Option<usize>> = vec![None; all.len()];
    let mut seen = vec![false; all.len()];
    let mut queue = VecDeque::new();
    for &i in &nodes {
        let q = &all[i];
        if conflicts(w, first, q).rw && q.c_p == first.c_o {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        if is_end(&all[i]) {
            let mut seq = vec![all[i]];
            let mut cur = i;
            while let Some(p) = parent[cur] {
                seq.push(all[p]);
                cur = p;
            }
            seq.push(*first);
            seq.reverse();
            return Some(seq);
        }
        for &j in &nodes {
            if !seen[j] && conflicts(w, &all[i], &all[j]).any() && all[i].c_o == all[j].c_p {
                seen[j] = true;
                parent[j] = Some(i);
                queue.push_back(j);
            }
        }
    }
    None
}

/// Decides robustness; on failure the counterexample carries a verified witness.
pub fn decide_mtb(w: &Workload) -> Result<Verdict> {
    check_fragment(w)?;
    let info: Vec<TemplateInfo> = w.templates.iter().map(TemplateInfo::new).collect();
    let all = quintuples(w, &info);
    // Mapping ids are interchangeable, so c_o1 = c1 and c_p1 ∈ {c1, c2}.
    let firsts: Vec<&MtbQuintuple> = all.iter().filter(|q| q.c_o == 1 && q.c_p <= 2).collect();
    let found = firsts.par_iter().find_map_first(|f| search_from(w, &info, &all, f));
    match found {
        None => Ok(Verdict::Robust),
        Some(seq) => {
            let witness = materialize_mtb_witness(w, &seq)?;
            Ok(Verdict::NotRobust(Box::new(Counterexample {
                steps: seq.iter().map(|q| (q.template, q.o, q.p)).collect(),
                description: seq.iter().map(|q| q.display(w).to_string()).collect(),
                witness,
            })))
        }
    }
}

/// Builds the database, transactions and split schedule for a quintuple
/// sequence and checks them.
pub fn materialize_mtb_witness(w: &Workload, seq: &[MtbQuintuple]) -> Result<crate::witness::Witness> {
    let m = seq.len();
    let copies: Vec<&Template> = seq.iter().map(|q| &w.templates[q.template]).collect();
    let links: Vec<((usize, usize), (usize, usize))> = (0..m)
        .map(|i| {
            let j = (i + 1) % m;
            ((i, copies[i].ops[seq[i].o].var), (j, copies[j].ops[seq[j].p].var))
        })
        .collect();
    let cls = sequence_connectivity(&copies, &links);
    let n_cls = cls.iter().flatten().max().map_or(0, |c| c + 1);
    let mut id: Vec<Option<u8>> = vec![None; n_cls];
    for (i, q) in seq.iter().enumerate() {
        for (op, c) in [(q.o, q.c_o), (q.p, q.c_p)] {
            let k = cls[i][copies[i].ops[op].var];
            match id[k] {
                Some(prev) if prev != c => {
                    return Err(Error::Internal(format!("connected variables need mappings c{prev} and c{c}")))
                }
                _ => id[k] = Some(c),
            }
        }
    }
    let mut next = MAPPINGS + 1;
    let ids: Vec<u8> = id
        .into_iter()
        .map(|c| {
            c.unwrap_or_else(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    let rels = &w.schema.relations;
    let name = |rel: usize, c: u8| -> Arc<str> { Arc::from(format!("{}_c{}", rels[rel].name, c)) };
    let mu: Vec<Vec<Arc<str>>> = copies
        .iter()
        .enumerate()
        .map(|(i, t)| t.vars.iter().enumerate().map(|(v, x)| name(x.rel, ids[cls[i][v]])).collect())
        .collect();
    let mut db = Database::new(&w.schema);
    let used: BTreeSet<u8> = ids.iter().copied().collect();
    for &c in &used {
        for (r, _) in rels.iter().enumerate() {
            db.add_tuple(&name(r, c), r)?;
        }
        for (f, func) in w.schema.functions.iter().enumerate() {
            db.set(f, &name(func.dom, c), &name(func.range, c))?;
        }
    }
    let steps: Vec<Step> = seq.iter().map(|q| (q.template, q.o, q.p)).collect();
    let wit = assemble(w, &steps, mu, db)?;
    let report = verify_witness(w, &wit);
    if !report.is_counterexample() || !wit.conditions.iter().all(|c| *c) {
        return Err(Error::Internal(format!(
            "materialized witness fails verification: {report:?}, split conditions {:?}",
            wit.conditions
        )));
    }
    Ok(wit)
}
