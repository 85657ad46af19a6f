//! Robustness for workloads over acyclic schemas, by reachability over
//! quintuples whose contexts map schema-graph paths to tuples or variables.
//!
//! Only functions used by some constraint take part in paths; the others
//! never relate template variables. Tuples of the first quintuple form the
//! universe `U(k)`; every other context entry is a variable `V(k)` standing
//! for a tuple outside the universe. Within one quintuple the contexts of
//! `o` and `p` share a variable namespace.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::implication::TemplateAnalysis;
use crate::model::*;
use crate::schema::SchemaGraph;
use crate::witness::{assemble, verify_witness, Database, Step, Witness};
use crate::{Counterexample, Verdict};

pub const DEFAULT_PATH_CAP: usize = 64;
/// Bound on contexts produced by a single generation call.
const GENERATION_CAP: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Label {
    U(u32),
    V(u32),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::U(k) => write!(f, "u{k}"),
            Label::V(k) => write!(f, "v{k}"),
        }
    }
}

/// A context: one label per path from its root type, in [`PathTable`] order.
pub type Context = Vec<Label>;

/// Paths of the reduced schema graph from every relation, in depth-first
/// order with functions ascending. The subtree below path `i` is the
/// contiguous block starting at `i`, laid out like the paths of its end type.
#[derive(Clone, Debug)]
pub struct PathTable {
    pub paths: Vec<Vec<Vec<usize>>>,
    pub end: Vec<Vec<usize>>,
    pub children: Vec<Vec<Vec<(usize, usize)>>>,
}

impl PathTable {
    pub fn new(schema: &Schema, used: &BTreeSet<usize>) -> Result<Self> {
        let g = SchemaGraph::with_functions(schema, used);
        let mut paths = Vec::new();
        let mut end = Vec::new();
        let mut children = Vec::new();
        for r in 0..schema.relations.len() {
            let ps = g.all_paths(r)?;
            let index: HashMap<&[usize], usize> = ps.iter().enumerate().map(|(i, p)| (p.as_slice(), i)).collect();
            let e: Vec<usize> = ps
                .iter()
                .map(|p| p.last().map_or(r, |&f| schema.functions[f].range))
                .collect();
            let ch = ps
                .iter()
                .map(|p| {
                    let mut v: Vec<(usize, usize)> = ps
                        .iter()
                        .filter(|q| q.len() == p.len() + 1 && q.starts_with(p))
                        .map(|q| (*q.last().unwrap(), index[q.as_slice()]))
                        .collect();
                    v.sort();
                    v
                })
                .collect();
            paths.push(ps);
            end.push(e);
            children.push(ch);
        }
        Ok(PathTable { paths, end, children })
    }

    pub fn len(&self, rel: usize) -> usize {
        self.paths[rel].len()
    }

    pub fn max_paths(&self) -> usize {
        self.paths.iter().map(|p| p.len()).max().unwrap_or(0)
    }

    /// Size of the subtree below path `i` of `rel`.
    pub fn span(&self, rel: usize, i: usize) -> usize {
        self.paths[self.end[rel][i]].len()
    }

    pub fn path_name(&self, schema: &Schema, rel: usize, i: usize) -> String {
        let p = &self.paths[rel][i];
        if p.is_empty() {
            "ε".to_string()
        } else {
            p.iter().map(|&f| schema.functions[f].name.as_str()).collect::<Vec<_>>().join(".")
        }
    }
}

/// Functions occurring in some equality constraint.
pub fn constraint_functions(w: &Workload) -> BTreeSet<usize> {
    w.templates.iter().flat_map(|t| t.eqs.iter().map(|c| c.func)).collect()
}

/// Renumbers variables by first occurrence.
pub fn canonicalize(c: &[Label]) -> Context {
    let mut map = HashMap::new();
    c.iter()
        .map(|l| match *l {
            Label::V(k) => {
                let n = map.len() as u32;
                Label::V(*map.entry(k).or_insert(n))
            }
            u => u,
        })
        .collect()
}

/// Whether equal labels carry equal subtrees.
pub fn is_congruent(pt: &PathTable, rel: usize, c: &[Label]) -> bool {
    let mut first: HashMap<Label, usize> = HashMap::new();
    for (i, l) in c.iter().enumerate() {
        match first.get(l) {
            Some(&j) => {
                let n = pt.span(rel, i);
                if pt.end[rel][i] != pt.end[rel][j] || c[i..i + n] != c[j..j + n] {
                    return false;
                }
            }
            None => {
                first.insert(*l, i);
            }
        }
    }
    true
}

#[derive(Clone, Debug)]
struct PoolEntry {
    label: Label,
    rel: usize,
    cone: Vec<Label>,
}

fn pool_from(pt: &PathTable, rel: usize, c: &[Label], only_vars: bool) -> Vec<PoolEntry> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, &l) in c.iter().enumerate() {
        if (only_vars && matches!(l, Label::U(_))) || !seen.insert(l) {
            continue;
        }
        let n = pt.span(rel, i);
        out.push(PoolEntry {
            label: l,
            rel: pt.end[rel][i],
            cone: c[i..i + n].to_vec(),
        });
    }
    out
}

/// Enumerates congruent contexts for `root`: at each path either a pool or
/// earlier label of the right type, which fixes the whole subtree, or a new
/// label. `forced[i]` pins a label, `same_as[i]` ties path `i` to an earlier one.
struct Generator<'a> {
    pt: &'a PathTable,
    root: usize,
    pool: &'a [PoolEntry],
    forced: &'a [Option<Label>],
    same_as: &'a [Option<usize>],
    fresh_universe: bool,
    next: u32,
    cur: Vec<Option<Label>>,
    local: Vec<(Label, usize, usize)>,
    out: Vec<Context>,
    overflow: bool,
}

impl<'a> Generator<'a> {
    #[allow(clippy::too_many_arguments)]
    fn run(
        pt: &'a PathTable,
        root: usize,
        pool: &'a [PoolEntry],
        forced: &'a [Option<Label>],
        same_as: &'a [Option<usize>],
        fresh_universe: bool,
        next: u32,
    ) -> Result<Vec<Context>> {
        let n = pt.len(root);
        let mut g = Generator {
            pt,
            root,
            pool,
            forced,
            same_as,
            fresh_universe,
            next,
            cur: vec![None; n],
            local: Vec::new(),
            out: Vec::new(),
            overflow: false,
        };
        g.rec(0);
        if g.overflow {
            return Err(Error::Limit(format!("more than {GENERATION_CAP} contexts for one quintuple")));
        }
        Ok(g.out)
    }

    fn fits(&self, i: usize, cone: &[Label]) -> bool {
        cone.iter().enumerate().all(|(k, &l)| {
            let idx = i + k;
            if self.forced[idx].is_some_and(|f| f != l) {
                return false;
            }
            match self.same_as[idx] {
                Some(j) if j < i => self.cur[j] == Some(l),
                Some(j) => cone[j - i] == l,
                None => true,
            }
        })
    }

    fn copy(&mut self, i: usize, cone: &[Label]) {
        if !self.fits(i, cone) {
            return;
        }
        for (k, &l) in cone.iter().enumerate() {
            self.cur[i + k] = Some(l);
        }
        self.rec(i + cone.len());
        for k in 0..cone.len() {
            self.cur[i + k] = None;
        }
    }

    fn cone_of_local(&self, start: usize, rel: usize) -> Vec<Label> {
        let n = self.pt.len(rel);
        self.cur[start..start + n].iter().map(|l| l.unwrap()).collect()
    }

    fn rec(&mut self, i: usize) {
        if self.overflow {
            return;
        }
        let n = self.cur.len();
        if i == n {
            if self.out.len() >= GENERATION_CAP {
                self.overflow = true;
                return;
            }
            self.out.push(self.cur.iter().map(|l| l.unwrap()).collect());
            return;
        }
        let rel = self.pt.end[self.root][i];
        let want = match (self.forced[i], self.same_as[i]) {
            (Some(l), _) => Some(l),
            (None, Some(j)) => self.cur[j],
            (None, None) => None,
        };
        let mut options: Vec<Vec<Label>> = Vec::new();
        for e in self.pool.iter().filter(|e| e.rel == rel && want.is_none_or(|w| w == e.label)) {
            options.push(e.cone.clone());
        }
        for &(_, r, start) in self.local.iter().filter(|x| x.1 == rel && want.is_none_or(|w| w == x.0)) {
            options.push(self.cone_of_local(start, r));
        }
        for cone in options {
            self.copy(i, &cone);
        }
        if want.is_none() {
            let l = if self.fresh_universe { Label::U(self.next) } else { Label::V(self.next) };
            self.next += 1;
            self.cur[i] = Some(l);
            self.local.push((l, rel, i));
            self.rec(i + 1);
            self.local.pop();
            self.cur[i] = None;
            self.next -= 1;
        }
    }
}

struct TemplateInfo {
    a: TemplateAnalysis,
    sat: bool,
    /// Class reached from each variable along each path of its type.
    det: Vec<Vec<Option<usize>>>,
}

impl TemplateInfo {
    fn new(pt: &PathTable, t: &Template) -> Self {
        let a = TemplateAnalysis::new(t);
        let sat = a.satisfiable(t);
        let det = t
            .vars
            .iter()
            .enumerate()
            .map(|(x, v)| pt.paths[v.rel].iter().map(|p| a.walk(x, p)).collect())
            .collect();
        TemplateInfo { a, sat, det }
    }
}

/// Precomputed workload view shared by all searches.
pub struct Analysis<'w> {
    pub w: &'w Workload,
    pub pt: PathTable,
    info: Vec<TemplateInfo>,
}

impl<'w> Analysis<'w> {
    pub fn new(w: &'w Workload, path_cap: usize) -> Result<Self> {
        let used = constraint_functions(w);
        if let Some(cycle) = SchemaGraph::with_functions(&w.schema, &used).find_cycle() {
            let names: Vec<&str> = cycle.iter().map(|&f| w.schema.functions[f].name.as_str()).collect();
            return Err(Error::Unsupported(format!("constraints use a cycle of functions ({})", names.join(" -> "))));
        }
        let pt = PathTable::new(&w.schema, &used)?;
        for (r, ps) in pt.paths.iter().enumerate() {
            if ps.len() > path_cap {
                return Err(Error::Limit(format!(
                    "{} paths from {} exceed the cap of {path_cap}",
                    ps.len(),
                    w.schema.relations[r].name
                )));
            }
        }
        let info = w.templates.iter().map(|t| TemplateInfo::new(&pt, t)).collect();
        Ok(Analysis { w, pt, info })
    }

    fn var_of(&self, t: usize, op: usize) -> usize {
        self.w.templates[t].ops[op].var
    }

    fn rel_of(&self, t: usize, op: usize) -> usize {
        self.w.templates[t].op_type(op)
    }

    /// Labels of `p`'s context pinned onto `o`'s paths, and ties between
    /// `o`'s own paths, both from determination in the template.
    fn constraints_for_o(&self, t: usize, o: usize, p: Option<(usize, &[Label])>) -> (Vec<Option<Label>>, Vec<Option<usize>>) {
        let inf = &self.info[t];
        let det_o = &inf.det[self.var_of(t, o)];
        let mut by_class: HashMap<usize, Label> = HashMap::new();
        if let Some((p, cp)) = p {
            for (i, k) in inf.det[self.var_of(t, p)].iter().enumerate() {
                if let Some(k) = k {
                    by_class.entry(*k).or_insert(cp[i]);
                }
            }
        }
        let mut first: HashMap<usize, usize> = HashMap::new();
        let mut forced = vec![None; det_o.len()];
        let mut same = vec![None; det_o.len()];
        for (i, k) in det_o.iter().enumerate() {
            let Some(k) = k else { continue };
            forced[i] = by_class.get(k).copied();
            match first.get(k) {
                Some(&j) => same[i] = Some(j),
                None => {
                    first.insert(*k, i);
                }
            }
        }
        (forced, same)
    }

    /// Class labels induced by the joint contexts, or `None` on a clash.
    fn class_labels(&self, t: usize, o: usize, co: &[Label], p: usize, cp: &[Label]) -> Option<Vec<Option<Label>>> {
        let inf = &self.info[t];
        let mut lab = vec![None; inf.a.n_classes];
        for (op, c) in [(o, co), (p, cp)] {
            for (i, k) in inf.det[self.var_of(t, op)].iter().enumerate() {
                if let Some(k) = *k {
                    match lab[k] {
                        Some(l) if l != c[i] => return None,
                        _ => lab[k] = Some(c[i]),
                    }
                }
            }
        }
        Some(lab)
    }

    /// Satisfiability, agreement of determined classes, disequalities, and
    /// (later quintuples only) no ww-conflict with writes of `prefix(τ1, o1)`.
    fn joint_ok(&self, t: usize, o: usize, co: &[Label], p: usize, cp: &[Label], prefix: Option<&[AttrSet]>) -> bool {
        let inf = &self.info[t];
        if !inf.sat {
            return false;
        }
        let Some(lab) = self.class_labels(t, o, co, p, cp) else {
            return false;
        };
        let tpl = &self.w.templates[t];
        for &(x, y) in &tpl.neqs {
            let (a, b) = (lab[inf.a.equiv[x]], lab[inf.a.equiv[y]]);
            if a.is_some() && a == b {
                return false;
            }
        }
        if let Some(pw) = prefix {
            for op in tpl.ops.iter().filter(|op| op.is_write()) {
                if let Some(Label::U(u)) = lab[inf.a.equiv[op.var]] {
                    if pw[u as usize].intersects(op.write_set) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Pairs `(c_o1, c_p1)` of tuple-contexts for the first quintuple, one per
    /// equality pattern, meeting the per-quintuple conditions.
    pub fn first_contexts(&self, t: usize, o: usize, p: usize) -> Result<Vec<(Context, Context)>> {
        let (ro, rp) = (self.rel_of(t, o), self.rel_of(t, p));
        let (fo, so) = self.constraints_for_o(t, o, None);
        let cos = Generator::run(&self.pt, ro, &[], &fo, &so, true, 0)?;
        let mut out = Vec::new();
        for co in cos {
            let pool = pool_from(&self.pt, ro, &co, false);
            let next = distinct(&co) as u32;
            let (fp, sp) = self.constraints_for_o(t, p, Some((o, &co)));
            for cp in Generator::run(&self.pt, rp, &pool, &fp, &sp, true, next)? {
                if self.joint_ok(t, o, &co, p, &cp, None) {
                    out.push((co.clone(), cp));
                }
            }
        }
        Ok(out)
    }

    /// Contexts for `o` in template `t` given `p`'s context, each with the
    /// joint conditions checked.
    fn next_contexts(&self, t: usize, p: usize, cp: &[Label], o: usize, univ: &Universe) -> Result<Vec<Context>> {
        let (rp, ro) = (self.rel_of(t, p), self.rel_of(t, o));
        let mut pool = univ.pool.clone();
        pool.extend(pool_from(&self.pt, rp, cp, true));
        let next = cp
            .iter()
            .filter_map(|l| match l {
                Label::V(k) => Some(k + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let (fo, so) = self.constraints_for_o(t, o, Some((p, cp)));
        let cos = Generator::run(&self.pt, ro, &pool, &fo, &so, false, next)?;
        Ok(cos
            .into_iter()
            .filter(|co| self.joint_ok(t, o, co, p, cp, Some(&univ.prefix_writes)))
            .collect())
    }
}

fn distinct(c: &[Label]) -> usize {
    c.iter().collect::<BTreeSet<_>>().len()
}

/// The first quintuple's tuples with their subtrees and the writes of
/// `prefix(τ1, o1)` on each.
struct Universe {
    pool: Vec<PoolEntry>,
    prefix_writes: Vec<AttrSet>,
}

impl Universe {
    fn new(an: &Analysis, t: usize, o: usize, co: &[Label], p: usize, cp: &[Label]) -> Self {
        let mut pool = pool_from(&an.pt, an.rel_of(t, o), co, false);
        for e in pool_from(&an.pt, an.rel_of(t, p), cp, false) {
            if !pool.iter().any(|x| x.label == e.label) {
                pool.push(e);
            }
        }
        let n = pool
            .iter()
            .map(|e| match e.label {
                Label::U(k) => k as usize + 1,
                Label::V(_) => 0,
            })
            .max()
            .unwrap_or(0);
        let mut prefix_writes = vec![AttrSet::EMPTY; n];
        let lab = an.class_labels(t, o, co, p, cp).expect("first contexts agree");
        let inf = &an.info[t];
        for op in an.w.templates[t].ops.iter().take(o + 1).filter(|op| op.is_write()) {
            if let Some(Label::U(u)) = lab[inf.a.equiv[op.var]] {
                prefix_writes[u as usize] = prefix_writes[u as usize].union(op.write_set);
            }
        }
        Universe { pool, prefix_writes }
    }
}

/// One quintuple of a counterexample sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcyclicQuintuple {
    pub template: usize,
    pub o: usize,
    pub c_o: Context,
    pub p: usize,
    pub c_p: Context,
}

impl AcyclicQuintuple {
    pub fn render(&self, an: &Analysis) -> String {
        let t = &an.w.templates[self.template];
        let ctx = |op: usize, c: &[Label]| {
            let rel = t.op_type(op);
            let entries: Vec<String> = c
                .iter()
                .enumerate()
                .map(|(i, l)| format!("{}:{}", an.pt.path_name(&an.w.schema, rel, i), l))
                .collect();
            format!("{{{}}}", entries.join(", "))
        };
        let op = |i: usize| format!("{} {}", t.ops[i].kind, t.vars[t.ops[i].var].name);
        format!(
            "({}, {}, {}, {}, {})",
            t.name,
            op(self.o),
            ctx(self.o, &self.c_o),
            op(self.p),
            ctx(self.p, &self.c_p)
        )
    }
}

struct Node {
    template: usize,
    o: usize,
    key: Context,
    parent: Option<usize>,
    q: AcyclicQuintuple,
}

fn search_from(an: &Analysis, t1: usize, o1: usize, p1: usize, co1: &Context, cp1: &Context) -> Result<Option<Vec<AcyclicQuintuple>>> {
    let w = an.w;
    let univ = Universe::new(an, t1, o1, co1, p1, cp1);
    let tpl1 = &w.templates[t1];
    let mut nodes: Vec<Node> = Vec::new();
    let mut index: HashMap<(usize, usize, Context), usize> = HashMap::new();
    let mut queue = VecDeque::new();
    let is_end = |n: &Node| {
        let k = potential_conflict(&w.templates[n.template], n.o, tpl1, p1);
        k.any() && n.key == *cp1 && (o1 < p1 || k.rw)
    };
    let mut expand = |from: Option<usize>,
                      src_t: usize,
                      src_o: usize,
                      cp: &Context,
                      rw_only: bool,
                      nodes: &mut Vec<Node>,
                      queue: &mut VecDeque<usize>|
     -> Result<Option<usize>> {
        for (t, tpl) in w.templates.iter().enumerate() {
            if !an.info[t].sat {
                continue;
            }
            for p in 0..tpl.ops.len() {
                let k = potential_conflict(&w.templates[src_t], src_o, tpl, p);
                if !(if rw_only { k.rw } else { k.any() }) {
                    continue;
                }
                for o in 0..tpl.ops.len() {
                    for co in an.next_contexts(t, p, cp, o, &univ)? {
                        let key = canonicalize(&co);
                        if index.contains_key(&(t, o, key.clone())) {
                            continue;
                        }
                        let id = nodes.len();
                        index.insert((t, o, key.clone()), id);
                        nodes.push(Node {
                            template: t,
                            o,
                            key,
                            parent: from,
                            q: AcyclicQuintuple {
                                template: t,
                                o,
                                c_o: co,
                                p,
                                c_p: cp.clone(),
                            },
                        });
                        if is_end(&nodes[id]) {
                            return Ok(Some(id));
                        }
                        queue.push_back(id);
                    }
                }
            }
        }
        Ok(None)
    };
    let mut hit = expand(None, t1, o1, co1, true, &mut nodes, &mut queue)?;
    while hit.is_none() {
        let Some(i) = queue.pop_front() else { break };
        let (t, o, key) = (nodes[i].template, nodes[i].o, nodes[i].key.clone());
        hit = expand(Some(i), t, o, &key, false, &mut nodes, &mut queue)?;
    }
    let Some(end) = hit else { return Ok(None) };
    let mut seq = Vec::new();
    let mut cur = Some(end);
    while let Some(i) = cur {
        seq.push(nodes[i].q.clone());
        cur = nodes[i].parent;
    }
    seq.push(AcyclicQuintuple {
        template: t1,
        o: o1,
        c_o: co1.clone(),
        p: p1,
        c_p: cp1.clone(),
    });
    seq.reverse();
    Ok(Some(seq))
}

/// Every first quintuple `(τ1, o1, p1, c_o1, c_p1)` in declaration order.
pub fn first_quintuples(an: &Analysis) -> Result<Vec<(usize, usize, usize, Context, Context)>> {
    let mut out = Vec::new();
    for (t, tpl) in an.w.templates.iter().enumerate() {
        if !an.info[t].sat {
            continue;
        }
        for o in 0..tpl.ops.len() {
            for p in 0..tpl.ops.len() {
                for (co, cp) in an.first_contexts(t, o, p)? {
                    out.push((t, o, p, co, cp));
                }
            }
        }
    }
    Ok(out)
}

/// Context pairs for the first quintuple over `(t, o, p)`.
pub fn enumerate_first_contexts(w: &Workload, t: usize, o: usize, p: usize) -> Result<Vec<(Context, Context)>> {
    Analysis::new(w, usize::MAX)?.first_contexts(t, o, p)
}

/// Canonical congruent contexts for `root` whose tuple entries come from
/// the given universe contexts (pairs of relation and context).
pub fn context_domain(pt: &PathTable, universe: &[(usize, Context)], root: usize) -> Result<BTreeSet<Context>> {
    let mut pool: Vec<PoolEntry> = Vec::new();
    for (rel, c) in universe {
        for e in pool_from(pt, *rel, c, false) {
            if !pool.iter().any(|x| x.label == e.label) {
                pool.push(e);
            }
        }
    }
    let n = pt.len(root);
    let free = vec![None; n];
    let none = vec![None; n];
    Ok(Generator::run(pt, root, &pool, &free, &none, false, 0)?
        .into_iter()
        .map(|c| canonicalize(&c))
        .collect())
}

pub fn decide_acyclic(w: &Workload, path_cap: usize) -> Result<Verdict> {
    let an = Analysis::new(w, path_cap)?;
    let firsts = first_quintuples(&an)?;
    let found = firsts
        .par_iter()
        .map(|(t, o, p, co, cp)| search_from(&an, *t, *o, *p, co, cp))
        .find_map_first(|r| match r {
            Ok(None) => None,
            other => Some(other),
        });
    match found {
        None => Ok(Verdict::Robust),
        Some(r) => {
            let seq = r?.expect("only hits are kept");
            let witness = materialize_acyclic_witness(&an, &seq)?;
            Ok(Verdict::NotRobust(Box::new(Counterexample {
                steps: seq.iter().map(|q| (q.template, q.o, q.p)).collect(),
                description: seq.iter().map(|q| q.render(&an)).collect(),
                witness,
            })))
        }
    }
}

/// Turns a quintuple sequence into tuples: universe labels keep one tuple
/// each, inherited variables follow the previous quintuple by path, new
/// variables and undetermined classes get fresh tuples.
pub fn materialize_acyclic_witness(an: &Analysis, seq: &[AcyclicQuintuple]) -> Result<Witness> {
    let w = an.w;
    let rels = &w.schema.relations;
    let mut names: Vec<HashMap<Label, Arc<str>>> = Vec::with_capacity(seq.len());
    let mut mus = Vec::new();
    let mut db = Database::new(&w.schema);
    for (i, q) in seq.iter().enumerate() {
        let tpl = &w.templates[q.template];
        let (ro, rp) = (tpl.op_type(q.o), tpl.op_type(q.p));
        let mut map: HashMap<Label, Arc<str>> = HashMap::new();
        for (rel, c, inherited) in [(rp, &q.c_p, true), (ro, &q.c_o, false)] {
            for (a, &l) in c.iter().enumerate() {
                if map.contains_key(&l) {
                    continue;
                }
                let r = an.pt.end[rel][a];
                let name: Arc<str> = match l {
                    Label::U(k) => Arc::from(format!("{}_u{}", rels[r].name, k)),
                    Label::V(_) if inherited && i > 0 => {
                        let prev_o = &seq[i - 1].c_o;
                        names[i - 1][&prev_o[a]].clone()
                    }
                    Label::V(k) => Arc::from(format!("{}_q{}v{}", rels[r].name, i + 1, k)),
                };
                map.insert(l, name);
            }
        }
        for (rel, c) in [(rp, &q.c_p), (ro, &q.c_o)] {
            for (a, &l) in c.iter().enumerate() {
                db.add_tuple(&map[&l], an.pt.end[rel][a])?;
                for &(f, b) in &an.pt.children[rel][a] {
                    db.set(f, &map[&l], &map[&c[b]])?;
                }
            }
        }
        let inf = &an.info[q.template];
        let lab = an
            .class_labels(q.template, q.o, &q.c_o, q.p, &q.c_p)
            .ok_or_else(|| Error::Internal("quintuple contexts disagree".into()))?;
        let mu: Vec<Arc<str>> = tpl
            .vars
            .iter()
            .enumerate()
            .map(|(x, v)| {
                let k = inf.a.equiv[x];
                match lab[k] {
                    Some(l) => map[&l].clone(),
                    None => Arc::from(format!("{}_q{}x{}", rels[v.rel].name, i + 1, k)),
                }
            })
            .collect();
        for c in &tpl.eqs {
            db.add_tuple(&mu[c.source], tpl.vars[c.source].rel)?;
            db.add_tuple(&mu[c.target], tpl.vars[c.target].rel)?;
            db.set(c.func, &mu[c.source], &mu[c.target])?;
        }
        names.push(map);
        mus.push(mu);
    }
    let steps: Vec<Step> = seq.iter().map(|q| (q.template, q.o, q.p)).collect();
    let wit = assemble(w, &steps, mus, db)?;
    let report = verify_witness(w, &wit);
    if !report.is_counterexample() || !wit.conditions.iter().all(|c| *c) {
        return Err(Error::Internal(format!(
            "materialized witness fails verification: {report:?}, split conditions {:?}",
            wit.conditions
        )));
    }
    Ok(wit)
}

/// Number of labeled paths per relation of the reduced graph.
pub fn path_counts(w: &Workload) -> Result<BTreeMap<String, usize>> {
    let pt = PathTable::new(&w.schema, &constraint_functions(w))?;
    Ok(w.schema
        .relations
        .iter()
        .enumerate()
        .map(|(r, rel)| (rel.name.clone(), pt.len(r)))
        .collect())
}
