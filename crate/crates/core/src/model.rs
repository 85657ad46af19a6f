//! Schemas, transaction templates, concrete transactions and multiversion
//! schedules, together with the schedule-level checks used everywhere else.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use petgraph::graphmap::DiGraphMap;

use crate::error::{Error, Result};

/// Attribute set over one relation, one bit per declared attribute.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AttrSet(pub u64);

impl AttrSet {
    pub const EMPTY: AttrSet = AttrSet(0);

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersects(self, other: AttrSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn union(self, other: AttrSet) -> AttrSet {
        AttrSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: AttrSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn insert(&mut self, idx: usize) {
        self.0 |= 1 << idx;
    }

    pub fn contains(self, idx: usize) -> bool {
        self.0 & (1 << idx) != 0
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..64).filter(move |i| self.contains(*i))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub attrs: Vec<String>,
}

impl Relation {
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a == name)
    }

    pub fn full(&self) -> AttrSet {
        AttrSet(if self.attrs.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.attrs.len()) - 1
        })
    }

    pub fn names(&self, set: AttrSet) -> BTreeSet<String> {
        set.iter().map(|i| self.attrs[i].clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub dom: usize,
    pub range: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    pub relations: Vec<Relation>,
    pub functions: Vec<Function>,
}

impl Schema {
    pub fn relation(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn function(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.relations {
            if !seen.insert(r.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate relation {}", r.name)));
            }
            if r.attrs.len() > 64 {
                return Err(Error::Invalid(format!("relation {} has more than 64 attributes", r.name)));
            }
            let mut attrs = BTreeSet::new();
            for a in &r.attrs {
                if !attrs.insert(a.as_str()) {
                    return Err(Error::Invalid(format!("duplicate attribute {}.{}", r.name, a)));
                }
            }
        }
        let mut fns = BTreeSet::new();
        for f in &self.functions {
            if !fns.insert(f.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate function {}", f.name)));
            }
            if f.dom >= self.relations.len() || f.range >= self.relations.len() {
                return Err(Error::Invalid(format!("function {} references an undeclared relation", f.name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    R,
    W,
    U,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::R => "R",
            OpKind::W => "W",
            OpKind::U => "U",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TemplateOp {
    pub kind: OpKind,
    pub var: usize,
    pub read_set: AttrSet,
    pub write_set: AttrSet,
}

impl TemplateOp {
    pub fn is_read(&self) -> bool {
        matches!(self.kind, OpKind::R | OpKind::U)
    }

    pub fn is_write(&self) -> bool {
        matches!(self.kind, OpKind::W | OpKind::U)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub rel: usize,
}

/// `target = func(source)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EqConstraint {
    pub target: usize,
    pub func: usize,
    pub source: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pub name: String,
    pub vars: Vec<Variable>,
    pub ops: Vec<TemplateOp>,
    pub eqs: Vec<EqConstraint>,
    pub neqs: Vec<(usize, usize)>,
}

impl Template {
    pub fn var(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn op_type(&self, op: usize) -> usize {
        self.vars[self.ops[op].var].rel
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("template {}: {}", self.name, msg)));
        for v in &self.vars {
            if v.rel >= schema.relations.len() {
                return bad(format!("variable {} has an undeclared type", v.name));
            }
        }
        let mut kinds = BTreeSet::new();
        for op in &self.ops {
            let Some(v) = self.vars.get(op.var) else {
                return bad("operation over an undeclared variable".into());
            };
            let full = schema.relations[v.rel].full();
            if !op.read_set.is_subset(full) || !op.write_set.is_subset(full) {
                return bad(format!("attribute set of {} outside its relation", v.name));
            }
            match op.kind {
                OpKind::R if !op.write_set.is_empty() => return bad("R operation with a write set".into()),
                OpKind::W if !op.read_set.is_empty() => return bad("W operation with a read set".into()),
                _ => {}
            }
            if !kinds.insert((op.var, op.kind)) {
                return bad(format!("more than one {} operation over {}", op.kind, v.name));
            }
        }
        for c in &self.eqs {
            let (Some(t), Some(s), Some(f)) = (
                self.vars.get(c.target),
                self.vars.get(c.source),
                schema.functions.get(c.func),
            ) else {
                return bad("constraint references an undeclared name".into());
            };
            if f.dom != s.rel || f.range != t.rel {
                return bad(format!("ill-typed constraint {} = {}({})", t.name, f.name, s.name));
            }
        }
        for &(x, y) in &self.neqs {
            let (Some(a), Some(b)) = (self.vars.get(x), self.vars.get(y)) else {
                return bad("disequality references an undeclared variable".into());
            };
            if a.rel != b.rel {
                return bad(format!("disequality {} != {} between different types", a.name, b.name));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Workload {
    pub schema: Schema,
    pub templates: Vec<Template>,
}

impl Workload {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let mut names = BTreeSet::new();
        for t in &self.templates {
            if !names.insert(t.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate template {}", t.name)));
            }
            t.validate(&self.schema)?;
        }
        Ok(())
    }

    pub fn template(&self, name: &str) -> Option<&Template> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn has_constraints(&self) -> bool {
        self.templates.iter().any(|t| !t.eqs.is_empty() || !t.neqs.is_empty())
    }

    /// Keeps the named templates, in workload declaration order.
    pub fn subset<S: AsRef<str>>(&self, names: &[S]) -> Result<Workload> {
        for n in names {
            if self.template(n.as_ref()).is_none() {
                return Err(Error::Invalid(format!("unknown template {}", n.as_ref())));
            }
        }
        Ok(Workload {
            schema: self.schema.clone(),
            templates: self
                .templates
                .iter()
                .filter(|t| names.iter().any(|n| n.as_ref() == t.name))
                .cloned()
                .collect(),
        })
    }

    /// Turns an R operation into a U operation writing what it reads.
    pub fn promote(&self, template: usize, op: usize) -> Result<Workload> {
        let mut w = self.clone();
        let t = w
            .templates
            .get_mut(template)
            .ok_or_else(|| Error::Invalid(format!("no template at index {template}")))?;
        let o = t
            .ops
            .get_mut(op)
            .ok_or_else(|| Error::Invalid(format!("no operation at index {op}")))?;
        if o.kind != OpKind::R {
            return Err(Error::Invalid(format!("operation {op} of {} is not an R operation", t.name)));
        }
        o.kind = OpKind::U;
        o.write_set = o.read_set;
        t.validate(&w.schema)?;
        Ok(w)
    }

    /// Drops all constraints, along with variables no operation touches.
    pub fn strip_constraints(&self) -> Workload {
        let mut w = self.clone();
        for t in &mut w.templates {
            t.eqs.clear();
            t.neqs.clear();
            let used: BTreeSet<usize> = t.ops.iter().map(|o| o.var).collect();
            let remap: Vec<usize> = (0..t.vars.len()).map(|v| used.range(..v).count()).collect();
            for op in &mut t.ops {
                op.var = remap[op.var];
            }
            let vars = std::mem::take(&mut t.vars);
            t.vars = vars.into_iter().enumerate().filter(|(i, _)| used.contains(i)).map(|(_, v)| v).collect();
        }
        w
    }
}

/// Directional conflict kinds of `a` against `b`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ConflictKinds {
    pub ww: bool,
    pub wr: bool,
    pub rw: bool,
}

impl ConflictKinds {
    pub fn any(self) -> bool {
        self.ww || self.wr || self.rw
    }

    pub fn from_sets(a_read: AttrSet, a_write: AttrSet, b_read: AttrSet, b_write: AttrSet) -> Self {
        ConflictKinds {
            ww: a_write.intersects(b_write),
            wr: a_write.intersects(b_read),
            rw: a_read.intersects(b_write),
        }
    }
}

/// Potential conflict between two template operations: equal variable type
/// and intersecting attribute sets. Always empty across different types.
pub fn potential_conflict(ta: &Template, a: usize, tb: &Template, b: usize) -> ConflictKinds {
    if ta.op_type(a) != tb.op_type(b) {
        return ConflictKinds::default();
    }
    let (oa, ob) = (&ta.ops[a], &tb.ops[b]);
    ConflictKinds::from_sets(oa.read_set, oa.write_set, ob.read_set, ob.write_set)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tuple {
    pub id: Arc<str>,
    pub rel: Arc<str>,
}

impl Tuple {
    pub fn new(id: &str, rel: &str) -> Self {
        Tuple {
            id: Arc::from(id),
            rel: Arc::from(rel),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConcreteKind {
    Init,
    R,
    W,
    U,
    Commit,
}

impl From<OpKind> for ConcreteKind {
    fn from(k: OpKind) -> Self {
        match k {
            OpKind::R => ConcreteKind::R,
            OpKind::W => ConcreteKind::W,
            OpKind::U => ConcreteKind::U,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConcreteOp {
    pub tx: u32,
    pub kind: ConcreteKind,
    pub tuple: Option<Tuple>,
    pub read_set: BTreeSet<String>,
    pub write_set: BTreeSet<String>,
}

impl ConcreteOp {
    pub fn new(tx: u32, kind: OpKind, tuple: Tuple, read: &[&str], write: &[&str]) -> Self {
        ConcreteOp {
            tx,
            kind: kind.into(),
            tuple: Some(tuple),
            read_set: read.iter().map(|s| s.to_string()).collect(),
            write_set: write.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn commit(tx: u32) -> Self {
        ConcreteOp {
            tx,
            kind: ConcreteKind::Commit,
            tuple: None,
            read_set: BTreeSet::new(),
            write_set: BTreeSet::new(),
        }
    }

    pub fn init() -> Self {
        ConcreteOp {
            tx: 0,
            kind: ConcreteKind::Init,
            tuple: None,
            read_set: BTreeSet::new(),
            write_set: BTreeSet::new(),
        }
    }

    pub fn is_read(&self) -> bool {
        matches!(self.kind, ConcreteKind::R | ConcreteKind::U)
    }

    pub fn is_write(&self) -> bool {
        matches!(self.kind, ConcreteKind::W | ConcreteKind::U)
    }

    fn tuple_id(&self) -> Option<&str> {
        self.tuple.as_ref().map(|t| &*t.id)
    }
}

impl fmt::Display for ConcreteOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let set = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        match self.kind {
            ConcreteKind::Init => write!(f, "op0"),
            ConcreteKind::Commit => write!(f, "C{}", self.tx),
            ConcreteKind::R => write!(f, "R{}[{}]{{{}}}", self.tx, self.tuple_id().unwrap_or("?"), set(&self.read_set)),
            ConcreteKind::W => write!(f, "W{}[{}]{{{}}}", self.tx, self.tuple_id().unwrap_or("?"), set(&self.write_set)),
            ConcreteKind::U => write!(
                f,
                "U{}[{}]{{{}}}{{{}}}",
                self.tx,
                self.tuple_id().unwrap_or("?"),
                set(&self.read_set),
                set(&self.write_set)
            ),
        }
    }
}

/// A transaction without its commit, which schedules add explicitly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub id: u32,
    pub ops: Vec<ConcreteOp>,
}

/// Kinds of `a` against `b`; empty when either is op0 or a commit or the
/// tuples differ. Transaction identity is not consulted.
pub fn conflict_kinds(a: &ConcreteOp, b: &ConcreteOp) -> ConflictKinds {
    match (a.tuple_id(), b.tuple_id()) {
        (Some(x), Some(y)) if x == y => {}
        _ => return ConflictKinds::default(),
    }
    if matches!(a.kind, ConcreteKind::Init | ConcreteKind::Commit)
        || matches!(b.kind, ConcreteKind::Init | ConcreteKind::Commit)
    {
        return ConflictKinds::default();
    }
    let meet = |x: &BTreeSet<String>, y: &BTreeSet<String>| x.intersection(y).next().is_some();
    ConflictKinds {
        ww: meet(&a.write_set, &b.write_set),
        wr: meet(&a.write_set, &b.read_set),
        rw: meet(&a.read_set, &b.write_set),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DepKind {
    WW,
    WR,
    RW,
}

/// A totally ordered multiversion schedule. Operation positions index
/// `ops`; position 0 is op0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule {
    pub ops: Vec<ConcreteOp>,
    /// Per tuple id, write positions in version order, starting with 0.
    pub version_order: BTreeMap<Arc<str>, Vec<usize>>,
    /// Read position to the write position it observes (0 for op0).
    pub version_fn: BTreeMap<usize, usize>,
}

impl Schedule {
    /// Validates the structural invariants.
    pub fn new(
        ops: Vec<ConcreteOp>,
        version_order: BTreeMap<Arc<str>, Vec<usize>>,
        version_fn: BTreeMap<usize, usize>,
    ) -> Result<Self> {
        let s = Schedule {
            ops,
            version_order,
            version_fn,
        };
        s.check()?;
        Ok(s)
    }

    /// Version order defaults to commit order, ties within a transaction
    /// broken by position.
    pub fn commit_ordered(ops: Vec<ConcreteOp>, version_fn: BTreeMap<usize, usize>) -> Result<Self> {
        let version_order = commit_version_order(&ops);
        Schedule::new(ops, version_order, version_fn)
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Schedule(m));
        match self.ops.first() {
            Some(op) if op.kind == ConcreteKind::Init => {}
            _ => return bad("op0 must come first".into()),
        }
        let mut committed: BTreeSet<u32> = BTreeSet::new();
        let mut rels: HashMap<&str, &str> = HashMap::new();
        for (i, op) in self.ops.iter().enumerate().skip(1) {
            if op.tx == 0 || op.kind == ConcreteKind::Init {
                return bad(format!("position {i}: only op0 may belong to transaction 0"));
            }
            if committed.contains(&op.tx) {
                return bad(format!("position {i}: operation of T{} after its commit", op.tx));
            }
            match (&op.kind, &op.tuple) {
                (ConcreteKind::Commit, None) => {
                    committed.insert(op.tx);
                }
                (ConcreteKind::Commit, Some(_)) => return bad("commit carries a tuple".into()),
                (_, None) => return bad(format!("position {i}: operation without a tuple")),
                (_, Some(t)) => {
                    if let Some(r) = rels.insert(&t.id, &t.rel) {
                        if r != &*t.rel {
                            return bad(format!("tuple {} used with two types", t.id));
                        }
                    }
                }
            }
        }
        for op in &self.ops[1..] {
            if !committed.contains(&op.tx) {
                return bad(format!("T{} does not commit", op.tx));
            }
        }
        let mut writes: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for (i, op) in self.ops.iter().enumerate() {
            if op.is_write() {
                writes.entry(op.tuple_id().unwrap()).or_default().insert(i);
            }
        }
        for (t, order) in &self.version_order {
            if order.first() != Some(&0) {
                return bad(format!("version order of {t} does not start with op0"));
            }
            let got: BTreeSet<usize> = order[1..].iter().copied().collect();
            let want = writes.get(&**t).cloned().unwrap_or_default();
            if got != want || got.len() != order.len() - 1 {
                return bad(format!("version order of {t} is not a permutation of its writes"));
            }
        }
        for t in writes.keys() {
            if !self.version_order.contains_key(*t) {
                return bad(format!("missing version order for {t}"));
            }
        }
        for (i, op) in self.ops.iter().enumerate() {
            if !op.is_read() {
                if self.version_fn.contains_key(&i) {
                    return bad(format!("version function defined on non-read position {i}"));
                }
                continue;
            }
            let Some(&w) = self.version_fn.get(&i) else {
                return bad(format!("read at position {i} has no version"));
            };
            if w == 0 {
                continue;
            }
            if w >= i {
                return bad(format!("read at position {i} observes a later write"));
            }
            let wop = &self.ops[w];
            if !wop.is_write() || wop.tuple_id() != op.tuple_id() {
                return bad(format!("read at position {i} observes a write on another tuple"));
            }
        }
        Ok(())
    }

    pub fn commit_position(&self, tx: u32) -> Option<usize> {
        self.ops
            .iter()
            .position(|o| o.tx == tx && o.kind == ConcreteKind::Commit)
    }

    fn commit_positions(&self) -> HashMap<u32, usize> {
        let mut m = HashMap::new();
        m.insert(0, 0);
        for (i, o) in self.ops.iter().enumerate() {
            if o.kind == ConcreteKind::Commit {
                m.insert(o.tx, i);
            }
        }
        m
    }

    /// Rank of a write in its tuple's version order; op0 ranks 0 everywhere.
    fn rank(&self, w: usize, tuple: &str) -> usize {
        if w == 0 {
            return 0;
        }
        self.version_order[tuple].iter().position(|&x| x == w).unwrap()
    }

    pub fn transactions(&self) -> BTreeSet<u32> {
        self.ops.iter().skip(1).map(|o| o.tx).collect()
    }
}

pub(crate) fn commit_version_order(ops: &[ConcreteOp]) -> BTreeMap<Arc<str>, Vec<usize>> {
    let mut commit = HashMap::new();
    for (i, o) in ops.iter().enumerate() {
        if o.kind == ConcreteKind::Commit {
            commit.insert(o.tx, i);
        }
    }
    let mut per: BTreeMap<Arc<str>, Vec<usize>> = BTreeMap::new();
    for (i, o) in ops.iter().enumerate() {
        if o.is_write() {
            per.entry(o.tuple.as_ref().unwrap().id.clone()).or_default().push(i);
        }
    }
    for v in per.values_mut() {
        v.sort_by_key(|&i| (commit.get(&ops[i].tx).copied().unwrap_or(usize::MAX), i));
        v.insert(0, 0);
    }
    per
}

/// Dependency edges between operations of distinct transactions, as
/// (before, after, kind) position triples.
pub fn dependency_edges(s: &Schedule) -> Vec<(usize, usize, DepKind)> {
    let mut out = Vec::new();
    for (b, ob) in s.ops.iter().enumerate().skip(1) {
        let Some(t) = ob.tuple_id() else { continue };
        for (a, oa) in s.ops.iter().enumerate().skip(1) {
            if oa.tx == ob.tx {
                continue;
            }
            let k = conflict_kinds(ob, oa);
            if !k.any() {
                continue;
            }
            if k.ww && s.rank(b, t) < s.rank(a, t) {
                out.push((b, a, DepKind::WW));
            }
            if k.wr {
                let v = s.version_fn[&a];
                if v == b || s.rank(b, t) < s.rank(v, t) {
                    out.push((b, a, DepKind::WR));
                }
            }
            if k.rw {
                let v = s.version_fn[&b];
                if s.rank(v, t) < s.rank(a, t) {
                    out.push((b, a, DepKind::RW));
                }
            }
        }
    }
    out
}

pub fn conflict_graph(s: &Schedule) -> DiGraphMap<u32, ()> {
    let mut g = DiGraphMap::new();
    for tx in s.transactions() {
        g.add_node(tx);
    }
    for (b, a, _) in dependency_edges(s) {
        g.add_edge(s.ops[b].tx, s.ops[a].tx, ());
    }
    g
}

pub fn is_conflict_serializable(s: &Schedule) -> bool {
    !petgraph::algo::is_cyclic_directed(&conflict_graph(s))
}

pub fn is_rc_allowed(s: &Schedule) -> bool {
    let commit = s.commit_positions();
    // Version order follows commit order.
    for (t, order) in &s.version_order {
        for &b in &order[1..] {
            for &a in &order[1..] {
                let (tb, ta) = (s.ops[b].tx, s.ops[a].tx);
                if tb == ta {
                    continue;
                }
                if (s.rank(b, t) < s.rank(a, t)) != (commit[&tb] < commit[&ta]) {
                    return false;
                }
            }
        }
    }
    // Read-last-committed.
    for (&a, &v) in &s.version_fn {
        let t = s.ops[a].tuple_id().unwrap();
        if v != 0 && commit[&s.ops[v].tx] >= a {
            return false;
        }
        let Some(order) = s.version_order.get(t) else { continue };
        for &c in &order[1..] {
            if commit[&s.ops[c].tx] < a && s.rank(v, t) < s.rank(c, t) {
                return false;
            }
        }
    }
    // No dirty writes.
    for (b, ob) in s.ops.iter().enumerate().skip(1) {
        if !ob.is_write() {
            continue;
        }
        for oa in s.ops.iter().take(commit[&ob.tx]).skip(b + 1) {
            if oa.tx != ob.tx && conflict_kinds(ob, oa).ww {
                return false;
            }
        }
    }
    true
}

/// `(T_i, b_i, a_j, T_j)` with transactions as indices into the slice handed
/// to [`build_split_schedule`] and operations as indices within them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConflictQuadruple {
    pub tx_before: usize,
    pub op_before: usize,
    pub op_after: usize,
    pub tx_after: usize,
}

#[derive(Clone, Debug)]
pub struct SplitSchedule {
    pub schedule: Schedule,
    /// Whether each of the three split-schedule conditions holds.
    pub conditions: [bool; 3],
}

impl SplitSchedule {
    pub fn holds(&self) -> bool {
        self.conditions.iter().all(|c| *c)
    }
}

/// Lays out prefix(T1,b1), T2..Tm, postfix(T1,b1), then the remaining
/// transactions serially, with commit-order versions and last-committed reads.
pub fn build_split_schedule(
    txs: &[Transaction],
    chain: &[ConflictQuadruple],
    split_op: usize,
) -> Result<SplitSchedule> {
    let m = chain.len();
    let bad = |msg: String| Err(Error::Schedule(msg));
    if m < 2 {
        return bad("a split schedule needs a chain over at least two transactions".into());
    }
    if txs.len() < m {
        return bad("chain mentions more transactions than supplied".into());
    }
    let ids: BTreeSet<u32> = txs.iter().map(|t| t.id).collect();
    if ids.len() != txs.len() || ids.contains(&0) {
        return bad("transaction ids must be distinct and non-zero".into());
    }
    for t in txs {
        if t.ops.iter().any(|o| o.tx != t.id || matches!(o.kind, ConcreteKind::Init | ConcreteKind::Commit)) {
            return bad(format!("T{} carries foreign or control operations", t.id));
        }
    }
    for (i, q) in chain.iter().enumerate() {
        if q.tx_before != i || q.tx_after != (i + 1) % m {
            return bad(format!("quadruple {i} does not follow the chain shape"));
        }
        let (Some(b), Some(a)) = (txs[q.tx_before].ops.get(q.op_before), txs[q.tx_after].ops.get(q.op_after)) else {
            return bad(format!("quadruple {i} references a missing operation"));
        };
        if !conflict_kinds(b, a).any() {
            return bad(format!("quadruple {i}: {b} does not conflict with {a}"));
        }
    }
    if chain[0].op_before != split_op {
        return bad("split operation must be b1".into());
    }
    let t1 = &txs[0];
    let mut ops = vec![ConcreteOp::init()];
    ops.extend(t1.ops[..=split_op].iter().cloned());
    for t in &txs[1..m] {
        ops.extend(t.ops.iter().cloned());
        ops.push(ConcreteOp::commit(t.id));
    }
    ops.extend(t1.ops[split_op + 1..].iter().cloned());
    ops.push(ConcreteOp::commit(t1.id));
    for t in &txs[m..] {
        ops.extend(t.ops.iter().cloned());
        ops.push(ConcreteOp::commit(t.id));
    }
    let version_fn = last_committed_versions(&ops);
    let schedule = Schedule::commit_ordered(ops, version_fn)?;

    let prefix = &t1.ops[..=split_op];
    let c1 = !prefix.iter().filter(|o| o.is_write()).any(|w| {
        txs[1..m]
            .iter()
            .flat_map(|t| t.ops.iter())
            .any(|o| o.is_write() && conflict_kinds(w, o).ww)
    });
    let last = chain[m - 1];
    let a1 = &t1.ops[last.op_after];
    let bm = &txs[m - 1].ops[last.op_before];
    let c2 = split_op < last.op_after || conflict_kinds(bm, a1).rw;
    let a2 = &txs[1].ops[chain[0].op_after];
    let c3 = conflict_kinds(&t1.ops[split_op], a2).rw;
    Ok(SplitSchedule {
        schedule,
        conditions: [c1, c2, c3],
    })
}

/// Each read observes the most recent write on its tuple whose transaction
/// has committed, or op0.
pub fn last_committed_versions(ops: &[ConcreteOp]) -> BTreeMap<usize, usize> {
    let mut commit_at = HashMap::new();
    for (i, o) in ops.iter().enumerate() {
        if o.kind == ConcreteKind::Commit {
            commit_at.insert(o.tx, i);
        }
    }
    let mut out = BTreeMap::new();
    for (a, oa) in ops.iter().enumerate() {
        if !oa.is_read() {
            continue;
        }
        let t = oa.tuple_id();
        let mut best: Option<(usize, usize)> = None;
        for (w, ow) in ops.iter().enumerate().take(a) {
            if w == 0 || !ow.is_write() || ow.tuple_id() != t {
                continue;
            }
            let Some(&c) = commit_at.get(&ow.tx) else { continue };
            if c < a && best.is_none_or(|(bc, bw)| (c, w) > (bc, bw)) {
                best = Some((c, w));
            }
        }
        out.insert(a, best.map_or(0, |(_, w)| w));
    }
    out
}

/// Instantiates a template under a variable assignment (tuple ids indexed by
/// template variable).
pub fn instantiate(schema: &Schema, t: &Template, tx: u32, assignment: &[Arc<str>]) -> Transaction {
    let ops = t
        .ops
        .iter()
        .map(|op| {
            let rel = &schema.relations[t.vars[op.var].rel];
            ConcreteOp {
                tx,
                kind: op.kind.into(),
                tuple: Some(Tuple {
                    id: assignment[op.var].clone(),
                    rel: Arc::from(rel.name.as_str()),
                }),
                read_set: rel.names(op.read_set),
                write_set: rel.names(op.write_set),
            }
        })
        .collect();
    Transaction { id: tx, ops }
}
