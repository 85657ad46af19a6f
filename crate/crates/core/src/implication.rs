//! Implication, connectedness, equivalence and determination between
//! template variables.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::model::{Schema, Template};
use crate::schema::SchemaGraph;

#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let n = self.parent[c];
            self.parent[c] = r;
            c = n;
        }
        r
    }

    /// True when the two classes were distinct.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        true
    }

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// Dense class ids numbered by smallest member.
    pub fn classes(&mut self) -> Vec<usize> {
        let mut ids = BTreeMap::new();
        (0..self.parent.len())
            .map(|x| {
                let r = self.find(x);
                let n = ids.len();
                *ids.entry(r).or_insert(n)
            })
            .collect()
    }
}

/// Reflexive-transitive unlabeled implication: `m[x][y]` iff `x ⇒ y`.
pub fn implication_matrix(t: &Template) -> Vec<Vec<bool>> {
    let n = t.vars.len();
    let mut m = vec![vec![false; n]; n];
    for (x, row) in m.iter_mut().enumerate() {
        row[x] = true;
        let mut q = VecDeque::from([x]);
        while let Some(z) = q.pop_front() {
            for c in t.eqs.iter().filter(|c| c.source == z) {
                if !row[c.target] {
                    row[c.target] = true;
                    q.push_back(c.target);
                }
            }
        }
    }
    m
}

/// All `(X, F, Y)` with `X ⇒F Y`, `F` a sequence of function indices.
pub fn template_implications(
    schema: &Schema,
    t: &Template,
) -> Result<BTreeSet<(usize, Vec<usize>, usize)>> {
    if !SchemaGraph::new(schema).is_acyclic() {
        return Err(Error::Unsupported("labeled implication needs an acyclic schema".into()));
    }
    let mut out = BTreeSet::new();
    for x in 0..t.vars.len() {
        let mut stack = vec![(x, Vec::new())];
        while let Some((z, f)) = stack.pop() {
            for c in t.eqs.iter().filter(|c| c.source == z) {
                let mut g = f.clone();
                g.push(c.func);
                stack.push((c.target, g));
            }
            out.insert((x, f, z));
        }
    }
    Ok(out)
}

/// Connectivity classes under undirected constraint edges.
pub fn template_connectivity(t: &Template) -> Vec<usize> {
    let mut uf = UnionFind::new(t.vars.len());
    for c in &t.eqs {
        uf.union(c.source, c.target);
    }
    uf.classes()
}

/// Congruence closure: `X = f(Z)`, `Y = f(W)` and `Z ≡ W` give `X ≡ Y`.
pub fn template_equivalence(t: &Template) -> Vec<usize> {
    let mut uf = UnionFind::new(t.vars.len());
    let cap = t.vars.len() * t.vars.len() + 1;
    for _ in 0..cap {
        let mut changed = false;
        for a in &t.eqs {
            for b in &t.eqs {
                if a.func == b.func && uf.same(a.source, b.source) && uf.union(a.target, b.target) {
                    changed = true;
                }
            }
        }
        if !changed {
            return uf.classes();
        }
    }
    unreachable!("congruence closure over finitely many variables reaches a fixpoint")
}

/// Precomputed relations for one template.
#[derive(Clone, Debug)]
pub struct TemplateAnalysis {
    pub implies: Vec<Vec<bool>>,
    pub equiv: Vec<usize>,
    pub n_classes: usize,
    pub members: Vec<Vec<usize>>,
    /// Equivalence-class graph: `succ[class][func]`, deterministic by congruence.
    pub succ: Vec<BTreeMap<usize, usize>>,
    pub connected: Vec<usize>,
}

impl TemplateAnalysis {
    pub fn new(t: &Template) -> Self {
        let equiv = template_equivalence(t);
        let n_classes = equiv.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); n_classes];
        for (v, &c) in equiv.iter().enumerate() {
            members[c].push(v);
        }
        let mut succ = vec![BTreeMap::new(); n_classes];
        for c in &t.eqs {
            let prev = succ[equiv[c.source]].insert(c.func, equiv[c.target]);
            debug_assert!(prev.is_none_or(|p| p == equiv[c.target]));
        }
        TemplateAnalysis {
            implies: implication_matrix(t),
            equiv,
            n_classes,
            members,
            succ,
            connected: template_connectivity(t),
        }
    }

    pub fn equivalent(&self, x: usize, y: usize) -> bool {
        self.equiv[x] == self.equiv[y]
    }

    /// Class reached from `x`'s class along `path`, if determined.
    pub fn walk(&self, x: usize, path: &[usize]) -> Option<usize> {
        let mut c = self.equiv[x];
        for f in path {
            c = *self.succ[c].get(f)?;
        }
        Some(c)
    }

    /// Disequality between two equivalent variables makes the template
    /// unsatisfiable.
    pub fn satisfiable(&self, t: &Template) -> bool {
        t.neqs.iter().all(|&(x, y)| !self.equivalent(x, y))
    }
}

/// All `(F, Y)` such that `x` determines `Y` by `F`.
pub fn template_determination(
    schema: &Schema,
    t: &Template,
    x: usize,
) -> Result<BTreeSet<(Vec<usize>, usize)>> {
    if !SchemaGraph::new(schema).is_acyclic() {
        return Err(Error::Unsupported("determination needs an acyclic schema".into()));
    }
    let a = TemplateAnalysis::new(t);
    let mut out = BTreeSet::new();
    let mut stack = vec![(a.equiv[x], Vec::new())];
    while let Some((c, path)) = stack.pop() {
        for &y in &a.members[c] {
            out.insert((path.clone(), y));
        }
        for (&f, &d) in &a.succ[c] {
            let mut p = path.clone();
            p.push(f);
            stack.push((d, p));
        }
    }
    Ok(out)
}

/// Connectivity over a sequence of variable-disjoint template copies:
/// constraint edges inside each copy plus one identification per link.
/// Variables are addressed as `(copy, var)`; the result maps each to a class.
pub fn sequence_connectivity(
    copies: &[&Template],
    links: &[((usize, usize), (usize, usize))],
) -> Vec<Vec<usize>> {
    let offsets: Vec<usize> = copies
        .iter()
        .scan(0, |acc, t| {
            let o = *acc;
            *acc += t.vars.len();
            Some(o)
        })
        .collect();
    let total = copies.iter().map(|t| t.vars.len()).sum();
    let mut uf = UnionFind::new(total);
    for (i, t) in copies.iter().enumerate() {
        for c in &t.eqs {
            uf.union(offsets[i] + c.source, offsets[i] + c.target);
        }
    }
    for &((i, x), (j, y)) in links {
        uf.union(offsets[i] + x, offsets[j] + y);
    }
    let cls = uf.classes();
    copies
        .iter()
        .enumerate()
        .map(|(i, t)| (0..t.vars.len()).map(|v| cls[offsets[i] + v]).collect())
        .collect()
}
