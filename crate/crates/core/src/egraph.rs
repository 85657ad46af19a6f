//! Union-find with function-application congruence over symbolic tuples.

use std::collections::BTreeMap;
use std::sync::Arc;

/// Nodes are symbolic tuples; `succ[class][f]` is a node equal to `f` of
/// the class. Nodes may be pinned to a named tuple.
#[derive(Clone, Debug, Default)]
pub struct EGraph {
    parent: Vec<usize>,
    succ: Vec<BTreeMap<usize, usize>>,
    constant: Vec<Option<Arc<str>>>,
    neqs: Vec<(usize, usize)>,
    clash: bool,
}

impl EGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn add_node(&mut self) -> usize {
        let n = self.parent.len();
        self.parent.push(n);
        self.succ.push(BTreeMap::new());
        self.constant.push(None);
        n
    }

    pub fn add_constant(&mut self, name: Arc<str>) -> usize {
        let n = self.add_node();
        self.constant[n] = Some(name);
        n
    }

    pub fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    pub fn same(&self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }

    /// The named tuple of `x`'s class, if pinned.
    pub fn constant(&self, x: usize) -> Option<&Arc<str>> {
        self.constant[self.find(x)].as_ref()
    }

    /// The node equal to `f(x)`, if one exists.
    pub fn apply(&self, f: usize, x: usize) -> Option<usize> {
        self.succ[self.find(x)].get(&f).copied()
    }

    /// Records `target = f(source)`.
    pub fn add_eq(&mut self, target: usize, f: usize, source: usize) {
        let r = self.find(source);
        match self.succ[r].get(&f) {
            Some(&n) => self.union(n, target),
            None => {
                self.succ[r].insert(f, target);
            }
        }
    }

    pub fn add_neq(&mut self, a: usize, b: usize) {
        self.neqs.push((a, b));
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let mut work = vec![(a, b)];
        while let Some((a, b)) = work.pop() {
            let (ra, rb) = (self.find(a), self.find(b));
            if ra == rb {
                continue;
            }
            let (keep, gone) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[gone] = keep;
            match (self.constant[keep].clone(), self.constant[gone].take()) {
                (Some(x), Some(y)) if x != y => self.clash = true,
                (None, Some(y)) => self.constant[keep] = Some(y),
                _ => {}
            }
            let moved = std::mem::take(&mut self.succ[gone]);
            for (f, n) in moved {
                match self.succ[keep].get(&f) {
                    Some(&m) => work.push((m, n)),
                    None => {
                        self.succ[keep].insert(f, n);
                    }
                }
            }
        }
    }

    /// No two distinct named tuples merged and no disequality inside a class.
    pub fn consistent(&self) -> bool {
        !self.clash && self.neqs.iter().all(|&(a, b)| !self.same(a, b))
    }

    /// Dense class ids by smallest member.
    pub fn classes(&self) -> Vec<usize> {
        let mut ids = BTreeMap::new();
        (0..self.len())
            .map(|x| {
                let r = self.find(x);
                let n = ids.len();
                *ids.entry(r).or_insert(n)
            })
            .collect()
    }

    /// `(class, f, class)` edges of the quotient.
    pub fn class_edges(&self) -> Vec<(usize, usize, usize)> {
        let cls = self.classes();
        let mut out = Vec::new();
        for x in 0..self.len() {
            if self.find(x) == x {
                for (&f, &n) in &self.succ[x] {
                    out.push((cls[x], f, cls[n]));
                }
            }
        }
        out
    }
}
