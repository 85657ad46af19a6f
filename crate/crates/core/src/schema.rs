//! Schema graphs and fragment classification.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::implication::TemplateAnalysis;
use crate::model::{Schema, Template, Workload};

/// One labeled edge per function, from its domain to its range.
#[derive(Clone, Debug)]
pub struct SchemaGraph {
    pub n_nodes: usize,
    /// `(function, dom, range)` for the functions kept in the graph.
    pub edges: Vec<(usize, usize, usize)>,
}

impl SchemaGraph {
    pub fn new(s: &Schema) -> Self {
        SchemaGraph {
            n_nodes: s.relations.len(),
            edges: s.functions.iter().enumerate().map(|(i, f)| (i, f.dom, f.range)).collect(),
        }
    }

    /// Restricted to the given functions.
    pub fn with_functions(s: &Schema, keep: &BTreeSet<usize>) -> Self {
        let mut g = SchemaGraph::new(s);
        g.edges.retain(|e| keep.contains(&e.0));
        g
    }

    fn out_edges(&self, n: usize) -> impl Iterator<Item = &(usize, usize, usize)> {
        self.edges.iter().filter(move |e| e.1 == n)
    }

    /// A cycle as a sequence of function indices, if any.
    pub fn find_cycle(&self) -> Option<Vec<usize>> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; self.n_nodes];
        let mut stack_edges: Vec<usize> = Vec::new();
        fn dfs(g: &SchemaGraph, n: usize, state: &mut [u8], path: &mut Vec<usize>) -> Option<Vec<usize>> {
            state[n] = 1;
            for &(f, _, to) in g.out_edges(n) {
                path.push(f);
                if state[to] == 1 {
                    let start = path
                        .iter()
                        .position(|&e| g.edges.iter().any(|x| x.0 == e && x.1 == to))
                        .unwrap();
                    return Some(path[start..].to_vec());
                }
                if state[to] == 0 {
                    if let Some(c) = dfs(g, to, state, path) {
                        return Some(c);
                    }
                }
                path.pop();
            }
            state[n] = 2;
            None
        }
        for n in 0..self.n_nodes {
            if state[n] == 0 {
                if let Some(c) = dfs(self, n, &mut state, &mut stack_edges) {
                    return Some(c);
                }
            }
        }
        None
    }

    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Number of distinct labeled paths between every ordered node pair,
    /// saturating. `None` on cyclic graphs.
    pub fn path_counts(&self) -> Option<Vec<Vec<u64>>> {
        let order = self.topo_order()?;
        let n = self.n_nodes;
        let mut cnt = vec![vec![0u64; n]; n];
        // Process sources in reverse topological order so successors are done.
        for &u in order.iter().rev() {
            cnt[u][u] = 1;
            for &(_, _, v) in self.out_edges(u) {
                for t in 0..n {
                    cnt[u][t] = cnt[u][t].saturating_add(cnt[v][t]);
                }
            }
        }
        Some(cnt)
    }

    fn topo_order(&self) -> Option<Vec<usize>> {
        let mut indeg = vec![0usize; self.n_nodes];
        for e in &self.edges {
            indeg[e.2] += 1;
        }
        let mut ready: Vec<usize> = (0..self.n_nodes).filter(|&n| indeg[n] == 0).collect();
        ready.reverse();
        let mut out = Vec::new();
        while let Some(u) = ready.pop() {
            out.push(u);
            for &(_, _, v) in self.out_edges(u) {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(v);
                }
            }
        }
        (out.len() == self.n_nodes).then_some(out)
    }

    pub fn is_multi_tree(&self) -> bool {
        self.max_path_count().is_ok_and(|k| k <= 1)
    }

    /// Largest number of labeled paths between an ordered pair of nodes.
    pub fn max_path_count(&self) -> Result<u64> {
        let cnt = self
            .path_counts()
            .ok_or_else(|| Error::Unsupported("cyclic schema graph has infinitely many paths".into()))?;
        Ok(cnt.iter().flatten().copied().max().unwrap_or(0))
    }

    /// Every path from `from`, as function sequences in lexicographic
    /// (depth-first, function order) enumeration; the empty path first.
    pub fn all_paths(&self, from: usize) -> Result<Vec<Vec<usize>>> {
        if !self.is_acyclic() {
            return Err(Error::Unsupported("cyclic schema graph has infinitely many paths".into()));
        }
        let mut out = Vec::new();
        fn go(g: &SchemaGraph, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(cur.clone());
            let mut es: Vec<_> = g.out_edges(n).copied().collect();
            es.sort();
            for (f, _, to) in es {
                cur.push(f);
                go(g, to, cur, out);
                cur.pop();
            }
        }
        go(self, from, &mut Vec::new(), &mut out);
        Ok(out)
    }
}

/// Pairs `(f, g)` of function indices.
pub type Pairing = Vec<(usize, usize)>;

/// Searches perfect matchings of mutually opposite functions such that
/// every one-per-pair selection is a multi-tree and every template is
/// symmetric under the pairing.
pub fn find_mtb_pairing(w: &Workload) -> Option<Pairing> {
    let s = &w.schema;
    let n = s.functions.len();
    if n % 2 == 1 || s.functions.iter().any(|f| f.dom == f.range) {
        return None;
    }
    let mut partner = vec![usize::MAX; n];
    fn search(w: &Workload, partner: &mut Vec<usize>) -> Option<Pairing> {
        let s = &w.schema;
        let Some(f) = partner.iter().position(|&p| p == usize::MAX) else {
            let pairing: Pairing = (0..partner.len())
                .filter(|&f| f < partner[f])
                .map(|f| (f, partner[f]))
                .collect();
            return mtb_valid(w, &pairing).then_some(pairing);
        };
        for g in f + 1..partner.len() {
            let (a, b) = (&s.functions[f], &s.functions[g]);
            if partner[g] != usize::MAX || a.dom != b.range || b.dom != a.range {
                continue;
            }
            partner[f] = g;
            partner[g] = f;
            if let Some(p) = search(w, partner) {
                return Some(p);
            }
            partner[f] = usize::MAX;
            partner[g] = usize::MAX;
        }
        None
    }
    search(w, &mut partner)
}

/// Re-checks the three clauses of a pairing independently of the search.
pub fn mtb_valid(w: &Workload, pairing: &Pairing) -> bool {
    let s = &w.schema;
    let mut used = BTreeSet::new();
    for &(f, g) in pairing {
        let (a, b) = (&s.functions[f], &s.functions[g]);
        if a.dom != b.range || b.dom != a.range || !used.insert(f) || !used.insert(g) {
            return false;
        }
    }
    if used.len() != s.functions.len() {
        return false;
    }
    for mask in 0u64..(1u64 << pairing.len()) {
        let keep: BTreeSet<usize> = pairing
            .iter()
            .enumerate()
            .map(|(i, &(f, g))| if mask & (1 << i) == 0 { f } else { g })
            .collect();
        if !SchemaGraph::with_functions(s, &keep).is_multi_tree() {
            return false;
        }
    }
    let inverse = |f: usize| {
        pairing
            .iter()
            .find_map(|&(a, b)| if a == f { Some(b) } else if b == f { Some(a) } else { None })
    };
    w.templates.iter().all(|t| {
        t.eqs.iter().all(|c| {
            let g = inverse(c.func);
            g.is_some_and(|g| t.eqs.iter().any(|d| d.func == g && d.source == c.target && d.target == c.source))
        })
    })
}

/// For every `X` with `X ⇒ W` and `X ⇒ Z`: `W ≡ Z`, `W ⇒ Z` or `Z ⇒ W`.
pub fn is_restricted(schema: &Schema, t: &Template) -> Result<bool> {
    if !SchemaGraph::new(schema).is_acyclic() {
        return Err(Error::Unsupported("restrictedness needs an acyclic schema".into()));
    }
    let a = TemplateAnalysis::new(t);
    let n = t.vars.len();
    for x in 0..n {
        for w in (0..n).filter(|&w| a.implies[x][w]) {
            for z in (0..n).filter(|&z| a.implies[x][z]) {
                if !(a.equivalent(w, z) || a.implies[w][z] || a.implies[z][w]) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Fragment {
    VarTemp,
    MTBTemp,
    AcyclicRestricted,
    AcyclicBoundedK(u64),
    AcyclicGeneral,
    Unsupported,
}

impl Fragment {
    pub fn is_acyclic(self) -> bool {
        matches!(
            self,
            Fragment::AcyclicRestricted | Fragment::AcyclicBoundedK(_) | Fragment::AcyclicGeneral
        )
    }
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fragment::AcyclicBoundedK(k) => write!(f, "AcyclicBoundedK({k})"),
            other => write!(f, "{other:?}"),
        }
    }
}

/// Largest path count treated as bounded.
pub const BOUNDED_K: u64 = 4;

#[derive(Clone, Debug, Serialize)]
pub struct FragmentReport {
    pub fragment: Fragment,
    /// Function-name pairs of the MTB pairing.
    pub pairing: Option<Vec<(String, String)>>,
    pub max_paths: Option<u64>,
    pub non_restricted: Vec<String>,
    /// Function names along a cycle of the schema graph.
    pub cycle: Option<Vec<String>>,
}

pub fn classify(w: &Workload) -> FragmentReport {
    let g = SchemaGraph::new(&w.schema);
    let fname = |f: &usize| w.schema.functions[*f].name.clone();
    let cycle = g.find_cycle().map(|c| c.iter().map(fname).collect::<Vec<_>>());
    let pairing = find_mtb_pairing(w);
    let max_paths = g.max_path_count().ok();
    let non_restricted: Vec<String> = if cycle.is_none() {
        w.templates
            .iter()
            .filter(|t| !is_restricted(&w.schema, t).unwrap_or(false))
            .map(|t| t.name.clone())
            .collect()
    } else {
        Vec::new()
    };
    let fragment = if !w.has_constraints() {
        Fragment::VarTemp
    } else if pairing.is_some() {
        Fragment::MTBTemp
    } else if cycle.is_none() {
        let k = max_paths.unwrap_or(1);
        if non_restricted.is_empty() {
            Fragment::AcyclicRestricted
        } else if k <= BOUNDED_K {
            Fragment::AcyclicBoundedK(k)
        } else {
            Fragment::AcyclicGeneral
        }
    } else {
        Fragment::Unsupported
    };
    FragmentReport {
        fragment,
        pairing: pairing.map(|p| p.iter().map(|(a, b)| (fname(a), fname(b))).collect()),
        max_paths,
        non_restricted,
        cycle,
    }
}
