//! Implication, connectivity, equivalence and determination closures.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcrobust::dsl::parse_workload;
use rcrobust::fixtures::fixture;
use rcrobust::implication::{
    implication_matrix, sequence_connectivity, template_connectivity, template_determination, template_equivalence,
    template_implications,
};
use rcrobust::model::{Template, Workload};
use rcrobust::oracle::{random_workload, FragmentBias, RandomParams};

fn acyclic_params(p: f64) -> RandomParams {
    RandomParams {
        n_templates: 3,
        n_ops: 4,
        n_relations: 3,
        n_functions: 4,
        p_constraint: p,
        fragment_bias: FragmentBias::Acyclic,
    }
}

/// Templates over a small fixed acyclic schema with many same-function
/// constraints, so congruences actually fire.
fn dense_template(rng: &mut ChaCha8Rng) -> Workload {
    let rels = ["A", "B", "C"];
    let fns = [("f", 0, 1), ("h", 0, 1), ("g", 1, 2)];
    let types: Vec<usize> = (0..rng.gen_range(3..=6)).map(|_| rng.gen_range(0..3)).collect();
    let mut text = String::from("schema {\n relation A(a)\n relation B(a)\n relation C(a)\n");
    for (f, d, r) in fns {
        text.push_str(&format!(" function {f} : {} -> {}\n", rels[d], rels[r]));
    }
    text.push_str("}\ntemplate T {\n");
    for (i, &ty) in types.iter().enumerate() {
        text.push_str(&format!(" R V{i}:{}{{a}}\n", rels[ty]));
    }
    for _ in 0..rng.gen_range(0..=6) {
        let (f, d, r) = fns[rng.gen_range(0..fns.len())];
        let src: Vec<usize> = (0..types.len()).filter(|&i| types[i] == d).collect();
        let tgt: Vec<usize> = (0..types.len()).filter(|&i| types[i] == r).collect();
        if src.is_empty() || tgt.is_empty() {
            continue;
        }
        let (x, y) = (src[rng.gen_range(0..src.len())], tgt[rng.gen_range(0..tgt.len())]);
        text.push_str(&format!(" eq V{y} = {f}(V{x})\n"));
    }
    text.push('}');
    parse_workload(&text).unwrap()
}

fn var(t: &Template, n: &str) -> usize {
    t.var(n).unwrap()
}

fn funcs(w: &Workload, names: &[&str]) -> Vec<usize> {
    names.iter().map(|n| w.schema.function(n).unwrap()).collect()
}

#[test]
fn gopremium_implies_both_ways() {
    let w = fixture("smallbank").unwrap();
    let t = w.template("GoPremium").unwrap();
    let m = implication_matrix(t);
    let (x, y) = (var(t, "X"), var(t, "Y"));
    assert!(m[x][y] && m[y][x]);
    // Labeled closures need finitely many paths.
    assert!(template_implications(&w.schema, t).is_err());
    assert!(template_determination(&w.schema, t, x).is_err());
}

#[test]
fn constraint_free_template_implies_only_itself() {
    let w = fixture("tpcc-nofc").unwrap();
    let t = w.template("NewOrder").unwrap();
    let got = template_implications(&w.schema, t).unwrap();
    let expect: BTreeSet<(usize, Vec<usize>, usize)> = (0..t.vars.len()).map(|x| (x, vec![], x)).collect();
    assert_eq!(got, expect);
}

#[test]
fn neworder_reaches_warehouse_along_two_paths() {
    let w = fixture("tpcc").unwrap();
    let t = w.template("NewOrder").unwrap();
    let got = template_implications(&w.schema, t).unwrap();
    let wh = t.vars.iter().position(|v| w.schema.relations[v.rel].name == "Warehouse").unwrap();
    let line = t.vars.iter().position(|v| w.schema.relations[v.rel].name == "OrderLine").unwrap();
    assert!(got.contains(&(line, funcs(&w, &["fLO", "fOC", "fCD", "fDW"]), wh)));
    assert!(got.contains(&(line, funcs(&w, &["fLS", "fSW"]), wh)));
}

/// Labeled closure by naive saturation over triples.
fn closure_oracle(t: &Template) -> BTreeSet<(usize, Vec<usize>, usize)> {
    let mut s: BTreeSet<(usize, Vec<usize>, usize)> = (0..t.vars.len()).map(|x| (x, vec![], x)).collect();
    loop {
        let mut add = Vec::new();
        for (x, f, z) in &s {
            for c in t.eqs.iter().filter(|c| c.source == *z) {
                let mut g = f.clone();
                g.push(c.func);
                let triple = (*x, g, c.target);
                if !s.contains(&triple) {
                    add.push(triple);
                }
            }
        }
        if add.is_empty() {
            return s;
        }
        s.extend(add);
    }
}

#[test]
fn labeled_implication_matches_saturation() {
    for seed in 0..150 {
        let w = random_workload(seed, &acyclic_params(0.7)).unwrap();
        for t in &w.templates {
            assert_eq!(template_implications(&w.schema, t).unwrap(), closure_oracle(t), "seed {seed}");
        }
    }
}

/// Equivalence by the existential formulation: `X ≡ Y` when some `Z ≡ W`
/// reach `X` and `Y` along the same label sequence.
fn equivalence_oracle(t: &Template) -> Vec<Vec<bool>> {
    let n = t.vars.len();
    let reach = closure_oracle(t);
    let mut e = vec![vec![false; n]; n];
    for (i, row) in e.iter_mut().enumerate() {
        row[i] = true;
    }
    loop {
        let mut changed = false;
        for (z, f, x) in &reach {
            for (w, g, y) in &reach {
                if f == g && e[*z][*w] && !e[*x][*y] {
                    e[*x][*y] = true;
                    changed = true;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if e[i][j] && e[j][k] && !e[i][k] {
                        e[i][k] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return e;
        }
    }
}

#[test]
fn congruence_closure_matches_existential_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut merged = 0;
    for seed in 0..400 {
        let w = if seed % 2 == 0 {
            dense_template(&mut rng)
        } else {
            random_workload(seed, &acyclic_params(0.8)).unwrap()
        };
        for t in &w.templates {
            let classes = template_equivalence(t);
            let e = equivalence_oracle(t);
            for x in 0..t.vars.len() {
                for y in 0..t.vars.len() {
                    assert_eq!(classes[x] == classes[y], e[x][y], "seed {seed} {} {x} {y}", t.name);
                    merged += usize::from(x != y && e[x][y]);
                }
            }
        }
    }
    assert!(merged > 0);
}

#[test]
fn equivalence_examples() {
    let w = parse_workload(
        "schema {\n relation A(a)\n relation B(b)\n function f : A -> B\n}\n\
         template T {\n R X:A{a}\n R Y:B{b}\n R Z:B{b}\n eq Y = f(X)\n eq Z = f(X)\n}",
    )
    .unwrap();
    let t = &w.templates[0];
    let c = template_equivalence(t);
    assert_eq!(c[var(t, "Y")], c[var(t, "Z")]);
    assert_ne!(c[var(t, "X")], c[var(t, "Y")]);

    let sb = fixture("smallbank").unwrap();
    for name in ["WriteCheck", "Balance"] {
        let t = sb.template(name).unwrap();
        let c = template_equivalence(t);
        let distinct: BTreeSet<usize> = c.iter().copied().collect();
        assert_eq!(distinct.len(), t.vars.len(), "{name}");
    }
}

/// Determination by saturation over `(F, Y)` pairs, jumping freely within
/// equivalence classes.
fn determination_oracle(t: &Template, x: usize) -> BTreeSet<(Vec<usize>, usize)> {
    let e = equivalence_oracle(t);
    let n = t.vars.len();
    let mut s: BTreeSet<(Vec<usize>, usize)> = (0..n).filter(|&y| e[x][y]).map(|y| (vec![], y)).collect();
    loop {
        let mut add = Vec::new();
        for (f, z) in &s {
            for c in t.eqs.iter().filter(|c| e[c.source][*z]) {
                let mut g = f.clone();
                g.push(c.func);
                for y in (0..n).filter(|&y| e[c.target][y]) {
                    if !s.contains(&(g.clone(), y)) {
                        add.push((g.clone(), y));
                    }
                }
            }
        }
        if add.is_empty() {
            return s;
        }
        s.extend(add);
    }
}

#[test]
fn determination_examples_and_oracle() {
    let w = fixture("tpcc").unwrap();
    let t = w.template("Delivery").unwrap();
    let (s, z) = (var(t, "S"), var(t, "Z"));
    let d = template_determination(&w.schema, t, s).unwrap();
    assert!(d.contains(&(funcs(&w, &["fOC"]), z)));
    assert!(d.contains(&(vec![], s)));
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..300 {
        let w = if seed % 2 == 0 {
            dense_template(&mut rng)
        } else {
            random_workload(seed, &acyclic_params(0.8)).unwrap()
        };
        for t in &w.templates {
            let implied = closure_oracle(t);
            for x in 0..t.vars.len() {
                let d = template_determination(&w.schema, t, x).unwrap();
                assert_eq!(d, determination_oracle(t, x), "seed {seed}");
                for (a, f, y) in &implied {
                    if *a == x {
                        assert!(d.contains(&(f.clone(), *y)));
                    }
                }
            }
        }
    }
}

/// Class membership by BFS over constraint and link edges.
fn connectivity_oracle(copies: &[&Template], links: &[((usize, usize), (usize, usize))]) -> Vec<Vec<usize>> {
    let mut adj: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    for (i, t) in copies.iter().enumerate() {
        for v in 0..t.vars.len() {
            adj.entry((i, v)).or_default();
        }
        for c in &t.eqs {
            adj.get_mut(&(i, c.source)).unwrap().push((i, c.target));
            adj.get_mut(&(i, c.target)).unwrap().push((i, c.source));
        }
    }
    for &(a, b) in links {
        adj.get_mut(&a).unwrap().push(b);
        adj.get_mut(&b).unwrap().push(a);
    }
    let mut comp: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let nodes: Vec<(usize, usize)> = adj.keys().copied().collect();
    for start in nodes {
        if comp.contains_key(&start) {
            continue;
        }
        let id = comp.len();
        let mut q = VecDeque::from([start]);
        comp.insert(start, id);
        while let Some(u) = q.pop_front() {
            for &v in &adj[&u] {
                if let std::collections::btree_map::Entry::Vacant(e) = comp.entry(v) {
                    e.insert(id);
                    q.push_back(v);
                }
            }
        }
    }
    copies
        .iter()
        .enumerate()
        .map(|(i, t)| (0..t.vars.len()).map(|v| comp[&(i, v)]).collect())
        .collect()
}

fn same_partition(a: &[Vec<usize>], b: &[Vec<usize>]) -> bool {
    let flat = |p: &[Vec<usize>]| -> Vec<usize> { p.iter().flatten().copied().collect() };
    let (a, b) = (flat(a), flat(b));
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

#[test]
fn gopremium_pair_is_one_class() {
    let w = fixture("smallbank").unwrap();
    let t = w.template("GoPremium").unwrap();
    let y = var(t, "Y");
    let p = sequence_connectivity(&[t, t], &[((0, y), (1, y))]);
    let all: BTreeSet<usize> = p.iter().flatten().copied().collect();
    assert_eq!(all.len(), 1);
}

#[test]
fn single_link_without_constraints_merges_one_pair() {
    let w = fixture("smallbank-nofc").unwrap();
    let t = w.template("Balance").unwrap();
    let p = sequence_connectivity(&[t, t], &[((0, 0), (1, 0))]);
    let distinct: BTreeSet<usize> = p.iter().flatten().copied().collect();
    assert_eq!(distinct.len(), 2 * t.vars.len() - 1);
    assert_eq!(p[0][0], p[1][0]);
}

#[test]
fn sequence_connectivity_matches_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = RandomParams { fragment_bias: FragmentBias::Any, ..acyclic_params(0.5) };
    for seed in 0..200 {
        let w = random_workload(seed, &params).unwrap();
        let m = rng.gen_range(1..=4);
        let copies: Vec<&Template> = (0..m).map(|_| &w.templates[rng.gen_range(0..w.templates.len())]).collect();
        let links: Vec<((usize, usize), (usize, usize))> = (0..rng.gen_range(0..=m))
            .map(|_| {
                let i = rng.gen_range(0..m);
                let j = rng.gen_range(0..m);
                ((i, rng.gen_range(0..copies[i].vars.len())), (j, rng.gen_range(0..copies[j].vars.len())))
            })
            .collect();
        let got = sequence_connectivity(&copies, &links);
        assert!(same_partition(&got, &connectivity_oracle(&copies, &links)), "seed {seed}");
    }
}

#[test]
fn mtb_connectivity_classes_are_strongly_connected() {
    let params = RandomParams { fragment_bias: FragmentBias::MTBTemp, ..acyclic_params(0.6) };
    for seed in 0..100 {
        let w = random_workload(seed, &params).unwrap();
        for t in &w.templates {
            let conn = template_connectivity(t);
            let m = implication_matrix(t);
            for x in 0..t.vars.len() {
                for y in 0..t.vars.len() {
                    if conn[x] == conn[y] {
                        assert!(m[x][y] && m[y][x], "seed {seed}");
                    }
                }
            }
        }
    }
}
