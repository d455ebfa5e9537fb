//! Directed network topology and its algebraic transfer matrices.
//!
//! Signals live on edges. With `s` the vector of edge signals,
//! `s = B x + F s`, so `s = (I - F)^{-1} B x = G B x` and the sinks observe
//! `z = A G B x + n = M x + n`. `F[e', e]` carries the coefficient from
//! edge `e` into edge `e'`, which is only allowed when `head(e) = tail(e')`.
//! Edges are kept in topological order of their tail vertex, which makes
//! `F` strictly lower triangular for acyclic networks.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{inverse_conditioned, max_abs_diff, CMat, C64, ZERO};

/// Condition-number ceiling for inverting `I - F`.
pub const IF_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub label: String,
    pub tail: usize,
    pub head: usize,
    /// `false` once the edge has been removed; the slot keeps its index so
    /// every matrix keeps its shape.
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    sources: Vec<usize>,
    sinks: Vec<usize>,
    acyclic: bool,
}

impl NetworkTopology {
    /// `edges` are `(label, tail, head)` triples referring to vertex names.
    pub fn new<S: AsRef<str>>(
        vertices: &[S],
        edges: &[(S, S, S)],
        sources: &[S],
        sinks: &[S],
    ) -> Result<Self> {
        let vertices: Vec<String> = vertices.iter().map(|v| v.as_ref().to_string()).collect();
        for (i, v) in vertices.iter().enumerate() {
            if vertices[..i].contains(v) {
                return Err(Error::InvalidTopology(format!("duplicate vertex {v}")));
            }
        }
        let lookup = |name: &str| {
            vertices
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| Error::UnknownVertex(name.to_string()))
        };
        let mut raw = Vec::with_capacity(edges.len());
        for (label, tail, head) in edges {
            let label = label.as_ref().to_string();
            if raw.iter().any(|e: &Edge| e.label == label) {
                return Err(Error::InvalidTopology(format!("duplicate edge {label}")));
            }
            raw.push(Edge {
                label,
                tail: lookup(tail.as_ref())?,
                head: lookup(head.as_ref())?,
                connected: true,
            });
        }
        let sources = sources
            .iter()
            .map(|s| lookup(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let sinks = sinks
            .iter()
            .map(|s| lookup(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;

        let order = topological_order(vertices.len(), &raw);
        let acyclic = order.is_some();
        if let Some(order) = order {
            let mut rank = vec![0usize; vertices.len()];
            for (r, &v) in order.iter().enumerate() {
                rank[v] = r;
            }
            // stable: ties keep insertion order
            raw.sort_by_key(|e| rank[e.tail]);
        }
        Ok(Self {
            vertices,
            edges: raw,
            sources,
            sinks,
            acyclic,
        })
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn sinks(&self) -> &[usize] {
        &self.sinks
    }

    pub fn is_acyclic(&self) -> bool {
        self.acyclic
    }

    pub fn edge_index(&self, label: &str) -> Result<usize> {
        self.edges
            .iter()
            .position(|e| e.label == label)
            .ok_or_else(|| Error::UnknownEdge(label.to_string()))
    }

    pub fn edge_label(&self, index: usize) -> &str {
        &self.edges[index].label
    }

    /// Edge slots leaving a source vertex, in edge order.
    pub fn source_edges(&self) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| self.sources.contains(&self.edges[e].tail))
            .collect()
    }

    /// Edge slots entering a sink vertex, in edge order.
    pub fn sink_edges(&self) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&e| self.sinks.contains(&self.edges[e].head))
            .collect()
    }

    /// Whether edge `from` may feed edge `to`.
    pub fn adjacent(&self, from: usize, to: usize) -> bool {
        let (a, b) = (&self.edges[from], &self.edges[to]);
        a.connected && b.connected && a.head == b.tail
    }

    fn check_edge(&self, e: usize) -> Result<()> {
        if e < self.edges.len() {
            Ok(())
        } else {
            Err(Error::UnknownEdge(format!("#{e}")))
        }
    }
}

/// Kahn's algorithm, lowest vertex index first among ready vertices.
fn topological_order(n: usize, edges: &[Edge]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    for e in edges {
        indegree[e.head] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(pos) = ready.iter().enumerate().min_by_key(|(_, &v)| v).map(|(i, _)| i) {
        let v = ready.swap_remove(pos);
        order.push(v);
        for e in edges.iter().filter(|e| e.tail == v) {
            indegree[e.head] -= 1;
            if indegree[e.head] == 0 {
                ready.push(e.head);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Local coding coefficients keyed by edge index.
///
/// * `alpha[(input, edge)]` feeds source input `input` onto `edge` (matrix B)
/// * `beta[(from, to)]` feeds edge `from` into edge `to` (matrix F)
/// * `gamma[(output, edge)]` feeds `edge` into sink output `output` (matrix A)
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodingCoefficients {
    pub alpha: BTreeMap<(usize, usize), C64>,
    pub beta: BTreeMap<(usize, usize), C64>,
    pub gamma: BTreeMap<(usize, usize), C64>,
}

impl CodingCoefficients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_alpha(&mut self, input: usize, edge: usize, v: C64) -> &mut Self {
        self.alpha.insert((input, edge), v);
        self
    }

    pub fn set_beta(&mut self, from: usize, to: usize, v: C64) -> &mut Self {
        self.beta.insert((from, to), v);
        self
    }

    pub fn set_gamma(&mut self, output: usize, edge: usize, v: C64) -> &mut Self {
        self.gamma.insert((output, edge), v);
        self
    }

    /// Drops every coefficient touching `edge`.
    pub fn without_edge(&self, edge: usize) -> Self {
        Self {
            alpha: self.alpha.iter().filter(|((_, e), _)| *e != edge).map(|(k, v)| (*k, *v)).collect(),
            beta: self
                .beta
                .iter()
                .filter(|((a, b), _)| *a != edge && *b != edge)
                .map(|(k, v)| (*k, *v))
                .collect(),
            gamma: self.gamma.iter().filter(|((_, e), _)| *e != edge).map(|(k, v)| (*k, *v)).collect(),
        }
    }

    /// Checks every nonzero coefficient against the topology's sparsity
    /// pattern and the port counts.
    pub fn validate(&self, topo: &NetworkTopology, n_in: usize, n_out: usize) -> Result<()> {
        for (&(i, e), v) in &self.alpha {
            topo.check_edge(e)?;
            let edge = &topo.edges[e];
            if i >= n_in {
                return Err(Error::SparsityViolation(format!("alpha(input {i}, {}): input out of range", edge.label)));
            }
            if *v != ZERO && !(edge.connected && topo.sources.contains(&edge.tail)) {
                return Err(Error::SparsityViolation(format!("alpha(input {i}, {})", edge.label)));
            }
        }
        for (&(a, b), v) in &self.beta {
            topo.check_edge(a)?;
            topo.check_edge(b)?;
            if *v != ZERO && !topo.adjacent(a, b) {
                return Err(Error::SparsityViolation(format!(
                    "beta({}, {})",
                    topo.edges[a].label, topo.edges[b].label
                )));
            }
        }
        for (&(o, e), v) in &self.gamma {
            topo.check_edge(e)?;
            let edge = &topo.edges[e];
            if o >= n_out {
                return Err(Error::SparsityViolation(format!("gamma({}, output {o}): output out of range", edge.label)));
            }
            if *v != ZERO && !(edge.connected && topo.sinks.contains(&edge.head)) {
                return Err(Error::SparsityViolation(format!("gamma({}, output {o})", edge.label)));
            }
        }
        Ok(())
    }
}

/// Distribution of seeded random coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomCoefficients {
    /// Real, uniform on (-1, 1).
    UniformReal,
    /// Circular complex Gaussian with unit variance.
    ComplexNormal,
}

/// Draws every structurally allowed coefficient: alpha for each
/// source-outgoing edge and input, beta for each adjacent edge pair, gamma
/// for each sink-incoming edge and output, in that order with edges in
/// index order. Draw `k` uses stream `(seed, k)`.
pub fn random_coefficients(
    topo: &NetworkTopology,
    n_in: usize,
    n_out: usize,
    seed: u64,
    kind: RandomCoefficients,
) -> CodingCoefficients {
    let factory = crate::rng::StreamFactory::new(seed);
    let mut k = 0u64;
    let mut next = || {
        let mut s = factory.stream(k);
        k += 1;
        match kind {
            RandomCoefficients::UniformReal => C64::new(2.0 * s.uniform() - 1.0, 0.0),
            RandomCoefficients::ComplexNormal => s.complex_normal(),
        }
    };
    let mut c = CodingCoefficients::new();
    let live = |e: &usize| topo.edges[*e].connected;
    for e in topo.source_edges().into_iter().filter(live) {
        for i in 0..n_in {
            c.set_alpha(i, e, next());
        }
    }
    let n = topo.edge_count();
    for a in 0..n {
        for b in 0..n {
            if topo.adjacent(a, b) {
                c.set_beta(a, b, next());
            }
        }
    }
    for e in topo.sink_edges().into_iter().filter(live) {
        for o in 0..n_out {
            c.set_gamma(o, e, next());
        }
    }
    c
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Accept cyclic topologies whose feedback matrix has spectral radius < 1.
    pub allow_cyclic: bool,
}

/// Full edge-indexed matrices of a network. `M` is always the computed
/// product `A G B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    b: CMat,
    f: CMat,
    g: CMat,
    a: CMat,
    m: CMat,
}

impl SystemMatrices {
    pub fn b(&self) -> &CMat {
        &self.b
    }
    pub fn f(&self) -> &CMat {
        &self.f
    }
    pub fn g(&self) -> &CMat {
        &self.g
    }
    pub fn a(&self) -> &CMat {
        &self.a
    }
    pub fn m(&self) -> &CMat {
        &self.m
    }
    pub fn n_in(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_out(&self) -> usize {
        self.a.nrows()
    }
    pub fn edge_count(&self) -> usize {
        self.f.nrows()
    }

    /// `max(|G(I-F) - I|, |(I-F)G - I|)` elementwise.
    pub fn inverse_defect(&self) -> f64 {
        let n = self.edge_count();
        let id = CMat::identity(n, n);
        let i_f = &id - &self.f;
        max_abs_diff(&(&self.g * &i_f), &id).max(max_abs_diff(&(&i_f * &self.g), &id))
    }

    /// `sum_{k < |E|} F^k`, which equals `G` for acyclic networks.
    pub fn neumann_sum(&self) -> CMat {
        let n = self.edge_count();
        let mut term = CMat::identity(n, n);
        let mut sum = term.clone();
        for _ in 1..n {
            term = &self.f * &term;
            sum += &term;
        }
        sum
    }

    /// Structural nilpotency: `F` strictly lower triangular.
    pub fn feedback_is_strictly_lower(&self) -> bool {
        let n = self.edge_count();
        (0..n).all(|r| (r..n).all(|c| self.f[(r, c)] == ZERO))
    }

    pub fn full_factors(&self) -> Factors {
        Factors::new(self.a.clone(), self.g.clone(), self.b.clone(), Form::Full)
            .expect("system matrices are shape-consistent")
    }
}

pub fn build_coefficient_matrices(
    topo: &NetworkTopology,
    coeffs: &CodingCoefficients,
    n_in: usize,
    n_out: usize,
    options: BuildOptions,
) -> Result<SystemMatrices> {
    coeffs.validate(topo, n_in, n_out)?;
    let ne = topo.edge_count();
    let mut b = CMat::zeros(ne, n_in);
    for (&(i, e), &v) in &coeffs.alpha {
        b[(e, i)] = v;
    }
    let mut f = CMat::zeros(ne, ne);
    for (&(from, to), &v) in &coeffs.beta {
        f[(to, from)] = v;
    }
    let mut a = CMat::zeros(n_out, ne);
    for (&(o, e), &v) in &coeffs.gamma {
        a[(o, e)] = v;
    }

    if !topo.is_acyclic() {
        if !options.allow_cyclic {
            return Err(Error::CyclicTopology);
        }
        let rho = crate::linalg::spectral_radius(&f);
        if !(rho < 1.0) {
            return Err(Error::DivergentFeedback(rho));
        }
    }
    let i_f = CMat::identity(ne, ne) - &f;
    let (g, _) = inverse_conditioned(&i_f, IF_CONDITION_LIMIT).map_err(Error::SingularIF)?;
    let m = &a * &g * &b;
    Ok(SystemMatrices { b, f, g, a, m })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Form {
    /// Edge-indexed `A`, `G`, `B`.
    Full,
    /// Restricted to sink-incoming rows / source-outgoing columns of `G`.
    Compact,
}

/// A factorization `M = A G B` with consistent shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Factors {
    pub a: CMat,
    pub g: CMat,
    pub b: CMat,
    pub form: Form,
}

impl Factors {
    pub fn new(a: CMat, g: CMat, b: CMat, form: Form) -> Result<Self> {
        if a.ncols() != g.nrows() || g.ncols() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A {}x{}, G {}x{}, B {}x{}",
                a.nrows(),
                a.ncols(),
                g.nrows(),
                g.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, g, b, form })
    }

    /// All-identity factors of size `n` (the trivial network).
    pub fn identity(n: usize) -> Self {
        let id = CMat::identity(n, n);
        Self {
            a: id.clone(),
            g: id.clone(),
            b: id,
            form: Form::Compact,
        }
    }

    pub fn system(&self) -> CMat {
        &self.a * &self.g * &self.b
    }

    pub fn n_in(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.a.nrows()
    }
}

/// Compact factors plus the edge slots they were restricted to.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactForm {
    pub factors: Factors,
    /// Columns of `A_c` / rows of `G_c`.
    pub sink_edges: Vec<usize>,
    /// Columns of `G_c` / rows of `B_c`.
    pub source_edges: Vec<usize>,
}

pub fn compact_form(sys: &SystemMatrices, topo: &NetworkTopology) -> Result<CompactForm> {
    if sys.edge_count() != topo.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "system has {} edges, topology {}",
            sys.edge_count(),
            topo.edge_count()
        )));
    }
    let sink_edges = topo.sink_edges();
    let source_edges = topo.source_edges();
    let a = DMatrix::from_fn(sys.n_out(), sink_edges.len(), |o, j| sys.a[(o, sink_edges[j])]);
    let g = DMatrix::from_fn(sink_edges.len(), source_edges.len(), |i, j| {
        sys.g[(sink_edges[i], source_edges[j])]
    });
    let b = DMatrix::from_fn(source_edges.len(), sys.n_in(), |i, k| sys.b[(source_edges[i], k)]);
    Ok(CompactForm {
        factors: Factors::new(a, g, b, Form::Compact)?,
        sink_edges,
        source_edges,
    })
}

/// Disconnects `edge`: the slot stays (indices and shapes are stable) but it
/// loses its adjacency and every coefficient referencing it. Inputs are left
/// untouched.
pub fn remove_edge(
    topo: &NetworkTopology,
    coeffs: &CodingCoefficients,
    edge: &str,
) -> Result<(NetworkTopology, CodingCoefficients)> {
    let e = topo.edge_index(edge)?;
    let mut t = topo.clone();
    t.edges[e].connected = false;
    Ok((t, coeffs.without_edge(e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real as unit;

    fn figure1() -> NetworkTopology {
        NetworkTopology::new(
            &["v1", "v2", "v3", "v4"],
            &[
                ("e1", "v1", "v2"),
                ("e2", "v1", "v3"),
                ("e3", "v2", "v3"),
                ("e4", "v2", "v4"),
                ("e5", "v3", "v4"),
            ],
            &["v1"],
            &["v4"],
        )
        .unwrap()
    }

    fn figure1_coeffs(t: &NetworkTopology, vals: [f64; 12]) -> CodingCoefficients {
        let e = |l: &str| t.edge_index(l).unwrap();
        let mut c = CodingCoefficients::new();
        c.set_alpha(0, e("e1"), unit(vals[0]))
            .set_alpha(1, e("e1"), unit(vals[1]))
            .set_alpha(0, e("e2"), unit(vals[2]))
            .set_alpha(1, e("e2"), unit(vals[3]))
            .set_beta(e("e1"), e("e4"), unit(vals[4]))
            .set_beta(e("e1"), e("e3"), unit(vals[5]))
            .set_beta(e("e3"), e("e5"), unit(vals[6]))
            .set_beta(e("e2"), e("e5"), unit(vals[7]))
            .set_gamma(0, e("e4"), unit(vals[8]))
            .set_gamma(1, e("e4"), unit(vals[9]))
            .set_gamma(0, e("e5"), unit(vals[10]))
            .set_gamma(1, e("e5"), unit(vals[11]));
        c
    }

    #[test]
    fn zero_feedback_gives_identity_topology_matrix() {
        let t = NetworkTopology::new(&["s", "t"], &[("a", "s", "t"), ("b", "s", "t")], &["s"], &["t"]).unwrap();
        let mut c = CodingCoefficients::new();
        c.set_alpha(0, 0, C64::new(1.0, 2.0))
            .set_alpha(0, 1, unit(3.0))
            .set_gamma(0, 0, unit(-1.0))
            .set_gamma(1, 1, C64::new(0.0, 1.0));
        let sys = build_coefficient_matrices(&t, &c, 1, 2, BuildOptions::default()).unwrap();
        assert_eq!(sys.g(), &CMat::identity(2, 2));
        assert!(max_abs_diff(sys.m(), &(sys.a() * sys.b())) == 0.0);
        let cf = compact_form(&sys, &t).unwrap();
        assert_eq!(cf.factors.a, *sys.a());
        assert_eq!(cf.factors.g, *sys.g());
        assert_eq!(cf.factors.b, *sys.b());
    }

    #[test]
    fn two_edge_chain_is_nilpotent_of_order_two() {
        let t = NetworkTopology::new(&["s", "r", "t"], &[("e1", "r", "t"), ("e0", "s", "r")], &["s"], &["t"]).unwrap();
        // reordered topologically: e0 first
        assert_eq!(t.edge_label(0), "e0");
        let b = C64::new(0.7, -0.2);
        let mut c = CodingCoefficients::new();
        c.set_beta(0, 1, b);
        let sys = build_coefficient_matrices(&t, &c, 1, 1, BuildOptions::default()).unwrap();
        let expected = CMat::identity(2, 2) + sys.f();
        assert_eq!(sys.g(), &expected);
        assert_eq!(sys.g()[(1, 0)], b);
        assert!(sys.feedback_is_strictly_lower());
        assert!((sys.f() * sys.f()).iter().all(|v| *v == ZERO));
    }

    #[test]
    fn figure1_topology_block() {
        let t = figure1();
        let v = [0.3, -0.4, 0.5, 0.6, 1.1, 1.3, -0.7, 0.9, 0.2, 0.8, -1.2, 0.4];
        let c = figure1_coeffs(&t, v);
        let sys = build_coefficient_matrices(&t, &c, 2, 2, BuildOptions::default()).unwrap();
        let cf = compact_form(&sys, &t).unwrap();
        let g = &cf.factors.g;
        let (b14, b13, b35, b25) = (v[4], v[5], v[6], v[7]);
        assert!((g[(0, 0)] - unit(b14)).norm() < 1e-15);
        assert_eq!(g[(0, 1)], ZERO);
        assert!((g[(1, 0)] - unit(b13 * b35)).norm() < 1e-15);
        assert!((g[(1, 1)] - unit(b25)).norm() < 1e-15);
        assert!(sys.inverse_defect() < 1e-12);
        assert!(max_abs_diff(&cf.factors.system(), sys.m()) < 1e-12);
    }

    #[test]
    fn figure1_all_ones_compact() {
        let t = figure1();
        let sys = build_coefficient_matrices(&t, &figure1_coeffs(&t, [1.0; 12]), 2, 2, BuildOptions::default()).unwrap();
        let g = compact_form(&sys, &t).unwrap().factors.g;
        assert_eq!(g, crate::linalg::real_matrix(&[&[1.0, 0.0], &[1.0, 1.0]]));
    }

    #[test]
    fn edge_removal_variants() {
        let t = figure1();
        let v = [0.3, -0.4, 0.5, 0.6, 1.1, 1.3, -0.7, 0.9, 0.2, 0.8, -1.2, 0.4];
        let c = figure1_coeffs(&t, v);
        let (t3, c3) = remove_edge(&t, &c, "e3").unwrap();
        let g3 = compact_form(&build_coefficient_matrices(&t3, &c3, 2, 2, BuildOptions::default()).unwrap(), &t3)
            .unwrap()
            .factors
            .g;
        assert_eq!(g3, crate::linalg::real_matrix(&[&[v[4], 0.0], &[0.0, v[7]]]));
        // original untouched
        assert!(t.edges().iter().all(|e| e.connected));
        assert_eq!(c.beta.len(), 4);

        let (t2, c2) = remove_edge(&t, &c, "e2").unwrap();
        let (t25, c25) = remove_edge(&t2, &c2, "e5").unwrap();
        let g25 = compact_form(&build_coefficient_matrices(&t25, &c25, 2, 2, BuildOptions::default()).unwrap(), &t25)
            .unwrap()
            .factors
            .g;
        assert_eq!(g25, crate::linalg::real_matrix(&[&[v[4], 0.0], &[0.0, 0.0]]));
        assert_eq!(remove_edge(&t, &c, "e9").unwrap_err(), Error::UnknownEdge("e9".into()));
    }

    #[test]
    fn removing_inert_edge_keeps_system_matrix() {
        let t = NetworkTopology::new(
            &["s", "r", "t"],
            &[("a", "s", "r"), ("b", "r", "t"), ("c", "s", "t")],
            &["s"],
            &["t"],
        )
        .unwrap();
        let mut c = CodingCoefficients::new();
        let (a, b) = (t.edge_index("a").unwrap(), t.edge_index("b").unwrap());
        c.set_alpha(0, a, unit(1.5)).set_beta(a, b, unit(2.0)).set_gamma(0, b, unit(0.5));
        let before = build_coefficient_matrices(&t, &c, 1, 1, BuildOptions::default()).unwrap();
        let (t2, c2) = remove_edge(&t, &c, "c").unwrap();
        let after = build_coefficient_matrices(&t2, &c2, 1, 1, BuildOptions::default()).unwrap();
        assert_eq!(before.m(), after.m());
    }

    #[test]
    fn random_coefficients_respect_sparsity() {
        let t = figure1();
        let c = random_coefficients(&t, 2, 2, 42, RandomCoefficients::UniformReal);
        c.validate(&t, 2, 2).unwrap();
        assert_eq!((c.alpha.len(), c.beta.len(), c.gamma.len()), (4, 4, 4));
        assert!(c.beta.values().all(|v| v.im == 0.0 && v.re.abs() < 1.0));
        assert_eq!(c, random_coefficients(&t, 2, 2, 42, RandomCoefficients::UniformReal));
        let (t2, _) = remove_edge(&t, &c, "e2").unwrap();
        let c2 = random_coefficients(&t2, 2, 2, 1, RandomCoefficients::ComplexNormal);
        c2.validate(&t2, 2, 2).unwrap();
        assert_eq!(c2.alpha.len(), 2);
    }

    #[test]
    fn sparsity_violations_are_rejected() {
        let t = figure1();
        let mut c = CodingCoefficients::new();
        c.set_beta(t.edge_index("e1").unwrap(), t.edge_index("e5").unwrap(), unit(1.0));
        assert!(matches!(
            build_coefficient_matrices(&t, &c, 2, 2, BuildOptions::default()),
            Err(Error::SparsityViolation(_))
        ));
        let mut c = CodingCoefficients::new();
        c.set_alpha(0, t.edge_index("e3").unwrap(), unit(1.0));
        assert!(matches!(
            build_coefficient_matrices(&t, &c, 2, 2, BuildOptions::default()),
            Err(Error::SparsityViolation(_))
        ));
        let mut c = CodingCoefficients::new();
        c.set_gamma(0, t.edge_index("e1").unwrap(), unit(1.0));
        assert!(matches!(
            build_coefficient_matrices(&t, &c, 2, 2, BuildOptions::default()),
            Err(Error::SparsityViolation(_))
        ));
    }

    #[test]
    fn cycles_need_opt_in_and_contraction() {
        let t = NetworkTopology::new(
            &["s", "u", "w", "t"],
            &[("in", "s", "u"), ("uw", "u", "w"), ("wu", "w", "u"), ("out", "w", "t")],
            &["s"],
            &["t"],
        )
        .unwrap();
        assert!(!t.is_acyclic());
        let e = |l: &str| t.edge_index(l).unwrap();
        let mut c = CodingCoefficients::new();
        c.set_alpha(0, e("in"), unit(1.0))
            .set_beta(e("in"), e("uw"), unit(1.0))
            .set_beta(e("uw"), e("wu"), unit(0.5))
            .set_beta(e("wu"), e("uw"), unit(0.5))
            .set_beta(e("uw"), e("out"), unit(1.0))
            .set_gamma(0, e("out"), unit(1.0));
        assert_eq!(
            build_coefficient_matrices(&t, &c, 1, 1, BuildOptions::default()).unwrap_err(),
            Error::CyclicTopology
        );
        let sys = build_coefficient_matrices(&t, &c, 1, 1, BuildOptions { allow_cyclic: true }).unwrap();
        // loop gain 0.25: 1 / (1 - 0.25)
        assert!((sys.m()[(0, 0)] - unit(4.0 / 3.0)).norm() < 1e-12);
        assert!(sys.inverse_defect() < 1e-12);

        c.set_beta(e("wu"), e("uw"), unit(3.0));
        assert!(matches!(
            build_coefficient_matrices(&t, &c, 1, 1, BuildOptions { allow_cyclic: true }),
            Err(Error::DivergentFeedback(_))
        ));
    }

    #[test]
    fn singular_i_minus_f_is_reported() {
        // loop gain exactly 1 is caught by the spectral radius; force a
        // near-singular acyclic case with a huge coefficient instead
        let t = NetworkTopology::new(&["s", "r", "t"], &[("a", "s", "r"), ("b", "r", "t")], &["s"], &["t"]).unwrap();
        let mut c = CodingCoefficients::new();
        c.set_beta(0, 1, unit(1e13));
        assert!(matches!(
            build_coefficient_matrices(&t, &c, 1, 1, BuildOptions::default()),
            Err(Error::SingularIF(_))
        ));
    }
}
