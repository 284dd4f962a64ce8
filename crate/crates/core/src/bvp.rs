//! The flat deformation problem on T³×[0,1].
//!
//! Unknowns are normal fields `s = s₅e₅+…+s₈e₈` stored per node; the
//! global index of component `c` at node `n` is `4n + c`, and nodes are
//! ordered site-major (`n = site·(n₄+1) + j`) so that every assembled
//! operator is block-circulant over the periodic sites.

mod checks;
mod sparse;
mod spectral;

use nalgebra::Matrix4;

use crate::cayley::{pi_e, CayleyPlane};
use crate::forms::e;
use crate::spin7::{cross2, cross3};
use crate::{Error, Result};

pub use checks::{
    adjoint_kernel_characterization, boundary_symbol_check, greens_residual, interior_symbol, p_antisymmetry_defect,
    relation_residual, AdjointReport, AnalyticField, ModeField,
};
pub use sparse::Csr;
pub use spectral::{kernel_dim, kernel_dim_with, KernelOptions, KernelReport, SpectralMethod};

pub const MIN_NODES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FlatCayleyDomain {
    /// Periodic node counts in x₁, x₂, x₃.
    pub n: [usize; 3],
    /// Intervals in x₄ (n₄+1 nodes), or periodic node count when `periodic4`.
    pub n4: usize,
    pub lengths: [f64; 4],
    /// All-periodic T⁴ variant without boundary, for symbol checks.
    pub periodic4: bool,
}

impl FlatCayleyDomain {
    /// Unit cube with `n` nodes per periodic direction and `n` intervals in x₄.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new([n, n, n], n, [1.0; 4], false)
    }

    pub fn torus4(n: usize) -> Result<Self> {
        Self::new([n, n, n], n, [1.0; 4], true)
    }

    pub fn new(n: [usize; 3], n4: usize, lengths: [f64; 4], periodic4: bool) -> Result<Self> {
        if n.iter().chain(std::iter::once(&n4)).any(|&m| m < MIN_NODES) {
            return Err(Error::InvalidArgument(format!("grid {n:?}x{n4} too small (need >= {MIN_NODES})")));
        }
        if lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidArgument("edge lengths must be positive".into()));
        }
        Ok(FlatCayleyDomain { n, n4, lengths, periodic4 })
    }

    pub fn h(&self, i: usize) -> f64 {
        if i < 3 {
            self.lengths[i] / self.n[i] as f64
        } else {
            self.lengths[3] / self.n4 as f64
        }
    }

    pub fn spacing(&self) -> [f64; 4] {
        std::array::from_fn(|i| self.h(i))
    }

    /// Nodes along x₄.
    pub fn column_len(&self) -> usize {
        if self.periodic4 {
            self.n4
        } else {
            self.n4 + 1
        }
    }

    pub fn num_sites(&self) -> usize {
        self.n.iter().product()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_sites() * self.column_len()
    }

    pub fn site(&self, i: [usize; 3]) -> usize {
        (i[2] * self.n[1] + i[1]) * self.n[0] + i[0]
    }

    pub fn site_coords(&self, s: usize) -> [usize; 3] {
        [s % self.n[0], (s / self.n[0]) % self.n[1], s / (self.n[0] * self.n[1])]
    }

    pub fn node(&self, site: usize, j: usize) -> usize {
        site * self.column_len() + j
    }

    /// `(site, j)` of a node.
    pub fn split(&self, node: usize) -> (usize, usize) {
        (node / self.column_len(), node % self.column_len())
    }

    pub fn coords(&self, node: usize) -> [f64; 4] {
        let (s, j) = self.split(node);
        let i = self.site_coords(s);
        [i[0] as f64 * self.h(0), i[1] as f64 * self.h(1), i[2] as f64 * self.h(2), j as f64 * self.h(3)]
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        !self.periodic4 && (j == 0 || j == self.n4)
    }

    /// Inward normal sign along x₄ at a boundary row: +1 at x₄=0, −1 at x₄=1.
    pub fn inward_sign(&self, j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Trapezoidal volume weight of a node.
    pub fn weight(&self, node: usize) -> f64 {
        let (_, j) = self.split(node);
        let w = self.h(0) * self.h(1) * self.h(2) * self.h(3);
        if self.is_boundary(j) {
            0.5 * w
        } else {
            w
        }
    }

    pub fn boundary_weight(&self) -> f64 {
        self.h(0) * self.h(1) * self.h(2)
    }

    pub fn shift(&self, site: usize, dir: usize, by: isize) -> usize {
        let mut i = self.site_coords(site);
        let n = self.n[dir] as isize;
        i[dir] = (i[dir] as isize + by).rem_euclid(n) as usize;
        self.site(i)
    }
}

/// Per-node ℝ⁴ values: normal components for sections of ν, E-coordinates
/// for sections of E.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    pub values: Vec<[f64; 4]>,
}

pub type NormalField = NodeField;
pub type EField = NodeField;

impl NodeField {
    pub fn zeros(dom: &FlatCayleyDomain) -> Self {
        NodeField { values: vec![[0.0; 4]; dom.num_nodes()] }
    }

    pub fn from_fn(dom: &FlatCayleyDomain, f: impl Fn([f64; 4]) -> [f64; 4]) -> Self {
        NodeField { values: (0..dom.num_nodes()).map(|n| f(dom.coords(n))).collect() }
    }

    pub fn from_flat(dom: &FlatCayleyDomain, x: &[f64]) -> Result<Self> {
        if x.len() != 4 * dom.num_nodes() {
            return Err(Error::InvalidArgument(format!("flat vector has length {}, expected {}", x.len(), 4 * dom.num_nodes())));
        }
        Ok(NodeField { values: x.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect() })
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// One line per node: index, four coordinates, four values.
    pub fn write_records<W: std::io::Write>(&self, dom: &FlatCayleyDomain, mut w: W) -> Result<()> {
        writeln!(w, "% node x1 x2 x3 x4 v1 v2 v3 v4")?;
        for (n, v) in self.values.iter().enumerate() {
            let x = dom.coords(n);
            writeln!(
                w,
                "{n} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e} {:.17e}",
                x[0], x[1], x[2], x[3], v[0], v[1], v[2], v[3]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BCSpec {
    pub k: usize,
    /// Columns are the rotated normal directions; the first k span ν_W(∂X).
    pub rotation: Option<Matrix4<f64>>,
}

impl BCSpec {
    pub fn new(k: usize) -> Result<Self> {
        Self::rotated(k, None)
    }

    pub fn rotated(k: usize, rotation: Option<Matrix4<f64>>) -> Result<Self> {
        if k > 4 {
            return Err(Error::InvalidArgument(format!("k = {k} outside 0..4")));
        }
        if let Some(r) = &rotation {
            if (r.transpose() * r - Matrix4::identity()).amax() > 1e-10 || r.determinant() < 0.0 {
                return Err(Error::InvalidArgument("scaffold rotation is not in SO(4)".into()));
            }
        }
        Ok(BCSpec { k, rotation })
    }

    pub fn r(&self) -> Matrix4<f64> {
        self.rotation.unwrap_or_else(Matrix4::identity)
    }

    /// Orthogonal projection onto K in normal coordinates.
    pub fn pi_k(&self) -> Matrix4<f64> {
        let r = self.r();
        let mut p = Matrix4::zeros();
        for c in self.k..4 {
            let col = r.column(c);
            p += col * col.transpose();
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    /// Full-operator row (D, D*, D*D in the interior).
    Interior,
    Dirichlet,
    Robin,
}

/// An assembled operator with its index maps. Row `r` refers to node
/// `row_nodes[r].0` and slot `row_nodes[r].1`; column `c` is unknown
/// `(c / 4, c % 4)`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: Csr,
    pub row_kinds: Vec<RowKind>,
    pub row_nodes: Vec<(usize, usize)>,
    pub spacing: [f64; 4],
    pub domain: FlatCayleyDomain,
}

impl LinearSystem {
    pub fn is_square(&self) -> bool {
        self.matrix.nrows == self.matrix.ncols
    }

    pub fn apply(&self, s: &NodeField) -> Vec<f64> {
        self.matrix.matvec(&s.flat())
    }

    pub fn transpose(&self) -> LinearSystem {
        assert!(self.is_square(), "transpose keeps the index maps only for square systems");
        let mut t = self.clone();
        t.matrix = self.matrix.transpose();
        t.row_kinds = vec![RowKind::Interior; t.matrix.nrows];
        t.row_nodes = (0..t.matrix.nrows).map(|r| (r / 4, r % 4)).collect();
        t
    }

    /// True when rows are laid out site-major with the same count per site
    /// as the columns, which is what the Fourier block path needs.
    pub(crate) fn site_major(&self) -> bool {
        self.is_square()
            && self.row_nodes.iter().enumerate().all(|(r, &(n, slot))| r == 4 * n + slot)
    }
}

/// `A_i` with `(A_i)_{ab} = ⟨e_i × n_b, e₁×n_a⟩`, so that `D = Σ A_i ∂_i`.
pub fn clifford_matrices() -> [Matrix4<f64>; 4] {
    let p = CayleyPlane::standard();
    std::array::from_fn(|i| {
        let mut m = Matrix4::zeros();
        for b in 0..4 {
            let c = pi_e(&cross2(&e(i + 1), &p.normal[b]), &p);
            for a in 0..4 {
                m[(a, b)] = c[a];
            }
        }
        m
    })
}

/// `C_i(u)` with `(C_i)_{ab} = ⟨u × e_i × n_b, n_a⟩`, so that
/// `P = Σ_{i tangential} C_i ∂_i`.
pub fn p_matrices(u_sign: f64) -> [Matrix4<f64>; 4] {
    let p = CayleyPlane::standard();
    let u = e(4) * u_sign;
    std::array::from_fn(|i| {
        let mut m = Matrix4::zeros();
        if i == 3 {
            return m;
        }
        for b in 0..4 {
            let v = cross3(&u, &e(i + 1), &p.normal[b]);
            for a in 0..4 {
                m[(a, b)] = p.normal[a].dot(&v);
            }
        }
        m
    })
}

/// Scalar first derivative along axis `i`: periodic central differences,
/// second-order one-sided at the interval ends.
pub fn first_derivative(dom: &FlatCayleyDomain, i: usize) -> Csr {
    let nn = dom.num_nodes();
    let mut t = Vec::with_capacity(3 * nn);
    let h = dom.h(i);
    for node in 0..nn {
        let (s, j) = dom.split(node);
        if i < 3 {
            t.push((node, dom.node(dom.shift(s, i, 1), j), 0.5 / h));
            t.push((node, dom.node(dom.shift(s, i, -1), j), -0.5 / h));
        } else if dom.periodic4 {
            let m = dom.n4;
            t.push((node, dom.node(s, (j + 1) % m), 0.5 / h));
            t.push((node, dom.node(s, (j + m - 1) % m), -0.5 / h));
        } else if j == 0 {
            t.push((node, dom.node(s, 0), -1.5 / h));
            t.push((node, dom.node(s, 1), 2.0 / h));
            t.push((node, dom.node(s, 2), -0.5 / h));
        } else if j == dom.n4 {
            t.push((node, dom.node(s, j), 1.5 / h));
            t.push((node, dom.node(s, j - 1), -2.0 / h));
            t.push((node, dom.node(s, j - 2), 0.5 / h));
        } else {
            t.push((node, dom.node(s, j + 1), 0.5 / h));
            t.push((node, dom.node(s, j - 1), -0.5 / h));
        }
    }
    Csr::from_triplets(nn, nn, t)
}

/// Matrix-free version of [`first_derivative`] applied to every component.
pub fn derivative(dom: &FlatCayleyDomain, f: &NodeField, i: usize) -> NodeField {
    let h = dom.h(i);
    let mut out = vec![[0.0; 4]; dom.num_nodes()];
    let acc = |o: &mut [f64; 4], node: usize, w: f64| {
        for c in 0..4 {
            o[c] += w * f.values[node][c];
        }
    };
    for (node, o) in out.iter_mut().enumerate() {
        let (s, j) = dom.split(node);
        if i < 3 {
            acc(o, dom.node(dom.shift(s, i, 1), j), 0.5 / h);
            acc(o, dom.node(dom.shift(s, i, -1), j), -0.5 / h);
        } else if dom.periodic4 {
            let m = dom.n4;
            acc(o, dom.node(s, (j + 1) % m), 0.5 / h);
            acc(o, dom.node(s, (j + m - 1) % m), -0.5 / h);
        } else if j == 0 {
            acc(o, dom.node(s, 0), -1.5 / h);
            acc(o, dom.node(s, 1), 2.0 / h);
            acc(o, dom.node(s, 2), -0.5 / h);
        } else if j == dom.n4 {
            acc(o, dom.node(s, j), 1.5 / h);
            acc(o, dom.node(s, j - 1), -2.0 / h);
            acc(o, dom.node(s, j - 2), 0.5 / h);
        } else {
            acc(o, dom.node(s, j + 1), 0.5 / h);
            acc(o, dom.node(s, j - 1), -0.5 / h);
        }
    }
    NodeField { values: out }
}

fn apply_first_order(dom: &FlatCayleyDomain, blocks: &[Matrix4<f64>; 4], f: &NodeField) -> NodeField {
    let mut out = vec![[0.0; 4]; dom.num_nodes()];
    for (i, b) in blocks.iter().enumerate() {
        let d = derivative(dom, f, i);
        for (o, v) in out.iter_mut().zip(&d.values) {
            let w = b * nalgebra::Vector4::from(*v);
            for c in 0..4 {
                o[c] += w[c];
            }
        }
    }
    NodeField { values: out }
}

/// Matrix-free `D s`.
pub fn apply_d(dom: &FlatCayleyDomain, s: &NormalField) -> EField {
    apply_first_order(dom, &clifford_matrices(), s)
}

/// Matrix-free printed-pattern adjoint `Σ A_iᵀ ∂_i t`.
pub fn apply_dstar(dom: &FlatCayleyDomain, t: &EField) -> NormalField {
    apply_first_order(dom, &clifford_matrices().map(|m| m.transpose()), t)
}

/// Matrix-free L²-formal adjoint `−Σ A_iᵀ ∂_i t`.
pub fn apply_d_adjoint(dom: &FlatCayleyDomain, t: &EField) -> NormalField {
    apply_first_order(dom, &clifford_matrices().map(|m| -m.transpose()), t)
}

fn all_rows(dom: &FlatCayleyDomain, m: Csr) -> LinearSystem {
    let n = m.nrows;
    LinearSystem {
        matrix: m,
        row_kinds: vec![RowKind::Interior; n],
        row_nodes: (0..n).map(|r| (r / 4, r % 4)).collect(),
        spacing: dom.spacing(),
        domain: dom.clone(),
    }
}

fn first_order(dom: &FlatCayleyDomain, blocks: &[Matrix4<f64>; 4], sign: f64) -> Csr {
    let mut acc: Option<Csr> = None;
    for (i, b) in blocks.iter().enumerate() {
        let term = first_derivative(dom, i).kron_block(&(b * sign));
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term),
        });
    }
    acc.expect("four directions")
}

/// `D s = Σ_i e_i × ∂_i s`, from normal fields to E-fields, on every node.
pub fn assemble_d(dom: &FlatCayleyDomain) -> Result<LinearSystem> {
    Ok(all_rows(dom, first_order(dom, &clifford_matrices(), 1.0)))
}

/// The adjoint with the transposed sign pattern, `Σ A_iᵀ ∂_i`; composed
/// with [`assemble_d`] it gives `+Δ` per component.
pub fn assemble_dstar(dom: &FlatCayleyDomain) -> Result<LinearSystem> {
    let a = clifford_matrices().map(|m| m.transpose());
    Ok(all_rows(dom, first_order(dom, &a, 1.0)))
}

/// The L²-formal adjoint `−Σ A_iᵀ ∂_i` used in Green's formula.
pub fn assemble_d_adjoint(dom: &FlatCayleyDomain) -> Result<LinearSystem> {
    let a = clifford_matrices().map(|m| m.transpose());
    Ok(all_rows(dom, first_order(dom, &a, -1.0)))
}

fn laplacian_triplets(dom: &FlatCayleyDomain, node: usize, row: usize, t: &mut Vec<(usize, usize, f64)>) {
    let (s, j) = dom.split(node);
    let mut centre = 0.0;
    for i in 0..3 {
        let w = 1.0 / (dom.h(i) * dom.h(i));
        for by in [-1isize, 1] {
            let nb = dom.node(dom.shift(s, i, by), j);
            for c in 0..4 {
                t.push((row + c, 4 * nb + c, w));
            }
        }
        centre -= 2.0 * w;
    }
    let w = 1.0 / (dom.h(3) * dom.h(3));
    let m = dom.column_len();
    for nj in [(j + m - 1) % m, (j + 1) % m] {
        let nb = dom.node(s, nj);
        for c in 0..4 {
            t.push((row + c, 4 * nb + c, w));
        }
    }
    centre -= 2.0 * w;
    for c in 0..4 {
        t.push((row + c, 4 * node + c, centre));
    }
}

/// Direct 9-point Laplacian per component on interior nodes (all nodes on
/// the T⁴ variant). Rows are the interior nodes in order.
pub fn assemble_dstar_d(dom: &FlatCayleyDomain) -> Result<LinearSystem> {
    let nodes: Vec<usize> = (0..dom.num_nodes()).filter(|&n| !dom.is_boundary(dom.split(n).1)).collect();
    let mut t = Vec::new();
    let mut row_nodes = Vec::with_capacity(4 * nodes.len());
    for (r, &node) in nodes.iter().enumerate() {
        laplacian_triplets(dom, node, 4 * r, &mut t);
        row_nodes.extend((0..4).map(|c| (node, c)));
    }
    let matrix = Csr::from_triplets(4 * nodes.len(), 4 * dom.num_nodes(), t);
    Ok(LinearSystem {
        row_kinds: vec![RowKind::Interior; matrix.nrows],
        matrix,
        row_nodes,
        spacing: dom.spacing(),
        domain: dom.clone(),
    })
}

/// `D* ∘ D` through the two first-order assemblies (wide stencil).
pub fn dstar_d_product(dom: &FlatCayleyDomain) -> Result<LinearSystem> {
    let d = assemble_d(dom)?;
    let ds = assemble_dstar(dom)?;
    Ok(all_rows(dom, ds.matrix.matmul(&d.matrix)))
}

/// Boundary operator `P s = Σ_{i≤3} u × e_i × ∂_i s`, one 4-row block per
/// boundary node (x₄=0 sites first, then x₄=1), acting on all unknowns.
pub fn assemble_p(dom: &FlatCayleyDomain, _bc: &BCSpec) -> Result<Csr> {
    if dom.periodic4 {
        return Err(Error::InvalidArgument("the all-periodic domain has no boundary".into()));
    }
    let ns = dom.num_sites();
    let mut t = Vec::new();
    for (side, j) in [0, dom.n4].into_iter().enumerate() {
        let c = p_matrices(dom.inward_sign(j));
        for s in 0..ns {
            let row = 4 * (side * ns + s);
            push_tangential(dom, s, j, &c, &Matrix4::identity(), &Matrix4::identity(), row, &mut t);
        }
    }
    Ok(Csr::from_triplets(8 * ns, 4 * dom.num_nodes(), t))
}

/// Rows `left · Σ_i C_i ∂_i (right · s)` at boundary node `(s, j)`.
#[allow(clippy::too_many_arguments)]
fn push_tangential(
    dom: &FlatCayleyDomain,
    s: usize,
    j: usize,
    c: &[Matrix4<f64>; 4],
    left: &Matrix4<f64>,
    right: &Matrix4<f64>,
    row: usize,
    t: &mut Vec<(usize, usize, f64)>,
) {
    for i in 0..3 {
        let m = left * c[i] * right;
        let h = dom.h(i);
        for (by, w) in [(1isize, 0.5 / h), (-1, -0.5 / h)] {
            let nb = dom.node(dom.shift(s, i, by), j);
            for a in 0..4 {
                for b in 0..4 {
                    if m[(a, b)] != 0.0 {
                        t.push((row + a, 4 * nb + b, w * m[(a, b)]));
                    }
                }
            }
        }
    }
}

/// The square boundary problem: `D*D s = 0` inside, `π_K s = 0` and
/// `π_ν(∂_u s + P π_K s) = 0` on both boundary components.
pub fn assemble_bvp(dom: &FlatCayleyDomain, bc: &BCSpec) -> Result<LinearSystem> {
    if dom.periodic4 {
        return Err(Error::InvalidArgument("the boundary problem needs the interval direction".into()));
    }
    let nn = dom.num_nodes();
    let r = bc.r();
    let rt = r.transpose();
    let pk = bc.pi_k();
    let h4 = dom.h(3);
    let mut t = Vec::new();
    let mut row_kinds = Vec::with_capacity(4 * nn);
    let mut row_nodes = Vec::with_capacity(4 * nn);
    for node in 0..nn {
        let (s, j) = dom.split(node);
        let row = 4 * node;
        row_nodes.extend((0..4).map(|c| (node, c)));
        if !dom.is_boundary(j) {
            laplacian_triplets(dom, node, row, &mut t);
            row_kinds.extend([RowKind::Interior; 4]);
            continue;
        }
        let inward: [usize; 3] = if j == 0 { [0, 1, 2] } else { [j, j - 1, j - 2] };
        // ∂_u along the inward normal, same stencil at both ends
        let du = [-1.5 / h4, 2.0 / h4, -0.5 / h4];
        let mut left_nu = Matrix4::zeros();
        for c in 0..4 {
            if c < bc.k {
                row_kinds.push(RowKind::Robin);
                for (jj, w) in inward.iter().zip(du) {
                    let nb = dom.node(s, *jj);
                    for b in 0..4 {
                        if rt[(c, b)] != 0.0 {
                            t.push((row + c, 4 * nb + b, w * rt[(c, b)]));
                        }
                    }
                }
                left_nu.set_row(c, &rt.row(c));
            } else {
                row_kinds.push(RowKind::Dirichlet);
                for b in 0..4 {
                    if rt[(c, b)] != 0.0 {
                        t.push((row + c, 4 * node + b, rt[(c, b)]));
                    }
                }
            }
        }
        if bc.k > 0 && bc.k < 4 {
            push_tangential(dom, s, j, &p_matrices(dom.inward_sign(j)), &left_nu, &pk, row, &mut t);
        }
    }
    Ok(LinearSystem {
        matrix: Csr::from_triplets(4 * nn, 4 * nn, t),
        row_kinds,
        row_nodes,
        spacing: dom.spacing(),
        domain: dom.clone(),
    })
}
