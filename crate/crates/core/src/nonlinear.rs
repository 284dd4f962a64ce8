//! Nonlinear residuals for graphs `x ↦ (x, s(x))` over the flat Cayley
//! plane ℝ⁴ = span(e₁..e₄), with the exponential map being translation.

use faer::prelude::*;
use faer::sparse::SparseColMat;
use nalgebra::{Matrix4, SMatrix, SymmetricEigen, Vector4};

use crate::bvp::{
    apply_dstar, assemble_bvp, assemble_dstar, clifford_matrices, derivative, first_derivative, kernel_dim, BCSpec,
    Csr, EField, FlatCayleyDomain, LinearSystem, NodeField, NormalField, RowKind,
};
use crate::cayley::{gram_schmidt, pi_e, CayleyPlane};
use crate::forms::{e, Vec8};
use crate::spin7::{cross3, phi0_eval, tau4};
use crate::{Error, Result};

/// Operator-norm bound on the graph slope `J = (∂_i s_a)`.
pub const SLOPE_BOUND: f64 = 1.0;

pub type Matrix8 = SMatrix<f64, 8, 8>;

/// A normal field viewed as a graph, with its discrete Jacobian.
#[derive(Debug, Clone)]
pub struct GraphField {
    pub domain: FlatCayleyDomain,
    pub s: NormalField,
    /// `jac[n][(i, a)] = ∂_i s_a` at node n.
    pub jac: Vec<Matrix4<f64>>,
}

impl GraphField {
    pub fn new(dom: &FlatCayleyDomain, s: NormalField) -> Result<Self> {
        let g = Self::unchecked(dom, s);
        let m = g.max_slope();
        if !(m < SLOPE_BOUND) {
            return Err(Error::Precondition(format!("graph slope {m:.3} violates the bound {SLOPE_BOUND}")));
        }
        Ok(g)
    }

    fn unchecked(dom: &FlatCayleyDomain, s: NormalField) -> Self {
        let d: Vec<NodeField> = (0..4).map(|i| derivative(dom, &s, i)).collect();
        let jac = (0..dom.num_nodes()).map(|n| Matrix4::from_fn(|i, a| d[i].values[n][a])).collect();
        GraphField { domain: dom.clone(), s, jac }
    }

    pub fn max_slope(&self) -> f64 {
        self.jac
            .iter()
            .map(|j| SymmetricEigen::new(j * j.transpose()).eigenvalues.max().max(0.0).sqrt())
            .fold(0.0, f64::max)
    }

    /// `t_i = e_i + Σ_a J_ia e_{4+a}`.
    pub fn tangents(&self, node: usize) -> [Vec8; 4] {
        let j = &self.jac[node];
        std::array::from_fn(|i| {
            let mut t = e(i + 1);
            for a in 0..4 {
                t[4 + a] = j[(i, a)];
            }
            t
        })
    }
}

fn normal_vec(c: &[f64; 4]) -> Vec8 {
    let mut v = Vec8::zeros();
    for a in 0..4 {
        v[4 + a] = c[a];
    }
    v
}

/// Rotated normal directions as ambient vectors; the first k span ν.
fn rotated_normals(bc: &BCSpec) -> [Vec8; 4] {
    let r = bc.r();
    std::array::from_fn(|c| normal_vec(&[r[(0, c)], r[(1, c)], r[(2, c)], r[(3, c)]]))
}

/// `F(s) = π_E(τ(t₁,t₂,t₃,t₄))` per node.
pub fn cayley_residual(g: &GraphField) -> EField {
    let p = CayleyPlane::standard();
    let values = (0..g.domain.num_nodes())
        .map(|n| {
            let t = g.tangents(n);
            pi_e(&tau4(&t[0], &t[1], &t[2], &t[3]), &p)
        })
        .collect();
    NodeField { values }
}

/// `G(s) = D*(F(s))` with the printed-pattern adjoint.
pub fn second_order_residual(g: &GraphField) -> NormalField {
    apply_dstar(&g.domain, &cayley_residual(g))
}

/// Boundary face nodes in the order used by the boundary maps: all
/// x₄=0 sites, then all x₄=1 sites.
pub fn boundary_nodes(dom: &FlatCayleyDomain) -> Vec<usize> {
    [0, dom.n4].iter().flat_map(|&j| (0..dom.num_sites()).map(move |s| dom.node(s, j))).collect()
}

/// Face tangent indices ordered so that `b₁×b₂×b₃ = u`.
fn face_order(j: usize) -> [usize; 3] {
    if j == 0 {
        [1, 0, 2]
    } else {
        [0, 1, 2]
    }
}

fn check_on_scaffold(g: &GraphField, bc: &BCSpec) -> Result<()> {
    let pk = bc.pi_k();
    let scale = 1.0 + g.s.max_abs();
    for n in boundary_nodes(&g.domain) {
        let off = (pk * Vector4::from(g.s.values[n])).amax();
        if off > 1e-10 * scale {
            return Err(Error::Precondition(format!("boundary trace leaves the scaffold (|pi_K s| = {off:e})")));
        }
    }
    Ok(())
}

/// `H(s|∂X) = π_ν(π_W(b₁×b₂×b₃))` on the graph boundary, as ν-coordinates
/// (entries ≥ k are zero), one row per boundary node.
pub fn nonlinear_h(g: &GraphField, bc: &BCSpec) -> Result<Vec<[f64; 4]>> {
    check_on_scaffold(g, bc)?;
    let nu = rotated_normals(bc);
    Ok(boundary_nodes(&g.domain)
        .into_iter()
        .map(|n| {
            let (_, j) = g.domain.split(n);
            let t = g.tangents(n);
            let o = face_order(j);
            let c = cross3(&t[o[0]], &t[o[1]], &t[o[2]]);
            std::array::from_fn(|a| if a < bc.k { nu[a].dot(&c) } else { 0.0 })
        })
        .collect())
}

/// `B(s) = π_ν(ρ⁻¹(F(s)|∂X)) + H(s|∂X)`.
pub fn nonlinear_b(g: &GraphField, bc: &BCSpec) -> Result<Vec<[f64; 4]>> {
    let h = nonlinear_h(g, bc)?;
    let f = cayley_residual(g);
    let a4 = clifford_matrices()[3];
    let rt = bc.r().transpose();
    Ok(boundary_nodes(&g.domain)
        .into_iter()
        .zip(h)
        .map(|(n, h)| {
            let (_, j) = g.domain.split(n);
            let rho_inv = (a4 * g.domain.inward_sign(j)).transpose() * Vector4::from(f.values[n]);
            let nu = rt * rho_inv;
            std::array::from_fn(|a| if a < bc.k { nu[a] + h[a] } else { 0.0 })
        })
        .collect())
}

/// Quadratic vector field `v(x) = c + L x + Σ_k (xᵀ Q_k x) e_k` on ℝ⁸.
#[derive(Debug, Clone)]
pub struct PolyVectorField {
    pub c: Vec8,
    pub lin: Matrix8,
    pub quad: [Matrix8; 8],
}

impl PolyVectorField {
    pub fn linear(c: Vec8, lin: Matrix8) -> Self {
        PolyVectorField { c, lin, quad: [Matrix8::zeros(); 8] }
    }

    pub fn value(&self, x: &Vec8) -> Vec8 {
        let mut v = self.c + self.lin * x;
        for k in 0..8 {
            v[k] += x.dot(&(self.quad[k] * x));
        }
        v
    }

    /// `∂_w v` at x.
    pub fn directional(&self, x: &Vec8, w: &Vec8) -> Vec8 {
        let mut d = self.lin * w;
        for k in 0..8 {
            let q = &self.quad[k];
            d[k] += w.dot(&((q + q.transpose()) * x));
        }
        d
    }
}

fn point(dom: &FlatCayleyDomain, node: usize) -> Vec8 {
    let x = dom.coords(node);
    Vec8::from_fn(|i, _| if i < 4 { x[i] } else { 0.0 })
}

/// Sites whose periodic stencils do not wrap around the torus.
fn unwrapped_site(dom: &FlatCayleyDomain, site: usize) -> bool {
    let i = dom.site_coords(site);
    (0..3).all(|k| i[k] > 0 && i[k] + 1 < dom.n[k])
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LieResidual {
    /// `max |(dF̃)(0, ℒ_vΦ) − D(v^⊥)|`.
    pub f_tilde: f64,
    /// `max |(dB̃)(0, ℒ_vΦ) − π_ν(∇_u v) − π_ν(g(∇(v|_W), u)♯)|`.
    pub b_tilde: f64,
}

/// Structure variation by the Lie derivative along `v`, realised by moving
/// X and W with the flow `x ↦ x + εv(x)` and central-differencing in ε.
pub fn lie_variation_check(dom: &FlatCayleyDomain, bc: &BCSpec, v: &PolyVectorField, eps: f64) -> Result<LieResidual> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let p = CayleyPlane::standard();
    let samples: Vec<Vec8> = (0..dom.num_nodes()).map(|n| v.value(&point(dom, n))).collect();
    let field = |f: &dyn Fn(&Vec8) -> [f64; 4]| NodeField { values: samples.iter().map(f).collect() };
    let v_perp = field(&|w| [w[4], w[5], w[6], w[7]]);
    let d_perp = crate::bvp::apply_d(dom, &v_perp);
    let dv: Vec<Vec<[f64; 4]>> = (0..8)
        .step_by(4)
        .map(|off| {
            let comp = field(&|w| [w[off], w[off + 1], w[off + 2], w[off + 3]]);
            (0..4).flat_map(|i| derivative(dom, &comp, i).values).collect()
        })
        .collect();
    let nn = dom.num_nodes();
    // δ_i v at node n as an ambient vector
    let grad = |n: usize, i: usize| -> Vec8 {
        let lo = dv[0][i * nn + n];
        let hi = dv[1][i * nn + n];
        Vec8::from_fn(|k, _| if k < 4 { lo[k] } else { hi[k - 4] })
    };
    let flowed = |n: usize, eps: f64| -> [Vec8; 4] { std::array::from_fn(|i| e(i + 1) + grad(n, i) * eps) };
    let f_tilde_at = |n: usize, eps: f64| {
        let t = flowed(n, eps);
        Vector4::from(pi_e(&tau4(&t[0], &t[1], &t[2], &t[3]), &p))
    };

    let mut f_res = 0.0f64;
    for n in 0..nn {
        if !unwrapped_site(dom, dom.split(n).0) {
            continue;
        }
        let left = (f_tilde_at(n, eps) - f_tilde_at(n, -eps)) / (2.0 * eps);
        f_res = f_res.max((left - Vector4::from(d_perp.values[n])).amax());
    }

    let nu = rotated_normals(bc);
    let a4 = clifford_matrices()[3];
    let rt = bc.r().transpose();
    let mut b_res = 0.0f64;
    for n in boundary_nodes(dom) {
        let (site, j) = dom.split(n);
        if !unwrapped_site(dom, site) {
            continue;
        }
        let sign = dom.inward_sign(j);
        let u = e(4) * sign;
        let x = point(dom, n);
        let o = face_order(j);
        let b_tilde = |eps: f64| -> Result<Vec4k> {
            let t = flowed(n, eps);
            let f = Vector4::from(pi_e(&tau4(&t[0], &t[1], &t[2], &t[3]), &p));
            let from_f = rt * ((a4 * sign).transpose() * f);
            let c = cross3(&t[o[0]], &t[o[1]], &t[o[2]]);
            let mut w: Vec<Vec8> = o.iter().map(|&i| t[i]).collect();
            w.extend(nu[..bc.k].iter().map(|m| m + v.directional(&x, m) * eps));
            let q = gram_schmidt(&w)?;
            Ok(std::array::from_fn(|a| if a < bc.k { from_f[a] + c.dot(&q[3 + a]) } else { 0.0 }))
        };
        let (plus, minus) = (b_tilde(eps)?, b_tilde(-eps)?);
        for a in 0..bc.k {
            let left = (plus[a] - minus[a]) / (2.0 * eps);
            let right = nu[a].dot(&v.directional(&x, &u)) + v.directional(&x, &nu[a]).dot(&u);
            b_res = b_res.max((left - right).abs());
        }
    }
    Ok(LieResidual { f_tilde: f_res, b_tilde: b_res })
}

type Vec4k = [f64; 4];

/// Which boundary face of T³×[0,1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Face {
    Bottom,
    Top,
}

impl Face {
    pub fn layer(self, dom: &FlatCayleyDomain) -> usize {
        match self {
            Face::Bottom => 0,
            Face::Top => dom.n4,
        }
    }
}

/// A normal field t along the scaffold W = ∂X × ν over one face:
/// `t(p + Σ y_a ν_a) = base(p) + Σ y_a nu_slope(p)[a]`, with values in
/// ν_M(W) = span(u) ⊕ K.
#[derive(Debug, Clone)]
pub struct ScaffoldPerturbation {
    pub face: Face,
    pub base: Vec<Vec8>,
    pub nu_slope: Vec<[Vec8; 4]>,
    /// Width of the normal collar on which σ(t) is supported.
    pub collar: f64,
}

impl ScaffoldPerturbation {
    pub fn new(dom: &FlatCayleyDomain, bc: &BCSpec, face: Face, base: Vec<Vec8>, nu_slope: Vec<[Vec8; 4]>, collar: f64) -> Result<Self> {
        let ns = dom.num_sites();
        if base.len() != ns || nu_slope.len() != ns {
            return Err(Error::InvalidArgument(format!("perturbation needs {ns} values per face")));
        }
        if !(collar > 0.0) || collar > 0.5 * dom.lengths[3] {
            return Err(Error::InvalidArgument(format!("collar {collar} must lie in (0, L4/2]")));
        }
        let nu = rotated_normals(bc);
        let tangent: Vec<Vec8> = (1..=3).map(e).chain(nu[..bc.k].iter().copied()).collect();
        for v in base.iter().chain(nu_slope.iter().flat_map(|s| s[..bc.k].iter())) {
            if tangent.iter().any(|w| w.dot(v).abs() > 1e-12 * (1.0 + v.norm())) {
                return Err(Error::InvalidArgument("perturbation has components tangent to W".into()));
            }
        }
        Ok(ScaffoldPerturbation { face, base, nu_slope, collar })
    }

    pub fn zero(dom: &FlatCayleyDomain, face: Face, collar: f64) -> Self {
        let ns = dom.num_sites();
        ScaffoldPerturbation { face, base: vec![Vec8::zeros(); ns], nu_slope: vec![[Vec8::zeros(); 4]; ns], collar }
    }
}

fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Cutoff equal to 1 on [0, ½] and 0 on [1, ∞).
fn collar_cutoff(r: f64) -> f64 {
    let a = smooth_step(1.0 - r);
    a / (a + smooth_step(r - 0.5))
}

/// `σ(t)` at the ambient point `p + offset`, where p is the face node of
/// `site`. The offset may only move along ν and normal to W.
pub fn extend_scaffold_field(dom: &FlatCayleyDomain, bc: &BCSpec, t: &ScaffoldPerturbation, site: usize, offset: &Vec8) -> Result<Vec8> {
    if site >= dom.num_sites() {
        return Err(Error::InvalidArgument(format!("site {site} out of range")));
    }
    if (0..3).any(|i| offset[i] != 0.0) {
        return Err(Error::InvalidArgument("offset must not move along the boundary".into()));
    }
    let nu = rotated_normals(bc);
    let y: Vec<f64> = nu[..bc.k].iter().map(|m| m.dot(offset)).collect();
    let z = y.iter().zip(&nu).fold(*offset, |acc, (ya, m)| acc - m * *ya);
    let on_w = y.iter().enumerate().fold(t.base[site], |acc, (a, ya)| acc + t.nu_slope[site][a] * *ya);
    Ok(on_w * collar_cutoff(z.norm() / t.collar))
}

/// `|(dB̂)(0,t) − π_ν(g(∇t, u)♯)|` with W moved to `W + εσ(t)` and X fixed.
pub fn scaffold_variation_linearization(dom: &FlatCayleyDomain, bc: &BCSpec, t: &ScaffoldPerturbation, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let j = t.face.layer(dom);
    let u = e(4) * dom.inward_sign(j);
    let o = face_order(j);
    let nu = rotated_normals(bc);
    let c = cross3(&e(o[0] + 1), &e(o[1] + 1), &e(o[2] + 1));
    let mut worst = 0.0f64;
    for site in 0..dom.num_sites() {
        // tangential derivatives of t along the face
        let dt: [Vec8; 3] = std::array::from_fn(|i| {
            let h = dom.h(i);
            (t.base[dom.shift(site, i, 1)] - t.base[dom.shift(site, i, -1)]) / (2.0 * h)
        });
        let h_hat = |eps: f64| -> Result<Vec4k> {
            let mut w: Vec<Vec8> = o.iter().map(|&i| e(i + 1) + dt[i] * eps).collect();
            w.extend((0..bc.k).map(|a| nu[a] + t.nu_slope[site][a] * eps));
            let q = gram_schmidt(&w)?;
            Ok(std::array::from_fn(|a| if a < bc.k { c.dot(&q[3 + a]) } else { 0.0 }))
        };
        let (plus, minus) = (h_hat(eps)?, h_hat(-eps)?);
        for a in 0..bc.k {
            let left = (plus[a] - minus[a]) / (2.0 * eps);
            let right = t.nu_slope[site][a].dot(&u);
            worst = worst.max((left - right).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub gap: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 25, gap: 1e6 }
    }
}

/// Rigid translation of the scaffold on each face, in normal coordinates.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScaffoldTranslation {
    pub bottom: [f64; 4],
    pub top: [f64; 4],
}

impl ScaffoldTranslation {
    pub fn uniform(d: [f64; 4]) -> Self {
        ScaffoldTranslation { bottom: d, top: d }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub solution: NormalField,
    /// Max-norm residual before each step and after the last.
    pub trace: Vec<f64>,
}

/// Residual of the discrete boundary problem with translated scaffold.
pub fn bvp_residual(g: &GraphField, bc: &BCSpec, shift: &ScaffoldTranslation) -> Result<Vec<f64>> {
    let dom = &g.domain;
    let gs = second_order_residual(g);
    let rt = bc.r().transpose();
    let mut out = vec![0.0; 4 * dom.num_nodes()];
    let b = if bc.k > 0 {
        let shifted = GraphField::unchecked(dom, subtract_translation(dom, &g.s, shift));
        Some(nonlinear_b(&shifted, bc)?)
    } else {
        None
    };
    let bnodes = boundary_nodes(dom);
    for n in 0..dom.num_nodes() {
        let (_, j) = dom.split(n);
        if !dom.is_boundary(j) {
            out[4 * n..4 * n + 4].copy_from_slice(&gs.values[n]);
            continue;
        }
        let d = if j == 0 { shift.bottom } else { shift.top };
        let rel = rt * (Vector4::from(g.s.values[n]) - Vector4::from(d));
        for c in 0..4 {
            out[4 * n + c] = if c < bc.k {
                let idx = bnodes.iter().position(|&m| m == n).expect("boundary node");
                b.as_ref().expect("k > 0")[idx][c]
            } else {
                rel[c]
            };
        }
    }
    Ok(out)
}

fn subtract_translation(dom: &FlatCayleyDomain, s: &NormalField, shift: &ScaffoldTranslation) -> NormalField {
    // the translated scaffold is handled by measuring s against the nearer face shift
    let values = (0..dom.num_nodes())
        .map(|n| {
            let (_, j) = dom.split(n);
            let d = if 2 * j <= dom.n4 { shift.bottom } else { shift.top };
            std::array::from_fn(|c| s.values[n][c] - d[c])
        })
        .collect();
    NodeField { values }
}

/// Jacobian of `F` at g: `∂F_n/∂s_{m,b} = Σ_i d_i(n,m)·π_E τ(t with slot i ↦ n_b)`.
fn cayley_jacobian(g: &GraphField) -> Csr {
    let dom = &g.domain;
    let p = CayleyPlane::standard();
    let d: Vec<Csr> = (0..4).map(|i| first_derivative(dom, i)).collect();
    let mut t = Vec::new();
    for n in 0..dom.num_nodes() {
        let tv = g.tangents(n);
        for (i, di) in d.iter().enumerate() {
            let mut m = Matrix4::zeros();
            for b in 0..4 {
                let mut w = tv;
                w[i] = e(5 + b);
                let col = pi_e(&tau4(&w[0], &w[1], &w[2], &w[3]), &p);
                for a in 0..4 {
                    m[(a, b)] = col[a];
                }
            }
            for (k, wgt) in di.row(n) {
                for a in 0..4 {
                    for b in 0..4 {
                        if m[(a, b)] != 0.0 {
                            t.push((4 * n + a, 4 * k + b, wgt * m[(a, b)]));
                        }
                    }
                }
            }
        }
    }
    let nn = 4 * dom.num_nodes();
    Csr::from_triplets(nn, nn, t)
}

/// Jacobian of [`bvp_residual`]: exact for the interior and Dirichlet
/// rows; Robin rows use the linearisation at the flat plane.
pub fn bvp_jacobian(g: &GraphField, bc: &BCSpec) -> Result<LinearSystem> {
    let dom = &g.domain;
    let lin = assemble_bvp(dom, bc)?;
    let interior = assemble_dstar(dom)?.matrix.matmul(&cayley_jacobian(g));
    let mut t = Vec::new();
    for r in 0..lin.matrix.nrows {
        let src = if lin.row_kinds[r] == RowKind::Interior { &interior } else { &lin.matrix };
        for (c, v) in src.row(r) {
            t.push((r, c, v));
        }
    }
    let mut sys = lin;
    sys.matrix = Csr::from_triplets(sys.matrix.nrows, sys.matrix.ncols, t);
    Ok(sys)
}

fn sparse_solve(m: &Csr, rhs: &[f64]) -> Result<Vec<f64>> {
    let t: Vec<(usize, usize, f64)> = m.triplets();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(m.nrows, m.ncols, &t)
        .map_err(|e| Error::InvalidArgument(format!("sparse assembly failed: {e:?}")))?;
    let lu = a.sp_lu().map_err(|e| Error::NonGeneric(format!("sparse LU failed: {e:?}")))?;
    let b = faer::Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
    let x = lu.solve(&b);
    Ok((0..rhs.len()).map(|i| x[i]).collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Undamped Newton for `G(s)=0`, `π_K(s−d)=0`, `B(s)=0` starting from
/// `initial` (zero if `None`).
pub fn newton_solve(
    dom: &FlatCayleyDomain,
    bc: &BCSpec,
    shift: &ScaffoldTranslation,
    initial: Option<NormalField>,
    opts: &NewtonOptions,
) -> Result<NewtonResult> {
    let base = bvp_jacobian(&GraphField::unchecked(dom, NodeField::zeros(dom)), bc)?;
    // the interior rows use the wide D*·D stencil, so count its own kernel
    let kd = kernel_dim(&base, opts.gap)?.dim()?;
    if kd > 0 {
        return Err(Error::NonGeneric(format!("linearisation has a {kd}-dimensional kernel")));
    }
    let mut s = initial.unwrap_or_else(|| NodeField::zeros(dom));
    let mut trace = Vec::new();
    for it in 0..=opts.max_iter {
        let g = GraphField::new(dom, s.clone()).map_err(|_| Error::Diverged {
            iterations: it,
            residual: trace.last().copied().unwrap_or(f64::NAN),
        })?;
        let r = bvp_residual(&g, bc, shift)?;
        let norm = max_abs(&r);
        trace.push(norm);
        if !norm.is_finite() {
            return Err(Error::Diverged { iterations: it, residual: norm });
        }
        if norm < opts.tol {
            return Ok(NewtonResult { solution: s, trace });
        }
        if it == opts.max_iter {
            break;
        }
        let jac = bvp_jacobian(&g, bc)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = sparse_solve(&jac.matrix, &neg)?;
        for (n, vals) in s.values.iter_mut().enumerate() {
            for c in 0..4 {
                vals[c] += delta[4 * n + c];
            }
        }
    }
    Err(Error::Diverged { iterations: opts.max_iter, residual: trace.last().copied().unwrap_or(f64::NAN) })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct VolumeReport {
    pub volume: f64,
    pub flux: f64,
    /// `1 − Φ₀(t)/√det(tᵀt)` per node.
    pub margins: Vec<f64>,
}

impl VolumeReport {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Trapezoidal volume `∫√det(I + JJᵀ)` and flux `∫Φ₀(t₁,…,t₄)` of a graph.
pub fn volume_and_flux(g: &GraphField) -> VolumeReport {
    let dom = &g.domain;
    let (mut volume, mut flux) = (0.0, 0.0);
    let mut margins = Vec::with_capacity(dom.num_nodes());
    for n in 0..dom.num_nodes() {
        let j = &g.jac[n];
        let vol = (Matrix4::identity() + j * j.transpose()).determinant().sqrt();
        let t = g.tangents(n);
        let phi = phi0_eval(&t[0], &t[1], &t[2], &t[3]);
        let w = dom.weight(n);
        volume += w * vol;
        flux += w * phi;
        margins.push(1.0 - phi / vol);
    }
    VolumeReport { volume, flux, margins }
}
