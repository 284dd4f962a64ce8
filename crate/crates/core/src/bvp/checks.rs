use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64;

use super::spectral::{kernel_dim_with, KernelOptions};
use super::{
    apply_d, apply_d_adjoint, assemble_bvp, assemble_p, clifford_matrices, p_matrices, BCSpec, EField,
    FlatCayleyDomain, NormalField, RowKind,
};
use crate::{Error, Result};

/// Principal symbol `ξ ↦ Σ ξ_i A_i` of D (without the factor i).
pub fn interior_symbol(xi: &[f64; 4]) -> Matrix4<f64> {
    clifford_matrices().iter().zip(xi).fold(Matrix4::zeros(), |acc, (a, x)| acc + a * *x)
}

/// Condition number of the boundary symbol at tangential covector `ξ` on
/// the x₄=0 face: rows `[i|ξ| I_k, A; 0, I_{4−k}]` in the rotated frame,
/// with `A` the ν–K block of `Σ iξ_i C_i`.
pub fn boundary_symbol_check(xi: &[f64; 3], bc: &BCSpec) -> Result<f64> {
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("boundary symbol needs a nonzero covector".into()));
    }
    let k = bc.k;
    let r = bc.r();
    let c = p_matrices(1.0);
    let coupling = (0..3).fold(Matrix4::zeros(), |acc, i| acc + r.transpose() * c[i] * r * xi[i]);
    let mut m = DMatrix::<Complex64>::zeros(4, 4);
    for a in 0..4 {
        if a < k {
            m[(a, a)] = Complex64::new(0.0, norm);
            for b in k..4 {
                m[(a, b)] = Complex64::new(0.0, coupling[(a, b)]);
            }
        } else {
            m[(a, a)] = Complex64::new(1.0, 0.0);
        }
    }
    let sv = m.singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    Ok(hi / lo)
}

/// A smooth normal field with exact first and second derivatives.
pub trait AnalyticField {
    fn value(&self, x: [f64; 4]) -> [f64; 4];
    /// `grad[i][c] = ∂_i s_c`.
    fn grad(&self, x: [f64; 4]) -> [[f64; 4]; 4];
    fn laplacian(&self, x: [f64; 4]) -> [f64; 4];

    fn sample(&self, dom: &FlatCayleyDomain) -> NormalField {
        NormalField::from_fn(dom, |x| self.value(x))
    }
}

/// `s_c = amp_c · cos(k·x' + φ) · cos(κ x₄ + φ₄)` with `k` compatible with
/// the periodic lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub amp: [f64; 4],
    pub k: [f64; 3],
    pub phase: f64,
    pub kappa: f64,
    pub phase4: f64,
}

impl ModeField {
    pub fn new(dom: &FlatCayleyDomain, amp: [f64; 4], m: [i32; 3], phase: f64, kappa: f64, phase4: f64) -> Self {
        let k = std::array::from_fn(|i| 2.0 * std::f64::consts::PI * m[i] as f64 / dom.lengths[i]);
        ModeField { amp, k, phase, kappa, phase4 }
    }

    fn angles(&self, x: [f64; 4]) -> (f64, f64) {
        (self.k[0] * x[0] + self.k[1] * x[1] + self.k[2] * x[2] + self.phase, self.kappa * x[3] + self.phase4)
    }
}

impl AnalyticField for ModeField {
    fn value(&self, x: [f64; 4]) -> [f64; 4] {
        let (t, t4) = self.angles(x);
        self.amp.map(|a| a * t.cos() * t4.cos())
    }

    fn grad(&self, x: [f64; 4]) -> [[f64; 4]; 4] {
        let (t, t4) = self.angles(x);
        std::array::from_fn(|i| {
            let f = if i < 3 { -self.k[i] * t.sin() * t4.cos() } else { -self.kappa * t.cos() * t4.sin() };
            self.amp.map(|a| a * f)
        })
    }

    fn laplacian(&self, x: [f64; 4]) -> [f64; 4] {
        let (t, t4) = self.angles(x);
        let k2 = self.k.iter().map(|k| k * k).sum::<f64>() + self.kappa * self.kappa;
        self.amp.map(|a| -a * k2 * t.cos() * t4.cos())
    }
}

fn dot4(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `|⟨Ds,t⟩ − ⟨s,D*t⟩ + ⟨u×s,t⟩_∂|` with trapezoidal weights, where D* is
/// the L²-formal adjoint.
pub fn greens_residual(dom: &FlatCayleyDomain, s: &NormalField, t: &EField) -> Result<f64> {
    if dom.periodic4 {
        return Err(Error::InvalidArgument("Green's formula needs the interval direction".into()));
    }
    let ds = apply_d(dom, s).flat();
    let dt = apply_d_adjoint(dom, t).flat();
    let (sf, tf) = (s.flat(), t.flat());
    let mut lhs = 0.0;
    for n in 0..dom.num_nodes() {
        let w = dom.weight(n);
        let r = 4 * n..4 * n + 4;
        lhs += w * (dot4(&ds[r.clone()], &tf[r.clone()]) - dot4(&sf[r.clone()], &dt[r]));
    }
    let a4 = clifford_matrices()[3];
    let mut bdy = 0.0;
    for site in 0..dom.num_sites() {
        for j in [0, dom.n4] {
            let n = dom.node(site, j);
            let us = a4 * Vector4::from(s.values[n]) * dom.inward_sign(j);
            bdy += dom.boundary_weight() * us.dot(&Vector4::from(t.values[n]));
        }
    }
    Ok((lhs + bdy).abs())
}

/// Max over boundary nodes of `|ρ⁻¹(Ds) − ∂_u s − P s|` with all three
/// terms from the assembled stencils.
pub fn relation_residual(dom: &FlatCayleyDomain, s: &NormalField) -> Result<f64> {
    let ds = apply_d(dom, s).flat();
    let ps = assemble_p(dom, &BCSpec::new(0)?)?.matvec(&s.flat());
    let a4 = clifford_matrices()[3];
    let h = dom.h(3);
    let mut worst = 0.0f64;
    for (side, j) in [0, dom.n4].into_iter().enumerate() {
        let sign = dom.inward_sign(j);
        let inward: [usize; 3] = if j == 0 { [0, 1, 2] } else { [j, j - 1, j - 2] };
        for site in 0..dom.num_sites() {
            let n = dom.node(site, j);
            let d = Vector4::from_column_slice(&ds[4 * n..4 * n + 4]);
            let rho_inv = (a4 * sign).transpose() * d;
            let du = inward.iter().zip([-1.5, 2.0, -0.5]).fold(Vector4::zeros(), |acc, (jj, w)| {
                acc + Vector4::from(s.values[dom.node(site, *jj)]) * (w / h)
            });
            let row = 4 * (side * dom.num_sites() + site);
            let p = Vector4::from_column_slice(&ps[row..row + 4]);
            worst = worst.max((rho_inv - du - p).amax());
        }
    }
    Ok(worst)
}

/// `max |P − Pᵀ|` for the boundary operator restricted to traces on the
/// x₄=0 face.
pub fn p_antisymmetry_defect(dom: &FlatCayleyDomain, bc: &BCSpec) -> Result<f64> {
    let p = assemble_p(dom, bc)?;
    let ns = dom.num_sites();
    let mut t = Vec::new();
    for r in 0..4 * ns {
        for (c, v) in p.row(r) {
            let (node, b) = (c / 4, c % 4);
            let (site, j) = dom.split(node);
            if j != 0 {
                return Err(Error::Precondition("P reaches off the boundary face".into()));
            }
            t.push((r, 4 * site + b, v));
        }
    }
    let m = super::Csr::from_triplets(4 * ns, 4 * ns, t);
    let d = m.add(&m.transpose().scale(-1.0));
    Ok(d.data.iter().fold(0.0, |a, v| a.max(v.abs())))
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct AdjointReport {
    pub kernel_dim: usize,
    pub cokernel_dim: usize,
    /// Max over cokernel basis vectors y and test fields s of
    /// `|Σ y_r (A s)_r| / Σ |y_r (A s)_r|` with `A` the continuous
    /// operator evaluated exactly at the rows.
    pub weak_residual: f64,
    pub kernel_gap: f64,
    pub cokernel_gap: f64,
}

/// Exact row values of the continuous boundary problem applied to `f`.
fn exact_rows(dom: &FlatCayleyDomain, bc: &BCSpec, f: &dyn AnalyticField, kinds: &[RowKind]) -> Vec<f64> {
    let r = bc.r();
    let rt = r.transpose();
    let pk = bc.pi_k();
    let mut out = vec![0.0; 4 * dom.num_nodes()];
    for n in 0..dom.num_nodes() {
        let x = dom.coords(n);
        let (_, j) = dom.split(n);
        let v = Vector4::from(f.value(x));
        let g = f.grad(x);
        let lap = f.laplacian(x);
        for c in 0..4 {
            let row = 4 * n + c;
            out[row] = match kinds[row] {
                RowKind::Interior => lap[c],
                RowKind::Dirichlet => (rt * v)[c],
                RowKind::Robin => {
                    let sign = dom.inward_sign(j);
                    let cm = p_matrices(sign);
                    let mut w = Vector4::from(g[3]) * sign;
                    for (i, ci) in cm.iter().take(3).enumerate() {
                        w += ci * pk * Vector4::from(g[i]);
                    }
                    (rt * w)[c]
                }
            };
        }
    }
    out
}

/// Kernel and cokernel of the boundary problem, and how well the cokernel
/// vectors annihilate the continuous operator on smooth fields.
pub fn adjoint_kernel_characterization(dom: &FlatCayleyDomain, bc: &BCSpec, gap: f64) -> Result<AdjointReport> {
    let sys = assemble_bvp(dom, bc)?;
    let opts = KernelOptions { gap, ..KernelOptions::default() };
    let ker = kernel_dim_with(&sys, &opts)?;
    let kernel_dim = ker.dim()?;
    let cok = kernel_dim_with(&sys.transpose(), &KernelOptions { want_basis: true, ..opts })?;
    let cokernel_dim = cok.dim()?;
    let fields = [
        ModeField::new(dom, [1.0, -0.5, 0.8, 0.3], [0, 0, 0], 0.0, 1.3, 0.4),
        ModeField::new(dom, [0.2, 0.9, -0.7, 1.1], [0, 0, 0], 0.0, 2.1, -0.3),
        ModeField::new(dom, [0.6, 0.4, -1.0, 0.5], [1, 0, 0], 0.2, 1.7, 0.1),
    ];
    let mut weak = 0.0f64;
    for f in &fields {
        let a = exact_rows(dom, bc, f, &sys.row_kinds);
        for y in &cok.basis {
            let num: f64 = y.iter().zip(&a).map(|(p, q)| p * q).sum();
            let den: f64 = y.iter().zip(&a).map(|(p, q)| (p * q).abs()).sum();
            if den > 0.0 {
                weak = weak.max(num.abs() / den);
            }
        }
    }
    Ok(AdjointReport { kernel_dim, cokernel_dim, weak_residual: weak, kernel_gap: ker.gap_ratio, cokernel_gap: cok.gap_ratio })
}
