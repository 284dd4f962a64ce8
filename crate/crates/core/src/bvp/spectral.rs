//! Rank detection for assembled systems.
//!
//! Systems that commute with the periodic site shifts are reduced to one
//! small complex block per Fourier mode; anything else falls back to a
//! dense SVD.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::LinearSystem;
use crate::{Error, Result};

const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    /// Required ratio σ_{r+1}/σ_r between the first kept and last dropped value.
    pub gap: f64,
    /// Relative cutoff: σ < σ_max·threshold counts as zero.
    pub threshold: f64,
    pub want_basis: bool,
    /// Skip the Fourier path even when the system is shift invariant.
    pub force_dense: bool,
}

impl Default for KernelOptions {
    fn default() -> Self {
        KernelOptions { gap: 1e6, threshold: 1e-8, want_basis: false, force_dense: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum SpectralMethod {
    Fourier,
    Dense,
}

#[derive(Debug, Clone)]
pub struct KernelReport {
    /// `None` when no clear gap separates the small singular values.
    pub dim: Option<usize>,
    /// All singular values, ascending.
    pub singular_values: Vec<f64>,
    pub sigma_max: f64,
    pub gap_ratio: f64,
    pub method: SpectralMethod,
    /// Orthonormal real kernel vectors, if requested and determined.
    pub basis: Vec<Vec<f64>>,
}

impl KernelReport {
    pub fn dim(&self) -> Result<usize> {
        self.dim.ok_or_else(|| {
            Error::Indeterminate(format!(
                "gap ratio {:.3e} below requirement (smallest sigmas {:?})",
                self.gap_ratio,
                &self.singular_values[..self.singular_values.len().min(6)]
            ))
        })
    }
}

pub fn kernel_dim(sys: &LinearSystem, gap: f64) -> Result<KernelReport> {
    kernel_dim_with(sys, &KernelOptions { gap, ..KernelOptions::default() })
}

pub fn kernel_dim_with(sys: &LinearSystem, opts: &KernelOptions) -> Result<KernelReport> {
    if !sys.is_square() {
        return Err(Error::Precondition(format!("system is {}x{}, not square", sys.matrix.nrows, sys.matrix.ncols)));
    }
    if !opts.force_dense {
        if let Some(blocks) = BlockStructure::detect(sys) {
            return Ok(blocks.kernel(opts));
        }
    }
    dense_kernel(sys, opts)
}

/// Number of zero singular values and the gap ratio guarding that count.
fn decide(sorted: &[f64], opts: &KernelOptions) -> (Option<usize>, f64, f64) {
    let n = sorted.len();
    let smax = sorted.last().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (Some(n), f64::INFINITY, smax);
    }
    let r = sorted.iter().take_while(|&&s| s < smax * opts.threshold).count();
    if r == n {
        return (None, 0.0, smax);
    }
    let floor = smax * f64::EPSILON * n as f64;
    let below = if r == 0 { floor } else { sorted[r - 1].max(floor) };
    let ratio = sorted[r] / below;
    ((ratio > opts.gap).then_some(r), ratio, smax)
}

fn dense_kernel(sys: &LinearSystem, opts: &KernelOptions) -> Result<KernelReport> {
    let n = sys.matrix.nrows;
    if n > DENSE_LIMIT {
        return Err(Error::Indeterminate(format!("{n} unknowns exceed the dense SVD limit and no block structure was found")));
    }
    let svd = sys.matrix.to_dense().svd(false, opts.want_basis);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| a.total_cmp(b));
    let (dim, gap_ratio, sigma_max) = decide(&sv, opts);
    let mut basis = Vec::new();
    if let (Some(_), true) = (dim, opts.want_basis) {
        let vt = svd.v_t.as_ref().expect("requested");
        for (i, s) in svd.singular_values.iter().enumerate() {
            if *s < sigma_max * opts.threshold {
                basis.push(vt.row(i).iter().copied().collect());
            }
        }
    }
    Ok(KernelReport { dim, singular_values: sv, sigma_max, gap_ratio, method: SpectralMethod::Dense, basis })
}

struct BlockStructure {
    sites: [usize; 3],
    local: usize,
    /// `(row slot, column slot, site offset) → value`
    stencil: Vec<(usize, usize, [usize; 3], f64)>,
}

impl BlockStructure {
    fn detect(sys: &LinearSystem) -> Option<Self> {
        if !sys.site_major() {
            return None;
        }
        let dom = &sys.domain;
        let local = 4 * dom.column_len();
        let ns = dom.num_sites();
        if sys.matrix.nrows != ns * local {
            return None;
        }
        let offset = |a: usize, b: usize| -> [usize; 3] {
            let (pa, pb) = (dom.site_coords(a), dom.site_coords(b));
            std::array::from_fn(|k| (pb[k] + dom.n[k] - pa[k]) % dom.n[k])
        };
        let mut reference: HashMap<(usize, usize, [usize; 3]), f64> = HashMap::new();
        let mut scale = 0.0f64;
        for r in 0..local {
            for (c, v) in sys.matrix.row(r) {
                reference.insert((r, c % local, offset(0, c / local)), v);
                scale = scale.max(v.abs());
            }
        }
        let tol = 1e-13 * scale.max(1.0);
        if sys.matrix.nnz() != reference.len() * ns {
            return None;
        }
        for r in 0..sys.matrix.nrows {
            let (sr, lr) = (r / local, r % local);
            for (c, v) in sys.matrix.row(r) {
                match reference.get(&(lr, c % local, offset(sr, c / local))) {
                    Some(w) if (w - v).abs() <= tol => {}
                    _ => return None,
                }
            }
        }
        let stencil = reference.into_iter().map(|((a, b, d), v)| (a, b, d, v)).collect();
        Some(BlockStructure { sites: dom.n, local, stencil })
    }

    fn modes(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [n1, n2, n3] = self.sites;
        (0..n3).flat_map(move |c| (0..n2).flat_map(move |b| (0..n1).map(move |a| [a, b, c])))
    }

    fn phase(&self, m: &[usize; 3], d: &[usize; 3]) -> Complex64 {
        let t: f64 = (0..3).map(|k| (m[k] * d[k]) as f64 / self.sites[k] as f64).sum();
        Complex64::from_polar(1.0, 2.0 * PI * t)
    }

    fn block(&self, m: &[usize; 3]) -> DMatrix<Complex64> {
        let mut b = DMatrix::zeros(self.local, self.local);
        for (r, c, d, v) in &self.stencil {
            b[(*r, *c)] += self.phase(m, d) * *v;
        }
        b
    }

    fn kernel(&self, opts: &KernelOptions) -> KernelReport {
        let mut sv = Vec::with_capacity(self.local * self.sites.iter().product::<usize>());
        for m in self.modes() {
            sv.extend(self.block(&m).singular_values().iter().copied());
        }
        sv.sort_by(|a, b| a.total_cmp(b));
        let (dim, gap_ratio, sigma_max) = decide(&sv, opts);
        let mut basis = Vec::new();
        if let (Some(r), true) = (dim, opts.want_basis) {
            let cutoff = sigma_max * opts.threshold;
            let mut cands = Vec::new();
            for m in self.modes() {
                let svd = self.block(&m).svd(false, true);
                if svd.singular_values.iter().all(|s| *s >= cutoff) {
                    continue;
                }
                let vt = svd.v_t.expect("requested");
                for (i, s) in svd.singular_values.iter().enumerate() {
                    if *s < cutoff {
                        let w: Vec<Complex64> = vt.row(i).iter().map(|z| z.conj()).collect();
                        let (re, im) = self.lift(&m, &w);
                        cands.push(re);
                        cands.push(im);
                    }
                }
            }
            basis = orthonormalise(cands, 1e-6);
            debug_assert_eq!(basis.len(), r);
        }
        KernelReport { dim, singular_values: sv, sigma_max, gap_ratio, method: SpectralMethod::Fourier, basis }
    }

    /// Real and imaginary parts of `x(p, ·) = e^{2πi m·p/n} w`.
    fn lift(&self, m: &[usize; 3], w: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let ns: usize = self.sites.iter().product();
        let mut re = vec![0.0; ns * self.local];
        let mut im = vec![0.0; ns * self.local];
        let [n1, n2, _] = self.sites;
        for s in 0..ns {
            let p = [s % n1, (s / n1) % n2, s / (n1 * n2)];
            let ph = self.phase(m, &p);
            for (l, z) in w.iter().enumerate() {
                let v = ph * z;
                re[s * self.local + l] = v.re;
                im[s * self.local + l] = v.im;
            }
        }
        (re, im)
    }
}

/// Modified Gram–Schmidt, dropping vectors whose remainder is below
/// `rel_tol` of their original norm.
pub(crate) fn orthonormalise(vs: Vec<Vec<f64>>, rel_tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for mut v in vs {
        let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n0 == 0.0 {
            continue;
        }
        for q in &out {
            let d: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > rel_tol * n0 {
            v.iter_mut().for_each(|x| *x /= n);
            out.push(v);
        }
    }
    out
}
