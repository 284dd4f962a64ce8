//! Spin(7)-structures built from SU(4) and G₂ data, restriction of a Spin(7)
//! form to 5-, 6- and 7-dimensional scaffolds, and the local Bryant–Salamon
//! warped-metric model.

use nalgebra::{Matrix4, SMatrix, SymmetricEigen};
use serde::Serialize;

use crate::forms::{e, KForm, Vec8};
use crate::spin7::star_wedge_operator;
use crate::{Error, Result};

/// Tolerance for orthonormality of user-supplied frames.
pub const FRAME_TOL: f64 = 1e-10;

/// Kähler form and holomorphic volume form on ℂ⁴ = ℝ⁸.
#[derive(Debug, Clone)]
pub struct SU4Data {
    pub omega: KForm,
    pub re_omega4: KForm,
    pub im_omega4: KForm,
}

/// Complex-valued form as a pair of real forms.
#[derive(Debug, Clone)]
struct CForm {
    re: KForm,
    im: KForm,
}

impl CForm {
    fn one_form(re: Vec8, im: Vec8) -> Self {
        CForm { re: KForm::from_vector(&re), im: KForm::from_vector(&im) }
    }

    fn wedge(&self, o: &CForm) -> CForm {
        let w = |a: &KForm, b: &KForm| a.wedge(b).expect("degree within 8");
        CForm {
            re: w(&self.re, &o.re).sub(&w(&self.im, &o.im)),
            im: w(&self.re, &o.im).add(&w(&self.im, &o.re)),
        }
    }
}

impl SU4Data {
    /// Flat structure with complex coordinates
    /// `dz = (e¹+ie², e⁴+ie³, e⁶+ie⁵, e⁷+ie⁸)` and `Ω = −dz¹∧dz²∧dz³∧dz⁴`.
    ///
    /// With this pairing `ω = e¹² − e³⁴ − e⁵⁶ + e⁷⁸` and `−½ω∧ω + ReΩ`
    /// is exactly Φ₀.
    pub fn standard() -> Self {
        let pairs = [(1, 2), (4, 3), (6, 5), (7, 8)];
        let mut omega = KForm::zero(2);
        let mut vol = CForm { re: KForm::monomial(&[], -1.0).expect("0-form"), im: KForm::zero(0) };
        for (x, y) in pairs {
            omega.add_monomial(&[x, y], 1.0).expect("valid");
            vol = vol.wedge(&CForm::one_form(e(x), e(y)));
        }
        SU4Data { omega, re_omega4: vol.re, im_omega4: vol.im }
    }

    /// Max coefficient of `ω⁴ − (3/2)(ReΩ∧ReΩ + ImΩ∧ImΩ)`.
    pub fn normalisation_residual(&self) -> f64 {
        let w = |a: &KForm, b: &KForm| a.wedge(b).expect("degree within 8");
        let o2 = w(&self.omega, &self.omega);
        let o4 = w(&o2, &o2);
        let rhs = w(&self.re_omega4, &self.re_omega4).add(&w(&self.im_omega4, &self.im_omega4)).scale(1.5);
        o4.sub(&rhs).max_abs()
    }
}

/// `Φ = −½ω∧ω + ReΩ`.
pub fn spin7_from_su4(d: &SU4Data) -> Result<KForm> {
    let res = d.normalisation_residual();
    if res > 1e-10 {
        return Err(Error::Precondition(format!("SU(4) data not normalised (residual {res:e})")));
    }
    let o2 = d.omega.wedge(&d.omega)?;
    Ok(o2.scale(-0.5).add(&d.re_omega4))
}

/// G₂ data on ℝ⁷ = span(e₂,…,e₈).
#[derive(Debug, Clone)]
pub struct G2Data {
    pub phi3: KForm,
    pub psi4: KForm,
}

fn seven_frame() -> Vec<Vec8> {
    (2..=8).map(e).collect()
}

/// Hodge star of ℝ⁷ = span(e₂,…,e₈) with orientation e²∧…∧e⁸.
pub fn star7(f: &KForm) -> KForm {
    let frame = seven_frame();
    f.pullback(&frame).hodge_star_in(7).pushforward(&frame)
}

impl G2Data {
    /// `φ₀ = e²³⁴ + e²⁵⁶ − e²⁷⁸ + e³⁵⁷ + e³⁶⁸ + e⁴⁵⁸ − e⁴⁶⁷`, `ψ₀ = *₇φ₀`.
    pub fn standard() -> Self {
        let phi3 = KForm::from_terms(
            3,
            &[
                (&[2, 3, 4], 1.0),
                (&[2, 5, 6], 1.0),
                (&[2, 7, 8], -1.0),
                (&[3, 5, 7], 1.0),
                (&[3, 6, 8], 1.0),
                (&[4, 5, 8], 1.0),
                (&[4, 6, 7], -1.0),
            ],
        )
        .expect("valid terms");
        let psi4 = star7(&phi3);
        G2Data { phi3, psi4 }
    }

    pub fn from_phi(phi3: KForm) -> Self {
        let psi4 = star7(&phi3);
        G2Data { phi3, psi4 }
    }
}

/// `Φ = e¹∧φ + ψ` (coordinate 1 plays the role of t).
pub fn spin7_from_g2(d: &G2Data) -> Result<KForm> {
    let mismatch = d.psi4.sub(&star7(&d.phi3)).max_abs();
    if mismatch > 1e-10 {
        return Err(Error::Precondition(format!("psi is not the 7-dimensional dual of phi ({mismatch:e})")));
    }
    let dt = KForm::monomial(&[1], 1.0)?;
    Ok(dt.wedge(&d.phi3)?.add(&d.psi4))
}

fn check_orthonormal(frame: &[Vec8]) -> Result<()> {
    for (i, a) in frame.iter().enumerate() {
        for (j, b) in frame.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            if (a.dot(b) - target).abs() > FRAME_TOL {
                return Err(Error::Degenerate(format!("frame not orthonormal at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// `φ = *_W(Φ|_W)` in W-coordinates.
pub fn restrict_to_7plane(phi: &KForm, w: &[Vec8; 7]) -> Result<KForm> {
    check_orthonormal(w)?;
    Ok(phi.pullback(w).hodge_star_in(7))
}

/// `ω = −*_W(Φ|_W)` in W-coordinates.
pub fn restrict_to_6plane(phi: &KForm, w: &[Vec8; 6]) -> Result<KForm> {
    check_orthonormal(w)?;
    Ok(phi.pullback(w).hodge_star_in(6).scale(-1.0))
}

/// `n = (*_W(Φ|_W))♯` in W-coordinates (first five entries).
pub fn restrict_to_5plane(phi: &KForm, w: &[Vec8; 5]) -> Result<Vec8> {
    check_orthonormal(w)?;
    Ok(phi.pullback(w).hodge_star_in(5).to_vector())
}

/// Map W-coordinates back to ℝ⁸.
pub fn to_ambient(coords: &Vec8, frame: &[Vec8]) -> Vec8 {
    frame.iter().enumerate().fold(Vec8::zeros(), |acc, (i, v)| acc + v * coords[i])
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub self_dual_residual: f64,
    pub norm_squared: f64,
    /// Sorted eigenvalues of α ↦ *(α∧Φ).
    pub eigenvalues: Vec<f64>,
    pub self_dual: bool,
    pub norm_ok: bool,
    pub spectrum_ok: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.self_dual && self.norm_ok && self.spectrum_ok
    }
}

/// Necessary conditions for a Spin(7) 4-form: self-duality, `|Φ|² = 14`
/// and the (−3)⁷(+1)²¹ spectrum of α ↦ *(α∧Φ).
pub fn validate_spin7_form(phi: &KForm) -> ValidationReport {
    let self_dual_residual = phi.sub(&phi.hodge_star()).max_abs();
    let norm_squared = phi.norm_squared();
    let op = star_wedge_operator(phi);
    let sym_err = (&op - op.transpose()).amax();
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new((&op + op.transpose()) * 0.5).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| a.total_cmp(b));
    let spectrum_ok = sym_err < 1e-8
        && eigenvalues[..7].iter().all(|l| (l + 3.0).abs() < 1e-8)
        && eigenvalues[7..].iter().all(|l| (l - 1.0).abs() < 1e-8);
    ValidationReport {
        self_dual_residual,
        norm_squared,
        eigenvalues,
        self_dual: self_dual_residual < 1e-10,
        norm_ok: (norm_squared - 14.0).abs() < 1e-10,
        spectrum_ok,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecialLagrangianReport {
    pub re_value: f64,
    pub omega_max: f64,
    pub im_value: f64,
    pub calibrated: bool,
    pub vanishing: bool,
}

impl SpecialLagrangianReport {
    pub fn agree(&self) -> bool {
        self.calibrated == self.vanishing
    }
}

/// Compare `|ReΩ|_V| = vol_V` against `ω|_V = 0, ImΩ|_V = 0`.
///
/// The calibration defect `1 − |ReΩ(V)|` is quadratic in the distance to
/// the special Lagrangian locus, so the vanishing test uses the square
/// root of `tol`.
pub fn special_lagrangian_test(v: &[Vec8; 4], d: &SU4Data, tol: f64) -> Result<SpecialLagrangianReport> {
    check_orthonormal(v)?;
    let re_value = d.re_omega4.eval(v);
    let im_value = d.im_omega4.eval(v);
    let mut omega_max: f64 = 0.0;
    for i in 0..4 {
        for j in (i + 1)..4 {
            omega_max = omega_max.max(d.omega.eval(&[v[i], v[j]]).abs());
        }
    }
    let root = tol.sqrt();
    Ok(SpecialLagrangianReport {
        re_value,
        omega_max,
        im_value,
        calibrated: (1.0 - re_value.abs()) < tol,
        vanishing: omega_max < root && im_value.abs() < root,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct G2PlaneReport {
    pub dim: usize,
    pub phi_value: f64,
    pub psi_value: f64,
    pub phi_max: f64,
    pub associative: bool,
    pub coassociative_by_psi: bool,
    pub coassociative_by_phi: bool,
}

impl G2PlaneReport {
    pub fn agree(&self) -> bool {
        self.dim != 4 || self.coassociative_by_psi == self.coassociative_by_phi
    }
}

/// Associative test for 3-planes, the two coassociative criteria for
/// 4-planes. Vectors live in span(e₂,…,e₈).
pub fn associative_coassociative_test(v: &[Vec8], d: &G2Data, tol: f64) -> Result<G2PlaneReport> {
    if v.len() != 3 && v.len() != 4 {
        return Err(Error::InvalidArgument(format!("expected a 3- or 4-plane, got dimension {}", v.len())));
    }
    check_orthonormal(v)?;
    if v.iter().any(|x| x[0].abs() > FRAME_TOL) {
        return Err(Error::InvalidArgument("plane not contained in span(e2..e8)".into()));
    }
    let mut report = G2PlaneReport {
        dim: v.len(),
        phi_value: 0.0,
        psi_value: 0.0,
        phi_max: 0.0,
        associative: false,
        coassociative_by_psi: false,
        coassociative_by_phi: false,
    };
    if v.len() == 3 {
        report.phi_value = d.phi3.eval(v);
        report.associative = (1.0 - report.phi_value).abs() < tol;
    } else {
        report.psi_value = d.psi4.eval(v);
        for skip in 0..4 {
            let tri: Vec<Vec8> = (0..4).filter(|&i| i != skip).map(|i| v[i]).collect();
            report.phi_max = report.phi_max.max(d.phi3.eval(&tri).abs());
        }
        report.coassociative_by_psi = (1.0 - report.psi_value.abs()) < tol;
        report.coassociative_by_phi = report.phi_max < tol.sqrt();
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Complete,
    Incomplete,
}

/// Bryant–Salamon warping factors `(f_s, f_ν)`.
pub fn bs_warping(r: f64, branch: Branch) -> Result<(f64, f64)> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius {r} must be nonnegative")));
    }
    match branch {
        Branch::Complete => {
            let q = 1.0 + r * r;
            Ok((5.0 * q.powf(0.6), 4.0 * q.powf(-0.4)))
        }
        Branch::Incomplete => {
            if r >= 1.0 {
                return Err(Error::InvalidArgument(format!("incomplete branch needs r < 1, got {r}")));
            }
            let q = 1.0 - r * r;
            Ok((-5.0 * q.powf(0.6), 4.0 * q.powf(-0.4)))
        }
    }
}

/// Local model of a warped metric on a rank-4 bundle over a 4-dimensional
/// base, in coordinates `(x₁..x₄, y₁..y₄)`:
///
/// ```text
/// g = f_s(r) dx² + f_ν(r) H(x)(dy + Ã(x) y dx, dy + Ã(x) y dx)
/// ```
///
/// `A_i` is the connection in an orthonormal fibre frame. The frame used
/// for the coordinates differs from it by the gauge `Q(x) = I + Σ x_k C_k`,
/// so the fibre metric is `H = QᵀQ`, the coordinate connection is
/// `Ã_k = Q⁻¹(A_k Q + C_k)`, and `r² = yᵀHy`. Compatibility of Ã with H is
/// equivalent to antisymmetry of the `A_k`.
#[derive(Debug, Clone)]
pub struct WarpedMetricModel {
    pub connection: [Matrix4<f64>; 4],
    pub gauge: [Matrix4<f64>; 4],
    pub branch: Branch,
}

pub type Matrix8 = SMatrix<f64, 8, 8>;

impl WarpedMetricModel {
    pub fn new(connection: [Matrix4<f64>; 4], gauge: [Matrix4<f64>; 4]) -> Result<Self> {
        for (i, a) in connection.iter().enumerate() {
            if (a + a.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidArgument(format!("connection matrix A_{} is not antisymmetric", i + 1)));
            }
        }
        Ok(Self::new_unchecked(connection, gauge))
    }

    /// Skips the antisymmetry check; used to inject incompatible connections.
    pub fn new_unchecked(connection: [Matrix4<f64>; 4], gauge: [Matrix4<f64>; 4]) -> Self {
        WarpedMetricModel { connection, gauge, branch: Branch::Complete }
    }

    pub fn untwisted() -> Self {
        Self::new_unchecked([Matrix4::zeros(); 4], [Matrix4::zeros(); 4])
    }

    /// Metric matrix at the point `x`.
    pub fn metric(&self, x: &Vec8) -> Result<Matrix8> {
        let mut q = Matrix4::identity();
        for k in 0..4 {
            q += self.gauge[k] * x[k];
        }
        let q_inv = q.try_inverse().ok_or_else(|| Error::Degenerate("gauge not invertible".into()))?;
        let h = q.transpose() * q;
        let y = nalgebra::Vector4::new(x[4], x[5], x[6], x[7]);
        let r = (y.transpose() * h * y)[0].max(0.0).sqrt();
        let (fs, fnu) = bs_warping(r, self.branch)?;
        let twisted: Vec<nalgebra::Vector4<f64>> =
            (0..4).map(|k| q_inv * (self.connection[k] * q + self.gauge[k]) * y).collect();
        let mut g = Matrix8::zeros();
        for a in 0..4 {
            for b in 0..4 {
                g[(4 + a, 4 + b)] = fnu * h[(a, b)];
            }
        }
        for k in 0..4 {
            let hy = h * twisted[k];
            for a in 0..4 {
                g[(4 + a, k)] = fnu * hy[a];
                g[(k, 4 + a)] = fnu * hy[a];
            }
            for j in 0..4 {
                let base = if j == k { fs } else { 0.0 };
                g[(k, j)] = base + fnu * (twisted[k].transpose() * h * twisted[j])[0];
            }
        }
        if g.determinant().abs() < 1e-14 {
            return Err(Error::Degenerate("singular metric".into()));
        }
        Ok(g)
    }
}

/// Max over fibre i, j and base k of the lowered Christoffel symbols
/// `½(∂ᵢg_{jk} + ∂ⱼg_{ik} − ∂ₖg_{ij})` at the fibre origin over
/// `base_point`, using central differences of step `h`.
pub fn christoffel_fiber_check(m: &WarpedMetricModel, h: f64, base_point: [f64; 4]) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let mut x0 = Vec8::zeros();
    for k in 0..4 {
        x0[k] = base_point[k];
    }
    let mut dg: Vec<Matrix8> = Vec::with_capacity(8);
    for d in 0..8 {
        let step = e(d + 1) * h;
        dg.push((m.metric(&(x0 + step))? - m.metric(&(x0 - step))?) / (2.0 * h));
    }
    let mut worst: f64 = 0.0;
    for i in 4..8 {
        for j in 4..8 {
            for k in 0..4 {
                let gamma = 0.5 * (dg[i][(j, k)] + dg[j][(i, k)] - dg[k][(i, j)]);
                worst = worst.max(gamma.abs());
            }
        }
    }
    Ok(worst)
}
