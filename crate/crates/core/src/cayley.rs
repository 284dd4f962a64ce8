//! Cayley planes, Spin(7) frames, the rank-4 bundle E, scaffold
//! projections and the pointwise linearisation identities.

use nalgebra::Matrix4;

use crate::calibration::{restrict_to_5plane, restrict_to_6plane, to_ambient};
use crate::forms::{e, KForm, Vec8};
use crate::spin7::{cross2, cross3, lambda2_project, phi0, phi0_eval, tau4};
use crate::{Error, Result};

/// Pivot tolerance for modified Gram–Schmidt.
pub const PIVOT_TOL: f64 = 1e-12;

/// Modified Gram–Schmidt; rejects (nearly) dependent input.
pub fn gram_schmidt(vs: &[Vec8]) -> Result<Vec<Vec8>> {
    let mut out: Vec<Vec8> = Vec::with_capacity(vs.len());
    for (i, v) in vs.iter().enumerate() {
        let scale = v.norm();
        let mut w = *v;
        for q in &out {
            w -= q * q.dot(&w);
        }
        let n = w.norm();
        if n <= PIVOT_TOL * scale.max(1.0) || n == 0.0 {
            return Err(Error::Degenerate(format!("vector {i} is dependent on the previous ones")));
        }
        out.push(w / n);
    }
    Ok(out)
}

fn orthonormal4(vs: &[Vec8; 4]) -> Result<[Vec8; 4]> {
    let q = gram_schmidt(vs)?;
    Ok([q[0], q[1], q[2], q[3]])
}

/// `Φ₀` on the orthonormalised oriented frame of `span(vs)`.
pub fn calibration_value(vs: &[Vec8; 4]) -> Result<f64> {
    let q = orthonormal4(vs)?;
    Ok(phi0_eval(&q[0], &q[1], &q[2], &q[3]))
}

/// Norm of τ on the orthonormalised frame.
pub fn tau_norm(vs: &[Vec8; 4]) -> Result<f64> {
    let q = orthonormal4(vs)?;
    Ok(tau4(&q[0], &q[1], &q[2], &q[3]).norm())
}

/// Cayley test via vanishing of τ.
pub fn is_cayley(vs: &[Vec8; 4], tol: f64) -> Result<bool> {
    Ok(tau_norm(vs)? < tol)
}

/// Orthonormal frame in which Φ₀ has the coefficient pattern of Φ₀.
#[derive(Debug, Clone, PartialEq)]
pub struct Spin7Frame {
    pub e: [Vec8; 8],
}

impl Spin7Frame {
    pub fn standard() -> Self {
        Spin7Frame { e: std::array::from_fn(|i| e(i + 1)) }
    }

    /// Max coefficient deviation of the pulled-back Φ₀ from Φ₀.
    pub fn pattern_residual(&self) -> f64 {
        let p = phi0();
        p.pullback(&self.e).sub(&p).max_abs()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                let t = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.e[i].dot(&self.e[j]) - t).abs());
            }
        }
        worst
    }
}

/// Admissibility tolerance for frame completion input.
pub const COMPLETION_TOL: f64 = 1e-10;

/// Complete `(e₁, e₂, e₃, e₅)` to a Spin(7) frame via
/// `e₄ = −e₁×e₂×e₃`, `e₆ = −e₁×e₂×e₅`, `e₇ = −e₁×e₃×e₅`, `e₈ = e₂×e₃×e₅`.
pub fn complete_spin7_frame(e1: &Vec8, e2: &Vec8, e3: &Vec8, e5: &Vec8) -> Result<Spin7Frame> {
    let named = [("e1", e1), ("e2", e2), ("e3", e3), ("e5", e5)];
    for (name, v) in &named {
        if (v.norm() - 1.0).abs() > COMPLETION_TOL {
            return Err(Error::Precondition(format!("{name} is not a unit vector")));
        }
    }
    for i in 0..4 {
        for j in (i + 1)..4 {
            if named[i].1.dot(named[j].1).abs() > COMPLETION_TOL {
                return Err(Error::Precondition(format!("{} is not orthogonal to {}", named[i].0, named[j].0)));
            }
        }
    }
    let e4 = -cross3(e1, e2, e3);
    if e5.dot(&e4).abs() > COMPLETION_TOL {
        return Err(Error::Precondition("e5 is not orthogonal to e1 x e2 x e3".into()));
    }
    let e6 = -cross3(e1, e2, e5);
    let e7 = -cross3(e1, e3, e5);
    let e8 = cross3(e2, e3, e5);
    Ok(Spin7Frame { e: [*e1, *e2, *e3, e4, *e5, e6, e7, e8] })
}

/// A Cayley 4-plane with an adapted Spin(7) frame and the induced
/// orthonormal basis `e₁×n_a` of the fibre of E.
#[derive(Debug, Clone)]
pub struct CayleyPlane {
    pub tangent: [Vec8; 4],
    pub normal: [Vec8; 4],
    pub e_basis: [KForm; 4],
}

impl CayleyPlane {
    pub fn standard() -> Self {
        Self::from_frame(&Spin7Frame::standard())
    }

    pub fn from_frame(f: &Spin7Frame) -> Self {
        let tangent = [f.e[0], f.e[1], f.e[2], f.e[3]];
        let normal = [f.e[4], f.e[5], f.e[6], f.e[7]];
        let e_basis = std::array::from_fn(|a| cross2(&tangent[0], &normal[a]));
        CayleyPlane { tangent, normal, e_basis }
    }

    pub fn frame(&self) -> Spin7Frame {
        let mut e = [Vec8::zeros(); 8];
        e[..4].copy_from_slice(&self.tangent);
        e[4..].copy_from_slice(&self.normal);
        Spin7Frame { e }
    }

    /// Coordinates of a vector in the normal frame.
    pub fn normal_coords(&self, x: &Vec8) -> [f64; 4] {
        std::array::from_fn(|a| self.normal[a].dot(x))
    }

    pub fn from_normal_coords(&self, c: &[f64; 4]) -> Vec8 {
        (0..4).fold(Vec8::zeros(), |acc, a| acc + self.normal[a] * c[a])
    }

    pub fn tangent_projection(&self, x: &Vec8) -> Vec8 {
        self.tangent.iter().fold(Vec8::zeros(), |acc, t| acc + t * t.dot(x))
    }

    pub fn normal_projection(&self, x: &Vec8) -> Vec8 {
        x - self.tangent_projection(x)
    }
}

/// Fixed candidate list for the free normal direction in [`adapted_plane`].
const E5_CANDIDATES: [usize; 8] = [5, 6, 7, 8, 1, 2, 3, 4];

/// Adapted frame for an oriented Cayley plane.
pub fn adapted_plane(vs: &[Vec8; 4]) -> Result<CayleyPlane> {
    let q = orthonormal4(vs)?;
    let lambda = phi0_eval(&q[0], &q[1], &q[2], &q[3]);
    if (lambda - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!("plane is not an oriented Cayley plane (Phi = {lambda})")));
    }
    let mut e5 = None;
    for c in E5_CANDIDATES {
        let mut w = e(c);
        for t in &q {
            w -= t * t.dot(&w);
        }
        if w.norm() > 0.5 {
            e5 = Some(w.normalize());
            break;
        }
    }
    // a 4-dimensional complement always has a basis vector with
    // normal part of norm ≥ 1/√2
    let e5 = e5.expect("some basis vector has a large normal component");
    let frame = complete_spin7_frame(&q[0], &q[1], &q[2], &e5)?;
    Ok(CayleyPlane::from_frame(&frame))
}

/// Coordinates of `α` against the E-basis.
pub fn pi_e(alpha: &KForm, p: &CayleyPlane) -> [f64; 4] {
    std::array::from_fn(|a| alpha.dot(&p.e_basis[a]))
}

fn check_tangent_unit(u: &Vec8, p: &CayleyPlane) -> Result<()> {
    if (u.norm() - 1.0).abs() > 1e-10 || p.normal_projection(u).norm() > 1e-10 {
        return Err(Error::InvalidArgument("u must be a unit tangent vector".into()));
    }
    Ok(())
}

/// Matrix of `ρ_u: s ↦ u×s` from normal coordinates to E coordinates.
pub fn rho_matrix(u: &Vec8, p: &CayleyPlane) -> Result<Matrix4<f64>> {
    check_tangent_unit(u, p)?;
    let mut m = Matrix4::zeros();
    for b in 0..4 {
        let c = pi_e(&cross2(u, &p.normal[b]), p);
        for a in 0..4 {
            m[(a, b)] = c[a];
        }
    }
    Ok(m)
}

/// `ρ(s) = π_E(u×s)` in E coordinates.
pub fn rho(u: &Vec8, s: &Vec8, p: &CayleyPlane) -> Result<[f64; 4]> {
    check_tangent_unit(u, p)?;
    Ok(pi_e(&cross2(u, s), p))
}

/// Inverse of [`rho`]; ρ is an isometry so this is the transpose.
pub fn rho_inv(u: &Vec8, c: &[f64; 4], p: &CayleyPlane) -> Result<Vec8> {
    let m = rho_matrix(u, p)?;
    let v = m.transpose() * nalgebra::Vector4::from_column_slice(c);
    Ok(p.from_normal_coords(&[v[0], v[1], v[2], v[3]]))
}

/// Splitting of the normal space along ∂X into directions tangent to the
/// scaffold W (`w_tangent_normals`, spanning ν_W(∂X)) and directions
/// normal to W (`k_basis`, spanning K). `conormal` is the inward unit
/// normal u of ∂X in X; the boundary is the orthogonal complement of u in
/// the plane.
#[derive(Debug, Clone)]
pub struct ScaffoldFiber {
    pub k: usize,
    pub conormal: Vec8,
    pub w_tangent_normals: Vec<Vec8>,
    pub k_basis: Vec<Vec8>,
}

impl ScaffoldFiber {
    /// Rotate the normal frame by `r` (columns are the new directions in
    /// normal coordinates); the first `k` become ν_W(∂X).
    pub fn new(p: &CayleyPlane, k: usize, conormal: Vec8, r: Option<&Matrix4<f64>>) -> Result<Self> {
        if k > 4 {
            return Err(Error::InvalidArgument(format!("k = {k} outside 0..4")));
        }
        check_tangent_unit(&conormal, p)?;
        let r = r.copied().unwrap_or_else(Matrix4::identity);
        if (r.transpose() * r - Matrix4::identity()).amax() > 1e-10 {
            return Err(Error::InvalidArgument("scaffold rotation is not orthogonal".into()));
        }
        let dirs: Vec<Vec8> = (0..4).map(|j| p.from_normal_coords(&[r[(0, j)], r[(1, j)], r[(2, j)], r[(3, j)]])).collect();
        Ok(ScaffoldFiber { k, conormal, w_tangent_normals: dirs[..k].to_vec(), k_basis: dirs[k..].to_vec() })
    }

    /// Boundary tangent frame `(b₁, b₂, b₃)` with `b₁×b₂×b₃ = u`.
    pub fn boundary_frame(&self, p: &CayleyPlane) -> [Vec8; 3] {
        let mut others: Vec<Vec8> = Vec::new();
        for t in &p.tangent {
            let w = t - self.conormal * self.conormal.dot(t);
            if w.norm() > 0.5 {
                others.push(w);
            }
            if others.len() == 3 {
                break;
            }
        }
        let q = gram_schmidt(&others).expect("complement of the conormal is 3-dimensional");
        let mut b = [q[0], q[1], q[2]];
        if cross3(&b[0], &b[1], &b[2]).dot(&self.conormal) < 0.0 {
            b.swap(0, 1);
        }
        b
    }
}

/// Orthogonal projections `(π_K x, π_ν x, π_W x)`.
pub fn scaffold_projections(x: &Vec8, p: &CayleyPlane, s: &ScaffoldFiber) -> (Vec8, Vec8, Vec8) {
    let proj = |dirs: &[Vec8]| dirs.iter().fold(Vec8::zeros(), |acc, d| acc + d * d.dot(x));
    let pk = proj(&s.k_basis);
    let pn = proj(&s.w_tangent_normals);
    let bdy = s.boundary_frame(p);
    let pw = proj(&bdy) + pn;
    (pk, pn, pw)
}

fn check_contains(w: &[Vec8], vs: &[Vec8]) -> Result<()> {
    for v in vs {
        let rest = w.iter().fold(*v, |acc, d| acc - d * d.dot(v));
        if rest.norm() > 1e-9 {
            return Err(Error::Precondition("boundary plane is not contained in W".into()));
        }
    }
    Ok(())
}

/// Orthogonality flags for a 5-dimensional scaffold: `(u ⊥ W, n ∈ T∂X)`
/// where `n = (*_W(Φ|_W))♯`.
pub fn orthogonality_char_dim5(boundary: &[Vec8; 3], u: &Vec8, w: &[Vec8; 5], tol: f64) -> Result<(bool, bool)> {
    check_contains(w, boundary)?;
    let flag_a = w.iter().all(|d| d.dot(u).abs() < tol);
    let n = to_ambient(&restrict_to_5plane(&phi0(), w)?, w);
    let off = boundary.iter().fold(n, |acc, b| acc - b * b.dot(&n));
    Ok((flag_a, off.norm() < tol))
}

/// Orthogonality flags for a 6-dimensional scaffold: `(u ⊥ W, ω|_∂X = 0)`.
pub fn orthogonality_char_dim6(boundary: &[Vec8; 3], u: &Vec8, w: &[Vec8; 6], tol: f64) -> Result<(bool, bool)> {
    check_contains(w, boundary)?;
    let flag_a = w.iter().all(|d| d.dot(u).abs() < tol);
    let omega = restrict_to_6plane(&phi0(), w)?.pushforward(w);
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in (i + 1)..3 {
            worst = worst.max(omega.eval(&[boundary[i], boundary[j]]).abs());
        }
    }
    Ok((flag_a, worst < tol))
}

/// Residuals of the pointwise structure-variation identities for
/// `χ = ⟨τ, e⟩`.
#[derive(Debug, Clone, Copy)]
pub struct VariationResidual {
    pub f_tilde: f64,
    pub h_tilde: f64,
}

impl VariationResidual {
    pub fn max(&self) -> f64 {
        self.f_tilde.max(self.h_tilde)
    }
}

fn chi(e2: &KForm, a: &Vec8, b: &Vec8, c: &Vec8, d: &Vec8) -> f64 {
    tau4(a, b, c, d).dot(e2)
}

/// The 4-form `χ = ⟨τ, e⟩` as a coefficient vector.
pub fn chi_form(e2: &KForm) -> KForm {
    crate::spin7::tau_pairing(e2)
}

/// Variation of F̃ along χ, computed from the defining sum
/// `Σ_{i≥2} (eⁱ∧(e₁⌟χ) − e¹∧(eᵢ⌟χ))|_X ⊗ π_E(e₁×eᵢ)`, in E coordinates.
pub fn f_tilde_variation(e2: &KForm, p: &CayleyPlane) -> [f64; 4] {
    let f = p.frame();
    let chi4 = chi_form(e2);
    let e1 = &f.e[0];
    let mut out = [0.0; 4];
    for i in 1..8 {
        let ei = &f.e[i];
        let term = KForm::from_vector(ei)
            .wedge(&chi4.interior(e1))
            .expect("degree 4")
            .sub(&KForm::from_vector(e1).wedge(&chi4.interior(ei)).expect("degree 4"));
        let coeff = term.eval(&p.tangent);
        let pe = pi_e(&cross2(e1, ei), p);
        for a in 0..4 {
            out[a] += coeff * pe[a];
        }
    }
    out
}

/// Variation of H̃ along χ, `Σ_{i} (eᵢ⌟χ)|_∂X ⊗ π_ν(eᵢ)` over a frame of W.
pub fn h_tilde_variation(e2: &KForm, p: &CayleyPlane, s: &ScaffoldFiber) -> Vec8 {
    let bdy = s.boundary_frame(p);
    let mut out = Vec8::zeros();
    let w_frame: Vec<Vec8> = bdy.iter().chain(s.w_tangent_normals.iter()).copied().collect();
    for wi in &w_frame {
        let coeff = chi(e2, wi, &bdy[0], &bdy[1], &bdy[2]);
        let (_, pn, _) = scaffold_projections(wi, p, s);
        out += pn * coeff;
    }
    out
}

fn pi_nu(x: &Vec8, s: &ScaffoldFiber) -> Vec8 {
    s.w_tangent_normals.iter().fold(Vec8::zeros(), |acc, d| acc + d * d.dot(x))
}

/// Max deviations of the F̃ and H̃ variations from `−π_E(e)` and
/// `π_ν ρ⁻¹ π_E(e)`.
pub fn structure_variation_identity(e2: &KForm, p: &CayleyPlane, s: &ScaffoldFiber) -> Result<VariationResidual> {
    let e7 = lambda2_project(e2).part7;
    let lhs_f = f_tilde_variation(&e7, p);
    let pe = pi_e(&e7, p);
    let f_tilde = (0..4).fold(0.0f64, |m, a| m.max((lhs_f[a] + pe[a]).abs()));
    // {u×n_a} is an orthonormal basis of E, so ρ⁻¹π_E(e) = Σ ⟨e, u×n_a⟩ n_a
    let lhs_h = h_tilde_variation(&e7, p, s);
    let coords: [f64; 4] = std::array::from_fn(|a| e7.dot(&cross2(&s.conormal, &p.normal[a])));
    let rhs_h = pi_nu(&p.from_normal_coords(&coords), s);
    Ok(VariationResidual { f_tilde, h_tilde: (lhs_h - rhs_h).amax() })
}

/// `π_ν ρ⁻¹` applied to the F̃ variation plus the H̃ variation.
pub fn b_tilde_cancellation(e2: &KForm, p: &CayleyPlane, s: &ScaffoldFiber) -> Result<f64> {
    let e7 = lambda2_project(e2).part7;
    let u = &s.conormal;
    // F̃ variation in a frame with e₁ = u
    let bdy = s.boundary_frame(p);
    let plane_u = CayleyPlane {
        tangent: [*u, bdy[0], bdy[1], bdy[2]],
        normal: p.normal,
        e_basis: std::array::from_fn(|a| cross2(u, &p.normal[a])),
    };
    let f_var = f_tilde_variation(&e7, &plane_u);
    let back = pi_nu(&rho_inv(u, &f_var, &plane_u)?, s);
    let h_var = h_tilde_variation(&e7, p, s);
    Ok((back + h_var).amax())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_frame_pattern() {
        let f = complete_spin7_frame(&e(1), &e(2), &e(3), &e(5)).unwrap();
        assert_eq!(f, Spin7Frame::standard());
        assert_eq!(f.pattern_residual(), 0.0);
    }

    #[test]
    fn calibration_of_coordinate_planes() {
        assert_eq!(calibration_value(&[e(1), e(2), e(3), e(4)]).unwrap(), 1.0);
        assert_eq!(calibration_value(&[e(1), e(2), e(7), e(8)]).unwrap(), -1.0);
        assert_eq!(calibration_value(&[e(2), e(1), e(7), e(8)]).unwrap(), 1.0);
    }

    #[test]
    fn e5_equal_e1_rejected() {
        let err = complete_spin7_frame(&e(1), &e(2), &e(3), &e(1)).unwrap_err();
        assert!(err.to_string().contains("e1"));
    }
}
