//! The model Spin(7) form on ℝ⁸ and the algebra it induces: 2- and 3-fold
//! cross products, the Λ²₇-valued 4-form τ, and the irreducible splittings
//! of Λ² and Λ⁴.

use std::sync::LazyLock;

use nalgebra::DMatrix;

use crate::forms::{self, e, KForm, Vec8};

const PHI0_TERMS: [([usize; 4], f64); 14] = [
    ([1, 2, 3, 4], 1.0),
    ([1, 2, 5, 6], 1.0),
    ([1, 2, 7, 8], -1.0),
    ([1, 3, 5, 7], 1.0),
    ([1, 3, 6, 8], 1.0),
    ([1, 4, 5, 8], 1.0),
    ([1, 4, 6, 7], -1.0),
    ([2, 3, 5, 8], -1.0),
    ([2, 3, 6, 7], 1.0),
    ([2, 4, 5, 7], 1.0),
    ([2, 4, 6, 8], 1.0),
    ([3, 4, 5, 6], -1.0),
    ([3, 4, 7, 8], 1.0),
    ([5, 6, 7, 8], 1.0),
];

static PHI0: LazyLock<KForm> = LazyLock::new(|| {
    let mut f = KForm::zero(4);
    for (idx, c) in PHI0_TERMS {
        f.add_monomial(&idx, c).expect("valid monomial");
    }
    f
});

/// Dense totally antisymmetric tensor `Φ₀[a][b][c][d]`, 0-based.
static PHI0_TENSOR: LazyLock<Box<[[[[f64; 8]; 8]; 8]; 8]>> = LazyLock::new(|| {
    let mut t = Box::new([[[[0.0; 8]; 8]; 8]; 8]);
    let phi = &*PHI0;
    for a in 0..8 {
        for b in 0..8 {
            for c in 0..8 {
                for d in 0..8 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        t[a][b][c][d] = phi.coeff(&[a + 1, b + 1, c + 1, d + 1]);
                    }
                }
            }
        }
    }
    t
});

/// The model Spin(7) 4-form Φ₀.
pub fn phi0() -> KForm {
    PHI0.clone()
}

/// `Φ₀(a, b, c, d)` via the cached dense tensor.
pub fn phi0_eval(a: &Vec8, b: &Vec8, c: &Vec8, d: &Vec8) -> f64 {
    let t = &*PHI0_TENSOR;
    let mut s = 0.0;
    for i in 0..8 {
        if a[i] == 0.0 {
            continue;
        }
        for j in 0..8 {
            let ab = a[i] * b[j];
            if ab == 0.0 || i == j {
                continue;
            }
            for k in 0..8 {
                let abc = ab * c[k];
                if abc == 0.0 {
                    continue;
                }
                let row = &t[i][j][k];
                for l in 0..8 {
                    s += abc * row[l] * d[l];
                }
            }
        }
    }
    s
}

/// 2-fold cross product `v×w = ½(v∧w − *(v∧w∧Φ))` for an arbitrary 4-form.
pub fn cross2_with(phi: &KForm, v: &Vec8, w: &Vec8) -> KForm {
    let vw = KForm::from_vector(v).wedge(&KForm::from_vector(w)).expect("degree 2");
    let twisted = vw.wedge(phi).expect("degree 6").hodge_star();
    vw.sub(&twisted).scale(0.5)
}

/// 2-fold cross product for Φ₀, a Λ²₇-valued 2-form.
pub fn cross2(v: &Vec8, w: &Vec8) -> KForm {
    // *(v∧w∧Φ₀)_{ab} = Σ_{i,j} Φ₀_{abij} v_i w_j; checked against
    // cross2_with in the tests below.
    let t = &*PHI0_TENSOR;
    let mut out = KForm::zero(2);
    let c = out.coeffs_mut();
    let mut p = 0;
    for a in 0..8 {
        for b in (a + 1)..8 {
            let mut s = 0.0;
            for i in 0..8 {
                for j in 0..8 {
                    s += t[a][b][i][j] * v[i] * w[j];
                }
            }
            let vw = v[a] * w[b] - v[b] * w[a];
            c[p] = 0.5 * (vw - s);
            p += 1;
        }
    }
    out
}

/// 3-fold cross product `u×v×w = (u⌟(v⌟(w⌟Φ)))♯` for an arbitrary 4-form.
pub fn cross3_with(phi: &KForm, u: &Vec8, v: &Vec8, w: &Vec8) -> Vec8 {
    phi.interior(w).interior(v).interior(u).to_vector()
}

/// 3-fold cross product for Φ₀: `⟨u×v×w, x⟩ = Φ₀(w, v, u, x)`.
pub fn cross3(u: &Vec8, v: &Vec8, w: &Vec8) -> Vec8 {
    let t = &*PHI0_TENSOR;
    let mut out = Vec8::zeros();
    for i in 0..8 {
        if w[i] == 0.0 {
            continue;
        }
        for j in 0..8 {
            let wv = w[i] * v[j];
            if wv == 0.0 {
                continue;
            }
            for k in 0..8 {
                let wvu = wv * u[k];
                if wvu == 0.0 {
                    continue;
                }
                for l in 0..8 {
                    out[l] += wvu * t[i][j][k][l];
                }
            }
        }
    }
    out
}

/// The Λ²₇-valued 4-form τ(a,b,c,d) =
/// −a×(b×c×d) + g(a,b)(c×d) + g(a,c)(d×b) + g(a,d)(b×c).
pub fn tau4(a: &Vec8, b: &Vec8, c: &Vec8, d: &Vec8) -> KForm {
    let bcd = cross3(b, c, d);
    let mut out = cross2(a, &bcd).scale(-1.0);
    out.axpy(a.dot(b), &cross2(c, d));
    out.axpy(a.dot(c), &cross2(d, b));
    out.axpy(a.dot(d), &cross2(b, c));
    out
}

/// Matrix of `α ↦ *(α∧Φ)` on Λ² in the lexicographic basis.
pub fn star_wedge_operator(phi: &KForm) -> DMatrix<f64> {
    let n = forms::dim(2);
    let mut m = DMatrix::zeros(n, n);
    for col in 0..n {
        let mut basis = KForm::zero(2);
        basis.coeffs_mut()[col] = 1.0;
        let img = basis.wedge(phi).expect("degree 6").hodge_star();
        for row in 0..n {
            m[(row, col)] = img.coeffs()[row];
        }
    }
    m
}

/// Orthogonal splitting Λ² = Λ²₇ ⊕ Λ²₂₁.
#[derive(Debug, Clone)]
pub struct Lambda2Split {
    pub part7: KForm,
    pub part21: KForm,
}

/// Orthogonal splitting Λ⁴ = Λ⁴₁ ⊕ Λ⁴₇ ⊕ Λ⁴₂₇ ⊕ Λ⁴₃₅.
#[derive(Debug, Clone)]
pub struct Lambda4Split {
    pub part1: KForm,
    pub part7: KForm,
    pub part27: KForm,
    pub part35: KForm,
}

/// Λ²₇ component `¼(α − *(α∧Φ₀))` and its complement.
pub fn lambda2_project(alpha: &KForm) -> Lambda2Split {
    assert_eq!(alpha.degree(), 2);
    let twisted = alpha.wedge(&PHI0).expect("degree 6").hodge_star();
    let part7 = alpha.sub(&twisted).scale(0.25);
    let part21 = alpha.sub(&part7);
    Lambda2Split { part7, part21 }
}

/// Generator `w∧(v⌟Φ₀) − v∧(w⌟Φ₀)` of Λ⁴₇.
pub fn lambda4_7_generator(v: &Vec8, w: &Vec8) -> KForm {
    let wv = KForm::from_vector(w).wedge(&PHI0.interior(v)).expect("degree 4");
    let vw = KForm::from_vector(v).wedge(&PHI0.interior(w)).expect("degree 4");
    wv.sub(&vw)
}

/// Gram matrix rank and orthonormal basis of the span of a set of forms.
pub fn span_basis(gens: &[KForm], rel_tol: f64) -> Vec<KForm> {
    if gens.is_empty() {
        return Vec::new();
    }
    let n = gens[0].coeffs().len();
    let m = DMatrix::from_fn(n, gens.len(), |r, c| gens[c].coeffs()[r]);
    let svd = m.svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.max();
    let deg = gens[0].degree();
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > rel_tol * smax)
        .map(|(i, _)| KForm::from_coeffs(deg, u.column(i).iter().copied().collect()).expect("dims"))
        .collect()
}

static LAMBDA4_7_BASIS: LazyLock<Vec<KForm>> = LazyLock::new(|| {
    let mut gens = Vec::new();
    for i in 1..=8 {
        for j in (i + 1)..=8 {
            gens.push(lambda4_7_generator(&e(i), &e(j)));
        }
    }
    span_basis(&gens, 1e-10)
});

/// Orthonormal basis of Λ⁴₇ (the span of the generators above).
pub fn lambda4_7_basis() -> &'static [KForm] {
    &LAMBDA4_7_BASIS
}

/// Spin(7)-irreducible parts of a 4-form.
pub fn lambda4_project(xi: &KForm) -> Lambda4Split {
    assert_eq!(xi.degree(), 4);
    let star = xi.hodge_star();
    let part35 = xi.sub(&star).scale(0.5);
    let selfdual = xi.add(&star).scale(0.5);
    let part1 = PHI0.scale(xi.dot(&PHI0) / PHI0.norm_squared());
    let mut part7 = KForm::zero(4);
    for b in lambda4_7_basis() {
        part7.axpy(xi.dot(b), b);
    }
    let part27 = selfdual.sub(&part1).sub(&part7);
    Lambda4Split { part1, part7, part27, part35 }
}

/// The 4-form `I ↦ ⟨τ(e_I), β⟩` for a 2-form β.
pub fn tau_pairing(beta: &KForm) -> KForm {
    let mut out = KForm::zero(4);
    for p in 0..forms::dim(4) {
        let idx = forms::basis_indices(4, p);
        let t = tau4(&e(idx[0]), &e(idx[1]), &e(idx[2]), &e(idx[3]));
        out.coeffs_mut()[p] = t.dot(beta);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi0_coefficients() {
        let p = phi0();
        assert_eq!(p.coeff(&[1, 2, 3, 4]), 1.0);
        assert_eq!(p.coeff(&[3, 4, 5, 6]), -1.0);
        assert_eq!(p.norm_squared(), 14.0);
        assert_eq!(p.hodge_star(), p);
    }

    #[test]
    fn fast_paths_match_generic_forms() {
        let v = Vec8::from_fn(|i, _| (i as f64 * 0.7).sin());
        let w = Vec8::from_fn(|i, _| (i as f64 * 1.3 + 0.2).cos());
        let u = Vec8::from_fn(|i, _| (i as f64 * 0.3 - 1.0).sin());
        let p = phi0();
        assert!(cross2(&v, &w).sub(&cross2_with(&p, &v, &w)).max_abs() < 1e-14);
        assert!((cross3(&u, &v, &w) - cross3_with(&p, &u, &v, &w)).amax() < 1e-14);
        let x = Vec8::from_fn(|i, _| i as f64 - 3.5);
        assert!((phi0_eval(&u, &v, &w, &x) - p.eval(&[u, v, w, x])).abs() < 1e-12);
    }

    #[test]
    fn basic_cross_values() {
        let c = cross2(&e(1), &e(5));
        let expect = KForm::from_terms(2, &[(&[1, 5], 0.5), (&[2, 6], 0.5), (&[3, 7], 0.5), (&[4, 8], 0.5)]).unwrap();
        assert!(c.sub(&expect).max_abs() < 1e-15);
        assert_eq!(cross3(&e(2), &e(3), &e(4)), e(1));
        assert_eq!(cross3(&e(1), &e(2), &e(3)), -e(4));
    }

    #[test]
    fn lambda4_7_has_rank_seven() {
        assert_eq!(lambda4_7_basis().len(), 7);
    }
}
