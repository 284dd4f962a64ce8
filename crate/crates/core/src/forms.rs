//! Exterior algebra of ℝ⁸ in the standard orthonormal basis.
//!
//! A k-form is stored as its coefficients over strictly increasing index
//! sets in lexicographic order. Index sets are handled internally as 8-bit
//! masks (bit `i` set means `e^{i+1}` is present); the public constructors
//! take 1-based index lists to match the usual `e^{1234}` notation.

use std::fmt;
use std::sync::LazyLock;

use nalgebra::{SMatrix, SVector};

use crate::{Error, Result};

/// Vector in ℝ⁸ with the Euclidean metric.
pub type Vec8 = SVector<f64, 8>;

/// The `i`-th standard basis vector, 1-based.
pub fn e(i: usize) -> Vec8 {
    assert!((1..=8).contains(&i), "basis index {i} out of range");
    let mut v = Vec8::zeros();
    v[i - 1] = 1.0;
    v
}

struct IndexTables {
    masks: [Vec<u8>; 9],
    position: [usize; 256],
}

static TABLES: LazyLock<IndexTables> = LazyLock::new(|| {
    let mut masks: [Vec<u8>; 9] = Default::default();
    let mut all: Vec<u8> = (0..=255u8).collect();
    // lexicographic order on sorted index tuples
    all.sort_by_key(|&m| mask_indices(m));
    for m in all {
        masks[m.count_ones() as usize].push(m);
    }
    let mut position = [0usize; 256];
    for list in &masks {
        for (p, &m) in list.iter().enumerate() {
            position[m as usize] = p;
        }
    }
    IndexTables { masks, position }
});

fn mask_indices(m: u8) -> Vec<usize> {
    (0..8).filter(|i| m & (1 << i) != 0).collect()
}

/// Sign of the permutation that sorts the concatenation `(a, b)` of two
/// disjoint increasing index sets.
fn shuffle_sign(a: u8, b: u8) -> f64 {
    let mut inversions = 0u32;
    for i in 0..8 {
        if a & (1 << i) != 0 {
            // count elements of b smaller than i
            inversions += (b & ((1u16 << i) - 1) as u8).count_ones();
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Binomial coefficient C(8, k).
pub fn dim(k: usize) -> usize {
    TABLES.masks[k].len()
}

/// The increasing 1-based index tuple of the `p`-th basis element of Λᵏ.
pub fn basis_indices(k: usize, p: usize) -> Vec<usize> {
    mask_indices(TABLES.masks[k][p]).into_iter().map(|i| i + 1).collect()
}

fn mask_from(indices: &[usize]) -> Result<(u8, f64)> {
    let mut mask = 0u8;
    let mut sign = 1.0;
    for (n, &i) in indices.iter().enumerate() {
        if !(1..=8).contains(&i) {
            return Err(Error::InvalidArgument(format!("form index {i} outside 1..8")));
        }
        let bit = 1u8 << (i - 1);
        if mask & bit != 0 {
            return Ok((0, 0.0));
        }
        // moving index i to its sorted position past larger earlier entries
        let larger = indices[..n].iter().filter(|&&j| j > i).count();
        if larger % 2 == 1 {
            sign = -sign;
        }
        mask |= bit;
    }
    Ok((mask, sign))
}

/// Element of Λᵏ(ℝ⁸)*.
#[derive(Clone, PartialEq)]
pub struct KForm {
    degree: usize,
    coeffs: Vec<f64>,
}

impl KForm {
    pub fn zero(degree: usize) -> Self {
        assert!(degree <= 8);
        KForm { degree, coeffs: vec![0.0; dim(degree)] }
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > 8 || coeffs.len() != dim(degree) {
            return Err(Error::InvalidArgument(format!(
                "degree {degree} form needs {} coefficients, got {}",
                if degree <= 8 { dim(degree) } else { 0 },
                coeffs.len()
            )));
        }
        Ok(KForm { degree, coeffs })
    }

    /// Monomial `c·e^{i₁…i_k}`; indices need not be sorted.
    pub fn monomial(indices: &[usize], c: f64) -> Result<Self> {
        let mut f = KForm::zero(indices.len());
        f.add_monomial(indices, c)?;
        Ok(f)
    }

    /// Sum of monomials of a common degree.
    pub fn from_terms(degree: usize, terms: &[(&[usize], f64)]) -> Result<Self> {
        let mut f = KForm::zero(degree);
        for (idx, c) in terms {
            if idx.len() != degree {
                return Err(Error::InvalidArgument(format!("term {idx:?} has wrong degree")));
            }
            f.add_monomial(idx, *c)?;
        }
        Ok(f)
    }

    pub fn add_monomial(&mut self, indices: &[usize], c: f64) -> Result<()> {
        if indices.len() != self.degree {
            return Err(Error::InvalidArgument(format!("term {indices:?} has wrong degree")));
        }
        let (mask, sign) = mask_from(indices)?;
        if sign != 0.0 {
            self.coeffs[TABLES.position[mask as usize]] += sign * c;
        }
        Ok(())
    }

    /// The 1-form dual to `v`.
    pub fn from_vector(v: &Vec8) -> Self {
        KForm { degree: 1, coeffs: v.iter().copied().collect() }
    }

    /// Inverse of [`KForm::from_vector`]; panics unless degree 1.
    pub fn to_vector(&self) -> Vec8 {
        assert_eq!(self.degree, 1, "sharp of a non-1-form");
        Vec8::from_column_slice(&self.coeffs)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient of `e^{indices}` (sign-adjusted if unsorted).
    pub fn coeff(&self, indices: &[usize]) -> f64 {
        assert_eq!(indices.len(), self.degree);
        let (mask, sign) = mask_from(indices).expect("valid indices");
        if sign == 0.0 {
            return 0.0;
        }
        sign * self.coeffs[TABLES.position[mask as usize]]
    }

    pub fn dot(&self, other: &KForm) -> f64 {
        assert_eq!(self.degree, other.degree, "inner product of forms of different degree");
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> KForm {
        KForm { degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &KForm) -> KForm {
        assert_eq!(self.degree, other.degree);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        KForm { degree: self.degree, coeffs }
    }

    pub fn sub(&self, other: &KForm) -> KForm {
        self.add(&other.scale(-1.0))
    }

    /// `self += s·other`
    pub fn axpy(&mut self, s: f64, other: &KForm) {
        assert_eq!(self.degree, other.degree);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    fn terms(&self) -> impl Iterator<Item = (u8, f64)> + '_ {
        let masks = &TABLES.masks[self.degree];
        self.coeffs.iter().enumerate().filter(|(_, c)| **c != 0.0).map(move |(p, &c)| (masks[p], c))
    }

    /// Exterior product.
    pub fn wedge(&self, other: &KForm) -> Result<KForm> {
        let degree = self.degree + other.degree;
        if degree > 8 {
            return Err(Error::DegreeOverflow(degree));
        }
        let mut out = KForm::zero(degree);
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                if a & b == 0 {
                    out.coeffs[TABLES.position[(a | b) as usize]] += shuffle_sign(a, b) * ca * cb;
                }
            }
        }
        Ok(out)
    }

    /// Hodge star for the orientation `e¹∧…∧e⁸`.
    pub fn hodge_star(&self) -> KForm {
        let mut out = KForm::zero(8 - self.degree);
        for (m, c) in self.terms() {
            let comp = !m;
            out.coeffs[TABLES.position[comp as usize]] += shuffle_sign(m, comp) * c;
        }
        out
    }

    /// Interior product `v ⌟ self`.
    pub fn interior(&self, v: &Vec8) -> KForm {
        assert!(self.degree >= 1, "interior product of a 0-form");
        let mut out = KForm::zero(self.degree - 1);
        for (m, c) in self.terms() {
            let mut sign = 1.0;
            for i in 0..8 {
                if m & (1 << i) != 0 {
                    let rest = m & !(1 << i);
                    out.coeffs[TABLES.position[rest as usize]] += sign * v[i] * c;
                    sign = -sign;
                }
            }
        }
        out
    }

    /// Evaluate on `degree` vectors.
    pub fn eval(&self, vs: &[Vec8]) -> f64 {
        assert_eq!(vs.len(), self.degree, "wrong number of arguments");
        let k = self.degree;
        let mut total = 0.0;
        for (m, c) in self.terms() {
            let idx = mask_indices(m);
            total += c * minor(vs, &idx, k);
        }
        total
    }

    /// Pull back along the linear map whose columns are `frame`, i.e. the
    /// restriction to `span(frame)` expressed in frame coordinates. The
    /// result lives on ℝ^m with m = `frame.len()` ≤ 8, stored in the first m
    /// coordinates.
    pub fn pullback(&self, frame: &[Vec8]) -> KForm {
        let m = frame.len();
        let mut out = KForm::zero(self.degree);
        for (p, &mask) in TABLES.masks[self.degree].iter().enumerate() {
            let idx = mask_indices(mask);
            if idx.iter().any(|&i| i >= m) {
                continue;
            }
            let vs: Vec<Vec8> = idx.iter().map(|&i| frame[i]).collect();
            out.coeffs[p] = self.eval(&vs);
        }
        out
    }

    /// Push forward a form living on the first `frame.len()` coordinates to
    /// ℝ⁸ via the orthonormal frame (inverse of `pullback` on the span).
    pub fn pushforward(&self, frame: &[Vec8]) -> KForm {
        let mut out = KForm::zero(self.degree);
        for (mask, c) in self.terms() {
            let idx = mask_indices(mask);
            assert!(idx.iter().all(|&i| i < frame.len()), "form not supported on frame coordinates");
            let mut term = KForm::zero(0);
            term.coeffs[0] = c;
            for &i in &idx {
                term = term.wedge(&KForm::from_vector(&frame[i])).expect("degree within range");
            }
            out = out.add(&term);
        }
        out
    }

    /// Hodge star on the first `m` coordinates, orientation `e¹∧…∧e^m`.
    pub fn hodge_star_in(&self, m: usize) -> KForm {
        assert!(self.degree <= m && m <= 8);
        let full: u8 = if m == 8 { 0xff } else { ((1u16 << m) - 1) as u8 };
        let mut out = KForm::zero(m - self.degree);
        for (mask, c) in self.terms() {
            assert!(mask & !full == 0, "form not supported on first {m} coordinates");
            let comp = full & !mask;
            out.coeffs[TABLES.position[comp as usize]] += shuffle_sign(mask, comp) * c;
        }
        out
    }
}

fn minor(vs: &[Vec8], rows: &[usize], k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => vs[0][rows[0]],
        2 => vs[0][rows[0]] * vs[1][rows[1]] - vs[0][rows[1]] * vs[1][rows[0]],
        3 => {
            let m = SMatrix::<f64, 3, 3>::from_fn(|r, c| vs[c][rows[r]]);
            m.determinant()
        }
        4 => {
            let m = SMatrix::<f64, 4, 4>::from_fn(|r, c| vs[c][rows[r]]);
            m.determinant()
        }
        _ => {
            let m = nalgebra::DMatrix::<f64>::from_fn(k, k, |r, c| vs[c][rows[r]]);
            m.determinant()
        }
    }
}

impl fmt::Debug for KForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KForm<{}>(", self.degree)?;
        let mut first = true;
        for (m, c) in self.terms() {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            let idx: String = mask_indices(m).iter().map(|i| char::from(b'1' + *i as u8)).collect();
            write!(f, "{c:+}e{idx}")?;
        }
        write!(f, ")")
    }
}

/// The volume form `e¹∧…∧e⁸`.
pub fn volume_form() -> KForm {
    KForm::monomial(&[1, 2, 3, 4, 5, 6, 7, 8], 1.0).expect("valid")
}
