//! Brute-force reference computations shared by the integration tests.
//!
//! Everything here works with explicit index tuples and Levi-Civita signs
//! so it shares no code path with the library's mask-based algebra.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// The 14 monomials of the model form, typed in from the definition.
pub const PHI0_LITERAL: [([usize; 4], f64); 14] = [
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

/// Parity of a sequence of distinct integers; 0 if any repeat.
pub fn levi_civita(seq: &[usize]) -> f64 {
    for i in 0..seq.len() {
        for j in (i + 1)..seq.len() {
            if seq[i] == seq[j] {
                return 0.0;
            }
        }
    }
    let mut inv = 0;
    for i in 0..seq.len() {
        for j in (i + 1)..seq.len() {
            if seq[i] > seq[j] {
                inv += 1;
            }
        }
    }
    if inv % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn pairs() -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for a in 1..=8 {
        for b in (a + 1)..=8 {
            out.push([a, b]);
        }
    }
    out
}

/// The 28×28 matrix of `α ↦ *(α∧Φ₀)` from the defining formula
/// `(*(α∧Φ))_{gh} = Σ α_{ab} Φ_{cdef} ε_{abcdefgh}` over increasing tuples.
pub fn star_wedge_matrix() -> DMatrix<f64> {
    let ps = pairs();
    let mut m = DMatrix::zeros(28, 28);
    for (col, ab) in ps.iter().enumerate() {
        for (row, gh) in ps.iter().enumerate() {
            let mut s = 0.0;
            for (cdef, c) in PHI0_LITERAL {
                let seq = [ab[0], ab[1], cdef[0], cdef[1], cdef[2], cdef[3], gh[0], gh[1]];
                s += c * levi_civita(&seq);
            }
            m[(row, col)] = s;
        }
    }
    m
}

/// Φ₀(a,b,c,d) by full antisymmetrisation of the literal monomials.
pub fn phi0_eval(a: &[f64; 8], b: &[f64; 8], c: &[f64; 8], d: &[f64; 8]) -> f64 {
    let mut s = 0.0;
    for (idx, coef) in PHI0_LITERAL {
        let perms = permutations4();
        for p in perms {
            let sign = levi_civita(&p);
            s += coef * sign * a[idx[p[0]] - 1] * b[idx[p[1]] - 1] * c[idx[p[2]] - 1] * d[idx[p[3]] - 1];
        }
    }
    s
}

pub fn permutations4() -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    if levi_civita(&p) != 0.0 {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Sample mean and slope of `log(err)` against `log(h)`.
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let n = h.len() as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
