//! Seeded random vectors, frames and planes.

use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cayley::{complete_spin7_frame, gram_schmidt, Spin7Frame};
use crate::forms::Vec8;
use crate::spin7::cross3;

/// Counter-based generator for one experiment cell: the stream is selected
/// by `cell`, so cells can run in any order.
pub fn cell_rng(seed: u64, cell: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell);
    rng
}

pub fn gaussian_vec8<R: Rng>(rng: &mut R) -> Vec8 {
    Vec8::from_fn(|_, _| rng.sample(StandardNormal))
}

pub fn unit_vec8<R: Rng>(rng: &mut R) -> Vec8 {
    loop {
        let v = gaussian_vec8(rng);
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Random `(e₁, e₂, e₃, e₅)` satisfying the completion preconditions.
pub fn admissible_quadruple<R: Rng>(rng: &mut R) -> [Vec8; 4] {
    loop {
        let vs = [gaussian_vec8(rng), gaussian_vec8(rng), gaussian_vec8(rng)];
        let Ok(q) = gram_schmidt(&vs) else { continue };
        let e4 = -cross3(&q[0], &q[1], &q[2]);
        let Ok(full) = gram_schmidt(&[q[0], q[1], q[2], e4, gaussian_vec8(rng)]) else { continue };
        return [q[0], q[1], q[2], full[4]];
    }
}

pub fn spin7_frame<R: Rng>(rng: &mut R) -> Spin7Frame {
    let [a, b, c, d] = admissible_quadruple(rng);
    complete_spin7_frame(&a, &b, &c, &d).expect("admissible by construction")
}

/// Spanning 4-tuple of a random 4-plane (Gaussian, not orthonormalised).
pub fn plane<R: Rng>(rng: &mut R) -> [Vec8; 4] {
    std::array::from_fn(|_| gaussian_vec8(rng))
}

/// Random rotation in SO(4).
pub fn rotation4<R: Rng>(rng: &mut R) -> Matrix4<f64> {
    let g = Matrix4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..4 {
        if r[(j, j)] < 0.0 {
            for i in 0..4 {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..4 {
            q[(i, 0)] = -q[(i, 0)];
        }
    }
    q
}

/// Random antisymmetric 4×4 matrix with Gaussian entries.
pub fn antisymmetric4<R: Rng>(rng: &mut R) -> Matrix4<f64> {
    let g = Matrix4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    (g - g.transpose()) * 0.5
}
