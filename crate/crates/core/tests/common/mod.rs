//! Oracles shared by the integration tests. Nothing here calls into the
//! model code it is used to check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut a = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Grounded conductance matrix of the two-zone network, stamped edge by edge.
/// Node 0 is ambient; nodes 1..=4 are zone 1, zone 2, wall 3, wall 4.
pub fn stamped_conductance(r13: f64, r24: f64, r34: f64, r10: f64, r20: f64) -> DMatrix<f64> {
    let edges = [(1, 3, r13), (2, 4, r24), (3, 4, r34), (1, 0, r10), (2, 0, r20)];
    let mut lap = DMatrix::zeros(5, 5);
    for (a, b, r) in edges {
        let g = 1.0 / r;
        lap[(a, a)] += g;
        lap[(b, b)] += g;
        lap[(a, b)] -= g;
        lap[(b, a)] -= g;
    }
    lap.view((1, 1), (4, 4)).into_owned()
}

/// Wall temperatures at rest, from the two wall balance equations by Cramer's rule.
pub fn walls_by_cramer(t1: f64, t2: f64, r13: f64, r24: f64, r34: f64) -> (f64, f64) {
    let (a, b, c) = (1.0 / r13, 1.0 / r24, 1.0 / r34);
    // (a + c) T3 - c T4 = a t1 ;  -c T3 + (b + c) T4 = b t2
    let det = (a + c) * (b + c) - c * c;
    let t3 = (a * t1 * (b + c) + c * b * t2) / det;
    let t4 = ((a + c) * b * t2 + c * a * t1) / det;
    (t3, t4)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> DVector<f64> {
    DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(l, h)| rng.random_range(*l..*h)))
}

/// Second-order central differences of uniformly spaced samples, interior points only.
pub fn central_rates(values: &[f64], h: f64) -> Vec<f64> {
    values.windows(3).map(|w| (w[2] - w[0]) / (2.0 * h)).collect()
}
