//! Constrained orthonormal projection of k-mer frequencies.
//!
//! A k-mer frequency vector obeys linear constraints that make raw counts
//! redundant: strand symmetry `f(w) = f(rc(w))`, consistency of the
//! `(k-1)`-mer marginals (`sum_b f(ub) = sum_b f(bu)`), and summing to one.
//! The kernel is an orthonormal basis of the subspace on which none of these
//! constraints carry information. For k = 4 it has 103 columns.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::{Error, Result};

/// Relative eigenvalue cut-off separating the null space of the constraint Gram matrix.
const NULL_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct KmerKernel {
    k: usize,
    /// `4^k x projected_dim`, orthonormal columns.
    matrix: Array2<f64>,
}

impl KmerKernel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn raw_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn projected_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// Index of the reverse complement of k-mer `idx` (A=0, C=1, G=2, T=3, big-endian).
pub fn reverse_complement_index(mut idx: usize, k: usize) -> usize {
    let mut out = 0;
    for _ in 0..k {
        out = (out << 2) | (3 - (idx & 3));
        idx >>= 2;
    }
    out
}

pub fn build_kernel(k: usize) -> Result<KmerKernel> {
    if !(2..=5).contains(&k) {
        return Err(Error::InvalidArgument(format!("k-mer length must be in 2..=5, got {k}")));
    }
    let raw = 1usize << (2 * k);

    // Orthonormal basis of the strand-symmetric subspace: one column per
    // canonical k-mer class.
    let mut classes: Vec<(usize, usize)> = Vec::new();
    for w in 0..raw {
        let r = reverse_complement_index(w, k);
        if w <= r {
            classes.push((w, r));
        }
    }
    let member_weight = |w: usize, r: usize| if w == r { 1.0 } else { std::f64::consts::FRAC_1_SQRT_2 };

    // Remaining constraints, restricted to the symmetric subspace.
    let suffix_len = raw / 4;
    let n_rows = suffix_len + 1;
    let mut constraints = DMatrix::<f64>::zeros(n_rows, classes.len());
    for (col, &(w, r)) in classes.iter().enumerate() {
        let weight = member_weight(w, r);
        let members: &[usize] = if w == r { &[w][..] } else { &[w, r][..] };
        for &m in members {
            // m = u·b contributes +1 to row u; m = b·u contributes -1 to row u.
            constraints[(m >> 2, col)] += weight;
            constraints[(m % suffix_len, col)] -= weight;
            constraints[(suffix_len, col)] += weight;
        }
    }

    let gram = constraints.transpose() * &constraints;
    let eig = SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let null_cols: Vec<usize> =
        (0..classes.len()).filter(|&i| eig.eigenvalues[i].abs() <= NULL_TOL * scale).collect();

    let mut matrix = Array2::<f64>::zeros((raw, null_cols.len()));
    for (out_col, &ec) in null_cols.iter().enumerate() {
        for (cls, &(w, r)) in classes.iter().enumerate() {
            let v = eig.eigenvectors[(cls, ec)] * member_weight(w, r);
            matrix[(w, out_col)] = v;
            matrix[(r, out_col)] = v;
        }
    }
    if k == 4 && matrix.ncols() != 103 {
        return Err(Error::Degenerate(format!("tetramer kernel has {} dimensions, expected 103", matrix.ncols())));
    }
    Ok(KmerKernel { k, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_k() {
        assert!(build_kernel(1).is_err());
        assert!(build_kernel(6).is_err());
    }

    #[test]
    fn tetramer_kernel_has_103_orthonormal_columns() {
        let kern = build_kernel(4).unwrap();
        assert_eq!(kern.raw_dim(), 256);
        assert_eq!(kern.projected_dim(), 103);
        let m = kern.matrix();
        let gram = m.t().dot(m);
        let max_dev = gram
            .indexed_iter()
            .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-9, "max |KtK - I| = {max_dev}");
    }

    #[test]
    fn rows_of_reverse_complements_coincide() {
        for k in 2..=5 {
            let kern = build_kernel(k).unwrap();
            let m = kern.matrix();
            for w in 0..kern.raw_dim() {
                let r = reverse_complement_index(w, k);
                assert_eq!(m.row(w), m.row(r));
            }
        }
    }

    #[test]
    fn reverse_complement_index_examples() {
        // AAAA <-> TTTT, ACGT is its own reverse complement
        assert_eq!(reverse_complement_index(0, 4), 255);
        assert_eq!(reverse_complement_index(0b00_01_10_11, 4), 0b00_01_10_11);
        // AC (0b0001) -> GT (0b1011)
        assert_eq!(reverse_complement_index(0b0001, 2), 0b1011);
    }
}
