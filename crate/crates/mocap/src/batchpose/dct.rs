use nalgebra::DMatrix;

use crate::{Error, Result};

/// The trajectory subspace spanned by the `K` lowest-frequency orthonormal
/// DCT-II rows over a batch of length `L`, plus the nullspace projector
/// `P = I − Bᵀ B` that maps a trajectory to its out-of-subspace residual.
#[derive(Debug, Clone)]
pub struct DctSubspace {
    /// `K × L`, orthonormal rows, row 0 constant.
    pub basis: DMatrix<f64>,
    /// `L × L`, symmetric and idempotent.
    pub projector: DMatrix<f64>,
}

impl DctSubspace {
    pub fn k(&self) -> usize {
        self.basis.nrows()
    }

    pub fn batch_len(&self) -> usize {
        self.basis.ncols()
    }
}

/// Builds the `K`-dimensional DCT-II subspace for a batch of `batch_len`
/// frames. `batch_len` must be at least `k`.
pub fn dct_basis(batch_len: usize, k: usize) -> Result<DctSubspace> {
    if batch_len < k {
        return Err(Error::InvalidInput(format!(
            "batch length {batch_len} is below the subspace dimension {k}"
        )));
    }
    let l = batch_len as f64;
    let basis = DMatrix::from_fn(k, batch_len, |row, col| {
        let scale = if row == 0 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
        scale * (std::f64::consts::PI * (2.0 * col as f64 + 1.0) * row as f64 / (2.0 * l)).cos()
    });
    let projector = DMatrix::identity(batch_len, batch_len) - basis.transpose() * &basis;
    Ok(DctSubspace { basis, projector })
}

/// The full orthonormal DCT-II row `row` of length `batch_len`; used by
/// tests and the synthetic motion generator.
pub fn dct_row(batch_len: usize, row: usize) -> nalgebra::DVector<f64> {
    let l = batch_len as f64;
    let scale = if row == 0 { (1.0 / l).sqrt() } else { (2.0 / l).sqrt() };
    nalgebra::DVector::from_fn(batch_len, |col, _| {
        scale * (std::f64::consts::PI * (2.0 * col as f64 + 1.0) * row as f64 / (2.0 * l)).cos()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn rows_are_orthonormal() {
        let sub = dct_basis(50, 8).unwrap();
        let gram = &sub.basis * sub.basis.transpose();
        let eye = DMatrix::identity(8, 8);
        assert!((gram - eye).amax() < 1e-10);
    }

    #[test]
    fn first_row_is_constant() {
        let sub = dct_basis(50, 8).unwrap();
        let first = sub.basis.row(0);
        for c in 1..50 {
            assert!((first[c] - first[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn projector_is_symmetric_and_idempotent() {
        let sub = dct_basis(50, 8).unwrap();
        let p = &sub.projector;
        assert!((p - p.transpose()).amax() < 1e-10);
        assert!((p * p - p).amax() < 1e-10);
    }

    #[test]
    fn constant_trajectory_is_annihilated() {
        let sub = dct_basis(50, 8).unwrap();
        let c = DVector::from_element(50, 3.7);
        let residual = &sub.projector * c;
        assert!(residual.amax() < 1e-10);
    }

    #[test]
    fn in_span_row_annihilated_out_of_span_row_preserved() {
        let sub = dct_basis(50, 8).unwrap();
        let in_span = dct_row(50, 5);
        let out_of_span = dct_row(50, 20);
        assert!((&sub.projector * &in_span).amax() < 1e-10);
        let preserved = &sub.projector * &out_of_span;
        assert!(((&preserved - &out_of_span).amax()) < 1e-10);
        assert!((preserved.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn too_short_batch_is_an_error() {
        assert!(dct_basis(5, 8).is_err());
    }
}
