//! Haar-random orthonormal bases on the Stiefel manifold `St(d, r)` and
//! the rank-`r` projector `Π = P Pᵀ` they induce.
//!
//! A basis is sampled by filling a `d × r` matrix with standard normals,
//! taking a Householder thin QR, and flipping each column of `Q` by the
//! sign of the matching diagonal entry of `R`. Without the sign flip the
//! law of `Q` depends on the QR convention and is not Haar.
//!
//! The projector is never formed. Vectors go through `P (Pᵀ g)`, and the
//! factored path keeps only the `r` coordinates `w = Pᵀ g`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, Error, Result};
use crate::linalg::householder_qr;

/// Subspace ratio `δ = r/d`, kept as the exact pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubspaceRatio {
    pub rank: usize,
    pub dim: usize,
}

impl SubspaceRatio {
    pub fn new(rank: usize, dim: usize) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::InvalidRank { rank, dim });
        }
        Ok(Self { rank, dim })
    }

    pub fn value(&self) -> f64 {
        self.rank as f64 / self.dim as f64
    }
}

/// Column-orthonormal `rows × rank` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelBasis {
    p: Array2<f64>,
}

impl StiefelBasis {
    /// Wraps an existing matrix. Orthonormality is checked to `1e-10`.
    pub fn from_matrix(p: Array2<f64>) -> Result<Self> {
        let (d, r) = p.dim();
        if r == 0 || r > d {
            return Err(Error::InvalidRank { rank: r, dim: d });
        }
        let basis = Self { p };
        let defect = basis.orthonormality_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "columns are not orthonormal (‖PᵀP − I‖_F = {defect:e})"
            )));
        }
        Ok(basis)
    }

    pub fn rows(&self) -> usize {
        self.p.nrows()
    }

    pub fn rank(&self) -> usize {
        self.p.ncols()
    }

    pub fn ratio(&self) -> SubspaceRatio {
        SubspaceRatio {
            rank: self.rank(),
            dim: self.rows(),
        }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.p.view()
    }

    /// `‖PᵀP − I‖_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self.p.t().dot(&self.p);
        let mut acc = 0.0;
        for ((i, j), &g) in gram.indexed_iter() {
            let e = if i == j { g - 1.0 } else { g };
            acc += e * e;
        }
        acc.sqrt()
    }

    /// Dense `P Pᵀ`. Only meant for small `d`.
    pub fn projector(&self) -> Array2<f64> {
        self.p.dot(&self.p.t())
    }

    /// `Pᵀ g`, the coordinates of `g` in the subspace.
    pub fn project_coords(&self, g: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows(), g.len())?;
        Ok(self.p.t().dot(&ArrayView1::from(g)).to_vec())
    }

    /// `P w`, mapping subspace coordinates back to the ambient space.
    pub fn lift(&self, w: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rank(), w.len())?;
        Ok(self.p.dot(&ArrayView1::from(w)).to_vec())
    }

    /// `P (Pᵀ g)`.
    pub fn project(&self, g: &[f64]) -> Result<Vec<f64>> {
        let w = self.project_coords(g)?;
        self.lift(&w)
    }

    /// `Pᵀ G` for a `rows × m` matrix.
    pub fn coords_matrix(&self, g: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_len(self.rows(), g.nrows())?;
        Ok(self.p.t().dot(&g))
    }

    /// `P W` for a `rank × m` matrix.
    pub fn lift_matrix(&self, w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        check_len(self.rank(), w.nrows())?;
        Ok(self.p.dot(&w))
    }

    /// `P (Pᵀ G)`, column-wise the same as [`project`](Self::project).
    pub fn project_matrix(&self, g: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let w = self.coords_matrix(g)?;
        self.lift_matrix(w.view())
    }
}

/// Draws `P ~ Haar(St(d, r))`.
pub fn sample_stiefel<R: Rng + ?Sized>(d: usize, r: usize, rng: &mut R) -> Result<StiefelBasis> {
    if r == 0 || r > d {
        return Err(Error::InvalidRank { rank: r, dim: d });
    }
    let gaussian = Array2::from_shape_simple_fn((d, r), || rng.sample::<f64, _>(StandardNormal));
    let qr = householder_qr(gaussian.view());
    let mut q = qr.q;
    for k in 0..r {
        if qr.r[[k, k]] < 0.0 {
            q.column_mut(k).mapv_inplace(|x| -x);
        }
    }
    Ok(StiefelBasis { p: q })
}

/// `‖v‖²`.
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// A fixed orthogonal matrix, used for rotation-invariance checks.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Array2<f64> {
    sample_stiefel(d, d, rng)
        .expect("d >= 1")
        .p
}

/// `Q g` for a square `Q`.
pub fn rotate(q: ArrayView2<'_, f64>, g: &[f64]) -> Vec<f64> {
    q.dot(&Array1::from(g.to_vec())).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_diff;
    use crate::rng::{Purpose, SeedTree};

    fn rng(seed: u64) -> crate::rng::StreamRng {
        SeedTree::new(seed).stream(Purpose::Aux, 0, 0)
    }

    #[test]
    fn rejects_bad_rank() {
        assert!(matches!(
            sample_stiefel(3, 4, &mut rng(1)),
            Err(Error::InvalidRank { rank: 4, dim: 3 })
        ));
        assert!(sample_stiefel(3, 0, &mut rng(1)).is_err());
        assert!(SubspaceRatio::new(0, 5).is_err());
    }

    #[test]
    fn full_rank_projector_is_identity() {
        for seed in 0..5 {
            let p = sample_stiefel(3, 3, &mut rng(seed)).unwrap();
            let eye = Array2::<f64>::eye(3);
            assert!(frobenius_diff(p.matrix().t().dot(&p.matrix()).view(), eye.view()) < 1e-12);
            assert!(frobenius_diff(p.projector().view(), eye.view()) < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_orthonormal() {
        let a = sample_stiefel(4, 2, &mut rng(7)).unwrap();
        let b = sample_stiefel(4, 2, &mut rng(7)).unwrap();
        assert!(a.orthonormality_defect() <= 1e-10);
        let bits = |m: ArrayView2<f64>| m.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a.matrix()), bits(b.matrix()));
    }

    #[test]
    fn projector_invariants_small_d() {
        let p = sample_stiefel(9, 4, &mut rng(3)).unwrap();
        let pi = p.projector();
        let trace: f64 = (0..9).map(|i| pi[[i, i]]).sum();
        assert!((trace - 4.0).abs() < 1e-8);
        assert!(frobenius_diff(pi.dot(&pi).view(), pi.view()) < 1e-8);
        assert_eq!(p.ratio(), SubspaceRatio::new(4, 9).unwrap());
        assert!((p.ratio().value() - 4.0 / 9.0).abs() == 0.0);
    }

    #[test]
    fn projecting_identity_case() {
        let p = sample_stiefel(5, 5, &mut rng(11)).unwrap();
        let g = [0.3, -1.0, 2.5, 0.0, 4.0];
        let pg = p.project(&g).unwrap();
        for (a, b) in pg.iter().zip(g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn columns_are_fixed_points() {
        let p = sample_stiefel(8, 3, &mut rng(5)).unwrap();
        for k in 0..3 {
            let col = p.matrix().column(k).to_vec();
            let pc = p.project(&col).unwrap();
            for (a, b) in pc.iter().zip(&col) {
                assert!((a - b).abs() < 1e-10);
            }
            let w = p.project_coords(&col).unwrap();
            for (j, wj) in w.iter().enumerate() {
                let e = if j == k { 1.0 } else { 0.0 };
                assert!((wj - e).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn complement_has_zero_coords() {
        let p = sample_stiefel(8, 3, &mut rng(6)).unwrap();
        let g: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let pg = p.project(&g).unwrap();
        let perp: Vec<f64> = g.iter().zip(&pg).map(|(a, b)| a - b).collect();
        let w = p.project_coords(&perp).unwrap();
        assert!(w.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn factored_path_matches_dense() {
        let p = sample_stiefel(6, 2, &mut rng(9)).unwrap();
        let g = [1.0, -2.0, 0.5, 3.0, 0.25, -1.5];
        let lifted = p.lift(&p.project_coords(&g).unwrap()).unwrap();
        let dense = p.project(&g).unwrap();
        assert!((norm_sq(&lifted) - norm_sq(&dense)).abs() < 1e-12);
        for (a, b) in lifted.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_projection_is_columnwise() {
        let p = sample_stiefel(6, 2, &mut rng(10)).unwrap();
        let g = Array2::from_shape_fn((6, 3), |(i, j)| (i * 3 + j) as f64 - 4.0);
        let pg = p.project_matrix(g.view()).unwrap();
        for j in 0..3 {
            let col = p.project(&g.column(j).to_vec()).unwrap();
            for i in 0..6 {
                assert!((pg[[i, j]] - col[i]).abs() < 1e-12);
            }
        }
        let self_proj = p.project_matrix(p.matrix()).unwrap();
        assert!(frobenius_diff(self_proj.view(), p.matrix()) < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let p = sample_stiefel(4, 2, &mut rng(1)).unwrap();
        assert!(matches!(p.project(&[1.0; 3]), Err(Error::Shape { .. })));
        assert!(p.project_coords(&[1.0; 5]).is_err());
        assert!(p.lift(&[1.0; 3]).is_err());
        assert!(p.project_matrix(Array2::zeros((3, 2)).view()).is_err());
    }

    #[test]
    fn from_matrix_checks_orthonormality() {
        assert!(StiefelBasis::from_matrix(Array2::eye(3)).is_ok());
        assert!(StiefelBasis::from_matrix(Array2::from_elem((3, 2), 1.0)).is_err());
    }
}
