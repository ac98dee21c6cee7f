//! Structural matrices of a UW-OFDM configuration.
//!
//! The IDFT of the mapped subcarriers, `F_N^H B`, is split into the rows that
//! carry data (`A`) and the rows that must vanish so the unique word can be
//! inserted (`Q`). Any generator whose columns lie in the null space of `Q`
//! produces the zero tail; `Y` is an orthonormal basis of that space and
//! `Z = A Y` is what the data part looks like in that basis.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Singular value decomposition `M = U diag(σ) V^H` with σ in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMatrix,
    pub singular_values: Vec<f64>,
    pub v: CMatrix,
}

impl Svd {
    /// Thin SVD: `U` is m×k, `V` is n×k with k = min(m, n).
    pub fn thin(m: &CMatrix) -> Svd {
        let (rows, cols) = m.shape();
        let k = rows.min(cols);
        if k == 0 {
            return Svd {
                u: CMatrix::zeros(rows, 0),
                singular_values: Vec::new(),
                v: CMatrix::zeros(cols, 0),
            };
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        let sv: Vec<f64> = svd.singular_values.iter().copied().collect();

        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
        let mut out = Svd {
            u: u.select_columns(order.iter()),
            singular_values: order.iter().map(|&i| sv[i]).collect(),
            v: v_t.adjoint().select_columns(order.iter()),
        };
        out.normalize_phases();
        out
    }

    /// Rotates each singular pair so the largest-magnitude entry of the left
    /// vector is real and positive. The product `U Σ V^H` is unchanged.
    pub fn normalize_phases(&mut self) {
        for j in 0..self.u.ncols() {
            let col = self.u.column(j);
            let mut best = 0;
            for i in 1..col.len() {
                // strict comparison keeps the first index on ties
                if col[i].norm() > col[best].norm() * (1.0 + 1e-12) {
                    best = i;
                }
            }
            let pivot = col[best];
            if pivot.norm() == 0.0 {
                continue;
            }
            let rot = pivot.conj() / pivot.norm();
            for i in 0..self.u.nrows() {
                self.u[(i, j)] *= rot;
            }
            for i in 0..self.v.nrows() {
                self.v[(i, j)] *= rot;
            }
        }
    }

    pub fn max_singular_value(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    pub fn numerical_rank(&self) -> usize {
        let tol = RANK_TOL * self.max_singular_value();
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }
}

/// Unitary DFT matrix: entry (k, l) = exp(−j2πkl/n)/√n.
pub fn dft_matrix(n: usize) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::Dimension("DFT size must be >= 1".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(CMatrix::from_fn(n, n, |k, l| {
        // reduce kl mod n before the trig call to keep the phase exact
        let idx = (k * l) % n;
        Complex64::from_polar(scale, -2.0 * std::f64::consts::PI * idx as f64 / n as f64)
    }))
}

/// Identity with the guard-carrier columns removed (N × N_dr).
pub fn mapping_matrix(cfg: &SystemConfig) -> DMatrix<f64> {
    let active = cfg.active_subcarriers();
    let mut b = DMatrix::zeros(cfg.n_total, active.len());
    for (col, &k) in active.iter().enumerate() {
        b[(k, col)] = 1.0;
    }
    b
}

/// Splits `F_N^H B` into its first `N − n_uw` rows (A) and last `n_uw` rows (Q).
pub fn split_aq(f_n: &CMatrix, b: &DMatrix<f64>, n_uw: usize) -> Result<(CMatrix, CMatrix)> {
    let n = f_n.nrows();
    if f_n.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!(
            "F_N is {}x{} but B has {} rows",
            f_n.nrows(),
            f_n.ncols(),
            b.nrows()
        )));
    }
    if n_uw >= n {
        return Err(Error::Dimension(format!("N_u = {n_uw} must be below N = {n}")));
    }
    let stacked = f_n.adjoint() * b.map(|v| Complex64::new(v, 0.0));
    let a = stacked.rows(0, n - n_uw).into_owned();
    let q = stacked.rows(n - n_uw, n_uw).into_owned();
    Ok((a, q))
}

/// Orthonormal basis of the null space of a full-row-rank `Q` (N_u × N_dr).
///
/// The basis is taken from the right singular vectors of `Q` belonging to
/// zero singular values. `Q` is padded with zero rows to a square matrix so a
/// complete set of right singular vectors is available.
pub fn null_space_basis(q: &CMatrix) -> Result<CMatrix> {
    let (rows, cols) = q.shape();
    if rows >= cols {
        return Err(Error::Dimension(format!(
            "Q is {rows}x{cols}; a non-trivial null space needs fewer rows than columns"
        )));
    }
    let mut padded = CMatrix::zeros(cols, cols);
    padded.rows_mut(0, rows).copy_from(q);
    let svd = Svd::thin(&padded);
    let rank = if rows == 0 { 0 } else { svd.numerical_rank() };
    if rank != rows {
        return Err(Error::Rank {
            expected: rows,
            found: rank,
        });
    }
    Ok(svd.v.columns(rows, cols - rows).into_owned())
}

/// The fixed linear-algebra skeleton of one configuration.
#[derive(Debug, Clone)]
pub struct StructuralMatrices {
    pub f_n: CMatrix,
    pub b: DMatrix<f64>,
    pub a: CMatrix,
    pub q: CMatrix,
    pub y: CMatrix,
    pub z: CMatrix,
    /// Column k of B selects subcarrier `active[k]`.
    pub active: Vec<usize>,
}

impl StructuralMatrices {
    /// Builds every matrix for `cfg`. Only the sizes are checked here, so a
    /// config that violates N_r >= N_u can still be examined.
    pub fn build(cfg: &SystemConfig) -> Result<Self> {
        let f_n = dft_matrix(cfg.n_total)?;
        let b = mapping_matrix(cfg);
        let (a, q) = split_aq(&f_n, &b, cfg.n_uw)?;
        let y = null_space_basis(&q)?;
        let z = &a * &y;
        Ok(Self {
            f_n,
            b,
            a,
            q,
            y,
            z,
            active: cfg.active_subcarriers(),
        })
    }

    pub fn n_total(&self) -> usize {
        self.f_n.nrows()
    }

    pub fn n_uw(&self) -> usize {
        self.q.nrows()
    }

    /// `F_N^H B` as a single matrix.
    pub fn idft_mapped(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.n_total(), self.b.ncols());
        let split = self.a.nrows();
        m.rows_mut(0, split).copy_from(&self.a);
        m.rows_mut(split, self.q.nrows()).copy_from(&self.q);
        m
    }
}

/// Largest absolute entry of `m − I`.
pub fn identity_defect(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_80211_config;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn dft_small_sizes() {
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1[(0, 0)], c(1.0, 0.0));
        let f2 = dft_matrix(2).unwrap();
        let h = 1.0 / 2f64.sqrt();
        let expect = [[h, h], [h, -h]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f2[(i, j)] - c(expect[i][j], 0.0)).norm() < 1e-15);
            }
        }
        assert!(matches!(dft_matrix(0), Err(Error::Dimension(_))));
    }

    #[test]
    fn dft_is_unitary() {
        let f = dft_matrix(8).unwrap();
        assert!(identity_defect(&(&f * f.adjoint())) < 1e-12);
        let f = dft_matrix(64).unwrap();
        assert!(identity_defect(&(&f * f.adjoint())) < 1e-10);
    }

    #[test]
    fn mapping_selects_active_rows() {
        let cfg = SystemConfig {
            n_total: 4,
            n_zero: 1,
            zero_subcarrier_indices: vec![0],
            ..default_80211_config()
        };
        let b = mapping_matrix(&cfg);
        assert_eq!(b.shape(), (4, 3));
        for (col, row) in [1, 2, 3].iter().enumerate() {
            assert_eq!(b[(*row, col)], 1.0);
            assert_eq!(b.column(col).sum(), 1.0);
        }
        let b = mapping_matrix(&default_80211_config());
        assert_eq!(b.shape(), (64, 52));
        let btb = b.transpose() * &b;
        assert_eq!(btb, DMatrix::identity(52, 52));
        for r in 0..64 {
            assert!(b.row(r).sum() <= 1.0);
        }
    }

    #[test]
    fn split_shapes_and_stacking() {
        let cfg = default_80211_config();
        let f = dft_matrix(64).unwrap();
        let b = mapping_matrix(&cfg);
        let (a, q) = split_aq(&f, &b, 16).unwrap();
        assert_eq!(a.shape(), (48, 52));
        assert_eq!(q.shape(), (16, 52));
        let full = f.adjoint() * b.map(|v| c(v, 0.0));
        assert_eq!(a, full.rows(0, 48).into_owned());
        assert_eq!(q, full.rows(48, 16).into_owned());

        let (a0, q0) = split_aq(&f, &b, 0).unwrap();
        assert_eq!(a0, full);
        assert_eq!(q0.nrows(), 0);
        assert!(split_aq(&f, &b, 64).is_err());
    }

    #[test]
    fn coordinate_null_space() {
        let q = CMatrix::from_row_slice(1, 3, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let y = null_space_basis(&q).unwrap();
        assert_eq!(y.shape(), (3, 2));
        assert!((&q * &y).norm() < 1e-15);
        assert!(identity_defect(&(y.adjoint() * &y)) < 1e-12);
    }

    #[test]
    fn rank_deficient_q_is_rejected() {
        let row = [c(1.0, 0.0), c(2.0, -1.0), c(0.5, 0.0), c(0.0, 3.0)];
        let mut q = CMatrix::zeros(2, 4);
        for j in 0..4 {
            q[(0, j)] = row[j];
            q[(1, j)] = row[j] * c(0.0, 2.0);
        }
        assert!(matches!(
            null_space_basis(&q),
            Err(Error::Rank { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn default_structural_matrices() {
        let sm = StructuralMatrices::build(&default_80211_config()).unwrap();
        assert_eq!(sm.y.shape(), (52, 36));
        assert_eq!(sm.z.shape(), (48, 36));
        assert!(identity_defect(&(sm.y.adjoint() * &sm.y)) < 1e-10);
        assert!((&sm.q * &sm.y).norm() <= 1e-9 * sm.q.norm());
        let sv = Svd::thin(&sm.z).singular_values;
        assert!(*sv.last().unwrap() > 1e-8);
        let stacked = sm.f_n.adjoint() * sm.b.map(|v| c(v, 0.0));
        assert_eq!(sm.idft_mapped(), stacked);
    }

    #[test]
    fn svd_reconstructs_and_sorts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = CMatrix::from_fn(5, 7, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let svd = Svd::thin(&m);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let sigma = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            5,
            svd.singular_values.iter().map(|&s| c(s, 0.0)),
        ));
        let back = &svd.u * sigma * svd.v.adjoint();
        assert!((back - &m).norm() < 1e-12);
        for j in 0..5 {
            let col = svd.u.column(j);
            let pivot = col.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
            assert!(pivot.im.abs() < 1e-12 && pivot.re > 0.0);
        }
    }
}
