//! Generator matrix design.
//!
//! A generator `G = Y C` keeps the time-domain tail at zero for any `C`.
//! The PAPR-reducing precoder picks `C` with orthonormal columns so that the
//! data part `Z C` is as close as possible to a target `D` that places each
//! data symbol on its own time sample. That is an orthogonal Procrustes
//! problem with the closed-form solution `C = V U^H` from the SVD
//! `D^H Z = U Σ V^H`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linops::{identity_defect, CMatrix, StructuralMatrices, Svd};

/// Singular values below this make the Procrustes minimizer non-unique.
const DEGENERATE_SV: f64 = 1e-12;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Prp,
    BaselineIdentity,
    BaselineHaar,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Prp => "prp",
            GeneratorKind::BaselineIdentity => "baseline-identity",
            GeneratorKind::BaselineHaar => "baseline-haar",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    /// N_dr × N_d generator `G = Y C`.
    pub g: CMatrix,
    /// (N_dr − N_u) × N_d free factor.
    pub c: CMatrix,
    pub kind: GeneratorKind,
    /// `‖Z C − D‖_F²` for the PRP design, NaN for baselines.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ProcrustesSolution {
    pub c_opt: CMatrix,
    /// Singular values of `D^H Z`, descending.
    pub singular_values: Vec<f64>,
    /// `Re tr(D^H Z C_opt)`.
    pub trace_value: f64,
    /// `‖Z C_opt − D‖_F²`.
    pub residual: f64,
}

impl ProcrustesSolution {
    pub fn is_degenerate(&self) -> bool {
        self.singular_values.iter().any(|&s| s < DEGENERATE_SV)
    }
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Shifted-identity target: column i has its single one at row i.
pub fn build_target_d(n_rows: usize, n_cols: usize) -> Result<DMatrix<f64>> {
    if n_rows < n_cols {
        return Err(Error::Dimension(format!(
            "target needs at least as many time samples ({n_rows}) as data symbols ({n_cols})"
        )));
    }
    Ok(DMatrix::from_fn(n_rows, n_cols, |r, c| if r == c { 1.0 } else { 0.0 }))
}

/// `‖Z C − D‖_F²`.
pub fn residual(z: &CMatrix, c: &CMatrix, d: &DMatrix<f64>) -> f64 {
    (z * c - to_complex(d)).norm_squared()
}

/// Least-squares `C = (Z^H Z)^{-1} Z^H D` without the orthonormality constraint.
pub fn solve_unconstrained(z: &CMatrix, d: &DMatrix<f64>) -> Result<CMatrix> {
    if z.nrows() != d.nrows() {
        return Err(Error::Dimension(format!(
            "Z has {} rows, D has {}",
            z.nrows(),
            d.nrows()
        )));
    }
    let sv = Svd::thin(z).singular_values;
    let smin = sv.last().copied().unwrap_or(0.0);
    let cond = if smin > 0.0 {
        (sv[0] / smin).powi(2)
    } else {
        f64::INFINITY
    };
    if sv.len() < z.ncols() || cond > MAX_CONDITION {
        return Err(Error::Singular(cond));
    }
    let normal = z.adjoint() * z;
    let rhs = z.adjoint() * to_complex(d);
    let chol = normal.cholesky().ok_or(Error::Singular(cond))?;
    Ok(chol.solve(&rhs))
}

/// Minimizes `‖Z C − D‖_F²` over `C` with orthonormal columns.
///
/// With `D^H Z = U Σ V^H` (thin), the minimizer is `C = V U^H`. When `C` is
/// square this is exact. When it is tall, it maximizes `Re tr(D^H Z C)` and
/// treats `‖Z C‖_F` as constant, which only holds approximately.
pub fn solve_procrustes(z: &CMatrix, d: &DMatrix<f64>) -> Result<ProcrustesSolution> {
    if z.nrows() != d.nrows() {
        return Err(Error::Dimension(format!(
            "Z has {} rows, D has {}",
            z.nrows(),
            d.nrows()
        )));
    }
    let d_c = to_complex(d);
    let cross = d_c.adjoint() * z;
    let svd = Svd::thin(&cross);
    let c_opt = &svd.v * svd.u.adjoint();
    let trace_value = (&cross * &c_opt).trace().re;
    let residual = residual(z, &c_opt, d);
    let sol = ProcrustesSolution {
        c_opt,
        singular_values: svd.singular_values,
        trace_value,
        residual,
    };
    if sol.is_degenerate() {
        log::warn!("D^H Z has singular values below {DEGENERATE_SV:e}; the Procrustes minimizer is not unique");
    }
    Ok(sol)
}

/// PAPR-reducing generator for `cfg`. Depends only on the subcarrier layout
/// and the sizes, never on data.
pub fn design_prp_generator(sm: &StructuralMatrices, cfg: &SystemConfig) -> Result<GeneratorMatrix> {
    let dims = cfg.dims_unchecked();
    let d = build_target_d(dims.n - dims.n_u, dims.n_d)?;
    let sol = solve_procrustes(&sm.z, &d)?;
    Ok(GeneratorMatrix {
        g: &sm.y * &sol.c_opt,
        c: sol.c_opt,
        kind: GeneratorKind::Prp,
        residual: sol.residual,
    })
}

/// Haar-distributed unitary matrix (QR of a complex Gaussian matrix with the
/// phases of R's diagonal divided out).
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let m = CMatrix::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    });
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let rjj = r[(j, j)];
        if rjj.norm() > 0.0 {
            let ph = rjj / rjj.norm();
            for i in 0..n {
                q[(i, j)] *= ph;
            }
        }
    }
    q
}

/// Generators that satisfy the UW and orthonormality constraints without
/// any PAPR optimization.
pub fn design_baseline_generator<R: Rng + ?Sized>(
    sm: &StructuralMatrices,
    cfg: &SystemConfig,
    kind: GeneratorKind,
    rng: &mut R,
) -> Result<GeneratorMatrix> {
    let dims = cfg.dims_unchecked();
    let free = sm.y.ncols();
    if dims.n_d > free {
        return Err(Error::Dimension(format!(
            "N_d = {} exceeds the null-space dimension {free}",
            dims.n_d
        )));
    }
    let c = match kind {
        GeneratorKind::BaselineIdentity => CMatrix::identity(free, dims.n_d),
        GeneratorKind::BaselineHaar => haar_unitary(free, rng).columns(0, dims.n_d).into_owned(),
        GeneratorKind::Prp => {
            return Err(Error::Config(
                "the PRP generator is built by design_prp_generator".into(),
            ))
        }
    };
    Ok(GeneratorMatrix {
        g: &sm.y * &c,
        c,
        kind,
        residual: f64::NAN,
    })
}

/// Outcome of one numerical invariant check.
#[derive(Debug, Clone)]
pub struct InvariantCheck {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl InvariantCheck {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

impl GeneratorMatrix {
    pub fn n_data(&self) -> usize {
        self.g.ncols()
    }

    /// Orthonormality, energy normalization and zero-tail checks.
    pub fn check_invariants(&self, sm: &StructuralMatrices) -> Vec<InvariantCheck> {
        let gram = self.g.adjoint() * &self.g;
        let trace = gram.trace().re;
        vec![
            InvariantCheck {
                name: "G^H G = I",
                value: identity_defect(&gram),
                tolerance: 1e-9,
            },
            InvariantCheck {
                name: "trace(G^H G) = N_d",
                value: (trace - self.n_data() as f64).abs(),
                tolerance: 1e-8,
            },
            // |Q G d| <= ||Q G||_F ||d|| for every d
            InvariantCheck {
                name: "zero time-domain tail",
                value: (&sm.q * &self.g).norm(),
                tolerance: 1e-9,
            },
        ]
    }
}
