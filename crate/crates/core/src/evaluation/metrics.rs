//! Image-quality metrics over plain feature matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::raster::Raster;

/// Value returned for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;
const EIGEN_FLOOR: f64 = -1e-6;

/// `10 log10(max_value² / MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Raster, b: &Raster, max_value: f64) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "psnr of {}x{} and {}x{} images",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    psnr_slices(a.pixels(), b.pixels(), max_value)
}

pub fn psnr_slices(a: &[f32], b: &[f32], max_value: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("psnr of {} and {} values", a.len(), b.len())));
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (max_value * max_value / mse).log10()).min(PSNR_CAP_DB))
}

/// Mean over `splits` contiguous row blocks of `exp(mean_i KL(p_i || p̄))`.
pub fn inception_score(probabilities: &DMatrix<f64>, splits: usize) -> Result<f64> {
    let n = probabilities.nrows();
    if splits == 0 || n < splits {
        return Err(Error::InvalidArgument(format!("{n} rows cannot form {splits} splits")));
    }
    for row in probabilities.row_iter() {
        let s: f64 = row.iter().sum();
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (s - 1.0).abs() > 1e-6 {
            return Err(Error::Domain {
                op: "inception_score",
                detail: format!("row is not a probability vector (sum {s})"),
            });
        }
    }
    let mut total = 0.0;
    for k in 0..splits {
        let lo = k * n / splits;
        let hi = (k + 1) * n / splits;
        let block = probabilities.rows(lo, hi - lo);
        let marginal = block.row_mean();
        let mut kl = 0.0;
        for row in block.row_iter() {
            for (p, q) in row.iter().zip(marginal.iter()) {
                if *p > 0.0 {
                    kl += p * (p / q).ln();
                }
            }
        }
        total += (kl / (hi - lo) as f64).exp();
    }
    Ok(total / splits as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Sample mean and unbiased covariance of the rows of `features`.
pub fn gaussian_stats(features: &DMatrix<f64>) -> Result<GaussianStats> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("covariance needs at least 2 rows, got {n}")));
    }
    let mean = features.row_mean().transpose();
    let centered = DMatrix::from_fn(n, features.ncols(), |i, j| features[(i, j)] - mean[j]);
    let mut covariance = centered.transpose() * &centered / (n as f64 - 1.0);
    covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(GaussianStats { mean, covariance })
}

fn clipped_eigenvalues(m: &DMatrix<f64>, what: &str) -> Result<DVector<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    let scale = eig.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
    if let Some(&bad) = eig.iter().find(|&&v| v < EIGEN_FLOOR * scale) {
        return Err(Error::Domain {
            op: "fid",
            detail: format!("{what} has eigenvalue {bad}"),
        });
    }
    Ok(eig.map(|v| v.max(0.0)))
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = clipped_eigenvalues(m, "covariance")?;
    let d = DMatrix::from_diagonal(&vals.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Fréchet distance between two Gaussians:
/// `‖μ_r − μ_f‖² + tr(Σ_r + Σ_f − 2 (Σ_r Σ_f)^{1/2})`, with the trace of the
/// square root taken as that of `(Σ_r^{1/2} Σ_f Σ_r^{1/2})^{1/2}`.
pub fn fid(real: &GaussianStats, fake: &GaussianStats) -> Result<f64> {
    if real.mean.len() != fake.mean.len() {
        return Err(Error::Shape(format!(
            "fid of {}- and {}-dimensional statistics",
            real.mean.len(),
            fake.mean.len()
        )));
    }
    if real == fake {
        return Ok(0.0);
    }
    let root = psd_sqrt(&real.covariance)?;
    let inner = &root * &fake.covariance * &root;
    let tr_sqrt: f64 = clipped_eigenvalues(&inner, "covariance product")?.map(f64::sqrt).sum();
    let diff = &real.mean - &fake.mean;
    let v = diff.norm_squared() + real.covariance.trace() + fake.covariance.trace() - 2.0 * tr_sqrt;
    Ok(v.max(0.0))
}

fn poly_kernel(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let f = x.ncols() as f64;
    (x * y.transpose()).map(|v| (v / f + 1.0).powi(3))
}

/// Unbiased MMD² with kernel `(xᵀy / F + 1)³`; diagonal terms of the
/// within-set kernels are excluded.
pub fn mmd2_unbiased(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let (m, n) = (x.nrows(), y.nrows());
    if m < 2 || n < 2 || x.ncols() != y.ncols() {
        return Err(Error::InvalidArgument(format!(
            "MMD needs at least 2 rows per set of equal width, got {m}x{} and {n}x{}",
            x.ncols(),
            y.ncols()
        )));
    }
    let off_diag = |k: DMatrix<f64>| k.sum() - k.trace();
    let kxx = off_diag(poly_kernel(x, x)) / (m * (m - 1)) as f64;
    let kyy = off_diag(poly_kernel(y, y)) / (n * (n - 1)) as f64;
    let kxy = poly_kernel(x, y).sum() / (m * n) as f64;
    Ok(kxx + kyy - 2.0 * kxy)
}

pub const KID_SUBSET_SIZE: usize = 100;
pub const KID_SUBSETS: usize = 10;

/// Kernel inception distance: [`mmd2_unbiased`] averaged over `subsets`
/// random subsets of `subset_size` rows from each set, or computed once on
/// all rows when both sets fit in one subset.
pub fn kid<R: Rng + ?Sized>(
    real: &DMatrix<f64>,
    fake: &DMatrix<f64>,
    subset_size: usize,
    subsets: usize,
    rng: &mut R,
) -> Result<f64> {
    if real.nrows() <= subset_size && fake.nrows() <= subset_size {
        return mmd2_unbiased(real, fake);
    }
    if subsets == 0 {
        return Err(Error::InvalidArgument("kid needs at least one subset".into()));
    }
    let m = subset_size.min(real.nrows()).min(fake.nrows());
    let mut total = 0.0;
    for _ in 0..subsets {
        let ri = sample(rng, real.nrows(), m).into_vec();
        let fi = sample(rng, fake.nrows(), m).into_vec();
        total += mmd2_unbiased(&real.select_rows(&ri), &fake.select_rows(&fi))?;
    }
    Ok(total / subsets as f64)
}
