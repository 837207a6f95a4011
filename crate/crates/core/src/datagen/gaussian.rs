//! Multivariate Gaussians: covariance generation, conditioning on a prefix
//! of coordinates, and hierarchical query-feature sampling.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::DatagenError;
use crate::hierarchy::LaminarFamily;
use crate::rng::{Purpose, StreamSeed};

/// Ridge added to the conditioning block before it is factored.
pub const CONDITIONING_RIDGE: f64 = 1e-9;
/// Largest condition number accepted for the conditioning block.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self, DatagenError> {
        let m = mean.len();
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(DatagenError::DimensionMismatch { expected: m, found: covariance.nrows() });
        }
        Ok(GaussianSpec { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sampler(&self) -> Result<GaussianSampler, DatagenError> {
        Ok(GaussianSampler { mean: self.mean.clone(), factor: psd_factor(&self.covariance)? })
    }
}

/// Draws from `N(mean, L Lᵀ)`.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(self.mean.len(), (0..self.mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
        &self.mean + &self.factor * z
    }
}

/// Lower Cholesky factor of a PSD matrix, adding the smallest ridge that makes
/// the factorization succeed. Exactly singular directions (e.g. a zero block)
/// get a tiny ridge relative to the trace.
fn psd_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>, DatagenError> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let scale = (m.trace() / m.nrows() as f64).abs().max(f64::MIN_POSITIVE);
    let mut ridge = scale * 1e-14;
    while ridge <= scale * CONDITIONING_RIDGE {
        let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * ridge;
        if let Some(c) = shifted.cholesky() {
            return Ok(c.l());
        }
        ridge *= 10.0;
    }
    Err(DatagenError::NotPsd)
}

/// True if the symmetric matrix factors (possibly after the declared ridge).
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0) && psd_factor(m).is_ok()
}

/// Result of [`gen_covariance`]: the diagonal part and the full matrix.
#[derive(Clone, Debug)]
pub struct CovarianceDraw {
    pub diagonal: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

/// `D + NᵀN` with `D` diagonal uniform in `diag_range` and `N` a standard
/// Gaussian matrix rescaled so that `‖NᵀN‖_F = noise_level`.
pub fn gen_covariance<R: Rng + ?Sized>(
    dim: usize,
    diag_range: (f64, f64),
    noise_level: f64,
    rng: &mut R,
) -> CovarianceDraw {
    let (lo, hi) = diag_range;
    let diagonal: Vec<f64> = (0..dim).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect();
    let noise = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut gram = noise.transpose() * &noise;
    let norm = gram.norm();
    if noise_level > 0.0 && norm > 0.0 {
        gram *= noise_level / norm;
    } else {
        gram.fill(0.0);
    }
    let covariance = DMatrix::from_diagonal(&DVector::from_vec(diagonal.clone())) + gram;
    CovarianceDraw { diagonal, covariance }
}

/// Distribution of the trailing `m - k` coordinates given the first `k`.
///
/// Mean `μ₂ + Σ₂₁Σ₁₁⁻¹(f − μ₁)`, covariance `Σ₂₂ − Σ₂₁Σ₁₁⁻¹Σ₁₂`.
pub fn conditional_gaussian(spec: &GaussianSpec, observed: &[f64]) -> Result<GaussianSpec, DatagenError> {
    let m = spec.dim();
    let k = observed.len();
    if k == 0 {
        return Ok(spec.clone());
    }
    if k >= m {
        return Err(DatagenError::DimensionMismatch { expected: m - 1, found: k });
    }
    let s11 = spec.covariance.view((0, 0), (k, k)).into_owned() + DMatrix::identity(k, k) * CONDITIONING_RIDGE;
    let s12 = spec.covariance.view((0, k), (k, m - k)).into_owned();
    let s21 = spec.covariance.view((k, 0), (m - k, k)).into_owned();
    let s22 = spec.covariance.view((k, k), (m - k, m - k)).into_owned();

    let eig = s11.clone().symmetric_eigen();
    let (emin, emax) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    if emin <= 0.0 || emax / emin > MAX_CONDITION {
        return Err(DatagenError::SingularBlock { condition: if emin > 0.0 { emax / emin } else { f64::INFINITY } });
    }
    let chol = s11.cholesky().ok_or(DatagenError::SingularBlock { condition: f64::INFINITY })?;

    let diff = DVector::from_iterator(k, observed.iter().zip(spec.mean.iter()).map(|(f, mu)| f - mu));
    let mean = spec.mean.rows(k, m - k).into_owned() + &s21 * chol.solve(&diff);
    let cov = s22 - &s21 * chol.solve(&s12);
    let cov = (&cov + cov.transpose()) * 0.5;
    GaussianSpec::new(mean, cov)
}

/// Hierarchically correlated query features.
///
/// Each layer-`l` set draws `layer_dims[l-1]` coordinates from the full
/// Gaussian conditioned on its parent's shared prefix; every query then draws
/// the remaining coordinates conditioned on its leaf's prefix.
pub fn gen_query_features(
    family: &LaminarFamily,
    spec: &GaussianSpec,
    layer_dims: &[usize],
    seed: StreamSeed,
) -> Result<Vec<Vec<f64>>, DatagenError> {
    let depth = family.depth();
    if layer_dims.len() != depth {
        return Err(DatagenError::DimensionMismatch { expected: depth, found: layer_dims.len() });
    }
    let shared: usize = layer_dims.iter().sum();
    if shared >= spec.dim() && depth > 0 {
        return Err(DatagenError::DimensionMismatch { expected: spec.dim() - 1, found: shared });
    }

    let mut prefixes: Vec<Vec<f64>> = vec![Vec::new()];
    for layer in 1..=depth {
        let per_parent = family.branching()[layer - 1];
        let layer_seed = seed.derive(Purpose::SetFeature, layer as u64);
        let mut next = Vec::with_capacity(prefixes.len() * per_parent);
        for (parent, prefix) in prefixes.iter().enumerate() {
            let sampler = conditional_gaussian(spec, prefix)?.sampler()?;
            for child in 0..per_parent {
                let d = parent * per_parent + child;
                let draw = sampler.sample(&mut layer_seed.stream(Purpose::SetFeature, d as u64));
                let mut p = prefix.clone();
                p.extend(draw.iter().take(layer_dims[layer - 1]));
                next.push(p);
            }
        }
        prefixes = next;
    }

    let leaf_samplers = prefixes
        .iter()
        .map(|p| conditional_gaussian(spec, p).and_then(|g| g.sampler()))
        .collect::<Result<Vec<_>, _>>()?;
    let features = family
        .leaf_of_query()
        .iter()
        .enumerate()
        .map(|(q, &leaf)| {
            let mut rng = seed.stream(Purpose::QueryFeature, q as u64);
            let rest = leaf_samplers[leaf as usize].sample(&mut rng);
            let mut f = prefixes[leaf as usize].clone();
            f.extend(rest.iter());
            f
        })
        .collect();
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_family;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_noise_covariance_is_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draw = gen_covariance(3, (0.5, 1.5), 0.0, &mut rng);
        let d = DMatrix::from_diagonal(&DVector::from_vec(draw.diagonal.clone()));
        assert_eq!(draw.covariance, d);
    }

    #[test]
    fn noise_has_requested_frobenius_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draw = gen_covariance(2, (0.5, 1.5), 0.1, &mut rng);
        let d = DMatrix::from_diagonal(&DVector::from_vec(draw.diagonal.clone()));
        assert!(((&draw.covariance - d).norm() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn noisy_covariance_is_psd_above_diagonal_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draw = gen_covariance(5, (0.5, 1.5), 0.3, &mut rng);
        let c = &draw.covariance;
        assert_eq!(c, &c.transpose());
        assert!(c.clone().cholesky().is_some());
        let min_eig = c.clone().symmetric_eigen().eigenvalues.min();
        let min_d = draw.diagonal.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min_eig >= min_d - 1e-12);
    }

    #[test]
    fn identity_conditioning_leaves_rest_unchanged() {
        let spec = GaussianSpec::new(DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]), DMatrix::identity(4, 4)).unwrap();
        let c = conditional_gaussian(&spec, &[5.0, -3.0]).unwrap();
        assert!((c.mean[0] - 0.3).abs() < 1e-12 && (c.mean[1] - 0.4).abs() < 1e-12);
        assert!((c.covariance.clone() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn bivariate_textbook_case() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let spec = GaussianSpec::new(DVector::zeros(2), cov).unwrap();
        let c = conditional_gaussian(&spec, &[1.0]).unwrap();
        assert!((c.mean[0] - 0.5).abs() < 1e-8);
        assert!((c.covariance[(0, 0)] - 0.75).abs() < 1e-8);
    }

    #[test]
    fn observing_the_mean_returns_trailing_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cov = gen_covariance(5, (0.5, 1.5), 0.3, &mut rng).covariance;
        let mean = DVector::from_vec(vec![1.0, -1.0, 2.0, 0.5, 0.25]);
        let spec = GaussianSpec::new(mean.clone(), cov).unwrap();
        let c = conditional_gaussian(&spec, &[1.0, -1.0]).unwrap();
        for i in 0..3 {
            assert!((c.mean[i] - mean[i + 2]).abs() < 1e-12);
        }
        assert!(is_psd(&c.covariance));
    }

    #[test]
    fn singular_block_is_rejected() {
        // the ridge rescues a unit-scale singular block (condition 2e9) ...
        let cov = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let spec = GaussianSpec::new(DVector::zeros(3), cov.clone()).unwrap();
        assert!(conditional_gaussian(&spec, &[0.0, 0.0]).is_ok());
        // ... but not one whose scale pushes the condition past 1e12
        let spec = GaussianSpec::new(DVector::zeros(3), cov * 1e4).unwrap();
        assert!(matches!(conditional_gaussian(&spec, &[0.0, 0.0]), Err(DatagenError::SingularBlock { .. })));
    }

    #[test]
    fn queries_in_a_leaf_share_the_prefix() {
        let family = build_family(300, &[2, 3], StreamSeed::new(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cov = gen_covariance(6, (0.5, 1.5), 0.2, &mut rng).covariance;
        let spec = GaussianSpec::new(DVector::zeros(6), cov).unwrap();
        let feats = gen_query_features(&family, &spec, &[2, 1], StreamSeed::new(9)).unwrap();
        for level in 1..=2 {
            let shared = if level == 1 { 2 } else { 3 };
            for set in family.sets(level) {
                for w in set.windows(2) {
                    let (a, b) = (&feats[w[0] as usize], &feats[w[1] as usize]);
                    assert_eq!(a[..shared], b[..shared]);
                    assert_ne!(a[shared..], b[shared..]);
                }
            }
        }
    }

    #[test]
    fn flat_family_draws_every_coordinate() {
        let family = build_family(50, &[], StreamSeed::new(1)).unwrap();
        let spec = GaussianSpec::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        let feats = gen_query_features(&family, &spec, &[], StreamSeed::new(2)).unwrap();
        assert!(feats.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a != b)));
    }

    #[test]
    fn too_many_shared_dims() {
        let family = build_family(10, &[2], StreamSeed::new(1)).unwrap();
        let spec = GaussianSpec::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        assert!(gen_query_features(&family, &spec, &[3], StreamSeed::new(2)).is_err());
        assert!(gen_query_features(&family, &spec, &[1, 1], StreamSeed::new(2)).is_err());
    }
}
