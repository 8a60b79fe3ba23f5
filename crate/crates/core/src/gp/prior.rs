use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Conditioned, Posterior, Predictive, SeKernel, Standardizer, Surrogate};
use crate::autodiff::{Tape, Var};
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Mvn, DEFAULT_JITTER};
use crate::nn::{mlp_forward, PriorParams};

/// GP prior with a neural mean `m(x)` and kernel
/// `k(x, x') = ν·exp(−‖Φ(x) − Φ(x')‖² / (2l))` on learned features `Φ`.
///
/// Operates in the standardized space of `standardizer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpPrior {
    pub params: PriorParams,
    pub standardizer: Standardizer,
}

/// Tape nodes of the prior marginal on a set of inputs.
pub struct PriorNodes {
    pub mean: Var,
    pub kernel: Var,
    pub log_noise: Var,
}

impl GpPrior {
    pub fn new(params: PriorParams, standardizer: Standardizer) -> Result<Self> {
        if params.mean_spec.input_dim != standardizer.dim()
            || params.feature_spec.input_dim != standardizer.dim()
            || params.mean_spec.output_dim != 1
        {
            return Err(Error::dims("prior networks do not match the input dimension"));
        }
        Ok(GpPrior {
            params,
            standardizer,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn outputscale(&self) -> f64 {
        self.params.log_outputscale().exp()
    }

    /// The `l` in `exp(−d² / (2l))`.
    pub fn lengthscale(&self) -> f64 {
        self.params.log_lengthscale().exp()
    }

    pub fn noise_var(&self) -> f64 {
        (2.0 * self.params.log_noise()).exp()
    }

    fn kernel(&self) -> SeKernel {
        SeKernel {
            outputscale: self.outputscale(),
            divisor: 2.0 * self.lengthscale(),
        }
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::dims(format!(
                "inputs with {} columns for a {}-dimensional prior",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x)?;
        mlp_forward(&self.params.feature_spec, self.params.feature_block(), x)
    }

    pub fn mean(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(mlp_forward(&self.params.mean_spec, self.params.mean_block(), x)?.into_data())
    }

    /// Prior marginal `N(m_X, K_X)` of the latent function.
    pub fn marginal(&self, x: &Matrix) -> Result<Mvn> {
        let k = kernel_matrix(self, x, x)?;
        Mvn::with_jitter(self.mean(x)?, k, DEFAULT_JITTER)
    }

    /// Records `m_X` and `K_X` on `tape`, whose parameters are `self.params`.
    pub fn record(&self, tape: &mut Tape<'_>, x: &Matrix) -> Result<PriorNodes> {
        self.check_dim(x)?;
        let p = &self.params;
        let input = tape.constant(x.clone());
        let mean = tape.mlp(&p.mean_spec, p.mean_offset(), input)?;
        let feats = tape.mlp(&p.feature_spec, p.feature_offset(), input)?;
        let so = p.scalar_offset();
        let log_scale = tape.param_scalar(so)?;
        let log_len = tape.param_scalar(so + 1)?;
        let log_noise = tape.param_scalar(so + 2)?;
        let kernel = tape.se_kernel(feats, feats, log_scale, log_len)?;
        Ok(PriorNodes {
            mean,
            kernel,
            log_noise,
        })
    }

    /// Records `ln Z(D, P)` for standardized `data`.
    pub fn record_mll(&self, tape: &mut Tape<'_>, data: &TaskDataset) -> Result<Var> {
        if data.is_empty() {
            return Err(Error::EmptyData("marginal likelihood of an empty dataset".into()));
        }
        let nodes = self.record(tape, &data.x)?;
        let cov = tape.add_noise(nodes.kernel, nodes.log_noise);
        tape.gaussian_loglik(cov, nodes.mean, &data.y)
    }

    /// `ln Z` and its gradient with respect to every prior parameter.
    pub fn mll_and_grad(&self, data: &TaskDataset) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new(self.params.values());
        let mll = self.record_mll(&mut tape, data)?;
        Ok((tape.scalar(mll), tape.backprop(mll)?))
    }

    /// Conditions on standardized training data.
    fn conditioned(&self, train: &TaskDataset) -> Result<Conditioned> {
        let feats = self.features(&train.x)?;
        let m = self.mean(&train.x)?;
        let resid: Vec<f64> = train.y.iter().zip(&m).map(|(y, m)| y - m).collect();
        Conditioned::new(feats, &resid, self.kernel(), self.noise_var())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Prior kernel matrix between two sets of standardized inputs.
pub fn kernel_matrix(prior: &GpPrior, xa: &Matrix, xb: &Matrix) -> Result<Matrix> {
    let fa = prior.features(xa)?;
    let fb = if std::ptr::eq(xa, xb) {
        fa.clone()
    } else {
        prior.features(xb)?
    };
    Ok(prior.kernel().matrix(&fa, &fb))
}

/// Closed-form marginal log-likelihood of standardized `data`.
pub fn gp_mll(prior: &GpPrior, data: &TaskDataset) -> Result<f64> {
    let mut tape = Tape::new(prior.params.values());
    let mll = prior.record_mll(&mut tape, data)?;
    Ok(tape.scalar(mll))
}

/// Latent predictive distribution at `query` given `train`, both
/// standardized. An empty training set yields the prior marginal.
pub fn gp_posterior(prior: &GpPrior, train: &TaskDataset, query: &Matrix) -> Result<Mvn> {
    if query.rows() == 0 {
        return Err(Error::EmptyData("posterior at zero query points".into()));
    }
    if train.is_empty() {
        let k = kernel_matrix(prior, query, query)?;
        return Mvn::with_jitter(prior.mean(query)?, k, 0.0);
    }
    let c = prior.conditioned(train)?;
    c.predict_full(&prior.features(query)?, &prior.mean(query)?)
}

struct PriorPosterior<'a> {
    prior: &'a GpPrior,
    cond: Conditioned,
}

impl Posterior for PriorPosterior<'_> {
    fn predict(&self, query: &Matrix) -> Result<Predictive> {
        let s = &self.prior.standardizer;
        let q = s.standardize_x(query);
        let (mean, var) = self
            .cond
            .predict_diag(&self.prior.features(&q)?, &self.prior.mean(&q)?);
        let var: Vec<f64> = var.iter().map(|v| v + self.cond.noise_var).collect();
        Ok(Predictive {
            mean: s.destandardize_y(&mean),
            std: s.destandardize_var(&var).iter().map(|v| v.sqrt()).collect(),
        })
    }
}

impl Surrogate for GpPrior {
    fn condition<'a>(&'a self, data: &TaskDataset) -> Result<Box<dyn Posterior + 'a>> {
        let cond = self.conditioned(&self.standardizer.standardize(data))?;
        Ok(Box::new(PriorPosterior { prior: self, cond }))
    }
}

/// Zero-mean SE-kernel GP `k(x, x') = ν·exp(−‖x − x'‖² / (2l))` whose
/// finite marginals regularize the learned prior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperPriorGp {
    pub lengthscale: f64,
    pub outputscale: f64,
}

impl Default for HyperPriorGp {
    fn default() -> Self {
        HyperPriorGp {
            lengthscale: 0.3,
            outputscale: 1.0,
        }
    }
}

impl HyperPriorGp {
    pub fn kernel_matrix(&self, xa: &Matrix, xb: &Matrix) -> Matrix {
        SeKernel {
            outputscale: self.outputscale,
            divisor: 2.0 * self.lengthscale,
        }
        .matrix(xa, xb)
    }

    /// `N(0, K_X)` with the default jitter.
    pub fn marginal(&self, x: &Matrix) -> Result<Mvn> {
        Mvn::with_jitter(
            vec![0.0; x.rows()],
            self.kernel_matrix(x, x),
            DEFAULT_JITTER,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_gradient;
    use crate::linalg::mvn_logpdf;
    use crate::nn::MlpSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_prior(seed: u64, dim: usize) -> GpPrior {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = MlpSpec::new(dim, 1).with_hidden(2, 8);
        let f = MlpSpec::new(dim, 2).with_hidden(2, 8);
        GpPrior::new(PriorParams::init(m, f, &mut rng), Standardizer::identity(dim)).unwrap()
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> TaskDataset {
        let x = Matrix::from_fn(n, dim, |_, _| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        TaskDataset::new(x, y).unwrap()
    }

    /// Prior whose feature map is the identity and mean is zero.
    fn linear_prior(log_len: f64) -> GpPrior {
        let m = MlpSpec::new(2, 1).with_hidden(0, 0);
        let f = MlpSpec::new(2, 2).with_hidden(0, 0);
        let mut v = vec![0.0; 3]; // mean: W (2x1) + b
        v.extend([1.0, 0.0, 0.0, 1.0, 0.0, 0.0]); // features: identity W + zero b
        v.extend([0.5f64.ln(), log_len, 0.1f64.ln()]);
        GpPrior::new(
            PriorParams::from_values(m, f, v).unwrap(),
            Standardizer::identity(2),
        )
        .unwrap()
    }

    #[test]
    fn kernel_single_point() {
        let p = small_prior(0, 2);
        let x = Matrix::from_rows(&[[0.3, -0.4]]).unwrap();
        let k = kernel_matrix(&p, &x, &x).unwrap();
        assert!((k.as_scalar() - p.outputscale()).abs() < 1e-15);
    }

    #[test]
    fn kernel_hand_value_with_identity_features() {
        let l = 0.7f64;
        let p = linear_prior(l.ln());
        let d = (2.0 * l).sqrt();
        let x = Matrix::from_rows(&[[0.0, 0.0], [d, 0.0]]).unwrap();
        let k = kernel_matrix(&p, &x, &x).unwrap();
        assert!((k[(0, 1)] - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((k[(1, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernel_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s in 0..10 {
            let p = small_prior(s, 3);
            let x = Matrix::from_fn(15, 3, |_, _| rng.random_range(-3.0..3.0));
            let k = kernel_matrix(&p, &x, &x).unwrap();
            assert!(k.max_abs_diff(&k.transpose()) < 1e-12);
            assert!(crate::linalg::Cholesky::factor_exact(&k, 1e-6).is_ok());
        }
    }

    #[test]
    fn mll_single_point_hand_value() {
        // zero mean, k(x,x) + σ² = 1, y = 0 -> −½ ln 2π
        let mut p = linear_prior(0.0);
        let so = p.params.scalar_offset();
        let noise = 0.1f64;
        p.params.values_mut()[so] = (1.0 - noise * noise).ln();
        let d = TaskDataset::new(Matrix::from_rows(&[[0.2, 0.1]]).unwrap(), vec![0.0]).unwrap();
        assert!((gp_mll(&p, &d).unwrap() + 0.918_938_533).abs() < 1e-9);
    }

    #[test]
    fn mll_is_logpdf_of_marginal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for s in 0..20 {
            let p = small_prior(s, 2);
            let d = random_data(&mut rng, 8, 2);
            let k = kernel_matrix(&p, &d.x, &d.x).unwrap().add_diagonal(p.noise_var());
            let mvn = Mvn::new(p.mean(&d.x).unwrap(), k).unwrap();
            let direct = mvn_logpdf(&mvn, &d.y).unwrap();
            assert!((gp_mll(&p, &d).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn mll_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in 0..3 {
            let p = small_prior(10 + s, 2);
            let d = random_data(&mut rng, 6, 2);
            let (_, g) = p.mll_and_grad(&d).unwrap();
            let fd = finite_difference_gradient(p.params.values(), 1e-5, |v| {
                let mut q = p.clone();
                q.params.values_mut().copy_from_slice(v);
                gp_mll(&q, &d)
            })
            .unwrap();
            for (i, (a, b)) in g.iter().zip(&fd).enumerate() {
                if a.abs() > 1e-6 {
                    assert!((a - b).abs() / a.abs() < 1e-4, "coord {i}: {a} vs {b}");
                }
            }
            // the noise coordinate specifically
            let i = p.params.scalar_offset() + 2;
            assert!((g[i] - fd[i]).abs() / g[i].abs() < 1e-4);
        }
    }

    #[test]
    fn posterior_empty_train_is_prior() {
        let p = small_prior(4, 2);
        let q = Matrix::from_rows(&[[0.0, 1.0], [1.0, -1.0], [0.5, 0.5]]).unwrap();
        let post = gp_posterior(&p, &TaskDataset::empty(2), &q).unwrap();
        assert_eq!(post.mean(), p.mean(&q).unwrap().as_slice());
        assert!(post.cov().max_abs_diff(&kernel_matrix(&p, &q, &q).unwrap()) < 1e-15);
    }

    #[test]
    fn posterior_interpolates_with_tiny_noise() {
        let mut p = small_prior(5, 2);
        let so = p.params.scalar_offset();
        p.params.values_mut()[so + 2] = 1e-4f64.ln(); // σ² = 1e-8
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_data(&mut rng, 4, 2);
        let post = gp_posterior(&p, &d, &d.x).unwrap();
        for (m, y) in post.mean().iter().zip(&d.y) {
            assert!((m - y).abs() < 1e-3);
        }
    }

    #[test]
    fn conditioning_reduces_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = small_prior(8, 2);
        let d = random_data(&mut rng, 10, 2);
        let q = Matrix::from_fn(30, 2, |_, _| rng.random_range(-3.0..3.0));
        let post = gp_posterior(&p, &d, &q).unwrap();
        let prior_var = kernel_matrix(&p, &q, &q).unwrap().diagonal();
        for (pv, v) in post.variances().iter().zip(prior_var) {
            assert!(*pv >= -1e-12);
            assert!(*pv <= v + 1e-8);
        }
    }

    #[test]
    fn surrogate_predicts_in_raw_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = small_prior(11, 2);
        p.standardizer = Standardizer {
            x_mean: vec![1.0, -1.0],
            x_std: vec![2.0, 0.5],
            y_mean: 10.0,
            y_std: 3.0,
        };
        let raw = random_data(&mut rng, 5, 2);
        let q = Matrix::from_fn(4, 2, |_, _| rng.random_range(-2.0..2.0));
        let pred = p.condition(&raw).unwrap().predict(&q).unwrap();
        let post = gp_posterior(
            &p,
            &p.standardizer.standardize(&raw),
            &p.standardizer.standardize_x(&q),
        )
        .unwrap();
        for j in 0..4 {
            assert!((pred.mean[j] - (post.mean()[j] * 3.0 + 10.0)).abs() < 1e-9);
            let var = (post.cov()[(j, j)] + p.noise_var()) * 9.0;
            assert!((pred.std[j] - var.sqrt()).abs() < 1e-7);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = small_prior(12, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.json");
        p.save_json(&path).unwrap();
        assert_eq!(GpPrior::load_json(&path).unwrap(), p);
    }

    #[test]
    fn hyper_prior_marginal() {
        let hp = HyperPriorGp::default();
        let x = Matrix::from_rows(&[[0.0], [0.3]]).unwrap();
        let m = hp.marginal(&x).unwrap();
        assert_eq!(m.mean(), &[0.0, 0.0]);
        assert!((m.cov()[(0, 1)] - (-0.09f64 / 0.6).exp()).abs() < 1e-15);
    }
}
