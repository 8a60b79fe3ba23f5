use serde::{Deserialize, Serialize};

use super::{Conditioned, Posterior, Predictive, SeKernel, Standardizer, Surrogate};
use crate::autodiff::Tape;
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Mvn};
use crate::optim::AdamW;

/// Box constraints for fitted SE hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub outputscale: (f64, f64),
    pub noise_std: (f64, f64),
}

pub const VANILLA_BOUNDS: HyperBounds = HyperBounds {
    lengthscale: (0.05, 5.0),
    outputscale: (0.1, 10.0),
    noise_std: (1e-4, 0.5),
};

const MLE_STEPS: usize = 200;
const MLE_LR: f64 = 0.05;
const MIN_POINTS_FOR_FIT: usize = 5;

/// Constant-mean GP with `k(x, x') = ν·exp(−‖x − x'‖² / (2ℓ²))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanillaGp {
    pub mean: f64,
    pub lengthscale: f64,
    pub outputscale: f64,
    pub noise_std: f64,
    /// Refit ℓ, ν, σ by type-II maximum likelihood before conditioning.
    pub fit_hyperparameters: bool,
}

impl Default for VanillaGp {
    fn default() -> Self {
        VanillaGp {
            mean: 0.0,
            lengthscale: 0.5,
            outputscale: 1.0,
            noise_std: 0.05,
            fit_hyperparameters: true,
        }
    }
}

/// Unconstrained coordinates `[c, ln ℓ, ln ν, ln σ]` of a [`VanillaGp`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarGpParams(pub [f64; 4]);

impl ScalarGpParams {
    pub fn from_gp(gp: &VanillaGp) -> Self {
        ScalarGpParams([
            gp.mean,
            gp.lengthscale.ln(),
            gp.outputscale.ln(),
            gp.noise_std.ln(),
        ])
    }

    pub fn apply(&self, gp: &VanillaGp) -> VanillaGp {
        VanillaGp {
            mean: self.0[0],
            lengthscale: self.0[1].exp(),
            outputscale: self.0[2].exp(),
            noise_std: self.0[3].exp(),
            fit_hyperparameters: gp.fit_hyperparameters,
        }
    }

    fn clamp(&mut self, b: &HyperBounds) {
        let c = |v: f64, (lo, hi): (f64, f64)| v.clamp(lo.ln(), hi.ln());
        self.0[1] = c(self.0[1], b.lengthscale);
        self.0[2] = c(self.0[2], b.outputscale);
        self.0[3] = c(self.0[3], b.noise_std);
    }

    /// `Σ_i ln Z(D_i)` and its gradient in these coordinates.
    pub fn mll_and_grad(&self, datasets: &[TaskDataset]) -> Result<(f64, Vec<f64>)> {
        let mut tape = Tape::new(&self.0);
        let c = tape.param_scalar(0)?;
        let log_ell = tape.param_scalar(1)?;
        // exp(−d²/(2ℓ²)) = exp(−d²/(2·exp(2 ln ℓ)))
        let log_len = tape.scale(log_ell, 2.0);
        let log_scale = tape.param_scalar(2)?;
        let log_noise = tape.param_scalar(3)?;
        let mut total = None;
        for d in datasets.iter().filter(|d| !d.is_empty()) {
            let x = tape.constant(d.x.clone());
            let k = tape.se_kernel(x, x, log_scale, log_len)?;
            let cov = tape.add_noise(k, log_noise);
            let mean = tape.broadcast(c, d.len())?;
            let ll = tape.gaussian_loglik(cov, mean, &d.y)?;
            total = Some(match total {
                None => ll,
                Some(t) => tape.add(t, ll)?,
            });
        }
        let total = total.ok_or_else(|| Error::EmptyData("no observations".into()))?;
        Ok((tape.scalar(total), tape.backprop(total)?))
    }
}

/// Maximizes `Σ ln Z` over `[c?, ln ℓ, ln ν, ln σ]` with AdamW, clamping to
/// `bounds` after every step. Returns the best iterate seen, which is never
/// worse than `init`.
pub(crate) fn maximize_scalar_mll(
    init: ScalarGpParams,
    datasets: &[TaskDataset],
    fit_mean: bool,
    steps: usize,
    lr: f64,
    bounds: &HyperBounds,
) -> (ScalarGpParams, Option<f64>) {
    let mut cur = init;
    cur.clamp(bounds);
    let mut best = (cur, None::<f64>);
    let mut opt = AdamW::new(4, lr, 0.0, 1.0);
    for step in 0..=steps {
        let Ok((ll, grad)) = cur.mll_and_grad(datasets) else {
            break;
        };
        if !ll.is_finite() {
            break;
        }
        if best.1.is_none_or(|b| ll > b) {
            best = (cur, Some(ll));
        }
        if step == steps {
            break;
        }
        let mut neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        if !fit_mean {
            neg[0] = 0.0;
        }
        if opt.step(&mut cur.0, &neg).is_err() {
            break;
        }
        cur.clamp(bounds);
    }
    best
}

/// Type-II MLE refit of `gp` on `data` (already in the GP's coordinates).
/// Leaves `gp` unchanged when fitting is disabled, when there are fewer than
/// five points, or when every iterate fails.
pub fn vanilla_gp_fit(gp: &VanillaGp, data: &TaskDataset) -> VanillaGp {
    if !gp.fit_hyperparameters || data.len() < MIN_POINTS_FOR_FIT {
        return gp.clone();
    }
    let (best, ll) = maximize_scalar_mll(
        ScalarGpParams::from_gp(gp),
        std::slice::from_ref(data),
        false,
        MLE_STEPS,
        MLE_LR,
        &VANILLA_BOUNDS,
    );
    match ll {
        Some(_) => best.apply(gp),
        None => gp.clone(),
    }
}

impl VanillaGp {
    fn kernel(&self) -> SeKernel {
        SeKernel {
            outputscale: self.outputscale,
            divisor: 2.0 * self.lengthscale * self.lengthscale,
        }
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_std * self.noise_std
    }

    pub fn kernel_matrix(&self, xa: &Matrix, xb: &Matrix) -> Matrix {
        self.kernel().matrix(xa, xb)
    }

    pub fn mll(&self, data: &TaskDataset) -> Result<f64> {
        ScalarGpParams::from_gp(self)
            .mll_and_grad(std::slice::from_ref(data))
            .map(|r| r.0)
    }

    fn conditioned(&self, train: &TaskDataset) -> Result<Conditioned> {
        let resid: Vec<f64> = train.y.iter().map(|y| y - self.mean).collect();
        Conditioned::new(train.x.clone(), &resid, self.kernel(), self.noise_var())
    }

    /// Latent posterior in the GP's own coordinates.
    pub fn posterior(&self, train: &TaskDataset, query: &Matrix) -> Result<Mvn> {
        self.conditioned(train)?
            .predict_full(query, &vec![self.mean; query.rows()])
    }
}

/// How a scalar GP maps raw observations into its coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Scaling {
    /// Inputs scaled by the domain box, outputs by the observed targets.
    Observed(Standardizer),
    /// Fixed standardizer, e.g. one fitted on meta-training data.
    Fixed(Standardizer),
}

/// A [`VanillaGp`] usable as a BO surrogate on raw data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarGpSurrogate {
    pub gp: VanillaGp,
    pub scaling: Scaling,
}

impl ScalarGpSurrogate {
    /// Vanilla GP without meta-data: box-scaled inputs, data-scaled outputs,
    /// hyper-parameters refit on every conditioning.
    pub fn vanilla(bounds: &[(f64, f64)]) -> Self {
        ScalarGpSurrogate {
            gp: VanillaGp::default(),
            scaling: Scaling::Observed(Standardizer::from_box(bounds)),
        }
    }

    fn standardizer(&self, data: &TaskDataset) -> Standardizer {
        match &self.scaling {
            Scaling::Observed(s) => s.clone().with_output_moments(&data.y),
            Scaling::Fixed(s) => s.clone(),
        }
    }
}

struct ScalarPosterior {
    standardizer: Standardizer,
    gp: VanillaGp,
    cond: Conditioned,
}

impl Posterior for ScalarPosterior {
    fn predict(&self, query: &Matrix) -> Result<Predictive> {
        let q = self.standardizer.standardize_x(query);
        let (mean, var) = self.cond.predict_diag(&q, &vec![self.gp.mean; q.rows()]);
        let var: Vec<f64> = var.iter().map(|v| v + self.cond.noise_var).collect();
        Ok(Predictive {
            mean: self.standardizer.destandardize_y(&mean),
            std: self
                .standardizer
                .destandardize_var(&var)
                .iter()
                .map(|v| v.sqrt())
                .collect(),
        })
    }
}

impl Surrogate for ScalarGpSurrogate {
    fn condition<'a>(&'a self, data: &TaskDataset) -> Result<Box<dyn Posterior + 'a>> {
        let standardizer = self.standardizer(data);
        let train = standardizer.standardize(data);
        let gp = vanilla_gp_fit(&self.gp, &train);
        let cond = gp.conditioned(&train)?;
        Ok(Box::new(ScalarPosterior {
            standardizer,
            gp,
            cond,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_gradient;
    use crate::linalg::{mvn_sample, DEFAULT_JITTER};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gp_draw(seed: u64, n: usize, ell: f64) -> TaskDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        let gp = VanillaGp {
            lengthscale: ell,
            noise_std: 0.01,
            ..VanillaGp::default()
        };
        let k = gp.kernel_matrix(&x, &x).add_diagonal(gp.noise_var());
        let mvn = Mvn::with_jitter(vec![0.0; n], k, DEFAULT_JITTER).unwrap();
        let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        TaskDataset::new(x, mvn_sample(&mvn, &eps).unwrap()).unwrap()
    }

    #[test]
    fn empty_data_keeps_defaults() {
        let gp = VanillaGp::default();
        assert_eq!(vanilla_gp_fit(&gp, &TaskDataset::empty(2)), gp);
        let few = gp_draw(0, 4, 0.5);
        assert_eq!(vanilla_gp_fit(&gp, &few), gp);
    }

    #[test]
    fn recovers_lengthscale() {
        let mut hits = 0;
        for seed in 0..5 {
            let d = gp_draw(seed, 50, 0.5);
            let fit = vanilla_gp_fit(&VanillaGp::default(), &d);
            if (0.3..=0.8).contains(&fit.lengthscale) {
                hits += 1;
            }
        }
        assert!(hits >= 4, "lengthscale recovered in {hits}/5 draws");
    }

    #[test]
    fn fit_never_decreases_mll() {
        for seed in 0..10 {
            let d = gp_draw(100 + seed, 12, 0.2 + 0.1 * seed as f64);
            let gp = VanillaGp::default();
            let fit = vanilla_gp_fit(&gp, &d);
            assert!(fit.mll(&d).unwrap() >= gp.mll(&d).unwrap() - 1e-12);
            assert!(fit.lengthscale >= 0.05 - 1e-12 && fit.lengthscale <= 5.0 + 1e-12);
            assert!(fit.noise_std >= 1e-4 - 1e-15 && fit.noise_std <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn scalar_gradient_matches_finite_differences() {
        let d = gp_draw(3, 8, 0.4);
        let p = ScalarGpParams([0.2, (0.6f64).ln(), 0.1, (0.2f64).ln()]);
        let (_, g) = p.mll_and_grad(std::slice::from_ref(&d)).unwrap();
        let fd = finite_difference_gradient(&p.0, 1e-6, |v| {
            ScalarGpParams([v[0], v[1], v[2], v[3]])
                .mll_and_grad(std::slice::from_ref(&d))
                .map(|r| r.0)
        })
        .unwrap();
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() / a.abs().max(1e-8) < 1e-5);
        }
    }

    #[test]
    fn surrogate_interpolates_observations() {
        let s = ScalarGpSurrogate {
            gp: VanillaGp {
                noise_std: 1e-4,
                fit_hyperparameters: false,
                ..VanillaGp::default()
            },
            scaling: Scaling::Observed(Standardizer::from_box(&[(0.0, 10.0)])),
        };
        let d = TaskDataset::new(
            Matrix::from_rows(&[[1.0], [4.0], [8.0]]).unwrap(),
            vec![-3.0, 2.0, 7.5],
        )
        .unwrap();
        let pred = s.condition(&d).unwrap().predict(&d.x).unwrap();
        for (m, y) in pred.mean.iter().zip(&d.y) {
            assert!((m - y).abs() < 1e-2);
        }
    }
}
