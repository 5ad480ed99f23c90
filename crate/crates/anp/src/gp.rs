//! Squared-exponential Gaussian process data: curve sampling, episode
//! generation for 1D regression, and the exact GP posterior used as an
//! evaluation oracle.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Episode;
use crate::rng::Stream;
use crate::tensor::Tensor;

/// Jitter schedule for Cholesky: start small, multiply by 10, give up
/// at 1e-4.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Squared-exponential kernel hyperparameters plus the likelihood noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    /// length scale, in x units
    pub l: f64,
    /// kernel scale sigma_f, in y units
    pub sigma_f: f64,
    /// likelihood noise std sigma_n, in y units
    pub sigma_n: f64,
}

impl GpHyperparams {
    /// The fixed setting used for the main 1D experiments:
    /// l = 0.6, sigma_f = 1, sigma_n = 0.02.
    pub fn fixed() -> Self {
        GpHyperparams {
            l: 0.6,
            sigma_f: 1.0,
            sigma_n: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l > 0.0 && self.sigma_f > 0.0 && self.sigma_n > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "GP hyperparameters must be strictly positive, got l={}, sigma_f={}, sigma_n={}",
                self.l, self.sigma_f, self.sigma_n
            )))
        }
    }
}

/// How hyperparameters are drawn per episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HyperMode {
    /// l = 0.6, sigma_f = 1 for every episode.
    Fixed,
    /// l ~ U[0.1, 0.6], sigma_f ~ U[0.1, 1] per episode.
    Random,
}

/// Episode-sampling configuration for the 1D GP task:
/// n ~ U[3, 100], m ~ n + U[0, 100 - n], x ~ U[-2, 2].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_min: usize,
    pub n_max: usize,
    pub max_points: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub hyper_mode: HyperMode,
}

impl EpisodeSpec {
    pub fn gp1d(hyper_mode: HyperMode) -> Self {
        EpisodeSpec {
            n_min: 3,
            n_max: 100,
            max_points: 100,
            x_lo: -2.0,
            x_hi: 2.0,
            hyper_mode,
        }
    }
}

/// Covariance matrix `k(x, x') = sigma_f^2 exp(-(x - x')^2 / (2 l^2))`.
/// Likelihood noise is NOT added here.
pub fn se_kernel(xs1: &Tensor, xs2: &Tensor, hyp: &GpHyperparams) -> Tensor {
    assert_eq!(xs1.cols(), 1, "se_kernel: xs1 must be a column");
    assert_eq!(xs2.cols(), 1, "se_kernel: xs2 must be a column");
    let sf2 = hyp.sigma_f * hyp.sigma_f;
    let inv_2l2 = 1.0 / (2.0 * hyp.l * hyp.l);
    Tensor::from_fn(xs1.rows(), xs2.rows(), |i, j| {
        let d = xs1.get(i, 0) - xs2.get(j, 0);
        sf2 * (-d * d * inv_2l2).exp()
    })
}

/// Cholesky of `k + (base_diag + jitter) I` under the jitter schedule.
fn cholesky_with_jitter(k: &DMatrix<f64>, base_diag: f64) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = k.nrows();
    let mut jitter = 0.0;
    loop {
        let mut a = k.clone();
        for i in 0..n {
            a[(i, i)] += base_diag + jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok(chol);
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_MAX {
            let diag_max = (0..n).map(|i| k[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
            let diag_min = (0..n).map(|i| k[(i, i)]).fold(f64::INFINITY, f64::min);
            return Err(Error::Cholesky {
                jitter: JITTER_MAX,
                cond_estimate: diag_max / diag_min.max(f64::MIN_POSITIVE),
            });
        }
    }
}

fn column_to_dvector(t: &Tensor) -> DVector<f64> {
    DVector::from_column_slice(t.data())
}

/// Draw `y ~ N(0, K + sigma_n^2 I)` at the given inputs.
pub fn sample_curve(hyp: &GpHyperparams, xs: &Tensor, rng: &mut Stream) -> Result<Tensor> {
    hyp.validate()?;
    let k = se_kernel(xs, xs, hyp);
    let n = xs.rows();
    let km = DMatrix::from_fn(n, n, |i, j| k.get(i, j));
    let chol = cholesky_with_jitter(&km, hyp.sigma_n * hyp.sigma_n)?;
    let eps = column_to_dvector(&rng.normal_tensor(n, 1));
    let y = chol.l() * eps;
    Ok(Tensor::from_vec(n, 1, y.iter().copied().collect()))
}

/// Sample one training episode: draw hyperparameters per mode, m target
/// inputs uniformly in [x_lo, x_hi], a curve over them, and select n of
/// the targets as contexts. Returns the episode with the hyperparameters
/// that generated it (for oracle comparison).
pub fn sample_episode(spec: &EpisodeSpec, rng: &mut Stream) -> Result<(Episode, GpHyperparams)> {
    let hyp = match spec.hyper_mode {
        HyperMode::Fixed => GpHyperparams::fixed(),
        HyperMode::Random => GpHyperparams {
            l: rng.uniform(0.1, 0.6),
            sigma_f: rng.uniform(0.1, 1.0),
            sigma_n: GpHyperparams::fixed().sigma_n,
        },
    };
    let n = rng.uniform_int(spec.n_min, spec.n_max);
    let m = n + rng.uniform_int(0, spec.max_points - n);
    let x_t = Tensor::from_fn(m, 1, |_, _| rng.uniform(spec.x_lo, spec.x_hi));
    let y_t = sample_curve(&hyp, &x_t, rng)?;
    let idx = rng.sample_indices(m, n);
    let x_c = Tensor::from_fn(n, 1, |i, _| x_t.get(idx[i], 0));
    let y_c = Tensor::from_fn(n, 1, |i, _| y_t.get(idx[i], 0));
    Ok((
        Episode {
            x_c,
            y_c,
            x_t,
            y_t,
            context_indices: idx,
        },
        hyp,
    ))
}

/// Exact GP posterior at the query points, conditioned on noisy
/// observations (noise variance sigma_n^2 on the context diagonal).
/// Returns the posterior mean and the marginal *function* variance
/// (add sigma_n^2 for the predictive variance of a noisy observation).
pub fn gp_posterior(
    hyp: &GpHyperparams,
    x_c: &Tensor,
    y_c: &Tensor,
    x_query: &Tensor,
) -> Result<(Tensor, Tensor)> {
    hyp.validate()?;
    let q = x_query.rows();
    let n = x_c.rows();
    let sf2 = hyp.sigma_f * hyp.sigma_f;
    if n == 0 {
        return Ok((Tensor::zeros(q, 1), Tensor::filled(q, 1, sf2)));
    }
    assert_eq!(y_c.shape(), (n, 1), "gp_posterior: y_C shape mismatch");

    let k_cc = se_kernel(x_c, x_c, hyp);
    let km = DMatrix::from_fn(n, n, |i, j| k_cc.get(i, j));
    let chol = cholesky_with_jitter(&km, hyp.sigma_n * hyp.sigma_n)?;

    let k_qc = se_kernel(x_query, x_c, hyp);
    let alpha = chol.solve(&column_to_dvector(y_c));
    let mean = Tensor::from_fn(q, 1, |i, _| {
        (0..n).map(|j| k_qc.get(i, j) * alpha[j]).sum()
    });

    // var_i = k(x_i, x_i) - k_qc_i (K + sigma_n^2 I)^{-1} k_qc_i^T
    let kqc_m = DMatrix::from_fn(q, n, |i, j| k_qc.get(i, j));
    let solved = chol.solve(&kqc_m.transpose()); // [n, q]
    let var = Tensor::from_fn(q, 1, |i, _| {
        let reduction: f64 = (0..n).map(|j| kqc_m[(i, j)] * solved[(j, i)]).sum();
        (sf2 - reduction).max(0.0)
    });
    Ok((mean, var))
}

/// One draw of the posterior *function* at the query points (no
/// observation noise added), via the full posterior covariance.
pub fn gp_posterior_sample(
    hyp: &GpHyperparams,
    x_c: &Tensor,
    y_c: &Tensor,
    x_query: &Tensor,
    rng: &mut Stream,
) -> Result<Tensor> {
    hyp.validate()?;
    let q = x_query.rows();
    let n = x_c.rows();
    let k_qq = se_kernel(x_query, x_query, hyp);
    let mut cov = DMatrix::from_fn(q, q, |i, j| k_qq.get(i, j));
    let mut mean = DVector::zeros(q);
    if n > 0 {
        let k_cc = se_kernel(x_c, x_c, hyp);
        let km = DMatrix::from_fn(n, n, |i, j| k_cc.get(i, j));
        let chol = cholesky_with_jitter(&km, hyp.sigma_n * hyp.sigma_n)?;
        let k_qc = se_kernel(x_query, x_c, hyp);
        let kqc_m = DMatrix::from_fn(q, n, |i, j| k_qc.get(i, j));
        let solved = chol.solve(&kqc_m.transpose()); // [n, q]
        mean = &kqc_m * chol.solve(&column_to_dvector(y_c));
        cov -= &kqc_m * solved;
    }
    let chol_q = cholesky_with_jitter(&cov, 0.0)?;
    let eps = column_to_dvector(&rng.normal_tensor(q, 1));
    let draw = mean + chol_q.l() * eps;
    Ok(Tensor::from_vec(q, 1, draw.iter().copied().collect()))
}
