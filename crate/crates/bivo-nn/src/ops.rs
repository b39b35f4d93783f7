//! Elementwise and distributional primitives: stable softmax family,
//! Bernoulli losses on logits, KL divergences, and the two
//! reparameterized samplers.

use std::f64::consts::PI;

use rand::Rng;

use crate::NnError;

/// Clamp range for log-variances before exponentiation.
pub const LOG_VAR_MIN: f64 = -20.0;
pub const LOG_VAR_MAX: f64 = 5.0;

/// One standard-normal draw (Box-Muller). Two uniforms per value; the sine
/// partner is discarded to keep the draw count per call fixed.
pub fn sample_standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Bernoulli negative log-likelihood of target `m` under logit `r`:
/// softplus(r) - m*r. Stable for any logit magnitude.
#[inline]
pub fn bce_with_logits(logit: f64, target: f64) -> f64 {
    softplus(logit) - target * logit
}

/// d/dlogit of [`bce_with_logits`].
#[inline]
pub fn bce_with_logits_grad(logit: f64, target: f64) -> f64 {
    sigmoid(logit) - target
}

/// Stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

/// Shannon entropy in nats; 0*ln 0 = 0.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// KL(N(mu, exp(log_var)) || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2).
pub fn kl_gaussian_standard(mean: &[f64], log_var: &[f64]) -> Result<f64, NnError> {
    if mean.len() != log_var.len() {
        return Err(NnError::Shape(format!(
            "mean len {} vs log_var len {}",
            mean.len(),
            log_var.len()
        )));
    }
    Ok(mean
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum())
}

/// KL between diagonal Gaussians given as (mean, log-variance) pairs:
/// sum over dims of 0.5 * (exp(lq - lp) + (mq - mp)^2 * exp(-lp) - 1 + lp - lq).
pub fn kl_gaussian_to_gaussian(
    mean_q: &[f64],
    log_var_q: &[f64],
    mean_p: &[f64],
    log_var_p: &[f64],
) -> Result<f64, NnError> {
    let n = mean_q.len();
    if log_var_q.len() != n || mean_p.len() != n || log_var_p.len() != n {
        return Err(NnError::Shape("Gaussian KL inputs differ in length".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let (mq, lq, mp, lp) = (mean_q[i], log_var_q[i], mean_p[i], log_var_p[i]);
        let d = mq - mp;
        total += 0.5 * ((lq - lp).exp() + d * d * (-lp).exp() - 1.0 + lp - lq);
    }
    Ok(total)
}

/// KL(q || p) = sum q ln(q/p), with 0 ln 0 = 0. Errors when p has a zero
/// where q is positive (infinite divergence) or either input is not a
/// distribution (sums must be within 1e-6 of 1).
pub fn kl_categorical(q: &[f64], p: &[f64]) -> Result<f64, NnError> {
    if q.len() != p.len() {
        return Err(NnError::Shape(format!("q len {} vs p len {}", q.len(), p.len())));
    }
    for (name, dist) in [("q", q), ("p", p)] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(NnError::Prob(format!("{name} sums to {sum}, not 1")));
        }
        if dist.iter().any(|&v| v < 0.0) {
            return Err(NnError::Prob(format!("{name} has a negative entry")));
        }
    }
    let mut total = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi > 0.0 {
            if pi <= 0.0 {
                return Err(NnError::Prob("KL is infinite: p = 0 where q > 0".into()));
            }
            total += qi * (qi / pi).ln();
        }
    }
    Ok(total)
}

/// Relaxed one-hot sample: softmax((logits + Gumbel noise) / temperature).
pub fn gumbel_softmax_sample(logits: &[f64], temperature: f64, rng: &mut impl Rng) -> Vec<f64> {
    assert!(temperature > 0.0, "temperature must be positive");
    let perturbed: Vec<f64> = logits
        .iter()
        .map(|&l| {
            let u: f64 = rng.gen::<f64>().max(1e-12);
            let g = -(-u.ln()).ln();
            (l + g) / temperature
        })
        .collect();
    softmax(&perturbed)
}

/// Hard one-hot at the argmax (first index wins ties); the straight-through
/// evaluation path for the discrete latent.
pub fn argmax_one_hot(logits: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    let mut out = vec![0.0; logits.len()];
    out[best] = 1.0;
    out
}

/// Reparameterized Gaussian sample: mean + exp(0.5 * clamp(log_var)) * eps.
/// The clamp to [LOG_VAR_MIN, LOG_VAR_MAX] guards exp overflow/underflow.
pub fn gaussian_reparam(mean: &[f64], log_var: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>, NnError> {
    if mean.len() != log_var.len() {
        return Err(NnError::Shape(format!(
            "mean len {} vs log_var len {}",
            mean.len(),
            log_var.len()
        )));
    }
    Ok(mean
        .iter()
        .zip(log_var)
        .map(|(&m, &lv)| {
            let std = (0.5 * lv.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).exp();
            m + std * sample_standard_normal(rng)
        })
        .collect())
}
