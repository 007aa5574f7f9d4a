//! EDM-preconditioned latent diffusion: scaling coefficients, the denoiser
//! wrapper, log-normal noise levels, the weighted training loss,
//! classifier-free guidance and the deterministic Heun sampler.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdmConfig {
    pub sigma_data: f64,
    pub p_mean: f64,
    pub p_std: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub steps: usize,
    pub guidance_scale: f64,
}

impl Default for EdmConfig {
    fn default() -> Self {
        EdmConfig {
            sigma_data: 0.1,
            p_mean: -3.0,
            p_std: 1.0,
            sigma_min: 0.002,
            sigma_max: 1.0,
            rho: 7.0,
            steps: 50,
            guidance_scale: 20.0,
        }
    }
}

impl EdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_data > 0.0) {
            return Err(Error::Config(format!("sigma_data must be positive, got {}", self.sigma_data)));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max) {
            return Err(Error::Config(format!(
                "need 0 < sigma_min < sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.steps == 0 {
            return Err(Error::Config("sampler needs at least one step".into()));
        }
        if !(self.p_std >= 0.0 && self.rho > 0.0) {
            return Err(Error::Config("p_std must be >= 0 and rho > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCoeffs {
    pub c_skip: f64,
    pub c_out: f64,
    pub c_in: f64,
    pub c_noise: f64,
}

pub fn scaling(sigma: f64, cfg: &EdmConfig) -> Result<ScalingCoeffs> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain("scaling", format!("sigma must be positive, got {sigma}")));
    }
    let sd = cfg.sigma_data;
    let total = sigma * sigma + sd * sd;
    let root = total.sqrt();
    Ok(ScalingCoeffs {
        c_skip: sd * sd / total,
        c_out: sigma * sd / root,
        c_in: 1.0 / root,
        c_noise: 0.25 * sigma.ln(),
    })
}

/// Loss weight λ(σ) = 1 / c_out(σ)².
pub fn loss_weight(sigma: f64, cfg: &EdmConfig) -> Result<f64> {
    let c = scaling(sigma, cfg)?;
    Ok(1.0 / (c.c_out * c.c_out))
}

/// The raw network f_θ. `None` conditioning selects the unconditional
/// (null-token) branch.
pub trait Network {
    type Cond;

    fn raw(&self, x_in: &Tensor, c_noise: &[f64], cond: Option<&Self::Cond>) -> Result<Tensor>;
}

/// Per-batch-element coefficients shaped to broadcast against `like`.
fn per_batch(values: &[f64], like: &Tensor) -> Tensor {
    let mut shape = vec![1; like.rank()];
    shape[0] = values.len();
    Tensor::new(values.iter().map(|&v| v as f32).collect(), &shape)
}

fn check_batch(z: &Tensor, sigmas: &[f64]) -> Result<()> {
    if z.rank() == 0 || z.shape()[0] != sigmas.len() {
        return Err(Error::dim("denoise (batch vs sigmas)", z.shape(), &[sigmas.len()]));
    }
    Ok(())
}

/// D(z, σ) = c_skip z + c_out f(c_in z, c_noise), one σ per batch element.
pub fn denoise<N: Network>(net: &N, z: &Tensor, sigmas: &[f64], cond: Option<&N::Cond>, cfg: &EdmConfig) -> Result<Tensor> {
    check_batch(z, sigmas)?;
    let coeffs = sigmas.iter().map(|&s| scaling(s, cfg)).collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&ScalingCoeffs) -> f64| coeffs.iter().map(f).collect::<Vec<_>>();
    let c_skip = per_batch(&pick(|c| c.c_skip), z);
    let c_out = per_batch(&pick(|c| c.c_out), z);
    let c_in = per_batch(&pick(|c| c.c_in), z);
    let f = net.raw(&z.mul(&c_in)?, &pick(|c| c.c_noise), cond)?;
    if f.shape() != z.shape() {
        return Err(Error::dim("denoise (network output)", f.shape(), z.shape()));
    }
    z.mul(&c_skip)?.add(&f.mul(&c_out)?)
}

/// Draws σ with ln σ ~ N(P_mean, P_std²).
pub fn sample_sigma(rng: &mut impl Rng, cfg: &EdmConfig) -> f64 {
    let n = Normal::new(cfg.p_mean, cfg.p_std).expect("validated p_std");
    n.sample(rng).exp()
}

pub fn standard_normal(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new((0..n).map(|_| StandardNormal.sample(rng)).collect(), shape)
}

/// λ(σ)-weighted mean squared error of the denoiser against `z0` for the
/// given noise levels and noise draw. Averaged over elements, then batch.
pub fn training_loss_with<N: Network>(
    net: &N,
    z0: &Tensor,
    cond: Option<&N::Cond>,
    sigmas: &[f64],
    noise: &Tensor,
    cfg: &EdmConfig,
) -> Result<Tensor> {
    check_batch(z0, sigmas)?;
    if noise.shape() != z0.shape() {
        return Err(Error::dim("training_loss (noise)", noise.shape(), z0.shape()));
    }
    let z_noisy = z0.add(&noise.mul(&per_batch(sigmas, noise))?)?;
    let d = denoise(net, &z_noisy, sigmas, cond, cfg)?;
    let b = sigmas.len();
    let per_elem = d.sub(z0)?.square().reshape(&[b, z0.numel() / b])?.mean_axis(1, false)?;
    let weights = sigmas
        .iter()
        .map(|&s| loss_weight(s, cfg).map(|w| (w / b as f64) as f32))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_elem.mul(&Tensor::new(weights, &[b]))?.sum())
}

pub struct LossSample {
    pub loss: Tensor,
    pub sigmas: Vec<f64>,
}

/// Draws one σ per batch element and i.i.d. standard normal noise, then
/// evaluates [`training_loss_with`].
pub fn training_loss<N: Network>(
    net: &N,
    z0: &Tensor,
    cond: Option<&N::Cond>,
    rng: &mut impl Rng,
    cfg: &EdmConfig,
) -> Result<LossSample> {
    let b = z0.shape().first().copied().unwrap_or(0);
    let sigmas: Vec<f64> = (0..b).map(|_| sample_sigma(rng, cfg)).collect();
    let noise = standard_normal(rng, z0.shape());
    let loss = training_loss_with(net, z0, cond, &sigmas, &noise, cfg)?;
    Ok(LossSample { loss, sigmas })
}

/// D_uncond + w (D_cond − D_uncond), evaluated in `f64` so that w = 0 and
/// w = 1 return the unconditional and conditional outputs exactly.
pub fn guide(d_uncond: &Tensor, d_cond: &Tensor, w: f64) -> Result<Tensor> {
    if d_uncond.shape() != d_cond.shape() {
        return Err(Error::dim("guidance", d_uncond.shape(), d_cond.shape()));
    }
    let data = d_uncond
        .data()
        .iter()
        .zip(d_cond.data())
        .map(|(&u, &c)| (u as f64 + w * (c as f64 - u as f64)) as f32)
        .collect();
    Ok(Tensor::new(data, d_cond.shape()))
}

pub fn cfg_denoise<N: Network>(net: &N, z: &Tensor, sigmas: &[f64], cond: &N::Cond, w: f64, cfg: &EdmConfig) -> Result<Tensor> {
    let d_cond = denoise(net, &z.detach(), sigmas, Some(cond), cfg)?;
    let d_uncond = denoise(net, &z.detach(), sigmas, None, cfg)?;
    guide(&d_uncond, &d_cond, w)
}

/// σ_0 > σ_1 > … > σ_{N−1} = σ_min, followed by a final 0. With N = 1 the
/// single level is σ_max.
pub fn sigma_schedule(cfg: &EdmConfig) -> Vec<f64> {
    let n = cfg.steps;
    let inv = 1.0 / cfg.rho;
    let (hi, lo) = (cfg.sigma_max.powf(inv), cfg.sigma_min.powf(inv));
    let mut s: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                cfg.sigma_max
            } else if i == n - 1 {
                cfg.sigma_min
            } else {
                (hi + i as f64 / (n - 1) as f64 * (lo - hi)).powf(cfg.rho)
            }
        })
        .collect();
    s.push(0.0);
    s
}

/// Deterministic Heun sampler over the schedule. `denoiser(z, σ)` must
/// return D(z, σ); the second-order correction is skipped on the step that
/// lands on σ = 0.
pub fn sample_with<F>(mut denoiser: F, shape: &[usize], cfg: &EdmConfig, rng: &mut impl Rng) -> Result<Tensor>
where
    F: FnMut(&Tensor, f64) -> Result<Tensor>,
{
    cfg.validate()?;
    let sigmas = sigma_schedule(cfg);
    let noise = standard_normal(rng, shape);
    let mut z: Vec<f64> = noise.data().iter().map(|&v| v as f64 * sigmas[0]).collect();
    let as_tensor = |v: &[f64]| Tensor::new(v.iter().map(|&x| x as f32).collect(), shape);
    for i in 0..cfg.steps {
        let (s, s_next) = (sigmas[i], sigmas[i + 1]);
        let d = denoiser(&as_tensor(&z), s)?;
        let slope: Vec<f64> = z.iter().zip(d.data()).map(|(&zi, &di)| (zi - di as f64) / s).collect();
        let euler: Vec<f64> = z.iter().zip(&slope).map(|(&zi, &k)| zi + (s_next - s) * k).collect();
        if s_next == 0.0 {
            z = euler;
            continue;
        }
        let d2 = denoiser(&as_tensor(&euler), s_next)?;
        z = z
            .iter()
            .zip(&slope)
            .zip(euler.iter().zip(d2.data()))
            .map(|((&zi, &k1), (&ei, &di))| {
                let k2 = (ei - di as f64) / s_next;
                zi + (s_next - s) * 0.5 * (k1 + k2)
            })
            .collect();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: i,
                detail: "sampler produced a non-finite latent".into(),
            });
        }
    }
    Ok(as_tensor(&z))
}

/// Guided sampling of a latent batch of `shape` with the configured step
/// count and guidance scale.
pub fn sample<N: Network>(net: &N, cond: &N::Cond, shape: &[usize], cfg: &EdmConfig, rng: &mut impl Rng) -> Result<Tensor> {
    let b = shape[0];
    sample_with(
        |z, s| cfg_denoise(net, z, &vec![s; b], cond, cfg.guidance_scale, cfg),
        shape,
        cfg,
        rng,
    )
}

/// Unguided sampling from the null-conditioned branch.
pub fn sample_unconditional<N: Network>(net: &N, shape: &[usize], cfg: &EdmConfig, rng: &mut impl Rng) -> Result<Tensor> {
    let b = shape[0];
    sample_with(|z, s| denoise(net, z, &vec![s; b], None, cfg), shape, cfg, rng)
}
