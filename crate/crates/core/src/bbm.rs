//! Binary branching Brownian motion started from one particle at 0, with
//! generator `D∂²` for each particle and independent rate-`β` binary splits.
//! `D = 1/2` is standard Brownian motion.
//!
//! Each replicate draws from its own ChaCha8 stream: the master seed selects
//! the key and the replicate index selects the stream, so replicate `k` is
//! the same whatever the thread count or replicate total.
//!
//! Simulation is exact and per-particle: a particle alive at `s` runs until
//! the earliest of its exponential clock, the next checkpoint and `t_end`,
//! moving by one Gaussian increment. Clocks are memoryless, so restarting a
//! clock at a checkpoint does not change the law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::least_squares;

/// Hard cap on particles alive at any checkpoint of a replicate.
pub const PARTICLE_CAP: usize = 1_000_000;

/// Fewest replicates for which medians are considered stable.
pub const MIN_MEDIAN_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmConfig {
    pub branch_rate: f64,
    /// `D` in the generator `D∂²`.
    pub diffusion: f64,
    pub t_end: f64,
    pub replicates: usize,
    pub seed: u64,
    /// Increasing times in `[0, t_end]`; `t_end` is appended if missing.
    pub checkpoints: Vec<f64>,
}

impl BbmConfig {
    pub fn standard(t_end: f64, replicates: usize, seed: u64) -> Self {
        Self { branch_rate: 1.0, diffusion: 0.5, t_end, replicates, seed, checkpoints: Vec::new() }
    }

    pub fn with_checkpoints(mut self, checkpoints: &[f64]) -> Self {
        self.checkpoints = checkpoints.to_vec();
        self
    }

    /// Minimal front speed `2√(βD)`.
    pub fn speed(&self) -> f64 {
        2.0 * (self.branch_rate * self.diffusion).sqrt()
    }

    fn times(&self) -> Vec<f64> {
        let mut ts = self.checkpoints.clone();
        if ts.last().map_or(true, |&t| t < self.t_end) {
            ts.push(self.t_end);
        }
        ts
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.branch_rate > 0.0) || !(self.diffusion > 0.0) {
            return Err(invalid("branch rate and diffusion must be positive"));
        }
        if self.replicates < 1 {
            return Err(invalid("need at least one replicate"));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(invalid(format!("t_end = {}", self.t_end)));
        }
        let ts = &self.checkpoints;
        if ts.iter().any(|&t| !(0.0..=self.t_end).contains(&t)) || ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("checkpoints must be increasing inside [0, t_end]"));
        }
        let expected = (self.branch_rate * self.t_end).exp();
        if expected > PARTICLE_CAP as f64 {
            return Err(Error::ParticleCap { count: expected as usize, cap: PARTICLE_CAP });
        }
        Ok(())
    }
}

/// How the derivative martingale is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// `Σ (ct - X) e^{λ(X - ct)}` with `c = 2√(βD)` and `λ = c/(2D)` taken
    /// from the simulated process.
    Native,
    /// `Σ (2t - X) e^{X - 2t}`, the form for generator `∂²` at unit rate.
    UnitDiffusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmEnsemble {
    pub config: BbmConfig,
    pub times: Vec<f64>,
    /// `max[r][k]`: maximum of replicate `r` at `times[k]`.
    pub max: Vec<Vec<f64>>,
    pub count: Vec<Vec<u64>>,
    pub z_native: Vec<Vec<f64>>,
    pub z_unit: Vec<Vec<f64>>,
}

struct Replicate {
    max: Vec<f64>,
    count: Vec<u64>,
    z_native: Vec<f64>,
    z_unit: Vec<f64>,
}

fn run_replicate(config: &BbmConfig, times: &[f64], index: usize) -> Result<Replicate> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let k = times.len();
    let mut out = Replicate {
        max: vec![f64::NEG_INFINITY; k],
        count: vec![0; k],
        z_native: vec![0.0; k],
        z_unit: vec![0.0; k],
    };
    let c = config.speed();
    let lam = c / (2.0 * config.diffusion);
    let sd = (2.0 * config.diffusion).sqrt();
    // (time, position, index of the next checkpoint at or after time)
    let mut stack: Vec<(f64, f64, usize)> = vec![(0.0, 0.0, 0)];
    while let Some((s, x, mut next)) = stack.pop() {
        // checkpoints sitting exactly at s (only possible at s = 0)
        while next < k && times[next] <= s {
            record(&mut out, next, times[next], x, c, lam)?;
            next += 1;
        }
        if next == k {
            continue;
        }
        let clock: f64 = rng.sample::<f64, _>(Exp1) / config.branch_rate;
        let stop = (s + clock).min(times[next]);
        let z: f64 = rng.sample(StandardNormal);
        let y = x + sd * (stop - s).sqrt() * z;
        if s + clock < times[next] {
            stack.push((stop, y, next));
            stack.push((stop, y, next));
        } else {
            record(&mut out, next, stop, y, c, lam)?;
            if next + 1 < k {
                stack.push((stop, y, next + 1));
            }
        }
    }
    Ok(out)
}

fn record(out: &mut Replicate, k: usize, t: f64, x: f64, c: f64, lam: f64) -> Result<()> {
    out.count[k] += 1;
    if out.count[k] as usize > PARTICLE_CAP {
        return Err(Error::ParticleCap { count: out.count[k] as usize, cap: PARTICLE_CAP });
    }
    out.max[k] = out.max[k].max(x);
    out.z_native[k] += (c * t - x) * (lam * (x - c * t)).exp();
    out.z_unit[k] += (2.0 * t - x) * (x - 2.0 * t).exp();
    Ok(())
}

/// Runs all replicates in parallel; results are ordered by replicate index.
pub fn simulate(config: &BbmConfig) -> Result<BbmEnsemble> {
    config.validate()?;
    let times = config.times();
    let reps: Vec<Result<Replicate>> =
        (0..config.replicates).into_par_iter().map(|r| run_replicate(config, &times, r)).collect();
    let mut ens = BbmEnsemble {
        config: config.clone(),
        times,
        max: Vec::with_capacity(config.replicates),
        count: Vec::with_capacity(config.replicates),
        z_native: Vec::with_capacity(config.replicates),
        z_unit: Vec::with_capacity(config.replicates),
    };
    for r in reps {
        let r = r?;
        ens.max.push(r.max);
        ens.count.push(r.count);
        ens.z_native.push(r.z_native);
        ens.z_unit.push(r.z_unit);
    }
    Ok(ens)
}

impl BbmEnsemble {
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
            .ok_or_else(|| invalid(format!("t = {t} is not a checkpoint")))
    }

    pub fn maxima(&self, t: f64) -> Result<Vec<f64>> {
        let k = self.time_index(t)?;
        Ok(self.max.iter().map(|m| m[k]).collect())
    }

    pub fn counts(&self, t: f64) -> Result<Vec<u64>> {
        let k = self.time_index(t)?;
        Ok(self.count.iter().map(|c| c[k]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub x: f64,
    /// Empirical `ℙ(M_t > x)`.
    pub p: f64,
    /// 95% normal-approximation binomial half-width.
    pub half_width: f64,
}

/// Empirical tail of the maximum at checkpoint `t` on `xs`.
pub fn max_cdf(ens: &BbmEnsemble, t: f64, xs: &[f64]) -> Result<Vec<TailPoint>> {
    let mut m = ens.maxima(t)?;
    m.sort_by(f64::total_cmp);
    let n = m.len() as f64;
    Ok(xs
        .iter()
        .map(|&x| {
            let above = m.len() - m.partition_point(|&v| v <= x);
            let p = above as f64 / n;
            TailPoint { x, p, half_width: 1.96 * (p * (1.0 - p) / n).sqrt() }
        })
        .collect())
}

/// Per-replicate derivative martingale at checkpoint `t`.
pub fn derivative_martingale(ens: &BbmEnsemble, t: f64, norm: Normalization) -> Result<Vec<f64>> {
    let k = ens.time_index(t)?;
    let src = match norm {
        Normalization::Native => &ens.z_native,
        Normalization::UnitDiffusion => &ens.z_unit,
    };
    Ok(src.iter().map(|z| z[k]).collect())
}

/// Midpoint-interpolated sample median.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianFit {
    /// Coefficient of `-log t`.
    pub c: f64,
    pub constant: f64,
    /// Bootstrap standard error of `c`.
    pub c_stderr: f64,
    pub medians: Vec<(f64, f64)>,
}

/// Fits `median = speed·t - c log t + a` by least squares on `(t, median)`.
pub fn fit_log_shift(points: &[(f64, f64)], speed: f64) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(invalid("need at least two medians"));
    }
    let logs: Vec<f64> = points.iter().map(|p| -p.0.ln()).collect();
    let ones = vec![1.0; points.len()];
    let y: Vec<f64> = points.iter().map(|p| p.1 - speed * p.0).collect();
    let fit = least_squares(&[logs, ones], &y)?;
    Ok((fit.coef[0], fit.coef[1]))
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Median shift coefficient from the ensemble medians at `checkpoints`, with a
/// replicate bootstrap (its generator keyed by the ensemble seed).
pub fn median_shift_fit(ens: &BbmEnsemble, checkpoints: &[f64]) -> Result<MedianFit> {
    let n = ens.max.len();
    if n < MIN_MEDIAN_REPLICATES {
        return Err(Error::InsufficientReplicates { needed: MIN_MEDIAN_REPLICATES, got: n });
    }
    if checkpoints.len() < 4 {
        return Err(invalid("need at least four checkpoints"));
    }
    let speed = ens.config.speed();
    let columns: Vec<Vec<f64>> = checkpoints.iter().map(|&t| ens.maxima(t)).collect::<Result<_>>()?;
    let medians: Vec<(f64, f64)> = checkpoints.iter().zip(&columns).map(|(&t, m)| (t, median(m))).collect();
    let (c, constant) = fit_log_shift(&medians, speed)?;

    let boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(ens.config.seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(b as u64);
            let pick: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let meds: Vec<(f64, f64)> = checkpoints
                .iter()
                .zip(&columns)
                .map(|(&t, m)| (t, median(&pick.iter().map(|&i| m[i]).collect::<Vec<_>>())))
                .collect();
            fit_log_shift(&meds, speed).map(|f| f.0).unwrap_or(f64::NAN)
        })
        .collect();
    let mean = boot.iter().sum::<f64>() / boot.len() as f64;
    let var = boot.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (boot.len() - 1) as f64;
    Ok(MedianFit { c, constant, c_stderr: var.sqrt(), medians })
}

/// Predicted coefficient `3/(2λ)` with `λ = 1/√D` at unit branching rate;
/// `3/(2√2)` for standard BBM.
pub fn predicted_shift(diffusion: f64) -> f64 {
    1.5 * diffusion.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn time_zero_is_one_particle() {
        let e = simulate(&BbmConfig::standard(0.0, 5, 1)).unwrap();
        assert_eq!(e.times, vec![0.0]);
        for r in 0..5 {
            assert_eq!((e.max[r][0], e.count[r][0], e.z_native[r][0]), (0.0, 1, 0.0));
        }
    }

    #[test]
    fn cap_enforced_up_front() {
        let err = simulate(&BbmConfig::standard(15.0, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::ParticleCap { .. }));
    }
}
