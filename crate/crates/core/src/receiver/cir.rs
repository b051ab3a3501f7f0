//! Normalized cross-correlation channel impulse response estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized correlation magnitude per lag, in chips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirEstimate {
    pub values: Vec<f64>,
    pub peak_lag: usize,
    pub peak_value: f64,
}

impl CirEstimate {
    pub fn from_values(values: Vec<f64>) -> Self {
        let (peak_lag, peak_value) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        CirEstimate { values, peak_lag, peak_value }
    }
}

/// Prefix sums of squares, for windowed power over any span.
///
/// Each prefix is kept as an unevaluated sum `hi + lo` so that differences
/// of large prefixes keep full relative precision on quiet windows.
pub(crate) struct PowerPrefix {
    hi: Vec<f64>,
    lo: Vec<f64>,
}

impl PowerPrefix {
    pub(crate) fn new(x: &[f64]) -> Self {
        let (mut hi, mut lo) = (Vec::with_capacity(x.len() + 1), Vec::with_capacity(x.len() + 1));
        let (mut h, mut l) = (0.0f64, 0.0f64);
        hi.push(h);
        lo.push(l);
        for v in x {
            let sq = v * v;
            let t = h + sq;
            let bp = t - h;
            let err = (h - (t - bp)) + (sq - bp);
            h = t;
            l += err;
            hi.push(h);
            lo.push(l);
        }
        PowerPrefix { hi, lo }
    }

    /// Sum of squares over `start..start + len`, clamped to the signal.
    pub(crate) fn window(&self, start: usize, len: usize) -> f64 {
        let n = self.hi.len() - 1;
        let a = start.min(n);
        let b = (start + len).min(n);
        ((self.hi[b] - self.hi[a]) + (self.lo[b] - self.lo[a])).max(0.0)
    }
}

fn normalize(r: f64, px: f64, py: f64) -> f64 {
    let denom = (px * py).sqrt();
    if denom > 0.0 {
        (r.abs() / denom).min(1.0)
    } else {
        0.0
    }
}

fn template_power(template: &[f64]) -> Result<f64> {
    let p: f64 = template.iter().map(|t| t * t).sum();
    if p > 0.0 && p.is_finite() {
        Ok(p)
    } else {
        Err(Error::Domain("template has zero power".into()))
    }
}

/// CIR over every lag where the template fits inside `received`.
///
/// Skips zero template entries, which leaves each correlation sum
/// bit-identical to the dense double loop.
pub fn ncc_cir(received: &[f64], template: &[f64]) -> Result<CirEstimate> {
    let py = template_power(template)?;
    if received.len() < template.len() {
        return Err(Error::Domain("window shorter than template".into()));
    }
    let nz: Vec<(usize, f64)> =
        template.iter().copied().enumerate().filter(|(_, t)| *t != 0.0).collect();
    let power = PowerPrefix::new(received);
    let lags = received.len() - template.len() + 1;
    let values = (0..lags)
        .map(|tau| {
            let r: f64 = nz.iter().map(|&(i, t)| received[tau + i] * t).sum();
            normalize(r, power.window(tau, template.len()), py)
        })
        .collect();
    Ok(CirEstimate::from_values(values))
}

/// CIR of a template made of `reps` back-to-back copies of `period`, over
/// lags `0..lags`. Samples past the end of `received` count as zero.
///
/// Folds the received signal by the period first, so the cost is
/// independent of the repetition count.
pub fn ncc_cir_periodic(
    received: &[f64],
    period: &[f64],
    reps: usize,
    lags: usize,
) -> Result<CirEstimate> {
    let p = period.len();
    let py = template_power(period)? * reps as f64;
    let at = |i: usize| received.get(i).copied().unwrap_or(0.0);
    let span = lags + p;
    let mut fold = vec![0.0; span];
    for (u, f) in fold.iter_mut().enumerate() {
        *f = (0..reps).map(|k| at(u + k * p)).sum();
    }
    let nz: Vec<(usize, f64)> = period.iter().copied().enumerate().filter(|(_, t)| *t != 0.0).collect();
    let power = PowerPrefix::new(&received[..received.len().min(lags + p * reps)]);
    let values = (0..lags)
        .map(|tau| {
            let r: f64 = nz.iter().map(|&(j, t)| fold[tau + j] * t).sum();
            normalize(r, power.window(tau, p * reps), py)
        })
        .collect();
    Ok(CirEstimate::from_values(values))
}

/// Removal half-width around an accepted peak during iterative subtraction.
pub const PEAK_GUARD: usize = 2;

/// Earliest lag at or above `threshold`, found by repeatedly taking the
/// dominant peak and blanking its neighbourhood.
pub fn first_peak(cir: &CirEstimate, threshold: f64) -> Option<usize> {
    let mut v = cir.values.clone();
    let mut earliest: Option<usize> = None;
    loop {
        let (lag, val) = v
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, x)| if x > b.1 { (i, x) } else { b });
        if v.is_empty() || val < threshold {
            return earliest;
        }
        earliest = Some(earliest.map_or(lag, |e| e.min(lag)));
        let lo = lag.saturating_sub(PEAK_GUARD);
        let hi = (lag + PEAK_GUARD + 1).min(v.len());
        v[lo..hi].iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
    }
}

/// Predicted drop of the CIR peak when uncorrelated jam power is added.
pub fn jam_attenuation_factor(victim_power: f64, jam_power: f64) -> Result<f64> {
    if !(victim_power > 0.0) {
        return Err(Error::Domain("victim power must be positive".into()));
    }
    if !(jam_power >= 0.0) {
        return Err(Error::Domain("jam power must be non-negative".into()));
    }
    Ok((victim_power / (victim_power + jam_power)).sqrt())
}

/// Dense O(N·L) reference used to check [`ncc_cir`].
pub fn ncc_cir_reference(received: &[f64], template: &[f64]) -> Vec<f64> {
    let py: f64 = template.iter().map(|t| t * t).sum();
    (0..=received.len() - template.len())
        .map(|tau| {
            let mut r = 0.0;
            let mut px = 0.0;
            for (i, t) in template.iter().enumerate() {
                let x = received[tau + i];
                r += x * t;
                px += x * x;
            }
            normalize(r, px, py)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn self_correlation_is_one_at_zero_lag() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random(200, &mut rng);
        let c = ncc_cir(&t, &t).unwrap();
        assert_eq!(c.peak_lag, 0);
        assert!((c.peak_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random(64, &mut rng);
        let r = random(300, &mut rng);
        let a = ncc_cir(&r, &t).unwrap();
        let scaled: Vec<f64> = r.iter().map(|x| x * 37.5).collect();
        let b = ncc_cir(&scaled, &t).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn equal_power_jam_gives_point_seven() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t: Vec<f64> = (0..20_000).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let j: Vec<f64> = (0..20_000).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let r: Vec<f64> = t.iter().zip(&j).map(|(a, b)| a + b).collect();
        let c = ncc_cir(&r, &t).unwrap();
        assert!((c.peak_value - 0.5f64.sqrt()).abs() < 0.02);
    }

    #[test]
    fn zero_template_rejected() {
        assert!(ncc_cir(&[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn matches_dense_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.gen_range(16..600);
            let l = rng.gen_range(1..=n);
            let r = random(n, &mut rng);
            let t: Vec<f64> = random(l, &mut rng).into_iter().map(|x| if x.abs() < 0.3 { 0.0 } else { x }).collect();
            if t.iter().all(|x| *x == 0.0) {
                continue;
            }
            let fast = ncc_cir(&r, &t).unwrap().values;
            for (a, b) in fast.iter().zip(ncc_cir_reference(&r, &t)) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn periodic_path_matches_general_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let period = random(40, &mut rng);
        let template: Vec<f64> = period.iter().cycle().take(40 * 6).copied().collect();
        let r = random(400, &mut rng);
        let general = ncc_cir(&r, &template).unwrap();
        let fast = ncc_cir_periodic(&r, &period, 6, general.values.len()).unwrap();
        for (a, b) in fast.values.iter().zip(&general.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn first_peak_examples() {
        let mut v = vec![0.0; 100];
        v[50] = 0.9;
        assert_eq!(first_peak(&CirEstimate::from_values(v.clone()), 0.4), Some(50));
        v[50] = 0.0;
        v[30] = 0.5;
        v[80] = 0.9;
        assert_eq!(first_peak(&CirEstimate::from_values(v), 0.4), Some(30));
        let low = CirEstimate::from_values(vec![0.3; 10]);
        assert_eq!(first_peak(&low, 0.4), None);
    }

    #[test]
    fn attenuation_examples() {
        assert!((jam_attenuation_factor(1.0, 3.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((jam_attenuation_factor(1.0, 15.0).unwrap() - 0.25).abs() < 1e-12);
        assert_eq!(jam_attenuation_factor(2.0, 0.0).unwrap(), 1.0);
        assert!(jam_attenuation_factor(0.0, 1.0).is_err());
    }
}
