//! Noise, missing data, gap filling and standardization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discrete::Observations;
use crate::error::{invalid, Error, Result};
use crate::library::StateScaling;

use super::Trajectory;

/// Which observations to remove.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DropSpec {
    #[default]
    None,
    /// Removes every component of the samples with `start < t < end`.
    ContinuousGap { start: f64, end: f64 },
    /// Removes each scalar entry independently with probability `fraction`.
    RandomFraction { fraction: f64 },
}

/// Additive Gaussian noise relative to each component's spread, plus data
/// removal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise standard deviation as a fraction of the clean component's
    /// standard deviation.
    pub level: f64,
    pub seed: u64,
    #[serde(default)]
    pub drop: DropSpec,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0 && self.level.is_finite()) {
            return Err(invalid("noise level must be nonnegative"));
        }
        match self.drop {
            DropSpec::RandomFraction { fraction } if !(0.0..1.0).contains(&fraction) => Err(invalid("drop fraction must lie in [0, 1)")),
            DropSpec::ContinuousGap { start, end } if !(start < end) => Err(invalid("gap start must precede its end")),
            _ => Ok(()),
        }
    }
}

/// Deterministic 64-bit seed for stream `(a, b)` of a master seed.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = master ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Population standard deviation of each column of a row-major matrix,
/// skipping entries where `keep` is false.
pub fn column_std(values: &[f64], d: usize, keep: Option<&[bool]>) -> Vec<f64> {
    (0..d)
        .map(|c| {
            let col: Vec<f64> = values
                .iter()
                .enumerate()
                .filter(|(e, _)| e % d == c && keep.is_none_or(|k| k[*e]))
                .map(|(_, &v)| v)
                .collect();
            let n = col.len() as f64;
            if col.is_empty() {
                return 0.0;
            }
            let mean = col.iter().sum::<f64>() / n;
            (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
        })
        .collect()
}

/// Noisy, partially observed samples of a clean trajectory.
pub fn add_noise_and_drop(traj: &Trajectory, spec: &NoiseSpec) -> Result<Observations> {
    spec.validate()?;
    let d = traj.dim;
    let sigma: Vec<f64> = column_std(&traj.values, d, None).iter().map(|s| s * spec.level).collect();
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    noise_rng.set_stream(0);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    drop_rng.set_stream(1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let values: Vec<f64> = traj
        .values
        .iter()
        .enumerate()
        .map(|(e, &v)| v + sigma[e % d] * normal.sample(&mut noise_rng))
        .collect();
    let available: Vec<bool> = match spec.drop {
        DropSpec::None => vec![true; values.len()],
        DropSpec::ContinuousGap { start, end } => (0..values.len())
            .map(|e| {
                let t = traj.times[e / d];
                !(t > start && t < end)
            })
            .collect(),
        DropSpec::RandomFraction { fraction } => (0..values.len()).map(|_| !drop_rng.random_bool(fraction)).collect(),
    };
    let values = values
        .into_iter()
        .zip(&available)
        .map(|(v, &a)| if a { v } else { f64::NAN })
        .collect();
    Observations::new(d, traj.times.clone(), values, available)
}

/// Per-component linear interpolation of the available entries onto
/// `times`, constant beyond the first and last available entry.
pub fn interpolate_states(obs: &Observations, times: &[f64]) -> Result<Vec<f64>> {
    let d = obs.dim();
    let mut out = vec![0.0; times.len() * d];
    for c in 0..d {
        let pts: Vec<(f64, f64)> = (0..obs.len()).filter_map(|j| obs.value(j, c).map(|v| (obs.times()[j], v))).collect();
        if pts.is_empty() {
            return Err(Error::MissingComponent(c));
        }
        if pts.len() < 2 {
            return Err(invalid(format!("component {c} has a single available entry")));
        }
        let mut seg = 0;
        for (i, &t) in times.iter().enumerate() {
            let v = if t <= pts[0].0 {
                pts[0].1
            } else if t >= pts[pts.len() - 1].0 {
                pts[pts.len() - 1].1
            } else {
                while pts[seg + 1].0 < t {
                    seg += 1;
                }
                let (t0, v0) = pts[seg];
                let (t1, v1) = pts[seg + 1];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            };
            out[i * d + c] = v;
        }
    }
    Ok(out)
}

/// Gap-filled state matrix at the observation times.
pub fn initial_state(obs: &Observations) -> Result<Vec<f64>> {
    interpolate_states(obs, obs.times())
}

/// Divides each component by the standard deviation of its available
/// entries.
pub fn standardize_states(obs: &Observations) -> Result<(Observations, StateScaling)> {
    let d = obs.dim();
    let scales = column_std(obs.values(), d, Some(obs.available()));
    if let Some(c) = scales.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("component {c} has zero variance")));
    }
    let values = obs.values().iter().enumerate().map(|(e, v)| v / scales[e % d]).collect();
    Ok((obs.with_values(values)?, StateScaling { scales }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Trajectory {
        let times: Vec<f64> = (0..1000).map(|i| i as f64 * 0.01).collect();
        let values = times.iter().flat_map(|t| [t.sin(), 3.0 * t.cos()]).collect();
        Trajectory { dim: 2, times, values }
    }

    #[test]
    fn zero_noise_is_identity() {
        let tr = ramp();
        let obs = add_noise_and_drop(&tr, &NoiseSpec::default()).unwrap();
        assert_eq!(obs.values(), &tr.values[..]);
    }

    #[test]
    fn noise_is_reproducible_and_scaled() {
        let tr = ramp();
        let spec = NoiseSpec {
            level: 0.2,
            seed: 9,
            drop: DropSpec::None,
        };
        let a = add_noise_and_drop(&tr, &spec).unwrap();
        let b = add_noise_and_drop(&tr, &spec).unwrap();
        assert_eq!(a, b);
        let resid: Vec<f64> = a.values().iter().zip(&tr.values).map(|(x, y)| x - y).collect();
        let target = column_std(&tr.values, 2, None);
        let got = column_std(&resid, 2, None);
        for c in 0..2 {
            assert!((got[c] / (0.2 * target[c]) - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn gap_and_random_drop() {
        let tr = ramp();
        let gap = NoiseSpec {
            level: 0.0,
            seed: 1,
            drop: DropSpec::ContinuousGap { start: 4.0, end: 6.0 },
        };
        let obs = add_noise_and_drop(&tr, &gap).unwrap();
        for (j, t) in obs.times().iter().enumerate() {
            let inside = *t > 4.0 && *t < 6.0;
            assert_eq!(obs.value(j, 0).is_none(), inside);
            assert_eq!(obs.value(j, 1).is_none(), inside);
        }
        let rnd = NoiseSpec {
            level: 0.0,
            seed: 1,
            drop: DropSpec::RandomFraction { fraction: 0.3 },
        };
        let obs = add_noise_and_drop(&tr, &rnd).unwrap();
        let n = 2000.0;
        let kept = obs.count_available() as f64;
        // four binomial standard deviations
        assert!((kept - 0.7 * n).abs() < 4.0 * (n * 0.3 * 0.7f64).sqrt());
    }

    #[test]
    fn interpolation_examples() {
        let obs = Observations::new(1, vec![0.0, 0.5, 1.0], vec![0.0, f64::NAN, 2.0], vec![true, false, true]).unwrap();
        assert_eq!(initial_state(&obs).unwrap(), vec![0.0, 1.0, 2.0]);
        assert_eq!(interpolate_states(&obs, &[-1.0, 0.25, 3.0]).unwrap(), vec![0.0, 0.5, 2.0]);
        let full = Observations::complete(1, vec![0.0, 1.0, 2.0], vec![4.0, -1.0, 2.0]).unwrap();
        assert_eq!(initial_state(&full).unwrap(), vec![4.0, -1.0, 2.0]);
        let missing = Observations::new(2, vec![0.0, 1.0], vec![1.0, f64::NAN, 2.0, f64::NAN], vec![true, false, true, false]).unwrap();
        assert!(matches!(initial_state(&missing), Err(Error::MissingComponent(1))));
    }

    #[test]
    fn standardized_components_have_unit_std() {
        let tr = ramp();
        let obs = Observations::complete(2, tr.times.clone(), tr.values.clone()).unwrap();
        let (st, sc) = standardize_states(&obs).unwrap();
        for s in column_std(st.values(), 2, None) {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(sc.scales, column_std(&tr.values, 2, None));
        let flat = Observations::complete(1, vec![0.0, 1.0], vec![2.0, 2.0]).unwrap();
        assert!(standardize_states(&flat).is_err());
    }

    #[test]
    fn seeds_differ_by_stream() {
        let a = derive_seed(1, 0, 0);
        assert_ne!(a, derive_seed(1, 0, 1));
        assert_ne!(a, derive_seed(1, 1, 0));
        assert_eq!(a, derive_seed(1, 0, 0));
    }
}
