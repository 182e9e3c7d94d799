use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result, Tensor};

/// I.i.d. `N(0, 2 / fan_in)` samples.
pub fn he_normal<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Result<Tensor> {
    if fan_in == 0 {
        return Err(Error::InvalidConfig("he_normal: fan_in must be > 0".into()));
    }
    let std = libm::sqrt(2.0 / fan_in as f64);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_per_seed() {
        let a = he_normal(&[4, 5], 8, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = he_normal(&[4, 5], 8, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_std_matches_target() {
        let t = he_normal(&[100_000], 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let n = t.numel() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        assert!((std - 0.5).abs() / 0.5 < 0.02, "std {std}");
        assert!(mean.abs() < 0.01);
    }

    #[test]
    fn zero_fan_in_rejected() {
        assert!(he_normal(&[2], 0, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
