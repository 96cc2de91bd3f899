use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;
use alloc::format;

/// Inverted-dropout mask: each element is 0 with probability `rate` and
/// `1/(1-rate)` otherwise. With `training == false` the mask is all ones and
/// the generator is not advanced.
pub fn dropout_mask(shape: &[usize], rate: f64, training: bool, rng: &mut Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(Tensor::full(shape, 1.0));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Tensor::from_fn(shape, |_| if rng.uniform() < rate { 0.0 } else { keep }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_identity() {
        let mut rng = Rng::seeded(0);
        let m = dropout_mask(&[4, 5], 0.0, true, &mut rng).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn eval_mode_is_identity() {
        let mut rng = Rng::seeded(0);
        let m = dropout_mask(&[100], 0.9, false, &mut rng).unwrap();
        assert!(m.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_rate_zero_fraction() {
        let mut rng = Rng::seeded(11);
        let m = dropout_mask(&[1_000_000], 0.5, true, &mut rng).unwrap();
        let zeros = m.data().iter().filter(|&&v| v == 0.0).count() as f64 / 1e6;
        assert!((zeros - 0.5).abs() < 0.01, "zero fraction {zeros}");
        assert!(m.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn rejects_rate_one() {
        let mut rng = Rng::seeded(0);
        assert!(dropout_mask(&[3], 1.0, true, &mut rng).is_err());
    }
}
