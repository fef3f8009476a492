use rand::Rng;

use super::Tensor;

/// Inverted dropout: kept units are scaled by `1 / (1 − rate)` at train time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate }
    }

    /// Returns the output and the multiplicative mask that produced it.
    /// The mask is `None` when dropout is the identity.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Tensor,
        train: bool,
        rng: &mut R,
    ) -> (Tensor, Option<Tensor>) {
        if !train || self.rate == 0.0 {
            return (x.clone(), None);
        }
        let keep = 1.0 - self.rate;
        let mask = x.map(|_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        (x.zip_map(&mask, |a, m| a * m), Some(mask))
    }

    pub fn backward(mask: Option<&Tensor>, dy: &Tensor) -> Tensor {
        match mask {
            Some(m) => dy.zip_map(m, |a, b| a * b),
            None => dy.clone(),
        }
    }
}
