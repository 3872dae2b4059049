//! Concept-loss weight schedule.

use crate::error::{Error, Result};

/// `λ(e) = λ₀·(λ₁/λ₀)^(e/(E−1))`, stepped once per epoch, with the endpoints
/// returned exactly.
pub fn lambda_schedule(epoch: usize, epochs: usize, lambda0: f64, lambda1: f64) -> Result<f64> {
    if epochs < 2 {
        return Err(Error::Invalid(format!("λ schedule needs at least 2 epochs, got {epochs}")));
    }
    if epoch >= epochs {
        return Err(Error::Invalid(format!("epoch {epoch} outside 0..{epochs}")));
    }
    if !(0.0 <= lambda1 && lambda1 <= lambda0 && lambda0 <= 1.0) {
        return Err(Error::Invalid(format!("need 0 ≤ λ₁ ≤ λ₀ ≤ 1, got λ₀ = {lambda0}, λ₁ = {lambda1}")));
    }
    if epoch == 0 {
        return Ok(lambda0);
    }
    if epoch == epochs - 1 {
        return Ok(lambda1);
    }
    if lambda1 == 0.0 {
        return Ok(0.0);
    }
    Ok(lambda0 * (lambda1 / lambda0).powf(epoch as f64 / (epochs - 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(lambda_schedule(0, 100, 0.8, 0.2).unwrap(), 0.8);
        assert_eq!(lambda_schedule(99, 100, 0.8, 0.2).unwrap(), 0.2);
        assert!((lambda_schedule(50, 101, 0.8, 0.2).unwrap() - 0.4).abs() < 1e-12);
        assert!(lambda_schedule(0, 1, 0.8, 0.2).is_err());
        assert!(lambda_schedule(5, 5, 0.8, 0.2).is_err());
    }

    #[test]
    fn monotone_decay() {
        let v: Vec<f64> = (0..30).map(|e| lambda_schedule(e, 30, 0.8, 0.2).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
    }
}
