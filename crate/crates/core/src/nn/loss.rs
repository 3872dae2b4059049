//! Masked ℓ1 mixed-supervision loss, `L = λ·L_concept + (1−λ)·L_pred`.

use super::layers::Act;
use super::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Mean `|Ĉ − C|` over concepts × ocean cells × batch.
    pub concept: f64,
    /// Mean `|ŷ − y|` over ocean cells × batch.
    pub pred: f64,
    pub combined: f64,
}

/// Loss value and upstream gradients for the concept and prediction outputs.
#[derive(Debug, Clone)]
pub struct LossGrad<T> {
    pub parts: LossParts,
    pub d_concepts: Act<T>,
    pub d_y: Act<T>,
    /// Hash of the residual signs, for kink detection.
    pub signature: u64,
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `mask` is `[H·W]` and applies to every sample of the batch; `false`
/// cells (land, padding) contribute nothing.
pub fn mixed_loss<T: Real>(
    concepts_hat: &Act<T>,
    y_hat: &Act<T>,
    c: &Act<T>,
    y: &Act<T>,
    mask: &[bool],
    lambda: f64,
) -> Result<LossGrad<T>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Invalid(format!("λ = {lambda} outside [0, 1]")));
    }
    if !concepts_hat.same_shape(c) || !y_hat.same_shape(y) || y.c != 1 {
        return Err(Error::Shape("loss operands have mismatched shapes".into()));
    }
    let hw = y.h * y.w;
    if mask.len() != hw || (c.n, c.h, c.w) != (y.n, y.h, y.w) {
        return Err(Error::Shape("loss mask does not match the spatial grid".into()));
    }
    let n_ocean = mask.iter().filter(|&&m| m).count();
    if n_ocean == 0 {
        return Err(Error::Invalid("loss mask has no ocean cell".into()));
    }
    let per_map = (n_ocean * y.n) as f64;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |s: f64| {
        h ^= (s as i64 + 1) as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };

    let mut d_concepts = Act::zeros(c.c, c.n, c.h, c.w);
    let mut concept_sum = 0.0;
    let gc = lambda / (c.c as f64 * per_map);
    for (k, ((a, b), d)) in concepts_hat.data.iter().zip(&c.data).zip(&mut d_concepts.data).enumerate() {
        if mask[k % hw] {
            let r = a.f64() - b.f64();
            concept_sum += r.abs();
            eat(sign(r));
            *d = T::of(gc * sign(r));
        }
    }
    let mut d_y = Act::zeros(1, y.n, y.h, y.w);
    let mut pred_sum = 0.0;
    let gp = (1.0 - lambda) / per_map;
    for (k, ((a, b), d)) in y_hat.data.iter().zip(&y.data).zip(&mut d_y.data).enumerate() {
        if mask[k % hw] {
            let r = a.f64() - b.f64();
            pred_sum += r.abs();
            eat(sign(r));
            *d = T::of(gp * sign(r));
        }
    }
    let concept = concept_sum / (c.c as f64 * per_map);
    let pred = pred_sum / per_map;
    Ok(LossGrad {
        parts: LossParts {
            concept,
            pred,
            combined: lambda * concept + (1.0 - lambda) * pred,
        },
        d_concepts,
        d_y,
        signature: h,
    })
}
