//! Soft overlap losses over predicted probabilities, with closed-form
//! gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossInput {
    /// Predicted probabilities in [0, 1].
    pub p: Vec<f64>,
    /// Labels, each 0 or 1.
    pub y: Vec<f64>,
    pub epsilon: f64,
}

impl LossInput {
    pub fn new(p: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::with_epsilon(p, y, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(p: Vec<f64>, y: Vec<f64>, epsilon: f64) -> Result<Self> {
        let input = LossInput { p, y, epsilon };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.len() != self.y.len() {
            return Err(Error::ShapeMismatch { left: self.p.len(), right: self.y.len() });
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::validation("epsilon", "must be > 0"));
        }
        if let Some(i) = self.p.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::validation(format!("p[{i}]"), "must be in [0, 1]"));
        }
        if let Some(i) = self.y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::validation(format!("y[{i}]"), "must be 0 or 1"));
        }
        Ok(())
    }

    /// (Σy, Σp, Σyp)
    fn sums(&self) -> (f64, f64, f64) {
        self.p.iter().zip(&self.y).fold((0.0, 0.0, 0.0), |(sy, sp, syp), (&p, &y)| {
            (sy + y, sp + p, syp + y * p)
        })
    }
}

/// Loss value and its gradient with respect to each `p_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// `1 - (2Σyp + ε) / (Σy + Σp + ε)`.
///
/// With `N = 2Σyp + ε` and `D = Σy + Σp + ε`:
/// `∂L/∂p_j = -(2 y_j D - N) / D²`.
pub fn dice_loss(input: &LossInput) -> Result<LossOutput> {
    input.validate()?;
    Ok(dice_unchecked(input))
}

fn dice_unchecked(input: &LossInput) -> LossOutput {
    let (sy, sp, syp) = input.sums();
    let n = 2.0 * syp + input.epsilon;
    let d = sy + sp + input.epsilon;
    let grad = input.y.iter().map(|&y| -(2.0 * y * d - n) / (d * d)).collect();
    LossOutput { value: 1.0 - n / d, grad }
}

/// `1 - (Σyp + ε) / (Σy + Σp - Σyp + ε)`.
///
/// With `M = Σyp + ε` and `U = Σy + Σp - Σyp + ε`, `∂M/∂p_j = y_j` and
/// `∂U/∂p_j = 1 - y_j`, so `∂L/∂p_j = -(y_j U - M (1 - y_j)) / U²`.
pub fn jaccard_loss(input: &LossInput) -> Result<LossOutput> {
    input.validate()?;
    Ok(jaccard_unchecked(input))
}

fn jaccard_unchecked(input: &LossInput) -> LossOutput {
    let (sy, sp, syp) = input.sums();
    let m = syp + input.epsilon;
    let u = sy + sp - syp + input.epsilon;
    let grad = input.y.iter().map(|&y| -(y * u - m * (1.0 - y)) / (u * u)).collect();
    LossOutput { value: 1.0 - m / u, grad }
}

/// Equal-weight combination of the Dice and Jaccard losses.
pub fn overlap_loss(input: &LossInput) -> Result<LossOutput> {
    input.validate()?;
    Ok(overlap_unchecked(input))
}

fn overlap_unchecked(input: &LossInput) -> LossOutput {
    let d = dice_unchecked(input);
    let j = jaccard_unchecked(input);
    LossOutput {
        value: 0.5 * d.value + 0.5 * j.value,
        grad: d.grad.iter().zip(&j.grad).map(|(a, b)| 0.5 * a + 0.5 * b).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Dice,
    Jaccard,
    Overlap,
}

impl Loss {
    pub const ALL: [Loss; 3] = [Loss::Dice, Loss::Jaccard, Loss::Overlap];

    pub fn name(self) -> &'static str {
        match self {
            Loss::Dice => "dice",
            Loss::Jaccard => "jaccard",
            Loss::Overlap => "overlap",
        }
    }

    pub fn eval(self, input: &LossInput) -> Result<LossOutput> {
        input.validate()?;
        Ok(self.eval_unchecked(input))
    }

    fn eval_unchecked(self, input: &LossInput) -> LossOutput {
        match self {
            Loss::Dice => dice_unchecked(input),
            Loss::Jaccard => jaccard_unchecked(input),
            Loss::Overlap => overlap_unchecked(input),
        }
    }
}

/// Largest relative error between the analytic gradient and central finite
/// differences with step `h`. Probes may step slightly outside [0, 1].
pub fn gradient_check(loss: Loss, input: &LossInput, h: f64) -> Result<f64> {
    let analytic = loss.eval(input)?.grad;
    let mut probe = input.clone();
    let mut worst = 0.0f64;
    for j in 0..input.p.len() {
        let p0 = input.p[j];
        probe.p[j] = p0 + h;
        let plus = loss.eval_unchecked(&probe).value;
        probe.p[j] = p0 - h;
        let minus = loss.eval_unchecked(&probe).value;
        probe.p[j] = p0;
        let numeric = (plus - minus) / (2.0 * h);
        let scale = analytic[j].abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((analytic[j] - numeric).abs() / scale);
    }
    Ok(worst)
}

/// Random input with probabilities in (0.01, 0.99) and balanced labels.
pub fn random_input<R: Rng>(rng: &mut R, len: usize) -> LossInput {
    let p = (0..len).map(|_| rng.random_range(0.01..0.99)).collect();
    let y = (0..len).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    LossInput { p, y, epsilon: DEFAULT_EPSILON }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn example() -> LossInput {
        LossInput::new(vec![0.8, 0.2, 0.6, 0.4], vec![1.0, 0.0, 1.0, 0.0]).unwrap()
    }

    fn round4(v: f64) -> f64 {
        (v * 1e4).round() / 1e4
    }

    #[test]
    fn worked_example() {
        let d = dice_loss(&example()).unwrap().value;
        let j = jaccard_loss(&example()).unwrap().value;
        let o = overlap_loss(&example()).unwrap().value;
        assert_eq!(round4(d), 0.3000);
        assert_eq!(round4(j), 0.4615);
        assert_eq!(round4(o), 0.3808);
        assert!((d - (1.0 - 2.8 / 4.0)).abs() < 1e-6);
        assert!((j - (1.0 - 1.4 / 2.6)).abs() < 1e-6);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let y = vec![1.0, 0.0, 1.0, 1.0, 0.0];
        let perfect = LossInput::new(y.clone(), y.clone()).unwrap();
        let eps = DEFAULT_EPSILON;
        assert!(dice_loss(&perfect).unwrap().value.abs() <= eps / (6.0 + eps));
        assert!(jaccard_loss(&perfect).unwrap().value.abs() < 1e-6);
        assert!(overlap_loss(&perfect).unwrap().value.abs() < 1e-6);

        let zero = LossInput::new(vec![0.0; 5], y).unwrap();
        let d = dice_loss(&zero).unwrap().value;
        assert!((d - (1.0 - eps / (3.0 + eps))).abs() < 1e-15);
        assert!((jaccard_loss(&zero).unwrap().value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(LossInput::new(vec![0.5], vec![]), Err(Error::ShapeMismatch { .. })));
        assert!(LossInput::new(vec![1.5], vec![1.0]).is_err());
        assert!(LossInput::new(vec![0.5], vec![0.5]).is_err());
        assert!(LossInput::with_epsilon(vec![0.5], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let input = random_input(&mut rng, 256);
            for f in Loss::ALL {
                assert!(gradient_check(f, &input, 1e-5).unwrap() < 1e-5);
            }
        }
    }

    #[test]
    fn gradient_check_at_domain_edge() {
        let input = LossInput::new(vec![1.0, 0.0, 0.5], vec![1.0, 0.0, 1.0]).unwrap();
        for f in Loss::ALL {
            assert!(gradient_check(f, &input, 1e-5).unwrap() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn jaccard_dominates_dice(seed in any::<u64>(), len in 1usize..64) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let input = random_input(&mut rng, len);
            let d = dice_loss(&input).unwrap().value;
            let j = jaccard_loss(&input).unwrap().value;
            let o = overlap_loss(&input).unwrap().value;
            prop_assert!(j >= d - 1e-12);
            prop_assert!(d - 1e-12 <= o && o <= j + 1e-12);
            prop_assert!((0.0..=1.0 + 1e-9).contains(&d));
        }

        #[test]
        fn permutation_invariant(seed in any::<u64>(), len in 2usize..64) {
            use rand::seq::SliceRandom;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let input = random_input(&mut rng, len);
            let mut idx: Vec<usize> = (0..len).collect();
            idx.shuffle(&mut rng);
            let shuffled = LossInput {
                p: idx.iter().map(|&i| input.p[i]).collect(),
                y: idx.iter().map(|&i| input.y[i]).collect(),
                epsilon: input.epsilon,
            };
            let a = overlap_loss(&input).unwrap();
            let b = overlap_loss(&shuffled).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-12);
            for (k, &i) in idx.iter().enumerate() {
                prop_assert!((b.grad[k] - a.grad[i]).abs() < 1e-12);
            }
        }
    }
}
