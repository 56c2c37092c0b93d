//! Dice, Jaccard and combined overlap losses with a finite-difference check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tstage::losses::{gradient_check, random_input, Loss, LossInput};

fn main() -> tstage::Result<()> {
    let input = LossInput::new(vec![0.8, 0.2, 0.6, 0.4], vec![1.0, 0.0, 1.0, 0.0])?;
    for loss in Loss::ALL {
        let out = loss.eval(&input)?;
        let grad: Vec<String> = out.grad.iter().map(|g| format!("{g:+.4}")).collect();
        println!("{:>8}: {:.4}  grad [{}]", loss.name(), out.value, grad.join(", "));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let big = random_input(&mut rng, 256);
    for loss in Loss::ALL {
        println!("{:>8}: max relative FD error {:.2e}", loss.name(), gradient_check(loss, &big, 1e-5)?);
    }
    Ok(())
}
