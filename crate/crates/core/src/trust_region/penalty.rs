use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Records `base + λ·d`. With `λ = 0` the value equals `base` exactly.
pub fn penalized_loss(tape: &mut Tape, base: Var, d: Var, lambda: f64) -> Result<Var> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidConfig(format!("penalty weight must be >= 0, got {lambda}")));
    }
    for (what, v) in [("loss", base), ("penalty", d)] {
        if tape.value(v).item().is_none() {
            return Err(Error::Shape(format!("{what} must be a scalar")));
        }
    }
    let weighted = tape.scale(d, lambda)?;
    Ok(tape.add(base, weighted)?)
}
