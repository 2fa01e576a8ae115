use super::LatentModel;
use crate::error::{Error, Result};
use crate::numerics::LN_2PI;

/// Neal's funnel: `z₁ ~ N(0, 9)`, `zᵢ | z₁ ~ N(0, e^{z₁})` for `i ≥ 2`.
#[derive(Debug, Clone)]
pub struct Funnel {
    name: String,
    dim: usize,
}

pub fn funnel_model(dim: usize) -> Result<Funnel> {
    if dim < 2 {
        return Err(Error::Input(format!("funnel needs dimension >= 2, got {dim}")));
    }
    Ok(Funnel {
        name: format!("funnel-{dim}d"),
        dim,
    })
}

impl LatentModel for Funnel {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn log_joint(&self, z: &[f64]) -> f64 {
        let v = z[0];
        let prec = (-v).exp();
        let mut lp = -0.5 * (LN_2PI + 9f64.ln()) - v * v / 18.0;
        for &x in &z[1..] {
            lp += -0.5 * (LN_2PI + v) - 0.5 * x * x * prec;
        }
        lp
    }

    fn log_joint_grad(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let v = z[0];
        let prec = (-v).exp();
        let mut lp = -0.5 * (LN_2PI + 9f64.ln()) - v * v / 18.0;
        let mut gv = -v / 9.0;
        for (g, &x) in grad[1..].iter_mut().zip(&z[1..]) {
            lp += -0.5 * (LN_2PI + v) - 0.5 * x * x * prec;
            gv += -0.5 + 0.5 * x * x * prec;
            *g = -x * prec;
        }
        grad[0] = gv;
        lp
    }
}
