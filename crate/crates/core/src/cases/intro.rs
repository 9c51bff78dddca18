//! The small loop used throughout the docs:
//!
//! ```text
//! v[0] = x
//! for i in 1..l { u = sin(v[i-1]); v[i] = u*u + v[0] }
//! y = v[l-1]
//! ```

use crate::active::{Context, Real};
use crate::program::{Program, ProgramError};

#[derive(Debug, Clone, PartialEq)]
pub struct Intro {
    pub l: usize,
    pub x: f64,
}

impl Default for Intro {
    fn default() -> Self {
        Self { l: 3, x: 1.0 }
    }
}

impl Program for Intro {
    fn name(&self) -> &str {
        "intro"
    }

    fn num_inputs(&self) -> usize {
        1
    }

    fn default_point(&self) -> Vec<f64> {
        vec![self.x]
    }

    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError> {
        if self.l < 2 {
            return Err(ProgramError::invalid("intro", "needs l >= 2"));
        }
        let v0 = ctx.input(x[0]);
        let mut u = ctx.variable(0.0);
        let mut prev = v0;
        for _ in 1..self.l {
            u.assign(prev.sin());
            let mut v = ctx.variable(0.0);
            v.assign(u * u + v0);
            prev = v;
        }
        ctx.output(prev);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{evaluate, record};
    use crate::store::StoreConfig;
    use crate::tape::Mode;

    #[test]
    fn two_steps_give_four_vertices() {
        let p = Intro { l: 2, x: 1.0 };
        let rec = record(&p, &[1.0], Mode::Dag, StoreConfig::in_memory()).unwrap();
        assert_eq!(rec.tape.stats().num_vertices, 4);
    }

    #[test]
    fn primal_value() {
        let y = evaluate(&Intro::default(), &[1.0]).unwrap()[0];
        let s1 = 1.0f64.sin();
        let v1 = s1 * s1 + 1.0;
        assert_eq!(y, v1.sin() * v1.sin() + 1.0);
    }

    #[test]
    fn short_loop_is_rejected() {
        assert!(evaluate(&Intro { l: 1, x: 1.0 }, &[1.0]).is_err());
    }
}
