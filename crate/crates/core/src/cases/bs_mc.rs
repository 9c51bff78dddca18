//! Monte Carlo price of a European call under Black-Scholes dynamics, with
//! log-Euler paths. Differentiated inputs are spot, volatility and rate, so
//! the gradient holds delta, vega and rho.

use crate::active::{Context, Real};
use crate::cases::rng::NormalStream;
use crate::program::{Program, ProgramError};

#[derive(Debug, Clone, PartialEq)]
pub struct BsMc {
    pub s0: f64,
    pub strike: f64,
    pub rate: f64,
    pub vol: f64,
    pub maturity: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
}

impl Default for BsMc {
    fn default() -> Self {
        Self {
            s0: 100.0,
            strike: 100.0,
            rate: 0.05,
            vol: 0.2,
            maturity: 1.0,
            steps: 1,
            paths: 1000,
            seed: 42,
        }
    }
}

impl BsMc {
    pub fn with_paths(paths: usize) -> Self {
        Self {
            paths,
            ..Self::default()
        }
    }
}

impl Program for BsMc {
    fn name(&self) -> &str {
        "bs_mc"
    }

    fn num_inputs(&self) -> usize {
        3
    }

    fn default_point(&self) -> Vec<f64> {
        vec![self.s0, self.vol, self.rate]
    }

    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError> {
        if self.paths == 0 || self.steps == 0 {
            return Err(ProgramError::invalid(
                "bs_mc",
                "paths and steps must be >= 1",
            ));
        }
        if x[0] <= 0.0 || x[1] <= 0.0 || self.maturity <= 0.0 {
            return Err(ProgramError::invalid(
                "bs_mc",
                "spot, volatility and maturity must be positive",
            ));
        }
        let s0 = ctx.input(x[0]);
        let vol = ctx.input(x[1]);
        let r = ctx.input(x[2]);
        let strike = ctx.variable(self.strike);
        let maturity = ctx.variable(self.maturity);
        let dt = self.maturity / self.steps as f64;

        let mut drift = ctx.variable(0.0);
        drift.assign((r - vol * vol * 0.5) * dt);
        let mut diffusion = ctx.variable(0.0);
        diffusion.assign(vol * dt.sqrt());
        let mut log_s0 = ctx.variable(0.0);
        log_s0.assign(s0.ln());
        let mut sum = ctx.variable(0.0);
        let mut price = ctx.variable(0.0);

        let mut normals = NormalStream::new(self.seed);
        for _ in 0..self.paths {
            let mut log_s = log_s0;
            for _ in 0..self.steps {
                let z = normals.next_normal();
                log_s = log_s + drift + diffusion * z;
            }
            let s_t = log_s.exp();
            // out-of-the-money paths contribute nothing
            if s_t.value() > self.strike {
                let payoff = (s_t - strike) * (-(r * maturity)).exp();
                sum.assign(sum + payoff);
            }
        }
        price.assign(sum / self.paths as f64);
        ctx.output(price);
        Ok(())
    }
}
