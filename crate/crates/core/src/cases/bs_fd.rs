//! European call under Black-Scholes solved by the explicit finite difference
//! scheme on a uniform spot grid, marching backwards from the payoff.
//! Differentiated inputs are volatility and rate.

use crate::active::{Context, Real};
use crate::program::{Program, ProgramError};

#[derive(Debug, Clone, PartialEq)]
pub struct BsFd {
    pub s0: f64,
    pub s_max: f64,
    pub strike: f64,
    pub rate: f64,
    pub vol: f64,
    pub maturity: f64,
    /// Spot grid points, including both boundaries.
    pub ns: usize,
    /// Time steps.
    pub nt: usize,
}

impl Default for BsFd {
    fn default() -> Self {
        Self {
            s0: 100.0,
            s_max: 200.0,
            strike: 100.0,
            rate: 0.05,
            vol: 0.2,
            maturity: 1.0,
            ns: 50,
            nt: 2000,
        }
    }
}

impl BsFd {
    pub fn with_grid(ns: usize, nt: usize) -> Self {
        Self {
            ns,
            nt,
            ..Self::default()
        }
    }

    /// Largest stable time step of the explicit scheme.
    pub fn max_stable_dt(&self, vol: f64, rate: f64) -> f64 {
        let top = (self.ns - 1) as f64;
        1.0 / (vol * vol * top * top + rate.abs())
    }
}

impl Program for BsFd {
    fn name(&self) -> &str {
        "bs_fd"
    }

    fn num_inputs(&self) -> usize {
        2
    }

    fn default_point(&self) -> Vec<f64> {
        vec![self.vol, self.rate]
    }

    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError> {
        if self.ns < 3 || self.nt == 0 {
            return Err(ProgramError::invalid("bs_fd", "needs ns >= 3 and nt >= 1"));
        }
        if !(self.s0 >= 0.0 && self.s0 < self.s_max) {
            return Err(ProgramError::invalid(
                "bs_fd",
                "s0 must lie inside [0, s_max)",
            ));
        }
        let dt = self.maturity / self.nt as f64;
        let limit = self.max_stable_dt(x[0], x[1]);
        if dt > limit {
            return Err(ProgramError::invalid(
                "bs_fd",
                format!(
                    "explicit scheme unstable: dt = {dt:e} exceeds the limit {limit:e}; \
                     use at least {} time steps",
                    (self.maturity / limit).ceil()
                ),
            ));
        }
        let vol = ctx.input(x[0]);
        let r = ctx.input(x[1]);
        let ds = self.s_max / (self.ns - 1) as f64;
        let last = self.ns - 1;

        let mut var = ctx.variable(0.0);
        var.assign(vol * vol);
        // interior coefficients; boundaries are set explicitly
        let mut lower = Vec::with_capacity(self.ns);
        let mut diag = Vec::with_capacity(self.ns);
        let mut upper = Vec::with_capacity(self.ns);
        for i in 1..last {
            let fi = i as f64;
            let mut a = ctx.variable(0.0);
            a.assign((var * (fi * fi) - r * fi) * (0.5 * dt));
            let mut b = ctx.variable(0.0);
            b.assign(-((var * (fi * fi) + r) * dt) + 1.0);
            let mut c = ctx.variable(0.0);
            c.assign((var * (fi * fi) + r * fi) * (0.5 * dt));
            lower.push(a);
            diag.push(b);
            upper.push(c);
        }

        let mut v: Vec<C::Scalar> = (0..self.ns)
            .map(|i| ctx.variable((i as f64 * ds - self.strike).max(0.0)))
            .collect();
        let mut w: Vec<C::Scalar> = (0..self.ns).map(|_| ctx.variable(0.0)).collect();
        for step in 1..=self.nt {
            let tau = step as f64 * dt;
            w[0].assign_const(0.0);
            for i in 1..last {
                let k = i - 1;
                w[i].assign(lower[k] * v[i - 1] + diag[k] * v[i] + upper[k] * v[i + 1]);
            }
            w[last].assign(-((-(r * tau)).exp() * self.strike) + self.s_max);
            std::mem::swap(&mut v, &mut w);
        }

        let k = ((self.s0 / ds) as usize).min(last - 1);
        let theta = (self.s0 - k as f64 * ds) / ds;
        let mut price = ctx.variable(0.0);
        price.assign(v[k] * (1.0 - theta) + v[k + 1] * theta);
        ctx.output(price);
        Ok(())
    }
}
