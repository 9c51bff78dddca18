//! One-factor LIBOR market model under the spot measure, simulated with
//! log-Euler steps of one tenor each. The payoff is a payer swaption
//! exercised at tenor date `maturity_index` on the swap covering the
//! remaining forward rates, discounted with the rolled-over spot numeraire.
//! Inputs are the initial forward rates followed by their volatilities.

use crate::active::{Context, Real};
use crate::cases::rng::NormalStream;
use crate::program::{Program, ProgramError};

#[derive(Debug, Clone, PartialEq)]
pub struct LiborMc {
    pub rates: usize,
    pub delta: f64,
    pub maturity_index: usize,
    pub strike: f64,
    pub initial_rate: f64,
    pub initial_vol: f64,
    pub paths: usize,
    pub seed: u64,
}

impl Default for LiborMc {
    fn default() -> Self {
        Self {
            rates: 10,
            delta: 0.25,
            maturity_index: 5,
            strike: 0.05,
            initial_rate: 0.05,
            initial_vol: 0.2,
            paths: 500,
            seed: 7,
        }
    }
}

impl LiborMc {
    pub fn with_size(rates: usize, paths: usize) -> Self {
        Self {
            rates,
            maturity_index: (rates / 2).max(1),
            paths,
            ..Self::default()
        }
    }
}

impl Program for LiborMc {
    fn name(&self) -> &str {
        "libor_mc"
    }

    fn num_inputs(&self) -> usize {
        2 * self.rates
    }

    fn default_point(&self) -> Vec<f64> {
        let mut x = vec![self.initial_rate; self.rates];
        x.extend(std::iter::repeat_n(self.initial_vol, self.rates));
        x
    }

    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError> {
        let n = self.rates;
        let m = self.maturity_index;
        if n < 2 || m == 0 || m >= n || self.paths == 0 {
            return Err(ProgramError::invalid(
                "libor_mc",
                "needs rates >= 2, 1 <= maturity index < rates and paths >= 1",
            ));
        }
        if x.iter().any(|&v| v < 0.0) {
            return Err(ProgramError::invalid(
                "libor_mc",
                "rates and volatilities must be non-negative",
            ));
        }
        let delta = self.delta;
        let sqrt_delta = delta.sqrt();
        let l0: Vec<C::Scalar> = x[..n].iter().map(|&v| ctx.input(v)).collect();
        let vols: Vec<C::Scalar> = x[n..].iter().map(|&v| ctx.input(v)).collect();

        // per-rate constants of the drift and the Ito correction
        let mut weight = Vec::with_capacity(n);
        let mut correction = Vec::with_capacity(n);
        for vol in &vols {
            let mut a = ctx.variable(0.0);
            a.assign(*vol * delta);
            let mut b = ctx.variable(0.0);
            b.assign(*vol * *vol * (0.5 * delta));
            weight.push(a);
            correction.push(b);
        }

        let mut l: Vec<C::Scalar> = (0..n).map(|_| ctx.variable(0.0)).collect();
        let mut drift = ctx.variable(0.0);
        let mut numeraire = ctx.variable(1.0);
        let mut discount = ctx.variable(1.0);
        let mut annuity = ctx.variable(0.0);
        let mut sum = ctx.variable(0.0);
        let mut price = ctx.variable(0.0);

        let mut normals = NormalStream::new(self.seed);
        for _ in 0..self.paths {
            for k in 0..n {
                l[k].assign(l0[k]);
            }
            numeraire.assign_const(1.0);
            for step in 0..m {
                let shock = normals.next_normal() * sqrt_delta;
                numeraire.assign(numeraire * (l[step] * delta + 1.0));
                drift.assign_const(0.0);
                for k in step + 1..n {
                    drift.assign(drift + weight[k] * l[k] / (l[k] * delta + 1.0));
                    let evolved =
                        l[k] * (weight[k] * drift - correction[k] + vols[k] * shock).exp();
                    l[k].assign(evolved);
                }
            }
            discount.assign_const(1.0);
            annuity.assign_const(0.0);
            for rate in &l[m..n] {
                discount.assign(discount / (*rate * delta + 1.0));
                annuity.assign(annuity + discount * delta);
            }
            let swap_rate = (-discount + 1.0) / annuity;
            if swap_rate.value() > self.strike {
                sum.assign(sum + annuity * (swap_rate - self.strike) / numeraire);
            }
        }
        price.assign(sum / self.paths as f64);
        ctx.output(price);
        Ok(())
    }
}
