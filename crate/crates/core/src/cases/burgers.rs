//! Viscous Burgers equation `u_t + u u_x = nu u_xx` on a periodic grid,
//! first-order upwind advection and central diffusion, explicit in time.
//! Output is the discrete energy `0.5 * sum u_i^2` at the final time; the
//! inputs are the initial values.

use std::f64::consts::TAU;

use crate::active::{Context, Real};
use crate::program::{Program, ProgramError};

#[derive(Debug, Clone, PartialEq)]
pub struct Burgers {
    pub nx: usize,
    pub nt: usize,
    pub dt: f64,
    pub dx: f64,
    pub nu: f64,
    /// Initial state; `None` uses a smooth positive profile.
    pub u0: Option<Vec<f64>>,
}

impl Default for Burgers {
    fn default() -> Self {
        Self::with_grid(20, 50)
    }
}

impl Burgers {
    pub fn with_grid(nx: usize, nt: usize) -> Self {
        let dx = 1.0 / nx as f64;
        Self {
            nx,
            nt,
            dt: 0.5 * dx,
            dx,
            nu: 0.01,
            u0: None,
        }
    }

    pub fn initial_profile(nx: usize) -> Vec<f64> {
        (0..nx)
            .map(|i| 1.0 + 0.5 * (TAU * i as f64 / nx as f64).sin())
            .collect()
    }
}

impl Program for Burgers {
    fn name(&self) -> &str {
        "burgers"
    }

    fn num_inputs(&self) -> usize {
        self.nx
    }

    fn default_point(&self) -> Vec<f64> {
        self.u0
            .clone()
            .unwrap_or_else(|| Self::initial_profile(self.nx))
    }

    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError> {
        let n = self.nx;
        if n < 2 {
            return Err(ProgramError::invalid("burgers", "needs nx >= 2"));
        }
        let courant = self.dt / self.dx;
        let diffusion = self.nu * self.dt / (self.dx * self.dx);
        if diffusion > 0.5 {
            return Err(ProgramError::invalid(
                "burgers",
                format!("unstable: diffusion number {diffusion} exceeds 0.5"),
            ));
        }
        let mut u: Vec<C::Scalar> = x.iter().map(|&xi| ctx.input(xi)).collect();
        let mut w: Vec<C::Scalar> = (0..n).map(|_| ctx.variable(0.0)).collect();
        for step in 0..self.nt {
            let peak = u.iter().map(|v| v.value().abs()).fold(0.0, f64::max);
            if peak * courant > 1.0 {
                return Err(ProgramError::invalid(
                    "burgers",
                    format!(
                        "unstable: CFL condition violated at step {step}: max|u| dt/dx = {} > 1",
                        peak * courant
                    ),
                ));
            }
            for i in 0..n {
                let left = u[(i + n - 1) % n];
                let right = u[(i + 1) % n];
                let ui = u[i];
                let slope = if ui.value() >= 0.0 {
                    ui - left
                } else {
                    right - ui
                };
                let mut next = ui - ui * slope * courant;
                if self.nu != 0.0 {
                    next = next + (left + right - ui * 2.0) * diffusion;
                }
                w[i].assign(next);
            }
            std::mem::swap(&mut u, &mut w);
        }
        let mut energy_sum = u[0] * u[0];
        for v in &u[1..] {
            energy_sum = energy_sum + *v * *v;
        }
        let mut energy = ctx.variable(0.0);
        energy.assign(energy_sum * 0.5);
        ctx.output(energy);
        Ok(())
    }
}
