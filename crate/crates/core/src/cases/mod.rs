//! Benchmark programs, written once over [`Real`](crate::Real) so the same
//! source runs in plain floating point and under the recorder.

pub mod bs_fd;
pub mod bs_mc;
pub mod burgers;
pub mod intro;
pub mod libor;
pub mod rng;

pub use bs_fd::BsFd;
pub use bs_mc::BsMc;
pub use burgers::Burgers;
pub use intro::Intro;
pub use libor::LiborMc;

use crate::active::Context;
use crate::program::{evaluate, Program, ProgramError};

pub const PROBLEM_IDS: [&str; 5] = ["intro", "bs_mc", "bs_fd", "burgers", "libor_mc"];

/// Any of the case studies, selectable by id.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Intro(Intro),
    BsMc(BsMc),
    BsFd(BsFd),
    Burgers(Burgers),
    Libor(LiborMc),
}

impl Problem {
    /// Desk-scale instance of a case study.
    pub fn desk(id: &str) -> Option<Problem> {
        Some(match id {
            "intro" => Problem::Intro(Intro::default()),
            "bs_mc" => Problem::BsMc(BsMc::default()),
            "bs_fd" => Problem::BsFd(BsFd::default()),
            "burgers" => Problem::Burgers(Burgers::default()),
            "libor_mc" => Problem::Libor(LiborMc::default()),
            _ => return None,
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            Problem::Intro(_) => "intro",
            Problem::BsMc(_) => "bs_mc",
            Problem::BsFd(_) => "bs_fd",
            Problem::Burgers(_) => "burgers",
            Problem::Libor(_) => "libor_mc",
        }
    }

    /// Accepted deviation between the adjoint gradient and central
    /// differences.
    pub fn tolerance(&self) -> f64 {
        match self {
            Problem::Intro(_) => 1e-9,
            Problem::BsMc(_) | Problem::Burgers(_) => 1e-5,
            Problem::BsFd(_) | Problem::Libor(_) => 1e-4,
        }
    }

    /// Default relative finite difference step.
    pub fn fd_step(&self) -> f64 {
        1e-6
    }
}

impl Program for Problem {
    fn name(&self) -> &str {
        self.id()
    }

    fn num_inputs(&self) -> usize {
        match self {
            Problem::Intro(p) => p.num_inputs(),
            Problem::BsMc(p) => p.num_inputs(),
            Problem::BsFd(p) => p.num_inputs(),
            Problem::Burgers(p) => p.num_inputs(),
            Problem::Libor(p) => p.num_inputs(),
        }
    }

    fn default_point(&self) -> Vec<f64> {
        match self {
            Problem::Intro(p) => p.default_point(),
            Problem::BsMc(p) => p.default_point(),
            Problem::BsFd(p) => p.default_point(),
            Problem::Burgers(p) => p.default_point(),
            Problem::Libor(p) => p.default_point(),
        }
    }

    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError> {
        match self {
            Problem::Intro(p) => p.eval(ctx, x),
            Problem::BsMc(p) => p.eval(ctx, x),
            Problem::BsFd(p) => p.eval(ctx, x),
            Problem::Burgers(p) => p.eval(ctx, x),
            Problem::Libor(p) => p.eval(ctx, x),
        }
    }
}

/// Central difference of `seed . F` along `direction`:
/// `(f(x + h e) - f(x - h e)) / 2h`. Random draws repeat exactly because
/// every case study reseeds its generator per evaluation.
pub fn fd_oracle<P: Program + ?Sized>(
    program: &P,
    point: &[f64],
    direction: &[f64],
    seed: &[f64],
    h: f64,
) -> Result<f64, ProgramError> {
    let shifted = |sign: f64| -> Result<f64, ProgramError> {
        let x: Vec<f64> = point
            .iter()
            .zip(direction)
            .map(|(x, e)| x + sign * h * e)
            .collect();
        let y = evaluate(program, &x)?;
        Ok(y.iter().zip(seed).map(|(a, b)| a * b).sum())
    };
    Ok((shifted(1.0)? - shifted(-1.0)?) / (2.0 * h))
}
