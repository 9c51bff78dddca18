//! Programs written once against [`Context`] and run either as plain
//! floating-point code or under a [`Recorder`].

use std::time::Instant;

use thiserror::Error;

use crate::active::{Context, PlainContext, Recorder};
use crate::adjoint::AdjointError;
use crate::store::StoreConfig;
use crate::tape::{Mode, Tape, TapeError};

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("{program} takes {expected} inputs, got {got}")]
    InputLength {
        program: String,
        expected: usize,
        got: usize,
    },
    #[error("{program}: {reason}")]
    Invalid { program: String, reason: String },
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Adjoint(#[from] AdjointError),
}

impl ProgramError {
    pub fn invalid(program: &str, reason: impl Into<String>) -> Self {
        ProgramError::Invalid {
            program: program.to_string(),
            reason: reason.into(),
        }
    }
}

/// A differentiable program `F: R^n -> R^m`.
pub trait Program {
    fn name(&self) -> &str;

    fn num_inputs(&self) -> usize;

    /// Point at which the program is evaluated unless told otherwise.
    fn default_point(&self) -> Vec<f64>;

    /// Run the program: obtain every input from `ctx` in order, then hand
    /// every output to it.
    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError>;

    fn check_inputs(&self, x: &[f64]) -> Result<(), ProgramError> {
        if x.len() != self.num_inputs() {
            return Err(ProgramError::InputLength {
                program: self.name().to_string(),
                expected: self.num_inputs(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Plain evaluation of `F(x)`.
pub fn evaluate<P: Program + ?Sized>(program: &P, x: &[f64]) -> Result<Vec<f64>, ProgramError> {
    program.check_inputs(x)?;
    let mut ctx = PlainContext::default();
    program.eval(&mut ctx, x)?;
    Ok(ctx.outputs)
}

/// A finalized tape together with the primal outputs seen while recording.
#[derive(Debug)]
pub struct Recording {
    pub tape: Tape,
    pub outputs: Vec<f64>,
    pub record_seconds: f64,
}

/// Record `program` at `x` on a new tape.
pub fn record<P: Program + ?Sized>(
    program: &P,
    x: &[f64],
    mode: Mode,
    config: StoreConfig,
) -> Result<Recording, ProgramError> {
    program.check_inputs(x)?;
    let start = Instant::now();
    let mut rec = Recorder::with_store(mode, config)?;
    let result = program.eval(&mut rec, x);
    let outputs = rec.output_values();
    // a poisoned tape explains a program failure better than the symptom
    let poisoned = rec.error().is_some();
    let tape = rec.finalize();
    let record_seconds = start.elapsed().as_secs_f64();
    let tape = match (result, tape) {
        (Err(e), Err(_)) if !poisoned => return Err(e),
        (_, Err(e)) => return Err(e.into()),
        (Err(e), _) => return Err(e),
        (Ok(()), Ok(t)) => t,
    };
    Ok(Recording {
        tape,
        outputs,
        record_seconds,
    })
}

/// Central-difference gradient of `seed . F` at `x`. The step for input `i`
/// is `h * max(1, |x_i|)`.
pub fn fd_gradient<P: Program + ?Sized>(
    program: &P,
    x: &[f64],
    seed: &[f64],
    h: f64,
) -> Result<Vec<f64>, ProgramError> {
    let weighted = |x: &[f64]| -> Result<f64, ProgramError> {
        let y = evaluate(program, x)?;
        if y.len() != seed.len() {
            return Err(AdjointError::SeedLength {
                expected: y.len(),
                got: seed.len(),
            }
            .into());
        }
        Ok(y.iter().zip(seed).map(|(a, b)| a * b).sum())
    };
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        probe[i] = x[i] + step;
        let up = weighted(&probe)?;
        probe[i] = x[i] - step;
        let down = weighted(&probe)?;
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}
