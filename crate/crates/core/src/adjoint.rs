//! Reverse sweeps over a finalized tape.
//!
//! All three strategies run the same interpreter. They differ only in how a
//! vertex id is mapped to an adjoint slot:
//!
//! * [`Strategy::Flat`]: one slot per vertex.
//! * [`Strategy::Bandwidth`]: `B = max(beta, n, m)` slots, vertex `j` lives in
//!   slot `j mod B` (DAG tapes).
//! * [`Strategy::LValue`]: one dedicated slot per L-value plus `B_R` rotating
//!   slots for expression temporaries (DCG tapes).
//!
//! Each elemental is processed as `w = a[j]; a[j] = 0; a[i] += w * d` for
//! every predecessor `i`. The reset after the read is what makes slot reuse
//! sound.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::program::{self, Program, ProgramError};
use crate::store::StoreConfig;
use crate::tape::{Mode, Tape, TapeError, TapeStats, VertexId};

/// Bytes per adjoint slot.
pub const SIGMA: usize = 8;

#[derive(Debug, Error)]
pub enum AdjointError {
    #[error("seed has {got} components, tape has {expected} outputs")]
    SeedLength { expected: usize, got: usize },
    #[error("{strategy} strategy cannot run on a {mode} tape")]
    ModeMismatch { strategy: Strategy, mode: Mode },
    #[error("outputs {first} and {second} share adjoint slot {slot}")]
    OutputSlotCollision {
        first: VertexId,
        second: VertexId,
        slot: usize,
    },
    #[error("vertex {vertex} would clobber the pending seed of output {output} in slot {slot}")]
    LiveOutputClobbered {
        output: VertexId,
        vertex: VertexId,
        slot: usize,
    },
    #[error(transparent)]
    Tape(#[from] TapeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Flat,
    Bandwidth,
    LValue,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Flat, Strategy::Bandwidth, Strategy::LValue];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Flat => "flat",
            Strategy::Bandwidth => "bandwidth",
            Strategy::LValue => "lvalue",
        }
    }

    /// Tape mode this strategy consumes. Flat works on both.
    pub fn supports(self, mode: Mode) -> bool {
        match self {
            Strategy::Flat => true,
            Strategy::Bandwidth => mode == Mode::Dag,
            Strategy::LValue => mode == Mode::Dcg,
        }
    }

    /// The tape mode to record in for this strategy.
    pub fn preferred_mode(self) -> Mode {
        match self {
            Strategy::Flat | Strategy::Bandwidth => Mode::Dag,
            Strategy::LValue => Mode::Dcg,
        }
    }

    /// Number of adjoint slots this strategy needs for a tape.
    pub fn slot_count(self, stats: &TapeStats) -> usize {
        match self {
            Strategy::Flat => stats.num_vertices,
            Strategy::Bandwidth => stats.beta.max(stats.num_inputs).max(stats.num_outputs),
            Strategy::LValue => stats.p_l + remainder_window(stats),
        }
    }
}

/// Rotating slots for remainder vertices under the L-value strategy. At
/// least one whenever temporaries exist, and wide enough that no temporary
/// still awaiting a late L-value consumer is overwritten.
pub fn remainder_window(stats: &TapeStats) -> usize {
    if stats.num_remainder == 0 {
        0
    } else {
        stats.beta_r.max(stats.copy_reach).max(1)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flat" => Ok(Strategy::Flat),
            "bandwidth" => Ok(Strategy::Bandwidth),
            "lvalue" => Ok(Strategy::LValue),
            _ => Err(format!(
                "unknown strategy {s:?} (expected flat, bandwidth or lvalue)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum SlotMap {
    Identity,
    // dedicated L-value slots, then remainder ids shifted by p_l
    Shifted { p_l: usize },
    Modulo { modulus: usize },
    LValue { p_l: usize, window: usize },
}

impl SlotMap {
    #[inline(always)]
    fn slot(self, v: i64) -> usize {
        match self {
            SlotMap::Identity => v as usize,
            SlotMap::Shifted { p_l } => {
                if v < 0 {
                    (-v - 1) as usize
                } else {
                    p_l + v as usize
                }
            }
            SlotMap::Modulo { modulus } => v as usize % modulus,
            SlotMap::LValue { p_l, window } => {
                if v < 0 {
                    (-v - 1) as usize
                } else {
                    p_l + v as usize % window
                }
            }
        }
    }
}

/// The adjoint storage `a` of one strategy, sized for one tape.
#[derive(Debug, Clone)]
pub struct AdjointVector {
    strategy: Strategy,
    map: SlotMap,
    slots: Vec<f64>,
}

impl AdjointVector {
    pub fn for_tape(strategy: Strategy, tape: &Tape) -> Result<Self, AdjointError> {
        Self::for_stats(strategy, tape.stats())
    }

    pub fn for_stats(strategy: Strategy, stats: &TapeStats) -> Result<Self, AdjointError> {
        if !strategy.supports(stats.mode) {
            return Err(AdjointError::ModeMismatch {
                strategy,
                mode: stats.mode,
            });
        }
        let map = match (strategy, stats.mode) {
            (Strategy::Flat, Mode::Dag) => SlotMap::Identity,
            (Strategy::Flat, Mode::Dcg) => SlotMap::Shifted { p_l: stats.p_l },
            (Strategy::Bandwidth, _) => SlotMap::Modulo {
                modulus: strategy.slot_count(stats).max(1),
            },
            (Strategy::LValue, _) => SlotMap::LValue {
                p_l: stats.p_l,
                window: remainder_window(stats).max(1),
            },
        };
        Ok(Self {
            strategy,
            map,
            slots: vec![0.0; strategy.slot_count(stats)],
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn ram_bytes(&self) -> usize {
        self.slots.len() * SIGMA
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    /// Slot holding the adjoint of `v`.
    pub fn slot_of(&self, v: VertexId) -> usize {
        self.map.slot(v.0)
    }

    pub fn is_zero(&self) -> bool {
        self.slots.iter().all(|&a| a == 0.0)
    }

    pub fn clear(&mut self) {
        self.slots.fill(0.0);
    }

    /// Zero only the slots of the tape's inputs.
    pub fn clear_inputs(&mut self, tape: &Tape) {
        for &x in tape.inputs() {
            let k = self.map.slot(x.0);
            self.slots[k] = 0.0;
        }
    }

    /// Run one reverse sweep and return the gradient `seed * F'`.
    pub fn propagate(&mut self, tape: &Tape, seed: &[f64]) -> Result<Vec<f64>, AdjointError> {
        self.propagate_traced(tape, seed, |_| {})
    }

    /// As [`propagate`](Self::propagate), calling `on_step` with the adjoint
    /// slots after every elemental.
    pub fn propagate_traced(
        &mut self,
        tape: &Tape,
        seed: &[f64],
        mut on_step: impl FnMut(&[f64]),
    ) -> Result<Vec<f64>, AdjointError> {
        let stats = tape.stats();
        if stats.mode != tape.mode() || !self.strategy.supports(stats.mode) {
            return Err(AdjointError::ModeMismatch {
                strategy: self.strategy,
                mode: stats.mode,
            });
        }
        if seed.len() != tape.outputs().len() {
            return Err(AdjointError::SeedLength {
                expected: tape.outputs().len(),
                got: seed.len(),
            });
        }
        if self.slots.len() != self.strategy.slot_count(stats) {
            *self = Self::for_stats(self.strategy, stats)?;
        }
        self.clear();

        // pending seeded outputs per slot, guarded for the bandwidth map only
        let guard = matches!(self.map, SlotMap::Modulo { .. });
        let mut pending: Vec<Option<VertexId>> = if guard {
            vec![None; self.slots.len()]
        } else {
            Vec::new()
        };
        for (&y, &ybar) in tape.outputs().iter().zip(seed) {
            let k = self.map.slot(y.0);
            if guard {
                if let Some(first) = pending[k] {
                    return Err(AdjointError::OutputSlotCollision {
                        first,
                        second: y,
                        slot: k,
                    });
                }
                pending[k] = Some(y);
            }
            self.slots[k] = ybar;
        }

        let map = self.map;
        let mut reader = tape.reader()?;
        let mut preds = Vec::new();
        while let Some(j) = reader.next_elemental(&mut preds)? {
            let kj = map.slot(j.0);
            if guard {
                match pending[kj] {
                    Some(y) if y == j => pending[kj] = None,
                    Some(y) => {
                        return Err(AdjointError::LiveOutputClobbered {
                            output: y,
                            vertex: j,
                            slot: kj,
                        })
                    }
                    None => {}
                }
            }
            let w = self.slots[kj];
            self.slots[kj] = 0.0;
            for &(i, d) in &preds {
                let ki = map.slot(i.0);
                if guard {
                    if let Some(y) = pending[ki] {
                        if y != i {
                            return Err(AdjointError::LiveOutputClobbered {
                                output: y,
                                vertex: i,
                                slot: ki,
                            });
                        }
                    }
                }
                self.slots[ki] += w * d;
            }
            on_step(&self.slots);
        }

        Ok(tape
            .inputs()
            .iter()
            .map(|x| self.slots[map.slot(x.0)])
            .collect())
    }
}

/// One sweep with a freshly allocated adjoint vector.
pub fn propagate(strategy: Strategy, tape: &Tape, seed: &[f64]) -> Result<Vec<f64>, AdjointError> {
    AdjointVector::for_tape(strategy, tape)?.propagate(tape, seed)
}

pub fn propagate_flat(tape: &Tape, seed: &[f64]) -> Result<Vec<f64>, AdjointError> {
    propagate(Strategy::Flat, tape, seed)
}

pub fn propagate_bandwidth(tape: &Tape, seed: &[f64]) -> Result<Vec<f64>, AdjointError> {
    propagate(Strategy::Bandwidth, tape, seed)
}

pub fn propagate_lvalue(tape: &Tape, seed: &[f64]) -> Result<Vec<f64>, AdjointError> {
    propagate(Strategy::LValue, tape, seed)
}

/// Largest componentwise deviation of `gradient` from `reference`, relative
/// where the gradient component has magnitude at least one and absolute
/// otherwise.
pub fn max_rel_error(gradient: &[f64], reference: &[f64]) -> f64 {
    gradient
        .iter()
        .zip(reference)
        .map(|(&g, &r)| (g - r).abs() / g.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub gradient: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub max_rel_err: f64,
    pub fd_step: f64,
}

/// Record `program` for `strategy`, sweep with `seed`, and compare against
/// central differences with step `fd_step`.
pub fn gradient_check<P: Program + ?Sized>(
    program: &P,
    strategy: Strategy,
    point: &[f64],
    seed: &[f64],
    fd_step: f64,
) -> Result<GradCheck, ProgramError> {
    let rec = program::record(
        program,
        point,
        strategy.preferred_mode(),
        StoreConfig::in_memory(),
    )?;
    let gradient = propagate(strategy, &rec.tape, seed)?;
    let finite_difference = program::fd_gradient(program, point, seed, fd_step)?;
    Ok(GradCheck {
        max_rel_err: max_rel_error(&gradient, &finite_difference),
        gradient,
        finite_difference,
        fd_step,
    })
}
