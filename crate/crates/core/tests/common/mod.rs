#![allow(dead_code)]

use adtape::active::{Context, Real};
use adtape::program::{Program, ProgramError};
use adtape::tape::{Mode, ResultKind, Tape, TapeBuilder, VertexId};
use proptest::prelude::*;

pub const INTRO_DAG_S: [i64; 21] = [
    0, 0, 1, 1, 1, 1, 2, 2, 0, 2, 3, 3, 1, 4, 4, 1, 5, 5, 0, 2, 6,
];
pub const INTRO_DAG_D: [f64; 8] = [0.54, 1.68, 1.0, 1.0, -0.14, 1.98, 1.0, 1.0];
pub const INTRO_DCG_S: [i64; 33] = [
    -1, -1, 1, 0, 0, 1, -2, -2, 1, 1, 1, -1, 2, 2, 2, 1, -3, -3, 1, 3, 3, 1, -2, -2, 1, 4, 4, -1,
    2, 5, 5, 1, -4,
];
pub const INTRO_DCG_D: [f64; 12] = [
    0.54, 1.0, 1.68, 1.0, 1.0, 1.0, -0.14, 1.0, 1.98, 1.0, 1.0, 1.0,
];
pub const INTRO_DCG_VISITS: [i64; 13] = [-4, 5, -1, 4, -2, 3, -3, 2, -1, 1, -2, 0, -1];
pub const INTRO_GRADIENT: f64 = 0.482_355_397_264_067_6;

pub fn round2(d: &[f64]) -> Vec<f64> {
    d.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}

/// Componentwise agreement, relative for magnitudes above one and absolute
/// below.
pub fn agree(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

#[derive(Debug, Clone, Copy)]
pub enum Operand {
    Temp(usize),
    Var(usize),
    Input(usize),
}

#[derive(Debug, Clone)]
pub enum Op {
    Add(Operand, Operand),
    Sub(Operand, Operand),
    MulSin(Operand, Operand),
    Scale(Operand, f64),
    Sin(Operand),
    Cos(Operand),
    Assign(usize, Operand),
    AssignConst(usize, f64),
}

/// A random straight-line program over a few inputs and program variables.
#[derive(Debug, Clone)]
pub struct RandomProgram {
    pub point: Vec<f64>,
    pub vars: usize,
    pub ops: Vec<Op>,
    /// Output every variable instead of only their sum.
    pub all_outputs: bool,
}

impl RandomProgram {
    fn pick<S: Real>(&self, o: Operand, temps: &[S], vars: &[S], inputs: &[S]) -> S {
        match o {
            Operand::Temp(i) if !temps.is_empty() => temps[i % temps.len()],
            Operand::Var(k) => vars[k % vars.len()],
            Operand::Input(i) | Operand::Temp(i) => inputs[i % inputs.len()],
        }
    }
}

impl Program for RandomProgram {
    fn name(&self) -> &str {
        "random"
    }

    fn num_inputs(&self) -> usize {
        self.point.len()
    }

    fn default_point(&self) -> Vec<f64> {
        self.point.clone()
    }

    fn eval<C: Context>(&self, ctx: &mut C, x: &[f64]) -> Result<(), ProgramError> {
        let inputs: Vec<C::Scalar> = x.iter().map(|&v| ctx.input(v)).collect();
        let mut vars: Vec<C::Scalar> = (0..self.vars).map(|_| ctx.variable(0.0)).collect();
        let mut temps: Vec<C::Scalar> = Vec::new();
        for op in &self.ops {
            let t = match *op {
                Op::Add(a, b) => {
                    self.pick(a, &temps, &vars, &inputs) + self.pick(b, &temps, &vars, &inputs)
                }
                Op::Sub(a, b) => {
                    self.pick(a, &temps, &vars, &inputs) - self.pick(b, &temps, &vars, &inputs)
                }
                Op::MulSin(a, b) => {
                    self.pick(a, &temps, &vars, &inputs)
                        * self.pick(b, &temps, &vars, &inputs).sin()
                }
                Op::Scale(a, c) => self.pick(a, &temps, &vars, &inputs) * c,
                Op::Sin(a) => self.pick(a, &temps, &vars, &inputs).sin(),
                Op::Cos(a) => self.pick(a, &temps, &vars, &inputs).cos(),
                Op::Assign(k, a) => {
                    let v = self.pick(a, &temps, &vars, &inputs);
                    vars[k % self.vars].assign(v);
                    continue;
                }
                Op::AssignConst(k, c) => {
                    vars[k % self.vars].assign_const(c);
                    continue;
                }
            };
            temps.push(t);
        }
        // make every output depend on the inputs
        let tail = temps.last().copied().unwrap_or(inputs[0]) + inputs[0];
        for v in vars.iter_mut() {
            let next = *v + tail;
            v.assign(next);
        }
        if self.all_outputs {
            for v in vars {
                ctx.output(v);
            }
        } else {
            let mut total = vars[0];
            for v in &vars[1..] {
                total = total + *v;
            }
            let mut y = ctx.variable(0.0);
            y.assign(total);
            ctx.output(y);
        }
        Ok(())
    }
}

fn operand() -> impl Strategy<Value = Operand> {
    prop_oneof![
        4 => (0usize..64).prop_map(Operand::Temp),
        2 => (0usize..8).prop_map(Operand::Var),
        1 => (0usize..8).prop_map(Operand::Input),
    ]
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (operand(), operand()).prop_map(|(a, b)| Op::Add(a, b)),
        2 => (operand(), operand()).prop_map(|(a, b)| Op::Sub(a, b)),
        2 => (operand(), operand()).prop_map(|(a, b)| Op::MulSin(a, b)),
        1 => (operand(), -2.0f64..2.0).prop_map(|(a, c)| Op::Scale(a, c)),
        1 => operand().prop_map(Op::Sin),
        1 => operand().prop_map(Op::Cos),
        2 => (0usize..8, operand()).prop_map(|(k, a)| Op::Assign(k, a)),
        1 => (0usize..8, -1.0f64..1.0).prop_map(|(k, c)| Op::AssignConst(k, c)),
    ]
}

pub fn random_program(max_ops: usize) -> impl Strategy<Value = RandomProgram> {
    (
        prop::collection::vec(-2.0f64..2.0, 1..5),
        1usize..5,
        prop::collection::vec(op(), 1..max_ops),
        any::<bool>(),
    )
        .prop_map(|(point, vars, ops, all_outputs)| RandomProgram {
            point,
            vars,
            ops,
            all_outputs,
        })
}

/// Operands with partials, and the result vertex.
pub type Elemental = (Vec<(VertexId, f64)>, VertexId);

/// A random tape built directly through the builder, with the elementals it
/// should parse back to.
#[derive(Debug, Clone)]
pub struct RawTape {
    pub mode: Mode,
    pub inputs: usize,
    // (operand picks, partials, L-value target or remainder)
    pub elementals: Vec<(Vec<usize>, Vec<f64>, Option<usize>)>,
}

pub fn raw_tape() -> impl Strategy<Value = RawTape> {
    let elemental = (
        prop::collection::vec(0usize..1000, 0..4),
        prop::collection::vec(-10.0f64..10.0, 4),
        prop::option::weighted(0.3, 0usize..6),
    );
    (
        prop_oneof![Just(Mode::Dag), Just(Mode::Dcg)],
        1usize..4,
        prop::collection::vec(elemental, 1..40),
    )
        .prop_map(|(mode, inputs, elementals)| RawTape {
            mode,
            inputs,
            elementals,
        })
}

impl RawTape {
    /// Record into a builder; returns the finalized tape and the elementals
    /// as they should be read back.
    pub fn build(&self) -> (Tape, Vec<Elemental>) {
        let mut b = TapeBuilder::new(self.mode);
        let mut known: Vec<VertexId> = (0..self.inputs)
            .map(|_| b.register_input().unwrap())
            .collect();
        let mut lvalues: Vec<VertexId> = Vec::new();
        if self.mode == Mode::Dcg {
            lvalues.extend(known.iter().copied());
            for _ in 0..3 {
                lvalues.push(b.declare_lvalue().unwrap());
            }
        }
        let mut expected = Vec::new();
        let mut last = known[0];
        for (picks, partials, target) in &self.elementals {
            let mut preds: Vec<(VertexId, f64)> = Vec::new();
            for (&p, &d) in picks.iter().zip(partials) {
                let v = known[p % known.len()];
                match preds.iter_mut().find(|(u, _)| *u == v) {
                    Some((_, acc)) => *acc += d,
                    None => preds.push((v, d)),
                }
            }
            let kind = match (self.mode, target) {
                (Mode::Dcg, Some(k)) => ResultKind::LValue(lvalues[k % lvalues.len()]),
                _ => ResultKind::Remainder,
            };
            let raw: Vec<(VertexId, f64)> = picks
                .iter()
                .zip(partials)
                .map(|(&p, &d)| (known[p % known.len()], d))
                .collect();
            let result = b.record_elemental(&raw, kind).unwrap();
            if !known.contains(&result) {
                known.push(result);
            }
            last = result;
            expected.push((preds, result));
        }
        let output = if self.mode == Mode::Dcg && !last.is_lvalue() {
            let y = lvalues[lvalues.len() - 1];
            let r = b
                .record_elemental(&[(last, 1.0)], ResultKind::LValue(y))
                .unwrap();
            expected.push((vec![(last, 1.0)], r));
            y
        } else {
            last
        };
        b.register_output(output).unwrap();
        (b.finalize().unwrap(), expected)
    }
}
