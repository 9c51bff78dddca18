//! Operator-overloading frontend.
//!
//! [`ActiveScalar`] is a `Copy` value carrying its primal value, its vertex on
//! the tape, and a handle to the [`Recorder`] it belongs to. Every arithmetic
//! operation on active scalars records one scalar elemental with its local
//! partial derivatives. Program variables that should own a dedicated
//! adjoint (L-values) are created explicitly through
//! [`Recorder::declare_lvalue`] or [`Context::variable`] and written through
//! [`Real::assign`]; everything else is an expression temporary.
//!
//! Recording state lives in a thread-local registry keyed by the recorder's
//! handle, so active scalars must stay on the thread that created them.
//! Operator impls cannot return errors; a failing operation (domain error,
//! mixed tapes, ...) poisons its tape instead and [`Recorder::finalize`]
//! reports the first such error. The `try_*` methods surface errors directly.

use std::cell::RefCell;
use std::cmp::Ordering as CmpOrdering;
use std::fmt;
use std::marker::PhantomData;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::atomic::{AtomicU32, Ordering};

use crate::store::StoreConfig;
use crate::tape::{Mode, ResultKind, Tape, TapeBuilder, TapeError, VertexId};

const PASSIVE: i64 = i64::MIN;
const UNBOUND: u32 = 0;

static NEXT_TAPE: AtomicU32 = AtomicU32::new(1);

struct Slot {
    id: u32,
    builder: TapeBuilder,
    error: Option<TapeError>,
    // assignment count per L-value, for detecting stale copies
    versions: Vec<u32>,
    output_lvalues: Vec<VertexId>,
    output_values: Vec<f64>,
}

impl Slot {
    fn poison(&mut self, e: TapeError) {
        if self.error.is_none() {
            self.error = Some(e);
        }
    }

    fn check_fresh(&self, a: &ActiveScalar) -> Result<(), TapeError> {
        if a.lvalue != 0 && a.vertex == a.lvalue {
            let id = VertexId(a.lvalue);
            let k = id.lvalue_index().expect("negative id");
            if self.versions.get(k).copied() != Some(a.version) {
                return Err(TapeError::StaleLValue(id));
            }
        }
        Ok(())
    }
}

thread_local! {
    static REGISTRY: RefCell<Vec<Slot>> = const { RefCell::new(Vec::new()) };
}

fn with_slot<R>(id: u32, f: impl FnOnce(&mut Slot) -> R) -> Result<R, TapeError> {
    REGISTRY.with(|reg| {
        let mut reg = reg.borrow_mut();
        reg.iter_mut()
            .find(|s| s.id == id)
            .map(f)
            .ok_or(TapeError::NotRecording)
    })
}

fn poison(id: u32, e: TapeError) {
    let _ = with_slot(id, |slot| slot.poison(e));
}

/// Owner of a tape being recorded through [`ActiveScalar`] arithmetic.
pub struct Recorder {
    id: u32,
    mode: Mode,
    _not_send: PhantomData<*const ()>,
}

impl fmt::Debug for Recorder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Recorder")
            .field("id", &self.id)
            .field("mode", &self.mode)
            .finish()
    }
}

impl Recorder {
    pub fn new(mode: Mode) -> Self {
        Self::with_store(mode, StoreConfig::default()).expect("default store config is valid")
    }

    pub fn with_store(mode: Mode, config: StoreConfig) -> Result<Self, TapeError> {
        let builder = TapeBuilder::with_store(mode, config)?;
        let id = NEXT_TAPE.fetch_add(1, Ordering::Relaxed);
        REGISTRY.with(|reg| {
            reg.borrow_mut().push(Slot {
                id,
                builder,
                error: None,
                versions: Vec::new(),
                output_lvalues: Vec::new(),
                output_values: Vec::new(),
            })
        });
        Ok(Self {
            id,
            mode,
            _not_send: PhantomData,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn slot<R>(&self, f: impl FnOnce(&mut Slot) -> R) -> R {
        with_slot(self.id, f).expect("recorder owns a registry slot")
    }

    /// First error recorded so far, rendered as text.
    pub fn error(&self) -> Option<String> {
        self.slot(|s| s.error.as_ref().map(ToString::to_string))
    }

    /// Primal values of the outputs registered so far.
    pub fn output_values(&self) -> Vec<f64> {
        self.slot(|s| s.output_values.clone())
    }

    /// Inspect the underlying tape while recording.
    pub fn with_builder<R>(&self, f: impl FnOnce(&TapeBuilder) -> R) -> R {
        self.slot(|s| f(&s.builder))
    }

    pub fn try_input(&self, value: f64) -> Result<ActiveScalar, TapeError> {
        self.slot(|s| {
            let v = s.builder.register_input()?;
            let mut a = ActiveScalar::bound(value, v.0, self.id);
            if v.is_lvalue() {
                s.versions.push(0);
                a.lvalue = v.0;
            }
            Ok(a)
        })
    }

    /// Register an independent input.
    pub fn input(&self, value: f64) -> ActiveScalar {
        self.try_input(value).unwrap_or_else(|e| self.fail(e))
    }

    pub fn try_declare_lvalue(&self, initial: f64) -> Result<ActiveScalar, TapeError> {
        self.slot(|s| {
            let v = s.builder.declare_lvalue()?;
            s.versions.push(0);
            Ok(ActiveScalar {
                value: initial,
                vertex: PASSIVE,
                tape: self.id,
                lvalue: v.0,
                version: 0,
            })
        })
    }

    /// Allocate a dedicated L-value (DCG tapes only). It holds `initial` as a
    /// passive value until first assigned.
    pub fn declare_lvalue(&self, initial: f64) -> ActiveScalar {
        self.try_declare_lvalue(initial)
            .unwrap_or_else(|e| self.fail(e))
    }

    /// A program variable: an L-value on DCG tapes, a rebindable passive
    /// scalar on DAG tapes.
    pub fn variable(&self, initial: f64) -> ActiveScalar {
        match self.mode {
            Mode::Dcg => self.declare_lvalue(initial),
            Mode::Dag => ActiveScalar {
                value: initial,
                vertex: PASSIVE,
                tape: self.id,
                lvalue: 0,
                version: 0,
            },
        }
    }

    /// Register a dependent output. A passive value (say, a Monte Carlo sum
    /// no path contributed to) is first recorded as a constant.
    pub fn try_output(&self, y: &ActiveScalar) -> Result<(), TapeError> {
        if y.tape != self.id && y.tape != UNBOUND {
            return Err(TapeError::MixedTapes);
        }
        self.slot(|s| {
            let v = if y.vertex != PASSIVE {
                s.check_fresh(y)?;
                VertexId(y.vertex)
            } else {
                match s.builder.mode() {
                    Mode::Dag => s.builder.record_elemental(&[], ResultKind::Remainder)?,
                    Mode::Dcg => {
                        let target = if y.lvalue != 0 {
                            VertexId(y.lvalue)
                        } else {
                            s.versions.push(0);
                            s.builder.declare_lvalue()?
                        };
                        let k = target.lvalue_index().expect("negative id");
                        s.versions[k] += 1;
                        s.builder
                            .record_elemental(&[], ResultKind::LValue(target))?
                    }
                }
            };
            s.builder.register_output(v)?;
            if v.is_lvalue() {
                s.output_lvalues.push(v);
            }
            s.output_values.push(y.value);
            Ok(())
        })
    }

    pub fn output(&self, y: &ActiveScalar) {
        if let Err(e) = self.try_output(y) {
            self.slot(|s| s.poison(e));
        }
    }

    /// Record a user-supplied elemental with arbitrary arity: `value` is the
    /// primal result and each operand comes with its local partial.
    pub fn try_custom(
        &self,
        value: f64,
        operands: &[(ActiveScalar, f64)],
    ) -> Result<ActiveScalar, TapeError> {
        let mut preds = Vec::with_capacity(operands.len());
        for (a, partial) in operands {
            if a.is_active() {
                if a.tape != self.id {
                    return Err(TapeError::MixedTapes);
                }
                preds.push((VertexId(a.vertex), *partial));
            }
        }
        if preds.is_empty() {
            return Ok(ActiveScalar::constant(value));
        }
        self.slot(|s| {
            for (a, _) in operands {
                s.check_fresh(a)?;
            }
            let v = s.builder.record_elemental(&preds, ResultKind::Remainder)?;
            Ok(ActiveScalar::bound(value, v.0, self.id))
        })
    }

    pub fn custom(&self, value: f64, operands: &[(ActiveScalar, f64)]) -> ActiveScalar {
        self.try_custom(value, operands)
            .unwrap_or_else(|e| self.fail(e))
    }

    fn fail(&self, e: TapeError) -> ActiveScalar {
        self.slot(|s| s.poison(e));
        ActiveScalar::constant(f64::NAN)
    }

    /// Stop recording. Returns the first error any recorded operation hit.
    pub fn finalize(self) -> Result<Tape, TapeError> {
        let slot = REGISTRY.with(|reg| {
            let mut reg = reg.borrow_mut();
            let pos = reg.iter().position(|s| s.id == self.id);
            pos.map(|p| reg.swap_remove(p))
        });
        let slot = slot.ok_or(TapeError::NotRecording)?;
        match slot.error {
            Some(e) => Err(e),
            None => slot.builder.finalize(),
        }
    }
}

impl Drop for Recorder {
    fn drop(&mut self) {
        let id = self.id;
        let _ = REGISTRY.try_with(|reg| reg.borrow_mut().retain(|s| s.id != id));
    }
}

/// Scalar whose arithmetic is recorded on a tape.
#[derive(Clone, Copy)]
pub struct ActiveScalar {
    value: f64,
    vertex: i64,
    tape: u32,
    // L-value id this object owns, 0 if none
    lvalue: i64,
    version: u32,
}

impl fmt::Debug for ActiveScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("ActiveScalar");
        d.field("value", &self.value);
        if let Some(v) = self.vertex() {
            d.field("vertex", &v.0);
        }
        if self.lvalue != 0 {
            d.field("lvalue", &self.lvalue);
        }
        d.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Ln,
    Sqrt,
    PowConst(f64),
}

impl UnaryOp {
    /// Primal value and local partial at `a`, or the domain violation.
    pub fn eval(self, a: f64) -> Result<(f64, f64), TapeError> {
        let domain = |op| Err(TapeError::Domain { op, value: a });
        Ok(match self {
            UnaryOp::Neg => (-a, -1.0),
            UnaryOp::Sin => (a.sin(), a.cos()),
            UnaryOp::Cos => (a.cos(), -a.sin()),
            UnaryOp::Exp => {
                let e = a.exp();
                (e, e)
            }
            UnaryOp::Ln if a <= 0.0 => return domain("ln"),
            UnaryOp::Ln => (a.ln(), 1.0 / a),
            UnaryOp::Sqrt if a <= 0.0 => return domain("sqrt"),
            UnaryOp::Sqrt => {
                let r = a.sqrt();
                (r, 0.5 / r)
            }
            UnaryOp::PowConst(c) if a <= 0.0 && c.fract() != 0.0 => return domain("powf"),
            UnaryOp::PowConst(c) => (a.powf(c), c * a.powf(c - 1.0)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    /// Primal value and the partials with respect to both operands.
    pub fn eval(self, a: f64, b: f64) -> (f64, f64, f64) {
        match self {
            BinaryOp::Add => (a + b, 1.0, 1.0),
            BinaryOp::Sub => (a - b, 1.0, -1.0),
            BinaryOp::Mul => (a * b, b, a),
            BinaryOp::Div => (a / b, 1.0 / b, -a / (b * b)),
        }
    }
}

impl ActiveScalar {
    /// Passive constant, not bound to any tape.
    pub fn constant(value: f64) -> Self {
        Self {
            value,
            vertex: PASSIVE,
            tape: UNBOUND,
            lvalue: 0,
            version: 0,
        }
    }

    fn bound(value: f64, vertex: i64, tape: u32) -> Self {
        Self {
            value,
            vertex,
            tape,
            lvalue: 0,
            version: 0,
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.value
    }

    #[inline]
    pub fn is_active(&self) -> bool {
        self.vertex != PASSIVE
    }

    pub fn vertex(&self) -> Option<VertexId> {
        self.is_active().then_some(VertexId(self.vertex))
    }

    pub fn is_lvalue(&self) -> bool {
        self.lvalue != 0
    }

    /// The dedicated L-value id owned by this object, if any.
    pub fn lvalue_id(&self) -> Option<VertexId> {
        self.is_lvalue().then_some(VertexId(self.lvalue))
    }

    pub fn try_unary(self, op: UnaryOp) -> Result<Self, TapeError> {
        if !self.is_active() {
            return match op.eval(self.value) {
                Ok((v, _)) => Ok(Self::constant(v)),
                Err(_) => Ok(Self::constant(f64::NAN)),
            };
        }
        let (value, partial) = op.eval(self.value)?;
        with_slot(self.tape, |s| {
            s.check_fresh(&self)?;
            let v = s
                .builder
                .record_elemental(&[(VertexId(self.vertex), partial)], ResultKind::Remainder)?;
            Ok(Self::bound(value, v.0, self.tape))
        })?
    }

    pub fn try_binary(self, op: BinaryOp, rhs: Self) -> Result<Self, TapeError> {
        let (value, da, db) = op.eval(self.value, rhs.value);
        let tape = match (self.is_active(), rhs.is_active()) {
            (false, false) => return Ok(Self::constant(value)),
            (true, true) if self.tape != rhs.tape => return Err(TapeError::MixedTapes),
            (true, _) => self.tape,
            (false, true) => rhs.tape,
        };
        let mut preds = [(VertexId(0), 0.0); 2];
        let mut n = 0;
        if self.is_active() {
            preds[n] = (VertexId(self.vertex), da);
            n += 1;
        }
        if rhs.is_active() {
            preds[n] = (VertexId(rhs.vertex), db);
            n += 1;
        }
        with_slot(tape, |s| {
            s.check_fresh(&self)?;
            s.check_fresh(&rhs)?;
            let v = s
                .builder
                .record_elemental(&preds[..n], ResultKind::Remainder)?;
            Ok(Self::bound(value, v.0, tape))
        })?
    }

    /// Assignment. On a DCG tape the target must be an L-value: an active
    /// right-hand side records a copy elemental into the L-value's id, a
    /// passive one records a zero-arity elemental that kills the L-value's
    /// adjoint. On a DAG tape the target is simply rebound.
    pub fn try_assign(&mut self, rhs: Self) -> Result<(), TapeError> {
        let tape = if self.tape != UNBOUND {
            self.tape
        } else {
            rhs.tape
        };
        if tape == UNBOUND {
            *self = rhs;
            return Ok(());
        }
        if rhs.is_active() && rhs.tape != tape {
            return Err(TapeError::MixedTapes);
        }
        let lhs = *self;
        let updated = with_slot(tape, |s| {
            s.check_fresh(&rhs)?;
            match s.builder.mode() {
                Mode::Dag => Ok(Self {
                    value: rhs.value,
                    vertex: rhs.vertex,
                    tape,
                    lvalue: 0,
                    version: 0,
                }),
                Mode::Dcg => {
                    if !lhs.is_lvalue() {
                        if !rhs.is_active() && !lhs.is_active() {
                            return Ok(Self {
                                tape: lhs.tape,
                                ..rhs
                            });
                        }
                        return Err(TapeError::NotAnLValue(VertexId(lhs.vertex)));
                    }
                    let id = VertexId(lhs.lvalue);
                    if s.output_lvalues.contains(&id) {
                        return Err(TapeError::OutputOverwritten(id));
                    }
                    let preds: &[(VertexId, f64)] = if rhs.is_active() {
                        &[(VertexId(rhs.vertex), 1.0)]
                    } else {
                        &[]
                    };
                    s.builder.record_elemental(preds, ResultKind::LValue(id))?;
                    let k = id.lvalue_index().expect("negative id");
                    s.versions[k] += 1;
                    Ok(Self {
                        value: rhs.value,
                        vertex: id.0,
                        tape,
                        lvalue: id.0,
                        version: s.versions[k],
                    })
                }
            }
        })??;
        *self = updated;
        Ok(())
    }

    pub fn try_sin(self) -> Result<Self, TapeError> {
        self.try_unary(UnaryOp::Sin)
    }
    pub fn try_cos(self) -> Result<Self, TapeError> {
        self.try_unary(UnaryOp::Cos)
    }
    pub fn try_exp(self) -> Result<Self, TapeError> {
        self.try_unary(UnaryOp::Exp)
    }
    pub fn try_ln(self) -> Result<Self, TapeError> {
        self.try_unary(UnaryOp::Ln)
    }
    pub fn try_sqrt(self) -> Result<Self, TapeError> {
        self.try_unary(UnaryOp::Sqrt)
    }
    pub fn try_powf(self, c: f64) -> Result<Self, TapeError> {
        self.try_unary(UnaryOp::PowConst(c))
    }
    pub fn try_div(self, rhs: Self) -> Result<Self, TapeError> {
        self.try_binary(BinaryOp::Div, rhs)
    }

    fn unary_or_poison(self, op: UnaryOp) -> Self {
        self.try_unary(op).unwrap_or_else(|e| {
            poison(self.tape, e);
            Self::constant(f64::NAN)
        })
    }

    fn binary_or_poison(self, op: BinaryOp, rhs: Self) -> Self {
        self.try_binary(op, rhs).unwrap_or_else(|e| {
            poison(self.tape, e);
            if rhs.tape != self.tape {
                // mixed tapes: both recordings are broken
                if let Err(e) = self.try_binary(op, rhs) {
                    poison(rhs.tape, e);
                }
            }
            Self::constant(f64::NAN)
        })
    }
}

impl PartialEq for ActiveScalar {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

impl PartialOrd for ActiveScalar {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        self.value.partial_cmp(&other.value)
    }
}

macro_rules! binary_impls {
    ($($trait:ident $method:ident $op:ident),*) => {$(
        impl $trait for ActiveScalar {
            type Output = ActiveScalar;
            #[inline]
            fn $method(self, rhs: ActiveScalar) -> ActiveScalar {
                self.binary_or_poison(BinaryOp::$op, rhs)
            }
        }
        impl $trait<f64> for ActiveScalar {
            type Output = ActiveScalar;
            #[inline]
            fn $method(self, rhs: f64) -> ActiveScalar {
                self.binary_or_poison(BinaryOp::$op, ActiveScalar::constant(rhs))
            }
        }
        impl $trait<ActiveScalar> for f64 {
            type Output = ActiveScalar;
            #[inline]
            fn $method(self, rhs: ActiveScalar) -> ActiveScalar {
                ActiveScalar::constant(self).binary_or_poison(BinaryOp::$op, rhs)
            }
        }
    )*};
}

binary_impls!(Add add Add, Sub sub Sub, Mul mul Mul, Div div Div);

impl Neg for ActiveScalar {
    type Output = ActiveScalar;
    fn neg(self) -> ActiveScalar {
        self.unary_or_poison(UnaryOp::Neg)
    }
}

/// Scalar arithmetic shared by plain `f64` and [`ActiveScalar`], so one
/// program source can be evaluated directly or recorded.
pub trait Real:
    Copy
    + fmt::Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, c: f64) -> Self;
    fn assign(&mut self, rhs: Self);

    fn assign_const(&mut self, c: f64) {
        self.assign(Self::constant(c));
    }
}

impl Real for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, c: f64) -> Self {
        f64::powf(self, c)
    }
    fn assign(&mut self, rhs: Self) {
        *self = rhs;
    }
}

impl Real for ActiveScalar {
    fn constant(c: f64) -> Self {
        ActiveScalar::constant(c)
    }
    fn value(&self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        self.unary_or_poison(UnaryOp::Sin)
    }
    fn cos(self) -> Self {
        self.unary_or_poison(UnaryOp::Cos)
    }
    fn exp(self) -> Self {
        self.unary_or_poison(UnaryOp::Exp)
    }
    fn ln(self) -> Self {
        self.unary_or_poison(UnaryOp::Ln)
    }
    fn sqrt(self) -> Self {
        self.unary_or_poison(UnaryOp::Sqrt)
    }
    fn powf(self, c: f64) -> Self {
        self.unary_or_poison(UnaryOp::PowConst(c))
    }
    fn assign(&mut self, rhs: Self) {
        let tape = if self.tape != UNBOUND {
            self.tape
        } else {
            rhs.tape
        };
        if let Err(e) = self.try_assign(rhs) {
            poison(tape, e);
            *self = Self::constant(f64::NAN);
        }
    }
}

/// Where a program gets its inputs, variables and outputs from.
pub trait Context {
    type Scalar: Real;
    fn input(&mut self, x: f64) -> Self::Scalar;
    /// A named program variable holding `init` until first assigned.
    fn variable(&mut self, init: f64) -> Self::Scalar;
    fn output(&mut self, y: Self::Scalar);
}

impl Context for Recorder {
    type Scalar = ActiveScalar;
    fn input(&mut self, x: f64) -> ActiveScalar {
        Recorder::input(self, x)
    }
    fn variable(&mut self, init: f64) -> ActiveScalar {
        Recorder::variable(self, init)
    }
    fn output(&mut self, y: ActiveScalar) {
        Recorder::output(self, &y)
    }
}

/// Plain floating-point evaluation.
#[derive(Debug, Default, Clone)]
pub struct PlainContext {
    pub outputs: Vec<f64>,
}

impl Context for PlainContext {
    type Scalar = f64;
    fn input(&mut self, x: f64) -> f64 {
        x
    }
    fn variable(&mut self, init: f64) -> f64 {
        init
    }
    fn output(&mut self, y: f64) {
        self.outputs.push(y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inputs_by_mode() {
        let dag = Recorder::new(Mode::Dag);
        let a = dag.input(1.0);
        let b = dag.input(2.0);
        assert_eq!(a.vertex(), Some(VertexId(0)));
        assert_eq!(b.vertex(), Some(VertexId(1)));
        assert_eq!(a.value(), 1.0);
        let dcg = Recorder::new(Mode::Dcg);
        assert_eq!(dcg.input(1.0).vertex(), Some(VertexId(-1)));
    }

    #[test]
    fn partials_of_binary_ops() {
        let rec = Recorder::new(Mode::Dag);
        let x = rec.input(2.0);
        let y = x + 5.0;
        assert_eq!(y.value(), 7.0);
        let t = rec.input_after_check();
        assert!(t.is_none());
        rec.output(&y);
        let tape = rec.finalize().unwrap();
        let (s, d) = tape.dump().unwrap();
        assert_eq!(s, vec![0, 0, 1, 1]);
        assert_eq!(d, vec![1.0]);
    }

    impl Recorder {
        // inputs after the first elemental must fail without poisoning the
        // caller's view of the tape
        fn input_after_check(&self) -> Option<ActiveScalar> {
            self.try_input(0.0).ok()
        }
    }

    #[test]
    fn add_two_actives_has_unit_partials() {
        let rec = Recorder::new(Mode::Dag);
        let t = rec.input(0.3);
        let x = rec.input(0.4);
        let y = t + x;
        rec.output(&y);
        let (_, d) = rec.finalize().unwrap().dump().unwrap();
        assert_eq!(d, vec![1.0, 1.0]);
    }

    #[test]
    fn unary_partials() {
        let rec = Recorder::new(Mode::Dag);
        let one = rec.input(1.0);
        let s = Real::sin(one);
        assert!(rec.try_input(0.0).is_err());
        let e = Real::exp(one * 0.0);
        let q = Real::sqrt(one * 4.0);
        let p = Real::powf(one * 2.0, 3.0);
        rec.output(&(s + e + q + p));
        let (_, d) = rec.finalize().unwrap().dump().unwrap();
        assert!(close(d[0], 0.54, 0.005));
        // exp at 0 has partial 1, sqrt at 4 has 1/4, cube at 2 has 12
        assert_eq!(d[2], 1.0);
        assert_eq!(d[4], 0.25);
        assert_eq!(d[6], 12.0);
    }

    #[test]
    fn domain_errors_carry_the_value() {
        let rec = Recorder::new(Mode::Dag);
        let x = rec.input(-2.0);
        let err = x.try_ln().unwrap_err();
        assert!(matches!(err, TapeError::Domain { op: "ln", value } if value == -2.0));
        assert!(x.try_sqrt().is_err());
        assert!(x.try_powf(0.5).is_err());
        assert!(x.try_powf(2.0).is_ok());
        // the operator form poisons the tape instead
        let y = Real::ln(x);
        assert!(y.value().is_nan());
        rec.output(&x);
        assert!(matches!(rec.finalize(), Err(TapeError::Domain { .. })));
    }

    #[test]
    fn division_by_zero_is_rejected() {
        let rec = Recorder::new(Mode::Dag);
        let x = rec.input(1.0);
        let zero = rec.input(0.0);
        assert!(matches!(
            x.try_div(zero),
            Err(TapeError::NonFinitePartial { .. })
        ));
    }

    #[test]
    fn mixed_tapes_are_rejected() {
        let a = Recorder::new(Mode::Dag);
        let b = Recorder::new(Mode::Dag);
        let x = a.input(1.0);
        let y = b.input(2.0);
        assert!(matches!(
            x.try_binary(BinaryOp::Add, y),
            Err(TapeError::MixedTapes)
        ));
        let _ = x * y;
        a.output(&x);
        b.output(&y);
        assert!(matches!(a.finalize(), Err(TapeError::MixedTapes)));
        assert!(matches!(b.finalize(), Err(TapeError::MixedTapes)));
    }

    #[test]
    fn passive_arithmetic_is_not_recorded() {
        let rec = Recorder::new(Mode::Dcg);
        let x = rec.input(1.0);
        let c = ActiveScalar::constant(2.0) * 3.0;
        assert!(!c.is_active());
        assert_eq!(c.value(), 6.0);
        rec.output(&x);
        assert_eq!(rec.finalize().unwrap().stats().num_elementals, 0);
    }

    #[test]
    fn passive_outputs_become_constants() {
        for mode in [Mode::Dag, Mode::Dcg] {
            let rec = Recorder::new(mode);
            let x = rec.input(2.0);
            let unused = rec.variable(3.0);
            rec.output(&unused);
            rec.output(&ActiveScalar::constant(4.0));
            assert_eq!(rec.output_values(), vec![3.0, 4.0]);
            let tape = rec.finalize().unwrap();
            assert_eq!(tape.outputs().len(), 2);
            let g = crate::adjoint::propagate(crate::adjoint::Strategy::Flat, &tape, &[1.0, 1.0])
                .unwrap();
            assert_eq!(g, vec![0.0]);
            let _ = x;
        }
    }

    #[test]
    fn declare_lvalue_ids() {
        let rec = Recorder::new(Mode::Dcg);
        let _x = rec.input(1.0);
        let u = rec.declare_lvalue(0.0);
        let v1 = rec.declare_lvalue(0.0);
        let v2 = rec.declare_lvalue(0.0);
        assert_eq!(u.lvalue_id(), Some(VertexId(-2)));
        assert_eq!(v1.lvalue_id(), Some(VertexId(-3)));
        assert_eq!(v2.lvalue_id(), Some(VertexId(-4)));
        assert!(!u.is_active());
        assert_eq!(rec.with_builder(|b| b.p_l()), 4);
        let dag = Recorder::new(Mode::Dag);
        assert!(matches!(
            dag.try_declare_lvalue(1.0),
            Err(TapeError::LValueOnDag)
        ));
    }

    #[test]
    fn dcg_assign_records_copy() {
        let rec = Recorder::new(Mode::Dcg);
        let x = rec.input(1.0);
        let mut u = rec.declare_lvalue(0.0);
        let t = Real::sin(x);
        u.assign(t);
        assert_eq!(u.vertex(), Some(VertexId(-2)));
        assert_eq!(u.value(), 1.0f64.sin());
        rec.output(&u);
        let (s, d) = rec.finalize().unwrap().dump().unwrap();
        assert_eq!(s, vec![-1, -1, 1, 0, 0, 1, -2]);
        assert_eq!(d[1], 1.0);
    }

    #[test]
    fn dcg_passive_assign_records_kill() {
        let rec = Recorder::new(Mode::Dcg);
        let x = rec.input(1.0);
        let mut u = rec.declare_lvalue(0.0);
        u.assign(x * 2.0);
        u.assign_const(3.5);
        assert_eq!(u.value(), 3.5);
        rec.output(&u);
        let (s, _) = rec.finalize().unwrap().dump().unwrap();
        assert_eq!(&s[s.len() - 2..], &[0, -2]);
    }

    #[test]
    fn dcg_assign_to_temporary_is_rejected() {
        let rec = Recorder::new(Mode::Dcg);
        let x = rec.input(1.0);
        let mut t = x * 2.0;
        assert!(matches!(t.try_assign(x), Err(TapeError::NotAnLValue(_))));
    }

    #[test]
    fn dag_assign_rebinds() {
        let rec = Recorder::new(Mode::Dag);
        let x = rec.input(1.0);
        let mut u = rec.variable(0.0);
        assert!(!u.is_active());
        u.assign(x * 2.0);
        assert_eq!(u.vertex(), Some(VertexId(1)));
        u.assign_const(4.0);
        assert!(!u.is_active());
        assert_eq!(u.value(), 4.0);
        rec.output(&x);
        assert_eq!(rec.finalize().unwrap().stats().num_elementals, 1);
    }

    #[test]
    fn stale_lvalue_copies_are_detected() {
        let rec = Recorder::new(Mode::Dcg);
        let x = rec.input(1.0);
        let mut u = rec.declare_lvalue(0.0);
        u.assign(x * 2.0);
        let old = u;
        u.assign(x * 3.0);
        assert!(matches!(
            old.try_binary(BinaryOp::Add, u),
            Err(TapeError::StaleLValue(VertexId(-2)))
        ));
        // the current handle is fine
        assert!((u + x).is_active());
    }

    #[test]
    fn outputs_cannot_be_overwritten() {
        let rec = Recorder::new(Mode::Dcg);
        let x = rec.input(1.0);
        let mut y = rec.declare_lvalue(0.0);
        y.assign(x * 2.0);
        rec.output(&y);
        assert!(matches!(
            y.try_assign(x),
            Err(TapeError::OutputOverwritten(_))
        ));
    }

    #[test]
    fn comparisons_use_primal_values() {
        let rec = Recorder::new(Mode::Dag);
        let x = rec.input(1.0);
        let y = x * 3.0;
        assert!(y > x);
        assert!(x < ActiveScalar::constant(2.0));
    }

    #[test]
    fn finalized_recorder_scalars_poison_nothing() {
        let rec = Recorder::new(Mode::Dag);
        let x = rec.input(1.0);
        rec.output(&x);
        rec.finalize().unwrap();
        assert!(matches!(x.try_sin(), Err(TapeError::NotRecording)));
    }
}
