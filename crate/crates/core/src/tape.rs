//! Gradient tape: the structure stream `s`, the partials stream `d`, and the
//! graph statistics gathered while recording.
//!
//! Layout of `s`: the input vertex ids first, then for every elemental its
//! predecessor ids in operand order, the predecessor count, and the result
//! id. `d` holds one local partial derivative per predecessor entry of `s`,
//! in the same order. Both streams are meant to be read backwards.
//!
//! Two recording modes exist. In [`Mode::Dag`] every vertex is a
//! single-assignment index `0, 1, 2, …` in recording order. In [`Mode::Dcg`]
//! program variables (L-values) get dedicated negative ids `-1, -2, …` that
//! are reused by every assignment to that variable, and only expression
//! temporaries (the remainder) get dense non-negative ids.

use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::store::{BlockStore, ReverseEntries, StoreConfig, StoreError, StoreStats};

/// Signed vertex index: negative for L-values, non-negative otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub i64);

impl VertexId {
    #[inline]
    pub fn is_lvalue(self) -> bool {
        self.0 < 0
    }

    /// Zero-based position of an L-value in registration order (`-1 ↦ 0`).
    #[inline]
    pub fn lvalue_index(self) -> Option<usize> {
        (self.0 < 0).then(|| (-self.0 - 1) as usize)
    }

    #[inline]
    pub fn raw(self) -> i64 {
        self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Single-assignment directed acyclic graph.
    Dag,
    /// Directed cyclic graph with dedicated L-value vertices.
    Dcg,
}

impl Mode {
    fn code(self) -> u8 {
        match self {
            Mode::Dag => 0,
            Mode::Dcg => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Mode::Dag),
            1 => Some(Mode::Dcg),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dag => "dag",
            Mode::Dcg => "dcg",
        })
    }
}

/// Where the result of an elemental lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResultKind {
    /// Expression temporary; the only kind allowed on DAG tapes.
    Remainder,
    /// Overwrite an existing L-value.
    LValue(VertexId),
    /// Allocate the next L-value id and write to it.
    FreshLValue,
}

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("inputs must be registered before the first elemental")]
    InputAfterElemental,
    #[error("vertex {0} was not produced by this tape")]
    UnknownVertex(VertexId),
    #[error("partial derivative w.r.t. vertex {pred} is not finite ({partial})")]
    NonFinitePartial { pred: VertexId, partial: f64 },
    #[error("L-values cannot be recorded on a DAG tape")]
    LValueOnDag,
    #[error("vertex {0} is not an L-value")]
    NotAnLValue(VertexId),
    #[error("vertex {0} is already registered as an output")]
    DuplicateOutput(VertexId),
    #[error("tape has no inputs")]
    NoInputs,
    #[error("tape has no outputs")]
    NoOutputs,
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("operands belong to different tapes")]
    MixedTapes,
    #[error("L-value {0} was overwritten after this copy of it was taken")]
    StaleLValue(VertexId),
    #[error("output L-value {0} was overwritten after registration")]
    OutputOverwritten(VertexId),
    #[error("tape is no longer recording")]
    NotRecording,
    #[error("malformed tape: {0}")]
    Malformed(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("tape file i/o: {0}")]
    Io(#[from] io::Error),
}

/// One elemental as stored on the tape: predecessors with local partials, in
/// operand order, and the result vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementalRecord {
    pub preds: Vec<(VertexId, f64)>,
    pub result: VertexId,
}

/// Graph statistics of a finalized tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapeStats {
    pub mode: Mode,
    pub num_vertices: usize,
    pub num_inputs: usize,
    pub num_outputs: usize,
    pub num_edges: usize,
    pub num_elementals: usize,
    /// Longest edge `j - i` (DAG mode).
    pub beta: usize,
    /// Longest remainder-to-remainder edge (DCG mode).
    pub beta_r: usize,
    /// Longest distance, counted in remainder ids, between a remainder vertex
    /// and an elemental writing an L-value that consumes it (DCG mode).
    pub copy_reach: usize,
    pub p_l: usize,
    pub num_remainder: usize,
    pub s_len: usize,
    pub d_len: usize,
}

/// A tape open for recording.
#[derive(Debug)]
pub struct TapeBuilder {
    mode: Mode,
    s: BlockStore<i64>,
    d: BlockStore<f64>,
    inputs: Vec<VertexId>,
    outputs: Vec<VertexId>,
    num_elementals: usize,
    num_edges: usize,
    beta: usize,
    beta_r: usize,
    copy_reach: usize,
    p_l: usize,
    // next SSA id (DAG) or next remainder id (DCG)
    next_id: i64,
    merged: Vec<(VertexId, f64)>,
}

impl TapeBuilder {
    pub fn new(mode: Mode) -> Self {
        Self::with_store(mode, StoreConfig::default()).expect("default store config is valid")
    }

    pub fn with_store(mode: Mode, config: StoreConfig) -> Result<Self, TapeError> {
        Ok(Self {
            mode,
            s: BlockStore::new("s", config.clone())?,
            d: BlockStore::new("d", config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            num_elementals: 0,
            num_edges: 0,
            beta: 0,
            beta_r: 0,
            copy_reach: 0,
            p_l: 0,
            next_id: 0,
            merged: Vec::with_capacity(4),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn num_elementals(&self) -> usize {
        self.num_elementals
    }

    pub fn p_l(&self) -> usize {
        self.p_l
    }

    pub fn s_len(&self) -> usize {
        self.s.len()
    }

    pub fn d_len(&self) -> usize {
        self.d.len()
    }

    pub fn outputs(&self) -> &[VertexId] {
        &self.outputs
    }

    pub fn register_input(&mut self) -> Result<VertexId, TapeError> {
        if self.num_elementals > 0 {
            return Err(TapeError::InputAfterElemental);
        }
        let id = match self.mode {
            Mode::Dag => {
                self.next_id += 1;
                VertexId(self.next_id - 1)
            }
            Mode::Dcg => self.allocate_lvalue(),
        };
        self.s.push(id.0)?;
        self.inputs.push(id);
        Ok(id)
    }

    /// Reserve the next L-value id without recording anything.
    pub fn declare_lvalue(&mut self) -> Result<VertexId, TapeError> {
        match self.mode {
            Mode::Dag => Err(TapeError::LValueOnDag),
            Mode::Dcg => Ok(self.allocate_lvalue()),
        }
    }

    fn allocate_lvalue(&mut self) -> VertexId {
        self.p_l += 1;
        VertexId(-(self.p_l as i64))
    }

    /// Whether `v` has been produced by this tape so far.
    pub fn contains(&self, v: VertexId) -> bool {
        if v.0 < 0 {
            self.mode == Mode::Dcg && (-v.0) as usize <= self.p_l
        } else {
            v.0 < self.next_id
        }
    }

    pub fn record_elemental(
        &mut self,
        preds: &[(VertexId, f64)],
        kind: ResultKind,
    ) -> Result<VertexId, TapeError> {
        self.merged.clear();
        for &(v, partial) in preds {
            if !self.contains(v) {
                return Err(TapeError::UnknownVertex(v));
            }
            if !partial.is_finite() {
                return Err(TapeError::NonFinitePartial { pred: v, partial });
            }
            match self.merged.iter_mut().find(|(u, _)| *u == v) {
                Some((_, acc)) => *acc += partial,
                None => self.merged.push((v, partial)),
            }
        }
        if let Some(&(pred, partial)) = self.merged.iter().find(|(_, p)| !p.is_finite()) {
            return Err(TapeError::NonFinitePartial { pred, partial });
        }

        let result = match (self.mode, kind) {
            (Mode::Dag, ResultKind::Remainder) | (Mode::Dcg, ResultKind::Remainder) => {
                VertexId(self.next_id)
            }
            (Mode::Dag, _) => return Err(TapeError::LValueOnDag),
            (Mode::Dcg, ResultKind::LValue(v)) => {
                if !v.is_lvalue() {
                    return Err(TapeError::NotAnLValue(v));
                }
                if !self.contains(v) {
                    return Err(TapeError::UnknownVertex(v));
                }
                v
            }
            (Mode::Dcg, ResultKind::FreshLValue) => self.allocate_lvalue(),
        };

        match self.mode {
            Mode::Dag => {
                for &(v, _) in &self.merged {
                    self.beta = self.beta.max((result.0 - v.0) as usize);
                }
            }
            Mode::Dcg => {
                for &(v, _) in self.merged.iter().filter(|(v, _)| !v.is_lvalue()) {
                    if result.is_lvalue() {
                        self.copy_reach = self.copy_reach.max((self.next_id - v.0) as usize);
                    } else {
                        self.beta_r = self.beta_r.max((result.0 - v.0) as usize);
                    }
                }
            }
        }

        for &(v, _) in &self.merged {
            self.s.push(v.0)?;
        }
        self.s.push(self.merged.len() as i64)?;
        self.s.push(result.0)?;
        for &(_, partial) in &self.merged {
            self.d.push(partial)?;
        }
        if !result.is_lvalue() {
            self.next_id += 1;
        }
        self.num_elementals += 1;
        self.num_edges += self.merged.len();
        Ok(result)
    }

    pub fn register_output(&mut self, v: VertexId) -> Result<(), TapeError> {
        if !self.contains(v) {
            return Err(TapeError::UnknownVertex(v));
        }
        if self.mode == Mode::Dcg && !v.is_lvalue() {
            return Err(TapeError::NotAnLValue(v));
        }
        if self.outputs.contains(&v) {
            return Err(TapeError::DuplicateOutput(v));
        }
        self.outputs.push(v);
        Ok(())
    }

    pub fn finalize(mut self) -> Result<Tape, TapeError> {
        if self.inputs.is_empty() {
            return Err(TapeError::NoInputs);
        }
        if self.outputs.is_empty() {
            return Err(TapeError::NoOutputs);
        }
        self.s.seal()?;
        self.d.seal()?;
        let (num_vertices, num_remainder) = match self.mode {
            Mode::Dag => (self.next_id as usize, self.next_id as usize),
            Mode::Dcg => (self.p_l + self.next_id as usize, self.next_id as usize),
        };
        let stats = TapeStats {
            mode: self.mode,
            num_vertices,
            num_inputs: self.inputs.len(),
            num_outputs: self.outputs.len(),
            num_edges: self.num_edges,
            num_elementals: self.num_elementals,
            beta: self.beta,
            beta_r: self.beta_r,
            copy_reach: self.copy_reach,
            p_l: self.p_l,
            num_remainder,
            s_len: self.s.len(),
            d_len: self.d.len(),
        };
        Ok(Tape {
            stats,
            s: self.s,
            d: self.d,
            inputs: self.inputs,
            outputs: self.outputs,
        })
    }
}

/// A finalized, read-only tape. Safe to share between threads; each sweep
/// reads it through its own [`TapeReader`].
#[derive(Debug)]
pub struct Tape {
    stats: TapeStats,
    s: BlockStore<i64>,
    d: BlockStore<f64>,
    inputs: Vec<VertexId>,
    outputs: Vec<VertexId>,
}

impl Tape {
    pub fn stats(&self) -> &TapeStats {
        &self.stats
    }

    pub fn mode(&self) -> Mode {
        self.stats.mode
    }

    pub fn inputs(&self) -> &[VertexId] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[VertexId] {
        &self.outputs
    }

    /// Counters of the `s` and `d` stores.
    pub fn store_stats(&self) -> (StoreStats, StoreStats) {
        (self.s.stats(), self.d.stats())
    }

    pub fn dump(&self) -> Result<(Vec<i64>, Vec<f64>), TapeError> {
        Ok((self.s.to_vec()?, self.d.to_vec()?))
    }

    /// Reverse reader over the elementals, last recorded first.
    pub fn reader(&self) -> Result<TapeReader<'_>, TapeError> {
        Ok(TapeReader {
            s: self.s.reverse_iter()?,
            d: self.d.reverse_iter()?,
            remaining: self.stats.num_elementals,
        })
    }

    /// All elementals in recording order, obtained by parsing `s` backwards.
    pub fn elementals(&self) -> Result<Vec<ElementalRecord>, TapeError> {
        let mut reader = self.reader()?;
        let mut out = Vec::with_capacity(self.stats.num_elementals);
        let mut preds = Vec::new();
        while let Some(result) = reader.next_elemental(&mut preds)? {
            let mut preds = preds.clone();
            preds.reverse();
            out.push(ElementalRecord { preds, result });
        }
        out.reverse();
        Ok(out)
    }

    /// Vertices in the order a reverse sweep touches them: `s` read
    /// backwards with counts skipped and consecutive repeats collapsed.
    pub fn visit_sequence(&self) -> Result<Vec<VertexId>, TapeError> {
        let mut seq: Vec<VertexId> = Vec::new();
        let mut visit = |v: VertexId| {
            if seq.last() != Some(&v) {
                seq.push(v);
            }
        };
        let mut reader = self.reader()?;
        let mut preds = Vec::new();
        while let Some(result) = reader.next_elemental(&mut preds)? {
            visit(result);
            for &(v, _) in &preds {
                visit(v);
            }
        }
        for &v in self.inputs.iter().rev() {
            visit(v);
        }
        Ok(seq)
    }

    pub const FILE_MAGIC: [u8; 4] = *b"ADTP";
    pub const FILE_VERSION: u32 = 1;

    /// Serialize to the little-endian tape file format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), TapeError> {
        w.write_all(&Self::FILE_MAGIC)?;
        w.write_all(&Self::FILE_VERSION.to_le_bytes())?;
        w.write_all(&[self.stats.mode.code()])?;
        for v in [
            self.stats.num_inputs,
            self.stats.num_outputs,
            self.stats.num_elementals,
            self.stats.s_len,
            self.stats.d_len,
        ] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in &self.outputs {
            w.write_all(&v.0.to_le_bytes())?;
        }
        let (s, d) = self.dump()?;
        for e in s {
            w.write_all(&e.to_le_bytes())?;
        }
        for e in d {
            w.write_all(&e.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load a tape file, re-validating the structure and recomputing the
    /// statistics. `p_l` becomes the largest L-value id referenced, so
    /// L-values declared but never referenced are not recovered.
    pub fn read_from<R: Read>(mut r: R, config: StoreConfig) -> Result<Tape, TapeError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != Self::FILE_MAGIC {
            return Err(TapeError::Malformed("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != Self::FILE_VERSION {
            return Err(TapeError::Malformed(format!(
                "unsupported version {version}"
            )));
        }
        let mut mode = [0u8; 1];
        r.read_exact(&mut mode)?;
        let mode = Mode::from_code(mode[0])
            .ok_or_else(|| TapeError::Malformed(format!("unknown mode {}", mode[0])))?;
        let n = read_u64(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let q = read_u64(&mut r)? as usize;
        let s_len = read_u64(&mut r)? as usize;
        let d_len = read_u64(&mut r)? as usize;
        let outputs = (0..m)
            .map(|_| read_u64(&mut r).map(|v| VertexId(v as i64)))
            .collect::<Result<Vec<_>, _>>()?;
        let s = (0..s_len)
            .map(|_| read_u64(&mut r).map(|v| v as i64))
            .collect::<Result<Vec<_>, _>>()?;
        let d = (0..d_len)
            .map(|_| read_u64(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>, _>>()?;
        let (inputs, elementals) = decode_streams(&s, &d, n, q)?;
        rebuild(mode, &inputs, &elementals, &outputs, config)
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Forward serialization of inputs and elementals into `(s, d)`.
pub fn encode_streams(inputs: &[VertexId], elementals: &[ElementalRecord]) -> (Vec<i64>, Vec<f64>) {
    let mut s: Vec<i64> = inputs.iter().map(|v| v.0).collect();
    let mut d = Vec::new();
    for e in elementals {
        s.extend(e.preds.iter().map(|(v, _)| v.0));
        s.push(e.preds.len() as i64);
        s.push(e.result.0);
        d.extend(e.preds.iter().map(|(_, p)| *p));
    }
    (s, d)
}

/// Parse `(s, d)` backwards into `q` elementals followed by `n` inputs.
pub fn decode_streams(
    s: &[i64],
    d: &[f64],
    n: usize,
    q: usize,
) -> Result<(Vec<VertexId>, Vec<ElementalRecord>), TapeError> {
    let truncated = || TapeError::Malformed("structure stream ends early".into());
    let mut si = s.len();
    let mut di = d.len();
    let mut elementals = Vec::with_capacity(q);
    for _ in 0..q {
        if si < 2 {
            return Err(truncated());
        }
        let result = VertexId(s[si - 1]);
        let count = s[si - 2];
        si -= 2;
        let count = usize::try_from(count)
            .map_err(|_| TapeError::Malformed(format!("negative predecessor count {count}")))?;
        if si < count || di < count {
            return Err(truncated());
        }
        let preds = s[si - count..si]
            .iter()
            .zip(&d[di - count..di])
            .map(|(&v, &p)| (VertexId(v), p))
            .collect();
        si -= count;
        di -= count;
        elementals.push(ElementalRecord { preds, result });
    }
    if si != n || di != 0 {
        return Err(TapeError::Malformed(format!(
            "{si} structure and {di} partial entries left after {q} elementals, expected {n} inputs"
        )));
    }
    elementals.reverse();
    Ok((s[..n].iter().map(|&v| VertexId(v)).collect(), elementals))
}

/// Re-record a decoded tape, checking that every id matches what recording
/// would have assigned.
pub fn rebuild(
    mode: Mode,
    inputs: &[VertexId],
    elementals: &[ElementalRecord],
    outputs: &[VertexId],
    config: StoreConfig,
) -> Result<Tape, TapeError> {
    let mut b = TapeBuilder::with_store(mode, config)?;
    for &expected in inputs {
        let id = b.register_input()?;
        if id != expected {
            return Err(TapeError::Malformed(format!(
                "input {expected} where {id} expected"
            )));
        }
    }
    if mode == Mode::Dcg {
        let deepest = elementals
            .iter()
            .flat_map(|e| e.preds.iter().map(|(v, _)| *v).chain([e.result]))
            .chain(outputs.iter().copied())
            .filter_map(VertexId::lvalue_index)
            .max();
        if let Some(deepest) = deepest {
            while b.p_l() <= deepest {
                b.declare_lvalue()?;
            }
        }
    }
    for e in elementals {
        let kind = if e.result.is_lvalue() {
            ResultKind::LValue(e.result)
        } else {
            ResultKind::Remainder
        };
        let id = b.record_elemental(&e.preds, kind)?;
        if id != e.result {
            return Err(TapeError::Malformed(format!(
                "result {} where {id} expected",
                e.result
            )));
        }
        if e.preds.len() != b.merged.len() {
            return Err(TapeError::Malformed(format!(
                "duplicate operands in elemental {}",
                e.result
            )));
        }
    }
    for &v in outputs {
        b.register_output(v)?;
    }
    b.finalize()
}

/// Reverse parser over a finalized tape's streams.
pub struct TapeReader<'a> {
    s: ReverseEntries<'a, i64>,
    d: ReverseEntries<'a, f64>,
    remaining: usize,
}

impl TapeReader<'_> {
    /// Read the next elemental backwards. `preds` receives the predecessors in
    /// reverse operand order, paired with their partials.
    #[inline]
    pub fn next_elemental(
        &mut self,
        preds: &mut Vec<(VertexId, f64)>,
    ) -> Result<Option<VertexId>, TapeError> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.remaining -= 1;
        let truncated = || TapeError::Malformed("stream ends inside an elemental".into());
        let result = self.s.next_entry()?.ok_or_else(truncated)?;
        let count = self.s.next_entry()?.ok_or_else(truncated)?;
        preds.clear();
        for _ in 0..count {
            let v = self.s.next_entry()?.ok_or_else(truncated)?;
            let p = self.d.next_entry()?.ok_or_else(truncated)?;
            preds.push((VertexId(v), p));
        }
        Ok(Some(VertexId(result)))
    }
}
