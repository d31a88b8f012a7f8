//! END-OF-THE-LINE instances and their embedding as vertex-disjoint paths on
//! the (2n+1)-dimensional hypercube graph.
//!
//! Bit vectors are `Vec<bool>` indexed from 0; when a vertex is handled as an
//! integer, bit `i` of the integer is entry `i` of the vector.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EolError {
    #[error("input has {got} bits, circuit expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("gate {gate} refers to gate {operand}, which is not earlier in the list")]
    ForwardReference { gate: usize, operand: usize },
    #[error("input gate {gate} reads bit {bit} of a {n}-bit input")]
    InputOutOfRange { gate: usize, bit: usize, n: usize },
    #[error("circuit has {outputs} outputs but {inputs} inputs")]
    OutputCount { inputs: usize, outputs: usize },
    #[error("output refers to missing gate {0}")]
    BadOutput(usize),
    #[error("instance violates P(0) = 0 != S(0): {0}")]
    BadHome(String),
    #[error("bad edge list: {0}")]
    BadEdges(String),
    #[error("bit width {0} is not supported (1..=30)")]
    Width(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoolOp {
    And(usize, usize),
    Or(usize, usize),
    Not(usize),
    Const0,
    Const1,
    Input(usize),
}

/// A straight-line boolean circuit; operands always point to earlier gates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolCircuit {
    n_inputs: usize,
    gates: Vec<BoolOp>,
    outputs: Vec<usize>,
}

impl BoolCircuit {
    pub fn new(n_inputs: usize, gates: Vec<BoolOp>, outputs: Vec<usize>) -> Result<Self, EolError> {
        for (i, g) in gates.iter().enumerate() {
            let operands: &[usize] = match g {
                BoolOp::And(a, b) | BoolOp::Or(a, b) => &[*a, *b],
                BoolOp::Not(a) => std::slice::from_ref(a),
                BoolOp::Input(bit) => {
                    if *bit >= n_inputs {
                        return Err(EolError::InputOutOfRange { gate: i, bit: *bit, n: n_inputs });
                    }
                    &[]
                }
                BoolOp::Const0 | BoolOp::Const1 => &[],
            };
            if let Some(&op) = operands.iter().find(|&&op| op >= i) {
                return Err(EolError::ForwardReference { gate: i, operand: op });
            }
        }
        if outputs.len() != n_inputs {
            return Err(EolError::OutputCount { inputs: n_inputs, outputs: outputs.len() });
        }
        if let Some(&o) = outputs.iter().find(|&&o| o >= gates.len()) {
            return Err(EolError::BadOutput(o));
        }
        Ok(BoolCircuit { n_inputs, gates, outputs })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn gates(&self) -> &[BoolOp] {
        &self.gates
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    /// Value of every gate, in gate order.
    pub fn eval_all(&self, x: &[bool]) -> Result<Vec<bool>, EolError> {
        if x.len() != self.n_inputs {
            return Err(EolError::LengthMismatch { expected: self.n_inputs, got: x.len() });
        }
        let mut val = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let v = match *g {
                BoolOp::And(a, b) => val[a] && val[b],
                BoolOp::Or(a, b) => val[a] || val[b],
                BoolOp::Not(a) => !val[a],
                BoolOp::Const0 => false,
                BoolOp::Const1 => true,
                BoolOp::Input(i) => x[i],
            };
            val.push(v);
        }
        Ok(val)
    }

    pub fn eval(&self, x: &[bool]) -> Result<Vec<bool>, EolError> {
        let val = self.eval_all(x)?;
        Ok(self.outputs.iter().map(|&o| val[o]).collect())
    }

    fn eval_word(&self, x: u64) -> u64 {
        let bits = to_bits(x, self.n_inputs);
        // width was checked when the instance was built
        from_bits(&self.eval(&bits).expect("width checked"))
    }
}

pub fn to_bits(x: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| (x >> i) & 1 == 1).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().enumerate().fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Incremental construction of boolean circuits with arbitrarily many outputs.
#[derive(Debug, Clone, Default)]
pub struct LogicBuilder {
    n_inputs: usize,
    gates: Vec<BoolOp>,
    c0: Option<usize>,
    c1: Option<usize>,
}

impl LogicBuilder {
    pub fn new(n_inputs: usize) -> Self {
        let gates = (0..n_inputs).map(BoolOp::Input).collect();
        LogicBuilder { n_inputs, gates, c0: None, c1: None }
    }

    pub fn input(&self, i: usize) -> usize {
        assert!(i < self.n_inputs);
        i
    }

    fn push(&mut self, op: BoolOp) -> usize {
        self.gates.push(op);
        self.gates.len() - 1
    }

    pub fn zero(&mut self) -> usize {
        match self.c0 {
            Some(g) => g,
            None => {
                let g = self.push(BoolOp::Const0);
                self.c0 = Some(g);
                g
            }
        }
    }

    pub fn one(&mut self) -> usize {
        match self.c1 {
            Some(g) => g,
            None => {
                let g = self.push(BoolOp::Const1);
                self.c1 = Some(g);
                g
            }
        }
    }

    pub fn and(&mut self, a: usize, b: usize) -> usize {
        self.push(BoolOp::And(a, b))
    }

    pub fn or(&mut self, a: usize, b: usize) -> usize {
        self.push(BoolOp::Or(a, b))
    }

    pub fn not(&mut self, a: usize) -> usize {
        self.push(BoolOp::Not(a))
    }

    pub fn xor(&mut self, a: usize, b: usize) -> usize {
        let either = self.or(a, b);
        let both = self.and(a, b);
        let nb = self.not(both);
        self.and(either, nb)
    }

    pub fn and_all(&mut self, xs: &[usize]) -> usize {
        match xs.split_first() {
            None => self.one(),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &x| self.and(acc, x)),
        }
    }

    pub fn or_all(&mut self, xs: &[usize]) -> usize {
        match xs.split_first() {
            None => self.zero(),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &x| self.or(acc, x)),
        }
    }

    pub fn xor_word(&mut self, a: &[usize], b: &[usize]) -> Vec<usize> {
        a.iter().zip(b).map(|(&x, &y)| self.xor(x, y)).collect()
    }

    pub fn and_word(&mut self, bit: usize, w: &[usize]) -> Vec<usize> {
        w.iter().map(|&x| self.and(bit, x)).collect()
    }

    pub fn equal(&mut self, a: &[usize], b: &[usize]) -> usize {
        let diff = self.xor_word(a, b);
        let any = self.or_all(&diff);
        self.not(any)
    }

    pub fn is_zero(&mut self, a: &[usize]) -> usize {
        let any = self.or_all(a);
        self.not(any)
    }

    /// One-hot mask of the lowest set bit of `w` (all zero when `w` is zero).
    pub fn lowest(&mut self, w: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(w.len());
        let mut seen: Option<usize> = None;
        for &x in w {
            match seen {
                None => {
                    out.push(x);
                    seen = Some(x);
                }
                Some(s) => {
                    let ns = self.not(s);
                    out.push(self.and(x, ns));
                    seen = Some(self.or(s, x));
                }
            }
        }
        out
    }

    /// One-hot mask of the highest set bit of `w`.
    pub fn highest(&mut self, w: &[usize]) -> Vec<usize> {
        let rev: Vec<usize> = w.iter().rev().copied().collect();
        let mut m = self.lowest(&rev);
        m.reverse();
        m
    }

    /// Inline a copy of `c`, feeding its inputs from `inputs`; returns its outputs.
    pub fn embed(&mut self, c: &BoolCircuit, inputs: &[usize]) -> Vec<usize> {
        assert_eq!(inputs.len(), c.n_inputs);
        let mut map = Vec::with_capacity(c.gates.len());
        for g in &c.gates {
            let id = match *g {
                BoolOp::Input(i) => inputs[i],
                BoolOp::Const0 => self.zero(),
                BoolOp::Const1 => self.one(),
                BoolOp::Not(a) => self.not(map[a]),
                BoolOp::And(a, b) => self.and(map[a], map[b]),
                BoolOp::Or(a, b) => self.or(map[a], map[b]),
            };
            map.push(id);
        }
        c.outputs.iter().map(|&o| map[o]).collect()
    }

    pub fn finish(self, outputs: Vec<usize>) -> Result<BoolCircuit, EolError> {
        BoolCircuit::new(self.n_inputs, self.gates, outputs)
    }
}

/// Successor and predecessor circuits over n-bit vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndOfLineInstance {
    n: usize,
    succ: BoolCircuit,
    pred: BoolCircuit,
}

impl EndOfLineInstance {
    pub fn new(n: usize, succ: BoolCircuit, pred: BoolCircuit) -> Result<Self, EolError> {
        if n == 0 || n > 30 {
            return Err(EolError::Width(n));
        }
        for c in [&succ, &pred] {
            if c.n_inputs != n {
                return Err(EolError::LengthMismatch { expected: n, got: c.n_inputs });
            }
        }
        let inst = EndOfLineInstance { n, succ, pred };
        if inst.p(0) != 0 {
            return Err(EolError::BadHome(format!("P(0) = {}", inst.p(0))));
        }
        if inst.s(0) == 0 {
            return Err(EolError::BadHome("S(0) = 0".into()));
        }
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn succ(&self) -> &BoolCircuit {
        &self.succ
    }

    pub fn pred(&self) -> &BoolCircuit {
        &self.pred
    }

    pub fn s(&self, x: u64) -> u64 {
        self.succ.eval_word(x)
    }

    pub fn p(&self, x: u64) -> u64 {
        self.pred.eval_word(x)
    }

    /// `x -> S(x)` is an edge of the line graph.
    pub fn has_out(&self, x: u64) -> bool {
        let y = self.s(x);
        y != x && self.p(y) == x
    }

    /// `P(x) -> x` is an edge of the line graph.
    pub fn has_in(&self, x: u64) -> bool {
        let w = self.p(x);
        w != x && self.s(w) == x
    }

    pub fn is_solution(&self, x: u64) -> bool {
        self.p(self.s(x)) != x || (self.s(self.p(x)) != x && x != 0)
    }

    /// All solutions, by enumeration (small n only).
    pub fn solutions(&self) -> Vec<u64> {
        (0..1u64 << self.n).filter(|&x| self.is_solution(x)).collect()
    }
}

pub fn eval_circuit(c: &BoolCircuit, x: &[bool]) -> Result<Vec<bool>, EolError> {
    c.eval(x)
}

pub fn verify_eol_solution(inst: &EndOfLineInstance, x: &[bool]) -> Result<bool, EolError> {
    if x.len() != inst.n {
        return Err(EolError::LengthMismatch { expected: inst.n, got: x.len() });
    }
    Ok(inst.is_solution(from_bits(x)))
}

/// Truth-table circuit computing `f` on `n` bits: one OR of minterms per output bit.
pub fn truth_table_circuit(n: usize, f: impl Fn(u64) -> u64) -> BoolCircuit {
    let mut lb = LogicBuilder::new(n);
    let neg: Vec<usize> = (0..n).map(|i| lb.not(i)).collect();
    let mut minterm = Vec::with_capacity(1 << n);
    let table: Vec<u64> = (0..1u64 << n).map(&f).collect();
    for x in 0..1u64 << n {
        if table[x as usize] == 0 {
            minterm.push(None);
            continue;
        }
        let lits: Vec<usize> = (0..n).map(|i| if (x >> i) & 1 == 1 { i } else { neg[i] }).collect();
        minterm.push(Some(lb.and_all(&lits)));
    }
    let outputs = (0..n)
        .map(|bit| {
            let terms: Vec<usize> = (0..1usize << n)
                .filter(|&x| (table[x] >> bit) & 1 == 1)
                .map(|x| minterm[x].expect("nonzero row"))
                .collect();
            lb.or_all(&terms)
        })
        .collect();
    lb.finish(outputs).expect("truth table circuit is well formed")
}

/// Builds an instance whose line graph is exactly the given edges.
pub fn make_line_instance(n: usize, edges: &[(u64, u64)]) -> Result<EndOfLineInstance, EolError> {
    if n == 0 || n > 12 {
        return Err(EolError::Width(n));
    }
    let size = 1usize << n;
    let mut s: Vec<u64> = (0..size as u64).collect();
    let mut p = s.clone();
    for &(a, b) in edges {
        if a as usize >= size || b as usize >= size {
            return Err(EolError::BadEdges(format!("edge {a}->{b} leaves {n}-bit range")));
        }
        if a == b {
            return Err(EolError::BadEdges(format!("self loop at {a}")));
        }
        if s[a as usize] != a {
            return Err(EolError::BadEdges(format!("{a} has two successors")));
        }
        if p[b as usize] != b {
            return Err(EolError::BadEdges(format!("{b} has two predecessors")));
        }
        if b == 0 {
            return Err(EolError::BadEdges("0 must not have a predecessor".into()));
        }
        s[a as usize] = b;
        p[b as usize] = a;
    }
    if s[0] == 0 {
        return Err(EolError::BadHome("vertex 0 has no outgoing edge".into()));
    }
    let succ = truth_table_circuit(n, |x| s[x as usize]);
    let pred = truth_table_circuit(n, |x| p[x as usize]);
    EndOfLineInstance::new(n, succ, pred)
}

/// A vertex of the (2n+1)-cube: current vertex `u`, next vertex `v`, phase bit `b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EmbeddedState {
    pub u: Vec<bool>,
    pub v: Vec<bool>,
    pub b: bool,
}

impl EmbeddedState {
    pub fn from_bits(bits: &[bool]) -> Self {
        assert!(bits.len() % 2 == 1, "state has 2n+1 bits");
        let n = bits.len() / 2;
        EmbeddedState { u: bits[..n].to_vec(), v: bits[n..2 * n].to_vec(), b: bits[2 * n] }
    }

    pub fn to_bits(&self) -> Vec<bool> {
        let mut out = self.u.clone();
        out.extend_from_slice(&self.v);
        out.push(self.b);
        out
    }

    pub fn from_word(word: u64, n: usize) -> Self {
        Self::from_bits(&to_bits(word, 2 * n + 1))
    }

    pub fn to_word(&self) -> u64 {
        from_bits(&self.to_bits())
    }
}

/// Predecessor of a state; the home state continues a path from above the slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Predecessor {
    Above,
    State(EmbeddedState),
}

fn lowbit(x: u64) -> u64 {
    x & x.wrapping_neg()
}

fn highbit(x: u64) -> u64 {
    if x == 0 {
        0
    } else {
        1 << (63 - x.leading_zeros())
    }
}

/// `w` is reached from `from` by flipping a lowest-first prefix of the bits where
/// `from` and `to` differ (both endpoints included).
fn on_flip_path(from: u64, to: u64, w: u64) -> bool {
    let diff = from ^ to;
    let flipped = w ^ from;
    if flipped & !diff != 0 {
        return false;
    }
    let rest = diff & !flipped;
    rest == 0 || flipped & !(lowbit(rest) - 1) == 0
}

/// Word-level form of the embedding: state `(u, v, b)` packed as `u | v << n | b << 2n`.
#[derive(Debug, Clone, Copy)]
pub struct Embedding<'a> {
    inst: &'a EndOfLineInstance,
}

/// Word-level predecessor result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredWord {
    Above,
    State(u64),
}

impl<'a> Embedding<'a> {
    pub fn new(inst: &'a EndOfLineInstance) -> Self {
        Embedding { inst }
    }

    fn split(&self, s: u64) -> (u64, u64, bool) {
        let n = self.inst.n;
        let mask = (1u64 << n) - 1;
        (s & mask, (s >> n) & mask, (s >> (2 * n)) & 1 == 1)
    }

    fn join(&self, u: u64, v: u64, b: bool) -> u64 {
        let n = self.inst.n;
        u | (v << n) | ((b as u64) << (2 * n))
    }

    pub fn succ(&self, s: u64) -> u64 {
        let inst = self.inst;
        let (u, v, b) = self.split(s);
        if !b {
            let su = inst.s(u);
            if !inst.has_out(u) || !on_flip_path(u, su, v) {
                return s;
            }
            if v == su {
                self.join(u, v, true)
            } else {
                self.join(u, v ^ lowbit(v ^ su), false)
            }
        } else {
            let x = inst.p(v);
            if !inst.has_in(v) || !on_flip_path(x, v, u) {
                return s;
            }
            if u == v {
                self.join(u, v, false)
            } else {
                self.join(u ^ lowbit(u ^ v), v, true)
            }
        }
    }

    pub fn pred(&self, s: u64) -> PredWord {
        let inst = self.inst;
        let (u, v, b) = self.split(s);
        if !b {
            if v == u {
                if u == 0 {
                    PredWord::Above
                } else if inst.has_in(u) {
                    PredWord::State(self.join(u, v, true))
                } else {
                    PredWord::State(s)
                }
            } else {
                let su = inst.s(u);
                if !inst.has_out(u) || !on_flip_path(u, su, v) {
                    return PredWord::State(s);
                }
                PredWord::State(self.join(u, v ^ highbit(v ^ u), false))
            }
        } else {
            let x = inst.p(v);
            if !inst.has_in(v) || !on_flip_path(x, v, u) {
                return PredWord::State(s);
            }
            if u == x {
                PredWord::State(self.join(u, v, false))
            } else {
                PredWord::State(self.join(u ^ highbit(u ^ x), v, true))
            }
        }
    }

    /// u-part of a packed state.
    pub fn u_part(&self, s: u64) -> u64 {
        self.split(s).0
    }

    /// Every path of H as a list of packed states, in walking order, found from
    /// the path starts (cycles are not reported).
    pub fn paths(&self) -> Vec<Vec<u64>> {
        let n = self.inst.n;
        let mut out = Vec::new();
        for s in 0..1u64 << (2 * n + 1) {
            let starts = match self.pred(s) {
                PredWord::Above => true,
                PredWord::State(p) => p == s && self.succ(s) != s,
            };
            if !starts {
                continue;
            }
            let mut path = vec![s];
            let mut cur = s;
            loop {
                let nxt = self.succ(cur);
                if nxt == cur {
                    break;
                }
                path.push(nxt);
                cur = nxt;
            }
            out.push(path);
        }
        out
    }
}

pub fn h_successor(inst: &EndOfLineInstance, s: &EmbeddedState) -> EmbeddedState {
    assert_eq!(s.u.len(), inst.n);
    let w = Embedding::new(inst).succ(s.to_word());
    EmbeddedState::from_word(w, inst.n)
}

pub fn h_predecessor(inst: &EndOfLineInstance, s: &EmbeddedState) -> Predecessor {
    assert_eq!(s.u.len(), inst.n);
    match Embedding::new(inst).pred(s.to_word()) {
        PredWord::Above => Predecessor::Above,
        PredWord::State(w) => Predecessor::State(EmbeddedState::from_word(w, inst.n)),
    }
}

/// Boolean circuits for one step of the embedded walk, over 2n+2 input bits
/// (the last input is the slice bit and is ignored) with 2n+2 outputs. The last
/// output of the predecessor circuit is the "continues from above" bit; the last
/// output of the successor circuit is constant 0.
#[derive(Debug, Clone)]
pub struct EmbeddingCircuits {
    pub succ: BoolCircuit,
    pub pred: BoolCircuit,
}

pub fn embedding_circuits(inst: &EndOfLineInstance) -> EmbeddingCircuits {
    let n = inst.n;
    let width = 2 * n + 2;
    let mut lb = LogicBuilder::new(width);
    let u: Vec<usize> = (0..n).collect();
    let v: Vec<usize> = (n..2 * n).collect();
    let b = 2 * n;
    let nb = lb.not(b);

    let su = lb.embed(&inst.succ, &u);
    let pu = lb.embed(&inst.pred, &u);
    let pv = lb.embed(&inst.pred, &v);
    let psu = lb.embed(&inst.pred, &su);
    let spu = lb.embed(&inst.succ, &pu);
    let spv = lb.embed(&inst.succ, &pv);

    let has_out_u = {
        let moves = lb.equal(&su, &u);
        let moves = lb.not(moves);
        let back = lb.equal(&psu, &u);
        lb.and(moves, back)
    };
    let has_in = |lb: &mut LogicBuilder, x: &[usize], px: &[usize], spx: &[usize]| {
        let moves = lb.equal(px, x);
        let moves = lb.not(moves);
        let back = lb.equal(spx, x);
        lb.and(moves, back)
    };
    let has_in_u = has_in(&mut lb, &u, &pu, &spu);
    let has_in_v = has_in(&mut lb, &v, &pv, &spv);

    let on_flip = |lb: &mut LogicBuilder, from: &[usize], to: &[usize], w: &[usize]| {
        let diff = lb.xor_word(from, to);
        let flipped = lb.xor_word(w, from);
        let mut bad = Vec::new();
        for i in 0..from.len() {
            let nd = lb.not(diff[i]);
            bad.push(lb.and(flipped[i], nd));
        }
        let rest: Vec<usize> = (0..from.len())
            .map(|i| {
                let nf = lb.not(flipped[i]);
                lb.and(diff[i], nf)
            })
            .collect();
        let low = lb.lowest(&rest);
        // flipped bits must all sit strictly below the first unflipped difference
        let mut at_or_above: Option<usize> = None;
        for i in 0..from.len() {
            let cur = match at_or_above {
                None => low[i],
                Some(prev) => lb.or(prev, low[i]),
            };
            at_or_above = Some(cur);
            bad.push(lb.and(flipped[i], cur));
        }
        let any_bad = lb.or_all(&bad);
        lb.not(any_bad)
    };
    let valid0 = {
        let f = on_flip(&mut lb, &u, &su, &v);
        let t = lb.and(has_out_u, f);
        lb.and(nb, t)
    };
    let valid1 = {
        let f = on_flip(&mut lb, &pv, &v, &u);
        let t = lb.and(has_in_v, f);
        lb.and(b, t)
    };

    // successor
    let v_xor_su = lb.xor_word(&v, &su);
    let low_v = lb.lowest(&v_xor_su);
    let flip_v = lb.and_word(valid0, &low_v);
    let u_xor_v = lb.xor_word(&u, &v);
    let low_u = lb.lowest(&u_xor_v);
    let flip_u = lb.and_word(valid1, &low_u);
    let v_is_su = lb.equal(&v, &su);
    let u_is_v = lb.equal(&u, &v);
    let fb0 = lb.and(valid0, v_is_su);
    let fb1 = lb.and(valid1, u_is_v);
    let flip_b = lb.or(fb0, fb1);
    let mut s_out = lb.xor_word(&u, &flip_u);
    s_out.extend(lb.xor_word(&v, &flip_v));
    s_out.push(lb.xor(b, flip_b));
    s_out.push(lb.zero());

    // predecessor
    let v_xor_u = u_xor_v.clone();
    let high_v = lb.highest(&v_xor_u);
    let pflip_v = lb.and_word(valid0, &high_v);
    let u_xor_pv = lb.xor_word(&u, &pv);
    let high_u = lb.highest(&u_xor_pv);
    let pflip_u = lb.and_word(valid1, &high_u);
    let u_zero = lb.is_zero(&u);
    let at_vertex = lb.and(nb, u_is_v);
    let above = lb.and(at_vertex, u_zero);
    let pb0 = {
        let nz = lb.not(u_zero);
        let t = lb.and(at_vertex, nz);
        lb.and(t, has_in_u)
    };
    let u_is_pv = lb.equal(&u, &pv);
    let pb1 = lb.and(valid1, u_is_pv);
    let pflip_b = lb.or(pb0, pb1);
    let mut p_out = lb.xor_word(&u, &pflip_u);
    p_out.extend(lb.xor_word(&v, &pflip_v));
    p_out.push(lb.xor(b, pflip_b));
    p_out.push(above);

    // both circuits share the gate list; unused gates are harmless
    let pred = lb.clone().finish(p_out).expect("predecessor circuit well formed");
    let succ = lb.finish(s_out).expect("successor circuit well formed");
    EmbeddingCircuits { succ, pred }
}

pub fn serialize_instance(inst: &EndOfLineInstance) -> String {
    let mut out = format!("EOL n={}\n", inst.n);
    for (name, c) in [("S", &inst.succ), ("P", &inst.pred)] {
        let _ = writeln!(out, "{name}:");
        for (i, g) in c.gates.iter().enumerate() {
            let rhs = match *g {
                BoolOp::And(a, b) => format!("AND g{a} g{b}"),
                BoolOp::Or(a, b) => format!("OR g{a} g{b}"),
                BoolOp::Not(a) => format!("NOT g{a}"),
                BoolOp::Const0 => "C0".to_string(),
                BoolOp::Const1 => "C1".to_string(),
                BoolOp::Input(k) => format!("IN {k}"),
            };
            let _ = writeln!(out, "g{i} = {rhs}");
        }
        let outs: Vec<String> = c.outputs.iter().map(|o| format!("g{o}")).collect();
        let _ = writeln!(out, "OUT {}", outs.join(" "));
    }
    out
}

fn parse_gate_ref(tok: &str, line: usize) -> Result<usize, EolError> {
    tok.strip_prefix('g')
        .and_then(|d| d.parse().ok())
        .ok_or_else(|| EolError::Parse { line, msg: format!("expected gate reference, got `{tok}`") })
}

pub fn parse_instance(text: &str) -> Result<EndOfLineInstance, EolError> {
    let mut n: Option<usize> = None;
    let mut sections: Vec<(String, Vec<BoolOp>, Option<Vec<usize>>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let perr = |msg: String| EolError::Parse { line, msg };
        if n.is_none() {
            let w = l
                .strip_prefix("EOL n=")
                .and_then(|d| d.trim().parse().ok())
                .ok_or_else(|| perr("expected header `EOL n=<n>`".into()))?;
            n = Some(w);
            continue;
        }
        if l == "S:" || l == "P:" {
            sections.push((l[..1].to_string(), Vec::new(), None));
            continue;
        }
        let Some((_, gates, outs)) = sections.last_mut() else {
            return Err(perr("gate outside of an S:/P: section".into()));
        };
        if outs.is_some() {
            return Err(perr("content after OUT line".into()));
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks[0] == "OUT" {
            let o = toks[1..].iter().map(|t| parse_gate_ref(t, line)).collect::<Result<_, _>>()?;
            *outs = Some(o);
            continue;
        }
        if toks.len() < 3 || toks[1] != "=" {
            return Err(perr(format!("malformed gate line `{l}`")));
        }
        let id = parse_gate_ref(toks[0], line)?;
        if id != gates.len() {
            return Err(perr(format!("gate g{id} out of order (expected g{})", gates.len())));
        }
        let arg = |k: usize| -> Result<&str, EolError> {
            toks.get(k).copied().ok_or_else(|| EolError::Parse { line, msg: "missing operand".into() })
        };
        let op = match toks[2] {
            "AND" => BoolOp::And(parse_gate_ref(arg(3)?, line)?, parse_gate_ref(arg(4)?, line)?),
            "OR" => BoolOp::Or(parse_gate_ref(arg(3)?, line)?, parse_gate_ref(arg(4)?, line)?),
            "NOT" => BoolOp::Not(parse_gate_ref(arg(3)?, line)?),
            "C0" => BoolOp::Const0,
            "C1" => BoolOp::Const1,
            "IN" => BoolOp::Input(arg(3)?.parse().map_err(|_| perr("bad input index".into()))?),
            other => return Err(perr(format!("unknown gate `{other}`"))),
        };
        gates.push(op);
    }
    let n = n.ok_or(EolError::Parse { line: 0, msg: "empty input".into() })?;
    let mut succ = None;
    let mut pred = None;
    for (name, gates, outs) in sections {
        let outs = outs.ok_or(EolError::Parse { line: 0, msg: format!("section {name} has no OUT line") })?;
        let c = BoolCircuit::new(n, gates, outs)?;
        if name == "S" {
            succ = Some(c);
        } else {
            pred = Some(c);
        }
    }
    let succ = succ.ok_or(EolError::Parse { line: 0, msg: "missing S: section".into() })?;
    let pred = pred.ok_or(EolError::Parse { line: 0, msg: "missing P: section".into() })?;
    EndOfLineInstance::new(n, succ, pred)
}
