//! Generalized circuits: [0,1]-valued nodes joined by arithmetic and brittle
//! logic gates, possibly with cycles.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GcError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node id {0} does not exist")]
    BadNodeId(NodeId),
    #[error("node `{0}` already exists")]
    DuplicateName(String),
    #[error("node `{0}` is already the output of another gate")]
    DuplicateOutput(String),
    #[error("{kind} gate has the wrong operands")]
    Arity { kind: GateType },
    #[error("{kind} gate constant {zeta} is out of range")]
    ZetaRange { kind: GateType, zeta: Rational64 },
    #[error("node `{0}` has no value")]
    Missing(String),
    #[error("gates still form a cycle after pinning (through node `{0}`)")]
    Cycle(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateType {
    Const,
    Scale,
    Copy,
    Add,
    Sub,
    Less,
    Or,
    And,
    Not,
}

impl GateType {
    pub const ALL: [GateType; 9] = [
        GateType::Const,
        GateType::Scale,
        GateType::Copy,
        GateType::Add,
        GateType::Sub,
        GateType::Less,
        GateType::Or,
        GateType::And,
        GateType::Not,
    ];

    pub fn token(self) -> &'static str {
        match self {
            GateType::Const => "Gz",
            GateType::Scale => "Gxz",
            GateType::Copy => "G=",
            GateType::Add => "G+",
            GateType::Sub => "G-",
            GateType::Less => "G<",
            GateType::Or => "Gor",
            GateType::And => "Gand",
            GateType::Not => "Gnot",
        }
    }

    fn from_token(t: &str) -> Option<Self> {
        GateType::ALL.into_iter().find(|g| g.token() == t)
    }

    pub fn has_zeta(self) -> bool {
        matches!(self, GateType::Const | GateType::Scale)
    }

    pub fn arity(self) -> usize {
        match self {
            GateType::Const => 0,
            GateType::Scale | GateType::Copy | GateType::Not => 1,
            _ => 2,
        }
    }

    pub fn is_logical(self) -> bool {
        matches!(self, GateType::Less | GateType::Or | GateType::And | GateType::Not)
    }
}

impl fmt::Display for GateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub kind: GateType,
    pub zeta: Option<Rational64>,
    pub in1: Option<NodeId>,
    pub in2: Option<NodeId>,
    pub out: NodeId,
}

impl Gate {
    pub fn constant(zeta: Rational64, out: NodeId) -> Self {
        Gate { kind: GateType::Const, zeta: Some(zeta), in1: None, in2: None, out }
    }

    pub fn scale(zeta: Rational64, a: NodeId, out: NodeId) -> Self {
        Gate { kind: GateType::Scale, zeta: Some(zeta), in1: Some(a), in2: None, out }
    }

    pub fn unary(kind: GateType, a: NodeId, out: NodeId) -> Self {
        Gate { kind, zeta: None, in1: Some(a), in2: None, out }
    }

    pub fn binary(kind: GateType, a: NodeId, b: NodeId, out: NodeId) -> Self {
        Gate { kind, zeta: None, in1: Some(a), in2: Some(b), out }
    }

    pub fn inputs(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.in1.into_iter().chain(self.in2)
    }

    fn zeta_f64(&self) -> f64 {
        self.zeta.and_then(|z| z.to_f64()).unwrap_or(0.0)
    }
}

/// Largest constant accepted by a scaling gate.
pub const MAX_SCALE: i64 = 1 << 20;

#[derive(Debug, Clone, Default)]
pub struct GeneralizedCircuit {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    gates: Vec<Gate>,
    producer: Vec<Option<usize>>,
}

impl PartialEq for GeneralizedCircuit {
    /// Same node names and the same gate list, gate for gate.
    fn eq(&self, other: &Self) -> bool {
        self.gates.len() == other.gates.len()
            && self.names.len() == other.names.len()
            && self.gates.iter().zip(&other.gates).all(|(a, b)| {
                let name = |c: &Self, n: Option<NodeId>| n.map(|i| c.names[i].clone());
                a.kind == b.kind
                    && a.zeta == b.zeta
                    && name(self, a.in1) == name(other, b.in1)
                    && name(self, a.in2) == name(other, b.in2)
                    && self.names[a.out] == other.names[b.out]
            })
    }
}

impl GeneralizedCircuit {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> Result<NodeId, GcError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(GcError::DuplicateName(name));
        }
        let id = self.names.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.producer.push(None);
        Ok(id)
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id]
    }

    pub fn n_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Index of the gate whose output is `id`.
    pub fn producer(&self, id: NodeId) -> Option<usize> {
        self.producer[id]
    }

    pub fn add_gate(&mut self, gate: Gate) -> Result<usize, GcError> {
        let k = gate.kind;
        let ins = gate.inputs().count();
        let shape_ok = ins == k.arity()
            && gate.in1.is_some() == (k.arity() >= 1)
            && gate.zeta.is_some() == k.has_zeta();
        if !shape_ok {
            return Err(GcError::Arity { kind: k });
        }
        if let Some(z) = gate.zeta {
            let ok = match k {
                GateType::Const => z >= Rational64::zero() && z <= Rational64::from_integer(1),
                _ => z > Rational64::zero() && z <= Rational64::from_integer(MAX_SCALE),
            };
            if !ok {
                return Err(GcError::ZetaRange { kind: k, zeta: z });
            }
        }
        for n in gate.inputs().chain(std::iter::once(gate.out)) {
            if n >= self.names.len() {
                return Err(GcError::BadNodeId(n));
            }
        }
        if self.producer[gate.out].is_some() {
            return Err(GcError::DuplicateOutput(self.names[gate.out].clone()));
        }
        let idx = self.gates.len();
        self.producer[gate.out] = Some(idx);
        self.gates.push(gate);
        Ok(idx)
    }

    /// Number of gate input slots reading each node.
    pub fn fanouts(&self) -> Vec<usize> {
        let mut f = vec![0; self.names.len()];
        for g in &self.gates {
            for i in g.inputs() {
                f[i] += 1;
            }
        }
        f
    }

    pub fn max_fanout(&self) -> usize {
        self.fanouts().into_iter().max().unwrap_or(0)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut used = vec![false; self.names.len()];
        for g in &self.gates {
            for n in g.inputs().chain(std::iter::once(g.out)) {
                used[n] = true;
            }
        }
        for (i, name) in self.names.iter().enumerate() {
            if !used[i] {
                let _ = writeln!(out, "NODE {name}");
            }
        }
        for g in &self.gates {
            let z = g.zeta.map(|z| format!("{}/{}", z.numer(), z.denom())).unwrap_or_else(|| "_".into());
            let n = |x: Option<NodeId>| x.map(|i| self.names[i].as_str()).unwrap_or("_");
            let _ = writeln!(out, "{} {} {} {} {}", g.kind, z, n(g.in1), n(g.in2), self.names[g.out]);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, GcError> {
        let mut c = GeneralizedCircuit::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let perr = |msg: String| GcError::Parse { line, msg };
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks[0] == "NODE" {
                if toks.len() != 2 {
                    return Err(perr("expected `NODE <name>`".into()));
                }
                c.add_node(toks[1]).map_err(|e| perr(e.to_string()))?;
                continue;
            }
            if toks.len() != 5 {
                return Err(perr(format!("expected 5 fields, found {}", toks.len())));
            }
            let kind = GateType::from_token(toks[0]).ok_or_else(|| perr(format!("unknown gate `{}`", toks[0])))?;
            let zeta = match toks[1] {
                "_" => None,
                t => Some(parse_rational(t).ok_or_else(|| perr(format!("bad rational `{t}`")))?),
            };
            let mut node = |t: &str| -> Option<NodeId> {
                if t == "_" {
                    return None;
                }
                Some(match c.node_id(t) {
                    Some(i) => i,
                    None => c.add_node(t).expect("name is fresh"),
                })
            };
            let in1 = node(toks[2]);
            let in2 = node(toks[3]);
            let out = node(toks[4]).ok_or_else(|| perr("gate has no output".into()))?;
            c.add_gate(Gate { kind, zeta, in1, in2, out }).map_err(|e| perr(e.to_string()))?;
        }
        Ok(c)
    }
}

pub fn parse_rational(t: &str) -> Option<Rational64> {
    match t.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.parse().ok()?;
            let q: i64 = q.parse().ok()?;
            (q != 0).then(|| Rational64::new(p, q))
        }
        None => Some(Rational64::from_integer(t.parse().ok()?)),
    }
}

/// Node values; NaN marks a node without a value.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub values: Vec<f64>,
}

impl Assignment {
    pub fn empty(n: usize) -> Self {
        Assignment { values: vec![f64::NAN; n] }
    }

    pub fn get(&self, c: &GeneralizedCircuit, id: NodeId) -> Result<f64, GcError> {
        match self.values.get(id) {
            Some(v) if !v.is_nan() => Ok(*v),
            _ => Err(GcError::Missing(c.name(id).to_string())),
        }
    }

    pub fn serialize(&self, c: &GeneralizedCircuit) -> String {
        let mut out = String::new();
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_nan() {
                let _ = writeln!(out, "{} {:.17}", c.name(i), v);
            }
        }
        out
    }

    pub fn parse(c: &GeneralizedCircuit, text: &str) -> Result<Self, GcError> {
        let mut a = Assignment::empty(c.n_nodes());
        for (idx, raw) in text.lines().enumerate() {
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let perr = |msg: String| GcError::Parse { line: idx + 1, msg };
            let (name, val) = l.split_once(char::is_whitespace).ok_or_else(|| perr("expected `node value`".into()))?;
            let id = c.node_id(name).ok_or_else(|| perr(format!("unknown node `{name}`")))?;
            a.values[id] = val.trim().parse().map_err(|_| perr(format!("bad value `{val}`")))?;
        }
        Ok(a)
    }
}

fn near(x: f64, target: f64, eps: f64) -> bool {
    (x - target).abs() <= eps
}

/// The constraint of one gate, with the scaling gate clamped at 1.
pub fn check_gate(c: &GeneralizedCircuit, gate: &Gate, x: &Assignment, eps: f64) -> Result<bool, GcError> {
    let a = gate.in1.map(|i| x.get(c, i)).transpose()?.unwrap_or(0.0);
    let b = gate.in2.map(|i| x.get(c, i)).transpose()?.unwrap_or(0.0);
    let v = x.get(c, gate.out)?;
    Ok(gate_holds(gate.kind, gate.zeta_f64(), a, b, v, eps))
}

pub fn gate_holds(kind: GateType, zeta: f64, a: f64, b: f64, v: f64, eps: f64) -> bool {
    let one = |x: f64| near(x, 1.0, eps);
    let zero = |x: f64| near(x, 0.0, eps);
    match kind {
        GateType::Const => near(v, zeta, eps),
        GateType::Scale => near(v, (zeta * a).min(1.0), eps),
        GateType::Copy => near(v, a, eps),
        GateType::Add => near(v, (a + b).min(1.0), eps),
        GateType::Sub => near(v, (a - b).max(0.0), eps),
        GateType::Less => {
            if a < b - eps {
                one(v)
            } else if a > b + eps {
                zero(v)
            } else {
                true
            }
        }
        GateType::Or => {
            if one(a) || one(b) {
                one(v)
            } else if zero(a) && zero(b) {
                zero(v)
            } else {
                true
            }
        }
        GateType::And => {
            if one(a) && one(b) {
                one(v)
            } else if zero(a) || zero(b) {
                zero(v)
            } else {
                true
            }
        }
        GateType::Not => {
            if zero(a) {
                one(v)
            } else if one(a) {
                zero(v)
            } else {
                true
            }
        }
    }
}

/// Indices of gates whose constraint fails; missing values are an error.
pub fn check_assignment(c: &GeneralizedCircuit, x: &Assignment, eps: f64) -> Result<Vec<usize>, GcError> {
    let mut bad = Vec::new();
    for (i, g) in c.gates.iter().enumerate() {
        if !check_gate(c, g, x, eps)? {
            bad.push(i);
        }
    }
    Ok(bad)
}

/// Zero-error gate function; logic reads values >= 1/2 as true and G< sends
/// ties to 0.
#[inline]
pub fn ideal_value(kind: GateType, zeta: f64, a: f64, b: f64) -> f64 {
    let t = |x: f64| x >= 0.5;
    let bool_val = |p: bool| if p { 1.0 } else { 0.0 };
    match kind {
        GateType::Const => zeta,
        GateType::Scale => (zeta * a).min(1.0),
        GateType::Copy => a,
        GateType::Add => (a + b).min(1.0),
        GateType::Sub => (a - b).max(0.0),
        GateType::Less => bool_val(a < b),
        GateType::Or => bool_val(t(a) || t(b)),
        GateType::And => bool_val(t(a) && t(b)),
        GateType::Not => bool_val(!t(a)),
    }
}

#[derive(Debug, Clone, Copy)]
struct Step {
    kind: GateType,
    zeta: f64,
    a: u32,
    b: u32,
    out: u32,
}

/// A topologically ordered evaluation schedule for a circuit with some nodes
/// pinned. Reusable across many pin values.
#[derive(Debug, Clone)]
pub struct ForwardPlan {
    steps: Vec<Step>,
    pinned: Vec<NodeId>,
    n_nodes: usize,
}

impl ForwardPlan {
    pub fn new(c: &GeneralizedCircuit, pinned: &[NodeId]) -> Result<Self, GcError> {
        let n = c.n_nodes();
        let mut is_pinned = vec![false; n];
        for &p in pinned {
            if p >= n {
                return Err(GcError::BadNodeId(p));
            }
            is_pinned[p] = true;
        }
        let live: Vec<usize> = (0..c.gates.len()).filter(|&g| !is_pinned[c.gates[g].out]).collect();
        // readers[node] = live gates reading it; pending[g] = unresolved inputs
        let mut readers: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut pending = vec![0u32; c.gates.len()];
        for &g in &live {
            for i in c.gates[g].inputs() {
                if is_pinned[i] {
                    continue;
                }
                match c.producer[i] {
                    Some(_) => {
                        readers[i].push(g);
                        pending[g] += 1;
                    }
                    None => return Err(GcError::Missing(c.name(i).to_string())),
                }
            }
        }
        let mut queue: Vec<usize> = live.iter().copied().filter(|&g| pending[g] == 0).collect();
        let mut order = Vec::with_capacity(live.len());
        while let Some(g) = queue.pop() {
            order.push(g);
            for &r in &readers[c.gates[g].out] {
                pending[r] -= 1;
                if pending[r] == 0 {
                    queue.push(r);
                }
            }
        }
        if order.len() != live.len() {
            let stuck = live.iter().find(|&&g| pending[g] > 0).expect("some gate is stuck");
            return Err(GcError::Cycle(c.name(c.gates[*stuck].out).to_string()));
        }
        let steps = order
            .into_iter()
            .map(|g| {
                let gate = &c.gates[g];
                Step {
                    kind: gate.kind,
                    zeta: gate.zeta_f64(),
                    a: gate.in1.unwrap_or(0) as u32,
                    b: gate.in2.unwrap_or(0) as u32,
                    out: gate.out as u32,
                }
            })
            .collect();
        Ok(ForwardPlan { steps, pinned: pinned.to_vec(), n_nodes: n })
    }

    pub fn pinned(&self) -> &[NodeId] {
        &self.pinned
    }

    /// Evaluates every unpinned node; `values` must hold the pinned values.
    pub fn run(&self, values: &mut [f64]) {
        assert_eq!(values.len(), self.n_nodes);
        for s in &self.steps {
            let a = values[s.a as usize];
            let b = values[s.b as usize];
            values[s.out as usize] = ideal_value(s.kind, s.zeta, a, b);
        }
    }

    /// Pins in the order given at construction.
    pub fn evaluate(&self, pins: &[f64]) -> Assignment {
        assert_eq!(pins.len(), self.pinned.len());
        let mut values = vec![f64::NAN; self.n_nodes];
        for (&p, &v) in self.pinned.iter().zip(pins) {
            values[p] = v;
        }
        self.run(&mut values);
        Assignment { values }
    }
}

pub fn ideal_forward(c: &GeneralizedCircuit, pinned: &[(NodeId, f64)]) -> Result<Assignment, GcError> {
    let nodes: Vec<NodeId> = pinned.iter().map(|p| p.0).collect();
    let vals: Vec<f64> = pinned.iter().map(|p| p.1).collect();
    Ok(ForwardPlan::new(c, &nodes)?.evaluate(&vals))
}

/// Damped synchronous iteration of the ideal gate functions from all-1/2,
/// then random restarts, until an assignment passes the checker or the
/// iteration budget runs out.
pub fn solve_tiny(c: &GeneralizedCircuit, eps: f64, budget: usize) -> Option<Assignment> {
    let n = c.n_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut spent = 0;
    let mut attempt = 0;
    while spent < budget {
        let mut x: Vec<f64> = if attempt == 0 { vec![0.5; n] } else { (0..n).map(|_| rng.gen()).collect() };
        let damping = [0.5, 0.25, 0.1, 1.0][attempt % 4];
        let rounds = (budget - spent).min(200 + 50 * n);
        for _ in 0..rounds {
            spent += 1;
            let a = Assignment { values: x.clone() };
            if check_assignment(c, &a, eps).map(|v| v.is_empty()).unwrap_or(false) {
                return Some(a);
            }
            let mut next = x.clone();
            for g in &c.gates {
                let va = g.in1.map(|i| x[i]).unwrap_or(0.0);
                let vb = g.in2.map(|i| x[i]).unwrap_or(0.0);
                let target = ideal_value(g.kind, g.zeta_f64(), va, vb);
                next[g.out] = (1.0 - damping) * x[g.out] + damping * target;
            }
            x = next;
        }
        attempt += 1;
    }
    None
}
