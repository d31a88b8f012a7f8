//! Composite subcircuits: MULTIPLY, DIVIDE, MAX and INTERPOLATE, built from
//! unary (thermometer) representations with K = 1/sqrt(eps) levels.

use num_rational::Rational64;

use crate::gcircuit::{GateType, GcError, Gate, GeneralizedCircuit, NodeId};

/// Number of unary levels for a given eps; eps must be 1/K^2.
pub fn granularity(eps: Rational64) -> Result<u32, GcError> {
    let bad = || GcError::Param(format!("1/sqrt(eps) is not an integer for eps = {eps}"));
    if *eps.numer() != 1 || *eps.denom() <= 0 {
        return Err(bad());
    }
    let q = *eps.denom();
    let k = (q as f64).sqrt().round() as i64;
    if k * k != q {
        return Err(bad());
    }
    Ok(k as u32)
}

/// Circuit under construction, with scoped fresh-node naming.
#[derive(Debug)]
pub struct CircuitBuilder {
    pub circuit: GeneralizedCircuit,
    scope: String,
    next_gadget: usize,
    gadget_prefix: String,
}

impl Default for CircuitBuilder {
    fn default() -> Self {
        CircuitBuilder {
            circuit: GeneralizedCircuit::new(),
            scope: String::new(),
            next_gadget: 0,
            gadget_prefix: "g".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GadgetHandle {
    pub outputs: Vec<NodeId>,
    /// The thermometer bits the gadget builds internally, in level order.
    pub unary: Vec<NodeId>,
    pub gates_appended: usize,
    pub fresh_nodes: usize,
    pub k: u32,
}

impl GadgetHandle {
    pub fn out(&self) -> NodeId {
        self.outputs[0]
    }
}

fn r(p: i64, q: i64) -> Rational64 {
    Rational64::new(p, q)
}

impl CircuitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_circuit(circuit: GeneralizedCircuit) -> Self {
        CircuitBuilder { circuit, ..Self::default() }
    }

    /// Gadget scopes are named `<prefix><id>`; the default prefix is `g`.
    pub fn with_gadget_prefix(mut self, prefix: &str) -> Self {
        self.gadget_prefix = prefix.to_string();
        self
    }

    pub fn finish(self) -> GeneralizedCircuit {
        self.circuit
    }

    /// A node with a global (unscoped) name.
    pub fn input(&mut self, name: &str) -> Result<NodeId, GcError> {
        self.circuit.add_node(name)
    }

    pub fn node(&mut self, local: &str) -> Result<NodeId, GcError> {
        if self.scope.is_empty() {
            self.circuit.add_node(local)
        } else {
            self.circuit.add_node(format!("{}.{}", self.scope, local))
        }
    }

    /// Runs `f` with node names prefixed by `scope`.
    pub fn scoped<T>(&mut self, scope: &str, f: impl FnOnce(&mut Self) -> Result<T, GcError>) -> Result<T, GcError> {
        let saved = std::mem::replace(&mut self.scope, scope.to_string());
        let out = f(self);
        self.scope = saved;
        out
    }

    /// Opens a fresh `g<id>` scope for one gadget.
    pub fn gadget<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, GcError>) -> Result<T, GcError> {
        let id = self.next_gadget;
        self.next_gadget += 1;
        let scope = format!("{}{id}", self.gadget_prefix);
        self.scoped(&scope, f)
    }

    fn emit(&mut self, local: &str, gate: impl FnOnce(NodeId) -> Gate) -> Result<NodeId, GcError> {
        let out = self.node(local)?;
        self.circuit.add_gate(gate(out))?;
        Ok(out)
    }

    pub fn constant(&mut self, local: &str, z: Rational64) -> Result<NodeId, GcError> {
        self.emit(local, |o| Gate::constant(z, o))
    }

    pub fn scale(&mut self, local: &str, z: Rational64, a: NodeId) -> Result<NodeId, GcError> {
        self.emit(local, |o| Gate::scale(z, a, o))
    }

    pub fn copy(&mut self, local: &str, a: NodeId) -> Result<NodeId, GcError> {
        self.emit(local, |o| Gate::unary(GateType::Copy, a, o))
    }

    pub fn not(&mut self, local: &str, a: NodeId) -> Result<NodeId, GcError> {
        self.emit(local, |o| Gate::unary(GateType::Not, a, o))
    }

    pub fn binary(&mut self, local: &str, kind: GateType, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.emit(local, |o| Gate::binary(kind, a, b, o))
    }

    pub fn add(&mut self, local: &str, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.binary(local, GateType::Add, a, b)
    }

    pub fn sub(&mut self, local: &str, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.binary(local, GateType::Sub, a, b)
    }

    pub fn less(&mut self, local: &str, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.binary(local, GateType::Less, a, b)
    }

    pub fn or(&mut self, local: &str, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.binary(local, GateType::Or, a, b)
    }

    pub fn and(&mut self, local: &str, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.binary(local, GateType::And, a, b)
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.circuit.gates().len(), self.circuit.n_nodes())
    }

    pub fn handle(&self, before: (usize, usize), outputs: Vec<NodeId>, unary: Vec<NodeId>, k: u32) -> GadgetHandle {
        let (g, n) = self.counts();
        GadgetHandle { outputs, unary, gates_appended: g - before.0, fresh_nodes: n - before.1, k }
    }
}

/// c = a * b, with a read in unary.
pub fn build_multiply(cb: &mut CircuitBuilder, a: NodeId, b: NodeId, eps: Rational64) -> Result<GadgetHandle, GcError> {
    let k = granularity(eps)?;
    let before = cb.counts();
    cb.gadget(|cb| {
        let step = r(1, k as i64);
        let mut h = cb.constant("h0", r(0, 1))?;
        let mut unary = Vec::with_capacity(k as usize);
        for i in 1..=k as i64 {
            let z = cb.constant(&format!("zeta{i}"), r(i, k as i64))?;
            // abar_i is 1 when a < i/K
            let abar = cb.less(&format!("abar{i}"), a, z)?;
            let d = cb.scale(&format!("d{i}"), step, b)?;
            let e = cb.sub(&format!("e{i}"), d, abar)?;
            h = cb.add(&format!("h{i}"), h, e)?;
            unary.push(abar);
        }
        let c = cb.copy("c", h)?;
        Ok(cb.handle(before, vec![c], unary, k))
    })
}

/// c = a / b, counting the levels i/K with (i/K) * b < a.
pub fn build_divide(cb: &mut CircuitBuilder, a: NodeId, b: NodeId, eps: Rational64) -> Result<GadgetHandle, GcError> {
    let k = granularity(eps)?;
    let before = cb.counts();
    cb.gadget(|cb| {
        let step = r(1, k as i64);
        let mut h = cb.constant("h0", r(0, 1))?;
        let mut unary = Vec::with_capacity(k as usize);
        for i in 1..=k as i64 {
            let bk = cb.scale(&format!("b{i}"), r(i, k as i64), b)?;
            let d = cb.less(&format!("d{i}"), bk, a)?;
            let e = cb.scale(&format!("e{i}"), step, d)?;
            h = cb.add(&format!("h{i}"), h, e)?;
            unary.push(d);
        }
        let c = cb.copy("c", h)?;
        Ok(cb.handle(before, vec![c], unary, k))
    })
}

pub fn build_max(cb: &mut CircuitBuilder, inputs: &[NodeId], eps: Rational64) -> Result<GadgetHandle, GcError> {
    let k = granularity(eps)?;
    if inputs.is_empty() {
        return Err(GcError::Param("MAX needs at least one input".into()));
    }
    let before = cb.counts();
    cb.gadget(|cb| {
        let step = r(1, k as i64);
        let mut h = cb.constant("h0", r(0, 1))?;
        let mut unary = Vec::with_capacity(k as usize);
        for lvl in 1..=k as i64 {
            let z = cb.constant(&format!("zeta{lvl}"), r(lvl, k as i64))?;
            let mut d = cb.constant(&format!("d{lvl}_0"), r(0, 1))?;
            for (i, &a) in inputs.iter().enumerate() {
                let c = cb.less(&format!("c{lvl}_{}", i + 1), z, a)?;
                d = cb.or(&format!("d{lvl}_{}", i + 1), d, c)?;
            }
            let e = cb.scale(&format!("e{lvl}"), step, d)?;
            h = cb.add(&format!("h{lvl}"), h, e)?;
            unary.push(d);
        }
        let b = cb.copy("b", h)?;
        Ok(cb.handle(before, vec![b], unary, k))
    })
}

/// c = (w_a a + w_b b) / (w_a + w_b).
pub fn build_interpolate(
    cb: &mut CircuitBuilder,
    a: NodeId,
    w_a: NodeId,
    b: NodeId,
    w_b: NodeId,
    eps: Rational64,
) -> Result<GadgetHandle, GcError> {
    let k = granularity(eps)?;
    let before = cb.counts();
    let (ha, hb, sum) = cb.gadget(|cb| {
        let ha = cb.scale("wa_half", r(1, 2), w_a)?;
        let hb = cb.scale("wb_half", r(1, 2), w_b)?;
        let sum = cb.add("w_sum", ha, hb)?;
        Ok((ha, hb, sum))
    })?;
    let na = build_divide(cb, ha, sum, eps)?.out();
    let nb = build_divide(cb, hb, sum, eps)?.out();
    let ca = build_multiply(cb, na, a, eps)?.out();
    let cbv = build_multiply(cb, nb, b, eps)?.out();
    let c = cb.gadget(|cb| cb.add("c", ca, cbv))?;
    Ok(cb.handle(before, vec![c], Vec::new(), k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcircuit::{ideal_forward, ForwardPlan};

    const EPS: (i64, i64) = (1, 4096);

    fn eps() -> Rational64 {
        r(EPS.0, EPS.1)
    }

    #[test]
    fn granularity_requires_square_reciprocal() {
        assert_eq!(granularity(r(1, 4096)).unwrap(), 64);
        assert!(granularity(r(1, 1000)).is_err());
        assert!(granularity(r(2, 4096)).is_err());
    }

    fn two_input(f: impl Fn(&mut CircuitBuilder, NodeId, NodeId) -> GadgetHandle) -> (GeneralizedCircuit, GadgetHandle, NodeId, NodeId) {
        let mut cb = CircuitBuilder::new();
        let a = cb.input("a").unwrap();
        let b = cb.input("b").unwrap();
        let h = f(&mut cb, a, b);
        (cb.finish(), h, a, b)
    }

    #[test]
    fn gate_counts_match_listings() {
        let k = 64;
        let (_, h, _, _) = two_input(|cb, a, b| build_multiply(cb, a, b, eps()).unwrap());
        assert_eq!(h.gates_appended, 5 * k + 2);
        let (_, h, _, _) = two_input(|cb, a, b| build_divide(cb, a, b, eps()).unwrap());
        assert_eq!(h.gates_appended, 4 * k + 2);
        let (_, h, _, _) = two_input(|cb, a, b| build_max(cb, &[a, b, a], eps()).unwrap());
        assert_eq!(h.gates_appended, k * (4 + 2 * 3) + 2);
        let mut cb = CircuitBuilder::new();
        let ins: Vec<NodeId> = (0..4).map(|i| cb.input(&format!("x{i}")).unwrap()).collect();
        let h = build_interpolate(&mut cb, ins[0], ins[1], ins[2], ins[3], eps()).unwrap();
        assert_eq!(h.gates_appended, 18 * k + 12);
        assert_eq!(h.fresh_nodes, h.gates_appended);
    }

    #[test]
    fn fresh_names_are_scoped_per_gadget() {
        let (c, h, _, _) = two_input(|cb, a, b| {
            build_multiply(cb, a, b, eps()).unwrap();
            build_multiply(cb, a, b, eps()).unwrap()
        });
        assert_eq!(c.name(h.out()), "g1.c");
        assert!(c.node_id("g0.abar64").is_some());
    }

    #[test]
    fn multiply_examples() {
        let (c, h, a, b) = two_input(|cb, a, b| build_multiply(cb, a, b, eps()).unwrap());
        let x = ideal_forward(&c, &[(a, 0.5), (b, 0.5)]).unwrap();
        assert!((x.values[h.out()] - 0.25).abs() <= 4.0 / 64.0);
        let x = ideal_forward(&c, &[(a, 0.0), (b, 0.9)]).unwrap();
        assert!(x.values[h.out()].abs() <= 4.0 / 64.0);
    }

    #[test]
    fn multiply_sweep_and_monotone_unary() {
        let (c, h, a, b) = two_input(|cb, a, b| build_multiply(cb, a, b, eps()).unwrap());
        let plan = ForwardPlan::new(&c, &[a, b]).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=64 {
            for j in 0..=64 {
                let (va, vb) = (i as f64 / 64.0, j as f64 / 64.0);
                let x = plan.evaluate(&[va, vb]);
                worst = worst.max((x.values[h.out()] - va * vb).abs());
                let bits: Vec<f64> = h.unary.iter().map(|&u| x.values[u]).collect();
                assert!(bits.windows(2).all(|w| w[0] <= w[1]));
            }
        }
        assert!(worst <= 2.0 / 64.0, "worst {worst}");
    }

    #[test]
    fn divide_examples() {
        let (c, h, a, b) = two_input(|cb, a, b| build_divide(cb, a, b, eps()).unwrap());
        let bound = |b: f64| 3.0 / 64.0 / b;
        let x = ideal_forward(&c, &[(a, 0.25), (b, 0.5)]).unwrap();
        assert!((x.values[h.out()] - 0.5).abs() <= bound(0.5));
        let x = ideal_forward(&c, &[(a, 0.0), (b, 0.5)]).unwrap();
        assert!(x.values[h.out()].abs() <= bound(0.5));
        let x = ideal_forward(&c, &[(a, 0.75), (b, 0.75)]).unwrap();
        // the comparator sends the tie at level K to 0
        assert!((x.values[h.out()] - 63.0 / 64.0).abs() < 1e-12);
        let bits: Vec<f64> = h.unary.iter().map(|&u| x.values[u]).collect();
        assert!(bits.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn max_examples() {
        let mut cb = CircuitBuilder::new();
        let ins: Vec<NodeId> = (0..3).map(|i| cb.input(&format!("a{i}")).unwrap()).collect();
        let h = build_max(&mut cb, &ins, eps()).unwrap();
        let c = cb.finish();
        let x = ideal_forward(&c, &[(ins[0], 0.2), (ins[1], 0.7), (ins[2], 0.5)]).unwrap();
        assert!((x.values[h.out()] - 0.7).abs() <= 4.0 / 64.0);
        let x = ideal_forward(&c, &[(ins[0], 0.3), (ins[1], 0.3), (ins[2], 0.3)]).unwrap();
        assert!((x.values[h.out()] - 0.3).abs() <= 4.0 / 64.0);
        let bits: Vec<f64> = h.unary.iter().map(|&u| x.values[u]).collect();
        assert!(bits.windows(2).all(|w| w[0] >= w[1]));
        let mut cb = CircuitBuilder::new();
        assert!(build_max(&mut cb, &[], eps()).is_err());
    }

    #[test]
    fn interpolate_examples() {
        let mut cb = CircuitBuilder::new();
        let ins: Vec<NodeId> = (0..4).map(|i| cb.input(&format!("x{i}")).unwrap()).collect();
        let h = build_interpolate(&mut cb, ins[0], ins[1], ins[2], ins[3], eps()).unwrap();
        let c = cb.finish();
        let plan = ForwardPlan::new(&c, &ins).unwrap();
        let tol = |wa: f64, wb: f64| 30.0 / 64.0 / (wa + wb);
        let x = plan.evaluate(&[0.3, 1.0, 0.9, 0.0]);
        assert!((x.values[h.out()] - 0.3).abs() <= tol(1.0, 0.0));
        let x = plan.evaluate(&[0.6, 0.2, 0.6, 0.3]);
        assert!((x.values[h.out()] - 0.6).abs() <= tol(0.2, 0.3));
        let x = plan.evaluate(&[0.0, 0.5, 1.0, 0.5]);
        assert!((x.values[h.out()] - 0.5).abs() <= tol(0.5, 0.5));
    }
}
