//! Fan-out reduction: every node ends up read by at most two gate inputs.
//!
//! Logical values are copied through trees of paired negations. Constants
//! are re-emitted per reader. Other arithmetic values are turned into a unary
//! bus, each bit is copied the same way, and every consumer rebuilds its own
//! real value from its copy of the bus.

use num_rational::Rational64;

use crate::gadgets::CircuitBuilder;
use crate::gcircuit::{GateType, GcError, Gate, GeneralizedCircuit, NodeId};

/// Bus length 4/eps', which must be an integer.
pub fn bus_len(eps_prime: Rational64) -> Result<usize, GcError> {
    let m = Rational64::from_integer(4) / eps_prime;
    if eps_prime <= Rational64::from_integer(0) || !m.is_integer() {
        return Err(GcError::Param(format!("4/eps' is not an integer for eps' = {eps_prime}")));
    }
    Ok(*m.numer() as usize)
}

/// Thermometer bits b_k = [k eps'/4 < a], read through a chain of copies so
/// that no node is read more than twice.
pub fn build_real2unary(cb: &mut CircuitBuilder, a: NodeId, eps_prime: Rational64) -> Result<Vec<NodeId>, GcError> {
    let m = bus_len(eps_prime)?;
    cb.gadget(|cb| {
        let mut c = cb.copy("c0", a)?;
        let mut bus = Vec::with_capacity(m);
        for k in 1..=m {
            c = cb.copy(&format!("c{k}"), c)?;
            let z = cb.constant(&format!("zeta{k}"), Rational64::new(k as i64, m as i64))?;
            bus.push(cb.less(&format!("b{k}"), z, c)?);
        }
        Ok(bus)
    })
}

pub fn build_unary2real(cb: &mut CircuitBuilder, bus: &[NodeId], eps_prime: Rational64) -> Result<NodeId, GcError> {
    let m = bus_len(eps_prime)?;
    if bus.len() != m {
        return Err(GcError::Param(format!("bus has {} bits, expected {m}", bus.len())));
    }
    cb.gadget(|cb| {
        let mut d = cb.constant("d0", Rational64::from_integer(0))?;
        for (k, &b) in bus.iter().enumerate() {
            let c = cb.scale(&format!("c{}", k + 1), Rational64::new(1, m as i64), b)?;
            d = cb.add(&format!("d{}", k + 1), d, c)?;
        }
        cb.copy("a", d)
    })
}

/// Smallest even depth whose tree has at least `f` leaves.
pub fn tree_depth(f: usize) -> u32 {
    let mut d = 2;
    while (1usize << d) < f {
        d += 2;
    }
    d
}

/// `f` leaves equal to `src` (even number of negations), each internal node
/// read at most twice; subtrees without needed leaves are not built.
pub fn build_not_tree(cb: &mut CircuitBuilder, src: NodeId, f: usize) -> Result<Vec<NodeId>, GcError> {
    let depth = tree_depth(f);
    cb.gadget(|cb| {
        let mut leaves = Vec::with_capacity(f);
        grow(cb, src, "t", 0, depth, f, &mut leaves)?;
        Ok(leaves)
    })
}

fn grow(
    cb: &mut CircuitBuilder,
    node: NodeId,
    path: &str,
    level: u32,
    depth: u32,
    count: usize,
    leaves: &mut Vec<NodeId>,
) -> Result<(), GcError> {
    if level == depth {
        leaves.push(node);
        return Ok(());
    }
    let half = 1usize << (depth - level - 1);
    let split = [count.min(half), count.saturating_sub(half)];
    for (side, &n) in split.iter().enumerate() {
        if n > 0 {
            let name = format!("{path}{side}");
            let child = cb.not(&name, node)?;
            grow(cb, child, &name, level + 1, depth, n, leaves)?;
        }
    }
    Ok(())
}

/// A prefix no existing node name starts with.
fn fresh_prefix(c: &GeneralizedCircuit) -> String {
    let mut p = String::from("f");
    while (0..c.n_nodes()).any(|i| c.name(i).starts_with(&p)) {
        p.push('f');
    }
    p
}

/// Rewrites the circuit so every node has fan-out at most 2. Original nodes
/// keep their names and ids; a circuit that already complies comes back
/// unchanged.
pub fn transform_fanout2(c: &GeneralizedCircuit, eps_prime: Rational64) -> Result<GeneralizedCircuit, GcError> {
    bus_len(eps_prime)?;
    if c.max_fanout() <= 2 {
        return Ok(c.clone());
    }
    let mut base = GeneralizedCircuit::new();
    for i in 0..c.n_nodes() {
        base.add_node(c.name(i))?;
    }
    let prefix = fresh_prefix(c);
    let mut cb = CircuitBuilder::from_circuit(base).with_gadget_prefix(&prefix);

    // reader slots per node, in gate order
    let mut readers: Vec<Vec<(usize, usize)>> = vec![Vec::new(); c.n_nodes()];
    for (g, gate) in c.gates().iter().enumerate() {
        if let Some(a) = gate.in1 {
            readers[a].push((g, 0));
        }
        if let Some(b) = gate.in2 {
            readers[b].push((g, 1));
        }
    }
    let mut rewired: Vec<[Option<NodeId>; 2]> = vec![[None, None]; c.gates().len()];
    for v in 0..c.n_nodes() {
        let slots = &readers[v];
        let f = slots.len();
        if f <= 2 {
            continue;
        }
        let producer = c.producer(v).map(|g| &c.gates()[g]);
        let logical = producer.map(|g| g.kind.is_logical()).unwrap_or(false);
        let copies = if let Some(z) = producer.filter(|g| g.kind == GateType::Const).and_then(|g| g.zeta) {
            // a constant is simply emitted again for every reader
            cb.gadget(|cb| (0..f).map(|j| cb.constant(&format!("k{j}"), z)).collect::<Result<Vec<_>, _>>())?
        } else if logical {
            build_not_tree(&mut cb, v, f)?
        } else {
            let bus = build_real2unary(&mut cb, v, eps_prime)?;
            let mut bit_leaves = Vec::with_capacity(bus.len());
            for &bit in &bus {
                bit_leaves.push(build_not_tree(&mut cb, bit, f)?);
            }
            let mut out = Vec::with_capacity(f);
            for j in 0..f {
                let copy: Vec<NodeId> = bit_leaves.iter().map(|l| l[j]).collect();
                out.push(build_unary2real(&mut cb, &copy, eps_prime)?);
            }
            out
        };
        for (&(g, slot), node) in slots.iter().zip(copies) {
            rewired[g][slot] = Some(node);
        }
    }
    for (g, gate) in c.gates().iter().enumerate() {
        let mut ng: Gate = gate.clone();
        ng.in1 = rewired[g][0].or(gate.in1);
        ng.in2 = rewired[g][1].or(gate.in2);
        cb.circuit.add_gate(ng)?;
    }
    Ok(cb.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcircuit::{check_assignment, ideal_forward, ForwardPlan};

    fn r(p: i64, q: i64) -> Rational64 {
        Rational64::new(p, q)
    }

    fn bus_circuit(eps_prime: Rational64) -> (GeneralizedCircuit, NodeId, Vec<NodeId>, NodeId) {
        let mut cb = CircuitBuilder::new();
        let a = cb.input("a").unwrap();
        let bus = build_real2unary(&mut cb, a, eps_prime).unwrap();
        let back = build_unary2real(&mut cb, &bus, eps_prime).unwrap();
        (cb.finish(), a, bus, back)
    }

    #[test]
    fn real2unary_examples() {
        let (c, a, bus, _) = bus_circuit(r(1, 16));
        assert_eq!(bus.len(), 64);
        let x = ideal_forward(&c, &[(a, 0.5)]).unwrap();
        let high: Vec<bool> = bus.iter().map(|&b| x.values[b] > 0.5).collect();
        // levels 1..31 lie strictly below 1/2; level 32 is the tie
        assert!(high[..31].iter().all(|&h| h) && high[31..].iter().all(|&h| !h));
        let x = ideal_forward(&c, &[(a, 0.0)]).unwrap();
        assert!(bus.iter().all(|&b| x.values[b] == 0.0));
        let x = ideal_forward(&c, &[(a, 1.0)]).unwrap();
        assert!(bus[..63].iter().all(|&b| x.values[b] == 1.0));
        assert!(c.max_fanout() <= 2);
    }

    #[test]
    fn unary_round_trip_sweep() {
        let ep = r(1, 16);
        let (c, a, _, back) = bus_circuit(ep);
        let plan = ForwardPlan::new(&c, &[a]).unwrap();
        for k in 0..=64 {
            let v = k as f64 / 64.0;
            let x = plan.evaluate(&[v]);
            assert!((x.values[back] - v).abs() <= 1.0 / 32.0);
        }
        let mut cb = CircuitBuilder::new();
        let b = cb.input("b").unwrap();
        assert!(build_unary2real(&mut cb, &[b], ep).is_err());
    }

    #[test]
    fn bus_length_must_be_integral() {
        assert_eq!(bus_len(r(1, 16)).unwrap(), 64);
        assert!(bus_len(r(3, 16)).is_err());
    }

    #[test]
    fn logical_node_copied_by_even_tree() {
        let mut cb = CircuitBuilder::new();
        let a = cb.input("a").unwrap();
        let z = cb.constant("half", r(1, 2)).unwrap();
        let l = cb.less("l", a, z).unwrap();
        for k in 0..5 {
            cb.copy(&format!("o{k}"), l).unwrap();
        }
        let c = cb.finish();
        assert_eq!(tree_depth(5), 4);
        let t = transform_fanout2(&c, r(1, 16)).unwrap();
        assert!(t.max_fanout() <= 2);
        assert!(t.gates().len() - c.gates().len() <= 2 * 16);
        for v in [0.2, 0.8] {
            let xo = ideal_forward(&c, &[(a, v)]).unwrap();
            let xt = ideal_forward(&t, &[(a, v)]).unwrap();
            for k in 0..5 {
                let id = c.node_id(&format!("o{k}")).unwrap();
                assert_eq!(xo.values[id], xt.values[id]);
            }
        }
    }

    #[test]
    fn arithmetic_fanout_within_eps_prime() {
        let mut cb = CircuitBuilder::new();
        let a = cb.input("a").unwrap();
        let b = cb.input("b").unwrap();
        let s = cb.add("s", a, b).unwrap();
        let outs: Vec<NodeId> = (0..3).map(|k| cb.scale(&format!("o{k}"), r(1, 2), s).unwrap()).collect();
        let c = cb.finish();
        let ep = r(1, 16);
        let t = transform_fanout2(&c, ep).unwrap();
        assert!(t.max_fanout() <= 2);
        for (va, vb) in [(0.1, 0.2), (0.33, 0.41), (0.9, 0.05)] {
            let xo = ideal_forward(&c, &[(a, va), (b, vb)]).unwrap();
            let xt = ideal_forward(&t, &[(a, va), (b, vb)]).unwrap();
            for &o in &outs {
                assert!((xo.values[o] - xt.values[o]).abs() <= 1.0 / 16.0);
            }
        }
    }

    #[test]
    fn shared_constant_is_duplicated_exactly() {
        let mut cb = CircuitBuilder::new();
        let k = cb.constant("k", r(7, 12)).unwrap();
        let outs: Vec<NodeId> = (0..4).map(|j| cb.scale(&format!("o{j}"), r(1, 2), k).unwrap()).collect();
        let c = cb.finish();
        let t = transform_fanout2(&c, r(1, 8)).unwrap();
        assert!(t.max_fanout() <= 2);
        assert_eq!(t.gates().len(), c.gates().len() + 4);
        let xt = ideal_forward(&t, &[]).unwrap();
        for o in outs {
            assert!((xt.values[o] - 7.0 / 24.0).abs() < 1e-15);
        }
    }

    #[test]
    fn compliant_circuit_unchanged() {
        let mut cb = CircuitBuilder::new();
        let a = cb.input("a").unwrap();
        let b = cb.copy("b", a).unwrap();
        cb.binary("c", GateType::Add, a, b).unwrap();
        let c = cb.finish();
        assert_eq!(transform_fanout2(&c, r(1, 16)).unwrap(), c);
    }

    #[test]
    fn original_constraints_hold_on_transformed_values() {
        let mut cb = CircuitBuilder::new();
        let y = cb.input("y").unwrap();
        let h = cb.constant("h", r(1, 3)).unwrap();
        cb.add("s", y, h).unwrap();
        cb.sub("d", y, h).unwrap();
        cb.less("lt", y, h).unwrap();
        let c = cb.finish();
        assert_eq!(c.max_fanout(), 3);
        let t = transform_fanout2(&c, r(1, 16)).unwrap();
        for v in [0.0, 0.2, 0.5, 0.9] {
            let xt = ideal_forward(&t, &[(y, v)]).unwrap();
            let restricted = crate::gcircuit::Assignment { values: xt.values[..c.n_nodes()].to_vec() };
            assert!(check_assignment(&c, &restricted, 1.0 / 16.0).unwrap().is_empty());
        }
    }
}
