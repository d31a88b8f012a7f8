//! Compiles a Brouwer instance into a generalized circuit whose approximate
//! solutions are approximate fixed points of the displacement field.
//!
//! The input nodes y_1..y_D are evaluated at a few translated copies; each
//! copy decodes its cell, runs the embedding circuits, and rebuilds the field
//! of that cell from masks, ramps and the unary gadgets. The averaged field is
//! carried as a (positive, negative) node pair per coordinate, and two gates
//! per coordinate close the loop y = y + g+ - g-.
//!
//! Contracts hold for points of the picture region only.

use std::collections::BTreeMap;

use num_rational::Rational64;
use num_traits::{One, ToPrimitive, Zero};

use crate::brouwer::{BrouwerInstance, DEFAULT_DELTA};
use crate::endofline::{embedding_circuits, BoolCircuit, BoolOp, EndOfLineInstance};
use crate::gadgets::{build_divide, build_multiply, granularity, CircuitBuilder};
use crate::gcircuit::{GateType, Gate, GcError, GeneralizedCircuit, NodeId};

fn r(p: i64, q: i64) -> Rational64 {
    Rational64::new(p, q)
}

/// Compiler knobs. `samples` defaults to 1/sqrt(eps) and `corner_width` to
/// 2 eps^(1/4).
#[derive(Debug, Clone, PartialEq)]
pub struct CompileParams {
    pub eps: Rational64,
    pub samples: Option<usize>,
    pub corner_width: Option<Rational64>,
    pub delta: Rational64,
}

impl CompileParams {
    pub fn new(eps: Rational64) -> Self {
        CompileParams { eps, samples: None, corner_width: None, delta: r(1, 44) }
    }

    /// Few samples and a corner band narrower than a ramp step, so that the
    /// circuit resolves the field at desk-scale eps.
    pub fn resolved(eps: Rational64) -> Self {
        CompileParams { samples: Some(2), corner_width: Some(r(1, 384)), ..Self::new(eps) }
    }

    pub fn sample_count(&self) -> Result<usize, GcError> {
        match self.samples {
            Some(0) => Err(GcError::Param("at least one sample is needed".into())),
            Some(s) => Ok(s),
            None => Ok(granularity(self.eps)? as usize),
        }
    }

    pub fn corner(&self) -> Result<Rational64, GcError> {
        if let Some(w) = self.corner_width {
            return Ok(w);
        }
        let q = self.eps.to_f64().unwrap_or(0.0).powf(0.25) * 2.0;
        Rational64::approximate_float(q).ok_or_else(|| GcError::Param("corner width".into()))
    }
}

/// Node ids of one translated copy.
#[derive(Debug, Clone)]
pub struct SampleBlock {
    pub point: Vec<NodeId>,
    pub bits: Vec<NodeId>,
    pub enter: Vec<NodeId>,
    pub exit: Vec<NodeId>,
    pub has_enter: NodeId,
    pub has_exit: NodeId,
    pub radius_in: NodeId,
    pub radius_out: NodeId,
    pub corner: NodeId,
    pub g_plus: Vec<NodeId>,
    pub g_minus: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct CompiledBundle {
    pub circuit: GeneralizedCircuit,
    pub n: usize,
    pub params: CompileParams,
    pub inputs: Vec<NodeId>,
    pub g_plus: Vec<NodeId>,
    pub g_minus: Vec<NodeId>,
    pub samples: Vec<SampleBlock>,
    pub symbols: BTreeMap<String, NodeId>,
}

impl CompiledBundle {
    /// `role nodeid` lines, sorted by role.
    pub fn serialize_symbols(&self) -> String {
        self.symbols.iter().map(|(k, v)| format!("{k} {v}\n")).collect()
    }

    /// Ideal displacement g+ - g- with the inputs pinned at `y`.
    pub fn forward_displacement(&self, plan: &crate::gcircuit::ForwardPlan, y: &[f64]) -> Vec<f64> {
        let x = plan.evaluate(y);
        self.g_plus.iter().zip(&self.g_minus).map(|(&p, &m)| x.values[p] - x.values[m]).collect()
    }

    /// Evaluation plan with the input nodes pinned (the loop gates drop out).
    pub fn plan(&self) -> Result<crate::gcircuit::ForwardPlan, GcError> {
        crate::gcircuit::ForwardPlan::new(&self.circuit, &self.inputs)
    }
}

/// Small arithmetic vocabulary on top of the builder.
struct Ops<'a> {
    cb: &'a mut CircuitBuilder,
    eps: Rational64,
    fresh: usize,
    zero: NodeId,
    one: NodeId,
}

impl<'a> Ops<'a> {
    fn new(cb: &'a mut CircuitBuilder, eps: Rational64) -> Result<Self, GcError> {
        let zero = cb.constant("zero", Rational64::zero())?;
        let one = cb.constant("one", Rational64::one())?;
        Ok(Ops { cb, eps, fresh: 0, zero, one })
    }

    fn name(&mut self, tag: &str) -> String {
        self.fresh += 1;
        format!("{tag}_{}", self.fresh)
    }

    fn konst(&mut self, z: Rational64) -> Result<NodeId, GcError> {
        let n = self.name("k");
        self.cb.constant(&n, z)
    }

    fn bin(&mut self, tag: &str, kind: GateType, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        let n = self.name(tag);
        self.cb.binary(&n, kind, a, b)
    }

    fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.bin("add", GateType::Add, a, b)
    }

    fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.bin("sub", GateType::Sub, a, b)
    }

    fn less(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.bin("lt", GateType::Less, a, b)
    }

    fn and(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.bin("and", GateType::And, a, b)
    }

    fn or(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        self.bin("or", GateType::Or, a, b)
    }

    fn not(&mut self, a: NodeId) -> Result<NodeId, GcError> {
        let n = self.name("not");
        self.cb.not(&n, a)
    }

    fn scale(&mut self, z: Rational64, a: NodeId) -> Result<NodeId, GcError> {
        let n = self.name("scale");
        self.cb.scale(&n, z, a)
    }

    fn or_all(&mut self, xs: &[NodeId]) -> Result<NodeId, GcError> {
        let mut acc = self.zero;
        for &x in xs {
            acc = self.or(acc, x)?;
        }
        Ok(acc)
    }

    fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId, GcError> {
        let mut acc = self.zero;
        for &x in xs {
            acc = self.add(acc, x)?;
        }
        Ok(acc)
    }

    /// x when the bit is set, 0 otherwise.
    fn mask(&mut self, bit: NodeId, x: NodeId) -> Result<NodeId, GcError> {
        let nb = self.not(bit)?;
        self.sub(x, nb)
    }

    fn max2(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        let d = self.sub(b, a)?;
        self.add(a, d)
    }

    /// min(2^k x, 1) by doubling.
    fn times_pow2(&mut self, x: NodeId, k: u32) -> Result<NodeId, GcError> {
        let mut v = x;
        for _ in 0..k {
            v = self.add(v, v)?;
        }
        Ok(v)
    }

    /// min(2^k (x - a)^+, 1).
    fn ramp(&mut self, x: NodeId, a: Rational64, k: u32) -> Result<NodeId, GcError> {
        let c = self.konst(a)?;
        let d = self.sub(x, c)?;
        self.times_pow2(d, k)
    }

    fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        Ok(build_multiply(self.cb, a, b, self.eps)?.out())
    }

    fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
        Ok(build_divide(self.cb, a, b, self.eps)?.out())
    }
}

/// Translated copies y^l = min(y + 6 l eps, 1); the first is a plain copy.
pub fn build_equiangle(
    cb: &mut CircuitBuilder,
    y: &[NodeId],
    eps: Rational64,
    samples: usize,
) -> Result<Vec<Vec<NodeId>>, GcError> {
    (0..samples)
        .map(|l| {
            cb.scoped(&format!("s{l}"), |cb| {
                let shift = eps * Rational64::from_integer(6 * l as i64);
                if shift > Rational64::one() {
                    return Err(GcError::Param(format!("sample shift {shift} exceeds 1")));
                }
                let c = cb.constant("shift", shift)?;
                y.iter()
                    .enumerate()
                    .map(|(k, &yk)| {
                        if l == 0 {
                            cb.copy(&format!("y{}", k + 1), yk)
                        } else {
                            cb.add(&format!("y{}", k + 1), yk, c)
                        }
                    })
                    .collect()
            })
        })
        .collect()
}

/// Cell bits and the path directions through the cell.
#[derive(Debug, Clone)]
pub struct CubeDecode {
    pub bits: Vec<NodeId>,
    pub enter: Vec<NodeId>,
    pub exit: Vec<NodeId>,
}

/// Gates of a boolean circuit, compiled one for one onto the given inputs;
/// returns the node of every gate.
fn compile_bool(o: &mut Ops, c: &BoolCircuit, inputs: &[NodeId]) -> Result<Vec<NodeId>, GcError> {
    let mut nodes: Vec<NodeId> = Vec::with_capacity(c.gates().len());
    for g in c.gates() {
        let v = match *g {
            BoolOp::Input(k) => inputs[k],
            BoolOp::Const0 => o.zero,
            BoolOp::Const1 => o.one,
            BoolOp::Not(a) => o.not(nodes[a])?,
            BoolOp::And(a, b) => o.and(nodes[a], nodes[b])?,
            BoolOp::Or(a, b) => o.or(nodes[a], nodes[b])?,
        };
        nodes.push(v);
    }
    Ok(nodes)
}

/// b_k = [y_k < 1/2], then one step of the embedded walk both ways. The
/// enter/exit indicators are one-hot (or all zero) over the D axes; entering
/// along the slice axis means continuing from above.
pub fn build_cube_decode(
    cb: &mut CircuitBuilder,
    sample: &[NodeId],
    eol: &EndOfLineInstance,
    eps: Rational64,
) -> Result<CubeDecode, GcError> {
    cb.gadget(|cb| {
        let mut o = Ops::new(cb, eps)?;
        cube_decode(&mut o, sample, eol)
    })
}

fn cube_decode(o: &mut Ops, sample: &[NodeId], eol: &EndOfLineInstance) -> Result<CubeDecode, GcError> {
    let d = sample.len();
    let half = o.konst(r(1, 2))?;
    // the slice bit is 1 throughout the picture; fixing it keeps translated
    // copies that cross the top of the slice on the same cell
    let mut bits = sample[..d - 1].iter().map(|&y| o.less(y, half)).collect::<Result<Vec<_>, _>>()?;
    bits.push(o.one);
    let emb = embedding_circuits(eol);
    let succ_nodes = compile_bool(o, &emb.succ, &bits)?;
    let pred_nodes = if emb.pred.gates() == emb.succ.gates() {
        succ_nodes.clone()
    } else {
        compile_bool(o, &emb.pred, &bits)?
    };
    let mut enter = Vec::with_capacity(d);
    let mut exit = Vec::with_capacity(d);
    for k in 0..d {
        let s = succ_nodes[emb.succ.outputs()[k]];
        let p = pred_nodes[emb.pred.outputs()[k]];
        if k + 1 == d {
            enter.push(p);
            exit.push(o.zero);
        } else {
            enter.push(xor(o, bits[k], p)?);
            exit.push(xor(o, bits[k], s)?);
        }
    }
    Ok(CubeDecode { bits, enter, exit })
}

fn xor(o: &mut Ops, a: NodeId, b: NodeId) -> Result<NodeId, GcError> {
    let either = o.or(a, b)?;
    let both = o.and(a, b)?;
    let nb = o.not(both)?;
    o.and(either, nb)
}

/// Per-sample geometry in cell units (side 1): signed offsets from the cell
/// center and distances to the walls at 1/2.
struct Geometry {
    off_pos: Vec<NodeId>,
    off_neg: Vec<NodeId>,
    wall: Vec<NodeId>,
}

fn geometry(o: &mut Ops, sample: &[NodeId], bits: &[NodeId]) -> Result<Geometry, GcError> {
    let half = o.konst(r(1, 2))?;
    let hi = o.konst(r(7, 12))?;
    let mut g = Geometry { off_pos: vec![], off_neg: vec![], wall: vec![] };
    for (&y, &b) in sample.iter().zip(bits) {
        let drop = o.scale(r(1, 6), b)?;
        let c = o.sub(hi, drop)?;
        let p = o.sub(y, c)?;
        let m = o.sub(c, y)?;
        let wp = o.sub(y, half)?;
        let wm = o.sub(half, y)?;
        let w = o.add(wp, wm)?;
        let six = |o: &mut Ops, x: NodeId| -> Result<NodeId, GcError> {
            let two = o.add(x, x)?;
            let four = o.add(two, two)?;
            o.add(four, two)
        };
        g.off_pos.push(six(o, p)?);
        g.off_neg.push(six(o, m)?);
        g.wall.push(six(o, w)?);
    }
    Ok(g)
}

/// Radius and scaled direction of one facet: `dir_pos/neg[k]` is the k-th
/// offset divided by max(radius, 1/16), so that the profile term is
/// ψ(radius) * dir.
pub struct Polar {
    pub radius: NodeId,
    pub dir_pos: Vec<NodeId>,
    pub dir_neg: Vec<NodeId>,
}

/// Offsets seen from one facet: its own axis drops out and the other path
/// axis (if any) carries the edge-polar coordinate sigma * (rho - 1/2).
#[allow(clippy::too_many_arguments)]
fn polar_block(
    o: &mut Ops,
    geo: &Geometry,
    bits: &[NodeId],
    own: &[NodeId],
    other: &[NodeId],
    edge_pos: NodeId,
    edge_neg: NodeId,
) -> Result<Polar, GcError> {
    let d = bits.len();
    let mut mag = Vec::with_capacity(d);
    let mut sign = Vec::with_capacity(d);
    for k in 0..d {
        let either = o.or(own[k], other[k])?;
        let plain = o.not(either)?;
        let pp = o.mask(plain, geo.off_pos[k])?;
        let pm = o.mask(plain, geo.off_neg[k])?;
        // sigma_k = +1 exactly when the bit is clear; the slice axis has
        // its bit set inside the picture
        let nb = o.not(bits[k])?;
        let sig_pos = o.mask(nb, edge_pos)?;
        let sig_pos2 = o.mask(bits[k], edge_neg)?;
        let ep = o.add(sig_pos, sig_pos2)?;
        let sig_neg = o.mask(nb, edge_neg)?;
        let sig_neg2 = o.mask(bits[k], edge_pos)?;
        let en = o.add(sig_neg, sig_neg2)?;
        let ep = o.mask(other[k], ep)?;
        let en = o.mask(other[k], en)?;
        let pos = o.add(pp, ep)?;
        let neg = o.add(pm, en)?;
        mag.push(o.add(pos, neg)?);
        sign.push(o.less(neg, pos)?);
    }
    let mut radius = o.zero;
    for &m in &mag {
        radius = o.max2(radius, m)?;
    }
    let floor = o.konst(r(1, 16))?;
    let denom = o.max2(floor, radius)?;
    let mut dir_pos = Vec::with_capacity(d);
    let mut dir_neg = Vec::with_capacity(d);
    for k in 0..d {
        let q = o.div(mag[k], denom)?;
        dir_pos.push(o.mask(sign[k], q)?);
        let ns = o.not(sign[k])?;
        dir_neg.push(o.mask(ns, q)?);
    }
    Ok(Polar { radius, dir_pos, dir_neg })
}

/// Polar block of one facet, from raw sample nodes.
pub fn build_polar_block(
    cb: &mut CircuitBuilder,
    sample: &[NodeId],
    decode: &CubeDecode,
    facet_is_exit: bool,
    eps: Rational64,
) -> Result<Polar, GcError> {
    cb.gadget(|cb| {
        let mut o = Ops::new(cb, eps)?;
        let geo = geometry(&mut o, sample, &decode.bits)?;
        let (ep, en) = edge_coordinate(&mut o, &geo, decode)?;
        let (own, other) = if facet_is_exit { (&decode.exit, &decode.enter) } else { (&decode.enter, &decode.exit) };
        polar_block(&mut o, &geo, &decode.bits, own, other, ep, en)
    })
}

/// rho - 1/2 split into parts, rho the larger distance to the two path walls.
fn edge_coordinate(o: &mut Ops, geo: &Geometry, dec: &CubeDecode) -> Result<(NodeId, NodeId), GcError> {
    let (d_in, d_out) = path_wall_distances(o, geo, dec)?;
    let rho = o.max2(d_in, d_out)?;
    let half = o.konst(r(1, 2))?;
    Ok((o.sub(rho, half)?, o.sub(half, rho)?))
}

fn path_wall_distances(o: &mut Ops, geo: &Geometry, dec: &CubeDecode) -> Result<(NodeId, NodeId), GcError> {
    let mut din = Vec::new();
    let mut dout = Vec::new();
    for k in 0..geo.wall.len() {
        din.push(o.mask(dec.enter[k], geo.wall[k])?);
        dout.push(o.mask(dec.exit[k], geo.wall[k])?);
    }
    Ok((o.sum(&din)?, o.sum(&dout)?))
}

/// Profile coefficients of a facet at the given radius (cell units, one ramp
/// step = 1/16): alpha split in parts, psi, and gamma for ordinary and slice
/// travel.
struct Profile {
    alpha_pos: NodeId,
    alpha_neg: NodeId,
    psi: NodeId,
    gamma: NodeId,
    gamma_slice: NodeId,
}

fn profile(o: &mut Ops, radius: NodeId) -> Result<Profile, GcError> {
    let r2 = o.ramp(radius, r(1, 16), 4)?;
    let r3 = o.ramp(radius, r(2, 16), 4)?;
    let r4 = o.ramp(radius, r(3, 16), 4)?;
    let r5 = o.ramp(radius, r(4, 16), 3)?;
    let r6 = o.ramp(radius, r(6, 16), 3)?;
    let a1 = o.sub(o.one, r2)?;
    let a2 = o.sub(r3, r6)?;
    Ok(Profile {
        alpha_pos: o.sub(a1, a2)?,
        alpha_neg: o.sub(a2, a1)?,
        psi: o.sub(o.one, r4)?,
        gamma: r5,
        gamma_slice: r6,
    })
}

/// Displacement of one sample, scaled by delta, as (g+, g-), together with
/// the bookkeeping nodes recorded in the symbol table.
pub struct DisplacementBlock {
    pub decode: CubeDecode,
    pub has_enter: NodeId,
    pub has_exit: NodeId,
    pub radius_in: NodeId,
    pub radius_out: NodeId,
    pub corner: NodeId,
    pub g_plus: Vec<NodeId>,
    pub g_minus: Vec<NodeId>,
}

/// Node names are local to the current scope, which must be fresh.
pub fn build_displacement_block(
    cb: &mut CircuitBuilder,
    sample: &[NodeId],
    eol: &EndOfLineInstance,
    params: &CompileParams,
) -> Result<DisplacementBlock, GcError> {
    let corner_width = params.corner()?;
    let mut o = Ops::new(cb, params.eps)?;
    let o = &mut o;
    let d = sample.len();
    let dec = cube_decode(o, sample, eol)?;
    let geo = geometry(o, sample, &dec.bits)?;
    let has_in = o.or_all(&dec.enter)?;
    let has_out = o.or_all(&dec.exit)?;
    let no_in = o.not(has_in)?;
    let no_out = o.not(has_out)?;
    let turn = o.and(has_in, has_out)?;
    let start = o.and(no_in, has_out)?;
    let end = o.and(has_in, no_out)?;
    let off = o.and(no_in, no_out)?;

    let (d_in, d_out) = path_wall_distances(o, &geo, &dec)?;
    let rho = o.max2(d_in, d_out)?;
    let half = o.konst(r(1, 2))?;
    let edge_pos = o.sub(rho, half)?;
    let edge_neg = o.sub(half, rho)?;

    // facet weights
    // halves, since the sum of two distances can exceed 1
    let h_in = o.scale(r(1, 2), d_in)?;
    let h_out = o.scale(r(1, 2), d_out)?;
    let both = o.add(h_in, h_out)?;
    let w = o.div(h_in, both)?;
    let one_minus_w = o.sub(o.one, w)?;
    let fade_in = o.sub(o.one, d_in)?;
    let fade_out = o.sub(o.one, d_out)?;
    let t1 = o.mask(turn, one_minus_w)?;
    let t2 = o.mask(end, fade_in)?;
    let w_in = o.add(t1, t2)?;
    let t1 = o.mask(turn, w)?;
    let t2 = o.mask(start, fade_out)?;
    let w_out = o.add(t1, t2)?;
    let t1 = o.mask(end, d_in)?;
    let t2 = o.mask(start, d_out)?;
    let t3 = o.add(t1, t2)?;
    let w_rest = o.add(t3, off)?;

    let mut plus: Vec<Vec<NodeId>> = vec![Vec::new(); d];
    let mut minus: Vec<Vec<NodeId>> = vec![Vec::new(); d];
    let mut radii = Vec::new();
    for exit_facet in [false, true] {
        let (own, other, weight) = if exit_facet { (&dec.exit, &dec.enter, w_out) } else { (&dec.enter, &dec.exit, w_in) };
        let polar = polar_block(o, &geo, &dec.bits, own, other, edge_pos, edge_neg)?;
        radii.push(polar.radius);
        let prof = profile(o, polar.radius)?;
        let ap = o.mul(weight, prof.alpha_pos)?;
        let an = o.mul(weight, prof.alpha_neg)?;
        let gamma = if exit_facet {
            prof.gamma
        } else {
            let slice_in = dec.enter[d - 1];
            let not_slice = o.not(slice_in)?;
            let a = o.mask(slice_in, prof.gamma_slice)?;
            let b = o.mask(not_slice, prof.gamma)?;
            o.add(a, b)?
        };
        let gw = o.mul(weight, gamma)?;
        let psi = o.mul(weight, prof.psi)?;
        plus[d - 1].push(gw);
        for k in 0..d {
            // travel is +e_k when entering a cell whose bit is clear, or
            // leaving a cell whose bit is set
            let nb = o.not(dec.bits[k])?;
            let s = if exit_facet { dec.bits[k] } else { nb };
            let ns = o.not(s)?;
            let fwd = o.and(own[k], s)?;
            let back = o.and(own[k], ns)?;
            let a = o.mask(fwd, ap)?;
            plus[k].push(a);
            let a = o.mask(back, an)?;
            plus[k].push(a);
            let a = o.mask(fwd, an)?;
            minus[k].push(a);
            let a = o.mask(back, ap)?;
            minus[k].push(a);
            let pp = o.mul(polar.dir_neg[k], psi)?;
            plus[k].push(pp);
            let pm = o.mul(polar.dir_pos[k], psi)?;
            minus[k].push(pm);
        }
    }
    plus[d - 1].push(w_rest);

    // corner: two coordinates close to their walls
    let width = o.konst(corner_width * Rational64::from_integer(6))?;
    let near = geo.wall.iter().map(|&wk| o.less(wk, width)).collect::<Result<Vec<_>, _>>()?;
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            pairs.push(o.and(near[i], near[j])?);
        }
    }
    let corner = o.or_all(&pairs)?;
    let not_corner = o.not(corner)?;

    let delta = params.delta;
    let mut g_plus = Vec::with_capacity(d);
    let mut g_minus = Vec::with_capacity(d);
    for k in 0..d {
        let p = o.sum(&plus[k])?;
        let m = o.sum(&minus[k])?;
        let mut p = o.mask(not_corner, p)?;
        let m = o.mask(not_corner, m)?;
        if k == d - 1 {
            p = o.add(p, corner)?;
        }
        g_plus.push(o.scale(delta, p)?);
        g_minus.push(o.scale(delta, m)?);
    }
    Ok(DisplacementBlock {
        decode: dec,
        has_enter: has_in,
        has_exit: has_out,
        radius_in: radii[0],
        radius_out: radii[1],
        corner,
        g_plus,
        g_minus,
    })
}

/// Mean of the per-sample pairs: each term scaled by 1/L, then summed.
pub fn build_average(
    cb: &mut CircuitBuilder,
    blocks: &[(Vec<NodeId>, Vec<NodeId>)],
) -> Result<(Vec<NodeId>, Vec<NodeId>), GcError> {
    let l = blocks.len();
    if l == 0 {
        return Err(GcError::Param("no samples to average".into()));
    }
    let d = blocks[0].0.len();
    let z = r(1, l as i64);
    let mut side = |sign: &str, pick: &dyn Fn(&(Vec<NodeId>, Vec<NodeId>)) -> &Vec<NodeId>| -> Result<Vec<NodeId>, GcError> {
        (0..d)
            .map(|k| {
                let mut acc = cb.constant(&format!("avg{sign}{}_0", k + 1), Rational64::zero())?;
                for (li, b) in blocks.iter().enumerate() {
                    let s = cb.scale(&format!("avg{sign}{}_s{li}", k + 1), z, pick(b)[k])?;
                    acc = cb.add(&format!("avg{sign}{}_{}", k + 1, li + 1), acc, s)?;
                }
                cb.copy(&format!("g{}{sign}", k + 1), acc)
            })
            .collect()
    };
    let plus = side("+", &|b| &b.0)?;
    let minus = side("-", &|b| &b.1)?;
    Ok((plus, minus))
}

/// y_k = (y_k + g_k+) - g_k-, with y_k the output of the second gate.
pub fn close_loop(cb: &mut CircuitBuilder, y: &[NodeId], g_plus: &[NodeId], g_minus: &[NodeId]) -> Result<(), GcError> {
    for (k, ((&yk, &gp), &gm)) in y.iter().zip(g_plus).zip(g_minus).enumerate() {
        let w = cb.add(&format!("w{}", k + 1), yk, gp)?;
        cb.circuit.add_gate(Gate::binary(GateType::Sub, w, gm, yk))?;
    }
    Ok(())
}

pub fn compile(eol: &EndOfLineInstance, params: &CompileParams) -> Result<CompiledBundle, GcError> {
    let n = eol.n();
    let d = 2 * n + 2;
    granularity(params.eps)?;
    let samples = params.sample_count()?;
    if params.delta <= Rational64::zero() || params.delta > r(1, 8) {
        return Err(GcError::Param(format!("delta = {} must lie in (0, 1/8]", params.delta)));
    }
    let mut cb = CircuitBuilder::new();
    let y = (1..=d).map(|k| cb.input(&format!("y{k}"))).collect::<Result<Vec<_>, _>>()?;
    let points = build_equiangle(&mut cb, &y, params.eps, samples)?;
    let mut symbols = BTreeMap::new();
    let mut blocks = Vec::with_capacity(samples);
    let mut pairs = Vec::with_capacity(samples);
    for (l, pt) in points.into_iter().enumerate() {
        let blk = cb.scoped(&format!("s{l}"), |cb| build_displacement_block(cb, &pt, eol, params))?;
        let tag = |s: &str| format!("sample{l}.{s}");
        for k in 0..d {
            symbols.insert(tag(&format!("bit{}", k + 1)), blk.decode.bits[k]);
            symbols.insert(tag(&format!("enter{}", k + 1)), blk.decode.enter[k]);
            symbols.insert(tag(&format!("exit{}", k + 1)), blk.decode.exit[k]);
            symbols.insert(tag(&format!("point{}", k + 1)), pt[k]);
            symbols.insert(tag(&format!("g{}+", k + 1)), blk.g_plus[k]);
            symbols.insert(tag(&format!("g{}-", k + 1)), blk.g_minus[k]);
        }
        symbols.insert(tag("has_enter"), blk.has_enter);
        symbols.insert(tag("has_exit"), blk.has_exit);
        symbols.insert(tag("radius_in"), blk.radius_in);
        symbols.insert(tag("radius_out"), blk.radius_out);
        symbols.insert(tag("corner"), blk.corner);
        pairs.push((blk.g_plus.clone(), blk.g_minus.clone()));
        blocks.push(SampleBlock {
            point: pt,
            bits: blk.decode.bits,
            enter: blk.decode.enter,
            exit: blk.decode.exit,
            has_enter: blk.has_enter,
            has_exit: blk.has_exit,
            radius_in: blk.radius_in,
            radius_out: blk.radius_out,
            corner: blk.corner,
            g_plus: blk.g_plus,
            g_minus: blk.g_minus,
        });
    }
    let (g_plus, g_minus) = build_average(&mut cb, &pairs)?;
    close_loop(&mut cb, &y, &g_plus, &g_minus)?;
    for k in 0..d {
        symbols.insert(format!("y{}", k + 1), y[k]);
        symbols.insert(format!("g{}+", k + 1), g_plus[k]);
        symbols.insert(format!("g{}-", k + 1), g_minus[k]);
    }
    Ok(CompiledBundle {
        circuit: cb.finish(),
        n,
        params: params.clone(),
        inputs: y,
        g_plus,
        g_minus,
        samples: blocks,
        symbols,
    })
}

/// The matching direct evaluator for a compiled bundle.
pub fn oracle(eol: &EndOfLineInstance, params: &CompileParams) -> BrouwerInstance {
    let delta = params.delta.to_f64().unwrap_or(DEFAULT_DELTA);
    BrouwerInstance::new(eol.clone(), delta).expect("delta checked at compile time")
}
