//! Acceptance run: one PASS/FAIL line per criterion. Built without the test
//! harness so the lines always reach stdout; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use eolchain::brouwer::{BrouwerInstance, Region, TubeStatus, DEFAULT_DELTA, H};
use eolchain::brouwer2circuit::{compile, oracle, CompileParams};
use eolchain::endofline::{make_line_instance, verify_eol_solution, EndOfLineInstance};
use eolchain::extensions::{
    build_bayesian, build_relative_bimatrix, decode_bayesian, decode_relative, encode_bayesian, find_relative_ne,
    interim_polymatrix, mismatch_mass, verify_bayes_ane,
};
use eolchain::fanout2::transform_fanout2;
use eolchain::gadgets::{build_divide, build_interpolate, build_max, build_multiply, CircuitBuilder};
use eolchain::games::{
    ane_to_wsne, certify_gadget, gadget_for_gate, solve_game_small, verify_ane, verify_wsne, wsne_conversion_bound,
    MixedProfile, PolymatrixGame,
};
use eolchain::gcircuit::{check_assignment, Assignment, ForwardPlan, Gate, GateType};
use eolchain::pipeline::{run_pipeline, PipelineParams};

/// Fidelity constant for the compiled displacement, fitted on n = 1
/// (worst observed 0.020) and frozen.
const C_FIDELITY: f64 = 0.03;
/// Fan-out 2 size constant: gates(after) / gates(before) <= C_SIZE / eps'.
/// Observed 5.86 to 6.08 on the compiled n = 1 circuit.
const C_SIZE: f64 = 6.5;

type Outcome = Result<String, String>;

fn r(p: i64, q: i64) -> Rational64 {
    Rational64::new(p, q)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn instances() -> Vec<EndOfLineInstance> {
    vec![
        make_line_instance(1, &[(0, 1)]).unwrap(),
        make_line_instance(2, &[(0, 1), (1, 3), (3, 2)]).unwrap(),
        make_line_instance(3, &[(0, 5), (5, 6), (3, 7), (7, 2)]).unwrap(),
    ]
}

fn unit_e_d(dim: usize, delta: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[dim - 1] = delta;
    v
}

fn picture_point(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    (0..d)
        .map(|k| if k + 1 == d { rng.gen_range(2.0 / 6.0..0.5) } else { rng.gen_range(2.0 / 6.0..4.0 / 6.0) })
        .collect()
}

/// Mostly near the picture, sometimes anywhere in the cube.
fn any_point(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    if rng.gen_bool(0.5) {
        (0..d).map(|k| if k + 1 == d { rng.gen_range(0.3..0.6) } else { rng.gen_range(0.3..0.7) }).collect()
    } else {
        (0..d).map(|_| rng.gen::<f64>()).collect()
    }
}

/// A point strictly inside cell `s` (margin keeps it off every wall).
fn inside_cell(rng: &mut impl Rng, b: &BrouwerInstance, s: u64) -> Vec<f64> {
    b.cell_center_point(s).iter().map(|&c| c + rng.gen_range(-0.49..0.49) * H).collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_lip: f64 = 0.0;
    let mut min_norm = f64::INFINITY;
    let mut worst_fact = 0.0f64;
    let mut counts = [0usize; 3];
    for eol in instances() {
        let b = BrouwerInstance::new(eol, DEFAULT_DELTA).map_err(|e| e.to_string())?;
        let d = b.dim();
        let want = unit_e_d(d, b.delta());
        for _ in 0..100_000 {
            let x = any_point(&mut rng, d);
            let scale = 10f64.powf(-rng.gen_range(2.0..6.0));
            let y: Vec<f64> = x.iter().map(|&v| (v + scale * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0)).collect();
            let dist = sup_diff(&x, &y);
            if dist > 0.0 {
                let gx = b.displacement(&x).unwrap();
                let gy = b.displacement(&y).unwrap();
                worst_lip = worst_lip.max(sup_diff(&gx, &gy) / dist);
            }
        }
        let mut taken = 0;
        while taken < 100_000 {
            let x = any_point(&mut rng, d);
            let info = b.locate(&x).unwrap();
            if info.region == Region::Picture && b.is_terminal_cell(b.cell_of(&x)) {
                continue;
            }
            min_norm = min_norm.min(sup(&b.displacement(&x).unwrap()));
            taken += 1;
        }
        // constructed points
        let states = b.n_states();
        let tube_cells: Vec<u64> = (0..states).filter(|&s| b.locate(&b.cell_center_point(s)).unwrap().tube_status != TubeStatus::OffTube).collect();
        let off_cells: Vec<u64> = (0..states).filter(|s| !tube_cells.contains(s)).collect();
        for i in 0..10_000 {
            let pt = match i % 3 {
                0 => {
                    // corner: two or more coordinates on walls of one cell
                    let s = rng.gen_range(0..states);
                    let mut pt = inside_cell(&mut rng, &b, s);
                    let c = b.cell_center_point(s);
                    let m = rng.gen_range(2..=d);
                    let mut axes: Vec<usize> = (0..d).collect();
                    for j in 0..m {
                        let k = rng.gen_range(j..d);
                        axes.swap(j, k);
                        let ax = axes[j];
                        pt[ax] = c[ax] + if rng.gen_bool(0.5) { H / 2.0 } else { -H / 2.0 };
                    }
                    counts[0] += 1;
                    pt
                }
                1 => {
                    // outer facet of a tube cell; the path crosses only the
                    // walls at 1/2 of its entry and exit axes
                    let s = tube_cells[rng.gen_range(0..tube_cells.len())];
                    let c = b.cell_center_point(s);
                    let info = b.locate(&c).unwrap();
                    let through: Vec<usize> = info.enter_dir.iter().chain(&info.exit_dir).map(|a| a.axis).collect();
                    let mut pt = inside_cell(&mut rng, &b, s);
                    loop {
                        let ax = rng.gen_range(0..d);
                        let wall = c[ax] + if rng.gen_bool(0.5) { H / 2.0 } else { -H / 2.0 };
                        if !(through.contains(&ax) && (wall - 0.5).abs() < 1e-12) {
                            pt[ax] = wall;
                            break;
                        }
                    }
                    counts[1] += 1;
                    pt
                }
                _ => {
                    if off_cells.is_empty() {
                        continue;
                    }
                    counts[2] += 1;
                    let s = off_cells[rng.gen_range(0..off_cells.len())];
                    inside_cell(&mut rng, &b, s)
                }
            };
            worst_fact = worst_fact.max(sup_diff(&b.displacement(&pt).unwrap(), &want));
        }
    }
    let detail = format!(
        "Lipschitz ratio {worst_lip:.2} (<= 80), min |g| off terminals {min_norm:.5} (>= {:.5}), corner/facet/off-tube points {counts:?} deviate {worst_fact:.1e}",
        1.0 / 88.0
    );
    if worst_lip <= 80.0 && min_norm >= 1.0 / 88.0 && worst_fact <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_2() -> Outcome {
    let eol = make_line_instance(1, &[(0, 1)]).unwrap();
    let b = BrouwerInstance::new(eol, DEFAULT_DELTA).unwrap();
    let d = b.dim();
    let m = 97usize;
    let tol = 1.0 / 200.0;
    let hits: Vec<Vec<f64>> = (0..m.pow(d as u32 - 1))
        .into_par_iter()
        .fold(
            || (Vec::new(), vec![0.0; d], vec![0.0; d]),
            |(mut acc, mut pt, mut g), idx| {
                let mut rest = idx;
                for k in 0..d - 1 {
                    pt[k] = (rest % m) as f64 / 96.0;
                    rest /= m;
                }
                for last in 0..m {
                    pt[d - 1] = last as f64 / 96.0;
                    b.displacement_into(&pt, &mut g);
                    if sup(&g) <= tol {
                        acc.push(pt.clone());
                    }
                }
                (acc, pt, g)
            },
        )
        .map(|t| t.0)
        .reduce(Vec::new, |mut a, mut c| {
            a.append(&mut c);
            a
        });
    let mut covered = std::collections::BTreeSet::new();
    for pt in &hits {
        let info = b.locate(pt).unwrap();
        let s = b.cell_of(pt);
        if info.region != Region::Picture || !b.is_terminal_cell(s) {
            return Err(format!("small displacement outside every terminal cell at {pt:?}"));
        }
        let bits = b.decode_fixed_point(pt, tol).map_err(|e| e.to_string())?;
        match bits {
            Some(x) if verify_eol_solution(b.eol(), &x).unwrap() => {
                covered.insert(s);
            }
            other => return Err(format!("decode at {pt:?} gave {other:?}")),
        }
    }
    let terminals: Vec<u64> = (0..b.n_states()).filter(|&s| b.is_terminal_cell(s)).collect();
    let missing: Vec<u64> = terminals.iter().copied().filter(|s| !covered.contains(s)).collect();
    let detail = format!("{} grid points, {} near-fixed, terminal cells {terminals:?} all hit", m.pow(d as u32), hits.len());
    if missing.is_empty() && !terminals.is_empty() {
        Ok(detail)
    } else {
        Err(format!("terminal cells without a near-fixed grid point: {missing:?}"))
    }
}

fn criterion_3() -> Outcome {
    let eps = r(1, 4096);
    let s = 1.0 / 64.0;
    let grid: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
    let two = |f: &dyn Fn(&mut CircuitBuilder, usize, usize) -> usize| {
        let mut cb = CircuitBuilder::new();
        let a = cb.input("a").unwrap();
        let b = cb.input("b").unwrap();
        let out = f(&mut cb, a, b);
        let c = cb.finish();
        (ForwardPlan::new(&c, &[a, b]).unwrap(), out)
    };
    let (mult, mo) = two(&|cb, a, b| build_multiply(cb, a, b, eps).unwrap().out());
    let (div, dout) = two(&|cb, a, b| build_divide(cb, a, b, eps).unwrap().out());
    let (max2, xo) = two(&|cb, a, b| build_max(cb, &[a, b], eps).unwrap().out());
    let (mut w_mul, mut w_div, mut w_max) = (0.0f64, 0.0f64, 0.0f64);
    for &a in &grid {
        for &b in &grid {
            w_mul = w_mul.max((mult.evaluate(&[a, b]).values[mo] - a * b).abs() / (4.0 * s));
            w_max = w_max.max((max2.evaluate(&[a, b]).values[xo] - a.max(b)).abs() / (4.0 * s));
            if b >= 0.25 && a <= b {
                w_div = w_div.max((div.evaluate(&[a, b]).values[dout] - a / b).abs() / (3.0 * s / b));
            }
        }
    }
    // three-input MAX as well
    let mut cb = CircuitBuilder::new();
    let ins: Vec<usize> = (0..3).map(|i| cb.input(&format!("a{i}")).unwrap()).collect();
    let o3 = build_max(&mut cb, &ins, eps).unwrap().out();
    let max3 = ForwardPlan::new(&cb.finish(), &ins).unwrap();
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                w_max = w_max.max((max3.evaluate(&[a, b, c]).values[o3] - a.max(b).max(c)).abs() / (4.0 * s));
            }
        }
    }
    // INTERPOLATE: the final gate adds two products, each depending on one
    // value input and both weights, so the 65^4 sweep is assembled from the
    // two 65^3 cone sweeps; a random sample is checked against full runs.
    let mut cb = CircuitBuilder::new();
    let ins: Vec<usize> = (0..4).map(|i| cb.input(&format!("x{i}")).unwrap()).collect();
    let io = build_interpolate(&mut cb, ins[0], ins[1], ins[2], ins[3], eps).unwrap().out();
    let circ = cb.finish();
    let last = &circ.gates()[circ.producer(io).unwrap()];
    if last.kind != GateType::Add {
        return Err("INTERPOLATE does not end in an addition".into());
    }
    let (pa, pb) = (last.in1.unwrap(), last.in2.unwrap());
    let plan = ForwardPlan::new(&circ, &ins).unwrap();
    let n = grid.len();
    let mut part_a = vec![0.0; n * n * n];
    let mut part_b = vec![0.0; n * n * n];
    for (i, &wa) in grid.iter().enumerate() {
        for (j, &wb) in grid.iter().enumerate() {
            for (k, &v) in grid.iter().enumerate() {
                part_a[(i * n + j) * n + k] = plan.evaluate(&[v, wa, 0.0, wb]).values[pa];
                part_b[(i * n + j) * n + k] = plan.evaluate(&[0.0, wa, v, wb]).values[pb];
            }
        }
    }
    let mut w_int = 0.0f64;
    for (i, &wa) in grid.iter().enumerate() {
        for (j, &wb) in grid.iter().enumerate() {
            if wa + wb == 0.0 {
                continue;
            }
            let bound = 30.0 * s / (wa + wb);
            for (ka, &a) in grid.iter().enumerate() {
                for (kb, &b) in grid.iter().enumerate() {
                    let got = (part_a[(i * n + j) * n + ka] + part_b[(i * n + j) * n + kb]).min(1.0);
                    let want = (wa * a + wb * b) / (wa + wb);
                    w_int = w_int.max((got - want).abs() / bound);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..20_000 {
        let idx: Vec<usize> = (0..4).map(|_| rng.gen_range(0..n)).collect();
        let full = plan.evaluate(&[grid[idx[0]], grid[idx[1]], grid[idx[2]], grid[idx[3]]]).values[io];
        let cell = (idx[1] * n + idx[3]) * n;
        let split = (part_a[cell + idx[0]] + part_b[cell + idx[2]]).min(1.0);
        if full != split {
            return Err(format!("cone decomposition disagrees with a full run at {idx:?}"));
        }
    }
    let detail = format!(
        "error / bound: MULT {w_mul:.3}, DIV {w_div:.3}, MAX {w_max:.3}, INTERP {w_int:.3} (all must be <= 1)"
    );
    if [w_mul, w_div, w_max, w_int].iter().all(|&w| w <= 1.0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_4() -> Outcome {
    let eps = r(1, 4096);
    let bound = C_FIDELITY * (1.0f64 / 4096.0).powf(0.25);
    let corner_bound = 10.0 / 64.0;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = Vec::new();
    let mut worst_corner: f64 = 0.0;
    for eol in instances() {
        let b = compile(&eol, &CompileParams::resolved(eps)).map_err(|e| e.to_string())?;
        let plan = b.plan().unwrap();
        let o = oracle(&eol, &b.params);
        let d = o.dim();
        let mut w: f64 = 0.0;
        for _ in 0..10_000 {
            let y = picture_point(&mut rng, d);
            w = w.max(sup_diff(&b.forward_displacement(&plan, &y), &o.displacement(&y).unwrap()));
        }
        worst.push(w);
        // corner points with the corner detectors forced both ways
        let corners: Vec<usize> = b.samples.iter().map(|s| s.corner).collect();
        let mut pinned = b.inputs.clone();
        pinned.extend(&corners);
        let forced = ForwardPlan::new(&b.circuit, &pinned).unwrap();
        let target = unit_e_d(d, o.delta());
        for _ in 0..300 {
            let mut y = picture_point(&mut rng, d);
            let i = rng.gen_range(0..d - 1);
            let walls = [2.0 / 6.0, 0.5, 4.0 / 6.0];
            y[i] = walls[rng.gen_range(0..3)] + rng.gen_range(-1e-3..1e-3);
            y[d - 1] = if rng.gen_bool(0.5) { 0.5 } else { 2.0 / 6.0 } - rng.gen_range(1e-4..1e-3);
            for v in [0.0, 1.0] {
                let mut pins = y.clone();
                pins.extend(std::iter::repeat_n(v, corners.len()));
                let x = forced.evaluate(&pins);
                let g: Vec<f64> = b.g_plus.iter().zip(&b.g_minus).map(|(&p, &m)| x.values[p] - x.values[m]).collect();
                worst_corner = worst_corner.max(sup_diff(&g, &target));
            }
        }
    }
    let detail = format!(
        "worst |g_circuit - g| for n=1,2,3: {:.5}/{:.5}/{:.5} (bound {bound:.5} = {C_FIDELITY}*eps^1/4); corner worst {worst_corner:.5} (bound {corner_bound:.5})",
        worst[0], worst[1], worst[2]
    );
    if worst.iter().all(|&w| w <= bound) && worst_corner <= corner_bound {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let eol = make_line_instance(1, &[(0, 1)]).unwrap();
    let b = compile(&eol, &PipelineParams::desk().compile_params()).map_err(|e| e.to_string())?;
    let c = &b.circuit;
    let loop_gates: Vec<usize> = (0..c.gates().len()).filter(|&g| b.inputs.contains(&c.gates()[g].out)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut notes = Vec::new();
    for (q, pins) in [(8i64, 1000usize), (32, 1000), (96, 0)] {
        let ep = r(1, q);
        let t = transform_fanout2(c, ep).map_err(|e| e.to_string())?;
        if t.max_fanout() != 2 {
            return Err(format!("eps'=1/{q}: max fan-out {}", t.max_fanout()));
        }
        let ratio = t.gates().len() as f64 / c.gates().len() as f64;
        if ratio > C_SIZE * q as f64 {
            return Err(format!("eps'=1/{q}: size ratio {ratio:.1} above {C_SIZE}/eps'"));
        }
        let plan = ForwardPlan::new(&t, &b.inputs).unwrap();
        let mut bad_pins = 0;
        for _ in 0..pins {
            let y: Vec<f64> = (0..b.inputs.len()).map(|_| rng.gen::<f64>()).collect();
            let x = plan.evaluate(&y);
            let restricted = Assignment { values: x.values[..c.n_nodes()].to_vec() };
            let bad = check_assignment(c, &restricted, 1.0 / q as f64).map_err(|e| e.to_string())?;
            if bad.iter().any(|g| !loop_gates.contains(g)) {
                bad_pins += 1;
            }
        }
        if bad_pins > 0 {
            return Err(format!("eps'=1/{q}: {bad_pins} pins diverge by more than eps'"));
        }
        notes.push(format!("1/{q}: ratio {ratio:.0} = {:.2}/eps'{}", ratio / q as f64, if pins > 0 { format!(", {pins} pins ok") } else { String::new() }));
    }
    Ok(format!("max fan-out 2; {}", notes.join("; ")))
}

fn criterion_6() -> Outcome {
    let gates = [
        Gate::constant(r(3, 10), 0),
        Gate::constant(r(1, 1), 0),
        Gate::scale(r(1, 2), 0, 1),
        Gate::scale(r(1, 1), 0, 1),
        Gate::unary(GateType::Copy, 0, 1),
        Gate::unary(GateType::Not, 0, 1),
        Gate::binary(GateType::Add, 0, 1, 2),
        Gate::binary(GateType::Sub, 0, 1, 2),
        Gate::binary(GateType::Less, 0, 1, 2),
        Gate::binary(GateType::Or, 0, 1, 2),
        Gate::binary(GateType::And, 0, 1, 2),
    ];
    let mut slowest = Duration::ZERO;
    for g in &gates {
        let t = Instant::now();
        if !certify_gadget(&gadget_for_gate(g), 0.05, 0.01) {
            return Err(format!("{:?} gadget fails", g.kind));
        }
        slowest = slowest.max(t.elapsed());
    }
    Ok(format!("all nine gate types certified ({} gadgets, slowest {:.1?})", gates.len(), slowest))
}

fn random_game(rng: &mut impl Rng, n: usize) -> PolymatrixGame {
    let mut g = PolymatrixGame::new();
    for v in 0..n {
        g.add_player((v % 2) as u8, 2).unwrap();
    }
    for i in 0..n {
        for j in i + 1..n {
            if g.degree(i) < 3 && g.degree(j) < 3 && rng.gen_bool(0.5) {
                let pi: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
                let pj: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
                g.add_edge(i, j, pi, pj).unwrap();
            }
        }
    }
    g
}

fn criterion_7() -> Outcome {
    let eps = 0.0025;
    let k = 1.0 + 1.0 / f64::sqrt(eps);
    let bound = wsne_conversion_bound(eps, 3);
    let move_cap = 2.0 / (k - 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let (mut done, mut unsolved, mut perturbed, mut dropped) = (0, 0, 0, 0);
    let mut worst_move: f64 = 0.0;
    while done < 100 {
        let n = rng.gen_range(5..=8);
        let g = random_game(&mut rng, n);
        let Some(ne) = solve_game_small(&g, eps, 20_000) else {
            unsolved += 1;
            continue;
        };
        // the solver's profile, plus a copy nudged off the pure actions
        let mut nudged = ne.clone();
        let tilt = rng.gen_range(0.0..2e-3);
        for v in 0..n {
            let p = nudged.p(v);
            let q = if p > 0.5 { p - tilt } else { p + tilt };
            nudged.probs[v] = vec![1.0 - q, q];
        }
        let mut cases = vec![ne];
        if verify_ane(&g, &nudged, eps).is_empty() {
            cases.push(nudged);
            perturbed += 1;
        }
        for x in cases {
            if !verify_ane(&g, &x, eps).is_empty() {
                return Err("solver output is not an eps-ANE".into());
            }
            let y = ane_to_wsne(&g, &x, eps).map_err(|e| e.to_string())?;
            if !verify_wsne(&g, &y, bound).is_empty() {
                return Err(format!("converted profile fails verify_wsne at {bound}"));
            }
            for v in 0..n {
                let l1: f64 = x.probs[v].iter().zip(&y.probs[v]).map(|(a, b)| (a - b).abs()).sum();
                worst_move = worst_move.max(l1);
                if l1 > move_cap {
                    return Err(format!("player {v} moved {l1} > {move_cap}"));
                }
                dropped += y.probs[v].iter().zip(&x.probs[v]).filter(|(a, b)| **a == 0.0 && **b > 0.0).count();
            }
        }
        done += 1;
    }
    Ok(format!(
        "100 games ({unsolved} skipped unsolved), {perturbed} nudged profiles, {dropped} actions dropped; WSNE at {bound:.4}, worst L1 move {worst_move:.4} <= {move_cap}"
    ))
}

fn criterion_8() -> Outcome {
    let eol = make_line_instance(1, &[(0, 1)]).unwrap();
    let params = PipelineParams::desk();
    let bundle = run_pipeline(&eol, &params).map_err(|e| e.to_string())?;
    if bundle.fanout.max_fanout() > 2 || bundle.game.max_degree() > 3 || !bundle.game.is_bipartite() {
        return Err("stage structure violated".into());
    }
    let fps = bundle.planted_fixed_points();
    if fps.is_empty() {
        return Err("no planted fixed point".into());
    }
    let mut notes = Vec::new();
    for y in fps {
        let seed = bundle.seed_at(&y).map_err(|e| e.to_string())?;
        let Some(sol) = bundle.solve_seeded(seed, 100) else {
            return Err(format!("seeded solve failed at {y:?}"));
        };
        let rep = bundle.decode(&sol).map_err(|e| e.to_string())?;
        if !rep.passed() {
            return Err(format!(
                "decode failed: {} game, {} circuit violations, residual {:.4}, eol_ok {}",
                rep.game_violations,
                rep.circuit_violations.len(),
                rep.residual,
                rep.eol_ok
            ));
        }
        notes.push(format!("bits {:?}, residual {:.1e}", rep.bits.unwrap_or_default(), rep.residual));
    }
    Ok(format!(
        "{} players; WSNE at {}, fan-out circuit at {}, decoded {}",
        bundle.game.n_players(),
        params.game_eps,
        2.0 * params.game_eps,
        notes.join("; ")
    ))
}

fn bipartite_game(rng: &mut impl Rng, left: usize, right: usize, edges: &[(usize, usize)]) -> PolymatrixGame {
    let mut g = PolymatrixGame::new();
    for v in 0..left + right {
        g.add_player((v >= left) as u8, 2).unwrap();
    }
    for &(i, j) in edges {
        let pi: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
        let pj: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
        g.add_edge(i, left + j, pi, pj).unwrap();
    }
    g
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut trials = 0;
    let mut leaky = 0;
    for _ in 0..30 {
        let m = rng.gen_range(1..=3);
        let mut edges = Vec::new();
        while edges.len() < m {
            let e = (rng.gen_range(0..2), rng.gen_range(0..2));
            if !edges.contains(&e) {
                edges.push(e);
            }
        }
        let g = bipartite_game(&mut rng, 2, 2, &edges);
        let Some(ne) = solve_game_small(&g, 1e-10, 20_000) else { continue };
        trials += 1;
        for compact in [false, true] {
            let bg = build_bayesian(&g, compact).map_err(|e| e.to_string())?;
            if compact && bg.actions != [14, 14] {
                return Err(format!("compact game has {:?} actions", bg.actions));
            }
            let s = encode_bayesian(&bg, &ne).map_err(|e| e.to_string())?;
            if !verify_bayes_ane(&bg, &s, 1e-9).is_empty() {
                return Err("encoded equilibrium is not a Bayesian equilibrium".into());
            }
            let back = decode_bayesian(&bg, &s, 1e-9).map_err(|e| e.to_string())?;
            if !verify_wsne(&g, &back, 1e-9).is_empty() {
                return Err("decoded Bayesian equilibrium is not an equilibrium".into());
            }
        }
        // approximate direction: leak mass to another color's action
        let eps = 0.02;
        let bg = build_bayesian(&g, true).unwrap();
        let avg = interim_polymatrix(&g).unwrap();
        let origin = bg.origin.clone().unwrap();
        let mut s = encode_bayesian(&bg, &ne).unwrap();
        let leak = rng.gen_range(0.0..0.03);
        for p in 0..2 {
            for (t, &v) in origin.nodes[p].iter().enumerate() {
                let other = 2 * ((origin.coloring.colors[v] + 1) % 7);
                let x = &mut s[p][t];
                x.iter_mut().for_each(|z| *z *= 1.0 - leak);
                x[other] += leak;
            }
        }
        if verify_bayes_ane(&bg, &s, eps).is_empty() {
            leaky += 1;
            if mismatch_mass(&bg, &s).iter().any(|m| m.2 > 2.0 * eps) {
                return Err("approximate Bayesian equilibrium mismatches too much".into());
            }
            let d: MixedProfile = decode_bayesian(&bg, &s, eps).map_err(|e| e.to_string())?;
            if !verify_ane(&avg, &d, 2.0 * eps).is_empty() {
                return Err("approximate decode misses 2 eps".into());
            }
        }
    }
    let eta = 0.01;
    let mut boxes = Vec::new();
    for n in [3usize, 4] {
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..3).map(move |k| (i, (i + k) % n))).collect();
        let g = bipartite_game(&mut rng, n, n, &edges);
        let bm = build_relative_bimatrix(&g, eta).map_err(|e| e.to_string())?;
        let (x, y) = find_relative_ne(&g, &bm, 20_000).ok_or(format!("no relative equilibrium for n={n}"))?;
        let d = decode_relative(&bm, &x, &y).map_err(|e| e.to_string())?;
        if !d.in_box(eta, 1e-9) || !d.in_band(eta, 1e-9) {
            return Err(format!("n={n} certificate outside box or band: {d:?}"));
        }
        let (lo, hi) = d.row_marginals.iter().chain(&d.col_marginals).fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        boxes.push(format!("n={n} marginals in [{lo:.5}, {hi:.5}]"));
    }
    Ok(format!(
        "{trials} Bayesian round trips (exact both ways, {leaky} leaky ones decode at 2eps), compact = 14 actions; {}",
        boxes.join(", ")
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Brouwer parameters", criterion_1),
        ("fixed point <-> line solution", criterion_2),
        ("gadget error contracts", criterion_3),
        ("compiler fidelity", criterion_4),
        ("fan-out 2 transform", criterion_5),
        ("game gadgets", criterion_6),
        ("ANE to WSNE conversion", criterion_7),
        ("end-to-end round trip", criterion_8),
        ("extensions", criterion_9),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let t = Instant::now();
        let res = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("criterion {} ({name}): PASS [{secs:.1}s] {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1}s] {d}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
