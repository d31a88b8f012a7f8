//! Polymatrix games with equilibrium verifiers, the gate gadgets that turn a
//! generalized circuit into a degree-3 bipartite game, and the conversion
//! from approximate to well-supported equilibria.

use std::fmt::Write as _;

use num_rational::Rational64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gcircuit::{gate_holds, Assignment, GateType, Gate, GeneralizedCircuit, NodeId};

/// Probabilities at or below this are outside the support.
pub const SUPPORT_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("player {0} does not exist")]
    Player(usize),
    #[error("player needs at least one action")]
    NoActions,
    #[error("payoff block for edge ({i},{j}) has the wrong shape")]
    Shape { i: usize, j: usize },
    #[error("payoff {0} is not a finite nonnegative number")]
    Payoff(f64),
    #[error("edge ({0},{1}) is a self-loop or a duplicate")]
    Edge(usize, usize),
    #[error("profile: {0}")]
    Profile(String),
    #[error("node {node} has fan-out {fanout}; at most 2 is supported")]
    FanOut { node: String, fanout: usize },
    #[error("gate scale {0} is above 1 and would leave the payoff range")]
    ZetaRange(Rational64),
    #[error("profile is not an approximate equilibrium at eps = {eps} (players {players:?})")]
    NotAne { eps: f64, players: Vec<usize> },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// One bimatrix block. Both tables are indexed `[a_i * k_j + a_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub pay_i: Vec<f64>,
    pub pay_j: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolymatrixGame {
    actions: Vec<usize>,
    sides: Vec<u8>,
    edges: Vec<Edge>,
    /// (edge index, player is the edge's `i`)
    incident: Vec<Vec<(usize, bool)>>,
}

impl PolymatrixGame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_player(&mut self, side: u8, actions: usize) -> Result<usize, GameError> {
        if actions == 0 {
            return Err(GameError::NoActions);
        }
        self.actions.push(actions);
        self.sides.push(side);
        self.incident.push(Vec::new());
        Ok(self.actions.len() - 1)
    }

    pub fn add_edge(&mut self, i: usize, j: usize, pay_i: Vec<f64>, pay_j: Vec<f64>) -> Result<usize, GameError> {
        for p in [i, j] {
            if p >= self.actions.len() {
                return Err(GameError::Player(p));
            }
        }
        if i == j || self.incident[i].iter().any(|&(e, _)| self.edges[e].i == j || self.edges[e].j == j) {
            return Err(GameError::Edge(i, j));
        }
        let size = self.actions[i] * self.actions[j];
        if pay_i.len() != size || pay_j.len() != size {
            return Err(GameError::Shape { i, j });
        }
        if let Some(&bad) = pay_i.iter().chain(&pay_j).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(GameError::Payoff(bad));
        }
        let e = self.edges.len();
        self.edges.push(Edge { i, j, pay_i, pay_j });
        self.incident[i].push((e, true));
        self.incident[j].push((e, false));
        Ok(e)
    }

    pub fn n_players(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self, v: usize) -> usize {
        self.actions[v]
    }

    pub fn side(&self, v: usize) -> u8 {
        self.sides[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.incident.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.incident[v].iter().map(move |&(e, is_i)| if is_i { self.edges[e].j } else { self.edges[e].i })
    }

    /// Every edge joins the two sides.
    pub fn is_bipartite(&self) -> bool {
        self.edges.iter().all(|e| self.sides[e.i] != self.sides[e.j])
    }

    pub fn max_payoff(&self) -> f64 {
        self.edges.iter().flat_map(|e| e.pay_i.iter().chain(&e.pay_j)).fold(0.0, |m, &v| m.max(v))
    }

    /// Expected payoff of every action of `v` against the profile.
    pub fn payoff_vector(&self, profile: &MixedProfile, v: usize) -> Vec<f64> {
        let k = self.actions[v];
        let mut out = vec![0.0; k];
        for &(e, is_i) in &self.incident[v] {
            let edge = &self.edges[e];
            if is_i {
                let kj = self.actions[edge.j];
                let xj = &profile.probs[edge.j];
                for (a, o) in out.iter_mut().enumerate() {
                    *o += (0..kj).map(|b| edge.pay_i[a * kj + b] * xj[b]).sum::<f64>();
                }
            } else {
                let ki = self.actions[edge.i];
                let xi = &profile.probs[edge.i];
                for (a, o) in out.iter_mut().enumerate() {
                    *o += (0..ki).map(|b| edge.pay_j[b * k + a] * xi[b]).sum::<f64>();
                }
            }
        }
        out
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for (v, (&side, &k)) in self.sides.iter().zip(&self.actions).enumerate() {
            let _ = writeln!(s, "PLAYER {v} {side} {k}");
        }
        for e in &self.edges {
            let _ = writeln!(s, "EDGE {} {}", e.i, e.j);
            let kj = self.actions[e.j];
            for table in [&e.pay_j, &e.pay_i] {
                for row in table.chunks(kj) {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                    let _ = writeln!(s, "{}", cells.join(" "));
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, GameError> {
        let mut g = PolymatrixGame::new();
        let lines: Vec<(usize, &str)> =
            text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty()).collect();
        let bad = |line: usize, msg: &str| GameError::Parse { line, msg: msg.to_string() };
        let mut idx = 0;
        while idx < lines.len() {
            let (ln, l) = lines[idx];
            let t: Vec<&str> = l.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "expected an integer"));
            match t[0] {
                "PLAYER" if t.len() == 4 => {
                    if num(t[1])? != g.n_players() {
                        return Err(bad(ln, "players must be listed in order"));
                    }
                    let side = t[2].parse::<u8>().map_err(|_| bad(ln, "bad side"))?;
                    g.add_player(side, num(t[3])?).map_err(|e| bad(ln, &e.to_string()))?;
                    idx += 1;
                }
                "EDGE" if t.len() == 3 => {
                    let (i, j) = (num(t[1])?, num(t[2])?);
                    if i >= g.n_players() || j >= g.n_players() {
                        return Err(bad(ln, "unknown player"));
                    }
                    let (ki, kj) = (g.actions[i], g.actions[j]);
                    let mut tables = [Vec::new(), Vec::new()];
                    for table in tables.iter_mut() {
                        for _ in 0..ki {
                            idx += 1;
                            let &(rl, row) = lines.get(idx).ok_or_else(|| bad(ln, "missing payoff row"))?;
                            let vals: Vec<f64> = row
                                .split_whitespace()
                                .map(|v| v.parse::<f64>().map_err(|_| bad(rl, "bad payoff")))
                                .collect::<Result<_, _>>()?;
                            if vals.len() != kj {
                                return Err(bad(rl, "payoff row has the wrong length"));
                            }
                            table.extend(vals);
                        }
                    }
                    let [pay_j, pay_i] = tables;
                    g.add_edge(i, j, pay_i, pay_j).map_err(|e| bad(ln, &e.to_string()))?;
                    idx += 1;
                }
                _ => return Err(bad(ln, "expected PLAYER or EDGE")),
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile {
    pub probs: Vec<Vec<f64>>,
}

impl MixedProfile {
    pub fn uniform(game: &PolymatrixGame) -> Self {
        MixedProfile { probs: game.actions.iter().map(|&k| vec![1.0 / k as f64; k]).collect() }
    }

    /// Two-action profile from the probabilities of action 1.
    pub fn from_p(ps: &[f64]) -> Self {
        MixedProfile { probs: ps.iter().map(|&p| vec![1.0 - p, p]).collect() }
    }

    /// Probability of action 1.
    pub fn p(&self, v: usize) -> f64 {
        self.probs[v].get(1).copied().unwrap_or(0.0)
    }

    pub fn validate(&self, game: &PolymatrixGame) -> Result<(), GameError> {
        if self.probs.len() != game.n_players() {
            return Err(GameError::Profile(format!("{} players, expected {}", self.probs.len(), game.n_players())));
        }
        for (v, x) in self.probs.iter().enumerate() {
            if x.len() != game.actions(v) {
                return Err(GameError::Profile(format!("player {v} has {} entries", x.len())));
            }
            if x.iter().any(|&p| !(p >= 0.0)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(GameError::Profile(format!("player {v} is not a distribution")));
            }
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for (v, x) in self.probs.iter().enumerate() {
            let cells: Vec<String> = x.iter().map(|p| format!("{p:.17e}")).collect();
            let _ = writeln!(s, "{v} {}", cells.join(" "));
        }
        s
    }

    pub fn parse(game: &PolymatrixGame, text: &str) -> Result<Self, GameError> {
        let mut probs = vec![Vec::new(); game.n_players()];
        for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: &str| GameError::Parse { line: i + 1, msg: msg.to_string() };
            let mut t = l.split_whitespace();
            let v: usize = t.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad player"))?;
            let row = probs.get_mut(v).ok_or_else(|| bad("unknown player"))?;
            *row = t.map(|s| s.parse::<f64>().map_err(|_| bad("bad probability"))).collect::<Result<_, _>>()?;
        }
        let p = MixedProfile { probs };
        p.validate(game)?;
        Ok(p)
    }
}

pub fn expected_payoff(game: &PolymatrixGame, profile: &MixedProfile, player: usize, action: usize) -> f64 {
    game.payoff_vector(profile, player)[action]
}

/// (player, action) pairs in the support that are more than eps worse than
/// the best response.
pub fn verify_wsne(game: &PolymatrixGame, profile: &MixedProfile, eps: f64) -> Vec<(usize, usize)> {
    let mut bad = Vec::new();
    for v in 0..game.n_players() {
        let u = game.payoff_vector(profile, v);
        let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, (&ua, &xa)) in u.iter().zip(&profile.probs[v]).enumerate() {
            if xa > SUPPORT_EPS && ua < best - eps {
                bad.push((v, a));
            }
        }
    }
    bad
}

/// Players whose mixed payoff trails their best pure response by more than eps.
pub fn verify_ane(game: &PolymatrixGame, profile: &MixedProfile, eps: f64) -> Vec<usize> {
    (0..game.n_players())
        .filter(|&v| {
            let u = game.payoff_vector(profile, v);
            let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mixed: f64 = u.iter().zip(&profile.probs[v]).map(|(a, b)| a * b).sum();
            mixed < best - eps
        })
        .collect()
}

/// 2x2 table indexed [own action][other action].
pub type Table = [[f64; 2]; 2];

/// Payoffs of one gate: the gate player w plays against the inputs and the
/// output; the output player plays against w only.
#[derive(Debug, Clone, PartialEq)]
pub struct GateGadget {
    pub kind: GateType,
    pub zeta: f64,
    pub w_vs_in1: Option<Table>,
    pub w_vs_in2: Option<Table>,
    pub w_vs_out: Table,
    pub out_vs_w: Table,
}

/// w's payoff for playing 1 is the opponent's probability of 1.
const TRACK: Table = [[0.0, 0.0], [0.0, 1.0]];
/// w's payoff for playing 0 is the opponent's probability of 1.
const TRACK0: Table = [[0.0, 1.0], [0.0, 0.0]];
/// The output copies w.
const IMITATE: Table = [[1.0, 0.0], [0.0, 1.0]];
/// The output plays the opposite of w.
const ANTI: Table = [[0.0, 1.0], [1.0, 0.0]];

fn constant_for_zero(c: f64) -> Table {
    [[c, c], [0.0, 0.0]]
}

/// Tables for each gate type. Arithmetic gates let w compare the target
/// value (payoff for 0) with the output (payoff for 1) and make the output
/// anti-imitate w. Logic gates let w decide and the output imitate it (or
/// anti-imitate for negation).
pub fn gadget_for_gate(gate: &Gate) -> GateGadget {
    let zeta = gate.zeta.and_then(|z| z.to_f64()).unwrap_or(0.0);
    let g = |in1, in2, w_vs_out, out_vs_w| GateGadget { kind: gate.kind, zeta, w_vs_in1: in1, w_vs_in2: in2, w_vs_out, out_vs_w };
    match gate.kind {
        // 0 pays zeta, 1 pays p[out]
        GateType::Const => g(None, None, [[zeta, zeta], [0.0, 1.0]], ANTI),
        GateType::Scale => g(Some([[0.0, zeta], [0.0, 0.0]]), None, TRACK, ANTI),
        GateType::Copy => g(Some(TRACK0), None, TRACK, ANTI),
        GateType::Add => g(Some(TRACK0), Some(TRACK0), TRACK, ANTI),
        // 0 pays p[a], 1 pays p[b] + p[out]
        GateType::Sub => g(Some(TRACK0), Some(TRACK), TRACK, ANTI),
        // 1 when p[a] < p[b]
        GateType::Less => g(Some(TRACK0), Some(TRACK), [[0.0, 0.0], [0.0, 0.0]], IMITATE),
        // 1 pays p[a] + p[b], 0 pays 1/2
        GateType::Or => g(Some(TRACK), Some(TRACK), constant_for_zero(0.5), IMITATE),
        // 1 pays p[a] + p[b], 0 pays 3/4 + 3/4
        GateType::And => g(Some([[0.75, 0.75], [0.0, 1.0]]), Some([[0.75, 0.75], [0.0, 1.0]]), [[0.0; 2]; 2], IMITATE),
        // 1 pays p[a], 0 pays 1/2; the output plays the opposite
        GateType::Not => g(Some(TRACK), None, constant_for_zero(0.5), ANTI),
    }
}

fn table_value(t: &Table, own: usize, p_other: f64) -> f64 {
    t[own][0] * (1.0 - p_other) + t[own][1] * p_other
}

impl GateGadget {
    /// (U_w(0), U_w(1)) given the inputs and the output.
    pub fn w_payoffs(&self, a: f64, b: f64, out: f64) -> (f64, f64) {
        let u = |act: usize| {
            self.w_vs_in1.map_or(0.0, |t| table_value(&t, act, a))
                + self.w_vs_in2.map_or(0.0, |t| table_value(&t, act, b))
                + table_value(&self.w_vs_out, act, out)
        };
        (u(0), u(1))
    }

    pub fn out_payoffs(&self, w: f64) -> (f64, f64) {
        (table_value(&self.out_vs_w, 0, w), table_value(&self.out_vs_w, 1, w))
    }
}

/// eps-WSNE test for a two-action player with probability p of action 1.
fn ok_2(u0: f64, u1: f64, p: f64, eps: f64) -> bool {
    (p <= SUPPORT_EPS || u1 >= u0 - eps) && (p >= 1.0 - SUPPORT_EPS || u0 >= u1 - eps)
}

/// Enumerates the gadget players' probabilities on a grid (inputs, w and the
/// output); every profile where w and the output are eps-well-supported must
/// satisfy the gate within eps + 2 * grid_step.
pub fn certify_gadget(gadget: &GateGadget, eps: f64, grid_step: f64) -> bool {
    assert!(grid_step > 0.0 && grid_step <= eps / 4.0 + 1e-15, "grid step must be at most eps/4");
    let steps = (1.0 / grid_step).round() as usize;
    let grid: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
    let arity = gadget.kind.arity();
    let ins1: &[f64] = if arity >= 1 { &grid } else { &[0.0] };
    let ins2: &[f64] = if arity >= 2 { &grid } else { &[0.0] };
    // w values compatible with each output value's best response
    let out_ok: Vec<Vec<bool>> = grid
        .iter()
        .map(|&o| {
            grid.iter()
                .map(|&w| {
                    let (u0, u1) = gadget.out_payoffs(w);
                    ok_2(u0, u1, o, eps)
                })
                .collect()
        })
        .collect();
    let slack = eps + 2.0 * grid_step;
    for &a in ins1 {
        for &b in ins2 {
            for (oi, &o) in grid.iter().enumerate() {
                let (u0, u1) = gadget.w_payoffs(a, b, o);
                let equilibrium = grid.iter().enumerate().any(|(wi, &w)| out_ok[oi][wi] && ok_2(u0, u1, w, eps));
                if equilibrium && !gate_holds(gadget.kind, gadget.zeta, a, b, o, slack) {
                    return false;
                }
            }
        }
    }
    true
}

/// Player ids of a compiled circuit.
#[derive(Debug, Clone, PartialEq)]
pub struct GameMap {
    pub value_player: Vec<usize>,
    pub gate_player: Vec<usize>,
}

impl GameMap {
    /// Player ids as assigned by compile_circuit_to_game: nodes first, then gates.
    pub fn for_circuit(c: &GeneralizedCircuit) -> Self {
        let n = c.n_nodes();
        GameMap { value_player: (0..n).collect(), gate_player: (n..n + c.gates().len()).collect() }
    }

    /// x[v] = probability that v's player picks action 1.
    pub fn assignment(&self, profile: &MixedProfile) -> Assignment {
        Assignment { values: self.value_player.iter().map(|&p| profile.p(p)).collect() }
    }
}

fn flat(t: &Table) -> Vec<f64> {
    vec![t[0][0], t[0][1], t[1][0], t[1][1]]
}

fn transpose(t: &Table) -> Table {
    [[t[0][0], t[1][0]], [t[0][1], t[1][1]]]
}

/// One value player per node (side 0) and one gate player per gate (side 1).
pub fn compile_circuit_to_game(c: &GeneralizedCircuit) -> Result<(PolymatrixGame, GameMap), GameError> {
    let fan = c.fanouts();
    if let Some((v, &f)) = fan.iter().enumerate().find(|(_, &f)| f > 2) {
        return Err(GameError::FanOut { node: c.name(v).to_string(), fanout: f });
    }
    let mut game = PolymatrixGame::new();
    let value_player = (0..c.n_nodes()).map(|_| game.add_player(0, 2)).collect::<Result<Vec<_>, _>>()?;
    let mut gate_player = Vec::with_capacity(c.gates().len());
    for gate in c.gates() {
        if let Some(z) = gate.zeta.filter(|z| *z > Rational64::from_integer(1)) {
            return Err(GameError::ZetaRange(z));
        }
        let gg = gadget_for_gate(gate);
        let w = game.add_player(1, 2)?;
        gate_player.push(w);
        let zero = vec![0.0; 4];
        // an input read twice by one gate still gets a single edge
        let mut ins: Vec<(NodeId, Table)> = Vec::new();
        for (node, table) in [(gate.in1, gg.w_vs_in1), (gate.in2, gg.w_vs_in2)] {
            if let (Some(n), Some(t)) = (node, table) {
                match ins.iter_mut().find(|(m, _)| *m == n) {
                    Some((_, acc)) => {
                        for (r, row) in acc.iter_mut().enumerate() {
                            for (k, x) in row.iter_mut().enumerate() {
                                *x += t[r][k];
                            }
                        }
                    }
                    None => ins.push((n, t)),
                }
            }
        }
        for (n, t) in ins {
            game.add_edge(w, value_player[n], flat(&t), zero.clone())?;
        }
        game.add_edge(w, value_player[gate.out], flat(&gg.w_vs_out), flat(&transpose(&gg.out_vs_w)))?;
    }
    Ok((game, GameMap { value_player, gate_player }))
}

/// Profile from an assignment: value players follow x, gate players best
/// respond and mix evenly when within `tie` of indifference.
pub fn seed_profile(game: &PolymatrixGame, map: &GameMap, x: &Assignment, tie: f64) -> MixedProfile {
    let mut ps = vec![0.5; game.n_players()];
    for (v, &p) in map.value_player.iter().enumerate() {
        ps[p] = x.values[v].clamp(0.0, 1.0);
    }
    let mut prof = MixedProfile::from_p(&ps);
    for &w in &map.gate_player {
        let u = game.payoff_vector(&prof, w);
        let p = if (u[1] - u[0]).abs() <= tie { 0.5 } else if u[1] > u[0] { 1.0 } else { 0.0 };
        prof.probs[w] = vec![1.0 - p, p];
    }
    prof
}

pub fn wsne_conversion_bound(eps: f64, d_in: usize) -> f64 {
    let s = eps.sqrt();
    s * (s + 1.0 + 4.0 * d_in as f64)
}

/// Drops every action more than eps * k below the best (k = 1 + 1/sqrt(eps))
/// and renormalizes.
pub fn ane_to_wsne(game: &PolymatrixGame, profile: &MixedProfile, eps: f64) -> Result<MixedProfile, GameError> {
    profile.validate(game)?;
    let bad = verify_ane(game, profile, eps);
    if !bad.is_empty() {
        return Err(GameError::NotAne { eps, players: bad });
    }
    let k = 1.0 + 1.0 / eps.sqrt();
    let mut out = profile.clone();
    for v in 0..game.n_players() {
        let u = game.payoff_vector(profile, v);
        let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let keep: Vec<bool> = u.iter().map(|&ua| ua >= best - eps * k).collect();
        let mass: f64 = profile.probs[v].iter().zip(&keep).filter(|(_, &kp)| kp).map(|(x, _)| x).sum();
        if mass <= 0.0 {
            return Err(GameError::NotAne { eps, players: vec![v] });
        }
        out.probs[v] = profile.probs[v].iter().zip(&keep).map(|(&x, &kp)| if kp { x / mass } else { 0.0 }).collect();
    }
    Ok(out)
}

/// Damped smoothed best response from random starts; returns a profile that
/// passes verify_wsne at eps, if one is found within `budget` iterations.
pub fn solve_game_small(game: &PolymatrixGame, eps: f64, budget: usize) -> Option<MixedProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9a3e);
    let restarts = 8.max(budget / 2000);
    let per = (budget / restarts).max(1);
    for r in 0..restarts {
        let start = if r == 0 {
            MixedProfile::uniform(game)
        } else {
            MixedProfile {
                probs: (0..game.n_players())
                    .map(|v| {
                        let w: Vec<f64> = (0..game.actions(v)).map(|_| rng.gen::<f64>() + 1e-3).collect();
                        let s: f64 = w.iter().sum();
                        w.into_iter().map(|x| x / s).collect()
                    })
                    .collect(),
            }
        };
        if let Some(p) = solve_from(game, start, eps, per) {
            return Some(p);
        }
    }
    None
}

/// Same dynamics from a given start.
pub fn solve_from(game: &PolymatrixGame, start: MixedProfile, eps: f64, budget: usize) -> Option<MixedProfile> {
    let mut x = start;
    let mut avg = x.clone();
    let scale = game.max_payoff().max(1e-9);
    for it in 0..budget {
        if let Some(p) = settle(game, &x, eps) {
            return Some(p);
        }
        // cycling iterates often average out to an equilibrium
        let w = 1.0 / (it as f64 + 1.0);
        for (a, b) in avg.probs.iter_mut().zip(&x.probs) {
            a.iter_mut().zip(b).for_each(|(p, q)| *p += w * (q - *p));
        }
        if it % 16 == 15 {
            if let Some(p) = settle(game, &avg, eps) {
                return Some(p);
            }
        }
        if it % 256 == 255 {
            if let Some(p) = polish(game, &x, eps).or_else(|| polish(game, &avg, eps)) {
                return Some(p);
            }
        }
        let temp = scale * (0.05 * (1.0 - it as f64 / budget as f64)).max(eps / 20.0);
        let rate = 0.3 / (1.0 + it as f64 / 50.0).sqrt();
        let next: Vec<Vec<f64>> = (0..game.n_players())
            .map(|v| {
                let u = game.payoff_vector(&x, v);
                let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = u.iter().map(|&ua| ((ua - best) / temp).exp()).collect();
                let s: f64 = w.iter().sum();
                x.probs[v].iter().zip(&w).map(|(&xa, &wa)| (1.0 - rate) * xa + rate * wa / s).collect()
            })
            .collect();
        x.probs = next;
    }
    settle(game, &x, eps).or_else(|| polish(game, &x, eps)).or_else(|| polish(game, &avg, eps))
}

/// Payoff advantage of action 1 over action 0 for a two-action player, as
/// (constant, [(neighbor, coefficient on the neighbor's p)]).
fn advantage(game: &PolymatrixGame, v: usize) -> (f64, Vec<(usize, f64)>) {
    let mut c = 0.0;
    let mut terms = Vec::new();
    for &(e, is_i) in &game.incident[v] {
        let edge = &game.edges[e];
        // d[b] = gain of switching to 1 when the neighbor plays b
        let d = if is_i {
            [edge.pay_i[2] - edge.pay_i[0], edge.pay_i[3] - edge.pay_i[1]]
        } else {
            [edge.pay_j[1] - edge.pay_j[0], edge.pay_j[3] - edge.pay_j[2]]
        };
        c += d[0];
        terms.push((if is_i { edge.j } else { edge.i }, d[1] - d[0]));
    }
    (c, terms)
}

/// Largest number of mixing players the polish step solves for.
const POLISH_LIMIT: usize = 64;

/// Guesses the support from a near-equilibrium of a two-action game and
/// solves the indifference equations of the mixing players.
fn polish(game: &PolymatrixGame, x: &MixedProfile, eps: f64) -> Option<MixedProfile> {
    if game.actions.iter().any(|&k| k != 2) {
        return None;
    }
    let n = game.n_players();
    let adv: Vec<_> = (0..n).map(|v| advantage(game, v)).collect();
    let gap = |v: usize| adv[v].0 + adv[v].1.iter().map(|&(u, k)| k * x.p(u)).sum::<f64>();
    for band in [0.02, 0.05, 0.1, 0.2] {
        // players with no stake keep whatever they play
        let inert = |v: usize| adv[v].0 == 0.0 && adv[v].1.iter().all(|t| t.1 == 0.0);
        let mixed: Vec<usize> =
            (0..n).filter(|&v| !inert(v) && gap(v).abs() < band && x.p(v) > 0.02 && x.p(v) < 0.98).collect();
        let mut ps: Vec<f64> =
            (0..n).map(|v| if inert(v) { x.p(v) } else if gap(v) > 0.0 { 1.0 } else { 0.0 }).collect();
        let m = mixed.len();
        if m > POLISH_LIMIT {
            continue;
        }
        let col = |u: usize| mixed.iter().position(|&w| w == u);
        // rows: sum_k a[r][k] p_k = rhs[r]
        let mut a = vec![vec![0.0; m + 1]; m];
        for (r, &v) in mixed.iter().enumerate() {
            a[r][m] = -adv[v].0;
            for &(u, k) in &adv[v].1 {
                match col(u) {
                    Some(cu) => a[r][cu] += k,
                    None => a[r][m] -= k * ps[u],
                }
            }
        }
        let Some(sol) = gauss(a) else { continue };
        for (&v, &p) in mixed.iter().zip(&sol) {
            ps[v] = p.clamp(0.0, 1.0);
        }
        let cand = MixedProfile::from_p(&ps);
        if let Some(p) = settle(game, &cand, eps) {
            return Some(p);
        }
    }
    None
}

/// Solves a square system given as augmented rows; None when singular.
fn gauss(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for c in 0..m {
        let piv = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, piv);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..m).map(|r| a[r][m] / a[r][r]).collect())
}

/// Removes negligible mass and reports the result if it is an eps-WSNE.
fn settle(game: &PolymatrixGame, x: &MixedProfile, eps: f64) -> Option<MixedProfile> {
    if verify_wsne(game, x, eps).is_empty() {
        return Some(x.clone());
    }
    let mut y = x.clone();
    for v in 0..game.n_players() {
        let u = game.payoff_vector(x, v);
        let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let row = &mut y.probs[v];
        for (a, p) in row.iter_mut().enumerate() {
            if u[a] < best - eps {
                *p = 0.0;
            }
        }
        let s: f64 = row.iter().sum();
        if s <= 0.0 {
            return None;
        }
        row.iter_mut().for_each(|p| *p /= s);
    }
    verify_wsne(game, &y, eps).is_empty().then_some(y)
}
