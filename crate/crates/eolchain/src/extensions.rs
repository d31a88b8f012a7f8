//! Two-player corollaries of the polymatrix result: a game of incomplete
//! information whose types are the polymatrix nodes, and a bimatrix game
//! whose relative equilibria encode polymatrix equilibria.

use std::fmt::Write as _;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::games::{solve_game_small, GameError, MixedProfile, PolymatrixGame, SUPPORT_EPS};

#[derive(Debug, Error, PartialEq)]
pub enum ExtError {
    #[error("vertex {0} has degree {1}; at most 3 is supported")]
    Degree(usize, usize),
    #[error("the game is not bipartite")]
    NotBipartite,
    #[error("every player needs exactly two actions")]
    Actions,
    #[error("sides have {0} and {1} nodes")]
    Unbalanced(usize, usize),
    #[error("strategy is not an approximate equilibrium at eps = {0}")]
    NotEquilibrium(f64),
    #[error("{0} has no mass on its own vertex")]
    Empty(String),
    #[error("bad strategy shape: {0}")]
    Shape(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coloring {
    pub colors: Vec<usize>,
}

impl Coloring {
    pub fn n_colors(&self) -> usize {
        self.colors.iter().max().map_or(0, |c| c + 1)
    }
}

pub const MAX_COLORS: usize = 7;

/// Pairs at distance exactly two.
pub fn square_pairs(adj: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (u, nu) in adj.iter().enumerate() {
        for &m in nu {
            for &w in &adj[m] {
                if w > u && !nu.contains(&w) && !out.contains(&(u, w)) {
                    out.push((u, w));
                }
            }
        }
    }
    out
}

/// Greedy coloring of the distance-2 graph of a degree-3 graph.
pub fn square_and_color(adj: &[Vec<usize>]) -> Result<Coloring, ExtError> {
    if let Some((v, n)) = adj.iter().enumerate().find(|(_, n)| n.len() > 3) {
        return Err(ExtError::Degree(v, n.len()));
    }
    let mut conflicts = vec![Vec::new(); adj.len()];
    for (u, w) in square_pairs(adj) {
        conflicts[u].push(w);
        conflicts[w].push(u);
    }
    let mut colors = vec![usize::MAX; adj.len()];
    for v in 0..adj.len() {
        let used: Vec<usize> = conflicts[v].iter().map(|&w| colors[w]).collect();
        colors[v] = (0..).find(|c| !used.contains(c)).unwrap();
    }
    Ok(Coloring { colors })
}

pub fn adjacency(game: &PolymatrixGame) -> Vec<Vec<usize>> {
    (0..game.n_players()).map(|v| game.neighbors(v).collect()).collect()
}

fn check_bipartite_binary(game: &PolymatrixGame) -> Result<(), ExtError> {
    if !game.is_bipartite() {
        return Err(ExtError::NotBipartite);
    }
    if (0..game.n_players()).any(|v| game.actions(v) != 2) {
        return Err(ExtError::Actions);
    }
    Ok(())
}

/// Nodes of each side, in id order.
fn sides(game: &PolymatrixGame) -> [Vec<usize>; 2] {
    let mut s = [Vec::new(), Vec::new()];
    for v in 0..game.n_players() {
        s[(game.side(v) != game.side(0)) as usize].push(v);
    }
    s
}

/// Payoff of `v` playing `a` against neighbor `u` playing `b`, if adjacent.
fn edge_payoff(game: &PolymatrixGame, v: usize, a: usize, u: usize, b: usize) -> Option<f64> {
    game.edges().iter().find_map(|e| {
        if e.i == v && e.j == u {
            Some(e.pay_i[a * 2 + b])
        } else if e.j == v && e.i == u {
            Some(e.pay_j[b * 2 + a])
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesOrigin {
    pub nodes: [Vec<usize>; 2],
    pub compact: bool,
    pub coloring: Coloring,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BayesianGame {
    pub types: [usize; 2],
    pub actions: [usize; 2],
    /// (type of player 0, type of player 1, probability)
    pub dist: Vec<(usize, usize, Rational64)>,
    /// payoff[p][t][a0 * actions[1] + a1]
    pub payoff: [Vec<Vec<f64>>; 2],
    pub origin: Option<BayesOrigin>,
}

/// strategy[p][t] is the mixed action of player p with type t.
pub type BayesStrategy = [Vec<Vec<f64>>; 2];

/// Types are the nodes of each side and the type pair is a uniform random
/// edge. Matching plays earn the edge payoff mapped to [1/2, 1]; everything
/// else earns 0. Compact mode names vertices by color.
pub fn build_bayesian(game: &PolymatrixGame, compact: bool) -> Result<BayesianGame, ExtError> {
    check_bipartite_binary(game)?;
    let adj = adjacency(game);
    let coloring = square_and_color(&adj)?;
    let nodes = sides(game);
    let pos = |v: usize| nodes[(game.side(v) != game.side(0)) as usize].iter().position(|&w| w == v).unwrap();
    let m = game.edges().len() as i64;
    let dist = game
        .edges()
        .iter()
        .map(|e| {
            let (a, b) = if game.side(e.i) == game.side(0) { (e.i, e.j) } else { (e.j, e.i) };
            (pos(a), pos(b), Rational64::new(1, m))
        })
        .collect();
    let types = [nodes[0].len(), nodes[1].len()];
    let actions = if compact { [2 * MAX_COLORS; 2] } else { [2 * types[0], 2 * types[1]] };
    // vertex named by an action, from the point of view of a node on the other side
    let named = |side: usize, action: usize, viewer: usize| -> Option<usize> {
        let slot = action / 2;
        if compact {
            adj[viewer].iter().copied().find(|&u| coloring.colors[u] == slot)
        } else {
            Some(nodes[side][slot]).filter(|u| adj[viewer].contains(u))
        }
    };
    let own_slot = |v: usize| if compact { coloring.colors[v] } else { pos(v) };
    let mut payoff = [Vec::new(), Vec::new()];
    for p in 0..2 {
        for &v in &nodes[p] {
            let mut table = vec![0.0; actions[0] * actions[1]];
            for mine in 0..actions[p] {
                if mine / 2 != own_slot(v) {
                    continue;
                }
                for theirs in 0..actions[1 - p] {
                    let Some(u) = named(1 - p, theirs, v) else { continue };
                    let raw = edge_payoff(game, v, mine % 2, u, theirs % 2).expect("named vertex is adjacent");
                    let idx = if p == 0 { mine * actions[1] + theirs } else { theirs * actions[1] + mine };
                    table[idx] = 0.5 + 0.5 * raw;
                }
            }
            payoff[p].push(table);
        }
    }
    Ok(BayesianGame { types, actions, dist, payoff, origin: Some(BayesOrigin { nodes, compact, coloring }) })
}

impl BayesianGame {
    /// Opponent types and their conditional probabilities given own type.
    pub fn conditional(&self, p: usize, t: usize) -> Vec<(usize, f64)> {
        let rows: Vec<(usize, Rational64)> = self
            .dist
            .iter()
            .filter(|d| if p == 0 { d.0 == t } else { d.1 == t })
            .map(|d| (if p == 0 { d.1 } else { d.0 }, d.2))
            .collect();
        let total: Rational64 = rows.iter().map(|r| r.1).sum();
        if total.is_zero() {
            return Vec::new();
        }
        rows.into_iter().map(|(o, q)| (o, (q / total).to_f64().unwrap())).collect()
    }

    /// Interim expected payoff of every action of player p with type t.
    pub fn interim(&self, strat: &BayesStrategy, p: usize, t: usize) -> Vec<f64> {
        let table = &self.payoff[p][t];
        let mut u = vec![0.0; self.actions[p]];
        for (o, q) in self.conditional(p, t) {
            let other = &strat[1 - p][o];
            for (a, ua) in u.iter_mut().enumerate() {
                for (b, &xb) in other.iter().enumerate() {
                    let idx = if p == 0 { a * self.actions[1] + b } else { b * self.actions[1] + a };
                    *ua += q * xb * table[idx];
                }
            }
        }
        u
    }

    pub fn check_strategy(&self, strat: &BayesStrategy) -> Result<(), ExtError> {
        for p in 0..2 {
            if strat[p].len() != self.types[p] {
                return Err(ExtError::Shape(format!("player {p} has {} types", strat[p].len())));
            }
            for x in &strat[p] {
                if x.len() != self.actions[p] || x.iter().any(|&v| !(v >= 0.0)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-12
                {
                    return Err(ExtError::Shape(format!("player {p} has a mixed action that is not a distribution")));
                }
            }
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut s = format!("TYPES {} {}\nACTIONS {} {}\n", self.types[0], self.types[1], self.actions[0], self.actions[1]);
        for (a, b, q) in &self.dist {
            let _ = writeln!(s, "DIST {a} {b} {}/{}", q.numer(), q.denom());
        }
        for p in 0..2 {
            for (t, table) in self.payoff[p].iter().enumerate() {
                for (idx, &v) in table.iter().enumerate() {
                    if v != 0.0 {
                        let _ = writeln!(s, "U {p} {t} {} {} {v:.17e}", idx / self.actions[1], idx % self.actions[1]);
                    }
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ExtError> {
        let mut types = None;
        let mut actions = None;
        let mut dist = Vec::new();
        let mut payoff: [Vec<Vec<f64>>; 2] = [Vec::new(), Vec::new()];
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: &str| ExtError::Parse { line: i + 1, msg: msg.to_string() };
            let t: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| t.get(k).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad("expected an integer"));
            match t[0] {
                "TYPES" => types = Some([num(1)?, num(2)?]),
                "ACTIONS" => {
                    let (ty, ac) = (types.ok_or_else(|| bad("ACTIONS before TYPES"))?, [num(1)?, num(2)?]);
                    for p in 0..2 {
                        payoff[p] = vec![vec![0.0; ac[0] * ac[1]]; ty[p]];
                    }
                    actions = Some(ac);
                }
                "DIST" => {
                    let (n, d) = t.get(3).and_then(|s| s.split_once('/')).ok_or_else(|| bad("expected p/q"))?;
                    let q = match (n.parse::<i64>(), d.parse::<i64>()) {
                        (Ok(n), Ok(d)) if d > 0 => Rational64::new(n, d),
                        _ => return Err(bad("expected p/q")),
                    };
                    dist.push((num(1)?, num(2)?, q));
                }
                "U" => {
                    let ac = actions.ok_or_else(|| bad("U before ACTIONS"))?;
                    let (p, ty, a0, a1) = (num(1)?, num(2)?, num(3)?, num(4)?);
                    let v: f64 = t.get(5).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad value"))?;
                    let cell = payoff
                        .get_mut(p)
                        .and_then(|x| x.get_mut(ty))
                        .filter(|_| a0 < ac[0] && a1 < ac[1])
                        .ok_or_else(|| bad("index out of range"))?;
                    cell[a0 * ac[1] + a1] = v;
                }
                _ => return Err(bad("unknown record")),
            }
        }
        let err = |msg: &str| ExtError::Parse { line: 0, msg: msg.to_string() };
        let types = types.ok_or_else(|| err("missing TYPES"))?;
        let actions = actions.ok_or_else(|| err("missing ACTIONS"))?;
        let total: Rational64 = dist.iter().map(|d| d.2).sum();
        if total != Rational64::from_integer(1) || dist.iter().any(|d| d.0 >= types[0] || d.1 >= types[1]) {
            return Err(err("type distribution must sum to 1 over known types"));
        }
        Ok(BayesianGame { types, actions, dist, payoff, origin: None })
    }
}

/// (player, type) pairs whose mixed action trails the best interim response
/// by more than eps. Types that never occur are skipped.
pub fn verify_bayes_ane(bg: &BayesianGame, strat: &BayesStrategy, eps: f64) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..2)
        .flat_map(|p| (0..bg.types[p]).map(move |t| (p, t)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .filter(|&(p, t)| {
            if bg.conditional(p, t).is_empty() {
                return false;
            }
            let u = bg.interim(strat, p, t);
            let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mixed: f64 = u.iter().zip(&strat[p][t]).map(|(a, b)| a * b).sum();
            mixed < best - eps
        })
        .collect();
    out.sort_unstable();
    out
}

fn own_actions(origin: &BayesOrigin, p: usize, t: usize) -> [usize; 2] {
    let slot = if origin.compact { origin.coloring.colors[origin.nodes[p][t]] } else { t };
    [2 * slot, 2 * slot + 1]
}

/// Strategy where each type plays its own vertex with the node's mixture.
pub fn encode_bayesian(bg: &BayesianGame, profile: &MixedProfile) -> Result<BayesStrategy, ExtError> {
    let origin = bg.origin.as_ref().ok_or_else(|| ExtError::Shape("game has no polymatrix origin".into()))?;
    let mut strat: BayesStrategy = [Vec::new(), Vec::new()];
    for p in 0..2 {
        for (t, &v) in origin.nodes[p].iter().enumerate() {
            let mut x = vec![0.0; bg.actions[p]];
            let [a0, a1] = own_actions(origin, p, t);
            x[a0] = profile.probs[v][0];
            x[a1] = profile.probs[v][1];
            strat[p].push(x);
        }
    }
    Ok(strat)
}

/// Per node, the type's mixture over its own vertex's two actions.
pub fn decode_bayesian(bg: &BayesianGame, strat: &BayesStrategy, eps: f64) -> Result<MixedProfile, ExtError> {
    bg.check_strategy(strat)?;
    if !verify_bayes_ane(bg, strat, eps).is_empty() {
        return Err(ExtError::NotEquilibrium(eps));
    }
    let origin = bg.origin.as_ref().ok_or_else(|| ExtError::Shape("game has no polymatrix origin".into()))?;
    let n = origin.nodes[0].len() + origin.nodes[1].len();
    let mut probs = vec![Vec::new(); n];
    for p in 0..2 {
        for (t, &v) in origin.nodes[p].iter().enumerate() {
            let [a0, a1] = own_actions(origin, p, t);
            let (x0, x1) = (strat[p][t][a0], strat[p][t][a1]);
            let mass = x0 + x1;
            probs[v] = if mass > SUPPORT_EPS {
                vec![x0 / mass, x1 / mass]
            } else if bg.conditional(p, t).is_empty() {
                vec![0.5, 0.5]
            } else {
                return Err(ExtError::Empty(format!("type {t} of player {p}")));
            };
        }
    }
    Ok(MixedProfile { probs })
}

/// Mass each type puts on actions that are not its own vertex.
pub fn mismatch_mass(bg: &BayesianGame, strat: &BayesStrategy) -> Vec<(usize, usize, f64)> {
    let Some(origin) = bg.origin.as_ref() else { return Vec::new() };
    let mut out = Vec::new();
    for p in 0..2 {
        for t in 0..bg.types[p] {
            let [a0, a1] = own_actions(origin, p, t);
            out.push((p, t, 1.0 - strat[p][t][a0] - strat[p][t][a1]));
        }
    }
    out
}

/// The polymatrix game the interim payoffs describe: each edge mapped to
/// [1/2, 1] and divided by the node's degree, so a node's utility is the
/// average over its neighbors.
pub fn interim_polymatrix(game: &PolymatrixGame) -> Result<PolymatrixGame, ExtError> {
    let mut g = PolymatrixGame::new();
    for v in 0..game.n_players() {
        g.add_player(game.side(v), game.actions(v))?;
    }
    for e in game.edges() {
        let (di, dj) = (game.degree(e.i) as f64, game.degree(e.j) as f64);
        let pi = e.pay_i.iter().map(|&u| (0.5 + 0.5 * u) / di).collect();
        let pj = e.pay_j.iter().map(|&u| (0.5 + 0.5 * u) / dj).collect();
        g.add_edge(e.i, e.j, pi, pj)?;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeOrigin {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimatrixGame {
    pub m: usize,
    pub n: usize,
    /// row player's payoffs, row-major m x n
    pub a: Vec<f64>,
    /// column player's payoffs, row-major m x n
    pub b: Vec<f64>,
    pub origin: Option<RelativeOrigin>,
}

impl BimatrixGame {
    pub fn row_payoffs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.m).map(|r| (0..self.n).map(|c| self.a[r * self.n + c] * y[c]).sum()).collect()
    }

    pub fn col_payoffs(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|c| (0..self.m).map(|r| self.b[r * self.n + c] * x[r]).sum()).collect()
    }

    pub fn serialize(&self) -> String {
        let mut s = format!("{} {}\n", self.m, self.n);
        for mat in [&self.a, &self.b] {
            for row in mat.chunks(self.n) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
                let _ = writeln!(s, "{}", cells.join(" "));
            }
        }
        s
    }
}

/// Main game (eta times the edge payoffs between adjacent nodes) plus a
/// hide-and-seek game over node indices: the row player wants the column's
/// node index, the column player wants the row's index plus one.
pub fn build_relative_bimatrix(game: &PolymatrixGame, eta: f64) -> Result<BimatrixGame, ExtError> {
    check_bipartite_binary(game)?;
    if let Some(v) = (0..game.n_players()).find(|&v| game.degree(v) > 3) {
        return Err(ExtError::Degree(v, game.degree(v)));
    }
    let [rows, cols] = sides(game);
    if rows.len() != cols.len() {
        return Err(ExtError::Unbalanced(rows.len(), cols.len()));
    }
    let n = rows.len();
    let dim = 2 * n;
    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim * dim];
    for i in 0..n {
        for j in 0..n {
            for (ra, cb) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let idx = (2 * i + ra) * dim + 2 * j + cb;
                a[idx] = if i == j { 1.0 } else { 0.0 };
                b[idx] = if j == (i + 1) % n { 1.0 } else { 0.0 };
                if let Some(u) = edge_payoff(game, rows[i], ra, cols[j], cb) {
                    a[idx] += eta * u;
                    b[idx] += eta * edge_payoff(game, cols[j], cb, rows[i], ra).unwrap();
                }
            }
        }
    }
    Ok(BimatrixGame { m: dim, n: dim, a, b, origin: Some(RelativeOrigin { rows, cols, eta }) })
}

/// Supported actions earning less than (1 - eps) times the best response;
/// player 0 is the row player.
pub fn verify_relative_wsne(bm: &BimatrixGame, x: &[f64], y: &[f64], eps: f64) -> Vec<(usize, usize)> {
    let mut bad = Vec::new();
    for (p, (u, s)) in [(bm.row_payoffs(y), x), (bm.col_payoffs(x), y)].into_iter().enumerate() {
        let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (k, (&uk, &sk)) in u.iter().zip(s).enumerate() {
            if sk > SUPPORT_EPS && uk < (1.0 - eps) * best {
                bad.push((p, k));
            }
        }
    }
    bad
}

/// Node marginals, the per-node conditional mixtures, and the range of
/// payoffs over all pure strategies of both players.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeDecode {
    pub profile: MixedProfile,
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
    pub utility_range: (f64, f64),
}

impl RelativeDecode {
    pub fn marginal_box(&self, eta: f64) -> (f64, f64) {
        let n = self.row_marginals.len() as f64;
        ((1.0 - 4.0 * eta) / n, (1.0 + 5.0 * eta) / n)
    }

    pub fn utility_band(&self, eta: f64) -> (f64, f64) {
        let n = self.row_marginals.len() as f64;
        ((1.0 - 4.0 * eta) / n, (1.0 + 9.0 * eta) / n)
    }

    pub fn in_box(&self, eta: f64, tol: f64) -> bool {
        let (lo, hi) = self.marginal_box(eta);
        self.row_marginals.iter().chain(&self.col_marginals).all(|&m| m >= lo - tol && m <= hi + tol)
    }

    pub fn in_band(&self, eta: f64, tol: f64) -> bool {
        let (lo, hi) = self.utility_band(eta);
        self.utility_range.0 >= lo - tol && self.utility_range.1 <= hi + tol
    }
}

pub fn decode_relative(bm: &BimatrixGame, x: &[f64], y: &[f64]) -> Result<RelativeDecode, ExtError> {
    let origin = bm.origin.as_ref().ok_or_else(|| ExtError::Shape("bimatrix has no polymatrix origin".into()))?;
    let n = origin.rows.len();
    if x.len() != 2 * n || y.len() != 2 * n {
        return Err(ExtError::Shape("profile length".into()));
    }
    let total = origin.rows.len() + origin.cols.len();
    let mut probs = vec![Vec::new(); total];
    let mut marg = [Vec::new(), Vec::new()];
    for (p, (s, nodes)) in [(x, &origin.rows), (y, &origin.cols)].into_iter().enumerate() {
        for (i, &v) in nodes.iter().enumerate() {
            let m = s[2 * i] + s[2 * i + 1];
            if m <= 0.0 {
                return Err(ExtError::Empty(format!("node {i} of player {p}")));
            }
            probs[v] = vec![s[2 * i] / m, s[2 * i + 1] / m];
            marg[p].push(m);
        }
    }
    let us: Vec<f64> = bm.row_payoffs(y).into_iter().chain(bm.col_payoffs(x)).collect();
    let range = us.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &u| (lo.min(u), hi.max(u)));
    let [row_marginals, col_marginals] = marg;
    Ok(RelativeDecode { profile: MixedProfile { probs }, row_marginals, col_marginals, utility_range: range })
}

/// Largest payoff advantage any polymatrix player has over its decoded
/// mixture's worst supported action.
pub fn wsne_gap(game: &PolymatrixGame, profile: &MixedProfile) -> f64 {
    (0..game.n_players())
        .map(|v| {
            let u = game.payoff_vector(profile, v);
            let best = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            u.iter().zip(&profile.probs[v]).filter(|(_, &x)| x > SUPPORT_EPS).map(|(&ua, _)| best - ua).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Exact relative equilibrium with every node supported, found by
/// alternating between (a) an equilibrium of the polymatrix game whose edges
/// are weighted by the opponent's node marginals and (b) the marginals that
/// equalize every node's payoff given those mixtures.
pub fn find_relative_ne(game: &PolymatrixGame, bm: &BimatrixGame, budget: usize) -> Option<(Vec<f64>, Vec<f64>)> {
    let origin = bm.origin.as_ref()?;
    let n = origin.rows.len();
    let eta = origin.eta;
    let mut wx = vec![1.0 / n as f64; n];
    let mut wy = vec![1.0 / n as f64; n];
    let index = |v: usize| {
        origin.rows.iter().position(|&w| w == v).map(|i| (0, i)).or_else(|| origin.cols.iter().position(|&w| w == v).map(|i| (1, i)))
    };
    let mut last: Option<(Vec<f64>, Vec<f64>)> = None;
    for _ in 0..50 {
        // (a) polymatrix game seen by each node, scaled by the opponent marginal
        let mut weighted = PolymatrixGame::new();
        for v in 0..game.n_players() {
            weighted.add_player(game.side(v), 2).ok()?;
        }
        for e in game.edges() {
            let w = |v: usize| match index(v)? {
                (0, i) => Some(wx[i]),
                (_, i) => Some(wy[i]),
            };
            let (wi, wj) = (w(e.j)?, w(e.i)?);
            let pi = e.pay_i.iter().map(|u| u * wi).collect();
            let pj = e.pay_j.iter().map(|u| u * wj).collect();
            weighted.add_edge(e.i, e.j, pi, pj).ok()?;
        }
        let ne = solve_game_small(&weighted, 1e-10, budget)?;
        // (b) value of each edge under the mixtures
        let value = |v: usize, u: usize| -> f64 {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += ne.probs[v][a] * ne.probs[u][b] * edge_payoff(game, v, a, u, b).unwrap_or(0.0);
                }
            }
            s
        };
        // row node i earns y(i) + eta * sum_j y(j) V_ij; solve for equal payoffs
        let mut sys_y = vec![vec![0.0; n + 1]; n];
        let mut sys_x = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            sys_y[i][i] += 1.0;
            sys_y[i][n] = 1.0;
            sys_x[i][(i + n - 1) % n] += 1.0;
            sys_x[i][n] = 1.0;
            for j in 0..n {
                sys_y[i][j] += eta * value(origin.rows[i], origin.cols[j]);
                sys_x[i][j] += eta * value(origin.cols[i], origin.rows[j]);
            }
        }
        let mut ys = solve_linear(sys_y)?;
        let mut xs = solve_linear(sys_x)?;
        for s in [&mut ys, &mut xs] {
            let t: f64 = s.iter().sum();
            s.iter_mut().for_each(|v| *v /= t);
        }
        let x: Vec<f64> = (0..2 * n).map(|k| xs[k / 2] * ne.probs[origin.rows[k / 2]][k % 2]).collect();
        let y: Vec<f64> = (0..2 * n).map(|k| ys[k / 2] * ne.probs[origin.cols[k / 2]][k % 2]).collect();
        let moved = xs.iter().zip(&wx).chain(ys.iter().zip(&wy)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        wx = xs;
        wy = ys;
        last = Some((x, y));
        if moved < 1e-14 {
            break;
        }
    }
    let (x, y) = last?;
    verify_relative_wsne(bm, &x, &y, 1e-9).is_empty().then_some((x, y))
}

fn solve_linear(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
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
