//! The displacement field g and map f = id + g on [0,1]^{2n+2}.
//!
//! The slice axis is the last coordinate. Inside the picture
//! [2/6,4/6]^{2n+1} x [2/6,3/6] every cell has side h = 1/6 and bit
//! b_k = [y_k < 1/2]; a cell is a state of the embedded walk. All facets
//! shared by consecutive cells of a path sit at coordinate 1/2.

use thiserror::Error;

use crate::endofline::{to_bits, Embedding, EndOfLineInstance, PredWord};

pub const H: f64 = 1.0 / 6.0;
pub const DEFAULT_DELTA: f64 = 1.0 / 44.0;
const LO: f64 = 2.0 / 6.0;
const HI: f64 = 4.0 / 6.0;
const MID: f64 = 0.5;
/// Spacing of the radial anchors, h/16.
const STEP: f64 = H / 16.0;
const MAX_DIM: usize = 64;
/// Tube tables are precomputed up to this many cell bits.
const CACHE_BITS: usize = 17;

#[derive(Debug, Error, PartialEq)]
pub enum BrouwerError {
    #[error("point has {got} coordinates, expected {expected}")]
    Dim { expected: usize, got: usize },
    #[error("coordinate {index} = {value} is outside [0,1]")]
    OutOfDomain { index: usize, value: f64 },
    #[error("delta = {0} must lie in (0, 1/8]")]
    Delta(f64),
    #[error("point is {0:e} away from the facet plane")]
    NotOnFacet(f64),
    #[error("f left the unit cube at coordinate {index} (value {value})")]
    Clamp { index: usize, value: f64 },
    #[error("decoding tolerance {tol} exceeds delta/2 = {limit}")]
    Tolerance { tol: f64, limit: f64 },
    #[error("|g(x)| = {norm} is above the tolerance {tol}")]
    NotApproxFixed { norm: f64, tol: f64 },
    #[error("theta_max is undefined at (0, 0)")]
    ThetaDomain,
}

/// An axis together with a direction of travel along it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SignedAxis {
    pub axis: usize,
    pub sign: i8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Picture,
    Frame,
    BelowSlice,
    AboveSlice,
    TopFacet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TubeStatus {
    OffTube,
    Intermediate,
    Start,
    End,
    Home,
}

/// Where a point sits. `bits` has one entry per coordinate (the slice bit is
/// `[y_D < 1/2]`); tube fields are only meaningful in the picture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubcubeInfo {
    pub bits: Vec<bool>,
    pub region: Region,
    pub tube_status: TubeStatus,
    pub enter_dir: Option<SignedAxis>,
    pub exit_dir: Option<SignedAxis>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarCoord {
    pub r: f64,
    pub p: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tube {
    status: TubeStatus,
    enter: Option<SignedAxis>,
    exit: Option<SignedAxis>,
}

const OFF: Tube = Tube { status: TubeStatus::OffTube, enter: None, exit: None };

#[derive(Debug, Clone)]
pub struct BrouwerInstance {
    eol: EndOfLineInstance,
    n: usize,
    delta: f64,
    dim: usize,
    tubes: Option<Vec<Tube>>,
}

pub fn theta_max(x: f64, y: f64) -> Result<f64, BrouwerError> {
    if x + y <= 0.0 {
        return Err(BrouwerError::ThetaDomain);
    }
    Ok(y / (x + y))
}

pub fn maxnorm_polar(z: &[f64], x: &[f64]) -> PolarCoord {
    let r = z.iter().zip(x).map(|(a, b)| (b - a).abs()).fold(0.0, f64::max);
    if r == 0.0 {
        return PolarCoord { r, p: None };
    }
    PolarCoord { r, p: Some(z.iter().zip(x).map(|(a, b)| (b - a) / r).collect()) }
}

fn ramp(r: f64, a: f64) -> f64 {
    ((r - a) / STEP).clamp(0.0, 1.0)
}

/// Coefficients (alpha, beta, gamma) of the facet profile
/// `alpha * travel - beta * p + gamma * e_D` at radius r.
///
/// Anchor values, in units of h/16: 0 travel, 1 travel - p, 2 -p,
/// 3 -p - travel, 4 -travel, 6 -travel + e_D, 8 and beyond e_D.
/// When the travel direction is -e_D the e_D ramp is moved to the last
/// segment so the magnitude never exceeds 1.
fn profile(r: f64, slice_travel: bool) -> (f64, f64, f64) {
    let r1 = ramp(r, 0.0);
    let r2 = ramp(r, STEP);
    let r3 = ramp(r, 2.0 * STEP);
    let r4 = ramp(r, 3.0 * STEP);
    let r5 = ((r - 4.0 * STEP) / (2.0 * STEP)).clamp(0.0, 1.0);
    let r6 = ((r - 6.0 * STEP) / (2.0 * STEP)).clamp(0.0, 1.0);
    let gamma = if slice_travel { r6 } else { r5 };
    (1.0 - r2 - r3 + r6, r1 - r4, gamma)
}

fn cell_center(bit: bool) -> f64 {
    if bit {
        MID - H / 2.0
    } else {
        MID + H / 2.0
    }
}

/// +1 when the cell lies above the wall at 1/2 along this axis.
fn into_cell(bit: bool) -> f64 {
    if bit {
        -1.0
    } else {
        1.0
    }
}

impl BrouwerInstance {
    pub fn new(eol: EndOfLineInstance, delta: f64) -> Result<Self, BrouwerError> {
        if !(delta > 0.0 && delta <= 0.125) {
            return Err(BrouwerError::Delta(delta));
        }
        let n = eol.n();
        let mut inst = BrouwerInstance { eol, n, delta, dim: 2 * n + 2, tubes: None };
        if 2 * n < CACHE_BITS {
            let tubes = (0..1u64 << (2 * n + 1)).map(|s| inst.compute_tube(s)).collect();
            inst.tubes = Some(tubes);
        }
        Ok(inst)
    }

    pub fn with_default_delta(eol: EndOfLineInstance) -> Self {
        Self::new(eol, DEFAULT_DELTA).expect("default delta is valid")
    }

    pub fn eol(&self) -> &EndOfLineInstance {
        &self.eol
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        H
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn compute_tube(&self, s: u64) -> Tube {
        let e = Embedding::new(&self.eol);
        let slice = self.dim - 1;
        let bit = |k: usize| (s >> k) & 1 == 1;
        let enter = match e.pred(s) {
            PredWord::Above => Some(SignedAxis { axis: slice, sign: -1 }),
            PredWord::State(t) if t == s => None,
            PredWord::State(t) => {
                let k = (s ^ t).trailing_zeros() as usize;
                Some(SignedAxis { axis: k, sign: into_cell(bit(k)) as i8 })
            }
        };
        let t = e.succ(s);
        let exit = (t != s).then(|| {
            let k = (s ^ t).trailing_zeros() as usize;
            SignedAxis { axis: k, sign: -into_cell(bit(k)) as i8 }
        });
        let status = match (s, enter, exit) {
            (0, _, _) => TubeStatus::Home,
            (_, Some(_), Some(_)) => TubeStatus::Intermediate,
            (_, None, Some(_)) => TubeStatus::Start,
            (_, Some(_), None) => TubeStatus::End,
            (_, None, None) => TubeStatus::OffTube,
        };
        if enter.is_none() && exit.is_none() {
            return OFF;
        }
        Tube { status, enter, exit }
    }

    fn tube(&self, s: u64) -> Tube {
        match &self.tubes {
            Some(t) => t[s as usize],
            None => self.compute_tube(s),
        }
    }

    fn check_point(&self, pt: &[f64]) -> Result<(), BrouwerError> {
        if pt.len() != self.dim {
            return Err(BrouwerError::Dim { expected: self.dim, got: pt.len() });
        }
        if let Some((index, &value)) = pt.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(BrouwerError::OutOfDomain { index, value });
        }
        Ok(())
    }

    fn region(&self, pt: &[f64]) -> Region {
        let yd = pt[self.dim - 1];
        if yd >= 1.0 {
            Region::TopFacet
        } else if yd >= MID {
            Region::AboveSlice
        } else if yd < LO {
            Region::BelowSlice
        } else if pt[..self.dim - 1].iter().any(|&y| !(LO..=HI).contains(&y)) {
            Region::Frame
        } else {
            Region::Picture
        }
    }

    fn state_word(&self, pt: &[f64]) -> u64 {
        pt[..self.dim - 1]
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &y)| acc | (((y < MID) as u64) << k))
    }

    pub fn locate(&self, pt: &[f64]) -> Result<SubcubeInfo, BrouwerError> {
        self.check_point(pt)?;
        let bits: Vec<bool> = pt.iter().map(|&y| y < MID).collect();
        let region = self.region(pt);
        let tube = if region == Region::Picture { self.tube(self.state_word(pt)) } else { OFF };
        Ok(SubcubeInfo {
            bits,
            region,
            tube_status: tube.status,
            enter_dir: tube.enter,
            exit_dir: tube.exit,
        })
    }

    /// Value of g on a facet with the given travel direction, evaluated at a
    /// point of that facet.
    pub fn facet_displacement(
        &self,
        center: &[f64],
        travel: SignedAxis,
        pt_on_facet: &[f64],
    ) -> Result<Vec<f64>, BrouwerError> {
        self.check_point(pt_on_facet)?;
        if center.len() != self.dim {
            return Err(BrouwerError::Dim { expected: self.dim, got: center.len() });
        }
        let off = (pt_on_facet[travel.axis] - center[travel.axis]).abs();
        if off > 1e-12 {
            return Err(BrouwerError::NotOnFacet(off));
        }
        let polar = maxnorm_polar(center, pt_on_facet);
        let mut out = vec![0.0; self.dim];
        let zero = vec![0.0; self.dim];
        let p = polar.p.as_deref().unwrap_or(&zero);
        self.add_profile(&mut out, 1.0, polar.r, p, travel);
        Ok(out)
    }

    /// out += weight * delta * (facet profile at (r, p)).
    fn add_profile(&self, out: &mut [f64], weight: f64, r: f64, p: &[f64], travel: SignedAxis) {
        let slice = self.dim - 1;
        let (a, b, c) = profile(r, travel.axis == slice);
        let w = weight * self.delta;
        for (o, &pk) in out.iter_mut().zip(p) {
            *o -= w * b * pk;
        }
        out[travel.axis] += w * a * travel.sign as f64;
        out[slice] += w * c;
    }

    pub fn displacement(&self, pt: &[f64]) -> Result<Vec<f64>, BrouwerError> {
        self.check_point(pt)?;
        let mut out = vec![0.0; self.dim];
        self.displacement_into(pt, &mut out);
        Ok(out)
    }

    /// Allocation-free evaluation of g; `pt` must already be validated.
    pub fn displacement_into(&self, pt: &[f64], out: &mut [f64]) {
        let dim = self.dim;
        let slice = dim - 1;
        out.iter_mut().for_each(|o| *o = 0.0);
        match self.region(pt) {
            Region::Frame | Region::BelowSlice => out[slice] = self.delta,
            Region::AboveSlice | Region::TopFacet => self.above_slice(pt, out),
            Region::Picture => {
                let s = self.state_word(pt);
                let tube = self.tube(s);
                match (tube.enter, tube.exit) {
                    (None, None) => out[slice] = self.delta,
                    (Some(i), Some(j)) => self.turning_cell(pt, s, i, j, out),
                    (Some(a), None) | (None, Some(a)) => self.terminal_cell(pt, s, a, out),
                }
            }
        }
    }

    fn center(&self, s: u64, k: usize) -> f64 {
        if k == self.dim - 1 {
            cell_center(true)
        } else {
            cell_center((s >> k) & 1 == 1)
        }
    }

    fn sigma(&self, s: u64, k: usize) -> f64 {
        if k == self.dim - 1 {
            -1.0
        } else {
            into_cell((s >> k) & 1 == 1)
        }
    }

    /// Cells whose path enters through one facet and leaves through an
    /// adjacent one: both facet values are taken at the same distance from
    /// the shared edge and blended by the max-norm angle.
    fn turning_cell(&self, pt: &[f64], s: u64, enter: SignedAxis, exit: SignedAxis, out: &mut [f64]) {
        let (i, j) = (enter.axis, exit.axis);
        let d_in = (pt[i] - MID).abs();
        let d_out = (pt[j] - MID).abs();
        let rho = d_in.max(d_out);
        let e = rho - H / 2.0;
        let mut r = e.abs();
        for k in (0..self.dim).filter(|&k| k != i && k != j) {
            r = r.max((pt[k] - self.center(s, k)).abs());
        }
        let mut p_in = [0.0; MAX_DIM];
        let mut p_out = [0.0; MAX_DIM];
        if r > 0.0 {
            for k in (0..self.dim).filter(|&k| k != i && k != j) {
                let v = (pt[k] - self.center(s, k)) / r;
                p_in[k] = v;
                p_out[k] = v;
            }
            p_in[j] = self.sigma(s, j) * e / r;
            p_out[i] = self.sigma(s, i) * e / r;
        }
        let w = if d_in + d_out > 0.0 { theta_max(d_out, d_in).expect("positive sum") } else { 0.0 };
        self.add_profile(out, 1.0 - w, r, &p_in[..self.dim], enter);
        self.add_profile(out, w, r, &p_out[..self.dim], exit);
    }

    /// Start and end cells: the facet value on the path facet, faded out
    /// linearly toward the opposite facet where g is delta * e_D.
    fn terminal_cell(&self, pt: &[f64], s: u64, travel: SignedAxis, out: &mut [f64]) {
        let a = travel.axis;
        let t = ((pt[a] - MID).abs() / H).min(1.0);
        let mut r: f64 = 0.0;
        for k in (0..self.dim).filter(|&k| k != a) {
            r = r.max((pt[k] - self.center(s, k)).abs());
        }
        let mut p = [0.0; MAX_DIM];
        if r > 0.0 {
            for k in (0..self.dim).filter(|&k| k != a) {
                p[k] = (pt[k] - self.center(s, k)) / r;
            }
        }
        self.add_profile(out, 1.0 - t, r, &p[..self.dim], travel);
        out[self.dim - 1] += t * self.delta;
    }

    /// Above the slice: blend between the field continuing the home entry
    /// facet (at y_D = 1/2) and a field pointing toward the top center.
    fn above_slice(&self, pt: &[f64], out: &mut [f64]) {
        let slice = self.dim - 1;
        let s = (2.0 * pt[slice] - 1.0).clamp(0.0, 1.0);
        let top_center = cell_center(false);
        let r = pt[..slice].iter().map(|&y| (y - top_center).abs()).fold(0.0, f64::max);
        let mut p = [0.0; MAX_DIM];
        if r > 0.0 {
            for k in 0..slice {
                p[k] = (pt[k] - top_center) / r;
            }
        }
        let down = SignedAxis { axis: slice, sign: -1 };
        self.add_profile(out, 1.0 - s, r, &p[..self.dim], down);
        // top layer: -e_D at the axis, -e_D - p at h/16, -p from h/8 on
        let a = 1.0 - ramp(r, STEP);
        let b = ramp(r, 0.0);
        let w = s * self.delta;
        for k in 0..slice {
            out[k] -= w * b * p[k];
        }
        out[slice] -= w * a;
    }

    /// f = x + g. Leaving the cube is reported as an error rather than clamped.
    pub fn brouwer_f(&self, pt: &[f64]) -> Result<Vec<f64>, BrouwerError> {
        let g = self.displacement(pt)?;
        let f: Vec<f64> = pt.iter().zip(&g).map(|(x, d)| x + d).collect();
        if let Some((index, &value)) = f.iter().enumerate().find(|(_, v)| !(-1e-15..=1.0 + 1e-15).contains(*v)) {
            return Err(BrouwerError::Clamp { index, value });
        }
        Ok(f.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    /// Reads an END-OF-THE-LINE solution off an approximate fixed point.
    pub fn decode_fixed_point(&self, pt: &[f64], tol: f64) -> Result<Option<Vec<bool>>, BrouwerError> {
        let limit = self.delta / 2.0;
        if tol > limit {
            return Err(BrouwerError::Tolerance { tol, limit });
        }
        let g = self.displacement(pt)?;
        let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm > tol {
            return Err(BrouwerError::NotApproxFixed { norm, tol });
        }
        let info = self.locate(pt)?;
        let u = || to_bits(self.state_word(pt), self.n);
        Ok(match info.tube_status {
            TubeStatus::Start | TubeStatus::End => Some(u()),
            // a home cell with no way out means 0 itself is a solution
            TubeStatus::Home if info.exit_dir.is_none() => Some(u()),
            _ => None,
        })
    }

    /// Number of state words (cells of the slice).
    pub fn n_states(&self) -> u64 {
        1 << (self.dim - 1)
    }

    /// Center of a picture cell given by its state word.
    pub fn cell_center_point(&self, s: u64) -> Vec<f64> {
        (0..self.dim).map(|k| self.center(s, k)).collect()
    }

    /// State word of a picture point's cell.
    pub fn cell_of(&self, pt: &[f64]) -> u64 {
        self.state_word(pt)
    }

    /// The exact zero of g inside a start or end cell: a distance h/8 above
    /// the cell center along the slice axis.
    pub fn terminal_fixed_point(&self, s: u64) -> Option<Vec<f64>> {
        if s >= self.n_states() {
            return None;
        }
        let t = self.tube(s);
        if !matches!(t.status, TubeStatus::Start | TubeStatus::End) {
            return None;
        }
        let mut c = self.cell_center_point(s);
        c[self.dim - 1] += H / 8.0;
        Some(c)
    }

    /// Is this cell a path terminal other than home?
    pub fn is_terminal_cell(&self, s: u64) -> bool {
        s < self.n_states() && matches!(self.tube(s).status, TubeStatus::Start | TubeStatus::End)
    }
}
