//! Runs the whole chain (END-OF-THE-LINE instance, Brouwer circuit, fan-out 2
//! circuit, polymatrix game), writes the artifacts with a content-hash
//! manifest, and decodes game profiles back to line solutions.

use std::collections::BTreeMap;
use std::path::Path;

use num_rational::Rational64;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::brouwer::{BrouwerError, BrouwerInstance};
use crate::brouwer2circuit::{compile, oracle, CompileParams, CompiledBundle};
use crate::endofline::{serialize_instance, verify_eol_solution, EndOfLineInstance, EolError};
use crate::fanout2::{bus_len, transform_fanout2};
use crate::gadgets::granularity;
use crate::gcircuit::{check_assignment, parse_rational, Assignment, ForwardPlan, GcError, GeneralizedCircuit};
use crate::games::{
    compile_circuit_to_game, seed_profile, solve_from, verify_wsne, GameError, GameMap, MixedProfile, PolymatrixGame,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("parameters: {0}")]
    Param(String),
    #[error(transparent)]
    Circuit(#[from] GcError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Brouwer(#[from] BrouwerError),
    #[error(transparent)]
    Eol(#[from] EolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

mod ratio {
    use num_rational::Rational64;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational64, D::Error> {
        let t = String::deserialize(d)?;
        crate::gcircuit::parse_rational(&t).ok_or_else(|| serde::de::Error::custom(format!("bad rational {t}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    /// circuit tolerance; 1/sqrt(eps) must be an integer
    #[serde(with = "ratio")]
    pub eps: Rational64,
    /// fan-out transform accuracy; 4/eps' must be an integer
    #[serde(with = "ratio")]
    pub eps_prime: Rational64,
    #[serde(with = "ratio")]
    pub delta: Rational64,
    pub samples: usize,
    #[serde(with = "ratio")]
    pub corner_width: Rational64,
    /// well-supported tolerance for the game stage
    pub game_eps: f64,
    /// scale of the main game in the relative-equilibrium construction
    pub eta: f64,
}

impl PipelineParams {
    /// Desk-scale settings: the n=1 game has about four million players and
    /// the fan-out 2 circuit closes its loop at the planted zeros to within
    /// a third of the game tolerance.
    pub fn desk() -> Self {
        PipelineParams {
            eps: Rational64::new(1, 256),
            eps_prime: Rational64::new(1, 96),
            delta: Rational64::new(1, 44),
            samples: 1,
            corner_width: Rational64::new(1, 384),
            game_eps: 0.01,
            eta: 0.01,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        granularity(self.eps)?;
        bus_len(self.eps_prime)?;
        if !(self.game_eps > 0.0 && self.game_eps < 0.5) {
            return Err(PipelineError::Param(format!("game eps {} outside (0, 1/2)", self.game_eps)));
        }
        if !(self.eta > 0.0 && self.eta <= 0.1) {
            return Err(PipelineError::Param(format!("eta {} outside (0, 1/10]", self.eta)));
        }
        if self.samples == 0 {
            return Err(PipelineError::Param("at least one sample".into()));
        }
        Ok(())
    }

    pub fn compile_params(&self) -> CompileParams {
        CompileParams {
            eps: self.eps,
            samples: Some(self.samples),
            corner_width: Some(self.corner_width),
            delta: self.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub params: PipelineParams,
    /// file name -> sha256 of its contents
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    /// Files whose current contents do not match the recorded hash.
    pub fn check(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|(name, hash)| std::fs::read(dir.join(name)).map(|b| &sha256_hex(&b) != *hash).unwrap_or(true))
            .map(|(name, _)| name.clone())
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub const EOL_FILE: &str = "eol.txt";
pub const CIRCUIT_FILE: &str = "circuit.gc";
pub const SYMBOL_FILE: &str = "circuit.sym";
pub const FANOUT_FILE: &str = "fanout2.gc";
pub const GAME_FILE: &str = "game.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

pub struct PipelineBundle {
    pub params: PipelineParams,
    pub eol: EndOfLineInstance,
    pub compiled: CompiledBundle,
    pub fanout: GeneralizedCircuit,
    pub game: PolymatrixGame,
    pub map: GameMap,
}

pub fn run_pipeline(eol: &EndOfLineInstance, params: &PipelineParams) -> Result<PipelineBundle, PipelineError> {
    params.validate()?;
    let compiled = compile(eol, &params.compile_params())?;
    let fanout = transform_fanout2(&compiled.circuit, params.eps_prime)?;
    let (game, map) = compile_circuit_to_game(&fanout)?;
    Ok(PipelineBundle { params: params.clone(), eol: eol.clone(), compiled, fanout, game, map })
}

impl PipelineBundle {
    pub fn oracle(&self) -> BrouwerInstance {
        oracle(&self.eol, &self.compiled.params)
    }

    /// File name and contents of every artifact.
    pub fn artifacts(&self) -> Vec<(&'static str, String)> {
        vec![
            (EOL_FILE, serialize_instance(&self.eol)),
            (CIRCUIT_FILE, self.compiled.circuit.serialize()),
            (SYMBOL_FILE, self.compiled.serialize_symbols()),
            (FANOUT_FILE, self.fanout.serialize()),
            (GAME_FILE, self.game.serialize()),
        ]
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            n: self.eol.n(),
            params: self.params.clone(),
            files: self.artifacts().into_iter().map(|(k, v)| (k.to_string(), sha256_hex(v.as_bytes()))).collect(),
        }
    }

    pub fn write_to(&self, dir: &Path) -> Result<Manifest, PipelineError> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in self.artifacts() {
            std::fs::write(dir.join(name), text)?;
        }
        let m = self.manifest();
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&m)?)?;
        Ok(m)
    }

    /// Fan-out 2 circuit values with the loop inputs pinned at `y`.
    pub fn forward_at(&self, y: &[f64]) -> Result<Assignment, PipelineError> {
        let plan = ForwardPlan::new(&self.fanout, &self.compiled.inputs)?;
        Ok(plan.evaluate(y))
    }

    /// Game profile built from the circuit values at `y`.
    pub fn seed_at(&self, y: &[f64]) -> Result<MixedProfile, PipelineError> {
        let x = self.forward_at(y)?;
        Ok(seed_profile(&self.game, &self.map, &x, self.params.game_eps))
    }

    /// Exact zeros of the Brouwer map in non-home terminal cells.
    pub fn planted_fixed_points(&self) -> Vec<Vec<f64>> {
        let inst = self.oracle();
        (0..inst.n_states()).filter_map(|s| inst.terminal_fixed_point(s)).collect()
    }

    /// Damped best response started from `seed`.
    pub fn solve_seeded(&self, seed: MixedProfile, budget: usize) -> Option<MixedProfile> {
        solve_from(&self.game, seed, self.params.game_eps, budget)
    }

    /// Game profile -> circuit assignment -> point -> line solution, checking
    /// each stage at its own tolerance.
    pub fn decode(&self, profile: &MixedProfile) -> Result<DecodeReport, PipelineError> {
        profile.validate(&self.game)?;
        let ge = self.params.game_eps;
        let game_violations = verify_wsne(&self.game, profile, ge).len();
        let x = self.map.assignment(profile);
        let circuit_violations = check_assignment(&self.fanout, &x, 2.0 * ge)?;
        let orig = Assignment { values: x.values[..self.compiled.circuit.n_nodes()].to_vec() };
        let tol = 2.0 * ge + self.params.eps_prime.to_f64().unwrap_or(1.0);
        let original_violations = check_assignment(&self.compiled.circuit, &orig, tol)?.len();
        let y: Vec<f64> = self.compiled.inputs.iter().map(|&v| x.values[v]).collect();
        let inst = self.oracle();
        let g = inst.displacement(&y)?;
        let residual = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let decode_tol = inst.delta() / 2.0;
        let bits = if residual <= decode_tol { inst.decode_fixed_point(&y, decode_tol)? } else { None };
        let eol_ok = match &bits {
            Some(b) => verify_eol_solution(&self.eol, b)?,
            None => false,
        };
        Ok(DecodeReport { game_violations, circuit_violations, original_violations, y, residual, bits, eol_ok })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeReport {
    /// unsupported-but-played actions at the game tolerance
    pub game_violations: usize,
    /// fan-out 2 gates violated at twice the game tolerance
    pub circuit_violations: Vec<usize>,
    /// original gates violated at 2 game eps + eps'; informational, since
    /// consumers of copied values read them through the unary buses
    pub original_violations: usize,
    pub y: Vec<f64>,
    /// sup norm of the Brouwer displacement at y
    pub residual: f64,
    pub bits: Option<Vec<bool>>,
    pub eol_ok: bool,
}

impl DecodeReport {
    pub fn passed(&self) -> bool {
        self.game_violations == 0 && self.circuit_violations.is_empty() && self.eol_ok
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest, PipelineError> {
    Ok(serde_json::from_str(text)?)
}

/// Parses "p/q" or an integer.
pub fn ratio_arg(s: &str) -> Result<Rational64, PipelineError> {
    parse_rational(s).ok_or_else(|| PipelineError::Param(format!("expected a rational p/q, got {s}")))
}
