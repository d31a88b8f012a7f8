use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use eolchain::brouwer::BrouwerInstance;
use eolchain::brouwer2circuit::{compile, CompileParams};
use eolchain::endofline::{
    bits_to_string, make_line_instance, parse_instance, serialize_instance, to_bits, verify_eol_solution, Embedding,
    EndOfLineInstance,
};
use eolchain::fanout2::transform_fanout2;
use eolchain::games::{compile_circuit_to_game, solve_game_small, verify_ane, verify_wsne, GameMap, MixedProfile, PolymatrixGame};
use eolchain::gcircuit::{check_assignment, solve_tiny, Assignment, GeneralizedCircuit};
use eolchain::pipeline::{parse_manifest, ratio_arg, run_pipeline, PipelineParams, MANIFEST_FILE};

#[derive(Parser)]
#[command(name = "eolchain", about = "END-OF-THE-LINE to Brouwer to circuit to polymatrix game")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a line instance given as edges "a-b,c-d" or a path "0,3,1".
    GenEol {
        #[arg(long)]
        n: usize,
        #[arg(long, conflicts_with = "path")]
        edges: Option<String>,
        #[arg(long)]
        path: Option<String>,
        out: Option<PathBuf>,
    },
    /// Print the embedded paths of an instance.
    EmbedWalk { eol: PathBuf },
    /// Displacement g and map f at a point.
    Eval {
        eol: PathBuf,
        #[arg(long)]
        point: String,
        #[arg(long, default_value = "1/44")]
        delta: String,
    },
    /// CSV of the displacement over a 2-D slice.
    SlicePlot {
        eol: PathBuf,
        /// two axes, 1-based
        #[arg(long, default_value = "1,2")]
        axes: String,
        /// base point for the other coordinates (defaults to all 1/2)
        #[arg(long)]
        base: Option<String>,
        #[arg(long, default_value_t = 48)]
        steps: usize,
        #[arg(long, default_value = "1/44")]
        delta: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    CompileCircuit {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value = "1/384")]
        corner: String,
        #[arg(long, default_value = "1/44")]
        delta: String,
        eol: PathBuf,
        out: PathBuf,
        #[arg(long)]
        symbols: Option<PathBuf>,
    },
    Fanout2 {
        #[arg(long)]
        eps_prime: String,
        input: PathBuf,
        out: PathBuf,
    },
    CompileGame { circuit: PathBuf, out: PathBuf },
    /// Build every stage into a directory with a hash manifest; optionally
    /// solve from a planted fixed point and decode back.
    Pipeline {
        eol: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        eps_prime: Option<String>,
        #[arg(long)]
        game_eps: Option<f64>,
        #[arg(long)]
        end_to_end: bool,
    },
    Verify {
        #[command(subcommand)]
        stage: VerifyStage,
    },
    Solve {
        #[command(subcommand)]
        stage: SolveStage,
    },
    Decode {
        #[command(subcommand)]
        stage: DecodeStage,
    },
}

#[derive(Subcommand)]
enum VerifyStage {
    Eol {
        eol: PathBuf,
        #[arg(long)]
        bits: String,
    },
    Point {
        eol: PathBuf,
        #[arg(long)]
        point: String,
        #[arg(long)]
        tol: Option<f64>,
    },
    Circuit {
        circuit: PathBuf,
        assignment: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    Game {
        game: PathBuf,
        profile: PathBuf,
        #[arg(long)]
        eps: f64,
        /// check the weaker average-payoff condition
        #[arg(long)]
        ane: bool,
    },
    Manifest { dir: PathBuf },
}

#[derive(Subcommand)]
enum SolveStage {
    Eol { eol: PathBuf },
    Circuit {
        circuit: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
        out: Option<PathBuf>,
    },
    Game {
        game: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 20_000)]
        budget: usize,
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DecodeStage {
    /// Game profile to circuit assignment.
    Game {
        circuit: PathBuf,
        game: PathBuf,
        profile: PathBuf,
        out: Option<PathBuf>,
    },
    /// Circuit assignment to the point held by the loop nodes.
    Circuit {
        circuit: PathBuf,
        assignment: PathBuf,
        #[arg(long)]
        symbols: PathBuf,
    },
    /// Point to a line solution.
    Point {
        eol: PathBuf,
        #[arg(long)]
        point: String,
        #[arg(long)]
        tol: Option<f64>,
    },
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_eol(p: &Path) -> Result<EndOfLineInstance> {
    Ok(parse_instance(&read(p)?)?)
}

fn load_circuit(p: &Path) -> Result<GeneralizedCircuit> {
    Ok(GeneralizedCircuit::parse(&read(p)?)?)
}

fn floats(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| anyhow!("bad number {t:?}"))).collect()
}

fn fmt17(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(" ")
}

fn brouwer(eol: EndOfLineInstance, delta: &str) -> Result<BrouwerInstance> {
    let d = ratio_arg(delta)?;
    Ok(BrouwerInstance::new(eol, *d.numer() as f64 / *d.denom() as f64)?)
}

fn report(stage: &str, pass: bool, violations: serde_json::Value) -> Outcome {
    println!("{}", json!({ "stage": stage, "pass": pass, "violations": violations }));
    if pass {
        Outcome::Pass
    } else {
        Outcome::Fail
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    match cli.cmd {
        Cmd::GenEol { n, edges, path, out } => {
            let list: Vec<(u64, u64)> = match (edges, path) {
                (Some(e), _) => e
                    .split(',')
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        let (a, b) = t.split_once('-').ok_or_else(|| anyhow!("edge {t:?} is not a-b"))?;
                        Ok((a.trim().parse()?, b.trim().parse()?))
                    })
                    .collect::<Result<_>>()?,
                (None, Some(p)) => {
                    let vs: Vec<u64> = p.split(',').map(|t| t.trim().parse()).collect::<Result<_, _>>()?;
                    vs.windows(2).map(|w| (w[0], w[1])).collect()
                }
                (None, None) => bail!("give --edges or --path"),
            };
            let inst = make_line_instance(n, &list)?;
            emit(out.as_deref(), &serialize_instance(&inst))?;
        }
        Cmd::EmbedWalk { eol } => {
            let inst = load_eol(&eol)?;
            let emb = Embedding::new(&inst);
            let width = 2 * inst.n() + 1;
            for path in emb.paths() {
                let words: Vec<String> = path.iter().map(|&s| bits_to_string(&to_bits(s, width))).collect();
                println!("{}", words.join(" -> "));
            }
            let sols: Vec<String> = inst.solutions().iter().map(|&x| bits_to_string(&to_bits(x, inst.n()))).collect();
            println!("solutions: {}", sols.join(" "));
        }
        Cmd::Eval { eol, point, delta } => {
            let b = brouwer(load_eol(&eol)?, &delta)?;
            let pt = floats(&point)?;
            println!("g {}", fmt17(&b.displacement(&pt)?));
            println!("f {}", fmt17(&b.brouwer_f(&pt)?));
        }
        Cmd::SlicePlot { eol, axes, base, steps, delta, out } => {
            let b = brouwer(load_eol(&eol)?, &delta)?;
            let ax: Vec<usize> = axes.split(',').map(|t| t.trim().parse::<usize>()).collect::<Result<_, _>>()?;
            let dim = b.dim();
            if ax.len() != 2 || ax.iter().any(|&a| a == 0 || a > dim) || ax[0] == ax[1] || steps == 0 {
                bail!("need two distinct axes in 1..={dim} and at least one step");
            }
            let mut pt = match base {
                Some(s) => floats(&s)?,
                None => vec![0.5; dim],
            };
            if pt.len() != dim {
                bail!("base point has {} coordinates, expected {dim}", pt.len());
            }
            let (i, j) = (ax[0] - 1, ax[1] - 1);
            let mut csv = format!("x_{},x_{}", ax[0], ax[1]);
            for k in 1..=dim {
                csv.push_str(&format!(",g_{k}"));
            }
            csv.push('\n');
            for a in 0..=steps {
                for c in 0..=steps {
                    pt[i] = a as f64 / steps as f64;
                    pt[j] = c as f64 / steps as f64;
                    let g = b.displacement(&pt)?;
                    let cells: Vec<String> = g.iter().map(|v| format!("{v:.16e}")).collect();
                    csv.push_str(&format!("{},{},{}\n", pt[i], pt[j], cells.join(",")));
                }
            }
            emit(out.as_deref(), &csv)?;
        }
        Cmd::CompileCircuit { n, eps, samples, corner, delta, eol, out, symbols } => {
            let inst = load_eol(&eol)?;
            if inst.n() != n {
                bail!("--n {n} does not match the instance (n = {})", inst.n());
            }
            let params = CompileParams {
                eps: ratio_arg(&eps)?,
                samples: Some(samples),
                corner_width: Some(ratio_arg(&corner)?),
                delta: ratio_arg(&delta)?,
            };
            let bundle = compile(&inst, &params)?;
            fs::write(&out, bundle.circuit.serialize())?;
            if let Some(s) = symbols {
                fs::write(s, bundle.serialize_symbols())?;
            }
            eprintln!("{} nodes, {} gates", bundle.circuit.n_nodes(), bundle.circuit.gates().len());
        }
        Cmd::Fanout2 { eps_prime, input, out } => {
            let c = load_circuit(&input)?;
            let t = transform_fanout2(&c, ratio_arg(&eps_prime)?)?;
            fs::write(&out, t.serialize())?;
            eprintln!("{} -> {} gates, max fan-out {}", c.gates().len(), t.gates().len(), t.max_fanout());
        }
        Cmd::CompileGame { circuit, out } => {
            let c = load_circuit(&circuit)?;
            let (game, _) = compile_circuit_to_game(&c)?;
            fs::write(&out, game.serialize())?;
            eprintln!("{} players, {} edges", game.n_players(), game.edges().len());
        }
        Cmd::Pipeline { eol, out, eps, eps_prime, game_eps, end_to_end } => {
            let inst = load_eol(&eol)?;
            let mut params = PipelineParams::desk();
            if let Some(e) = eps {
                params.eps = ratio_arg(&e)?;
            }
            if let Some(e) = eps_prime {
                params.eps_prime = ratio_arg(&e)?;
            }
            if let Some(g) = game_eps {
                params.game_eps = g;
            }
            let bundle = run_pipeline(&inst, &params)?;
            let manifest = bundle.write_to(&out)?;
            eprintln!("wrote {} artifacts to {}", manifest.files.len(), out.display());
            if end_to_end {
                let mut all = true;
                let mut runs = Vec::new();
                for y in bundle.planted_fixed_points() {
                    let seed = bundle.seed_at(&y)?;
                    let Some(profile) = bundle.solve_seeded(seed, 100) else {
                        all = false;
                        runs.push(json!({ "seed": y, "solved": false }));
                        continue;
                    };
                    let rep = bundle.decode(&profile)?;
                    all &= rep.passed();
                    runs.push(json!({
                        "seed": y,
                        "solved": true,
                        "game_violations": rep.game_violations,
                        "circuit_violations": rep.circuit_violations.len(),
                        "original_violations": rep.original_violations,
                        "residual": rep.residual,
                        "bits": rep.bits.as_deref().map(bits_to_string),
                        "eol_ok": rep.eol_ok,
                    }));
                }
                return Ok(report("pipeline", all && !runs.is_empty(), json!(runs)));
            }
        }
        Cmd::Verify { stage } => return verify(stage),
        Cmd::Solve { stage } => return solve(stage),
        Cmd::Decode { stage } => return decode(stage),
    }
    Ok(Outcome::Pass)
}

fn parse_bits(s: &str) -> Result<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => Err(anyhow!("bits must be 0/1, got {c:?}")),
        })
        .collect()
}

fn decode_point(eol: &Path, point: &str, tol: Option<f64>) -> Result<(Option<Vec<bool>>, bool)> {
    let b = brouwer(load_eol(eol)?, "1/44")?;
    let tol = tol.unwrap_or(b.delta() / 2.0);
    let pt = floats(point)?;
    let bits = match b.decode_fixed_point(&pt, tol) {
        Ok(bits) => bits,
        Err(eolchain::brouwer::BrouwerError::NotApproxFixed { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let ok = match &bits {
        Some(x) => verify_eol_solution(b.eol(), x)?,
        None => false,
    };
    Ok((bits, ok))
}

fn verify(stage: VerifyStage) -> Result<Outcome> {
    Ok(match stage {
        VerifyStage::Eol { eol, bits } => {
            let inst = load_eol(&eol)?;
            let ok = verify_eol_solution(&inst, &parse_bits(&bits)?)?;
            report("eol", ok, json!([]))
        }
        VerifyStage::Point { eol, point, tol } => {
            let (bits, ok) = decode_point(&eol, &point, tol)?;
            report("point", ok, json!({ "bits": bits.as_deref().map(bits_to_string) }))
        }
        VerifyStage::Circuit { circuit, assignment, eps } => {
            let c = load_circuit(&circuit)?;
            let x = Assignment::parse(&c, &read(&assignment)?)?;
            let bad = check_assignment(&c, &x, eps)?;
            report("circuit", bad.is_empty(), json!(bad))
        }
        VerifyStage::Game { game, profile, eps, ane } => {
            let g = PolymatrixGame::parse(&read(&game)?)?;
            let p = MixedProfile::parse(&g, &read(&profile)?)?;
            if ane {
                let bad = verify_ane(&g, &p, eps);
                report("game", bad.is_empty(), json!(bad))
            } else {
                let bad = verify_wsne(&g, &p, eps);
                report("game", bad.is_empty(), json!(bad))
            }
        }
        VerifyStage::Manifest { dir } => {
            let m = parse_manifest(&read(&dir.join(MANIFEST_FILE))?)?;
            let bad = m.check(&dir);
            report("manifest", bad.is_empty(), json!(bad))
        }
    })
}

fn solve(stage: SolveStage) -> Result<Outcome> {
    Ok(match stage {
        SolveStage::Eol { eol } => {
            let inst = load_eol(&eol)?;
            let sols: Vec<String> = inst.solutions().iter().map(|&x| bits_to_string(&to_bits(x, inst.n()))).collect();
            println!("{}", json!({ "solutions": sols }));
            Outcome::Pass
        }
        SolveStage::Circuit { circuit, eps, budget, out } => {
            let c = load_circuit(&circuit)?;
            match solve_tiny(&c, eps, budget) {
                Some(x) => {
                    emit(out.as_deref(), &x.serialize(&c))?;
                    Outcome::Pass
                }
                None => report("circuit", false, json!("no assignment found within budget")),
            }
        }
        SolveStage::Game { game, eps, budget, out } => {
            let g = PolymatrixGame::parse(&read(&game)?)?;
            match solve_game_small(&g, eps, budget) {
                Some(p) => {
                    emit(out.as_deref(), &p.serialize())?;
                    Outcome::Pass
                }
                None => report("game", false, json!("no equilibrium found within budget")),
            }
        }
    })
}

fn decode(stage: DecodeStage) -> Result<Outcome> {
    Ok(match stage {
        DecodeStage::Game { circuit, game, profile, out } => {
            let c = load_circuit(&circuit)?;
            let g = PolymatrixGame::parse(&read(&game)?)?;
            if g.n_players() != c.n_nodes() + c.gates().len() {
                bail!("game has {} players; the circuit needs {}", g.n_players(), c.n_nodes() + c.gates().len());
            }
            let p = MixedProfile::parse(&g, &read(&profile)?)?;
            let x = GameMap::for_circuit(&c).assignment(&p);
            emit(out.as_deref(), &x.serialize(&c))?;
            Outcome::Pass
        }
        DecodeStage::Circuit { circuit, assignment, symbols } => {
            let c = load_circuit(&circuit)?;
            let x = Assignment::parse(&c, &read(&assignment)?)?;
            let mut ys = Vec::new();
            for line in read(&symbols)?.lines() {
                let mut t = line.split_whitespace();
                if let (Some(name), Some(id)) = (t.next(), t.next()) {
                    if let Some(k) = name.strip_prefix('y').and_then(|k| k.parse::<usize>().ok()) {
                        let v = x.values.get(id.parse::<usize>()?).copied().unwrap_or(f64::NAN);
                        if v.is_nan() {
                            bail!("assignment has no value for {name}");
                        }
                        ys.push((k, v));
                    }
                }
            }
            if ys.is_empty() {
                bail!("symbol file names no loop inputs");
            }
            ys.sort_by_key(|p| p.0);
            let pt: Vec<String> = ys.iter().map(|p| format!("{:.17}", p.1)).collect();
            println!("{}", pt.join(","));
            Outcome::Pass
        }
        DecodeStage::Point { eol, point, tol } => {
            let (bits, ok) = decode_point(&eol, &point, tol)?;
            report("point", ok, json!({ "bits": bits.as_deref().map(bits_to_string) }))
        }
    })
}
