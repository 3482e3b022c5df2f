//! Command-line front end. Every subcommand echoes its full effective
//! configuration and writes deterministic JSON/CSV, so any run can be
//! reproduced from its own output.
//!
//! Exit codes: 0 success, 1 validation error, 2 numeric/budget failure,
//! 3 harness FAIL verdict. Errors print a single machine-parsable line
//! `E:<code>:<message>` on stderr.

use clap::{Args, Parser, Subcommand};
use cltlab_core::error::Error as CoreError;
use cltlab_core::experiments::{self, HarnessConfig};
use cltlab_core::limitlaw::{self, LimitKind};
use cltlab_core::{atoms, edgeworth, exactdist, io as cio, lattice, resonance};
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cltlab",
    about = "Numerical laboratory for exact CLT error terms of atomic distributions",
    version
)]
struct Cli {
    /// Worker thread count; outputs are independent of it [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Optional key=value config file; explicit flags win on conflict
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts [default: .]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed [default: 1]
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DistArgs {
    /// Comma-separated atom values [default: -1,0,1]
    #[arg(long, allow_hyphen_values = true)]
    atoms: Option<String>,
    /// Comma-separated probabilities [default: 0.25,0.5,0.25]
    #[arg(long)]
    probs: Option<String>,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Exact law of S_n as a value,mass CSV
    ExactLaw {
        #[command(flatten)]
        dist: DistArgs,
        /// Number of summands
        #[arg(long)]
        n: u64,
        /// Support merge tolerance [default: 1e-9 * max|a|]
        #[arg(long)]
        merge_tol: Option<f64>,
    },
    /// Evaluate the order-r Edgeworth series at z
    Edgeworth {
        #[command(flatten)]
        dist: DistArgs,
        /// Series order [default: 2]
        #[arg(long)]
        r: Option<usize>,
        /// Evaluation point [default: 0]
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// Number of summands
        #[arg(long)]
        n: u64,
    },
    /// Exact Edgeworth error E_r(z) - P(S_n/(sigma sqrt n) <= z)
    Error {
        #[command(flatten)]
        dist: DistArgs,
        /// Number of summands
        #[arg(long)]
        n: u64,
        /// Series order [default: d]
        #[arg(long)]
        r: Option<usize>,
        /// Evaluation point [default: 0]
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
    },
    /// Per-interval peak table k,s_k,bar_s,r,phi,eta...,resonant
    Resonance {
        #[command(flatten)]
        dist: DistArgs,
        /// Number of summands (sets the resonance threshold)
        #[arg(long)]
        n: u64,
        /// Smallest interval index [default: 1]
        #[arg(long)]
        kmin: Option<i64>,
        /// Largest interval index [default: 64]
        #[arg(long)]
        kmax: Option<i64>,
    },
    /// Resonant-sum approximation of the error
    TildeDelta {
        #[command(flatten)]
        dist: DistArgs,
        /// Number of summands
        #[arg(long)]
        n: u64,
        /// Evaluation point [default: 0]
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// Window lower edge [default: 0.05]
        #[arg(long)]
        delta: Option<f64>,
        /// Window upper edge K [default: 4]
        #[arg(long)]
        cap_k: Option<f64>,
    },
    /// Direct quadrature of the Fourier inversion of the error
    FourierOracle {
        #[command(flatten)]
        dist: DistArgs,
        /// Number of summands
        #[arg(long)]
        n: u64,
        /// Evaluation point [default: 0]
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// Cutoff constant K1 [default: 8]
        #[arg(long)]
        k1: Option<f64>,
    },
    /// Lattice dump: Haar sample or the rescaled lattice of a distribution
    Lattice {
        /// haar | of-n [default: haar]
        #[arg(long)]
        mode: Option<String>,
        /// Dimension for haar mode [default: 2]
        #[arg(long)]
        d: Option<usize>,
        /// n for of-n mode [default: 1000]
        #[arg(long)]
        n: Option<u64>,
        /// Character evaluation point for of-n mode [default: 0]
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        #[command(flatten)]
        dist: DistArgs,
    },
    /// Sample the limiting variables X, hatX or Y
    LimitSample {
        /// x | hatx | y [default: x]
        #[arg(long)]
        which: Option<String>,
        /// Number of draws [default: 1000]
        #[arg(long)]
        n_draws: Option<usize>,
        /// z for hatx [default: 0]
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// c for y [default: 1]
        #[arg(long)]
        c: Option<f64>,
        /// Convergence tolerance [default: 1e-3]
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        dist: DistArgs,
    },
    /// Statistical harnesses: limit, diophantine, llt, joint, mixscale
    Harness {
        /// limit | diophantine | llt | joint | mixscale
        name: String,
        /// Comma-separated n values [default: per harness]
        #[arg(long)]
        n_list: Option<String>,
        /// Single n where applicable [default: 2000]
        #[arg(long)]
        n: Option<u64>,
        /// Ensemble size [default: 500]
        #[arg(long)]
        n_draws: Option<usize>,
        /// Evaluation point [default: 0]
        #[arg(long, allow_hyphen_values = true)]
        z: Option<f64>,
        /// Second evaluation point (joint) [default: 1]
        #[arg(long, allow_hyphen_values = true)]
        z2: Option<f64>,
        /// Window exponent (llt part a) [default: 0.3]
        #[arg(long)]
        eps: Option<f64>,
        /// Window constant c (llt part c) [default: 1]
        #[arg(long)]
        c: Option<f64>,
        /// Trend exponent (diophantine) [default: 0.9]
        #[arg(long)]
        r_exp: Option<f64>,
    },
}

/// key=value config file; flags win on conflict.
struct FileConfig(BTreeMap<String, String>);

const KNOWN_KEYS: &[&str] = &[
    "atoms", "probs", "n", "r", "z", "z2", "merge_tol", "kmin", "kmax", "delta", "cap_k", "k1",
    "mode", "d", "which", "n_draws", "c", "tol", "n_list", "eps", "r_exp", "seed", "out",
    "threads",
];

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<Self, String> {
        let mut map = BTreeMap::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p).map_err(|e| format!("config: {e}"))?;
            for line in text.lines() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| format!("config: bad line '{line}'"))?;
                let k = k.trim();
                if !KNOWN_KEYS.contains(&k) {
                    return Err(format!("config: unknown key '{k}'"));
                }
                map.insert(k.to_string(), v.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn f64(&self, key: &str, flag: Option<f64>, default: f64) -> f64 {
        flag.or_else(|| self.0.get(key).and_then(|v| v.parse().ok()))
            .unwrap_or(default)
    }

    fn u64v(&self, key: &str, flag: Option<u64>, default: u64) -> u64 {
        flag.or_else(|| self.0.get(key).and_then(|v| v.parse().ok()))
            .unwrap_or(default)
    }

    fn usizev(&self, key: &str, flag: Option<usize>, default: usize) -> usize {
        flag.or_else(|| self.0.get(key).and_then(|v| v.parse().ok()))
            .unwrap_or(default)
    }

    fn string(&self, key: &str, flag: Option<String>, default: &str) -> String {
        flag.or_else(|| self.0.get(key).cloned())
            .unwrap_or_else(|| default.to_string())
    }
}

fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}

fn parse_u64_list(text: &str) -> Result<Vec<u64>, String> {
    text.split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}

fn dist_from(args: &DistArgs, file: &FileConfig) -> Result<atoms::AtomicDistribution, String> {
    let atoms_s = file.string("atoms", args.atoms.clone(), "-1,0,1");
    let probs_s = file.string("probs", args.probs.clone(), "0.25,0.5,0.25");
    let a = parse_list(&atoms_s)?;
    let p = parse_list(&probs_s)?;
    atoms::AtomicDistribution::validate(&a, &p, atoms::DEFAULT_TOL).map_err(|e| e.to_string())
}

struct Emitter {
    out_dir: PathBuf,
    config_echo: Map<String, Value>,
    artifacts: Vec<String>,
}

impl Emitter {
    fn new(out_dir: PathBuf) -> Self {
        Emitter {
            out_dir,
            config_echo: Map::new(),
            artifacts: Vec::new(),
        }
    }

    fn echo(&mut self, key: &str, value: Value) {
        self.config_echo.insert(key.to_string(), value);
    }

    fn write_artifact(&mut self, name: &str, bytes: &[u8]) -> Result<(), CoreError> {
        let path = self.out_dir.join(name);
        cio::write_atomic(&path, bytes)?;
        self.artifacts.push(path.display().to_string());
        Ok(())
    }

    fn finish(self, results: Value) -> Value {
        json!({
            "schema_version": "1",
            "config_echo": Value::Object(self.config_echo),
            "results": results,
            "artifacts": self.artifacts,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.kind() == clap::error::ErrorKind::DisplayHelp
                || e.kind() == clap::error::ErrorKind::DisplayVersion
            {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!(
                "E:1:{}",
                e.to_string().lines().next().unwrap_or("parse error")
            );
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("E:{code}:{msg}");
            ExitCode::from(code)
        }
    }
}

fn core_err(e: CoreError) -> (u8, String) {
    (e.exit_code() as u8, e.to_string().replace('\n', " "))
}

fn val_err(msg: String) -> (u8, String) {
    (1, msg.replace('\n', " "))
}

fn run(cli: Cli) -> Result<ExitCode, (u8, String)> {
    let file = FileConfig::load(cli.config.as_ref()).map_err(val_err)?;
    let threads = cli
        .threads
        .or_else(|| file.0.get("threads").and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    let seed = file.u64v("seed", cli.seed, 1);
    let out_dir = cli
        .out
        .clone()
        .or_else(|| file.0.get("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let mut em = Emitter::new(out_dir);
    em.echo("seed", json!(seed));
    em.echo("threads", json!(threads));
    em.echo("out", json!(em.out_dir.display().to_string()));

    let envelope = match cli.command.clone() {
        Command::ExactLaw { dist, n, merge_tol } => {
            let d = dist_from(&dist, &file).map_err(val_err)?;
            let mt = merge_tol.or_else(|| file.0.get("merge_tol").and_then(|v| v.parse().ok()));
            em.echo("atoms", json!(d.atoms()));
            em.echo("probs", json!(d.probs()));
            em.echo("n", json!(n));
            em.echo("merge_tol", json!(mt.unwrap_or(1e-9 * d.m_bound())));
            let law = exactdist::exact_law(&d, n, mt).map_err(core_err)?;
            em.write_artifact("law.csv", law.to_csv().as_bytes())
                .map_err(core_err)?;
            em.finish(json!({
                "support_len": law.support_len(),
                "mass_defect": law.mass_defect(),
                "dropped_mass_bound": law.dropped_mass_bound,
            }))
        }
        Command::Edgeworth { dist, r, z, n } => {
            let d = dist_from(&dist, &file).map_err(val_err)?;
            let r = file.usizev("r", r, 2);
            let z = file.f64("z", z, 0.0);
            em.echo("atoms", json!(d.atoms()));
            em.echo("probs", json!(d.probs()));
            em.echo("r", json!(r));
            em.echo("z", json!(z));
            em.echo("n", json!(n));
            let series = edgeworth::build_series(&d, r).map_err(core_err)?;
            let value = series.evaluate(z, n);
            em.write_artifact("series.json", series.to_json().as_bytes())
                .map_err(core_err)?;
            println!("{}", cio::fmt_f64(value));
            em.finish(json!({ "value": value }))
        }
        Command::Error { dist, n, r, z } => {
            let d = dist_from(&dist, &file).map_err(val_err)?;
            let r = file.usizev("r", r, d.d());
            let z = file.f64("z", z, 0.0);
            em.echo("atoms", json!(d.atoms()));
            em.echo("probs", json!(d.probs()));
            em.echo("r", json!(r));
            em.echo("z", json!(z));
            em.echo("n", json!(n));
            let delta = edgeworth::edgeworth_error(&d, n, r, z).map_err(core_err)?;
            em.finish(json!({ "delta": delta }))
        }
        Command::Resonance { dist, n, kmin, kmax } => {
            let d = dist_from(&dist, &file).map_err(val_err)?;
            let kmin = kmin
                .or_else(|| file.0.get("kmin").and_then(|v| v.parse().ok()))
                .unwrap_or(1);
            let kmax = kmax
                .or_else(|| file.0.get("kmax").and_then(|v| v.parse().ok()))
                .unwrap_or(64);
            em.echo("atoms", json!(d.atoms()));
            em.echo("probs", json!(d.probs()));
            em.echo("n", json!(n));
            em.echo("kmin", json!(kmin));
            em.echo("kmax", json!(kmax));
            if kmin > kmax || kmin == 0 {
                return Err(val_err("need 1 <= kmin <= kmax".into()));
            }
            let mut rows = Vec::new();
            let mut resonant_count = 0u64;
            for k in kmin..=kmax {
                let term = resonance::locate_peak(&d, k, n).map_err(core_err)?;
                if term.resonant {
                    resonant_count += 1;
                }
                rows.push(term.csv_row());
            }
            let csv = cio::csv_string(&resonance::ResonantTerm::csv_header(d.d()), rows);
            em.write_artifact("resonance.csv", csv.as_bytes())
                .map_err(core_err)?;
            em.finish(json!({ "terms": (kmax - kmin + 1), "resonant": resonant_count }))
        }
        Command::TildeDelta {
            dist,
            n,
            z,
            delta,
            cap_k,
        } => {
            let d = dist_from(&dist, &file).map_err(val_err)?;
            let z = file.f64("z", z, 0.0);
            let delta = file.f64("delta", delta, 0.05);
            let cap_k = file.f64("cap_k", cap_k, 4.0);
            em.echo("atoms", json!(d.atoms()));
            em.echo("probs", json!(d.probs()));
            em.echo("n", json!(n));
            em.echo("z", json!(z));
            em.echo("delta", json!(delta));
            em.echo("cap_k", json!(cap_k));
            let v = resonance::tilde_delta(&d, n, z, delta, cap_k).map_err(core_err)?;
            println!("{}", cio::fmt_f64(v));
            em.finish(json!({ "value": v }))
        }
        Command::FourierOracle { dist, n, z, k1 } => {
            let d = dist_from(&dist, &file).map_err(val_err)?;
            let z = file.f64("z", z, 0.0);
            let k1 = file.f64("k1", k1, 8.0);
            em.echo("atoms", json!(d.atoms()));
            em.echo("probs", json!(d.probs()));
            em.echo("n", json!(n));
            em.echo("z", json!(z));
            em.echo("k1", json!(k1));
            let v = resonance::fourier_oracle(&d, n, z, k1).map_err(core_err)?;
            println!("{}", cio::fmt_f64(v));
            em.finish(json!({ "value": v }))
        }
        Command::Lattice { mode, d, n, z, dist } => {
            let mode = file.string("mode", mode, "haar");
            match mode.as_str() {
                "haar" => {
                    let dd = file.usizev("d", d, 2);
                    em.echo("mode", json!("haar"));
                    em.echo("d", json!(dd));
                    let sample = lattice::haar_sample(dd, seed).map_err(core_err)?;
                    let mut lat = sample.lattice;
                    lat.reduce().map_err(core_err)?;
                    let text = lat.to_json(Some(&sample.character));
                    em.write_artifact("lattice.json", text.as_bytes())
                        .map_err(core_err)?;
                    em.finish(json!({
                        "det": lat.det(),
                        "exact_haar": sample.exact,
                        "truncated_mass": sample.truncated_mass,
                    }))
                }
                "of-n" => {
                    let dd = dist_from(&dist, &file).map_err(val_err)?;
                    let n = file.u64v("n", n, 1000);
                    let z = file.f64("z", z, 0.0);
                    em.echo("mode", json!("of-n"));
                    em.echo("atoms", json!(dd.atoms()));
                    em.echo("probs", json!(dd.probs()));
                    em.echo("n", json!(n));
                    em.echo("z", json!(z));
                    let sc = resonance::structure_constants(&dd).map_err(core_err)?;
                    let mut lat = lattice::lattice_of(n, &dd);
                    let reduced = lat.reduce().map_err(core_err)?.clone();
                    let chi = lattice::character_of(&dd, &sc, n, z, &reduced);
                    let text = lat.to_json(Some(&chi));
                    em.write_artifact("lattice.json", text.as_bytes())
                        .map_err(core_err)?;
                    em.finish(json!({ "det": lat.det() }))
                }
                other => return Err(val_err(format!("unknown lattice mode '{other}'"))),
            }
        }
        Command::LimitSample {
            which,
            n_draws,
            z,
            c,
            tol,
            dist,
        } => {
            let which = file.string("which", which, "x");
            let n_draws = file.usizev("n_draws", n_draws, 1000);
            let tol = file.f64("tol", tol, 1e-3);
            em.echo("which", json!(which));
            em.echo("n_draws", json!(n_draws));
            em.echo("tol", json!(tol));
            let (kind, dopt) = match which.as_str() {
                "x" => (LimitKind::X, None),
                "y" => {
                    let c = file.f64("c", c, 1.0);
                    em.echo("c", json!(c));
                    (LimitKind::Y { c }, None)
                }
                "hatx" => {
                    let d = dist_from(&dist, &file).map_err(val_err)?;
                    let z = file.f64("z", z, 0.0);
                    em.echo("z", json!(z));
                    em.echo("atoms", json!(d.atoms()));
                    em.echo("probs", json!(d.probs()));
                    (LimitKind::HatX { z }, Some(d))
                }
                other => return Err(val_err(format!("unknown limit variable '{other}'"))),
            };
            let ens = limitlaw::sample_limit_ensemble(2, kind, dopt.as_ref(), n_draws, seed, tol)
                .map_err(core_err)?;
            em.write_artifact("ensemble.csv", ens.to_csv().as_bytes())
                .map_err(core_err)?;
            let mean = ens.values.iter().sum::<f64>() / ens.values.len() as f64;
            em.finish(json!({
                "mean": mean,
                "unconverged_fraction": ens.unconverged_fraction(),
                "resampled": ens.resampled,
            }))
        }
        Command::Harness {
            name,
            n_list,
            n,
            n_draws,
            z,
            z2,
            eps,
            c,
            r_exp,
        } => {
            let cfg = HarnessConfig {
                cache_dir: Some(em.out_dir.join("cache")),
                ..HarnessConfig::default()
            };
            let n_draws = file.usizev("n_draws", n_draws, 500);
            let z = file.f64("z", z, 0.0);
            em.echo("harness", json!(name));
            em.echo("n_draws", json!(n_draws));
            em.echo("z", json!(z));
            let report = match name.as_str() {
                "limit" => {
                    let list =
                        parse_u64_list(&file.string("n_list", n_list, "250,1000,4000"))
                            .map_err(val_err)?;
                    em.echo("n_list", json!(list));
                    experiments::harness_limit(2, &list, z, n_draws, &cfg, seed)
                        .map_err(core_err)?
                }
                "diophantine" => {
                    let list =
                        parse_u64_list(&file.string("n_list", n_list, "250,500,1000,2000"))
                            .map_err(val_err)?;
                    let r_exp = file.f64("r_exp", r_exp, 0.9);
                    em.echo("n_list", json!(list));
                    em.echo("r_exp", json!(r_exp));
                    experiments::harness_diophantine(&list, r_exp, seed).map_err(core_err)?
                }
                "llt" => {
                    let n = file.u64v("n", n, 2000);
                    let eps = file.f64("eps", eps, 0.3);
                    let c = file.f64("c", c, 1.0);
                    em.echo("n", json!(n));
                    em.echo("eps", json!(eps));
                    em.echo("c", json!(c));
                    experiments::harness_llt(2, n, z, eps, c, n_draws, &cfg, seed)
                        .map_err(core_err)?
                }
                "joint" => {
                    let n = file.u64v("n", n, 2000);
                    let z2 = file.f64("z2", z2, 1.0);
                    em.echo("n", json!(n));
                    em.echo("z2", json!(z2));
                    experiments::harness_joint(2, n, z, z2, n_draws, &cfg, seed)
                        .map_err(core_err)?
                }
                "mixscale" => {
                    let list =
                        parse_u64_list(&file.string("n_list", n_list, "100,10000,1000000"))
                            .map_err(val_err)?;
                    em.echo("n_list", json!(list));
                    experiments::harness_mixscale(&list, n_draws, &cfg, seed).map_err(core_err)?
                }
                other => return Err(val_err(format!("unknown harness '{other}'"))),
            };
            let pass = report.pass;
            em.write_artifact(&format!("harness_{name}.json"), report.to_json().as_bytes())
                .map_err(core_err)?;
            let metrics: Map<String, Value> = report
                .metrics
                .iter()
                .map(|(k, v)| (k.clone(), json!(v)))
                .collect();
            let envelope =
                em.finish(json!({ "pass": pass, "metrics": Value::Object(metrics) }));
            println!("{envelope}");
            return if pass {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            };
        }
    };
    println!("{envelope}");
    Ok(ExitCode::SUCCESS)
}
