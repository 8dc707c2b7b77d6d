use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use robustdp::dp::{forward_verify, solve_with, DpError, DpOptions};
use robustdp::na::check_global_na;
use robustdp::oracle::{brute_force_value, compare, GridSpec, OracleError};
use robustdp::payoff::{resolve_certificate, CompiledModel, PayoffError};
use robustdp::report;
use robustdp::scenario::{load_config, Config, PathPrefix, ScenarioError};

const OK: u8 = 0;
const CONFIG_INVALID: u8 = 2;
const NA_FAILED: u8 = 3;
const VERIFICATION_FAILED: u8 = 4;
const CAP_EXCEEDED: u8 = 5;
const NA_SAMPLED: u8 = 6;

#[derive(Parser)]
#[command(name = "robustdp", version, about = "Robust dynamic programming on finite scenario trees")]
struct Cli {
    /// Worker threads (default 1).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the configuration and check tree and model invariants.
    Validate { config: PathBuf },
    /// Check local no-arbitrage at every reachable non-terminal node.
    CheckNa { config: PathBuf },
    /// Solve by backward recursion and verify the resulting policy.
    Solve {
        config: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
        /// Also solve at the off-path prefixes listed in the configuration.
        #[arg(long)]
        full_policy: bool,
    },
    /// Brute-force grid search, compared against an earlier solve if present.
    Oracle {
        config: PathBuf,
        /// lo,hi,step
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
        #[arg(long, default_value_t = 2)]
        refine: usize,
    },
    /// Horizon of a leaf payoff along a ray.
    Horizon {
        config: PathBuf,
        /// Leaf path, e.g. "0,1".
        #[arg(long)]
        path: String,
        /// Ray in R^{dT}, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        ray: String,
    },
}

struct Loaded {
    path: PathBuf,
    digest: String,
    cfg: Config,
}

fn report_path(cfg: &Path) -> PathBuf {
    let mut s = cfg.as_os_str().to_owned();
    s.push(".report");
    PathBuf::from(s)
}

impl Loaded {
    /// Previous report, if it was written for the same configuration bytes.
    fn existing_report(&self) -> Option<String> {
        let text = std::fs::read_to_string(report_path(&self.path)).ok()?;
        let root: toml::Table = text.parse().ok()?;
        let digest = root.get("meta")?.get("config_digest")?.as_str()?;
        (digest == self.digest).then_some(text)
    }

    fn write_report(&self, command: &str, sections: Vec<(&str, toml::Table)>) -> Result<()> {
        let existing = self.existing_report();
        let mut all = vec![("meta", report::meta_section(command, &self.digest))];
        all.extend(sections);
        let out = report_path(&self.path);
        std::fs::write(&out, report::merge(existing.as_deref(), all)).with_context(|| format!("writing {}", out.display()))
    }
}

fn load(path: &Path) -> std::result::Result<Loaded, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("reading {}: {e}", path.display()))?;
    let Ok(text) = String::from_utf8(bytes.clone()) else { return Err("configuration is not UTF-8".into()) };
    load_config(&text)
        .map(|cfg| Loaded { path: path.to_path_buf(), digest: report::config_digest(&bytes), cfg })
        .map_err(|e| e.to_string())
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let p = p.trim().trim_start_matches('+');
            p.parse::<f64>().with_context(|| format!("not a number: {p:?}"))
        })
        .collect()
}

fn payoff_exit(e: &PayoffError) -> u8 {
    match e {
        PayoffError::Interiority { .. } | PayoffError::NoCertificate | PayoffError::Preset(_) | PayoffError::Expr(_) => {
            CONFIG_INVALID
        }
    }
}

fn dp_exit(e: &DpError) -> u8 {
    match e {
        DpError::NaFailed { .. } => NA_FAILED,
        DpError::Payoff(p) => payoff_exit(p),
        DpError::MemoCap { .. } | DpError::Scenario(ScenarioError::TooManyMeasures { .. }) => CAP_EXCEEDED,
        DpError::Uncharged(_) | DpError::PrefixLength { .. } | DpError::Scenario(_) => CONFIG_INVALID,
        _ => VERIFICATION_FAILED,
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:+}")).collect();
    parts.join(",")
}

fn run(cli: Cli) -> Result<u8> {
    if cli.jobs > 1 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global().context("starting worker pool")?;
    }
    let config = match &cli.command {
        Command::Validate { config }
        | Command::CheckNa { config }
        | Command::Solve { config, .. }
        | Command::Oracle { config, .. }
        | Command::Horizon { config, .. } => config.clone(),
    };
    let loaded = match load(&config) {
        Ok(l) => l,
        Err(msg) => {
            eprintln!("invalid configuration: {msg}");
            return Ok(CONFIG_INVALID);
        }
    };
    let cfg = &loaded.cfg;
    let compiled = match CompiledModel::new(&cfg.model, &cfg.tree) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("invalid model: {e}");
            return Ok(payoff_exit(&e));
        }
    };

    match cli.command {
        Command::Validate { .. } => {
            loaded.write_report("validate", vec![("validate", report::validate_section(&cfg.tree))])?;
            println!(
                "valid: {} nodes, {} leaves, depth {}, d = {}",
                cfg.tree.nodes().len(),
                cfg.tree.leaves().len(),
                cfg.tree.depth(),
                cfg.model.d
            );
            Ok(OK)
        }
        Command::CheckNa { .. } => {
            let na = check_global_na(&cfg.tree, &compiled, cfg.solver.sign_pattern_cap)?;
            loaded.write_report("check-na", vec![("na", report::na_section(&na))])?;
            for v in &na.nodes {
                let status = if v.linearity.linear { "linear" } else { "NOT linear" };
                let exact = if v.linearity.exact { "" } else { " (sampled)" };
                println!("node {} [{}]: {} cone {status}{exact}", v.id, v.prefix, v.cone.kind());
            }
            if let Some(f) = na.failures().next() {
                let ray = f.linearity.certificate.as_deref().unwrap_or(&[]);
                println!("FAIL: certificate ray {} at node {:?}", fmt_vec(ray), f.id);
                return Ok(NA_FAILED);
            }
            println!("PASS");
            Ok(if na.exact() { OK } else { NA_SAMPLED })
        }
        Command::Solve { tol, full_policy, .. } => {
            let mut opts = DpOptions::from_settings(&cfg.solver);
            if let Some(t) = tol {
                if !(t > 0.0) {
                    bail!("--tol must be positive");
                }
                opts.tol = t;
            }
            opts.jobs = cli.jobs;
            if !full_policy {
                opts.off_path.clear();
            }
            let na = check_global_na(&cfg.tree, &compiled, opts.sign_pattern_cap)?;
            if let Some(f) = na.failures().next() {
                loaded.write_report("solve", vec![("na", report::na_section(&na))])?;
                let ray = f.linearity.certificate.as_deref().unwrap_or(&[]);
                println!("FAIL: no-arbitrage fails, certificate ray {} at node {:?}", fmt_vec(ray), f.id);
                return Ok(NA_FAILED);
            }
            let cert = match resolve_certificate(&cfg.model, &cfg.tree, &compiled) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("interiority: {e}");
                    return Ok(payoff_exit(&e));
                }
            };
            let exact = na.exact();
            let sol = match solve_with(&cfg.tree, &compiled, na, cert, &opts) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("solve failed: {e}");
                    return Ok(dp_exit(&e));
                }
            };
            let ver = match forward_verify(&cfg.tree, &compiled, sol.value, &sol.policy, 10.0 * opts.tol, opts.measure_cap) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("verification failed: {e}");
                    return Ok(dp_exit(&e));
                }
            };
            loaded.write_report(
                "solve",
                vec![
                    ("na", report::na_section(&sol.na)),
                    ("certificate", report::certificate_section(&sol.certificate)),
                    ("solve", report::solve_section(&sol, Some(&ver))),
                ],
            )?;
            println!("value {:.12}", sol.value);
            for e in &sol.policy.entries {
                println!("  node {} [{}]: h = {} (worst measure {})", e.id, e.prefix, fmt_vec(&e.h), e.worst_measure);
            }
            for e in &sol.off_path {
                println!("  off-path node {} at x = {}: h = {}, value {:.12}", e.id, fmt_vec(&e.x), fmt_vec(&e.h), e.value);
            }
            println!(
                "verification: attainment margin {:.3e}, optimality margin {:.3e} ({})",
                ver.attainment_margin,
                ver.optimality_margin,
                if ver.pass() { "PASS" } else { "FAIL" }
            );
            if !ver.pass() {
                return Ok(VERIFICATION_FAILED);
            }
            Ok(if exact { OK } else { NA_SAMPLED })
        }
        Command::Oracle { grid, refine, .. } => {
            let g = parse_floats(&grid)?;
            let [lo, hi, step] = g[..] else { bail!("--grid expects lo,hi,step") };
            let spec = GridSpec { cap: cfg.solver.grid_cap, ..GridSpec::new(lo, hi, step, refine) };
            let res = match brute_force_value(&cfg.tree, &compiled, &spec, cfg.solver.measure_cap, None) {
                Ok(r) => r,
                Err(e @ (OracleError::GridCap { .. } | OracleError::Scenario(ScenarioError::TooManyMeasures { .. }))) => {
                    eprintln!("{e}");
                    return Ok(CAP_EXCEEDED);
                }
                Err(e @ OracleError::Grid(_)) => {
                    eprintln!("{e}");
                    return Ok(CONFIG_INVALID);
                }
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(VERIFICATION_FAILED);
                }
            };
            let previous = loaded.existing_report().and_then(|t| report::read_solve(&t, &cfg.tree));
            let cmp = previous.map(|(v, p)| compare(&cfg.tree, &compiled, v, &p, &res, 1e-5));
            loaded.write_report("oracle", vec![("oracle", report::oracle_section(&cfg.tree, &res, cmp.as_ref()))])?;
            println!("oracle value {:.12}", res.value);
            for (n, h) in &res.policy {
                println!("  node {}: h = {}", cfg.tree.node(*n).id, fmt_vec(h));
            }
            match cmp {
                Some(c) => {
                    println!(
                        "compare: value gap {:.3e}, policy gap {:.3e} ({})",
                        c.value_gap,
                        c.policy_gap,
                        if c.pass() { "PASS" } else { "FAIL" }
                    );
                    Ok(if c.pass() { OK } else { VERIFICATION_FAILED })
                }
                None => Ok(OK),
            }
        }
        Command::Horizon { path, ray, .. } => {
            let prefix: PathPrefix = match path.parse() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(CONFIG_INVALID);
                }
            };
            let node = match cfg.tree.node_at(&prefix) {
                Ok(n) => n,
                Err(e) => {
                    eprintln!("{e}");
                    return Ok(CONFIG_INVALID);
                }
            };
            let Some(pos) = cfg.tree.leaf_position(node) else {
                eprintln!("path {prefix} is not a leaf");
                return Ok(CONFIG_INVALID);
            };
            let h = parse_floats(&ray)?;
            if h.len() != compiled.dim {
                eprintln!("ray has {} entries, expected {}", h.len(), compiled.dim);
                return Ok(CONFIG_INVALID);
            }
            let v = compiled.horizons[pos].eval(&h);
            let id = &cfg.tree.node(node).id;
            loaded.write_report("horizon", vec![("horizon", report::horizon_section(id, &h, v))])?;
            println!("{v}");
            Ok(OK)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
