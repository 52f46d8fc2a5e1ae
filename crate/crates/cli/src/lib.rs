//! The `plcm` command-line tool.
//!
//! Every command reads one TOML run configuration (see [`config`]), applies
//! command-line overrides, and writes its outputs atomically into the output
//! directory. Text outputs start with `#` comment lines carrying the tool
//! version, the seed and the fully resolved configuration; JSON outputs carry
//! the same under a `provenance` key.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use plcm_core::diagnostics::{credible_region_simplex, posterior_summary, ppc_pattern_frequencies, ppc_slor};
use plcm_core::identifiability::{jacobian_spectrum, random_interior_point, IdentifiabilityReport};
use plcm_core::io::{
    read_dataset_file, read_draws_file, read_patterns_file, write_atomic, write_classification, write_comments,
    write_contours, write_dataset_file, write_draws, write_pattern_table, write_predictions, write_slor_table,
    write_summary_table,
};
use plcm_core::rng::stream_rng;
use plcm_core::{
    predict_individual, run_chains, simulate_dataset, Dataset, HyperPriors, ModelParams, PathogenPanel, PlcmError,
    Result,
};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "plcm", version, about = "Partially-latent class models for case-control etiology studies")]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub chains: Option<usize>,
    #[arg(long, global = true)]
    pub burnin: Option<usize>,
    /// Post burn-in iterations per chain.
    #[arg(long, global = true)]
    pub keep: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate a dataset and write it with its generating truth.
    Simulate,
    /// Run the Gibbs sampler and write draws, summaries and diagnostics.
    Fit,
    /// Cause probabilities for new bronze-standard patterns.
    Predict {
        #[arg(long)]
        patterns: Option<PathBuf>,
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Posterior predictive pattern frequencies and pairwise log odds ratios.
    Check {
        #[arg(long)]
        draws: Option<PathBuf>,
    },
    /// Singular value audit of the bronze-only forward map.
    Identifiability,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Predict { .. } => "predict",
            Command::Check { .. } => "check",
            Command::Identifiability => "identifiability",
        }
    }
}

impl Cli {
    /// The configuration with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.mcmc.seed = s;
            cfg.simulate.seed = s;
            cfg.check.seed = s;
            cfg.identifiability.seed = s;
        }
        if let Some(c) = self.chains {
            cfg.mcmc.n_chains = c;
        }
        if let Some(b) = self.burnin {
            cfg.mcmc.n_burnin = b;
        }
        if let Some(k) = self.keep {
            cfg.mcmc.n_keep = k;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        match &self.command {
            Command::Predict { patterns, draws } => {
                if let Some(p) = patterns {
                    cfg.predict.patterns = Some(p.clone());
                }
                if let Some(d) = draws {
                    cfg.predict.draws = Some(d.clone());
                }
            }
            Command::Check { draws: Some(d) } => cfg.check.draws = Some(d.clone()),
            _ => {}
        }
        Ok(cfg)
    }
}

/// Runs one command and returns the files it wrote.
pub fn run(command: &Command, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    match command {
        Command::Simulate => cmd_simulate(cfg),
        Command::Fit => cmd_fit(cfg),
        Command::Predict { .. } => cmd_predict(cfg),
        Command::Check { .. } => cmd_check(cfg),
        Command::Identifiability => cmd_identifiability(cfg),
    }
}

/// What every output records about the run that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub config: String,
    /// Resolved Beta hyperparameters, when the command uses priors.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub priors: Vec<String>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, cfg: &RunConfig) -> Self {
        Provenance {
            tool: format!("plcm {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            seed,
            config: cfg.to_toml(),
            priors: Vec::new(),
        }
    }

    fn with_priors(mut self, h: &HyperPriors, panel: &PathogenPanel) -> Self {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        self.priors.push(format!("pi dirichlet {}", fmt(&h.pi_weights)));
        for (j, name) in panel.names().iter().enumerate() {
            self.priors.push(format!("theta_brs_{name} beta {} {}", h.theta_brs[j].alpha, h.theta_brs[j].beta));
            self.priors.push(format!("psi_brs_{name} beta {} {}", h.psi_brs[j].alpha, h.psi_brs[j].beta));
        }
        for (k, &j) in panel.ss_panel().iter().enumerate() {
            self.priors.push(format!("theta_ss_{} beta {} {}", panel.name(j), h.theta_ss[k].alpha, h.theta_ss[k].beta));
        }
        self
    }

    pub fn lines(&self) -> Vec<String> {
        let mut v = vec![
            format!("{} {}", self.tool, self.command),
            format!("seed {}", self.seed),
        ];
        v.extend(self.priors.iter().map(|p| format!("prior {p}")));
        v.push("config:".into());
        v.extend(self.config.lines().filter(|l| !l.trim().is_empty()).map(|l| format!("  {l}")));
        v
    }
}

/// Machine-readable error record written to stderr on failure.
pub fn error_record(e: &PlcmError) -> serde_json::Value {
    let mut rec = json!({ "kind": e.kind(), "message": e.to_string() });
    let mut inner = e;
    if let PlcmError::Replicate { replicate, source } = e {
        rec["replicate"] = json!(replicate);
        inner = source;
    }
    match inner {
        PlcmError::Parse { path, line, field, message } => {
            rec["path"] = json!(path);
            if *line > 0 {
                rec["line"] = json!(line);
            }
            if let Some(f) = field {
                rec["field"] = json!(f);
            }
            rec["detail"] = json!(message);
        }
        PlcmError::InvalidDataset(report) => {
            rec["violations"] = json!(report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>());
        }
        _ => {}
    }
    json!({ "error": rec })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())).into())
}

fn write_text(path: &Path, prov: &Provenance, body: impl FnOnce(&mut dyn std::io::Write) -> Result<()>) -> Result<()> {
    write_atomic(path, |w| {
        write_comments(w, &prov.lines())?;
        body(w)
    })
}

fn write_json(path: &Path, prov: &Provenance, mut value: serde_json::Value) -> Result<()> {
    value["provenance"] = serde_json::to_value(prov).map_err(|e| PlcmError::Usage(e.to_string()))?;
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, &value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        Ok(())
    })
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let panel = cfg.panel()?;
    read_dataset_file(&cfg.data_path(), panel.as_ref())
}

/// The configured panel, or the one implied by the dataset header.
fn resolve_panel(cfg: &RunConfig) -> Result<PathogenPanel> {
    match cfg.panel()? {
        Some(p) => Ok(p),
        None => Ok(load_dataset(cfg)?.panel),
    }
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let truth = cfg.truth()?;
    let ds = simulate_dataset(&truth)?;
    let prov = Provenance::new("simulate", truth.seed, cfg);
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let data = cfg.data_path();
    if let Some(parent) = data.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_dataset_file(&data, &ds, &prov.lines())?;
    let truth_path = out.join("truth.json");
    write_json(&truth_path, &prov, json!({ "truth": truth }))?;
    Ok(vec![data, truth_path])
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(cfg)?;
    let panel = ds.panel.clone();
    let hyper = cfg.hyperpriors(&panel)?;
    let chains = run_chains(&ds, &hyper, &cfg.mcmc)?;
    let prov = Provenance::new("fit", cfg.mcmc.seed, cfg).with_priors(&hyper, &panel);
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let mut written = Vec::new();

    let draws = out.join("draws.csv");
    write_text(&draws, &prov, |w| write_draws(w, &chains, &panel))?;
    written.push(draws);

    let summary = posterior_summary(&chains, &panel);
    let summary_path = out.join("summary.txt");
    write_text(&summary_path, &prov, |w| write_summary_table(w, &summary))?;
    written.push(summary_path);

    if cfg.fit.classify {
        if let Some(probs) = chains.within_sample_probabilities() {
            let path = out.join("classification.csv");
            write_text(&path, &prov, |w| write_classification(w, &ds, &probs))?;
            written.push(path);
        }
    }

    let mut region_json = serde_json::Value::Null;
    if cfg.fit.region && panel.len() == 3 {
        let pis: Vec<Vec<f64>> = chains.draws().map(|d| d.pi.clone()).collect();
        let region = credible_region_simplex(&pis, &cfg.fit.region_options)?;
        let path = out.join("contours.csv");
        write_text(&path, &prov, |w| write_contours(w, &region, &panel))?;
        written.push(path);
        region_json = serde_json::to_value(&region).map_err(|e| PlcmError::Usage(e.to_string()))?;
    }

    let diag = out.join("diagnostics.json");
    let min_ess = summary.params.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min);
    write_json(
        &diag,
        &prov,
        json!({
            "n_chains": summary.n_chains,
            "n_draws": summary.n_draws,
            "max_bgr_pi": summary.max_bgr("pi_"),
            "max_bgr": summary.max_bgr(""),
            "min_ess": min_ess,
            "region": region_json,
            "params": summary.params,
        }),
    )?;
    written.push(diag);
    Ok(written)
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let patterns_path = cfg
        .predict
        .patterns
        .clone()
        .ok_or_else(|| PlcmError::Usage("predict needs a patterns file (--patterns or predict.patterns)".into()))?;
    let panel = resolve_panel(cfg)?;
    let chains = read_draws_file(&cfg.draws_path(cfg.predict.draws.as_ref()), &panel)?;
    let patterns = read_patterns_file(&patterns_path, &panel)?;
    let rows = patterns
        .into_iter()
        .map(|(id, m)| predict_individual(&m, &chains).map(|p| (id, m, p)))
        .collect::<Result<Vec<_>>>()?;
    let seed = chains.chains.first().map_or(cfg.mcmc.seed, |c| c.seed);
    let prov = Provenance::new("predict", seed, cfg);
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let path = out.join("predictions.csv");
    write_text(&path, &prov, |w| write_predictions(w, &panel, &rows))?;
    Ok(vec![path])
}

pub fn cmd_check(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(cfg)?;
    let chains = read_draws_file(&cfg.draws_path(cfg.check.draws.as_ref()), &ds.panel)?;
    let opts = cfg.check.ppc();
    let patterns = ppc_pattern_frequencies(&ds, &chains, &opts)?;
    let slor = ppc_slor(&ds, &chains, &opts)?;
    let prov = Provenance::new("check", opts.seed, cfg);
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let p1 = out.join("ppc_patterns.csv");
    write_text(&p1, &prov, |w| write_pattern_table(w, &patterns, &ds.panel))?;
    let p2 = out.join("slor.txt");
    write_text(&p2, &prov, |w| write_slor_table(w, &slor))?;
    Ok(vec![p1, p2])
}

fn audit_points(cfg: &RunConfig) -> Result<Vec<ModelParams>> {
    let a = &cfg.identifiability;
    if let Some(at) = &a.at {
        return Ok(vec![at.params()?]);
    }
    let j = match (a.pathogens, cfg.panel()?) {
        (Some(j), _) => j,
        (None, Some(p)) => p.len(),
        (None, None) if cfg.data_path().exists() => load_dataset(cfg)?.panel.len(),
        (None, None) => {
            return Err(PlcmError::Usage(
                "identifiability needs `at`, `pathogens`, a panel or a dataset".into(),
            ))
        }
    };
    if j < 2 {
        return Err(PlcmError::Usage("the audit needs at least two pathogens".into()));
    }
    let mut rng = stream_rng(a.seed, 0);
    Ok((0..a.points).map(|_| random_interior_point(j, &mut rng)).collect())
}

fn write_audit_text(w: &mut dyn std::io::Write, points: &[(ModelParams, IdentifiabilityReport)]) -> Result<()> {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ");
    if let Some((_, r)) = points.first() {
        writeln!(w, "pathogens {}", r.n_pathogens)?;
        writeln!(w, "parameters {} (logit coordinates)", r.param_dim)?;
        writeln!(w, "image {}", r.image_dim)?;
        writeln!(w, "threshold {:e} relative", r.threshold)?;
        writeln!(w, "fd_step {:e}", r.fd_step)?;
        writeln!(w, "augmented {}", r.augmented)?;
    }
    for (i, (p, r)) in points.iter().enumerate() {
        writeln!(w)?;
        writeln!(w, "point {}", i + 1)?;
        writeln!(w, "  pi {}", fmt(&p.pi))?;
        writeln!(w, "  theta_brs {}", fmt(&p.theta_brs))?;
        writeln!(w, "  psi_brs {}", fmt(&p.psi_brs))?;
        let sv: Vec<String> = r.singular_values.iter().map(|s| format!("{s:.6e}")).collect();
        writeln!(w, "  singular_values {}", sv.join(" "))?;
        writeln!(w, "  effective_zeros {}", r.n_effective_zeros)?;
        writeln!(w, "  rank {}", r.rank())?;
        writeln!(w, "  fpr_rank {}", r.fpr_rank)?;
        for warn in &r.warnings {
            writeln!(w, "  warning {warn}")?;
        }
    }
    Ok(())
}

pub fn cmd_identifiability(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let opts = cfg.identifiability.options();
    let points = audit_points(cfg)?;
    let reports = points
        .into_iter()
        .map(|p| jacobian_spectrum(&p, &opts).map(|r| (p, r)))
        .collect::<Result<Vec<_>>>()?;
    let prov = Provenance::new("identifiability", cfg.identifiability.seed, cfg);
    let out = cfg.out_dir();
    ensure_dir(&out)?;
    let txt = out.join("identifiability.txt");
    write_text(&txt, &prov, |w| write_audit_text(w, &reports))?;
    let js = out.join("identifiability.json");
    let points: Vec<_> = reports.iter().map(|(p, r)| json!({ "params": p, "report": r })).collect();
    write_json(&js, &prov, json!({ "points": points }))?;
    Ok(vec![txt, js])
}
