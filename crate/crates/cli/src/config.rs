//! Run configuration.
//!
//! A run is described by one TOML file. Top-level keys name the data file
//! and output directory; tables hold the panel, priors, sampler options and
//! per-command settings. Unknown keys are rejected.
//!
//! ```toml
//! data = "data.csv"
//! out = "results"
//!
//! [panel]
//! names = ["A", "B", "C"]
//! ss = ["A"]
//!
//! [priors.theta_brs]
//! A = { range = [0.5, 0.99] }    # matched to 2.5% / 97.5% quantiles
//! B = { alpha = 4.0, beta = 1.5 }
//!
//! [mcmc]
//! n_burnin = 2000
//! n_keep = 10000
//! n_chains = 3
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use plcm_core::diagnostics::{PpcOptions, RegionOptions};
use plcm_core::identifiability::{AuditOptions, DEFAULT_FD_STEP, DEFAULT_ZERO_THRESHOLD};
use plcm_core::{
    default_hyperpriors, elicit_beta_from_quantiles, BetaPrior, HyperPriors, McmcOptions, ModelParams,
    PathogenClass, PathogenPanel, PlcmError, Result, SimTruth,
};

pub const DEFAULT_OUT: &str = "plcm-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Where the config was read from, for error context.
    #[serde(skip)]
    pub source: String,
    /// Dataset CSV. Relative paths are resolved against the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub panel: Option<PanelConfig>,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub mcmc: McmcOptions,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub identifiability: AuditConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    /// `"perch"` for the built-in eleven-pathogen panel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    /// Pathogens with a silver-standard assay, in silver-column order.
    #[serde(default)]
    pub ss: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<PathogenClass>>,
}

/// Either an explicit Beta pair or a `(lo, hi)` range to elicit from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
}

/// Pathogens not listed get Beta(1, 1); `pi` defaults to all ones.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub theta_brs: BTreeMap<String, PriorSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub psi_brs: BTreeMap<String, PriorSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub theta_ss: BTreeMap<String, PriorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub pi: Vec<f64>,
    pub theta_brs: Vec<f64>,
    pub psi_brs: Vec<f64>,
    #[serde(default)]
    pub theta_ss: Vec<f64>,
}

impl TruthConfig {
    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(
            self.pi.clone(),
            self.theta_brs.clone(),
            self.psi_brs.clone(),
            self.theta_ss.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// `"three_pathogen"` or `"perch_like"`; ignored when `truth` is given.
    pub preset: String,
    pub n_cases: Option<usize>,
    pub n_controls: Option<usize>,
    /// Fraction of cases with gold-standard data.
    pub delta: Option<f64>,
    /// Fraction of cases with silver-standard data.
    pub ss_frac: Option<f64>,
    pub seed: u64,
    pub truth: Option<TruthConfig>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            preset: "three_pathogen".into(),
            n_cases: None,
            n_controls: None,
            delta: None,
            ss_frac: None,
            seed: 1,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Credible region on the simplex; only drawn when `J = 3`.
    pub region: bool,
    pub region_options: RegionOptions,
    /// Within-sample cause probabilities of every case.
    pub classify: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            region: true,
            region_options: RegionOptions::default(),
            classify: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub patterns: Option<PathBuf>,
    /// Defaults to `<out>/draws.csv`.
    pub draws: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    pub draws: Option<PathBuf>,
    pub top_k: usize,
    /// Defaults to `min(1000, stored draws)`.
    pub n_replicates: Option<usize>,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        let d = PpcOptions::default();
        CheckConfig {
            draws: None,
            top_k: d.top_k,
            n_replicates: d.n_replicates,
            seed: d.seed,
        }
    }
}

impl CheckConfig {
    pub fn ppc(&self) -> PpcOptions {
        PpcOptions {
            top_k: self.top_k,
            n_replicates: self.n_replicates,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Random interior points to audit when `at` is not given.
    pub points: usize,
    pub seed: u64,
    pub fd_step: f64,
    pub threshold: f64,
    pub augmented: bool,
    /// Number of pathogens when neither a panel nor `at` is given.
    pub pathogens: Option<usize>,
    pub at: Option<TruthConfig>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            points: 10,
            seed: 1,
            fd_step: DEFAULT_FD_STEP,
            threshold: DEFAULT_ZERO_THRESHOLD,
            augmented: false,
            pathogens: None,
            at: None,
        }
    }
}

impl AuditConfig {
    pub fn options(&self) -> AuditOptions {
        AuditOptions {
            fd_step: self.fd_step,
            threshold: self.threshold,
            augmented: self.augmented,
        }
    }
}

fn config_err(source: &str, field: &str, message: impl Into<String>) -> PlcmError {
    PlcmError::Parse {
        path: source.to_string(),
        line: 0,
        field: Some(field.to_string()),
        message: message.into(),
    }
}

/// 1-based line of a byte offset.
fn line_at(text: &str, offset: usize) -> u64 {
    1 + text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() as u64
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e: toml::de::Error| {
            let span = e.span();
            let field = span
                .clone()
                .map(|s| text[s].trim().trim_matches('"').to_string())
                .filter(|f| !f.is_empty() && !f.contains('\n') && f.len() <= 64);
            PlcmError::Parse {
                path: source.to_string(),
                line: span.map_or(0, |s| line_at(text, s.start)),
                field,
                message: e.message().to_string(),
            }
        })?;
        cfg.source = source.to_string();
        Ok(cfg)
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p.as_mut() {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.data);
        fix(&mut cfg.out);
        fix(&mut cfg.predict.patterns);
        fix(&mut cfg.predict.draws);
        fix(&mut cfg.check.draws);
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    /// The dataset path, falling back to the file `simulate` writes.
    pub fn data_path(&self) -> PathBuf {
        self.data.clone().unwrap_or_else(|| self.out_dir().join("data.csv"))
    }

    pub fn draws_path(&self, explicit: Option<&PathBuf>) -> PathBuf {
        explicit.cloned().unwrap_or_else(|| self.out_dir().join("draws.csv"))
    }

    /// The configured panel, if any.
    pub fn panel(&self) -> Result<Option<PathogenPanel>> {
        let Some(pc) = &self.panel else { return Ok(None) };
        let panel = match (&pc.preset, &pc.names) {
            (Some(_), Some(_)) => {
                return Err(config_err(&self.source, "panel", "give either `preset` or `names`, not both"))
            }
            (Some(p), None) if p == "perch" => {
                if !pc.ss.is_empty() || pc.classes.is_some() {
                    return Err(config_err(&self.source, "panel", "the perch preset fixes `ss` and `classes`"));
                }
                PathogenPanel::perch_preset()
            }
            (Some(p), None) => return Err(config_err(&self.source, "panel.preset", format!("unknown preset {p:?}"))),
            (None, Some(names)) => {
                let panel = PathogenPanel::from_names(names, &pc.ss)?;
                match &pc.classes {
                    Some(c) => panel.with_classes(c.clone())?,
                    None => panel,
                }
            }
            (None, None) => return Err(config_err(&self.source, "panel", "needs `preset` or `names`")),
        };
        Ok(Some(panel))
    }

    /// Hyperpriors for `panel`, eliciting Beta pairs from ranges.
    pub fn hyperpriors(&self, panel: &PathogenPanel) -> Result<HyperPriors> {
        let mut h = default_hyperpriors(panel);
        if let Some(pi) = &self.priors.pi {
            h.pi_weights = pi.clone();
        }
        let resolve = |table: &str, specs: &BTreeMap<String, PriorSpec>, slots: &mut [BetaPrior], slot_of: &dyn Fn(usize) -> Option<usize>| -> Result<()> {
            for (name, spec) in specs {
                let field = format!("priors.{table}.{name}");
                let j = panel
                    .index_of(name)
                    .ok_or_else(|| config_err(&self.source, &field, format!("unknown pathogen {name:?}")))?;
                let k = slot_of(j).ok_or_else(|| config_err(&self.source, &field, format!("{name} has no silver assay")))?;
                slots[k] = spec.resolve(&self.source, &field)?;
            }
            Ok(())
        };
        resolve("theta_brs", &self.priors.theta_brs, &mut h.theta_brs, &|j| Some(j))?;
        resolve("psi_brs", &self.priors.psi_brs, &mut h.psi_brs, &|j| Some(j))?;
        resolve("theta_ss", &self.priors.theta_ss, &mut h.theta_ss, &|j| panel.ss_slot(j))?;
        h.check(panel)?;
        Ok(h)
    }

    pub fn truth(&self) -> Result<SimTruth> {
        let s = &self.simulate;
        let mut truth = match (&s.truth, self.panel()?) {
            (Some(t), panel) => {
                let params = t.params()?;
                let panel = match panel {
                    Some(p) => p,
                    None => PathogenPanel::lettered(params.n_pathogens())?,
                };
                SimTruth {
                    panel,
                    params,
                    ..SimTruth::three_pathogen(0.0, s.seed)
                }
            }
            (None, _) => match s.preset.as_str() {
                "three_pathogen" => SimTruth::three_pathogen(0.0, s.seed),
                "perch_like" => SimTruth::perch_like(s.seed),
                other => {
                    return Err(config_err(&self.source, "simulate.preset", format!("unknown preset {other:?}")))
                }
            },
        };
        if let Some(n) = s.n_cases {
            truth.n_cases = n;
        }
        if let Some(n) = s.n_controls {
            truth.n_controls = n;
        }
        if let Some(d) = s.delta {
            truth.delta_frac = d;
        }
        if let Some(f) = s.ss_frac {
            truth.ss_frac = f;
        }
        truth.check()?;
        Ok(truth)
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("# unserializable config: {e}\n"))
    }
}

impl PriorSpec {
    pub fn resolve(&self, source: &str, field: &str) -> Result<BetaPrior> {
        match (self.alpha, self.beta, self.range) {
            (Some(a), Some(b), None) => {
                if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
                    Ok(BetaPrior::new(a, b))
                } else {
                    Err(config_err(source, field, format!("Beta({a}, {b}) needs positive finite shapes")))
                }
            }
            (None, None, Some([lo, hi])) => {
                if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                    return Err(config_err(source, field, format!("range ({lo}, {hi}) needs 0 <= lo < hi <= 1")));
                }
                elicit_beta_from_quantiles(lo, hi)
            }
            _ => Err(config_err(source, field, "give `alpha` and `beta`, or `range`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_has_defaults() {
        let c = RunConfig::parse("", "t").unwrap();
        assert_eq!(c.mcmc, McmcOptions::default());
        assert_eq!(c.out_dir(), PathBuf::from(DEFAULT_OUT));
        assert!(c.panel().unwrap().is_none());
    }

    #[test]
    fn unknown_key_reports_line_and_field() {
        let text = "out = \"x\"\n[mcmc]\nn_burnin = 10\nn_kept = 5\n";
        match RunConfig::parse(text, "run.toml") {
            Err(PlcmError::Parse { path, line, field, .. }) => {
                assert_eq!(path, "run.toml");
                assert_eq!(line, 4);
                assert_eq!(field.as_deref(), Some("n_kept"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn priors_from_pairs_and_ranges() {
        let text = r#"
[panel]
names = ["A", "B", "C"]
ss = ["B"]
[priors.theta_brs]
A = { alpha = 2.0, beta = 3.0 }
C = { range = [0.5, 0.99] }
[priors.theta_ss]
B = { range = [0.05, 0.15] }
"#;
        let c = RunConfig::parse(text, "t").unwrap();
        let panel = c.panel().unwrap().unwrap();
        let h = c.hyperpriors(&panel).unwrap();
        assert_eq!(h.theta_brs[0], BetaPrior::new(2.0, 3.0));
        assert_eq!(h.theta_brs[1], BetaPrior::UNIFORM);
        assert!((h.theta_brs[2].quantile(0.025) - 0.5).abs() < 1e-4);
        assert!((h.theta_ss[0].quantile(0.975) - 0.15).abs() < 1e-4);
    }

    #[test]
    fn bad_priors_name_their_field() {
        let panel = PathogenPanel::lettered(2).unwrap();
        for (text, want) in [
            ("[priors.psi_brs]\nZ = { alpha = 1.0, beta = 1.0 }", "priors.psi_brs.Z"),
            ("[priors.psi_brs]\nA = { range = [0.6, 0.2] }", "priors.psi_brs.A"),
            ("[priors.psi_brs]\nA = { alpha = 1.0 }", "priors.psi_brs.A"),
            ("[priors.theta_ss]\nA = { alpha = 1.0, beta = 1.0 }", "priors.theta_ss.A"),
        ] {
            let c = RunConfig::parse(text, "t").unwrap();
            match c.hyperpriors(&panel) {
                Err(PlcmError::Parse { field, .. }) => assert_eq!(field.as_deref(), Some(want)),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let text = r#"
data = "d.csv"
[panel]
preset = "perch"
[priors.theta_brs]
HINF = { range = [0.5, 0.99] }
[simulate]
preset = "perch_like"
delta = 0.05
[check]
top_k = 5
"#;
        let c = RunConfig::parse(text, "t").unwrap();
        assert_eq!(c.check.ppc().top_k, 5);
        let back = RunConfig::parse(&c.to_toml(), "t").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn truth_overrides() {
        let c = RunConfig::parse("[simulate]\ndelta = 0.1\nn_cases = 50\nseed = 3\n", "t").unwrap();
        let t = c.truth().unwrap();
        assert_eq!(t.n_cases, 50);
        assert_eq!(t.delta_frac, 0.1);
        assert_eq!(t.seed, 3);
        let bad = RunConfig::parse("[simulate]\ndelta = 1.5\n", "t").unwrap();
        assert!(bad.truth().is_err());
    }
}
