//! Domain types shared by every other module: the pathogen panel, subject
//! records with their three measurement tiers, model parameters and the
//! latent cause assignment of cases.
//!
//! Measurement tiers:
//!
//! * bronze (BrS): imperfect sensitivity and specificity, measured on cases
//!   and controls for all `J` pathogens;
//! * silver (SS): perfect specificity, measured on cases only and only for
//!   the pathogens of the silver panel (`J' <= J`);
//! * gold (GS): perfect sensitivity and specificity, available for a subset
//!   of cases, always one-hot at the true cause.
//!
//! Controls have no infection (latent state 0), which is implicit: only cases
//! carry a latent cause slot.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{PlcmError, Result};

/// Tolerance on `sum(pi) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PathogenClass {
    Bacterium,
    Virus,
    #[default]
    Other,
}

impl fmt::Display for PathogenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathogenClass::Bacterium => "bacterium",
            PathogenClass::Virus => "virus",
            PathogenClass::Other => "other",
        })
    }
}

/// The `J` candidate causes, their class tags, and which of them carry a
/// silver-standard assay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PanelRepr", into = "PanelRepr")]
pub struct PathogenPanel {
    names: Vec<String>,
    classes: Vec<PathogenClass>,
    ss_panel: Vec<usize>,
    ss_slot: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
struct PanelRepr {
    names: Vec<String>,
    #[serde(default)]
    classes: Vec<PathogenClass>,
    #[serde(default)]
    ss_panel: Vec<usize>,
}

impl TryFrom<PanelRepr> for PathogenPanel {
    type Error = PlcmError;

    fn try_from(r: PanelRepr) -> Result<Self> {
        let panel = PathogenPanel::new(r.names, r.ss_panel)?;
        if r.classes.is_empty() {
            Ok(panel)
        } else {
            panel.with_classes(r.classes)
        }
    }
}

impl From<PathogenPanel> for PanelRepr {
    fn from(p: PathogenPanel) -> Self {
        PanelRepr {
            names: p.names,
            classes: p.classes,
            ss_panel: p.ss_panel,
        }
    }
}

/// Abbreviations of the eleven-pathogen pneumonia panel (4 bacteria, 7
/// viruses). Blood culture (the silver tier) only detects the bacteria.
pub const PERCH_BACTERIA: [&str; 4] = ["HINF", "PNEU", "SASP", "SAUR"];
pub const PERCH_VIRUSES: [&str; 7] = [
    "ADENO", "COR_43", "FLU_C", "HMPV_A_B", "PARA1", "RHINO", "RSV_A_B",
];

impl PathogenPanel {
    /// Builds a panel from pathogen names and the (0-based) indices of the
    /// pathogens measured by the silver tier, in silver-column order.
    pub fn new(names: Vec<String>, ss_panel: Vec<usize>) -> Result<Self> {
        if names.is_empty() {
            return Err(PlcmError::InvalidPanel("panel needs at least one pathogen".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(PlcmError::InvalidPanel("empty pathogen name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(PlcmError::InvalidPanel(format!("duplicate pathogen name {name:?}")));
            }
        }
        let j = names.len();
        let mut ss_slot = vec![None; j];
        for (slot, &idx) in ss_panel.iter().enumerate() {
            if idx >= j {
                return Err(PlcmError::InvalidPanel(format!(
                    "silver panel index {idx} out of range for {j} pathogens"
                )));
            }
            if ss_slot[idx].replace(slot).is_some() {
                return Err(PlcmError::InvalidPanel(format!(
                    "silver panel index {idx} listed twice"
                )));
            }
        }
        Ok(PathogenPanel {
            classes: vec![PathogenClass::Other; j],
            names,
            ss_panel,
            ss_slot,
        })
    }

    /// Convenience constructor taking silver-panel members by name.
    pub fn from_names<S: AsRef<str>>(names: &[S], ss_names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let ss = ss_names
            .iter()
            .map(|s| {
                names
                    .iter()
                    .position(|n| n == s.as_ref())
                    .ok_or_else(|| {
                        PlcmError::InvalidPanel(format!(
                            "silver panel member {:?} is not a pathogen of the panel",
                            s.as_ref()
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        PathogenPanel::new(names, ss)
    }

    pub fn with_classes(mut self, classes: Vec<PathogenClass>) -> Result<Self> {
        if classes.len() != self.names.len() {
            return Err(PlcmError::InvalidPanel(format!(
                "{} class tags for {} pathogens",
                classes.len(),
                self.names.len()
            )));
        }
        self.classes = classes;
        Ok(self)
    }

    /// Generic labels `A, B, C, ...` (then `P27, P28, ...`) with no silver tier.
    pub fn lettered(j: usize) -> Result<Self> {
        let names = (0..j)
            .map(|i| {
                if i < 26 {
                    char::from(b'A' + i as u8).to_string()
                } else {
                    format!("P{}", i + 1)
                }
            })
            .collect();
        PathogenPanel::new(names, Vec::new())
    }

    /// The eleven-pathogen pneumonia panel: four bacteria with blood-culture
    /// (silver) measurements followed by seven viruses.
    pub fn perch_preset() -> Self {
        let names: Vec<String> = PERCH_BACTERIA
            .iter()
            .chain(PERCH_VIRUSES.iter())
            .map(|s| s.to_string())
            .collect();
        let classes = PERCH_BACTERIA
            .iter()
            .map(|_| PathogenClass::Bacterium)
            .chain(PERCH_VIRUSES.iter().map(|_| PathogenClass::Virus))
            .collect();
        PathogenPanel::new(names, (0..PERCH_BACTERIA.len()).collect())
            .and_then(|p| p.with_classes(classes))
            .expect("preset panel is valid")
    }

    /// Number of pathogens `J`.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Number of silver-tier pathogens `J'`.
    pub fn n_ss(&self) -> usize {
        self.ss_panel.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn classes(&self) -> &[PathogenClass] {
        &self.classes
    }

    /// Pathogen indices of the silver columns, in column order.
    pub fn ss_panel(&self) -> &[usize] {
        &self.ss_panel
    }

    /// Silver column of pathogen `j`, if it has one.
    pub fn ss_slot(&self, j: usize) -> Option<usize> {
        self.ss_slot[j]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// One study subject. Controls only carry bronze measurements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub case: bool,
    pub gs_available: bool,
    pub ss_available: bool,
    pub brs: Vec<bool>,
    pub ss: Option<Vec<bool>>,
    pub gs: Option<Vec<bool>>,
}

impl SubjectRecord {
    pub fn control(id: impl Into<String>, brs: Vec<bool>) -> Self {
        SubjectRecord {
            id: id.into(),
            case: false,
            gs_available: false,
            ss_available: false,
            brs,
            ss: None,
            gs: None,
        }
    }

    /// A case with bronze data only.
    pub fn case(id: impl Into<String>, brs: Vec<bool>) -> Self {
        SubjectRecord {
            case: true,
            ..SubjectRecord::control(id, brs)
        }
    }

    pub fn with_ss(mut self, ss: Vec<bool>) -> Self {
        self.ss_available = true;
        self.ss = Some(ss);
        self
    }

    pub fn with_gs(mut self, gs: Vec<bool>) -> Self {
        self.gs_available = true;
        self.gs = Some(gs);
        self
    }

    /// Index of the single positive gold-standard entry, if the record has a
    /// usable gold-standard measurement.
    pub fn gs_cause(&self) -> Option<usize> {
        if !self.gs_available {
            return None;
        }
        let gs = self.gs.as_ref()?;
        let mut pos = gs.iter().enumerate().filter(|(_, &m)| m).map(|(j, _)| j);
        match (pos.next(), pos.next()) {
            (Some(j), None) => Some(j),
            _ => None,
        }
    }

    /// Silver measurements when the case has them.
    pub fn ss_measured(&self) -> Option<&[bool]> {
        if self.ss_available {
            self.ss.as_deref()
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub panel: PathogenPanel,
    pub subjects: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(panel: PathogenPanel, subjects: Vec<SubjectRecord>) -> Self {
        Dataset { panel, subjects }
    }

    pub fn n_cases(&self) -> usize {
        self.subjects.iter().filter(|s| s.case).count()
    }

    pub fn n_controls(&self) -> usize {
        self.subjects.len() - self.n_cases()
    }

    pub fn cases(&self) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(|s| s.case)
    }

    pub fn controls(&self) -> impl Iterator<Item = &SubjectRecord> {
        self.subjects.iter().filter(|s| !s.case)
    }

    /// Copy of the dataset with gold-standard data removed from every case
    /// (the bronze-only analysis of a mixed dataset).
    pub fn without_gs(&self) -> Dataset {
        let subjects = self
            .subjects
            .iter()
            .map(|s| SubjectRecord {
                gs_available: false,
                gs: None,
                ..s.clone()
            })
            .collect();
        Dataset::new(self.panel.clone(), subjects)
    }

    /// Copy with silver data removed from every case.
    pub fn without_ss(&self) -> Dataset {
        let subjects = self
            .subjects
            .iter()
            .map(|s| SubjectRecord {
                ss_available: false,
                ss: None,
                ..s.clone()
            })
            .collect();
        Dataset::new(self.panel.clone(), subjects)
    }

    pub fn validate(&self) -> ValidationReport {
        validate_dataset(self)
    }
}

/// Unknown model parameters: etiology fractions and measurement error rates.
///
/// Gold-standard rates (sensitivity 1, specificity 1) and the silver false
/// positive rate (0) are model constants, not fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Etiology fractions, a point on the simplex.
    pub pi: Vec<f64>,
    /// Bronze true positive rates.
    pub theta_brs: Vec<f64>,
    /// Bronze false positive rates.
    pub psi_brs: Vec<f64>,
    /// Silver true positive rates, one per silver column.
    pub theta_ss: Vec<f64>,
}

impl ModelParams {
    /// Checked constructor. Boundary rates (0 or 1) are accepted; see
    /// [`ModelParams::is_interior`].
    pub fn new(
        pi: Vec<f64>,
        theta_brs: Vec<f64>,
        psi_brs: Vec<f64>,
        theta_ss: Vec<f64>,
    ) -> Result<Self> {
        let p = ModelParams {
            pi,
            theta_brs,
            psi_brs,
            theta_ss,
        };
        p.check()?;
        Ok(p)
    }

    /// Bronze-only parameters (no silver tier).
    pub fn bronze(pi: Vec<f64>, theta_brs: Vec<f64>, psi_brs: Vec<f64>) -> Result<Self> {
        ModelParams::new(pi, theta_brs, psi_brs, Vec::new())
    }

    pub fn n_pathogens(&self) -> usize {
        self.pi.len()
    }

    pub fn check(&self) -> Result<()> {
        let j = self.pi.len();
        if j == 0 {
            return Err(PlcmError::InvalidParams("empty etiology vector".into()));
        }
        if self.theta_brs.len() != j || self.psi_brs.len() != j {
            return Err(PlcmError::InvalidParams(format!(
                "rate vectors have lengths {}/{} for {j} pathogens",
                self.theta_brs.len(),
                self.psi_brs.len()
            )));
        }
        if self.theta_ss.len() > j {
            return Err(PlcmError::InvalidParams("more silver rates than pathogens".into()));
        }
        if self.pi.iter().any(|&p| !(p >= 0.0)) {
            return Err(PlcmError::InvalidParams("negative etiology fraction".into()));
        }
        let total: f64 = self.pi.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(PlcmError::InvalidParams(format!(
                "etiology fractions sum to {total}, not 1"
            )));
        }
        let rates = self.theta_brs.iter().chain(&self.psi_brs).chain(&self.theta_ss);
        if rates.clone().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(PlcmError::InvalidParams("rate outside [0, 1]".into()));
        }
        Ok(())
    }

    /// Checks dimensions against a panel.
    pub fn check_panel(&self, panel: &PathogenPanel) -> Result<()> {
        self.check()?;
        if self.pi.len() != panel.len() || self.theta_ss.len() != panel.n_ss() {
            return Err(PlcmError::InvalidParams(format!(
                "parameters for J={}, J'={} do not match panel J={}, J'={}",
                self.pi.len(),
                self.theta_ss.len(),
                panel.len(),
                panel.n_ss()
            )));
        }
        Ok(())
    }

    /// True when every rate lies strictly inside (0, 1).
    pub fn is_interior(&self) -> bool {
        self.theta_brs
            .iter()
            .chain(&self.psi_brs)
            .chain(&self.theta_ss)
            .all(|&r| r > 0.0 && r < 1.0)
    }

    /// Parameters in the order of [`param_names`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.pi
            .iter()
            .chain(&self.theta_brs)
            .chain(&self.psi_brs)
            .chain(&self.theta_ss)
            .copied()
            .collect()
    }

    /// Inverse of [`ModelParams::to_flat`]. Not checked.
    pub fn from_flat(j: usize, n_ss: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 3 * j + n_ss {
            return Err(PlcmError::InvalidParams(format!(
                "expected {} values, got {}",
                3 * j + n_ss,
                v.len()
            )));
        }
        Ok(ModelParams {
            pi: v[..j].to_vec(),
            theta_brs: v[j..2 * j].to_vec(),
            psi_brs: v[2 * j..3 * j].to_vec(),
            theta_ss: v[3 * j..].to_vec(),
        })
    }
}

/// Column names of the flattened parameter vector: `pi_*`, `theta_brs_*`,
/// `psi_brs_*`, then `theta_ss_*` over the silver panel.
pub fn param_names(panel: &PathogenPanel) -> Vec<String> {
    let mut out = Vec::with_capacity(3 * panel.len() + panel.n_ss());
    for prefix in ["pi", "theta_brs", "psi_brs"] {
        out.extend(panel.names().iter().map(|n| format!("{prefix}_{n}")));
    }
    out.extend(panel.ss_panel().iter().map(|&j| format!("theta_ss_{}", panel.name(j))));
    out
}

/// Latent cause of every case, in the order cases appear in the dataset.
/// Causes are 0-based pathogen indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentAssignment {
    pub causes: Vec<usize>,
}

impl LatentAssignment {
    pub fn new(causes: Vec<usize>) -> Self {
        LatentAssignment { causes }
    }

    /// Number of cases assigned to each cause.
    pub fn counts(&self, j: usize) -> Vec<u64> {
        let mut u = vec![0u64; j];
        for &c in &self.causes {
            u[c] += 1;
        }
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    BrsLength,
    SsLength,
    GsLength,
    ControlHasSs,
    ControlHasGs,
    SsMissing,
    GsMissing,
    SsWithoutFlag,
    GsWithoutFlag,
    GsNotOneHot,
    SsMultiplePositives,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::BrsLength => "bronze vector length does not match the panel",
            Rule::SsLength => "SS vector length does not match the silver panel",
            Rule::GsLength => "GS vector length does not match the panel",
            Rule::ControlHasSs => "controls carry no SS data",
            Rule::ControlHasGs => "controls carry no GS data",
            Rule::SsMissing => "SS flagged available but measurements are missing",
            Rule::GsMissing => "GS flagged available but measurements are missing",
            Rule::SsWithoutFlag => "SS measurements present without availability flag",
            Rule::GsWithoutFlag => "GS measurements present without availability flag",
            Rule::GsNotOneHot => "GS measurement is not one-hot",
            Rule::SsMultiplePositives => "SS has ≥2 positives (zero-likelihood record)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject_id: String,
    pub rule: Rule,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject_id, self.rule)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(PlcmError::InvalidDataset(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return f.write_str("pass");
        }
        writeln!(f, "fail ({} violations)", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Checks every structural assumption of the model on a dataset. Violations
/// are reported, never raised.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let j = ds.panel.len();
    let j_ss = ds.panel.n_ss();
    let mut violations = Vec::new();
    for s in &ds.subjects {
        let mut flag = |rule| {
            violations.push(Violation {
                subject_id: s.id.clone(),
                rule,
            })
        };
        if s.brs.len() != j {
            flag(Rule::BrsLength);
        }
        if let Some(ss) = &s.ss {
            if ss.len() != j_ss {
                flag(Rule::SsLength);
            }
        }
        if let Some(gs) = &s.gs {
            if gs.len() != j {
                flag(Rule::GsLength);
            }
        }
        if !s.case {
            if s.ss_available || s.ss.is_some() {
                flag(Rule::ControlHasSs);
            }
            if s.gs_available || s.gs.is_some() {
                flag(Rule::ControlHasGs);
            }
            continue;
        }
        match (s.gs_available, &s.gs) {
            (true, None) => flag(Rule::GsMissing),
            (false, Some(_)) => flag(Rule::GsWithoutFlag),
            (true, Some(gs)) => {
                if gs.iter().filter(|&&m| m).count() != 1 {
                    flag(Rule::GsNotOneHot);
                }
            }
            (false, None) => {}
        }
        match (s.ss_available, &s.ss) {
            (true, None) => flag(Rule::SsMissing),
            (false, Some(_)) => flag(Rule::SsWithoutFlag),
            _ => {}
        }
        if let Some(ss) = &s.ss {
            if ss.iter().filter(|&&m| m).count() >= 2 {
                flag(Rule::SsMultiplePositives);
            }
        }
    }
    ValidationReport { violations }
}
