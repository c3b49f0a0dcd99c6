//! Scenario configuration: the JSON schema, load-time validation, and
//! construction of the runtime objects (mixtures, field, schedule,
//! conditions) that the run functions consume.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Schedule;
use crate::math::SpdMatrix;
use crate::metrics::EditScenario;
use crate::velocity::{Condition, GaussianMixture, MixtureField};
use crate::Vector;

/// Full experiment description. Unknown JSON keys are rejected and every
/// violated constraint is reported at load, not at first use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub dim: usize,
    pub mixtures: BTreeMap<String, MixtureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src_cond: Option<ConditionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_cond: Option<ConditionSpec>,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub edit: EditSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_dims: Option<Vec<usize>>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// One named Gaussian mixture. Covariances come either as full matrices
/// (`covariances`) or as diagonals (`diag_covariances`), exactly one of
/// the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariances: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_covariances: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    pub mixture: String,
    #[serde(default = "default_guidance")]
    pub guidance_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncond: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpacingSpec {
    #[default]
    Uniform,
    Shifted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub steps: usize,
    #[serde(default)]
    pub spacing: SpacingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditSpec {
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub t_start: usize,
    #[serde(default = "default_flag")]
    pub use_res_offset: bool,
    #[serde(default = "default_flag")]
    pub use_mvg: bool,
}

impl Default for EditSpec {
    fn default() -> Self {
        EditSpec {
            eta: default_eta(),
            t_start: 0,
            use_res_offset: true,
            use_mvg: true,
        }
    }
}

/// Output file names, joined onto the chosen output directory by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_results_name")]
    pub results: String,
    #[serde(default = "default_curves_name")]
    pub curves: String,
    #[serde(default = "default_trace_name")]
    pub trace_summary: String,
    #[serde(default = "default_sweep_name")]
    pub sweep_summary: String,
    #[serde(default = "default_plot_name")]
    pub plot: String,
    #[serde(default = "default_timings_name")]
    pub timings: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            results: default_results_name(),
            curves: default_curves_name(),
            trace_summary: default_trace_name(),
            sweep_summary: default_sweep_name(),
            plot: default_plot_name(),
            timings: default_timings_name(),
        }
    }
}

fn default_guidance() -> f64 {
    1.0
}

fn default_eta() -> f64 {
    0.8
}

fn default_flag() -> bool {
    true
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

pub(crate) const RECON_METHOD_TAGS: [&str; 4] = ["vanilla", "midpoint", "fixed_noise", "dna"];

fn default_methods() -> Vec<String> {
    RECON_METHOD_TAGS.iter().map(|s| s.to_string()).collect()
}

fn default_results_name() -> String {
    "results.csv".into()
}

fn default_curves_name() -> String {
    "curves.csv".into()
}

fn default_trace_name() -> String {
    "trace_summary.csv".into()
}

fn default_sweep_name() -> String {
    "sweep_summary.txt".into()
}

fn default_plot_name() -> String {
    "curves.svg".into()
}

fn default_timings_name() -> String {
    "timings.csv".into()
}

/// Per-mixture dimension cap; runs are dense O(K·d³) per evaluation, and
/// the laboratory deliberately stays at desk scale.
pub const MAX_DIM: usize = 64;

impl MixtureSpec {
    fn check_shape(&self, dim: usize, name: &str, problems: &mut Vec<String>) {
        let k = self.weights.len();
        if k == 0 {
            problems.push(format!("mixture `{name}`: weights must be nonempty"));
        }
        if self.means.len() != k {
            problems.push(format!(
                "mixture `{name}`: {} means for {k} weights",
                self.means.len()
            ));
        }
        for (i, m) in self.means.iter().enumerate() {
            if m.len() != dim {
                problems.push(format!(
                    "mixture `{name}`: mean {i} has length {}, expected dim = {dim}",
                    m.len()
                ));
            }
        }
        match (&self.covariances, &self.diag_covariances) {
            (Some(full), None) => {
                if full.len() != k {
                    problems.push(format!(
                        "mixture `{name}`: {} covariances for {k} weights",
                        full.len()
                    ));
                }
                for (i, mat) in full.iter().enumerate() {
                    if mat.len() != dim || mat.iter().any(|row| row.len() != dim) {
                        problems.push(format!(
                            "mixture `{name}`: covariance {i} is not {dim}x{dim}"
                        ));
                    }
                }
            }
            (None, Some(diags)) => {
                if diags.len() != k {
                    problems.push(format!(
                        "mixture `{name}`: {} diagonal covariances for {k} weights",
                        diags.len()
                    ));
                }
                for (i, diag) in diags.iter().enumerate() {
                    if diag.len() != dim {
                        problems.push(format!(
                            "mixture `{name}`: diagonal covariance {i} has length {}, expected {dim}",
                            diag.len()
                        ));
                    }
                }
            }
            (Some(_), Some(_)) => problems.push(format!(
                "mixture `{name}`: give either covariances or diag_covariances, not both"
            )),
            (None, None) => problems.push(format!(
                "mixture `{name}`: one of covariances or diag_covariances is required"
            )),
        }
    }

    /// Constructs the mixture, surfacing symmetry/positive-definiteness and
    /// weight-sum violations from the underlying constructors.
    pub fn build(&self, dim: usize) -> Result<GaussianMixture> {
        let means: Vec<Vector> = self
            .means
            .iter()
            .map(|m| Array1::from_vec(m.clone()))
            .collect();
        let covs: Vec<SpdMatrix> = match (&self.covariances, &self.diag_covariances) {
            (Some(full), None) => full
                .iter()
                .map(|mat| {
                    let mut a = Array2::zeros((dim, dim));
                    for (i, row) in mat.iter().enumerate() {
                        for (j, &v) in row.iter().enumerate() {
                            a[[i, j]] = v;
                        }
                    }
                    SpdMatrix::new(a)
                })
                .collect::<Result<_>>()?,
            (None, Some(diags)) => diags
                .iter()
                .map(|diag| SpdMatrix::new(Array2::from_diag(&Array1::from_vec(diag.clone()))))
                .collect::<Result<_>>()?,
            _ => {
                return Err(Error::config(
                    "exactly one of covariances or diag_covariances is required",
                ))
            }
        };
        let mix = GaussianMixture::new(self.weights.clone(), means, covs)?;
        if mix.dim() != dim {
            return Err(Error::DimMismatch {
                context: "mixture dimension vs config dim",
                expected: dim,
                got: mix.dim(),
            });
        }
        Ok(mix)
    }
}

impl ConditionSpec {
    fn check(&self, label: &str, mixtures: &BTreeMap<String, MixtureSpec>, problems: &mut Vec<String>) {
        if !mixtures.contains_key(&self.mixture) {
            problems.push(format!("{label}: unknown mixture `{}`", self.mixture));
        }
        if let Some(u) = &self.uncond {
            if !mixtures.contains_key(u) {
                problems.push(format!("{label}: unknown uncond mixture `{u}`"));
            }
        }
        if !self.guidance_scale.is_finite() || self.guidance_scale < 0.0 {
            problems.push(format!(
                "{label}: guidance_scale must be finite and nonnegative, got {}",
                self.guidance_scale
            ));
        }
    }

    fn to_condition(&self) -> Condition {
        Condition {
            mixture_id: self.mixture.clone(),
            guidance_scale: self.guidance_scale,
            uncond_id: self.uncond.clone(),
        }
    }
}

impl ScenarioConfig {
    /// Checks every constraint and reports the full violation list at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();

        if self.dim == 0 {
            problems.push("dim must be at least 1".to_string());
        }
        if self.dim > MAX_DIM {
            problems.push(format!("dim must be at most {MAX_DIM}, got {}", self.dim));
        }

        if self.mixtures.is_empty() {
            problems.push("at least one mixture is required".to_string());
        }
        for (name, spec) in &self.mixtures {
            let before = problems.len();
            spec.check_shape(self.dim, name, &mut problems);
            // Deep checks (weight sum, SPD-ness) only once the shape parses.
            if problems.len() == before {
                if let Err(e) = spec.build(self.dim) {
                    problems.push(format!("mixture `{name}`: {e}"));
                }
            }
        }

        match (&self.src_cond, self.mixtures.len()) {
            (Some(c), _) => c.check("src_cond", &self.mixtures, &mut problems),
            (None, 1) => {}
            (None, n) => problems.push(format!(
                "src_cond is required when {n} mixtures are defined"
            )),
        }
        if let Some(c) = &self.tgt_cond {
            c.check("tgt_cond", &self.mixtures, &mut problems);
        }

        if self.schedule.steps == 0 {
            problems.push("schedule.steps must be at least 1".to_string());
        }
        match (self.schedule.spacing, self.schedule.shift) {
            (SpacingSpec::Uniform, Some(_)) => {
                problems.push("schedule.shift is only meaningful with shifted spacing".to_string())
            }
            (SpacingSpec::Shifted, None) => {
                problems.push("shifted spacing requires schedule.shift".to_string())
            }
            (SpacingSpec::Shifted, Some(s)) if !(s.is_finite() && s > 0.0) => {
                problems.push(format!("schedule.shift must be positive, got {s}"))
            }
            _ => {}
        }

        if !self.edit.eta.is_finite() || !(0.0..=1.0).contains(&self.edit.eta) {
            problems.push(format!("edit.eta must lie in [0, 1], got {}", self.edit.eta));
        }
        if self.schedule.steps > 0 && self.edit.t_start >= self.schedule.steps {
            problems.push(format!(
                "edit.t_start must be below schedule.steps = {}, got {}",
                self.schedule.steps, self.edit.t_start
            ));
        }

        if self.seeds.is_empty() {
            problems.push("seeds must be nonempty".to_string());
        }
        if self.methods.is_empty() {
            problems.push("methods must be nonempty".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !RECON_METHOD_TAGS.contains(&m.as_str()) {
                problems.push(format!(
                    "unknown method `{m}` (expected one of {})",
                    RECON_METHOD_TAGS.join(", ")
                ));
            }
            if !seen.insert(m.clone()) {
                problems.push(format!("method `{m}` listed twice"));
            }
        }

        match (&self.background_dims, &self.edit_dims) {
            (None, None) => {}
            (Some(bg), Some(ed)) => {
                let mut count = vec![0u8; self.dim];
                let mut oob = false;
                for &i in bg.iter().chain(ed) {
                    if i >= self.dim {
                        oob = true;
                    } else {
                        count[i] += 1;
                    }
                }
                if oob {
                    problems.push(format!(
                        "background_dims/edit_dims contain an index outside [0, {})",
                        self.dim
                    ));
                } else if count.iter().any(|&c| c != 1) {
                    problems.push(
                        "background_dims and edit_dims must be disjoint and cover every coordinate"
                            .to_string(),
                    );
                } else if problems.is_empty() {
                    // Paired-marginal check, once everything else is sound.
                    if let Err(e) = self.build_scenario(Vector::zeros(self.dim)) {
                        problems.push(format!("edit scenario: {e}"));
                    }
                }
            }
            _ => problems
                .push("background_dims and edit_dims must be given together".to_string()),
        }

        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { problems })
        }
    }

    /// All mixtures constructed, keyed by name.
    pub fn build_mixtures(&self) -> Result<BTreeMap<String, GaussianMixture>> {
        self.mixtures
            .iter()
            .map(|(name, spec)| {
                spec.build(self.dim)
                    .map(|m| (name.clone(), m))
                    .map_err(|e| Error::config(format!("mixture `{name}`: {e}")))
            })
            .collect()
    }

    /// A fresh velocity field holding every configured mixture. Each run
    /// builds its own so evaluation counts stay exact per run.
    pub fn build_field(&self) -> Result<MixtureField> {
        let mut field = MixtureField::new(self.dim);
        for (name, mix) in self.build_mixtures()? {
            field.insert(name, mix)?;
        }
        Ok(field)
    }

    pub fn build_schedule(&self) -> Result<Schedule> {
        match self.schedule.spacing {
            SpacingSpec::Uniform => Schedule::uniform(self.schedule.steps),
            SpacingSpec::Shifted => {
                let shift = self.schedule.shift.ok_or_else(|| {
                    Error::config("shifted spacing requires schedule.shift")
                })?;
                Schedule::shifted(self.schedule.steps, shift)
            }
        }
    }

    /// The source condition; defaults to the sole mixture when only one is
    /// configured and no condition was given.
    pub fn resolved_src_cond(&self) -> Result<Condition> {
        match &self.src_cond {
            Some(c) => Ok(c.to_condition()),
            None => {
                let mut names = self.mixtures.keys();
                match (names.next(), names.next()) {
                    (Some(name), None) => Ok(Condition::plain(name.clone())),
                    _ => Err(Error::config(
                        "src_cond is required when multiple mixtures are defined",
                    )),
                }
            }
        }
    }

    /// The target condition; falls back to the source condition, which
    /// makes the edit an identity edit.
    pub fn resolved_tgt_cond(&self) -> Result<Condition> {
        match &self.tgt_cond {
            Some(c) => Ok(c.to_condition()),
            None => self.resolved_src_cond(),
        }
    }

    /// Builds the edit scenario around a sampled source point.
    pub fn build_scenario(&self, source_point: Vector) -> Result<EditScenario> {
        let (bg, ed) = match (&self.background_dims, &self.edit_dims) {
            (Some(bg), Some(ed)) => (bg.clone(), ed.clone()),
            _ => {
                return Err(Error::config(
                    "editing requires background_dims and edit_dims",
                ))
            }
        };
        let mixtures = self.build_mixtures()?;
        let src_id = self.resolved_src_cond()?.mixture_id;
        let tgt_id = self.resolved_tgt_cond()?.mixture_id;
        let src = mixtures
            .get(&src_id)
            .ok_or(Error::UnknownCondition { name: src_id })?
            .clone();
        let tgt = mixtures
            .get(&tgt_id)
            .ok_or(Error::UnknownCondition { name: tgt_id })?
            .clone();
        EditScenario::new(bg, ed, src, tgt, source_point)
    }

    /// Pretty JSON with a trailing newline; field order is fixed, map keys
    /// are sorted, so output is byte-deterministic.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

/// Reads and fully validates a JSON config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: format!("{}", path.display()),
        detail: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}
