//! Experiment configuration: typed TOML blocks, validated at load time with
//! errors that point at the offending line.

use std::fmt;
use std::path::{Path, PathBuf};

use mpmc_core::model::{gk_default_prior, gk_simulate, GkAbcModel, GkParams, GlmmData, GlmmModel, SummaryMode, SynthSpec, TractableTarget};
use mpmc_core::{AdaptiveConfig, MixtureParams, SeedStream, SpdMatrix, TargetModel, WindowRule};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelBlock,
    #[serde(default)]
    pub adaptive: AdaptiveBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelBlock {
    GkAbc(GkAbcBlock),
    Glmm(GlmmBlock),
    Tractable(TractableBlock),
}

impl ModelBlock {
    pub fn name(&self) -> &'static str {
        match self {
            ModelBlock::GkAbc(_) => "gk_abc",
            ModelBlock::Glmm(_) => "glmm",
            ModelBlock::Tractable(_) => "tractable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummaryChoice {
    Identity,
    Octile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorChoice {
    #[serde(rename = "paper")]
    Builtin,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Vec<Vec<f64>>>,
}

impl MixtureSpec {
    fn build(&self) -> mpmc_core::Result<MixtureParams> {
        let covs = self
            .covs
            .iter()
            .map(|c| SpdMatrix::from_rows(c))
            .collect::<mpmc_core::Result<Vec<_>>>()?;
        MixtureParams::new(self.weights.clone(), self.means.clone(), covs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GkAbcBlock {
    pub n_obs: usize,
    pub h: f64,
    #[serde(default = "default_summary")]
    pub summary_mode: SummaryChoice,
    /// Generating `(A, B, g, k)` for simulated observations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_params: Option<[f64; 4]>,
    /// Observations, one number per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<PathBuf>,
    #[serde(default = "default_prior")]
    pub prior: PriorChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_prior: Option<MixtureSpec>,
}

fn default_summary() -> SummaryChoice {
    SummaryChoice::Identity
}

fn default_prior() -> PriorChoice {
    PriorChoice::Builtin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlmmBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthBlock>,
    #[serde(rename = "N_i")]
    pub n_i: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthBlock {
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub true_beta: [f64; 3],
    pub true_tau2: f64,
    #[serde(default = "default_smoking_rate")]
    pub smoking_rate: f64,
}

fn default_smoking_rate() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TractableBlock {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub noise_cv: f64,
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowChoice {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveBlock {
    pub window: WindowChoice,
    pub t_w: usize,
    pub s: usize,
    pub eps0: f64,
    pub n_particles: usize,
    pub n_add: usize,
    pub alpha_min: f64,
    pub alpha_add: f64,
    pub sigma_add_scale: f64,
    pub t_max: usize,
    pub d_max: usize,
    pub eps_tot: f64,
    pub smoothing_span: usize,
}

impl Default for AdaptiveBlock {
    fn default() -> Self {
        let d = AdaptiveConfig::default();
        AdaptiveBlock {
            window: WindowChoice::Fixed,
            t_w: 20,
            s: 5,
            eps0: 0.01,
            n_particles: d.n_particles,
            n_add: d.n_add,
            alpha_min: d.alpha_min,
            alpha_add: d.alpha_add,
            sigma_add_scale: d.sigma_add_scale,
            t_max: d.t_max,
            d_max: d.d_max,
            eps_tot: d.eps_tot,
            smoothing_span: d.smoothing_span,
        }
    }
}

// Partial block as written in the file; unset keys take defaults.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdaptiveInput {
    window: Option<WindowChoice>,
    t_w: Option<usize>,
    s: Option<usize>,
    eps0: Option<f64>,
    n_particles: Option<usize>,
    n_add: Option<usize>,
    alpha_min: Option<f64>,
    alpha_add: Option<f64>,
    sigma_add_scale: Option<f64>,
    t_max: Option<usize>,
    d_max: Option<usize>,
    eps_tot: Option<f64>,
    smoothing_span: Option<usize>,
}

impl From<AdaptiveInput> for AdaptiveBlock {
    fn from(i: AdaptiveInput) -> Self {
        let d = AdaptiveBlock::default();
        AdaptiveBlock {
            window: i.window.unwrap_or(d.window),
            t_w: i.t_w.unwrap_or(d.t_w),
            s: i.s.unwrap_or(d.s),
            eps0: i.eps0.unwrap_or(d.eps0),
            n_particles: i.n_particles.unwrap_or(d.n_particles),
            n_add: i.n_add.unwrap_or(d.n_add),
            alpha_min: i.alpha_min.unwrap_or(d.alpha_min),
            alpha_add: i.alpha_add.unwrap_or(d.alpha_add),
            sigma_add_scale: i.sigma_add_scale.unwrap_or(d.sigma_add_scale),
            t_max: i.t_max.unwrap_or(d.t_max),
            d_max: i.d_max.unwrap_or(d.d_max),
            eps_tot: i.eps_tot.unwrap_or(d.eps_tot),
            smoothing_span: i.smoothing_span.unwrap_or(d.smoothing_span),
        }
    }
}

impl AdaptiveBlock {
    pub fn to_config(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            n_particles: self.n_particles,
            n_add: self.n_add,
            window: match self.window {
                WindowChoice::Fixed => WindowRule::Fixed { t_w: self.t_w },
                WindowChoice::Adaptive => WindowRule::Adaptive {
                    s: self.s,
                    eps0: self.eps0,
                },
            },
            alpha_min: self.alpha_min,
            alpha_add: self.alpha_add,
            sigma_add_scale: self.sigma_add_scale,
            t_max: self.t_max,
            d_max: self.d_max,
            eps_tot: self.eps_tot,
            smoothing_span: self.smoothing_span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitBlock {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    pub accepted: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub marginal_samples: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            marginal_samples: 100_000,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    model: ModelBlock,
    adaptive: Option<AdaptiveInput>,
    init: Option<InitBlock>,
    oracle: Option<OracleBlock>,
    #[serde(default)]
    output: OutputBlock,
}

/// 1-based line of `key` inside `[table]` (or of the table header when
/// `key` is `None`), found by scanning the source.
fn locate(text: &str, table: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some(k) = key {
                let name = line.split('=').next().unwrap_or("").trim();
                if name == k {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        match table.get("model").and_then(|m| m.as_table()) {
            Some(m) if m.len() == 1 => {}
            Some(m) => {
                return Err(ConfigError {
                    line: locate(text, "model", None).or_else(|| {
                        m.keys().filter_map(|k| locate(text, &format!("model.{k}"), None)).nth(1)
                    }),
                    message: format!(
                        "exactly one model block (gk_abc, glmm, tractable) is required, found {}",
                        m.len()
                    ),
                })
            }
            None => {
                return Err(ConfigError {
                    line: None,
                    message: "missing [model.*] block".into(),
                })
            }
        }
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        let cfg = ExperimentConfig {
            seed: raw.seed,
            output_dir: raw.output_dir,
            model: raw.model,
            adaptive: raw.adaptive.map(AdaptiveBlock::from).unwrap_or_default(),
            init: raw.init,
            oracle: raw.oracle,
            output: raw.output,
        };
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes relative file paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        match &mut self.model {
            ModelBlock::GkAbc(g) => g.data_file.as_mut().map(fix),
            ModelBlock::Glmm(g) => g.data_file.as_mut().map(fix),
            ModelBlock::Tractable(_) => None,
        };
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            ModelBlock::GkAbc(_) | ModelBlock::Glmm(_) => 4,
            ModelBlock::Tractable(t) => t.means.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let err = |table: &str, key: &str, message: String| ConfigError {
            line: locate(text, table, Some(key)).or_else(|| locate(text, table, None)),
            message,
        };
        let a = &self.adaptive;
        let t = "adaptive";
        if a.n_particles < 2 {
            return Err(err(t, "n_particles", format!("n_particles must be >= 2, got {}", a.n_particles)));
        }
        if a.n_add < 1 {
            return Err(err(t, "n_add", "n_add must be >= 1".into()));
        }
        if a.t_w < 1 {
            return Err(err(t, "t_w", "t_w must be >= 1".into()));
        }
        if a.s < 1 {
            return Err(err(t, "s", "s must be >= 1".into()));
        }
        if !(a.eps0 > 0.0) {
            return Err(err(t, "eps0", format!("eps0 must be > 0, got {}", a.eps0)));
        }
        if !(a.alpha_add > 0.0 && a.alpha_add < 1.0) {
            return Err(err(t, "alpha_add", format!("alpha_add must lie in (0, 1), got {}", a.alpha_add)));
        }
        if !(a.alpha_min > 0.0 && a.alpha_min < 0.5) {
            return Err(err(t, "alpha_min", format!("alpha_min must lie in (0, 1/2), got {}", a.alpha_min)));
        }
        if !(a.sigma_add_scale > 0.0) || !a.sigma_add_scale.is_finite() {
            return Err(err(t, "sigma_add_scale", format!("sigma_add_scale must be > 0, got {}", a.sigma_add_scale)));
        }
        if a.t_max < 1 {
            return Err(err(t, "t_max", "t_max must be >= 1".into()));
        }
        if a.d_max < 1 {
            return Err(err(t, "d_max", "d_max must be >= 1".into()));
        }
        if !(a.eps_tot >= 0.0) {
            return Err(err(t, "eps_tot", format!("eps_tot must be >= 0, got {}", a.eps_tot)));
        }
        if a.smoothing_span < 1 {
            return Err(err(t, "smoothing_span", "smoothing_span must be >= 1".into()));
        }

        match &self.model {
            ModelBlock::GkAbc(g) => {
                let t = "model.gk_abc";
                if !(g.h > 0.0) || !g.h.is_finite() {
                    return Err(err(t, "h", format!("h must be > 0, got {}", g.h)));
                }
                match (&g.true_params, &g.data_file) {
                    (Some(_), Some(_)) => {
                        return Err(err(t, "data_file", "give either true_params or data_file, not both".into()))
                    }
                    (None, None) => return Err(err(t, "n_obs", "one of true_params or data_file is required".into())),
                    (Some(p), None) => {
                        if g.n_obs < 1 {
                            return Err(err(t, "n_obs", "n_obs must be >= 1".into()));
                        }
                        if let Err(e) = GkParams::new(p[0], p[1], p[2], p[3]) {
                            return Err(err(t, "true_params", e.to_string()));
                        }
                    }
                    (None, Some(_)) => {}
                }
                if g.summary_mode == SummaryChoice::Octile && g.true_params.is_some() && g.n_obs < 8 {
                    return Err(err(t, "n_obs", "octile summaries need n_obs >= 8".into()));
                }
                match (g.prior, &g.custom_prior) {
                    (PriorChoice::Custom, None) => {
                        return Err(err(t, "prior", "prior = \"custom\" needs a [model.gk_abc.custom_prior] table".into()))
                    }
                    (PriorChoice::Custom, Some(spec)) => match spec.build() {
                        Ok(m) if m.dim() == 4 => {}
                        Ok(m) => return Err(err("model.gk_abc.custom_prior", "means", format!("prior must be 4-dimensional, got {}", m.dim()))),
                        Err(e) => return Err(err("model.gk_abc.custom_prior", "weights", e.to_string())),
                    },
                    (PriorChoice::Builtin, Some(_)) => {
                        return Err(err(t, "prior", "custom_prior given but prior = \"paper\"".into()))
                    }
                    (PriorChoice::Builtin, None) => {}
                }
            }
            ModelBlock::Glmm(g) => {
                let t = "model.glmm";
                if g.n_i < 1 {
                    return Err(err(t, "N_i", "N_i must be >= 1".into()));
                }
                match (&g.data_file, &g.synth) {
                    (Some(_), Some(_)) => return Err(err(t, "data_file", "give either data_file or [model.glmm.synth], not both".into())),
                    (None, None) => return Err(err(t, "N_i", "one of data_file or [model.glmm.synth] is required".into())),
                    (None, Some(s)) => {
                        let ts = "model.glmm.synth";
                        if s.n < 1 || s.t < 1 {
                            return Err(err(ts, "n", "n and T must be >= 1".into()));
                        }
                        if !(s.true_tau2 >= 0.0) || !s.true_tau2.is_finite() {
                            return Err(err(ts, "true_tau2", format!("true_tau2 must be >= 0, got {}", s.true_tau2)));
                        }
                        if !(0.0..=1.0).contains(&s.smoking_rate) {
                            return Err(err(ts, "smoking_rate", "smoking_rate must lie in [0, 1]".into()));
                        }
                    }
                    (Some(_), None) => {}
                }
            }
            ModelBlock::Tractable(tb) => {
                let t = "model.tractable";
                let mix = MixtureSpec {
                    weights: tb.weights.clone(),
                    means: tb.means.clone(),
                    covs: tb.covs.clone(),
                }
                .build()
                .map_err(|e| err(t, "weights", e.to_string()))?;
                if tb.bounds.len() != mix.dim() {
                    return Err(err(t, "box", format!("box needs {} intervals, got {}", mix.dim(), tb.bounds.len())));
                }
                if tb.bounds.iter().any(|b| !(b[0] < b[1])) {
                    return Err(err(t, "box", "every box interval needs lo < hi".into()));
                }
                if !(tb.noise_cv >= 0.0) {
                    return Err(err(t, "noise_cv", format!("noise_cv must be >= 0, got {}", tb.noise_cv)));
                }
            }
        }

        if let Some(init) = &self.init {
            let p = self.dim();
            if init.mean.len() != p {
                return Err(err("init", "mean", format!("init mean must have {p} entries, got {}", init.mean.len())));
            }
            if init.cov.len() != p || init.cov.iter().any(|r| r.len() != p) {
                return Err(err("init", "cov", format!("init cov must be {p} x {p}")));
            }
            if let Err(e) = SpdMatrix::from_rows(&init.cov) {
                return Err(err("init", "cov", format!("init cov: {e}")));
            }
        }
        if self.output.marginal_samples < 1 {
            return Err(err("output", "marginal_samples", "marginal_samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn init_mixture(&self) -> MixtureParams {
        match &self.init {
            Some(i) => MixtureParams::single(i.mean.clone(), SpdMatrix::from_rows(&i.cov).expect("validated"))
                .expect("validated"),
            None => MixtureParams::standard(self.dim()),
        }
    }
}

/// Reads one number per line; a non-numeric first line is taken as a header.
pub fn read_observations(path: &Path) -> Result<Vec<f64>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {}
            Err(_) => return Err(format!("{}:{}: not a number: {field}", path.display(), i + 1)),
        }
    }
    if out.is_empty() {
        return Err(format!("{}: no observations", path.display()));
    }
    Ok(out)
}

pub enum BuiltModel {
    Gk(GkAbcModel),
    Glmm(GlmmModel),
    Tractable(TractableTarget),
}

impl BuiltModel {
    pub fn as_target(&self) -> &dyn TargetModel {
        match self {
            BuiltModel::Gk(m) => m,
            BuiltModel::Glmm(m) => m,
            BuiltModel::Tractable(m) => m,
        }
    }
}

pub fn synth_spec(s: &SynthBlock) -> SynthSpec {
    SynthSpec {
        n: s.n,
        t: s.t,
        beta: s.true_beta,
        tau2: s.true_tau2,
        smoking_rate: s.smoking_rate,
    }
}

/// Builds the target; data simulation draws from the `"model"` substream.
pub fn build_model(cfg: &ExperimentConfig, root: &SeedStream) -> Result<BuiltModel, String> {
    let mut rng = root.named("model").rng();
    match &cfg.model {
        ModelBlock::GkAbc(g) => {
            let y = match (&g.true_params, &g.data_file) {
                (Some(p), _) => gk_simulate(g.n_obs, &GkParams::new(p[0], p[1], p[2], p[3]).map_err(|e| e.to_string())?, &mut rng),
                (None, Some(path)) => read_observations(path)?,
                (None, None) => unreachable!("validated"),
            };
            let mode = match g.summary_mode {
                SummaryChoice::Identity => SummaryMode::Identity,
                SummaryChoice::Octile => SummaryMode::Octile,
            };
            let prior = match &g.custom_prior {
                Some(spec) => spec.build().map_err(|e| e.to_string())?,
                None => gk_default_prior(),
            };
            GkAbcModel::new(y, g.h, mode, prior).map(BuiltModel::Gk).map_err(|e| e.to_string())
        }
        ModelBlock::Glmm(g) => {
            let data = match (&g.data_file, &g.synth) {
                (Some(path), _) => {
                    let f = std::fs::File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
                    GlmmData::read_csv(f).map_err(|e| format!("{}: {e}", path.display()))?
                }
                (None, Some(s)) => GlmmData::synthesize(&synth_spec(s), &mut rng).map_err(|e| e.to_string())?,
                (None, None) => unreachable!("validated"),
            };
            GlmmModel::new(data, g.n_i).map(BuiltModel::Glmm).map_err(|e| e.to_string())
        }
        ModelBlock::Tractable(t) => {
            let truth = MixtureSpec {
                weights: t.weights.clone(),
                means: t.means.clone(),
                covs: t.covs.clone(),
            }
            .build()
            .map_err(|e| e.to_string())?;
            TractableTarget::new(truth, t.noise_cv, t.bounds.iter().map(|b| (b[0], b[1])).collect())
                .map(BuiltModel::Tractable)
                .map_err(|e| e.to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GK: &str = r#"
seed = 7
output_dir = "runs/gk"

[model.gk_abc]
n_obs = 20
h = 12.34
summary_mode = "identity"
true_params = [3.0, 1.0, 2.0, 0.5]

[adaptive]
t_w = 20
n_particles = 1000
alpha_min = 0.02
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::parse(GK).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.adaptive.n_add, AdaptiveConfig::default().n_add);
        assert_eq!(c.adaptive.to_config().window, WindowRule::Fixed { t_w: 20 });
        assert_eq!(c.dim(), 4);
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::parse(GK).unwrap();
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn errors_point_at_lines() {
        let bad = GK.replace("alpha_min = 0.02", "alpha_min = 0.7");
        let e = ExperimentConfig::parse(&bad).unwrap_err();
        assert_eq!(e.line, Some(14));
        assert!(e.message.contains("alpha_min"));

        let two = format!("{GK}\n[model.tractable]\nweights = [1.0]\nmeans = [[0.0]]\ncovs = [[[1.0]]]\nbox = [[-1.0, 1.0]]\n");
        let e = ExperimentConfig::parse(&two).unwrap_err();
        assert!(e.message.contains("exactly one model block"), "{e}");

        let typo = GK.replace("t_w = 20", "tw = 20");
        let e = ExperimentConfig::parse(&typo).unwrap_err();
        assert_eq!(e.line, Some(12));
    }
}
