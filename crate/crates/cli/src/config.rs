//! Flat `section.key = value` run configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kdm_core::exec::ExecPolicy;
use kdm_core::kdm::{KdmTrainConfig, LossToggles, OperatorKind};
use kdm_core::teacher::{CheckerboardSpec, SigmaParams, TeacherConfig, TeacherKind};
use kdm_core::theory::{EdmdConfig, ProximityConfig};

use crate::error::{CliError, CliResult};

/// Environment variable that overrides `paths.workdir`.
pub const WORKDIR_ENV: &str = "KDM_WORKDIR";

/// Which model `sample` draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleModel {
    Teacher,
    Student,
}

impl FromStr for SampleModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "teacher" => Ok(SampleModel::Teacher),
            "student" => Ok(SampleModel::Student),
            other => Err(format!("expected teacher or student, got {other:?}")),
        }
    }
}

impl Display for SampleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SampleModel::Teacher => "teacher",
            SampleModel::Student => "student",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSection {
    pub grid: usize,
    pub extent: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TeacherSection {
    pub kind: TeacherKind,
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub rho: f64,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
    pub precondition: bool,
    pub conditional: bool,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairsSection {
    pub n: usize,
    pub nfe: usize,
    pub seed: u64,
    pub conditional: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdmSection {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub lambda_adv: f64,
    pub noise_std: f64,
    pub latent_dim: usize,
    pub conditional: bool,
    pub operator: OperatorKind,
    pub rec: bool,
    pub lat: bool,
    pub pred: bool,
    pub adv: bool,
    pub rec_noise_free: bool,
    pub hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TheorySection {
    pub degrees: Vec<usize>,
    pub samples: usize,
    pub ridge: f64,
    pub radius: f64,
    pub calibration_pairs: usize,
    pub eval_pairs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSection {
    pub k: usize,
    pub eps: f64,
    pub min_pts: usize,
    pub sigmas: Vec<f64>,
    pub samples: usize,
    pub sweep_points: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSection {
    pub count: usize,
    pub model: SampleModel,
    pub label: Option<usize>,
    pub seed: u64,
}

/// Every setting of the six commands. Defaults reproduce the acceptance configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSection,
    pub teacher: TeacherSection,
    pub pairs: PairsSection,
    pub kdm: KdmSection,
    pub theory: TheorySection,
    pub eval: EvalSection,
    pub sample: SampleSection,
    pub workdir: PathBuf,
    /// Worker threads; 1 runs everything sequentially.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TeacherConfig::default();
        let k = KdmTrainConfig::default();
        let spec = CheckerboardSpec::default();
        RunConfig {
            data: DataSection {
                grid: spec.grid,
                extent: spec.extent,
            },
            teacher: TeacherSection {
                kind: t.kind,
                sigma_max: t.sigma.sigma_max,
                sigma_min: t.sigma.sigma_min,
                rho: t.sigma.rho,
                iterations: t.iterations,
                batch: t.batch,
                lr: t.lr,
                hidden: t.hidden,
                precondition: t.precondition,
                conditional: false,
                seed: 0,
            },
            pairs: PairsSection {
                n: 50_000,
                nfe: 10,
                seed: 1,
                conditional: false,
            },
            kdm: KdmSection {
                iterations: k.iterations,
                batch: k.batch,
                lr: k.lr,
                lambda_adv: k.lambda_adv,
                noise_std: k.noise_std,
                latent_dim: k.latent_dim,
                conditional: k.conditional,
                operator: k.operator,
                rec: k.toggles.rec,
                lat: k.toggles.lat,
                pred: k.toggles.pred,
                adv: k.toggles.adv,
                rec_noise_free: k.toggles.rec_noise_free,
                hidden: k.hidden,
                disc_hidden: k.disc_hidden,
                seed: 2,
            },
            theory: TheorySection {
                degrees: vec![1, 2, 3, 4, 5],
                samples: 4000,
                ridge: kdm_core::ndmath::DEFAULT_RIDGE,
                radius: 0.5,
                calibration_pairs: 10_000,
                eval_pairs: 10_000,
                seed: 5,
            },
            eval: EvalSection {
                k: 10,
                eps: kdm_core::eval::DEFAULT_EPS,
                min_pts: kdm_core::eval::DEFAULT_MIN_PTS,
                sigmas: kdm_core::eval::DEFAULT_SWEEP_SIGMAS.to_vec(),
                samples: 10_000,
                sweep_points: 100,
                seed: 3,
            },
            sample: SampleSection {
                count: 1000,
                model: SampleModel::Student,
                label: None,
                seed: 4,
            },
            workdir: PathBuf::from("kdm-work"),
            threads: 1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e: T::Err| CliError::key(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn list<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment; unknown
    /// and repeated keys are errors.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::ConfigSyntax {
                line: n + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::key(key, "given more than once"));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::MissingInput {
                what: "config file",
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> CliResult<()> {
        match key {
            "data.grid" => self.data.grid = parse(key, v)?,
            "data.extent" => self.data.extent = parse(key, v)?,
            "teacher.kind" => self.teacher.kind = parse(key, v)?,
            "teacher.sigma_max" => self.teacher.sigma_max = parse(key, v)?,
            "teacher.sigma_min" => self.teacher.sigma_min = parse(key, v)?,
            "teacher.rho" => self.teacher.rho = parse(key, v)?,
            "teacher.iterations" => self.teacher.iterations = parse(key, v)?,
            "teacher.batch" => self.teacher.batch = parse(key, v)?,
            "teacher.lr" => self.teacher.lr = parse(key, v)?,
            "teacher.hidden" => self.teacher.hidden = parse_list(key, v)?,
            "teacher.precondition" => self.teacher.precondition = parse(key, v)?,
            "teacher.conditional" => self.teacher.conditional = parse(key, v)?,
            "teacher.seed" => self.teacher.seed = parse(key, v)?,
            "pairs.n" => self.pairs.n = parse(key, v)?,
            "pairs.nfe" => self.pairs.nfe = parse(key, v)?,
            "pairs.seed" => self.pairs.seed = parse(key, v)?,
            "pairs.conditional" => self.pairs.conditional = parse(key, v)?,
            "kdm.iterations" => self.kdm.iterations = parse(key, v)?,
            "kdm.batch" => self.kdm.batch = parse(key, v)?,
            "kdm.lr" => self.kdm.lr = parse(key, v)?,
            "kdm.lambda_adv" => self.kdm.lambda_adv = parse(key, v)?,
            "kdm.noise_std" => self.kdm.noise_std = parse(key, v)?,
            "kdm.latent_dim" => self.kdm.latent_dim = parse(key, v)?,
            "kdm.conditional" => self.kdm.conditional = parse(key, v)?,
            "kdm.operator" => self.kdm.operator = parse(key, v)?,
            "kdm.rec" => self.kdm.rec = parse(key, v)?,
            "kdm.lat" => self.kdm.lat = parse(key, v)?,
            "kdm.pred" => self.kdm.pred = parse(key, v)?,
            "kdm.adv" => self.kdm.adv = parse(key, v)?,
            "kdm.rec_noise_free" => self.kdm.rec_noise_free = parse(key, v)?,
            "kdm.hidden" => self.kdm.hidden = parse_list(key, v)?,
            "kdm.disc_hidden" => self.kdm.disc_hidden = parse_list(key, v)?,
            "kdm.seed" => self.kdm.seed = parse(key, v)?,
            "theory.degrees" => self.theory.degrees = parse_list(key, v)?,
            "theory.samples" => self.theory.samples = parse(key, v)?,
            "theory.ridge" => self.theory.ridge = parse(key, v)?,
            "theory.radius" => self.theory.radius = parse(key, v)?,
            "theory.calibration_pairs" => self.theory.calibration_pairs = parse(key, v)?,
            "theory.eval_pairs" => self.theory.eval_pairs = parse(key, v)?,
            "theory.seed" => self.theory.seed = parse(key, v)?,
            "eval.k" => self.eval.k = parse(key, v)?,
            "eval.eps" => self.eval.eps = parse(key, v)?,
            "eval.min_pts" => self.eval.min_pts = parse(key, v)?,
            "eval.sigmas" => self.eval.sigmas = parse_list(key, v)?,
            "eval.samples" => self.eval.samples = parse(key, v)?,
            "eval.sweep_points" => self.eval.sweep_points = parse(key, v)?,
            "eval.seed" => self.eval.seed = parse(key, v)?,
            "sample.count" => self.sample.count = parse(key, v)?,
            "sample.model" => self.sample.model = parse(key, v)?,
            "sample.label" => {
                self.sample.label = match v {
                    "none" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "sample.seed" => self.sample.seed = parse(key, v)?,
            "paths.workdir" => self.workdir = PathBuf::from(v),
            "threads" => self.threads = parse(key, v)?,
            _ => return Err(CliError::key(key, "unknown key")),
        }
        Ok(())
    }

    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (d, t, p, k, th, e, s) = (&self.data, &self.teacher, &self.pairs, &self.kdm, &self.theory, &self.eval, &self.sample);
        vec![
            ("data.grid", d.grid.to_string()),
            ("data.extent", d.extent.to_string()),
            ("teacher.kind", t.kind.to_string()),
            ("teacher.sigma_max", t.sigma_max.to_string()),
            ("teacher.sigma_min", t.sigma_min.to_string()),
            ("teacher.rho", t.rho.to_string()),
            ("teacher.iterations", t.iterations.to_string()),
            ("teacher.batch", t.batch.to_string()),
            ("teacher.lr", t.lr.to_string()),
            ("teacher.hidden", list(&t.hidden)),
            ("teacher.precondition", t.precondition.to_string()),
            ("teacher.conditional", t.conditional.to_string()),
            ("teacher.seed", t.seed.to_string()),
            ("pairs.n", p.n.to_string()),
            ("pairs.nfe", p.nfe.to_string()),
            ("pairs.seed", p.seed.to_string()),
            ("pairs.conditional", p.conditional.to_string()),
            ("kdm.iterations", k.iterations.to_string()),
            ("kdm.batch", k.batch.to_string()),
            ("kdm.lr", k.lr.to_string()),
            ("kdm.lambda_adv", k.lambda_adv.to_string()),
            ("kdm.noise_std", k.noise_std.to_string()),
            ("kdm.latent_dim", k.latent_dim.to_string()),
            ("kdm.conditional", k.conditional.to_string()),
            ("kdm.operator", k.operator.to_string()),
            ("kdm.rec", k.rec.to_string()),
            ("kdm.lat", k.lat.to_string()),
            ("kdm.pred", k.pred.to_string()),
            ("kdm.adv", k.adv.to_string()),
            ("kdm.rec_noise_free", k.rec_noise_free.to_string()),
            ("kdm.hidden", list(&k.hidden)),
            ("kdm.disc_hidden", list(&k.disc_hidden)),
            ("kdm.seed", k.seed.to_string()),
            ("theory.degrees", list(&th.degrees)),
            ("theory.samples", th.samples.to_string()),
            ("theory.ridge", th.ridge.to_string()),
            ("theory.radius", th.radius.to_string()),
            ("theory.calibration_pairs", th.calibration_pairs.to_string()),
            ("theory.eval_pairs", th.eval_pairs.to_string()),
            ("theory.seed", th.seed.to_string()),
            ("eval.k", e.k.to_string()),
            ("eval.eps", e.eps.to_string()),
            ("eval.min_pts", e.min_pts.to_string()),
            ("eval.sigmas", list(&e.sigmas)),
            ("eval.samples", e.samples.to_string()),
            ("eval.sweep_points", e.sweep_points.to_string()),
            ("eval.seed", e.seed.to_string()),
            ("sample.count", s.count.to_string()),
            ("sample.model", s.model.to_string()),
            ("sample.label", s.label.map_or("none".to_string(), |l| l.to_string())),
            ("sample.seed", s.seed.to_string()),
            ("paths.workdir", self.workdir.display().to_string()),
            ("threads", self.threads.to_string()),
        ]
    }

    /// The effective configuration as parseable text.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Key-specific checks that do not need the core types.
    pub fn validate(&self) -> CliResult<()> {
        let fail = |key: &str, msg: &str| Err(CliError::key(key, msg));
        if self.threads == 0 {
            return fail("threads", "must be >= 1");
        }
        if self.data.grid < 2 || self.data.grid % 2 == 1 {
            return fail("data.grid", "must be even and >= 2");
        }
        if !(self.data.extent > 0.0) {
            return fail("data.extent", "must be positive");
        }
        if !(self.teacher.sigma_min > 0.0 && self.teacher.sigma_min < self.teacher.sigma_max) {
            return fail("teacher.sigma_min", "must satisfy 0 < sigma_min < sigma_max");
        }
        if !(self.teacher.rho > 0.0) {
            return fail("teacher.rho", "must be positive");
        }
        if self.teacher.batch == 0 {
            return fail("teacher.batch", "must be >= 1");
        }
        if !(self.teacher.lr > 0.0) {
            return fail("teacher.lr", "must be positive");
        }
        if self.teacher.hidden.is_empty() || self.teacher.hidden.contains(&0) {
            return fail("teacher.hidden", "needs at least one positive width");
        }
        if self.pairs.nfe == 0 {
            return fail("pairs.nfe", "must be >= 1");
        }
        if self.kdm.conditional && !self.pairs.conditional {
            return fail("kdm.conditional", "needs pairs.conditional=true");
        }
        if self.kdm.batch == 0 {
            return fail("kdm.batch", "must be >= 1");
        }
        if !(self.kdm.lr > 0.0) {
            return fail("kdm.lr", "must be positive");
        }
        if !(self.kdm.lambda_adv >= 0.0) {
            return fail("kdm.lambda_adv", "must be >= 0");
        }
        if !(self.kdm.noise_std >= 0.0) {
            return fail("kdm.noise_std", "must be >= 0");
        }
        if self.kdm.latent_dim == 0 {
            return fail("kdm.latent_dim", "must be >= 1");
        }
        if self.theory.degrees.is_empty() {
            return fail("theory.degrees", "needs at least one degree");
        }
        if !(self.theory.radius > 0.0) {
            return fail("theory.radius", "must be positive");
        }
        if !(self.eval.eps > 0.0) {
            return fail("eval.eps", "must be positive");
        }
        if self.eval.min_pts == 0 {
            return fail("eval.min_pts", "must be >= 1");
        }
        if self.eval.k == 0 {
            return fail("eval.k", "must be >= 1");
        }
        if self.eval.sigmas.is_empty() {
            return fail("eval.sigmas", "needs at least one value");
        }
        if self.eval.samples < 2 {
            return fail("eval.samples", "must be >= 2");
        }
        if let Some(l) = self.sample.label {
            if l >= self.spec().num_cells() {
                return fail("sample.label", "out of range for the grid");
            }
        }
        Ok(())
    }

    /// Applies the workdir environment override.
    pub fn with_env(mut self) -> Self {
        if let Some(dir) = std::env::var_os(WORKDIR_ENV).filter(|d| !d.is_empty()) {
            self.workdir = PathBuf::from(dir);
        }
        self
    }

    pub fn policy(&self) -> ExecPolicy {
        ExecPolicy::from_threads(self.threads)
    }

    pub fn spec(&self) -> CheckerboardSpec {
        CheckerboardSpec {
            grid: self.data.grid,
            extent: self.data.extent,
        }
    }

    pub fn teacher_config(&self) -> TeacherConfig {
        let t = &self.teacher;
        TeacherConfig {
            kind: t.kind,
            iterations: t.iterations,
            batch: t.batch,
            lr: t.lr,
            hidden: t.hidden.clone(),
            sigma: SigmaParams {
                sigma_min: t.sigma_min,
                sigma_max: t.sigma_max,
                rho: t.rho,
            },
            conditional: t.conditional,
            precondition: t.precondition,
            policy: self.policy(),
        }
    }

    pub fn kdm_config(&self) -> KdmTrainConfig {
        let k = &self.kdm;
        KdmTrainConfig {
            iterations: k.iterations,
            batch: k.batch,
            lr: k.lr,
            lambda_adv: k.lambda_adv,
            noise_std: k.noise_std,
            latent_dim: k.latent_dim,
            conditional: k.conditional,
            operator: k.operator,
            toggles: LossToggles {
                rec: k.rec,
                lat: k.lat,
                pred: k.pred,
                adv: k.adv,
                rec_noise_free: k.rec_noise_free,
            },
            seed: k.seed,
            hidden: k.hidden.clone(),
            disc_hidden: k.disc_hidden.clone(),
            policy: self.policy(),
        }
    }

    pub fn edmd_config(&self, sample_std: f64) -> EdmdConfig {
        EdmdConfig {
            samples: self.theory.samples,
            ridge: self.theory.ridge,
            sample_std,
            ..EdmdConfig::default()
        }
    }

    pub fn proximity_config(&self, prior_std: f64) -> ProximityConfig {
        ProximityConfig {
            calibration_pairs: self.theory.calibration_pairs,
            eval_pairs: self.theory.eval_pairs,
            radius: self.theory.radius,
            prior_std,
            edmd: self.edmd_config(prior_std),
            ..ProximityConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_listed_key_is_settable() {
        let cfg = RunConfig::default();
        for (key, value) in cfg.entries() {
            let mut c = RunConfig::default();
            c.set(key, &value).unwrap_or_else(|e| panic!("{key}: {e}"));
            assert_eq!(c, cfg, "{key}");
        }
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = RunConfig::parse("# comment\n\nteacher.lr = 0.001  # inline\nkdm.hidden=32,32\nsample.label=3\n").unwrap();
        assert_eq!(cfg.teacher.lr, 0.001);
        assert_eq!(cfg.kdm.hidden, vec![32, 32]);
        assert_eq!(cfg.sample.label, Some(3));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn unknown_repeated_and_malformed_keys() {
        let e = RunConfig::parse("teacher.lrr=1").unwrap_err();
        assert!(e.to_string().contains("teacher.lrr") && e.code() == "config");
        assert!(RunConfig::parse("pairs.n=1\npairs.n=2").is_err());
        assert!(RunConfig::parse("pairs.n").is_err());
        let e = RunConfig::parse("pairs.n=many").unwrap_err();
        assert!(e.to_string().starts_with("config key pairs.n"));
        let e = RunConfig::parse("kdm.operator=sparse").unwrap_err();
        assert!(e.to_string().contains("kdm.operator"));
    }

    #[test]
    fn cross_key_validation() {
        let e = RunConfig::parse("data.grid=3").unwrap_err();
        assert!(e.to_string().contains("data.grid"));
        assert!(RunConfig::parse("kdm.conditional=true").is_err());
        assert!(RunConfig::parse("teacher.conditional=true\npairs.conditional=true\nkdm.conditional=true").is_ok());
        assert!(RunConfig::parse("sample.label=8").is_err());
        assert!(RunConfig::parse("kdm.operator=factorized\nkdm.latent_dim=7").is_ok());
    }

    #[test]
    fn core_configs_match_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.teacher_config(), TeacherConfig::default());
        assert_eq!(
            cfg.kdm_config(),
            KdmTrainConfig {
                seed: 2,
                ..KdmTrainConfig::default()
            }
        );
        assert_eq!(cfg.spec(), CheckerboardSpec::default());
    }
}
