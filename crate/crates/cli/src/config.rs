//! The TOML run configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use essf::diagnostics::{bbm_preset, classical_preset, gf_embedding, GrowthFragmentationCell, S1Choice};
use essf::dislocation::{AtomConfig, CharacteristicsConfig};
use essf::levy_mark::DEFAULT_H_GRID;
use essf::stat_tests::MAX_EXCHANGEABILITY_LEVEL;
use essf::{Characteristics, Level};

use crate::CliError;

fn one() -> usize {
    1
}

fn default_h_grid() -> f64 {
    DEFAULT_H_GRID
}

fn default_thetas() -> Vec<f64> {
    vec![0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "one")]
    pub level: usize,
    pub horizon: f64,
    /// Defaults to `[horizon]`.
    #[serde(default)]
    pub query_times: Vec<f64>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default = "default_h_grid")]
    pub h_grid: f64,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    pub characteristics: CharacteristicsSection,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
    #[serde(default)]
    pub test: TestSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Explicit,
    Classical,
    Bbm,
    GrowthFragmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum S1Name {
    #[default]
    ExpLinear,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    #[serde(default)]
    pub drift: f64,
    #[serde(default)]
    pub beta: f64,
    /// `[rate, y]` pairs with `y < 0`.
    #[serde(default)]
    pub jumps: Vec<[f64; 2]>,
    #[serde(default)]
    pub killing: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsSection {
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub d: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub lambda: Vec<AtomConfig>,
    #[serde(default)]
    pub cell: Option<CellConfig>,
    #[serde(default)]
    pub s1: S1Name,
}

/// A finite level or `"infinite"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSpec {
    Finite(usize),
    Named(String),
}

impl LevelSpec {
    pub fn resolve(&self) -> Result<Level, CliError> {
        match self {
            LevelSpec::Finite(0) => Err(CliError::Validation("martingale level must be >= 1".into())),
            LevelSpec::Finite(n) => Ok(Level::Finite(*n)),
            LevelSpec::Named(s) if s == "infinite" => Ok(Level::Infinite),
            LevelSpec::Named(s) => Err(CliError::Validation(format!(
                "level {s:?} must be a positive integer or \"infinite\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    /// Defaults to the top-level `thetas`.
    #[serde(default)]
    pub thetas: Option<Vec<f64>>,
    /// Defaults to `[level]`.
    #[serde(default)]
    pub levels: Option<Vec<usize>>,
    /// Monte Carlo draws per θ for the `mc_*` columns; 0 leaves them empty.
    #[serde(default)]
    pub mc_samples: usize,
    /// Defaults to `level`.
    #[serde(default)]
    pub mc_level: Option<usize>,
    #[serde(default)]
    pub sign_interval: Option<[f64; 2]>,
    /// When nonempty, `martingale.csv` is written for every θ.
    #[serde(default)]
    pub martingale_times: Vec<f64>,
    /// Defaults to `level`.
    #[serde(default)]
    pub martingale_level: Option<LevelSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestName {
    SplitRate,
    Consistency,
    Exchangeability,
    Martingale,
}

impl TestName {
    pub const ALL: [TestName; 4] = [
        TestName::SplitRate,
        TestName::Consistency,
        TestName::Exchangeability,
        TestName::Martingale,
    ];
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSection {
    /// Defaults to every test; an empty list runs none.
    #[serde(default)]
    pub select: Option<Vec<TestName>>,
    /// Runs each test against its documented corruption instead.
    #[serde(default)]
    pub corrupt: bool,
    /// Defaults to the top-level `replicates`.
    #[serde(default)]
    pub replicates: Option<usize>,
    /// Larger level of the consistency test; defaults to `min(level + 2, 5)`.
    #[serde(default)]
    pub m: Option<usize>,
    /// Snapshot time of the consistency and exchangeability tests; defaults to 1.
    #[serde(default)]
    pub t: Option<f64>,
    /// Defaults to 0.
    #[serde(default)]
    pub theta: Option<f64>,
    /// Defaults to `[0.5, 1, 2]`.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    /// Defaults to `level`.
    #[serde(default)]
    pub martingale_level: Option<LevelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Validation(msg.into()))
}

impl CharacteristicsSection {
    pub fn build(&self) -> Result<Characteristics, CliError> {
        let v = |e: essf::EssfError| CliError::Validation(format!("characteristics: {e}"));
        let explicit = CharacteristicsConfig {
            alpha: self.alpha,
            c: self.c,
            d: self.d,
            beta: self.beta,
            lambda: self.lambda.clone(),
        };
        if self.preset != Preset::GrowthFragmentation && self.cell.is_some() {
            return invalid("characteristics: `cell` is only read by the growth_fragmentation preset");
        }
        match self.preset {
            Preset::Explicit => explicit.build().map_err(v),
            Preset::Classical => {
                if self.d != 0.0 || self.beta != 0.0 {
                    return invalid("characteristics: the classical preset derives d and has beta = 0");
                }
                classical_preset(&explicit.build_measure().map_err(v)?, self.c, self.alpha).map_err(v)
            }
            Preset::Bbm => {
                if self.c != 0.0 || self.beta != 0.0 || !self.lambda.is_empty() {
                    return invalid("characteristics: the bbm preset only reads d and alpha");
                }
                bbm_preset(self.d).with_alpha(self.alpha).map_err(v)
            }
            Preset::GrowthFragmentation => {
                if self.c != 0.0 || self.d != 0.0 || self.beta != 0.0 || !self.lambda.is_empty() {
                    return invalid("characteristics: the growth_fragmentation preset reads `cell`, `s1` and alpha");
                }
                let Some(cell) = &self.cell else {
                    return invalid("characteristics: the growth_fragmentation preset needs a `cell` table");
                };
                let cell = GrowthFragmentationCell {
                    alpha: self.alpha,
                    drift: cell.drift,
                    beta: cell.beta,
                    jumps: cell.jumps.iter().map(|j| (j[0], j[1])).collect(),
                    killing: cell.killing,
                };
                let s1 = match self.s1 {
                    S1Name::ExpLinear => S1Choice::ExpLinear,
                    S1Name::Gaussian => S1Choice::Gaussian,
                };
                gf_embedding(&cell, s1).map_err(v)
            }
        }
    }
}

impl RunConfig {
    /// Parses and validates a configuration.
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        let mut config: RunConfig =
            toml::from_str(s).map_err(|e| CliError::Validation(format!("config: {}", e.message())))?;
        if config.query_times.is_empty() {
            config.query_times = vec![config.horizon];
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.level == 0 {
            return invalid("level must be >= 1");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return invalid(format!("horizon {} must be finite and > 0", self.horizon));
        }
        if self.query_times.iter().any(|t| !(0.0..=self.horizon).contains(t)) {
            return invalid("query_times must lie in [0, horizon]");
        }
        if self.query_times.windows(2).any(|w| w[0] > w[1]) {
            return invalid("query_times must be sorted");
        }
        if self.replicates == 0 {
            return invalid("replicates must be >= 1");
        }
        if !(self.h_grid > 0.0 && self.h_grid.is_finite()) {
            return invalid(format!("h_grid {} must be finite and > 0", self.h_grid));
        }
        if self.thetas.iter().any(|t| !t.is_finite()) {
            return invalid("thetas must be finite");
        }
        self.characteristics.build()?;
        self.validate_diagnose()
    }

    /// Checks the parameters of the selected tests.
    pub fn validate_tests(&self) -> Result<(), CliError> {
        for name in self.selected_tests() {
            self.validate_test(name)?;
        }
        Ok(())
    }

    fn validate_diagnose(&self) -> Result<(), CliError> {
        let d = &self.diagnose;
        if d.levels.as_ref().is_some_and(|l| l.contains(&0)) {
            return invalid("diagnose.levels must be >= 1");
        }
        if d.mc_level == Some(0) {
            return invalid("diagnose.mc_level must be >= 1");
        }
        if let Some([lo, hi]) = d.sign_interval {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return invalid("diagnose.sign_interval must be a finite [lo, hi] with lo < hi");
            }
        }
        if d.martingale_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return invalid("diagnose.martingale_times must be finite and >= 0");
        }
        if let Some(l) = &d.martingale_level {
            l.resolve()?;
        }
        Ok(())
    }

    fn validate_test(&self, name: TestName) -> Result<(), CliError> {
        let n = self.level;
        if self.test_replicates() < 2 {
            return invalid("tests need at least two replicates");
        }
        match name {
            TestName::SplitRate => Ok(()),
            TestName::Consistency => {
                let m = self.consistency_m();
                if !(n < m && m <= 5) {
                    return invalid(format!("consistency needs level < m <= 5, got level {n}, m {m}"));
                }
                Ok(())
            }
            TestName::Exchangeability => {
                if n > MAX_EXCHANGEABILITY_LEVEL {
                    return invalid(format!(
                        "exchangeability needs level <= {MAX_EXCHANGEABILITY_LEVEL}, got {n}"
                    ));
                }
                Ok(())
            }
            TestName::Martingale => {
                if self.martingale_times().len() < 3 {
                    return invalid("the martingale test needs at least three times");
                }
                self.test_martingale_level()?;
                Ok(())
            }
        }
    }

    pub fn selected_tests(&self) -> Vec<TestName> {
        self.test.select.clone().unwrap_or_else(|| TestName::ALL.to_vec())
    }

    pub fn test_replicates(&self) -> usize {
        self.test.replicates.unwrap_or(self.replicates)
    }

    pub fn consistency_m(&self) -> usize {
        self.test.m.unwrap_or((self.level + 2).min(5))
    }

    pub fn snapshot_time(&self) -> f64 {
        self.test.t.unwrap_or(1.0)
    }

    pub fn martingale_times(&self) -> Vec<f64> {
        self.test.times.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0])
    }

    pub fn test_martingale_level(&self) -> Result<Level, CliError> {
        self.test
            .martingale_level
            .as_ref()
            .map_or(Ok(Level::Finite(self.level)), LevelSpec::resolve)
    }

    pub fn diagnose_martingale_level(&self) -> Result<Level, CliError> {
        self.diagnose
            .martingale_level
            .as_ref()
            .map_or(Ok(Level::Finite(self.level)), LevelSpec::resolve)
    }

    /// Hex SHA-256 of the configuration after overrides, ignoring where the
    /// output goes.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSection::default();
        let text = toml::to_string(&canonical).expect("configs serialize");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }
}
