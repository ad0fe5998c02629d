//! Experiment configuration, read from JSON.
//!
//! Only `kind` is required; every other field falls back to a desk-scale
//! default for that kind.
//!
//! ```json
//! { "kind": "separation-scaling", "d0": [4, 6], "n": [32, 64, 128], "trials": 100, "seed": 7 }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ntk_eigen_core::bounds::BoundConstants;
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ShallowVerify,
    DeepVerify,
    KernelConvergence,
    SeparationScaling,
    FunkHeckeAudit,
    GramGuarantee,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::ShallowVerify,
        ExperimentKind::DeepVerify,
        ExperimentKind::KernelConvergence,
        ExperimentKind::SeparationScaling,
        ExperimentKind::FunkHeckeAudit,
        ExperimentKind::GramGuarantee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ShallowVerify => "shallow-verify",
            ExperimentKind::DeepVerify => "deep-verify",
            ExperimentKind::KernelConvergence => "kernel-convergence",
            ExperimentKind::SeparationScaling => "separation-scaling",
            ExperimentKind::FunkHeckeAudit => "funk-hecke-audit",
            ExperimentKind::GramGuarantee => "gram-guarantee",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: Vec<usize>,
    pub d0: Vec<usize>,
    /// Hidden widths. Deep runs use each entry as `d1, …, d_{L−1}`;
    /// kernel-convergence uses the first element of each entry as `d1`.
    pub widths: Vec<Vec<usize>>,
    /// Depths `L` for deep runs without explicit `widths`; widths then come
    /// from the deep width requirement.
    pub depth: Vec<usize>,
    /// Separation targets. Gram-guarantee datasets are resampled until
    /// `δ ≥ target`; empty means "use each dataset's own δ".
    pub delta: Vec<f64>,
    pub trials: usize,
    pub eps: f64,
    pub seed: u64,
    pub constants: BoundConstants,
    pub mc_samples: usize,
    /// Cap on computed widths; `None` runs at the full requirement.
    pub max_width: Option<u64>,
    pub r_max: usize,
    pub output: OutputPaths,
}

/// Wire form: everything but `kind` optional.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: ExperimentKind,
    n: Option<Vec<usize>>,
    d0: Option<Vec<usize>>,
    widths: Option<Vec<Vec<usize>>>,
    depth: Option<Vec<usize>>,
    delta: Option<Vec<f64>>,
    trials: Option<usize>,
    eps: Option<f64>,
    seed: Option<u64>,
    constants: Option<BoundConstants>,
    mc_samples: Option<usize>,
    #[serde(default, with = "double_option")]
    max_width: Option<Option<u64>>,
    r_max: Option<usize>,
    output: Option<OutputPaths>,
}

mod double_option {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
        Option::<T>::deserialize(d).map(Some)
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults: each finishes in well under ten minutes on one core.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            n: vec![8],
            d0: vec![3],
            widths: Vec::new(),
            depth: Vec::new(),
            delta: Vec::new(),
            trials: 50,
            eps: 0.1,
            seed: 0,
            constants: BoundConstants::default(),
            mc_samples: 100_000,
            max_width: Some(8192),
            r_max: 30,
            output: OutputPaths::default(),
        };
        match kind {
            ExperimentKind::ShallowVerify => base,
            ExperimentKind::DeepVerify => ExperimentConfig { n: vec![6], widths: vec![vec![256, 256], vec![512, 256, 128]], ..base },
            ExperimentKind::KernelConvergence => ExperimentConfig {
                n: vec![4],
                d0: vec![3, 5],
                widths: vec![vec![128], vec![512], vec![2048], vec![8192]],
                trials: 24,
                ..base
            },
            ExperimentKind::SeparationScaling => ExperimentConfig {
                n: vec![32, 64, 128, 256, 512, 1024],
                d0: vec![5],
                trials: 200,
                ..base
            },
            ExperimentKind::FunkHeckeAudit => ExperimentConfig { n: Vec::new(), d0: (3..=12).collect(), trials: 1, ..base },
            ExperimentKind::GramGuarantee => ExperimentConfig { n: vec![4, 8, 16], d0: vec![3, 4, 5], trials: 12, ..base },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let d = Self::defaults(raw.kind);
        let cfg = ExperimentConfig {
            kind: raw.kind,
            n: raw.n.unwrap_or(d.n),
            d0: raw.d0.unwrap_or(d.d0),
            widths: raw.widths.unwrap_or(d.widths),
            depth: raw.depth.unwrap_or(d.depth),
            delta: raw.delta.unwrap_or(d.delta),
            trials: raw.trials.unwrap_or(d.trials),
            eps: raw.eps.unwrap_or(d.eps),
            seed: raw.seed.unwrap_or(d.seed),
            constants: raw.constants.unwrap_or(d.constants),
            mc_samples: raw.mc_samples.unwrap_or(d.mc_samples),
            max_width: raw.max_width.unwrap_or(d.max_width),
            r_max: raw.r_max.unwrap_or(d.r_max),
            output: raw.output.unwrap_or(d.output),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if self.d0.is_empty() {
            return bad("d0 grid is empty".into());
        }
        let min_dim = if self.kind == ExperimentKind::SeparationScaling { 2 } else { 3 };
        if let Some(&d) = self.d0.iter().find(|&&d| d < min_dim) {
            return bad(format!("d0 = {d} is below {min_dim}"));
        }
        let needs_n = self.kind != ExperimentKind::FunkHeckeAudit;
        if needs_n && self.n.is_empty() {
            return bad("n grid is empty".into());
        }
        if needs_n && self.n.iter().any(|&n| n < 2) {
            return bad("every n must be at least 2".into());
        }
        match self.kind {
            ExperimentKind::DeepVerify if self.widths.is_empty() && self.depth.is_empty() => {
                return bad("deep-verify needs a widths or depth grid".into());
            }
            ExperimentKind::KernelConvergence if self.widths.len() < 2 => {
                return bad("kernel-convergence needs at least two widths".into());
            }
            ExperimentKind::SeparationScaling if self.n.len() < 2 => {
                return bad("separation-scaling needs at least two values of n".into());
            }
            _ => {}
        }
        if self.widths.iter().any(|w| w.is_empty() || w.contains(&0)) {
            return bad("every widths entry must be non-empty with positive widths".into());
        }
        if self.depth.iter().any(|&l| l < 2) {
            return bad("every depth must be at least 2".into());
        }
        if self.delta.iter().any(|&t| !(t > 0.0 && t < std::f64::consts::SQRT_2)) {
            return bad("separation targets must lie in (0, √2)".into());
        }
        if self.kind == ExperimentKind::KernelConvergence && self.mc_samples == 0 {
            return bad("mc_samples must be positive".into());
        }
        if self.max_width == Some(0) {
            return bad("max_width must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for kind in ExperimentKind::ALL {
            ExperimentConfig::defaults(kind).validate().unwrap();
            assert_eq!(kind.name().parse::<ExperimentKind>().unwrap(), kind);
        }
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"kind":"separation-scaling","d0":[4],"seed":9,"max_width":null}"#).unwrap();
        assert_eq!(cfg.d0, vec![4]);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.trials, 200);
        assert_eq!(cfg.max_width, None);
    }

    #[test]
    fn invalid_configs_rejected() {
        for text in [
            r#"{"kind":"shallow-verify","n":[]}"#,
            r#"{"kind":"shallow-verify","trials":0}"#,
            r#"{"kind":"shallow-verify","eps":1.0}"#,
            r#"{"kind":"gram-guarantee","delta":[2.0]}"#,
            r#"{"kind":"nope"}"#,
            r#"{"kind":"shallow-verify","typo":1}"#,
        ] {
            assert!(matches!(ExperimentConfig::from_json(text), Err(HarnessError::Config(_))), "{text}");
        }
    }
}
