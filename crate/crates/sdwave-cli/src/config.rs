// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration files.
//!
//! A configuration is a TOML file with a flat top level for the problem
//! size and two required tables, `[initial_data]` and `[control]`. The
//! optional tables `[samples]` and `[tolerances]` override individual
//! defaults. Unknown keys are rejected so that typos do not silently fall
//! back to defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use sdwave_core::{ControlRecipe, StateRecipe, SuiteConfig};

/// Built-in configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Smooth states and trigonometric controls.
    Smooth,
    /// Smooth histories with a non-decaying forcing seed.
    Rough,
    /// Zero states and zero controls.
    Zero,
}

impl Preset {
    /// TOML text of the preset.
    pub fn text(self) -> &'static str {
        match self {
            Self::Smooth => include_str!("../presets/smooth.toml"),
            Self::Rough => include_str!("../presets/rough.toml"),
            Self::Zero => include_str!("../presets/zero.toml"),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Smooth => "smooth",
            Self::Rough => "rough",
            Self::Zero => "zero",
        }
    }
}

/// Parsed experiment configuration.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form name recorded in the summaries.
    pub scenario: String,
    /// Number of retained modes.
    pub n_modes: usize,
    /// Horizon `T`.
    pub t_final: f64,
    /// Panels on `[0, T]`.
    pub n_steps: usize,
    /// Start node as a fraction of the grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_fraction: Option<f64>,
    /// Seed of all random draws.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Factor applied to every absolute threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_scale: Option<f64>,
    /// Output directory, relative to the working directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Initial states.
    pub initial_data: InitialData,
    /// Test controls.
    pub control: ControlFamily,
    /// Draw counts.
    #[serde(default)]
    pub samples: Samples,
    /// Threshold overrides.
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
}

/// `[initial_data]` table.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "preset", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialData {
    /// Seeded smooth states.
    Smooth,
    /// Seeded states with a rough forcing seed.
    Rough,
    /// The zero state.
    Zero,
    /// Explicit modal coefficients: history `a + b sin(2r)`, seed `c`.
    Profile {
        /// Constant part of the history.
        a: Vec<f64>,
        /// Oscillating part of the history.
        b: Vec<f64>,
        /// Forcing seed.
        c: Vec<f64>,
    },
}

/// `[control]` table.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControlFamily {
    /// Random `a + b sin(ω(t-t₀)) + c cos(ω(t-t₀))`.
    Trigonometric {
        /// Angular frequency.
        omega: f64,
    },
    /// Random `a sin(ω(t-t₀)) + b(1 - cos(ω(t-t₀)))`.
    Vanishing {
        /// Angular frequency.
        omega: f64,
    },
    /// Random polynomial in `t - t₀`.
    Polynomial {
        /// Polynomial degree.
        degree: usize,
    },
    /// `u ≡ 0`.
    Zero,
}

/// `[samples]` table.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Samples {
    /// States in the state-based suites.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_states: Option<usize>,
    /// Draws in the forward suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_forward: Option<usize>,
    /// Perturbation directions per state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_perturbations: Option<usize>,
    /// Non-optimal controls in the dissipation suite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_dissipation_controls: Option<usize>,
}

/// `[tolerances]` table; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forward_two_route: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wave: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control_two_route: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bellman: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_loop: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linearity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feedback_initial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dissipation_band: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dissipation_sign: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub riccati: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order_band: Option<[f64; 2]>,
}

impl ExperimentConfig {
    /// Parses configuration text; `origin` names the source in messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid configuration {origin}:\n{e}"))
    }

    /// Reads and parses a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read configuration {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses a built-in preset.
    pub fn preset(preset: Preset) -> Result<Self> {
        Self::parse(preset.text(), &format!("preset `{}`", preset.label()))
    }

    /// Converts to the suite configuration and validates it.
    pub fn to_suite_config(&self) -> Result<SuiteConfig> {
        if self.scenario.trim().is_empty() {
            bail!("invalid configuration: `scenario` must not be empty");
        }
        let mut c = SuiteConfig {
            n_modes: self.n_modes,
            t_final: self.t_final,
            n_steps: self.n_steps,
            ..SuiteConfig::default()
        };
        if let Some(x) = self.start_fraction {
            c.start_fraction = x;
        }
        if let Some(x) = self.seed {
            c.seed = x;
        }
        if let Some(x) = self.tol_scale {
            c.tol_scale = x;
        }
        c.states = match &self.initial_data {
            InitialData::Smooth => StateRecipe::Smooth,
            InitialData::Rough => StateRecipe::Rough,
            InitialData::Zero => StateRecipe::Zero,
            InitialData::Profile { a, b, c } => StateRecipe::Profile {
                a: a.clone(),
                b: b.clone(),
                c: c.clone(),
            },
        };
        c.controls = match self.control {
            ControlFamily::Trigonometric { omega } => ControlRecipe::Trigonometric { omega },
            ControlFamily::Vanishing { omega } => ControlRecipe::Vanishing { omega },
            ControlFamily::Polynomial { degree } => ControlRecipe::Polynomial { degree },
            ControlFamily::Zero => ControlRecipe::Zero,
        };
        let s = &self.samples;
        for (slot, v) in [
            (&mut c.n_states, s.n_states),
            (&mut c.n_forward, s.n_forward),
            (&mut c.n_perturbations, s.n_perturbations),
            (&mut c.n_dissipation_controls, s.n_dissipation_controls),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        let o = &self.tolerances;
        let t = &mut c.tolerances;
        for (slot, v) in [
            (&mut t.kernel_oracle, o.kernel_oracle),
            (&mut t.series, o.series),
            (&mut t.forward_two_route, o.forward_two_route),
            (&mut t.wave, o.wave),
            (&mut t.gradient, o.gradient),
            (&mut t.descent, o.descent),
            (&mut t.value, o.value),
            (&mut t.control_two_route, o.control_two_route),
            (&mut t.bellman, o.bellman),
            (&mut t.closed_loop, o.closed_loop),
            (&mut t.linearity, o.linearity),
            (&mut t.feedback_initial, o.feedback_initial),
            (&mut t.dissipation_band, o.dissipation_band),
            (&mut t.dissipation_sign, o.dissipation_sign),
            (&mut t.riccati, o.riccati),
        ] {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some([lo, hi]) = o.order_band {
            t.order_band = (lo, hi);
        }
        c.validate().context("invalid configuration")?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for p in [Preset::Smooth, Preset::Rough, Preset::Zero] {
            let cfg = ExperimentConfig::preset(p).unwrap();
            cfg.to_suite_config().unwrap();
        }
        let smooth = ExperimentConfig::preset(Preset::Smooth).unwrap().to_suite_config().unwrap();
        assert_eq!(smooth, SuiteConfig::default());
    }

    #[test]
    fn overrides_are_applied() {
        let text = format!(
            "{}\n[samples]\nn_states = 2\n\n[tolerances]\nriccati = 1e-2\norder_band = [3.0, 5.0]\n",
            Preset::Smooth.text()
        );
        let c = ExperimentConfig::parse(&text, "test").unwrap().to_suite_config().unwrap();
        assert_eq!(c.n_states, 2);
        assert_eq!(c.tolerances.riccati, 1e-2);
        assert_eq!(c.tolerances.order_band, (3.0, 5.0));
    }

    #[test]
    fn parse_errors_carry_line_context() {
        let text = Preset::Smooth.text().replace("n_steps = 256", "n_steps = \"many\"");
        let msg = ExperimentConfig::parse(&text, "test").unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
        assert!(msg.contains("n_steps"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{}\nn_stpes = 3\n", Preset::Smooth.text());
        assert!(ExperimentConfig::parse(&text, "test").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let text = Preset::Smooth.text().replace("n_steps = 256", "n_steps = 100");
        let cfg = ExperimentConfig::parse(&text, "test").unwrap();
        assert!(cfg.to_suite_config().is_err());
    }
}
