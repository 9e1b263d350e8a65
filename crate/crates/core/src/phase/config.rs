//! Flat JSON experiment configuration.
//!
//! Cone strings may use the placeholders `{m}`, `{n}`, `{l}` and `{v}`,
//! which are replaced per grid point by the current dimensions and the
//! control value.

use serde::{Deserialize, Serialize};

use crate::cone::{parse_cone, parse_vector, ConeSpec, ParseContext};
use crate::error::{ConeError, Result};
use crate::intersect::DetectorOptions;
use crate::solver::SolverOptions;
use crate::stats::stat_dim_closed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Kinematic,
    Preimage,
    Escape,
    Logistic,
    Cp,
    LocalDm,
    DmConcentration,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Kinematic,
        Experiment::Preimage,
        Experiment::Escape,
        Experiment::Logistic,
        Experiment::Cp,
        Experiment::LocalDm,
        Experiment::DmConcentration,
    ];

    /// Name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            Experiment::Kinematic => "kinematic",
            Experiment::Preimage => "preimage",
            Experiment::Escape => "escape",
            Experiment::Logistic => "logistic",
            Experiment::Cp => "cp",
            Experiment::LocalDm => "local-dm",
            Experiment::DmConcentration => "support-conc",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Experiment> {
        Self::ALL.into_iter().find(|e| e.cli_name() == name)
    }

    /// Whether the experiment sweeps a grid of control values.
    pub fn is_grid(self) -> bool {
        !matches!(self, Experiment::LocalDm | Experiment::DmConcentration)
    }

    fn axes(self) -> &'static [Axis] {
        match self {
            Experiment::Kinematic | Experiment::Preimage => &[Axis::L, Axis::M],
            Experiment::Escape => &[Axis::L],
            Experiment::Logistic | Experiment::Cp => &[Axis::M],
            Experiment::LocalDm | Experiment::DmConcentration => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    L,
    M,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BMode {
    Zero,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(rename = "cone_K")]
    pub cone_k: String,
    #[serde(rename = "cone_L", default, skip_serializing_if = "Option::is_none")]
    pub cone_l: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default)]
    pub grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_spec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_mode: Option<BMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tol: Option<f64>,
}

/// Defaults for optional fields, in one place.
pub mod defaults {
    pub const EPSILON: f64 = 0.2;
    pub const K: usize = 1;
    pub const TAU: f64 = 0.25;
    pub const DIRECTIONS: usize = 50;
    pub const SLACK: f64 = 2.0;
    pub const X_SPEC: &str = "e1";
    pub const MIN_TRIALS: usize = 20;
}

/// Dimensions in effect at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub m: usize,
    pub n: usize,
    pub l: usize,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConeError {
    ConeError::invalid(field, reason)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ConeError::parse("config", e.to_string()))
    }

    /// Copy with every default filled in; this is what gets echoed and hashed.
    pub fn resolved(&self) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        let s = SolverOptions::default();
        let d = DetectorOptions::default();
        if c.experiment.is_grid() && c.axis.is_none() {
            c.axis = Some(match c.experiment {
                Experiment::Preimage | Experiment::Logistic | Experiment::Cp => Axis::M,
                _ => Axis::L,
            });
        }
        match c.experiment {
            Experiment::Kinematic if c.cone_l.is_none() => c.cone_l = Some("subspace:{m}:{l}".into()),
            Experiment::Preimage if c.cone_l.is_none() => c.cone_l = Some("trivial:{m}".into()),
            Experiment::Cp => {
                c.x_spec.get_or_insert_with(|| defaults::X_SPEC.into());
                c.b_mode.get_or_insert(BMode::Zero);
            }
            Experiment::LocalDm => {
                c.epsilon.get_or_insert(defaults::EPSILON);
                c.k.get_or_insert(defaults::K);
                c.tau.get_or_insert(defaults::TAU);
                c.directions.get_or_insert(defaults::DIRECTIONS);
            }
            Experiment::DmConcentration => {
                c.slack.get_or_insert(defaults::SLACK);
            }
            _ => {}
        }
        c.max_iters.get_or_insert(s.max_iters);
        c.tol.get_or_insert(s.tol);
        c.kkt_tol.get_or_insert(s.kkt_tol);
        c.dist_tol.get_or_insert(s.dist_tol);
        c.step.get_or_insert(s.step);
        c.starts.get_or_insert(d.starts);
        c.detector_iters.get_or_insert(d.max_iters);
        c.rho_tol.get_or_insert(d.rho_tol);
        c.validate()?;
        Ok(c)
    }

    pub fn solver_options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            tol: self.tol.unwrap_or(d.tol),
            kkt_tol: self.kkt_tol.unwrap_or(d.kkt_tol),
            dist_tol: self.dist_tol.unwrap_or(d.dist_tol),
            step: self.step.unwrap_or(d.step),
            ..d
        }
    }

    pub fn detector_options(&self) -> DetectorOptions {
        let d = DetectorOptions::default();
        DetectorOptions {
            starts: self.starts.unwrap_or(d.starts),
            max_iters: self.detector_iters.unwrap_or(d.max_iters),
            rho_tol: self.rho_tol.unwrap_or(d.rho_tol),
            dist_tol: self.dist_tol.unwrap_or(d.dist_tol),
            ..d
        }
    }

    /// SHA-256 of the resolved config's JSON form, as lowercase hex.
    pub fn hash(&self) -> Result<String> {
        Ok(super::grid::sha256_hex(&self.resolved()?.to_json()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Dimensions at control value `v`.
    pub fn dims_at(&self, v: f64) -> Dims {
        let mut d = Dims {
            m: self.m.unwrap_or(0),
            n: self.n.unwrap_or(0),
            l: self.l.unwrap_or(0),
        };
        match self.axis {
            Some(Axis::L) => d.l = v as usize,
            Some(Axis::M) => d.m = v as usize,
            None => {}
        }
        d
    }

    /// Cone string with placeholders substituted.
    pub fn substitute(spec: &str, dims: Dims, v: f64) -> String {
        spec.replace("{m}", &dims.m.to_string())
            .replace("{n}", &dims.n.to_string())
            .replace("{l}", &dims.l.to_string())
            .replace("{v}", &v.to_string())
    }

    pub fn cone_k_at(&self, dims: Dims, v: f64, ctx: &mut ParseContext) -> Result<ConeSpec> {
        parse_cone(&Self::substitute(&self.cone_k, dims, v), ctx)
    }

    pub fn cone_l_at(&self, dims: Dims, v: f64, ctx: &mut ParseContext) -> Result<Option<ConeSpec>> {
        self.cone_l
            .as_deref()
            .map(|s| parse_cone(&Self::substitute(s, dims, v), ctx))
            .transpose()
    }

    fn control_values(&self) -> Vec<f64> {
        if self.experiment.is_grid() {
            self.grid.clone()
        } else {
            vec![0.0]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.experiment;
        if self.trials < defaults::MIN_TRIALS {
            return Err(invalid("trials", format!("must be at least {}", defaults::MIN_TRIALS)));
        }
        self.solver_options().validate()?;
        self.detector_options().validate()?;
        let n = self.n.ok_or_else(|| invalid("n", "ambient dimension of cone_K is required"))?;
        if n == 0 {
            return Err(invalid("n", "must be positive"));
        }
        if e.is_grid() {
            let axis = self.axis.ok_or_else(|| invalid("axis", "a grid axis is required"))?;
            if !e.axes().contains(&axis) {
                return Err(invalid("axis", format!("axis {axis:?} is not available for this experiment")));
            }
            if self.grid.is_empty() {
                return Err(invalid("grid", "at least one control value is required"));
            }
            if self.grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("grid", "values must be strictly increasing"));
            }
            if self.grid.iter().any(|v| !(v.fract() == 0.0 && *v >= 0.0 && *v < 1e9)) {
                return Err(invalid("grid", "dimension axes take nonnegative integers"));
            }
        } else if !self.grid.is_empty() {
            return Err(invalid("grid", "this experiment has no grid"));
        }
        let uses_l = matches!(e, Experiment::Kinematic | Experiment::Preimage);
        if self.cone_l.is_some() && !uses_l {
            return Err(invalid("cone_L", "not used by this experiment"));
        }
        if (self.x_spec.is_some() || self.b_mode.is_some()) && e != Experiment::Cp {
            return Err(invalid("x_spec", "x_spec and b_mode apply to the cp experiment only"));
        }
        let dm_fields = self.epsilon.is_some() || self.k.is_some() || self.tau.is_some() || self.directions.is_some();
        if dm_fields && e != Experiment::LocalDm {
            return Err(invalid("epsilon", "epsilon, k, tau and directions apply to local_dm only"));
        }
        if self.slack.is_some() && e != Experiment::DmConcentration {
            return Err(invalid("slack", "applies to dm_concentration only"));
        }
        for v in self.control_values() {
            let dims = self.dims_at(v);
            self.validate_point(dims, v, n)?;
        }
        Ok(())
    }

    fn validate_point(&self, dims: Dims, v: f64, n: usize) -> Result<()> {
        let e = self.experiment;
        let mut ctx = ParseContext::new(self.seed, 0);
        let k = self.cone_k_at(dims, v, &mut ctx)?;
        if k.ambient_dim() != n {
            return Err(invalid("cone_K", format!("ambient dimension {} differs from n = {n}", k.ambient_dim())));
        }
        let needs_m = !matches!(e, Experiment::Escape);
        if needs_m && dims.m == 0 {
            return Err(invalid("m", "must be positive"));
        }
        if let Some(l) = self.cone_l_at(dims, v, &mut ctx)? {
            if l.ambient_dim() != dims.m {
                return Err(invalid("cone_L", format!("ambient dimension {} differs from m = {}", l.ambient_dim(), dims.m)));
            }
        }
        match e {
            Experiment::Escape => {
                if dims.l == 0 || dims.l > n {
                    return Err(invalid("l", format!("{} is outside 1..={n}", dims.l)));
                }
            }
            Experiment::Kinematic | Experiment::Preimage => {
                if self.axis == Some(Axis::L) && dims.l > dims.m {
                    return Err(invalid("l", format!("{} exceeds m = {}", dims.l, dims.m)));
                }
            }
            Experiment::Cp => {
                let x = parse_vector(self.x_spec.as_deref().unwrap_or(defaults::X_SPEC), n)?;
                if x.norm() == 0.0 {
                    return Err(invalid("x_spec", "objective direction must be nonzero"));
                }
            }
            Experiment::LocalDm | Experiment::DmConcentration => self.validate_dm(&k, dims)?,
            Experiment::Logistic => {}
        }
        Ok(())
    }

    fn validate_dm(&self, k: &ConeSpec, dims: Dims) -> Result<()> {
        let l = self.l.ok_or_else(|| invalid("l", "required"))?;
        if l == 0 || l > dims.m {
            return Err(invalid("l", format!("{l} is outside 1..={}", dims.m)));
        }
        if self.experiment == Experiment::DmConcentration {
            if let Some(s) = self.slack {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(invalid("slack", "must be positive"));
                }
            }
            return Ok(());
        }
        let eps = self.epsilon.unwrap_or(defaults::EPSILON);
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("epsilon", "must lie in (0, 1)"));
        }
        let kk = self.k.unwrap_or(defaults::K);
        if kk == 0 || kk > l {
            return Err(invalid("k", format!("{kk} is outside 1..=l ({l})")));
        }
        if self.directions == Some(0) {
            return Err(invalid("directions", "must be positive"));
        }
        let tau = self.tau.unwrap_or(defaults::TAU);
        if !(tau > 0.0 && tau < 0.5) {
            return Err(invalid("tau", "must lie in (0, 1/2)"));
        }
        if let Some(delta) = stat_dim_closed(k) {
            if (dims.m - l) as f64 > (1.0 - tau) * delta {
                return Err(invalid(
                    "tau",
                    format!(
                        "m - l = {} exceeds (1 - tau) delta(K) = {:.3}; the local DM regime needs m - l <= (1 - tau) delta(K)",
                        dims.m - l,
                        (1.0 - tau) * delta
                    ),
                ));
            }
        }
        Ok(())
    }
}
