//! Flat JSON configuration.

use std::path::Path;

use kecone_core::calabi::default_c_norm;
use kecone_core::nalgebra::DMatrix;
use kecone_core::{Complex64, PeriodData};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

fn default_tier2() -> f64 {
    1e-6
}
fn default_tier4() -> f64 {
    1e-3
}
fn default_s_min() -> f64 {
    -50.0
}
fn default_s_max() -> f64 {
    -1.5
}
fn default_c() -> f64 {
    -0.001
}
fn default_ode_s0() -> f64 {
    -10.0
}
fn default_ode_s_end() -> f64 {
    -100.0
}
fn default_ode_tol() -> f64 {
    1e-12
}
fn default_probe_epsilon() -> f64 {
    0.1
}
fn default_probe_theta() -> f64 {
    0.3
}
fn default_probe_s_min() -> f64 {
    -40.0
}
fn default_probe_s_max() -> f64 {
    -2.0
}
fn default_fiber_ks() -> Vec<f64> {
    vec![2.0, 8.0, 32.0, 128.0]
}

/// Sample counts per check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleCounts {
    pub bundle: usize,
    pub chern: usize,
    pub deck: usize,
    pub heisenberg: usize,
    pub einstein_ball: usize,
    pub einstein_calabi: usize,
    pub det_identity: usize,
    pub coincide: usize,
    pub quasi: usize,
    pub charts: usize,
    pub chart_points: usize,
    pub probe: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self {
            bundle: 200,
            chern: 10,
            deck: 200,
            heisenberg: 500,
            einstein_ball: 100,
            einstein_calabi: 100,
            det_identity: 100,
            coincide: 100,
            quasi: 100,
            charts: 50,
            chart_points: 4,
            probe: 16,
        }
    }
}

impl SampleCounts {
    /// Every count set to `k`.
    pub fn uniform(k: usize) -> Self {
        Self {
            bundle: k,
            chern: k,
            deck: k,
            heisenberg: k,
            einstein_ball: k,
            einstein_calabi: k,
            det_identity: k,
            coincide: k,
            quasi: k,
            charts: k,
            chart_points: k,
            probe: k.max(3),
        }
    }

    fn fields(&self) -> [(&'static str, usize); 12] {
        [
            ("samples.bundle", self.bundle),
            ("samples.chern", self.chern),
            ("samples.deck", self.deck),
            ("samples.heisenberg", self.heisenberg),
            ("samples.einstein_ball", self.einstein_ball),
            ("samples.einstein_calabi", self.einstein_calabi),
            ("samples.det_identity", self.det_identity),
            ("samples.coincide", self.coincide),
            ("samples.quasi", self.quasi),
            ("samples.charts", self.charts),
            ("samples.chart_points", self.chart_points),
            ("samples.probe", self.probe),
        ]
    }
}

/// The toolkit configuration. Complex data are given as separate real and
/// imaginary blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    pub n: usize,
    pub delta: Vec<i64>,
    #[serde(rename = "Z_re")]
    pub z_re: Vec<Vec<f64>>,
    #[serde(rename = "Z_im")]
    pub z_im: Vec<Vec<f64>>,
    pub t_re: Vec<f64>,
    pub t_im: Vec<f64>,
    #[serde(default = "default_tier2")]
    pub tier2: f64,
    #[serde(default = "default_tier4")]
    pub tier4: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub samples: SampleCounts,
    #[serde(default = "default_s_min")]
    pub s_min: f64,
    #[serde(default = "default_s_max")]
    pub s_max: f64,
    #[serde(rename = "C", default = "default_c")]
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_norm: Option<f64>,
    #[serde(default = "default_ode_s0")]
    pub ode_s0: f64,
    #[serde(default = "default_ode_s_end")]
    pub ode_s_end: f64,
    #[serde(default = "default_ode_tol")]
    pub ode_tol: f64,
    #[serde(default = "default_probe_epsilon")]
    pub probe_epsilon: f64,
    #[serde(default)]
    pub probe_z_re: Vec<f64>,
    #[serde(default)]
    pub probe_z_im: Vec<f64>,
    #[serde(default = "default_probe_theta")]
    pub probe_theta: f64,
    #[serde(default = "default_probe_s_min")]
    pub probe_s_min: f64,
    #[serde(default = "default_probe_s_max")]
    pub probe_s_max: f64,
    #[serde(default = "default_fiber_ks")]
    pub fiber_ks: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_probe_csv: Option<String>,
}

fn invalid(key: &str, message: impl Into<String>) -> CliError {
    CliError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ToolkitConfig {
    /// The square torus with every other key at its default.
    pub fn reference(n: usize, seed: u64) -> Self {
        let (delta, z_re, z_im, t) = match n {
            1 => (vec![1], vec![vec![0.0]], vec![vec![-1.0]], vec![0.0]),
            _ => (
                vec![1, 2],
                vec![vec![0.0, 1.0], vec![1.0, 0.0]],
                vec![vec![-2.0, 0.0], vec![0.0, -3.0]],
                vec![0.0, 0.0],
            ),
        };
        Self {
            n: delta.len(),
            delta,
            z_re,
            z_im,
            t_re: t.clone(),
            t_im: t,
            tier2: default_tier2(),
            tier4: default_tier4(),
            seed: Some(seed),
            samples: SampleCounts::default(),
            s_min: default_s_min(),
            s_max: default_s_max(),
            c: default_c(),
            c_norm: None,
            ode_s0: default_ode_s0(),
            ode_s_end: default_ode_s_end(),
            ode_tol: default_ode_tol(),
            probe_epsilon: default_probe_epsilon(),
            probe_z_re: Vec::new(),
            probe_z_im: Vec::new(),
            probe_theta: default_probe_theta(),
            probe_s_min: default_probe_s_min(),
            probe_s_max: default_probe_s_max(),
            fiber_ks: default_fiber_ks(),
            out_csv: None,
            out_probe_csv: None,
        }
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated configs carry a seed")
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm.unwrap_or_else(|| default_c_norm(self.n))
    }

    /// Checks keys in declaration order and reports the first bad one.
    pub fn validate(&self) -> CliResult<()> {
        if self.n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        if self.delta.len() != self.n {
            return Err(invalid("delta", format!("expected {} entries", self.n)));
        }
        for (key, m) in [("Z_re", &self.z_re), ("Z_im", &self.z_im)] {
            if m.len() != self.n || m.iter().any(|r| r.len() != self.n) {
                return Err(invalid(key, format!("expected a {0} x {0} block", self.n)));
            }
        }
        for (key, v) in [("t_re", &self.t_re), ("t_im", &self.t_im)] {
            if v.len() != self.n {
                return Err(invalid(key, format!("expected {} entries", self.n)));
            }
        }
        self.period_data()?;
        for (key, v) in [("tier2", self.tier2), ("tier4", self.tier4)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, "tolerance must be positive"));
            }
        }
        if self.seed.is_none() {
            return Err(invalid("seed", "missing required key (runs must be reproducible)"));
        }
        for (key, k) in self.samples.fields() {
            if k == 0 {
                return Err(invalid(key, "sample count must be positive"));
            }
        }
        if self.samples.probe < 3 {
            return Err(invalid("samples.probe", "a line fit needs at least 3 samples"));
        }
        if !(self.s_min < self.s_max && self.s_max < 0.0) {
            return Err(invalid("s_min", "need s_min < s_max < 0"));
        }
        if let Some(c) = self.c_norm {
            if !(c > 0.0) {
                return Err(invalid("c_norm", "must be positive"));
            }
        }
        if !(self.ode_s_end < self.ode_s0 && self.ode_s0 < 0.0) {
            return Err(invalid("ode_s0", "need ode_s_end < ode_s0 < 0"));
        }
        if !(self.ode_tol > 0.0) {
            return Err(invalid("ode_tol", "must be positive"));
        }
        for (key, v) in [("probe_z_re", &self.probe_z_re), ("probe_z_im", &self.probe_z_im)] {
            if !v.is_empty() && v.len() != self.n {
                return Err(invalid(key, format!("expected {} entries", self.n)));
            }
        }
        if !(self.probe_s_min < self.probe_s_max && self.probe_s_max < 0.0) {
            return Err(invalid("probe_s_min", "need probe_s_min < probe_s_max < 0"));
        }
        if self.fiber_ks.len() < 2 || self.fiber_ks.iter().any(|k| !(*k > 0.0)) {
            return Err(invalid("fiber_ks", "need at least two positive levels"));
        }
        Ok(())
    }

    pub fn period_data(&self) -> CliResult<PeriodData> {
        let n = self.n;
        let z = DMatrix::from_fn(n, n, |i, j| Complex64::new(self.z_re[i][j], self.z_im[i][j]));
        let t = (0..n).map(|i| Complex64::new(self.t_re[i], self.t_im[i])).collect();
        PeriodData::new(self.delta.clone(), z, t).map_err(|e| invalid("Z_re/Z_im", e.to_string()))
    }

    /// Base point of the probe ray (defaults to `(0.37 - 0.21i, ..)`).
    pub fn probe_z(&self) -> Vec<Complex64> {
        if self.probe_z_re.is_empty() && self.probe_z_im.is_empty() {
            return vec![Complex64::new(0.37, -0.21); self.n];
        }
        let get = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
        (0..self.n)
            .map(|i| Complex64::new(get(&self.probe_z_re, i), get(&self.probe_z_im, i)))
            .collect()
    }

    /// Canonical JSON (sorted keys, compact).
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

pub fn load_config(path: &Path) -> CliResult<ToolkitConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ToolkitConfig::from_json(&text)
}
