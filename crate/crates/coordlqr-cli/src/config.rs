//! Scenario configuration: JSON schema and conversion into library types.
//!
//! Matrices are nested arrays in row-major reading order. Unknown keys are
//! rejected everywhere so typos fail loudly instead of being ignored.

use coordlqr::coordsynth::{CostSpec, HardSpec, Plant, Weights};
use coordlqr::ensemblelab::standard_normal;
use coordlqr::freqcoord::WeightFilter;
use coordlqr::softcoord::SoftSpec;
use coordlqr::{Mat, Tolerances, Vector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub plant: PlantConfig,
    pub cost: CostConfig,
    pub ensemble: EnsembleConfig,
    pub coordination: CoordinationConfig,
    pub initial: InitialConfig,
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub nu: usize,
    pub mu: MuSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MuSpec {
    Keyword(String),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CoordinationConfig {
    pub mode: ModeKind,
    #[serde(rename = "Fbar", default, skip_serializing_if = "Option::is_none")]
    pub fbar: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightConfig>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Fbar1", default, skip_serializing_if = "Option::is_none")]
    pub fbar1: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    Hard,
    Soft,
    Weighted,
    Partial,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    #[serde(rename = "Aphi")]
    pub a_phi: Vec<Vec<f64>>,
    #[serde(rename = "Bphi")]
    pub b_phi: Vec<Vec<f64>>,
    #[serde(rename = "Cphi")]
    pub c_phi: Vec<Vec<f64>>,
    #[serde(rename = "Dphi")]
    pub d_phi: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x0: X0Spec,
    #[serde(rename = "Bw", default, skip_serializing_if = "Option::is_none")]
    pub bw: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum X0Spec {
    Keyword(String),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "T")]
    pub t_final: f64,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_intensity: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
}

/// Validation failure while turning a config into a problem.
#[derive(Debug)]
pub enum ConfigError {
    Invalid(String),
    Solver(coordlqr::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Invalid(m) => write!(f, "{m}"),
            ConfigError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl From<coordlqr::Error> for ConfigError {
    fn from(e: coordlqr::Error) -> Self {
        ConfigError::Solver(e)
    }
}

pub type ConfigResult<T> = Result<T, ConfigError>;

/// Parse a nested-array matrix; `cols_if_empty` supplies the column count
/// for zero-row matrices (weight filters of order zero).
pub fn to_mat(v: &[Vec<f64>], ctx: &str, cols_if_empty: usize) -> ConfigResult<Mat> {
    if v.is_empty() {
        return Ok(Mat::zeros(0, cols_if_empty));
    }
    let cols = v[0].len();
    if v.iter().any(|row| row.len() != cols) {
        return Err(ConfigError::Invalid(format!("{ctx}: ragged rows")));
    }
    let flat: Vec<f64> = v.iter().flatten().copied().collect();
    Ok(Mat::from_row_slice(v.len(), cols, &flat))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Coordination mode with all referenced matrices resolved and validated.
pub enum ResolvedMode {
    Hard(HardSpec),
    Soft(SoftSpec),
    Weighted {
        fbar: Mat,
        weight: WeightFilter,
    },
    /// Partial constraint, reduced to the equivalent full center gain.
    Partial {
        e: Mat,
        fbar1: Mat,
        hard: HardSpec,
    },
}

/// Fully validated scenario ready for the commands.
pub struct Problem {
    pub plant: Plant,
    pub cost: CostSpec,
    pub weights: Weights,
    pub mode: ResolvedMode,
    pub x0s: Vec<Vector>,
    pub bw: Option<Mat>,
    pub sim: SimConfig,
    pub reference: Option<ReferenceConfig>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn resolve(&self, seed_override: Option<u64>, tol: &Tolerances) -> ConfigResult<Problem> {
        let a = to_mat(&self.plant.a, "plant.A", 0)?;
        let b = to_mat(&self.plant.b, "plant.B", 0)?;
        let plant = Plant::new(a, b, tol)?;
        let n = plant.n();
        let m = plant.m();
        let q = to_mat(&self.cost.q, "cost.Q", n)?;
        let cost = CostSpec::new(q, &plant, tol)?;

        let nu = self.ensemble.nu;
        if nu == 0 {
            return Err(ConfigError::Invalid("ensemble.nu must be positive".into()));
        }
        let weights = match &self.ensemble.mu {
            MuSpec::Keyword(k) if k == "uniform" => Weights::uniform(nu)?,
            MuSpec::Keyword(k) => {
                return Err(ConfigError::Invalid(format!(
                    "ensemble.mu: unknown keyword {k:?} (expected \"uniform\" or an array)"
                )))
            }
            MuSpec::Explicit(v) => {
                if v.len() != nu {
                    return Err(ConfigError::Invalid(format!(
                        "ensemble.mu has {} entries for nu = {nu}",
                        v.len()
                    )));
                }
                Weights::new(Vector::from_column_slice(v))?
            }
        };

        let seed = seed_override.or(self.sim.seed).unwrap_or(0);

        let coord = &self.coordination;
        let need_fbar = || -> ConfigResult<Mat> {
            let rows = coord.fbar.as_ref().ok_or_else(|| {
                ConfigError::Invalid("coordination.Fbar required for this mode".into())
            })?;
            to_mat(rows, "coordination.Fbar", n)
        };
        let mode = match coord.mode {
            ModeKind::Hard => {
                if coord.lambda.is_some() || coord.weight.is_some() || coord.e.is_some() {
                    return Err(ConfigError::Invalid(
                        "hard mode takes only coordination.Fbar".into(),
                    ));
                }
                ResolvedMode::Hard(HardSpec::new(need_fbar()?, &plant, tol)?)
            }
            ModeKind::Soft => {
                if coord.weight.is_some() || coord.e.is_some() || coord.fbar1.is_some() {
                    return Err(ConfigError::Invalid(
                        "soft mode takes coordination.Fbar and coordination.lambda".into(),
                    ));
                }
                let lambda = coord.lambda.ok_or_else(|| {
                    ConfigError::Invalid("soft mode requires coordination.lambda".into())
                })?;
                ResolvedMode::Soft(SoftSpec::new(need_fbar()?, lambda, &plant, tol)?)
            }
            ModeKind::Weighted => {
                if coord.e.is_some() || coord.fbar1.is_some() {
                    return Err(ConfigError::Invalid(
                        "weighted mode takes coordination.Fbar and coordination.weight".into(),
                    ));
                }
                let wc = coord.weight.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("weighted mode requires coordination.weight".into())
                })?;
                let a_phi = to_mat(&wc.a_phi, "weight.Aphi", 0)?;
                let p = a_phi.nrows();
                let b_phi = to_mat(&wc.b_phi, "weight.Bphi", m)?;
                let c_phi = to_mat(&wc.c_phi, "weight.Cphi", p)?;
                let d_phi = to_mat(&wc.d_phi, "weight.Dphi", m)?;
                let weight = WeightFilter::new(a_phi, b_phi, c_phi, d_phi, tol)?;
                let fbar = need_fbar()?;
                // gains on the center must be admissible before augmenting
                HardSpec::new(fbar.clone(), &plant, tol)?;
                ResolvedMode::Weighted { fbar, weight }
            }
            ModeKind::Partial => {
                if coord.fbar.is_some() || coord.lambda.is_some() || coord.weight.is_some() {
                    return Err(ConfigError::Invalid(
                        "partial mode takes coordination.E and coordination.Fbar1".into(),
                    ));
                }
                let e_rows = coord.e.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("partial mode requires coordination.E".into())
                })?;
                let e = to_mat(e_rows, "coordination.E", 0)?;
                let f1_rows = coord.fbar1.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("partial mode requires coordination.Fbar1".into())
                })?;
                let fbar1 = to_mat(f1_rows, "coordination.Fbar1", n)?;
                let fbar =
                    coordlqr::coordsynth::partial_constraint(&plant, &cost, &e, &fbar1, tol)?;
                ResolvedMode::Partial {
                    e,
                    fbar1,
                    hard: HardSpec::new(fbar, &plant, tol)?,
                }
            }
        };

        // initial conditions
        let (x0s, bw) = match &self.initial.x0 {
            X0Spec::Explicit(rows) => {
                if self.initial.bw.is_some() {
                    return Err(ConfigError::Invalid(
                        "initial.Bw is only meaningful with x0 = \"bw-impulse\"".into(),
                    ));
                }
                if rows.len() != nu {
                    return Err(ConfigError::Invalid(format!(
                        "initial.x0 lists {} states for nu = {nu}",
                        rows.len()
                    )));
                }
                let mut out = Vec::with_capacity(nu);
                for (i, r) in rows.iter().enumerate() {
                    if r.len() != n {
                        return Err(ConfigError::Invalid(format!(
                            "initial.x0[{i}] has length {} for n = {n}",
                            r.len()
                        )));
                    }
                    out.push(Vector::from_column_slice(r));
                }
                (out, None)
            }
            X0Spec::Keyword(k) if k == "bw-impulse" => {
                let bw_rows = self.initial.bw.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("initial.Bw required with x0 = \"bw-impulse\"".into())
                })?;
                let bw = to_mat(bw_rows, "initial.Bw", 0)?;
                if bw.nrows() != n {
                    return Err(ConfigError::Invalid(format!(
                        "initial.Bw has {} rows for n = {n}",
                        bw.nrows()
                    )));
                }
                // x_i0 = Bw v_i with v_i unit-variance draws from the seeded
                // ChaCha20 stream (documented in the file-format notes)
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                let k = bw.ncols();
                let x0s = (0..nu)
                    .map(|_| {
                        let v = Vector::from_fn(k, |_, _| standard_normal(&mut rng));
                        &bw * v
                    })
                    .collect();
                (x0s, Some(bw))
            }
            X0Spec::Keyword(k) => {
                return Err(ConfigError::Invalid(format!(
                    "initial.x0: unknown keyword {k:?} (expected \"bw-impulse\" or an array)"
                )))
            }
        };

        if let Some(r) = &self.reference {
            match r.kind.as_str() {
                "constant" => {
                    let v = r.value.as_ref().ok_or_else(|| {
                        ConfigError::Invalid("reference.value required for constant type".into())
                    })?;
                    if v.len() != n {
                        return Err(ConfigError::Invalid(format!(
                            "reference.value has length {} for n = {n}",
                            v.len()
                        )));
                    }
                }
                "figure-eight" => {
                    if n != 2 {
                        return Err(ConfigError::Invalid(
                            "figure-eight reference requires a planar (n = 2) plant".into(),
                        ));
                    }
                }
                other => {
                    return Err(ConfigError::Invalid(format!(
                        "reference.type: unknown kind {other:?}"
                    )))
                }
            }
        }

        let (dt, t_final) = (self.sim.dt, self.sim.t_final);
        if dt <= 0.0 || t_final < dt || !dt.is_finite() || !t_final.is_finite() {
            return Err(ConfigError::Invalid("sim: need 0 < dt <= T".into()));
        }
        if let Some(ni) = self.sim.noise_intensity {
            if ni < 0.0 || !ni.is_finite() {
                return Err(ConfigError::Invalid(
                    "sim.noise_intensity must be >= 0".into(),
                ));
            }
        }

        Ok(Problem {
            plant,
            cost,
            weights,
            mode,
            x0s,
            bw,
            sim: self.sim.clone(),
            reference: self.reference.clone(),
            seed,
        })
    }
}

impl Problem {
    /// The full center gain in play: the hard gain, the soft effective gain
    /// target, or the weighted mode's hard part.
    pub fn fbar(&self) -> Mat {
        match &self.mode {
            ResolvedMode::Hard(h) => h.fbar().clone(),
            ResolvedMode::Soft(s) => s.fbar().clone(),
            ResolvedMode::Weighted { fbar, .. } => fbar.clone(),
            ResolvedMode::Partial { hard, .. } => hard.fbar().clone(),
        }
    }
}
