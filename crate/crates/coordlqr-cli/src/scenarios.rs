//! Built-in scenarios: the wind-farm dispatch model and the planar
//! point-tracking ensemble.

use crate::config::{
    mat_to_rows, CoordinationConfig, CostConfig, EnsembleConfig, InitialConfig, ModeKind, MuSpec,
    PlantConfig, ReferenceConfig, ScenarioConfig, SimConfig, X0Spec,
};
use coordlqr::numkit::{self, Tolerances};
use coordlqr::Mat;
use serde::Serialize;

/// Five-state turbine model around the derated operating point. The
/// combined `[A Bw Bu]` block is shipped digit-for-digit as published; run
/// [`validate_drift`] before trusting the open-loop drift.
pub struct WindFarmData {
    pub a: Mat,
    pub b_w: Mat,
    pub b_u: Mat,
    pub c_z: Mat,
    #[allow(dead_code)]
    pub d_zu: Mat,
}

impl WindFarmData {
    /// The matrix exactly as printed.
    pub fn printed() -> Self {
        let rows: [[f64; 7]; 5] = [
            [0.0, 120.0, -0.92, 0.0, 0.0, 0.0, 0.0],
            [0.0084, -0.032, 0.0, 0.0, 0.0, 0.12, -0.021],
            [0.0, 150.0, -1.6, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            [0.021, 0.054, 0.0, -4.0, -0.32, 0.2, 0.0],
        ];
        Self::from_rows(&rows)
    }

    /// Printed data with the `0.0084` pitch-to-rotor entry negated. The
    /// published sign closes a positive feedback loop through the `120`
    /// entry and leaves the drift unstable; this single-sign change is the
    /// smallest correction that renders it Hurwitz. Used by the trade-off
    /// demos, never silently substituted for the printed data.
    pub fn stabilized() -> Self {
        let mut data = Self::printed();
        data.a[(1, 0)] = -0.0084;
        data
    }

    fn from_rows(rows: &[[f64; 7]; 5]) -> Self {
        let mut a = Mat::zeros(5, 5);
        let mut b_w = Mat::zeros(5, 1);
        let mut b_u = Mat::zeros(5, 1);
        for (i, r) in rows.iter().enumerate() {
            for j in 0..5 {
                a[(i, j)] = r[j];
            }
            b_w[(i, 0)] = r[5];
            b_u[(i, 0)] = r[6];
        }
        let mut c_z = Mat::zeros(6, 5);
        for (j, w) in [0.1f64.sqrt(), 100.0, 0.0, 100.0, 0.0].iter().enumerate() {
            c_z[(j, j)] = *w;
        }
        let mut d_zu = Mat::zeros(6, 1);
        d_zu[(5, 0)] = 1.0;
        Self {
            a,
            b_w,
            b_u,
            c_z,
            d_zu,
        }
    }

    /// State weight `Cz' Cz` of the regulated output.
    pub fn q(&self) -> Mat {
        self.c_z.transpose() * &self.c_z
    }
}

/// Hurwitz and PBH validation of an open-loop drift, naming the worst
/// eigenvalue on failure.
pub fn validate_drift(a: &Mat, q: &Mat, tol: &Tolerances) -> WindValidation {
    let hurwitz = numkit::is_hurwitz(a, tol).unwrap_or(false);
    let offending = if hurwitz {
        None
    } else {
        numkit::eigenvalues(a)
            .ok()
            .and_then(|eigs| {
                eigs.iter()
                    .cloned()
                    .max_by(|x, y| x.re.partial_cmp(&y.re).unwrap())
            })
            .map(|l| (l.re, l.im))
    };
    let pbh = numkit::pbh_no_imaginary_unobservable(q, a, tol).unwrap_or(false);
    WindValidation {
        a_hurwitz: hurwitz,
        offending_eigenvalue: offending,
        pbh_ok: pbh,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WindValidation {
    pub a_hurwitz: bool,
    /// Eigenvalue with the largest real part when the drift is not Hurwitz.
    pub offending_eigenvalue: Option<(f64, f64)>,
    pub pbh_ok: bool,
}

fn wind_config(data: &WindFarmData, nu: usize) -> ScenarioConfig {
    ScenarioConfig {
        plant: PlantConfig {
            a: mat_to_rows(&data.a),
            b: mat_to_rows(&data.b_u),
        },
        cost: CostConfig {
            q: mat_to_rows(&data.q()),
        },
        ensemble: EnsembleConfig {
            nu,
            mu: MuSpec::Keyword("uniform".into()),
        },
        coordination: CoordinationConfig {
            mode: ModeKind::Hard,
            fbar: Some(vec![vec![0.0; 5]]),
            lambda: None,
            weight: None,
            e: None,
            fbar1: None,
        },
        initial: InitialConfig {
            x0: X0Spec::Keyword("bw-impulse".into()),
            bw: Some(mat_to_rows(&data.b_w)),
        },
        sim: SimConfig {
            t_final: 40.0,
            dt: 0.01,
            seed: Some(1),
            noise_intensity: None,
        },
        reference: None,
    }
}

/// Power-dispatch coordination across identical turbines: hard constraint
/// `sum u_i = 0` (Fbar = 0), disturbance-driven initial states.
pub fn wind_farm(nu: usize) -> ScenarioConfig {
    wind_config(&WindFarmData::printed(), nu)
}

/// Same scenario on the sign-corrected stable drift.
pub fn wind_farm_stabilized(nu: usize) -> ScenarioConfig {
    wind_config(&WindFarmData::stabilized(), nu)
}

/// Fifty planar double-integrator agents tracking a figure-eight through
/// their center of mass: `F_alpha = -I` locally, `Fbar = -25 I` so the
/// center settles much faster than any individual agent.
pub fn tadpole() -> ScenarioConfig {
    ScenarioConfig {
        plant: PlantConfig {
            a: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        cost: CostConfig {
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        ensemble: EnsembleConfig {
            nu: 50,
            mu: MuSpec::Keyword("uniform".into()),
        },
        coordination: CoordinationConfig {
            mode: ModeKind::Hard,
            fbar: Some(vec![vec![-25.0, 0.0], vec![0.0, -25.0]]),
            lambda: None,
            weight: None,
            e: None,
            fbar1: None,
        },
        initial: InitialConfig {
            x0: X0Spec::Keyword("bw-impulse".into()),
            // scattered start: x_i0 = 0.5 * v_i with planar unit normals
            bw: Some(vec![vec![0.5, 0.0], vec![0.0, 0.5]]),
        },
        sim: SimConfig {
            t_final: 2.0,
            dt: 0.002,
            seed: Some(42),
            noise_intensity: Some(0.05),
        },
        reference: Some(ReferenceConfig {
            kind: "figure-eight".into(),
            value: None,
        }),
    }
}

/// Resolve `builtin:<name>` pseudo-paths.
pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    match name {
        "wind-farm" => Some(wind_farm(10)),
        "wind-farm-stabilized" => Some(wind_farm_stabilized(10)),
        "tadpole" => Some(tadpole()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_wind_drift_is_unstable_and_named() {
        let tol = Tolerances::default();
        let data = WindFarmData::printed();
        let v = validate_drift(&data.a, &data.q(), &tol);
        assert!(!v.a_hurwitz);
        let (re, im) = v.offending_eigenvalue.unwrap();
        assert!((re - 0.6930303986310946).abs() < 1e-9);
        assert!(im.abs() < 1e-12);
        assert!(v.pbh_ok);
    }

    #[test]
    fn stabilized_wind_drift_is_hurwitz() {
        let tol = Tolerances::default();
        let data = WindFarmData::stabilized();
        let v = validate_drift(&data.a, &data.q(), &tol);
        assert!(v.a_hurwitz);
        assert!(v.offending_eigenvalue.is_none());
        assert!(v.pbh_ok);
    }

    #[test]
    fn builtin_names_resolve() {
        assert!(builtin("wind-farm").is_some());
        assert!(builtin("wind-farm-stabilized").is_some());
        assert!(builtin("tadpole").is_some());
        assert!(builtin("nope").is_none());
    }
}
