//! Frequency-weighted soft coordination.
//!
//! The coordination mismatch `ubar - Fbar xbar` is filtered by a weight
//! `W_phi(s)` before being penalized, so coordination can be enforced only
//! where it matters (e.g. at low frequency, with hard enforcement at the
//! poles of the weight). Synthesis augments the center-of-mass plant with
//! the filter state, solves one Riccati equation, and returns a dynamic
//! mismatch filter `M_phi` whose zeros are the weight's poles.

use crate::coordsynth::{center_value, local_gain, CostSpec, HardSpec, Plant, Weights};
use crate::error::{Error, Result};
use crate::numkit::{
    self, ensure_finite, ensure_shape, psd_sqrt, solve_care, solve_lyapunov, sym_part,
    symmetric_eig_bounds, Mat, Tolerances, Vector,
};

/// State-space coordination weight `W_phi(s) = D + C (sI - A)^-1 B`.
///
/// The realization must be minimal; poles on the imaginary axis are allowed
/// (an integrator weight enforces the constraint at DC). Uncontrollable but
/// stable modes are tolerated with a warning, since the augmented synthesis
/// only needs stabilizability.
#[derive(Clone, Debug)]
pub struct WeightFilter {
    a_phi: Mat,
    b_phi: Mat,
    c_phi: Mat,
    d_phi: Mat,
    warnings: Vec<String>,
}

impl WeightFilter {
    pub fn new(a_phi: Mat, b_phi: Mat, c_phi: Mat, d_phi: Mat, tol: &Tolerances) -> Result<Self> {
        let p = a_phi.nrows();
        let m = b_phi.ncols();
        let q = d_phi.nrows();
        numkit::ensure_square("weight: a_phi", &a_phi)?;
        ensure_shape("weight: b_phi", &b_phi, p, m)?;
        ensure_shape("weight: c_phi", &c_phi, q, p)?;
        ensure_shape("weight: d_phi", &d_phi, q, m)?;
        for (ctx, mat) in [
            ("weight: a_phi", &a_phi),
            ("weight: b_phi", &b_phi),
            ("weight: c_phi", &c_phi),
            ("weight: d_phi", &d_phi),
        ] {
            ensure_finite(ctx, mat)?;
        }
        let mut warnings = Vec::new();
        if p > 0 {
            let unobs = numkit::unobservable_modes(&c_phi, &a_phi, tol)?;
            if let Some(l) = unobs.first() {
                return Err(Error::NotMinimalWeight(format!(
                    "unobservable mode at {} + {}i",
                    l.re, l.im
                )));
            }
            let uncont = numkit::uncontrollable_modes(&a_phi, &b_phi, tol)?;
            for l in &uncont {
                if l.re >= -tol.hurwitz_margin {
                    return Err(Error::NotMinimalWeight(format!(
                        "uncontrollable mode at {} + {}i",
                        l.re, l.im
                    )));
                }
                warnings.push(format!(
                    "weight has an uncontrollable stable mode at {} + {}i; proceeding on stabilizability",
                    l.re, l.im
                ));
            }
        }
        Ok(Self {
            a_phi,
            b_phi,
            c_phi,
            d_phi,
            warnings,
        })
    }

    /// Static weight `W_phi = c I_m` (filter order zero).
    pub fn static_gain(c: f64, m: usize) -> Self {
        Self {
            a_phi: Mat::zeros(0, 0),
            b_phi: Mat::zeros(0, m),
            c_phi: Mat::zeros(m, 0),
            d_phi: Mat::identity(m, m) * c,
            warnings: Vec::new(),
        }
    }

    /// Integrator weight `W_phi(s) = sqrt(lambda/(1-lambda))/s * I_m`,
    /// which enforces the coordination constraint exactly at DC. At
    /// `lambda = 0` the weight degenerates to zero and the static form is
    /// returned instead (the integrator realization would be unobservable).
    pub fn integrator(lambda: f64, m: usize, tol: &Tolerances) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::AssumptionViolated(format!(
                "integrator weight: lambda {lambda} outside [0, 1)"
            )));
        }
        if lambda == 0.0 {
            return Ok(Self::static_gain(0.0, m));
        }
        let c = (lambda / (1.0 - lambda)).sqrt();
        Self::new(
            Mat::zeros(m, m),
            Mat::identity(m, m),
            Mat::identity(m, m) * c,
            Mat::zeros(m, m),
            tol,
        )
    }

    pub fn order(&self) -> usize {
        self.a_phi.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_phi.ncols()
    }

    pub fn a_phi(&self) -> &Mat {
        &self.a_phi
    }

    pub fn b_phi(&self) -> &Mat {
        &self.b_phi
    }

    pub fn c_phi(&self) -> &Mat {
        &self.c_phi
    }

    pub fn d_phi(&self) -> &Mat {
        &self.d_phi
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Augmented synthesis data `(A_sigma, B_sigma, C_sigma, D_sigma)`.
#[derive(Clone, Debug)]
pub struct AugmentedRealization {
    pub a_sigma: Mat,
    pub b_sigma: Mat,
    pub c_sigma: Mat,
    pub d_sigma: Mat,
}

/// Stack the weight state on top of the center-of-mass plant:
///
/// ```text
/// A_sigma = [A_phi  -B_phi Fbar]   B_sigma = [B_phi]
///           [0       A        ]             [B    ]
/// C_sigma = [C_phi  -D_phi Fbar]   D_sigma = [D_phi]
///           [0       Q^(1/2)  ]             [0    ]
///           [0       0        ]             [I    ]
/// ```
pub fn augment(
    plant: &Plant,
    cost: &CostSpec,
    fbar: &Mat,
    w: &WeightFilter,
    tol: &Tolerances,
) -> Result<AugmentedRealization> {
    let n = plant.n();
    let m = plant.m();
    if w.input_dim() != m {
        return Err(Error::DimensionMismatch(format!(
            "augment: weight input dimension {} differs from plant input {m}",
            w.input_dim()
        )));
    }
    ensure_shape("augment: fbar", fbar, m, n)?;
    ensure_finite("augment: fbar", fbar)?;
    let p = w.order();
    let q = w.d_phi().nrows();
    let qh = psd_sqrt(cost.q(), tol)?;

    let mut a_sigma = Mat::zeros(p + n, p + n);
    a_sigma.view_mut((0, 0), (p, p)).copy_from(w.a_phi());
    a_sigma
        .view_mut((0, p), (p, n))
        .copy_from(&(-(w.b_phi() * fbar)));
    a_sigma.view_mut((p, p), (n, n)).copy_from(plant.a());

    let mut b_sigma = Mat::zeros(p + n, m);
    b_sigma.view_mut((0, 0), (p, m)).copy_from(w.b_phi());
    b_sigma.view_mut((p, 0), (n, m)).copy_from(plant.b());

    let rows = q + n + m;
    let mut c_sigma = Mat::zeros(rows, p + n);
    c_sigma.view_mut((0, 0), (q, p)).copy_from(w.c_phi());
    c_sigma
        .view_mut((0, p), (q, n))
        .copy_from(&(-(w.d_phi() * fbar)));
    c_sigma.view_mut((q, p), (n, n)).copy_from(&qh);

    let mut d_sigma = Mat::zeros(rows, m);
    d_sigma.view_mut((0, 0), (q, m)).copy_from(w.d_phi());
    d_sigma
        .view_mut((q + n, 0), (m, m))
        .copy_from(&Mat::identity(m, m));

    Ok(AugmentedRealization {
        a_sigma,
        b_sigma,
        c_sigma,
        d_sigma,
    })
}

/// Mismatch filter `M_phi(s) = I + F_sigma1 (sI - A_phi - B_phi F_sigma1)^-1 B_phi`.
#[derive(Clone, Debug)]
pub struct MismatchFilter {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl MismatchFilter {
    /// Evaluate the transfer matrix at a real frequency point `s`.
    pub fn at_real(&self, s: f64) -> Result<Mat> {
        let p = self.a.nrows();
        if p == 0 {
            return Ok(self.d.clone());
        }
        let resolvent = (Mat::identity(p, p) * s - &self.a)
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Inconsistent("mismatch filter: singular resolvent".into()))?;
        Ok(&self.d + &self.c * resolvent * &self.b)
    }

    /// DC value `M_phi(0)`.
    pub fn at_zero(&self) -> Result<Mat> {
        self.at_real(0.0)
    }
}

/// Result of the frequency-weighted synthesis.
#[derive(Clone, Debug)]
pub struct AugmentedSynthesis {
    /// Stabilizing solution of the augmented Riccati equation.
    pub x_sigma: Mat,
    /// Gain partition acting on the filter state.
    pub f_sigma1: Mat,
    /// Gain partition acting on the center-of-mass state.
    pub f_sigma2: Mat,
    /// Closed-loop mismatch filter.
    pub m_phi: MismatchFilter,
    /// Scalar cutoff `-F_sigma1`, reported only when the filter and input
    /// are both scalar.
    pub omega_sigma: Option<f64>,
    /// Closed augmented loop `A_sigma + B_sigma F_sigma`.
    pub a_closed: Mat,
    pub warnings: Vec<String>,
}

impl AugmentedSynthesis {
    /// Filter order `p`.
    pub fn order(&self) -> usize {
        self.f_sigma1.ncols()
    }

    /// The `(2,2)` block of `X_sigma` acting on the plant state.
    pub fn x_sigma22(&self) -> Mat {
        let p = self.order();
        let n = self.f_sigma2.ncols();
        self.x_sigma.view((p, p), (n, n)).clone_owned()
    }
}

/// Solve the frequency-weighted coordination problem for the given weight.
pub fn synthesize_weighted(
    plant: &Plant,
    cost: &CostSpec,
    fbar: &Mat,
    w: &WeightFilter,
    tol: &Tolerances,
) -> Result<AugmentedSynthesis> {
    let hard = HardSpec::new(fbar.clone(), plant, tol)?;
    let n = plant.n();
    let m = plant.m();
    let p = w.order();
    let aug = augment(plant, cost, fbar, w, tol)?;

    let q_c = sym_part(&(aug.c_sigma.transpose() * &aug.c_sigma));
    let r_c = sym_part(&(aug.d_sigma.transpose() * &aug.d_sigma));
    let s_c = aug.c_sigma.transpose() * &aug.d_sigma;
    let x_sigma = solve_care(&aug.a_sigma, &aug.b_sigma, &q_c, &r_c, Some(&s_c), tol)?;

    let r_chol = nalgebra::Cholesky::new(r_c)
        .ok_or_else(|| Error::NotPositiveDefinite("weighted: d_sigma' d_sigma".into()))?;
    let f_sigma = -r_chol.solve(&(aug.b_sigma.transpose() * &x_sigma + s_c.transpose()));
    let f_sigma1 = f_sigma.view((0, 0), (m, p)).clone_owned();
    let f_sigma2 = f_sigma.view((0, p), (m, n)).clone_owned();

    let m_phi = MismatchFilter {
        a: w.a_phi() + w.b_phi() * &f_sigma1,
        b: w.b_phi().clone(),
        c: f_sigma1.clone(),
        d: Mat::identity(m, m),
    };

    // zeros of M_phi must coincide with the poles of the weight
    if p > 0 {
        let zero_matrix = &m_phi.a - &m_phi.b * &m_phi.c;
        let mut zeros: Vec<(f64, f64)> = numkit::eigenvalues(&zero_matrix)?
            .iter()
            .map(|l| (l.re, l.im))
            .collect();
        let mut poles: Vec<(f64, f64)> = numkit::eigenvalues(w.a_phi())?
            .iter()
            .map(|l| (l.re, l.im))
            .collect();
        let key = |a: &(f64, f64), b: &(f64, f64)| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.partial_cmp(&b.1).unwrap())
        };
        zeros.sort_by(key);
        poles.sort_by(key);
        let scale = 1.0 + numkit::spectral_norm(w.a_phi())?;
        for (z, q) in zeros.iter().zip(poles.iter()) {
            let d = ((z.0 - q.0).powi(2) + (z.1 - q.1).powi(2)).sqrt();
            if d > 1e-6 * scale {
                return Err(Error::Inconsistent(format!(
                    "mismatch-filter zero ({}, {}) drifted from weight pole ({}, {})",
                    z.0, z.1, q.0, q.1
                )));
            }
        }
    }

    // sandwich on the (2,2) block: x_alpha <= x_sigma22 <= xbar
    let (x_alpha, _) = local_gain(plant, cost, tol)?;
    let xbar = center_value(plant, cost, &hard, tol)?;
    let x22 = x_sigma.view((p, p), (n, n)).clone_owned();
    let (lo1, hi1) = symmetric_eig_bounds(&(&x22 - &x_alpha));
    let (lo2, hi2) = symmetric_eig_bounds(&(&xbar - &x22));
    let slack = tol.psd_slack * (1.0 + hi1.abs().max(hi2.abs()));
    if lo1 < -slack || lo2 < -slack {
        return Err(Error::Inconsistent(format!(
            "weighted: sandwich violated ({lo1:e}, {lo2:e})"
        )));
    }

    let omega_sigma = if p == 1 && m == 1 {
        Some(-f_sigma1[(0, 0)])
    } else {
        None
    };

    Ok(AugmentedSynthesis {
        a_closed: &aug.a_sigma + &aug.b_sigma * &f_sigma,
        x_sigma,
        f_sigma1,
        f_sigma2,
        m_phi,
        omega_sigma,
        warnings: w.warnings().to_vec(),
    })
}

/// Dynamic coordination controller: input `xbar`, output `ubar_phi`.
#[derive(Clone, Debug)]
pub struct WeightedController {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl WeightedController {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

/// Realize `ubar_phi = M_phi (F_sigma2 - Fbar) xbar` as a state-space
/// controller with internal state of the filter order.
pub fn weighted_controller(synth: &AugmentedSynthesis, fbar: &Mat) -> Result<WeightedController> {
    if fbar.shape() != synth.f_sigma2.shape() {
        return Err(Error::DimensionMismatch("weighted controller: fbar".into()));
    }
    let gap = &synth.f_sigma2 - fbar;
    Ok(WeightedController {
        a: synth.m_phi.a.clone(),
        b: &synth.m_phi.b * &gap,
        c: synth.f_sigma1.clone(),
        d: gap,
    })
}

/// Mismatch energy and per-agent coordination excess from the (2,2) blocks
/// of the two closed-loop Lyapunov solutions.
pub fn weighted_energies(
    synth: &AugmentedSynthesis,
    plant: &Plant,
    cost: &CostSpec,
    fbar: &Mat,
    weights: &Weights,
    x0s: &[Vector],
    tol: &Tolerances,
) -> Result<(f64, Vec<f64>)> {
    let n = plant.n();
    let p = synth.order();
    let xbar0 = weights.center(x0s)?;
    if xbar0.len() != n {
        return Err(Error::DimensionMismatch(
            "weighted energies: x0 length".into(),
        ));
    }

    // L = F_sigma - G E2' stacked as [F_sigma1, F_sigma2 - G]
    let stack = |g: &Mat| {
        let mut l = Mat::zeros(plant.m(), p + n);
        l.view_mut((0, 0), (plant.m(), p))
            .copy_from(&synth.f_sigma1);
        l.view_mut((0, p), (plant.m(), n))
            .copy_from(&(&synth.f_sigma2 - g));
        l
    };
    let block22 = |x: &Mat| x.view((p, p), (n, n)).clone_owned();

    let l_phi = stack(fbar);
    let x_phi = solve_lyapunov(
        &synth.a_closed,
        &sym_part(&(l_phi.transpose() * &l_phi)),
        tol,
    )
    .map_err(|e| match e {
        Error::NotHurwitz(c) => Error::NotHurwitz(format!("weighted energies (internal): {c}")),
        other => other,
    })?;
    let mismatch = (xbar0.transpose() * block22(&x_phi) * &xbar0)[(0, 0)];

    let (x_alpha, f_alpha) = local_gain(plant, cost, tol)?;
    let l_v = stack(&f_alpha);
    let x_v = solve_lyapunov(&synth.a_closed, &sym_part(&(l_v.transpose() * &l_v)), tol)?;
    let xv22 = block22(&x_v);
    let excess_form = (xbar0.transpose() * &xv22 * &xbar0)[(0, 0)];

    // xv22 never exceeds the hard-constraint excess value xbar - x_alpha
    let hard = HardSpec::new(fbar.clone(), plant, tol)?;
    let xbar = center_value(plant, cost, &hard, tol)?;
    let gap = &xbar - &x_alpha - &xv22;
    let (lo, hi) = symmetric_eig_bounds(&gap);
    if lo < -tol.psd_slack * (1.0 + hi.abs()) {
        return Err(Error::Inconsistent(format!(
            "weighted energies: xv22 exceeds xbar - x_alpha by {lo:e}"
        )));
    }

    let per_agent = weights.mu().iter().map(|&m| m * m * excess_form).collect();
    Ok((mismatch, per_agent))
}

/// Parameterized weight families used by trade-off sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightFamily {
    /// `W_phi = sqrt(lambda/(1-lambda)) I`.
    Static,
    /// `W_phi = sqrt(lambda/(1-lambda))/s I`.
    Integrator,
}

impl WeightFamily {
    pub fn filter(&self, lambda: f64, m: usize, tol: &Tolerances) -> Result<WeightFilter> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::AssumptionViolated(format!(
                "weight family: lambda {lambda} outside [0, 1)"
            )));
        }
        match self {
            WeightFamily::Static => Ok(WeightFilter::static_gain(
                (lambda / (1.0 - lambda)).sqrt(),
                m,
            )),
            WeightFamily::Integrator => WeightFilter::integrator(lambda, m, tol),
        }
    }
}

/// One row of a frequency-weighted trade-off sweep.
#[derive(Clone, Debug)]
pub struct WeightedTradeoffPoint {
    pub lambda: f64,
    pub mismatch: f64,
    pub per_agent_excess: Vec<f64>,
    pub omega_sigma: Option<f64>,
}

/// Sweep a weight family over a lambda grid.
#[allow(clippy::too_many_arguments)]
pub fn sweep_weighted(
    plant: &Plant,
    cost: &CostSpec,
    weights: &Weights,
    fbar: &Mat,
    family: WeightFamily,
    grid: &[f64],
    x0s: &[Vector],
    tol: &Tolerances,
) -> Result<Vec<WeightedTradeoffPoint>> {
    let mut out = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let point = (|| -> Result<WeightedTradeoffPoint> {
            let w = family.filter(lambda, plant.m(), tol)?;
            let synth = synthesize_weighted(plant, cost, fbar, &w, tol)?;
            let (mismatch, per_agent_excess) =
                weighted_energies(&synth, plant, cost, fbar, weights, x0s, tol)?;
            Ok(WeightedTradeoffPoint {
                lambda,
                mismatch,
                per_agent_excess,
                omega_sigma: synth.omega_sigma,
            })
        })()
        .map_err(|e| Error::Inconsistent(format!("weighted sweep at lambda={lambda}: {e}")))?;
        out.push(point);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::softcoord::{soft_cost_report, solve_soft, SoftSpec};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn axis() -> (Plant, CostSpec, Mat) {
        let plant = Plant::new(
            Mat::from_row_slice(1, 1, &[0.0]),
            Mat::from_row_slice(1, 1, &[1.0]),
            &tol(),
        )
        .unwrap();
        let cost = CostSpec::new(Mat::identity(1, 1), &plant, &tol()).unwrap();
        (plant, cost, Mat::from_row_slice(1, 1, &[-25.0]))
    }

    #[test]
    fn augment_block_structure() {
        let (plant, cost, fbar) = axis();
        // zero weight reduces to the plain LQR data
        let w0 = WeightFilter::static_gain(0.0, 1);
        let aug = augment(&plant, &cost, &fbar, &w0, &tol()).unwrap();
        assert_eq!(aug.a_sigma, *plant.a());
        assert_eq!(aug.b_sigma, *plant.b());
        let dd = aug.d_sigma.transpose() * &aug.d_sigma;
        assert!((dd - Mat::identity(1, 1)).norm() < 1e-15);

        // static weight c: D'D = (1 + c^2) I
        let c = 0.7;
        let ws = WeightFilter::static_gain(c, 1);
        let aug = augment(&plant, &cost, &fbar, &ws, &tol()).unwrap();
        let dd = aug.d_sigma.transpose() * &aug.d_sigma;
        assert!((dd[(0, 0)] - (1.0 + c * c)).abs() < 1e-15);

        // integrator at lambda = 0.5: A=[0], B=[1], C=[1], D=[0]
        let wi = WeightFilter::integrator(0.5, 1, &tol()).unwrap();
        assert_eq!(wi.a_phi()[(0, 0)], 0.0);
        assert_eq!(wi.b_phi()[(0, 0)], 1.0);
        assert!((wi.c_phi()[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(wi.d_phi()[(0, 0)], 0.0);
        let aug = augment(&plant, &cost, &fbar, &wi, &tol()).unwrap();
        assert_eq!(aug.a_sigma[(0, 1)], 25.0);
        assert_eq!(aug.a_sigma[(1, 0)], 0.0);
    }

    #[test]
    fn rejects_nonminimal_weight() {
        // unobservable internal mode: C = 0
        let r = WeightFilter::new(
            Mat::from_row_slice(1, 1, &[-1.0]),
            Mat::identity(1, 1),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
            &tol(),
        );
        assert!(matches!(r, Err(Error::NotMinimalWeight(_))));

        // uncontrollable unstable mode rejected, stable one only warned
        let a2 = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b2 = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let c2 = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
        let r = WeightFilter::new(a2, b2.clone(), c2.clone(), Mat::zeros(1, 1), &tol());
        assert!(matches!(r, Err(Error::NotMinimalWeight(_))));

        let a2s = Mat::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -1.0]);
        let w = WeightFilter::new(a2s, b2, c2, Mat::zeros(1, 1), &tol()).unwrap();
        assert_eq!(w.warnings().len(), 1);
    }

    #[test]
    fn zero_weight_degenerates_to_decentralized() {
        let (plant, cost, fbar) = axis();
        let w0 = WeightFilter::static_gain(0.0, 1);
        let synth = synthesize_weighted(&plant, &cost, &fbar, &w0, &tol()).unwrap();
        let (_, f_alpha) = local_gain(&plant, &cost, &tol()).unwrap();
        assert!((&synth.f_sigma2 - &f_alpha).norm() < 1e-10);
        assert_eq!(synth.order(), 0);
        // M_phi = I, and the net coordination term cancels the hard part
        let m0 = synth.m_phi.at_zero().unwrap();
        assert!((m0 - Mat::identity(1, 1)).norm() < 1e-14);
        let ctrl = weighted_controller(&synth, &fbar).unwrap();
        let total = &ctrl.d + (&fbar - &f_alpha);
        assert!(total.norm() < 1e-10);
    }

    #[test]
    fn static_weight_matches_soft_formulation() {
        let (plant, cost, fbar) = axis();
        let weights = Weights::uniform(3).unwrap();
        let x0s = vec![
            Vector::from_column_slice(&[1.0]),
            Vector::from_column_slice(&[-0.2]),
            Vector::from_column_slice(&[0.7]),
        ];
        for lambda in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let w = WeightFamily::Static.filter(lambda, 1, &tol()).unwrap();
            let synth = synthesize_weighted(&plant, &cost, &fbar, &w, &tol()).unwrap();
            let spec = SoftSpec::new(fbar.clone(), lambda, &plant, &tol()).unwrap();
            let soft = solve_soft(&plant, &cost, &spec, &tol()).unwrap();
            assert!(
                (&synth.f_sigma2 - &soft.f_center).norm() < 1e-8,
                "gain mismatch at lambda={lambda}"
            );
            let (mismatch, excess) =
                weighted_energies(&synth, &plant, &cost, &fbar, &weights, &x0s, &tol()).unwrap();
            let (report, sigma, _) =
                soft_cost_report(&plant, &cost, &weights, &spec, &x0s, &tol()).unwrap();
            assert!(
                (mismatch - sigma).abs() < 1e-8 * (1.0 + sigma),
                "lambda={lambda}"
            );
            for (a, b) in excess.iter().zip(report.j_excess.iter()) {
                assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "lambda={lambda}");
            }
            assert!(synth.omega_sigma.is_none());
        }
    }

    #[test]
    fn integrator_weight_high_pass_shape() {
        let (plant, cost, fbar) = axis();
        let w = WeightFilter::integrator(0.5, 1, &tol()).unwrap();
        let synth = synthesize_weighted(&plant, &cost, &fbar, &w, &tol()).unwrap();
        let omega = synth.omega_sigma.expect("scalar cutoff");
        assert!(omega > 0.0);
        // M(0) = 0 and M(s) = s/(s + omega)
        let m0 = synth.m_phi.at_zero().unwrap();
        assert!(m0.norm() <= 1e-8);
        for s in [0.3, 1.0, 4.0, 25.0] {
            let m = synth.m_phi.at_real(s).unwrap()[(0, 0)];
            let want = s / (s + omega);
            assert!((m - want).abs() < 1e-10, "s={s}");
        }
        // dc mismatch enforcement through M(0)(F_sigma2 - Fbar)
        let dc = synth.m_phi.at_zero().unwrap() * (&synth.f_sigma2 - &fbar);
        assert!(dc.norm() <= 1e-8);
    }

    #[test]
    fn controller_closes_the_augmented_loop() {
        let (plant, cost, fbar) = axis();
        let w = WeightFilter::integrator(0.4, 1, &tol()).unwrap();
        let synth = synthesize_weighted(&plant, &cost, &fbar, &w, &tol()).unwrap();
        let ctrl = weighted_controller(&synth, &fbar).unwrap();
        // center-of-mass loop in (x_phi, xbar) coordinates
        let p = ctrl.order();
        let n = plant.n();
        let mut closed = Mat::zeros(p + n, p + n);
        closed.view_mut((0, 0), (p, p)).copy_from(&ctrl.a);
        closed.view_mut((0, p), (p, n)).copy_from(&ctrl.b);
        closed
            .view_mut((p, 0), (n, p))
            .copy_from(&(plant.b() * &ctrl.c));
        closed
            .view_mut((p, p), (n, n))
            .copy_from(&(plant.a() + plant.b() * (&ctrl.d + &fbar)));
        assert!((closed - &synth.a_closed).norm() < 1e-12);
    }

    #[test]
    fn energy_edge_cases() {
        let (plant, cost, fbar) = axis();
        let weights = Weights::uniform(2).unwrap();
        // zero center state: both energies vanish
        let x0s = vec![
            Vector::from_column_slice(&[1.0]),
            Vector::from_column_slice(&[-1.0]),
        ];
        let w = WeightFilter::integrator(0.5, 1, &tol()).unwrap();
        let synth = synthesize_weighted(&plant, &cost, &fbar, &w, &tol()).unwrap();
        let (mismatch, excess) =
            weighted_energies(&synth, &plant, &cost, &fbar, &weights, &x0s, &tol()).unwrap();
        assert!(mismatch.abs() < 1e-12);
        assert!(excess.iter().all(|e| e.abs() < 1e-12));

        // near-hard static limit: mismatch continues to zero
        let x0s = vec![
            Vector::from_column_slice(&[1.0]),
            Vector::from_column_slice(&[0.5]),
        ];
        let w_soft = WeightFamily::Static.filter(0.9, 1, &tol()).unwrap();
        let s_soft = synthesize_weighted(&plant, &cost, &fbar, &w_soft, &tol()).unwrap();
        let (m_soft, _) =
            weighted_energies(&s_soft, &plant, &cost, &fbar, &weights, &x0s, &tol()).unwrap();
        let w_hardish = WeightFamily::Static.filter(0.999, 1, &tol()).unwrap();
        let s_hardish = synthesize_weighted(&plant, &cost, &fbar, &w_hardish, &tol()).unwrap();
        let (m_hardish, _) =
            weighted_energies(&s_hardish, &plant, &cost, &fbar, &weights, &x0s, &tol()).unwrap();
        assert!(m_hardish < 1e-2 * m_soft, "{m_hardish} vs {m_soft}");
    }

    #[test]
    fn sweep_families_monotone_on_the_axis() {
        let (plant, cost, fbar) = axis();
        let weights = Weights::uniform(2).unwrap();
        let x0s = vec![
            Vector::from_column_slice(&[1.0]),
            Vector::from_column_slice(&[0.4]),
        ];
        let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        for family in [WeightFamily::Static, WeightFamily::Integrator] {
            let pts = sweep_weighted(&plant, &cost, &weights, &fbar, family, &grid, &x0s, &tol())
                .unwrap();
            for w in pts.windows(2) {
                assert!(w[1].mismatch <= w[0].mismatch + 1e-9);
                assert!(w[1].per_agent_excess[0] >= w[0].per_agent_excess[0] - 1e-9);
            }
            if family == WeightFamily::Integrator {
                for w in pts.windows(2) {
                    let (a, b) = (w[0].omega_sigma.unwrap(), w[1].omega_sigma.unwrap());
                    assert!(b >= a - 1e-9, "cutoff not monotone: {a} -> {b}");
                }
            }
        }
    }
}
