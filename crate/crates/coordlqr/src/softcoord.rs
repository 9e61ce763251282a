//! Soft-constraint coordination.
//!
//! Instead of forcing `ubar = Fbar xbar`, the deviation is penalized with
//! weight `lambda/(1-lambda)`. The center-of-mass subproblem becomes an LQR
//! with a state-input cross term; its stabilizing solution `X_lambda`
//! interpolates between `X_alpha` (lambda = 0) and `Xbar` (lambda = 1). The
//! derivative `Y_lambda = dX/dlambda` and the curvature proxy `Z_lambda`
//! quantify how the constraint violation and the per-agent excess trade off
//! along the path.

use crate::coordsynth::{center_value, local_gain, CostReport, CostSpec, HardSpec, Plant, Weights};
use crate::error::{Error, Result};
use crate::numkit::{
    ensure_finite, solve_care, solve_lyapunov, sym_part, symmetric_eig_bounds, Mat, Tolerances,
    Vector,
};

/// Center gain target with penalty level `lambda in [0, 1]`.
#[derive(Clone, Debug)]
pub struct SoftSpec {
    fbar: Mat,
    lambda: f64,
}

impl SoftSpec {
    pub fn new(fbar: Mat, lambda: f64, plant: &Plant, tol: &Tolerances) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) || !lambda.is_finite() {
            return Err(Error::AssumptionViolated(format!(
                "soft: lambda must lie in [0, 1], got {lambda}"
            )));
        }
        ensure_finite("soft: fbar", &fbar)?;
        let hard = HardSpec::new(fbar, plant, tol)?;
        Ok(Self {
            fbar: hard.fbar().clone(),
            lambda,
        })
    }

    pub fn fbar(&self) -> &Mat {
        &self.fbar
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Solution of the penalized center subproblem.
#[derive(Clone, Debug)]
pub struct SoftSolution {
    /// Stabilizing Riccati solution at the given lambda.
    pub x_lambda: Mat,
    /// Effective center gain `lambda Fbar - (1-lambda) B' X_lambda`.
    pub f_center: Mat,
    /// Sensitivity `dX_lambda/dlambda`, PSD.
    pub y_lambda: Mat,
    /// `(1-lambda) dY/dlambda - 2 Y_lambda`, negative semidefinite; drives
    /// the derivative identities for the trade-off quantities.
    pub z_lambda: Mat,
}

/// One row of a soft trade-off sweep.
#[derive(Clone, Debug)]
pub struct TradeoffPoint {
    pub lambda: f64,
    /// Constraint-violation energy `sigma(lambda)`.
    pub sigma: f64,
    /// Per-agent coordination excess at this lambda.
    pub per_agent_excess: Vec<f64>,
}

fn closed_loop(plant: &Plant, f_center: &Mat) -> Mat {
    plant.a() + plant.b() * f_center
}

/// Solve the penalized center problem at `spec.lambda`.
///
/// The Riccati equation is posed in general `(Q, R, S)` form with
/// `R = I/(1-lambda)` and cross term `S = -lambda/(1-lambda) Fbar'`, which
/// reproduces the penalized performance index without completion-of-squares
/// manipulation. `Y` and `Z` come from their Lyapunov characterizations,
/// never from differencing. `lambda = 1` delegates to the hard path.
pub fn solve_soft(
    plant: &Plant,
    cost: &CostSpec,
    spec: &SoftSpec,
    tol: &Tolerances,
) -> Result<SoftSolution> {
    let lam = spec.lambda();
    let fbar = spec.fbar();
    let m = plant.m();

    let (x_alpha, _) = local_gain(plant, cost, tol)?;
    let hard = HardSpec::new(fbar.clone(), plant, tol)?;
    let xbar = center_value(plant, cost, &hard, tol)?;

    let (x_lambda, f_center) = if lam >= 1.0 {
        (xbar.clone(), fbar.clone())
    } else {
        let r = Mat::identity(m, m) / (1.0 - lam);
        let s = fbar.transpose() * (-lam / (1.0 - lam));
        let q = sym_part(&(cost.q() + fbar.transpose() * fbar * (lam / (1.0 - lam))));
        let x = solve_care(plant.a(), plant.b(), &q, &r, Some(&s), tol)?;
        let f = fbar * lam - plant.b().transpose() * &x * (1.0 - lam);
        (x, f)
    };

    let a_lam = closed_loop(plant, &f_center);
    // w = Fbar + B' X_lambda; y solves a_lam' y + y a_lam + w'w = 0
    let w = fbar + plant.b().transpose() * &x_lambda;
    let y_lambda = solve_lyapunov(&a_lam, &sym_part(&(w.transpose() * &w)), tol)?;
    // z solves a_lam' z + z a_lam - 2 (w - v)'(w - v) = 0 with
    // v = (1-lambda) B' Y; the sign makes z <= 0 for Hurwitz a_lam.
    let v = plant.b().transpose() * &y_lambda * (1.0 - lam);
    let wv = &w - &v;
    let z_lambda = solve_lyapunov(&a_lam, &sym_part(&(-(wv.transpose() * &wv) * 2.0)), tol)?;

    let slack = |m: &Mat| {
        let (lo, hi) = symmetric_eig_bounds(m);
        (lo, tol.psd_slack * (1.0 + hi.abs().max(lo.abs())))
    };
    let (lo, eps) = slack(&(&x_lambda - &x_alpha));
    if lo < -eps {
        return Err(Error::Inconsistent(format!(
            "soft: x_lambda - x_alpha has eigenvalue {lo:e}"
        )));
    }
    let (lo, eps) = slack(&(&xbar - &x_lambda));
    if lo < -eps {
        return Err(Error::Inconsistent(format!(
            "soft: xbar - x_lambda has eigenvalue {lo:e}"
        )));
    }
    let (lo, eps) = slack(&y_lambda);
    if lo < -eps {
        return Err(Error::Inconsistent(format!(
            "soft: y_lambda has eigenvalue {lo:e}"
        )));
    }
    let (_, hi) = symmetric_eig_bounds(&z_lambda);
    if hi > tol.psd_slack * (1.0 + hi.abs()) {
        return Err(Error::Inconsistent(format!(
            "soft: z_lambda has eigenvalue {hi:e}"
        )));
    }

    Ok(SoftSolution {
        x_lambda,
        f_center,
        y_lambda,
        z_lambda,
    })
}

/// Cost decomposition under the soft law, plus the constraint-violation
/// energy `sigma` and the per-agent relief `alpha_i` relative to the hard
/// constraint.
pub fn soft_cost_report(
    plant: &Plant,
    cost: &CostSpec,
    weights: &Weights,
    spec: &SoftSpec,
    x0s: &[Vector],
    tol: &Tolerances,
) -> Result<(CostReport, f64, Vec<f64>)> {
    let sol = solve_soft(plant, cost, spec, tol)?;
    let lam = spec.lambda();
    let (x_alpha, _) = local_gain(plant, cost, tol)?;
    let hard = HardSpec::new(spec.fbar().clone(), plant, tol)?;
    let xbar = center_value(plant, cost, &hard, tol)?;

    let xbar0 = weights.center(x0s)?;
    let quad = |m: &Mat| (xbar0.transpose() * m * &xbar0)[(0, 0)];

    let sigma = (1.0 - lam) * (1.0 - lam) * quad(&sol.y_lambda);
    let excess_form = quad(&(&sol.x_lambda - &sol.y_lambda * (lam * (1.0 - lam)) - &x_alpha));
    let relief_form = quad(&(&xbar - &sol.x_lambda + &sol.y_lambda * (lam * (1.0 - lam))));
    let hard_form = quad(&(&xbar - &x_alpha));

    let floor = -tol.psd_slack * (1.0 + hard_form.abs());
    if sigma < floor || excess_form < floor || relief_form < floor {
        return Err(Error::Inconsistent(format!(
            "soft cost: negative quantity (sigma={sigma:e}, excess={excess_form:e}, relief={relief_form:e})"
        )));
    }
    if excess_form > hard_form + tol.psd_slack * (1.0 + hard_form.abs()) {
        return Err(Error::Inconsistent(
            "soft cost: excess exceeds the hard-constraint value".into(),
        ));
    }

    let j_local: Vec<f64> = x0s
        .iter()
        .map(|x| (x.transpose() * &x_alpha * x)[(0, 0)])
        .collect();
    let mu = weights.mu();
    let j_excess: Vec<f64> = mu.iter().map(|&m| m * m * excess_form).collect();
    let alphas: Vec<f64> = mu.iter().map(|&m| m * m * relief_form).collect();
    let j_total = j_local.iter().sum::<f64>() + excess_form;
    let j_consensus = j_local.iter().sum::<f64>() - (xbar0.transpose() * &x_alpha * &xbar0)[(0, 0)];

    Ok((
        CostReport {
            j_total,
            j_local,
            j_excess,
            j_consensus,
        },
        sigma,
        alphas,
    ))
}

/// The soft solution viewed as a hard constraint: substituting
/// `Fbar -> lambda Fbar - (1-lambda) B' X_lambda` recovers it, with
/// `Xbar -> X_lambda - lambda(1-lambda) Y_lambda`.
pub fn equivalence_as_hard(
    plant: &Plant,
    cost: &CostSpec,
    spec: &SoftSpec,
    tol: &Tolerances,
) -> Result<HardSpec> {
    let sol = solve_soft(plant, cost, spec, tol)?;
    let hard = HardSpec::new(sol.f_center.clone(), plant, tol)
        .map_err(|e| Error::Inconsistent(format!("soft closed loop not Hurwitz: {e}")))?;
    let xbar_eff = center_value(plant, cost, &hard, tol)?;
    let lam = spec.lambda();
    let want = &sol.x_lambda - &sol.y_lambda * (lam * (1.0 - lam));
    if (&xbar_eff - &want).norm() > 1e-8 * (1.0 + want.norm()) {
        return Err(Error::Inconsistent(
            "soft-as-hard substitution mismatch".into(),
        ));
    }
    Ok(hard)
}

/// Evaluate the trade-off along a grid of lambda values in `[0, 1)`.
/// Per-point solver failures are reported with the offending lambda.
pub fn sweep_lambda(
    plant: &Plant,
    cost: &CostSpec,
    weights: &Weights,
    fbar: &Mat,
    grid: &[f64],
    x0s: &[Vector],
    tol: &Tolerances,
) -> Result<Vec<TradeoffPoint>> {
    let mut out = Vec::with_capacity(grid.len());
    for &lam in grid {
        if !(0.0..1.0).contains(&lam) {
            return Err(Error::AssumptionViolated(format!(
                "sweep: lambda {lam} outside [0, 1)"
            )));
        }
        let spec = SoftSpec::new(fbar.clone(), lam, plant, tol)
            .map_err(|e| Error::AssumptionViolated(format!("sweep at lambda={lam}: {e}")))?;
        let (report, sigma, _) = soft_cost_report(plant, cost, weights, &spec, x0s, tol)
            .map_err(|e| Error::Inconsistent(format!("sweep at lambda={lam}: {e}")))?;
        out.push(TradeoffPoint {
            lambda: lam,
            sigma,
            per_agent_excess: report.j_excess,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coordsynth;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    /// Scalar axis of the point-tracking ensemble: A=0, B=1, Q=1, Fbar=-25.
    fn axis() -> (Plant, CostSpec) {
        let plant = Plant::new(
            Mat::from_row_slice(1, 1, &[0.0]),
            Mat::from_row_slice(1, 1, &[1.0]),
            &tol(),
        )
        .unwrap();
        let cost = CostSpec::new(Mat::identity(1, 1), &plant, &tol()).unwrap();
        (plant, cost)
    }

    fn axis_spec(lambda: f64) -> (Plant, CostSpec, SoftSpec) {
        let (plant, cost) = axis();
        let spec =
            SoftSpec::new(Mat::from_row_slice(1, 1, &[-25.0]), lambda, &plant, &tol()).unwrap();
        (plant, cost, spec)
    }

    #[test]
    fn lambda_zero_reduces_to_local() {
        let (plant, cost, spec) = axis_spec(0.0);
        let sol = solve_soft(&plant, &cost, &spec, &tol()).unwrap();
        let (x_alpha, f_alpha) = local_gain(&plant, &cost, &tol()).unwrap();
        assert!((&sol.x_lambda - &x_alpha).norm() < 1e-10);
        assert!((&sol.f_center - &f_alpha).norm() < 1e-10);
    }

    #[test]
    fn scalar_anchor_values() {
        // frozen from the closed-form scalar chain:
        // (1-l)X^2 + 50lX - (1+625l) = 0, Y = W^2/(-2 A_l), W = -25 + X
        let (plant, cost, spec) = axis_spec(0.5);
        let sol = solve_soft(&plant, &cost, &spec, &tol()).unwrap();
        assert!((sol.x_lambda[(0, 0)] - 10.3836120259).abs() < 1e-9);
        assert!((sol.f_center[(0, 0)] + 17.6918060130).abs() < 1e-9);
        assert!((sol.y_lambda[(0, 0)] - 6.0377893939).abs() < 1e-9);
        assert!((sol.z_lambda[(0, 0)] + 17.5789399149).abs() < 1e-8);
    }

    #[test]
    fn lambda_near_one_approaches_hard_value() {
        let (plant, cost, spec) = axis_spec(0.999);
        let sol = solve_soft(&plant, &cost, &spec, &tol()).unwrap();
        assert!((sol.x_lambda[(0, 0)] - 12.52).abs() / 12.52 < 0.01);
    }

    #[test]
    fn sensitivity_matches_central_difference() {
        let (plant, cost) = axis();
        let fbar = Mat::from_row_slice(1, 1, &[-25.0]);
        let h = 1e-5;
        for lam in [0.25, 0.5, 0.75] {
            let at = |l: f64| {
                let spec = SoftSpec::new(fbar.clone(), l, &plant, &tol()).unwrap();
                solve_soft(&plant, &cost, &spec, &tol()).unwrap()
            };
            let sol = at(lam);
            let fd = (at(lam + h).x_lambda - at(lam - h).x_lambda) / (2.0 * h);
            let err = (&fd - &sol.y_lambda).norm();
            assert!(
                err <= 1e-4 * (1.0 + sol.y_lambda.norm()),
                "lambda={lam} err={err:e}"
            );
        }
    }

    #[test]
    fn derivative_identities_for_sigma_and_alpha() {
        let (plant, cost) = axis();
        let fbar = Mat::from_row_slice(1, 1, &[-25.0]);
        let weights = Weights::uniform(2).unwrap();
        let x0s = vec![
            Vector::from_column_slice(&[1.3]),
            Vector::from_column_slice(&[0.4]),
        ];
        let xbar0 = weights.center(&x0s).unwrap();
        let h = 1e-5;
        for lam in [0.25, 0.5, 0.75] {
            let eval = |l: f64| {
                let spec = SoftSpec::new(fbar.clone(), l, &plant, &tol()).unwrap();
                let (_, sigma, alphas) =
                    soft_cost_report(&plant, &cost, &weights, &spec, &x0s, &tol()).unwrap();
                (sigma, alphas[0])
            };
            let spec = SoftSpec::new(fbar.clone(), lam, &plant, &tol()).unwrap();
            let sol = solve_soft(&plant, &cost, &spec, &tol()).unwrap();
            let zq = (xbar0.transpose() * &sol.z_lambda * &xbar0)[(0, 0)];
            let (sp, ap) = eval(lam + h);
            let (sm, am) = eval(lam - h);
            let sigma_dot = (sp - sm) / (2.0 * h);
            let alpha_dot = (ap - am) / (2.0 * h);
            let mu0 = weights.mu()[0];
            let want_sigma_dot = (1.0 - lam) * zq;
            let want_alpha_dot = mu0 * mu0 * lam * zq;
            assert!(
                (sigma_dot - want_sigma_dot).abs() <= 1e-3 * want_sigma_dot.abs(),
                "sigma_dot {sigma_dot} vs {want_sigma_dot}"
            );
            assert!(
                (alpha_dot - want_alpha_dot).abs() <= 1e-3 * want_alpha_dot.abs(),
                "alpha_dot {alpha_dot} vs {want_alpha_dot}"
            );
        }
    }

    #[test]
    fn endpoint_slope_flattens_near_one() {
        let (plant, cost) = axis();
        let fbar = Mat::from_row_slice(1, 1, &[-25.0]);
        let weights = Weights::uniform(50).unwrap();
        let x0s: Vec<Vector> = (0..50)
            .map(|_| Vector::from_column_slice(&[1.0 / 50f64.sqrt()]))
            .collect();
        let xbar0 = weights.center(&x0s).unwrap();
        let slope = |lam: f64| {
            let spec = SoftSpec::new(fbar.clone(), lam, &plant, &tol()).unwrap();
            let sol = solve_soft(&plant, &cost, &spec, &tol()).unwrap();
            (1.0 - lam) * (xbar0.transpose() * &sol.z_lambda * &xbar0)[(0, 0)]
        };
        assert!(slope(0.999).abs() <= 1e-2 * slope(0.5).abs());
    }

    #[test]
    fn report_examples_on_the_axis() {
        let (plant, cost) = axis();
        let fbar = Mat::from_row_slice(1, 1, &[-25.0]);
        let nu = 50usize;
        let weights = Weights::uniform(nu).unwrap();
        // xbar0 = 1 by putting every agent at 1/(nu*mu_i) = 1/sqrt(nu)... the
        // uniform choice x_i0 = 1/(sqrt(nu)) gives xbar0 = 1 exactly
        let x0s: Vec<Vector> = (0..nu)
            .map(|_| Vector::from_column_slice(&[1.0 / (nu as f64).sqrt()]))
            .collect();
        let spec = SoftSpec::new(fbar.clone(), 0.5, &plant, &tol()).unwrap();
        let (report, sigma, alphas) =
            soft_cost_report(&plant, &cost, &weights, &spec, &x0s, &tol()).unwrap();
        assert!((sigma - 1.5094473484839883).abs() < 1e-8);
        let want_excess = (10.3836120259 - 0.25 * 6.0377893939 - 1.0) / nu as f64;
        assert!((report.j_excess[0] - want_excess).abs() < 1e-9);
        // relief + excess reproduces the hard-case excess exactly
        let hard = HardSpec::new(fbar.clone(), &plant, &tol()).unwrap();
        let (_, x_alpha, xbar) =
            coordsynth::synthesize_hard(&plant, &cost, &weights, &hard, &tol()).unwrap();
        let hard_excess = coordsynth::optimal_cost(&x_alpha, &xbar, &x0s, &weights, &tol())
            .unwrap()
            .j_excess[0];
        assert!((alphas[0] + report.j_excess[0] - hard_excess).abs() < 1e-10);

        // lambda = 1 delegates to the hard path: sigma = 0, alpha = 0
        let spec1 = SoftSpec::new(fbar.clone(), 1.0, &plant, &tol()).unwrap();
        let (report1, sigma1, alphas1) =
            soft_cost_report(&plant, &cost, &weights, &spec1, &x0s, &tol()).unwrap();
        assert!(sigma1.abs() < 1e-12);
        assert!(alphas1.iter().all(|a| a.abs() < 1e-10));
        assert!((report1.j_excess[0] - hard_excess).abs() < 1e-10);

        // zero center: no violation and no excess
        let mut x0s_zero = x0s.clone();
        for (i, x) in x0s_zero.iter_mut().enumerate() {
            x[0] = if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let (report0, sigma0, _) =
            soft_cost_report(&plant, &cost, &weights, &spec, &x0s_zero, &tol()).unwrap();
        assert!(sigma0.abs() < 1e-12);
        assert!(report0.j_excess.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn relief_zero_iff_hard_cost_zero() {
        let (plant, cost) = axis();
        let weights = Weights::uniform(2).unwrap();
        // route 1: zero center state
        let spec = SoftSpec::new(Mat::from_row_slice(1, 1, &[-25.0]), 0.4, &plant, &tol()).unwrap();
        let x0s = vec![
            Vector::from_column_slice(&[2.0]),
            Vector::from_column_slice(&[-2.0]),
        ];
        let (_, _, alphas) =
            soft_cost_report(&plant, &cost, &weights, &spec, &x0s, &tol()).unwrap();
        assert!(alphas.iter().all(|a| a.abs() < 1e-12));
        // route 2: Fbar = F_alpha makes coordination free
        let (_, f_alpha) = local_gain(&plant, &cost, &tol()).unwrap();
        let spec = SoftSpec::new(f_alpha, 0.4, &plant, &tol()).unwrap();
        let x0s = vec![
            Vector::from_column_slice(&[2.0]),
            Vector::from_column_slice(&[1.0]),
        ];
        let (_, _, alphas) =
            soft_cost_report(&plant, &cost, &weights, &spec, &x0s, &tol()).unwrap();
        assert!(alphas.iter().all(|a| a.abs() < 1e-10));
    }

    #[test]
    fn soft_as_hard_equivalence() {
        let (plant, cost, spec) = axis_spec(0.5);
        let hard = equivalence_as_hard(&plant, &cost, &spec, &tol()).unwrap();
        assert!((hard.fbar()[(0, 0)] + 17.6918060130).abs() < 1e-9);

        let (plant, cost, spec0) = axis_spec(0.0);
        let hard0 = equivalence_as_hard(&plant, &cost, &spec0, &tol()).unwrap();
        let (_, f_alpha) = local_gain(&plant, &cost, &tol()).unwrap();
        assert!((hard0.fbar() - f_alpha).norm() < 1e-10);
    }

    #[test]
    fn sweep_monotonicity_on_the_axis() {
        let (plant, cost) = axis();
        let fbar = Mat::from_row_slice(1, 1, &[-25.0]);
        let weights = Weights::uniform(2).unwrap();
        let x0s = vec![
            Vector::from_column_slice(&[1.0]),
            Vector::from_column_slice(&[0.5]),
        ];
        let grid: Vec<f64> = (0..21).map(|k| k as f64 * 0.045).collect();
        let pts = sweep_lambda(&plant, &cost, &weights, &fbar, &grid, &x0s, &tol()).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].sigma <= w[0].sigma + tol().psd_slack);
            assert!(w[1].per_agent_excess[0] >= w[0].per_agent_excess[0] - tol().psd_slack);
        }
        // single-point grid at zero: sigma = xbar0' Y_0 xbar0
        let single = sweep_lambda(&plant, &cost, &weights, &fbar, &[0.0], &x0s, &tol()).unwrap();
        let spec0 = SoftSpec::new(fbar.clone(), 0.0, &plant, &tol()).unwrap();
        let sol0 = solve_soft(&plant, &cost, &spec0, &tol()).unwrap();
        let xbar0 = weights.center(&x0s).unwrap();
        let want = (xbar0.transpose() * &sol0.y_lambda * &xbar0)[(0, 0)];
        assert!((single[0].sigma - want).abs() < 1e-10);
    }
}
