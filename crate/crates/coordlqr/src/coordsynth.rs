//! Hard-constraint coordinated LQR synthesis.
//!
//! The constrained ensemble problem decouples into one local LQR shared by
//! all agents and one Lyapunov equation for the center of mass. The optimal
//! per-agent law is `u_i = F_alpha x_i + mu_i (Fbar - F_alpha) xbar`, i.e. a
//! decentralized gain plus a rank-one coordination correction. This module
//! computes both pieces, decomposes the achieved cost per agent, handles
//! partial constraints and weighted cost sums, and builds the feedforward
//! used for center-of-mass tracking.

use crate::error::{Error, Result};
use crate::numkit::{
    self, ensure_finite, ensure_finite_vec, ensure_shape, ensure_square, solve_care,
    solve_lyapunov, sym_part, symmetric_eig_bounds, Mat, Tolerances, Vector,
};

/// Shared agent dynamics `xdot = A x + B u`.
#[derive(Clone, Debug)]
pub struct Plant {
    a: Mat,
    b: Mat,
}

impl Plant {
    /// Validates finiteness, shape compatibility and stabilizability of
    /// `(a, b)` (PBH at every eigenvalue with nonnegative real part).
    pub fn new(a: Mat, b: Mat, tol: &Tolerances) -> Result<Self> {
        ensure_square("plant: a", &a)?;
        ensure_finite("plant: a", &a)?;
        if b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "plant: b has {} rows, expected {}",
                b.nrows(),
                a.nrows()
            )));
        }
        ensure_finite("plant: b", &b)?;
        if !numkit::is_stabilizable(&a, &b, tol)? {
            return Err(Error::NotStabilizable("plant (a, b)".into()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// State weight of the local performance index; the control weight is the
/// identity by normalization.
#[derive(Clone, Debug)]
pub struct CostSpec {
    q: Mat,
}

impl CostSpec {
    /// Requires `q` symmetric PSD with no unobservable imaginary modes of
    /// the plant drift.
    pub fn new(q: Mat, plant: &Plant, tol: &Tolerances) -> Result<Self> {
        ensure_shape("cost: q", &q, plant.n(), plant.n())?;
        ensure_finite("cost: q", &q)?;
        let (lo, hi) = symmetric_eig_bounds(&q);
        if lo < -tol.psd_slack * (1.0 + hi.abs()) {
            return Err(Error::NotPsd(format!("cost: q has eigenvalue {lo:e}")));
        }
        if !numkit::pbh_no_imaginary_unobservable(&q, plant.a(), tol)? {
            return Err(Error::AssumptionViolated(
                "cost: (q, a) has an unobservable imaginary mode".into(),
            ));
        }
        Ok(Self { q: sym_part(&q) })
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }
}

/// Agent masses. Normalized so `sum mu_i^2 = 1`; zero masses are rejected.
#[derive(Clone, Debug)]
pub struct Weights {
    mu: Vector,
}

impl Weights {
    /// Rejects vectors whose norm deviates from one by more than 1e-9 —
    /// silent rescaling would change the weighted cost, so callers must
    /// normalize explicitly via [`Weights::normalized`].
    pub fn new(mu: Vector) -> Result<Self> {
        ensure_finite_vec("weights", &mu)?;
        if mu.is_empty() {
            return Err(Error::DimensionMismatch(
                "weights: empty mass vector".into(),
            ));
        }
        let sq: f64 = mu.iter().map(|x| x * x).sum();
        if (sq - 1.0).abs() > 1e-9 {
            return Err(Error::NotUnitNorm(sq.sqrt()));
        }
        for (i, &v) in mu.iter().enumerate() {
            if v.abs() <= 1e-12 {
                return Err(Error::ZeroMass { index: i, value: v });
            }
        }
        Ok(Self { mu })
    }

    /// Normalize an arbitrary mass vector to unit norm, then validate.
    pub fn normalized(mu: &Vector) -> Result<Self> {
        Self::new(numkit::normalize(mu)?)
    }

    /// Equal masses `mu_i = 1/sqrt(nu)`.
    pub fn uniform(nu: usize) -> Result<Self> {
        if nu == 0 {
            return Err(Error::DimensionMismatch("weights: nu = 0".into()));
        }
        Self::new(Vector::from_element(nu, 1.0 / (nu as f64).sqrt()))
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn nu(&self) -> usize {
        self.mu.len()
    }

    pub fn is_uniform(&self) -> bool {
        let v = 1.0 / (self.nu() as f64).sqrt();
        self.mu.iter().all(|&x| (x - v).abs() <= 1e-12)
    }

    /// Center of mass of a family of per-agent vectors.
    pub fn center(&self, xs: &[Vector]) -> Result<Vector> {
        if xs.len() != self.nu() {
            return Err(Error::DimensionMismatch(format!(
                "center: {} vectors for {} masses",
                xs.len(),
                self.nu()
            )));
        }
        let dim = xs[0].len();
        let mut acc = Vector::zeros(dim);
        for (i, x) in xs.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::DimensionMismatch("center: ragged state list".into()));
            }
            acc += x * self.mu[i];
        }
        Ok(acc)
    }
}

/// Required center-of-mass gain; `A + B Fbar` must be Hurwitz.
#[derive(Clone, Debug)]
pub struct HardSpec {
    fbar: Mat,
}

impl HardSpec {
    pub fn new(fbar: Mat, plant: &Plant, tol: &Tolerances) -> Result<Self> {
        ensure_shape("hard: fbar", &fbar, plant.m(), plant.n())?;
        ensure_finite("hard: fbar", &fbar)?;
        let acl = plant.a() + plant.b() * &fbar;
        if !numkit::is_hurwitz(&acl, tol)? {
            let worst = numkit::eigenvalues(&acl)?
                .iter()
                .cloned()
                .max_by(|a, b| a.re.partial_cmp(&b.re).unwrap())
                .unwrap();
            return Err(Error::NotHurwitz(format!(
                "a + b fbar has eigenvalue {} + {}i in the closed right half-plane",
                worst.re, worst.im
            )));
        }
        Ok(Self { fbar })
    }

    pub fn fbar(&self) -> &Mat {
        &self.fbar
    }
}

/// Factored optimal gain: the aggregate feedback is
/// `I_nu (x) F_alpha + (mu mu') (x) (F_center - F_alpha)` and is never
/// materialized unless explicitly requested.
#[derive(Clone, Debug)]
pub struct GainDecomposition {
    pub f_alpha: Mat,
    pub f_center: Mat,
    pub weights: Weights,
}

impl GainDecomposition {
    /// Per-agent control law `u_i = F_alpha x_i + mu_i (F_center - F_alpha) xbar
    /// + mu_i r`; `r` defaults to zero.
    pub fn apply_control(
        &self,
        i: usize,
        x_i: &Vector,
        xbar: &Vector,
        r: Option<&Vector>,
    ) -> Result<Vector> {
        let (m, n) = self.f_alpha.shape();
        if i >= self.weights.nu() {
            return Err(Error::DimensionMismatch(format!(
                "apply_control: agent {i} of {}",
                self.weights.nu()
            )));
        }
        if x_i.len() != n || xbar.len() != n {
            return Err(Error::DimensionMismatch(
                "apply_control: state length".into(),
            ));
        }
        let mu_i = self.weights.mu()[i];
        let mut u = &self.f_alpha * x_i + (&self.f_center - &self.f_alpha) * xbar * mu_i;
        if let Some(r) = r {
            if r.len() != m {
                return Err(Error::DimensionMismatch("apply_control: r length".into()));
            }
            u += r * mu_i;
        }
        Ok(u)
    }

    /// Explicit `nu*m x nu*n` aggregate gain. Memory grows as `nu^2`.
    pub fn materialize(&self) -> Mat {
        let mu = self.weights.mu();
        let dyad = mu * mu.transpose();
        let nu = self.weights.nu();
        numkit::kron(&Mat::identity(nu, nu), &self.f_alpha)
            + numkit::kron(&dyad, &(&self.f_center - &self.f_alpha))
    }
}

/// Achieved cost split per agent.
#[derive(Clone, Debug)]
pub struct CostReport {
    /// Total ensemble cost.
    pub j_total: f64,
    /// Per-agent unconstrained optimum `x_i0' X_alpha x_i0`.
    pub j_local: Vec<f64>,
    /// Per-agent coordination penalty.
    pub j_excess: Vec<f64>,
    /// Cumulative cost of deviating from the normalized center of mass;
    /// independent of the coordination constraint.
    pub j_consensus: f64,
}

/// Local LQR: stabilizing Riccati solution and gain `F_alpha = -B' X_alpha`.
pub fn local_gain(plant: &Plant, cost: &CostSpec, tol: &Tolerances) -> Result<(Mat, Mat)> {
    let x_alpha = solve_care(
        plant.a(),
        plant.b(),
        cost.q(),
        &Mat::identity(plant.m(), plant.m()),
        None,
        tol,
    )?;
    let f_alpha = -(plant.b().transpose() * &x_alpha);
    Ok((x_alpha, f_alpha))
}

/// Center-of-mass value: `Xbar` solving
/// `(A + B Fbar)' Xbar + Xbar (A + B Fbar) + Q + Fbar' Fbar = 0`.
pub fn center_value(
    plant: &Plant,
    cost: &CostSpec,
    hard: &HardSpec,
    tol: &Tolerances,
) -> Result<Mat> {
    let acl = plant.a() + plant.b() * hard.fbar();
    let q = cost.q() + hard.fbar().transpose() * hard.fbar();
    solve_lyapunov(&acl, &sym_part(&q), tol)
}

/// Full hard-constraint synthesis. Returns the factored gain together with
/// `X_alpha` and `Xbar`; verifies the ordering `Xbar >= X_alpha`.
///
/// ```
/// use coordlqr::coordsynth::{self, CostSpec, HardSpec, Plant, Weights};
/// use coordlqr::{Mat, Tolerances};
///
/// let tol = Tolerances::default();
/// let plant = Plant::new(
///     Mat::from_row_slice(1, 1, &[0.0]),
///     Mat::from_row_slice(1, 1, &[1.0]),
///     &tol,
/// )?;
/// let cost = CostSpec::new(Mat::identity(1, 1), &plant, &tol)?;
/// let weights = Weights::uniform(2)?;
/// let hard = HardSpec::new(Mat::from_row_slice(1, 1, &[-25.0]), &plant, &tol)?;
/// let (gains, _, _) = coordsynth::synthesize_hard(&plant, &cost, &weights, &hard, &tol)?;
/// let f = gains.materialize();
/// assert!((f - Mat::from_row_slice(2, 2, &[-13.0, -12.0, -12.0, -13.0])).norm() < 1e-10);
/// # Ok::<(), coordlqr::Error>(())
/// ```
pub fn synthesize_hard(
    plant: &Plant,
    cost: &CostSpec,
    weights: &Weights,
    hard: &HardSpec,
    tol: &Tolerances,
) -> Result<(GainDecomposition, Mat, Mat)> {
    let (x_alpha, f_alpha) = local_gain(plant, cost, tol)?;
    let xbar = center_value(plant, cost, hard, tol)?;
    let (lo, hi) = symmetric_eig_bounds(&(&xbar - &x_alpha));
    if lo < -tol.psd_slack * (1.0 + hi.abs()) {
        return Err(Error::Inconsistent(format!(
            "synthesize_hard: xbar - x_alpha has eigenvalue {lo:e}"
        )));
    }
    let gd = GainDecomposition {
        f_alpha,
        f_center: hard.fbar().clone(),
        weights: weights.clone(),
    };
    Ok((gd, x_alpha, xbar))
}

/// Cost decomposition for given initial conditions. The center initial
/// state is always recomputed from `x0s` and the masses.
pub fn optimal_cost(
    x_alpha: &Mat,
    xbar: &Mat,
    x0s: &[Vector],
    weights: &Weights,
    tol: &Tolerances,
) -> Result<CostReport> {
    let n = x_alpha.nrows();
    ensure_square("optimal_cost: x_alpha", x_alpha)?;
    ensure_shape("optimal_cost: xbar", xbar, n, n)?;
    let xbar0 = weights.center(x0s)?;
    if xbar0.len() != n {
        return Err(Error::DimensionMismatch(
            "optimal_cost: state length".into(),
        ));
    }
    let j_local: Vec<f64> = x0s
        .iter()
        .map(|x| (x.transpose() * x_alpha * x)[(0, 0)])
        .collect();
    let excess_form = (xbar0.transpose() * (xbar - x_alpha) * &xbar0)[(0, 0)];
    if excess_form < -tol.psd_slack * (1.0 + excess_form.abs()) {
        return Err(Error::Inconsistent(format!(
            "optimal_cost: negative coordination excess {excess_form:e}"
        )));
    }
    let j_excess: Vec<f64> = weights
        .mu()
        .iter()
        .map(|&mu_i| mu_i * mu_i * excess_form)
        .collect();
    let j_total = j_local.iter().sum::<f64>() + excess_form;
    let j_consensus = j_local.iter().sum::<f64>() - (xbar0.transpose() * x_alpha * &xbar0)[(0, 0)];
    Ok(CostReport {
        j_total,
        j_local,
        j_excess,
        j_consensus,
    })
}

/// Evaluate the consensus cost under two different admissible center gains
/// through the constraint-dependent route `J_total - xbar0' Xbar xbar0` and
/// confirm the two values coincide: the consensus cost does not depend on
/// the imposed constraint.
pub fn consensus_invariance_check(
    plant: &Plant,
    cost: &CostSpec,
    weights: &Weights,
    fbar_a: &HardSpec,
    fbar_b: &HardSpec,
    x0s: &[Vector],
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let eval = |hard: &HardSpec| -> Result<f64> {
        let (_, x_alpha, xbar) = synthesize_hard(plant, cost, weights, hard, tol)?;
        let report = optimal_cost(&x_alpha, &xbar, x0s, weights, tol)?;
        let xbar0 = weights.center(x0s)?;
        Ok(report.j_total - (xbar0.transpose() * &xbar * &xbar0)[(0, 0)])
    };
    let ja = eval(fbar_a)?;
    let jb = eval(fbar_b)?;
    if (ja - jb).abs() > 1e-10 * (1.0 + ja.abs()) {
        return Err(Error::Inconsistent(format!(
            "consensus cost depends on constraint: {ja} vs {jb}"
        )));
    }
    Ok((ja, jb))
}

/// Constrain only the projection `E' ubar = Fbar1 xbar` of the center input
/// and fill the remaining directions optimally. Returns the equivalent full
/// center gain `Fbar = E Fbar1 - (I - E E') B' X2`.
pub fn partial_constraint(
    plant: &Plant,
    cost: &CostSpec,
    e: &Mat,
    fbar1: &Mat,
    tol: &Tolerances,
) -> Result<Mat> {
    let m = plant.m();
    let k = e.ncols();
    if e.nrows() != m {
        return Err(Error::DimensionMismatch(format!(
            "partial: e has {} rows, expected {m}",
            e.nrows()
        )));
    }
    ensure_finite("partial: e", e)?;
    ensure_shape("partial: fbar1", fbar1, k, plant.n())?;
    ensure_finite("partial: fbar1", fbar1)?;
    if (e.transpose() * e - Mat::identity(k, k)).norm() > 1e-10 * (1.0 + k as f64) {
        return Err(Error::NotOrthonormal("partial: e".into()));
    }
    let acl = plant.a() + plant.b() * e * fbar1;
    let proj = Mat::identity(m, m) - e * e.transpose();
    let b_free = plant.b() * &proj;
    if !numkit::is_stabilizable(&acl, &b_free, tol)? {
        return Err(Error::NotStabilizable(
            "partial: (a + b e fbar1, b (i - e e'))".into(),
        ));
    }
    let q2 = sym_part(&(cost.q() + fbar1.transpose() * fbar1));
    let x2 = solve_care(&acl, &b_free, &q2, &Mat::identity(m, m), None, tol)?;
    Ok(e * fbar1 - &proj * plant.b().transpose() * &x2)
}

/// Constant DC feedforward matrix `sqrt(nu) [Tbar(0)]^-1` with
/// `Tbar(s) = (sI - A - B Fbar)^-1 B`; square inputs are inverted, wide or
/// tall ones resolved in the least-squares sense.
pub fn dc_feedforward_matrix(
    plant: &Plant,
    hard: &HardSpec,
    weights: &Weights,
    tol: &Tolerances,
) -> Result<Mat> {
    if !weights.is_uniform() {
        return Err(Error::AssumptionViolated(
            "dc feedforward requires uniform masses".into(),
        ));
    }
    let acl = plant.a() + plant.b() * hard.fbar();
    // Tbar(0) = -(a + b fbar)^-1 b
    let t0 = -(acl.lu().try_inverse().ok_or(Error::SingularDcGain)? * plant.b());
    let sqrt_nu = (weights.nu() as f64).sqrt();
    let (n, m) = t0.shape();
    if numkit::numerical_rank(&t0, tol)? < n.min(m) {
        return Err(Error::SingularDcGain);
    }
    let inv = if n == m {
        t0.lu().try_inverse().ok_or(Error::SingularDcGain)?
    } else {
        // pseudo-inverse via SVD
        numkit::svd_checked(&t0, true)?
            .pseudo_inverse(tol.rank_drop)
            .map_err(|_| Error::SingularDcGain)?
    };
    Ok(inv * sqrt_nu)
}

/// Feedforward `r = sqrt(nu) [Tbar(0)]^-1 x_ref`: a constant reference then
/// yields `(1/nu) sum x_i = x_ref` in steady state.
pub fn dc_feedforward(
    plant: &Plant,
    hard: &HardSpec,
    weights: &Weights,
    x_ref: &Vector,
    tol: &Tolerances,
) -> Result<Vector> {
    if x_ref.len() != plant.n() {
        return Err(Error::DimensionMismatch(
            "dc feedforward: x_ref length".into(),
        ));
    }
    Ok(dc_feedforward_matrix(plant, hard, weights, tol)? * x_ref)
}

/// Result of converting a weighted cost sum into mass rescaling.
#[derive(Clone, Debug)]
pub struct WeightedRescaling {
    /// Masses for the equivalent unweighted problem.
    pub weights: Weights,
    /// Per-agent signal scaling `sqrt(lambda_i)` to apply to states,
    /// inputs and initial conditions.
    pub signal_scale: Vec<f64>,
}

/// Reduce the weighted cost `sum lambda_i J_i` to the standard formulation:
/// scale agent signals by `sqrt(lambda_i)` and replace `mu_i` with
/// `mu_i / sqrt(lambda_i)` (renormalized).
pub fn rescale_weighted(lambdas: &[f64], weights: &Weights) -> Result<WeightedRescaling> {
    if lambdas.len() != weights.nu() {
        return Err(Error::DimensionMismatch(format!(
            "rescale: {} lambdas for {} masses",
            lambdas.len(),
            weights.nu()
        )));
    }
    for (i, &l) in lambdas.iter().enumerate() {
        if l <= 0.0 || !l.is_finite() {
            return Err(Error::NonPositiveWeight { index: i, value: l });
        }
    }
    let scaled = Vector::from_fn(weights.nu(), |i, _| weights.mu()[i] / lambdas[i].sqrt());
    Ok(WeightedRescaling {
        weights: Weights::normalized(&scaled)?,
        signal_scale: lambdas.iter().map(|l| l.sqrt()).collect(),
    })
}
