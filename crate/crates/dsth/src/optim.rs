//! The discrete code optimizer.
//!
//! Minimizes
//!
//! ```text
//! ‖X − U·Z‖²_F + β·‖W·Z − Y‖²_F + α·Tr(Z·(I − V Λ⁻¹ Vᵀ)·Zᵀ)
//! s.t.  Z ∈ {−1, 1}^{L×N},   Z·Zᵀ = N·I,   Z·1 = 0
//! ```
//!
//! with an augmented-Lagrangian scheme: the discrete constraint moves onto an
//! auxiliary copy `B` of the codes, residual slacks absorb the fidelity
//! terms, and each iteration solves closed-form subproblems for the slacks,
//! the bases, the discrete codes (an entry-wise sign), and the constrained
//! continuous codes (a scaled singular-basis product, completed against the
//! ones vector so bit balance holds by construction). Multiplier estimates
//! and a geometrically growing penalty close the loop.
//!
//! The ablation variants mirror the full optimizer with one ingredient
//! removed each; see [`Variant`].

use serde::{Deserialize, Serialize};

use crate::anchors::AnchorModel;
use crate::error::{Error, Result};
use crate::linalg::{
    center_columns, orthonormal_complement, solve_spd, thin_svd, DEFAULT_RANK_TOL,
};
use crate::matrix::Matrix;
use crate::rng::{gaussian_matrix, rng_for, stage_seed};
use crate::scalar::{real, Real};

/// Optimizer modes. `Full` is the complete method; the others reproduce the
/// standard ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// All three code constraints active.
    Full,
    /// Drops the discrete constraint: optimizes continuous codes and
    /// binarizes once at the end by per-bit mean thresholding ("dsth-i").
    RelaxedRounding,
    /// Drops the bit-balance constraint ("dsth-ii").
    NoBalance,
    /// Drops the bit-uncorrelation constraint; the continuous codes come
    /// from a ridge-regularized stationarity solve instead of the
    /// singular-basis construction ("dsth-iii").
    NoUncorrelation,
    /// Visual similarity preservation only: no factorization or transfer
    /// terms ("dsth-iv").
    VisualOnly,
}

impl Variant {
    /// CLI spelling.
    pub fn cli_name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::RelaxedRounding => "dsth-i",
            Variant::NoBalance => "dsth-ii",
            Variant::NoUncorrelation => "dsth-iii",
            Variant::VisualOnly => "dsth-iv",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Self> {
        Some(match name {
            "full" => Variant::Full,
            "dsth-i" => Variant::RelaxedRounding,
            "dsth-ii" => Variant::NoBalance,
            "dsth-iii" => Variant::NoUncorrelation,
            "dsth-iv" => Variant::VisualOnly,
            _ => return None,
        })
    }

    fn uses_discrete_copy(self) -> bool {
        self != Variant::RelaxedRounding
    }

    fn enforces_balance(self) -> bool {
        self != Variant::NoBalance
    }

    fn uses_fidelity_terms(self) -> bool {
        self != Variant::VisualOnly
    }
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone)]
pub struct DsthConfig<T> {
    /// Code length `L` (bits).
    pub code_length: usize,
    /// Graph-regularization weight α.
    pub alpha: T,
    /// Semantic-transfer weight β.
    pub beta: T,
    /// Initial penalty μ₀.
    pub mu0: T,
    /// Penalty growth factor ρ > 1.
    pub rho: T,
    /// Penalty cap.
    pub mu_max: T,
    pub max_iter: usize,
    /// Stop once the objective's relative spread over the last three
    /// iterations falls below this.
    pub rel_tol: T,
    pub variant: Variant,
    pub seed: u64,
}

impl<T: Real> Default for DsthConfig<T> {
    fn default() -> Self {
        DsthConfig {
            code_length: 16,
            alpha: real(1e-4),
            beta: real(1e2),
            mu0: real(1e-2),
            rho: real(2.0),
            // High enough that a 50-iteration horizon never hits it: pinning
            // the penalty lets the code-gap multiplier drift and the
            // iteration cycle instead of flattening.
            mu_max: real(1e14),
            max_iter: 50,
            rel_tol: real(1e-4),
            variant: Variant::Full,
            seed: 0,
        }
    }
}

impl<T: Real> DsthConfig<T> {
    pub fn validate(&self, d_x: usize, n: usize) -> Result<()> {
        if self.code_length < 2 {
            return Err(Error::Config(format!(
                "code_length {} < 2",
                self.code_length
            )));
        }
        if self.code_length > d_x.min(n) {
            return Err(Error::Config(format!(
                "code_length {} exceeds min(d_x={d_x}, N={n})",
                self.code_length
            )));
        }
        if self.alpha < T::zero() || self.beta < T::zero() {
            return Err(Error::Config("alpha and beta must be >= 0".into()));
        }
        if !(self.mu0 > T::zero()) {
            return Err(Error::Config("mu0 must be > 0".into()));
        }
        if !(self.rho > T::one()) {
            return Err(Error::Config("rho must be > 1".into()));
        }
        if self.mu_max < self.mu0 {
            return Err(Error::Config("mu_max must be >= mu0".into()));
        }
        if !(self.rel_tol >= T::zero()) {
            return Err(Error::Config("rel_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Live optimizer variables.
///
/// `relaxed` is the constraint-feasible continuous code iterate and
/// `discrete` its ±1 auxiliary copy; `visual_slack` / `text_slack` absorb the
/// fidelity residuals, and the `*_mult` matrices estimate the Lagrange
/// multipliers of the three couplings.
#[derive(Debug, Clone)]
pub struct TrainState<T> {
    /// `L×N`, satisfies the uncorrelation/balance constraints of the variant.
    pub relaxed: Matrix<T>,
    /// `L×N`, entries exactly ±1.
    pub discrete: Matrix<T>,
    /// Visual basis (`d_x × L`).
    pub visual_basis: Matrix<T>,
    /// Text transfer map (`d_y × L`).
    pub text_transfer: Matrix<T>,
    /// Visual residual slack (`d_x × N`).
    pub visual_slack: Matrix<T>,
    /// Text residual slack (`d_y × N`).
    pub text_slack: Matrix<T>,
    pub visual_mult: Matrix<T>,
    pub text_mult: Matrix<T>,
    pub code_mult: Matrix<T>,
    /// Current penalty μ.
    pub penalty: T,
    pub iter: usize,
}

impl<T: Real> TrainState<T> {
    /// `‖Z·Zᵀ − N·I‖_F`
    pub fn uncorrelation_defect(&self) -> T {
        let n = real::<T>(self.relaxed.cols() as f64);
        let mut gram = self.relaxed.mul_transpose(&self.relaxed);
        for i in 0..gram.rows() {
            let v = gram.at(i, i) - n;
            gram.set(i, i, v);
        }
        gram.frob_norm()
    }

    /// `‖Z·1‖_∞`
    pub fn balance_defect(&self) -> T {
        self.relaxed
            .row_sums()
            .into_iter()
            .map(|s| s.abs())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// One trace row per executed iteration.
#[derive(Debug, Clone)]
pub struct FitRecord<T> {
    pub iter: usize,
    /// Variant objective evaluated at the discrete codes.
    pub objective: T,
    /// Variant objective evaluated at the continuous iterate (sign of `Z`),
    /// for convergence plots that track the relaxed codes instead.
    pub objective_relaxed: T,
    /// Augmented-Lagrangian value at the end of the iteration.
    pub aug_lagrangian: T,
    /// `‖X − U·Z − A_x‖_F`
    pub res_visual: T,
    /// `‖Y − W·Z − A_y‖_F`
    pub res_text: T,
    /// `‖Z − B‖_F`
    pub res_code_gap: T,
    /// Penalty in effect during the iteration.
    pub mu: T,
    /// `‖Z·Zᵀ − N·I‖_F` after the Z-update.
    pub uncorrelation_defect: T,
    /// `‖Z·1‖_∞` after the Z-update.
    pub balance_defect: T,
    /// Whether every entry of the discrete copy is exactly ±1.
    pub discrete_exact: bool,
}

/// Per-iteration history of a fit.
#[derive(Debug, Clone)]
pub struct FitTrace<T> {
    pub records: Vec<FitRecord<T>>,
}

impl<T> Default for FitTrace<T> {
    fn default() -> Self {
        FitTrace {
            records: Vec::new(),
        }
    }
}

impl<T: Real> FitTrace<T> {
    /// CSV with the fixed header `iter,objective,aug_lagrangian,res_x,res_y,res_zb,mu`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,objective,aug_lagrangian,res_x,res_y,res_zb,mu\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iter,
                r.objective.to_f64_lossy(),
                r.aug_lagrangian.to_f64_lossy(),
                r.res_visual.to_f64_lossy(),
                r.res_text.to_f64_lossy(),
                r.res_code_gap.to_f64_lossy(),
                r.mu.to_f64_lossy(),
            ));
        }
        out
    }
}

/// Binary codes in {0,1}, one column per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryCodes {
    code_length: usize,
    n: usize,
    /// Column-major bits, one byte per bit.
    bits: Vec<u8>,
}

impl BinaryCodes {
    /// Converts a ±1 matrix through `(b + 1) / 2`.
    pub fn from_signs<T: Real>(m: &Matrix<T>) -> Self {
        let bits = m
            .data()
            .iter()
            .map(|&v| if v > T::zero() { 1u8 } else { 0u8 })
            .collect();
        BinaryCodes {
            code_length: m.rows(),
            n: m.cols(),
            bits,
        }
    }

    pub fn code_length(&self) -> usize {
        self.code_length
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Bits of sample `n` ({0,1} bytes, length `code_length`).
    pub fn column(&self, n: usize) -> &[u8] {
        &self.bits[n * self.code_length..(n + 1) * self.code_length]
    }

    /// Back to a ±1 matrix.
    pub fn to_signs<T: Real>(&self) -> Matrix<T> {
        Matrix::from_col_major(
            self.code_length,
            self.n,
            self.bits
                .iter()
                .map(|&b| if b == 1 { T::one() } else { -T::one() })
                .collect(),
        )
    }
}

/// Output of [`DsthOptimizer::fit`].
#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub codes: BinaryCodes,
    pub visual_basis: Matrix<T>,
    pub text_transfer: Matrix<T>,
    pub trace: FitTrace<T>,
    /// Variant objective of the freshly initialized state, before any
    /// iteration ran.
    pub initial_objective: T,
}

/// Binds the training inputs to a configuration. All update operations are
/// exposed individually so the iteration can be driven and inspected step by
/// step; [`DsthOptimizer::fit`] is the standard loop.
pub struct DsthOptimizer<'a, T: Real> {
    x: &'a Matrix<T>,
    y: &'a Matrix<T>,
    anchors: &'a AnchorModel<T>,
    cfg: &'a DsthConfig<T>,
}

impl<'a, T: Real> DsthOptimizer<'a, T> {
    pub fn new(
        x: &'a Matrix<T>,
        y: &'a Matrix<T>,
        anchors: &'a AnchorModel<T>,
        cfg: &'a DsthConfig<T>,
    ) -> Result<Self> {
        let n = x.cols();
        if y.cols() != n {
            return Err(Error::Dimension(format!(
                "visual has {n} samples, text has {}",
                y.cols()
            )));
        }
        if anchors.n() != n {
            return Err(Error::Dimension(format!(
                "anchor model covers {} samples, features have {n}",
                anchors.n()
            )));
        }
        cfg.validate(x.rows(), n)?;
        Ok(DsthOptimizer { x, y, anchors, cfg })
    }

    pub fn config(&self) -> &DsthConfig<T> {
        self.cfg
    }

    fn n(&self) -> usize {
        self.x.cols()
    }

    /// Feasible start: a seeded Gaussian is centered and factorized so that
    /// `Z = √N·P·Qᵀ` meets both code constraints at iteration zero. Rank
    /// collapses trigger a redraw. With `N = L` the balance constraint is
    /// dimensionally impossible (rows of an orthogonal Z cannot all be
    /// orthogonal to the ones vector), so centering is skipped and only
    /// uncorrelation holds.
    pub fn initialize_state(&self) -> Result<TrainState<T>> {
        let n = self.n();
        let l = self.cfg.code_length;
        let balance_possible = n > l;
        let sqrt_n = real::<T>(n as f64).sqrt();
        let base_seed = stage_seed(self.cfg.seed, "optim/init");

        let mut relaxed = None;
        for attempt in 0..8u64 {
            let mut rng = rng_for(base_seed.wrapping_add(attempt));
            let g: Matrix<T> = gaussian_matrix(l, n, &mut rng);
            let g = if balance_possible {
                center_columns(&g)
            } else {
                g
            };
            let svd = thin_svd(&g, real(DEFAULT_RANK_TOL))?;
            if svd.rank() == l {
                relaxed = Some(svd.left.mul_transpose(&svd.right).scaled(sqrt_n));
                break;
            }
        }
        let relaxed = relaxed
            .ok_or_else(|| Error::Numerical("could not draw a full-rank initialization".into()))?;

        let discrete = relaxed.signs();
        let inv_n = T::one() / real::<T>(n as f64);
        let visual_basis = self.x.mul_transpose(&relaxed).scaled(inv_n);
        let text_transfer = self.y.mul_transpose(&relaxed).scaled(inv_n);
        Ok(TrainState {
            relaxed,
            discrete,
            visual_basis,
            text_transfer,
            visual_slack: Matrix::zeros(self.x.rows(), n),
            text_slack: Matrix::zeros(self.y.rows(), n),
            visual_mult: Matrix::zeros(self.x.rows(), n),
            text_mult: Matrix::zeros(self.y.rows(), n),
            code_mult: Matrix::zeros(l, n),
            penalty: self.cfg.mu0,
            iter: 0,
        })
    }

    /// `X − U·Z + E_x/μ` and its text analogue: the fidelity targets that
    /// recur in every subproblem.
    fn fidelity_targets(&self, st: &TrainState<T>) -> (Matrix<T>, Matrix<T>) {
        let inv_mu = T::one() / st.penalty;
        let mut mx = self.x.sub(&st.visual_slack);
        mx.add_scaled(&st.visual_mult, inv_mu);
        let mut my = self.y.sub(&st.text_slack);
        my.add_scaled(&st.text_mult, inv_mu);
        (mx, my)
    }

    /// Slack updates: `A_x = (μX − μUZ + E_x)/(2 + μ)`, text analogue.
    pub fn update_auxiliary(&self, st: &mut TrainState<T>) {
        if !self.cfg.variant.uses_fidelity_terms() {
            return;
        }
        let mu = st.penalty;
        let denom = T::one() / (T::one() + T::one() + mu);
        let uz = st.visual_basis.mul(&st.relaxed);
        let mut ax = self.x.sub(&uz);
        ax.scale(mu);
        ax.add_scaled(&st.visual_mult, T::one());
        ax.scale(denom);
        st.visual_slack = ax;

        let wz = st.text_transfer.mul(&st.relaxed);
        let mut ay = self.y.sub(&wz);
        ay.scale(mu);
        ay.add_scaled(&st.text_mult, T::one());
        ay.scale(denom);
        st.text_slack = ay;
    }

    /// Basis updates. With the uncorrelation constraint in effect the normal
    /// equations collapse to `U = (X − A_x + E_x/μ)·Zᵀ / N`; without it the
    /// Gram matrix `Z·Zᵀ` is inverted with a small ridge.
    pub fn update_bases(&self, st: &mut TrainState<T>) -> Result<()> {
        if !self.cfg.variant.uses_fidelity_terms() {
            return Ok(());
        }
        let (mx, my) = self.fidelity_targets(st);
        if self.cfg.variant == Variant::NoUncorrelation {
            let mut gram = st.relaxed.mul_transpose(&st.relaxed);
            let ridge = real::<T>(1e-8);
            for i in 0..gram.rows() {
                let v = gram.at(i, i) + ridge;
                gram.set(i, i, v);
            }
            // U solves U·(ZZᵀ + εI) = Mx·Zᵀ; transpose to a SPD solve.
            let rhs_u = st.relaxed.mul_transpose(&mx); // (Mx·Zᵀ)ᵀ = Z·Mxᵀ
            st.visual_basis = solve_spd(&gram, &rhs_u)?.transpose();
            let rhs_w = st.relaxed.mul_transpose(&my);
            st.text_transfer = solve_spd(&gram, &rhs_w)?.transpose();
        } else {
            let inv_n = T::one() / real::<T>(self.n() as f64);
            st.visual_basis = mx.mul_transpose(&st.relaxed).scaled(inv_n);
            st.text_transfer = my.mul_transpose(&st.relaxed).scaled(inv_n);
        }
        Ok(())
    }

    /// Discrete update: `B = sign(Z + E_z/μ − (α/μ)·Z·(I − VΛ⁻¹Vᵀ))` with
    /// `sign(0) = +1`. Entry-wise it is the exact minimizer of the discrete
    /// subproblem.
    pub fn update_codes_b(&self, st: &mut TrainState<T>) -> Result<()> {
        if !self.cfg.variant.uses_discrete_copy() {
            return Ok(());
        }
        let inv_mu = T::one() / st.penalty;
        let lap = self.anchors.apply_laplacian(&st.relaxed)?;
        let mut arg = st.relaxed.clone();
        arg.add_scaled(&st.code_mult, inv_mu);
        arg.add_scaled(&lap, -(self.cfg.alpha * inv_mu));
        st.discrete = arg.signs();
        Ok(())
    }

    /// The matrix `C` whose inner product with `Z` the continuous-code
    /// subproblem maximizes (before centering).
    pub fn z_subproblem_matrix(&self, st: &TrainState<T>) -> Result<Matrix<T>> {
        let inv_mu = T::one() / st.penalty;
        let alpha_mu = self.cfg.alpha * inv_mu;
        let mut c = if self.cfg.variant.uses_discrete_copy() {
            let lap = self.anchors.apply_laplacian(&st.discrete)?;
            let mut c = st.discrete.clone();
            c.add_scaled(&st.code_mult, -inv_mu);
            c.add_scaled(&lap, -alpha_mu);
            c
        } else {
            // Linearize the quadratic graph term at the previous iterate.
            let lap = self.anchors.apply_laplacian(&st.relaxed)?;
            lap.scaled(-alpha_mu)
        };
        if self.cfg.variant.uses_fidelity_terms() {
            let (mx, my) = self.fidelity_targets(st);
            c.add_scaled(&st.visual_basis.transpose_mul(&mx), T::one());
            c.add_scaled(&st.text_transfer.transpose_mul(&my), self.cfg.beta);
        }
        Ok(c)
    }

    /// Continuous-code update. Under the uncorrelation constraint: center
    /// `C`, factorize, complete the singular bases (the right completion
    /// orthogonal to the ones vector), and set `Z = √N·[P,P̂]·[Q,Q̂]ᵀ`. The
    /// `NoUncorrelation` variant instead solves the ridge stationarity
    /// system and re-centers rows.
    pub fn update_codes_z(&self, st: &mut TrainState<T>) -> Result<()> {
        let c = self.z_subproblem_matrix(st)?;
        if self.cfg.variant == Variant::NoUncorrelation {
            let mut lhs = st.visual_basis.transpose_mul(&st.visual_basis);
            let wtw = st.text_transfer.transpose_mul(&st.text_transfer);
            lhs.add_scaled(&wtw, self.cfg.beta);
            for i in 0..lhs.rows() {
                let v = lhs.at(i, i) + T::one();
                lhs.set(i, i, v);
            }
            let z = solve_spd(&lhs, &c)?;
            st.relaxed = center_columns(&z);
            return Ok(());
        }

        let balance = self.cfg.variant.enforces_balance();
        let c = if balance { center_columns(&c) } else { c };
        let svd = thin_svd(&c, real(DEFAULT_RANK_TOL))?;
        let l = self.cfg.code_length;
        let n = self.n();
        let missing = l - svd.rank();
        let (p_full, q_full) = if missing == 0 {
            (svd.left, svd.right)
        } else {
            let seed_p =
                stage_seed(self.cfg.seed, "optim/z-complete-p").wrapping_add(st.iter as u64);
            let seed_q =
                stage_seed(self.cfg.seed, "optim/z-complete-q").wrapping_add(st.iter as u64);
            let p_hat = orthonormal_complement(&svd.left, None, missing, seed_p)?;
            let ones = vec![T::one(); n];
            let extra = if balance { Some(ones.as_slice()) } else { None };
            let q_hat = orthonormal_complement(&svd.right, extra, missing, seed_q).map_err(
                |e| match e {
                    Error::Config(m) => Error::Config(format!(
                        "cannot complete the code basis (N={n} too small for L={l}): {m}"
                    )),
                    other => other,
                },
            )?;
            (svd.left.hcat(&p_hat), svd.right.hcat(&q_hat))
        };
        let sqrt_n = real::<T>(n as f64).sqrt();
        st.relaxed = p_full.mul_transpose(&q_full).scaled(sqrt_n);
        Ok(())
    }

    /// Multiplier and penalty schedule: `E += μ·residual`, `μ ← min(ρμ, μ_max)`.
    pub fn update_multipliers(&self, st: &mut TrainState<T>) {
        let mu = st.penalty;
        if self.cfg.variant.uses_fidelity_terms() {
            let uz = st.visual_basis.mul(&st.relaxed);
            let mut rx = self.x.sub(&uz);
            rx.add_scaled(&st.visual_slack, -T::one());
            st.visual_mult.add_scaled(&rx, mu);

            let wz = st.text_transfer.mul(&st.relaxed);
            let mut ry = self.y.sub(&wz);
            ry.add_scaled(&st.text_slack, -T::one());
            st.text_mult.add_scaled(&ry, mu);
        }
        if self.cfg.variant.uses_discrete_copy() {
            let gap = st.relaxed.sub(&st.discrete);
            st.code_mult.add_scaled(&gap, mu);
        }
        st.penalty = (self.cfg.rho * mu).min(self.cfg.mu_max);
    }

    /// Full objective at a ±1 code matrix:
    /// `‖X − U·codes‖² + β‖W·codes − Y‖² + α·Tr(codes·(I−S)·codesᵀ)`.
    pub fn objective_value(
        &self,
        codes: &Matrix<T>,
        visual_basis: &Matrix<T>,
        text_transfer: &Matrix<T>,
    ) -> Result<T> {
        let fit_x = self.x.sub(&visual_basis.mul(codes)).frob_norm();
        let fit_y = text_transfer.mul(codes).sub(self.y).frob_norm();
        let graph = codes.frob_dot(&self.anchors.apply_laplacian(codes)?);
        Ok(fit_x * fit_x + self.cfg.beta * fit_y * fit_y + self.cfg.alpha * graph)
    }

    /// Variant objective at the current discrete codes (mean-thresholded
    /// continuous codes under `RelaxedRounding`).
    pub fn trace_objective(&self, st: &TrainState<T>) -> Result<T> {
        let codes = if self.cfg.variant.uses_discrete_copy() {
            st.discrete.clone()
        } else {
            mean_threshold_signs(&st.relaxed)
        };
        if self.cfg.variant.uses_fidelity_terms() {
            self.objective_value(&codes, &st.visual_basis, &st.text_transfer)
        } else {
            let graph = codes.frob_dot(&self.anchors.apply_laplacian(&codes)?);
            Ok(self.cfg.alpha * graph)
        }
    }

    /// Augmented-Lagrangian value of the current state (variant-aware).
    pub fn aug_lagrangian_value(&self, st: &TrainState<T>) -> Result<T> {
        let uz = st.visual_basis.mul(&st.relaxed);
        let wz = st.text_transfer.mul(&st.relaxed);
        self.aug_lagrangian_with(st, &uz, &wz)
    }

    fn aug_lagrangian_with(&self, st: &TrainState<T>, uz: &Matrix<T>, wz: &Matrix<T>) -> Result<T> {
        let mu = st.penalty;
        let inv_mu = T::one() / mu;
        let half = real::<T>(0.5);
        let mut total = T::zero();
        if self.cfg.variant.uses_fidelity_terms() {
            let ax = st.visual_slack.frob_norm();
            let ay = st.text_slack.frob_norm();
            total += ax * ax + ay * ay;
            let mut rx = self.x.sub(uz);
            rx.add_scaled(&st.visual_slack, -T::one());
            rx.add_scaled(&st.visual_mult, inv_mu);
            let nx = rx.frob_norm();
            let mut ry = self.y.sub(wz);
            ry.add_scaled(&st.text_slack, -T::one());
            ry.add_scaled(&st.text_mult, inv_mu);
            let ny = ry.frob_norm();
            total += half * mu * (nx * nx + self.cfg.beta * ny * ny);
        }
        if self.cfg.variant.uses_discrete_copy() {
            let lap_b = self.anchors.apply_laplacian(&st.discrete)?;
            total += self.cfg.alpha * st.relaxed.frob_dot(&lap_b);
            let mut gap = st.relaxed.sub(&st.discrete);
            gap.add_scaled(&st.code_mult, inv_mu);
            let ng = gap.frob_norm();
            total += half * mu * ng * ng;
        } else {
            let lap_z = self.anchors.apply_laplacian(&st.relaxed)?;
            total += self.cfg.alpha * st.relaxed.frob_dot(&lap_z);
        }
        Ok(total)
    }

    /// One full iteration in the presentation order: slacks → bases →
    /// discrete codes → continuous codes → multipliers. The discrete update
    /// sees the previous `Z`; the continuous update sees the fresh `B`.
    pub fn step(&self, st: &mut TrainState<T>) -> Result<FitRecord<T>> {
        let mu_used = st.penalty;
        self.update_auxiliary(st);
        self.update_bases(st)?;
        self.update_codes_b(st)?;
        self.update_codes_z(st)?;

        let uncorrelation_defect = st.uncorrelation_defect();
        let balance_defect = st.balance_defect();
        let discrete_exact = st
            .discrete
            .data()
            .iter()
            .all(|&v| v == T::one() || v == -T::one());

        self.update_multipliers(st);
        st.iter += 1;

        let objective = self.trace_objective(st)?;
        let objective_relaxed = {
            let signs = st.relaxed.signs();
            if self.cfg.variant.uses_fidelity_terms() {
                self.objective_value(&signs, &st.visual_basis, &st.text_transfer)?
            } else {
                self.cfg.alpha * signs.frob_dot(&self.anchors.apply_laplacian(&signs)?)
            }
        };
        let uz = st.visual_basis.mul(&st.relaxed);
        let wz = st.text_transfer.mul(&st.relaxed);
        let aug_lagrangian = self.aug_lagrangian_with(st, &uz, &wz)?;
        let res_visual = {
            let mut r = self.x.sub(&uz);
            r.add_scaled(&st.visual_slack, -T::one());
            r.frob_norm()
        };
        let res_text = {
            let mut r = self.y.sub(&wz);
            r.add_scaled(&st.text_slack, -T::one());
            r.frob_norm()
        };
        let res_code_gap = st.relaxed.sub(&st.discrete).frob_norm();
        Ok(FitRecord {
            iter: st.iter,
            objective,
            objective_relaxed,
            aug_lagrangian,
            res_visual,
            res_text,
            res_code_gap,
            mu: mu_used,
            uncorrelation_defect,
            balance_defect,
            discrete_exact,
        })
    }

    /// Runs the iteration to convergence and returns {0,1} codes.
    ///
    /// Stops at `max_iter` or once the objective's relative spread over the
    /// last three iterations drops below `rel_tol`.
    pub fn fit(&self) -> Result<FitResult<T>> {
        let mut st = self.initialize_state()?;
        let initial_objective = self.trace_objective(&st)?;
        let mut trace = FitTrace::default();
        for it in 0..self.cfg.max_iter {
            let rec = self.step(&mut st)?;
            if !rec.objective.is_finite() {
                return Err(Error::Numerical(format!(
                    "objective became non-finite at iteration {}",
                    it + 1
                )));
            }
            trace.records.push(rec);
            if converged(&trace, self.cfg.rel_tol) {
                break;
            }
        }
        let signs = if self.cfg.variant.uses_discrete_copy() {
            st.discrete.clone()
        } else {
            mean_threshold_signs(&st.relaxed)
        };
        let (visual_basis, text_transfer) = if self.cfg.variant.uses_fidelity_terms() {
            (st.visual_basis, st.text_transfer)
        } else {
            // Least-squares fits against the final codes, for persistence.
            let inv_n = T::one() / real::<T>(self.n() as f64);
            (
                self.x.mul_transpose(&st.relaxed).scaled(inv_n),
                self.y.mul_transpose(&st.relaxed).scaled(inv_n),
            )
        };
        Ok(FitResult {
            codes: BinaryCodes::from_signs(&signs),
            visual_basis,
            text_transfer,
            trace,
            initial_objective,
        })
    }
}

fn converged<T: Real>(trace: &FitTrace<T>, rel_tol: T) -> bool {
    let n = trace.records.len();
    if n < 3 {
        return false;
    }
    let window = &trace.records[n - 3..];
    let hi = window
        .iter()
        .map(|r| r.objective)
        .fold(T::neg_infinity(), |a, b| a.max(b));
    let lo = window
        .iter()
        .map(|r| r.objective)
        .fold(T::infinity(), |a, b| a.min(b));
    let scale = window[2].objective.abs().max(real(1e-12));
    (hi - lo) / scale < rel_tol
}

/// Per-bit mean thresholding: +1 where the entry is at least its row mean.
pub fn mean_threshold_signs<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    let inv_n = T::one() / real::<T>(m.cols() as f64);
    let means: Vec<T> = m.row_sums().into_iter().map(|s| s * inv_n).collect();
    Matrix::from_fn(m.rows(), m.cols(), |r, c| {
        if m.at(r, c) >= means[r] {
            T::one()
        } else {
            -T::one()
        }
    })
}
