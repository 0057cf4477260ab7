//! Numerical observability certificates for the lifted range system.
//!
//! Three levels are evaluated on sliding windows of a noiseless truth run:
//!
//! * the 13-state Gramian of `(𝒜(t), 𝒞)`;
//! * the 9-state Gramian of the reduced pair `(Ā, r₄(t)R̄ᵀ(t))`, where `r₄` is
//!   the fourth row of the output-derivative recursion
//!   `rᵢ₊₁ = rᵢA + ṙᵢ + 𝒞_m𝒮ⁱ𝒯` and `R̄ = blkdiag(R, R, R)`;
//! * the excitation Gram matrix of `φ`, the position block of `r₄`.
//!
//! The reduced output `r₄R̄ᵀ` comes from the factorisation
//! `Φ₂₂(s, t) = R̄ᵀ(s) exp(Ā(s − t)) R̄(t)`: in the rotated coordinates
//! `R̄(t)x̄` the transition matrix is the constant nilpotent exponential.
//!
//! Carrying the recursion out in closed form gives
//!
//! ```text
//! r₄ = [ φᵀ | 4(ȧ + ω×a)ᵀ | 6aᵀ ],   φ = ä + 2ω×ȧ + ω×(ω×a) + ω̇×a
//! ```
//!
//! which is what [`r4_closed_form`] returns; [`r_recursion`] evaluates the
//! recursion itself with finite differences so the two can be compared.

use nalgebra::{DMatrix, Matrix3, SMatrix, SymmetricEigen};
use thiserror::Error;

use crate::augmented::{
    a_bar, block_rotation, build_a9, build_c_family, build_t, output_row, LtvModel, Mat13, Mat9,
    Row9,
};
use crate::scenario::{run_truth, RigidBodyTruth, ScenarioError, TrajectorySpec, WorldConstants};
use crate::so3::Vec3;

/// Relative singular-value cutoff for ranks, kernels and images.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("matrix is not nilpotent (no power up to {0} vanishes)")]
    NotNilpotent(usize),
    #[error("pair is not Kalman observable (rank {rank} < {n})")]
    NotKalmanObservable { rank: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("window [{start}, {end}] s is outside the scenario [0, {horizon}] s")]
    WindowOutOfRange { start: f64, end: f64, horizon: f64 },
    #[error("analysis step {dt} s is not an even multiple of the signal grid {grid} s")]
    Step { dt: f64, grid: f64 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Which Gramian a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GramianLevel {
    FullAugmented,
    ReducedPair,
    PePhi,
}

impl GramianLevel {
    pub fn name(&self) -> &'static str {
        match self {
            GramianLevel::FullAugmented => "full_augmented",
            GramianLevel::ReducedPair => "reduced_pair",
            GramianLevel::PePhi => "pe_phi",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianReport {
    pub t_start: f64,
    pub delta: f64,
    pub level: GramianLevel,
    /// Window-normalised Gramian `(1/δ)∫…`.
    pub gramian: DMatrix<f64>,
    pub min_eig: f64,
}

fn min_eig_dyn(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// `exp(Āτ) = I + τĀ + ½τ²Ā²` (Ā³ = 0).
pub fn nilpotent_exp(tau: f64) -> Mat9 {
    let a = a_bar();
    Mat9::identity() + tau * a + 0.5 * tau * tau * (a * a)
}

fn rk4_transition_step<const N: usize>(
    a: &impl Fn(f64) -> SMatrix<f64, N, N>,
    phi: &SMatrix<f64, N, N>,
    tau: f64,
    dt: f64,
) -> SMatrix<f64, N, N> {
    let (a0, am, a1) = (a(tau), a(tau + 0.5 * dt), a(tau + dt));
    let k1 = a0 * phi;
    let k2 = am * (phi + 0.5 * dt * k1);
    let k3 = am * (phi + 0.5 * dt * k2);
    let k4 = a1 * (phi + dt * k3);
    phi + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// `Φ(s_end, t)` from RK4 on `dΦ/dτ = A(τ)Φ`, `Φ(t, t) = I`.
pub fn transition_matrix<const N: usize>(
    a: impl Fn(f64) -> SMatrix<f64, N, N>,
    t: f64,
    s_end: f64,
    dt: f64,
) -> SMatrix<f64, N, N> {
    assert!(t <= s_end, "transition_matrix needs t <= s_end");
    let steps = ((s_end - t) / dt).round() as usize;
    let mut phi = SMatrix::<f64, N, N>::identity();
    for k in 0..steps {
        phi = rk4_transition_step(&a, &phi, t + k as f64 * dt, dt);
    }
    phi
}

/// Noiseless truth on a fine grid, addressable by time.
///
/// Analysis routines take RK4 steps of `dt`, which must be an even multiple
/// of the grid spacing so that stage midpoints land on grid samples.
#[derive(Debug, Clone)]
pub struct ScenarioSignals {
    truth: Vec<RigidBodyTruth>,
    grid: f64,
    world: WorldConstants,
}

impl ScenarioSignals {
    pub fn new(
        spec: &TrajectorySpec,
        world: &WorldConstants,
        grid: f64,
        horizon: f64,
    ) -> Result<Self, ObservabilityError> {
        Ok(ScenarioSignals {
            truth: run_truth(spec, world, grid, horizon)?,
            grid,
            world: *world,
        })
    }

    pub fn grid(&self) -> f64 {
        self.grid
    }

    pub fn horizon(&self) -> f64 {
        (self.truth.len() - 1) as f64 * self.grid
    }

    pub fn world(&self) -> &WorldConstants {
        &self.world
    }

    pub fn samples(&self) -> &[RigidBodyTruth] {
        &self.truth
    }

    fn index(&self, t: f64) -> usize {
        let k = (t / self.grid).round();
        assert!(
            k >= 0.0
                && (k as usize) < self.truth.len()
                && (k * self.grid - t).abs() <= 1e-6 * self.grid,
            "time {t} is not on the signal grid"
        );
        k as usize
    }

    /// Truth sample at grid time `t` (panics off-grid).
    pub fn at(&self, t: f64) -> &RigidBodyTruth {
        &self.truth[self.index(t)]
    }

    pub fn a9(&self, t: f64) -> Mat9 {
        build_a9(&self.at(t).omega)
    }

    /// Structural divisor between an analysis step and the grid.
    fn stride(&self, dt: f64) -> Result<usize, ObservabilityError> {
        let ratio = dt / self.grid;
        let r = ratio.round();
        if r < 2.0 || (ratio - r).abs() > 1e-6 || !(r as usize).is_multiple_of(2) {
            return Err(ObservabilityError::Step {
                dt,
                grid: self.grid,
            });
        }
        Ok(r as usize)
    }

    fn check_window(&self, start: f64, end: f64) -> Result<(), ObservabilityError> {
        let horizon = self.horizon();
        if start < -1e-12 || end > horizon + 1e-9 || end < start {
            return Err(ObservabilityError::WindowOutOfRange {
                start,
                end,
                horizon,
            });
        }
        Ok(())
    }
}

/// Closed-form `φ = ä + 2ω×ȧ + ω×(ω×a) + ω̇×a` (body frame).
pub fn phi(truth: &RigidBodyTruth) -> Vec3 {
    let RigidBodyTruth {
        a_b,
        a_b_dot,
        a_b_ddot,
        omega,
        omega_dot,
        ..
    } = truth;
    a_b_ddot + 2.0 * omega.cross(a_b_dot) + omega.cross(&omega.cross(a_b)) + omega_dot.cross(a_b)
}

/// Closed-form fourth row `[φᵀ | 4(ȧ + ω×a)ᵀ | 6aᵀ]`.
pub fn r4_closed_form(truth: &RigidBodyTruth) -> Row9 {
    let mut r = Row9::zeros();
    let blocks = [
        phi(truth),
        4.0 * (truth.a_b_dot + truth.omega.cross(&truth.a_b)),
        6.0 * truth.a_b,
    ];
    for (i, b) in blocks.iter().enumerate() {
        r.fixed_columns_mut::<3>(3 * i).copy_from(&b.transpose());
    }
    r
}

/// Reduced output `r₄(t) R̄ᵀ(t)` acting on `R̄ x̄`.
pub fn reduced_output(truth: &RigidBodyTruth) -> Row9 {
    r4_closed_form(truth) * block_rotation(truth.r.matrix()).transpose()
}

/// Rows `r₁..r₄` of the recursion together with the closed-form `r₄`.
#[derive(Debug, Clone, PartialEq)]
pub struct RRecursion {
    pub t: f64,
    pub rows: [Row9; 4],
    pub closed_r4: Row9,
}

impl RRecursion {
    /// `‖r₄(numeric) − r₄(closed)‖ / ‖r₄(closed)‖`.
    pub fn relative_mismatch(&self) -> f64 {
        (self.rows[3] - self.closed_r4).norm() / self.closed_r4.norm().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stencil {
    Central,
    Forward,
    Backward,
}

impl Stencil {
    /// Second-order difference applied uniformly, so the result is two samples
    /// shorter. Using one formula at every point keeps the truncation error
    /// smooth along the grid, which nested differentiation relies on.
    fn apply(self, values: &[Row9], h: f64) -> Vec<Row9> {
        values
            .windows(3)
            .map(|w| match self {
                Stencil::Central => (w[2] - w[0]) / (2.0 * h),
                Stencil::Forward => (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h),
                Stencil::Backward => (3.0 * w[2] - 4.0 * w[1] + w[0]) / (2.0 * h),
            })
            .collect()
    }

    /// Samples dropped from the front of the window by [`Stencil::apply`].
    fn front_shift(self) -> usize {
        match self {
            Stencil::Central => 1,
            Stencil::Forward => 0,
            Stencil::Backward => 2,
        }
    }
}

/// Evaluates `r₀ = 0`, `rᵢ₊₁ = rᵢA + ṙᵢ + 𝒞_m𝒮ⁱ𝒯` at time `t` with
/// derivatives taken by second-order finite differences of step `step` (a
/// multiple of the signal grid). Central differences are used when three steps
/// fit on both sides of `t`; near the ends of the run the differences are
/// one-sided.
pub fn r_recursion(
    signals: &ScenarioSignals,
    t: f64,
    step: f64,
) -> Result<RRecursion, ObservabilityError> {
    const LEVELS: usize = 4;
    let ratio = step / signals.grid;
    let stride = ratio.round() as usize;
    if stride == 0 || (ratio - stride as f64).abs() > 1e-6 {
        return Err(ObservabilityError::Step {
            dt: step,
            grid: signals.grid,
        });
    }
    signals.check_window(t, t)?;
    let centre = signals.index(t);
    let last = signals.truth.len() - 1;
    let reach = (LEVELS - 1) * stride;
    let (stencil, first) = if centre >= reach && centre + reach <= last {
        (Stencil::Central, centre - reach)
    } else if centre + 2 * reach <= last {
        (Stencil::Forward, centre)
    } else if centre >= 2 * reach {
        (Stencil::Backward, centre - 2 * reach)
    } else {
        return Err(ObservabilityError::WindowOutOfRange {
            start: t,
            end: t,
            horizon: signals.horizon(),
        });
    };
    let len = 2 * (LEVELS - 1) + 1;
    let samples: Vec<&RigidBodyTruth> = (0..len)
        .map(|j| &signals.truth[first + j * stride])
        .collect();

    let family = build_c_family();
    let t_rows: Vec<_> = samples.iter().map(|s| build_t(&family, &s.a_b)).collect();
    let a9: Vec<Mat9> = samples.iter().map(|s| build_a9(&s.omega)).collect();

    // `current[j]` lives at sample `offset + j`
    let mut current = vec![Row9::zeros(); len];
    let mut offset = 0;
    let mut rows = [Row9::zeros(); LEVELS];
    for (i, row) in rows.iter_mut().enumerate() {
        let (deriv, shift) = if i == 0 {
            (vec![Row9::zeros(); len], 0)
        } else {
            (stencil.apply(&current, step), stencil.front_shift())
        };
        offset += shift;
        current = deriv
            .iter()
            .enumerate()
            .map(|(j, d)| {
                let k = offset + j;
                let prev = if i == 0 {
                    Row9::zeros()
                } else {
                    current[j + shift]
                };
                prev * a9[k] + d + t_rows[k].row(i)
            })
            .collect();
        *row = current[centre_pos(stencil, i, LEVELS)];
    }
    Ok(RRecursion {
        t,
        rows,
        closed_r4: r4_closed_form(&signals.truth[centre]),
    })
}

/// Position of the evaluation point inside the level-`i` array.
fn centre_pos(stencil: Stencil, level: usize, levels: usize) -> usize {
    match stencil {
        Stencil::Central => levels - 1 - level,
        Stencil::Forward => 0,
        Stencil::Backward => 2 * (levels - 1 - level),
    }
}

fn window_steps(
    signals: &ScenarioSignals,
    t: f64,
    delta: f64,
    dt: f64,
) -> Result<usize, ObservabilityError> {
    if !(delta > 0.0) {
        return Err(ObservabilityError::WindowOutOfRange {
            start: t,
            end: t + delta,
            horizon: signals.horizon(),
        });
    }
    signals.stride(dt)?;
    signals.check_window(t, t + delta)?;
    let n = (delta / dt).round() as usize;
    if n == 0 || ((n as f64 * dt) - delta).abs() > 1e-9 * delta.max(1.0) {
        return Err(ObservabilityError::Step {
            dt,
            grid: signals.grid,
        });
    }
    Ok(n)
}

/// Trapezoidal `(1/δ)∫ f(s) ds` over `n` intervals of `dt`.
fn trapezoid<const N: usize>(
    n: usize,
    dt: f64,
    mut f: impl FnMut(usize) -> SMatrix<f64, N, N>,
) -> SMatrix<f64, N, N> {
    let mut acc = SMatrix::<f64, N, N>::zeros();
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * f(k);
    }
    acc * dt / (n as f64 * dt)
}

/// `(1/δ)∫ Φᵀ(s, t) Cᵀ(s) C(s) Φ(s, t) ds` over `n` RK4 steps of `dt`, with the
/// transition matrix and the trapezoid sharing the same grid.
pub fn ltv_gramian<const N: usize, const M: usize>(
    a: impl Fn(f64) -> SMatrix<f64, N, N>,
    c: impl Fn(f64) -> SMatrix<f64, M, N>,
    t: f64,
    n: usize,
    dt: f64,
) -> SMatrix<f64, N, N> {
    let mut phi = SMatrix::<f64, N, N>::identity();
    let mut path = Vec::with_capacity(n + 1);
    path.push(c(t) * phi);
    for k in 0..n {
        phi = rk4_transition_step(&a, &phi, t + k as f64 * dt, dt);
        path.push(c(t + (k + 1) as f64 * dt) * phi);
    }
    trapezoid(n, dt, |k| path[k].transpose() * path[k])
}

fn full_gramian(signals: &ScenarioSignals, t: f64, n: usize, dt: f64) -> Mat13 {
    let model = LtvModel::new(signals.world.g_i.norm_squared());
    let acal = |tau: f64| {
        let s = signals.at(tau);
        model.acal(&s.omega, &s.a_b)
    };
    ltv_gramian(acal, |_| output_row(), t, n, dt)
}

fn reduced_gramian(signals: &ScenarioSignals, t: f64, n: usize, dt: f64) -> Mat9 {
    trapezoid(n, dt, |k| {
        let tau = k as f64 * dt;
        let row = reduced_output(signals.at(t + tau)) * nilpotent_exp(tau);
        row.transpose() * row
    })
}

fn phi_gram(signals: &ScenarioSignals, t: f64, n: usize, dt: f64) -> Matrix3<f64> {
    trapezoid(n, dt, |k| {
        let p = phi(signals.at(t + k as f64 * dt));
        p * p.transpose()
    })
}

fn reduced_output_gram(signals: &ScenarioSignals, t: f64, n: usize, dt: f64) -> Mat9 {
    trapezoid(n, dt, |k| {
        let h = reduced_output(signals.at(t + k as f64 * dt));
        h.transpose() * h
    })
}

/// Window-normalised Gramian of the requested level on `[t, t + δ]`.
pub fn gramian(
    level: GramianLevel,
    signals: &ScenarioSignals,
    t: f64,
    delta: f64,
    dt: f64,
) -> Result<GramianReport, ObservabilityError> {
    let n = window_steps(signals, t, delta, dt)?;
    let gramian = match level {
        GramianLevel::FullAugmented => {
            let g = full_gramian(signals, t, n, dt);
            DMatrix::from_column_slice(13, 13, g.as_slice())
        }
        GramianLevel::ReducedPair => {
            let g = reduced_gramian(signals, t, n, dt);
            DMatrix::from_column_slice(9, 9, g.as_slice())
        }
        GramianLevel::PePhi => {
            let g = phi_gram(signals, t, n, dt);
            DMatrix::from_column_slice(3, 3, g.as_slice())
        }
    };
    let min_eig = min_eig_dyn(&gramian);
    Ok(GramianReport {
        t_start: t,
        delta,
        level,
        gramian,
        min_eig,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeReport {
    pub t_start: f64,
    pub delta: f64,
    /// `(1/δ)∫φφᵀ`.
    pub gram: Matrix3<f64>,
    pub min_eig: f64,
}

/// Smallest eigenvalue of `(1/δ₅)∫φφᵀ` over `[t, t + δ₅]`.
pub fn pe_margin(
    signals: &ScenarioSignals,
    t: f64,
    delta5: f64,
    dt: f64,
) -> Result<PeReport, ObservabilityError> {
    let n = window_steps(signals, t, delta5, dt)?;
    let gram = phi_gram(signals, t, n, dt);
    let min_eig = SymmetricEigen::new(gram).eigenvalues.min();
    Ok(PeReport {
        t_start: t,
        delta: delta5,
        gram,
        min_eig,
    })
}

/// `‖Φ₂₂(s, t) − R̄ᵀ(s) exp(Ā(s − t)) R̄(t)‖_F` with `Φ₂₂` from RK4 on `A(τ)`.
pub fn factorization_residual(
    signals: &ScenarioSignals,
    t: f64,
    s: f64,
    dt: f64,
) -> Result<f64, ObservabilityError> {
    window_steps(signals, t, s - t, dt)?;
    let phi22 = transition_matrix(|tau| signals.a9(tau), t, s, dt);
    let rs = block_rotation(signals.at(s).r.matrix());
    let rt = block_rotation(signals.at(t).r.matrix());
    Ok((phi22 - rs.transpose() * nilpotent_exp(s - t) * rt).norm())
}

// ---------------------------------------------------------------------------
// E-set machinery for nilpotent pairs

fn svd_rank_tol(s: &nalgebra::DVector<f64>) -> f64 {
    RANK_TOL * s.max().max(f64::MIN_POSITIVE)
}

/// Orthonormal basis of `ker(m)` (columns).
pub fn null_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 || m.iter().all(|x| *x == 0.0) {
        return DMatrix::identity(n, n);
    }
    let rows = m.nrows().max(n);
    let padded = DMatrix::from_fn(rows, n, |i, j| if i < m.nrows() { m[(i, j)] } else { 0.0 });
    let svd = padded.svd(false, true);
    let tol = svd_rank_tol(&svd.singular_values);
    let v_t = svd.v_t.expect("svd computed with v_t");
    let cols: Vec<_> = (0..n)
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column space of `m`.
pub fn column_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 || m.iter().all(|x| *x == 0.0) {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let tol = svd_rank_tol(&svd.singular_values);
    let u = svd.u.expect("svd computed with u");
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .map(|i| u.column(i).into_owned())
        .collect();
    DMatrix::from_columns(&cols)
}

/// Numerical rank with the relative cutoff [`RANK_TOL`].
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let s = m.clone().svd(false, false).singular_values;
    let tol = svd_rank_tol(&s);
    s.iter().filter(|&&x| x > tol && x > 0.0).count()
}

/// Largest principal angle between two subspaces given by orthonormal
/// columns; `π/2` when their dimensions differ.
pub fn largest_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if a.ncols() != b.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.ncols() == 0 {
        return 0.0;
    }
    // sines of the principal angles are the singular values of (I − AAᵀ)B
    let residual = b - a * (a.transpose() * b);
    let s = residual.svd(false, false).singular_values;
    s.max().min(1.0).asin()
}

/// One term `Im_{|L_k}(HAᵏ)` of the E-set union.
#[derive(Debug, Clone, PartialEq)]
pub struct ESubspace {
    pub k: usize,
    /// Orthonormal basis (columns) of `L_k = ⋂_{i>k} ker(HAⁱ)`.
    pub domain: DMatrix<f64>,
    /// Orthonormal basis (columns) of `HAᵏ L_k`.
    pub basis: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ESetBasis {
    /// Nilpotency index: smallest `q` with `Aᵠ = 0`.
    pub q: usize,
    /// Nonempty terms of the union, ordered by `k`.
    pub subspaces: Vec<ESubspace>,
}

impl ESetBasis {
    /// `min` over the union of the restricted quadratic form `zᵀGz`, `‖z‖ = 1`.
    pub fn restricted_margin(&self, gram: &DMatrix<f64>) -> f64 {
        self.subspaces
            .iter()
            .map(|s| min_eig_dyn(&(s.basis.transpose() * gram * &s.basis)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Builds `𝔼 = ⋃_{k<q} Im_{|L_k}(HAᵏ)` for a nilpotent, Kalman-observable pair.
pub fn e_set(a: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<ESetBasis, ObservabilityError> {
    let n = a.nrows();
    if a.ncols() != n || h.ncols() != n {
        return Err(ObservabilityError::Dimension(format!(
            "A is {}x{}, H is {}x{}",
            a.nrows(),
            a.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = a.norm().max(1.0);
    let mut powers = vec![DMatrix::<f64>::identity(n, n)];
    let mut q = None;
    for k in 1..=n {
        let next = &powers[k - 1] * a;
        let vanished = next.norm() <= RANK_TOL * scale.powi(k as i32);
        powers.push(next);
        if vanished {
            q = Some(k);
            break;
        }
    }
    let q = q.ok_or(ObservabilityError::NotNilpotent(n))?;

    // Powers at or beyond q vanish, so the first q blocks carry the full rank.
    let h_powers: Vec<DMatrix<f64>> = powers[..q].iter().map(|p| h * p).collect();
    let stacked = stack_rows(&h_powers, n);
    let r = rank(&stacked);
    if r < n {
        return Err(ObservabilityError::NotKalmanObservable { rank: r, n });
    }

    let mut subspaces = Vec::new();
    for k in 0..q {
        let tail = stack_rows(&h_powers[k + 1..], n);
        let domain = null_space(&tail);
        if domain.ncols() == 0 {
            continue;
        }
        let basis = column_space(&(&h_powers[k] * &domain));
        if basis.ncols() > 0 {
            subspaces.push(ESubspace { k, domain, basis });
        }
    }
    Ok(ESetBasis { q, subspaces })
}

fn stack_rows(blocks: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, n);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), n)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// `Ā` as a dynamic matrix.
pub fn a_bar_dyn() -> DMatrix<f64> {
    let a = a_bar();
    DMatrix::from_column_slice(9, 9, a.as_slice())
}

/// Restricted margin of the reduced output on the E-set of `(Ā, I₉)`:
/// `min_{z ∈ 𝔼, ‖z‖=1} (1/δ)∫ (r₄R̄ᵀz)² ds`.
pub fn e_set_margin(
    signals: &ScenarioSignals,
    basis: &ESetBasis,
    t: f64,
    delta: f64,
    dt: f64,
) -> Result<f64, ObservabilityError> {
    let n = window_steps(signals, t, delta, dt)?;
    let g = reduced_output_gram(signals, t, n, dt);
    Ok(basis.restricted_margin(&DMatrix::from_column_slice(9, 9, g.as_slice())))
}

/// Per-window comparison of the three observability levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheckRow {
    pub t_start: f64,
    pub delta: f64,
    pub full_min_eig: f64,
    pub reduced_min_eig: f64,
    pub pe_margin: f64,
    pub e_set_margin: f64,
    /// One level is clearly positive while another is numerically zero.
    pub disagreement: bool,
}

impl CrossCheckRow {
    pub fn level_value(&self, level: GramianLevel) -> f64 {
        match level {
            GramianLevel::FullAugmented => self.full_min_eig,
            GramianLevel::ReducedPair => self.reduced_min_eig,
            GramianLevel::PePhi => self.pe_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossCheckReport {
    pub rows: Vec<CrossCheckRow>,
    pub zero_tol: f64,
}

impl CrossCheckReport {
    /// Infimum over windows for one level.
    pub fn margin(&self, level: GramianLevel) -> f64 {
        self.rows
            .iter()
            .map(|r| r.level_value(level))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn e_set_margin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.e_set_margin)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn any_disagreement(&self) -> bool {
        self.rows.iter().any(|r| r.disagreement)
    }
}

/// Evaluates every level on windows `[t, t + δ]` for each `t` in `starts`.
/// A level counts as zero when its min-eigenvalue is at most `zero_tol`.
pub fn cross_check(
    signals: &ScenarioSignals,
    starts: &[f64],
    delta: f64,
    dt: f64,
    zero_tol: f64,
) -> Result<CrossCheckReport, ObservabilityError> {
    let basis = e_set(&a_bar_dyn(), &DMatrix::identity(9, 9))?;
    let rows = starts
        .iter()
        .map(|&t| {
            let full = gramian(GramianLevel::FullAugmented, signals, t, delta, dt)?.min_eig;
            let reduced = gramian(GramianLevel::ReducedPair, signals, t, delta, dt)?.min_eig;
            let pe = pe_margin(signals, t, delta, dt)?.min_eig;
            let e_margin = e_set_margin(signals, &basis, t, delta, dt)?;
            let positive = [full, reduced, pe]
                .iter()
                .filter(|v| **v > zero_tol)
                .count();
            Ok(CrossCheckRow {
                t_start: t,
                delta,
                full_min_eig: full,
                reduced_min_eig: reduced,
                pe_margin: pe,
                e_set_margin: e_margin,
                disagreement: positive != 0 && positive != 3,
            })
        })
        .collect::<Result<Vec<_>, ObservabilityError>>()?;
    Ok(CrossCheckReport { rows, zero_tol })
}

/// Window starts `0, stride, 2·stride, …` such that `[t, t + δ]` fits in `[0, horizon]`.
pub fn sliding_starts(horizon: f64, delta: f64, stride: f64) -> Vec<f64> {
    let count = ((horizon - delta) / stride + 1e-9).floor();
    if count < 0.0 {
        return Vec::new();
    }
    (0..=count as usize).map(|i| i as f64 * stride).collect()
}
