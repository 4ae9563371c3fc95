//! Discrete update rules (mirror descent / SGD, Kalman gradient descent,
//! generalized and Polyak momentum), the continuous first-order flow they
//! discretize, momentum-representation utilities, and the run loop that
//! drives them from a noisy gradient stream.
//!
//! Update rules take only the observed gradient stream (or a filter of it).
//! The true gradient is never passed to them; the run loop keeps the problem
//! instance to itself and uses it only to record loss gaps.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::bregman::{MapKind, Metric, MirrorMap};
use crate::diagnostics::{qv_accumulate, Trajectory};
use crate::error::{Error, Result};
use crate::gradient_models::{
    kalman_discrete_step, kalman_steady_gain, stationary_covariance, KalmanState,
    MartingaleGradientModel, MartingaleStream, StateSpaceGradientModel, StateSpaceStream,
};
use crate::harness::problem::ProblemInstance;
use crate::linalg;
use crate::rng::{component_rng, standard_normal, Rng, Stream};
use crate::scalar::Real;
use crate::schedules::{LearningRatePath, Mesh, Schedule, VectorLearningRatePath};

/// `X' = ∇h*(∇h(X) − φ·g)`. With `h = ½‖·‖²` this is `X − φ·g`.
pub fn mirror_descent_step<T: Real>(map: &MirrorMap<T>, x: ArrayView1<'_, T>, g: ArrayView1<'_, T>, phi: T) -> Result<Array1<T>> {
    if g.len() != x.len() {
        return Err(Error::Invalid("gradient and iterate differ in dimension".into()));
    }
    let mut z = map.grad(x)?;
    z.scaled_add(-phi, &g);
    map.grad_dual(z.view())
}

/// Effective gradient `Σ_j φ_j ŷ_{·,j}` of a `d × d̃` filter mean.
pub fn filter_direction<T: Real>(y_hat: ArrayView2<'_, T>, phi_vec: ArrayView1<'_, T>) -> Result<Array1<T>> {
    if y_hat.ncols() != phi_vec.len() {
        return Err(Error::Invalid(format!(
            "filter has {} states but the learning rate has {}",
            y_hat.ncols(),
            phi_vec.len()
        )));
    }
    Ok(y_hat.dot(&phi_vec))
}

/// `X' = ∇h*(∇h(X) − Σ_j φ_j ŷ_{·,j})`.
pub fn kalman_gd_step<T: Real>(
    map: &MirrorMap<T>,
    x: ArrayView1<'_, T>,
    y_hat: ArrayView2<'_, T>,
    phi_vec: ArrayView1<'_, T>,
) -> Result<Array1<T>> {
    if y_hat.nrows() != x.len() {
        return Err(Error::Invalid("filter rows must match the iterate dimension".into()));
    }
    let dir = filter_direction(y_hat, phi_vec)?;
    let mut z = map.grad(x)?;
    z -= &dir;
    map.grad_dual(z.view())
}

/// The steady-state filter recursion `ŷ_i ← (Ã − K∞bᵀÃ) ŷ_i + K∞ g_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumRecursion<T> {
    transition: Array2<T>,
    gain: Array1<T>,
}

impl<T: Real> MomentumRecursion<T> {
    pub fn new(a_tilde: ArrayView2<'_, T>, b: ArrayView1<'_, T>, k_inf: ArrayView1<'_, T>) -> Result<Self> {
        let n = b.len();
        if a_tilde.dim() != (n, n) || k_inf.len() != n {
            return Err(Error::Invalid("momentum recursion shapes do not match".into()));
        }
        let kb = k_inf.insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)));
        let transition = a_tilde.to_owned() - kb.dot(&a_tilde);
        Ok(Self {
            transition,
            gain: k_inf.to_owned(),
        })
    }

    pub fn transition(&self) -> &Array2<T> {
        &self.transition
    }

    pub fn gain(&self) -> &Array1<T> {
        &self.gain
    }

    pub fn advance(&self, y_hat: ArrayView2<'_, T>, g: ArrayView1<'_, T>) -> Result<Array2<T>> {
        if y_hat.nrows() != g.len() || y_hat.ncols() != self.gain.len() {
            return Err(Error::Invalid("momentum state shape does not match".into()));
        }
        let mut next = Array2::zeros(y_hat.raw_dim());
        for (i, mut row) in next.rows_mut().into_iter().enumerate() {
            let mut v = self.transition.dot(&y_hat.row(i));
            v.scaled_add(g[i], &self.gain);
            row.assign(&v);
        }
        Ok(next)
    }
}

/// One generalized-momentum step: advance every filter row with the steady
/// gain, then take a Kalman-descent step with the updated filter.
#[allow(clippy::too_many_arguments)]
pub fn generalized_momentum_step<T: Real>(
    map: &MirrorMap<T>,
    x: ArrayView1<'_, T>,
    y_hat: ArrayView2<'_, T>,
    g: ArrayView1<'_, T>,
    a_tilde: ArrayView2<'_, T>,
    b: ArrayView1<'_, T>,
    k_inf: ArrayView1<'_, T>,
    phi_vec: ArrayView1<'_, T>,
) -> Result<(Array1<T>, Array2<T>)> {
    let rec = MomentumRecursion::new(a_tilde, b, k_inf)?;
    let next = rec.advance(y_hat, g)?;
    let x_next = kalman_gd_step(map, x, next.view(), phi_vec)?;
    Ok((x_next, next))
}

/// Polyak coefficients `(p₁, p₂) = (Ã − K∞bÃ, K∞)` of the one-state model.
pub fn polyak_coefficients<T: Real>(a_tilde: T, b: T, k_inf: T) -> (T, T) {
    (a_tilde - k_inf * b * a_tilde, k_inf)
}

/// Heavy-ball recursion `ŷ' = p₁ŷ + p₂g`, `X' = X − φ ŷ'`.
pub fn polyak_momentum_step<T: Real>(
    x: ArrayView1<'_, T>,
    y: ArrayView1<'_, T>,
    g: ArrayView1<'_, T>,
    p1: T,
    p2: T,
    phi: T,
) -> (Array1<T>, Array1<T>) {
    let mut y_next = y.mapv(|v| p1 * v);
    y_next.scaled_add(p2, &g);
    let mut x_next = x.to_owned();
    x_next.scaled_add(-phi, &y_next);
    (x_next, y_next)
}

/// One explicit Euler step of `dX = e^{α}(∇h*(∇h(X) − effective) − X) dt`.
pub fn fosp_flow_step<T: Real>(
    map: &MirrorMap<T>,
    x: ArrayView1<'_, T>,
    effective: ArrayView1<'_, T>,
    alpha_t: T,
    dt: T,
) -> Result<Array1<T>> {
    if !(dt > T::zero()) {
        return Err(Error::Invalid("flow step needs dt > 0".into()));
    }
    let mut z = map.grad(x)?;
    z -= &effective;
    let target = map.grad_dual(z.view())?;
    let rate = dt * alpha_t.exp();
    let mut out = x.to_owned();
    out.scaled_add(rate, &(&target - &x));
    map.check_domain(out.view())?;
    Ok(out)
}

/// `ν = e^{α}(∇h*(∇h(X) + e^{−γ}p) − X)`, the inverse of
/// [`momentum_from_nu`] (so that `X + e^{−α}ν = ∇h*(∇h(X) + e^{−γ}p)`).
pub fn nu_from_momentum<T: Real>(map: &MirrorMap<T>, x: ArrayView1<'_, T>, p: ArrayView1<'_, T>, alpha_t: T, gamma_t: T) -> Result<Array1<T>> {
    let mut z = map.grad(x)?;
    z.scaled_add((-gamma_t).exp(), &p);
    let y = map.grad_dual(z.view())?;
    Ok((y - x).mapv(|v| v * alpha_t.exp()))
}

/// `p = e^{γ}(∇h(X + e^{−α}ν) − ∇h(X))`.
pub fn momentum_from_nu<T: Real>(map: &MirrorMap<T>, x: ArrayView1<'_, T>, nu: ArrayView1<'_, T>, alpha_t: T, gamma_t: T) -> Result<Array1<T>> {
    let mut y = x.to_owned();
    y.scaled_add((-alpha_t).exp(), &nu);
    let diff = map.grad(y.view())? - map.grad(x)?;
    Ok(diff.mapv(|v| v * gamma_t.exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    MirrorSgd,
    KalmanGd,
    GeneralizedMomentum,
    PolyakMomentum,
    FospContinuous,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::MirrorSgd,
        OptimizerKind::KalmanGd,
        OptimizerKind::GeneralizedMomentum,
        OptimizerKind::PolyakMomentum,
        OptimizerKind::FospContinuous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::MirrorSgd => "mirror_sgd",
            OptimizerKind::KalmanGd => "kalman_gd",
            OptimizerKind::GeneralizedMomentum => "generalized_momentum",
            OptimizerKind::PolyakMomentum => "polyak_momentum",
            OptimizerKind::FospContinuous => "fosp_continuous",
        }
    }

    fn needs_state_space(self) -> bool {
        matches!(
            self,
            OptimizerKind::KalmanGd | OptimizerKind::GeneralizedMomentum | OptimizerKind::PolyakMomentum
        )
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown optimizer kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GradientModel<T> {
    Martingale(MartingaleGradientModel<T>),
    StateSpace(StateSpaceGradientModel<T>),
}

/// Where the noisy gradients come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StreamMode<T> {
    /// The latent gradient model generates `g`, independent of the iterate.
    /// Loss gaps are undefined in this mode.
    Synthetic,
    /// Mini-batch gradients of a problem instance at the current iterate,
    /// plus optional additive `N(0, σ²)` noise per coordinate.
    Empirical { observation_sigma: T },
}

/// Initial law of the latent state in synthetic state-space runs.
#[derive(Debug, Clone, PartialEq)]
pub enum LatentInit<T> {
    Zero,
    /// Stationary covariance of the discretized recursion, identity if none.
    Stationary,
    Covariance(Array2<T>),
}

#[derive(Debug, Clone)]
pub struct OptimizerSpec<T> {
    pub kind: OptimizerKind,
    pub map: MirrorMap<T>,
    pub schedule: Schedule<T>,
    pub model: GradientModel<T>,
    pub stream: StreamMode<T>,
    /// Starting point; defaults to all-ones for the entropy map and the
    /// origin otherwise.
    pub x0: Option<Array1<T>>,
    /// Euler sub-steps per mesh interval for `fosp_continuous`.
    pub inner_steps: usize,
    /// Filter prior covariance `P₀`; defaults to the latent initial law.
    pub prior_cov: Option<Array2<T>>,
    pub latent_init: LatentInit<T>,
}

impl<T: Real> OptimizerSpec<T> {
    pub fn new(kind: OptimizerKind, map: MirrorMap<T>, schedule: Schedule<T>, model: GradientModel<T>, stream: StreamMode<T>) -> Self {
        Self {
            kind,
            map,
            schedule,
            model,
            stream,
            x0: None,
            inner_steps: 1,
            prior_cov: None,
            latent_init: LatentInit::Stationary,
        }
    }

    pub fn dim(&self, problem: Option<&ProblemInstance<T>>) -> Result<usize> {
        if let Some(x0) = &self.x0 {
            return Ok(x0.len());
        }
        if let (StreamMode::Empirical { .. }, Some(p)) = (&self.stream, problem) {
            return Ok(p.dim());
        }
        match &self.model {
            GradientModel::StateSpace(m) => Ok(m.dim()),
            GradientModel::Martingale(_) => problem
                .map(|p| p.dim())
                .ok_or_else(|| Error::Config("cannot infer dimension: set optimizer.x0 or a problem".into())),
        }
    }

    fn default_x0(&self, dim: usize) -> Array1<T> {
        match self.map.kind() {
            MapKind::Entropy { .. } => Array1::ones(dim),
            _ => Array1::zeros(dim),
        }
    }

    /// Checks kind-specific requirements.
    pub fn validate(&self, problem: Option<&ProblemInstance<T>>) -> Result<()> {
        if let (GradientModel::Martingale(_), true) = (&self.model, self.kind.needs_state_space()) {
            return Err(Error::Config(format!("{} requires model.kind = state_space", self.kind)));
        }
        if self.kind == OptimizerKind::PolyakMomentum {
            if let GradientModel::StateSpace(m) = &self.model {
                if m.latent_dim() != 1 {
                    return Err(Error::Config("polyak_momentum needs a one-state model (model.dtilde = 1)".into()));
                }
            }
            if !matches!(self.map.kind(), MapKind::Quadratic(Metric::Identity)) {
                return Err(Error::Config("polyak_momentum uses the Euclidean map (map.kind = quadratic, no diagonal)".into()));
            }
        }
        if self.inner_steps == 0 {
            return Err(Error::Config("optimizer.inner_steps must be at least 1".into()));
        }
        let dim = self.dim(problem)?;
        if let Some(x0) = &self.x0 {
            self.map.check_domain(x0.view()).map_err(|e| Error::Config(format!("optimizer.x0: {e}")))?;
        }
        match self.stream {
            StreamMode::Empirical { observation_sigma } => {
                let p = problem.ok_or_else(|| Error::Config("empirical stream mode needs a problem".into()))?;
                if p.dim() != dim {
                    return Err(Error::Config(format!("problem dimension {} differs from iterate dimension {dim}", p.dim())));
                }
                if !(observation_sigma >= T::zero()) {
                    return Err(Error::Config("observation noise must be >= 0".into()));
                }
                if let GradientModel::Martingale(m) = &self.model {
                    if m.n() != p.n() {
                        return Err(Error::Config(format!(
                            "model.n = {} must equal the problem size {} in empirical mode",
                            m.n(),
                            p.n()
                        )));
                    }
                }
            }
            StreamMode::Synthetic => {
                if let GradientModel::StateSpace(m) = &self.model {
                    if m.dim() != dim {
                        return Err(Error::Config(format!("model dimension {} differs from iterate dimension {dim}", m.dim())));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mesh, learning rates and filter constants shared by every seed of a run.
#[derive(Debug, Clone)]
pub struct PreparedRun<T> {
    pub spec: OptimizerSpec<T>,
    pub mesh: Mesh<T>,
    /// `Φ̃` at each mesh time (length 1 for scalar paths).
    pub phi: Vec<Array1<T>>,
    /// Steady-state gain for the momentum kinds.
    pub steady_gain: Option<Array1<T>>,
    pub dim: usize,
}

fn single_point_mesh<T: Real>(schedule: &Schedule<T>) -> Result<Mesh<T>> {
    // A one-step mesh truncated to its first point.
    let m = schedule.build_mesh(1)?;
    Ok(Mesh::from_times(vec![m.times()[0]]))
}

impl<T: Real> PreparedRun<T> {
    pub fn new(spec: OptimizerSpec<T>, steps: usize, problem: Option<&ProblemInstance<T>>) -> Result<Self> {
        spec.validate(problem)?;
        let dim = spec.dim(problem)?;
        let mesh = if steps == 0 {
            single_point_mesh(&spec.schedule)?
        } else {
            spec.schedule.build_mesh(steps)?
        };
        let horizon = spec.schedule.horizon();
        if mesh.end() > horizon * (T::one() + T::tol(1e-12)) {
            return Err(Error::Config(format!(
                "mesh ends at t = {} beyond the schedule horizon T = {horizon}",
                mesh.end()
            )));
        }
        let phi: Vec<Array1<T>> = match &spec.model {
            GradientModel::StateSpace(m) if spec.kind.needs_state_space() => {
                VectorLearningRatePath::new(spec.schedule.clone(), m.a().clone(), m.b().clone())?.on_mesh(&mesh)?
            }
            _ => LearningRatePath::new(spec.schedule.clone())
                .on_mesh(&mesh)?
                .into_iter()
                .map(|v| Array1::from_elem(1, v))
                .collect(),
        };
        let steady_gain = match (&spec.model, spec.kind) {
            (GradientModel::StateSpace(m), OptimizerKind::GeneralizedMomentum | OptimizerKind::PolyakMomentum) => {
                let dt = constant_step(&mesh, &spec.schedule)?;
                let disc = m.discretize(dt);
                Some(kalman_steady_gain(disc.a_tilde.view(), disc.l_tilde.view(), disc.b.view(), disc.sigma_disc)?)
            }
            _ => None,
        };
        Ok(Self {
            spec,
            mesh,
            phi,
            steady_gain,
            dim,
        })
    }
}

/// The momentum kinds assume a constant `α`, hence a uniform mesh.
fn constant_step<T: Real>(mesh: &Mesh<T>, schedule: &Schedule<T>) -> Result<T> {
    let dt = (-schedule.alpha(T::zero())).exp();
    for k in 0..mesh.steps() {
        let a = schedule.alpha(mesh.times()[k]);
        if (a - schedule.alpha(T::zero())).abs() > T::tol(1e-12) * a.abs().max(T::one()) {
            return Err(Error::Config("momentum optimizers need a constant alpha schedule".into()));
        }
    }
    Ok(dt)
}

enum Source<'a, T> {
    Empirical {
        problem: &'a ProblemInstance<T>,
        batch: usize,
        observation_sigma: T,
        batch_rng: Rng,
        noise_rng: Rng,
    },
    Martingale(MartingaleStream<T>),
    StateSpace(StateSpaceStream<T>),
}

impl<T: Real> Source<'_, T> {
    /// Returns `(true gradient, observation)`.
    fn observe(&mut self, x: ArrayView1<'_, T>, dt: T) -> Result<(Array1<T>, Array1<T>)> {
        match self {
            Source::Empirical {
                problem,
                batch,
                observation_sigma,
                batch_rng,
                noise_rng,
            } => {
                let mut g = problem.sample_minibatch_gradient(x, *batch, batch_rng)?;
                if *observation_sigma > T::zero() {
                    for v in g.iter_mut() {
                        *v += *observation_sigma * standard_normal::<T>(noise_rng);
                    }
                }
                Ok((problem.full_gradient(x), g))
            }
            Source::Martingale(s) => s.step(dt),
            Source::StateSpace(s) => s.step(dt),
        }
    }
}

enum FilterState<T> {
    /// Scales the observation by a fixed coefficient (`m/n`, or 1).
    Scalar(T),
    Kalman {
        state: KalmanState<T>,
        model: StateSpaceGradientModel<T>,
    },
    Momentum {
        y_hat: Array2<T>,
        recursion: MomentumRecursion<T>,
        b: Array1<T>,
    },
    Polyak {
        y: Array1<T>,
        p1: T,
        p2: T,
        b: T,
    },
}

/// Result of one seeded run. On a step failure the trajectory holds every
/// state reached before it and `error` records the failure.
#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub seed: u64,
    pub trajectory: Trajectory<T>,
    pub error: Option<Error>,
}

fn initial_latent_cov<T: Real>(spec: &OptimizerSpec<T>, m: &StateSpaceGradientModel<T>, dt: T) -> Array2<T> {
    let n = m.latent_dim();
    match &spec.latent_init {
        LatentInit::Zero => Array2::zeros((n, n)),
        LatentInit::Covariance(c) => c.clone(),
        LatentInit::Stationary => {
            let d = m.discretize(dt);
            stationary_covariance(d.a_tilde.view(), d.l_tilde.view()).unwrap_or_else(|| Array2::eye(n))
        }
    }
}

impl<T: Real> PreparedRun<T> {
    fn step_dt(&self, k: usize) -> T {
        if k < self.mesh.steps() {
            self.mesh.step(k)
        } else {
            (-self.spec.schedule.alpha(self.mesh.times()[k])).exp()
        }
    }

    /// Runs one seed. `problem` is required in empirical mode and used for
    /// loss gaps whenever present in that mode.
    pub fn run(&self, problem: Option<&ProblemInstance<T>>, seed: u64) -> RunOutcome<T> {
        let mut traj = Trajectory::with_capacity(self.mesh.steps() + 1);
        let error = self.run_into(problem, seed, &mut traj).err();
        traj.finish(&self.spec.map, &self.spec.schedule);
        RunOutcome {
            seed,
            trajectory: traj,
            error,
        }
    }

    fn run_into(&self, problem: Option<&ProblemInstance<T>>, seed: u64, traj: &mut Trajectory<T>) -> Result<()> {
        let spec = &self.spec;
        let dt0 = self.step_dt(0);
        let mut source = match (&spec.stream, &spec.model) {
            (StreamMode::Empirical { observation_sigma }, model) => {
                let problem = problem.ok_or_else(|| Error::Config("empirical stream mode needs a problem".into()))?;
                let batch = match model {
                    GradientModel::Martingale(m) => m.m(),
                    GradientModel::StateSpace(_) => problem.n(),
                };
                Source::Empirical {
                    problem,
                    batch,
                    observation_sigma: *observation_sigma,
                    batch_rng: component_rng(seed, Stream::Batch),
                    noise_rng: component_rng(seed, Stream::Observation),
                }
            }
            (StreamMode::Synthetic, GradientModel::Martingale(m)) => {
                Source::Martingale(MartingaleStream::new(*m, self.dim, component_rng(seed, Stream::Gradient)))
            }
            (StreamMode::Synthetic, GradientModel::StateSpace(m)) => {
                let cov = initial_latent_cov(spec, m, dt0);
                Source::StateSpace(StateSpaceStream::sampled(m.clone(), cov.view(), component_rng(seed, Stream::Gradient))?)
            }
        };
        let mut filter = match &spec.model {
            GradientModel::Martingale(m) => FilterState::Scalar(m.filter_coefficient()),
            GradientModel::StateSpace(_) if !spec.kind.needs_state_space() => FilterState::Scalar(T::one()),
            GradientModel::StateSpace(m) => match spec.kind {
                OptimizerKind::KalmanGd => {
                    let p0 = spec.prior_cov.clone().unwrap_or_else(|| initial_latent_cov(spec, m, dt0));
                    FilterState::Kalman {
                        state: KalmanState::new(self.dim, p0)?,
                        model: m.clone(),
                    }
                }
                OptimizerKind::GeneralizedMomentum => {
                    let disc = m.discretize(dt0);
                    let k_inf = self.steady_gain.as_ref().expect("steady gain prepared");
                    FilterState::Momentum {
                        y_hat: Array2::zeros((self.dim, m.latent_dim())),
                        recursion: MomentumRecursion::new(disc.a_tilde.view(), disc.b.view(), k_inf.view())?,
                        b: m.b().clone(),
                    }
                }
                OptimizerKind::PolyakMomentum => {
                    let disc = m.discretize(dt0);
                    let k_inf = self.steady_gain.as_ref().expect("steady gain prepared")[0];
                    let (p1, p2) = polyak_coefficients(disc.a_tilde[[0, 0]], disc.b[0], k_inf);
                    FilterState::Polyak {
                        y: Array1::zeros(self.dim),
                        p1,
                        p2,
                        b: disc.b[0],
                    }
                }
                _ => unreachable!("validated kind/model pairing"),
            },
        };

        let mut x = spec.x0.clone().unwrap_or_else(|| spec.default_x0(self.dim));
        spec.map.check_domain(x.view())?;
        let steps = self.mesh.steps();
        let empirical = matches!(spec.stream, StreamMode::Empirical { .. });
        for k in 0..=steps {
            let t = self.mesh.times()[k];
            let dt = self.step_dt(k);
            let gap = match (empirical, problem) {
                (true, Some(p)) => p.loss_gap(x.view()),
                _ => T::nan(),
            };
            let (truth, g) = source.observe(x.view(), dt)?;
            let noise = &g - &truth;
            let phi = &self.phi[k];
            // Filter update; yields the gradient estimate and a one-line summary.
            let (estimate, p_trace, gain_norm) = match &mut filter {
                FilterState::Scalar(c) => (g.mapv(|v| v * *c), T::zero(), *c),
                FilterState::Kalman { state, model } => {
                    let disc = model.discretize(dt);
                    *state = kalman_discrete_step(state, g.view(), disc.a_tilde.view(), disc.l_tilde.view(), disc.b.view(), disc.sigma_disc)?;
                    let tr = state.p.diag().sum();
                    (state.gradient_estimate(model.b().view()), tr, linalg::norm2(state.gain.view()))
                }
                FilterState::Momentum { y_hat, recursion, b } => {
                    *y_hat = recursion.advance(y_hat.view(), g.view())?;
                    (y_hat.dot(b), T::zero(), linalg::norm2(recursion.gain().view()))
                }
                FilterState::Polyak { y, p1, p2, b } => {
                    // The heavy-ball state is advanced inside the step below.
                    let preview = y.mapv(|v| *p1 * v) + &g.mapv(|v| *p2 * v);
                    (preview.mapv(|v| v * *b), T::zero(), *p2)
                }
            };
            traj.push(t, x.clone(), gap, phi.clone(), estimate.clone(), noise, p_trace, gain_norm);
            if k == steps {
                break;
            }
            let x_next = match &mut filter {
                FilterState::Scalar(_) => {
                    if spec.kind == OptimizerKind::FospContinuous {
                        let effective = estimate.mapv(|v| v * phi[0]);
                        let inner = T::c(spec.inner_steps as f64);
                        let h = dt / inner;
                        let alpha = spec.schedule.alpha(t);
                        let mut xi = x.clone();
                        for _ in 0..spec.inner_steps {
                            xi = fosp_flow_step(&spec.map, xi.view(), effective.view(), alpha, h)?;
                        }
                        xi
                    } else {
                        mirror_descent_step(&spec.map, x.view(), estimate.view(), phi[0])?
                    }
                }
                FilterState::Kalman { state, .. } => kalman_gd_step(&spec.map, x.view(), state.y_hat.view(), phi.view())?,
                FilterState::Momentum { y_hat, .. } => kalman_gd_step(&spec.map, x.view(), y_hat.view(), phi.view())?,
                FilterState::Polyak { y, p1, p2, .. } => {
                    let (xn, yn) = polyak_momentum_step(x.view(), y.view(), g.view(), *p1, *p2, phi[0]);
                    *y = yn;
                    xn
                }
            };
            if x_next.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical("run_optimizer", format!("iterate became non-finite at step {k}"), f64::NAN));
            }
            x = x_next;
        }
        Ok(())
    }
}

/// Prepares and runs a single seed.
pub fn run_optimizer<T: Real>(
    spec: &OptimizerSpec<T>,
    problem: Option<&ProblemInstance<T>>,
    steps: usize,
    seed: u64,
) -> Result<RunOutcome<T>> {
    Ok(PreparedRun::new(spec.clone(), steps, problem)?.run(problem, seed))
}

/// Convenience: accumulates the realized bracket of a path of points `Y`.
pub fn bracket_of_path<T: Real>(map: &MirrorMap<T>, ys: &[Array1<T>]) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(ys.len());
    let mut acc = T::zero();
    out.push(acc);
    for w in ys.windows(2) {
        let dg = map.grad(w[1].view())? - map.grad(w[0].view())?;
        let dy = &w[1] - &w[0];
        acc = qv_accumulate(acc, dg.view(), dy.view());
        out.push(acc);
    }
    Ok(out)
}
