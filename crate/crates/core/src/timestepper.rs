//! Implicit one-step time integration of the block system.
//!
//! Each step solves for `z = (alpha, theta, gamma, pi)` at the new time
//! level. The displacement is eliminated through the kinematic update
//! `beta_{n+1} = beta_n + dt * theta_*`, where `theta_*` is the stage value
//! of the displacement rate (`theta_{n+1}` for implicit Euler, the average
//! of both levels for the midpoint rule).

use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{
    assemble_loads, convection, residual, CompiledData, ConvectionForm, Discretization, Loads,
    ProblemData, Sizes, StateDot, StateVector,
};
use crate::math;
use crate::sparse::{Csr, SolveError, SparseLu, Symbolic, Triplets};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ImplicitEuler,
    ImplicitMidpoint,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::ImplicitEuler => "implicit-euler",
            Scheme::ImplicitMidpoint => "implicit-midpoint",
        }
    }

    pub fn parse(s: &str) -> Option<Scheme> {
        match s {
            "implicit-euler" => Some(Scheme::ImplicitEuler),
            "implicit-midpoint" => Some(Scheme::ImplicitMidpoint),
            _ => None,
        }
    }

    /// Weight of the new level in the stage value.
    pub fn stage_weight(self) -> f64 {
        match self {
            Scheme::ImplicitEuler => 1.0,
            Scheme::ImplicitMidpoint => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolver {
    SparseDirect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub t_final: f64,
    /// Absolute tolerance on the scaled residual.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub linear_solver: LinearSolver,
    pub convection: ConvectionForm,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            scheme: Scheme::ImplicitEuler,
            dt: 0.01,
            t_final: 0.1,
            newton_tol: 1e-10,
            newton_max_iters: 20,
            linear_solver: LinearSolver::SparseDirect,
            convection: ConvectionForm::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("invalid scheme configuration: {0}")]
    Config(&'static str),
    #[error("Newton did not converge in {iterations} iterations (scaled residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Linear(#[from] SolveError),
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(StepError::Config("dt must be positive"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(StepError::Config("newton_tol must be positive"));
        }
        if !(self.t_final >= self.dt * (1.0 - 1e-12)) {
            return Err(StepError::Config("t_final must be at least dt"));
        }
        if self.newton_max_iters == 0 {
            return Err(StepError::Config("newton_max_iters must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps, `ceil(t_final / dt)` with round-off tolerance.
    pub fn n_steps(&self) -> usize {
        let r = self.t_final / self.dt;
        let k = math::round(r);
        if (r - k).abs() <= 1e-9 * r.max(1.0) {
            k as usize
        } else {
            math::ceil(r) as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepInfo {
    /// Scaled residual norm before each Newton update and after the last.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub dt: f64,
    /// `states[0]` is the initial state.
    pub states: Vec<StateVector>,
    /// Difference quotients `(w_{n+1} - w_n) / dt` of step `n`.
    pub rates: Vec<StateDot>,
    pub steps: Vec<StepInfo>,
}

/// Residual blocks of the stage equations.
#[derive(Debug, Clone, PartialEq)]
pub struct StageResidual {
    pub momentum: Vec<f64>,
    pub structure: Vec<f64>,
    pub darcy: Vec<f64>,
    pub constraint: Vec<f64>,
}

impl StageResidual {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.momentum.clone();
        v.extend_from_slice(&self.structure);
        v.extend_from_slice(&self.darcy);
        v.extend_from_slice(&self.constraint);
        v
    }
}

/// One-step integrator for a fixed discretization, data and step size.
pub struct Stepper<'a> {
    pub disc: &'a Discretization,
    pub data: CompiledData,
    pub cfg: SchemeConfig,
    jconst: Csr,
    scales: [f64; 4],
    symbolic: Option<Symbolic>,
    linear_lu: Option<SparseLu>,
}

fn max_diag(m: &Csr) -> f64 {
    m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

impl<'a> Stepper<'a> {
    pub fn new(
        disc: &'a Discretization,
        data: &ProblemData,
        cfg: SchemeConfig,
    ) -> Result<Stepper<'a>, StepError> {
        cfg.validate()?;
        let b = &disc.blocks;
        let s = b.sizes;
        let c = cfg.scheme.stage_weight();
        let dt = cfg.dt;
        let juu = b.af.scaled(1.0 / dt).add(&b.bf, c);
        let jss = b.as_.scaled(1.0 / dt).add(&b.bs, c * c * dt).add(&b.f, c);
        let jpp = b.ap.scaled(1.0 / dt).add(&b.bp, c);
        let (ou, os, oq, op) = (0, s.n_u, s.n_u + s.n_s, s.n_u + s.n_s + s.n_q);
        let n = op + s.n_pf;
        let mut t = Triplets::new(n, n);
        t.push_block(&juu, ou, ou, 1.0);
        t.push_block(&b.e, ou, os, -c);
        t.push_block(&b.d, ou, oq, c);
        t.push_block_t(&b.gdiv, ou, op, -1.0);
        t.push_block_t(&b.e, os, ou, -c);
        t.push_block(&jss, os, os, 1.0);
        t.push_block(&b.c, os, oq, -c);
        t.push_block_t(&b.d, oq, ou, -c);
        t.push_block_t(&b.c, oq, os, c);
        t.push_block(&jpp, oq, oq, 1.0);
        t.push_block(&b.gdiv, op, ou, 1.0);
        let jconst = t.to_csr();
        let pos = |v: f64| if v > 0.0 { v } else { 1.0 };
        let scales = [
            pos(max_diag(&juu)),
            pos(max_diag(&jss)),
            pos(max_diag(&jpp)),
            pos(b.gdiv.max_abs()),
        ];
        Ok(Stepper {
            disc,
            data: data.compile(),
            cfg,
            jconst,
            scales,
            symbolic: None,
            linear_lu: None,
        })
    }

    pub fn sizes(&self) -> Sizes {
        self.disc.blocks.sizes
    }

    /// Row-block scale factors (momentum, structure, Darcy, constraint).
    pub fn scales(&self) -> [f64; 4] {
        self.scales
    }

    pub fn pack(&self, s: &StateVector) -> Vec<f64> {
        let mut z = s.alpha.clone();
        z.extend_from_slice(&s.theta);
        z.extend_from_slice(&s.gamma);
        z.extend_from_slice(&s.pi);
        z
    }

    /// New state from the unknown vector; `beta` follows the kinematic update.
    pub fn unpack(&self, prev: &StateVector, z: &[f64]) -> StateVector {
        let s = self.sizes();
        let c = self.cfg.scheme.stage_weight();
        let dt = self.cfg.dt;
        let (ou, os, oq, op) = (0, s.n_u, s.n_u + s.n_s, s.n_u + s.n_s + s.n_q);
        let theta = z[os..oq].to_vec();
        let beta = prev
            .beta
            .iter()
            .zip(&prev.theta)
            .zip(&theta)
            .map(|((b, t0), t1)| b + dt * ((1.0 - c) * t0 + c * t1))
            .collect();
        StateVector {
            alpha: z[ou..os].to_vec(),
            beta,
            gamma: z[oq..op].to_vec(),
            theta,
            pi: z[op..].to_vec(),
            t: prev.t + dt,
        }
    }

    pub fn stage_time(&self, prev: &StateVector) -> f64 {
        prev.t + self.cfg.scheme.stage_weight() * self.cfg.dt
    }

    pub fn loads(&self, t: f64) -> Loads {
        assemble_loads(self.disc, &self.data, t)
    }

    /// Stage state and rates at unknowns `z`.
    pub fn stage(&self, prev: &StateVector, z: &[f64]) -> (StateVector, StateDot, StateVector) {
        let c = self.cfg.scheme.stage_weight();
        let dt = self.cfg.dt;
        let new = self.unpack(prev, z);
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x0, x1)| (1.0 - c) * x0 + c * x1).collect()
        };
        let state = StateVector {
            alpha: mix(&prev.alpha, &new.alpha),
            beta: mix(&prev.beta, &new.beta),
            gamma: mix(&prev.gamma, &new.gamma),
            theta: mix(&prev.theta, &new.theta),
            pi: new.pi.clone(),
            t: prev.t + c * dt,
        };
        let dot = rates(prev, &new, dt);
        (state, dot, new)
    }

    /// Stage residual at unknowns `z`, given loads at the stage time. The
    /// constraint is imposed on the new velocity.
    pub fn stage_residual(&self, prev: &StateVector, z: &[f64], loads: &Loads) -> StageResidual {
        let (state, dot, new) = self.stage(prev, z);
        let r = residual(self.disc, self.cfg.convection, &state, &dot, loads);
        StageResidual {
            momentum: r.momentum,
            structure: r.structure,
            darcy: r.darcy,
            constraint: self.disc.blocks.gdiv.mul(&new.alpha),
        }
    }

    /// Scaled max-norm of a stage residual.
    pub fn scaled_norm(&self, r: &StageResidual) -> f64 {
        let blocks = [&r.momentum, &r.structure, &r.darcy, &r.constraint];
        blocks
            .iter()
            .zip(self.scales)
            .map(|(v, s)| math::norm_inf(v) / s)
            .fold(0.0, f64::max)
    }

    /// Jacobian of the stage residual with respect to `z`.
    pub fn jacobian(&self, prev: &StateVector, z: &[f64]) -> Csr {
        if self.cfg.convection == ConvectionForm::Off {
            return self.jconst.clone();
        }
        let c = self.cfg.scheme.stage_weight();
        let n_u = self.sizes().n_u;
        let al: Vec<f64> = prev
            .alpha
            .iter()
            .zip(&z[..n_u])
            .map(|(a0, a1)| (1.0 - c) * a0 + c * a1)
            .collect();
        let (_, jn) = convection(self.disc, &al, self.cfg.convection, true);
        let mut t = Triplets::new(self.jconst.nrows, self.jconst.ncols);
        t.push_block(&self.jconst, 0, 0, 1.0);
        t.push_block(&jn.unwrap(), 0, 0, c);
        t.to_csr()
    }

    fn factor(&mut self, j: &Csr) -> Result<SparseLu, StepError> {
        let fresh = match &self.symbolic {
            Some(s) => !s.matches(j),
            None => true,
        };
        if fresh {
            self.symbolic = Some(Symbolic::analyze(j)?);
        }
        Ok(SparseLu::with_symbolic(self.symbolic.as_ref().unwrap(), j)?)
    }

    /// Advance one step from `prev`.
    pub fn step(&mut self, prev: &StateVector) -> Result<(StateVector, StepInfo), StepError> {
        let loads = self.loads(self.stage_time(prev));
        let mut z = self.pack(prev);
        let mut info = StepInfo::default();
        let linear = self.cfg.convection == ConvectionForm::Off;
        loop {
            let r = self.stage_residual(prev, &z, &loads);
            let norm = self.scaled_norm(&r);
            info.residuals.push(norm);
            if !norm.is_finite() {
                return Err(StepError::NewtonDiverged {
                    iterations: info.iterations,
                    residual: norm,
                });
            }
            if norm <= self.cfg.newton_tol {
                break;
            }
            if info.iterations >= self.cfg.newton_max_iters {
                return Err(StepError::NewtonDiverged {
                    iterations: info.iterations,
                    residual: norm,
                });
            }
            let rhs: Vec<f64> = r.concat().iter().map(|v| -v).collect();
            let dz = if linear {
                if self.linear_lu.is_none() {
                    let j = self.jconst.clone();
                    self.linear_lu = Some(self.factor(&j)?);
                }
                self.linear_lu.as_ref().unwrap().solve(&rhs)?
            } else {
                let j = self.jacobian(prev, &z);
                self.factor(&j)?.solve(&rhs)?
            };
            for (zi, d) in z.iter_mut().zip(dz) {
                *zi += d;
            }
            info.iterations += 1;
        }
        Ok((self.unpack(prev, &z), info))
    }
}

/// Difference quotients between consecutive states.
pub fn rates(prev: &StateVector, next: &StateVector, dt: f64) -> StateDot {
    let q = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x0, x1)| (x1 - x0) / dt).collect() };
    StateDot {
        alpha: q(&prev.alpha, &next.alpha),
        beta: q(&prev.beta, &next.beta),
        gamma: q(&prev.gamma, &next.gamma),
        theta: q(&prev.theta, &next.theta),
    }
}

/// Failed run with the states computed before the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub partial: Trajectory,
    pub step: usize,
    pub error: StepError,
}

/// Integrate from `initial` (the zero state when `None`) to `t_final`.
pub fn run(
    disc: &Discretization,
    data: &ProblemData,
    cfg: SchemeConfig,
    initial: Option<StateVector>,
) -> Result<Trajectory, RunFailure> {
    let mut traj = Trajectory {
        scheme: cfg.scheme,
        dt: cfg.dt,
        states: vec![initial.unwrap_or_else(|| StateVector::zeros(disc.sizes()))],
        rates: Vec::new(),
        steps: Vec::new(),
    };
    let mut stepper = match Stepper::new(disc, data, cfg) {
        Ok(s) => s,
        Err(error) => {
            return Err(RunFailure {
                partial: traj,
                step: 0,
                error,
            })
        }
    };
    let t0 = traj.states[0].t;
    for n in 0..cfg.n_steps() {
        let prev = traj.states.last().unwrap();
        match stepper.step(prev) {
            Ok((mut next, info)) => {
                next.t = t0 + (n + 1) as f64 * cfg.dt;
                traj.rates.push(rates(prev, &next, cfg.dt));
                traj.states.push(next);
                traj.steps.push(info);
            }
            Err(error) => {
                return Err(RunFailure {
                    partial: traj,
                    step: n + 1,
                    error,
                })
            }
        }
    }
    Ok(traj)
}

/// Discretely divergence-free velocity closest to `alpha` in the `Af` norm.
pub fn project_divergence_free(disc: &Discretization, alpha: &[f64]) -> Result<Vec<f64>, SolveError> {
    let b = &disc.blocks;
    let (n_u, n_p) = (b.sizes.n_u, b.sizes.n_pf);
    let mut t = Triplets::new(n_u + n_p, n_u + n_p);
    t.push_block(&b.af, 0, 0, 1.0);
    t.push_block_t(&b.gdiv, 0, n_u, 1.0);
    t.push_block(&b.gdiv, n_u, 0, 1.0);
    let k = t.to_csr();
    let mut rhs = b.af.mul(alpha);
    rhs.resize(n_u + n_p, 0.0);
    let x = SparseLu::new(&k)?.solve(&rhs)?;
    Ok(x[..n_u].to_vec())
}
