//! Gradient descent with momentum, jitter, early exaggeration and the
//! alternating sign-of-gradient update of the Student-t degrees of freedom.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::affinity::{input_affinities, BandwidthSpec};
use crate::error::{Result, SneError};
use crate::gradient::{grad_dof, gradient, safe_kl_cost};
use crate::kernel::embedding_affinities;
use crate::types::{
    seeded_rng, DataMatrix, EmbeddingMatrix, IterationRecord, Method, OptimizerConfig,
    ProbabilityMatrix, RunTrace, VariantSpec,
};

const INIT_STREAM: u64 = 0;
const JITTER_STREAM: u64 = 1;
const INIT_STD: f64 = 1e-2;

/// Momentum coefficient for iteration `t`.
pub fn momentum(t: usize, config: &OptimizerConfig) -> f64 {
    if !config.use_momentum {
        0.0
    } else if t < config.momentum_switch_iter {
        config.momentum_early
    } else {
        config.momentum_late
    }
}

/// I.i.d. N(0, 0.01^2) starting positions.
pub fn init_embedding(n: usize, h: usize, seed: u64) -> Result<EmbeddingMatrix> {
    if n < 2 || h < 1 {
        return Err(SneError::Config(format!("cannot initialize a {n}x{h} embedding")));
    }
    let mut rng = seeded_rng(seed, INIT_STREAM);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    EmbeddingMatrix::new(Array2::from_shape_simple_fn((n, h), || normal.sample(&mut rng)))
}

/// `-lr * grad + alpha * prev`.
pub fn momentum_update(prev: &Array2<f64>, grad: &Array2<f64>, lr: f64, alpha: f64) -> Array2<f64> {
    let mut delta = prev * alpha;
    delta.scaled_add(-lr, grad);
    delta
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub y: EmbeddingMatrix,
    pub delta: Array2<f64>,
    pub iter: usize,
    pub dof: u32,
    rng: ChaCha8Rng,
}

impl OptimizerState {
    pub fn new(y: EmbeddingMatrix, dof: u32, seed: u64) -> Self {
        let delta = Array2::zeros(y.points().dim());
        Self {
            y,
            delta,
            iter: 0,
            dof: dof.max(1),
            rng: seeded_rng(seed, JITTER_STREAM),
        }
    }
}

/// One optimization problem: input affinities, their exaggerated copy and
/// the evolving state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    p: ProbabilityMatrix,
    exaggerated: Array2<f64>,
    method: Method,
    config: OptimizerConfig,
    state: OptimizerState,
}

impl Optimizer {
    pub fn new(
        p: ProbabilityMatrix,
        variant: &VariantSpec,
        init: EmbeddingMatrix,
        config: &OptimizerConfig,
    ) -> Result<Self> {
        config.validate()?;
        if p.kind() != variant.method().input_kind() {
            return Err(SneError::Config(format!(
                "{} expects {:?} input affinities, got {:?}",
                variant.method(),
                variant.method().input_kind(),
                p.kind()
            )));
        }
        if p.n() != init.n() {
            return Err(SneError::Shape(format!(
                "{} affinities for {} embedded points",
                p.n(),
                init.n()
            )));
        }
        // Scaled copy, not renormalized.
        let exaggerated = p.values() * config.exaggeration_factor;
        Ok(Self {
            p,
            exaggerated,
            method: variant.method(),
            config: config.clone(),
            state: OptimizerState::new(init, variant.dof(), config.seed),
        })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn input_affinities(&self) -> &ProbabilityMatrix {
        &self.p
    }

    pub fn exaggeration_active(&self, t: usize) -> bool {
        t < self.config.exaggeration_iters && self.config.exaggeration_factor != 1.0
    }

    /// The affinities that drive the gradient at iteration `t`.
    pub fn affinities_at(&self, t: usize) -> &Array2<f64> {
        if self.exaggeration_active(t) {
            &self.exaggerated
        } else {
            self.p.values()
        }
    }

    fn variant(&self) -> VariantSpec {
        VariantSpec::new(self.method, self.state.dof).expect("dof kept >= 1")
    }

    pub fn step(&mut self) -> Result<IterationRecord> {
        let t = self.state.iter;
        let variant = self.variant();
        let q = embedding_affinities(&self.state.y, &variant).map_err(|e| at_iter(t, e))?;
        let cost = safe_kl_cost(self.p.values(), q.values());
        let grad = gradient(&variant, &self.state.y, self.affinities_at(t), q.values())
            .map_err(|e| at_iter(t, e))?;
        if !cost.is_finite() {
            return Err(SneError::NonFinite { iter: t, what: "cost".into() });
        }
        let grad_norm = grad.inf_norm();

        let alpha = momentum(t, &self.config);
        self.state.delta =
            momentum_update(&self.state.delta, grad.values(), self.config.learning_rate, alpha);
        let mut y = self.state.y.points() + &self.state.delta;

        let jitter = t < self.config.jitter_iters && self.config.jitter_std > 0.0;
        if jitter {
            let normal = Normal::new(0.0, self.config.jitter_std)
                .map_err(|e| SneError::Config(e.to_string()))?;
            let rng = &mut self.state.rng;
            y.mapv_inplace(|v| v + rng.sample(normal));
        }
        self.state.y = EmbeddingMatrix::new(y).map_err(|_| SneError::NonFinite {
            iter: t,
            what: "embedding".into(),
        })?;

        let dof_used = self.state.dof;
        if self.method == Method::TsneGeneralDof && self.config.adapt_dof {
            let q_new = embedding_affinities(&self.state.y, &variant).map_err(|e| at_iter(t, e))?;
            let g = grad_dof(&self.state.y, self.p.values(), q_new.values(), f64::from(dof_used))?;
            if !g.is_finite() {
                return Err(SneError::NonFinite { iter: t, what: "dof gradient".into() });
            }
            self.state.dof = step_dof(dof_used, g);
        }

        self.state.iter += 1;
        Ok(IterationRecord {
            iter: t,
            cost,
            grad_norm,
            dof: dof_used,
            exaggeration: self.exaggeration_active(t),
            jitter,
        })
    }

    /// Iterate until `max_iters` or the gradient infinity-norm drops below
    /// the convergence tolerance.
    pub fn run(mut self) -> Result<(EmbeddingMatrix, RunTrace)> {
        let mut trace = RunTrace::default();
        while self.state.iter < self.config.max_iters {
            let record = self.step()?;
            let converged = record.grad_norm < self.config.convergence_tol;
            trace.records.push(record);
            if converged {
                break;
            }
        }
        Ok((self.state.y, trace))
    }
}

fn at_iter(iter: usize, err: SneError) -> SneError {
    match err {
        SneError::Numeric(what) => SneError::NonFinite { iter, what },
        other => other,
    }
}

/// `max(1, dof - sign(grad))`.
pub fn step_dof(dof: u32, grad: f64) -> u32 {
    if grad > 0.0 {
        dof.saturating_sub(1).max(1)
    } else if grad < 0.0 {
        dof + 1
    } else {
        dof
    }
}

/// Optimize an `out_dims`-dimensional embedding for precomputed affinities.
pub fn run_with_affinities(
    p: &ProbabilityMatrix,
    variant: &VariantSpec,
    out_dims: usize,
    config: &OptimizerConfig,
) -> Result<(EmbeddingMatrix, RunTrace)> {
    let init = init_embedding(p.n(), out_dims, config.seed)?;
    Optimizer::new(p.clone(), variant, init, config)?.run()
}

/// Full pipeline from raw data.
pub fn run(
    data: &DataMatrix,
    variant: &VariantSpec,
    bandwidth: &BandwidthSpec,
    out_dims: usize,
    config: &OptimizerConfig,
) -> Result<(EmbeddingMatrix, RunTrace)> {
    let p = input_affinities(data, variant.method(), bandwidth)?;
    run_with_affinities(&p, variant, out_dims, config)
}
