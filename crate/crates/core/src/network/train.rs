use std::fmt;
use std::str::FromStr;

use super::{
    build_network, decoder_backward, decoder_forward, encoder_backward, encoder_forward,
    NetworkParams, NetworkSpec, Tensor,
};
use crate::affinity::{neg_entropy, AffinityMatrix, DEFAULT_FLOOR};
use crate::numerics::{gemm, AdamState, Operand};
use crate::{Error, Matrix, Result, RngSeed};

/// Where the decoder reads its input from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `X_r = f_D(f_E(X))`: the affinity only sees the self-expressive term.
    Decoupled,
    /// `X_r = f_D(f_E(X)·C)`: reconstruction passes through the affinity.
    Coupled,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Decoupled => "decoupled",
            Mode::Coupled => "coupled",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "decoupled" => Ok(Mode::Decoupled),
            "coupled" => Ok(Mode::Coupled),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?}; expected decoupled or coupled"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mode: Mode,
    pub pretrain: bool,
    /// Floor applied to `C` after every update.
    pub epsilon: f64,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            pretrain_steps: 500,
            finetune_steps: 500,
            lambda1: 1.0,
            lambda2: 10.0,
            mode: Mode::Decoupled,
            pretrain: true,
            epsilon: DEFAULT_FLOOR,
            seed: RngSeed(0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, ok: bool, what: &str| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be {what}, got {v}"
                )))
            }
        };
        check(
            "learning_rate",
            self.learning_rate,
            self.learning_rate > 0.0,
            "a positive real",
        )?;
        check(
            "lambda1",
            self.lambda1,
            self.lambda1 >= 0.0,
            "a non-negative real",
        )?;
        check(
            "lambda2",
            self.lambda2,
            self.lambda2 >= 0.0,
            "a non-negative real",
        )?;
        check(
            "epsilon",
            self.epsilon,
            self.epsilon > 0.0,
            "a positive real",
        )
    }
}

/// Loss terms at one step. `total = reconstruction + λ1·regularizer +
/// λ2·self_expressive`; the other three are unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossComponents {
    pub total: f64,
    /// `½‖X − X_r‖_F²`.
    pub reconstruction: f64,
    /// `‖Z − ZC‖_F²`.
    pub self_expressive: f64,
    /// `Σ c ln c`.
    pub regularizer: f64,
}

/// One record per executed step, taken before that step's update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<LossComponents>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&LossComponents> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&LossComponents> {
        self.records.last()
    }
}

#[derive(Debug, Clone)]
pub struct LossAndGrads {
    pub components: LossComponents,
    /// Gradients, shaped like the parameters.
    pub params: NetworkParams,
    pub c: Matrix,
}

fn check_batch(x: &Tensor) -> Result<()> {
    if x.batch == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(())
}

fn reconstruction_error(x: &Tensor, x_r: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = x_r.iter().zip(&x.data).map(|(r, t)| r - t).collect();
    let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
    (loss, diff)
}

/// `d × n` matrix view of a batch-major latent buffer and back.
fn to_columns(data: &[f64], batch: usize) -> Matrix {
    let d = data.len() / batch;
    Matrix::from_raw(batch, d, data.to_vec()).transpose()
}

fn from_columns(m: &Matrix) -> Vec<f64> {
    m.transpose().into_vec()
}

/// Loss and gradients of the autoencoder alone.
fn reconstruction_step(
    x: &Tensor,
    params: &NetworkParams,
) -> Result<(LossComponents, NetworkParams)> {
    check_batch(x)?;
    let enc = encoder_forward(params, x)?;
    let latent = enc.activations.last().expect("input").clone();
    let dec = decoder_forward(params, latent, x.batch);
    let (rec, diff) = reconstruction_error(x, dec.activations.last().expect("input"));
    let mut grads = NetworkParams::zeros(&params.spec);
    let d_latent = decoder_backward(params, &dec, x.batch, diff, &mut grads);
    encoder_backward(params, &enc, x.batch, d_latent, &mut grads);
    let components = LossComponents {
        total: rec,
        reconstruction: rec,
        self_expressive: 0.0,
        regularizer: 0.0,
    };
    Ok((components, grads))
}

/// The full training loss `½‖X − X_r‖² + λ1·Σ c ln c + λ2·‖Z − ZC‖²` and
/// its gradients with respect to every parameter and to `C`.
///
/// In decoupled mode the reconstruction never touches `C`; in coupled mode
/// the decoder reads `ZC`, so reconstruction gradients reach `C` as `ZᵀG`
/// and `Z` as `GCᵀ`.
pub fn loss_and_grads(
    x: &Tensor,
    params: &NetworkParams,
    c: &Matrix,
    cfg: &TrainConfig,
) -> Result<LossAndGrads> {
    let out = loss_and_grads_inner(x, params, c, cfg)?;
    if !out.components.total.is_finite() {
        return Err(Error::Divergence {
            what: "loss",
            iteration: 0,
        });
    }
    Ok(out)
}

fn loss_and_grads_inner(
    x: &Tensor,
    params: &NetworkParams,
    c: &Matrix,
    cfg: &TrainConfig,
) -> Result<LossAndGrads> {
    check_batch(x)?;
    let n = x.batch;
    if c.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "affinity is {}x{} for a batch of {n}",
            c.rows(),
            c.cols()
        )));
    }
    if c.min_value() <= 0.0 {
        return Err(Error::Domain("affinity entries must be positive".into()));
    }

    let enc = encoder_forward(params, x)?;
    let latent = enc.activations.last().expect("input");
    let z = to_columns(latent, n);
    let zc = z.matmul(c)?;
    let r = z.sub(&zc)?;

    let decoder_input = match cfg.mode {
        Mode::Decoupled => latent.clone(),
        Mode::Coupled => from_columns(&zc),
    };
    let dec = decoder_forward(params, decoder_input, n);
    let (rec, diff) = reconstruction_error(x, dec.activations.last().expect("input"));
    let mut grads = NetworkParams::zeros(&params.spec);
    let d_decoder_in = to_columns(&decoder_backward(params, &dec, n, diff, &mut grads), n);

    let self_expressive = r.frobenius_norm_sq();
    let regularizer = neg_entropy(c)?;
    let total = rec + cfg.lambda1 * regularizer + cfg.lambda2 * self_expressive;

    // ∂/∂Z of λ2‖Z − ZC‖² is 2λ2·R(I − C)ᵀ; ∂/∂C is −2λ2·ZᵀR.
    let two_l2 = 2.0 * cfg.lambda2;
    let mut d_z = r.scale(two_l2);
    gemm(
        -two_l2,
        Operand::plain(&r),
        Operand::transposed(c),
        1.0,
        &mut d_z,
    );
    let mut d_c = Matrix::zeros(n, n);
    gemm(
        -two_l2,
        Operand::transposed(&z),
        Operand::plain(&r),
        0.0,
        &mut d_c,
    );
    for (g, &cv) in d_c.as_mut_slice().iter_mut().zip(c.as_slice()) {
        *g += cfg.lambda1 * (cv.ln() + 1.0);
    }
    match cfg.mode {
        Mode::Decoupled => d_z = d_z.add(&d_decoder_in)?,
        Mode::Coupled => {
            gemm(
                1.0,
                Operand::plain(&d_decoder_in),
                Operand::transposed(c),
                1.0,
                &mut d_z,
            );
            gemm(
                1.0,
                Operand::transposed(&z),
                Operand::plain(&d_decoder_in),
                1.0,
                &mut d_c,
            );
        }
    }
    encoder_backward(params, &enc, n, from_columns(&d_z), &mut grads);

    Ok(LossAndGrads {
        components: LossComponents {
            total,
            reconstruction: rec,
            self_expressive,
            regularizer,
        },
        params: grads,
        c: d_c,
    })
}

struct ParamOptimizer {
    states: Vec<AdamState>,
}

impl ParamOptimizer {
    fn new(params: &NetworkParams) -> Self {
        Self {
            states: params.tensors().map(|t| AdamState::new(t.len())).collect(),
        }
    }

    fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams, lr: f64) -> Result<()> {
        for ((p, g), state) in params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(&mut self.states)
        {
            state.update(p, g, lr)?;
        }
        Ok(())
    }
}

fn divergence(step: usize) -> Error {
    Error::Divergence {
        what: "loss",
        iteration: step + 1,
    }
}

/// Minimises the reconstruction loss alone for `cfg.pretrain_steps` full
/// batch ADAM steps. Zero steps return the parameters unchanged.
pub fn pretrain(
    x: &Tensor,
    params: &NetworkParams,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, TrainHistory)> {
    cfg.validate()?;
    let mut params = params.clone();
    let mut opt = ParamOptimizer::new(&params);
    let mut history = TrainHistory::default();
    for step in 0..cfg.pretrain_steps {
        let (components, grads) = reconstruction_step(x, &params)?;
        if !components.total.is_finite() {
            return Err(divergence(step));
        }
        history.records.push(components);
        opt.step(&mut params, &grads, cfg.learning_rate)?;
    }
    Ok((params, history))
}

/// Fine-tunes the network and `C` jointly for `cfg.finetune_steps` full
/// batch ADAM steps, flooring `C` at `cfg.epsilon` after each update.
pub fn train_joint(
    x: &Tensor,
    params: &NetworkParams,
    c: &AffinityMatrix,
    cfg: &TrainConfig,
) -> Result<(NetworkParams, AffinityMatrix, TrainHistory)> {
    cfg.validate()?;
    let mut params = params.clone();
    let mut c = c.matrix().map(|v| v.max(cfg.epsilon));
    let mut opt = ParamOptimizer::new(&params);
    let mut c_state = AdamState::new(c.as_slice().len());
    let mut history = TrainHistory::default();
    for step in 0..cfg.finetune_steps {
        let out = loss_and_grads_inner(x, &params, &c, cfg)?;
        if !out.components.total.is_finite() {
            return Err(divergence(step));
        }
        history.records.push(out.components);
        opt.step(&mut params, &out.params, cfg.learning_rate)?;
        c_state.update(c.as_mut_slice(), out.c.as_slice(), cfg.learning_rate)?;
        let eps = cfg.epsilon;
        c.map_inplace(|v| v.max(eps));
        if !c.is_all_finite() {
            return Err(Error::Divergence {
                what: "affinity",
                iteration: step + 1,
            });
        }
    }
    let c = AffinityMatrix::with_floor(c, cfg.epsilon)?;
    Ok((params, c, history))
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: NetworkParams,
    pub affinity: AffinityMatrix,
    pub pretrain_history: TrainHistory,
    pub finetune_history: TrainHistory,
}

/// Builds the network from `cfg.seed`, optionally pre-trains it, then
/// fine-tunes it together with `C` initialised to `1/n`.
pub fn fit(x: &Tensor, spec: &NetworkSpec, cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    let initial = build_network(spec, cfg.seed)?;
    let (params, pretrain_history) = if cfg.pretrain {
        pretrain(x, &initial, cfg)?
    } else {
        (initial, TrainHistory::default())
    };
    let (params, affinity, finetune_history) =
        train_joint(x, &params, &AffinityMatrix::uniform(x.batch), cfg)?;
    Ok(FitResult {
        params,
        affinity,
        pretrain_history,
        finetune_history,
    })
}
