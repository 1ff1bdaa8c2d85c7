//! Numerical self-tests of the tensor engine: brute-force convolution
//! oracles, the conv/transpose adjoint identity, and finite-difference
//! gradient checks of every primitive and of the composed autoencoder.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autoencoder::{init_model, mirrored_decoder, Autoencoder, LayerSpec, Mode, ModelConfig};
use crate::error::Result;
use crate::rng;
use crate::tensor::{conv1d, conv1d_transpose, DropoutMode, Padding, Tape, Tensor, Var};

pub const ORACLE_TOL: f64 = 1e-9;
pub const GRAD_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    /// Random configurations per oracle and adjoint check.
    pub conv_cases: usize,
    /// Random seeds and shapes per gradient check.
    pub grad_cases: usize,
    /// Most coordinates of one tensor checked by finite differences.
    pub max_coords: usize,
    /// Corrupts the conv1d weight-gradient rule (negative control).
    pub inject_fault: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { seed: 0, conv_cases: 100, grad_cases: 5, max_coords: 200, inject_fault: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
    /// Finite-difference probes dropped because they crossed a kink.
    pub skipped: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

pub fn run_all(opts: &CheckOptions) -> Result<Vec<CheckResult>> {
    Ok(vec![
        conv_oracle_check(opts, false)?,
        conv_oracle_check(opts, true)?,
        adjoint_check(opts)?,
        grad_conv(opts, false)?,
        grad_conv(opts, true)?,
        grad_relu(opts)?,
        grad_dropout(opts)?,
        grad_mae(opts)?,
        grad_autoencoder(opts)?,
    ])
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("positive shape")
}

#[derive(Debug, Clone, Copy)]
struct ConvCase {
    batch: usize,
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    len: usize,
    padding: Padding,
}

impl ConvCase {
    /// Strides 1-3, kernels 1-7, lengths 4-64.
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let kernel = rng.random_range(1..=7);
        let padding = if rng.random_bool(0.5) { Padding::Same } else { Padding::Valid };
        Self {
            batch: rng.random_range(1..=3),
            c_in: rng.random_range(1..=4),
            c_out: rng.random_range(1..=4),
            kernel,
            stride: rng.random_range(1..=3),
            len: rng.random_range(kernel.max(4)..=64),
            padding,
        }
    }

    /// Moves `len` to the nearest length in 4..=64 that the transpose maps
    /// back to exactly, so the pair are adjoint maps between the same spaces.
    fn matched(mut self) -> Self {
        let fits = |l: usize| {
            l >= self.kernel.max(4)
                && match self.padding {
                    Padding::Same => l.is_multiple_of(self.stride),
                    Padding::Valid => (l - self.kernel).is_multiple_of(self.stride),
                }
        };
        self.len = (0..=self.len)
            .rev()
            .find(|&l| fits(l))
            .or_else(|| (self.len..=64).find(|&l| fits(l)))
            .expect("some length in range fits");
        self
    }
}

/// Forward output length and left padding, written out independently of
/// the engine's geometry code.
fn oracle_geometry(len: usize, kernel: usize, stride: usize, padding: Padding) -> (usize, usize) {
    match padding {
        Padding::Same => {
            let l_out = len.div_ceil(stride);
            let total = ((l_out - 1) * stride + kernel).saturating_sub(len);
            (l_out, total / 2)
        }
        Padding::Valid => ((len - kernel) / stride + 1, 0),
    }
}

/// Direct-summation cross-correlation, weight `[C_out, C_in, K]`.
pub fn naive_conv1d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: Padding) -> Tensor {
    let (bs, ci, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let (l_out, pad) = oracle_geometry(l, k, stride, padding);
    let mut out = vec![0.0; bs * co * l_out];
    for n in 0..bs {
        for o in 0..co {
            for j in 0..l_out {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for t in 0..k {
                        let pos = (j * stride + t) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < l {
                            acc += x.data()[(n * ci + c) * l + pos as usize] * w.data()[(o * ci + c) * k + t];
                        }
                    }
                }
                out[(n * co + o) * l_out + j] = acc;
            }
        }
    }
    Tensor::new(vec![bs, co, l_out], out).expect("oracle shape")
}

/// Scatter form of the transposed convolution, weight `[C_in, C_out, K]`.
pub fn naive_conv1d_transpose(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: Padding) -> Tensor {
    let (bs, ci, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[1], w.shape()[2]);
    let l_out = match padding {
        Padding::Same => l * stride,
        Padding::Valid => (l - 1) * stride + k,
    };
    let (_, pad) = oracle_geometry(l_out, k, stride, padding);
    let mut out = vec![0.0; bs * co * l_out];
    for n in 0..bs {
        for o in 0..co {
            out[(n * co + o) * l_out..(n * co + o + 1) * l_out].fill(b.data()[o]);
        }
        for c in 0..ci {
            for i in 0..l {
                let xv = x.data()[(n * ci + c) * l + i];
                for o in 0..co {
                    for t in 0..k {
                        let pos = (i * stride + t) as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < l_out {
                            out[(n * co + o) * l_out + pos as usize] += xv * w.data()[(c * co + o) * k + t];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![bs, co, l_out], out).expect("oracle shape")
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn conv_oracle_check(opts: &CheckOptions, transpose: bool) -> Result<CheckResult> {
    let mut rng = rng::stream(&[opts.seed, 0xc0, transpose as u64]);
    let mut worst = 0.0f64;
    for _ in 0..opts.conv_cases {
        let c = ConvCase::random(&mut rng);
        let x = uniform(&mut rng, &[c.batch, c.c_in, c.len]);
        let b = uniform(&mut rng, &[c.c_out]);
        let (got, want) = if transpose {
            let w = uniform(&mut rng, &[c.c_in, c.c_out, c.kernel]);
            (conv1d_transpose(&x, &w, &b, c.stride, c.padding)?, naive_conv1d_transpose(&x, &w, &b, c.stride, c.padding))
        } else {
            let w = uniform(&mut rng, &[c.c_out, c.c_in, c.kernel]);
            (conv1d(&x, &w, &b, c.stride, c.padding)?, naive_conv1d(&x, &w, &b, c.stride, c.padding))
        };
        worst = worst.max(max_abs_diff(&got, &want));
    }
    Ok(CheckResult {
        name: if transpose { "conv1d_transpose oracle" } else { "conv1d oracle" },
        cases: opts.conv_cases,
        max_error: worst,
        tolerance: ORACLE_TOL,
        skipped: 0,
    })
}

/// `<conv1d(x), y> = <x, conv1d_transpose(y)>` with zero bias.
fn adjoint_check(opts: &CheckOptions) -> Result<CheckResult> {
    let mut rng = rng::stream(&[opts.seed, 0xad]);
    let mut worst = 0.0f64;
    for _ in 0..opts.conv_cases {
        let c = ConvCase::random(&mut rng).matched();
        let x = uniform(&mut rng, &[c.batch, c.c_in, c.len]);
        let w = uniform(&mut rng, &[c.c_out, c.c_in, c.kernel]);
        let fwd = conv1d(&x, &w, &Tensor::zeros(&[c.c_out]), c.stride, c.padding)?;
        let y = uniform(&mut rng, fwd.shape());
        let lhs = fwd.dot(&y);
        // transposing swaps the roles of the channel axes, same weight tensor
        let rhs = x.dot(&conv1d_transpose(&y, &w, &Tensor::zeros(&[c.c_in]), c.stride, c.padding)?);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(CheckResult { name: "adjoint identity", cases: opts.conv_cases, max_error: worst, tolerance: ORACLE_TOL, skipped: 0 })
}

struct FdOutcome {
    max_rel: f64,
    skipped: usize,
}

/// Compares the tape's gradients of the scalar built by `build` against
/// central differences, tensor by tensor, with a norm-wise relative error.
/// Probes whose perturbation moves any relu input or mae residual across
/// zero are skipped.
fn finite_difference<F>(inputs: &[Tensor], build: F, max_coords: usize, rng: &mut ChaCha8Rng, fault: bool) -> Result<FdOutcome>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor], with_grads: bool| -> Result<(f64, Vec<i8>, Option<Vec<Tensor>>)> {
        let mut tape = Tape::new();
        if fault {
            tape.inject_backward_fault();
        }
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        let value = tape.value(loss).data()[0];
        let grads = if with_grads {
            let g = tape.backward(loss)?;
            Some(vars.iter().zip(xs).map(|(&v, x)| g.get_or_zeros(v, x)).collect())
        } else {
            None
        };
        Ok((value, tape.kink_signature(), grads))
    };

    let (_, sig0, grads) = eval(inputs, true)?;
    let grads = grads.expect("requested");
    let mut max_rel = 0.0f64;
    let mut skipped = 0;
    for (i, x) in inputs.iter().enumerate() {
        let coords: Vec<usize> =
            if x.len() <= max_coords { (0..x.len()).collect() } else { sample(rng, x.len(), max_coords).into_vec() };
        let (mut diff2, mut a2, mut f2) = (0.0, 0.0, 0.0);
        for j in coords {
            let mut probe = inputs.to_vec();
            probe[i].data_mut()[j] += FD_STEP;
            let (up, sig_up, _) = eval(&probe, false)?;
            probe[i].data_mut()[j] -= 2.0 * FD_STEP;
            let (down, sig_down, _) = eval(&probe, false)?;
            if sig_up != sig0 || sig_down != sig0 {
                skipped += 1;
                continue;
            }
            let fd = (up - down) / (2.0 * FD_STEP);
            let an = grads[i].data()[j];
            diff2 += (an - fd).powi(2);
            a2 += an * an;
            f2 += fd * fd;
        }
        let scale = a2.sqrt().max(f2.sqrt());
        let rel = if scale > 1e-12 { diff2.sqrt() / scale } else { diff2.sqrt() };
        max_rel = max_rel.max(rel);
    }
    Ok(FdOutcome { max_rel, skipped })
}

fn grad_result(name: &'static str, cases: usize, outcomes: Vec<FdOutcome>) -> CheckResult {
    CheckResult {
        name,
        cases,
        max_error: outcomes.iter().map(|o| o.max_rel).fold(0.0, f64::max),
        tolerance: GRAD_TOL,
        skipped: outcomes.iter().map(|o| o.skipped).sum(),
    }
}

/// Reduces a tensor to a scalar with fixed random weights.
fn projected(tape: &mut Tape, v: Var, rng_seed: u64) -> Result<Var> {
    let shape = tape.value(v).shape().to_vec();
    let r = uniform(&mut rng::stream(&[rng_seed, 0x9e]), &shape);
    tape.project(v, r)
}

fn grad_conv(opts: &CheckOptions, transpose: bool) -> Result<CheckResult> {
    let mut rng = rng::stream(&[opts.seed, 0x6c, transpose as u64]);
    let mut outcomes = Vec::new();
    for case in 0..opts.grad_cases {
        let mut c = ConvCase::random(&mut rng);
        c.len = c.len.min(24).max(c.kernel);
        let x = uniform(&mut rng, &[c.batch, c.c_in, c.len]);
        let (w, b) = if transpose {
            (uniform(&mut rng, &[c.c_in, c.c_out, c.kernel]), uniform(&mut rng, &[c.c_out]))
        } else {
            (uniform(&mut rng, &[c.c_out, c.c_in, c.kernel]), uniform(&mut rng, &[c.c_out]))
        };
        let seed = rng::derive_seed(&[opts.seed, case as u64]);
        let build = |t: &mut Tape, v: &[Var]| {
            let y = if transpose {
                t.conv1d_transpose(v[0], v[1], v[2], c.stride, c.padding)?
            } else {
                t.conv1d(v[0], v[1], v[2], c.stride, c.padding)?
            };
            projected(t, y, seed)
        };
        outcomes.push(finite_difference(&[x, w, b], build, opts.max_coords, &mut rng, opts.inject_fault)?);
    }
    Ok(grad_result(if transpose { "gradient conv1d_transpose" } else { "gradient conv1d" }, opts.grad_cases, outcomes))
}

fn random_vector_shape(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(4..=32)]
}

fn grad_relu(opts: &CheckOptions) -> Result<CheckResult> {
    let mut rng = rng::stream(&[opts.seed, 0x4e]);
    let mut outcomes = Vec::new();
    for case in 0..opts.grad_cases {
        let shape = random_vector_shape(&mut rng);
        let x = uniform(&mut rng, &shape);
        let build = |t: &mut Tape, v: &[Var]| {
            let y = t.relu(v[0]);
            projected(t, y, case as u64)
        };
        outcomes.push(finite_difference(&[x], build, opts.max_coords, &mut rng, opts.inject_fault)?);
    }
    Ok(grad_result("gradient relu", opts.grad_cases, outcomes))
}

fn grad_dropout(opts: &CheckOptions) -> Result<CheckResult> {
    let mut rng = rng::stream(&[opts.seed, 0xd0]);
    let mut outcomes = Vec::new();
    for case in 0..opts.grad_cases {
        let shape = random_vector_shape(&mut rng);
        let x = uniform(&mut rng, &shape);
        let rate = rng.random_range(0.1..0.6);
        let build = |t: &mut Tape, v: &[Var]| {
            let y = t.dropout(v[0], rate, DropoutMode::Train { seed: case as u64 })?;
            projected(t, y, case as u64)
        };
        outcomes.push(finite_difference(&[x], build, opts.max_coords, &mut rng, opts.inject_fault)?);
    }
    Ok(grad_result("gradient dropout", opts.grad_cases, outcomes))
}

fn grad_mae(opts: &CheckOptions) -> Result<CheckResult> {
    let mut rng = rng::stream(&[opts.seed, 0x3a]);
    let mut outcomes = Vec::new();
    for _ in 0..opts.grad_cases {
        let shape = random_vector_shape(&mut rng);
        let (a, b) = (uniform(&mut rng, &shape), uniform(&mut rng, &shape));
        outcomes.push(finite_difference(&[a, b], |t, v| t.mae(v[0], v[1]), opts.max_coords, &mut rng, opts.inject_fault)?);
    }
    Ok(grad_result("gradient mae", opts.grad_cases, outcomes))
}

fn random_model(rng: &mut ChaCha8Rng, seed: u64) -> Result<Autoencoder> {
    let input_length = [16, 24, 32][rng.random_range(0..3)];
    let kernel = |rng: &mut ChaCha8Rng| rng.random_range(2..=7);
    let encoder_layers = vec![
        LayerSpec::new(rng.random_range(3..=6), kernel(rng), 2),
        LayerSpec::new(rng.random_range(2..=4), kernel(rng), 2),
    ];
    init_model(ModelConfig {
        input_length,
        decoder_layers: mirrored_decoder(&encoder_layers),
        encoder_layers,
        output_kernel: kernel(rng),
        dropout_rate: 0.2,
        seed,
        ..ModelConfig::default()
    })
}

/// Full training loss of randomly shaped autoencoders, in training mode
/// with a fixed dropout seed, differentiated with respect to every
/// parameter and the input.
fn grad_autoencoder(opts: &CheckOptions) -> Result<CheckResult> {
    let mut rng = rng::stream(&[opts.seed, 0xae]);
    let mut outcomes = Vec::new();
    for case in 0..opts.grad_cases {
        let model = random_model(&mut rng, rng::derive_seed(&[opts.seed, case as u64]))?;
        let batch = rng.random_range(1..=3);
        let x = uniform(&mut rng, &[batch, model.config.input_channels, model.config.input_length]);
        let mut inputs = vec![x];
        inputs.extend(model.params().iter().map(|p| p.value.clone()));
        let build = |t: &mut Tape, v: &[Var]| {
            let out = model.forward_with_params(t, v[0], &v[1..], Mode::Train { seed: case as u64 })?;
            t.mae(out, v[0])
        };
        outcomes.push(finite_difference(&inputs, build, opts.max_coords, &mut rng, opts.inject_fault)?);
    }
    Ok(grad_result("gradient autoencoder", opts.grad_cases, outcomes))
}
