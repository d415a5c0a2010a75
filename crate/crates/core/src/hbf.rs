//! The EVD-HBF solver.
//!
//! Minimizes the streams' sum-MSE of a single-carrier hybrid beamforming link
//! over the analog precoder/combiner pair (constant-modulus phase shifters),
//! a frequency-flat digital precoder, and per-tone digital combiners:
//!
//! - per-tone digital combiners come from the closed-form MMSE solution,
//! - the digital precoder is constrained to `V_D = sqrt(gamma) V_U` with
//!   para-unitary `V_U`, routing all transmit power through `gamma`,
//! - each analog side is updated by an eigendecomposition of the accumulated
//!   inverse of per-tone Hermitian forms, followed by unit-modulus phase
//!   extraction, alternating until the objective settles.
//!
//! With as many RF chains as streams, `V_U` drops out of the objective and is
//! fixed to the identity. With more RF chains than streams, `V_U` is itself
//! chosen by the same EVD recipe and the objective trace tracks a lower bound
//! of the sum-MSE instead of the exact value.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::ChannelFrequencyResponse;
use crate::numerics::{fro_norm_sq, hermitian_eig, identity, inverse, trace_re, CMat};
use crate::{Error, Result};

/// Link dimensions and the operating noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Transmit antennas.
    pub n_tx: usize,
    /// Receive antennas.
    pub n_rx: usize,
    /// RF chains on each side.
    pub n_rf: usize,
    /// Data streams.
    pub n_streams: usize,
    /// Symbols per block (tones per block).
    pub block_len: usize,
    /// Noise variance per receive antenna; unit total transmit power is
    /// assumed, so `snr_db = -10 log10(noise_var)`.
    pub noise_var: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_streams < 1 {
            return Err(Error::Config("need at least one stream".into()));
        }
        if self.n_rf < self.n_streams {
            return Err(Error::Config(format!(
                "n_rf = {} must be >= n_streams = {}",
                self.n_rf, self.n_streams
            )));
        }
        if self.n_tx.min(self.n_rx) < self.n_rf {
            return Err(Error::Config(format!(
                "antenna counts ({}, {}) must be >= n_rf = {}",
                self.n_tx, self.n_rx, self.n_rf
            )));
        }
        if self.block_len < 1 {
            return Err(Error::Config("block length must be >= 1".into()));
        }
        if !(self.noise_var > 0.0) {
            return Err(Error::Config("noise variance must be positive".into()));
        }
        Ok(())
    }

    /// SNR in dB under unit transmit power: `-10 log10(noise_var)`.
    pub fn snr_db(&self) -> f64 {
        -10.0 * self.noise_var.log10()
    }

    /// Noise variance for a given SNR in dB: `10^(-snr/10)`.
    pub fn noise_var_for_snr_db(snr_db: f64) -> f64 {
        10f64.powf(-snr_db / 10.0)
    }
}

/// A complete hybrid beamforming solution.
#[derive(Debug, Clone, PartialEq)]
pub struct HbfSolution {
    /// Analog precoder, `n_tx x n_rf`, unit-modulus entries.
    pub v_rf: CMat,
    /// Digital precoder `sqrt(gamma) * v_u`, `n_rf x n_streams`.
    pub v_d: CMat,
    /// Analog combiner, `n_rx x n_rf`, unit-modulus entries.
    pub w_rf: CMat,
    /// Per-tone digital combiners, `n_rf x n_streams` each.
    pub w_d: Vec<CMat>,
    /// Power normalizing factor; `||v_rf * v_d||_F^2 == 1`.
    pub gamma: f64,
    /// Para-unitary factor of the digital precoder.
    pub v_u: CMat,
}

impl HbfSolution {
    /// Effective transmit matrix `V_RF V_D` (`n_tx x n_streams`).
    pub fn effective_precoder(&self) -> CMat {
        &self.v_rf * &self.v_d
    }

    /// Check the structural invariants: unit-modulus analog entries (1e-12),
    /// para-unitary `v_u` (1e-10), `v_d = sqrt(gamma) v_u`, and unit transmit
    /// power (1e-9).
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("v_rf", &self.v_rf), ("w_rf", &self.w_rf)] {
            for z in m.iter() {
                if (z.norm() - 1.0).abs() > 1e-12 {
                    return Err(Error::Config(format!(
                        "{name} entry modulus {} deviates from 1",
                        z.norm()
                    )));
                }
            }
        }
        let ns = self.v_u.ncols();
        let gram = self.v_u.adjoint() * &self.v_u;
        if (gram - identity(ns)).norm() > 1e-10 {
            return Err(Error::Config("v_u is not para-unitary".into()));
        }
        let rebuilt = self.v_u.scale(self.gamma.sqrt());
        if (&rebuilt - &self.v_d).norm() > 1e-12 * (1.0 + self.v_d.norm()) {
            return Err(Error::Config("v_d != sqrt(gamma) v_u".into()));
        }
        let power = fro_norm_sq(&self.effective_precoder());
        if (power - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("transmit power {power} != 1")));
        }
        Ok(())
    }
}

/// Alternating-minimization controls.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Outer-iteration cap per start.
    pub max_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    /// Seed for the random unit-modulus initializations.
    pub seed: u64,
    /// Independent random starts; the candidate with the lowest final
    /// sum-MSE wins. The alternating scheme is non-convex and a single
    /// start lands in a poor basin on a few percent of channels.
    pub restarts: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 50,
            rel_tol: 1e-4,
            seed: 1,
            restarts: 5,
        }
    }
}

/// Why the alternating loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIterations,
}

/// Convergence record of one solver run (the winning start).
#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    /// Objective value after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Sum-MSE lower bound at the final beamformers and final `gamma`.
    pub lower_bound: f64,
    /// Outer iterations executed (= trace length).
    pub iterations: usize,
    pub stop_reason: StopReason,
    /// Iterations where the objective increased. Phase extraction can break
    /// the descent argument, so increases are recorded rather than rejected.
    pub nonmonotonic_steps: usize,
    /// Index of the random start that produced the returned solution.
    pub winning_start: usize,
}

/// `A = (W_RF^H W_RF)^{-1}` and the per-tone effective products that the
/// digital and analog updates share.
pub struct EffectiveChannel<'a> {
    pub chf: &'a ChannelFrequencyResponse,
    pub w_rf: &'a CMat,
    pub v_rf: &'a CMat,
    /// `(W_RF^H W_RF)^{-1}`.
    pub gram_inv: CMat,
}

impl<'a> EffectiveChannel<'a> {
    pub fn new(
        chf: &'a ChannelFrequencyResponse,
        w_rf: &'a CMat,
        v_rf: &'a CMat,
    ) -> Result<Self> {
        let gram_inv = inverse(&(w_rf.adjoint() * w_rf))
            .map_err(|_| Error::Singular("W_RF^H W_RF is singular".into()))?;
        Ok(EffectiveChannel {
            chf,
            w_rf,
            v_rf,
            gram_inv,
        })
    }

    /// `C_k = W_RF^H H_k V_RF`.
    pub fn c_k(&self, k: usize) -> CMat {
        self.w_rf.adjoint() * &self.chf.tones[k] * self.v_rf
    }

    /// `B_k = C_k V_D`.
    pub fn b_k(&self, k: usize, v_d: &CMat) -> CMat {
        self.c_k(k) * v_d
    }
}

/// MMSE digital combiner at one tone:
/// `W_Dk = (B_k B_k^H + noise_var * W_RF^H W_RF)^{-1} B_k`
/// with `B_k = W_RF^H H_k V_RF V_D`.
pub fn digital_combiner(
    w_rf: &CMat,
    h_k: &CMat,
    v_rf: &CMat,
    v_d: &CMat,
    noise_var: f64,
) -> Result<CMat> {
    let b = w_rf.adjoint() * h_k * v_rf * v_d;
    let s = &b * b.adjoint() + (w_rf.adjoint() * w_rf).scale(noise_var);
    Ok(inverse(&s)? * b)
}

/// Sum-MSE of a complete solution:
/// `J = (1/N) sum_k (||I - G_k||_F^2 + noise_var ||W_RF W_Dk||_F^2)` with
/// `G_k = W_Dk^H W_RF^H H_k V_RF V_D`.
pub fn sum_mse(
    solution: &HbfSolution,
    chf: &ChannelFrequencyResponse,
    noise_var: f64,
) -> f64 {
    let n = chf.n_tones();
    assert_eq!(solution.w_d.len(), n, "one combiner per tone");
    let f = solution.effective_precoder();
    let ns = solution.v_d.ncols();
    let mut j = 0.0;
    for k in 0..n {
        let g = solution.w_d[k].adjoint() * solution.w_rf.adjoint() * &chf.tones[k] * &f;
        let noise_gain = fro_norm_sq(&(&solution.w_rf * &solution.w_d[k]));
        j += fro_norm_sq(&(identity(ns) - g)) + noise_var * noise_gain;
    }
    j / n as f64
}

/// Sum-MSE with the optimal per-tone combiners substituted in:
/// `J = (1/N) tr sum_k ((1/noise_var) B_k^H A B_k + I)^{-1}`.
///
/// Equals [`sum_mse`] evaluated at the combiners from [`digital_combiner`].
pub fn reduced_mse(
    v_rf: &CMat,
    w_rf: &CMat,
    v_d: &CMat,
    chf: &ChannelFrequencyResponse,
    noise_var: f64,
) -> Result<f64> {
    let eff = EffectiveChannel::new(chf, w_rf, v_rf)?;
    let ns = v_d.ncols();
    let mut j = 0.0;
    for k in 0..chf.n_tones() {
        let b = eff.b_k(k, v_d);
        let t = (b.adjoint() * &eff.gram_inv * &b).scale(1.0 / noise_var) + identity(ns);
        j += trace_re(&inverse(&t)?);
    }
    Ok(j / chf.n_tones() as f64)
}

/// The digital-precoder-free objective:
/// `J = (1/N) tr sum_k ((gamma/noise_var) C_k^H A C_k + I_{n_rf})^{-1}`.
///
/// Equals [`reduced_mse`] whenever `n_rf == n_streams` and
/// `V_D = sqrt(gamma) V_U` with unitary `V_U`; in the general case it is the
/// varying part of the lower bound.
pub fn objective_ck(
    v_rf: &CMat,
    w_rf: &CMat,
    gamma: f64,
    chf: &ChannelFrequencyResponse,
    noise_var: f64,
) -> Result<f64> {
    let eff = EffectiveChannel::new(chf, w_rf, v_rf)?;
    let n_rf = v_rf.ncols();
    let mut j = 0.0;
    for k in 0..chf.n_tones() {
        let c = eff.c_k(k);
        let t = (c.adjoint() * &eff.gram_inv * &c).scale(gamma / noise_var) + identity(n_rf);
        j += trace_re(&inverse(&t)?);
    }
    Ok(j / chf.n_tones() as f64)
}

/// Hermitian form driving the analog precoder update:
/// `M_k = (gamma/(n_rx * noise_var)) H_k^H W_RF W_RF^H H_k + I_{n_tx}`.
pub fn build_mk_precoder(
    w_rf: &CMat,
    h_k: &CMat,
    gamma: f64,
    noise_var: f64,
    n_rx: usize,
) -> CMat {
    let t = w_rf.adjoint() * h_k; // n_rf x n_tx
    let scale = gamma / (n_rx as f64 * noise_var);
    (t.adjoint() * t).scale(scale) + identity(h_k.ncols())
}

/// Hermitian form driving the analog combiner update:
/// `M'_k = (gamma/(n_rx * noise_var)) H_k V_RF V_RF^H H_k^H + I_{n_rx}`.
pub fn build_mk_combiner(
    v_rf: &CMat,
    h_k: &CMat,
    gamma: f64,
    noise_var: f64,
    n_rx: usize,
) -> CMat {
    let t = h_k * v_rf; // n_rx x n_rf
    let scale = gamma / (n_rx as f64 * noise_var);
    (&t * t.adjoint()).scale(scale) + identity(h_k.nrows())
}

/// Result of one EVD-based analog update.
pub struct EvdUpdate {
    /// Unit-modulus beamformer after phase extraction.
    pub beamformer: CMat,
    /// Pre-extraction para-unitary minimizer (smallest-eigenvalue
    /// eigenvectors of `inverse_sum`).
    pub isometry: CMat,
    /// `sum_k M_k^{-1}`.
    pub inverse_sum: CMat,
}

fn evd_analog_update<F: Fn(usize) -> CMat>(
    build: F,
    n_tones: usize,
    n_cols: usize,
    antenna_scale: f64,
) -> Result<EvdUpdate> {
    let mut acc: Option<CMat> = None;
    for k in 0..n_tones {
        let inv = inverse(&build(k))?;
        acc = Some(match acc {
            Some(a) => a + inv,
            None => inv,
        });
    }
    let inverse_sum = acc.expect("at least one tone");
    let eig = hermitian_eig(&inverse_sum)?;
    let rows = inverse_sum.nrows();
    let isometry = CMat::from_fn(rows, n_cols, |r, c| eig.eigenvectors[(r, c)]);
    let beamformer = phase_extract(&isometry.scale(antenna_scale.sqrt()));
    Ok(EvdUpdate {
        beamformer,
        isometry,
        inverse_sum,
    })
}

/// Analog precoder update for a fixed combiner: take the `n_rf` eigenvectors
/// of the smallest eigenvalues of `sum_k M_k^{-1}`, scale by `sqrt(n_tx)`,
/// then extract phases. Returns the full update record; see
/// [`analog_precoder_update`] for the beamformer alone.
pub fn analog_precoder_update_full(
    w_rf: &CMat,
    chf: &ChannelFrequencyResponse,
    gamma: f64,
    noise_var: f64,
) -> Result<EvdUpdate> {
    let n_rx = chf.n_rx();
    let n_tx = chf.n_tx();
    evd_analog_update(
        |k| build_mk_precoder(w_rf, &chf.tones[k], gamma, noise_var, n_rx),
        chf.n_tones(),
        w_rf.ncols(),
        n_tx as f64,
    )
}

pub fn analog_precoder_update(
    w_rf: &CMat,
    chf: &ChannelFrequencyResponse,
    gamma: f64,
    noise_var: f64,
) -> Result<CMat> {
    Ok(analog_precoder_update_full(w_rf, chf, gamma, noise_var)?.beamformer)
}

/// Analog combiner update for a fixed precoder; same recipe with `M'_k` and a
/// `sqrt(n_rx)` scale.
pub fn analog_combiner_update_full(
    v_rf: &CMat,
    chf: &ChannelFrequencyResponse,
    gamma: f64,
    noise_var: f64,
) -> Result<EvdUpdate> {
    let n_rx = chf.n_rx();
    evd_analog_update(
        |k| build_mk_combiner(v_rf, &chf.tones[k], gamma, noise_var, n_rx),
        chf.n_tones(),
        v_rf.ncols(),
        n_rx as f64,
    )
}

pub fn analog_combiner_update(
    v_rf: &CMat,
    chf: &ChannelFrequencyResponse,
    gamma: f64,
    noise_var: f64,
) -> Result<CMat> {
    Ok(analog_combiner_update_full(v_rf, chf, gamma, noise_var)?.beamformer)
}

/// Para-unitary digital precoder factor for the `n_rf > n_streams` case: the
/// `n_streams` smallest-eigenvalue eigenvectors of
/// `sum_k ((gamma/(n_rx * noise_var)) C_k^H C_k + I_{n_rf})^{-1}`.
///
/// Digital, so no phase extraction is applied.
pub fn digital_precoder_unitary_update(
    v_rf: &CMat,
    w_rf: &CMat,
    chf: &ChannelFrequencyResponse,
    gamma: f64,
    noise_var: f64,
    n_streams: usize,
) -> Result<CMat> {
    let n_rx = chf.n_rx();
    let n_rf = v_rf.ncols();
    let scale = gamma / (n_rx as f64 * noise_var);
    let mut acc = CMat::zeros(n_rf, n_rf);
    for k in 0..chf.n_tones() {
        let c = w_rf.adjoint() * &chf.tones[k] * v_rf;
        let f = (c.adjoint() * &c).scale(scale) + identity(n_rf);
        acc += inverse(&f)?;
    }
    let eig = hermitian_eig(&acc)?;
    Ok(CMat::from_fn(n_rf, n_streams, |r, c| {
        eig.eigenvectors[(r, c)]
    }))
}

/// Power normalization of the digital precoder:
/// `gamma = 1 / tr(V_RF V_U V_U^H V_RF^H)` and `V_D = sqrt(gamma) V_U`, so
/// that `||V_RF V_D||_F^2 = 1`.
pub fn normalize_digital_precoder(v_rf: &CMat, v_u: &CMat) -> Result<(CMat, f64)> {
    let t = fro_norm_sq(&(v_rf * v_u));
    if !(t > 0.0) {
        return Err(Error::Config(
            "zero transmit power trace; v_rf or v_u degenerate".into(),
        ));
    }
    let gamma = 1.0 / t;
    Ok((v_u.scale(gamma.sqrt()), gamma))
}

/// Sum-MSE lower bound for `n_rf >= n_streams`:
/// `J_L = (1/N) sum_k (tr((gamma/noise_var) C_k^H A C_k + I)^{-1} + n_s - n_rf)`.
pub fn lower_bound_jl(
    v_rf: &CMat,
    w_rf: &CMat,
    gamma: f64,
    chf: &ChannelFrequencyResponse,
    noise_var: f64,
    n_streams: usize,
) -> Result<f64> {
    let n_rf = v_rf.ncols();
    Ok(objective_ck(v_rf, w_rf, gamma, chf, noise_var)? + n_streams as f64 - n_rf as f64)
}

/// Entrywise unit-modulus projection `z -> z/|z|`, with zero mapped to 1.
pub fn phase_extract(m: &CMat) -> CMat {
    m.map(|z| {
        let r = z.norm();
        if r == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            z / r
        }
    })
}

/// Matrix of unit-modulus entries with i.i.d. uniform phases on `[0, 2pi)`.
pub fn random_unit_modulus<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
    })
}

/// Run the full EVD-HBF scheme on a per-tone channel response.
///
/// Each start: random unit-modulus initialization (seeded), alternating
/// analog updates with `gamma` pinned to `1/(n_tx * n_streams)`, then the
/// digital precoder (identity `V_U` when `n_rf == n_streams`, EVD-based
/// otherwise), the power normalization, and the per-tone MMSE combiners.
/// Of the `restarts` starts, the completed solution with the lowest sum-MSE
/// is returned together with its diagnostics.
pub fn solve_hbf(
    chf: &ChannelFrequencyResponse,
    sys: &SystemConfig,
    solver: &SolverConfig,
) -> Result<(HbfSolution, SolverDiagnostics)> {
    sys.validate()?;
    if solver.max_iters < 1 || !(solver.rel_tol > 0.0) || solver.restarts < 1 {
        return Err(Error::Config(
            "solver needs max_iters >= 1, rel_tol > 0 and restarts >= 1".into(),
        ));
    }
    if chf.n_tones() != sys.block_len {
        return Err(Error::Dimension(format!(
            "channel has {} tones but the block length is {}",
            chf.n_tones(),
            sys.block_len
        )));
    }
    if chf.n_rx() != sys.n_rx || chf.n_tx() != sys.n_tx {
        return Err(Error::Dimension(format!(
            "channel is {}x{} but the system is {}x{}",
            chf.n_rx(),
            chf.n_tx(),
            sys.n_rx,
            sys.n_tx
        )));
    }

    let mut best: Option<(f64, HbfSolution, SolverDiagnostics)> = None;
    for start in 0..solver.restarts {
        let start_seed = crate::link::derive_seed(solver.seed, &[start as u64]);
        let (sol, diag) = solve_one_start(chf, sys, solver, start_seed, start)?;
        let j = sum_mse(&sol, chf, sys.noise_var);
        if best.as_ref().is_none_or(|(jb, ..)| j < *jb) {
            best = Some((j, sol, diag));
        }
    }
    let (_, sol, diag) = best.expect("restarts >= 1");
    Ok((sol, diag))
}

fn solve_one_start(
    chf: &ChannelFrequencyResponse,
    sys: &SystemConfig,
    solver: &SolverConfig,
    seed: u64,
    start: usize,
) -> Result<(HbfSolution, SolverDiagnostics)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v_rf = random_unit_modulus(sys.n_tx, sys.n_rf, &mut rng);
    let mut w_rf = random_unit_modulus(sys.n_rx, sys.n_rf, &mut rng);

    let gamma_alt = 1.0 / (sys.n_tx * sys.n_streams) as f64;
    let mut prev = objective_ck(&v_rf, &w_rf, gamma_alt, chf, sys.noise_var)?;
    let mut trace = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    let mut nonmonotonic_steps = 0;

    for _ in 0..solver.max_iters {
        v_rf = analog_precoder_update(&w_rf, chf, gamma_alt, sys.noise_var)?;
        w_rf = analog_combiner_update(&v_rf, chf, gamma_alt, sys.noise_var)?;
        let j = objective_ck(&v_rf, &w_rf, gamma_alt, chf, sys.noise_var)?;
        if j > prev * (1.0 + 1e-12) {
            nonmonotonic_steps += 1;
        }
        let rel = (j - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        trace.push(j);
        prev = j;
        if rel < solver.rel_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let v_u = if sys.n_rf == sys.n_streams {
        identity(sys.n_rf)
    } else {
        digital_precoder_unitary_update(&v_rf, &w_rf, chf, gamma_alt, sys.noise_var, sys.n_streams)?
    };
    let (v_d, gamma) = normalize_digital_precoder(&v_rf, &v_u)?;

    let mut w_d = Vec::with_capacity(chf.n_tones());
    for k in 0..chf.n_tones() {
        w_d.push(digital_combiner(&w_rf, &chf.tones[k], &v_rf, &v_d, sys.noise_var)?);
    }

    let lower_bound = lower_bound_jl(&v_rf, &w_rf, gamma, chf, sys.noise_var, sys.n_streams)?;
    let iterations = trace.len();
    Ok((
        HbfSolution {
            v_rf,
            v_d,
            w_rf,
            w_d,
            gamma,
            v_u,
        },
        SolverDiagnostics {
            objective_trace: trace,
            lower_bound,
            iterations,
            stop_reason,
            nonmonotonic_steps,
            winning_start: start,
        },
    ))
}
