//! Cross-module invariant suites.
//!
//! Each suite draws seeded random instances, checks one contract that the
//! design relies on, and reports how many checks failed together with the
//! worst observed margin. `sc-hbf selftest` runs all of them; the acceptance
//! tests run them with pinned counts and tolerances.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{frequency_response, sample_channel, tap_matrices, ChannelFrequencyResponse, ChannelModelConfig};
use crate::hbf::{
    analog_combiner_update_full, analog_precoder_update_full, digital_combiner,
    normalize_digital_precoder, objective_ck, random_unit_modulus, reduced_mse, solve_hbf,
    sum_mse, HbfSolution, SolverConfig, SystemConfig,
};
use crate::link::{
    apply_channel, random_frame, receive_block, run_ber_point, BerRunConfig, QamConstellation,
    SchemeEnds, TxFrontEnd,
};
use crate::numerics::{
    hermitian_eig, identity, inverse, randn_cmat, random_para_unitary, trace_re, CMat,
};

/// Result of one invariant suite.
#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub checks: usize,
    pub failures: usize,
    /// Worst observed margin; negative margins are failures.
    pub worst_margin: f64,
    pub detail: String,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn verdict_line(&self) -> String {
        format!(
            "{:<34} {} ({} checks, worst margin {:+.3e}; {})",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks,
            self.worst_margin,
            self.detail
        )
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_hpd<R: Rng>(n: usize, eps: f64, r: &mut R) -> CMat {
    let s = randn_cmat(n, n, r);
    s.adjoint() * &s + identity(n).scale(eps)
}

/// Random per-tone response with Gaussian entries (for pure-matrix suites
/// that do not need the cluster-ray geometry).
fn random_tones<R: Rng>(n_rx: usize, n_tx: usize, n: usize, r: &mut R) -> ChannelFrequencyResponse {
    ChannelFrequencyResponse {
        tones: (0..n).map(|_| randn_cmat(n_rx, n_tx, r)).collect(),
    }
}

struct Instance {
    chf: ChannelFrequencyResponse,
    v_rf: CMat,
    w_rf: CMat,
    v_u: CMat,
    v_d: CMat,
    gamma: f64,
    noise_var: f64,
}

fn random_instance<R: Rng>(
    n_tx: usize,
    n_rx: usize,
    n_rf: usize,
    n_s: usize,
    n_tones: usize,
    r: &mut R,
) -> Instance {
    let chf = random_tones(n_rx, n_tx, n_tones, r);
    let v_rf = random_unit_modulus(n_tx, n_rf, r);
    let w_rf = random_unit_modulus(n_rx, n_rf, r);
    let v_u = random_para_unitary(n_rf, n_s, r).unwrap();
    let (v_d, gamma) = normalize_digital_precoder(&v_rf, &v_u).unwrap();
    let noise_var = 0.05 + 0.95 * r.random::<f64>();
    Instance {
        chf,
        v_rf,
        w_rf,
        v_u,
        v_d,
        gamma,
        noise_var,
    }
}

/// For random Hermitian positive-definite `M` and para-unitary `R`, the
/// ascending eigenvalues of `(R^H M R)^{-1}` never exceed those of
/// `R^H M^{-1} R` (within 1e-9).
pub fn eigenvalue_domination_suite(pairs: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for t in 0..pairs {
        let m_dim = 2 + (t % 15); // up to 16
        let n_dim = 1 + r.random_range(0..m_dim - 1);
        let m = random_hpd(m_dim, 1e-6, &mut r);
        let rq = random_para_unitary(m_dim, n_dim, &mut r).unwrap();
        let mu = hermitian_eig(&inverse(&(rq.adjoint() * &m * &rq)).unwrap())
            .unwrap()
            .eigenvalues;
        let lambda = hermitian_eig(&(rq.adjoint() * inverse(&m).unwrap() * &rq))
            .unwrap()
            .eigenvalues;
        for k in 0..n_dim {
            let margin = lambda[k] + 1e-9 - mu[k];
            worst = worst.min(margin);
            if margin < 0.0 {
                failures += 1;
            }
        }
    }
    SuiteOutcome {
        name: "eigenvalue-domination",
        checks: pairs,
        failures,
        worst_margin: worst,
        detail: format!("{pairs} random (M, R) pairs up to 16x16"),
    }
}

/// The reduced objective equals the full sum-MSE with the closed-form
/// combiners substituted in, to 1e-10 relative.
pub fn substitution_identity_suite(instances: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let n_tx = 2 + r.random_range(0..15); // up to 16
        let n_rx = 2 + r.random_range(0..15);
        let n_rf = 1 + r.random_range(0..n_tx.min(n_rx).min(4));
        let n_s = 1 + r.random_range(0..n_rf);
        let inst = random_instance(n_tx, n_rx, n_rf, n_s, 16, &mut r);
        let reduced = reduced_mse(&inst.v_rf, &inst.w_rf, &inst.v_d, &inst.chf, inst.noise_var)
            .unwrap();
        let w_d: Vec<CMat> = (0..16)
            .map(|k| {
                digital_combiner(&inst.w_rf, &inst.chf.tones[k], &inst.v_rf, &inst.v_d, inst.noise_var)
                    .unwrap()
            })
            .collect();
        let sol = HbfSolution {
            v_rf: inst.v_rf.clone(),
            v_d: inst.v_d.clone(),
            w_rf: inst.w_rf.clone(),
            w_d,
            gamma: inst.gamma,
            v_u: inst.v_u.clone(),
        };
        let full = sum_mse(&sol, &inst.chf, inst.noise_var);
        let rel = (reduced - full).abs() / full.abs().max(f64::MIN_POSITIVE);
        let margin = 1e-10 - rel;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
        }
    }
    SuiteOutcome {
        name: "substitution-identity",
        checks: instances,
        failures,
        worst_margin: worst,
        detail: format!("{instances} random systems up to 16x16, 16 tones"),
    }
}

/// The closed-form combiner is never beaten by random perturbations of
/// Frobenius norm 1e-3.
pub fn combiner_optimality_suite(instances: usize, perturbations: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let inst = random_instance(6, 6, 2, 2, 4, &mut r);
        let w_d: Vec<CMat> = (0..4)
            .map(|k| {
                digital_combiner(&inst.w_rf, &inst.chf.tones[k], &inst.v_rf, &inst.v_d, inst.noise_var)
                    .unwrap()
            })
            .collect();
        let sol = HbfSolution {
            v_rf: inst.v_rf.clone(),
            v_d: inst.v_d.clone(),
            w_rf: inst.w_rf.clone(),
            w_d: w_d.clone(),
            gamma: inst.gamma,
            v_u: inst.v_u.clone(),
        };
        let j_star = sum_mse(&sol, &inst.chf, inst.noise_var);
        for t in 0..perturbations {
            let k = t % 4;
            let delta = randn_cmat(w_d[k].nrows(), w_d[k].ncols(), &mut r);
            let delta = delta.scale(1e-3 / delta.norm());
            let mut perturbed = sol.clone();
            perturbed.w_d[k] = &w_d[k] + delta;
            let j = sum_mse(&perturbed, &inst.chf, inst.noise_var);
            let margin = j - j_star + 1e-12;
            worst = worst.min(margin);
            if margin < 0.0 {
                failures += 1;
            }
        }
    }
    SuiteOutcome {
        name: "combiner-optimality",
        checks: instances * perturbations,
        failures,
        worst_margin: worst,
        detail: format!("{instances} instances x {perturbations} perturbations of norm 1e-3"),
    }
}

/// With as many RF chains as streams and `V_D = sqrt(gamma) V_U`, the
/// reduced objective and the precoder-free objective agree to 1e-10.
pub fn reduced_objective_equivalence_suite(instances: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let n_rf = 1 + r.random_range(0..3);
        let inst = random_instance(8, 7, n_rf, n_rf, 8, &mut r);
        let a = reduced_mse(&inst.v_rf, &inst.w_rf, &inst.v_d, &inst.chf, inst.noise_var).unwrap();
        let b = objective_ck(&inst.v_rf, &inst.w_rf, inst.gamma, &inst.chf, inst.noise_var).unwrap();
        let rel = (a - b).abs() / a.abs().max(f64::MIN_POSITIVE);
        let margin = 1e-10 - rel;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
        }
    }
    SuiteOutcome {
        name: "reduced-objective-equivalence",
        checks: instances,
        failures,
        worst_margin: worst,
        detail: format!("{instances} instances with matching RF chain and stream counts"),
    }
}

/// The pre-extraction isometry from the EVD update minimizes the accumulated
/// quadratic form over the para-unitary class: never beaten by random
/// para-unitary samples (tolerance 1e-9).
pub fn evd_minimizer_suite(instances: usize, samples: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for i in 0..instances {
        let inst = random_instance(10, 9, 2, 2, 8, &mut r);
        // alternate sides so both update paths get covered
        let (upd, dim) = if i % 2 == 0 {
            (
                analog_precoder_update_full(&inst.w_rf, &inst.chf, inst.gamma, inst.noise_var)
                    .unwrap(),
                10,
            )
        } else {
            (
                analog_combiner_update_full(&inst.v_rf, &inst.chf, inst.gamma, inst.noise_var)
                    .unwrap(),
                9,
            )
        };
        let star = trace_re(&(upd.isometry.adjoint() * &upd.inverse_sum * &upd.isometry));
        for _ in 0..samples {
            let cand = random_para_unitary(dim, 2, &mut r).unwrap();
            let val = trace_re(&(cand.adjoint() * &upd.inverse_sum * &cand));
            let margin = val + 1e-9 - star;
            worst = worst.min(margin);
            if margin < 0.0 {
                failures += 1;
            }
        }
    }
    SuiteOutcome {
        name: "evd-minimizer-dominance",
        checks: instances * samples,
        failures,
        worst_margin: worst,
        detail: format!("{instances} instances x {samples} para-unitary samples"),
    }
}

/// The general-case lower bound never exceeds the reduced sum-MSE, for any
/// para-unitary digital factor (tolerance 1e-9).
pub fn lower_bound_suite(draws: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for t in 0..draws {
        let n_rf = 3 + (t % 2); // 3 or 4
        let n_s = 2;
        let inst = random_instance(8, 8, n_rf, n_s, 8, &mut r);
        let v_u = random_para_unitary(n_rf, n_s, &mut r).unwrap();
        let (v_d, gamma) = normalize_digital_precoder(&inst.v_rf, &v_u).unwrap();
        let j = reduced_mse(&inst.v_rf, &inst.w_rf, &v_d, &inst.chf, inst.noise_var).unwrap();
        let jl = crate::hbf::lower_bound_jl(&inst.v_rf, &inst.w_rf, gamma, &inst.chf, inst.noise_var, n_s)
            .unwrap();
        let margin = j + 1e-9 - jl;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
        }
    }
    SuiteOutcome {
        name: "mse-lower-bound",
        checks: draws,
        failures,
        worst_margin: worst,
        detail: format!("{draws} random draws with 3-4 RF chains, 2 streams"),
    }
}

/// Noiseless end-to-end time-domain simulation equals the per-tone model to
/// 1e-10 relative (cyclic-prefix circularization).
pub fn cp_equivalence_suite(instances: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    let qam = QamConstellation::new(4).unwrap();
    for _ in 0..instances {
        let n_tx = 3 + r.random_range(0..6);
        let n_rx = 3 + r.random_range(0..6);
        let (n, l) = (32, 8);
        let cfg = ChannelModelConfig {
            n_clusters: 3,
            n_rays: 2,
            n_tx,
            n_rx,
            angle_spread: 0.17,
            cp_len: l,
        };
        let ch = sample_channel(&cfg, &mut r).unwrap();
        let taps = tap_matrices(&ch, n_tx, n_rx);
        let chf = frequency_response(&taps, n).unwrap();
        let n_rf = 2.min(n_tx).min(n_rx);
        let n_s = n_rf;
        let v_rf = random_unit_modulus(n_tx, n_rf, &mut r);
        let w_rf = random_unit_modulus(n_rx, n_rf, &mut r);
        let v_u = random_para_unitary(n_rf, n_s, &mut r).unwrap();
        let (v_d, _) = normalize_digital_precoder(&v_rf, &v_u).unwrap();
        let noise_var = 0.1 + r.random::<f64>();
        let w_d: Vec<CMat> = (0..n)
            .map(|k| digital_combiner(&w_rf, &chf.tones[k], &v_rf, &v_d, noise_var).unwrap())
            .collect();
        let ends = SchemeEnds {
            tx: TxFrontEnd::Flat(&v_rf * &v_d),
            rx_analog: w_rf,
            rx_digital: w_d,
        };
        let frame = random_frame(&qam, n_s, n, &mut r);
        let tx = ends.transmit(&frame.symbols, l).unwrap();
        let rx = apply_channel(&tx, &taps, 0.0, l, &mut r).unwrap();
        let (y_time, _) = receive_block(&rx, &ends.rx_analog, &ends.rx_digital, l, n).unwrap();
        let reference = ends.frequency_domain_reference(&frame.symbols, &chf).unwrap();
        let rel = (&y_time - &reference).norm() / reference.norm();
        let margin = 1e-10 - rel;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
        }
    }
    SuiteOutcome {
        name: "cp-circularization",
        checks: instances,
        failures,
        worst_margin: worst,
        detail: format!("{instances} noiseless end-to-end blocks vs per-tone model"),
    }
}

/// Every solver output satisfies the structural invariants; the power
/// normalizing factor is recovered exactly on an exact analog isometry.
pub fn solution_invariant_suite(instances: usize, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    let mut checks = 0;
    for t in 0..instances {
        let n_rf = 2 + (t % 3); // 2, 3, 4
        let cfg = ChannelModelConfig {
            n_clusters: 3,
            n_rays: 3,
            n_tx: 8,
            n_rx: 8,
            angle_spread: 0.17,
            cp_len: 8,
        };
        let ch = sample_channel(&cfg, &mut r).unwrap();
        let chf = frequency_response(&tap_matrices(&ch, 8, 8), 16).unwrap();
        let sys = SystemConfig {
            n_tx: 8,
            n_rx: 8,
            n_rf,
            n_streams: 2,
            block_len: 16,
            noise_var: 0.05 + r.random::<f64>(),
        };
        let solver = SolverConfig {
            seed: r.random(),
            ..SolverConfig::default()
        };
        let (sol, diag) = solve_hbf(&chf, &sys, &solver).unwrap();
        checks += 1;
        if sol.validate().is_err() || diag.iterations != diag.objective_trace.len() {
            failures += 1;
            worst = worst.min(-1.0);
        }
        let j = sum_mse(&sol, &chf, sys.noise_var);
        let margin = j + 1e-9 - diag.lower_bound;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
        }
    }
    // exact-isometry case: columns of ones and alternating signs make
    // V_RF^H V_RF = n_t I exact, so gamma must be exactly 1/(n_t n_s)
    let n_t = 16;
    let v_rf = CMat::from_fn(n_t, 2, |row, c| {
        if c == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(if row % 2 == 0 { 1.0 } else { -1.0 }, 0.0)
        }
    });
    let (_, gamma) = normalize_digital_precoder(&v_rf, &identity(2)).unwrap();
    checks += 1;
    if gamma != 1.0 / (n_t as f64 * 2.0) {
        failures += 1;
        worst = worst.min(-1.0);
    }
    SuiteOutcome {
        name: "solution-invariants",
        checks,
        failures,
        worst_margin: worst,
        detail: format!("{instances} solver runs plus the exact-isometry power factor"),
    }
}

/// Monte Carlo time-domain MSE matches the analytic sum-MSE within 3% once
/// at least `min_symbols` QAM symbols have been simulated.
pub fn mse_consistency_suite(instances: usize, min_symbols: u64, seed: u64) -> SuiteOutcome {
    let mut r = rng(seed);
    let mut failures = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..instances {
        let (n, l, n_s) = (64usize, 16usize, 2usize);
        let cfg = ChannelModelConfig {
            n_clusters: 4,
            n_rays: 3,
            n_tx: 8,
            n_rx: 8,
            angle_spread: 0.17,
            cp_len: l,
        };
        let ch = sample_channel(&cfg, &mut r).unwrap();
        let taps = tap_matrices(&ch, 8, 8);
        let chf = frequency_response(&taps, n).unwrap();
        let sys = SystemConfig {
            n_tx: 8,
            n_rx: 8,
            n_rf: 2,
            n_streams: n_s,
            block_len: n,
            noise_var: SystemConfig::noise_var_for_snr_db(-5.0 + 10.0 * r.random::<f64>()),
        };
        let solver = SolverConfig {
            seed: r.random(),
            ..SolverConfig::default()
        };
        let (sol, _) = solve_hbf(&chf, &sys, &solver).unwrap();
        let ends = SchemeEnds::from_hbf(&sol);
        let analytic = ends.analytic_sum_mse(&chf, sys.noise_var);

        let blocks = (min_symbols as usize).div_ceil(n * n_s);
        let run = BerRunConfig {
            max_blocks: blocks,
            target_errors: u64::MAX,
            cp_len: l,
            qam_order: 4,
        };
        let sim = run_ber_point(&ends, &taps, n_s, n, sys.noise_var, &run, &mut r).unwrap();
        let rel = (sim.mse - analytic).abs() / analytic;
        let margin = 0.03 - rel;
        worst = worst.min(margin);
        if margin < 0.0 {
            failures += 1;
        }
    }
    SuiteOutcome {
        name: "analytic-vs-empirical-mse",
        checks: instances,
        failures,
        worst_margin: worst,
        detail: format!("{instances} instances, >= {min_symbols} symbols each, 3% tolerance"),
    }
}

/// Run every suite at its reference size.
pub fn run_all(seed: u64) -> Vec<SuiteOutcome> {
    vec![
        eigenvalue_domination_suite(200, seed ^ 0x01),
        substitution_identity_suite(100, seed ^ 0x02),
        combiner_optimality_suite(50, 100, seed ^ 0x03),
        reduced_objective_equivalence_suite(50, seed ^ 0x04),
        evd_minimizer_suite(20, 500, seed ^ 0x05),
        lower_bound_suite(100, seed ^ 0x06),
        cp_equivalence_suite(50, seed ^ 0x07),
        solution_invariant_suite(12, seed ^ 0x08),
        mse_consistency_suite(10, 100_000, seed ^ 0x09),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fro_norm_sq;

    #[test]
    fn suites_pass_at_small_sizes() {
        for outcome in [
            eigenvalue_domination_suite(20, 1),
            substitution_identity_suite(10, 2),
            combiner_optimality_suite(5, 10, 3),
            reduced_objective_equivalence_suite(10, 4),
            evd_minimizer_suite(4, 50, 5),
            lower_bound_suite(10, 6),
            cp_equivalence_suite(5, 7),
            solution_invariant_suite(3, 8),
        ] {
            assert!(outcome.passed(), "{}", outcome.verdict_line());
        }
    }

    #[test]
    fn corrupted_combiner_breaks_substitution_identity() {
        // negative control: scaling the closed-form combiner must be caught
        // by the identity check
        let mut r = rng(9);
        let inst = random_instance(6, 6, 2, 2, 4, &mut r);
        let reduced =
            reduced_mse(&inst.v_rf, &inst.w_rf, &inst.v_d, &inst.chf, inst.noise_var).unwrap();
        let w_d: Vec<CMat> = (0..4)
            .map(|k| {
                let w = digital_combiner(
                    &inst.w_rf,
                    &inst.chf.tones[k],
                    &inst.v_rf,
                    &inst.v_d,
                    inst.noise_var,
                )
                .unwrap();
                w.scale(1.01) // corrupted
            })
            .collect();
        let sol = HbfSolution {
            v_rf: inst.v_rf.clone(),
            v_d: inst.v_d.clone(),
            w_rf: inst.w_rf.clone(),
            w_d,
            gamma: inst.gamma,
            v_u: inst.v_u.clone(),
        };
        let full = sum_mse(&sol, &inst.chf, inst.noise_var);
        let rel = (reduced - full).abs() / full;
        assert!(
            rel > 1e-8,
            "corruption must be detectable, got relative gap {rel:.3e}"
        );
    }

    #[test]
    fn fro_norm_helper_is_consistent() {
        let m = CMat::from_fn(2, 2, |i, j| Complex64::new(i as f64, j as f64));
        assert!((fro_norm_sq(&m) - m.norm_squared()).abs() < 1e-15);
    }
}
