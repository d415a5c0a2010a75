//! Batch experiment orchestration: flat-text configs, seeded sweeps, CSV
//! output, and the selftest report.
//!
//! Reproducibility contract: every output embeds the fully resolved
//! configuration and root seed, trial seeds come from a fixed derivation
//! tree, and a rerun with the same config file produces identical bytes.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{ifd_solution, strongest_path_fd, strongest_path_hbf};
use crate::channel::{
    channel_to_text, frequency_response, sample_channel, tap_matrices, ChannelModelConfig,
    ClusterRayChannel,
};
use crate::hbf::{solve_hbf, HbfSolution, SolverConfig, SolverDiagnostics, StopReason, SystemConfig};
use crate::link::{derive_seed, run_ber_point, BerRunConfig, SchemeEnds, SimulationResult};
use crate::numerics::CMat;
use crate::verify::{run_all, SuiteOutcome};
use crate::{Error, Result};

// seed-tree tags
const TAG_SNR_CHANNEL: u64 = 1;
const TAG_SNR_LINK: u64 = 2;
const TAG_SNR_SOLVER: u64 = 3;
const TAG_NRF_CHANNEL: u64 = 4;
const TAG_NRF_LINK: u64 = 5;
const TAG_NRF_SOLVER: u64 = 6;
const TAG_SOLVE_CMD: u64 = 7;

/// Beamforming schemes the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeId {
    EvdHbf,
    Ifd,
    FdStrongest,
    HbfStrongest,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [
        SchemeId::EvdHbf,
        SchemeId::Ifd,
        SchemeId::FdStrongest,
        SchemeId::HbfStrongest,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            SchemeId::EvdHbf => "evd-hbf",
            SchemeId::Ifd => "ifd",
            SchemeId::FdStrongest => "fd-strongest",
            SchemeId::HbfStrongest => "hbf-strongest",
        }
    }

    pub fn parse(s: &str) -> Result<SchemeId> {
        SchemeId::ALL
            .iter()
            .copied()
            .find(|id| id.label() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = SchemeId::ALL.iter().map(|id| id.label()).collect();
                Error::Config(format!(
                    "unknown scheme `{s}`; valid schemes: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_rf: usize,
    pub n_streams: usize,
    pub block_len: usize,
    pub cp_len: usize,
    pub n_clusters: usize,
    pub n_rays: usize,
    pub angle_spread_deg: f64,
    pub qam_order: usize,
    pub schemes: Vec<SchemeId>,
    pub snr_db: Vec<f64>,
    pub n_rf_list: Vec<usize>,
    /// Operating SNR of the RF-chain sweep.
    pub nrf_sweep_snr_db: f64,
    pub trials: usize,
    /// Per-trial block cap for the Monte Carlo runs.
    pub max_blocks: usize,
    /// Early-stop error floor per trial.
    pub target_errors: u64,
    pub solver_max_iters: usize,
    pub solver_rel_tol: f64,
    pub solver_restarts: usize,
    /// Root seed of the derivation tree.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_tx: 16,
            n_rx: 16,
            n_rf: 2,
            n_streams: 2,
            block_len: 64,
            cp_len: 16,
            n_clusters: 5,
            n_rays: 10,
            angle_spread_deg: 10.0,
            qam_order: 4,
            schemes: SchemeId::ALL.to_vec(),
            snr_db: vec![-20.0, -16.0, -12.0, -8.0, -4.0, 0.0],
            n_rf_list: vec![2, 3, 4],
            nrf_sweep_snr_db: -18.0,
            trials: 4,
            max_blocks: 800,
            target_errors: 100,
            solver_max_iters: 50,
            solver_rel_tol: 1e-4,
            solver_restarts: 5,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("snr_db sweep is empty".into()));
        }
        if self.n_rf_list.is_empty() {
            return Err(Error::Config("n_rf_list sweep is empty".into()));
        }
        for &n_rf in &self.n_rf_list {
            if n_rf < self.n_streams {
                return Err(Error::Config(format!(
                    "n_rf_list entry {n_rf} is below n_streams = {}",
                    self.n_streams
                )));
            }
        }
        if self.max_blocks < 1 {
            return Err(Error::Config("max_blocks must be >= 1".into()));
        }
        self.system(self.n_rf, 0.0)?.validate()?;
        self.channel_model().validate()
    }

    /// System view at a given RF-chain count and SNR.
    pub fn system(&self, n_rf: usize, snr_db: f64) -> Result<SystemConfig> {
        Ok(SystemConfig {
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            n_rf,
            n_streams: self.n_streams,
            block_len: self.block_len,
            noise_var: SystemConfig::noise_var_for_snr_db(snr_db),
        })
    }

    pub fn channel_model(&self) -> ChannelModelConfig {
        ChannelModelConfig {
            n_clusters: self.n_clusters,
            n_rays: self.n_rays,
            n_tx: self.n_tx,
            n_rx: self.n_rx,
            angle_spread: self.angle_spread_deg.to_radians(),
            cp_len: self.cp_len,
        }
    }

    pub fn solver(&self, seed: u64) -> SolverConfig {
        SolverConfig {
            max_iters: self.solver_max_iters,
            rel_tol: self.solver_rel_tol,
            seed,
            restarts: self.solver_restarts,
        }
    }

    fn ber_run(&self) -> BerRunConfig {
        BerRunConfig {
            max_blocks: self.max_blocks,
            target_errors: self.target_errors,
            cp_len: self.cp_len,
            qam_order: self.qam_order,
        }
    }

    /// Resolved key/value lines, in the documented fixed order.
    pub fn resolved_lines(&self) -> Vec<String> {
        let schemes: Vec<&str> = self.schemes.iter().map(|s| s.label()).collect();
        let fmt_f = |v: f64| format!("{v}");
        let join_f = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let join_u = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            format!("n_tx = {}", self.n_tx),
            format!("n_rx = {}", self.n_rx),
            format!("n_rf = {}", self.n_rf),
            format!("n_streams = {}", self.n_streams),
            format!("block_len = {}", self.block_len),
            format!("cp_len = {}", self.cp_len),
            format!("n_clusters = {}", self.n_clusters),
            format!("n_rays = {}", self.n_rays),
            format!("angle_spread_deg = {}", fmt_f(self.angle_spread_deg)),
            format!("qam_order = {}", self.qam_order),
            format!("schemes = {}", schemes.join(",")),
            format!("snr_db = {}", join_f(&self.snr_db)),
            format!("n_rf_list = {}", join_u(&self.n_rf_list)),
            format!("nrf_sweep_snr_db = {}", fmt_f(self.nrf_sweep_snr_db)),
            format!("trials = {}", self.trials),
            format!("max_blocks = {}", self.max_blocks),
            format!("target_errors = {}", self.target_errors),
            format!("solver_max_iters = {}", self.solver_max_iters),
            format!("solver_rel_tol = {}", fmt_f(self.solver_rel_tol)),
            format!("solver_restarts = {}", self.solver_restarts),
            format!("seed = {}", self.seed),
        ]
    }
}

/// Parse the flat `key = value` config format (`#` starts a comment).
/// Unspecified keys keep their defaults; unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Error::Parse(format!("line {}: bad {what}: `{value}`", lineno + 1));
        match key {
            "n_tx" => cfg.n_tx = value.parse().map_err(|_| bad("n_tx"))?,
            "n_rx" => cfg.n_rx = value.parse().map_err(|_| bad("n_rx"))?,
            "n_rf" => cfg.n_rf = value.parse().map_err(|_| bad("n_rf"))?,
            "n_streams" => cfg.n_streams = value.parse().map_err(|_| bad("n_streams"))?,
            "block_len" => cfg.block_len = value.parse().map_err(|_| bad("block_len"))?,
            "cp_len" => cfg.cp_len = value.parse().map_err(|_| bad("cp_len"))?,
            "n_clusters" => cfg.n_clusters = value.parse().map_err(|_| bad("n_clusters"))?,
            "n_rays" => cfg.n_rays = value.parse().map_err(|_| bad("n_rays"))?,
            "angle_spread_deg" => {
                cfg.angle_spread_deg = value.parse().map_err(|_| bad("angle_spread_deg"))?
            }
            "qam_order" => cfg.qam_order = value.parse().map_err(|_| bad("qam_order"))?,
            "schemes" => {
                cfg.schemes = value
                    .split(',')
                    .map(|s| SchemeId::parse(s.trim()))
                    .collect::<Result<_>>()?
            }
            "snr_db" => {
                cfg.snr_db = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| bad("snr_db")))
                    .collect::<Result<_>>()?
            }
            "n_rf_list" => {
                cfg.n_rf_list = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| bad("n_rf_list")))
                    .collect::<Result<_>>()?
            }
            "nrf_sweep_snr_db" => {
                cfg.nrf_sweep_snr_db = value.parse().map_err(|_| bad("nrf_sweep_snr_db"))?
            }
            "trials" => cfg.trials = value.parse().map_err(|_| bad("trials"))?,
            "max_blocks" => cfg.max_blocks = value.parse().map_err(|_| bad("max_blocks"))?,
            "target_errors" => {
                cfg.target_errors = value.parse().map_err(|_| bad("target_errors"))?
            }
            "solver_max_iters" => {
                cfg.solver_max_iters = value.parse().map_err(|_| bad("solver_max_iters"))?
            }
            "solver_rel_tol" => {
                cfg.solver_rel_tol = value.parse().map_err(|_| bad("solver_rel_tol"))?
            }
            "solver_restarts" => {
                cfg.solver_restarts = value.parse().map_err(|_| bad("solver_restarts"))?
            }
            "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
            other => {
                return Err(Error::Parse(format!(
                    "line {}: unknown key `{other}`",
                    lineno + 1
                )))
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One aggregated CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub n_rf: usize,
    pub blocks: u64,
    pub bits: u64,
    pub errors: u64,
    pub ber: f64,
    pub mse: f64,
    pub papr_p50_db: f64,
    pub papr_p99_db: f64,
}

/// Per-trial record kept by the sweeps (the CSV aggregates over these; the
/// acceptance trend checks need the per-seed values).
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub scheme: SchemeId,
    pub snr_db: f64,
    pub n_rf: usize,
    pub trial: usize,
    pub result: SimulationResult,
}

fn aggregate(
    scheme: SchemeId,
    snr_db: f64,
    n_rf: usize,
    results: &[SimulationResult],
) -> SweepRow {
    let blocks: u64 = results.iter().map(|r| r.blocks).sum();
    let bits: u64 = results.iter().map(|r| r.bits_sent).sum();
    let errors: u64 = results.iter().map(|r| r.bit_errors).sum();
    // per-sample MSE weighted by simulated blocks
    let mse = if blocks > 0 {
        results
            .iter()
            .map(|r| r.mse * r.blocks as f64)
            .sum::<f64>()
            / blocks as f64
    } else {
        0.0
    };
    let mut papr: Vec<f64> = results
        .iter()
        .flat_map(|r| r.papr_samples_db.iter().copied())
        .collect();
    papr.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pct = |p: f64| -> f64 {
        if papr.is_empty() {
            return 0.0;
        }
        let idx = ((p / 100.0 * papr.len() as f64).ceil() as usize).max(1) - 1;
        papr[idx.min(papr.len() - 1)]
    };
    SweepRow {
        scheme,
        snr_db,
        n_rf,
        blocks,
        bits,
        errors,
        ber: if bits > 0 {
            errors as f64 / bits as f64
        } else {
            0.0
        },
        mse,
        papr_p50_db: pct(50.0),
        papr_p99_db: pct(99.0),
    }
}

/// Construct the link view of one scheme for one channel realization.
pub fn build_scheme_ends(
    scheme: SchemeId,
    ch: &ClusterRayChannel,
    chf: &crate::channel::ChannelFrequencyResponse,
    sys: &SystemConfig,
    solver: &SolverConfig,
) -> Result<SchemeEnds> {
    Ok(match scheme {
        SchemeId::EvdHbf => SchemeEnds::from_hbf(&solve_hbf(chf, sys, solver)?.0),
        SchemeId::Ifd => ifd_solution(chf, sys)?.ends(sys.n_rx),
        SchemeId::FdStrongest => strongest_path_fd(ch, sys)?.ends(sys.n_rx),
        SchemeId::HbfStrongest => strongest_path_hbf(ch, sys)?.ends(sys.n_rx),
    })
}

fn sweep_point(
    cfg: &ExperimentConfig,
    scheme: SchemeId,
    snr_db: f64,
    n_rf: usize,
    channel_tag: u64,
    link_tag: u64,
    solver_tag: u64,
    point_idx: u64,
    records: &mut Vec<TrialRecord>,
) -> Result<SweepRow> {
    let sys = cfg.system(n_rf, snr_db)?;
    sys.validate()?;
    let model = cfg.channel_model();
    let run = cfg.ber_run();
    let mut results = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        // channels and link noise are shared across schemes (and, for the
        // RF-chain sweep, across n_rf values) so comparisons are paired
        let ch_seed = derive_seed(cfg.seed, &[channel_tag, point_idx, trial as u64]);
        let ch = sample_channel(&model, &mut ChaCha8Rng::seed_from_u64(ch_seed))?;
        let taps = tap_matrices(&ch, sys.n_tx, sys.n_rx);
        let chf = frequency_response(&taps, sys.block_len)?;

        let solver_seed = derive_seed(
            cfg.seed,
            &[solver_tag, point_idx, trial as u64, scheme as u64],
        );
        let ends = build_scheme_ends(scheme, &ch, &chf, &sys, &cfg.solver(solver_seed))?;

        let link_seed = derive_seed(cfg.seed, &[link_tag, point_idx, trial as u64]);
        let sim = run_ber_point(
            &ends,
            &taps,
            sys.n_streams,
            sys.block_len,
            sys.noise_var,
            &run,
            &mut ChaCha8Rng::seed_from_u64(link_seed),
        )?;
        records.push(TrialRecord {
            scheme,
            snr_db,
            n_rf,
            trial,
            result: sim.clone(),
        });
        results.push(sim);
    }
    Ok(aggregate(scheme, snr_db, n_rf, &results))
}

/// BER-vs-SNR sweep; one row per (scheme, SNR).
pub fn run_snr_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, Vec<TrialRecord>)> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (pi, &snr) in cfg.snr_db.iter().enumerate() {
        for &scheme in &cfg.schemes {
            rows.push(sweep_point(
                cfg,
                scheme,
                snr,
                cfg.n_rf,
                TAG_SNR_CHANNEL,
                TAG_SNR_LINK,
                TAG_SNR_SOLVER,
                pi as u64,
                &mut records,
            )?);
        }
    }
    Ok((rows, records))
}

/// BER-vs-RF-chain-count sweep at the configured fixed SNR; one row per
/// (scheme, n_rf). Channels are shared across n_rf values per trial.
pub fn run_nrf_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepRow>, Vec<TrialRecord>)> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n_rf in &cfg.n_rf_list {
        for &scheme in &cfg.schemes {
            rows.push(sweep_point(
                cfg,
                scheme,
                cfg.nrf_sweep_snr_db,
                n_rf,
                TAG_NRF_CHANNEL,
                TAG_NRF_LINK,
                TAG_NRF_SOLVER,
                // channel/link seeds must not depend on n_rf: point index 0
                0,
                &mut records,
            )?);
        }
    }
    Ok((rows, records))
}

/// Render rows as the versioned CSV document with the resolved config echoed
/// in header comments.
pub fn render_csv(cfg: &ExperimentConfig, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str("# sc-hbf-results v1\n");
    for line in cfg.resolved_lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str("scheme,snr_db,n_rf,blocks,bits,errors,ber,mse,papr_p50_db,papr_p99_db\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.2},{},{},{},{},{:.6e},{:.6e},{:.3},{:.3}",
            r.scheme.label(),
            r.snr_db,
            r.n_rf,
            r.blocks,
            r.bits,
            r.errors,
            r.ber,
            r.mse,
            r.papr_p50_db,
            r.papr_p99_db
        );
    }
    out
}

/// Solve one EVD-HBF instance on a fresh channel realization (first sweep SNR)
/// and return the channel dump and the solution dump.
pub fn solve_once(cfg: &ExperimentConfig) -> Result<(String, String)> {
    cfg.validate()?;
    let snr = cfg.snr_db[0];
    let sys = cfg.system(cfg.n_rf, snr)?;
    let ch_seed = derive_seed(cfg.seed, &[TAG_SOLVE_CMD, 0]);
    let ch = sample_channel(&cfg.channel_model(), &mut ChaCha8Rng::seed_from_u64(ch_seed))?;
    let taps = tap_matrices(&ch, sys.n_tx, sys.n_rx);
    let chf = frequency_response(&taps, sys.block_len)?;
    let solver_seed = derive_seed(cfg.seed, &[TAG_SOLVE_CMD, 1]);
    let (sol, diag) = solve_hbf(&chf, &sys, &cfg.solver(solver_seed))?;
    // channel dumps carry the resolved config too (comment lines parse fine)
    let mut channel_text = String::from("# sc-hbf channel dump\n");
    for line in cfg.resolved_lines() {
        let _ = writeln!(channel_text, "# {line}");
    }
    channel_text.push_str(&channel_to_text(&ch));
    Ok((channel_text, solution_to_text(cfg, snr, &sol, &diag)))
}

fn matrix_block(out: &mut String, name: &str, m: &CMat) {
    let _ = writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        let cells: Vec<String> = (0..m.ncols())
            .map(|c| format!("{:.17e} {:.17e}", m[(r, c)].re, m[(r, c)].im))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  "));
    }
}

/// Structured-text dump of a solution and its diagnostics.
pub fn solution_to_text(
    cfg: &ExperimentConfig,
    snr_db: f64,
    sol: &HbfSolution,
    diag: &SolverDiagnostics,
) -> String {
    let mut out = String::new();
    out.push_str("# sc-hbf solution v1\n");
    for line in cfg.resolved_lines() {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "snr_db = {snr_db}");
    let _ = writeln!(out, "gamma = {:.17e}", sol.gamma);
    let _ = writeln!(out, "iterations = {}", diag.iterations);
    let _ = writeln!(
        out,
        "stop_reason = {}",
        match diag.stop_reason {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIterations => "max-iterations",
        }
    );
    let _ = writeln!(out, "nonmonotonic_steps = {}", diag.nonmonotonic_steps);
    let _ = writeln!(out, "winning_start = {}", diag.winning_start);
    let _ = writeln!(out, "lower_bound = {:.17e}", diag.lower_bound);
    let trace: Vec<String> = diag
        .objective_trace
        .iter()
        .map(|j| format!("{j:.17e}"))
        .collect();
    let _ = writeln!(out, "objective_trace = {}", trace.join(","));
    matrix_block(&mut out, "v_rf", &sol.v_rf);
    matrix_block(&mut out, "v_d", &sol.v_d);
    matrix_block(&mut out, "v_u", &sol.v_u);
    matrix_block(&mut out, "w_rf", &sol.w_rf);
    for (k, w) in sol.w_d.iter().enumerate() {
        matrix_block(&mut out, &format!("w_d.{k}"), w);
    }
    out
}

/// Run every invariant suite; returns the outcomes and overall success.
pub fn selftest(seed: u64) -> (Vec<SuiteOutcome>, bool) {
    let outcomes = run_all(seed);
    let ok = outcomes.iter().all(SuiteOutcome::passed);
    (outcomes, ok)
}
