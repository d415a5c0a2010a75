//! Statistical comparison of the solver against the strongest-path hybrid
//! baseline across many channel realizations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sc_hbf::channel::{frequency_response, sample_channel, tap_matrices, ChannelModelConfig};
use sc_hbf::baselines::strongest_path_hbf;
use sc_hbf::hbf::{solve_hbf, sum_mse, SolverConfig, SystemConfig};
use sc_hbf::link::SchemeEnds;

#[test]
fn solver_beats_strongest_path_on_most_seeds() {
    let model = ChannelModelConfig {
        n_clusters: 5,
        n_rays: 10,
        n_tx: 16,
        n_rx: 16,
        angle_spread: 10f64.to_radians(),
        cp_len: 16,
    };
    let sys = SystemConfig {
        n_tx: 16,
        n_rx: 16,
        n_rf: 2,
        n_streams: 2,
        block_len: 16,
        noise_var: SystemConfig::noise_var_for_snr_db(-12.0),
    };
    let seeds = 200;
    let mut wins = 0;
    for seed in 0..seeds {
        let ch = sample_channel(&model, &mut ChaCha8Rng::seed_from_u64(900 + seed)).unwrap();
        let taps = tap_matrices(&ch, sys.n_tx, sys.n_rx);
        let chf = frequency_response(&taps, sys.block_len).unwrap();

        let solver = SolverConfig {
            seed: 5000 + seed,
            ..SolverConfig::default()
        };
        let (sol, _) = solve_hbf(&chf, &sys, &solver).unwrap();
        let j_evd = sum_mse(&sol, &chf, sys.noise_var);

        let baseline = strongest_path_hbf(&ch, &sys).unwrap();
        let j_sp = baseline.ends(sys.n_rx).analytic_sum_mse(&chf, sys.noise_var);

        if j_evd <= j_sp {
            wins += 1;
        }
    }
    assert!(
        wins * 100 >= seeds * 95,
        "solver won only {wins}/{seeds} seeds against the strongest-path baseline"
    );
    println!("solver beat the strongest-path baseline on {wins}/{seeds} seeds");
}
