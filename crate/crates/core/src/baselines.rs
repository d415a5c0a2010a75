//! Comparison schemes: the ideal per-tone full-digital MMSE benchmark and
//! strongest-path approximations of conventional full-digital / hybrid
//! designs for single-carrier links.
//!
//! The strongest-path schemes deliberately use only the dominant rays of a
//! realization, which is what makes them cheap and what costs them
//! performance on frequency-selective channels. They are labeled
//! approximations of the conventional designs, reconstructed from their
//! one-line descriptions, not faithful ports.

use num_complex::Complex64;

use crate::channel::{array_response, frequency_response, tap_matrices, ChannelFrequencyResponse, ClusterRayChannel};
use crate::hbf::{digital_combiner, normalize_digital_precoder, phase_extract, SystemConfig};
use crate::link::{SchemeEnds, TxFrontEnd};
use crate::numerics::{identity, inverse, CMat};
use crate::{Error, Result};

/// Which comparison scheme a [`BaselineSolution`] implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineScheme {
    /// Ideal full-digital MMSE with an independent precoder per tone.
    Ifd,
    /// Full-digital wideband precoder built from the strongest rays.
    FdStrongest,
    /// Hybrid beamformer steered at the strongest rays.
    HbfStrongest,
}

impl BaselineScheme {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineScheme::Ifd => "ifd",
            BaselineScheme::FdStrongest => "fd-strongest",
            BaselineScheme::HbfStrongest => "hbf-strongest",
        }
    }
}

/// A configured comparison scheme, ready for simulation.
#[derive(Debug, Clone)]
pub struct BaselineSolution {
    pub scheme: BaselineScheme,
    /// IFD only: one `n_tx x n_streams` precoder per tone.
    pub per_tone_precoders: Option<Vec<CMat>>,
    /// HBF-strongest only: analog precoder (`n_tx x n_rf`, unit modulus).
    pub tx_analog: Option<CMat>,
    /// Shared digital precoder (HBF: `n_rf x n_streams`; FD: `n_tx x n_streams`).
    pub tx_digital: Option<CMat>,
    /// HBF-strongest only: analog combiner.
    pub rx_analog: Option<CMat>,
    /// Per-tone digital combiners.
    pub per_tone_combiners: Vec<CMat>,
}

impl BaselineSolution {
    /// Effective transmit precoder at tone `k`.
    pub fn effective_precoder(&self, k: usize) -> CMat {
        if let Some(ps) = &self.per_tone_precoders {
            return ps[k].clone();
        }
        let d = self.tx_digital.as_ref().expect("flat schemes carry a digital precoder");
        match &self.tx_analog {
            Some(a) => a * d,
            None => d.clone(),
        }
    }

    /// View usable by the link simulator.
    pub fn ends(&self, n_rx: usize) -> SchemeEnds {
        let tx = match &self.per_tone_precoders {
            Some(ps) => TxFrontEnd::PerTone(ps.clone()),
            None => TxFrontEnd::Flat(self.effective_precoder(0)),
        };
        SchemeEnds {
            tx,
            rx_analog: self
                .rx_analog
                .clone()
                .unwrap_or_else(|| identity(n_rx)),
            rx_digital: self.per_tone_combiners.clone(),
        }
    }
}

/// Full-digital MMSE combiner for a per-tone effective channel `B = H V`:
/// `W = (B B^H + noise_var I)^{-1} B`.
fn full_digital_combiner(h_k: &CMat, precoder: &CMat, noise_var: f64) -> Result<CMat> {
    let b = h_k * precoder;
    let s = &b * b.adjoint() + identity(h_k.nrows()).scale(noise_var);
    Ok(inverse(&s)? * b)
}

/// Ideal full-digital benchmark: at every tone, equal-power transmission on
/// the top `n_streams` right singular vectors of `H_k` with the matching MMSE
/// combiner. No PAPR consideration and no hardware constraint.
pub fn ifd_solution(chf: &ChannelFrequencyResponse, sys: &SystemConfig) -> Result<BaselineSolution> {
    let ns = sys.n_streams;
    let scale = (1.0 / ns as f64).sqrt();
    let mut precoders = Vec::with_capacity(chf.n_tones());
    let mut combiners = Vec::with_capacity(chf.n_tones());
    for h in &chf.tones {
        let svd = h.clone().svd(false, true);
        let v_t = svd.v_t.as_ref().expect("requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        // right singular vector i is the adjoint of row i of v_t
        let v_k = CMat::from_fn(h.ncols(), ns, |r, c| {
            v_t[(order[c], r)].conj() * scale
        });
        combiners.push(full_digital_combiner(h, &v_k, sys.noise_var)?);
        precoders.push(v_k);
    }
    Ok(BaselineSolution {
        scheme: BaselineScheme::Ifd,
        per_tone_precoders: Some(precoders),
        tx_analog: None,
        tx_digital: None,
        rx_analog: None,
        per_tone_combiners: combiners,
    })
}

/// Rays sorted by gain magnitude, strongest first; equal gains fall back to
/// (cluster, ray) index order.
fn rays_by_strength(ch: &ClusterRayChannel) -> Vec<(usize, usize)> {
    let mut rays: Vec<(usize, usize, f64)> = Vec::with_capacity(ch.total_rays());
    for i in 0..ch.n_clusters() {
        for j in 0..ch.gains[i].len() {
            rays.push((i, j, ch.gains[i][j].norm()));
        }
    }
    rays.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });
    rays.into_iter().map(|(i, j, _)| (i, j)).collect()
}

/// Hybrid scheme steered at the strongest rays: analog beams are the
/// phase-extracted steering vectors of the `n_rf` largest-gain rays, the
/// digital precoder is the power-normalized identity extension, and the
/// per-tone combiners are the MMSE closed form.
pub fn strongest_path_hbf(
    ch: &ClusterRayChannel,
    sys: &SystemConfig,
) -> Result<BaselineSolution> {
    if ch.total_rays() < sys.n_rf {
        return Err(Error::Config(format!(
            "{} rays cannot steer {} RF chains",
            ch.total_rays(),
            sys.n_rf
        )));
    }
    let ranked = rays_by_strength(ch);
    let mut v_rf = CMat::zeros(sys.n_tx, sys.n_rf);
    let mut w_rf = CMat::zeros(sys.n_rx, sys.n_rf);
    for (c, &(i, j)) in ranked.iter().take(sys.n_rf).enumerate() {
        let at = array_response(ch.departure_angles[i][j], sys.n_tx);
        let ar = array_response(ch.arrival_angles[i][j], sys.n_rx);
        for r in 0..sys.n_tx {
            v_rf[(r, c)] = at[r];
        }
        for r in 0..sys.n_rx {
            w_rf[(r, c)] = ar[r];
        }
    }
    let v_rf = phase_extract(&v_rf);
    let w_rf = phase_extract(&w_rf);

    let v_u = CMat::from_fn(sys.n_rf, sys.n_streams, |r, c| {
        if r == c {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let (v_d, _gamma) = normalize_digital_precoder(&v_rf, &v_u)?;

    let taps = tap_matrices(ch, sys.n_tx, sys.n_rx);
    let chf = frequency_response(&taps, sys.block_len)?;
    let mut combiners = Vec::with_capacity(chf.n_tones());
    for h in &chf.tones {
        combiners.push(digital_combiner(&w_rf, h, &v_rf, &v_d, sys.noise_var)?);
    }
    Ok(BaselineSolution {
        scheme: BaselineScheme::HbfStrongest,
        per_tone_precoders: None,
        tx_analog: Some(v_rf),
        tx_digital: Some(v_d),
        rx_analog: Some(w_rf),
        per_tone_combiners: combiners,
    })
}

/// Full-digital wideband scheme built from the strongest rays: the
/// orthonormalized transmit steering vectors of the `n_streams` largest-gain
/// rays, power-normalized, with per-tone MMSE combiners.
pub fn strongest_path_fd(
    ch: &ClusterRayChannel,
    sys: &SystemConfig,
) -> Result<BaselineSolution> {
    if ch.total_rays() < sys.n_streams {
        return Err(Error::Config(format!(
            "{} rays cannot carry {} streams",
            ch.total_rays(),
            sys.n_streams
        )));
    }
    let ranked = rays_by_strength(ch);
    let mut steering = CMat::zeros(sys.n_tx, sys.n_streams);
    for (c, &(i, j)) in ranked.iter().take(sys.n_streams).enumerate() {
        let at = array_response(ch.departure_angles[i][j], sys.n_tx);
        for r in 0..sys.n_tx {
            steering[(r, c)] = at[r];
        }
    }
    let q = steering.qr().q();
    let precoder = q.scale((1.0 / sys.n_streams as f64).sqrt());

    let taps = tap_matrices(ch, sys.n_tx, sys.n_rx);
    let chf = frequency_response(&taps, sys.block_len)?;
    let mut combiners = Vec::with_capacity(chf.n_tones());
    for h in &chf.tones {
        combiners.push(full_digital_combiner(h, &precoder, sys.noise_var)?);
    }
    Ok(BaselineSolution {
        scheme: BaselineScheme::FdStrongest,
        per_tone_precoders: None,
        tx_analog: None,
        tx_digital: Some(precoder),
        rx_analog: None,
        per_tone_combiners: combiners,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, ChannelModelConfig};
    use crate::hbf::{solve_hbf, SolverConfig};
    use crate::link::SchemeEnds;
    use crate::numerics::fro_norm_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sys(n_tx: usize, n_rx: usize, n_rf: usize, n_s: usize, n: usize, noise: f64) -> SystemConfig {
        SystemConfig {
            n_tx,
            n_rx,
            n_rf,
            n_streams: n_s,
            block_len: n,
            noise_var: noise,
        }
    }

    fn desk_channel(seed: u64, n_tx: usize, n_rx: usize) -> ClusterRayChannel {
        let cfg = ChannelModelConfig {
            n_clusters: 4,
            n_rays: 3,
            n_tx,
            n_rx,
            angle_spread: 10f64.to_radians(),
            cp_len: 8,
        };
        sample_channel(&cfg, &mut rng(seed)).unwrap()
    }

    #[test]
    fn ifd_selects_dominant_coordinates_of_diagonal_channel() {
        let mut h = CMat::zeros(3, 3);
        h[(0, 0)] = Complex64::new(1.0, 0.0);
        h[(1, 1)] = Complex64::new(3.0, 0.0);
        h[(2, 2)] = Complex64::new(2.0, 0.0);
        let chf = ChannelFrequencyResponse { tones: vec![h] };
        let s = sys(3, 3, 2, 2, 1, 0.1);
        let sol = ifd_solution(&chf, &s).unwrap();
        let v = &sol.per_tone_precoders.as_ref().unwrap()[0];
        let scale = (0.5f64).sqrt();
        // strongest direction e2 first, then e3
        assert!((v[(1, 0)].norm() - scale).abs() < 1e-12);
        assert!((v[(2, 1)].norm() - scale).abs() < 1e-12);
        assert!(v[(0, 0)].norm() < 1e-12 && v[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn ifd_mse_vanishes_without_noise() {
        let ch = desk_channel(1, 6, 6);
        let taps = tap_matrices(&ch, 6, 6);
        let chf = frequency_response(&taps, 8).unwrap();
        let s = sys(6, 6, 2, 2, 8, 1e-9);
        let sol = ifd_solution(&chf, &s).unwrap();
        let j = sol.ends(6).analytic_sum_mse(&chf, s.noise_var);
        assert!(j < 1e-5, "noiseless IFD MSE {j}");
    }

    #[test]
    fn ifd_power_per_tone_is_unit() {
        let ch = desk_channel(2, 5, 4);
        let taps = tap_matrices(&ch, 5, 4);
        let chf = frequency_response(&taps, 8).unwrap();
        let s = sys(5, 4, 2, 2, 8, 0.3);
        let sol = ifd_solution(&chf, &s).unwrap();
        for v in sol.per_tone_precoders.as_ref().unwrap() {
            assert!((fro_norm_sq(v) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn ifd_dominates_hbf_per_tone() {
        let ch = desk_channel(3, 8, 8);
        let taps = tap_matrices(&ch, 8, 8);
        let chf = frequency_response(&taps, 16).unwrap();
        let s = sys(8, 8, 2, 2, 16, 0.4);
        let (hbf_sol, _) = solve_hbf(&chf, &s, &SolverConfig::default()).unwrap();
        let ifd = ifd_solution(&chf, &s).unwrap();
        let hbf_tone = SchemeEnds::from_hbf(&hbf_sol).per_tone_mse(&chf, s.noise_var);
        let ifd_tone = ifd.ends(8).per_tone_mse(&chf, s.noise_var);
        for k in 0..16 {
            assert!(
                ifd_tone[k] <= hbf_tone[k] + 1e-9,
                "tone {k}: IFD {} > HBF {}",
                ifd_tone[k],
                hbf_tone[k]
            );
        }
    }

    #[test]
    fn strongest_hbf_aligns_with_single_ray() {
        let ch = ClusterRayChannel {
            gains: vec![vec![Complex64::new(0.8, -0.2)]],
            departure_angles: vec![vec![0.4]],
            arrival_angles: vec![vec![-0.3]],
            delays: vec![0],
        };
        let s = sys(8, 8, 1, 1, 4, 0.1);
        let sol = strongest_path_hbf(&ch, &s).unwrap();
        let v_rf = sol.tx_analog.as_ref().unwrap();
        let at = array_response(0.4, 8);
        // phase-extracted steering vector: inner product magnitude is sqrt(n)
        let ip: Complex64 = (0..8).map(|r| at[r].conj() * v_rf[(r, 0)]).sum();
        assert!((ip.norm() - 8f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn strongest_hbf_tie_breaks_by_index() {
        let g = Complex64::new(0.5, 0.0);
        let ch = ClusterRayChannel {
            gains: vec![vec![g, g]],
            departure_angles: vec![vec![0.2, -0.6]],
            arrival_angles: vec![vec![0.1, 0.5]],
            delays: vec![0],
        };
        let s = sys(4, 4, 1, 1, 4, 0.1);
        let sol = strongest_path_hbf(&ch, &s).unwrap();
        let v_rf = sol.tx_analog.as_ref().unwrap();
        let expect = phase_extract(&CMat::from_fn(4, 1, |r, _| array_response(0.2, 4)[r]));
        assert!((v_rf - &expect).norm() < 1e-12, "ray (0,0) wins the tie");
    }

    #[test]
    fn strongest_hbf_rejects_too_few_rays() {
        let ch = ClusterRayChannel {
            gains: vec![vec![Complex64::new(1.0, 0.0)]],
            departure_angles: vec![vec![0.0]],
            arrival_angles: vec![vec![0.0]],
            delays: vec![0],
        };
        let s = sys(4, 4, 2, 1, 4, 0.1);
        assert!(matches!(strongest_path_hbf(&ch, &s), Err(Error::Config(_))));
    }

    #[test]
    fn strongest_fd_is_matched_filter_for_single_ray() {
        let ch = ClusterRayChannel {
            gains: vec![vec![Complex64::new(1.0, 0.5)]],
            departure_angles: vec![vec![0.7]],
            arrival_angles: vec![vec![0.0]],
            delays: vec![0],
        };
        let s = sys(6, 4, 1, 1, 4, 0.1);
        let sol = strongest_path_fd(&ch, &s).unwrap();
        let p = sol.tx_digital.as_ref().unwrap();
        let at = array_response(0.7, 6);
        let ip: Complex64 = (0..6).map(|r| at[r].conj() * p[(r, 0)]).sum();
        // orthonormalized single steering vector: |<a_t, p>| = ||p|| = 1
        assert!((ip.norm() - 1.0).abs() < 1e-10, "matched to the ray");
    }

    #[test]
    fn strongest_fd_matches_ifd_on_flat_channel() {
        // exactly n_streams rays in one zero-delay cluster: the IFD singular
        // basis and the orthonormalized steering vectors span the same
        // subspace, so the equal-power MSE coincides
        let mut r = rng(7);
        let cfg = ChannelModelConfig {
            n_clusters: 1,
            n_rays: 2,
            n_tx: 6,
            n_rx: 6,
            angle_spread: 20f64.to_radians(),
            cp_len: 4,
        };
        let ch = sample_channel(&cfg, &mut r).unwrap();
        let s = sys(6, 6, 2, 2, 8, 0.2);
        let taps = tap_matrices(&ch, 6, 6);
        let chf = frequency_response(&taps, 8).unwrap();
        let j_fd = strongest_path_fd(&ch, &s)
            .unwrap()
            .ends(6)
            .analytic_sum_mse(&chf, s.noise_var);
        let j_ifd = ifd_solution(&chf, &s)
            .unwrap()
            .ends(6)
            .analytic_sum_mse(&chf, s.noise_var);
        assert!(
            (j_fd - j_ifd).abs() <= 1e-9 * j_ifd,
            "flat-channel FD {j_fd} vs IFD {j_ifd}"
        );
    }

    #[test]
    fn multipath_median_ordering() {
        // over seeds, median J: IFD <= FD-strongest <= HBF-strongest
        let mut j_ifd = Vec::new();
        let mut j_fd = Vec::new();
        let mut j_hbf = Vec::new();
        for seed in 0..30 {
            let ch = desk_channel(100 + seed, 8, 8);
            let s = sys(8, 8, 2, 2, 16, 0.25);
            let taps = tap_matrices(&ch, 8, 8);
            let chf = frequency_response(&taps, 16).unwrap();
            j_ifd.push(
                ifd_solution(&chf, &s)
                    .unwrap()
                    .ends(8)
                    .analytic_sum_mse(&chf, s.noise_var),
            );
            j_fd.push(
                strongest_path_fd(&ch, &s)
                    .unwrap()
                    .ends(8)
                    .analytic_sum_mse(&chf, s.noise_var),
            );
            j_hbf.push(
                strongest_path_hbf(&ch, &s)
                    .unwrap()
                    .ends(8)
                    .analytic_sum_mse(&chf, s.noise_var),
            );
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let (mi, mf, mh) = (median(&mut j_ifd), median(&mut j_fd), median(&mut j_hbf));
        assert!(mi <= mf && mf <= mh, "median ordering: {mi} <= {mf} <= {mh}");
    }

    #[test]
    fn flat_scheme_power_is_unit() {
        let ch = desk_channel(9, 6, 6);
        let s = sys(6, 6, 2, 2, 8, 0.3);
        for sol in [
            strongest_path_hbf(&ch, &s).unwrap(),
            strongest_path_fd(&ch, &s).unwrap(),
        ] {
            let p = sol.effective_precoder(0);
            assert!(
                (fro_norm_sq(&p) - 1.0).abs() < 1e-9,
                "{:?} power {}",
                sol.scheme,
                fro_norm_sq(&p)
            );
        }
    }
}
