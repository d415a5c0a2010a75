//! Geometry-based cluster-ray mmWave MIMO channel model.
//!
//! A realization consists of `N_C` clusters of `N_R` rays each. Every ray
//! carries a complex gain and a departure/arrival angle pair; every cluster
//! carries one integer symbol delay so that cyclic-prefix transmission sees an
//! exactly circular channel. Gains are normalized so the expected total power
//! `E{sum |alpha|^2}` is 1, which puts the expected Frobenius energy of a tap
//! set at `N_t * N_r` given the `sqrt(N_t N_r)` prefactor of the tap synthesis.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Distribution;

use crate::numerics::{fro_norm_sq, CMat, CVec};
use crate::{Error, Result};

/// Parameters of the cluster-ray model.
#[derive(Debug, Clone)]
pub struct ChannelModelConfig {
    /// Number of clusters (each gets a distinct integer delay).
    pub n_clusters: usize,
    /// Rays per cluster.
    pub n_rays: usize,
    /// Transmit antennas.
    pub n_tx: usize,
    /// Receive antennas.
    pub n_rx: usize,
    /// Laplacian scale of the per-ray angle offset around the cluster center,
    /// in radians.
    pub angle_spread: f64,
    /// Cyclic prefix length; cluster delays are drawn from `0..cp_len`.
    pub cp_len: usize,
}

impl ChannelModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters < 1 || self.n_rays < 1 {
            return Err(Error::Config("need at least one cluster and one ray".into()));
        }
        if self.n_tx < 1 || self.n_rx < 1 {
            return Err(Error::Config("need at least one antenna per side".into()));
        }
        if self.cp_len < 1 {
            return Err(Error::Config("cp_len must be >= 1".into()));
        }
        if !(self.angle_spread > 0.0) {
            return Err(Error::Config("angle_spread must be positive".into()));
        }
        Ok(())
    }
}

/// One channel realization: per-ray gains and angles, per-cluster delays.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRayChannel {
    /// Complex ray gains, indexed `[cluster][ray]`.
    pub gains: Vec<Vec<Complex64>>,
    /// Departure angles (radians), indexed `[cluster][ray]`.
    pub departure_angles: Vec<Vec<f64>>,
    /// Arrival angles (radians), indexed `[cluster][ray]`.
    pub arrival_angles: Vec<Vec<f64>>,
    /// Integer symbol delay of each cluster; `delays[0] == 0`.
    pub delays: Vec<usize>,
}

impl ClusterRayChannel {
    pub fn n_clusters(&self) -> usize {
        self.gains.len()
    }

    pub fn n_rays(&self) -> usize {
        self.gains.first().map_or(0, Vec::len)
    }

    /// Total ray count across clusters.
    pub fn total_rays(&self) -> usize {
        self.gains.iter().map(Vec::len).sum()
    }
}

/// Per-tone frequency response `H_k`, one `N_r x N_t` matrix per tone.
#[derive(Debug, Clone)]
pub struct ChannelFrequencyResponse {
    pub tones: Vec<CMat>,
}

impl ChannelFrequencyResponse {
    pub fn n_tones(&self) -> usize {
        self.tones.len()
    }

    pub fn n_rx(&self) -> usize {
        self.tones[0].nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.tones[0].ncols()
    }
}

/// Uniform-linear-array response at half-wavelength spacing:
/// `a(theta) = (1/sqrt(n)) [1, e^{j pi sin(theta)}, ..., e^{j pi (n-1) sin(theta)}]`.
pub fn array_response(theta: f64, n: usize) -> CVec {
    let scale = 1.0 / (n as f64).sqrt();
    let s = theta.sin();
    CVec::from_fn(n, |k, _| {
        Complex64::from_polar(scale, std::f64::consts::PI * (k as f64) * s)
    })
}

/// Draw one cluster-ray realization.
///
/// Gains are i.i.d. circularly-symmetric complex Gaussian with variance
/// `1/(N_C N_R)`; cluster center angles are uniform on `[-pi/2, pi/2]`; ray
/// angles add a Laplacian offset of scale `angle_spread`; cluster delays are
/// distinct draws from `{0,...,cp_len-1}` with the first cluster pinned to 0.
pub fn sample_channel<R: Rng + ?Sized>(
    cfg: &ChannelModelConfig,
    rng: &mut R,
) -> Result<ClusterRayChannel> {
    cfg.validate()?;
    if cfg.n_clusters > cfg.cp_len {
        return Err(Error::Config(format!(
            "cannot assign {} distinct delays within a cyclic prefix of {}",
            cfg.n_clusters, cfg.cp_len
        )));
    }

    // Distinct delays: first cluster at 0, the rest drawn without
    // replacement from 1..cp_len (partial Fisher-Yates).
    let mut delays = vec![0usize];
    let mut pool: Vec<usize> = (1..cfg.cp_len).collect();
    for i in 0..cfg.n_clusters - 1 {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
        delays.push(pool[i]);
    }

    let gain_std = (0.5 / (cfg.n_clusters * cfg.n_rays) as f64).sqrt();
    let mut gains = Vec::with_capacity(cfg.n_clusters);
    let mut departure_angles = Vec::with_capacity(cfg.n_clusters);
    let mut arrival_angles = Vec::with_capacity(cfg.n_clusters);
    for _ in 0..cfg.n_clusters {
        let center_t = uniform_angle(rng);
        let center_r = uniform_angle(rng);
        let mut g = Vec::with_capacity(cfg.n_rays);
        let mut at = Vec::with_capacity(cfg.n_rays);
        let mut ar = Vec::with_capacity(cfg.n_rays);
        for _ in 0..cfg.n_rays {
            let re: f64 = rand_distr::StandardNormal.sample(rng);
            let im: f64 = rand_distr::StandardNormal.sample(rng);
            g.push(Complex64::new(re * gain_std, im * gain_std));
            at.push(center_t + laplacian(cfg.angle_spread, rng));
            ar.push(center_r + laplacian(cfg.angle_spread, rng));
        }
        gains.push(g);
        departure_angles.push(at);
        arrival_angles.push(ar);
    }

    Ok(ClusterRayChannel {
        gains,
        departure_angles,
        arrival_angles,
        delays,
    })
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.random::<f64>() - 0.5) * std::f64::consts::PI
}

fn laplacian<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u = rng.random::<f64>() - 0.5;
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// Tap matrices, one per cluster delay:
/// `H(tau_i) = sqrt(N_t N_r) sum_j alpha_ij a_r(theta_ij^r) a_t(theta_ij^t)^H`.
pub fn tap_matrices(ch: &ClusterRayChannel, n_tx: usize, n_rx: usize) -> Vec<(usize, CMat)> {
    let prefactor = ((n_tx * n_rx) as f64).sqrt();
    ch.delays
        .iter()
        .enumerate()
        .map(|(i, &delay)| {
            let mut h = CMat::zeros(n_rx, n_tx);
            for j in 0..ch.gains[i].len() {
                let ar = array_response(ch.arrival_angles[i][j], n_rx);
                let at = array_response(ch.departure_angles[i][j], n_tx);
                let alpha = ch.gains[i][j] * prefactor;
                // rank-1 update alpha * a_r a_t^H
                for c in 0..n_tx {
                    let atc = at[c].conj() * alpha;
                    for r in 0..n_rx {
                        h[(r, c)] += ar[r] * atc;
                    }
                }
            }
            (delay, h)
        })
        .collect()
}

/// Per-tone response `H_k = sum_i H(tau_i) e^{-j 2 pi k tau_i / N}` for
/// `k = 0..N-1`. All delays must be below the block length `n`.
pub fn frequency_response(taps: &[(usize, CMat)], n: usize) -> Result<ChannelFrequencyResponse> {
    if taps.is_empty() {
        return Err(Error::Dimension("frequency_response needs at least one tap".into()));
    }
    if n < 1 {
        return Err(Error::Dimension("block length must be >= 1".into()));
    }
    for &(delay, _) in taps {
        if delay >= n {
            return Err(Error::Dimension(format!(
                "tap delay {delay} does not fit a block of {n} symbols"
            )));
        }
    }
    let (rows, cols) = (taps[0].1.nrows(), taps[0].1.ncols());
    let mut tones = Vec::with_capacity(n);
    for k in 0..n {
        let mut hk = CMat::zeros(rows, cols);
        for (delay, h) in taps {
            let angle = -2.0 * std::f64::consts::PI * (k as f64) * (*delay as f64) / (n as f64);
            hk += h * Complex64::from_polar(1.0, angle);
        }
        tones.push(hk);
    }
    Ok(ChannelFrequencyResponse { tones })
}

/// Tap-domain energy `sum_i ||H(tau_i)||_F^2`; equals the tone-domain average
/// `(1/N) sum_k ||H_k||_F^2` for any block length covering the delays.
pub fn tap_energy(taps: &[(usize, CMat)]) -> f64 {
    taps.iter().map(|(_, h)| fro_norm_sq(h)).sum()
}

// ---------------------------------------------------------------------------
// Structured-text serialization of a realization (for reproducibility)
// ---------------------------------------------------------------------------

/// Serialize a realization to the documented `sc-hbf channel v1` text format.
pub fn channel_to_text(ch: &ClusterRayChannel) -> String {
    let mut out = String::new();
    out.push_str("# sc-hbf channel v1\n");
    out.push_str(&format!("clusters = {}\n", ch.n_clusters()));
    out.push_str(&format!("rays = {}\n", ch.n_rays()));
    let delays: Vec<String> = ch.delays.iter().map(usize::to_string).collect();
    out.push_str(&format!("delays = {}\n", delays.join(",")));
    out.push_str("# ray <cluster> <ray> <gain_re> <gain_im> <theta_t_rad> <theta_r_rad>\n");
    for i in 0..ch.n_clusters() {
        for j in 0..ch.gains[i].len() {
            out.push_str(&format!(
                "ray {} {} {:.17e} {:.17e} {:.17e} {:.17e}\n",
                i,
                j,
                ch.gains[i][j].re,
                ch.gains[i][j].im,
                ch.departure_angles[i][j],
                ch.arrival_angles[i][j],
            ));
        }
    }
    out
}

/// Parse the `sc-hbf channel v1` text format.
pub fn channel_from_text(text: &str) -> Result<ClusterRayChannel> {
    let mut clusters = None;
    let mut rays = None;
    let mut delays: Option<Vec<usize>> = None;
    let mut ray_lines = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("ray ") {
            ray_lines.push(rest.to_string());
        } else if let Some((key, value)) = line.split_once('=') {
            let (key, value) = (key.trim(), value.trim());
            match key {
                "clusters" => clusters = Some(parse_num::<usize>(value, "clusters")?),
                "rays" => rays = Some(parse_num::<usize>(value, "rays")?),
                "delays" => {
                    delays = Some(
                        value
                            .split(',')
                            .map(|d| parse_num::<usize>(d.trim(), "delays"))
                            .collect::<Result<_>>()?,
                    )
                }
                other => return Err(Error::Parse(format!("unknown channel key `{other}`"))),
            }
        } else {
            return Err(Error::Parse(format!("unparseable channel line `{line}`")));
        }
    }
    let n_c = clusters.ok_or_else(|| Error::Parse("missing `clusters`".into()))?;
    let n_r = rays.ok_or_else(|| Error::Parse("missing `rays`".into()))?;
    let delays = delays.ok_or_else(|| Error::Parse("missing `delays`".into()))?;
    if delays.len() != n_c {
        return Err(Error::Parse("delay count does not match clusters".into()));
    }
    let mut gains = vec![vec![Complex64::new(0.0, 0.0); n_r]; n_c];
    let mut dep = vec![vec![0.0; n_r]; n_c];
    let mut arr = vec![vec![0.0; n_r]; n_c];
    let mut seen = 0usize;
    for rl in &ray_lines {
        let fields: Vec<&str> = rl.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!("ray line needs 6 fields: `{rl}`")));
        }
        let i = parse_num::<usize>(fields[0], "ray cluster index")?;
        let j = parse_num::<usize>(fields[1], "ray index")?;
        if i >= n_c || j >= n_r {
            return Err(Error::Parse(format!("ray index ({i},{j}) out of range")));
        }
        gains[i][j] = Complex64::new(
            parse_num::<f64>(fields[2], "gain_re")?,
            parse_num::<f64>(fields[3], "gain_im")?,
        );
        dep[i][j] = parse_num::<f64>(fields[4], "theta_t")?;
        arr[i][j] = parse_num::<f64>(fields[5], "theta_r")?;
        seen += 1;
    }
    if seen != n_c * n_r {
        return Err(Error::Parse(format!(
            "expected {} ray lines, found {seen}",
            n_c * n_r
        )));
    }
    Ok(ClusterRayChannel {
        gains,
        departure_angles: dep,
        arrival_angles: arr,
        delays,
    })
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse::<T>()
        .map_err(|_| Error::Parse(format!("bad {what}: `{s}`")))
}
