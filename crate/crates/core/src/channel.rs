//! Fading channel generation and eigenmode reduction.
//!
//! Realizations are drawn with ChaCha20 seeded from a `u64`, so a given
//! `(SystemParams, seed)` pair produces the same matrices on every platform.
//! The S-R matrix is drawn first (row-major), then the R-D matrix.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ChannelError, ParamError};

/// Singular values below this fraction of the largest one are dropped.
pub const RELATIVE_SV_THRESHOLD: f64 = 1e-12;

/// Converts a power in dBm to milliwatts.
pub fn dbm_to_linear(x_dbm: f64) -> f64 {
    10f64.powf(x_dbm / 10.0)
}

/// Physical configuration of the source-relay-destination link.
///
/// Powers are in milliwatts, distances in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n_s: usize,
    pub n_r: usize,
    pub n_d: usize,
    pub p_s_dbm: f64,
    pub n0_dbm: f64,
    pub eta: f64,
    pub gamma: f64,
    pub d_sr: f64,
    pub d_rd: f64,
    pub sigma_r_sq: f64,
    pub sigma_d_sq: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        let n0_dbm = -100.0;
        Self {
            n_s: 2,
            n_r: 2,
            n_d: 2,
            p_s_dbm: 30.0,
            n0_dbm,
            eta: 1.0,
            gamma: 3.2,
            d_sr: 2.0,
            d_rd: 10.0,
            sigma_r_sq: dbm_to_linear(n0_dbm),
            sigma_d_sq: dbm_to_linear(n0_dbm),
        }
    }
}

impl SystemParams {
    /// Symmetric `n x n x n` system with default physical parameters.
    pub fn symmetric(n: usize, p_s_dbm: f64) -> Self {
        Self {
            n_s: n,
            n_r: n,
            n_d: n,
            p_s_dbm,
            ..Self::default()
        }
    }

    /// Sets the noise floor and resets both receiver noise powers to it.
    pub fn with_noise_floor(mut self, n0_dbm: f64) -> Self {
        self.n0_dbm = n0_dbm;
        self.sigma_r_sq = dbm_to_linear(n0_dbm);
        self.sigma_d_sq = dbm_to_linear(n0_dbm);
        self
    }

    /// Source power budget in milliwatts.
    pub fn p_s(&self) -> f64 {
        dbm_to_linear(self.p_s_dbm)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.n_s == 0 || self.n_r == 0 || self.n_d == 0 {
            return Err(ParamError::AntennaCount {
                n_s: self.n_s,
                n_r: self.n_r,
                n_d: self.n_d,
            });
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(ParamError::Efficiency(self.eta));
        }
        for (name, value) in [
            ("gamma", self.gamma),
            ("d_sr", self.d_sr),
            ("d_rd", self.d_rd),
            ("sigma_r_sq", self.sigma_r_sq),
            ("sigma_d_sq", self.sigma_d_sq),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::NotPositive { name, value });
            }
        }
        for (name, value) in [("p_s_dbm", self.p_s_dbm), ("n0_dbm", self.n0_dbm)] {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { name, value });
            }
        }
        Ok(())
    }
}

/// One realization of the two hop channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrices {
    /// S-R gain, `n_r x n_s`.
    pub h: DMatrix<Complex64>,
    /// R-D gain, `n_d x n_r`.
    pub g: DMatrix<Complex64>,
}

/// Unit-variance circularly-symmetric complex Gaussian sample.
fn cn01(rng: &mut ChaCha20Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws a Rayleigh realization with entries `(1/d)^gamma * u`, `u ~ CN(0, 1)`.
pub fn generate_channels(params: &SystemParams, seed: u64) -> ChannelMatrices {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let amp_sr = (1.0 / params.d_sr).powf(params.gamma);
    let amp_rd = (1.0 / params.d_rd).powf(params.gamma);
    let h = DMatrix::from_row_iterator(
        params.n_r,
        params.n_s,
        (0..params.n_r * params.n_s).map(|_| cn01(&mut rng) * amp_sr),
    );
    let g = DMatrix::from_row_iterator(
        params.n_d,
        params.n_r,
        (0..params.n_d * params.n_r).map(|_| cn01(&mut rng) * amp_rd),
    );
    ChannelMatrices { h, g }
}

impl ChannelMatrices {
    pub fn check_finite(&self) -> Result<(), ChannelError> {
        if self.h.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(ChannelError::NonFinite("h"));
        }
        if self.g.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(ChannelError::NonFinite("g"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ChannelFile::from(self)).expect("channel file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ChannelError> {
        let file: ChannelFile =
            serde_json::from_str(text).map_err(|e| ChannelError::Format(e.to_string()))?;
        file.try_into()
    }
}

/// On-disk form: each matrix is a list of rows, each row a list of `[re, im]`.
#[derive(Debug, Serialize, Deserialize)]
struct ChannelFile {
    h: Vec<Vec<[f64; 2]>>,
    g: Vec<Vec<[f64; 2]>>,
}

fn rows_of(m: &DMatrix<Complex64>) -> Vec<Vec<[f64; 2]>> {
    m.row_iter()
        .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

fn matrix_from_rows(
    name: &'static str,
    rows: &[Vec<[f64; 2]>],
) -> Result<DMatrix<Complex64>, ChannelError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 {
        return Err(ChannelError::Format(format!("matrix {name} is empty")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(ChannelError::Shape {
            name,
            got: (nrows, bad.len()),
            expected: (nrows, ncols),
        });
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flatten().map(|&[re, im]| Complex64::new(re, im)),
    ))
}

impl From<&ChannelMatrices> for ChannelFile {
    fn from(ch: &ChannelMatrices) -> Self {
        Self {
            h: rows_of(&ch.h),
            g: rows_of(&ch.g),
        }
    }
}

impl TryFrom<ChannelFile> for ChannelMatrices {
    type Error = ChannelError;

    fn try_from(file: ChannelFile) -> Result<Self, ChannelError> {
        let h = matrix_from_rows("h", &file.h)?;
        let g = matrix_from_rows("g", &file.g)?;
        if g.ncols() != h.nrows() {
            return Err(ChannelError::Shape {
                name: "g",
                got: g.shape(),
                expected: (g.nrows(), h.nrows()),
            });
        }
        let ch = ChannelMatrices { h, g };
        ch.check_finite()?;
        Ok(ch)
    }
}

/// Noise-normalized eigen-gains of both hops.
///
/// `lambda_h[i] = sigma_i(H)^2 / sigma_r^2` and likewise for `G`, sorted in
/// descending order with numerically-zero modes removed. Transmit powers stay
/// in milliwatts, so `p * lambda_h` is a receive SNR. The harvested power of
/// a mode is `eta * sigma_r^2 * rho * p * lambda_h`, which is why the relay
/// noise power and efficiency travel with the gains.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenChannel {
    pub lambda_h: Vec<f64>,
    pub lambda_g: Vec<f64>,
    /// Right singular vectors of `H` for the retained modes (`n_s x K1`).
    pub v_h: DMatrix<Complex64>,
    /// Right singular vectors of `G` for the retained modes (`n_r x K2`).
    pub v_g: DMatrix<Complex64>,
    pub sigma_r_sq: f64,
    pub eta: f64,
}

impl EigenChannel {
    /// Builds an eigen-channel straight from gains, with identity precoding
    /// bases, unit relay noise and unit efficiency.
    pub fn from_gains(lambda_h: Vec<f64>, lambda_g: Vec<f64>) -> Result<Self, ChannelError> {
        let lambda_h = prune_sorted(lambda_h, "S-R")?;
        let lambda_g = prune_sorted(lambda_g, "R-D")?;
        let (k1, k2) = (lambda_h.len(), lambda_g.len());
        Ok(Self {
            lambda_h,
            lambda_g,
            v_h: DMatrix::identity(k1, k1),
            v_g: DMatrix::identity(k2, k2),
            sigma_r_sq: 1.0,
            eta: 1.0,
        })
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn k1(&self) -> usize {
        self.lambda_h.len()
    }

    pub fn k2(&self) -> usize {
        self.lambda_g.len()
    }

    /// Harvested power per unit of `rho * p * lambda_h`.
    pub fn harvest_scale(&self) -> f64 {
        self.eta * self.sigma_r_sq
    }
}

fn prune_sorted(mut gains: Vec<f64>, hop: &'static str) -> Result<Vec<f64>, ChannelError> {
    if gains.iter().any(|x| !x.is_finite()) {
        return Err(ChannelError::NonFinite(hop));
    }
    gains.sort_by(|a, b| b.total_cmp(a));
    let top = gains.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Err(ChannelError::AllZeroChannel { hop });
    }
    gains.retain(|&x| x > top * RELATIVE_SV_THRESHOLD);
    Ok(gains)
}

/// Squared singular values (descending, thresholded) and matching right
/// singular vectors.
fn reduce_hop(
    m: &DMatrix<Complex64>,
    noise: f64,
    hop: &'static str,
) -> Result<(Vec<f64>, DMatrix<Complex64>), ChannelError> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv: &DVector<f64> = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let top = order.first().map_or(0.0, |&i| sv[i]);
    if !(top > 0.0) {
        return Err(ChannelError::AllZeroChannel { hop });
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sv[i] > top * RELATIVE_SV_THRESHOLD)
        .collect();
    let gains = kept.iter().map(|&i| sv[i] * sv[i] / noise).collect();
    let mut v = DMatrix::zeros(m.ncols(), kept.len());
    for (col, &i) in kept.iter().enumerate() {
        // Rows of V^H are conjugated columns of V.
        for r in 0..m.ncols() {
            v[(r, col)] = v_t[(i, r)].conj();
        }
    }
    Ok((gains, v))
}

/// Reduces a channel realization to the eigen-gains used by the optimizer.
pub fn eigen_reduce(
    ch: &ChannelMatrices,
    params: &SystemParams,
) -> Result<EigenChannel, ChannelError> {
    ch.check_finite()?;
    let (lambda_h, v_h) = reduce_hop(&ch.h, params.sigma_r_sq, "S-R")?;
    let (lambda_g, v_g) = reduce_hop(&ch.g, params.sigma_d_sq, "R-D")?;
    Ok(EigenChannel {
        lambda_h,
        lambda_g,
        v_h,
        v_g,
        sigma_r_sq: params.sigma_r_sq,
        eta: params.eta,
    })
}
