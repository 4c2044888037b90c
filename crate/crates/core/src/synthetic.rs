//! Synthetic panels with known trend exponent.
//!
//! Model 1: `y_it = g_i(tau_t) (t - beta_i)^a + e_it` for `t >= b_i`, zero before.
//! Model 2: `y_it = gamma_i - g_i(tau_t) (t - beta_i)^a + e_it`.
//!
//! `b_i = floor(f_i T) + 1` (1-based) and `beta_i = b_i - 1`. Noise for unit `i`
//! comes from its own ChaCha stream, so a unit's series does not depend on
//! how many other units are generated or in what order.

use std::f64::consts::PI;

use chrono::NaiveDate;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{tau, Panel, Region};
use crate::spectral::full_spectrum_oracle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GProfile {
    Constant { level: f64 },
    /// `intercept + slope * u`
    Linear { slope: f64, intercept: f64 },
    /// `offset + amplitude * sin(2 pi u / period)`
    Sinusoid { amplitude: f64, period: f64, offset: f64 },
    /// `floor + slope * |u - center|`
    Tent { center: f64, floor: f64, slope: f64 },
}

impl GProfile {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            GProfile::Constant { level } => level,
            GProfile::Linear { slope, intercept } => intercept + slope * u,
            GProfile::Sinusoid {
                amplitude,
                period,
                offset,
            } => offset + amplitude * (2.0 * PI * u / period).sin(),
            GProfile::Tent {
                center,
                floor,
                slope,
            } => floor + slope * (u - center).abs(),
        }
    }

    /// Smallest value on `[0, 1]`, or a lower bound for it.
    fn lower_bound(&self) -> f64 {
        match *self {
            GProfile::Constant { level } => level,
            GProfile::Linear { slope, intercept } => intercept + slope.min(0.0),
            GProfile::Sinusoid {
                amplitude, offset, ..
            } => offset - amplitude.abs(),
            GProfile::Tent { floor, slope, .. } => floor + slope.min(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match *self {
            GProfile::Constant { level } => level.is_finite(),
            GProfile::Linear { slope, intercept } => slope.is_finite() && intercept.is_finite(),
            GProfile::Sinusoid {
                amplitude,
                period,
                offset,
            } => {
                if period.is_nan() || period <= 0.0 {
                    return Err(Error::InvalidSpec(format!("sinusoid period {period} must be positive")));
                }
                amplitude.is_finite() && period.is_finite() && offset.is_finite()
            }
            GProfile::Tent {
                center,
                floor,
                slope,
            } => {
                if slope < 0.0 {
                    return Err(Error::InvalidSpec(format!("tent slope {slope} must be nonnegative")));
                }
                center.is_finite() && floor.is_finite() && slope.is_finite()
            }
        };
        if !finite {
            return Err(Error::InvalidSpec(format!("non-finite parameter in {self:?}")));
        }
        if self.lower_bound() <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "profile {self:?} is not strictly positive on [0, 1]"
            )));
        }
        Ok(())
    }

    fn scaled(&self, c: f64) -> GProfile {
        match *self {
            GProfile::Constant { level } => GProfile::Constant { level: c * level },
            GProfile::Linear { slope, intercept } => GProfile::Linear {
                slope: c * slope,
                intercept: c * intercept,
            },
            GProfile::Sinusoid {
                amplitude,
                period,
                offset,
            } => GProfile::Sinusoid {
                amplitude: c * amplitude,
                period,
                offset: c * offset,
            },
            GProfile::Tent {
                center,
                floor,
                slope,
            } => GProfile::Tent {
                center,
                floor: c * floor,
                slope: c * slope,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    #[default]
    Gaussian,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    Model1,
    Model2,
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

fn default_region() -> Region {
    Region::Custom
}

/// Ground truth for one synthetic panel.
///
/// `g_profiles`, `start_fractions` and `gamma` may hold a single entry, which
/// then applies to every unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_units: usize,
    pub n_periods: usize,
    pub a_true: f64,
    pub g_profiles: Vec<GProfile>,
    #[serde(default)]
    pub start_fractions: Vec<f64>,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub noise_law: NoiseLaw,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_start_date")]
    pub start_date: NaiveDate,
    #[serde(default = "default_region")]
    pub region: Region,
}

impl SyntheticSpec {
    /// Noiseless Model 1 spec with balanced starts.
    pub fn noiseless(n_units: usize, n_periods: usize, a_true: f64, g_profiles: Vec<GProfile>) -> Self {
        SyntheticSpec {
            n_units,
            n_periods,
            a_true,
            g_profiles,
            start_fractions: Vec::new(),
            noise_sd: 0.0,
            noise_law: NoiseLaw::None,
            model: Model::Model1,
            gamma: None,
            seed: 0,
            start_date: default_start_date(),
            region: default_region(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_units;
        if n < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 units, got {n}")));
        }
        if self.n_periods < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 periods, got {}", self.n_periods)));
        }
        if !(self.a_true > 0.0 && self.a_true < 1.0) {
            return Err(Error::InvalidSpec(format!("a_true {} outside (0, 1)", self.a_true)));
        }
        let broadcast_ok = |len: usize, allow_empty: bool| len == n || len == 1 || (allow_empty && len == 0);
        if !broadcast_ok(self.g_profiles.len(), false) {
            return Err(Error::InvalidSpec(format!(
                "{} g profiles for {n} units",
                self.g_profiles.len()
            )));
        }
        for g in &self.g_profiles {
            g.validate()?;
        }
        if !broadcast_ok(self.start_fractions.len(), true) {
            return Err(Error::InvalidSpec(format!(
                "{} start fractions for {n} units",
                self.start_fractions.len()
            )));
        }
        if let Some(f) = self.start_fractions.iter().find(|f| !(**f >= 0.0 && **f < 1.0)) {
            return Err(Error::InvalidSpec(format!("start fraction {f} outside [0, 1)")));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidSpec(format!("noise_sd {} must be >= 0", self.noise_sd)));
        }
        match (&self.model, &self.gamma) {
            (Model::Model2, None) => {
                return Err(Error::InvalidSpec("model2 requires gamma".into()));
            }
            (Model::Model2, Some(g)) if !broadcast_ok(g.len(), false) => {
                return Err(Error::InvalidSpec(format!("{} gamma values for {n} units", g.len())));
            }
            (_, Some(g)) if g.iter().any(|x| !x.is_finite()) => {
                return Err(Error::InvalidSpec("non-finite gamma".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise_law == NoiseLaw::None || self.noise_sd == 0.0
    }

    pub fn profile(&self, i: usize) -> &GProfile {
        &self.g_profiles[if self.g_profiles.len() == 1 { 0 } else { i }]
    }

    /// 0-based start period `floor(f_i T)`.
    pub fn start(&self, i: usize) -> usize {
        let f = match self.start_fractions.len() {
            0 => 0.0,
            1 => self.start_fractions[0],
            _ => self.start_fractions[i],
        };
        ((f * self.n_periods as f64).floor() as usize).min(self.n_periods - 1)
    }

    pub fn gamma(&self, i: usize) -> Option<f64> {
        self.gamma
            .as_ref()
            .map(|g| g[if g.len() == 1 { 0 } else { i }])
    }

    /// `g_i(tau_t) (t - beta_i)^a` at 0-based period `t`; zero before the start.
    pub fn trend(&self, i: usize, t: usize) -> f64 {
        let s = self.start(i);
        if t < s {
            return 0.0;
        }
        let elapsed = (t + 1 - s) as f64;
        self.profile(i).eval(tau(t, self.n_periods)) * elapsed.powf(self.a_true)
    }

    /// Rescales every profile so that
    /// `mean_{u in [lower, 1]} (1/N) sum_i s_i(u)^2 = 1`, where
    /// `s_i(u) = g_i(u) (u - f_i)_+^a` under Model 1. Under Model 2 the
    /// unit's smallest trend value (scaled by `T^{-a}`) is subtracted first,
    /// matching what the peak transform leaves behind.
    ///
    /// Under this normalization `T^{2a}` is the leading-order size of the mean
    /// eigenvalue, so the trend exponent is recovered without an `O(1/ln T)`
    /// level offset.
    pub fn normalized(&self, lower: f64) -> Result<SyntheticSpec> {
        self.validate()?;
        assert!((0.0..1.0).contains(&lower));
        let n = self.n_units;
        let f: Vec<f64> = (0..n)
            .map(|i| self.start(i) as f64 / self.n_periods as f64)
            .collect();
        let shape = |i: usize, u: f64| self.profile(i).eval(u) * (u - f[i]).max(0.0).powf(self.a_true);
        // discrete minimum: the first active period carries g * 1^a, not 0
        let t_a = (self.n_periods as f64).powf(self.a_true);
        let floor: Vec<f64> = (0..n)
            .map(|i| match self.model {
                Model::Model1 => 0.0,
                Model::Model2 => (self.start(i)..self.n_periods)
                    .map(|t| self.trend(i, t) / t_a)
                    .fold(f64::INFINITY, f64::min),
            })
            .collect();
        let integrand = |u: f64| {
            (0..n)
                .filter(|&i| u >= f[i])
                .map(|i| (shape(i, u) - floor[i]).powi(2))
                .sum::<f64>()
                / n as f64
        };
        let mean = simpson(integrand, lower, 1.0, 4000) / (1.0 - lower);
        if mean.is_nan() || mean <= 0.0 {
            return Err(Error::InvalidSpec("cannot normalize: zero trend mass".into()));
        }
        let c = mean.sqrt().recip();
        let mut out = self.clone();
        out.g_profiles = self.g_profiles.iter().map(|g| g.scaled(c)).collect();
        Ok(out)
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let dx = (b - a) / m as f64;
    let inner: f64 = (1..m)
        .map(|k| f(a + k as f64 * dx) * if k % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    dx / 3.0 * (f(a) + f(b) + inner)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub a_true: f64,
    pub model: Model,
    pub unit_ids: Vec<String>,
    /// 0-based start periods.
    pub starts: Vec<usize>,
    /// `g_i(tau_t)` on the full grid, one row per unit.
    pub g_values: Vec<Vec<f64>>,
    /// Noiseless `g_i(tau_t) (t - beta_i)^a`, zero before each start.
    pub trend: Vec<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    /// Model 2 only: 0-based period of the noiseless peak of each unit.
    pub peak_t: Option<Vec<usize>>,
    pub seed: u64,
}

/// Three-letter ids `AAA`, `AAB`, ... in generation order.
pub fn unit_id(i: usize) -> String {
    let letters = [i / 676 % 26, i / 26 % 26, i % 26];
    letters.iter().map(|&k| (b'A' + k as u8) as char).collect()
}

/// Draws the panel described by `spec`.
pub fn generate(spec: &SyntheticSpec) -> Result<(Panel, GroundTruth)> {
    spec.validate()?;
    let (n, t_len) = (spec.n_units, spec.n_periods);
    let normal = match spec.noise_law {
        NoiseLaw::Gaussian if spec.noise_sd > 0.0 => {
            Some(Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidSpec(e.to_string()))?)
        }
        _ => None,
    };

    let mut values = Array2::zeros((n, t_len));
    let mut trend = Vec::with_capacity(n);
    let mut g_values = Vec::with_capacity(n);
    let mut starts = Vec::with_capacity(n);
    for i in 0..n {
        let s = spec.start(i);
        let row: Vec<f64> = (0..t_len).map(|t| spec.trend(i, t)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        // a full-length draw keeps (i, t) noise fixed across start fractions
        let noise: Vec<f64> = match &normal {
            Some(d) => (0..t_len).map(|_| d.sample(&mut rng)).collect(),
            None => vec![0.0; t_len],
        };
        for t in s..t_len {
            let base = match spec.model {
                Model::Model1 => row[t],
                Model::Model2 => spec.gamma(i).expect("validated") - row[t],
            };
            values[[i, t]] = base + noise[t];
        }
        g_values.push((0..t_len).map(|t| spec.profile(i).eval(tau(t, t_len))).collect());
        trend.push(row);
        starts.push(s);
    }

    let peak_t = (spec.model == Model::Model2).then(|| {
        trend
            .iter()
            .zip(&starts)
            .map(|(row, &s)| {
                (s..t_len)
                    .min_by(|&a, &b| row[a].total_cmp(&row[b]))
                    .expect("non-empty active range")
            })
            .collect()
    });
    let unit_ids: Vec<String> = (0..n).map(unit_id).collect();
    let labels = (0..t_len)
        .map(|k| spec.start_date + chrono::Days::new(k as u64))
        .collect();
    let panel = Panel::new(values, starts.clone(), unit_ids.clone(), labels, spec.region)?;
    let truth = GroundTruth {
        a_true: spec.a_true,
        model: spec.model,
        unit_ids,
        starts,
        g_values,
        trend,
        gamma: spec
            .gamma
            .as_ref()
            .map(|_| (0..n).map(|i| spec.gamma(i).expect("present")).collect()),
        peak_t,
        seed: spec.seed,
    };
    Ok((panel, truth))
}

/// Top eigenvalue of `Sigma(u)` computed by direct summation over the
/// analytic (noiseless) values, using the dense oracle eigensolver.
///
/// Kernel and boundary mass are evaluated here independently of the
/// production kernel module.
pub fn oracle_lambda(spec: &SyntheticSpec, h: f64, u: f64) -> Result<f64> {
    spec.validate()?;
    if !spec.is_noiseless() {
        return Err(Error::OracleNeedsNoiseless);
    }
    let (n, t_len) = (spec.n_units, spec.n_periods);
    let values = Array2::from_shape_fn((n, t_len), |(i, t)| {
        if t < spec.start(i) {
            0.0
        } else {
            match spec.model {
                Model::Model1 => spec.trend(i, t),
                Model::Model2 => spec.gamma(i).expect("validated") - spec.trend(i, t),
            }
        }
    });
    oracle_lambda_values(&values, h, u)
}

/// Direct-summation oracle for an explicit `N x T` value matrix.
pub fn oracle_lambda_values(values: &Array2<f64>, h: f64, u: f64) -> Result<f64> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::InvalidBandwidth(h));
    }
    let (n, t_len) = values.dim();
    let k = |w: f64| if w.abs() <= 1.0 { 0.75 * (1.0 - w * w) } else { 0.0 };
    let mass = if u > 1.0 - h {
        let upper = ((1.0 - u) / h).min(1.0);
        simpson(k, -1.0, upper, 2000)
    } else {
        1.0
    };
    let mut sigma = Array2::<f64>::zeros((n, n));
    for t in 0..t_len {
        let w = k(((t + 1) as f64 / t_len as f64 - u) / h) / (h * mass);
        for i in 0..n {
            for j in 0..n {
                sigma[[i, j]] += values[[i, t]] * values[[j, t]] * w;
            }
        }
    }
    sigma.mapv_inplace(|v| v / (n * t_len) as f64);
    let eig = full_spectrum_oracle(&sigma)?;
    Ok(eig[eig.len() - 1])
}
