//! Motion-signal augmentations: additive Gaussian noise, temporal scaling,
//! intensity scaling and the two warping directions, plus plans that apply
//! them to a training set at a given ratio.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{mix, rng_from};
use crate::signal::{apply_time_map, resample_linear, Signal, TimeMap};

/// Noise standard deviations tried by the reference sweep.
pub const SIGMA_GRID: [f64; 8] = [0.0125, 0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5];

/// Temporal and intensity scaling factors tried by the reference sweep.
pub const SCALE_GRID: [f64; 10] = [0.8, 0.9, 0.95, 0.975, 0.9875, 1.0125, 1.025, 1.05, 1.1, 1.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    RandomNoise,
    TemporalScaling,
    IntensityScaling,
    WarpLeftToRight,
    WarpRightToLeft,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::RandomNoise,
        Method::TemporalScaling,
        Method::IntensityScaling,
        Method::WarpLeftToRight,
        Method::WarpRightToLeft,
    ];

    /// Stable ordinal used in seed derivation.
    pub fn ordinal(self) -> u64 {
        match self {
            Method::RandomNoise => 0,
            Method::TemporalScaling => 1,
            Method::IntensityScaling => 2,
            Method::WarpLeftToRight => 3,
            Method::WarpRightToLeft => 4,
        }
    }

    /// Short name as used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            Method::RandomNoise => "noise",
            Method::TemporalScaling => "temporal",
            Method::IntensityScaling => "intensity",
            Method::WarpLeftToRight => "warp-lr",
            Method::WarpRightToLeft => "warp-rl",
        }
    }

    pub fn from_cli_name(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.cli_name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    LeftToRight,
    RightToLeft,
}

impl fmt::Display for WarpDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WarpDirection::LeftToRight => f.write_str("L->R"),
            WarpDirection::RightToLeft => f.write_str("L<-R"),
        }
    }
}

/// One augmentation method with its parameters. Only the fields relevant to
/// `method` are consulted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub method: Method,
    pub mu: f64,
    pub sigma: f64,
    pub f_t: f64,
    pub f_i: f64,
}

impl AugmentationSpec {
    fn base(method: Method) -> Self {
        AugmentationSpec {
            method,
            mu: 0.0,
            sigma: 0.0,
            f_t: 1.0,
            f_i: 1.0,
        }
    }

    pub fn noise(sigma: f64) -> Self {
        AugmentationSpec {
            sigma,
            ..Self::base(Method::RandomNoise)
        }
    }

    pub fn noise_with_mean(mu: f64, sigma: f64) -> Self {
        AugmentationSpec {
            mu,
            sigma,
            ..Self::base(Method::RandomNoise)
        }
    }

    pub fn temporal(f_t: f64) -> Self {
        AugmentationSpec {
            f_t,
            ..Self::base(Method::TemporalScaling)
        }
    }

    pub fn intensity(f_i: f64) -> Self {
        AugmentationSpec {
            f_i,
            ..Self::base(Method::IntensityScaling)
        }
    }

    pub fn warp(direction: WarpDirection) -> Self {
        Self::base(match direction {
            WarpDirection::LeftToRight => Method::WarpLeftToRight,
            WarpDirection::RightToLeft => Method::WarpRightToLeft,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            Method::RandomNoise => {
                check_sigma(self.sigma)?;
                if !self.mu.is_finite() {
                    return Err(Error::invalid(format!("noise mean must be finite, got {}", self.mu)));
                }
            }
            Method::TemporalScaling => check_factor("f_T", self.f_t)?,
            Method::IntensityScaling => check_factor("f_I", self.f_i)?,
            Method::WarpLeftToRight | Method::WarpRightToLeft => {}
        }
        Ok(())
    }

    /// Human-readable parameter label, e.g. `sigma=0.025` or `L->R`.
    pub fn value_label(&self) -> String {
        match self.method {
            Method::RandomNoise if self.mu != 0.0 => format!("mu={},sigma={}", self.mu, self.sigma),
            Method::RandomNoise => format!("sigma={}", self.sigma),
            Method::TemporalScaling => format!("f_T={}", self.f_t),
            Method::IntensityScaling => format!("f_I={}", self.f_i),
            Method::WarpLeftToRight => WarpDirection::LeftToRight.to_string(),
            Method::WarpRightToLeft => WarpDirection::RightToLeft.to_string(),
        }
    }

    /// Applies this augmentation to one signal, drawing any randomness from `rng`.
    pub fn apply<R: Rng + ?Sized>(&self, s: &Signal, rng: &mut R) -> Result<Signal> {
        match self.method {
            Method::RandomNoise => add_random_noise(s, self.mu, self.sigma, rng),
            Method::TemporalScaling => temporal_scale(s, self.f_t),
            Method::IntensityScaling => intensity_scale(s, self.f_i),
            Method::WarpLeftToRight => {
                let cuts = draw_warp_cuts(s.len(), rng)?;
                warp(s, WarpDirection::LeftToRight, cuts)
            }
            Method::WarpRightToLeft => {
                let cuts = draw_warp_cuts(s.len(), rng)?;
                warp(s, WarpDirection::RightToLeft, cuts)
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(())
}

fn check_factor(name: &str, f: f64) -> Result<()> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::invalid(format!("{name} must be > 0, got {f}")));
    }
    Ok(())
}

/// Adds i.i.d. `N(mu, sigma^2)` noise to every channel and time step.
pub fn add_random_noise<R: Rng + ?Sized>(s: &Signal, mu: f64, sigma: f64, rng: &mut R) -> Result<Signal> {
    check_sigma(sigma)?;
    if sigma == 0.0 && mu == 0.0 {
        return Ok(s.clone());
    }
    let normal = Normal::new(mu, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(s.map_values(|v| v + normal.sample(rng)))
}

/// Resamples to `round(n * f_T)` samples, then center-crops (`f_T > 1`) or
/// zero-pads (`f_T < 1`) back to `n`. Odd remainders put the smaller share on
/// the left.
pub fn temporal_scale(s: &Signal, f_t: f64) -> Result<Signal> {
    check_factor("f_T", f_t)?;
    let n = s.len();
    if f_t == 1.0 {
        return Ok(s.clone());
    }
    let scaled = (n as f64 * f_t).round();
    if scaled < 2.0 {
        return Err(Error::invalid(format!(
            "f_T={f_t} shrinks a length-{n} signal below 2 samples"
        )));
    }
    let m = scaled as usize;
    let resampled = resample_linear(s, m)?;
    let channels = resampled
        .channels()
        .iter()
        .map(|ch| {
            if m >= n {
                let left = (m - n) / 2;
                ch[left..left + n].to_vec()
            } else {
                let left = (n - m) / 2;
                let mut out = vec![0.0; n];
                out[left..left + m].copy_from_slice(ch);
                out
            }
        })
        .collect();
    Ok(s.with_channels(channels))
}

/// Multiplies every value by `f_I`.
pub fn intensity_scale(s: &Signal, f_i: f64) -> Result<Signal> {
    check_factor("f_I", f_i)?;
    if f_i == 1.0 {
        return Ok(s.clone());
    }
    Ok(s.map_values(|v| v * f_i))
}

/// Cutting points for warping a length-`n` signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarpCuts {
    pub t1: usize,
    pub t2: usize,
    pub n: usize,
}

impl WarpCuts {
    /// Inclusive ranges `([n/4, n/2], [n/2, 3n/4])` with floored bounds.
    pub fn bounds(n: usize) -> ((usize, usize), (usize, usize)) {
        ((n / 4, n / 2), (n / 2, 3 * n / 4))
    }

    pub fn new(t1: usize, t2: usize, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::invalid(format!("warping needs length >= 8, got {n}")));
        }
        let ((a1, b1), (a2, b2)) = Self::bounds(n);
        if !(a1..=b1).contains(&t1) || !(a2..=b2).contains(&t2) {
            return Err(Error::invalid(format!(
                "cuts t1={t1}, t2={t2} outside [{a1},{b1}] x [{a2},{b2}] for n={n}"
            )));
        }
        Ok(WarpCuts { t1, t2, n })
    }
}

/// Draws `t1 ~ U{n/4..=n/2}` and `t2 ~ U{n/2..=3n/4}`.
pub fn draw_warp_cuts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<WarpCuts> {
    if n < 8 {
        return Err(Error::invalid(format!("warping needs length >= 8, got {n}")));
    }
    let ((a1, b1), (a2, b2)) = WarpCuts::bounds(n);
    let t1 = rng.random_range(a1..=b1);
    let t2 = rng.random_range(a2..=b2);
    Ok(WarpCuts { t1, t2, n })
}

/// The time map a warp applies. Left-to-right sends source `t1` to target `t2`
/// (stretching the left part); right-to-left sends `t2` to `t1`.
pub fn warp_map(direction: WarpDirection, cuts: WarpCuts) -> Result<TimeMap> {
    let last = (cuts.n - 1) as f64;
    let (src, dst) = match direction {
        WarpDirection::LeftToRight => (cuts.t1, cuts.t2),
        WarpDirection::RightToLeft => (cuts.t2, cuts.t1),
    };
    TimeMap::new(vec![(0.0, 0.0), (src as f64, dst as f64), (last, last)])
}

pub fn warp(s: &Signal, direction: WarpDirection, cuts: WarpCuts) -> Result<Signal> {
    if cuts.n != s.len() {
        return Err(Error::invalid(format!(
            "cuts drawn for length {}, signal has length {}",
            cuts.n,
            s.len()
        )));
    }
    let cuts = WarpCuts::new(cuts.t1, cuts.t2, cuts.n)?;
    apply_time_map(s, &warp_map(direction, cuts)?)
}

/// A list of augmentations applied together to one copy of each selected
/// training sample, with the fraction of samples that receive a copy.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPlan {
    specs: Vec<AugmentationSpec>,
    ratio: f64,
    base_seed: u64,
}

impl AugmentationPlan {
    /// `ratio` must lie in `(0, 1]`; reference runs use only 1.0 and 0.5.
    pub fn new(specs: Vec<AugmentationSpec>, ratio: f64, base_seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::invalid("augmentation plan needs at least one spec"));
        }
        for spec in &specs {
            spec.validate()?;
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::invalid(format!("ratio must be in (0, 1], got {ratio}")));
        }
        Ok(AugmentationPlan {
            specs,
            ratio,
            base_seed,
        })
    }

    pub fn single(spec: AugmentationSpec, ratio: f64, base_seed: u64) -> Result<Self> {
        Self::new(vec![spec], ratio, base_seed)
    }

    pub fn specs(&self) -> &[AugmentationSpec] {
        &self.specs
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    /// Same specs and ratio with a different seed.
    pub fn reseeded(&self, base_seed: u64) -> Self {
        AugmentationPlan {
            base_seed,
            ..self.clone()
        }
    }

    pub fn is_reference_ratio(&self) -> bool {
        self.ratio == 1.0 || self.ratio == 0.5
    }

    /// Whether sample `index` receives an augmented copy. Selects exactly
    /// `ceil(ratio * count)` of the first `count` indices; at 0.5 these are
    /// the even indices.
    pub fn selects(&self, index: usize) -> bool {
        let before = (index as f64 * self.ratio).ceil();
        let after = ((index + 1) as f64 * self.ratio).ceil();
        after > before
    }

    pub fn augmented_count(&self, count: usize) -> usize {
        (0..count).filter(|&i| self.selects(i)).count()
    }

    /// Seed for the `position`-th spec applied to sample `index`.
    pub fn sample_seed(&self, index: usize, position: usize) -> u64 {
        let spec = &self.specs[position];
        mix(
            self.base_seed,
            index as u64,
            ((position as u64) << 8) | spec.method.ordinal(),
        )
    }

    /// Augmented copy of sample `index`: every spec applied in order.
    pub fn augment_one(&self, index: usize, s: &Signal) -> Result<Signal> {
        let mut out = s.clone();
        for (position, spec) in self.specs.iter().enumerate() {
            let mut rng = rng_from(self.sample_seed(index, position));
            out = spec.apply(&out, &mut rng)?;
        }
        Ok(out)
    }

    /// Returns the originals followed by one augmented copy of each selected
    /// sample, in index order.
    pub fn apply(&self, training_set: &[Signal]) -> Result<Vec<Signal>> {
        if training_set.is_empty() {
            return Err(Error::invalid("cannot augment an empty training set"));
        }
        let mut out = training_set.to_vec();
        for (i, s) in training_set.iter().enumerate() {
            if self.selects(i) {
                out.push(self.augment_one(i, s)?);
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`AugmentationPlan::apply`].
pub fn apply_plan(training_set: &[Signal], plan: &AugmentationPlan) -> Result<Vec<Signal>> {
    plan.apply(training_set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};

    fn random_signal(seed: u64, channels: usize, len: usize) -> Signal {
        let mut rng = rng_from(seed);
        let values = (0..channels)
            .map(|_| (0..len).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        Signal::new(values, 100.0).unwrap()
    }

    fn max_abs_diff(a: &Signal, b: &Signal) -> f64 {
        a.channels()
            .iter()
            .flatten()
            .zip(b.channels().iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_noise_is_identity() {
        let s = random_signal(1, 6, 150);
        let out = add_random_noise(&s, 0.0, 0.0, &mut rng_from(9)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn negative_sigma_rejected() {
        let s = random_signal(1, 1, 10);
        assert!(add_random_noise(&s, 0.0, -0.1, &mut rng_from(0)).is_err());
    }

    #[test]
    fn noise_sample_statistics() {
        let s = Signal::from_channel(vec![0.0; 10_000]).unwrap();
        let out = add_random_noise(&s, 0.0, 0.1, &mut rng_from(2024)).unwrap();
        let xs = out.channel(0);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.004, "mean {mean}");
        assert!((0.098..=0.102).contains(&var.sqrt()), "std {}", var.sqrt());
    }

    #[test]
    fn noise_mean_shifts_values() {
        let s = Signal::from_channel(vec![0.0; 20_000]).unwrap();
        let out = add_random_noise(&s, 1.5, 0.05, &mut rng_from(3)).unwrap();
        let mean = out.channel(0).iter().sum::<f64>() / 20_000.0;
        assert!((mean - 1.5).abs() < 0.002);
    }

    #[test]
    fn sigma_grid_accepted() {
        let s = random_signal(4, 6, 150);
        for sigma in SIGMA_GRID {
            let out = add_random_noise(&s, 0.0, sigma, &mut rng_from(0)).unwrap();
            assert_eq!((out.n_channels(), out.len()), (6, 150));
        }
    }

    #[test]
    fn temporal_identity_and_pad() {
        let s = random_signal(5, 3, 40);
        assert_eq!(temporal_scale(&s, 1.0).unwrap(), s);
        let ones = Signal::from_channel(vec![1.0; 4]).unwrap();
        let out = temporal_scale(&ones, 0.5).unwrap();
        assert_eq!(out.channel(0), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn temporal_crop_takes_center() {
        // ramp 0..9 stretched to 15 samples, crop drops 2 left and 3 right
        let s = Signal::from_channel((0..10).map(|i| i as f64).collect()).unwrap();
        let out = temporal_scale(&s, 1.5).unwrap();
        let step = 9.0 / 14.0;
        for (j, v) in out.channel(0).iter().enumerate() {
            assert!((v - (j + 2) as f64 * step).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_odd_pad_puts_remainder_right() {
        // n=5, f_T=0.4 -> m=2, pad 1 left and 2 right
        let s = Signal::from_channel(vec![3.0; 5]).unwrap();
        assert_eq!(temporal_scale(&s, 0.4).unwrap().channel(0), &[0.0, 3.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn temporal_rejects_bad_factors() {
        let s = random_signal(5, 1, 10);
        assert!(temporal_scale(&s, 0.0).is_err());
        assert!(temporal_scale(&s, -1.0).is_err());
        assert!(temporal_scale(&s, 0.1).is_err());
    }

    #[test]
    fn temporal_round_half_away_from_zero() {
        // 10 * 0.25 = 2.5 rounds to 3
        let s = Signal::from_channel(vec![1.0; 10]).unwrap();
        let out = temporal_scale(&s, 0.25).unwrap();
        assert_eq!(out.channel(0).iter().filter(|&&v| v == 1.0).count(), 3);
    }

    #[test]
    fn intensity_examples() {
        let s = Signal::from_channel(vec![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(intensity_scale(&s, 2.0).unwrap().channel(0), &[2.0, -4.0, 6.0]);
        assert_eq!(intensity_scale(&s, 1.0).unwrap(), s);
        assert!(intensity_scale(&s, 0.0).is_err());
    }

    #[test]
    fn scale_grids_accepted() {
        let s = random_signal(6, 6, 150);
        for f in SCALE_GRID {
            let t = temporal_scale(&s, f).unwrap();
            let i = intensity_scale(&s, f).unwrap();
            assert_eq!((t.n_channels(), t.len()), (6, 150));
            assert_eq!((i.n_channels(), i.len()), (6, 150));
        }
    }

    #[test]
    fn warp_cut_bounds() {
        assert_eq!(WarpCuts::bounds(150), ((37, 75), (75, 112)));
        assert_eq!(WarpCuts::bounds(8), ((2, 4), (4, 6)));
        assert!(draw_warp_cuts(7, &mut rng_from(0)).is_err());
        let mut rng = rng_from(11);
        let (mut lo1, mut hi1, mut lo2, mut hi2) = (usize::MAX, 0, usize::MAX, 0);
        for _ in 0..10_000 {
            let c = draw_warp_cuts(150, &mut rng).unwrap();
            lo1 = lo1.min(c.t1);
            hi1 = hi1.max(c.t1);
            lo2 = lo2.min(c.t2);
            hi2 = hi2.max(c.t2);
        }
        assert_eq!((lo1, hi1, lo2, hi2), (37, 75, 75, 112));
    }

    #[test]
    fn warp_ramp_left_to_right() {
        let s = Signal::from_channel((0..9).map(|i| i as f64).collect()).unwrap();
        let cuts = WarpCuts::new(2, 6, 9).unwrap();
        let out = warp(&s, WarpDirection::LeftToRight, cuts).unwrap();
        let expected = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 4.0 / 3.0, 5.0 / 3.0, 2.0, 5.0, 8.0];
        for (a, b) in out.channel(0).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn warp_ramp_right_to_left() {
        // knots (0,0),(6,2),(8,8): source = 3t for t<=2, then 6 + (t-2)/3
        let s = Signal::from_channel((0..9).map(|i| i as f64).collect()).unwrap();
        let cuts = WarpCuts::new(2, 6, 9).unwrap();
        let out = warp(&s, WarpDirection::RightToLeft, cuts).unwrap();
        let expected = [0.0, 3.0, 6.0, 19.0 / 3.0, 20.0 / 3.0, 7.0, 22.0 / 3.0, 23.0 / 3.0, 8.0];
        for (a, b) in out.channel(0).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn warp_degenerate_cuts_are_identity() {
        let s = random_signal(7, 6, 150);
        let cuts = WarpCuts::new(75, 75, 150).unwrap();
        for dir in [WarpDirection::LeftToRight, WarpDirection::RightToLeft] {
            assert!(max_abs_diff(&warp(&s, dir, cuts).unwrap(), &s) <= 1e-12);
        }
    }

    #[test]
    fn warp_rejects_invalid_cuts() {
        let s = random_signal(7, 1, 150);
        assert!(WarpCuts::new(10, 80, 150).is_err());
        let bad = WarpCuts { t1: 10, t2: 80, n: 150 };
        assert!(warp(&s, WarpDirection::LeftToRight, bad).is_err());
        let wrong_len = WarpCuts::new(40, 80, 160).unwrap();
        assert!(warp(&s, WarpDirection::LeftToRight, wrong_len).is_err());
    }

    #[test]
    fn plan_counts() {
        let sig = random_signal(8, 2, 20);
        let pos = vec![sig.clone(); 20];
        let neg = vec![sig; 100];
        let full = AugmentationPlan::single(AugmentationSpec::noise(0.1), 1.0, 1).unwrap();
        let half = AugmentationPlan::single(AugmentationSpec::noise(0.1), 0.5, 1).unwrap();
        assert_eq!(full.apply(&pos).unwrap().len(), 40);
        assert_eq!(full.apply(&neg).unwrap().len(), 200);
        assert_eq!(half.apply(&pos).unwrap().len(), 30);
        assert_eq!(half.apply(&neg).unwrap().len(), 150);
        assert!((0..10).filter(|&i| half.selects(i)).eq([0, 2, 4, 6, 8]));
        assert_eq!(half.augmented_count(7), 4);
    }

    #[test]
    fn plan_identity_spec_copies_originals() {
        let set: Vec<Signal> = (0..5).map(|i| random_signal(i, 3, 30)).collect();
        let plan = AugmentationPlan::single(AugmentationSpec::intensity(1.0), 1.0, 5).unwrap();
        let out = plan.apply(&set).unwrap();
        assert_eq!(&out[..5], &set[..]);
        assert_eq!(&out[5..], &set[..]);
    }

    #[test]
    fn plan_validation() {
        assert!(AugmentationPlan::new(vec![], 1.0, 0).is_err());
        assert!(AugmentationPlan::single(AugmentationSpec::noise(0.1), 0.0, 0).is_err());
        assert!(AugmentationPlan::single(AugmentationSpec::noise(0.1), 1.5, 0).is_err());
        assert!(AugmentationPlan::single(AugmentationSpec::temporal(-1.0), 1.0, 0).is_err());
        let plan = AugmentationPlan::single(AugmentationSpec::noise(0.1), 1.0, 0).unwrap();
        assert!(plan.apply(&[]).is_err());
    }

    #[test]
    fn combined_plan_composes_in_order() {
        let s = random_signal(9, 2, 60);
        let plan = AugmentationPlan::new(
            vec![AugmentationSpec::intensity(2.0), AugmentationSpec::temporal(0.9)],
            1.0,
            0,
        )
        .unwrap();
        let out = plan.apply(std::slice::from_ref(&s)).unwrap();
        assert_eq!(out.len(), 2);
        let expected = temporal_scale(&intensity_scale(&s, 2.0).unwrap(), 0.9).unwrap();
        assert_eq!(out[1], expected);
    }

    #[test]
    fn plan_is_deterministic_and_seed_sensitive() {
        let set: Vec<Signal> = (0..6).map(|i| random_signal(i, 6, 150)).collect();
        let specs = vec![
            AugmentationSpec::noise(0.05),
            AugmentationSpec::warp(WarpDirection::LeftToRight),
        ];
        let a = AugmentationPlan::new(specs.clone(), 1.0, 42).unwrap();
        let b = AugmentationPlan::new(specs, 1.0, 43).unwrap();
        assert_eq!(a.apply(&set).unwrap(), a.apply(&set).unwrap());
        assert_ne!(a.apply(&set).unwrap(), b.apply(&set).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn intensity_is_multiplicative(seed in 0u64..1000, a in 0.1f64..3.0, b in 0.1f64..3.0) {
            let s = random_signal(seed, 2, 30);
            let once = intensity_scale(&s, a * b).unwrap();
            let twice = intensity_scale(&intensity_scale(&s, a).unwrap(), b).unwrap();
            prop_assert!(max_abs_diff(&once, &twice) <= 1e-12);
        }

        #[test]
        fn warp_stays_within_channel_range(seed in 0u64..1000, n in 8usize..200, lr in any::<bool>()) {
            let s = random_signal(seed, 3, n);
            let cuts = draw_warp_cuts(n, &mut rng_from(seed ^ 0xABCD)).unwrap();
            let dir = if lr { WarpDirection::LeftToRight } else { WarpDirection::RightToLeft };
            let out = warp(&s, dir, cuts).unwrap();
            prop_assert_eq!(out.len(), n);
            for (a, b) in out.channels().iter().zip(s.channels()) {
                let lo = b.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(a.iter().all(|&v| v >= lo && v <= hi));
            }
        }

        #[test]
        fn every_method_preserves_shape(seed in 0u64..1000, n in 10usize..200, m in 0usize..5) {
            let s = random_signal(seed, 4, n);
            let spec = [
                AugmentationSpec::noise(0.3),
                AugmentationSpec::temporal(1.2),
                AugmentationSpec::temporal(0.8),
                AugmentationSpec::intensity(0.9),
                AugmentationSpec::warp(WarpDirection::RightToLeft),
            ][m];
            let out = spec.apply(&s, &mut rng_from(seed)).unwrap();
            prop_assert_eq!((out.n_channels(), out.len()), (4, n));
        }

        #[test]
        fn plan_never_touches_inputs(seed in 0u64..1000, count in 1usize..12) {
            let set: Vec<Signal> = (0..count as u64).map(|i| random_signal(seed + i, 2, 24)).collect();
            let before = set.clone();
            let plan = AugmentationPlan::new(
                vec![AugmentationSpec::noise(0.2), AugmentationSpec::warp(WarpDirection::LeftToRight)],
                0.5,
                seed,
            ).unwrap();
            let out = plan.apply(&set).unwrap();
            prop_assert_eq!(&set, &before);
            prop_assert_eq!(&out[..count], &before[..]);
            prop_assert_eq!(out.len(), count + count.div_ceil(2));
        }
    }
}
