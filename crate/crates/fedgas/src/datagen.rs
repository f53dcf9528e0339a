//! Seeded synthetic data: weather, heating strategies, and gas usage.
//!
//! The generators are pure functions of their spec and inputs. Distinct
//! ChaCha streams keep the weather, strategy, usage, and corruption draws
//! independent of each other while still deriving from one scenario seed.

use chrono::NaiveDate;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::TimeSeriesDataset;
use crate::error::{Error, Result};

/// Calendar origin of every generated series.
pub const START_DATE: (i32, u32, u32) = (2023, 1, 1);

/// Outdoor temperature below which heating (and so gas demand) kicks in.
pub const HEATING_THRESHOLD_C: f64 = 15.0;

/// Usage added per unit of reported heating strategy.
pub const STRATEGY_COUPLING: f64 = 1.0;

const TEMP_NOISE_STD: f64 = 2.0;
const STRATEGY_NOISE_STD: f64 = 0.3;
const STRATEGY_SLOPE: f64 = 0.5;
const RANDOM_STRATEGY_MAX: f64 = 8.0;

const WEATHER_STREAM: u64 = 1;
const STRATEGY_STREAM: u64 = 2;
const USAGE_STREAM: u64 = 3;
const DEGRADE_STREAM: u64 = 4;

/// How a heating station reports its daily strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    /// Report the real plan: a decreasing function of temperature plus a
    /// little noise, so the report genuinely tracks demand.
    Truthful,
    /// Report values drawn independently of the weather.
    Random,
}

/// Parameters of one participant's synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub days: usize,
    pub base_usage: f64,
    pub temp_sensitivity: f64,
    pub strategy_mode: StrategyMode,
    pub noise_std: f64,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.days < 2 {
            return Err(Error::Config(format!(
                "days must be at least 2, got {}",
                self.days
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        if !self.base_usage.is_finite() || !self.temp_sensitivity.is_finite() {
            return Err(Error::Config("usage model constants must be finite".into()));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gen_dates(days: usize) -> Vec<NaiveDate> {
    let (y, m, d) = START_DATE;
    let start = NaiveDate::from_ymd_opt(y, m, d).expect("valid start date");
    (0..days)
        .map(|i| start + chrono::Duration::days(i as i64))
        .collect()
}

/// Daily weather: `temperature` follows a sinusoidal annual cycle with seeded
/// noise, `wind` is non-negative seeded noise. No target.
pub fn generate_weather(spec: &GenSpec) -> Result<TimeSeriesDataset> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, WEATHER_STREAM);
    let temp_noise = Normal::new(0.0, TEMP_NOISE_STD).expect("valid normal");
    let wind_noise = Normal::new(3.0, 2.0).expect("valid normal");

    let mut values = Vec::with_capacity(spec.days * 2);
    for day in 0..spec.days {
        let phase = 2.0 * std::f64::consts::PI * day as f64 / 365.25;
        let temperature = 10.0 - 12.0 * phase.cos() + temp_noise.sample(&mut rng);
        let wind = f64::max(wind_noise.sample(&mut rng), 0.0);
        values.push(temperature);
        values.push(wind);
    }
    let features = Array2::from_shape_vec((spec.days, 2), values).expect("shape");
    TimeSeriesDataset::new(
        gen_dates(spec.days),
        vec!["temperature".into(), "wind".into()],
        features,
        None,
    )
}

/// A station's reported heating strategy for each day of `weather`.
///
/// Truthful mode tracks heating demand (decreasing in temperature); random
/// mode ignores the weather entirely. One `strategy` column, no target.
pub fn generate_strategy(spec: &GenSpec, weather: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    spec.validate()?;
    let temperature = weather
        .feature_column("temperature")
        .ok_or_else(|| Error::Schema("weather dataset has no `temperature` column".into()))?;
    let mut rng = stream_rng(spec.seed, STRATEGY_STREAM);
    let noise = Normal::new(0.0, STRATEGY_NOISE_STD).expect("valid normal");

    let values: Vec<f64> = match spec.strategy_mode {
        StrategyMode::Truthful => temperature
            .iter()
            .map(|t| {
                (STRATEGY_SLOPE * (HEATING_THRESHOLD_C - t).max(0.0) + noise.sample(&mut rng))
                    .max(0.0)
            })
            .collect(),
        StrategyMode::Random => (0..weather.rows())
            .map(|_| rng.random_range(0.0..RANDOM_STRATEGY_MAX))
            .collect(),
    };
    let features = Array2::from_shape_vec((weather.rows(), 1), values).expect("shape");
    TimeSeriesDataset::new(
        weather.dates().to_vec(),
        vec!["strategy".into()],
        features,
        None,
    )
}

/// Daily gas usage implied by the weather and the (true) heating strategy:
/// a heating-degree-day term plus strategy coupling plus seeded Gaussian
/// noise, clamped at zero.
pub fn generate_usage(
    spec: &GenSpec,
    weather: &TimeSeriesDataset,
    strategy: &TimeSeriesDataset,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if weather.dates() != strategy.dates() {
        return Err(Error::Alignment(
            "weather and strategy datasets must cover identical dates".into(),
        ));
    }
    let temperature = weather
        .feature_column("temperature")
        .ok_or_else(|| Error::Schema("weather dataset has no `temperature` column".into()))?;
    let strategy_values = strategy
        .feature_column("strategy")
        .ok_or_else(|| Error::Schema("strategy dataset has no `strategy` column".into()))?;

    let mut rng = stream_rng(spec.seed, USAGE_STREAM);
    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).expect("valid normal");
    Ok(temperature
        .iter()
        .zip(strategy_values.iter())
        .map(|(t, s)| {
            let heating = spec.temp_sensitivity * (HEATING_THRESHOLD_C - t).max(0.0);
            let draw = if spec.noise_std > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            (spec.base_usage + heating + STRATEGY_COUPLING * s + draw).max(0.0)
        })
        .collect())
}

/// Replace a seeded `corruption` fraction of feature cells with independent
/// draws matching each column's location and scale. Dates and target stay
/// untouched.
pub fn degrade_quality(
    dataset: &TimeSeriesDataset,
    corruption: f64,
    seed: u64,
) -> Result<TimeSeriesDataset> {
    if !(0.0..=1.0).contains(&corruption) {
        return Err(Error::Config(format!(
            "corruption must be in [0, 1], got {corruption}"
        )));
    }
    let rows = dataset.rows();
    let cols = dataset.feature_names().len();
    let n_cells = rows * cols;
    let n_corrupt = (corruption * n_cells as f64).round() as usize;
    if n_corrupt == 0 {
        return Ok(dataset.clone());
    }

    // Column statistics of the clean data set the noise scale.
    let stats: Vec<(f64, f64)> = dataset
        .features()
        .columns()
        .into_iter()
        .map(|c| {
            let mean = c.sum() / rows as f64;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
            (mean, var.sqrt())
        })
        .collect();

    let mut rng = stream_rng(seed, DEGRADE_STREAM);
    // Partial Fisher-Yates over the flattened cell indices.
    let mut cells: Vec<usize> = (0..n_cells).collect();
    for i in 0..n_corrupt.min(n_cells - 1) {
        let j = rng.random_range(i..n_cells);
        cells.swap(i, j);
    }

    let mut features = dataset.features().to_owned();
    for &cell in cells.iter().take(n_corrupt) {
        let (r, c) = (cell / cols, cell % cols);
        let (mean, std) = stats[c];
        features[[r, c]] = if std > 0.0 {
            Normal::new(mean, std)
                .expect("valid normal")
                .sample(&mut rng)
        } else {
            mean
        };
    }
    TimeSeriesDataset::new(
        dataset.dates().to_vec(),
        dataset.feature_names().to_vec(),
        features,
        dataset.target().map(<[f64]>::to_vec),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(seed: u64, days: usize, mode: StrategyMode) -> GenSpec {
        GenSpec {
            seed,
            days,
            base_usage: 50.0,
            temp_sensitivity: 2.0,
            strategy_mode: mode,
            noise_std: 3.0,
        }
    }

    /// Independent Pearson correlation for use as a test oracle.
    pub(crate) fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - mx) * (b - my))
            .sum::<f64>()
            / n;
        let vx = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n;
        let vy = y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / n;
        cov / (vx * vy).sqrt()
    }

    fn full_pipeline(seed: u64, mode: StrategyMode) -> (Vec<f64>, Vec<f64>) {
        let s = spec(seed, 365, mode);
        let weather = generate_weather(&s).unwrap();
        let truthful = generate_strategy(
            &GenSpec {
                strategy_mode: StrategyMode::Truthful,
                ..s.clone()
            },
            &weather,
        )
        .unwrap();
        let committed = generate_strategy(&s, &weather).unwrap();
        let usage = generate_usage(&s, &weather, &truthful).unwrap();
        (
            committed.feature_column("strategy").unwrap().to_vec(),
            usage,
        )
    }

    #[test]
    fn weather_is_deterministic_and_seed_sensitive() {
        let s = spec(1, 365, StrategyMode::Truthful);
        let a = generate_weather(&s).unwrap();
        let b = generate_weather(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows(), 365);

        let c = generate_weather(&spec(2, 365, StrategyMode::Truthful)).unwrap();
        assert_ne!(
            a.feature_column("temperature").unwrap().to_vec(),
            c.feature_column("temperature").unwrap().to_vec()
        );
    }

    #[test]
    fn weather_minimum_days() {
        let ds = generate_weather(&spec(1, 2, StrategyMode::Truthful)).unwrap();
        assert_eq!(ds.rows(), 2);
        assert!(matches!(
            generate_weather(&spec(1, 1, StrategyMode::Truthful)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn wind_is_non_negative() {
        let ds = generate_weather(&spec(9, 730, StrategyMode::Truthful)).unwrap();
        assert!(ds.feature_column("wind").unwrap().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn truthful_strategy_correlates_with_usage() {
        let (strategy, usage) = full_pipeline(1, StrategyMode::Truthful);
        let corr = pearson(&strategy, &usage);
        assert!(corr > 0.5, "truthful corr {corr} should exceed 0.5");
    }

    #[test]
    fn random_strategy_is_uncorrelated() {
        let (strategy, usage) = full_pipeline(1, StrategyMode::Random);
        let corr = pearson(&strategy, &usage);
        assert!(corr.abs() < 0.3, "random corr {corr} should be near 0");
    }

    #[test]
    fn strategy_is_deterministic() {
        let s = spec(5, 120, StrategyMode::Truthful);
        let weather = generate_weather(&s).unwrap();
        let a = generate_strategy(&s, &weather).unwrap();
        let b = generate_strategy(&s, &weather).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn usage_collapses_to_base_when_formula_is_flat() {
        use chrono::NaiveDate;
        use ndarray::Array2;
        let dates: Vec<NaiveDate> = (0..4)
            .map(|i| NaiveDate::from_ymd_opt(2023, 1, 1).unwrap() + chrono::Duration::days(i))
            .collect();
        let weather = TimeSeriesDataset::new(
            dates.clone(),
            vec!["temperature".into()],
            Array2::from_elem((4, 1), HEATING_THRESHOLD_C),
            None,
        )
        .unwrap();
        let strategy =
            TimeSeriesDataset::new(dates, vec!["strategy".into()], Array2::zeros((4, 1)), None)
                .unwrap();
        let s = GenSpec {
            noise_std: 0.0,
            ..spec(1, 4, StrategyMode::Truthful)
        };
        let usage = generate_usage(&s, &weather, &strategy).unwrap();
        for u in usage {
            assert_abs_diff_eq!(u, 50.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn colder_day_uses_strictly_more_gas() {
        use chrono::NaiveDate;
        use ndarray::Array2;
        let dates: Vec<NaiveDate> = (0..2)
            .map(|i| NaiveDate::from_ymd_opt(2023, 1, 1).unwrap() + chrono::Duration::days(i))
            .collect();
        let weather = TimeSeriesDataset::new(
            dates.clone(),
            vec!["temperature".into()],
            Array2::from_shape_vec((2, 1), vec![10.0, 5.0]).unwrap(),
            None,
        )
        .unwrap();
        let strategy =
            TimeSeriesDataset::new(dates, vec!["strategy".into()], Array2::zeros((2, 1)), None)
                .unwrap();
        let s = GenSpec {
            noise_std: 0.0,
            ..spec(1, 2, StrategyMode::Truthful)
        };
        let usage = generate_usage(&s, &weather, &strategy).unwrap();
        assert!(usage[1] > usage[0]);
    }

    #[test]
    fn usage_rejects_misaligned_inputs() {
        let s = spec(1, 10, StrategyMode::Truthful);
        let weather = generate_weather(&s).unwrap();
        let strategy = generate_strategy(&s, &weather).unwrap();
        let shifted = strategy.slice_rows(0, 5);
        assert!(matches!(
            generate_usage(&s, &weather, &shifted),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn usage_is_deterministic_without_noise() {
        let s = GenSpec {
            noise_std: 0.0,
            ..spec(3, 60, StrategyMode::Truthful)
        };
        let weather = generate_weather(&s).unwrap();
        let strategy = generate_strategy(&s, &weather).unwrap();
        let a = generate_usage(&s, &weather, &strategy).unwrap();
        let b = generate_usage(&s, &weather, &strategy).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degrade_zero_is_identity() {
        let s = spec(1, 50, StrategyMode::Truthful);
        let weather = generate_weather(&s).unwrap();
        let out = degrade_quality(&weather, 0.0, 99).unwrap();
        assert_eq!(out, weather);
    }

    #[test]
    fn degrade_is_seed_deterministic() {
        let s = spec(1, 50, StrategyMode::Truthful);
        let weather = generate_weather(&s).unwrap();
        let a = degrade_quality(&weather, 0.4, 99).unwrap();
        let b = degrade_quality(&weather, 0.4, 99).unwrap();
        assert_eq!(a, b);
        let c = degrade_quality(&weather, 0.4, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn full_corruption_kills_correlation() {
        let s = spec(2, 365, StrategyMode::Truthful);
        let weather = generate_weather(&s).unwrap();
        let strategy = generate_strategy(&s, &weather).unwrap();
        let usage = generate_usage(&s, &weather, &strategy).unwrap();
        let clean = pearson(
            &strategy.feature_column("strategy").unwrap().to_vec(),
            &usage,
        );
        let corrupted = degrade_quality(&strategy, 1.0, 7).unwrap();
        let dirty = pearson(
            &corrupted.feature_column("strategy").unwrap().to_vec(),
            &usage,
        );
        assert!(
            dirty.abs() < clean,
            "corrupted corr {dirty} should drop below clean corr {clean}"
        );
    }

    #[test]
    fn degrade_leaves_dates_and_target_untouched() {
        let s = spec(4, 40, StrategyMode::Truthful);
        let weather = generate_weather(&s).unwrap();
        let strategy = generate_strategy(&s, &weather).unwrap();
        let usage = generate_usage(&s, &weather, &strategy).unwrap();
        let labeled = TimeSeriesDataset::new(
            strategy.dates().to_vec(),
            strategy.feature_names().to_vec(),
            strategy.features().to_owned(),
            Some(usage.clone()),
        )
        .unwrap();
        let out = degrade_quality(&labeled, 0.8, 3).unwrap();
        assert_eq!(out.dates(), labeled.dates());
        assert_eq!(out.target(), Some(&usage[..]));
    }

    #[test]
    fn corruption_is_monotone_in_expectation() {
        // More corruption must not raise the correlation on average.
        let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut means = Vec::new();
        for &level in &levels {
            let mut total = 0.0;
            for seed in 0..20u64 {
                let s = spec(seed, 365, StrategyMode::Truthful);
                let weather = generate_weather(&s).unwrap();
                let strategy = generate_strategy(&s, &weather).unwrap();
                let usage = generate_usage(&s, &weather, &strategy).unwrap();
                let corrupted = degrade_quality(&strategy, level, seed.wrapping_add(1000)).unwrap();
                total += pearson(
                    &corrupted.feature_column("strategy").unwrap().to_vec(),
                    &usage,
                )
                .abs();
            }
            means.push(total / 20.0);
        }
        for pair in means.windows(2) {
            assert!(
                pair[1] <= pair[0] + 0.02,
                "mean |corr| should not increase with corruption: {means:?}"
            );
        }
    }
}
