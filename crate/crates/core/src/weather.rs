//! Synthetic hourly weather: ambient temperature and global irradiance.
//!
//! Temperature is a yearly sinusoid plus a diurnal sinusoid plus AR(1) noise.
//! Irradiance is a clear-sky half-sine over the daylight window, scaled by a
//! cloudiness factor that is constant within a day and follows a bounded
//! random walk across days.

use crate::error::{Error, Result};
use crate::time::HourStamp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

const TEMPERATURE_STREAM: u64 = 1;
const CLOUD_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherParams {
    /// Annual mean ambient temperature, °C.
    pub mean_temp: f64,
    /// Amplitude of the yearly cycle, °C.
    pub seasonal_amplitude: f64,
    /// Day of year (0-based) of the yearly minimum.
    pub coldest_day: f64,
    pub diurnal_amplitude: f64,
    /// Hour of day of the daily maximum.
    pub warmest_hour: f64,
    pub ar_coeff: f64,
    /// Innovation standard deviation of the AR(1) noise, °C.
    pub noise_sigma: f64,
    /// Clear-sky irradiance at solar noon, W/m².
    pub clear_sky_peak: f64,
    /// Daylight window in hours of day.
    pub sunrise: f64,
    pub sunset: f64,
    /// Cloudiness factor on the first day.
    pub cloud_initial: f64,
    /// Standard deviation of the day-to-day cloudiness step.
    pub cloud_step_sigma: f64,
    pub cloud_min: f64,
    pub cloud_max: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        WeatherParams {
            mean_temp: 10.5,
            seasonal_amplitude: 7.0,
            coldest_day: 20.0,
            diurnal_amplitude: 3.0,
            warmest_hour: 15.0,
            ar_coeff: 0.9,
            noise_sigma: 1.0,
            clear_sky_peak: 380.0,
            sunrise: 8.0,
            sunset: 17.0,
            cloud_initial: 0.6,
            cloud_step_sigma: 0.2,
            cloud_min: 0.15,
            cloud_max: 1.0,
        }
    }
}

impl WeatherParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.ar_coeff.abs()) {
            return Err(Error::InvalidParameter("ar_coeff must satisfy |phi| < 1".into()));
        }
        if self.noise_sigma < 0.0 || self.cloud_step_sigma < 0.0 || self.clear_sky_peak < 0.0 {
            return Err(Error::InvalidParameter("weather scales must be >= 0".into()));
        }
        if !(self.sunrise >= 0.0 && self.sunrise < self.sunset && self.sunset <= 24.0) {
            return Err(Error::InvalidParameter("daylight window must lie in [0, 24]".into()));
        }
        if !(self.cloud_min > 0.0 && self.cloud_min <= self.cloud_max && self.cloud_max <= 1.0) {
            return Err(Error::InvalidParameter("cloudiness bounds must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Clear-sky irradiance for the hour starting at `hour_of_day`, evaluated
    /// at the middle of the hour.
    pub fn clear_sky(&self, hour_of_day: usize) -> f64 {
        let t = hour_of_day as f64 + 0.5;
        if t <= self.sunrise || t >= self.sunset {
            return 0.0;
        }
        self.clear_sky_peak * (PI * (t - self.sunrise) / (self.sunset - self.sunrise)).sin()
    }

    fn deterministic_temp(&self, stamp: HourStamp) -> f64 {
        let seasonal = -self.seasonal_amplitude
            * (2.0 * PI * (stamp.day_of_year() - self.coldest_day) / 365.25).cos();
        let diurnal = self.diurnal_amplitude
            * (2.0 * PI * (stamp.hour_of_day() as f64 - self.warmest_hour) / 24.0).cos();
        self.mean_temp + seasonal + diurnal
    }
}

/// Hourly ambient temperature and irradiance starting at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub start: HourStamp,
    pub t_amb: Vec<f64>,
    pub irradiance: Vec<f64>,
    /// Present when the series was generated rather than loaded.
    pub seed: Option<u64>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.t_amb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_amb.is_empty()
    }

    pub fn end(&self) -> HourStamp {
        self.start + self.len() as i64
    }

    pub fn stamp(&self, i: usize) -> HourStamp {
        self.start + i as i64
    }

    pub fn index_of(&self, stamp: HourStamp) -> Option<usize> {
        let i = stamp - self.start;
        (i >= 0 && (i as usize) < self.len()).then_some(i as usize)
    }

    /// Joins `later` onto the end of `self`; the two must be contiguous.
    pub fn concat(&self, later: &WeatherSeries) -> Result<WeatherSeries> {
        if later.start != self.end() {
            return Err(Error::Data(format!(
                "weather series are not contiguous: {} then {}",
                self.end(),
                later.start
            )));
        }
        let mut out = self.clone();
        out.t_amb.extend_from_slice(&later.t_amb);
        out.irradiance.extend_from_slice(&later.irradiance);
        out.seed = None;
        Ok(out)
    }

    /// Sub-series `[from, from + len)`.
    pub fn window(&self, from: HourStamp, len: usize) -> Result<WeatherSeries> {
        let i = self
            .index_of(from)
            .filter(|i| i + len <= self.len())
            .ok_or_else(|| {
                Error::Coverage(format!(
                    "weather {}..{} does not cover {} + {len} h",
                    self.start,
                    self.end(),
                    from
                ))
            })?;
        Ok(WeatherSeries {
            start: from,
            t_amb: self.t_amb[i..i + len].to_vec(),
            irradiance: self.irradiance[i..i + len].to_vec(),
            seed: self.seed,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["timestamp", "t_amb", "irradiance"])?;
        for i in 0..self.len() {
            out.write_record([
                self.stamp(i).to_string(),
                self.t_amb[i].to_string(),
                self.irradiance[i].to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the `timestamp,t_amb,irradiance` schema; rows must be hourly and
    /// consecutive.
    pub fn read_csv<R: Read>(r: R) -> Result<WeatherSeries> {
        #[derive(Deserialize)]
        struct Row {
            timestamp: String,
            t_amb: f64,
            irradiance: f64,
        }
        let mut reader = csv::Reader::from_reader(r);
        let mut start = None;
        let mut t_amb = Vec::new();
        let mut irradiance = Vec::new();
        for (i, row) in reader.deserialize::<Row>().enumerate() {
            let row = row?;
            let stamp = HourStamp::parse(&row.timestamp)
                .map_err(|e| Error::Data(format!("row {i}: bad timestamp {:?}: {e}", row.timestamp)))?;
            let start = *start.get_or_insert(stamp);
            if stamp != start + i as i64 {
                return Err(Error::Data(format!("row {i}: expected {}, got {stamp}", start + i as i64)));
            }
            if !row.t_amb.is_finite() || !row.irradiance.is_finite() || row.irradiance < 0.0 {
                return Err(Error::Data(format!("row {i}: invalid values")));
            }
            t_amb.push(row.t_amb);
            irradiance.push(row.irradiance);
        }
        let start = start.ok_or_else(|| Error::Data("weather file has no rows".into()))?;
        Ok(WeatherSeries {
            start,
            t_amb,
            irradiance,
            seed: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<WeatherSeries> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f)
    }
}

/// Generates `days` days of hourly weather beginning at `start`.
pub fn generate_weather(
    start: HourStamp,
    days: usize,
    params: &WeatherParams,
    seed: u64,
) -> Result<WeatherSeries> {
    if days < 1 {
        return Err(Error::InvalidParameter("days must be >= 1".into()));
    }
    params.validate()?;
    let hours = days * 24;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(TEMPERATURE_STREAM);
    let mut cloud_rng = ChaCha8Rng::seed_from_u64(seed);
    cloud_rng.set_stream(CLOUD_STREAM);

    let phi = params.ar_coeff;
    let draw = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let mut noise = params.noise_sigma / (1.0 - phi * phi).sqrt() * draw(&mut noise_rng);
    let mut cloud = params.cloud_initial.clamp(params.cloud_min, params.cloud_max);
    let mut current_day = start.day();

    let mut t_amb = Vec::with_capacity(hours);
    let mut irradiance = Vec::with_capacity(hours);
    for i in 0..hours {
        let stamp = start + i as i64;
        if i > 0 {
            noise = phi * noise + params.noise_sigma * draw(&mut noise_rng);
        }
        if stamp.day() != current_day {
            current_day = stamp.day();
            cloud = reflect(
                cloud + params.cloud_step_sigma * draw(&mut cloud_rng),
                params.cloud_min,
                params.cloud_max,
            );
        }
        t_amb.push(params.deterministic_temp(stamp) + noise);
        irradiance.push((cloud * params.clear_sky(stamp.hour_of_day())).max(0.0));
    }
    Ok(WeatherSeries {
        start,
        t_amb,
        irradiance,
        seed: Some(seed),
    })
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    for _ in 0..8 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    x.clamp(lo, hi)
}
