//! Synthetic gridded weather: a clear-sky diurnal curve modulated by a
//! cloud-attenuation field that drifts across the grid with the wind.
//!
//! The attenuation pattern is frozen smooth noise advected at a configurable
//! speed, so upwind cells genuinely lead downwind cells — the signal that
//! makes multi-location forecasting worthwhile. Everything is derived from
//! counter-based hashes of the seed, so output is byte-reproducible.

use crate::data::{year_start_hour, HourlyRecord, IrradianceTable, LocationId};
use crate::error::{Error, Result};

/// Clear-sky amplitude, W/m^2.
pub const CLEAR_SKY_PEAK: f64 = 1000.0;
/// Grid cell edge length, metres (10 km).
pub const CELL_METERS: f64 = 10_000.0;

/// How the advection direction evolves over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WindMode {
    /// Constant direction, compass degrees (0 = north, 90 = east).
    Fixed(f64),
    /// Direction meanders smoothly around `base` by up to ±`amplitude`
    /// degrees, with features roughly `period_hours` long.
    Wander {
        base: f64,
        amplitude: f64,
        period_hours: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Number of hourly records per location.
    pub hours: usize,
    pub seed: u64,
    /// Advection speed in grid cells per hour.
    pub cloud_speed: f64,
    pub wind: WindMode,
    /// 0 disables clouds entirely (pure clear-sky curve); 1 gives the full
    /// attenuation range [0.2, 1.0].
    pub cloud_cover: f64,
    /// Timestamp (hours since epoch) of the first record.
    pub start_hour: i64,
    /// Correlation length of the cloud field, in grid cells.
    pub noise_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid_rows: 5,
            grid_cols: 5,
            hours: 24 * 365,
            seed: 0,
            cloud_speed: 1.0,
            wind: WindMode::Fixed(90.0),
            cloud_cover: 1.0,
            start_hour: year_start_hour(2000),
            noise_scale: 4.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(Error::Validation(format!(
                "grid must be non-empty, got {}x{}",
                self.grid_rows, self.grid_cols
            )));
        }
        if self.hours == 0 {
            return Err(Error::Validation("hours must be >= 1".into()));
        }
        if !self.cloud_speed.is_finite() || self.cloud_speed < 0.0 {
            return Err(Error::Validation(format!(
                "cloud_speed must be finite and >= 0, got {}",
                self.cloud_speed
            )));
        }
        if !(0.0..=1.0).contains(&self.cloud_cover) {
            return Err(Error::Validation(format!(
                "cloud_cover must be in [0, 1], got {}",
                self.cloud_cover
            )));
        }
        if !self.noise_scale.is_finite() || self.noise_scale <= 0.0 {
            return Err(Error::Validation(format!(
                "noise_scale must be positive, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

/// Idealized cloud-free irradiance at an absolute hour index:
/// `1000 * sin(pi * (hod - 6) / 12)` between 06:00 and 18:00 UTC,
/// exactly zero otherwise.
pub fn clear_sky(hour: i64) -> f64 {
    let hod = crate::data::hour_of_day(hour) as f64;
    if hod <= 6.0 || hod >= 18.0 {
        return 0.0;
    }
    CLEAR_SKY_PEAK * (std::f64::consts::PI * (hod - 6.0) / 12.0).sin()
}

/// Convenience wrapper over [`generate`] with default wind, cover, and
/// start time.
pub fn generate_synthetic(
    grid_rows: usize,
    grid_cols: usize,
    hours: usize,
    seed: u64,
    cloud_speed: f64,
) -> Result<IrradianceTable> {
    generate(&SynthConfig {
        grid_rows,
        grid_cols,
        hours,
        seed,
        cloud_speed,
        ..SynthConfig::default()
    })
}

pub fn generate(cfg: &SynthConfig) -> Result<IrradianceTable> {
    cfg.validate()?;
    let gen = Generator::new(cfg);
    let mut records =
        Vec::with_capacity(cfg.grid_rows * cfg.grid_cols * cfg.hours);
    for h in 0..cfg.hours {
        let ts = cfg.start_hour + h as i64;
        let clear = clear_sky(ts);
        let theta = gen.direction_deg(h);
        for r in 0..cfg.grid_rows {
            for c in 0..cfg.grid_cols {
                let id = (r * cfg.grid_cols + c) as u32;
                let ghi = if clear == 0.0 {
                    0.0
                } else {
                    clear * gen.attenuation(h, r, c)
                };
                records.push(HourlyRecord {
                    timestamp: ts,
                    location: LocationId {
                        id,
                        grid_row: r as i32,
                        grid_col: c as i32,
                    },
                    ghi,
                    wind_speed: gen.wind_speed(h, r, c),
                    wind_direction: gen.wind_direction(theta, h, r, c),
                });
            }
        }
    }
    IrradianceTable::from_records(records)
}

/// Precomputed per-run state: cumulative cloud displacement per hour.
struct Generator<'a> {
    cfg: &'a SynthConfig,
    /// displacement[h] = (columns east, rows south) the pattern has moved
    /// by hour h.
    displacement: Vec<(f64, f64)>,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        let mut displacement = Vec::with_capacity(cfg.hours);
        let (mut dx, mut dy) = (0.0, 0.0);
        for h in 0..cfg.hours {
            displacement.push((dx, dy));
            let theta = direction_deg(cfg, h).to_radians();
            // Snap near-cardinal components so axis-aligned advection stays
            // on the integer lattice bit-exactly.
            let east = snap_unit(theta.sin()) * cfg.cloud_speed;
            let south = snap_unit(-theta.cos()) * cfg.cloud_speed;
            dx += east;
            dy += south;
        }
        Generator { cfg, displacement }
    }

    fn direction_deg(&self, h: usize) -> f64 {
        direction_deg(self.cfg, h)
    }

    /// Cloud transmission factor in [1 - 0.8*cover, 1].
    fn attenuation(&self, h: usize, row: usize, col: usize) -> f64 {
        if self.cfg.cloud_cover == 0.0 {
            return 1.0;
        }
        let (dx, dy) = self.displacement[h];
        let x = col as f64 - dx;
        let y = row as f64 - dy;
        let s = self.cfg.noise_scale;
        let n = 0.65 * value_noise(self.cfg.seed ^ 0x517c_c1b7_2722_0a95, x / s, y / s)
            + 0.35 * value_noise(self.cfg.seed ^ 0x9e37_79b9_7f4a_7c15, 2.0 * x / s, 2.0 * y / s);
        1.0 - 0.8 * self.cfg.cloud_cover * n
    }

    fn wind_speed(&self, h: usize, row: usize, col: usize) -> f64 {
        let base = self.cfg.cloud_speed * CELL_METERS / 3600.0;
        let u = hash01(self.cfg.seed ^ 0x2545_f491_4f6c_dd1d, &[1, h as u64, row as u64, col as u64]);
        (base * (0.9 + 0.2 * u)).max(0.0)
    }

    fn wind_direction(&self, theta_deg: f64, h: usize, row: usize, col: usize) -> f64 {
        let u = hash01(self.cfg.seed ^ 0x2545_f491_4f6c_dd1d, &[2, h as u64, row as u64, col as u64]);
        (theta_deg + 4.0 * (u - 0.5)).rem_euclid(360.0)
    }
}

fn direction_deg(cfg: &SynthConfig, h: usize) -> f64 {
    match cfg.wind {
        WindMode::Fixed(deg) => deg.rem_euclid(360.0),
        WindMode::Wander { base, amplitude, period_hours } => {
            let t = h as f64 / period_hours.max(1.0);
            let n = value_noise(cfg.seed ^ 0xd1b5_4a32_d192_ed03, t, 0.25);
            (base + amplitude * (2.0 * n - 1.0)).rem_euclid(360.0)
        }
    }
}

fn snap_unit(v: f64) -> f64 {
    if v.abs() < 1e-9 {
        0.0
    } else if (v - 1.0).abs() < 1e-9 {
        1.0
    } else if (v + 1.0).abs() < 1e-9 {
        -1.0
    } else {
        v
    }
}

/// Smooth value noise in [0, 1): hashed lattice values blended with a
/// smoothstep, so it is continuous and deterministic in (seed, x, y).
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as i64, y0 as i64);
    let corner = |dx: i64, dy: i64| {
        hash01(seed, &[(ix + dx) as u64, (iy + dy) as u64])
    };
    let ux = smoothstep(fx);
    let uy = smoothstep(fy);
    let top = lerp(corner(0, 0), corner(1, 0), ux);
    let bottom = lerp(corner(0, 1), corner(1, 1), ux);
    lerp(top, bottom, uy)
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) from a key sequence.
fn hash01(seed: u64, keys: &[u64]) -> f64 {
    let mut state = splitmix64(seed);
    for &k in keys {
        state = splitmix64(state ^ k);
    }
    (state >> 11) as f64 / (1u64 << 53) as f64
}
