//! Synthetic quadrotor micro-simulator.
//!
//! Planar double-integrator dynamics per axis with a lagged tilt response
//! and the platform's internal velocity damping:
//!
//! ```text
//! tilt' = (cmd - tilt) / tilt_tau
//! v'    = tilt + wind + bias - drag * v
//! p'    = v
//! ```
//!
//! integrated by semi-implicit Euler at the configured rate. The 60 onboard
//! channels are affine functions of the latent state vector
//! `[tilt_x, tilt_y, wind_x, wind_y, vel_x, vel_y, battery, trim]` plus
//! per-channel Gaussian noise. Gust segments add a square-wave wind; network
//! faults duplicate records and inflate the tracker staleness fields.
//!
//! All randomness comes from ChaCha8 streams derived from the config seed
//! (stream 1 physics, 2 sensor noise, 3 network faults), so a config
//! reproduces its trace byte-for-byte on any platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::mat::Mat;
use crate::telemetry::{FlightLog, Regime, TelemetryRecord, Tracking, CHANNELS};

/// Latent states feeding the sensor coupling matrix.
pub const LATENTS: usize = 8;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeMix {
    pub hover: f64,
    pub directional: f64,
    pub gust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindConfig {
    /// Constant wind magnitude, px/s²; direction is drawn per run.
    pub mean: f64,
    /// Square-wave amplitude added during gust segments, px/s².
    pub gust_amplitude: f64,
    /// Square-wave period, seconds.
    pub gust_period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandConfig {
    /// Std of the Ornstein-Uhlenbeck tilt wander, px/s².
    pub wander_std: f64,
    /// Wander correlation time, seconds.
    pub wander_tau: f64,
    /// Constant commanded acceleration during directional segments, px/s².
    pub directional_accel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkFaults {
    pub dup_prob: f64,
    pub stale_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub duration: f64,
    /// Sample rate, Hz.
    pub rate: f64,
    pub regime_mix: RegimeMix,
    pub wind: WindConfig,
    pub commands: CommandConfig,
    /// Internal velocity damping of the platform, 1/s.
    pub drag: f64,
    /// Tilt response time constant, seconds.
    pub tilt_tau: f64,
    /// Magnitude of the trim-induced acceleration bias, px/s².
    pub bias_accel: f64,
    /// 60 x 8 map from latent states to channels.
    pub sensor_coupling: Mat,
    /// Affine channel offsets, length 60.
    pub channel_offsets: Vec<f64>,
    /// Per-channel Gaussian noise std, length 60.
    pub noise_std: Vec<f64>,
    pub network: NetworkFaults,
}

impl SimConfig {
    /// Defaults tuned for a learnable, mildly windy indoor session.
    pub fn new(seed: u64) -> SimConfig {
        let (coupling, offsets, noise) = default_sensors();
        SimConfig {
            seed,
            duration: 60.0,
            rate: 15.0,
            regime_mix: RegimeMix {
                hover: 0.7,
                directional: 0.2,
                gust: 0.1,
            },
            wind: WindConfig {
                mean: 4.0,
                gust_amplitude: 5.0,
                gust_period: 2.0,
            },
            commands: CommandConfig {
                wander_std: 2.0,
                wander_tau: 1.0,
                directional_accel: 6.0,
            },
            drag: 1.5,
            tilt_tau: 0.25,
            bias_accel: 0.7,
            sensor_coupling: coupling,
            channel_offsets: offsets,
            noise_std: noise,
            network: NetworkFaults {
                dup_prob: 0.0,
                stale_prob: 0.0,
            },
        }
    }

    /// Turns off sensor noise and network faults; dynamics unchanged.
    pub fn noise_free(mut self) -> SimConfig {
        self.noise_std = vec![0.0; CHANNELS];
        self.network = NetworkFaults {
            dup_prob: 0.0,
            stale_prob: 0.0,
        };
        self
    }

    /// Calm-air variant: no mean wind, no gusts, hover/directional only.
    pub fn calm(mut self) -> SimConfig {
        self.wind.mean = 0.0;
        self.wind.gust_amplitude = 0.0;
        self.regime_mix = RegimeMix {
            hover: 0.85,
            directional: 0.15,
            gust: 0.0,
        };
        self
    }

    /// Gust-heavy variant for windy capture sessions.
    pub fn windy(mut self) -> SimConfig {
        self.regime_mix = RegimeMix {
            hover: 0.45,
            directional: 0.05,
            gust: 0.5,
        };
        self
    }

    pub fn steps(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }
}

/// Sizes a run to reproduce the reference capture-session composition:
/// 11,934 hover + 1,640 directional + 417 gust = 13,991 records.
pub fn paper_mix_preset() -> SimConfig {
    let mut cfg = SimConfig::new(0);
    let total = 13_991.0;
    cfg.duration = total / cfg.rate;
    cfg.regime_mix = RegimeMix {
        hover: 11_934.0 / total,
        directional: 1_640.0 / total,
        gust: 417.0 / total,
    };
    cfg
}

/// Per-step ground truth the tracker would have observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthState {
    pub time: f64,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub wind: [f64; 2],
}

/// A simulated flight: the telemetry log (after fault injection) plus the
/// latent truth, one entry per integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub log: FlightLog,
    pub truth: Vec<TruthState>,
}

impl SimTrace {
    /// Truth sidecar CSV: `time, px, py, vx, vy, wind_x, wind_y`.
    pub fn write_truth_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,px,py,vx,vy,wind_x,wind_y")?;
        for s in &self.truth {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.time, s.pos[0], s.pos[1], s.vel[0], s.vel[1], s.wind[0], s.wind[1]
            )?;
        }
        Ok(())
    }
}

pub(crate) fn simulate_validate(config: &SimConfig) -> Result<(), SimError> {
    let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
    let mix = config.regime_mix;
    if mix.hover < 0.0 || mix.directional < 0.0 || mix.gust < 0.0 {
        return bad("regime fractions must be non-negative");
    }
    if ((mix.hover + mix.directional + mix.gust) - 1.0).abs() > 1e-9 {
        return bad("regime fractions must sum to 1");
    }
    if !(config.rate > 0.0) || !(config.duration > 0.0) {
        return bad("rate and duration must be positive");
    }
    if config.steps() == 0 {
        return bad("duration times rate rounds to zero steps");
    }
    for p in [config.network.dup_prob, config.network.stale_prob] {
        if !(0.0..=1.0).contains(&p) {
            return bad("fault probabilities must lie in [0, 1]");
        }
    }
    if config.wind.mean < 0.0 || config.wind.gust_amplitude < 0.0 {
        return bad("wind magnitudes must be non-negative");
    }
    if !(config.wind.gust_period > 0.0) {
        return bad("gust period must be positive");
    }
    if config.commands.wander_std < 0.0
        || !(config.commands.wander_tau > 0.0)
        || config.commands.directional_accel < 0.0
    {
        return bad("command parameters out of range");
    }
    if config.drag < 0.0 || !(config.tilt_tau > 0.0) || config.bias_accel < 0.0 {
        return bad("dynamics parameters out of range");
    }
    if config.sensor_coupling.rows() != CHANNELS || config.sensor_coupling.cols() != LATENTS {
        return bad("sensor coupling must be 60 x 8");
    }
    if config.channel_offsets.len() != CHANNELS || config.noise_std.len() != CHANNELS {
        return bad("channel offsets and noise must have 60 entries");
    }
    if !config.sensor_coupling.all_finite()
        || config.channel_offsets.iter().any(|v| !v.is_finite())
        || config.noise_std.iter().any(|v| !v.is_finite() || *v < 0.0)
    {
        return bad("sensor parameters must be finite (noise non-negative)");
    }
    Ok(())
}

fn regime_counts(config: &SimConfig) -> (usize, usize, usize) {
    let n = config.steps();
    let hover = ((config.regime_mix.hover * n as f64).round() as usize).min(n);
    let directional =
        ((config.regime_mix.directional * n as f64).round() as usize).min(n - hover);
    let gust = n - hover - directional;
    (hover, directional, gust)
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn unit_vec(angle: f64) -> [f64; 2] {
    [angle.cos(), angle.sin()]
}

/// One onboard channel vector: affine coupling of the latents plus noise.
pub(crate) fn synth_channels(
    config: &SimConfig,
    latents: &[f64; LATENTS],
    sensor: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut onboard = Vec::with_capacity(CHANNELS);
    for ch in 0..CHANNELS {
        let row = config.sensor_coupling.row(ch);
        let mut v = config.channel_offsets[ch];
        for (c, l) in row.iter().zip(latents.iter()) {
            v += c * l;
        }
        let noise: f64 = StandardNormal.sample(sensor);
        onboard.push(v + config.noise_std[ch] * noise);
    }
    onboard
}

/// Runs the simulator. Deterministic for a fixed config.
pub fn simulate(config: &SimConfig) -> Result<SimTrace, SimError> {
    simulate_validate(config)?;
    let n = config.steps();
    let dt = 1.0 / config.rate;
    let (hover_n, dir_n, _gust_n) = regime_counts(config);

    let mut physics = stream_rng(config.seed, 1);
    let mut sensor = stream_rng(config.seed, 2);
    let mut faults = stream_rng(config.seed, 3);

    // run-level draws, fixed order
    let wind_dir = unit_vec(physics.random::<f64>() * std::f64::consts::TAU);
    let trim: f64 = StandardNormal.sample(&mut physics);
    let bias_dir = unit_vec(physics.random::<f64>() * std::f64::consts::TAU);
    let dir_cmd_dir = unit_vec(physics.random::<f64>() * std::f64::consts::TAU);
    let gust_dir = unit_vec(physics.random::<f64>() * std::f64::consts::TAU);

    let bias = [
        config.bias_accel * trim * bias_dir[0],
        config.bias_accel * trim * bias_dir[1],
    ];
    let gust_start = hover_n + dir_n;

    let mut pos = [0.0f64; 2];
    let mut vel = [0.0f64; 2];
    let mut tilt = [0.0f64; 2];
    let mut wander = [0.0f64; 2];

    let mut records = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);

    for k in 0..n {
        let t = k as f64 * dt;
        let regime = if k < hover_n {
            Regime::Hover
        } else if k < gust_start {
            Regime::DirectionalCommand
        } else {
            Regime::Gust
        };

        // wander is always advanced so the stream layout is regime-independent
        let xi: [f64; 2] = [
            StandardNormal.sample(&mut physics),
            StandardNormal.sample(&mut physics),
        ];
        for a in 0..2 {
            wander[a] += (-wander[a] / config.commands.wander_tau) * dt
                + config.commands.wander_std * dt.sqrt() * xi[a];
        }

        let mut cmd = wander;
        if regime == Regime::DirectionalCommand {
            cmd[0] += config.commands.directional_accel * dir_cmd_dir[0];
            cmd[1] += config.commands.directional_accel * dir_cmd_dir[1];
        }

        let mut wind = [
            config.wind.mean * wind_dir[0],
            config.wind.mean * wind_dir[1],
        ];
        if regime == Regime::Gust {
            let phase = (t - gust_start as f64 * dt) * std::f64::consts::TAU
                / config.wind.gust_period;
            let square = if phase.sin() >= 0.0 { 1.0 } else { -1.0 };
            wind[0] += config.wind.gust_amplitude * square * gust_dir[0];
            wind[1] += config.wind.gust_amplitude * square * gust_dir[1];
        }

        let battery = t / config.duration;
        let latents = [
            tilt[0], tilt[1], wind[0], wind[1], vel[0], vel[1], battery, trim,
        ];
        let onboard = synth_channels(config, &latents, &mut sensor);

        records.push(TelemetryRecord {
            time: t,
            regime,
            tracking: Some(Tracking {
                wii_x: pos[0],
                wii_y: pos[1],
                wii_xd: vel[0],
                wii_yd: vel[1],
                wii_age: 0.5 * dt,
                wii_staleness: 0,
            }),
            onboard,
        });
        truth.push(TruthState {
            time: t,
            pos,
            vel,
            wind,
        });

        // semi-implicit step: tilt, then velocity with the fresh tilt, then position
        for a in 0..2 {
            tilt[a] += (cmd[a] - tilt[a]) * dt / config.tilt_tau;
            let accel = tilt[a] + wind[a] + bias[a] - config.drag * vel[a];
            vel[a] += accel * dt;
            pos[a] += vel[a] * dt;
        }
    }

    // network faults: inflate staleness fields, then maybe re-emit the record
    let mut faulted = Vec::with_capacity(records.len());
    for mut rec in records {
        if config.network.stale_prob > 0.0 && faults.random::<f64>() < config.network.stale_prob {
            let tr = rec.tracking.as_mut().expect("simulator always tracks");
            tr.wii_age = 0.5 + 0.3 * faults.random::<f64>();
            tr.wii_staleness = 3 + (faults.random::<f64>() * 3.0) as u32;
        }
        let dup = config.network.dup_prob > 0.0
            && faults.random::<f64>() < config.network.dup_prob;
        if dup {
            faulted.push(rec.clone());
        }
        faulted.push(rec);
    }

    Ok(SimTrace {
        log: FlightLog { records: faulted },
        truth,
    })
}

/// Deterministic default sensor model: structured couplings for the named
/// channels plus a small dense background so the spectrum is rich, with a
/// noise floor on every channel.
fn default_sensors() -> (Mat, Vec<f64>, Vec<f64>) {
    const T_X: usize = 0; // latent indices
    const T_Y: usize = 1;
    const W_X: usize = 2;
    const W_Y: usize = 3;
    const V_X: usize = 4;
    const V_Y: usize = 5;
    const BAT: usize = 6;
    const TRM: usize = 7;

    let mut coupling = Mat::zeros(CHANNELS, LATENTS);
    let mut offsets = vec![0.0; CHANNELS];
    let mut noise = vec![0.0; CHANNELS];

    let mut set = |ch: usize, pairs: &[(usize, f64)], offset: f64, sigma: f64| {
        for (latent, gain) in pairs {
            coupling.set(ch, *latent, *gain);
        }
        offsets[ch] = offset;
        noise[ch] = sigma;
    };

    set(0, &[(BAT, -3.0)], 820.0, 1.5); // altitude
    set(1, &[(T_Y, 0.9)], 0.0, 0.05); // roll
    set(2, &[(T_X, 0.9)], 0.0, 0.05); // pitch
    set(3, &[(TRM, 0.3)], 0.0, 0.05); // yaw
    set(4, &[(V_X, 8.0)], 0.0, 1.2); // vx
    set(5, &[(V_Y, 8.0)], 0.0, 1.2); // vy
    set(6, &[], 0.0, 0.8); // vz
    set(7, &[(T_X, 1.0), (W_X, 0.85)], 0.0, 0.6); // acc_x
    set(8, &[(T_Y, 1.0), (W_Y, 0.85)], 0.0, 0.6); // acc_y
    set(9, &[(BAT, 0.05)], 9.81, 0.4); // acc_z
    set(10, &[], 3.0, 0.0); // controlState
    set(11, &[(BAT, -900.0)], 11_500.0, 6.0); // vbat
    set(12, &[(TRM, 0.5), (T_Y, 0.1)], 0.0, 0.02); // vphi_trim
    set(13, &[(TRM, 0.5), (T_X, 0.1)], 0.0, 0.02); // vtheta_trim
    set(14, &[], 2.0, 0.0); // vstate
    set(15, &[], 0.0, 0.3); // vmisc
    set(16, &[(T_Y, 0.4), (W_Y, 0.1)], 0.0, 0.05); // vdelta_phi
    set(17, &[(T_X, 0.4), (W_X, 0.1)], 0.0, 0.05); // vdelta_theta
    set(18, &[(TRM, 0.2)], 0.0, 0.05); // vdelta_psi
    set(19, &[(BAT, -260.0)], 3_700.0, 2.0); // vbat_raw
    set(20, &[(T_X, 0.7)], 0.0, 0.04); // ref_theta
    set(21, &[(T_Y, 0.7)], 0.0, 0.04); // ref_phi
    set(22, &[(T_X, 0.3), (TRM, 0.2)], 0.0, 0.04); // ref_theta_I
    set(23, &[(T_Y, 0.3), (TRM, 0.2)], 0.0, 0.04); // ref_phi_I
    set(24, &[(T_X, 0.65)], 0.0, 0.04); // ref_pitch
    set(25, &[(T_Y, 0.65)], 0.0, 0.04); // ref_roll
    set(26, &[(TRM, 0.25)], 0.0, 0.04); // ref_yaw
    set(27, &[(TRM, 0.25)], 0.0, 0.04); // ref_psi
    set(28, &[(T_X, 0.5)], 0.0, 0.05); // rc_ref_pitch
    set(29, &[(T_Y, 0.5)], 0.0, 0.05); // rc_ref_roll
    set(30, &[], 0.0, 0.05); // rc_ref_yaw
    set(31, &[(BAT, 0.2)], 0.5, 0.05); // rc_ref_gaz
    set(32, &[], 1.0, 0.05); // rc_ref_ag
    set(33, &[(T_X, 0.02)], 0.0, 0.003); // euler_theta
    set(34, &[(T_Y, 0.02)], 0.0, 0.003); // euler_phi

    // pwm motor mixing: alternating tilt signs per motor
    let motor_signs = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    for (m, (sx, sy)) in motor_signs.iter().enumerate() {
        set(
            35 + m,
            &[(T_X, 6.0 * sx), (T_Y, 6.0 * sy), (BAT, 25.0), (TRM, 4.0)],
            180.0,
            1.5,
        );
        set(
            39 + m,
            &[(T_X, 2.0 * sx), (T_Y, 2.0 * sy)],
            200.0,
            0.5,
        );
        set(
            50 + m,
            &[(T_X, 1.5 * sx), (T_Y, 1.5 * sy), (BAT, 6.0)],
            45.0,
            0.7,
        );
    }

    set(43, &[(T_X, 5.0), (W_X, 0.5)], 0.0, 0.4); // pwm_u_pitch
    set(44, &[(T_Y, 5.0), (W_Y, 0.5)], 0.0, 0.4); // pwm_u_roll
    set(45, &[(TRM, 2.0)], 0.0, 0.4); // pwm_u_yaw
    set(46, &[(TRM, 1.0)], 0.0, 0.2); // pwm_yaw_u_I
    set(47, &[(T_X, 2.0)], 0.0, 0.2); // pwm_u_pitch_planif
    set(48, &[(T_Y, 2.0)], 0.0, 0.2); // pwm_u_roll_planif
    set(49, &[(TRM, 0.8)], 0.0, 0.2); // pwm_u_yaw_planif
    set(54, &[(TRM, 0.6)], 1.1, 0.05); // gyros_offsetx
    set(55, &[(TRM, 0.5)], -0.7, 0.05); // gyros_offsety
    set(56, &[(TRM, 0.4)], 0.3, 0.05); // gyros_offsetz
    set(57, &[(TRM, 1.0)], 0.0, 0.0); // trim_angular_rates
    set(58, &[(TRM, 0.8)], 0.2, 0.0); // trim_theta
    set(59, &[(TRM, 0.7)], -0.1, 0.0); // trim_phi

    // dense low-amplitude background so no channel is a pure copy of another
    let mut bg = stream_rng(0x5EED_CA11, 7);
    for ch in 0..CHANNELS {
        for l in 0..LATENTS {
            let w: f64 = StandardNormal.sample(&mut bg);
            let v = coupling.get(ch, l) + 0.08 * w;
            coupling.set(ch, l, v);
        }
        let o: f64 = StandardNormal.sample(&mut bg);
        offsets[ch] += 1.5 * o;
        noise[ch] = noise[ch].max(0.15);
    }

    (coupling, offsets, noise)
}
