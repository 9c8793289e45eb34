//! Conditional false-alert probability under first-order Gauss-Markov noise.
//!
//! When the test statistic is time correlated, the per-sample probability of
//! leaving the decision interval, conditioned on having stayed inside at all
//! earlier samples, decays below its unconditional value. This module
//! provides:
//!
//! * [`GmParams`] — the process model `x_{k+1} = a x_k + w_k` with
//!   `a = exp(-dt/tau)` and steady-state variance `P_x = Q / (1 - a^2)`;
//! * [`conditional_pdf_k1`] / [`pout1_analytic`] — the closed-form density
//!   of `x_1` given `x_0` inside the interval, and the one-step conditional
//!   outlier probability by adaptive quadrature (the analytical oracle);
//! * [`mc_conditional_pout`] — the survivor Monte-Carlo estimator of the
//!   whole conditional series, batched and deterministic;
//! * [`correction_coefficient`] — the ratio that repairs the white-noise
//!   per-sample false-alert probability for time correlation;
//! * [`simulate_false_alerts`] — an end-to-end windowed false-alert rate
//!   simulation against solution-separation thresholds.
//!
//! # Determinism
//!
//! Monte-Carlo work is split into batches. Batch `b` draws from a
//! `ChaCha8` substream derived as `seed_from_u64(seed)` + `set_stream(b)`;
//! within a batch, draws are consumed in a fixed order (initial population,
//! then one draw per survivor per step). Per-step counts are merged across
//! batches as integers, so results are bit-identical for a fixed
//! `(seed, batch_size, m_total)` regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::araim::{decision_threshold, nominal_bias_term, pfa_per_sample, IntegrityConfig};
use crate::error::{Error, Result};
use crate::navsol::{ErrorBudget, GeometryEpoch, SolutionSet};
use crate::stats::{erf_core, q_tail_inv, Probability};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// First-order Gauss-Markov model `x_{k+1} = a x_k + w_k`,
/// `w_k ~ N(0, Q)`, with `a = exp(-dt/tau)`.
#[derive(Debug, Clone, Copy)]
pub struct GmParams {
    tau: f64,
    dt: f64,
    a: f64,
    q_var: f64,
    p_x: f64,
}

impl GmParams {
    /// Builds the model from the time constant, sampling interval, and
    /// driving-noise variance.
    pub fn new(tau: f64, dt: f64, q_var: f64) -> Result<Self> {
        if !(tau > 0.0) || !(dt > 0.0) || !(q_var > 0.0) {
            return Err(Error::Domain(format!(
                "gm params require tau, dt, q_var > 0 (got {tau}, {dt}, {q_var})"
            )));
        }
        let a = (-dt / tau).exp();
        Ok(Self {
            tau,
            dt,
            a,
            q_var,
            p_x: q_var / (1.0 - a * a),
        })
    }

    /// Builds the model directly from the correlation coefficient per step.
    /// `a = 0` is the white-noise limit (time constant zero).
    pub fn from_coefficient(a: f64, dt: f64, q_var: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&a) || !(dt > 0.0) || !(q_var > 0.0) {
            return Err(Error::Domain(format!(
                "coefficient form requires 0 <= a < 1, dt > 0, q_var > 0 (got {a}, {dt}, {q_var})"
            )));
        }
        let tau = if a > 0.0 { -dt / a.ln() } else { 0.0 };
        Ok(Self {
            tau,
            dt,
            a,
            q_var,
            p_x: q_var / (1.0 - a * a),
        })
    }

    /// White noise with the given variance.
    pub fn white(q_var: f64) -> Result<Self> {
        Self::from_coefficient(0.0, 1.0, q_var)
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Driving-noise variance Q.
    pub fn q_var(&self) -> f64 {
        self.q_var
    }

    /// Steady-state variance `P_x = Q / (1 - a^2)`.
    pub fn p_x(&self) -> f64 {
        self.p_x
    }
}

/// Two-sided bound `q` such that a steady-state sample leaves `<-q, q>`
/// with probability `p_out_0`: `q = sqrt(p_x) * Qinv(p_out_0 / 2)`.
pub fn quantile_bound(p_out_0: Probability, p_x: f64) -> Result<f64> {
    let p = p_out_0.value();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "quantile bound requires 0 < p_out_0 < 1, got {p}"
        )));
    }
    if !(p_x > 0.0) {
        return Err(Error::Domain(format!("p_x must be positive, got {p_x}")));
    }
    Ok(p_x.sqrt() * q_tail_inv(Probability::new(p / 2.0)?)?.value())
}

/// Closed-form conditional density of `x_1` given `x_0` inside `<-q, q>`.
///
/// This is the convolution of the truncated, `a`-scaled steady-state
/// Gaussian with the driving noise `N(0, Q)`, solved in terms of two error
/// functions. At `a = 0` conditioning has no effect and the density is
/// exactly `N(0, Q)`.
pub fn conditional_pdf_k1(x1: f64, gm: &GmParams, q: f64, p_out_0: Probability) -> f64 {
    debug_assert!(q > 0.0);
    let a = gm.a;
    let q_var = gm.q_var;
    if a == 0.0 {
        return (-x1 * x1 / (2.0 * q_var)).exp() / (TWO_PI * q_var).sqrt();
    }
    let a2px = a * a * gm.p_x;
    let pa = a2px + q_var; // equals p_x for a steady-state process
    let qy = q * a;
    let c_norm = 1.0 / (1.0 - p_out_0.value());
    let gauss = (-x1 * x1 / (2.0 * pa)).exp() / (TWO_PI * pa).sqrt();
    let den = (2.0 * a2px * q_var * pa).sqrt();
    let bracket =
        erf_core((qy * pa - a2px * x1) / den) + erf_core((qy * pa + a2px * x1) / den);
    0.5 * c_norm * gauss * bracket
}

/// One-step conditional outlier probability
/// `P_OUT,1 = 1 - integral_{-q}^{q} p(x1 | x0 in S_q) dx1`,
/// evaluated as twice the upper-tail integral of the (even) density.
pub fn pout1_analytic(gm: &GmParams, q: f64, p_out_0: Probability) -> Result<Probability> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("bound q must be positive, got {q}")));
    }
    let span = 12.0 * gm.p_x.sqrt().max(gm.q_var.sqrt());
    let f = |x: f64| conditional_pdf_k1(x, gm, q, p_out_0);
    let tail = adaptive_simpson(&f, q, q + span, 1e-13)?;
    Probability::new((2.0 * tail).clamp(0.0, 1.0))
}

/// Integral of the conditional density over `[lo, hi]`, split at the
/// interior kink points `+-q_y` and `+-q` inherited from the truncation.
pub fn integrate_conditional_pdf(
    gm: &GmParams,
    q: f64,
    p_out_0: Probability,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64> {
    let f = |x: f64| conditional_pdf_k1(x, gm, q, p_out_0);
    let qy = q * gm.a;
    let mut cuts = vec![lo];
    for c in [-q, -qy, qy, q] {
        if c > lo && c < hi {
            cuts.push(c);
        }
    }
    cuts.push(hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite cut points"));
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        total += adaptive_simpson(&f, pair[0], pair[1], tol / (cuts.len() - 1) as f64)?;
    }
    Ok(total)
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Quadrature(format!(
            "max refinement depth reached on [{a}, {b}]"
        )));
    }
    Ok(simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Output of the survivor Monte-Carlo estimator.
///
/// Step arrays are indexed by `k - 1` for steps `k = 1..=k_end`:
/// `p_out[k-1] = events[k-1] / survivors-entering-step-k`, and
/// `survivors[k-1]` is the population remaining after step k. By
/// construction `survivors[k] = survivors[k-1] - events[k]`.
#[derive(Debug, Clone)]
pub struct PfaSeries {
    pub p_out_0: f64,
    pub seed: u64,
    pub batch_size: u64,
    pub total_samples: u64,
    /// Samples inside the interval at k = 0.
    pub initial_survivors: u64,
    pub p_out: Vec<f64>,
    /// `moving_avg[k-1] = (1/k) * sum_{i=1..k} p_out[i]`.
    pub moving_avg: Vec<f64>,
    /// `ratio[k-1] = p_out_0 / moving_avg[k-1]` — the correction-coefficient
    /// curve.
    pub ratio: Vec<f64>,
    pub survivors: Vec<u64>,
    pub events: Vec<u64>,
    /// Set when a step saw fewer than 10 exit events.
    pub low_confidence: Vec<bool>,
}

impl PfaSeries {
    pub fn len(&self) -> usize {
        self.p_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_out.is_empty()
    }
}

/// Minimum population for a meaningful estimate.
pub const MC_MIN_SAMPLES: u64 = 1_000_000;

/// Default batch size: bounds peak memory at ~80 MB of state per batch.
pub const MC_DEFAULT_BATCH: u64 = 10_000_000;

/// Survivor Monte-Carlo estimate of the conditional outlier series.
///
/// Draws `m_total` steady-state samples, keeps those inside `<-q, q>`, and
/// repeatedly propagates the surviving population through the process
/// equation, recording per step the fraction that exits. The population is
/// never replenished.
pub fn mc_conditional_pout(
    gm: &GmParams,
    p_out_0: Probability,
    k_end: usize,
    m_total: u64,
    seed: u64,
    batch_size: u64,
) -> Result<PfaSeries> {
    let p0 = p_out_0.value();
    if !(p0 > 0.0 && p0 < 0.5) {
        return Err(Error::Domain(format!(
            "mc estimator requires 0 < p_out_0 < 0.5, got {p0}"
        )));
    }
    if k_end == 0 {
        return Err(Error::Config("k_end must be >= 1".into()));
    }
    if m_total < MC_MIN_SAMPLES {
        return Err(Error::Config(format!(
            "m_total must be >= {MC_MIN_SAMPLES}, got {m_total}"
        )));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let q = quantile_bound(p_out_0, gm.p_x)?;
    let n_batches = m_total.div_ceil(batch_size);

    let (initial, events) = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let len = batch_size.min(m_total - b * batch_size);
            run_batch(gm, q, len as usize, seed, b, k_end)
        })
        .reduce(
            || (0u64, vec![0u64; k_end]),
            |(i1, e1), (i2, e2)| {
                let merged = e1.iter().zip(&e2).map(|(a, b)| a + b).collect();
                (i1 + i2, merged)
            },
        );

    let mut p_out = Vec::with_capacity(k_end);
    let mut survivors = Vec::with_capacity(k_end);
    let mut remaining = initial;
    for (k, &ev) in events.iter().enumerate() {
        if remaining == 0 {
            return Err(Error::Depletion { step: k + 1 });
        }
        p_out.push(ev as f64 / remaining as f64);
        remaining -= ev;
        survivors.push(remaining);
    }

    let mut moving_avg = Vec::with_capacity(k_end);
    let mut ratio = Vec::with_capacity(k_end);
    let mut acc = 0.0;
    for (k, &p) in p_out.iter().enumerate() {
        acc += p;
        let ma = acc / (k + 1) as f64;
        moving_avg.push(ma);
        ratio.push(if ma > 0.0 { p0 / ma } else { f64::INFINITY });
    }
    let low_confidence = events.iter().map(|&e| e < 10).collect();

    Ok(PfaSeries {
        p_out_0: p0,
        seed,
        batch_size,
        total_samples: m_total,
        initial_survivors: initial,
        p_out,
        moving_avg,
        ratio,
        survivors,
        events,
        low_confidence,
    })
}

/// One batch: returns (initial inside count, exit events per step).
fn run_batch(
    gm: &GmParams,
    q: f64,
    len: usize,
    seed: u64,
    batch_index: u64,
    k_end: usize,
) -> (u64, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch_index);
    let init = Normal::new(0.0, gm.p_x.sqrt()).expect("valid sd");
    let step = Normal::new(0.0, gm.q_var.sqrt()).expect("valid sd");
    let a = gm.a;

    let mut x: Vec<f64> = Vec::with_capacity(len);
    for _ in 0..len {
        let v = init.sample(&mut rng);
        if v.abs() <= q {
            x.push(v);
        }
    }
    let initial = x.len() as u64;

    let mut events = vec![0u64; k_end];
    for ev in events.iter_mut() {
        if x.is_empty() {
            break;
        }
        let before = x.len();
        x.retain_mut(|v| {
            *v = a * *v + step.sample(&mut rng);
            v.abs() <= q
        });
        *ev = (before - x.len()) as u64;
    }
    (initial, events)
}

/// Correction coefficient `c_corr = p_out_0 / moving_avg[k_end]`.
///
/// Multiplying the white-noise per-sample false-alert probability by this
/// ratio restores the intended expected alert count over the operation.
pub fn correction_coefficient(series: &PfaSeries, k_end: usize) -> Result<f64> {
    if k_end == 0 || k_end > series.len() {
        return Err(Error::Config(format!(
            "k_end {k_end} out of range 1..={}",
            series.len()
        )));
    }
    let ma = series.moving_avg[k_end - 1];
    if ma <= 0.0 {
        return Err(Error::Starvation { step: k_end });
    }
    Ok(series.p_out_0 / ma)
}

/// Result of the end-to-end windowed false-alert simulation.
#[derive(Debug, Clone)]
pub struct FalseAlertReport {
    pub n_windows: u64,
    pub alert_windows: u64,
    /// Fraction of windows containing at least one alert.
    pub rate: f64,
    /// 99% binomial confidence half-width of `rate`.
    pub ci99_half_width: f64,
    /// Configured per-window false-alert budget, for comparison.
    pub pfa_budget_per_window: f64,
    pub pfa_sample: f64,
    pub thresholds: Vec<f64>,
}

const WINDOWS_PER_BATCH: u64 = 16_384;

/// Simulates pseudorange noise through the full/sub solution separations
/// and counts windows containing at least one alert.
///
/// Each satellite's pseudorange error is an independent Gauss-Markov
/// process with the correlation coefficient of `gm` (`a = 0` meaning white)
/// scaled so its steady-state sigma equals that satellite's `sigma_cont`.
/// Windows are independent: each starts from a fresh steady-state draw.
pub fn simulate_false_alerts(
    geom: &GeometryEpoch,
    budget: &ErrorBudget,
    gm: &GmParams,
    cfg: &IntegrityConfig,
    n_windows: u64,
    seed: u64,
) -> Result<FalseAlertReport> {
    if n_windows == 0 {
        return Err(Error::Config("n_windows must be >= 1".into()));
    }
    let sols = SolutionSet::build(geom, budget)?;
    let pfa_sample = pfa_per_sample(cfg)?;
    let n_subs = sols.subs.len();
    let mut thresholds = Vec::with_capacity(n_subs);
    for (sub, dpn) in sols.subs.iter().zip(&sols.dpn) {
        let db = nominal_bias_term(&sols.s0, &sub.sn, &budget.b_nom);
        thresholds.push(decision_threshold(dpn, pfa_sample, n_subs, db)?);
    }
    let rows = sols.vertical_separation_rows();
    let k_window = cfg.samples_per_window() as usize;
    let a = gm.a;
    let sd_init: Vec<f64> = budget.sigma_cont.clone();
    let sd_step: Vec<f64> = budget
        .sigma_cont
        .iter()
        .map(|s| s * (1.0 - a * a).sqrt())
        .collect();

    let n_batches = n_windows.div_ceil(WINDOWS_PER_BATCH);
    let alert_windows: u64 = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let count = WINDOWS_PER_BATCH.min(n_windows - b * WINDOWS_PER_BATCH);
            simulate_batch(&rows, &thresholds, &sd_init, &sd_step, a, k_window, count, seed, b)
        })
        .sum();

    let rate = alert_windows as f64 / n_windows as f64;
    let z99 = q_tail_inv(Probability::new(0.005)?)?.value();
    let ci99_half_width = z99 * (rate * (1.0 - rate) / n_windows as f64).sqrt();
    Ok(FalseAlertReport {
        n_windows,
        alert_windows,
        rate,
        ci99_half_width,
        pfa_budget_per_window: cfg.pfa_total_vertical.value(),
        pfa_sample: pfa_sample.value(),
        thresholds,
    })
}

#[allow(clippy::too_many_arguments)]
fn simulate_batch(
    rows: &[Vec<f64>],
    thresholds: &[f64],
    sd_init: &[f64],
    sd_step: &[f64],
    a: f64,
    k_window: usize,
    n_windows: u64,
    seed: u64,
    batch_index: u64,
) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch_index);
    let n_sat = sd_init.len();
    let init: Vec<Normal<f64>> = sd_init
        .iter()
        .map(|s| Normal::new(0.0, *s).expect("valid sd"))
        .collect();
    let step: Vec<Normal<f64>> = sd_step
        .iter()
        .map(|s| Normal::new(0.0, *s).expect("valid sd"))
        .collect();

    let mut x = vec![0.0_f64; n_sat];
    let mut alerts = 0u64;
    for _ in 0..n_windows {
        for (xi, d) in x.iter_mut().zip(&init) {
            *xi = d.sample(&mut rng);
        }
        let mut alert = false;
        'window: for k in 0..k_window {
            if k > 0 {
                for (xi, d) in x.iter_mut().zip(&step) {
                    *xi = a * *xi + d.sample(&mut rng);
                }
            }
            for (row, thr) in rows.iter().zip(thresholds) {
                let d: f64 = row.iter().zip(&x).map(|(r, xi)| r * xi).sum();
                if d.abs() > *thr {
                    alert = true;
                    break 'window;
                }
            }
        }
        alerts += alert as u64;
    }
    alerts
}
