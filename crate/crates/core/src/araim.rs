//! Decision thresholds, vertical protection levels, detection, and
//! availability statistics for the solution-separation monitor.
//!
//! Threshold and protection-level forms:
//!
//! ```text
//! D_Vn   = sqrt(dPn[D,D]) * Qinv(pfa_sample / (2N)) + DB_Vn
//! a_Vn   = sqrt(Pn_int[D,D]) * Qinv(p_md) + AB_Vn
//! VPL_n  = D_Vn + a_Vn,       VPL = max_n VPL_n
//! ```
//!
//! with the bias projections `DB_Vn = sum_i |(S0-Sn)[D,i]| b_nom_i` and
//! `AB_Vn = sum_i |Sn[D,i]| b_max_i` (worst-case sign alignment). The
//! false-alert budget is split equally over the 2N one-sided tests.

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};
use crate::navsol::{ErrorBudget, SolutionSet, DOWN};
use crate::stats::{q_tail_inv, Probability};

/// How the per-sample false-alert probability is derived from the
/// per-window continuity budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfaMode {
    /// Budget divided by the number of samples per window. Correct for
    /// white noise; conservative for correlated noise.
    White,
    /// Whole budget spent per sample, treating the window as one
    /// independent sample. The common shortcut; optimistic.
    CorrCommon,
    /// White allocation multiplied by the measured correction coefficient.
    Cond,
}

impl PfaMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PfaMode::White => "white",
            PfaMode::CorrCommon => "common",
            PfaMode::Cond => "cond",
        }
    }
}

/// Integrity monitor configuration.
#[derive(Debug, Clone)]
pub struct IntegrityConfig {
    /// Total vertical false-alert budget per window (e.g. 4e-6 per 15 s).
    pub pfa_total_vertical: Probability,
    pub window_seconds: f64,
    pub sample_dt: f64,
    pub p_md: Probability,
    pub pfa_mode: PfaMode,
    /// Correction coefficient, required in [`PfaMode::Cond`].
    pub c_corr: Option<f64>,
    /// Vertical alert limit in meters, for availability statistics.
    pub val: f64,
}

impl IntegrityConfig {
    pub fn new(
        pfa_total_vertical: Probability,
        window_seconds: f64,
        sample_dt: f64,
        p_md: Probability,
        pfa_mode: PfaMode,
        c_corr: Option<f64>,
        val: f64,
    ) -> Result<Self> {
        let pfa = pfa_total_vertical.value();
        if pfa <= 0.0 || pfa >= 1.0 {
            return Err(Error::Config(format!(
                "pfa_total_vertical must be in (0, 1), got {pfa}"
            )));
        }
        if !(window_seconds > 0.0) || !(sample_dt > 0.0) {
            return Err(Error::Config("window and dt must be positive".into()));
        }
        let ratio = window_seconds / sample_dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::Config(format!(
                "window/dt must be a positive integer number of samples, got {ratio}"
            )));
        }
        if let Some(c) = c_corr {
            if !(c >= 1.0) || !c.is_finite() {
                return Err(Error::Config(format!("c_corr must be >= 1, got {c}")));
            }
        }
        if !(val > 0.0) {
            return Err(Error::Config("alert limit must be positive".into()));
        }
        Ok(Self {
            pfa_total_vertical,
            window_seconds,
            sample_dt,
            p_md,
            pfa_mode,
            c_corr,
            val,
        })
    }

    /// Number of samples in one continuity window.
    pub fn samples_per_window(&self) -> u64 {
        (self.window_seconds / self.sample_dt).round() as u64
    }
}

/// Per-exclusion threshold and protection-level terms, all in meters.
#[derive(Debug, Clone)]
pub struct ExclusionIntegrity {
    pub excluded: usize,
    /// Decision threshold.
    pub d_vn: f64,
    /// Nominal-bias contribution inside the threshold.
    pub db_vn: f64,
    /// Missed-detection bound.
    pub a_vn: f64,
    /// Maximum-bias contribution inside the bound.
    pub ab_vn: f64,
    pub vpl_n: f64,
}

/// Integrity output for one epoch.
#[derive(Debug, Clone)]
pub struct IntegrityOutput {
    pub exclusions: Vec<ExclusionIntegrity>,
    /// `max_n VPL_n`.
    pub vpl: f64,
    pub alert: bool,
}

/// Per-sample false-alert probability for the configured mode.
pub fn pfa_per_sample(cfg: &IntegrityConfig) -> Result<Probability> {
    let total = cfg.pfa_total_vertical.value();
    let white = total / cfg.samples_per_window() as f64;
    let p = match cfg.pfa_mode {
        PfaMode::White => white,
        PfaMode::CorrCommon => total,
        PfaMode::Cond => {
            let c = cfg.c_corr.ok_or_else(|| {
                Error::Config("pfa mode 'cond' requires a correction coefficient".into())
            })?;
            (white * c).min(total)
        }
    };
    Probability::new(p)
}

/// Nominal-bias contribution to the threshold:
/// `DB_Vn = sum_i |(S0 - Sn)[D,i]| b_nom_i`.
pub fn nominal_bias_term(s0: &DMatrix<f64>, sn: &DMatrix<f64>, b_nom: &[f64]) -> f64 {
    (0..s0.ncols())
        .map(|i| (s0[(DOWN, i)] - sn[(DOWN, i)]).abs() * b_nom[i])
        .sum()
}

/// Maximum-bias contribution to the protection level:
/// `AB_Vn = sum_i |Sn[D,i]| b_max_i`.
pub fn max_bias_term(sn: &DMatrix<f64>, b_max: &[f64]) -> f64 {
    (0..sn.ncols())
        .map(|i| sn[(DOWN, i)].abs() * b_max[i])
        .sum()
}

/// Vertical decision threshold for one sub-solution.
///
/// The false-alert budget is split equally over the `2N` one-sided tests.
pub fn decision_threshold(
    dpn: &Matrix4<f64>,
    pfa_sample: Probability,
    n_subsolutions: usize,
    db_vn: f64,
) -> Result<f64> {
    let var = dpn[(DOWN, DOWN)];
    if var < 0.0 {
        return Err(Error::Domain(format!(
            "separation variance must be >= 0, got {var}"
        )));
    }
    let allocation = pfa_sample.value() / (2.0 * n_subsolutions as f64);
    if !(allocation > 0.0 && allocation < 0.5) {
        return Err(Error::DegenerateThreshold { allocation });
    }
    let k = q_tail_inv(Probability::new(allocation)?)?.value();
    Ok(var.sqrt() * k + db_vn)
}

/// Missed-detection bound for one sub-solution.
pub fn missed_detection_bound(
    pn_int: &Matrix4<f64>,
    p_md: Probability,
    ab_vn: f64,
) -> Result<f64> {
    let var = pn_int[(DOWN, DOWN)];
    if var < 0.0 {
        return Err(Error::Domain(format!(
            "integrity variance must be >= 0, got {var}"
        )));
    }
    let p = p_md.value();
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::Domain(format!("p_md must be in (0, 0.5), got {p}")));
    }
    let k = q_tail_inv(p_md)?.value();
    Ok(var.sqrt() * k + ab_vn)
}

/// Combines per-exclusion thresholds and bounds into VPLs and the overall
/// protection level `VPL = max_n (D_Vn + a_Vn)`.
pub fn vertical_protection_level(exclusions: &mut [ExclusionIntegrity]) -> f64 {
    let mut vpl = 0.0_f64;
    for e in exclusions.iter_mut() {
        e.vpl_n = e.d_vn + e.a_vn;
        vpl = vpl.max(e.vpl_n);
    }
    vpl
}

/// Raises an alert iff any separation strictly exceeds its threshold.
///
/// A separation exactly on the threshold is not an alert.
pub fn detect(d_v: &[f64], thresholds: &[f64]) -> bool {
    assert_eq!(d_v.len(), thresholds.len(), "separation/threshold length mismatch");
    d_v.iter()
        .zip(thresholds)
        .any(|(d, t)| d.abs() > *t)
}

/// Availability summary over a set of VPL samples.
#[derive(Debug, Clone, Copy)]
pub struct AvailabilitySummary {
    /// Share of samples with `VPL <= val`.
    pub availability_fraction: f64,
    /// Smallest sample value v such that at least 99% of samples are <= v
    /// (empirical quantile, lower interpolation).
    pub vpl_at_99pct: f64,
}

/// Fraction of epochs with `VPL <= val` and the empirical 99% VPL quantile.
pub fn availability_stats(vpl_samples: &[f64], val: f64) -> Result<AvailabilitySummary> {
    if vpl_samples.is_empty() {
        return Err(Error::Empty("availability needs at least one VPL sample".into()));
    }
    let n = vpl_samples.len();
    let below = vpl_samples.iter().filter(|v| **v <= val).count();
    let mut sorted = vpl_samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite VPLs"));
    // smallest k with k >= 0.99 n, in exact integer arithmetic
    let k = (99 * n).div_ceil(100);
    Ok(AvailabilitySummary {
        availability_fraction: below as f64 / n as f64,
        vpl_at_99pct: sorted[k - 1],
    })
}

/// Thresholds, bounds, and the protection level for one epoch's solution
/// set under the given configuration.
pub fn evaluate_epoch(
    sol: &SolutionSet,
    budget: &ErrorBudget,
    cfg: &IntegrityConfig,
) -> Result<IntegrityOutput> {
    let pfa_sample = pfa_per_sample(cfg)?;
    let n_subs = sol.subs.len();
    let mut exclusions = Vec::with_capacity(n_subs);
    for (sub, dpn) in sol.subs.iter().zip(&sol.dpn) {
        let db_vn = nominal_bias_term(&sol.s0, &sub.sn, &budget.b_nom);
        let ab_vn = max_bias_term(&sub.sn, &budget.b_max);
        let d_vn = decision_threshold(dpn, pfa_sample, n_subs, db_vn)?;
        let a_vn = missed_detection_bound(&sub.pn_int, cfg.p_md, ab_vn)?;
        exclusions.push(ExclusionIntegrity {
            excluded: sub.excluded,
            d_vn,
            db_vn,
            a_vn,
            ab_vn,
            vpl_n: 0.0,
        });
    }
    let vpl = vertical_protection_level(&mut exclusions);
    Ok(IntegrityOutput {
        exclusions,
        vpl,
        alert: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    fn cfg(mode: PfaMode, c_corr: Option<f64>) -> IntegrityConfig {
        IntegrityConfig::new(prob(4e-6), 15.0, 1.0, prob(1e-3), mode, c_corr, 35.0).unwrap()
    }

    #[test]
    fn pfa_per_sample_three_modes() {
        let white = pfa_per_sample(&cfg(PfaMode::White, None)).unwrap().value();
        assert!((white - 4e-6 / 15.0).abs() < 1e-18);
        let common = pfa_per_sample(&cfg(PfaMode::CorrCommon, None)).unwrap().value();
        assert_eq!(common, 4e-6);
        let cond = pfa_per_sample(&cfg(PfaMode::Cond, Some(5.0))).unwrap().value();
        assert!((cond - 5.0 * 4e-6 / 15.0).abs() < 1e-18);
    }

    #[test]
    fn pfa_cond_requires_and_clamps_c_corr() {
        assert!(matches!(
            pfa_per_sample(&cfg(PfaMode::Cond, None)),
            Err(Error::Config(_))
        ));
        // an absurd coefficient cannot exceed the whole-window budget
        let clamped = pfa_per_sample(&cfg(PfaMode::Cond, Some(1e6))).unwrap().value();
        assert_eq!(clamped, 4e-6);
    }

    #[test]
    fn bias_terms_zero_cases() {
        let s0 = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -0.5, 0.25, -1.0, 1.0, 1.0]);
        assert_eq!(nominal_bias_term(&s0, &s0, &[0.7, 0.9]), 0.0);
        assert_eq!(nominal_bias_term(&s0, &(2.0 * &s0), &[0.0, 0.0]), 0.0);
        // AB from the Down row: |0.25|*2 + |-1.0|*0.5
        assert!((max_bias_term(&s0, &[2.0, 0.5]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_reduces_to_bias_and_scales() {
        let zero = Matrix4::zeros();
        let d = decision_threshold(&zero, prob(0.1), 1, 0.75).unwrap();
        assert_eq!(d, 0.75);

        // dPn(3,3)=1, N=1, pfa/2 = 0.05 => Qinv(0.05)
        let mut m = Matrix4::zeros();
        m[(DOWN, DOWN)] = 1.0;
        let d = decision_threshold(&m, prob(0.1), 1, 0.0).unwrap();
        assert!((d - 1.6448536269514722).abs() < 1e-9);

        // smaller pfa => strictly larger threshold
        let d_small = decision_threshold(&m, prob(2.67e-7), 1, 0.0).unwrap();
        let d_large = decision_threshold(&m, prob(4e-6), 1, 0.0).unwrap();
        assert!(d_small > d_large);
    }

    #[test]
    fn threshold_degenerate_allocation() {
        let m = Matrix4::identity();
        assert!(matches!(
            decision_threshold(&m, prob(1.0), 1, 0.0),
            Err(Error::DegenerateThreshold { .. })
        ));
    }

    #[test]
    fn md_bound_cases() {
        let zero = Matrix4::zeros();
        assert_eq!(missed_detection_bound(&zero, prob(0.05), 0.0).unwrap(), 0.0);
        let mut m = Matrix4::zeros();
        m[(DOWN, DOWN)] = 4.0;
        let a = missed_detection_bound(&m, prob(0.05), 0.0).unwrap();
        assert!((a - 2.0 * 1.6448536269514722).abs() < 1e-9);
        // doubling sigmas quadruples the variance, doubling the sqrt term
        m[(DOWN, DOWN)] = 16.0;
        let a2 = missed_detection_bound(&m, prob(0.05), 0.0).unwrap();
        assert!((a2 - 2.0 * a).abs() < 1e-9);
    }

    #[test]
    fn vpl_is_sum_and_max() {
        let mut e = vec![
            ExclusionIntegrity { excluded: 0, d_vn: 3.0, db_vn: 0.0, a_vn: 5.0, ab_vn: 0.0, vpl_n: 0.0 },
            ExclusionIntegrity { excluded: 1, d_vn: 1.0, db_vn: 0.0, a_vn: 2.0, ab_vn: 0.0, vpl_n: 0.0 },
        ];
        let vpl = vertical_protection_level(&mut e);
        assert_eq!(e[0].vpl_n, 8.0);
        assert_eq!(vpl, 8.0);
        assert!(e.iter().all(|x| vpl >= x.vpl_n));
    }

    #[test]
    fn detect_strict_inequality() {
        assert!(!detect(&[0.0, 0.0], &[1.0, 1.0]));
        assert!(!detect(&[1.0], &[1.0])); // boundary is not an alert
        assert!(detect(&[1.01], &[1.0]));
        // symmetric under negation
        assert!(detect(&[-1.01], &[1.0]));
    }

    #[test]
    fn availability_quantiles() {
        let samples: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        let s = availability_stats(&samples, 1000.0).unwrap();
        assert_eq!(s.availability_fraction, 1.0);
        assert_eq!(s.vpl_at_99pct, 99.0);

        let s = availability_stats(&samples, 50.0).unwrap();
        assert_eq!(s.availability_fraction, 0.5);

        // quantile property: fraction at the 99% quantile is >= 0.99
        let frac = samples.iter().filter(|v| **v <= s.vpl_at_99pct).count() as f64 / 100.0;
        assert!(frac >= 0.99);

        assert!(availability_stats(&[], 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(IntegrityConfig::new(prob(4e-6), 15.0, 2.0, prob(1e-3), PfaMode::White, None, 35.0).is_err());
        assert!(IntegrityConfig::new(prob(4e-6), 15.0, 1.0, prob(1e-3), PfaMode::Cond, Some(0.5), 35.0).is_err());
        assert!(IntegrityConfig::new(prob(4e-6), 15.0, 1.0, prob(1e-3), PfaMode::Cond, Some(5.0), 35.0).is_ok());
    }
}
