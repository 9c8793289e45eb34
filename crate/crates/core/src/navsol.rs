//! Snapshot weighted-least-squares navigation: full solution, single-exclusion
//! sub-solutions, and the separation covariances between them.
//!
//! Conventions, fixed so fixtures are bit-comparable:
//!
//! * State vector is `[N, E, D, clock]` with the clock bias carried in meters.
//! * Row i of the measurement matrix is `[uN_i, uE_i, uD_i, 1]` where `u_i`
//!   is the unit line-of-sight vector from receiver to satellite in NED, so
//!   the pseudorange error model is `drho_i = u_i . dx_pos + dx_clk + w_i`.
//! * Solution matrices are always built from the continuity weights
//!   `W0 = diag(1/sigma_cont^2)`; the integrity covariance is the projection
//!   `Pn_int = Sn R_int Sn^T` through the same solution matrix.
//!
//! No explicit normal-matrix inverse is formed: solutions come from an SVD
//! of the weighted design matrix, which also provides the conditioning gate.

use nalgebra::{DMatrix, DVector, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};

/// Index of the Down component in the state vector.
pub const DOWN: usize = 2;

/// Condition-number gate above which a geometry is declared singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// One epoch of satellite geometry: line-of-sight set and measurement matrix.
#[derive(Debug, Clone)]
pub struct GeometryEpoch {
    sat_ids: Vec<String>,
    los_ned: Vec<Vector3<f64>>,
    h0: DMatrix<f64>,
}

impl GeometryEpoch {
    /// Builds an epoch from unit line-of-sight vectors (receiver -> satellite,
    /// NED). Requires at least 4 satellites and unit norms within 1e-9.
    /// Column rank of the measurement matrix is checked at solution time.
    pub fn new(sat_ids: Vec<String>, los_ned: Vec<Vector3<f64>>) -> Result<Self> {
        if sat_ids.len() != los_ned.len() {
            return Err(Error::Config(format!(
                "{} satellite ids but {} line-of-sight vectors",
                sat_ids.len(),
                los_ned.len()
            )));
        }
        if los_ned.len() < 4 {
            return Err(Error::Config(format!(
                "need at least 4 satellites, got {}",
                los_ned.len()
            )));
        }
        for (id, u) in sat_ids.iter().zip(&los_ned) {
            if !u.iter().all(|c| c.is_finite()) || (u.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "line of sight for {id} is not a unit vector (norm {})",
                    u.norm()
                )));
            }
        }
        let n = los_ned.len();
        let h0 = DMatrix::from_fn(n, 4, |i, j| if j < 3 { los_ned[i][j] } else { 1.0 });
        Ok(Self {
            sat_ids,
            los_ned,
            h0,
        })
    }

    pub fn n_sats(&self) -> usize {
        self.los_ned.len()
    }

    pub fn sat_ids(&self) -> &[String] {
        &self.sat_ids
    }

    pub fn los_ned(&self) -> &[Vector3<f64>] {
        &self.los_ned
    }

    /// The N x 4 measurement matrix.
    pub fn h0(&self) -> &DMatrix<f64> {
        &self.h0
    }

    /// Elevation of each satellite in degrees, recovered from the LOS.
    pub fn elevations_deg(&self) -> Vec<f64> {
        self.los_ned
            .iter()
            .map(|u| {
                (-u[2])
                    .clamp(-1.0, 1.0)
                    .asin()
                    .to_degrees()
                    .clamp(-90.0, 90.0)
            })
            .collect()
    }
}

/// Per-satellite error budget.
///
/// `sigma_cont` is the non-integrity-assured (continuity) 1-sigma used for
/// weighting and thresholds; `sigma_int` is the integrity-assured 1-sigma
/// used for protection levels; `b_nom`/`b_max` are the nominal and maximum
/// pseudorange bias magnitudes.
#[derive(Debug, Clone)]
pub struct ErrorBudget {
    pub sigma_cont: Vec<f64>,
    pub sigma_int: Vec<f64>,
    pub b_nom: Vec<f64>,
    pub b_max: Vec<f64>,
}

impl ErrorBudget {
    pub fn new(
        sigma_cont: Vec<f64>,
        sigma_int: Vec<f64>,
        b_nom: Vec<f64>,
        b_max: Vec<f64>,
    ) -> Result<Self> {
        let n = sigma_cont.len();
        if sigma_int.len() != n || b_nom.len() != n || b_max.len() != n {
            return Err(Error::Config(
                "error budget vectors must all have the same length".into(),
            ));
        }
        for i in 0..n {
            if !(sigma_cont[i] > 0.0 && sigma_cont[i].is_finite()) {
                return Err(Error::Config(format!(
                    "sigma_cont[{i}] = {} must be positive",
                    sigma_cont[i]
                )));
            }
            if !(sigma_int[i] >= sigma_cont[i] && sigma_int[i].is_finite()) {
                return Err(Error::Config(format!(
                    "sigma_int[{i}] = {} must be >= sigma_cont[{i}] = {}",
                    sigma_int[i], sigma_cont[i]
                )));
            }
            if b_nom[i] < 0.0 || b_max[i] < 0.0 || !b_nom[i].is_finite() || !b_max[i].is_finite() {
                return Err(Error::Config(format!("biases at {i} must be >= 0")));
            }
        }
        Ok(Self {
            sigma_cont,
            sigma_int,
            b_nom,
            b_max,
        })
    }

    pub fn len(&self) -> usize {
        self.sigma_cont.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma_cont.is_empty()
    }
}

/// Full-solution matrices: `S0 = (H0^T W0 H0)^-1 H0^T W0` and
/// `P0 = (H0^T W0 H0)^-1`.
#[derive(Debug, Clone)]
pub struct FullSolution {
    pub s0: DMatrix<f64>,
    pub p0: Matrix4<f64>,
}

/// Sub-solution matrices for one excluded measurement.
#[derive(Debug, Clone)]
pub struct SubSolution {
    pub excluded: usize,
    pub sn: DMatrix<f64>,
    /// `(H0^T En W0 H0)^-1`, continuity weighted.
    pub pn_cont: Matrix4<f64>,
    /// `Sn R_int Sn^T`, integrity projected.
    pub pn_int: Matrix4<f64>,
}

/// Full solution plus every single-exclusion sub-solution and the
/// separation covariances between them.
#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub s0: DMatrix<f64>,
    pub p0: Matrix4<f64>,
    pub subs: Vec<SubSolution>,
    /// `dPn = (S0 - Sn) R0 (S0 - Sn)^T` per exclusion, aligned with `subs`.
    pub dpn: Vec<Matrix4<f64>>,
}

impl SolutionSet {
    /// Builds the full solution and all N single-exclusion sub-solutions.
    pub fn build(geom: &GeometryEpoch, budget: &ErrorBudget) -> Result<Self> {
        let full = full_solution(geom, budget)?;
        let mut subs = Vec::with_capacity(geom.n_sats());
        let mut dpn = Vec::with_capacity(geom.n_sats());
        for n in 0..geom.n_sats() {
            let sub = subsolution_with_s0(geom, budget, n)?;
            dpn.push(separation_covariance(&full.s0, &sub.sn, budget));
            subs.push(sub);
        }
        Ok(Self {
            s0: full.s0,
            p0: full.p0,
            subs,
            dpn,
        })
    }

    /// Row of `S0 - Sn` that maps pseudorange errors to the vertical
    /// separation statistic, one per exclusion.
    pub fn vertical_separation_rows(&self) -> Vec<Vec<f64>> {
        self.subs
            .iter()
            .map(|sub| {
                (0..self.s0.ncols())
                    .map(|i| self.s0[(DOWN, i)] - sub.sn[(DOWN, i)])
                    .collect()
            })
            .collect()
    }
}

/// Position/clock correction from a solution matrix applied to pseudorange
/// errors.
#[derive(Debug, Clone)]
pub struct NavEstimate {
    pub delta_x: Vector4<f64>,
    pub x_hat: Vector4<f64>,
}

fn check_budget(geom: &GeometryEpoch, budget: &ErrorBudget) -> Result<()> {
    if budget.len() != geom.n_sats() {
        return Err(Error::Config(format!(
            "budget covers {} satellites, geometry has {}",
            budget.len(),
            geom.n_sats()
        )));
    }
    Ok(())
}

/// Core WLS solve via SVD of the weighted design matrix.
///
/// Returns `(S, P, cond)` where `S = (H^T W H)^-1 H^T W`, `P = (H^T W H)^-1`
/// and `cond` is the condition number of `sqrt(W) H0`. A zero weight excludes
/// the corresponding measurement and forces the matching column of `S` to
/// exactly zero.
fn weighted_solve(h0: &DMatrix<f64>, weights: &[f64]) -> std::result::Result<(DMatrix<f64>, Matrix4<f64>), f64> {
    let n = h0.nrows();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let mut hw = h0.clone();
    for i in 0..n {
        for j in 0..4 {
            hw[(i, j)] *= sqrt_w[i];
        }
    }
    let svd = hw.svd(true, true);
    let sv = &svd.singular_values;
    let cond = if sv[3] > 0.0 {
        sv[0] / sv[3]
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(cond);
    }
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");

    // vs = V * diag(1/sv); P = vs vs^T; S = vs U^T sqrt(W)
    let mut vs = v_t.transpose();
    for j in 0..4 {
        for i in 0..4 {
            vs[(i, j)] /= sv[j];
        }
    }
    let p_dyn = &vs * vs.transpose();
    let mut s = vs * u.transpose();
    for i in 0..n {
        for r in 0..4 {
            s[(r, i)] *= sqrt_w[i];
        }
    }
    let p = symmetrize4(&Matrix4::from_fn(|r, c| p_dyn[(r, c)]));
    Ok((s, p))
}

fn symmetrize4(m: &Matrix4<f64>) -> Matrix4<f64> {
    0.5 * (m + m.transpose())
}

/// `A diag(d^2) A^T` for a 4 x N matrix and per-column sigmas.
fn sandwich(a: &DMatrix<f64>, sigmas: &[f64]) -> Matrix4<f64> {
    let mut b = a.clone();
    for i in 0..b.ncols() {
        for r in 0..4 {
            b[(r, i)] *= sigmas[i];
        }
    }
    let m = &b * b.transpose();
    symmetrize4(&Matrix4::from_fn(|r, c| m[(r, c)]))
}

/// Full-solution WLS: `S0` and `P0` under continuity weights.
pub fn full_solution(geom: &GeometryEpoch, budget: &ErrorBudget) -> Result<FullSolution> {
    check_budget(geom, budget)?;
    let weights: Vec<f64> = budget.sigma_cont.iter().map(|s| 1.0 / (s * s)).collect();
    let (s0, p0) = weighted_solve(geom.h0(), &weights).map_err(|cond| Error::SingularGeometry {
        cond,
        limit: CONDITION_LIMIT,
    })?;
    Ok(FullSolution { s0, p0 })
}

/// Sub-solution excluding measurement `n`: `Sn`, `Pn_cont`, `Pn_int`.
///
/// Column `n` of `Sn` is exactly zero.
pub fn subsolution(geom: &GeometryEpoch, budget: &ErrorBudget, n: usize) -> Result<SubSolution> {
    subsolution_with_s0(geom, budget, n)
}

fn subsolution_with_s0(
    geom: &GeometryEpoch,
    budget: &ErrorBudget,
    n: usize,
) -> Result<SubSolution> {
    check_budget(geom, budget)?;
    if n >= geom.n_sats() {
        return Err(Error::Config(format!(
            "exclusion index {n} out of range for {} satellites",
            geom.n_sats()
        )));
    }
    let mut weights: Vec<f64> = budget.sigma_cont.iter().map(|s| 1.0 / (s * s)).collect();
    weights[n] = 0.0;
    let (sn, pn_cont) =
        weighted_solve(geom.h0(), &weights).map_err(|cond| Error::SingularSubgeometry {
            index: n,
            cond,
        })?;
    let pn_int = sandwich(&sn, &budget.sigma_int);
    Ok(SubSolution {
        excluded: n,
        sn,
        pn_cont,
        pn_int,
    })
}

/// Separation covariance `dPn = (S0 - Sn) R0 (S0 - Sn)^T` with
/// `R0 = diag(sigma_cont^2)`.
///
/// Computed in square-root form, so the result is symmetric PSD by
/// construction. When `W0 = R0^-1` this equals `Pn_cont - P0`.
pub fn separation_covariance(
    s0: &DMatrix<f64>,
    sn: &DMatrix<f64>,
    budget: &ErrorBudget,
) -> Matrix4<f64> {
    let diff = s0 - sn;
    sandwich(&diff, &budget.sigma_cont)
}

/// Applies a solution matrix to a pseudorange error vector:
/// `delta_x = S drho`, `x_hat = x_init + delta_x`.
pub fn solve_position(
    s: &DMatrix<f64>,
    delta_rho: &DVector<f64>,
    x_init: &Vector4<f64>,
) -> NavEstimate {
    let dx = s * delta_rho;
    let delta_x = Vector4::from_fn(|i, _| dx[i]);
    NavEstimate {
        delta_x,
        x_hat: x_init + delta_x,
    }
}

/// Vertical separation `d_Vn`: Down component of the full-solution estimate
/// minus the sub-solution estimate, in meters.
pub fn vertical_separation(est0: &NavEstimate, estn: &NavEstimate) -> f64 {
    est0.x_hat[DOWN] - estn.x_hat[DOWN]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn los(el_deg: f64, az_deg: f64) -> Vector3<f64> {
        let (el, az) = (el_deg.to_radians(), az_deg.to_radians());
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), -el.sin())
    }

    fn geometry(points: &[(f64, f64)]) -> GeometryEpoch {
        let ids = (0..points.len()).map(|i| format!("S{:02}", i + 1)).collect();
        let vecs = points.iter().map(|&(el, az)| los(el, az)).collect();
        GeometryEpoch::new(ids, vecs).unwrap()
    }

    fn flat_budget(n: usize, sigma: f64) -> ErrorBudget {
        ErrorBudget::new(
            vec![sigma; n],
            vec![2.0 * sigma; n],
            vec![0.0; n],
            vec![0.0; n],
        )
        .unwrap()
    }

    /// 5 well-spread satellites; excluding index 0 (the zenith satellite)
    /// leaves four at a common elevation, which is rank deficient.
    fn ring_geometry() -> GeometryEpoch {
        geometry(&[(90.0, 0.0), (45.0, 0.0), (45.0, 90.0), (45.0, 180.0), (45.0, 270.0)])
    }

    #[test]
    fn four_satellites_invert_exactly() {
        let geom = geometry(&[(90.0, 0.0), (30.0, 0.0), (40.0, 120.0), (50.0, 240.0)]);
        let budget = flat_budget(4, 1.7);
        let full = full_solution(&geom, &budget).unwrap();
        // square system: S0 = H0^-1 regardless of weights
        let ident = &full.s0 * geom.h0();
        for r in 0..4 {
            for c in 0..4 {
                let want = if r == c { 1.0 } else { 0.0 };
                assert!((ident[(r, c)] - want).abs() < 1e-9);
            }
        }
        let h_inv = geom
            .h0()
            .clone()
            .try_inverse()
            .expect("square H0 invertible");
        for r in 0..4 {
            for c in 0..4 {
                assert!((full.s0[(r, c)] - h_inv[(r, c)]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weight_scaling_cancels_in_s0() {
        let geom = geometry(&[(90.0, 0.0), (45.0, 0.0), (45.0, 120.0), (45.0, 240.0), (20.0, 60.0), (10.0, 300.0)]);
        let b1 = flat_budget(6, 1.0);
        let b3 = flat_budget(6, 3.0);
        let f1 = full_solution(&geom, &b1).unwrap();
        let f3 = full_solution(&geom, &b3).unwrap();
        for r in 0..4 {
            for c in 0..6 {
                assert!((f1.s0[(r, c)] - f3.s0[(r, c)]).abs() < 1e-12);
            }
            for c in 0..4 {
                assert!((9.0 * f1.p0[(r, c)] - f3.p0[(r, c)]).abs() < 1e-9 * f3.p0[(r, r)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn excluded_column_is_exactly_zero() {
        let geom = geometry(&[(90.0, 0.0), (45.0, 0.0), (45.0, 120.0), (45.0, 240.0), (20.0, 60.0)]);
        let budget = flat_budget(5, 1.2);
        for n in 0..5 {
            let sub = subsolution(&geom, &budget, n).unwrap();
            for r in 0..4 {
                assert_eq!(sub.sn[(r, n)], 0.0);
            }
        }
    }

    #[test]
    fn exclusion_matches_reduced_problem() {
        let pts = [(90.0, 0.0), (45.0, 0.0), (45.0, 120.0), (45.0, 240.0), (20.0, 60.0)];
        let geom = geometry(&pts);
        let budget = flat_budget(5, 1.0);
        let n = 2;
        let sub = subsolution(&geom, &budget, n).unwrap();

        let reduced: Vec<(f64, f64)> = pts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != n)
            .map(|(_, &p)| p)
            .collect();
        let geom4 = geometry(&reduced);
        let budget4 = flat_budget(4, 1.0);
        let full4 = full_solution(&geom4, &budget4).unwrap();

        // Sn equals the 4-satellite solution matrix zero-padded at column n
        let mut col4 = 0;
        for c in 0..5 {
            if c == n {
                continue;
            }
            for r in 0..4 {
                assert!((sub.sn[(r, c)] - full4.s0[(r, col4)]).abs() < 1e-9);
            }
            col4 += 1;
        }
    }

    #[test]
    fn singular_subgeometry_reports_index() {
        let geom = ring_geometry();
        let budget = flat_budget(5, 1.0);
        // removing the zenith satellite leaves all LOS at elevation 45 deg:
        // the Down column is then proportional to the clock column
        match subsolution(&geom, &budget, 0) {
            Err(Error::SingularSubgeometry { index: 0, .. }) => {}
            other => panic!("expected singular sub-geometry, got {other:?}"),
        }
        // the full geometry itself is fine
        assert!(full_solution(&geom, &budget).is_ok());
    }

    #[test]
    fn separation_covariance_zero_for_identical_solutions() {
        let geom = ring_geometry();
        let budget = flat_budget(5, 1.3);
        let full = full_solution(&geom, &budget).unwrap();
        let dpn = separation_covariance(&full.s0, &full.s0, &budget);
        assert_eq!(dpn, Matrix4::zeros());
    }

    #[test]
    fn solve_position_zero_and_exact_recovery() {
        let geom = geometry(&[(90.0, 0.0), (45.0, 0.0), (45.0, 120.0), (45.0, 240.0), (20.0, 60.0)]);
        let budget = flat_budget(5, 1.0);
        let full = full_solution(&geom, &budget).unwrap();
        let x_init = Vector4::new(1.0, 2.0, 3.0, 4.0);

        let est = solve_position(&full.s0, &DVector::zeros(5), &x_init);
        assert_eq!(est.delta_x, Vector4::zeros());
        assert_eq!(est.x_hat, x_init);

        // noise-free recovery: drho = H0 v => delta_x = v
        let v = Vector4::new(0.5, -1.25, 2.0, -0.75);
        let drho = geom.h0() * v;
        let est = solve_position(&full.s0, &DVector::from_iterator(5, drho.iter().copied()), &x_init);
        for i in 0..4 {
            assert!((est.delta_x[i] - v[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn vertical_separation_is_down_difference() {
        let mk = |d: f64| NavEstimate {
            delta_x: Vector4::zeros(),
            x_hat: Vector4::new(0.0, 0.0, d, 0.0),
        };
        assert_eq!(vertical_separation(&mk(-2.0), &mk(-2.0)), 0.0);
        assert_eq!(vertical_separation(&mk(-2.0), &mk(-3.5)), 1.5);
    }

    #[test]
    fn budget_invariants_enforced() {
        assert!(ErrorBudget::new(vec![1.0], vec![0.5], vec![0.0], vec![0.0]).is_err());
        assert!(ErrorBudget::new(vec![0.0], vec![1.0], vec![0.0], vec![0.0]).is_err());
        assert!(ErrorBudget::new(vec![1.0], vec![1.5], vec![-0.1], vec![0.0]).is_err());
        assert!(ErrorBudget::new(vec![1.0], vec![1.5], vec![0.1], vec![0.5]).is_ok());
    }

    #[test]
    fn geometry_rejects_bad_input() {
        let ids = vec!["A".into(), "B".into(), "C".into()];
        let vecs = vec![los(90.0, 0.0), los(45.0, 0.0), los(45.0, 90.0)];
        assert!(GeometryEpoch::new(ids, vecs).is_err()); // too few
        let ids = vec!["A".into(); 4];
        let mut vecs = vec![los(90.0, 0.0), los(45.0, 0.0), los(45.0, 90.0), los(45.0, 180.0)];
        vecs[1] *= 1.01; // not unit
        assert!(GeometryEpoch::new(ids, vecs).is_err());
    }
}
