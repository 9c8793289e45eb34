//! Geometry ingestion and synthesis, and elevation-binned error budgets.
//!
//! Two file formats are owned here:
//!
//! * **Geometry table** — comma-separated text, one satellite per row:
//!   `epoch_id, sat_id, elevation_deg, azimuth_deg`. Lines starting with
//!   `#` and blank lines are ignored. Azimuths are normalized into
//!   [0, 360); elevations must lie in [-90, 90].
//! * **Budget config** — a TOML file with the fields of [`BudgetConfig`]:
//!   mask angle, scalar nominal/maximum biases, and two
//!   `[[elevation_deg, sigma_m], ...]` interpolation tables.
//!
//! Commented examples of both live in the repository `fixtures/` directory.

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::navsol::{ErrorBudget, GeometryEpoch};

/// One satellite position on the sky.
#[derive(Debug, Clone, PartialEq)]
pub struct SkyPoint {
    pub sat_id: String,
    pub elevation_deg: f64,
    pub azimuth_deg: f64,
}

impl SkyPoint {
    /// Unit line-of-sight vector (receiver -> satellite) in NED.
    pub fn los_ned(&self) -> Vector3<f64> {
        let el = self.elevation_deg.to_radians();
        let az = self.azimuth_deg.to_radians();
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), -el.sin())
    }
}

/// One epoch parsed from a geometry table, with its measurement geometry.
#[derive(Debug, Clone)]
pub struct LoadedEpoch {
    pub epoch_id: String,
    /// Satellites above the mask angle, in file order.
    pub sky: Vec<SkyPoint>,
    pub geometry: GeometryEpoch,
}

/// Result of loading a geometry table.
#[derive(Debug, Clone)]
pub struct LoadedGeometry {
    pub epochs: Vec<LoadedEpoch>,
    /// Epochs with fewer than 4 satellites above the mask: (epoch_id, count).
    pub unusable: Vec<(String, usize)>,
}

/// Loads a geometry table, dropping satellites below the mask angle.
///
/// Epochs left with fewer than 4 visible satellites are reported in
/// [`LoadedGeometry::unusable`] rather than failing the whole load.
pub fn load_geometry(path: &Path, mask_angle_deg: f64) -> Result<LoadedGeometry> {
    let text = std::fs::read_to_string(path)?;
    load_geometry_str(&text, mask_angle_deg, &path.display().to_string())
}

/// [`load_geometry`] on in-memory text; `source` labels parse errors.
pub fn load_geometry_str(
    text: &str,
    mask_angle_deg: f64,
    source: &str,
) -> Result<LoadedGeometry> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };

    // (epoch_id, all points, count above mask) in first-appearance order
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Vec<SkyPoint>> =
        std::collections::HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(parse_err(
                line_no,
                format!("expected 4 comma-separated fields, got {}", fields.len()),
            ));
        }
        let elevation_deg: f64 = fields[2]
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad elevation '{}': {e}", fields[2])))?;
        let azimuth_raw: f64 = fields[3]
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad azimuth '{}': {e}", fields[3])))?;
        if !(-90.0..=90.0).contains(&elevation_deg) {
            return Err(parse_err(
                line_no,
                format!("elevation {elevation_deg} outside [-90, 90]"),
            ));
        }
        if !azimuth_raw.is_finite() {
            return Err(parse_err(line_no, format!("azimuth {azimuth_raw} not finite")));
        }
        let point = SkyPoint {
            sat_id: fields[1].to_string(),
            elevation_deg,
            azimuth_deg: azimuth_raw.rem_euclid(360.0),
        };
        let epoch_id = fields[0].to_string();
        if !groups.contains_key(&epoch_id) {
            order.push(epoch_id.clone());
        }
        groups.entry(epoch_id).or_default().push(point);
    }

    let mut epochs = Vec::new();
    let mut unusable = Vec::new();
    for epoch_id in order {
        let sky: Vec<SkyPoint> = groups
            .remove(&epoch_id)
            .expect("grouped")
            .into_iter()
            .filter(|p| p.elevation_deg >= mask_angle_deg)
            .collect();
        if sky.len() < 4 {
            unusable.push((epoch_id, sky.len()));
            continue;
        }
        let geometry = GeometryEpoch::new(
            sky.iter().map(|p| p.sat_id.clone()).collect(),
            sky.iter().map(SkyPoint::los_ned).collect(),
        )?;
        epochs.push(LoadedEpoch {
            epoch_id,
            sky,
            geometry,
        });
    }
    Ok(LoadedGeometry { epochs, unusable })
}

/// Writes epochs back out in the geometry table format with 9 decimal
/// places, enough for a parse -> format -> parse round trip to be exact.
pub fn save_geometry(path: &Path, epochs: &[(String, Vec<SkyPoint>)]) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = String::from("# epoch_id, sat_id, elevation_deg, azimuth_deg\n");
    for (epoch_id, sky) in epochs {
        for p in sky {
            writeln!(
                out,
                "{epoch_id}, {}, {:.9}, {:.9}",
                p.sat_id, p.elevation_deg, p.azimuth_deg
            )
            .expect("string write");
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Draws a synthetic constellation: azimuth uniform in [0, 360), elevation
/// above the mask with density proportional to cos(elevation), i.e. uniform
/// over the spherical cap. Deterministic per seed.
pub fn synth_constellation(seed: u64, n_sats: usize, mask_angle_deg: f64) -> Result<GeometryEpoch> {
    if n_sats < 4 {
        return Err(Error::Config(format!("need at least 4 satellites, got {n_sats}")));
    }
    if !(0.0..90.0).contains(&mask_angle_deg) {
        return Err(Error::Config(format!(
            "mask angle {mask_angle_deg} outside [0, 90)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sin_mask = mask_angle_deg.to_radians().sin();
    let mut ids = Vec::with_capacity(n_sats);
    let mut los = Vec::with_capacity(n_sats);
    for i in 0..n_sats {
        let az = rng.random::<f64>() * 360.0;
        let s = sin_mask + rng.random::<f64>() * (1.0 - sin_mask);
        let el = s.asin().to_degrees().clamp(mask_angle_deg, 90.0);
        let p = SkyPoint {
            sat_id: format!("SYN{:02}", i + 1),
            elevation_deg: el,
            azimuth_deg: az,
        };
        los.push(p.los_ned());
        ids.push(p.sat_id);
    }
    GeometryEpoch::new(ids, los)
}

/// Elevation-binned error budget configuration.
///
/// Sigmas are linearly interpolated in elevation between the table knots;
/// the tables must cover `[mask_angle_deg, 90]`.
#[derive(Debug, Clone, Deserialize)]
pub struct BudgetConfig {
    pub mask_angle_deg: f64,
    /// Nominal pseudorange bias, meters, applied to every satellite.
    pub b_nom_m: f64,
    /// Maximum pseudorange bias, meters, applied to every satellite.
    pub b_max_m: f64,
    /// Continuity (non-integrity-assured) sigma table: (elevation_deg, sigma_m).
    pub sigma_cont: Vec<(f64, f64)>,
    /// Integrity-assured sigma table: (elevation_deg, sigma_m).
    pub sigma_int: Vec<(f64, f64)>,
}

impl BudgetConfig {
    pub fn from_toml_str(text: &str, source: &str) -> Result<Self> {
        let cfg: BudgetConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: 0,
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// A GEAS-flavored dual-frequency budget shape: ~0.75 m continuity /
    /// ~1.5 m integrity sigma at zenith, inflated at low elevation. This is
    /// a test fixture, not a standards claim.
    pub fn default_fixture() -> Self {
        Self {
            mask_angle_deg: 5.0,
            b_nom_m: 0.1,
            b_max_m: 0.75,
            sigma_cont: vec![
                (5.0, 2.0),
                (15.0, 1.15),
                (30.0, 0.88),
                (45.0, 0.80),
                (90.0, 0.75),
            ],
            sigma_int: vec![
                (5.0, 4.0),
                (15.0, 2.3),
                (30.0, 1.76),
                (45.0, 1.60),
                (90.0, 1.50),
            ],
        }
    }

    fn validate_table(name: &str, table: &[(f64, f64)], mask: f64) -> Result<()> {
        if table.len() < 2 {
            return Err(Error::Config(format!("{name} table needs >= 2 knots")));
        }
        for w in table.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Config(format!(
                    "{name} table elevations must be strictly ascending"
                )));
            }
        }
        for &(el, sigma) in table {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} sigma at {el} deg must be positive, got {sigma}"
                )));
            }
        }
        let lo = table.first().expect("non-empty").0;
        let hi = table.last().expect("non-empty").0;
        if lo > mask || hi < 90.0 {
            return Err(Error::Config(format!(
                "{name} table covers [{lo}, {hi}] but must cover [{mask}, 90]"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..90.0).contains(&self.mask_angle_deg) {
            return Err(Error::Config(format!(
                "mask angle {} outside [0, 90)",
                self.mask_angle_deg
            )));
        }
        if self.b_nom_m < 0.0 || self.b_max_m < 0.0 {
            return Err(Error::Config("biases must be >= 0".into()));
        }
        Self::validate_table("sigma_cont", &self.sigma_cont, self.mask_angle_deg)?;
        Self::validate_table("sigma_int", &self.sigma_int, self.mask_angle_deg)?;
        // integrity >= continuity must hold at every knot of both tables;
        // both are piecewise linear, so that bounds the whole range
        let mut knots: Vec<f64> = self
            .sigma_cont
            .iter()
            .chain(&self.sigma_int)
            .map(|k| k.0)
            .filter(|el| *el >= self.mask_angle_deg && *el <= 90.0)
            .collect();
        knots.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        for el in knots {
            let c = interp(&self.sigma_cont, el)?;
            let i = interp(&self.sigma_int, el)?;
            if i < c {
                return Err(Error::Config(format!(
                    "sigma_int ({i}) below sigma_cont ({c}) at elevation {el}"
                )));
            }
        }
        Ok(())
    }
}

fn interp(table: &[(f64, f64)], el: f64) -> Result<f64> {
    let lo = table.first().expect("validated").0;
    let hi = table.last().expect("validated").0;
    // tolerate float dust from elevation recovery
    if el < lo - 1e-9 || el > hi + 1e-9 {
        return Err(Error::Config(format!(
            "elevation {el} outside sigma table range [{lo}, {hi}]"
        )));
    }
    let el = el.clamp(lo, hi);
    let seg = table.windows(2).find(|w| el <= w[1].0).expect("covered");
    let (e0, s0) = seg[0];
    let (e1, s1) = seg[1];
    let t = (el - e0) / (e1 - e0);
    Ok(s0 + t * (s1 - s0))
}

/// Instantiates the per-satellite error budget for a geometry by linear
/// interpolation of the sigma tables at each satellite's elevation.
pub fn apply_budget(cfg: &BudgetConfig, geom: &GeometryEpoch) -> Result<ErrorBudget> {
    let n = geom.n_sats();
    let mut sigma_cont = Vec::with_capacity(n);
    let mut sigma_int = Vec::with_capacity(n);
    for el in geom.elevations_deg() {
        sigma_cont.push(interp(&cfg.sigma_cont, el)?);
        sigma_int.push(interp(&cfg.sigma_int, el)?);
    }
    ErrorBudget::new(sigma_cont, sigma_int, vec![cfg.b_nom_m; n], vec![cfg.b_max_m; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn los_formula_cardinal_cases() {
        let zenith = SkyPoint {
            sat_id: "Z".into(),
            elevation_deg: 90.0,
            azimuth_deg: 0.0,
        };
        let u = zenith.los_ned();
        assert!((u - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-15);

        let north = SkyPoint {
            sat_id: "N".into(),
            elevation_deg: 0.0,
            azimuth_deg: 0.0,
        };
        let u = north.los_ned();
        assert!((u - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn parse_groups_and_masks() {
        let text = "\
# comment line
1, G01, 90.0, 0.0
1, G02, 45.0, 0.0
1, G03, 45.0, 90.0
1, G04, 45.0, 180.0
1, G05, 3.0, 270.0
2, G01, 50.0, 10.0
2, G02, 40.0, 100.0
2, G03, 30.0, 200.0
";
        let loaded = load_geometry_str(text, 5.0, "test").unwrap();
        assert_eq!(loaded.epochs.len(), 1);
        assert_eq!(loaded.epochs[0].epoch_id, "1");
        // G05 is below the mask
        assert_eq!(loaded.epochs[0].geometry.n_sats(), 4);
        assert_eq!(loaded.unusable, vec![("2".to_string(), 3)]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "1, G01, 90.0, 0.0\n1, G02, not-a-number, 0.0\n";
        match load_geometry_str(text, 5.0, "test") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error at line 2, got {other:?}"),
        }
        let text = "1, G01, 90.0\n";
        match load_geometry_str(text, 5.0, "test") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("expected field-count error at line 1, got {other:?}"),
        }
        let text = "1, G01, 95.0, 0.0\n";
        assert!(load_geometry_str(text, 5.0, "test").is_err());
    }

    #[test]
    fn synth_is_deterministic_and_masked() {
        let g1 = synth_constellation(99, 100, 5.0).unwrap();
        let g2 = synth_constellation(99, 100, 5.0).unwrap();
        assert_eq!(g1.h0(), g2.h0());
        for el in g1.elevations_deg() {
            assert!(el >= 5.0 - 1e-9, "elevation {el} below mask");
        }
        for u in g1.los_ned() {
            assert!((u.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_azimuth_is_uniform_ks() {
        // KS test at the 1% level on recovered azimuths
        let n = 10_000;
        let geom = synth_constellation(4242, n, 5.0).unwrap();
        let mut u: Vec<f64> = geom
            .los_ned()
            .iter()
            .map(|v| v[1].atan2(v[0]).to_degrees().rem_euclid(360.0) / 360.0)
            .collect();
        u.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mut d: f64 = 0.0;
        for (i, x) in u.iter().enumerate() {
            let lo = i as f64 / n as f64;
            let hi = (i + 1) as f64 / n as f64;
            d = d.max((x - lo).abs()).max((hi - x).abs());
        }
        let critical = 1.628 / (n as f64).sqrt();
        assert!(d < critical, "KS statistic {d} exceeds 1% critical {critical}");
    }

    #[test]
    fn budget_interpolation() {
        let cfg = BudgetConfig {
            mask_angle_deg: 5.0,
            b_nom_m: 0.1,
            b_max_m: 0.75,
            sigma_cont: vec![(5.0, 2.0), (90.0, 0.5)],
            sigma_int: vec![(5.0, 4.0), (90.0, 1.0)],
        };
        cfg.validate().unwrap();
        // midpoint elevation 47.5 between the two-knot table
        assert!((interp(&cfg.sigma_cont, 47.5).unwrap() - 1.25).abs() < 1e-12);
        assert!((interp(&cfg.sigma_cont, 5.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((interp(&cfg.sigma_cont, 90.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(interp(&cfg.sigma_cont, 2.0).is_err());
    }

    #[test]
    fn apply_budget_flat_table() {
        let cfg = BudgetConfig {
            mask_angle_deg: 5.0,
            b_nom_m: 0.0,
            b_max_m: 0.0,
            sigma_cont: vec![(0.0, 1.0), (90.0, 1.0)],
            sigma_int: vec![(0.0, 1.0), (90.0, 1.0)],
        };
        cfg.validate().unwrap();
        let geom = synth_constellation(1, 8, 5.0).unwrap();
        let budget = apply_budget(&cfg, &geom).unwrap();
        assert!(budget.sigma_cont.iter().all(|s| (*s - 1.0).abs() < 1e-12));
        // integrity >= continuity everywhere by construction
        for i in 0..budget.len() {
            assert!(budget.sigma_int[i] >= budget.sigma_cont[i]);
        }
    }

    #[test]
    fn budget_validation_rejects_bad_tables() {
        let mut cfg = BudgetConfig::default_fixture();
        cfg.sigma_int[2].1 = 0.1; // below continuity at that knot
        assert!(cfg.validate().is_err());

        let mut cfg = BudgetConfig::default_fixture();
        cfg.sigma_cont = vec![(10.0, 1.0), (90.0, 1.0)]; // does not cover mask
        assert!(cfg.validate().is_err());

        let cfg = BudgetConfig::default_fixture();
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn budget_toml_round_trip() {
        let text = r#"
mask_angle_deg = 5.0
b_nom_m = 0.1
b_max_m = 0.75
sigma_cont = [[5.0, 2.0], [90.0, 0.75]]
sigma_int = [[5.0, 4.0], [90.0, 1.5]]
"#;
        let cfg = BudgetConfig::from_toml_str(text, "inline").unwrap();
        assert_eq!(cfg.sigma_cont.len(), 2);
        assert_eq!(cfg.b_max_m, 0.75);
        assert!(BudgetConfig::from_toml_str("mask_angle_deg = 5.0", "inline").is_err());
    }
}
