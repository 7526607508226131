//! Seeded generators for the simulation models and the European Jobs loader.

use std::f64::consts::{FRAC_PI_4, TAU};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CubtError, Result};

/// Simulation models.
///
/// * `M1`: four spherical Gaussians in 2-D at (-1,0), (1,0), (0,-1), (0,1).
/// * `M2`: ten spherical Gaussians in 5-D at e_1..e_5 then -e_1..-e_5.
/// * `M3`: two concentric rings, radii in [50, 80] and [200, 230].
/// * `M4`: three spherical Gaussians in 50-D at 0.1·1, 0 and -0.1·1.
/// * `CartCmp`: three axis-aligned bivariate normals rotated by π/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Model {
    M1,
    M2,
    M3,
    M4,
    #[serde(rename = "CARTCMP")]
    CartCmp,
}

impl Model {
    pub const ALL: [Model; 5] = [Model::M1, Model::M2, Model::M3, Model::M4, Model::CartCmp];

    pub fn n_groups(self) -> usize {
        match self {
            Model::M1 => 4,
            Model::M2 => 10,
            Model::M3 => 2,
            Model::M4 | Model::CartCmp => 3,
        }
    }

    pub fn default_per_group(self) -> usize {
        match self {
            Model::M1 | Model::CartCmp => 100,
            Model::M2 => 30,
            Model::M3 => 150,
            Model::M4 => 25,
        }
    }

    /// Whether the model is parameterized by a noise level.
    pub fn uses_sigma(self) -> bool {
        matches!(self, Model::M1 | Model::M2 | Model::M4)
    }

    /// Noise levels of the published simulation tables.
    pub fn sigma_grid(self) -> &'static [f64] {
        match self {
            Model::M1 => &[0.11, 0.13, 0.15, 0.17, 0.19],
            Model::M2 => &[0.7, 0.75, 0.8, 0.85, 0.9],
            Model::M4 => &[0.03, 0.05],
            Model::M3 | Model::CartCmp => &[],
        }
    }

    /// Quantile of the pruned tree's dissimilarities used as the joining
    /// threshold when the number of groups is unknown.
    pub fn eta_quantile(self) -> f64 {
        match self {
            Model::M1 => 0.2,
            Model::M2 => 0.08,
            Model::M3 => 0.25,
            Model::M4 => 0.15,
            Model::CartCmp => 0.2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::M1 => "M1",
            Model::M2 => "M2",
            Model::M3 => "M3",
            Model::M4 => "M4",
            Model::CartCmp => "CARTCMP",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = CubtError;

    fn from_str(s: &str) -> Result<Model> {
        Model::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CubtError::UnknownModel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    /// Required by the Gaussian models, ignored otherwise.
    pub sigma: Option<f64>,
    pub per_group: usize,
    pub seed: u64,
}

impl ModelSpec {
    /// Spec with the model's published group size.
    pub fn new(model: Model, sigma: Option<f64>, seed: u64) -> ModelSpec {
        ModelSpec {
            model,
            sigma,
            per_group: model.default_per_group(),
            seed,
        }
    }
}

fn gaussian_groups(
    rng: &mut ChaCha8Rng,
    centers: &[Vec<f64>],
    sigma: f64,
    per_group: usize,
) -> Result<Dataset> {
    let p = centers[0].len();
    let mut values = Vec::with_capacity(centers.len() * per_group * p);
    let mut labels = Vec::with_capacity(centers.len() * per_group);
    for (g, center) in centers.iter().enumerate() {
        for _ in 0..per_group {
            for &c in center {
                let z: f64 = rng.sample(StandardNormal);
                values.push(c + sigma * z);
            }
            labels.push(g + 1);
        }
    }
    Dataset::from_flat(labels.len(), p, values)?.with_labels(labels)
}

/// Labeled sample of a simulation model, groups in order `1..R`.
pub fn generate(spec: &ModelSpec) -> Result<Dataset> {
    if spec.per_group == 0 {
        return Err(CubtError::InvalidParams("per-group count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = || match spec.sigma {
        Some(s) if s > 0.0 && s.is_finite() => Ok(s),
        Some(s) => Err(CubtError::BadSigma(s)),
        None => Err(CubtError::InvalidParams(format!(
            "model {} needs a sigma",
            spec.model
        ))),
    };
    match spec.model {
        Model::M1 => {
            let centers = [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]].map(Vec::from);
            gaussian_groups(&mut rng, &centers, sigma()?, spec.per_group)
        }
        Model::M2 => {
            let centers: Vec<Vec<f64>> = [1.0, -1.0]
                .into_iter()
                .flat_map(|sign| {
                    (0..5).map(move |i| {
                        let mut c = vec![0.0; 5];
                        c[i] = sign;
                        c
                    })
                })
                .collect();
            gaussian_groups(&mut rng, &centers, sigma()?, spec.per_group)
        }
        Model::M4 => {
            let centers = [0.1, 0.0, -0.1].map(|v| vec![v; 50]);
            gaussian_groups(&mut rng, &centers, sigma()?, spec.per_group)
        }
        Model::M3 => {
            let mut values = Vec::new();
            let mut labels = Vec::new();
            for (g, (lo, hi)) in [(50.0, 80.0), (200.0, 230.0)].into_iter().enumerate() {
                for _ in 0..spec.per_group {
                    let angle = rng.random_range(0.0..TAU);
                    let radius = rng.random_range(lo..=hi);
                    values.push(radius * angle.cos());
                    values.push(radius * angle.sin());
                    labels.push(g + 1);
                }
            }
            Dataset::from_flat(labels.len(), 2, values)?.with_labels(labels)
        }
        Model::CartCmp => cart_comparison(&mut rng, spec.per_group),
    }
}

/// The three-group rotated dataset with 100 points per group.
pub fn generate_cart_comparison(seed: u64) -> Result<Dataset> {
    generate(&ModelSpec::new(Model::CartCmp, None, seed))
}

/// Per-group (mean, variance) of each coordinate before rotation.
pub const CART_GROUPS: [[(f64, f64); 2]; 3] = [
    [(0.0, 0.03), (0.0, 0.25)],
    [(2.0, 0.03), (1.0, 0.25)],
    [(1.0, 0.25), (2.5, 0.03)],
];

/// Rotates a point counter-clockwise by `angle` about the origin.
pub fn rotate(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * x - s * y, s * x + c * y)
}

fn cart_comparison(rng: &mut ChaCha8Rng, per_group: usize) -> Result<Dataset> {
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (g, coords) in CART_GROUPS.iter().enumerate() {
        for _ in 0..per_group {
            let [x, y] = coords.map(|(mean, var)| {
                let z: f64 = rng.sample(StandardNormal);
                mean + var.sqrt() * z
            });
            let (rx, ry) = rotate(x, y, FRAC_PI_4);
            values.push(rx);
            values.push(ry);
            labels.push(g + 1);
        }
    }
    Dataset::from_flat(labels.len(), 2, values)?.with_labels(labels)
}

/// Sector columns of the European Jobs table, in file order.
pub const EUROPEAN_JOBS_COLUMNS: [&str; 9] = ["A", "M", "MA", "P", "C", "SI", "F", "S", "T"];

/// The bundled copy of the European Jobs table (26 countries, 1979).
pub const EUROPEAN_JOBS_CSV: &str = include_str!("../data/european_jobs.csv");

/// Loads a country column followed by nine numeric sector columns.
pub fn load_european_jobs(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| CubtError::File {
        path: path.to_path_buf(),
        source,
    })?;
    parse_european_jobs(file)
}

pub fn european_jobs() -> Dataset {
    parse_european_jobs(EUROPEAN_JOBS_CSV.as_bytes()).expect("bundled table parses")
}

pub fn parse_european_jobs<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let numeric = header.len().saturating_sub(1);
    if numeric != EUROPEAN_JOBS_COLUMNS.len() {
        return Err(CubtError::Dimension {
            expected: EUROPEAN_JOBS_COLUMNS.len(),
            found: numeric,
        });
    }
    let mut rows = Vec::new();
    let mut countries = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 2;
        if rec.len() != header.len() {
            return Err(CubtError::Dimension {
                expected: EUROPEAN_JOBS_COLUMNS.len(),
                found: rec.len().saturating_sub(1),
            });
        }
        countries.push(rec[0].to_string());
        let values = (1..rec.len())
            .map(|c| {
                rec[c].parse::<f64>().map_err(|_| CubtError::Parse {
                    row,
                    column: c + 1,
                    message: format!("`{}` in column {} is not a number", &rec[c], &header[c]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Dataset::from_rows(&rows)?
        .with_column_names(header.iter().skip(1).map(str::to_string).collect())?
        .with_row_names(countries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m1_shape() {
        let d = generate(&ModelSpec::new(Model::M1, Some(0.11), 1)).unwrap();
        assert_eq!((d.n(), d.p()), (400, 2));
        for g in 1..=4 {
            assert_eq!(d.labels().unwrap().iter().filter(|&&l| l == g).count(), 100);
        }
    }

    #[test]
    fn shapes_of_other_models() {
        let m2 = generate(&ModelSpec::new(Model::M2, Some(0.7), 1)).unwrap();
        assert_eq!((m2.n(), m2.p(), m2.n_groups()), (300, 5, Some(10)));
        let m4 = generate(&ModelSpec::new(Model::M4, Some(0.03), 1)).unwrap();
        assert_eq!((m4.n(), m4.p(), m4.n_groups()), (75, 50, Some(3)));
        let cart = generate_cart_comparison(1).unwrap();
        assert_eq!((cart.n(), cart.p(), cart.n_groups()), (300, 2, Some(3)));
    }

    #[test]
    fn rings_stay_in_their_annuli() {
        let d = generate(&ModelSpec::new(Model::M3, None, 9)).unwrap();
        assert_eq!(d.n(), 300);
        for (x, &l) in d.rows().zip(d.labels().unwrap()) {
            let r = x[0].hypot(x[1]);
            let (lo, hi) = if l == 1 { (50.0, 80.0) } else { (200.0, 230.0) };
            assert!(r >= lo - 1e-9 && r <= hi + 1e-9, "radius {r} for group {l}");
        }
    }

    #[test]
    fn same_seed_same_sample() {
        for model in Model::ALL {
            let spec = ModelSpec::new(model, Some(0.1), 42);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
        let a = generate(&ModelSpec::new(Model::M1, Some(0.1), 1)).unwrap();
        let b = generate(&ModelSpec::new(Model::M1, Some(0.1), 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn sigma_errors() {
        assert!(matches!(
            generate(&ModelSpec::new(Model::M1, Some(-1.0), 0)),
            Err(CubtError::BadSigma(_))
        ));
        assert!(generate(&ModelSpec::new(Model::M2, None, 0)).is_err());
        assert!(generate(&ModelSpec::new(Model::M3, None, 0)).is_ok());
        assert!(matches!("M7".parse::<Model>(), Err(CubtError::UnknownModel(_))));
        assert_eq!("cartcmp".parse::<Model>().unwrap(), Model::CartCmp);
    }

    #[test]
    fn rotation_is_an_isometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect();
        let rot: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| rotate(x, y, FRAC_PI_4)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..pts.len() {
            for j in 0..i {
                let before = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
                let after = (rot[i].0 - rot[j].0).hypot(rot[i].1 - rot[j].1);
                worst = worst.max((before - after).abs());
            }
        }
        assert!(worst <= 1e-9, "{worst}");
    }

    #[test]
    fn group_means_near_centers() {
        let spec = ModelSpec::new(Model::M1, Some(0.15), 77);
        let d = generate(&spec).unwrap();
        let centers = [[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]];
        for (g, c) in centers.iter().enumerate() {
            let idx: Vec<usize> = (0..d.n()).filter(|&i| d.labels().unwrap()[i] == g + 1).collect();
            let m = crate::grow::mean_of(&d, &idx);
            let dist = (m[0] - c[0]).hypot(m[1] - c[1]);
            assert!(dist <= 4.0 * 0.15 / (idx.len() as f64).sqrt(), "group {g}: {dist}");
        }
    }

    #[test]
    fn bundled_jobs_table() {
        let d = european_jobs();
        assert_eq!((d.n(), d.p()), (26, 9));
        assert_eq!(d.column_names().unwrap(), EUROPEAN_JOBS_COLUMNS);
        assert!(d.labels().is_none());
        assert_eq!(d.row_names().unwrap()[17], "Turkey");
    }

    #[test]
    fn jobs_parse_errors() {
        let bad = EUROPEAN_JOBS_CSV.replacen("3.3", "n/a", 1);
        match parse_european_jobs(bad.as_bytes()).unwrap_err() {
            CubtError::Parse { row, column, message } => {
                assert_eq!((row, column), (2, 2));
                assert!(message.contains("column A"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let narrow = "Country,A,M\nX,1,2\n";
        assert!(matches!(
            parse_european_jobs(narrow.as_bytes()),
            Err(CubtError::Dimension { expected: 9, found: 2 })
        ));
    }
}
