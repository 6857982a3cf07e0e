//! Dataset schema, CSV ingestion, completeness filtering, z-score
//! normalization and train/test splitting.
//!
//! Geometry columns are stored in the CSV in micrometers and converted to
//! meters on load; everything downstream works in SI units.

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::FeatureMatrix;

/// Exact CSV header of a dataset file.
pub const CSV_HEADER: [&str; 12] = [
    "source_id",
    "process",
    "material",
    "power_w",
    "velocity_m_s",
    "beam_diameter_um",
    "layer_thickness_um",
    "hatch_spacing_um",
    "depth_um",
    "width_um",
    "length_um",
    "defect_class",
];

const UM_PER_M: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Process {
    #[serde(rename = "LPBF")]
    Lpbf,
    #[serde(rename = "EPBF")]
    Epbf,
    #[serde(rename = "LENS")]
    Lens,
    #[serde(rename = "EBAM")]
    Ebam,
}

impl Process {
    /// One-hot category order (alphabetical by token).
    pub const ALL: [Process; 4] = [Process::Ebam, Process::Epbf, Process::Lens, Process::Lpbf];

    pub fn token(self) -> &'static str {
        match self {
            Process::Lpbf => "LPBF",
            Process::Epbf => "EPBF",
            Process::Lens => "LENS",
            Process::Ebam => "EBAM",
        }
    }

    pub fn is_powder_bed(self) -> bool {
        matches!(self, Process::Lpbf | Process::Epbf)
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Process {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "LPBF" => Ok(Process::Lpbf),
            "EPBF" => Ok(Process::Epbf),
            "LENS" => Ok(Process::Lens),
            "EBAM" => Ok(Process::Ebam),
            _ => Err(()),
        }
    }
}

/// Meltpool defect or mode class. The discriminant is the class id used by
/// classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectClass {
    Desirable = 0,
    Keyhole = 1,
    LackOfFusion = 2,
    Balling = 3,
}

impl DefectClass {
    pub const COUNT: usize = 4;
    pub const ALL: [DefectClass; 4] = [
        DefectClass::Desirable,
        DefectClass::Keyhole,
        DefectClass::LackOfFusion,
        DefectClass::Balling,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            DefectClass::Desirable => "desirable",
            DefectClass::Keyhole => "keyhole",
            DefectClass::LackOfFusion => "lack_of_fusion",
            DefectClass::Balling => "balling",
        }
    }
}

impl fmt::Display for DefectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DefectClass {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|c| c.token() == s).ok_or(())
    }
}

/// One experiment. All lengths are in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeltpoolRecord {
    pub source_id: String,
    pub process: Process,
    pub material: String,
    pub power: f64,
    pub velocity: f64,
    pub beam_diameter: Option<f64>,
    pub layer_thickness: Option<f64>,
    pub hatch_spacing: Option<f64>,
    pub depth: Option<f64>,
    pub width: Option<f64>,
    pub length: Option<f64>,
    pub defect_class: Option<DefectClass>,
}

/// Optional fields a feature set may require.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    BeamDiameter,
    LayerThickness,
    HatchSpacing,
    Depth,
    Width,
    Length,
    DefectClass,
}

impl Field {
    pub fn name(self) -> &'static str {
        match self {
            Field::BeamDiameter => "beam_diameter",
            Field::LayerThickness => "layer_thickness",
            Field::HatchSpacing => "hatch_spacing",
            Field::Depth => "depth",
            Field::Width => "width",
            Field::Length => "length",
            Field::DefectClass => "defect_class",
        }
    }
}

impl MeltpoolRecord {
    pub fn has(&self, field: Field) -> bool {
        match field {
            Field::BeamDiameter => self.beam_diameter.is_some(),
            Field::LayerThickness => self.layer_thickness.is_some(),
            Field::HatchSpacing => self.hatch_spacing.is_some(),
            Field::Depth => self.depth.is_some(),
            Field::Width => self.width.is_some(),
            Field::Length => self.length.is_some(),
            Field::DefectClass => self.defect_class.is_some(),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(format!("power must be > 0, got {}", self.power));
        }
        if !(self.velocity > 0.0 && self.velocity.is_finite()) {
            return Err(format!("velocity must be > 0, got {}", self.velocity));
        }
        let optional = [
            ("beam_diameter", self.beam_diameter),
            ("layer_thickness", self.layer_thickness),
            ("hatch_spacing", self.hatch_spacing),
            ("depth", self.depth),
            ("width", self.width),
            ("length", self.length),
        ];
        for (name, v) in optional {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(format!("{name} must be > 0, got {v}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: PathBuf,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<MeltpoolRecord>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(records: Vec<MeltpoolRecord>, path: impl Into<PathBuf>) -> Self {
        let rows = records.len();
        Dataset {
            records,
            provenance: Provenance {
                path: path.into(),
                rows,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Parses CSV text. `origin` is only used for provenance.
    pub fn from_reader<R: Read>(reader: R, origin: impl Into<PathBuf>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut position = [0usize; CSV_HEADER.len()];
        for (slot, column) in position.iter_mut().zip(CSV_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h == column)
                .ok_or_else(|| Error::Schema {
                    column: column.to_string(),
                })?;
        }

        let mut records = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let cell = |k: usize| row.get(position[k]).unwrap_or("");
            records.push(parse_row(line, cell)?);
        }
        Ok(Dataset::new(records, origin))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        let um = |v: Option<f64>| v.map(|v| format_um(v * UM_PER_M)).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.source_id.clone(),
                r.process.token().to_string(),
                r.material.clone(),
                r.power.to_string(),
                r.velocity.to_string(),
                um(r.beam_diameter),
                um(r.layer_thickness),
                um(r.hatch_spacing),
                um(r.depth),
                um(r.width),
                um(r.length),
                r.defect_class.map(|c| c.token().to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

fn format_um(v: f64) -> String {
    // Rounded to a nanometer so that writing the SI value back does not
    // produce long binary-expansion tails.
    let r = (v * 1000.0).round() / 1000.0;
    r.to_string()
}

fn parse_row<'a>(line: u64, cell: impl Fn(usize) -> &'a str) -> Result<MeltpoolRecord> {
    let required = |k: usize| -> Result<f64> {
        let s = cell(k);
        if s.is_empty() {
            return Err(Error::Row {
                line,
                message: format!("`{}` is required", CSV_HEADER[k]),
            });
        }
        s.parse::<f64>().map_err(|_| Error::Row {
            line,
            message: format!("`{}` is not numeric: `{s}`", CSV_HEADER[k]),
        })
    };
    let optional_um = |k: usize| -> Result<Option<f64>> {
        let s = cell(k);
        if s.is_empty() {
            return Ok(None);
        }
        s.parse::<f64>().map(|v| Some(v / UM_PER_M)).map_err(|_| Error::Row {
            line,
            message: format!("`{}` is not numeric: `{s}`", CSV_HEADER[k]),
        })
    };

    let process = cell(1).parse::<Process>().map_err(|_| Error::Enumeration {
        line,
        field: "process",
        token: cell(1).to_string(),
    })?;
    let defect_class = match cell(11) {
        "" => None,
        s => Some(s.parse::<DefectClass>().map_err(|_| Error::Enumeration {
            line,
            field: "defect_class",
            token: s.to_string(),
        })?),
    };
    let material = cell(2);
    if material.is_empty() {
        return Err(Error::Row {
            line,
            message: "`material` is required".into(),
        });
    }

    let record = MeltpoolRecord {
        source_id: cell(0).to_string(),
        process,
        material: material.to_string(),
        power: required(3)?,
        velocity: required(4)?,
        beam_diameter: optional_um(5)?,
        layer_thickness: optional_um(6)?,
        hatch_spacing: optional_um(7)?,
        depth: optional_um(8)?,
        width: optional_um(9)?,
        length: optional_um(10)?,
        defect_class,
    };
    record
        .validate()
        .map_err(|message| Error::Row { line, message })?;
    Ok(record)
}

/// Loads a dataset CSV (see [`CSV_HEADER`]).
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_reader(std::io::BufReader::new(file), path)
}

/// Keeps the records where every `required` field is present, in order.
pub fn filter_complete(ds: &Dataset, required: &[Field]) -> Dataset {
    let records = ds
        .records
        .iter()
        .filter(|r| required.iter().all(|&f| r.has(f)))
        .cloned()
        .collect();
    Dataset {
        records,
        provenance: ds.provenance.clone(),
    }
}

/// Per-column z-score parameters. `sigma` is the population standard
/// deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub columns: Vec<String>,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Always `"population"`; recorded so files are self-describing.
    pub sigma_kind: String,
}

pub fn zscore_fit(matrix: &FeatureMatrix) -> Result<NormalizationStats> {
    let x = &matrix.values;
    if x.rows() == 0 {
        return Err(Error::Shape("cannot fit normalization on zero rows".into()));
    }
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    let mut sigma = vec![0.0; x.cols()];
    for j in 0..x.cols() {
        let m = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
        let var = (0..x.rows()).map(|i| (x.get(i, j) - m).powi(2)).sum::<f64>() / n;
        mean[j] = m;
        sigma[j] = var.sqrt();
    }
    Ok(NormalizationStats {
        columns: matrix.columns.clone(),
        mean,
        sigma,
        sigma_kind: "population".into(),
    })
}

fn check_columns(matrix: &FeatureMatrix, stats: &NormalizationStats) -> Result<()> {
    if matrix.columns != stats.columns {
        return Err(Error::Shape(format!(
            "matrix columns {:?} do not match normalization columns {:?}",
            matrix.columns, stats.columns
        )));
    }
    Ok(())
}

/// Applies `(x - mean) / sigma` per column; zero-sigma columns map to 0.
pub fn zscore_apply(matrix: &FeatureMatrix, stats: &NormalizationStats) -> Result<FeatureMatrix> {
    check_columns(matrix, stats)?;
    let mut out = matrix.clone();
    for i in 0..out.values.rows() {
        stats.normalize_row(out.values.row_mut(i));
    }
    Ok(out)
}

/// Inverse of [`zscore_apply`] (constant columns come back as their mean).
pub fn zscore_invert(matrix: &FeatureMatrix, stats: &NormalizationStats) -> Result<FeatureMatrix> {
    check_columns(matrix, stats)?;
    let mut out = matrix.clone();
    for i in 0..out.values.rows() {
        for (j, v) in out.values.row_mut(i).iter_mut().enumerate() {
            *v = *v * stats.sigma[j] + stats.mean[j];
        }
    }
    Ok(out)
}

impl NormalizationStats {
    pub fn normalize_row(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if self.sigma[j] > 0.0 {
                (*v - self.mean[j]) / self.sigma[j]
            } else {
                0.0
            };
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    Holdout { test_fraction: f64 },
    KFold { k: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub kind: SplitKind,
    pub seed: u64,
}

impl SplitPlan {
    pub fn kfold(k: usize, seed: u64) -> Self {
        SplitPlan {
            kind: SplitKind::KFold { k },
            seed,
        }
    }

    pub fn holdout(test_fraction: f64, seed: u64) -> Self {
        SplitPlan {
            kind: SplitKind::Holdout { test_fraction },
            seed,
        }
    }
}

/// Indices of one train/test partition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with the plan's seed and cuts it into partitions.
///
/// K-fold test folds are contiguous chunks of the shuffled order; the first
/// `n % k` folds receive one extra index. Train indices are sorted.
pub fn make_split(n: usize, plan: &SplitPlan) -> Result<Vec<Partition>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    match plan.kind {
        SplitKind::KFold { k } => {
            if k < 2 {
                return Err(Error::Argument(format!("k-fold needs k >= 2, got {k}")));
            }
            if k > n {
                return Err(Error::Argument(format!(
                    "k-fold with k = {k} exceeds {n} records"
                )));
            }
            order.shuffle(&mut rng);
            let base = n / k;
            let extra = n % k;
            let mut folds = Vec::with_capacity(k);
            let mut start = 0;
            for f in 0..k {
                let size = base + usize::from(f < extra);
                let test = order[start..start + size].to_vec();
                start += size;
                folds.push(test);
            }
            Ok(folds
                .iter()
                .map(|test| {
                    let mut in_test = vec![false; n];
                    test.iter().for_each(|&i| in_test[i] = true);
                    Partition {
                        train: (0..n).filter(|&i| !in_test[i]).collect(),
                        test: test.clone(),
                    }
                })
                .collect())
        }
        SplitKind::Holdout { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::Argument(format!(
                    "test fraction must lie in (0, 1), got {test_fraction}"
                )));
            }
            order.shuffle(&mut rng);
            let n_test = ((n as f64) * test_fraction).round() as usize;
            let n_test = n_test.clamp(usize::from(n > 1), n.saturating_sub(1));
            let mut train = order[n_test..].to_vec();
            train.sort_unstable();
            Ok(vec![Partition {
                train,
                test: order[..n_test].to_vec(),
            }])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::Targets;
    use crate::matrix::Matrix;

    const HEADER: &str = "source_id,process,material,power_w,velocity_m_s,beam_diameter_um,layer_thickness_um,hatch_spacing_um,depth_um,width_um,length_um,defect_class\n";

    fn parse(body: &str) -> Result<Dataset> {
        Dataset::from_reader(format!("{HEADER}{body}").as_bytes(), "<test>")
    }

    fn column_matrix(cols: &[&[f64]]) -> FeatureMatrix {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        FeatureMatrix {
            values: Matrix::from_rows(&rows).unwrap(),
            columns: (0..cols.len()).map(|j| format!("c{j}")).collect(),
            row_index: (0..n).collect(),
            targets: Targets::Regression(vec![0.0; n]),
        }
    }

    #[test]
    fn header_only_is_empty_dataset() {
        let ds = parse("").unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.provenance.rows, 0);
    }

    #[test]
    fn geometry_is_converted_to_meters() {
        let ds = parse("a,LPBF,SS316L,200,1.0,80,,,100,,,\n").unwrap();
        let r = &ds.records[0];
        assert_eq!(r.depth, Some(1.0e-4));
        assert_eq!(r.beam_diameter, Some(80.0e-6));
        assert_eq!(r.width, None);
        assert_eq!(r.defect_class, None);
    }

    #[test]
    fn bad_class_token_names_line() {
        let err = parse(
            "a,LPBF,SS316L,200,1.0,80,,,100,,,desirable\n\
             b,LPBF,SS316L,200,1.0,80,,,100,,,porous\n\
             c,LPBF,SS316L,200,1.0,80,,,100,,,keyhole\n",
        )
        .unwrap_err();
        match err {
            Error::Enumeration { line, field, token } => {
                assert_eq!(line, 3);
                assert_eq!(field, "defect_class");
                assert_eq!(token, "porous");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn bad_process_and_numeric_cells() {
        let err = parse("a,SLM,SS316L,200,1.0,,,,,,,\n").unwrap_err();
        assert!(matches!(err, Error::Enumeration { field: "process", .. }));
        let err = parse("a,LPBF,SS316L,lots,1.0,,,,,,,\n").unwrap_err();
        assert!(matches!(err, Error::Row { line: 2, .. }), "{err}");
        let err = parse("a,LPBF,SS316L,-5,1.0,,,,,,,\n").unwrap_err();
        assert!(matches!(err, Error::Row { .. }));
    }

    #[test]
    fn missing_header_column_is_schema_error() {
        let err = Dataset::from_reader("source_id,process,material\n".as_bytes(), "<t>").unwrap_err();
        match err {
            Error::Schema { column } => assert_eq!(column, "power_w"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn csv_write_then_read_is_identity() {
        let ds = parse(
            "a,LPBF,SS316L,200,1.5,80,30,,100.5,150,,keyhole\n\
             b,LENS,IN718,900,0.01,,,500,,700,1200,\n",
        )
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::from_reader(buf.as_slice(), "<test>").unwrap();
        assert_eq!(back.records, ds.records);
    }

    #[test]
    fn filter_complete_counts() {
        let mut body = String::new();
        for i in 0..10 {
            let hatch = if i % 3 == 0 && i < 9 { "" } else { "100" };
            body.push_str(&format!("s{i},LPBF,SS316L,200,1.0,,,{hatch},100,,,\n"));
        }
        let ds = parse(&body).unwrap();
        assert_eq!(filter_complete(&ds, &[]).records, ds.records);
        assert_eq!(filter_complete(&ds, &[Field::HatchSpacing]).len(), 7);
        assert_eq!(filter_complete(&ds, &[Field::BeamDiameter]).len(), 0);
        // idempotent and monotone
        let once = filter_complete(&ds, &[Field::HatchSpacing]);
        assert_eq!(filter_complete(&once, &[Field::HatchSpacing]), once);
        assert!(filter_complete(&ds, &[Field::HatchSpacing, Field::Width]).len() <= once.len());
    }

    #[test]
    fn zscore_hand_values() {
        let m = column_matrix(&[&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]]);
        let stats = zscore_fit(&m).unwrap();
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert!((stats.sigma[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(stats.sigma[1], 0.0);
        let z = zscore_apply(&m, &stats).unwrap();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (i, e) in expected.iter().enumerate() {
            assert!((z.values.get(i, 0) - e).abs() < 1e-12);
            assert_eq!(z.values.get(i, 1), 0.0);
        }
        let back = zscore_invert(&z, &stats).unwrap();
        for i in 0..3 {
            assert!((back.values.get(i, 0) - m.values.get(i, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_column_mismatch() {
        let a = column_matrix(&[&[1.0, 2.0]]);
        let b = column_matrix(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let stats = zscore_fit(&a).unwrap();
        assert!(matches!(zscore_apply(&b, &stats), Err(Error::Shape(_))));
    }

    #[test]
    fn kfold_examples() {
        let parts = make_split(10, &SplitPlan::kfold(5, 7)).unwrap();
        assert_eq!(parts.len(), 5);
        assert!(parts.iter().all(|p| p.test.len() == 2 && p.train.len() == 8));
        assert_eq!(parts, make_split(10, &SplitPlan::kfold(5, 7)).unwrap());

        let sizes: Vec<usize> = make_split(11, &SplitPlan::kfold(5, 1))
            .unwrap()
            .iter()
            .map(|p| p.test.len())
            .collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);

        assert!(matches!(
            make_split(4, &SplitPlan::kfold(5, 0)),
            Err(Error::Argument(_))
        ));
        assert!(make_split(4, &SplitPlan::kfold(1, 0)).is_err());
    }

    #[test]
    fn holdout_is_disjoint() {
        let parts = make_split(20, &SplitPlan::holdout(0.25, 3)).unwrap();
        assert_eq!(parts[0].test.len(), 5);
        assert_eq!(parts[0].train.len(), 15);
        assert!(parts[0].test.iter().all(|i| !parts[0].train.contains(i)));
        assert!(make_split(20, &SplitPlan::holdout(1.0, 3)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kfold_partitions_index_set(n in 2usize..200, k_raw in 2usize..20, seed in any::<u64>()) {
                let k = k_raw.min(n);
                let parts = make_split(n, &SplitPlan::kfold(k, seed)).unwrap();
                let mut seen = vec![0usize; n];
                for p in &parts {
                    for &i in &p.test { seen[i] += 1; }
                    prop_assert_eq!(p.train.len() + p.test.len(), n);
                }
                prop_assert!(seen.iter().all(|&c| c == 1));
                let max = parts.iter().map(|p| p.test.len()).max().unwrap();
                let min = parts.iter().map(|p| p.test.len()).min().unwrap();
                prop_assert!(max - min <= 1);
            }

            #[test]
            fn zscore_standardizes(col in proptest::collection::vec(-1e3f64..1e3, 2..50)) {
                let m = column_matrix(&[&col]);
                let stats = zscore_fit(&m).unwrap();
                prop_assume!(stats.sigma[0] > 1.0);
                let z = zscore_apply(&m, &stats).unwrap().values.column(0);
                let n = z.len() as f64;
                let mean = z.iter().sum::<f64>() / n;
                let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-12);
                prop_assert!((sd - 1.0).abs() < 1e-12);
            }
        }
    }
}
