//! Typological datasets: languages with coordinates and genealogical labels,
//! categorical features, and a sparse observation matrix.
//!
//! The on-disk format is a pair of CSV files. The data file has the header
//! `id,name,lat,lon,genus,family,<feature columns...>` where each feature
//! cell is an integer code or `?` (an empty cell is also read as missing).
//! The sidecar features file has the header `id,name,category,arity` and
//! lists features in column order.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

pub type Value = u16;

const MISSING_TOKEN: &str = "?";
const FIXED_COLUMNS: [&str; 6] = ["id", "name", "lat", "lon", "genus", "family"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Language {
    pub id: u32,
    pub name: String,
    pub location: GeoPoint,
    pub genus: String,
    pub family: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub id: u32,
    pub name: String,
    pub category: String,
    pub arity: usize,
}

/// Dense row-major N x F matrix of optional categorical values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    n_languages: usize,
    n_features: usize,
    cells: Vec<Option<Value>>,
}

impl ObservationMatrix {
    pub fn new(n_languages: usize, n_features: usize) -> Self {
        Self {
            n_languages,
            n_features,
            cells: vec![None; n_languages * n_features],
        }
    }

    pub fn n_languages(&self) -> usize {
        self.n_languages
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn get(&self, language: usize, feature: usize) -> Option<Value> {
        self.cells[language * self.n_features + feature]
    }

    #[inline]
    pub fn set(&mut self, language: usize, feature: usize, value: Option<Value>) {
        self.cells[language * self.n_features + feature] = value;
    }

    pub fn is_known(&self, language: usize, feature: usize) -> bool {
        self.get(language, feature).is_some()
    }

    pub fn row(&self, language: usize) -> &[Option<Value>] {
        &self.cells[language * self.n_features..(language + 1) * self.n_features]
    }

    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn known_in_row(&self, language: usize) -> usize {
        self.row(language).iter().filter(|c| c.is_some()).count()
    }

    pub fn known_in_column(&self, feature: usize) -> usize {
        (0..self.n_languages)
            .filter(|&n| self.is_known(n, feature))
            .count()
    }

    /// Row-major iterator over `(language, feature, value)` for known cells.
    pub fn known_cells(&self) -> impl Iterator<Item = (usize, usize, Value)> + '_ {
        self.cells.iter().enumerate().filter_map(move |(i, c)| {
            c.map(|v| (i / self.n_features, i % self.n_features, v))
        })
    }

    fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::new(rows.len(), cols.len());
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                out.set(i, j, self.get(r, c));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub languages: Vec<Language>,
    pub features: Vec<FeatureSpec>,
    pub observations: ObservationMatrix,
}

/// A cell removed from training, with its true value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOutCell {
    pub language: usize,
    pub feature: usize,
    pub value: Value,
}

pub type HeldOutSet = Vec<HeldOutCell>;

impl Dataset {
    /// Checks every structural invariant.
    pub fn new(
        languages: Vec<Language>,
        features: Vec<FeatureSpec>,
        observations: ObservationMatrix,
    ) -> Result<Self> {
        let d = Self {
            languages,
            features,
            observations,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n_languages(&self) -> usize {
        self.languages.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn arity(&self, feature: usize) -> usize {
        self.features[feature].arity
    }

    pub fn validate(&self) -> Result<()> {
        let obs = &self.observations;
        if obs.n_languages() != self.languages.len() || obs.n_features() != self.features.len() {
            return Err(Error::Validation(format!(
                "matrix is {}x{} but there are {} languages and {} features",
                obs.n_languages(),
                obs.n_features(),
                self.languages.len(),
                self.features.len()
            )));
        }
        let mut ids = HashSet::new();
        for l in &self.languages {
            if !ids.insert(l.id) {
                return Err(Error::Validation(format!("duplicate language id {}", l.id)));
            }
        }
        let mut fids = HashSet::new();
        for f in &self.features {
            if !fids.insert(f.id) {
                return Err(Error::Validation(format!("duplicate feature id {}", f.id)));
            }
            if f.arity < 2 {
                return Err(Error::Validation(format!(
                    "feature {} has arity {} < 2",
                    f.name, f.arity
                )));
            }
            if f.category.is_empty() {
                return Err(Error::Validation(format!(
                    "feature {} has an empty category",
                    f.name
                )));
            }
        }
        for (n, f, v) in obs.known_cells() {
            if usize::from(v) >= self.features[f].arity {
                return Err(Error::Validation(format!(
                    "value {v} for language {} feature {} exceeds arity {}",
                    self.languages[n].name, self.features[f].name, self.features[f].arity
                )));
            }
        }
        Ok(())
    }

    fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self {
            languages: rows.iter().map(|&r| self.languages[r].clone()).collect(),
            features: cols.iter().map(|&c| self.features[c].clone()).collect(),
            observations: self.observations.select(rows, cols),
        }
    }

    /// Position of the language with file id `id`.
    pub fn language_index(&self, id: u32) -> Option<usize> {
        self.languages.iter().position(|l| l.id == id)
    }
}

/// Reads a dataset from a data CSV and its features sidecar.
pub fn load_dataset(data_path: &Path, features_path: &Path) -> Result<Dataset> {
    let features = load_features(features_path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(data_path)?;
    let header = reader.headers()?.clone();
    for (i, expected) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*expected) {
            return Err(parse_err(
                data_path,
                1,
                format!("expected column {i} to be `{expected}`"),
            ));
        }
    }
    let n_feature_cols = header.len() - FIXED_COLUMNS.len();
    if n_feature_cols != features.len() {
        return Err(parse_err(
            data_path,
            1,
            format!(
                "{} feature columns but the features file lists {}",
                n_feature_cols,
                features.len()
            ),
        ));
    }

    let mut languages = Vec::new();
    let mut rows: Vec<Vec<Option<Value>>> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(parse_err(
                data_path,
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let id: u32 = field(0)
            .parse()
            .map_err(|_| parse_err(data_path, line, format!("bad id `{}`", field(0))))?;
        let lat: f64 = field(2)
            .parse()
            .map_err(|_| parse_err(data_path, line, format!("bad latitude `{}`", field(2))))?;
        let lon: f64 = field(3)
            .parse()
            .map_err(|_| parse_err(data_path, line, format!("bad longitude `{}`", field(3))))?;
        let location = GeoPoint::new(lat, lon)
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        languages.push(Language {
            id,
            name: field(1).to_string(),
            location,
            genus: field(4).to_string(),
            family: field(5).to_string(),
        });
        let mut row = Vec::with_capacity(n_feature_cols);
        for j in 0..n_feature_cols {
            let raw = field(FIXED_COLUMNS.len() + j);
            if raw.is_empty() || raw == MISSING_TOKEN {
                row.push(None);
            } else {
                let v: Value = raw.parse().map_err(|_| {
                    parse_err(
                        data_path,
                        line,
                        format!("bad value `{raw}` in column {}", header.get(6 + j).unwrap_or("")),
                    )
                })?;
                row.push(Some(v));
            }
        }
        rows.push(row);
    }

    let mut obs = ObservationMatrix::new(languages.len(), features.len());
    for (n, row) in rows.into_iter().enumerate() {
        for (f, v) in row.into_iter().enumerate() {
            obs.set(n, f, v);
        }
    }
    Dataset::new(languages, features, obs)
}

fn load_features(path: &Path) -> Result<Vec<FeatureSpec>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.clone();
    let expected = ["id", "name", "category", "arity"];
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(parse_err(path, 1, "expected header `id,name,category,arity`".into()));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = record[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad feature id `{}`", &record[0])))?;
        let arity = record[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad arity `{}`", &record[3])))?;
        out.push(FeatureSpec {
            id,
            name: record[1].trim().to_string(),
            category: record[2].trim().to_string(),
            arity,
        });
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Writes a dataset in the same two-file format `load_dataset` reads.
pub fn write_dataset(d: &Dataset, data_path: &Path, features_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(features_path)?;
    w.write_record(["id", "name", "category", "arity"])?;
    for f in &d.features {
        w.write_record([
            f.id.to_string(),
            f.name.clone(),
            f.category.clone(),
            f.arity.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(data_path)?;
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend((0..d.n_features()).map(|f| format!("f{f}")));
    w.write_record(&header)?;
    for (n, l) in d.languages.iter().enumerate() {
        let mut rec = vec![
            l.id.to_string(),
            l.name.clone(),
            l.location.lat().to_string(),
            l.location.lon().to_string(),
            l.genus.clone(),
            l.family.clone(),
        ];
        rec.extend(d.observations.row(n).iter().map(|c| match c {
            Some(v) => v.to_string(),
            None => MISSING_TOKEN.to_string(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Drops languages with at most `min_known_per_language` known cells, then
/// features known in at most `min_feature_coverage` of the remaining
/// languages. Both comparisons are inclusive. The language/feature pass pair
/// repeats until nothing more is removed, so the result is a fixed point.
pub fn preprocess(
    d: &Dataset,
    min_known_per_language: usize,
    min_feature_coverage: f64,
) -> Result<Dataset> {
    if !(min_feature_coverage >= 0.0) {
        return Err(Error::Argument(format!(
            "feature coverage threshold must be nonnegative, got {min_feature_coverage}"
        )));
    }
    let mut current = d.clone();
    loop {
        let rows: Vec<usize> = (0..current.n_languages())
            .filter(|&n| current.observations.known_in_row(n) > min_known_per_language)
            .collect();
        let after_languages = current.select(&rows, &(0..current.n_features()).collect::<Vec<_>>());
        let n_kept = after_languages.n_languages();
        let cols: Vec<usize> = (0..after_languages.n_features())
            .filter(|&f| {
                let coverage = if n_kept == 0 {
                    0.0
                } else {
                    after_languages.observations.known_in_column(f) as f64 / n_kept as f64
                };
                coverage > min_feature_coverage
            })
            .collect();
        let next = after_languages.select(&(0..n_kept).collect::<Vec<_>>(), &cols);
        if next.n_languages() == 0 || next.n_features() == 0 {
            return Err(Error::EmptyDataset {
                languages: next.n_languages(),
                features: next.n_features(),
            });
        }
        let stable = next.n_languages() == current.n_languages()
            && next.n_features() == current.n_features();
        current = next;
        if stable {
            return Ok(current);
        }
    }
}

/// Hides `floor(fraction * known)` known cells chosen uniformly without
/// replacement. The held-out list is sorted by (language, feature).
pub fn hide_cells(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, HeldOutSet)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Argument(format!(
            "hide fraction must lie in [0, 1), got {fraction}"
        )));
    }
    let known: Vec<(usize, usize, Value)> = d.observations.known_cells().collect();
    let n_hide = (fraction * known.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, known.len(), n_hide).into_vec();
    picked.sort_unstable();
    let mut out = d.clone();
    let held: HeldOutSet = picked
        .into_iter()
        .map(|i| {
            let (language, feature, value) = known[i];
            out.observations.set(language, feature, None);
            HeldOutCell {
                language,
                feature,
                value,
            }
        })
        .collect();
    Ok((out, held))
}

pub fn write_heldout(held: &[HeldOutCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["language", "feature", "value"])?;
    for c in held {
        w.write_record([c.language.to_string(), c.feature.to_string(), c.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_heldout(path: &Path) -> Result<HeldOutSet> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize| -> Result<usize> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err(path, line, format!("bad integer in column {i}")))
        };
        out.push(HeldOutCell {
            language: num(0)?,
            feature: num(1)?,
            value: num(2)? as Value,
        });
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    pub(crate) fn tiny() -> Dataset {
        let langs = (0..3)
            .map(|i| Language {
                id: i,
                name: format!("L{i}"),
                location: GeoPoint::new(10.0 * i as f64, 5.0).unwrap(),
                genus: "G".into(),
                family: "F".into(),
            })
            .collect();
        let feats = (0..2)
            .map(|i| FeatureSpec {
                id: i,
                name: format!("feat{i}"),
                category: "Phonology".into(),
                arity: 2,
            })
            .collect();
        let mut obs = ObservationMatrix::new(3, 2);
        obs.set(0, 0, Some(1));
        obs.set(0, 1, Some(0));
        obs.set(1, 0, Some(0));
        obs.set(2, 0, Some(1));
        obs.set(2, 1, Some(1));
        Dataset::new(langs, feats, obs).unwrap()
    }

    fn write_files(dir: &Path, data: &str, feats: &str) -> (std::path::PathBuf, std::path::PathBuf) {
        let dp = dir.join("data.csv");
        let fp = dir.join("features.csv");
        fs::write(&dp, data).unwrap();
        fs::write(&fp, feats).unwrap();
        (dp, fp)
    }

    const FEATS: &str = "id,name,category,arity\n0,a,Phonology,2\n1,b,Lexicon,3\n";

    #[test]
    fn loads_small_file_with_missing_cell() {
        let dir = tempfile::tempdir().unwrap();
        let (dp, fp) = write_files(
            dir.path(),
            "id,name,lat,lon,genus,family,f0,f1\n\
             0,A,1.5,2.5,g1,fam,1,2\n\
             1,B,-10,170,g1,fam,?,0\n\
             2,C,45,-120,g2,fam,0,1\n",
            FEATS,
        );
        let d = load_dataset(&dp, &fp).unwrap();
        assert_eq!(d.observations.known_count(), 5);
        assert_eq!(d.observations.get(1, 0), None);
        assert_eq!(d.arity(1), 3);
    }

    #[test]
    fn empty_column_is_kept_as_missing() {
        let dir = tempfile::tempdir().unwrap();
        let (dp, fp) = write_files(
            dir.path(),
            "id,name,lat,lon,genus,family,f0,f1\n0,A,1,2,g,f,1,\n1,B,3,4,g,f,0,?\n",
            FEATS,
        );
        let d = load_dataset(&dp, &fp).unwrap();
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.observations.known_in_column(1), 0);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let header = "id,name,lat,lon,genus,family,f0,f1\n";
        let cases = [
            (format!("{header}0,A,1,2,g,f,1,x\n"), "line 2"),
            (format!("{header}0,A,1,2,g,f,1,1\n1,B,1,2,g,f,1\n"), "line 3"),
            (format!("{header}0,A,95,2,g,f,1,1\n"), "latitude"),
            (format!("{header}0,A,1,2,g,f,1,1\n0,B,1,2,g,f,1,1\n"), "duplicate"),
            (format!("{header}0,A,1,2,g,f,2,1\n"), "exceeds arity"),
        ];
        for (body, needle) in cases {
            let (dp, fp) = write_files(dir.path(), &body, FEATS);
            let err = load_dataset(&dp, &fp).unwrap_err().to_string();
            assert!(err.contains(needle), "{err} should mention {needle}");
        }
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = tiny();
        d.languages[1].location = GeoPoint::new(-33.123456789012345, 151.2093).unwrap();
        let (dp, fp) = (dir.path().join("d.csv"), dir.path().join("f.csv"));
        write_dataset(&d, &dp, &fp).unwrap();
        let back = load_dataset(&dp, &fp).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn preprocess_thresholds() {
        let d = tiny();
        assert_eq!(preprocess(&d, 0, 0.0).unwrap(), d);
        // L1 has one known cell; drop it. Feature 1 then has 2/2 coverage.
        let p = preprocess(&d, 1, 0.0).unwrap();
        assert_eq!(p.n_languages(), 2);
        assert_eq!(p.languages[1].name, "L2");
        // Inclusive feature threshold: feature 1 known in 2/3 <= 2/3.
        let p = preprocess(&d, 0, 2.0 / 3.0).unwrap();
        assert_eq!(p.n_features(), 1);
        assert!(matches!(
            preprocess(&d, 5, 0.0),
            Err(Error::EmptyDataset { .. })
        ));
    }

    #[test]
    fn hide_cells_counts_and_determinism() {
        let d = tiny();
        let (same, held) = hide_cells(&d, 0.0, 1).unwrap();
        assert_eq!(same, d);
        assert!(held.is_empty());
        assert!(hide_cells(&d, 1.0, 1).is_err());

        let mut obs = ObservationMatrix::new(20, 5);
        for n in 0..20 {
            for f in 0..5 {
                obs.set(n, f, Some(((n + f) % 2) as Value));
            }
        }
        let big = Dataset {
            languages: (0..20)
                .map(|i| Language {
                    id: i,
                    name: format!("L{i}"),
                    location: GeoPoint::new(0.0, i as f64).unwrap(),
                    genus: "g".into(),
                    family: "f".into(),
                })
                .collect(),
            features: (0..5)
                .map(|i| FeatureSpec {
                    id: i,
                    name: format!("f{i}"),
                    category: "c".into(),
                    arity: 2,
                })
                .collect(),
            observations: obs,
        };
        let (h1, held1) = hide_cells(&big, 0.1, 42).unwrap();
        let (_, held2) = hide_cells(&big, 0.1, 42).unwrap();
        assert_eq!(held1.len(), 10);
        assert_eq!(held1, held2);
        assert_eq!(h1.observations.known_count(), 90);
    }

    fn arb_dataset() -> impl Strategy<Value = Dataset> {
        (1usize..12, 1usize..6).prop_flat_map(|(n, f)| {
            proptest::collection::vec(proptest::option::weighted(0.6, 0u16..2), n * f).prop_map(
                move |cells| {
                    let mut obs = ObservationMatrix::new(n, f);
                    for (i, c) in cells.into_iter().enumerate() {
                        obs.set(i / f, i % f, c);
                    }
                    Dataset {
                        languages: (0..n as u32)
                            .map(|i| Language {
                                id: i,
                                name: format!("L{i}"),
                                location: GeoPoint::new(0.0, 0.0).unwrap(),
                                genus: "g".into(),
                                family: "f".into(),
                            })
                            .collect(),
                        features: (0..f as u32)
                            .map(|i| FeatureSpec {
                                id: i,
                                name: format!("f{i}"),
                                category: "c".into(),
                                arity: 2,
                            })
                            .collect(),
                        observations: obs,
                    }
                },
            )
        })
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(d in arb_dataset(), k in 0usize..3, cov in 0.0f64..0.6) {
            if let Ok(once) = preprocess(&d, k, cov) {
                let twice = preprocess(&once, k, cov).unwrap();
                prop_assert_eq!(once, twice);
            }
        }

        #[test]
        fn hidden_and_remaining_partition_known(d in arb_dataset(), frac in 0.0f64..0.99, seed in any::<u64>()) {
            let (rest, held) = hide_cells(&d, frac, seed).unwrap();
            let before: HashSet<_> = d.observations.known_cells().collect();
            let after: HashSet<_> = rest.observations.known_cells().collect();
            let hidden: HashSet<_> = held.iter().map(|c| (c.language, c.feature, c.value)).collect();
            prop_assert_eq!(hidden.len(), held.len());
            prop_assert!(hidden.is_disjoint(&after));
            let union: HashSet<_> = hidden.union(&after).copied().collect();
            prop_assert_eq!(union, before);
        }
    }
}
