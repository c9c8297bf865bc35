//! Datasets: synthetic generation from a frequency model and file loading.
//!
//! Files hold one value per line. In `int` mode a line is a non-negative
//! decimal integer encoded as an `m`-bit MSB-first string; in `text` mode the
//! line's UTF-8 bytes are packed MSB-first and truncated or zero-padded to
//! `m` bits.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::DistributionSpec;
use crate::bits::{BitValue, MAX_BITS};
use crate::error::{Error, Result};
use crate::metrics::exact_counts;
use crate::rng::{stream, tag};

/// `f_j ∝ (j + drop)^{−s}` for `j = 1..=support`.
pub fn zipf_freqs(s: f64, support: usize, drop: usize) -> Result<Vec<f64>> {
    if !(s.is_finite() && s > 0.0) || support == 0 {
        return Err(Error::invalid(format!("zipf needs s > 0 and support >= 1 (s = {s}, support = {support})")));
    }
    normalize((1..=support).map(|j| ((j + drop) as f64).powf(-s)).collect())
}

/// `f_j ∝ e^{−rate·(j−1)}` for `j = 1..=support`.
pub fn exp_freqs(rate: f64, support: usize) -> Result<Vec<f64>> {
    if !(rate.is_finite() && rate > 0.0) || support == 0 {
        return Err(Error::invalid(format!(
            "exponential needs rate > 0 and support >= 1 (rate = {rate}, support = {support})"
        )));
    }
    normalize((0..support).map(|j| (-rate * j as f64).exp()).collect())
}

fn normalize(w: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = w.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::invalid("frequency weights do not normalize"));
    }
    Ok(w.into_iter().map(|x| x / total).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub m: u32,
    pub values: Vec<BitValue>,
}

impl Dataset {
    pub fn new(m: u32, values: Vec<BitValue>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("a dataset needs at least one value"));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != m) {
            return Err(Error::invalid(format!("value {bad:?} does not have {m} bits")));
        }
        Ok(Dataset { m, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes the dataset in `int` mode.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for v in &self.values {
            writeln!(w, "{}", v.to_decimal()).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub dist: DistributionSpec,
    pub n: usize,
    pub m: u32,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    /// The modeled values, `heavy[j]` carrying frequency `f_{j+1}`.
    pub heavy: Vec<BitValue>,
}

fn random_value<R: Rng + ?Sized>(m: u32, rng: &mut R) -> BitValue {
    let mut bytes = [0u8; (MAX_BITS / 8) as usize];
    rng.fill(&mut bytes[..(m as usize).div_ceil(8)]);
    BitValue::from_bytes(&bytes, m).expect("m checked by caller")
}

/// Draws the support values without replacement, then `n` i.i.d. samples.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    let freqs = spec.dist.freqs()?;
    let support = freqs.len();
    if spec.m == 0 || spec.m > MAX_BITS {
        return Err(Error::invalid(format!("value length must be in 1..={MAX_BITS}, got {}", spec.m)));
    }
    if spec.m < 64 && support as u64 > 1u64 << spec.m {
        return Err(Error::invalid(format!(
            "support of {support} values does not fit in {} bits",
            spec.m
        )));
    }
    if spec.n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = stream(spec.master_seed, tag::DATAGEN, 0);
    let mut seen = std::collections::HashSet::with_capacity(support);
    let mut heavy = Vec::with_capacity(support);
    while heavy.len() < support {
        let v = random_value(spec.m, &mut rng);
        if seen.insert(v) {
            heavy.push(v);
        }
    }
    let index = WeightedIndex::new(&freqs).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = stream(spec.master_seed, tag::DATAGEN, 1);
    let values = (0..spec.n).map(|_| heavy[index.sample(&mut rng)]).collect();
    Ok(Generated {
        dataset: Dataset::new(spec.m, values)?,
        heavy,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    Int,
    Text,
}

/// Reads a value file; malformed lines are reported with their number.
pub fn load(path: &Path, m: u32, mode: LoadMode) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let parsed = match mode {
            LoadMode::Int => BitValue::from_decimal(line, m),
            LoadMode::Text => BitValue::from_bytes(line.as_bytes(), m),
        };
        values.push(parsed.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    if values.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: "file holds no values".into(),
        });
    }
    Dataset::new(m, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub value_hex: String,
    pub count: u64,
}

/// Ground-truth sidecar written next to generated datasets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub m: u32,
    pub n: usize,
    pub dist: DistributionSpec,
    pub seed: u64,
    pub true_topk: Vec<TruthEntry>,
}

impl Sidecar {
    /// The `depth` most frequent values of `dataset` by exact counting.
    pub fn new(spec: &GeneratorSpec, dataset: &Dataset, depth: usize) -> Self {
        let mut ranked = exact_counts(&dataset.values);
        ranked.truncate(depth);
        Sidecar {
            m: dataset.m,
            n: dataset.len(),
            dist: spec.dist.clone(),
            seed: spec.master_seed,
            true_topk: ranked
                .into_iter()
                .map(|(v, count)| TruthEntry {
                    value_hex: v.to_hex(),
                    count,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn zipf_example() {
        let f = zipf_freqs(1.5, 3, 0).unwrap();
        let raw = [1.0, 2f64.powf(-1.5), 3f64.powf(-1.5)];
        assert!((raw[1] - 0.353553).abs() < 1e-6 && (raw[2] - 0.192450).abs() < 1e-6);
        let total: f64 = raw.iter().sum();
        assert!((total - 1.546003).abs() < 1e-6);
        assert!((f[0] - 0.646829).abs() < 1e-6);
        let d = zipf_freqs(1.5, 100, 20).unwrap();
        let z = zipf_freqs(1.5, 100, 0).unwrap();
        assert!(d[0] / d[1] < z[0] / z[1]);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(zipf_freqs(0.0, 3, 0).is_err());
    }

    #[test]
    fn exponential_is_geometric_over_ranks() {
        let f = exp_freqs(0.05, 200).unwrap();
        for w in f.windows(2) {
            assert!((w[1] / w[0] - (-0.05f64).exp()).abs() < 1e-12);
        }
        assert!(exp_freqs(50.0, 10).unwrap()[0] > 1.0 - 1e-12);
    }

    fn spec(dist: DistributionSpec, n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            dist,
            n,
            m: 32,
            master_seed: seed,
        }
    }

    #[test]
    fn generation_is_deterministic_and_distinct() {
        let s = spec(DistributionSpec::zipf(1.5, 1024, 0), 10_000, 3);
        let a = generate(&s).unwrap();
        assert_eq!(a, generate(&s).unwrap());
        let distinct: std::collections::HashSet<_> = a.heavy.iter().collect();
        assert_eq!(distinct.len(), 1024);
        let one = generate(&spec(DistributionSpec::zipf(1.5, 1, 0), 50, 3)).unwrap();
        assert!(one.dataset.values.iter().all(|v| *v == one.heavy[0]));
        let tiny = GeneratorSpec { m: 3, ..spec(DistributionSpec::zipf(1.0, 9, 0), 5, 0) };
        assert!(generate(&tiny).is_err());
    }

    #[test]
    fn top_value_concentrates() {
        let n = 100_000;
        let g = generate(&spec(DistributionSpec::zipf(1.5, 1024, 0), n, 7)).unwrap();
        let f1 = zipf_freqs(1.5, 1024, 0).unwrap()[0];
        let hits = g.dataset.values.iter().filter(|v| **v == g.heavy[0]).count() as f64;
        let sd = (n as f64 * f1 * (1.0 - f1)).sqrt();
        assert!((hits - n as f64 * f1).abs() < 4.0 * sd);
    }

    #[test]
    fn frequencies_fit_the_model() {
        let n = 1_000_000;
        let dist = DistributionSpec::zipf(1.5, 64, 0);
        let g = generate(&spec(dist.clone(), n, 11)).unwrap();
        let f = dist.freqs().unwrap();
        let counts: std::collections::HashMap<BitValue, u64> = exact_counts(&g.dataset.values).into_iter().collect();
        let stat: f64 = g
            .heavy
            .iter()
            .zip(&f)
            .map(|(v, &p)| {
                let e = p * n as f64;
                (counts.get(v).copied().unwrap_or(0) as f64 - e).powi(2) / e
            })
            .sum();
        assert!(ChiSquared::new(63.0).unwrap().sf(stat) > 0.001);
    }

    #[test]
    fn load_modes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ints.txt");
        std::fs::write(&p, "0\n255\n").unwrap();
        let d = load(&p, 8, LoadMode::Int).unwrap();
        assert_eq!(d.values[0].to_string(), "00000000");
        assert_eq!(d.values[1].to_string(), "11111111");
        std::fs::write(&p, "0\n256\n").unwrap();
        let err = load(&p, 8, LoadMode::Int).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let t = dir.path().join("text.txt");
        std::fs::write(&t, "ab\r\nhttp://example.com/a/very/long/path\n").unwrap();
        let d = load(&t, 160, LoadMode::Text).unwrap();
        assert_eq!(d.values[0].to_hex(), format!("6162{}", "0".repeat(36)));
        assert_eq!(d.values[1], BitValue::from_bytes(b"http://example.com/a", 160).unwrap());
        let d = load(&t, 16, LoadMode::Text).unwrap();
        assert_eq!(d.values[0].to_hex(), "6162");
        assert!(load(&dir.path().join("missing"), 8, LoadMode::Int).is_err());
    }

    #[test]
    fn save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.txt");
        let g = generate(&spec(DistributionSpec::exponential(0.05, 50), 500, 1)).unwrap();
        g.dataset.save(&p).unwrap();
        assert_eq!(load(&p, 32, LoadMode::Int).unwrap(), g.dataset);
    }
}
