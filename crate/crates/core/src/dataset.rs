//! Labelled sample sets: synthetic toy tasks, CSV and raw image files.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// `[channels, height, width]` of one sample; `[n, 1, 1]` for flat vectors.
    pub sample_shape: [usize; 3],
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, sample_shape: [usize; 3]) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} samples but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let len: usize = sample_shape.iter().product();
        if let Some(bad) = features.iter().position(|f| f.len() != len) {
            return Err(Error::Dataset(format!(
                "sample {bad} has {} features, expected {len}",
                features[bad].len()
            )));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            features,
            labels,
            sample_shape,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            sample_shape: self.sample_shape,
            classes: self.classes,
        }
    }

    /// First `fraction` of the samples (rounded up, at least one), optionally
    /// after a seeded shuffle of the index order.
    pub fn calibration_split(&self, fraction: f64, shuffle_seed: Option<u64>) -> Self {
        self.subset(&calibration_indices(self.len(), fraction, shuffle_seed))
    }
}

pub fn calibration_indices(n: usize, fraction: f64, shuffle_seed: Option<u64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let take = ((n as f64 * fraction).ceil() as usize).clamp(n.min(1), n);
    order.truncate(take);
    order
}

/// Two isotropic Gaussian blobs in 2-D centred at `(-1.5, 0)` and `(1.5, 0)`
/// with unit variance in y and `0.5` in x.
pub fn gaussian_blobs(per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = Normal::new(0.0, 0.5).expect("valid sigma");
    let ny = Normal::new(0.0, 1.0).expect("valid sigma");
    let mut features = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let class = i % 2;
        let cx = if class == 0 { -1.5 } else { 1.5 };
        features.push(vec![cx + nx.sample(&mut rng), ny.sample(&mut rng)]);
        labels.push(class);
    }
    Dataset::new(features, labels, [2, 1, 1]).expect("generated data is well-formed")
}

/// Three-class swirl: points in the annulus `0.25 <= r <= 1` labelled by
/// which third of the circle `angle + 2r` falls in. Points within `0.08` rad of
/// a class boundary are rejected, so the task is separable with a margin.
pub fn swirl3(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sector = 2.0 * PI / 3.0;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let r = rng.random_range(0.25f64..1.0).sqrt().max(0.25);
        let a = rng.random_range(0.0..2.0 * PI);
        let warped = (a + 2.0 * r).rem_euclid(2.0 * PI);
        let within = warped % sector;
        if within < 0.08 || within > sector - 0.08 {
            continue;
        }
        features.push(vec![r * a.cos(), r * a.sin()]);
        labels.push((warped / sector) as usize % 3);
    }
    Dataset::new(features, labels, [2, 1, 1]).expect("generated data is well-formed")
}

/// Named built-in task, e.g. `swirl3` or `blobs2`.
pub fn builtin(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    match name {
        "swirl3" => Ok(swirl3(n, seed)),
        "blobs2" => Ok(gaussian_blobs(n.div_ceil(2), seed)),
        other => Err(Error::Dataset(format!("unknown built-in dataset `{other}`"))),
    }
}

/// CSV rows of `label, feature...` without a header.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut fields = record.iter();
        let label = fields
            .next()
            .and_then(|f| f.parse::<usize>().ok())
            .ok_or_else(|| Error::Dataset(format!("row {row}: bad label")))?;
        let values = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Dataset(format!("row {row}: {e}")))?;
        labels.push(label);
        features.push(values);
    }
    let len = features.first().map_or(0, Vec::len);
    Dataset::new(features, labels, [len, 1, 1])
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for (x, y) in data.features.iter().zip(&data.labels) {
        let mut row = vec![y.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shape descriptor stored next to a raw image file as `<file>.shape`:
/// `key=value` lines for `count`, `channels`, `height`, `width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawImageShape {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".shape");
    PathBuf::from(s)
}

fn parse_sidecar(text: &str) -> Result<RawImageShape> {
    let get = |key: &str| -> Result<usize> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .and_then(|(_, v)| v.trim().parse().ok())
            .ok_or_else(|| Error::Dataset(format!("shape descriptor lacks `{key}`")))
    };
    Ok(RawImageShape {
        count: get("count")?,
        channels: get("channels")?,
        height: get("height")?,
        width: get("width")?,
    })
}

/// Raw images: per sample one label byte then `channels*height*width` pixel
/// bytes (channel-major); pixels are scaled to `[0, 1]`.
pub fn load_raw_images(path: &Path) -> Result<Dataset> {
    let shape = parse_sidecar(&fs::read_to_string(sidecar_path(path))?)?;
    let bytes = fs::read(path)?;
    let pixels = shape.channels * shape.height * shape.width;
    if bytes.len() != shape.count * (pixels + 1) {
        return Err(Error::Dataset(format!(
            "raw file holds {} bytes, descriptor implies {}",
            bytes.len(),
            shape.count * (pixels + 1)
        )));
    }
    let mut features = Vec::with_capacity(shape.count);
    let mut labels = Vec::with_capacity(shape.count);
    for rec in bytes.chunks_exact(pixels + 1) {
        labels.push(rec[0] as usize);
        features.push(rec[1..].iter().map(|&p| p as f64 / 255.0).collect());
    }
    Dataset::new(features, labels, [shape.channels, shape.height, shape.width])
}

pub fn write_raw_images(path: &Path, data: &Dataset) -> Result<()> {
    let [c, h, w] = data.sample_shape;
    let mut bytes = Vec::with_capacity(data.len() * (c * h * w + 1));
    for (x, &y) in data.features.iter().zip(&data.labels) {
        bytes.push(u8::try_from(y).map_err(|_| Error::Dataset("label exceeds 255".into()))?);
        bytes.extend(x.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    fs::write(path, bytes)?;
    fs::write(
        sidecar_path(path),
        format!("count={}\nchannels={c}\nheight={h}\nwidth={w}\n", data.len()),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swirl_is_balanced_and_deterministic() {
        let a = swirl3(3000, 1);
        assert_eq!(a, swirl3(3000, 1));
        assert_eq!(a.classes, 3);
        for c in 0..3 {
            let share = a.labels.iter().filter(|&&y| y == c).count() as f64 / 3000.0;
            assert!((share - 1.0 / 3.0).abs() < 0.05, "class {c} share {share}");
        }
    }

    #[test]
    fn calibration_split_takes_leading_tenth() {
        assert_eq!(calibration_indices(20, 0.1, None), vec![0, 1]);
        assert_eq!(calibration_indices(5, 0.1, None), vec![0]);
        let shuffled = calibration_indices(100, 0.1, Some(3));
        assert_eq!(shuffled.len(), 10);
        assert_eq!(shuffled, calibration_indices(100, 0.1, Some(3)));
        assert_ne!(shuffled, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn csv_and_raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let blobs = gaussian_blobs(10, 4);
        let p = dir.path().join("b.csv");
        write_csv(&p, &blobs).unwrap();
        let back = load_csv(&p).unwrap();
        assert_eq!(back.labels, blobs.labels);
        assert_eq!(back.features, blobs.features);

        let img = Dataset::new(
            vec![vec![0.0, 1.0, 0.5, 0.25], vec![1.0; 4]],
            vec![3, 1],
            [1, 2, 2],
        )
        .unwrap();
        let p = dir.path().join("img.bin");
        write_raw_images(&p, &img).unwrap();
        let back = load_raw_images(&p).unwrap();
        assert_eq!(back.sample_shape, [1, 2, 2]);
        assert_eq!(back.labels, vec![3, 1]);
        assert_eq!(back.features[0][2], 128.0 / 255.0);

        std::fs::write(sidecar_path(&p), "count=3\nchannels=1\nheight=2\nwidth=2\n").unwrap();
        assert!(load_raw_images(&p).is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1], [1, 1, 1]).is_err());
        assert!(builtin("nope", 10, 0).is_err());
    }
}
