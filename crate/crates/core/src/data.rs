//! Dataset generation, ingestion, and persistence.
//!
//! Synthetic fixtures (Gaussian blobs, two moons) stand in for image corpora
//! at desk scale; the IDX codec handles the standard handwritten-digit
//! container format bit-exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::attacks::CandidatePool;
use crate::error::{Error, Result};
use crate::num::Real;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Labeled inputs in `[0,1]^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<Vec<T>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub n_features: usize,
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Held-out inputs with reference labels, fixed across iterations.
#[derive(Clone, Debug)]
pub struct EvalSet<T> {
    pub inputs: Vec<Vec<T>>,
    pub labels: Vec<usize>,
}

/// Seeded Gaussian clusters clipped to the unit box, one per class.
pub fn gen_blobs<T: Real>(
    n_classes: usize,
    n_per_class: usize,
    n_features: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if n_classes < 2 {
        return Err(Error::usage("blobs need at least 2 classes"));
    }
    if n_per_class == 0 || n_features == 0 {
        return Err(Error::usage("blobs need positive sample count and dimension"));
    }
    if spread <= 0.0 {
        return Err(Error::usage("blob spread must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).expect("valid spread");
    // Centers away from the box walls so most mass stays unclipped.
    let centers: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| (0..n_features).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let mut inputs = Vec::with_capacity(n_classes * n_per_class);
    let mut labels = Vec::with_capacity(n_classes * n_per_class);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..n_per_class {
            let x: Vec<T> = center
                .iter()
                .map(|&c| T::of((c + noise.sample(&mut rng)).clamp(0.0, 1.0)))
                .collect();
            inputs.push(x);
            labels.push(label);
        }
    }
    Ok(Dataset {
        inputs,
        labels,
        n_classes,
        n_features,
    })
}

/// Two interleaved half-moons in the unit square.
pub fn gen_moons<T: Real>(n_per_class: usize, noise: f64, seed: u64) -> Result<Dataset<T>> {
    if n_per_class == 0 {
        return Err(Error::usage("moons need a positive sample count"));
    }
    if noise < 0.0 {
        return Err(Error::usage("moon noise must be >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.max(1e-12)).expect("valid noise");
    let mut inputs = Vec::with_capacity(2 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for label in 0..2usize {
        for _ in 0..n_per_class {
            let t = rng.random_range(0.0..std::f64::consts::PI);
            let (mut x, mut y) = if label == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            x += jitter.sample(&mut rng);
            y += jitter.sample(&mut rng);
            // Raw coordinates live in roughly [-1,2] x [-0.5,1].
            let nx = ((x + 1.0) / 3.0).clamp(0.0, 1.0);
            let ny = ((y + 0.5) / 1.5).clamp(0.0, 1.0);
            inputs.push(vec![T::of(nx), T::of(ny)]);
            labels.push(label);
        }
    }
    Ok(Dataset {
        inputs,
        labels,
        n_classes: 2,
        n_features: 2,
    })
}

struct BeReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> BeReader<R> {
    fn read(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|_| Error::Format {
            offset: at,
            message: format!("truncated while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read(&mut b, what)?;
        Ok(u32::from_be_bytes(b))
    }
}

/// Loads an IDX image/label file pair. Pixels come back scaled to `[0,1]`
/// by division with 255; sample counts in the two files must agree.
pub fn load_idx<T: Real>(images_path: &Path, labels_path: &Path) -> Result<Dataset<T>> {
    let mut ir = BeReader {
        inner: BufReader::new(File::open(images_path)?),
        offset: 0,
    };
    let magic = ir.u32("image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = ir.u32("image count")? as usize;
    let rows = ir.u32("row count")? as usize;
    let cols = ir.u32("column count")? as usize;
    let pixels = rows * cols;
    let mut inputs = Vec::with_capacity(count);
    let mut buf = vec![0u8; pixels];
    for _ in 0..count {
        ir.read(&mut buf, "pixel row")?;
        inputs.push(buf.iter().map(|&p| T::of(p as f64 / 255.0)).collect());
    }

    let mut lr = BeReader {
        inner: BufReader::new(File::open(labels_path)?),
        offset: 0,
    };
    let magic = lr.u32("label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let label_count = lr.u32("label count")? as usize;
    if label_count != count {
        return Err(Error::Format {
            offset: 4,
            message: format!("{count} images but {label_count} labels"),
        });
    }
    let mut labels = Vec::with_capacity(count);
    let mut lb = [0u8; 1];
    for _ in 0..count {
        lr.read(&mut lb, "label byte")?;
        labels.push(lb[0] as usize);
    }
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(Dataset {
        inputs,
        labels,
        n_classes: n_classes.max(2),
        n_features: pixels,
    })
}

/// Writes an IDX image file (unsigned bytes, dims `[count, rows, cols]`).
pub fn write_idx_images(path: &Path, images: &[Vec<u8>], rows: usize, cols: usize) -> Result<()> {
    let pixels = rows * cols;
    for (i, img) in images.iter().enumerate() {
        if img.len() != pixels {
            return Err(Error::usage(format!(
                "image {i} has {} pixels, expected {pixels}",
                img.len()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IDX_IMAGES_MAGIC.to_be_bytes())?;
    w.write_all(&(images.len() as u32).to_be_bytes())?;
    w.write_all(&(rows as u32).to_be_bytes())?;
    w.write_all(&(cols as u32).to_be_bytes())?;
    for img in images {
        w.write_all(img)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an IDX label file (unsigned bytes, dims `[count]`).
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IDX_LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}

/// Dumps a crafted pool as an IDX pair for inspection: inputs quantized to
/// 8-bit (rows=1, cols=n), labels = the substitute's post-crafting label.
pub fn dump_pool_idx<T: Real>(
    pool: &CandidatePool<T>,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::usage("cannot dump an empty pool"));
    }
    let n = pool.samples[0].x_adv.len();
    let images: Vec<Vec<u8>> = pool
        .samples
        .iter()
        .map(|s| {
            s.x_adv
                .iter()
                .map(|&v| (v.f64() * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect()
        })
        .collect();
    let labels: Vec<u8> = pool
        .samples
        .iter()
        .map(|s| {
            u8::try_from(s.label_after)
                .map_err(|_| Error::usage("pool labels exceed the 8-bit dump format"))
        })
        .collect::<Result<_>>()?;
    write_idx_images(images_path, &images, 1, n)?;
    write_idx_labels(labels_path, &labels)
}

/// Seeded shuffle-split into a training pool and a held-out evaluation set.
pub fn split_eval<T: Real>(
    dataset: &Dataset<T>,
    eval_fraction: f64,
    seed: u64,
) -> Result<(Dataset<T>, EvalSet<T>)> {
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(Error::usage("eval fraction must be in [0, 1)"));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_eval = (dataset.len() as f64 * eval_fraction).round() as usize;
    let (eval_idx, train_idx) = order.split_at(n_eval);
    let pick = |idx: &[usize]| -> (Vec<Vec<T>>, Vec<usize>) {
        (
            idx.iter().map(|&i| dataset.inputs[i].clone()).collect(),
            idx.iter().map(|&i| dataset.labels[i]).collect(),
        )
    };
    let (train_inputs, train_labels) = pick(train_idx);
    let (eval_inputs, eval_labels) = pick(eval_idx);
    Ok((
        Dataset {
            inputs: train_inputs,
            labels: train_labels,
            n_classes: dataset.n_classes,
            n_features: dataset.n_features,
        },
        EvalSet {
            inputs: eval_inputs,
            labels: eval_labels,
        },
    ))
}

/// Draws the initial query set from a pool: `size` samples uniformly, or
/// `size / n_classes` per class when the per-class quota is requested.
pub fn initial_set<T: Real>(
    pool: &Dataset<T>,
    size: usize,
    per_class: bool,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    if size == 0 || size > pool.len() {
        return Err(Error::usage(format!(
            "initial size {size} out of range for a pool of {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !per_class {
        let idx = rand::seq::index::sample(&mut rng, pool.len(), size);
        return Ok(idx.iter().map(|i| pool.inputs[i].clone()).collect());
    }
    if size % pool.n_classes != 0 {
        return Err(Error::usage(format!(
            "initial size {size} not divisible by {} classes",
            pool.n_classes
        )));
    }
    let quota = size / pool.n_classes;
    let mut by_class: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &y) in pool.labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    let mut selected = Vec::with_capacity(size);
    for class in 0..pool.n_classes {
        let members = by_class.get(&class).map(Vec::as_slice).unwrap_or(&[]);
        if members.len() < quota {
            return Err(Error::usage(format!(
                "class {class} has only {} samples, quota is {quota}",
                members.len()
            )));
        }
        let idx = rand::seq::index::sample(&mut rng, members.len(), quota);
        selected.extend(idx.iter().map(|i| pool.inputs[members[i]].clone()));
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{train, Activation, Network, NetworkSpec, Optimizer, TrainConfig};

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = gen_blobs::<f64>(10, 100, 16, 0.1, 3).unwrap();
        let b = gen_blobs::<f64>(10, 100, 16, 0.1, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
        for class in 0..10 {
            assert_eq!(a.labels.iter().filter(|&&y| y == class).count(), 100);
        }
        assert!(a
            .inputs
            .iter()
            .flatten()
            .all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn tiny_spread_collapses_to_centers() {
        let ds = gen_blobs::<f64>(3, 20, 4, 1e-12, 9).unwrap();
        for class in 0..3 {
            let members: Vec<&Vec<f64>> = ds
                .inputs
                .iter()
                .zip(&ds.labels)
                .filter(|(_, &y)| y == class)
                .map(|(x, _)| x)
                .collect();
            let first = members[0];
            for m in &members {
                for (a, b) in m.iter().zip(first) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
        assert!(gen_blobs::<f64>(3, 20, 4, 0.0, 9).is_err());
        assert!(gen_blobs::<f64>(3, 20, 4, -0.1, 9).is_err());
    }

    #[test]
    fn blobs_are_linearly_separable_at_low_spread() {
        let ds = gen_blobs::<f64>(10, 50, 16, 0.05, 11).unwrap();
        let spec = NetworkSpec::new(vec![16, 10], Activation::Tanh).unwrap();
        let net = Network::<f64>::seeded(spec, 1);
        let data: Vec<(Vec<f64>, usize)> = ds
            .inputs
            .iter()
            .cloned()
            .zip(ds.labels.iter().copied())
            .collect();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 32,
            optimizer: Optimizer::adam(0.01),
            seed: 5,
        };
        let trained = train(&net, &data, &cfg).unwrap();
        let correct = data
            .iter()
            .filter(|(x, y)| trained.predict(x).unwrap() == *y)
            .count();
        let acc = correct as f64 / data.len() as f64;
        assert!(acc >= 0.95, "linear oracle accuracy {acc}");
    }

    #[test]
    fn moons_are_in_unit_box_with_two_classes() {
        let ds = gen_moons::<f64>(100, 0.02, 4).unwrap();
        assert_eq!(ds.len(), 200);
        assert_eq!(ds.n_classes, 2);
        assert!(ds.inputs.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn idx_fixture_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("imgs.idx");
        let labels = dir.path().join("lbls.idx");
        write_idx_images(&images, &[vec![0u8, 255, 128, 64]], 2, 2).unwrap();
        write_idx_labels(&labels, &[7]).unwrap();
        let ds: Dataset<f64> = load_idx(&images, &labels).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.n_features, 4);
        assert_eq!(ds.labels, vec![7]);
        let expect = [0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0];
        for (a, b) in ds.inputs[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn idx_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("a.idx");
        let labels = dir.path().join("b.idx");
        let imgs: Vec<Vec<u8>> = (0..5)
            .map(|i| (0..6).map(|j| (i * 40 + j * 7) as u8).collect())
            .collect();
        write_idx_images(&images, &imgs, 2, 3).unwrap();
        write_idx_labels(&labels, &[0, 1, 2, 3, 4]).unwrap();
        let ds: Dataset<f64> = load_idx(&images, &labels).unwrap();
        let rewritten: Vec<Vec<u8>> = ds
            .inputs
            .iter()
            .map(|x| x.iter().map(|&v| (v * 255.0).round() as u8).collect())
            .collect();
        let images2 = dir.path().join("a2.idx");
        let labels2 = dir.path().join("b2.idx");
        write_idx_images(&images2, &rewritten, 2, 3).unwrap();
        write_idx_labels(&labels2, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(std::fs::read(&images).unwrap(), std::fs::read(&images2).unwrap());
        assert_eq!(std::fs::read(&labels).unwrap(), std::fs::read(&labels2).unwrap());
    }

    #[test]
    fn idx_errors_name_the_offset() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("bad.idx");
        let labels = dir.path().join("lbl.idx");
        std::fs::write(&images, 0x0000_0802u32.to_be_bytes()).unwrap();
        write_idx_labels(&labels, &[0]).unwrap();
        match load_idx::<f64>(&images, &labels) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }

        write_idx_images(&images, &[vec![1, 2, 3, 4]], 2, 2).unwrap();
        let bytes = std::fs::read(&images).unwrap();
        std::fs::write(&images, &bytes[..bytes.len() - 2]).unwrap();
        match load_idx::<f64>(&images, &labels) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("i.idx");
        let labels = dir.path().join("l.idx");
        write_idx_images(&images, &[vec![1, 2], vec![3, 4]], 1, 2).unwrap();
        write_idx_labels(&labels, &[0]).unwrap();
        assert!(matches!(
            load_idx::<f64>(&images, &labels),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let ds = gen_blobs::<f64>(4, 50, 8, 0.1, 2).unwrap();
        let (train_a, eval_a) = split_eval(&ds, 0.25, 7).unwrap();
        let (train_b, eval_b) = split_eval(&ds, 0.25, 7).unwrap();
        assert_eq!(train_a.inputs, train_b.inputs);
        assert_eq!(eval_a.inputs, eval_b.inputs);
        assert_eq!(train_a.len() + eval_a.inputs.len(), ds.len());
        for e in &eval_a.inputs {
            assert!(!train_a.inputs.contains(e));
        }
    }

    #[test]
    fn initial_set_respects_per_class_quota() {
        let ds = gen_blobs::<f64>(5, 30, 6, 0.1, 8).unwrap();
        let init = initial_set(&ds, 25, true, 3).unwrap();
        assert_eq!(init.len(), 25);
        assert!(initial_set(&ds, 23, true, 3).is_err());
        let uniform = initial_set(&ds, 23, false, 3).unwrap();
        assert_eq!(uniform.len(), 23);
    }
}
