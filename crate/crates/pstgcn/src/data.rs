//! Datasets: container, stratified splitting, synthetic generation, and
//! on-disk formats.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{bone_features, SkeletonSequence, SkeletonTopology};
use crate::tensor::Tensor;

pub const SAMPLES_MAGIC: &[u8; 4] = b"PSKD";
pub const SAMPLES_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub topology: SkeletonTopology,
    pub samples: Vec<SkeletonSequence>,
    pub n_class: usize,
    pub split: Vec<SplitTag>,
}

impl Dataset {
    pub fn new(
        topology: SkeletonTopology,
        samples: Vec<SkeletonSequence>,
        n_class: usize,
    ) -> Result<Self> {
        let split = vec![SplitTag::Train; samples.len()];
        let ds = Dataset {
            topology,
            samples,
            n_class,
            split,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::InvalidDataset("no samples".into()));
        }
        let shape = self.samples[0].data.shape().to_vec();
        for (i, s) in self.samples.iter().enumerate() {
            if s.data.shape() != shape {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} shape {:?} differs from {:?}",
                    s.data.shape(),
                    shape
                )));
            }
            if s.label >= self.n_class {
                return Err(Error::LabelOutOfRange {
                    label: s.label,
                    n_class: self.n_class,
                });
            }
        }
        if shape[2] != self.topology.joint_count {
            return Err(Error::InvalidDataset(format!(
                "V={} does not match topology joint_count {}",
                shape[2], self.topology.joint_count
            )));
        }
        Ok(())
    }

    /// (C, T, V) of every sample.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.samples[0].data.shape();
        (s[0], s[1], s[2])
    }

    pub fn indices(&self, tag: SplitTag) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == tag)
            .map(|(i, _)| i)
            .collect()
    }

    /// Stack the given samples into an N×C×T×V batch.
    pub fn batch(&self, idxs: &[usize]) -> (Tensor, Vec<usize>) {
        let (c, t, v) = self.dims();
        let mut out = Tensor::zeros(&[idxs.len(), c, t, v]);
        let per = c * t * v;
        let mut labels = Vec::with_capacity(idxs.len());
        for (n, &i) in idxs.iter().enumerate() {
            out.data_mut()[n * per..(n + 1) * per].copy_from_slice(self.samples[i].data.data());
            labels.push(self.samples[i].label);
        }
        (out, labels)
    }

    /// Replace every sample by its bone features.
    pub fn to_bone_stream(&self) -> Result<Dataset> {
        let samples = self
            .samples
            .iter()
            .map(|s| bone_features(s, &self.topology))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            topology: self.topology.clone(),
            samples,
            n_class: self.n_class,
            split: self.split.clone(),
        })
    }

    /// Per class, tag exactly round(val_fraction·n_c) of the train samples
    /// as validation. Deterministic under `seed`. Test-tagged samples are
    /// left untouched.
    pub fn stratified_split(&mut self, val_fraction: f64, seed: u64) -> Result<()> {
        if !(0.0 < val_fraction && val_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "val_fraction must be in (0,1), got {val_fraction}"
            )));
        }
        // reset any previous train/val assignment
        for t in self.split.iter_mut() {
            if *t == SplitTag::Val {
                *t = SplitTag::Train;
            }
        }
        let mut per_class: HashMap<usize, Vec<usize>> = HashMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            if self.split[i] == SplitTag::Train {
                per_class.entry(s.label).or_default().push(i);
            }
        }
        for (class, idxs) in &per_class {
            if idxs.len() < 2 {
                return Err(Error::InvalidDataset(format!(
                    "class {class} has only {} training sample(s), need at least 2",
                    idxs.len()
                )));
            }
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut classes: Vec<usize> = per_class.keys().copied().collect();
        classes.sort();
        for class in classes {
            let mut idxs = per_class.remove(&class).unwrap();
            idxs.sort();
            idxs.shuffle(&mut rng);
            let n_val = (val_fraction * idxs.len() as f64).round() as usize;
            for &i in idxs.iter().take(n_val) {
                self.split[i] = SplitTag::Val;
            }
        }
        Ok(())
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.topology.save(&dir.join("topology.txt"))?;
        let mut buf: Vec<u8> = Vec::new();
        buf.write_all(SAMPLES_MAGIC)?;
        buf.write_all(&SAMPLES_VERSION.to_le_bytes())?;
        buf.write_all(&(self.n_class as u32).to_le_bytes())?;
        buf.write_all(&(self.samples.len() as u32).to_le_bytes())?;
        let (c, t, v) = self.dims();
        for d in [c, t, v] {
            buf.write_all(&(d as u32).to_le_bytes())?;
        }
        for s in &self.samples {
            buf.write_all(&(s.label as u32).to_le_bytes())?;
            for &x in s.data.data() {
                buf.write_all(&x.to_le_bytes())?;
            }
        }
        std::fs::write(dir.join("samples.bin"), buf)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Dataset> {
        let topology = SkeletonTopology::load(&dir.join("topology.txt"))?;
        let bytes = std::fs::read(dir.join("samples.bin"))?;
        let mut r = bytes.as_slice();
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SAMPLES_MAGIC {
            return Err(Error::BadFormat(format!("bad samples magic {magic:?}")));
        }
        let mut u32buf = [0u8; 4];
        let mut next_u32 = |r: &mut &[u8]| -> Result<u32> {
            r.read_exact(&mut u32buf)?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = next_u32(&mut r)?;
        if version != SAMPLES_VERSION {
            return Err(Error::BadFormat(format!("unsupported samples version {version}")));
        }
        let n_class = next_u32(&mut r)? as usize;
        let count = next_u32(&mut r)? as usize;
        let c = next_u32(&mut r)? as usize;
        let t = next_u32(&mut r)? as usize;
        let v = next_u32(&mut r)? as usize;
        let per = c * t * v;
        let mut samples = Vec::with_capacity(count);
        let mut f64buf = [0u8; 8];
        for _ in 0..count {
            let label = next_u32(&mut r)? as usize;
            let mut data = Vec::with_capacity(per);
            for _ in 0..per {
                r.read_exact(&mut f64buf)?;
                data.push(f64::from_le_bytes(f64buf));
            }
            samples.push(SkeletonSequence::new(
                Tensor::from_vec(&[c, t, v], data)?,
                label,
                topology.name.clone(),
            )?);
        }
        Dataset::new(topology, samples, n_class)
    }

    /// Hand-made fixtures: one JSON object per line with `label`, `shape`
    /// = [C, T, V] and flat `data`.
    pub fn import_jsonl(path: &Path, topology: SkeletonTopology, n_class: usize) -> Result<Dataset> {
        #[derive(Deserialize)]
        struct Line {
            label: usize,
            shape: [usize; 3],
            data: Vec<f64>,
        }
        let text = std::fs::read_to_string(path)?;
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Line = serde_json::from_str(line)
                .map_err(|e| Error::BadFormat(format!("line {}: {e}", i + 1)))?;
            samples.push(SkeletonSequence::new(
                Tensor::from_vec(&rec.shape, rec.data)?,
                rec.label,
                topology.name.clone(),
            )?);
        }
        Dataset::new(topology, samples, n_class)
    }
}

/// Deterministic synthetic skeleton motions: each class is a distinct set
/// of joint-angle oscillation frequencies/phases applied along the
/// kinematic tree, plus Gaussian coordinate noise.
pub fn generate_synthetic(
    n_class: usize,
    samples_per_class: usize,
    topology: &SkeletonTopology,
    t_len: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_class < 2 {
        return Err(Error::InvalidConfig("need at least 2 classes".into()));
    }
    let parents = topology
        .parents
        .clone()
        .ok_or(Error::MissingParents)?;
    let v = topology.joint_count;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_class * samples_per_class);

    // children in tree order so parents are laid out first
    let order = tree_order(&parents, v);

    for class in 0..n_class {
        let freq = 1.0 + 0.5 * class as f64;
        let amp = 0.35 + 0.05 * class as f64;
        for _ in 0..samples_per_class {
            let mut data = Tensor::zeros(&[3, t_len, v]);
            for ti in 0..t_len {
                let phase_t = 2.0 * std::f64::consts::PI * freq * ti as f64 / t_len as f64;
                // root at origin, every child hangs off its parent on a
                // unit bone whose angle oscillates
                let mut xs = vec![0.0; v];
                let mut ys = vec![0.0; v];
                for &j in &order {
                    if let Some(p) = parents[j] {
                        let theta = 0.9 * j as f64 + 0.7 * class as f64
                            + amp * (phase_t + 0.3 * j as f64 + 0.7 * class as f64).sin();
                        xs[j] = xs[p] + theta.cos();
                        ys[j] = ys[p] + theta.sin();
                    }
                }
                for j in 0..v {
                    let zi = amp * (phase_t + 0.5 * j as f64).cos();
                    let i0 = data.idx3(0, ti, j);
                    let i1 = data.idx3(1, ti, j);
                    let i2 = data.idx3(2, ti, j);
                    data.data_mut()[i0] = xs[j];
                    data.data_mut()[i1] = ys[j];
                    data.data_mut()[i2] = zi;
                }
            }
            if noise_sigma > 0.0 {
                for x in data.data_mut() {
                    *x += noise_sigma * gauss(&mut rng);
                }
            }
            samples.push(SkeletonSequence::new(data, class, topology.name.clone())?);
        }
    }
    Dataset::new(topology.clone(), samples, n_class)
}

fn tree_order(parents: &[Option<usize>], v: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(v);
    let mut placed = vec![false; v];
    for j in 0..v {
        if parents[j].is_none() {
            order.push(j);
            placed[j] = true;
        }
    }
    while order.len() < v {
        let before = order.len();
        for j in 0..v {
            if !placed[j] {
                if let Some(p) = parents[j] {
                    if placed[p] {
                        order.push(j);
                        placed[j] = true;
                    }
                }
            }
        }
        if order.len() == before {
            // cycle in the parent map; append the rest in index order
            for j in 0..v {
                if !placed[j] {
                    order.push(j);
                    placed[j] = true;
                }
            }
        }
    }
    order
}

/// Box-Muller standard normal.
fn gauss<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset(per_class: usize) -> Dataset {
        let topo = SkeletonTopology::preset("toy11").unwrap();
        generate_synthetic(3, per_class, &topo, 8, 0.05, 7).unwrap()
    }

    #[test]
    fn split_counts_per_class() {
        let mut ds = toy_dataset(10);
        ds.stratified_split(0.2, 1).unwrap();
        for class in 0..3 {
            let val = ds
                .indices(SplitTag::Val)
                .iter()
                .filter(|&&i| ds.samples[i].label == class)
                .count();
            let train = ds
                .indices(SplitTag::Train)
                .iter()
                .filter(|&&i| ds.samples[i].label == class)
                .count();
            assert_eq!(val, 2);
            assert_eq!(train, 8);
        }
    }

    #[test]
    fn split_half_of_two() {
        let mut ds = toy_dataset(2);
        ds.stratified_split(0.5, 1).unwrap();
        assert_eq!(ds.indices(SplitTag::Val).len(), 3);
        assert_eq!(ds.indices(SplitTag::Train).len(), 3);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let mut a = toy_dataset(10);
        let mut b = toy_dataset(10);
        a.stratified_split(0.2, 42).unwrap();
        b.stratified_split(0.2, 42).unwrap();
        assert_eq!(a.indices(SplitTag::Val), b.indices(SplitTag::Val));
        let mut c = toy_dataset(10);
        c.stratified_split(0.2, 43).unwrap();
        assert_ne!(a.indices(SplitTag::Val), c.indices(SplitTag::Val));
        assert_eq!(a.indices(SplitTag::Val).len(), c.indices(SplitTag::Val).len());
    }

    #[test]
    fn split_rejects_singleton_class() {
        let topo = SkeletonTopology::preset("toy11").unwrap();
        let mut samples = generate_synthetic(2, 3, &topo, 4, 0.0, 1).unwrap().samples;
        samples.truncate(4); // class 1 keeps a single sample
        let mut ds = Dataset::new(topo, samples, 2).unwrap();
        let err = ds.stratified_split(0.5, 1).unwrap_err();
        assert!(err.to_string().contains("class 1"));
    }

    #[test]
    fn synthetic_same_seed_is_bit_identical() {
        let topo = SkeletonTopology::preset("toy11").unwrap();
        let a = generate_synthetic(2, 4, &topo, 6, 0.1, 9).unwrap();
        let b = generate_synthetic(2, 4, &topo, 6, 0.1, 9).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.data.data(), y.data.data());
        }
    }

    #[test]
    fn synthetic_labels_uniform() {
        let ds = toy_dataset(5);
        for class in 0..3 {
            assert_eq!(ds.samples.iter().filter(|s| s.label == class).count(), 5);
        }
    }

    /// Separability guarantee at zero noise: nearest centroid on the
    /// flattened sequences classifies perfectly.
    #[test]
    fn noiseless_classes_are_centroid_separable() {
        let topo = SkeletonTopology::preset("toy11").unwrap();
        let ds = generate_synthetic(2, 6, &topo, 8, 0.0, 3).unwrap();
        let per = 3 * 8 * 11;
        let mut centroids = vec![vec![0.0; per]; 2];
        let mut counts = [0usize; 2];
        for s in &ds.samples {
            counts[s.label] += 1;
            for (acc, x) in centroids[s.label].iter_mut().zip(s.data.data()) {
                *acc += x;
            }
        }
        for (c, cnt) in centroids.iter_mut().zip(counts) {
            c.iter_mut().for_each(|x| *x /= cnt as f64);
        }
        for s in &ds.samples {
            let d: Vec<f64> = centroids
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(s.data.data())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .collect();
            let pred = if d[0] <= d[1] { 0 } else { 1 };
            assert_eq!(pred, s.label);
        }
    }

    #[test]
    fn dataset_dir_roundtrip() {
        let ds = toy_dataset(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds");
        ds.save_dir(&path).unwrap();
        let back = Dataset::load_dir(&path).unwrap();
        assert_eq!(back.samples.len(), ds.samples.len());
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.data.data(), b.data.data());
        }
    }

    #[test]
    fn jsonl_import() {
        let topo = SkeletonTopology::new("pair", 2, vec![(0, 1)], 0, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.jsonl");
        std::fs::write(
            &path,
            "{\"label\":0,\"shape\":[1,2,2],\"data\":[1,2,3,4]}\n{\"label\":1,\"shape\":[1,2,2],\"data\":[5,6,7,8]}\n",
        )
        .unwrap();
        let ds = Dataset::import_jsonl(&path, topo, 2).unwrap();
        assert_eq!(ds.samples.len(), 2);
        assert_eq!(ds.samples[1].data.data(), &[5.0, 6.0, 7.0, 8.0]);
    }
}
