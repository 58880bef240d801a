//! Named tensors and the on-disk archive format shared by every module.
//!
//! An archive is a directory holding `manifest.json` (entries sorted by
//! tensor name) plus `tensors.bin` (concatenated little-endian f32 payloads).
//! Disk storage is always f32; wider scalars exist only in memory and are
//! narrowed on save. Writing the same store twice yields identical bytes, and
//! a write/read round trip of an f32 store reproduces every float bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named, shaped, row-major float tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<S: Scalar> {
    name: String,
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> NamedTensor<S> {
    /// Builds a tensor, checking that the name is valid and the data length
    /// matches the shape product. Shape dims must all be positive.
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let name = name.into();
        validate_name(&name)?;
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!(
                "tensor '{name}': shape {shape:?} must be nonempty with positive dims"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "tensor '{name}': shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { name, shape, data })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        Self::new(name, shape, vec![S::zero(); numel])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn cast<T: Scalar>(&self) -> NamedTensor<T> {
        NamedTensor {
            name: self.name.clone(),
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| T::of(v.to_f64())).collect(),
        }
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::format("tensor name must be nonempty"));
    }
    if name.chars().any(|c| c.is_control()) {
        return Err(Error::format(format!(
            "tensor name {name:?} contains control characters"
        )));
    }
    Ok(())
}

/// An ordered collection of named tensors. Iteration order is lexicographic
/// by name, which is what makes serialization deterministic.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorStore<S: Scalar> {
    tensors: BTreeMap<String, NamedTensor<S>>,
}

impl<S: Scalar> TensorStore<S> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    /// Inserts a tensor, rejecting duplicate names.
    pub fn insert(&mut self, tensor: NamedTensor<S>) -> Result<()> {
        if self.tensors.contains_key(tensor.name()) {
            return Err(Error::format(format!(
                "duplicate tensor name '{}'",
                tensor.name()
            )));
        }
        self.tensors.insert(tensor.name().to_string(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor<S>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NamedTensor<S>> {
        self.tensors.get_mut(name)
    }

    /// Like [`get`](Self::get) but returns a shape error for absent names.
    pub fn require(&self, name: &str) -> Result<&NamedTensor<S>> {
        self.get(name)
            .ok_or_else(|| Error::shape(format!("missing tensor '{name}'")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor<S>> {
        self.tensors.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NamedTensor<S>> {
        self.tensors.values_mut()
    }

    pub fn total_params(&self) -> usize {
        self.tensors.values().map(|t| t.numel()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> TensorStore<T> {
        let mut out = TensorStore::new();
        for t in self.iter() {
            out.insert(t.cast()).expect("names already unique");
        }
        out
    }

    /// Checks that `other` has exactly the same names and shapes.
    pub fn layout_matches<T: Scalar>(&self, other: &TensorStore<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "stores hold {} vs {} tensors",
                self.len(),
                other.len()
            )));
        }
        for t in self.iter() {
            let o = other.require(t.name())?;
            if t.shape() != o.shape() {
                return Err(Error::shape(format!(
                    "tensor '{}': shape {:?} vs {:?}",
                    t.name(),
                    t.shape(),
                    o.shape()
                )));
            }
        }
        Ok(())
    }
}

impl<S: Scalar> FromIterator<NamedTensor<S>> for TensorStore<S> {
    fn from_iter<I: IntoIterator<Item = NamedTensor<S>>>(iter: I) -> Self {
        let mut store = Self::new();
        for t in iter {
            store.insert(t).expect("duplicate tensor name in iterator");
        }
        store
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
    nbytes: u64,
}

const MANIFEST_FILE: &str = "manifest.json";
const PAYLOAD_FILE: &str = "tensors.bin";

/// Writes `store` as `<dir>/manifest.json` + `<dir>/tensors.bin`.
///
/// Payload order follows the manifest (lexicographic by name), so two writes
/// of the same store produce identical bytes.
pub fn write_archive(store: &TensorStore<f32>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let mut entries = Vec::with_capacity(store.len());
    let mut payload: Vec<u8> = Vec::new();
    for tensor in store.iter() {
        let offset = payload.len() as u64;
        for &v in tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(ManifestEntry {
            name: tensor.name().to_string(),
            shape: tensor.shape().to_vec(),
            dtype: "f32".to_string(),
            offset,
            nbytes: (tensor.numel() * 4) as u64,
        });
    }

    let manifest_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&entries)
        .map_err(|e| Error::json(manifest_path.display().to_string(), e))?;
    fs::write(&manifest_path, json)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;

    let payload_path = dir.join(PAYLOAD_FILE);
    let mut f = fs::File::create(&payload_path)
        .map_err(|e| Error::io(payload_path.display().to_string(), e))?;
    f.write_all(&payload)
        .map_err(|e| Error::io(payload_path.display().to_string(), e))?;
    Ok(())
}

/// Reads an archive written by [`write_archive`].
pub fn read_archive(dir: &Path) -> Result<TensorStore<f32>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let json = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::io(manifest_path.display().to_string(), e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&json)
        .map_err(|e| Error::json(manifest_path.display().to_string(), e))?;

    let payload_path = dir.join(PAYLOAD_FILE);
    let mut payload = Vec::new();
    fs::File::open(&payload_path)
        .and_then(|mut f| f.read_to_end(&mut payload))
        .map_err(|e| Error::io(payload_path.display().to_string(), e))?;

    let mut store = TensorStore::new();
    for entry in entries {
        if entry.dtype != "f32" {
            return Err(Error::format(format!(
                "tensor '{}': unsupported dtype '{}'",
                entry.name, entry.dtype
            )));
        }
        let numel: usize = entry.shape.iter().product();
        if entry.nbytes != (numel * 4) as u64 {
            return Err(Error::format(format!(
                "tensor '{}': shape {:?} implies {} bytes, manifest says {}",
                entry.name,
                entry.shape,
                numel * 4,
                entry.nbytes
            )));
        }
        let start = entry.offset as usize;
        let end = start + entry.nbytes as usize;
        if end > payload.len() {
            return Err(Error::format(format!(
                "tensor '{}': payload truncated ({} bytes, need {})",
                entry.name,
                payload.len(),
                end
            )));
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        store.insert(NamedTensor::new(entry.name, entry.shape, data)?)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn tensor(name: &str, shape: Vec<usize>, data: Vec<f32>) -> NamedTensor<f32> {
        NamedTensor::new(name, shape, data).unwrap()
    }

    #[test]
    fn payload_size_arithmetic() {
        let mut store = TensorStore::new();
        store
            .insert(tensor("a", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let dir = tempdir().unwrap();
        write_archive(&store, dir.path()).unwrap();
        let payload = fs::read(dir.path().join(PAYLOAD_FILE)).unwrap();
        assert_eq!(payload.len(), 16);
    }

    #[test]
    fn empty_store_round_trips() {
        let store = TensorStore::<f32>::new();
        let dir = tempdir().unwrap();
        write_archive(&store, dir.path()).unwrap();
        let back = read_archive(dir.path()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn round_trip_is_bitwise_exact_over_random_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = TensorStore::new();
        for i in 0..1000 {
            let rows = rng.gen_range(1..6);
            let cols = rng.gen_range(1..6);
            let data: Vec<f32> = (0..rows * cols)
                .map(|_| rng.gen_range(-10.0f32..10.0))
                .collect();
            store
                .insert(tensor(&format!("t{i:04}"), vec![rows, cols], data))
                .unwrap();
        }
        let dir = tempdir().unwrap();
        write_archive(&store, dir.path()).unwrap();
        let back = read_archive(dir.path()).unwrap();
        assert_eq!(back.len(), store.len());
        for t in store.iter() {
            let b = back.get(t.name()).unwrap();
            assert_eq!(b.shape(), t.shape());
            for (x, y) in t.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn writes_are_deterministic() {
        let mut store = TensorStore::new();
        store
            .insert(tensor("b", vec![3], vec![0.5, -1.5, 2.5]))
            .unwrap();
        store.insert(tensor("a", vec![1], vec![42.0])).unwrap();
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        write_archive(&store, d1.path()).unwrap();
        write_archive(&store, d2.path()).unwrap();
        assert_eq!(
            fs::read(d1.path().join(MANIFEST_FILE)).unwrap(),
            fs::read(d2.path().join(MANIFEST_FILE)).unwrap()
        );
        assert_eq!(
            fs::read(d1.path().join(PAYLOAD_FILE)).unwrap(),
            fs::read(d2.path().join(PAYLOAD_FILE)).unwrap()
        );
    }

    #[test]
    fn length_mismatch_is_detected() {
        let mut store = TensorStore::new();
        store
            .insert(tensor("a", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]))
            .unwrap();
        let dir = tempdir().unwrap();
        write_archive(&store, dir.path()).unwrap();
        // Truncate the payload to 12 bytes while the manifest still says 16.
        let payload_path = dir.path().join(PAYLOAD_FILE);
        let payload = fs::read(&payload_path).unwrap();
        fs::write(&payload_path, &payload[..12]).unwrap();
        let err = read_archive(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn unknown_dtype_is_rejected() {
        let mut store = TensorStore::new();
        store.insert(tensor("a", vec![1], vec![1.0])).unwrap();
        let dir = tempdir().unwrap();
        write_archive(&store, dir.path()).unwrap();
        let manifest_path = dir.path().join(MANIFEST_FILE);
        let json = fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("\"f32\"", "\"f16\"");
        fs::write(&manifest_path, json).unwrap();
        let err = read_archive(dir.path()).unwrap_err();
        assert!(err.to_string().contains("unsupported dtype"));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = TensorStore::new();
        store.insert(tensor("x", vec![1], vec![1.0])).unwrap();
        assert!(store.insert(tensor("x", vec![1], vec![2.0])).is_err());
    }

    #[test]
    fn invalid_names_and_shapes_are_rejected() {
        assert!(NamedTensor::<f32>::new("", vec![1], vec![1.0]).is_err());
        assert!(NamedTensor::<f32>::new("a\x00b", vec![1], vec![1.0]).is_err());
        assert!(NamedTensor::<f32>::new("a", vec![0], vec![]).is_err());
        assert!(NamedTensor::<f32>::new("a", vec![2], vec![1.0]).is_err());
    }
}
