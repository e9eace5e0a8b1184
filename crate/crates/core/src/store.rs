//! Named parameter tensors with trainability masks, saved as a flat little-endian
//! blob plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::lie::{LieParams, Support};
use crate::linalg::Mat;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct StoredParam<T> {
    pub name: String,
    pub value: Mat<T>,
    /// Row-major, one flag per entry; `false` entries never move.
    pub mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<StoredParam<T>>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dtype: String,
    seed: u64,
    params: Vec<SidecarEntry>,
}

#[derive(Serialize, Deserialize)]
struct SidecarEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    mask: Vec<bool>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            params: Vec::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Adds a tensor; `mask = None` makes every entry trainable.
    pub fn insert(&mut self, name: &str, value: Mat<T>, mask: Option<Vec<bool>>) -> Result<()> {
        if self.get(name).is_some() {
            return Err(Error::InvalidConfig(format!("parameter {name:?} already exists")));
        }
        let n = value.as_slice().len();
        let mask = mask.unwrap_or_else(|| vec![true; n]);
        if mask.len() != n {
            return Err(shape_err(format!("{n} mask flags"), mask.len()));
        }
        self.params.push(StoredParam {
            name: name.to_string(),
            value,
            mask,
        });
        Ok(())
    }

    /// Stores the full `N' × K` entries of Lie parameters with the intrinsic-rank and support mask.
    pub fn insert_lie(&mut self, name: &str, params: &LieParams<T>, support: Support) -> Result<()> {
        let e = params.entries();
        let mask = (0..e.rows())
            .flat_map(|i| (0..e.cols()).map(move |k| (i, k)))
            .map(|(i, k)| k < params.intrinsic_rank() && i >= support.first_row(k))
            .collect();
        self.insert(name, e.clone(), Some(mask))
    }

    pub fn get(&self, name: &str) -> Option<&StoredParam<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut StoredParam<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredParam<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut StoredParam<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn trainable_count(&self) -> usize {
        self.params.iter().map(|p| p.mask.iter().filter(|m| **m).count()).sum()
    }

    pub fn to_blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for p in &self.params {
            for &v in p.value.as_slice() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn sidecar_json(&self) -> Result<String> {
        let mut offset = 0;
        let params = self
            .params
            .iter()
            .map(|p| {
                let e = SidecarEntry {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    offset,
                    mask: p.mask.clone(),
                };
                offset += p.value.as_slice().len() * T::BYTES;
                e
            })
            .collect();
        Ok(serde_json::to_string_pretty(&Sidecar {
            dtype: T::DTYPE.to_string(),
            seed: self.seed,
            params,
        })?)
    }

    pub fn from_parts(blob: &[u8], sidecar: &str) -> Result<Self> {
        let meta: Sidecar = serde_json::from_str(sidecar)?;
        if meta.dtype != T::DTYPE {
            return Err(Error::Format(format!("store holds {} values, expected {}", meta.dtype, T::DTYPE)));
        }
        let mut store = Self::new(meta.seed);
        let mut end = 0;
        for e in meta.params {
            let n = e.rows * e.cols;
            let stop = e.offset + n * T::BYTES;
            let bytes = blob
                .get(e.offset..stop)
                .ok_or_else(|| Error::Format(format!("blob too short for {:?}", e.name)))?;
            let value = Mat::from_vec(e.rows, e.cols, bytes.chunks_exact(T::BYTES).map(T::read_le).collect())?;
            store.insert(&e.name, value, Some(e.mask))?;
            end = end.max(stop);
        }
        if end != blob.len() {
            return Err(Error::Format(format!("blob has {} bytes, sidecar describes {end}", blob.len())));
        }
        Ok(store)
    }

    /// Writes `<stem>.bin` and `<stem>.json`.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let (bin, json) = paths(stem.as_ref());
        fs::write(bin, self.to_blob())?;
        fs::write(json, self.sidecar_json()?)?;
        Ok(())
    }

    pub fn load(stem: impl AsRef<Path>) -> Result<Self> {
        let (bin, json) = paths(stem.as_ref());
        Self::from_parts(&fs::read(bin)?, &fs::read_to_string(json)?)
    }
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore<f64> {
        let mut s = ParamStore::new(42);
        s.insert("angles", Mat::column(&[0.1, -0.2, 1e-300, f64::MIN_POSITIVE]), None).unwrap();
        let lie = LieParams::from_entries(Mat::from_fn(4, 2, |i, k| (i * 2 + k) as f64 * 0.01), 1).unwrap();
        s.insert_lie("b", &lie, Support::StrictLower).unwrap();
        s
    }

    #[test]
    fn lie_mask_covers_trainable_triangle() {
        let s = sample();
        let b = s.get("b").unwrap();
        // column 0 rows 1..4 trainable, column 1 frozen
        assert_eq!(b.mask, vec![false, false, true, false, true, false, true, false]);
        assert_eq!(s.trainable_count(), 4 + 3);
    }

    #[test]
    fn blob_roundtrip_is_bit_exact() {
        let s = sample();
        let back = ParamStore::<f64>::from_parts(&s.to_blob(), &s.sidecar_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.seed(), 42);
        assert!(ParamStore::<f32>::from_parts(&s.to_blob(), &s.sidecar_json().unwrap()).is_err());
        let blob = s.to_blob();
        assert!(ParamStore::<f64>::from_parts(&blob[..blob.len() - 8], &s.sidecar_json().unwrap()).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = std::env::temp_dir().join(format!("qpeft-store-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let s = sample();
        s.save(dir.join("run")).unwrap();
        assert_eq!(ParamStore::<f64>::load(dir.join("run")).unwrap(), s);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn duplicate_and_bad_masks_rejected() {
        let mut s = sample();
        assert!(s.insert("angles", Mat::column(&[1.0]), None).is_err());
        assert!(s.insert("c", Mat::column(&[1.0, 2.0]), Some(vec![true])).is_err());
    }
}
