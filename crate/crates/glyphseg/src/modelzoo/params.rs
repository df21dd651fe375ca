//! Parameter initialization, checksums and weight files.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use candle_nn::VarMap;
use glyphseg_core::seed;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Overwrites every variable with values drawn from a per-name seeded
/// generator, so initialization is reproducible and independent of the
/// order in which modules were built.
///
/// Biases start at zero, rank-1 weights (norm scales) at one, random
/// Fourier matrices from a standard normal, and everything else from
/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_deterministic(varmap: &VarMap, base_seed: u64) -> Result<()> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    for (name, var) in data.iter() {
        let t = var.as_tensor();
        let dims = t.dims().to_vec();
        let n: usize = dims.iter().product();
        let mut rng = seed::rng(seed::item_seed(base_seed, name, "init", 0));
        let values: Vec<f64> = if name.ends_with("bias") {
            vec![0.0; n]
        } else if dims.len() == 1 && name.ends_with("weight") {
            vec![1.0; n]
        } else if name.contains("gaussian") {
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        } else {
            let fan_in: usize = dims.iter().skip(1).product::<usize>().max(1);
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let value = Tensor::from_vec(values, dims.as_slice(), t.device())?.to_dtype(t.dtype())?;
        var.set(&value)?;
    }
    Ok(())
}

/// Detached copies of all variables, keyed by name.
pub fn snapshot(varmap: &VarMap) -> Result<BTreeMap<String, Tensor>> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    data.iter()
        .map(|(k, v)| Ok((k.clone(), v.as_tensor().detach().copy()?)))
        .collect()
}

/// Writes `values` into the matching variables of `varmap`; every variable
/// must have a value of the same shape.
pub fn restore(varmap: &VarMap, values: &BTreeMap<String, Tensor>) -> Result<()> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    for (name, var) in data.iter() {
        let v = values
            .get(name)
            .ok_or_else(|| Error::Config(format!("checkpoint has no tensor `{name}`")))?;
        var.set(&v.to_dtype(var.dtype())?.to_device(var.device())?)?;
    }
    Ok(())
}

pub fn parameter_count(varmap: &VarMap) -> usize {
    varmap
        .all_vars()
        .iter()
        .map(|v| v.as_tensor().elem_count())
        .sum()
}

/// SHA-256 over names, shapes and little-endian f32 values, in name order.
pub fn checksum<'a, I>(tensors: I) -> Result<String>
where
    I: IntoIterator<Item = (&'a String, &'a Tensor)>,
{
    let mut sorted: Vec<(&String, &Tensor)> = tensors.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut h = Sha256::new();
    for (name, t) in sorted {
        h.update(name.as_bytes());
        for d in t.dims() {
            h.update((*d as u64).to_le_bytes());
        }
        let flat = t.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        for v in flat {
            h.update(v.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

pub fn varmap_checksum(varmap: &VarMap) -> Result<String> {
    let snap = snapshot(varmap)?;
    checksum(snap.iter())
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Reads every tensor from a `.safetensors` or PyTorch `.pth` file.
pub fn read_weight_file(path: &Path, device: &Device) -> Result<HashMap<String, Tensor>> {
    if !path.exists() {
        return Err(Error::WeightsNotFound(path.to_path_buf()));
    }
    let is_safetensors = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("safetensors"));
    let tensors: HashMap<String, Tensor> = if is_safetensors {
        candle_core::safetensors::load(path, device)?
    } else {
        candle_core::pickle::read_all(path)?
            .into_iter()
            .map(|(k, v)| Ok((k, v.to_device(device)?)))
            .collect::<Result<_>>()?
    };
    tensors
        .into_iter()
        .map(|(k, v)| Ok((k, v.to_dtype(DType::F32)?)))
        .collect()
}

/// Tensors whose name starts with `prefix.`, with the prefix stripped.
pub fn with_prefix(tensors: &HashMap<String, Tensor>, prefix: &str) -> HashMap<String, Tensor> {
    let p = format!("{prefix}.");
    tensors
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(&p).map(|s| (s.to_string(), v.clone())))
        .collect()
}
