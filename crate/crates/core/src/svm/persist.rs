//! `<name>.json` model description plus `<name>.bin` little-endian float64
//! sidecar holding support vectors and coefficients.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BinaryModel, KernelSpec, MulticlassModel, SvmParams};
use crate::error::{Error, Result};
use crate::raster::format::{data_file_name, header_path};

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    dtype: String,
    byte_order: String,
    dim: usize,
    classes: Vec<u8>,
    params: SvmParams,
    pairwise: Vec<PairHeader>,
    data: String,
}

/// Sidecar layout per pair: `n_sv × dim` support-vector values, then `n_sv` coefficients.
#[derive(Serialize, Deserialize)]
struct PairHeader {
    kernel: KernelSpec,
    n_sv: usize,
    rho: f64,
    platt_a: f64,
    platt_b: f64,
    support_indices: Vec<usize>,
    dual_objective: f64,
    margin_scale: f64,
    iterations: usize,
    converged: bool,
}

pub fn save_model(model: &MulticlassModel, path: impl AsRef<Path>) -> Result<()> {
    let hp = header_path(path.as_ref());
    let mut floats = Vec::new();
    let mut pairwise = Vec::with_capacity(model.pairwise.len());
    for m in &model.pairwise {
        for sv in &m.support_vectors {
            floats.extend_from_slice(sv);
        }
        floats.extend_from_slice(&m.coef);
        pairwise.push(PairHeader {
            kernel: m.kernel.clone(),
            n_sv: m.coef.len(),
            rho: m.rho,
            platt_a: m.platt_a,
            platt_b: m.platt_b,
            support_indices: m.support_indices.clone(),
            dual_objective: m.dual_objective,
            margin_scale: m.margin_scale,
            iterations: m.iterations,
            converged: m.converged,
        });
    }
    let header = ModelHeader {
        dtype: "float64".into(),
        byte_order: "LE".into(),
        dim: model.dim,
        classes: model.classes.clone(),
        params: model.params.clone(),
        pairwise,
        data: data_file_name(&hp),
    };
    let dp = hp.parent().unwrap_or(Path::new(".")).join(&header.data);
    let bytes: Vec<u8> = floats.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&dp, bytes).map_err(|e| Error::io(&dp, e))?;
    fs::write(&hp, serde_json::to_string_pretty(&header)?).map_err(|e| Error::io(&hp, e))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MulticlassModel> {
    let hp = header_path(path.as_ref());
    let text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: ModelHeader = serde_json::from_str(&text).map_err(|e| Error::Header {
        path: hp.clone(),
        message: e.to_string(),
    })?;
    if header.dtype != "float64" || header.byte_order != "LE" {
        return Err(Error::Header {
            path: hp,
            message: format!("unsupported layout {} {}", header.dtype, header.byte_order),
        });
    }
    let dp = hp.parent().unwrap_or(Path::new(".")).join(&header.data);
    let bytes = fs::read(&dp).map_err(|e| Error::io(&dp, e))?;
    let expected: usize = header
        .pairwise
        .iter()
        .map(|p| p.n_sv * (header.dim + 1))
        .sum::<usize>()
        * 8;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let floats: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut at = 0;
    let mut pairwise = Vec::with_capacity(header.pairwise.len());
    for p in header.pairwise {
        let support_vectors = (0..p.n_sv)
            .map(|s| floats[at + s * header.dim..at + (s + 1) * header.dim].to_vec())
            .collect();
        at += p.n_sv * header.dim;
        let coef = floats[at..at + p.n_sv].to_vec();
        at += p.n_sv;
        pairwise.push(BinaryModel {
            kernel: p.kernel,
            support_vectors,
            coef,
            rho: p.rho,
            platt_a: p.platt_a,
            platt_b: p.platt_b,
            support_indices: p.support_indices,
            dual_objective: p.dual_objective,
            margin_scale: p.margin_scale,
            iterations: p.iterations,
            converged: p.converged,
        });
    }
    Ok(MulticlassModel {
        classes: header.classes,
        pairwise,
        dim: header.dim,
        params: header.params,
    })
}
