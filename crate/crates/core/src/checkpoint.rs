//! Self-describing model checkpoints.
//!
//! Layout: a text header followed by a raw binary payload.
//!
//! ```text
//! CTN-CHECKPOINT v1\n
//! variant = full\n            (model configuration block)
//! input_h = 384\n
//! ...
//! param <name> <d0> <d1> ...\n  (one line per parameter, manifest order)
//! data\n
//! <little-endian f64 values for each parameter, in manifest order>
//! ```

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{CtnModel, InitScheme, ModelConfig, Variant};
use crate::tensor::Tensor;

const MAGIC: &str = "CTN-CHECKPOINT v1";

pub fn save(model: &CtnModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    let cfg = &model.cfg;
    header.push_str(&format!("variant = {}\n", cfg.variant.as_str()));
    header.push_str(&format!("input_h = {}\n", cfg.input_h));
    header.push_str(&format!("input_w = {}\n", cfg.input_w));
    header.push_str(&format!("width = {}\n", cfg.width));
    header.push_str(&format!("heads = {}\n", cfg.heads));
    header.push_str(&format!("context_m = {}\n", cfg.context_m));
    header.push_str(&format!("scale_scores = {}\n", cfg.scale_scores));
    for (_, p) in model.params.iter() {
        header.push_str(&format!("param {}", p.name));
        for d in p.value.shape() {
            header.push_str(&format!(" {d}"));
        }
        header.push('\n');
    }
    header.push_str("data\n");
    out.write_all(header.as_bytes()).map_err(|e| Error::io(path, e))?;
    for (_, p) in model.params.iter() {
        for &v in p.value.data() {
            out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<CtnModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;

    // Walk header lines up to the `data` marker, tracking the byte offset.
    let mut offset = 0usize;
    let mut lines: Vec<String> = Vec::new();
    loop {
        let nl = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(path, "unterminated header"))?;
        let line = std::str::from_utf8(&bytes[offset..offset + nl])
            .map_err(|_| Error::parse(path, "header is not UTF-8"))?
            .to_string();
        offset += nl + 1;
        if line == "data" {
            break;
        }
        lines.push(line);
    }
    if lines.first().map(String::as_str) != Some(MAGIC) {
        return Err(Error::parse(path, "not a checkpoint file"));
    }

    let mut cfg_pairs = Vec::new();
    let mut manifest: Vec<(String, Vec<usize>)> = Vec::new();
    for line in &lines[1..] {
        if let Some(rest) = line.strip_prefix("param ") {
            let mut f = rest.split_whitespace();
            let name = f
                .next()
                .ok_or_else(|| Error::parse(path, "param line missing name"))?
                .to_string();
            let shape: Vec<usize> = f
                .map(|d| d.parse().map_err(|_| Error::parse(path, format!("bad dim in '{line}'"))))
                .collect::<Result<_>>()?;
            manifest.push((name, shape));
        } else if let Some((k, v)) = line.split_once('=') {
            cfg_pairs.push((k.trim().to_string(), v.trim().to_string()));
        } else {
            return Err(Error::parse(path, format!("unexpected header line '{line}'")));
        }
    }

    let get = |key: &str| -> Result<String> {
        cfg_pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::parse(path, format!("missing config key '{key}'")))
    };
    let get_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::parse(path, format!("bad value for '{key}'")))
    };
    let cfg = ModelConfig {
        input_h: get_usize("input_h")?,
        input_w: get_usize("input_w")?,
        width: get_usize("width")?,
        heads: get_usize("heads")?,
        context_m: get_usize("context_m")?,
        variant: Variant::parse(&get("variant")?)?,
        scale_scores: get("scale_scores")? == "true",
    };

    // Gaussian with zero std fills every weight with zeros; actual values
    // come from the payload below.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = CtnModel::new(cfg, InitScheme::Gaussian { std: 0.0 }, &mut rng)?;

    if manifest.len() != model.params.len() {
        return Err(Error::parse(
            path,
            format!(
                "checkpoint has {} parameters, model needs {}",
                manifest.len(),
                model.params.len()
            ),
        ));
    }

    let payload = &bytes[offset..];
    let mut cursor = 0usize;
    for (name, shape) in &manifest {
        let (id, param) = model
            .params
            .by_name(name)
            .ok_or_else(|| Error::parse(path, format!("unknown parameter '{name}'")))?;
        if param.value.shape() != shape.as_slice() {
            return Err(Error::parse(
                path,
                format!(
                    "parameter '{name}' has shape {:?} in checkpoint, model expects {:?}",
                    shape,
                    param.value.shape()
                ),
            ));
        }
        let numel: usize = shape.iter().product();
        let need = numel * 8;
        if payload.len() < cursor + need {
            return Err(Error::parse(path, format!("payload truncated at parameter '{name}'")));
        }
        let data: Vec<f64> = payload[cursor..cursor + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += need;
        model.params.set_value(id, Tensor::new(shape.clone(), data));
    }
    if cursor != payload.len() {
        return Err(Error::parse(
            path,
            format!("{} trailing payload bytes", payload.len() - cursor),
        ));
    }
    Ok(model)
}
