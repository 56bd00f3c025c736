//! Portable text checkpoints.
//!
//! ```text
//! nornet-checkpoint 1
//! config <n>
//! <n lines of TOML model config>
//! params <m>
//! <name> <dim>x<dim>... <value> <value> ...
//! ```
//!
//! Values are written in shortest round-trip form, so loading restores every
//! parameter bit for bit.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;

const MAGIC: &str = "nornet-checkpoint 1";

pub fn write_checkpoint(model: &Model) -> Result<String> {
    let config = toml::to_string(&model.config).map_err(|e| Error::contract(format!("config serialization: {e}")))?;
    let lines: Vec<&str> = config.lines().collect();
    let mut out = format!("{MAGIC}\nconfig {}\n", lines.len());
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out.push_str(&format!("params {}\n", model.store.len()));
    for (_, name, t) in model.store.iter() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        out.push_str(name);
        out.push(' ');
        out.push_str(if dims.is_empty() { "scalar" } else { "" });
        out.push_str(&dims.join("x"));
        for v in t.data() {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(model)?).map_err(|e| Error::io(path, e))
}

/// Rebuilds the model from its config and fills in every parameter.
pub fn read_checkpoint(text: &str, origin: &Path) -> Result<Model> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let lines: Vec<&str> = text.lines().collect();
    let get = |i: usize| lines.get(i).copied().ok_or_else(|| err(i + 1, "unexpected end of file".into()));
    if get(0)? != MAGIC {
        return Err(err(1, format!("expected {MAGIC:?}")));
    }
    let count = |i: usize, key: &str| -> Result<usize> {
        get(i)?
            .strip_prefix(key)
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| err(i + 1, format!("expected `{key} <count>`")))
    };
    let n_cfg = count(1, "config ")?;
    let cfg_text = (2..2 + n_cfg).map(get).collect::<Result<Vec<_>>>()?.join("\n");
    let config: ModelConfig = toml::from_str(&cfg_text).map_err(|e| err(3, format!("config: {e}")))?;
    let mut model = Model::build(config)?;
    let p_line = 2 + n_cfg;
    let n_params = count(p_line, "params ")?;
    if n_params != model.store.len() {
        return Err(err(p_line + 1, format!("{n_params} params, config has {}", model.store.len())));
    }
    let ids: Vec<_> = model.store.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let lineno = p_line + 2 + k;
        let mut fields = get(lineno - 1)?.split(' ');
        let name = fields.next().unwrap_or_default();
        if name != model.store.name(id) {
            return Err(err(lineno, format!("expected {}, found {name}", model.store.name(id))));
        }
        let shape_field = fields.next().unwrap_or_default();
        let shape: Vec<usize> = if shape_field == "scalar" {
            Vec::new()
        } else {
            shape_field
                .split('x')
                .map(|d| d.parse().map_err(|_| err(lineno, format!("bad shape {shape_field:?}"))))
                .collect::<Result<_>>()?
        };
        let data: Vec<f64> = fields
            .map(|v| v.parse().map_err(|_| err(lineno, format!("bad value {v:?}"))))
            .collect::<Result<_>>()?;
        let t = Tensor::new(shape, data).map_err(|e| err(lineno, e.to_string()))?;
        model.store.set(id, t).map_err(|e| err(lineno, e.to_string()))?;
    }
    Ok(model)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&text, path)
}
