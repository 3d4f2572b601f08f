//! Versioned text checkpoints.
//!
//! The document is valid TOML: `version`, `layer_dims`, `activation`, then one
//! `[[layer]]` table per layer with row-major `weights` and `biases`. Floats
//! are written with 17 significant digits so every `f64` survives a round trip.

use std::fmt::Write as _;
use std::path::Path;

use super::{Activation, MlpModel};
use crate::error::{LabError, Result};

pub const CHECKPOINT_VERSION: i64 = 1;

fn push_floats(out: &mut String, key: &str, values: &[f64]) {
    let _ = write!(out, "{key} = [");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push_str("]\n");
}

pub fn to_string(model: &MlpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version = {CHECKPOINT_VERSION}");
    let dims: Vec<String> = model.layer_dims().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "layer_dims = [{}]", dims.join(", "));
    let _ = writeln!(out, "activation = \"{}\"", model.activation().name());
    for l in 0..model.num_layers() {
        out.push_str("\n[[layer]]\n");
        push_floats(&mut out, "weights", model.weights(l));
        push_floats(&mut out, "biases", model.biases(l));
    }
    out
}

fn field<'a>(table: &'a toml::Table, key: &str, ctx: &str) -> Result<&'a toml::Value> {
    table.get(key).ok_or_else(|| LabError::Parse(format!("{ctx}: missing field `{key}`")))
}

fn float_array(value: &toml::Value, ctx: &str) -> Result<Vec<f64>> {
    let arr = value.as_array().ok_or_else(|| LabError::Parse(format!("{ctx}: expected an array of floats")))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(n) => Ok(*n as f64),
            _ => Err(LabError::Parse(format!("{ctx}[{i}]: expected a number"))),
        })
        .collect()
}

pub fn from_str(text: &str) -> Result<MlpModel> {
    let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| LabError::Parse(format!("checkpoint: {}", e.message())))?;
    let version = field(&doc, "version", "checkpoint")?
        .as_integer()
        .ok_or_else(|| LabError::Parse("checkpoint: field `version` must be an integer".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(LabError::Version { found: version, expected: CHECKPOINT_VERSION });
    }
    let dims = field(&doc, "layer_dims", "checkpoint")?
        .as_array()
        .ok_or_else(|| LabError::Parse("checkpoint: field `layer_dims` must be an array".into()))?
        .iter()
        .map(|v| {
            v.as_integer()
                .filter(|&n| n > 0)
                .map(|n| n as usize)
                .ok_or_else(|| LabError::Parse("checkpoint: field `layer_dims` must hold positive integers".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let activation = field(&doc, "activation", "checkpoint")?
        .as_str()
        .and_then(Activation::parse)
        .ok_or_else(|| LabError::Parse("checkpoint: field `activation` must be \"relu\" or \"tanh\"".into()))?;
    let layers = field(&doc, "layer", "checkpoint")?
        .as_array()
        .ok_or_else(|| LabError::Parse("checkpoint: field `layer` must be an array of tables".into()))?;
    let mut weights = Vec::with_capacity(layers.len());
    let mut biases = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let ctx = format!("layer[{l}]");
        let table = layer.as_table().ok_or_else(|| LabError::Parse(format!("{ctx}: expected a table")))?;
        weights.push(float_array(field(table, "weights", &ctx)?, &format!("{ctx}.weights"))?);
        biases.push(float_array(field(table, "biases", &ctx)?, &format!("{ctx}.biases"))?);
    }
    MlpModel::from_parts(dims, activation, weights, biases).map_err(|e| match e {
        LabError::Shape(msg) => LabError::Parse(format!("checkpoint: {msg}")),
        other => other,
    })
}

pub fn save(model: &MlpModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<MlpModel> {
    from_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = init_params(&[4, 10, 3], Activation::Tanh, 9).unwrap();
        let back = from_str(&to_string(&m)).unwrap();
        assert!(back.bit_identical(&m));
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = init_params(&[2, 3, 2], Activation::Relu, 1).unwrap();
        save(&m, &path).unwrap();
        assert!(load(&path).unwrap().bit_identical(&m));
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let m = init_params(&[4, 10, 3], Activation::Relu, 9).unwrap();
        let text = to_string(&m);
        let cut = &text[..text.len() / 2];
        assert!(matches!(from_str(cut), Err(LabError::Parse(_))));
    }

    #[test]
    fn future_version_is_rejected() {
        let m = init_params(&[2, 2], Activation::Relu, 9).unwrap();
        let text = to_string(&m).replacen("version = 1", "version = 99", 1);
        assert!(matches!(from_str(&text), Err(LabError::Version { found: 99, .. })));
    }

    #[test]
    fn missing_field_is_named() {
        let text = "version = 1\nlayer_dims = [2, 2]\n";
        match from_str(text) {
            Err(LabError::Parse(msg)) => assert!(msg.contains("activation"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_weight_count_is_parse_error() {
        let text = "version = 1\nlayer_dims = [2, 2]\nactivation = \"relu\"\n[[layer]]\nweights = [1.0]\nbiases = [0.0, 0.0]\n";
        assert!(matches!(from_str(text), Err(LabError::Parse(_))));
    }
}
