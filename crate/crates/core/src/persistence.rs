//! Checkpoint files.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "T": 500,
//!   "alpha": [alpha_1, ..., alpha_T],
//!   "format_version": 1,
//!   "kind": "teacher" | "student",
//!   "metadata": {...},
//!   "net": {
//!     "activation": "smooth-gated" | "tanh",
//!     "hidden_widths": [...],
//!     "input_dim": d,
//!     "layers": [{"b": [...], "w": [row-major out x in]}, ...],
//!     "time_embed_dim": 32
//!   },
//!   "phi": [0, ..., T]
//! }
//! ```
//!
//! Keys are sorted and every float is written with 17 significant digits, so
//! saving a loaded checkpoint reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::{Map, Number, Value};

use crate::data::format_float;
use crate::error::{Error, Result};
use crate::net::{Activation, EpsilonNet, Layer};
use crate::schedule::{AlphaSchedule, SubSequence};
use crate::train::{BundleKind, ModelBundle};

pub const FORMAT_VERSION: i64 = 1;

fn floats(values: impl IntoIterator<Item = f64>) -> Value {
    Value::Array(
        values
            .into_iter()
            .map(|v| Number::from_f64(v).map_or(Value::Null, Value::Number))
            .collect(),
    )
}

fn ints(values: &[usize]) -> Value {
    Value::Array(values.iter().map(|&v| Value::from(v)).collect())
}

pub fn bundle_to_value(bundle: &ModelBundle) -> Value {
    let net = &bundle.net;
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let mut m = Map::new();
            m.insert("w".into(), floats(l.weight.iter().copied()));
            m.insert("b".into(), floats(l.bias.iter().copied()));
            Value::Object(m)
        })
        .collect();
    let mut n = Map::new();
    n.insert("input_dim".into(), Value::from(net.input_dim()));
    n.insert("time_embed_dim".into(), Value::from(net.time_embed_dim()));
    n.insert("hidden_widths".into(), ints(net.hidden_widths()));
    n.insert("activation".into(), Value::from(net.activation().as_str()));
    n.insert("layers".into(), Value::Array(layers));

    let mut m = Map::new();
    m.insert("format_version".into(), Value::from(FORMAT_VERSION));
    m.insert("kind".into(), Value::from(bundle.kind.as_str()));
    m.insert("T".into(), Value::from(bundle.schedule.steps()));
    m.insert("alpha".into(), floats(bundle.schedule.values().iter().copied()));
    m.insert("phi".into(), ints(bundle.phi.as_slice()));
    m.insert("net".into(), Value::Object(n));
    m.insert("metadata".into(), Value::Object(bundle.metadata.clone()));
    Value::Object(m)
}

/// Canonical text of any JSON value: sorted keys, two-space indent, scalar
/// arrays on one line, floats with 17 significant digits.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(value, 0, &mut out);
    out.push('\n');
    out
}

fn write_number(n: &Number, out: &mut String) {
    if let Some(i) = n.as_i64() {
        let _ = write!(out, "{i}");
    } else if let Some(u) = n.as_u64() {
        let _ = write!(out, "{u}");
    } else {
        out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
    }
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

fn write_value(value: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(n, out),
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(is_scalar) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(item, indent, out);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(item, indent + 1, out);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(&map[*key], indent + 1, out);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn bundle_to_json(bundle: &ModelBundle) -> String {
    canonical_json(&bundle_to_value(bundle))
}

pub fn save_bundle(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bundle_to_json(bundle)).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    bundle_from_json(&text)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::schema(format!("missing field `{ctx}{key}`")))
}

fn as_object<'a>(v: &'a Value, name: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::schema(format!("`{name}` must be an object")))
}

fn as_usize(v: &Value, name: &str) -> Result<usize> {
    v.as_u64()
        .map(|u| u as usize)
        .ok_or_else(|| Error::schema(format!("`{name}` must be a non-negative integer")))
}

fn as_usizes(v: &Value, name: &str) -> Result<Vec<usize>> {
    v.as_array()
        .ok_or_else(|| Error::schema(format!("`{name}` must be an array")))?
        .iter()
        .enumerate()
        .map(|(i, x)| as_usize(x, &format!("{name}[{i}]")))
        .collect()
}

fn as_floats(v: &Value, name: &str) -> Result<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Error::schema(format!("`{name}` must be an array")))?
        .iter()
        .enumerate()
        .map(|(i, x)| x.as_f64().ok_or_else(|| Error::schema(format!("`{name}[{i}]` must be a number"))))
        .collect()
}

pub fn bundle_from_json(text: &str) -> Result<ModelBundle> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::schema(format!("not valid JSON: {e}")))?;
    bundle_from_value(&root)
}

pub fn bundle_from_value(root: &Value) -> Result<ModelBundle> {
    let root = as_object(root, "checkpoint")?;
    let version = field(root, "format_version", "")?
        .as_i64()
        .ok_or_else(|| Error::schema("`format_version` must be an integer"))?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let kind: BundleKind = field(root, "kind", "")?
        .as_str()
        .ok_or_else(|| Error::schema("`kind` must be a string"))?
        .parse()?;
    let steps = as_usize(field(root, "T", "")?, "T")?;
    let alpha = as_floats(field(root, "alpha", "")?, "alpha")?;
    if alpha.len() != steps {
        return Err(Error::schema(format!("alpha has {} entries but T = {steps}", alpha.len())));
    }
    if steps == 0 {
        return Err(Error::schema("T must be at least 1"));
    }
    let schedule = AlphaSchedule::from_values(alpha)?;
    let phi = SubSequence::new(as_usizes(field(root, "phi", "")?, "phi")?, steps)?;

    let net = as_object(field(root, "net", "")?, "net")?;
    let input_dim = as_usize(field(net, "input_dim", "net.")?, "net.input_dim")?;
    let time_embed_dim = as_usize(field(net, "time_embed_dim", "net.")?, "net.time_embed_dim")?;
    let hidden = as_usizes(field(net, "hidden_widths", "net.")?, "net.hidden_widths")?;
    let activation: Activation = field(net, "activation", "net.")?
        .as_str()
        .ok_or_else(|| Error::schema("`net.activation` must be a string"))?
        .parse()
        .map_err(|e: Error| Error::schema(e.to_string()))?;
    let skeleton = EpsilonNet::zeros(input_dim, time_embed_dim, &hidden, activation)
        .map_err(|e| Error::schema(format!("net: {e}")))?;
    let raw_layers = field(net, "layers", "net.")?
        .as_array()
        .ok_or_else(|| Error::schema("`net.layers` must be an array"))?;
    if raw_layers.len() != skeleton.layers().len() {
        return Err(Error::schema(format!(
            "net.layers has {} entries, architecture needs {}",
            raw_layers.len(),
            skeleton.layers().len()
        )));
    }
    let mut layers = Vec::with_capacity(raw_layers.len());
    for (i, (raw, want)) in raw_layers.iter().zip(skeleton.layers()).enumerate() {
        let ctx = format!("net.layers[{i}]");
        let obj = as_object(raw, &ctx)?;
        let w = as_floats(field(obj, "w", &format!("{ctx}."))?, &format!("{ctx}.w"))?;
        let b = as_floats(field(obj, "b", &format!("{ctx}."))?, &format!("{ctx}.b"))?;
        let (rows, cols) = want.weight.dim();
        if w.len() != rows * cols || b.len() != rows {
            return Err(Error::schema(format!(
                "{ctx}: expected {} weights and {rows} biases, got {} and {}",
                rows * cols,
                w.len(),
                b.len()
            )));
        }
        layers.push(Layer {
            weight: Array2::from_shape_vec((rows, cols), w).expect("length checked"),
            bias: Array1::from(b),
        });
    }
    let net = EpsilonNet::from_layers(input_dim, time_embed_dim, &hidden, activation, layers)?;

    let metadata = match root.get("metadata") {
        None => Map::new(),
        Some(v) => as_object(v, "metadata")?.clone(),
    };
    ModelBundle::new(kind, schedule, phi, net, metadata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{make_sigmoid_schedule, uniform_subsequence};
    use proptest::prelude::*;
    use serde_json::json;

    fn teacher(t: usize) -> ModelBundle {
        let schedule = make_sigmoid_schedule(t, -3.0, 3.0, 1.0).unwrap();
        let net = EpsilonNet::new(2, 8, &[6, 5], Activation::SmoothGated, 4).unwrap();
        let mut meta = Map::new();
        meta.insert("dataset".into(), json!("swiss-roll"));
        meta.insert("lr".into(), json!(2e-4));
        meta.insert("note".into(), json!({"z": [1, 2.5, "x"], "a": null}));
        ModelBundle::new(BundleKind::Teacher, schedule, SubSequence::identity(t), net, meta).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let b = teacher(500);
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        save_bundle(&b, &p1).unwrap();
        let back = load_bundle(&p1).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.schedule.values().len(), 500);
        save_bundle(&back, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn keys_are_sorted() {
        let text = bundle_to_json(&teacher(5));
        let order: Vec<usize> = ["\"T\"", "\"alpha\"", "\"format_version\"", "\"kind\"", "\"metadata\"", "\"net\"", "\"phi\""]
            .iter()
            .map(|k| text.find(k).unwrap())
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]));
    }

    fn corrupt(f: impl FnOnce(&mut Map<String, Value>)) -> Error {
        let mut v = bundle_to_value(&teacher(10));
        f(v.as_object_mut().unwrap());
        bundle_from_json(&canonical_json(&v)).unwrap_err()
    }

    #[test]
    fn invalid_files_name_the_violation() {
        let e = corrupt(|m| {
            let a = m["alpha"].as_array_mut().unwrap();
            a.swap(3, 4);
        });
        assert!(e.to_string().contains("strictly decreasing"), "{e}");

        let e = corrupt(|m| m["format_version"] = json!(2));
        assert!(matches!(e, Error::VersionMismatch { found: 2, expected: 1 }));

        let e = corrupt(|m| {
            m.remove("phi");
        });
        assert!(e.to_string().contains("missing field `phi`"), "{e}");

        let e = corrupt(|m| m["phi"] = json!([0, 3, 6, 9]));
        assert!(e.to_string().contains("must end at T = 10"), "{e}");

        let e = corrupt(|m| m["kind"] = json!("critic"));
        assert!(e.to_string().contains("kind"), "{e}");

        let e = corrupt(|m| {
            m["net"]["layers"][0]["w"].as_array_mut().unwrap().pop();
        });
        assert!(e.to_string().contains("net.layers[0]"), "{e}");

        let e = corrupt(|m| m["T"] = json!(11));
        assert!(e.to_string().contains("alpha has 10 entries"), "{e}");

        let e = corrupt(|m| m["phi"] = json!([0, 5, 10]));
        assert!(e.to_string().contains("identity"), "{e}");

        assert!(matches!(bundle_from_json("{not json"), Err(Error::SchemaViolation(_))));
    }

    prop_compose! {
        fn arb_bundle()(
            t in 2usize..40,
            frac in 0.0f64..1.0,
            widths in prop::collection::vec(1usize..6, 0..3),
            d in 1usize..4,
            half in 1usize..4,
            seed in any::<u64>(),
            tanh in any::<bool>(),
            scale in -200i32..200,
        ) -> ModelBundle {
            let schedule = make_sigmoid_schedule(t, -3.0, 3.0, 1.0).unwrap();
            let tp = 1 + ((t - 1) as f64 * frac) as usize;
            let phi = uniform_subsequence(t, tp).unwrap();
            let act = if tanh { Activation::Tanh } else { Activation::SmoothGated };
            let mut net = EpsilonNet::new(d, 2 * half, &widths, act, seed).unwrap();
            let factor = 10f64.powi(scale);
            for l in net.layers_mut() {
                l.weight.mapv_inplace(|w| w * factor);
                l.bias.mapv_inplace(|_| factor / 3.0);
            }
            let mut meta = Map::new();
            meta.insert("seed".into(), json!(seed));
            meta.insert("x".into(), json!(factor));
            ModelBundle::new(BundleKind::Student, schedule, phi, net, meta).unwrap()
        }
    }

    proptest! {
        #[test]
        fn random_bundles_round_trip(b in arb_bundle()) {
            let text = bundle_to_json(&b);
            let back = bundle_from_json(&text).unwrap();
            prop_assert_eq!(&back, &b);
            prop_assert_eq!(bundle_to_json(&back), text);
        }
    }
}
