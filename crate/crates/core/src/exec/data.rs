//! Kernel inputs and outputs, their JSON form and random generation.

use std::collections::BTreeMap;

use rand::Rng;
use serde_json::{json, Map, Value};

use super::ExecError;
use crate::ir::{ElemTy, Lit, ParamKind, Program, ScalarTy};

/// Named scalars and buffers, used both as launch input and as output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KernelData {
    pub scalars: BTreeMap<String, Lit>,
    pub buffers: BTreeMap<String, Vec<Lit>>,
}

/// Default length for buffers declared without a size.
pub const UNSIZED_LEN: usize = 64;

fn lit_bits(l: &Lit) -> (u8, u64) {
    match *l {
        Lit::I64(x) => (0, x as u64),
        Lit::F64(x) => (1, x.to_bits()),
        Lit::Bool(b) => (2, b as u64),
    }
}

pub fn lit_json(l: Lit) -> Value {
    match l {
        Lit::I64(x) => json!(x),
        Lit::F64(x) if x.is_nan() => json!("nan"),
        Lit::F64(x) if x.is_infinite() => json!(if x > 0.0 { "inf" } else { "-inf" }),
        Lit::F64(x) => json!(x),
        Lit::Bool(b) => json!(b),
    }
}

fn json_lit(v: &Value, ty: ScalarTy, what: &str) -> Result<Lit, ExecError> {
    let bad = || ExecError::Input(format!("{what}: expected {ty}, found {v}"));
    match ty {
        ScalarTy::I64 => v.as_i64().map(Lit::I64).ok_or_else(bad),
        ScalarTy::F64 => match v {
            Value::Number(n) => n.as_f64().map(Lit::F64).ok_or_else(bad),
            Value::String(s) => match s.as_str() {
                "nan" => Ok(Lit::F64(f64::NAN)),
                "inf" => Ok(Lit::F64(f64::INFINITY)),
                "-inf" => Ok(Lit::F64(f64::NEG_INFINITY)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        },
        ScalarTy::Bool => v.as_bool().map(Lit::Bool).ok_or_else(bad),
    }
}

impl KernelData {
    /// Bitwise equality (distinguishes NaN payloads and signed zeros).
    pub fn bits_eq(&self, other: &KernelData) -> bool {
        self.first_difference(other).is_none()
    }

    pub fn first_difference(&self, other: &KernelData) -> Option<String> {
        for (name, a) in &self.buffers {
            let Some(b) = other.buffers.get(name) else {
                return Some(format!("buffer {name} missing"));
            };
            if a.len() != b.len() {
                return Some(format!("buffer {name}: length {} vs {}", a.len(), b.len()));
            }
            for (i, (x, y)) in a.iter().zip(b).enumerate() {
                if lit_bits(x) != lit_bits(y) {
                    return Some(format!("{name}[{i}]: {x:?} vs {y:?}"));
                }
            }
        }
        if other.buffers.len() != self.buffers.len() {
            return Some("buffer sets differ".into());
        }
        None
    }

    pub fn to_json(&self) -> Value {
        let mut scalars = Map::new();
        for (k, v) in &self.scalars {
            scalars.insert(k.clone(), lit_json(*v));
        }
        let mut buffers = Map::new();
        for (k, v) in &self.buffers {
            buffers.insert(k.clone(), Value::Array(v.iter().map(|l| lit_json(*l)).collect()));
        }
        json!({ "scalars": scalars, "buffers": buffers })
    }

    /// Reads an input for `p`, typing values by the parameter declarations.
    pub fn from_json(p: &Program, v: &Value) -> Result<Self, ExecError> {
        let mut out = KernelData::default();
        let empty = Map::new();
        let scalars = v.get("scalars").and_then(Value::as_object).unwrap_or(&empty);
        let buffers = v.get("buffers").and_then(Value::as_object).unwrap_or(&empty);
        for param in &p.params {
            match &param.kind {
                ParamKind::Scalar { value, .. } => {
                    let j = scalars
                        .get(&param.name)
                        .ok_or_else(|| ExecError::Input(format!("missing scalar {}", param.name)))?;
                    out.scalars
                        .insert(param.name.clone(), json_lit(j, p.ty(*value), &param.name)?);
                }
                ParamKind::Buffer { buf, .. } => {
                    let j = buffers
                        .get(&param.name)
                        .and_then(Value::as_array)
                        .ok_or_else(|| ExecError::Input(format!("missing buffer {}", param.name)))?;
                    let ty = p.buffer(*buf).elem.scalar();
                    let vals = j
                        .iter()
                        .map(|x| json_lit(x, ty, &param.name))
                        .collect::<Result<Vec<_>, _>>()?;
                    out.buffers.insert(param.name.clone(), vals);
                }
            }
        }
        Ok(out)
    }

    pub fn parse(p: &Program, text: &str) -> Result<Self, ExecError> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| ExecError::Input(format!("malformed JSON: {e}")))?;
        Self::from_json(p, &v)
    }
}

/// Declared length of every buffer parameter under the given scalars.
pub fn buffer_len(p: &Program, name: &str, scalars: &BTreeMap<String, Lit>) -> Option<usize> {
    let lookup = |n: &str| match scalars.get(n) {
        Some(Lit::I64(x)) => Some(*x),
        _ => None,
    };
    p.params.iter().find(|q| q.name == name).and_then(|q| match &q.kind {
        ParamKind::Buffer { size: Some(s), .. } => s.eval(&lookup).map(|n| n.max(0) as usize),
        ParamKind::Buffer { size: None, .. } => Some(UNSIZED_LEN),
        _ => None,
    })
}

/// Random input: ints in [-16, 16] (or the declared range), floats in [-1, 1].
pub fn random_input(p: &Program, rng: &mut impl Rng) -> KernelData {
    let mut out = KernelData::default();
    for param in &p.params {
        if let ParamKind::Scalar { value, range } = &param.kind {
            let l = match (p.ty(*value), range) {
                (ScalarTy::I64, Some((lo, hi))) => Lit::I64(rng.gen_range(*lo..=*hi)),
                (ScalarTy::I64, None) => Lit::I64(rng.gen_range(-16..=16)),
                (ScalarTy::F64, _) => Lit::F64(rng.gen_range(-1.0..=1.0)),
                (ScalarTy::Bool, _) => Lit::Bool(rng.gen()),
            };
            out.scalars.insert(param.name.clone(), l);
        }
    }
    for (name, buf) in p.param_buffers() {
        let n = buffer_len(p, name, &out.scalars).unwrap_or(UNSIZED_LEN);
        let vals = (0..n)
            .map(|_| match p.buffer(buf).elem {
                ElemTy::I64 => Lit::I64(rng.gen_range(-16..=16)),
                ElemTy::F64 => Lit::F64(rng.gen_range(-1.0..=1.0)),
            })
            .collect();
        out.buffers.insert(name.to_string(), vals);
    }
    out
}
