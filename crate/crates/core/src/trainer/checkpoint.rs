// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! Binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | field | encoding |
//! |---|---|
//! | magic | `b"LPNX"` |
//! | version | `u32` = 1 |
//! | spec | `u32` depth, width, patch, n_classes, in_h, in_w, in_c; `f64` alpha, beta; `u64` seed; `u8` padding, activation |
//! | epoch | `u64` |
//! | tensor count | `u32` |
//! | tensor | `u32` name length, UTF-8 name, `u8` dtype (1 = f64, 2 = u64), `u32` rank, `u64` per dim, payload |
//!
//! Model tensors are `block{i}.R`, `block{i}.M`, `block{i}.b`, `block{i}.p`,
//! `head.V`, `head.b`. Optimizer state, when present, is stored under `opt.`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::layers::{ActivationKind, BlockParams, Padding};
use crate::linalg::{Matrix, OrthogonalParam, TAU_BETWEEN};
use crate::manifold::{
    AdamState, Denominator, ManifoldAdamConfig, ManifoldAdamState, OptimizerMode, SecondMomentInit,
};
use crate::model::{Model, ModelSpec};

use super::Optimizer;

const MAGIC: &[u8; 4] = b"LPNX";
const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;
const DTYPE_U64: u8 = 2;

/// Largest `‖XᵀX − I‖_F` accepted for an orthogonal tensor on load.
pub const TAU_ORTH: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Option<Optimizer>,
    /// Completed epochs.
    pub epoch: u64,
}

#[derive(Clone, Debug, PartialEq)]
enum Payload {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq)]
struct Tensor {
    dims: Vec<usize>,
    payload: Payload,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn tensor(&mut self, name: &str, dims: &[usize], payload: Payload) {
        self.u32(name.len());
        self.buf.extend_from_slice(name.as_bytes());
        match &payload {
            Payload::F64(_) => self.u8(DTYPE_F64),
            Payload::U64(_) => self.u8(DTYPE_U64),
        }
        self.u32(dims.len());
        for &d in dims {
            self.u64(d as u64);
        }
        match payload {
            Payload::F64(v) => v.into_iter().for_each(|x| self.f64(x)),
            Payload::U64(v) => v.into_iter().for_each(|x| self.u64(x)),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()) {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated {what}"),
            }),
        }
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
    fn fail<T>(&self, offset: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset,
            msg: msg.into(),
        })
    }
}

fn write_spec(w: &mut Writer, s: &ModelSpec) {
    for v in [s.depth, s.width, s.patch, s.n_classes, s.in_h, s.in_w, s.in_c] {
        w.u32(v);
    }
    w.f64(s.alpha);
    w.f64(s.beta);
    w.u64(s.seed);
    w.u8(match s.padding {
        Padding::Circular => 0,
        Padding::Zero => 1,
    });
    w.u8(match s.activation {
        ActivationKind::BetaAbs => 0,
        ActivationKind::MinMax => 1,
    });
}

fn read_spec(r: &mut Reader) -> Result<ModelSpec> {
    let start = r.pos;
    let mut u = [0usize; 7];
    for v in &mut u {
        *v = r.u32("model spec")?;
    }
    let alpha = r.f64("model spec")?;
    let beta = r.f64("model spec")?;
    let seed = r.u64("model spec")?;
    let pad_at = r.pos;
    let padding = match r.u8("model spec")? {
        0 => Padding::Circular,
        1 => Padding::Zero,
        t => return r.fail(pad_at, format!("unknown padding tag {t}")),
    };
    let act_at = r.pos;
    let activation = match r.u8("model spec")? {
        0 => ActivationKind::BetaAbs,
        1 => ActivationKind::MinMax,
        t => return r.fail(act_at, format!("unknown activation tag {t}")),
    };
    let spec = ModelSpec {
        depth: u[0],
        width: u[1],
        patch: u[2],
        n_classes: u[3],
        in_h: u[4],
        in_w: u[5],
        in_c: u[6],
        alpha,
        beta,
        seed,
        padding,
        activation,
    };
    spec.validate().map_err(|e| Error::Format {
        offset: start,
        msg: format!("invalid model spec: {e}"),
    })?;
    Ok(spec)
}

fn mat(m: &Matrix) -> (Vec<usize>, Payload) {
    (vec![m.rows(), m.cols()], Payload::F64(m.as_slice().to_vec()))
}

fn vec1(v: &[f64]) -> (Vec<usize>, Payload) {
    (vec![v.len()], Payload::F64(v.to_vec()))
}

fn scalar_u64(v: u64) -> (Vec<usize>, Payload) {
    (vec![], Payload::U64(vec![v]))
}

fn manifold_tensors(out: &mut Vec<(String, Vec<usize>, Payload)>, prefix: &str, s: &ManifoldAdamState) {
    for (n, m) in [("m", &s.m), ("v", &s.v), ("buffer", &s.buffer), ("slow", s.slow.value())] {
        let (d, p) = mat(m);
        out.push((format!("{prefix}.{n}"), d, p));
    }
    let (d, p) = scalar_u64(s.t);
    out.push((format!("{prefix}.t"), d, p));
}

fn adam_tensors(out: &mut Vec<(String, Vec<usize>, Payload)>, prefix: &str, s: &AdamState) {
    let (d, p) = vec1(&s.m);
    out.push((format!("{prefix}.m"), d, p));
    let (d, p) = vec1(&s.v);
    out.push((format!("{prefix}.v"), d, p));
    let (d, p) = scalar_u64(s.t);
    out.push((format!("{prefix}.t"), d, p));
}

fn config_tensor(c: &ManifoldAdamConfig) -> (Vec<usize>, Payload) {
    let flags = [
        matches!(c.mode.denominator, Denominator::LiteralV),
        c.mode.bias_correction,
        c.mode.lookahead,
        c.mode.retraction,
        matches!(c.v0, SecondMomentInit::InverseDim),
    ];
    let mut v = vec![c.lr, c.beta1, c.beta2, c.eps, c.lookahead_k as f64];
    v.extend(flags.iter().map(|&f| if f { 1.0 } else { 0.0 }));
    vec1(&v)
}

fn config_from(v: &[f64]) -> Option<ManifoldAdamConfig> {
    if v.len() != 10 {
        return None;
    }
    let flag = |i: usize| v[i] != 0.0;
    Some(ManifoldAdamConfig {
        lr: v[0],
        beta1: v[1],
        beta2: v[2],
        eps: v[3],
        lookahead_k: v[4] as usize,
        mode: OptimizerMode {
            denominator: if flag(5) { Denominator::LiteralV } else { Denominator::SqrtV },
            bias_correction: flag(6),
            lookahead: flag(7),
            retraction: flag(8),
        },
        v0: if flag(9) { SecondMomentInit::InverseDim } else { SecondMomentInit::Zero },
    })
}

/// Serializes a checkpoint.
pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut tensors: Vec<(String, Vec<usize>, Payload)> = Vec::new();
    for (i, b) in ck.model.blocks.iter().enumerate() {
        let (d, p) = mat(b.r.value());
        tensors.push((format!("block{i}.R"), d, p));
        let (d, p) = mat(b.m.value());
        tensors.push((format!("block{i}.M"), d, p));
        let (d, p) = vec1(&b.bias);
        tensors.push((format!("block{i}.b"), d, p));
        let (d, p) = vec1(&b.pos);
        tensors.push((format!("block{i}.p"), d, p));
    }
    let (d, p) = mat(&ck.model.head_v);
    tensors.push(("head.V".into(), d, p));
    let (d, p) = vec1(&ck.model.head_bias);
    tensors.push(("head.b".into(), d, p));
    if let Some(opt) = &ck.optimizer {
        let (d, p) = config_tensor(&opt.config);
        tensors.push(("opt.config".into(), d, p));
        let (d, p) = scalar_u64(opt.steps);
        tensors.push(("opt.steps".into(), d, p));
        for i in 0..opt.r.len() {
            manifold_tensors(&mut tensors, &format!("opt.block{i}.R"), &opt.r[i]);
            manifold_tensors(&mut tensors, &format!("opt.block{i}.M"), &opt.m[i]);
            adam_tensors(&mut tensors, &format!("opt.block{i}.b"), &opt.bias[i]);
            adam_tensors(&mut tensors, &format!("opt.block{i}.p"), &opt.pos[i]);
        }
        adam_tensors(&mut tensors, "opt.head.V", &opt.head_v);
        adam_tensors(&mut tensors, "opt.head.b", &opt.head_bias);
    }

    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    write_spec(&mut w, &ck.model.spec);
    w.u64(ck.epoch);
    w.u32(tensors.len());
    for (name, dims, payload) in tensors {
        w.tensor(&name, &dims, payload);
    }
    w.buf
}

struct Tensors {
    map: BTreeMap<String, (usize, Tensor)>,
}

impl Tensors {
    fn get(&mut self, name: &str, dims: &[usize]) -> Result<(usize, Payload)> {
        let (offset, t) = self.map.remove(name).ok_or_else(|| Error::Format {
            offset: 0,
            msg: format!("missing tensor `{name}`"),
        })?;
        if t.dims != dims {
            return Err(Error::Format {
                offset,
                msg: format!("tensor `{name}` has shape {:?}, expected {dims:?}", t.dims),
            });
        }
        Ok((offset, t.payload))
    }

    fn f64s(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f64>> {
        match self.get(name, dims)? {
            (_, Payload::F64(v)) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite("checkpoint tensor"));
                }
                Ok(v)
            }
            (offset, _) => Err(Error::Format {
                offset,
                msg: format!("tensor `{name}` should be f64"),
            }),
        }
    }

    fn u64(&mut self, name: &str) -> Result<u64> {
        match self.get(name, &[])? {
            (_, Payload::U64(v)) => Ok(v[0]),
            (offset, _) => Err(Error::Format {
                offset,
                msg: format!("tensor `{name}` should be u64"),
            }),
        }
    }

    fn matrix(&mut self, name: &str, r: usize, c: usize) -> Result<Matrix> {
        Matrix::from_vec(r, c, self.f64s(name, &[r, c])?)
    }

    fn orthogonal(&mut self, name: &str, d: usize) -> Result<OrthogonalParam> {
        let m = self.matrix(name, d, d)?;
        let drift = crate::linalg::orthogonality_drift(&m);
        if !(drift <= TAU_ORTH) {
            return Err(Error::Orthogonality {
                name: name.to_string(),
                drift,
                tolerance: TAU_ORTH,
            });
        }
        Ok(OrthogonalParam::new_unchecked(m, TAU_BETWEEN))
    }

    fn adam(&mut self, prefix: &str, len: usize) -> Result<AdamState> {
        Ok(AdamState {
            m: self.f64s(&format!("{prefix}.m"), &[len])?,
            v: self.f64s(&format!("{prefix}.v"), &[len])?,
            t: self.u64(&format!("{prefix}.t"))?,
        })
    }

    fn manifold(&mut self, prefix: &str, d: usize, config: ManifoldAdamConfig) -> Result<ManifoldAdamState> {
        Ok(ManifoldAdamState {
            m: self.matrix(&format!("{prefix}.m"), d, d)?,
            v: self.matrix(&format!("{prefix}.v"), d, d)?,
            buffer: self.matrix(&format!("{prefix}.buffer"), d, d)?,
            slow: self.orthogonal(&format!("{prefix}.slow"), d)?,
            t: self.u64(&format!("{prefix}.t"))?,
            config,
        })
    }
}

/// Parses and validates a checkpoint, including orthogonality of every `R` and `M`.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return r.fail(0, "bad magic, expected \"LPNX\"");
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return r.fail(4, format!("unsupported version {version}"));
    }
    let spec = read_spec(&mut r)?;
    let epoch = r.u64("epoch")?;
    let count = r.u32("tensor count")?;
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let offset = r.pos;
        let name_len = r.u32("tensor name length")?;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::Format {
                offset,
                msg: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let dtype_at = r.pos;
        let dtype = r.u8("dtype")?;
        let rank = r.u32("rank")?;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u64("dims")? as usize);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= bytes.len()))
            .ok_or_else(|| Error::Format {
                offset,
                msg: format!("tensor `{name}` has impossible shape {dims:?}"),
            })?;
        let raw = r.take(n * 8, &format!("payload of `{name}`"))?;
        let words = raw.chunks_exact(8).map(|c| c.try_into().unwrap());
        let payload = match dtype {
            DTYPE_F64 => Payload::F64(words.map(f64::from_le_bytes).collect()),
            DTYPE_U64 => Payload::U64(words.map(u64::from_le_bytes).collect()),
            t => return r.fail(dtype_at, format!("unknown dtype tag {t} for `{name}`")),
        };
        if map.insert(name.clone(), (offset, Tensor { dims, payload })).is_some() {
            return r.fail(offset, format!("duplicate tensor `{name}`"));
        }
    }
    if r.pos != bytes.len() {
        return r.fail(r.pos, format!("{} trailing bytes", bytes.len() - r.pos));
    }

    let mut t = Tensors { map };
    let c = spec.width;
    let (h, w) = spec.grid();
    let mut blocks = Vec::with_capacity(spec.depth);
    for i in 0..spec.depth {
        blocks.push(BlockParams {
            r: t.orthogonal(&format!("block{i}.R"), c)?,
            m: t.orthogonal(&format!("block{i}.M"), c)?,
            bias: t.f64s(&format!("block{i}.b"), &[c])?,
            pos: t.f64s(&format!("block{i}.p"), &[h * w])?,
            h,
            w,
        });
    }
    let model = Model {
        spec,
        blocks,
        head_v: t.matrix("head.V", spec.n_classes, c)?,
        head_bias: t.f64s("head.b", &[spec.n_classes])?,
    };

    let optimizer = if t.map.contains_key("opt.config") {
        let raw = t.f64s("opt.config", &[10])?;
        let config = config_from(&raw).ok_or_else(|| Error::Format {
            offset: 0,
            msg: "bad optimizer config".into(),
        })?;
        config.validate()?;
        let steps = t.u64("opt.steps")?;
        let mut opt = Optimizer {
            config,
            r: Vec::new(),
            m: Vec::new(),
            bias: Vec::new(),
            pos: Vec::new(),
            head_v: AdamState::new(0),
            head_bias: AdamState::new(0),
            steps,
        };
        for i in 0..spec.depth {
            opt.r.push(t.manifold(&format!("opt.block{i}.R"), c, config)?);
            opt.m.push(t.manifold(&format!("opt.block{i}.M"), c, config)?);
            opt.bias.push(t.adam(&format!("opt.block{i}.b"), c)?);
            opt.pos.push(t.adam(&format!("opt.block{i}.p"), h * w)?);
        }
        opt.head_v = t.adam("opt.head.V", spec.n_classes * c)?;
        opt.head_bias = t.adam("opt.head.b", spec.n_classes)?;
        Some(opt)
    } else {
        None
    };
    if let Some((name, (offset, _))) = t.map.iter().next() {
        return Err(Error::Format {
            offset: *offset,
            msg: format!("unexpected tensor `{name}`"),
        });
    }
    Ok(Checkpoint {
        model,
        optimizer,
        epoch,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
