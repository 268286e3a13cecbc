// Copyright 2026 The lipcert Authors
// SPDX-License-Identifier: Apache-2.0

//! C ABI over `lipcert`.
//!
//! Models are opaque handles created by [`lipcert_model_load`] or
//! [`lipcert_model_init`] and released with [`lipcert_model_free`]. Every
//! fallible call returns a [`LipcertStatus`]; on failure a message is stored
//! per thread and can be read with [`lipcert_last_error`].
//!
//! Images are passed as `batch × h × w × c` doubles, channels fastest, in
//! `[0, 1]`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use lipcert::certify::{certified_radius, LipschitzLedger};
use lipcert::layers::FeatureMap;
use lipcert::model::{Model, ModelSpec};
use lipcert::trainer::{load_checkpoint, save_checkpoint, Checkpoint};
use lipcert::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LipcertStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Orthogonality = 5,
    DimensionMismatch = 6,
    Numeric = 7,
    Panic = 8,
}

/// Opaque model handle.
pub struct LipcertModel {
    model: Model,
    backbone_bound: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> LipcertStatus {
    match e {
        Error::Io(_) => LipcertStatus::Io,
        Error::Format { .. } => LipcertStatus::Format,
        Error::Orthogonality { .. } => LipcertStatus::Orthogonality,
        Error::DimensionMismatch { .. } | Error::NotSquare { .. } | Error::StaleCache(_) => {
            LipcertStatus::DimensionMismatch
        }
        Error::NonFinite(_)
        | Error::NotSkew(_)
        | Error::RankDeficient(_)
        | Error::SvdNoConvergence(_)
        | Error::Diverged { .. } => LipcertStatus::Numeric,
        _ => LipcertStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (LipcertStatus, String)>) -> LipcertStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LipcertStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LipcertStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (LipcertStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LipcertStatus, String) {
    (LipcertStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn path_arg(path: *const c_char) -> Result<String, (LipcertStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (LipcertStatus::InvalidArgument, "path is not UTF-8".into()))
}

fn wrap(model: Model) -> Box<LipcertModel> {
    let backbone_bound = LipschitzLedger::for_model(&model).backbone_bound;
    Box::new(LipcertModel {
        model,
        backbone_bound,
    })
}

unsafe fn images_arg(m: &Model, images: *const f64, batch: usize) -> Result<FeatureMap, (LipcertStatus, String)> {
    if images.is_null() {
        return Err(null("images"));
    }
    let s = &m.spec;
    let len = batch * s.in_h * s.in_w * s.in_c;
    let data = std::slice::from_raw_parts(images, len).to_vec();
    FeatureMap::batched(batch, s.in_h, s.in_w, s.in_c, data).map_err(lib_err)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lipcert_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn lipcert_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Loads a checkpoint. On success `*out` owns a new handle.
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_load(path: *const c_char, out: *mut *mut LipcertModel) -> LipcertStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        let ck = load_checkpoint(&path).map_err(lib_err)?;
        *out = Box::into_raw(wrap(ck.model));
        Ok(())
    })
}

/// A freshly initialized model with the default architecture for the given input.
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_init(
    depth: usize,
    width: usize,
    patch: usize,
    in_h: usize,
    in_w: usize,
    in_c: usize,
    n_classes: usize,
    seed: u64,
    out: *mut *mut LipcertModel,
) -> LipcertStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = ModelSpec {
            depth,
            width,
            patch,
            in_h,
            in_w,
            in_c,
            n_classes,
            seed,
            ..Default::default()
        };
        *out = Box::into_raw(wrap(Model::init(spec).map_err(lib_err)?));
        Ok(())
    })
}

/// Writes the model as a checkpoint (without optimizer state).
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_save(model: *const LipcertModel, path: *const c_char) -> LipcertStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let path = path_arg(path)?;
        let ck = Checkpoint {
            model: m.model.clone(),
            optimizer: None,
            epoch: 0,
        };
        save_checkpoint(&path, &ck).map_err(lib_err)
    })
}

/// Releases a handle; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_free(model: *mut LipcertModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input height, width and channels expected by the model.
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_input_shape(
    model: *const LipcertModel,
    h: *mut usize,
    w: *mut usize,
    c: *mut usize,
) -> LipcertStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if h.is_null() || w.is_null() || c.is_null() {
            return Err(null("shape output"));
        }
        *h = m.model.spec.in_h;
        *w = m.model.spec.in_w;
        *c = m.model.spec.in_c;
        Ok(())
    })
}

/// Number of output classes, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_num_classes(model: *const LipcertModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.spec.n_classes)
}

/// Writes `batch × n_classes` logits to `out`.
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_logits(
    model: *const LipcertModel,
    images: *const f64,
    batch: usize,
    out: *mut f64,
) -> LipcertStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = images_arg(&m.model, images, batch)?;
        let logits = m.model.logits(&x).map_err(lib_err)?;
        std::ptr::copy_nonoverlapping(logits.as_slice().as_ptr(), out, logits.as_slice().len());
        Ok(())
    })
}

/// Prediction and certified ℓ₂ radius for each of `batch` images.
///
/// A radius of 0 means the top logit is shared and nothing is certified.
#[no_mangle]
pub unsafe extern "C" fn lipcert_model_certify(
    model: *const LipcertModel,
    images: *const f64,
    batch: usize,
    predicted: *mut usize,
    radius: *mut f64,
) -> LipcertStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if predicted.is_null() || radius.is_null() {
            return Err(null("outputs"));
        }
        let x = images_arg(&m.model, images, batch)?;
        let logits = m.model.logits(&x).map_err(lib_err)?;
        for i in 0..batch {
            let row = logits.row(i);
            let top = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
            *predicted.add(i) = top;
            *radius.add(i) = certified_radius(row, &m.model.head_v, m.backbone_bound).map_err(lib_err)?;
        }
        Ok(())
    })
}
