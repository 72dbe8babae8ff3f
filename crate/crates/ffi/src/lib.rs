//! C ABI for `puflock`.
//!
//! Every fallible function returns a [`PuflockStatus`]; on failure the
//! message is available from [`puflock_last_error_message`] on the same
//! thread. Objects cross the boundary as opaque handles that must be released
//! with the matching `*_free` function. Paths are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use puflock::binding::{decrypt_model, encrypt_model, load_helper, save_helper, HelperData};
use puflock::model::{load_idx, load_model, save_model, Dataset, Model};
use puflock::puf::{Challenge, PufBackend, PufConfig, XorArbiterPuf};
use puflock::{Error, ErrorKind};

/// Result codes. Values match the exit codes of the `puflock` CLI where the
/// categories overlap.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PuflockStatus {
    Ok = 0,
    InvalidArgument = 2,
    Parse = 3,
    Dimension = 4,
    Config = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

/// Simulated XOR arbiter PUF of one machine.
pub struct PuflockPuf(XorArbiterPuf);

/// Dense network.
pub struct PuflockModel(Model);

/// Helper data of one encrypted layer.
pub struct PuflockHelper(HelperData);

/// Labelled evaluation data.
pub struct PuflockDataset(Dataset);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|e| {
        let mut bytes = e.into_vec();
        bytes.retain(|&b| b != 0);
        CString::new(bytes).expect("NULs removed")
    });
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn status_of(kind: ErrorKind) -> PuflockStatus {
    match kind {
        ErrorKind::InvalidArgument => PuflockStatus::InvalidArgument,
        ErrorKind::Parse => PuflockStatus::Parse,
        ErrorKind::Dimension => PuflockStatus::Dimension,
        ErrorKind::Config => PuflockStatus::Config,
        ErrorKind::Io => PuflockStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PuflockStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PuflockStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is NULL"));
            PuflockStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(e.kind())
        }
        Err(_) => {
            set_error("internal panic".into());
            PuflockStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn c_path<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")).into())
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL if it succeeded.
///
/// The string is owned by the library and stays valid until the next
/// status-returning call on the same thread.
#[no_mangle]
pub extern "C" fn puflock_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Create the PUF of machine `machine_seed`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn puflock_puf_new(
    machine_seed: u64,
    n_stages: u32,
    k_chains: u32,
    noise_sigma: f64,
    out: *mut *mut PuflockPuf,
) -> PuflockStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        let cfg = PufConfig {
            n_stages: n_stages as usize,
            k_chains: k_chains as usize,
            noise_sigma,
        };
        put(out, PuflockPuf(XorArbiterPuf::new(machine_seed, cfg)?));
        Ok(())
    })
}

/// # Safety
/// `puf` must be NULL or a handle from [`puflock_puf_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn puflock_puf_free(puf: *mut PuflockPuf) {
    release(puf);
}

/// Writes `len` response bits (one per byte, 0 or 1) for `challenge`.
///
/// # Safety
/// `puf` must be a live handle and `out_bits` must point to `len` writable
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn puflock_puf_response(
    puf: *const PuflockPuf,
    challenge: u64,
    out_bits: *mut u8,
    len: usize,
) -> PuflockStatus {
    guard(|| {
        let puf = get(puf, "puf")?;
        if out_bits.is_null() {
            return Err(Fail::Null("out_bits"));
        }
        let bits = puf.0.response(Challenge(challenge), len)?;
        let out = std::slice::from_raw_parts_mut(out_bits, len);
        for (o, b) in out.iter_mut().zip(bits) {
            *o = u8::from(b);
        }
        Ok(())
    })
}

/// The 32-bit key for `challenge`: response bit `i` is bit `i`.
///
/// # Safety
/// `puf` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn puflock_puf_key32(puf: *const PuflockPuf, challenge: u64, out: *mut u32) -> PuflockStatus {
    guard(|| {
        let puf = get(puf, "puf")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        *out = puf.0.key32(Challenge(challenge))?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn puflock_model_load(path: *const c_char, out: *mut *mut PuflockModel) -> PuflockStatus {
    guard(|| {
        let p = c_path(path, "path")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        put(out, PuflockModel(load_model(p)?));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn puflock_model_save(model: *const PuflockModel, path: *const c_char) -> PuflockStatus {
    guard(|| {
        let model = get(model, "model")?;
        save_model(&model.0, c_path(path, "path")?)?;
        Ok(())
    })
}

/// Number of layers, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn puflock_model_layer_count(model: *const PuflockModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.layers().len())
}

/// True when both models have identical shapes and weight bit patterns.
///
/// # Safety
/// Both arguments must be NULL or live handles.
#[no_mangle]
pub unsafe extern "C" fn puflock_model_bit_eq(a: *const PuflockModel, b: *const PuflockModel) -> bool {
    match (a.as_ref(), b.as_ref()) {
        (Some(a), Some(b)) => a.0.bit_eq(&b.0),
        _ => false,
    }
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn puflock_model_free(model: *mut PuflockModel) {
    release(model);
}

/// # Safety
/// Both paths must be NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn puflock_dataset_load_idx(
    images: *const c_char,
    labels: *const c_char,
    out: *mut *mut PuflockDataset,
) -> PuflockStatus {
    guard(|| {
        let (i, l) = (c_path(images, "images")?, c_path(labels, "labels")?);
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        put(out, PuflockDataset(load_idx(i, l)?));
        Ok(())
    })
}

/// # Safety
/// `data` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn puflock_dataset_free(data: *mut PuflockDataset) {
    release(data);
}

/// Top-1 accuracy as a `correct / total` pair.
///
/// # Safety
/// Handles must be live; `correct` and `total` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn puflock_model_evaluate(
    model: *const PuflockModel,
    data: *const PuflockDataset,
    correct: *mut u64,
    total: *mut u64,
) -> PuflockStatus {
    guard(|| {
        let (model, data) = (get(model, "model")?, get(data, "data")?);
        if correct.is_null() || total.is_null() {
            return Err(Fail::Null("correct/total"));
        }
        let acc = model.0.evaluate(&data.0)?;
        *correct = acc.correct as u64;
        *total = acc.total as u64;
        Ok(())
    })
}

/// Encrypt `pct` percent of layer `layer_id` under `puf`. Produces a new
/// model and its helper data; the input model is left untouched.
///
/// # Safety
/// Handles must be live; `out_model` and `out_helper` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn puflock_encrypt_model(
    model: *const PuflockModel,
    layer_id: u32,
    pct: f64,
    puf: *const PuflockPuf,
    rng_seed: u64,
    out_model: *mut *mut PuflockModel,
    out_helper: *mut *mut PuflockHelper,
) -> PuflockStatus {
    guard(|| {
        let (model, puf) = (get(model, "model")?, get(puf, "puf")?);
        if out_model.is_null() || out_helper.is_null() {
            return Err(Fail::Null("out_model/out_helper"));
        }
        let (enc, helper) = encrypt_model(&model.0, layer_id as usize, pct, &puf.0, rng_seed)?;
        put(out_model, PuflockModel(enc));
        put(out_helper, PuflockHelper(helper));
        Ok(())
    })
}

/// Decrypt with the PUF of the current machine into a new model. On another
/// machine the result is a model with scrambled weights, not an error.
///
/// # Safety
/// Handles must be live and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn puflock_decrypt_model(
    model: *const PuflockModel,
    helper: *const PuflockHelper,
    puf: *const PuflockPuf,
    out_model: *mut *mut PuflockModel,
) -> PuflockStatus {
    guard(|| {
        let (model, helper, puf) = (get(model, "model")?, get(helper, "helper")?, get(puf, "puf")?);
        if out_model.is_null() {
            return Err(Fail::Null("out_model"));
        }
        put(out_model, PuflockModel(decrypt_model(&model.0, &helper.0, &puf.0)?));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn puflock_helper_load(path: *const c_char, out: *mut *mut PuflockHelper) -> PuflockStatus {
    guard(|| {
        let p = c_path(path, "path")?;
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        put(out, PuflockHelper(load_helper(p)?));
        Ok(())
    })
}

/// # Safety
/// `helper` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn puflock_helper_save(helper: *const PuflockHelper, path: *const c_char) -> PuflockStatus {
    guard(|| {
        let helper = get(helper, "helper")?;
        save_helper(&helper.0, c_path(path, "path")?)?;
        Ok(())
    })
}

/// Number of encrypted weights, or 0 for a NULL handle.
///
/// # Safety
/// `helper` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn puflock_helper_len(helper: *const PuflockHelper) -> usize {
    helper.as_ref().map_or(0, |h| h.0.len())
}

/// # Safety
/// `helper` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn puflock_helper_free(helper: *mut PuflockHelper) {
    release(helper);
}
