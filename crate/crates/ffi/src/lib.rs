//! C interface to `ldphh`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`/
//! `*_run_*` functions and released by the matching `*_free`. Every fallible
//! function returns an [`LdphhStatus`]; on failure the message is available
//! from [`ldphh_last_error`] until the next failing call on the same thread.
//! Strings returned by the library must be released with
//! [`ldphh_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ldphh::analysis::{self, DistributionSpec, WeightScheme};
use ldphh::datagen::{self, Dataset, GeneratorSpec, LoadMode};
use ldphh::harness::{run_protocol, ProtocolChoice};
use ldphh::oracle::{olh_aggregate, olh_perturb, OlhParams, OlhReport};
use ldphh::pem::PemConfig;
use ldphh::result::{Protocol, RunResult, Variant};
use ldphh::rng::{stream, tag};
use ldphh::{BitValue, Error, PrivacyBudget};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdphhStatus {
    Ok = 0,
    InvalidArgument = 1,
    OutOfDomain = 2,
    Infeasible = 3,
    Io = 4,
    Degenerate = 5,
    NoIntersection = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdphhProtocol {
    Pem = 0,
    Spm = 1,
    Mcm = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdphhVariant {
    Split = 0,
    Partition = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdphhLoadMode {
    Int = 0,
    Text = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LdphhWeights {
    F1 = 0,
    Ncr = 1,
}

/// Local-hashing parameters for one privacy budget.
pub struct LdphhOlh {
    params: OlhParams,
}

/// A list of equal-length values.
pub struct LdphhDataset {
    inner: Dataset,
}

/// The output of one protocol run.
pub struct LdphhResult {
    inner: RunResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LdphhStatus {
    match e {
        Error::InvalidParameter(_) | Error::UnknownCandidate(_) | Error::MissingMarginal(_) => {
            LdphhStatus::InvalidArgument
        }
        Error::OutOfDomain { .. } => LdphhStatus::OutOfDomain,
        Error::Infeasible(_) => LdphhStatus::Infeasible,
        Error::Io { .. } | Error::Parse { .. } | Error::Json(_) => LdphhStatus::Io,
        Error::DegenerateOracle => LdphhStatus::Degenerate,
        Error::EmptyIntersection => LdphhStatus::NoIntersection,
    }
}

enum Fail {
    Lib(Error),
    Arg(&'static str),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LdphhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LdphhStatus::Ok,
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg.into());
            LdphhStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic".into());
            LdphhStatus::Panic
        }
    }
}

unsafe fn value_from(bytes: *const u8, bits: u32) -> Result<BitValue, Fail> {
    if bytes.is_null() && bits > 0 {
        return Err(Fail::Arg("value bytes are null"));
    }
    let len = bits.div_ceil(8) as usize;
    let slice = if len == 0 { &[][..] } else { std::slice::from_raw_parts(bytes, len) };
    Ok(BitValue::from_bytes(slice, bits)?)
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Arg("handle is null"))
}

unsafe fn put<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Arg("output pointer is null"));
    }
    out.write(v);
    Ok(())
}

fn budget(eps: f64) -> Result<PrivacyBudget, Fail> {
    Ok(PrivacyBudget::new(eps)?)
}

/// Last error message on this thread, or null. Valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn ldphh_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ldphh_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates local-hashing parameters for budget `eps`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_olh_new(eps: f64, out: *mut *mut LdphhOlh) -> LdphhStatus {
    guard(|| {
        let params = OlhParams::new(budget(eps)?)?;
        put(out, Box::into_raw(Box::new(LdphhOlh { params })))
    })
}

/// # Safety
/// `h` must come from [`ldphh_olh_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ldphh_olh_free(h: *mut LdphhOlh) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Hash range `d'`, or 0 for a null handle.
///
/// # Safety
/// `h` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ldphh_olh_d_prime(h: *const LdphhOlh) -> u32 {
    h.as_ref().map_or(0, |h| h.params.d_prime())
}

/// Perturbs one value. `bytes` holds `bits` bits MSB-first. The randomness
/// is the stream `(seed, index)`, so equal arguments give equal reports.
///
/// # Safety
/// `h` must be live, `bytes` must hold `ceil(bits/8)` bytes and the outputs
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_olh_perturb(
    h: *const LdphhOlh,
    bytes: *const u8,
    bits: u32,
    seed: u64,
    index: u64,
    out_hash_seed: *mut u64,
    out_bucket: *mut u32,
) -> LdphhStatus {
    guard(|| {
        let h = handle(h)?;
        let v = value_from(bytes, bits)?;
        let r = olh_perturb(&v, &h.params, &mut stream(seed, tag::ORACLE, index));
        put(out_hash_seed, r.seed)?;
        put(out_bucket, r.y)
    })
}

/// Estimated count of one value from `n` reports given as parallel arrays.
///
/// # Safety
/// `hash_seeds` and `buckets` must hold `n` elements; `bytes` must hold
/// `ceil(bits/8)` bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_olh_estimate(
    h: *const LdphhOlh,
    hash_seeds: *const u64,
    buckets: *const u32,
    n: usize,
    bytes: *const u8,
    bits: u32,
    out: *mut f64,
) -> LdphhStatus {
    guard(|| {
        let h = handle(h)?;
        if n > 0 && (hash_seeds.is_null() || buckets.is_null()) {
            return Err(Fail::Arg("report arrays are null"));
        }
        let reports: Vec<OlhReport> = if n == 0 {
            Vec::new()
        } else {
            let seeds = std::slice::from_raw_parts(hash_seeds, n);
            let ys = std::slice::from_raw_parts(buckets, n);
            seeds.iter().zip(ys).map(|(&seed, &y)| OlhReport { seed, y }).collect()
        };
        let v = value_from(bytes, bits)?;
        let est = olh_aggregate(&reports, &[v], &h.params)?.estimates(&h.params)[0];
        put(out, est)
    })
}

/// Generates `n` values of `m` bits from a zipf law over `support` values,
/// skipping the `drop` most frequent ranks.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_dataset_zipf(
    s: f64,
    support: usize,
    drop: usize,
    n: usize,
    m: u32,
    seed: u64,
    out: *mut *mut LdphhDataset,
) -> LdphhStatus {
    guard(|| generated(DistributionSpec::zipf(s, support, drop), n, m, seed, out))
}

/// Generates `n` values of `m` bits with frequencies `∝ e^{−rate·(j−1)}`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_dataset_exponential(
    rate: f64,
    support: usize,
    n: usize,
    m: u32,
    seed: u64,
    out: *mut *mut LdphhDataset,
) -> LdphhStatus {
    guard(|| generated(DistributionSpec::exponential(rate, support), n, m, seed, out))
}

unsafe fn generated(dist: DistributionSpec, n: usize, m: u32, seed: u64, out: *mut *mut LdphhDataset) -> Result<(), Fail> {
    let g = datagen::generate(&GeneratorSpec {
        dist,
        n,
        m,
        master_seed: seed,
    })?;
    put(out, Box::into_raw(Box::new(LdphhDataset { inner: g.dataset })))
}

/// Reads one value per line from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_dataset_load(
    path: *const c_char,
    m: u32,
    mode: LdphhLoadMode,
    out: *mut *mut LdphhDataset,
) -> LdphhStatus {
    guard(|| {
        if path.is_null() {
            return Err(Fail::Arg("path is null"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| Fail::Arg("path is not UTF-8"))?;
        let mode = match mode {
            LdphhLoadMode::Int => LoadMode::Int,
            LdphhLoadMode::Text => LoadMode::Text,
        };
        let inner = datagen::load(Path::new(path), m, mode)?;
        put(out, Box::into_raw(Box::new(LdphhDataset { inner })))
    })
}

/// # Safety
/// `d` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ldphh_dataset_len(d: *const LdphhDataset) -> usize {
    d.as_ref().map_or(0, |d| d.inner.len())
}

/// # Safety
/// `d` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ldphh_dataset_free(d: *mut LdphhDataset) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// Runs a protocol with its planned configuration. `variant` only affects
/// the baselines. A positive `theta` selects the threshold variant of PEM.
///
/// # Safety
/// `d` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_run(
    d: *const LdphhDataset,
    protocol: LdphhProtocol,
    variant: LdphhVariant,
    k: usize,
    eps: f64,
    theta: f64,
    query_limit: u64,
    seed: u64,
    out: *mut *mut LdphhResult,
) -> LdphhStatus {
    guard(|| {
        let d = handle(d)?;
        let protocol = match protocol {
            LdphhProtocol::Pem => Protocol::Pem,
            LdphhProtocol::Spm => Protocol::Spm,
            LdphhProtocol::Mcm => Protocol::Mcm,
        };
        let variant = match variant {
            LdphhVariant::Split => Variant::Split,
            LdphhVariant::Partition => Variant::Partition,
        };
        let cfg = ProtocolChoice::new(protocol)
            .variant(variant)
            .build(d.inner.m, k, budget(eps)?, query_limit)?;
        let theta = (theta > 0.0).then_some(theta);
        let inner = run_protocol(&d.inner.values, &cfg, theta, seed)?;
        put(out, Box::into_raw(Box::new(LdphhResult { inner })))
    })
}

/// Number of identified values.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ldphh_result_len(r: *const LdphhResult) -> usize {
    r.as_ref().map_or(0, |r| r.inner.identified.len())
}

/// Total candidate queries the run made.
///
/// # Safety
/// `r` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ldphh_result_queries(r: *const LdphhResult) -> u64 {
    r.as_ref().map_or(0, |r| r.inner.queries_used)
}

/// The `i`-th identified value as hex and its estimated count. The hex
/// string is released with [`ldphh_string_free`].
///
/// # Safety
/// `r` must be live and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_result_get(
    r: *const LdphhResult,
    i: usize,
    out_hex: *mut *mut c_char,
    out_estimate: *mut f64,
) -> LdphhStatus {
    guard(|| {
        let r = handle(r)?;
        let e = r.inner.identified.get(i).ok_or(Fail::Arg("index out of range"))?;
        let hex = CString::new(e.value.to_hex()).expect("hex has no nul");
        put(out_estimate, e.estimate)?;
        put(out_hex, hex.into_raw())
    })
}

/// The whole result as JSON, released with [`ldphh_string_free`].
///
/// # Safety
/// `r` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_result_json(r: *const LdphhResult, out: *mut *mut c_char) -> LdphhStatus {
    guard(|| {
        let r = handle(r)?;
        let json = CString::new(r.inner.to_json()).expect("json has no nul");
        put(out, json.into_raw())
    })
}

/// # Safety
/// `r` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ldphh_result_free(r: *mut LdphhResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Analytic utility of PEM with uniform extension `eta` on a zipf law.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_utility_score_zipf(
    s: f64,
    support: usize,
    drop: usize,
    m: u32,
    k: usize,
    eta: u32,
    n: f64,
    eps: f64,
    weights: LdphhWeights,
    out: *mut f64,
) -> LdphhStatus {
    guard(|| {
        let gamma = ldphh::pem::gamma_for(k);
        let cfg = PemConfig::new(m, gamma, eta, k, u64::MAX, budget(eps)?)?;
        let weights = match weights {
            LdphhWeights::F1 => WeightScheme::F1,
            LdphhWeights::Ncr => WeightScheme::Ncr,
        };
        let score = analysis::utility_score(&DistributionSpec::zipf(s, support, drop), &cfg, n, weights)?;
        put(out, score)
    })
}

/// Users needed to detect frequency `f` at `sigma_multiple` deviations.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ldphh_min_population(f: f64, eps: f64, sigma_multiple: f64, out: *mut u64) -> LdphhStatus {
    guard(|| put(out, analysis::min_population(f, budget(eps)?, sigma_multiple)?))
}
