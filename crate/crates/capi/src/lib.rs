//! C ABI for the distill-lab numerical laboratory.
//!
//! Conventions:
//!
//! * Every function returns a status code: `DL_OK` (0) on success, one of the
//!   stable library error codes (1..=7), `DL_ERR_PANIC` (8) for a caught
//!   panic, or `DL_ERR_NULL` (9) for a null required pointer. Outputs are
//!   written through out-pointers only on success.
//! * On failure a thread-local message is recorded; read it with
//!   [`dl_last_error_message`]. The returned pointer stays valid until the
//!   next failing call on the same thread.
//! * Strings handed out through `char**` out-parameters are heap-allocated
//!   NUL-terminated UTF-8 and must be released with [`dl_string_free`].
//! * `DlConfig` and `DlMlp` are opaque handles released with their matching
//!   `_free` function; the `_free` functions accept null.
//! * Panics never unwind across the boundary: every entry point runs under
//!   `catch_unwind`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use distill_lab::boolean_fourier::majority_zeta_closed;
use distill_lab::harness::{run, validate, ExperimentConfig, Severity};
use distill_lab::mlp::TwoLayerMlp;
use distill_lab::pcfg::{cfg3b, write_corpus};
use distill_lab::Error;

/// Success.
pub const DL_OK: i32 = 0;
/// An argument violated a documented precondition.
pub const DL_ERR_ARGUMENT: i32 = 1;
/// A size limit (enumeration cutoff, overflow guard) was exceeded.
pub const DL_ERR_CAPACITY: i32 = 2;
/// An experiment configuration failed to parse or validate.
pub const DL_ERR_CONFIG: i32 = 3;
/// Sentence generation aborted.
pub const DL_ERR_GENERATION: i32 = 4;
/// Inconsistent vector/matrix shapes.
pub const DL_ERR_SHAPE: i32 = 5;
/// Malformed serialized data (checkpoints, non-UTF-8 input).
pub const DL_ERR_PARSE: i32 = 6;
/// An underlying I/O operation failed.
pub const DL_ERR_IO: i32 = 7;
/// A panic was caught at the boundary; the message holds the payload.
pub const DL_ERR_PANIC: i32 = 8;
/// A required pointer argument was null.
pub const DL_ERR_NULL: i32 = 9;

/// Opaque parsed experiment configuration.
pub struct DlConfig {
    inner: ExperimentConfig,
}

/// Opaque two-layer network handle.
pub struct DlMlp {
    inner: TwoLayerMlp,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let clean = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = clean);
}

fn fail(err: &Error) -> i32 {
    set_error(&err.to_string());
    err.code()
}

fn fail_null(param: &str) -> i32 {
    set_error(&format!("null pointer: {param}"));
    DL_ERR_NULL
}

fn guard(f: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "opaque payload".into());
            set_error(&format!("panic: {msg}"));
            DL_ERR_PANIC
        }
    }
}

/// # Safety
/// `p` must be null or point to a NUL-terminated string.
unsafe fn read_utf8<'a>(p: *const c_char, name: &str) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(fail_null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        DL_ERR_PARSE
    })
}

/// # Safety
/// `out` must be a valid, non-null destination.
unsafe fn give_string(out: *mut *mut c_char, s: String) -> i32 {
    let c = CString::new(s.replace('\0', " ")).unwrap_or_default();
    *out = c.into_raw();
    DL_OK
}

/// Library version as a static NUL-terminated string. Do not free.
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on the calling thread (empty string if
/// none). The pointer is owned by the library and stays valid until the next
/// failing call on the same thread. Do not free.
#[no_mangle]
pub extern "C" fn dl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string previously returned through a `char**` out-parameter.
/// Accepts null.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn dl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a TOML experiment configuration into an opaque handle.
///
/// # Safety
/// `toml_text` must be a NUL-terminated string; `out` must be a valid
/// destination pointer.
#[no_mangle]
pub unsafe extern "C" fn dl_config_parse(
    toml_text: *const c_char,
    out: *mut *mut DlConfig,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail_null("out");
        }
        let text = match read_utf8(toml_text, "toml_text") {
            Ok(t) => t,
            Err(code) => return code,
        };
        match ExperimentConfig::from_toml_str(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(DlConfig { inner: cfg }));
                DL_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Run semantic validation. `findings_json_out` (nullable) receives a JSON
/// array of `{severity, field, message}` objects; `error_count_out`
/// (nullable) receives the number of error-severity findings. Returns `DL_OK`
/// even when findings exist — inspect the outputs.
///
/// # Safety
/// `cfg` must be a live handle from [`dl_config_parse`]; the out-pointers
/// must be null or valid destinations.
#[no_mangle]
pub unsafe extern "C" fn dl_config_validate(
    cfg: *const DlConfig,
    findings_json_out: *mut *mut c_char,
    error_count_out: *mut u64,
) -> i32 {
    guard(|| {
        if cfg.is_null() {
            return fail_null("cfg");
        }
        let findings = validate(&(*cfg).inner);
        if !error_count_out.is_null() {
            *error_count_out =
                findings.iter().filter(|f| f.severity == Severity::Error).count() as u64;
        }
        if findings_json_out.is_null() {
            return DL_OK;
        }
        let arr: Vec<serde_json::Value> = findings
            .iter()
            .map(|f| {
                serde_json::json!({
                    "severity": match f.severity {
                        Severity::Error => "error",
                        Severity::Warning => "warning",
                    },
                    "field": f.field,
                    "message": f.message,
                })
            })
            .collect();
        give_string(findings_json_out, serde_json::Value::Array(arr).to_string())
    })
}

/// Release a configuration handle. Accepts null.
///
/// # Safety
/// `cfg` must be null or a live handle from [`dl_config_parse`].
#[no_mangle]
pub unsafe extern "C" fn dl_config_free(cfg: *mut DlConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Execute a configured experiment, writing a result bundle under
/// `out_root/<run_id>/`. `report_json_out` (nullable) receives
/// `{"dir": ..., "manifest": ..., "report": ...}`. Configurations with
/// validation errors are rejected with `DL_ERR_CONFIG`.
///
/// # Safety
/// `cfg` must be a live handle; `out_root` must be a NUL-terminated path;
/// `report_json_out` must be null or a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dl_run(
    cfg: *const DlConfig,
    out_root: *const c_char,
    report_json_out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        if cfg.is_null() {
            return fail_null("cfg");
        }
        let root = match read_utf8(out_root, "out_root") {
            Ok(t) => t,
            Err(code) => return code,
        };
        match run(&(*cfg).inner, Path::new(root)) {
            Ok(bundle) => {
                if report_json_out.is_null() {
                    return DL_OK;
                }
                let v = serde_json::json!({
                    "dir": bundle.dir.to_string_lossy(),
                    "manifest": bundle.manifest,
                    "report": bundle.summary,
                });
                give_string(report_json_out, v.to_string())
            }
            Err(e) => fail(&e),
        }
    })
}

/// Load a two-layer network from a text checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated path; `out` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dl_mlp_load(path: *const c_char, out: *mut *mut DlMlp) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail_null("out");
        }
        let p = match read_utf8(path, "path") {
            Ok(t) => t,
            Err(code) => return code,
        };
        match TwoLayerMlp::load_checkpoint(Path::new(p)) {
            Ok(net) => {
                *out = Box::into_raw(Box::new(DlMlp { inner: net }));
                DL_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Save a network to a text checkpoint file (atomic replace).
///
/// # Safety
/// `mlp` must be a live handle; `path` must be a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn dl_mlp_save(mlp: *const DlMlp, path: *const c_char) -> i32 {
    guard(|| {
        if mlp.is_null() {
            return fail_null("mlp");
        }
        let p = match read_utf8(path, "path") {
            Ok(t) => t,
            Err(code) => return code,
        };
        match (*mlp).inner.save_checkpoint(Path::new(p)) {
            Ok(()) => DL_OK,
            Err(e) => fail(&e),
        }
    })
}

/// Input dimension and hidden width of a network handle. Either out-pointer
/// may be null.
///
/// # Safety
/// `mlp` must be a live handle; out-pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn dl_mlp_meta(mlp: *const DlMlp, d_out: *mut u32, m_out: *mut u64) -> i32 {
    guard(|| {
        if mlp.is_null() {
            return fail_null("mlp");
        }
        if !d_out.is_null() {
            *d_out = (*mlp).inner.d();
        }
        if !m_out.is_null() {
            *m_out = (*mlp).inner.m() as u64;
        }
        DL_OK
    })
}

/// Evaluate the network on one point given as `len` coordinates in
/// `{-1.0, +1.0}` (`len` must equal the input dimension).
///
/// # Safety
/// `mlp` must be a live handle; `x` must point to `len` doubles; `out` must
/// be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dl_mlp_forward(
    mlp: *const DlMlp,
    x: *const f64,
    len: u64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        if mlp.is_null() {
            return fail_null("mlp");
        }
        if x.is_null() {
            return fail_null("x");
        }
        if out.is_null() {
            return fail_null("out");
        }
        let net = &(*mlp).inner;
        if len != u64::from(net.d()) {
            return fail(&Error::Shape(format!(
                "input has {len} coordinates but the network expects {}",
                net.d()
            )));
        }
        let coords = std::slice::from_raw_parts(x, len as usize);
        *out = net.forward_coords(coords);
        DL_OK
    })
}

/// Release a network handle. Accepts null.
///
/// # Safety
/// `mlp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dl_mlp_free(mlp: *mut DlMlp) {
    if !mlp.is_null() {
        drop(Box::from_raw(mlp));
    }
}

/// Closed-form degree-`degree` majority Fourier coefficient on `d` bits
/// (`d` odd). Writes the value to `out`.
///
/// # Safety
/// `out` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dl_majority_zeta(d: u32, degree: u32, out: *mut f64) -> i32 {
    guard(|| {
        if out.is_null() {
            return fail_null("out");
        }
        match majority_zeta_closed(d, degree) {
            Ok(v) => {
                *out = v;
                DL_OK
            }
            Err(e) => fail(&e),
        }
    })
}

/// Sample `n` sentences from the built-in grammar into a newly allocated
/// string: whitespace-separated token ids, one sentence per line, identical
/// bytes to the corpus files the experiment pipeline writes for the same
/// `seed` and `shard`.
///
/// # Safety
/// `corpus_out` must be a valid destination.
#[no_mangle]
pub unsafe extern "C" fn dl_pcfg_sample_corpus(
    seed: u64,
    shard: u64,
    n: u64,
    corpus_out: *mut *mut c_char,
) -> i32 {
    guard(|| {
        if corpus_out.is_null() {
            return fail_null("corpus_out");
        }
        let grammar = cfg3b();
        let mut buf: Vec<u8> = Vec::new();
        match write_corpus(&grammar, n as usize, seed, shard, &mut buf) {
            Ok(_stats) => match String::from_utf8(buf) {
                Ok(text) => give_string(corpus_out, text),
                Err(_) => {
                    set_error("corpus was not valid UTF-8");
                    DL_ERR_PARSE
                }
            },
            Err(e) => fail(&e),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use distill_lab::rng::derive_rng;
    use std::ffi::CString;
    use std::ptr;
    use tempfile::tempdir;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(dl_last_error_message()).to_string_lossy().into_owned() }
    }

    fn take_string(p: *mut c_char) -> String {
        assert!(!p.is_null());
        let s = unsafe { CStr::from_ptr(p).to_string_lossy().into_owned() };
        unsafe { dl_string_free(p) };
        s
    }

    #[test]
    fn version_and_error_codes_are_stable() {
        let v = unsafe { CStr::from_ptr(dl_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));

        assert_eq!(Error::Argument(String::new()).code(), DL_ERR_ARGUMENT);
        assert_eq!(Error::Capacity(String::new()).code(), DL_ERR_CAPACITY);
        assert_eq!(Error::Config(String::new()).code(), DL_ERR_CONFIG);
        assert_eq!(Error::Generation(String::new()).code(), DL_ERR_GENERATION);
        assert_eq!(Error::Shape(String::new()).code(), DL_ERR_SHAPE);
        assert_eq!(Error::Parse(String::new()).code(), DL_ERR_PARSE);
        assert_eq!(
            Error::Io(std::io::Error::new(std::io::ErrorKind::Other, "x")).code(),
            DL_ERR_IO
        );
    }

    #[test]
    fn config_parse_validate_run_roundtrip() {
        let toml = CString::new(
            "kind = \"pcfg\"\nrun_id = \"ffi_pcfg\"\nseed = 9\n[pcfg]\nn = 200\n",
        )
        .unwrap();
        let mut cfg: *mut DlConfig = ptr::null_mut();
        assert_eq!(unsafe { dl_config_parse(toml.as_ptr(), &mut cfg) }, DL_OK);
        assert!(!cfg.is_null());

        let mut findings: *mut c_char = ptr::null_mut();
        let mut n_errors = u64::MAX;
        assert_eq!(
            unsafe { dl_config_validate(cfg, &mut findings, &mut n_errors) },
            DL_OK
        );
        assert_eq!(n_errors, 0);
        assert_eq!(take_string(findings), "[]");

        let dir = tempdir().unwrap();
        let root = CString::new(dir.path().to_str().unwrap()).unwrap();
        let mut report: *mut c_char = ptr::null_mut();
        assert_eq!(unsafe { dl_run(cfg, root.as_ptr(), &mut report) }, DL_OK);
        let parsed: serde_json::Value =
            serde_json::from_str(&take_string(report)).unwrap();
        assert_eq!(parsed["manifest"]["run_id"], "ffi_pcfg");
        assert!(parsed["report"]["pcfg"]["length_percentiles"].is_object());
        assert!(dir.path().join("ffi_pcfg/manifest.json").is_file());

        unsafe { dl_config_free(cfg) };
    }

    #[test]
    fn failures_set_stable_codes_and_messages() {
        // malformed TOML -> config code plus a message
        let bad = CString::new("kind = ").unwrap();
        let mut cfg: *mut DlConfig = ptr::null_mut();
        assert_eq!(unsafe { dl_config_parse(bad.as_ptr(), &mut cfg) }, DL_ERR_CONFIG);
        assert!(cfg.is_null());
        assert!(last_error().contains("invalid config"), "{}", last_error());

        // null pointers -> DL_ERR_NULL naming the parameter
        assert_eq!(
            unsafe { dl_config_parse(ptr::null(), &mut cfg) },
            DL_ERR_NULL
        );
        assert!(last_error().contains("toml_text"));
        assert_eq!(
            unsafe { dl_config_validate(ptr::null(), ptr::null_mut(), ptr::null_mut()) },
            DL_ERR_NULL
        );

        // invalid UTF-8 -> parse code
        let invalid = [0xffu8, 0xfe, 0x00];
        assert_eq!(
            unsafe { dl_config_parse(invalid.as_ptr().cast(), &mut cfg) },
            DL_ERR_PARSE
        );

        // semantic validation failures are reported, not errors of the call
        let toml =
            CString::new("kind = \"teacher\"\nrun_id = \"x\"\nseed = 1\n").unwrap();
        assert_eq!(unsafe { dl_config_parse(toml.as_ptr(), &mut cfg) }, DL_OK);
        let mut findings: *mut c_char = ptr::null_mut();
        let mut n_errors = 0u64;
        assert_eq!(
            unsafe { dl_config_validate(cfg, &mut findings, &mut n_errors) },
            DL_OK
        );
        assert!(n_errors >= 2, "missing [task] and [teacher] should both count");
        let text = take_string(findings);
        assert!(text.contains("\"severity\":\"error\""), "{text}");

        // running an invalid config is rejected with the config code
        let dir = tempdir().unwrap();
        let root = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(
            unsafe { dl_run(cfg, root.as_ptr(), ptr::null_mut()) },
            DL_ERR_CONFIG
        );
        unsafe { dl_config_free(cfg) };

        // missing checkpoint file -> io code
        let mut mlp: *mut DlMlp = ptr::null_mut();
        let missing = CString::new("/nonexistent/net.ckpt").unwrap();
        assert_eq!(unsafe { dl_mlp_load(missing.as_ptr(), &mut mlp) }, DL_ERR_IO);
    }

    #[test]
    fn mlp_handles_roundtrip_and_forward() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut rng = derive_rng(17, "teacher-init", 0);
        let net = TwoLayerMlp::symmetric_init(12, 3, 8, &mut rng).unwrap();
        net.save_checkpoint(&path).unwrap();

        let c_path = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut DlMlp = ptr::null_mut();
        assert_eq!(unsafe { dl_mlp_load(c_path.as_ptr(), &mut handle) }, DL_OK);

        let (mut d, mut m) = (0u32, 0u64);
        assert_eq!(unsafe { dl_mlp_meta(handle, &mut d, &mut m) }, DL_OK);
        assert_eq!((d, m), (12, 8));

        // forward on all-ones agrees with the library's packed evaluation
        let coords = vec![1.0f64; 12];
        let mut y = f64::NAN;
        assert_eq!(
            unsafe { dl_mlp_forward(handle, coords.as_ptr(), 12, &mut y) },
            DL_OK
        );
        assert_eq!(y, net.forward((1u128 << 12) - 1));

        // wrong input length -> shape code
        assert_eq!(
            unsafe { dl_mlp_forward(handle, coords.as_ptr(), 11, &mut y) },
            DL_ERR_SHAPE
        );

        // save through the ABI and reload through the library
        let path2 = dir.path().join("copy.ckpt");
        let c_path2 = CString::new(path2.to_str().unwrap()).unwrap();
        assert_eq!(unsafe { dl_mlp_save(handle, c_path2.as_ptr()) }, DL_OK);
        let reloaded = TwoLayerMlp::load_checkpoint(&path2).unwrap();
        assert_eq!(reloaded.forward(0), net.forward(0));
        unsafe { dl_mlp_free(handle) };
    }

    #[test]
    fn majority_zeta_matches_library() {
        let mut v = f64::NAN;
        assert_eq!(unsafe { dl_majority_zeta(9, 2, &mut v) }, DL_OK);
        assert_eq!(v, 0.0, "even-degree majority coefficients vanish");
        assert_eq!(unsafe { dl_majority_zeta(3, 1, &mut v) }, DL_OK);
        assert_eq!(v, majority_zeta_closed(3, 1).unwrap());
        // invalid arguments surface the library's code
        let bad = unsafe { dl_majority_zeta(4, 5, &mut v) };
        assert_eq!(bad, majority_zeta_closed(4, 5).unwrap_err().code());
        assert!(last_error().contains("out of range"), "{}", last_error());
    }

    #[test]
    fn pcfg_corpus_matches_pipeline_stream() {
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(unsafe { dl_pcfg_sample_corpus(5, 0, 50, &mut out) }, DL_OK);
        let via_ffi = take_string(out);

        let mut buf = Vec::new();
        write_corpus(&cfg3b(), 50, 5, 0, &mut buf).unwrap();
        assert_eq!(via_ffi.as_bytes(), buf.as_slice());
        assert_eq!(via_ffi.lines().count(), 50);
    }

    #[test]
    fn committed_header_declares_the_full_surface() {
        let header = std::fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("include/distill_lab.h"),
        )
        .expect("generated header is committed next to the crate");
        for symbol in [
            "dl_version",
            "dl_last_error_message",
            "dl_string_free",
            "dl_config_parse",
            "dl_config_validate",
            "dl_config_free",
            "dl_run",
            "dl_mlp_load",
            "dl_mlp_save",
            "dl_mlp_meta",
            "dl_mlp_forward",
            "dl_mlp_free",
            "dl_majority_zeta",
            "dl_pcfg_sample_corpus",
            "DL_ERR_PANIC",
            "DL_ERR_NULL",
            "DlConfig",
            "DlMlp",
        ] {
            assert!(header.contains(symbol), "header is missing {symbol}");
        }
    }
}
