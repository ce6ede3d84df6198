//! C ABI for unicrawl.
//!
//! Functions return a [`UnicrawlStatus`]; on failure the message is
//! available from [`unicrawl_last_error`] on the same thread. Strings
//! handed out by the library must be released with
//! [`unicrawl_string_free`]; handles with their matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use unicrawl::dedup::{dedup_stage, DedupConfig, DedupStats};
use unicrawl::extract::{extract_main_text, ExtractConfig};
use unicrawl::index_filter::{languages_field_matches, FilterMode};
use unicrawl::report::{reduction, StageStats};
use unicrawl::warc::{decode_html, decompress_member, parse_warc, WarcRecord};
use unicrawl::Document;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnicrawlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    NotFound = 5,
    NoText = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: UnicrawlStatus, msg: impl Into<String>) -> UnicrawlStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> UnicrawlStatus) -> UnicrawlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(UnicrawlStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, UnicrawlStatus> {
    if p.is_null() {
        return Err(fail(UnicrawlStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(UnicrawlStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: &str) -> UnicrawlStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            UnicrawlStatus::Ok
        }
        Err(_) => fail(UnicrawlStatus::InvalidArgument, "string contains a NUL byte"),
    }
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(UnicrawlStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn unicrawl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Tests a comma-separated `content_languages` value against `target`.
/// `lenient` non-zero accepts any list whose first language is the target.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_language_matches(
    languages: *const c_char,
    target: *const c_char,
    lenient: i32,
    out: *mut bool,
) -> UnicrawlStatus {
    guard(|| {
        non_null!(out);
        let languages = try_arg!(str_arg(languages, "languages"));
        let target = try_arg!(str_arg(target, "target"));
        let mode = if lenient != 0 { FilterMode::Lenient } else { FilterMode::Strict };
        *out = languages_field_matches(languages, target, mode);
        UnicrawlStatus::Ok
    })
}

/// Writes the HTTP `Range` header value for an index record.
///
/// # Safety
/// `out` must be writable; free the result with `unicrawl_string_free`.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_range_header(offset: u64, length: u64, out: *mut *mut c_char) -> UnicrawlStatus {
    guard(|| {
        non_null!(out);
        if length == 0 {
            return fail(UnicrawlStatus::InvalidArgument, "length must be positive");
        }
        let Some(last) = offset.checked_add(length - 1) else {
            return fail(UnicrawlStatus::InvalidArgument, "range overflows");
        };
        put_string(out, &format!("bytes={offset}-{last}"))
    })
}

/// Percentage of input bytes a stage removed.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_reduction_pct(bytes_in: u64, bytes_out: u64, out: *mut f64) -> UnicrawlStatus {
    guard(|| {
        non_null!(out);
        let stats = StageStats { bytes_in, bytes_out, ..StageStats::new("ffi") };
        match reduction(&stats) {
            Ok(r) => {
                *out = r;
                UnicrawlStatus::Ok
            }
            Err(e) => fail(UnicrawlStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Documents collected for one deduplication pass.
pub struct UnicrawlDedup {
    config: DedupConfig,
    input: Vec<Document>,
    output: Vec<Document>,
    stats: Option<DedupStats>,
}

/// New deduplicator. Returns null when `min_dup_len` is below 2.
#[no_mangle]
pub extern "C" fn unicrawl_dedup_new(min_dup_len: usize, min_doc_chars: usize) -> *mut UnicrawlDedup {
    if min_dup_len < 2 {
        set_error("min_dup_len must be at least 2");
        return ptr::null_mut();
    }
    let config = DedupConfig { min_dup_len, min_doc_chars, ..Default::default() };
    Box::into_raw(Box::new(UnicrawlDedup { config, input: Vec::new(), output: Vec::new(), stats: None }))
}

/// Queues a document. Documents are kept first-come, so earlier calls win.
///
/// # Safety
/// `handle` must come from `unicrawl_dedup_new`; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_dedup_add(handle: *mut UnicrawlDedup, url: *const c_char, text: *const c_char) -> UnicrawlStatus {
    guard(|| {
        non_null!(handle);
        let url = try_arg!(str_arg(url, "url"));
        let text = try_arg!(str_arg(text, "text"));
        (*handle).input.push(Document::new(url, "", "", text));
        UnicrawlStatus::Ok
    })
}

/// Deduplicates the queued documents, replacing any previous result.
///
/// # Safety
/// `handle` must come from `unicrawl_dedup_new`.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_dedup_run(handle: *mut UnicrawlDedup) -> UnicrawlStatus {
    guard(|| {
        non_null!(handle);
        let h = &mut *handle;
        let outcome = dedup_stage(h.input.clone(), &h.config);
        h.output = outcome.docs;
        h.stats = Some(outcome.stats);
        UnicrawlStatus::Ok
    })
}

/// Number of documents kept by the last run.
///
/// # Safety
/// `handle` must be null or come from `unicrawl_dedup_new`.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_dedup_count(handle: *const UnicrawlDedup) -> usize {
    handle.as_ref().map_or(0, |h| h.output.len())
}

/// Text and URL of kept document `index`. Either output may be null.
///
/// # Safety
/// `handle` must come from `unicrawl_dedup_new`; free outputs with
/// `unicrawl_string_free`.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_dedup_document(
    handle: *const UnicrawlDedup,
    index: usize,
    url: *mut *mut c_char,
    text: *mut *mut c_char,
) -> UnicrawlStatus {
    guard(|| {
        non_null!(handle);
        let Some(doc) = (&(*handle).output).get(index) else {
            return fail(UnicrawlStatus::NotFound, format!("no document {index}"));
        };
        if !url.is_null() {
            let s = put_string(url, &doc.url);
            if s != UnicrawlStatus::Ok {
                return s;
            }
        }
        if !text.is_null() {
            let s = put_string(text, &doc.text);
            if s != UnicrawlStatus::Ok {
                if !url.is_null() {
                    unicrawl_string_free(*url);
                    *url = ptr::null_mut();
                }
                return s;
            }
        }
        UnicrawlStatus::Ok
    })
}

/// Byte totals of the last run.
///
/// # Safety
/// `handle` must come from `unicrawl_dedup_new`; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_dedup_bytes(
    handle: *const UnicrawlDedup,
    bytes_in: *mut u64,
    bytes_out: *mut u64,
) -> UnicrawlStatus {
    guard(|| {
        non_null!(handle, bytes_in, bytes_out);
        let Some(stats) = &(*handle).stats else {
            return fail(UnicrawlStatus::NotFound, "dedup has not run");
        };
        *bytes_in = stats.bytes_in as u64;
        *bytes_out = stats.bytes_out as u64;
        UnicrawlStatus::Ok
    })
}

/// # Safety
/// `handle` must be null or come from `unicrawl_dedup_new`, once.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_dedup_free(handle: *mut UnicrawlDedup) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// A parsed WARC record.
pub struct UnicrawlWarcRecord {
    record: WarcRecord,
}

/// Parses one WARC record, gzip-compressed or not.
///
/// # Safety
/// `data` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_warc_parse(data: *const u8, len: usize, out: *mut *mut UnicrawlWarcRecord) -> UnicrawlStatus {
    guard(|| {
        non_null!(data, out);
        let bytes = std::slice::from_raw_parts(data, len);
        let raw;
        let plain = if bytes.starts_with(&[0x1f, 0x8b]) {
            raw = match decompress_member(bytes) {
                Ok(r) => r,
                Err(e) => return fail(UnicrawlStatus::ParseError, e.to_string()),
            };
            &raw[..]
        } else {
            bytes
        };
        match parse_warc(plain) {
            Ok(record) => {
                *out = Box::into_raw(Box::new(UnicrawlWarcRecord { record }));
                UnicrawlStatus::Ok
            }
            Err(e) => fail(UnicrawlStatus::ParseError, e.to_string()),
        }
    })
}

/// Value of a WARC header, matched case-insensitively.
///
/// # Safety
/// `rec` from `unicrawl_warc_parse`; `name` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_warc_header(
    rec: *const UnicrawlWarcRecord,
    name: *const c_char,
    out: *mut *mut c_char,
) -> UnicrawlStatus {
    guard(|| {
        non_null!(rec, out);
        let name = try_arg!(str_arg(name, "name"));
        match (*rec).record.header(name) {
            Some(v) => put_string(out, v),
            None => fail(UnicrawlStatus::NotFound, format!("no {name} header")),
        }
    })
}

/// Borrowed view of the record block. Valid until the record is freed.
///
/// # Safety
/// `rec` from `unicrawl_warc_parse`; outputs writable.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_warc_payload(
    rec: *const UnicrawlWarcRecord,
    data: *mut *const u8,
    len: *mut usize,
) -> UnicrawlStatus {
    guard(|| {
        non_null!(rec, data, len);
        let p = &(*rec).record.payload;
        *data = p.as_ptr();
        *len = p.len();
        UnicrawlStatus::Ok
    })
}

/// Main text of an HTML response record, using default extraction
/// settings. Returns `NoText` for records that yield no document.
///
/// # Safety
/// `rec` from `unicrawl_warc_parse`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_warc_extract_text(rec: *const UnicrawlWarcRecord, out: *mut *mut c_char) -> UnicrawlStatus {
    guard(|| {
        non_null!(rec, out);
        let page = match decode_html(&(*rec).record, "") {
            Ok(p) => p,
            Err(skip) => return fail(UnicrawlStatus::NoText, skip.to_string()),
        };
        match extract_main_text(&page, &ExtractConfig::default()) {
            Some(doc) => put_string(out, &doc.text),
            None => fail(UnicrawlStatus::NoText, "no block survived extraction"),
        }
    })
}

/// # Safety
/// `rec` must be null or come from `unicrawl_warc_parse`, once.
#[no_mangle]
pub unsafe extern "C" fn unicrawl_warc_free(rec: *mut UnicrawlWarcRecord) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}
