//! C interface to `hierlearn` inference.
//!
//! Every fallible function returns an [`HlStatus`]. On failure the message is
//! kept per thread and can be read with [`hl_last_error`]. Handles are opaque
//! and must be released with the matching `_free` function. Panics never
//! cross the boundary; they surface as `HL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use hierlearn::datapipe::{Image, Preprocess};
use hierlearn::hierarchy::{chain, BinaryNode, HierarchyTree, TreeManifest};
use hierlearn::nnet::Network;
use hierlearn::sched::SgdrSchedule;
use hierlearn::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numeric = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

/// Leaf classes in tree order.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HlLeaf {
    Normal = 0,
    Benign = 1,
    InSitu = 2,
    Invasive = 3,
}

/// A single binary network.
pub struct HlNetwork {
    net: Network,
}

/// A three-node tree plus the preprocessing recorded in its manifest.
pub struct HlTree {
    tree: HierarchyTree,
    preprocess: Preprocess,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HlStatus {
    match e {
        Error::InvalidArgument(_) | Error::InvalidLabel { .. } | Error::Config(_) => HlStatus::InvalidArgument,
        Error::Shape(_) | Error::LayerShape { .. } => HlStatus::Shape,
        Error::Numeric(_) => HlStatus::Numeric,
        Error::Io { .. } => HlStatus::Io,
        _ => HlStatus::Format,
    }
}

struct Fail(HlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HlStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HlStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(HlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(HlStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null("input"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn check_len(got: usize, want: usize) -> Result<(), Fail> {
    if got != want {
        return Err(Fail(HlStatus::Shape, format!("input has {got} values, expected {want}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn hl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a network file written by the training tools.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_network_load(path: *const c_char, out: *mut *mut HlNetwork) -> HlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let net = Network::load(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(HlNetwork { net }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`hl_network_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hl_network_input_dim(net: *const HlNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.net.input_dim())
}

/// Class probabilities for one input row, written to `out[0..2]`.
///
/// # Safety
/// `x` must point to `len` doubles and `out` to room for 2.
#[no_mangle]
pub unsafe extern "C" fn hl_network_predict(
    net: *const HlNetwork,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> HlStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("network"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = slice_arg(x, len)?;
        check_len(len, net.net.input_dim())?;
        let p = net.net.prob(x)?;
        std::ptr::copy_nonoverlapping(p.as_ptr(), out, 2);
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`hl_network_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hl_network_free(net: *mut HlNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Loads a tree manifest; network paths resolve against its directory.
///
/// # Safety
/// `manifest` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hl_tree_load(manifest: *const c_char, out: *mut *mut HlTree) -> HlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(manifest)?;
        let m = TreeManifest::load(&path)?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let tree = m.build_tree(base)?;
        *out = Box::into_raw(Box::new(HlTree { tree, preprocess: m.preprocess }));
        Ok(())
    })
}

/// Width of the preprocessed input the tree expects.
///
/// # Safety
/// `tree` must come from [`hl_tree_load`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn hl_tree_input_dim(tree: *const HlTree) -> usize {
    tree.as_ref().map_or(0, |t| t.tree.carci.input_dim())
}

unsafe fn tree_input<'a>(tree: *const HlTree, x: *const f64, len: usize) -> Result<(&'a HlTree, &'a [f64]), Fail> {
    let t = tree.as_ref().ok_or_else(|| null("tree"))?;
    let x = slice_arg(x, len)?;
    check_len(len, t.tree.carci.input_dim())?;
    Ok((t, x))
}

/// Hard routing of one preprocessed input.
///
/// # Safety
/// `x` must point to `len` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_tree_predict_hard(
    tree: *const HlTree,
    x: *const f64,
    len: usize,
    out: *mut HlLeaf,
) -> HlStatus {
    guard(|| {
        let (t, x) = tree_input(tree, x, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = leaf(t.tree.predict_hard(x)?.index());
        Ok(())
    })
}

/// Chain-rule leaf distribution of one preprocessed input, written to `out[0..4]`.
///
/// # Safety
/// `x` must point to `len` doubles and `out` to room for 4.
#[no_mangle]
pub unsafe extern "C" fn hl_tree_predict_soft(
    tree: *const HlTree,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> HlStatus {
    guard(|| {
        let (t, x) = tree_input(tree, x, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = t.tree.predict_soft(x)?;
        std::ptr::copy_nonoverlapping(d.0.as_ptr(), out, 4);
        Ok(())
    })
}

/// Applies the manifest's preprocessing to a raw `height × width × channels`
/// image (row-major, channels last) and routes it.
///
/// # Safety
/// `pixels` must point to `height*width*channels` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_tree_classify_image(
    tree: *const HlTree,
    pixels: *const f64,
    height: usize,
    width: usize,
    channels: usize,
    out: *mut HlLeaf,
) -> HlStatus {
    guard(|| {
        let t = tree.as_ref().ok_or_else(|| null("tree"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Fail(HlStatus::InvalidArgument, "image size overflows".into()))?;
        let img = Image::new(height, width, channels, slice_arg(pixels, n)?.to_vec())?;
        let x = t.preprocess.network_input(&img)?;
        check_len(x.len(), t.tree.carci.input_dim())?;
        *out = leaf(t.tree.predict_hard(x.data())?.index());
        Ok(())
    })
}

/// # Safety
/// `tree` must come from [`hl_tree_load`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn hl_tree_free(tree: *mut HlTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

fn leaf(i: usize) -> HlLeaf {
    [HlLeaf::Normal, HlLeaf::Benign, HlLeaf::InSitu, HlLeaf::Invasive][i]
}

/// Chain rule on raw node outputs: `root`, `norbe` and `invis` each point to
/// two probabilities; the four leaf probabilities go to `out`.
///
/// # Safety
/// Inputs must point to 2 doubles each and `out` to room for 4.
#[no_mangle]
pub unsafe extern "C" fn hl_chain(root: *const f64, norbe: *const f64, invis: *const f64, out: *mut f64) -> HlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let pair = |p: *const f64| -> Result<[f64; 2], Fail> {
            let s = slice_arg(p, 2)?;
            Ok([s[0], s[1]])
        };
        let d = chain(pair(root)?, pair(norbe)?, pair(invis)?);
        std::ptr::copy_nonoverlapping(d.0.as_ptr(), out, 4);
        Ok(())
    })
}

/// SGDR rate after `iter` updates, starting from a cycle start.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hl_sgdr_lr(
    eta_max: f64,
    eta_min: f64,
    cycle_len: usize,
    cycle_mult: f64,
    iter: usize,
    out: *mut f64,
) -> HlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let mut s = SgdrSchedule::new(eta_max, eta_min, cycle_len, cycle_mult)?;
        for _ in 0..iter {
            s = s.advance();
        }
        *out = s.lr();
        Ok(())
    })
}
