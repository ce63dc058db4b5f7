//! C ABI over the simulator core. Handles are opaque; every fallible call returns an
//! [`AdaptStatus`] and leaves a message retrievable with [`adapt_last_error`]. Strings
//! returned through `char **` out-parameters must be released with [`adapt_string_free`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use adapt::actions::{execute, parse_action};
use adapt::grammar::{enumerate_valid_actions, GrammarOptions};
use adapt::prefs::satisfaction_rate;
use adapt::refdpo::{select_datapoint, Provenance, ReflectionConfig, StepScores};
use adapt::world::{default_catalog, generate_scene, load_custom_catalog, Catalog, SceneGenConfig, SceneGraph};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ParseError = 4,
    WorldError = 5,
    Panic = 6,
}

/// Choice made by [`adapt_select_datapoint`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptChoice {
    Skip = 0,
    Teacher = 1,
    Question = 2,
}

/// Opaque object catalog.
pub struct AdaptCatalog {
    inner: Catalog,
}

/// Opaque scene plus the set of entities the agent has discovered.
pub struct AdaptScene {
    scene: SceneGraph,
    discovered: BTreeSet<String>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

struct Fail(AdaptStatus, String);

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> AdaptStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            AdaptStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AdaptStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(AdaptStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(AdaptStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(AdaptStatus::NullPointer, format!("{name} is null")))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> FfiResult {
    if out.is_null() {
        return Err(Fail(AdaptStatus::NullPointer, format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String, name: &str) -> FfiResult {
    let c = CString::new(s).map_err(|_| Fail(AdaptStatus::InvalidArgument, "string contains NUL".into()))?;
    write_out(out, c.into_raw(), name)
}

fn world_err(e: impl std::fmt::Display) -> Fail {
    Fail(AdaptStatus::WorldError, e.to_string())
}

/// Message for the last failed call on this thread; empty after a successful call. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn adapt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn adapt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads the built-in catalog.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_catalog_default(out: *mut *mut AdaptCatalog) -> AdaptStatus {
    guard(|| {
        let h = Box::into_raw(Box::new(AdaptCatalog { inner: default_catalog().clone() }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Parses a catalog from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_catalog_from_json(json: *const c_char, out: *mut *mut AdaptCatalog) -> AdaptStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let inner = load_custom_catalog(text).map_err(world_err)?;
        let h = Box::into_raw(Box::new(AdaptCatalog { inner }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// # Safety
/// `catalog` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adapt_catalog_free(catalog: *mut AdaptCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Generates a scene with inclusion probability `p` in [0, 1].
///
/// # Safety
/// `catalog` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_generate(
    catalog: *const AdaptCatalog,
    seed: u64,
    p: f64,
    out: *mut *mut AdaptScene,
) -> AdaptStatus {
    guard(|| {
        let c = ref_arg(catalog, "catalog")?;
        let cfg = SceneGenConfig::new(p, seed).map_err(|e| Fail(AdaptStatus::InvalidArgument, e.to_string()))?;
        let scene = generate_scene(&c.inner, &cfg);
        let h = Box::into_raw(Box::new(AdaptScene { scene, discovered: BTreeSet::new() }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// Loads a scene from the JSON produced by [`adapt_scene_to_json`].
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_from_json(json: *const c_char, out: *mut *mut AdaptScene) -> AdaptStatus {
    guard(|| {
        let scene = SceneGraph::from_json(str_arg(json, "json")?).map_err(world_err)?;
        let h = Box::into_raw(Box::new(AdaptScene { scene, discovered: BTreeSet::new() }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// # Safety
/// `scene` must come from this library and not have been freed. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_free(scene: *mut AdaptScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_to_json(scene: *const AdaptScene, out: *mut *mut c_char) -> AdaptStatus {
    guard(|| write_string(out, ref_arg(scene, "scene")?.scene.to_json(), "out"))
}

/// Hex SHA-256 digest of the scene state.
///
/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_digest(scene: *const AdaptScene, out: *mut *mut c_char) -> AdaptStatus {
    guard(|| write_string(out, ref_arg(scene, "scene")?.scene.digest(), "out"))
}

/// # Safety
/// `scene` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_movable_count(scene: *const AdaptScene, out: *mut usize) -> AdaptStatus {
    guard(|| write_out(out, ref_arg(scene, "scene")?.scene.movable_count(), "out"))
}

/// Executes one action. Failed actions yield a failure observation and leave the scene
/// unchanged; text that does not parse returns `ParseError`.
///
/// # Safety
/// `scene` must be a live handle, `action` a NUL-terminated string and the out pointers
/// valid. `out_terminal` may be null.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_step(
    scene: *mut AdaptScene,
    action: *const c_char,
    out_observation: *mut *mut c_char,
    out_terminal: *mut bool,
) -> AdaptStatus {
    guard(|| {
        let s = scene.as_mut().ok_or_else(|| Fail(AdaptStatus::NullPointer, "scene is null".into()))?;
        let text = str_arg(action, "action")?;
        if out_observation.is_null() {
            return Err(Fail(AdaptStatus::NullPointer, "out_observation is null".into()));
        }
        let parsed = parse_action(text).map_err(|e| Fail(AdaptStatus::ParseError, e.to_string()))?;
        let o = execute(&mut s.scene, &mut s.discovered, &parsed).map_err(world_err)?;
        if !out_terminal.is_null() {
            out_terminal.write(o.terminal);
        }
        write_string(out_observation, o.observation.text, "out_observation")
    })
}

/// Whether `action` is derivable from the valid-action grammar at the scene's current state.
///
/// # Safety
/// Handles must be live, `action` a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_scene_is_valid_action(
    scene: *const AdaptScene,
    catalog: *const AdaptCatalog,
    action: *const c_char,
    include_ask: bool,
    out: *mut bool,
) -> AdaptStatus {
    guard(|| {
        let s = ref_arg(scene, "scene")?;
        let c = ref_arg(catalog, "catalog")?;
        let text = str_arg(action, "action")?;
        let g = enumerate_valid_actions(&s.scene, &s.discovered, &c.inner, &GrammarOptions { include_ask });
        let canonical = parse_action(text).map(|a| a.render()).unwrap_or_else(|_| text.to_string());
        write_out(out, g.derives(&canonical), "out")
    })
}

/// Parses action text and returns its canonical form as JSON.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out_json` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_parse_action(text: *const c_char, out_json: *mut *mut c_char) -> AdaptStatus {
    guard(|| {
        let a = parse_action(str_arg(text, "text")?).map_err(|e| Fail(AdaptStatus::ParseError, e.to_string()))?;
        let json = serde_json::json!({
            "kind": a.kind,
            "args": a.args,
            "result_names": a.result_names,
            "canonical": a.render(),
        });
        write_string(out_json, json.to_string(), "out_json")
    })
}

/// Preference-data selection for one step. Pass NaN for `p_teacher_given_q` when there is no
/// candidate question.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_select_datapoint(
    p_teacher: f64,
    p_student: f64,
    p_teacher_given_q: f64,
    epsilon1: f64,
    epsilon2: f64,
    out: *mut AdaptChoice,
) -> AdaptStatus {
    guard(|| {
        let cfg = ReflectionConfig { epsilon1, epsilon2, ..ReflectionConfig::default() };
        cfg.validate().map_err(|e| Fail(AdaptStatus::InvalidArgument, e))?;
        if !p_teacher.is_finite() || !p_student.is_finite() {
            return Err(Fail(AdaptStatus::InvalidArgument, "probabilities must be finite".into()));
        }
        let q = (!p_teacher_given_q.is_nan()).then_some(p_teacher_given_q);
        let scores = StepScores::new(p_teacher, p_student, q);
        let a_q = q.map(|_| "q");
        let choice = match select_datapoint(&scores, "t", a_q, "s", &cfg) {
            None => AdaptChoice::Skip,
            Some(s) if s.provenance == Provenance::Teacher => AdaptChoice::Teacher,
            Some(_) => AdaptChoice::Question,
        };
        write_out(out, choice, "out")
    })
}

/// Satisfied over satisfied plus violated, 0 when both are 0.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn adapt_preference_rate(satisfied: usize, violated: usize, out: *mut f64) -> AdaptStatus {
    guard(|| write_out(out, satisfaction_rate(satisfied, violated), "out"))
}
