//! C interface to `hubrail`.
//!
//! Scenarios and evaluations are opaque handles. Plans, holding plans and
//! delay scenarios cross the boundary as JSON strings in the same format the
//! command-line tool reads and writes. Every fallible function returns an
//! [`HrStatus`]; on failure [`hr_last_error`] describes what went wrong.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`hr_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_double, size_t};
use serde::de::DeserializeOwned;

use hubrail::config::{Scenario, ScenarioConfig};
use hubrail::demand::{DelayScenario, DemandModel};
use hubrail::ga::GaParams;
use hubrail::harness::CellSeeds;
use hubrail::model::{HoldingPlan, TrainPlan};
use hubrail::simulator::{evaluate, Evaluation};
use hubrail::stage1::optimize_formation_and_timetable;
use hubrail::stage2::optimize_holding;
use hubrail::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Malformed = 3,
    Infeasible = 4,
    Invariant = 5,
    OverConstrained = 6,
    Io = 7,
    OutOfRange = 8,
    Panic = 9,
}

/// A loaded scenario: line, bounds, period and demand.
pub struct HrScenario {
    inner: Scenario,
}

/// The scored result of one plan evaluation.
pub struct HrEvaluation {
    inner: Evaluation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(HrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Malformed(_) | Error::Json(_) | Error::Csv(_) => HrStatus::Malformed,
            Error::Infeasible(_) => HrStatus::Infeasible,
            Error::Invariant(_) => HrStatus::Invariant,
            Error::OverConstrained(_) => HrStatus::OverConstrained,
            Error::Io(_) => HrStatus::Io,
        };
        Failure(code, e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure(HrStatus::Malformed, format!("malformed input: {e}"))
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> HrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HrStatus::Ok
        }
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            HrStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(HrStatus::NullPointer, format!("null pointer: {what}"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(HrStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_json<T: DeserializeOwned>(p: *const c_char, what: &str) -> Result<Option<T>, Failure> {
    if p.is_null() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(str_arg(p, what)?)?))
}

unsafe fn scenario<'a>(p: *const HrScenario) -> Result<&'a Scenario, Failure> {
    p.as_ref().map(|s| &s.inner).ok_or_else(|| null("scenario"))
}

unsafe fn put<T>(out: *mut T, v: T) {
    out.write(v);
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(HrStatus::Invariant, "output contains NUL".into()))?;
    put(out, c.into_raw());
    Ok(())
}

fn demand(sc: &Scenario, delays: Option<DelayScenario>) -> Result<DemandModel, Failure> {
    Ok(match delays {
        Some(d) => sc.realize(&d)?,
        None => sc.scheduled.clone(),
    })
}

fn ga_params(base: GaParams, seed: u64, generations: size_t) -> GaParams {
    let mut p = base.with_seed(seed);
    if generations > 0 {
        p.max_generations = generations;
    }
    p
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn hr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn hr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads the bundled beijing9 scenario.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_scenario_bundled(out: *mut *mut HrScenario) -> HrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = ScenarioConfig::beijing9().materialize()?;
        put(out, Box::into_raw(Box::new(HrScenario { inner })));
        Ok(())
    })
}

/// Loads a scenario from config JSON. Demand CSV paths, if any, are taken
/// relative to the working directory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_scenario_from_json(json: *const c_char, out: *mut *mut HrScenario) -> HrStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = ScenarioConfig::from_json(str_arg(json, "json")?)?.materialize()?;
        put(out, Box::into_raw(Box::new(HrScenario { inner })));
        Ok(())
    })
}

/// # Safety
/// `sc` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn hr_scenario_free(sc: *mut HrScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Number of stations, or 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_scenario_n_stations(sc: *const HrScenario) -> size_t {
    sc.as_ref().map_or(0, |s| s.inner.config.line.n_stations())
}

/// Fleet size, or 0 for a null handle.
///
/// # Safety
/// `sc` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_scenario_n_trains(sc: *const HrScenario) -> size_t {
    sc.as_ref().map_or(0, |s| s.inner.config.n_trains)
}

/// Samples a feeder delay scenario and returns it as JSON.
///
/// # Safety
/// `sc` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_sample_delays(sc: *const HrScenario, seed: u64, out: *mut *mut c_char) -> HrStatus {
    guard(|| {
        let sc = scenario(sc)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let d = sc.sample_delays(seed)?;
        put_string(out, serde_json::to_string(&d)?)
    })
}

/// Optimizes formations and timetable against scheduled demand and returns
/// the plan as JSON. `generations` of 0 keeps the configured value.
///
/// # Safety
/// `sc` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_optimize_plan(sc: *const HrScenario, seed: u64, generations: size_t, out: *mut *mut c_char) -> HrStatus {
    guard(|| {
        let sc = scenario(sc)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = &sc.config;
        let params = ga_params(c.ga, CellSeeds::derive(seed).stage1, generations);
        let r = optimize_formation_and_timetable(&c.line, &sc.scheduled, &c.bounds, &c.period, c.n_trains, &params)?;
        put_string(out, serde_json::to_string(&r.plan)?)
    })
}

/// Optimizes holding for a plan and returns the holding plan as JSON.
/// `delays_json` may be null for scheduled demand.
///
/// # Safety
/// `sc` must be a live handle, `plan_json` a NUL-terminated string,
/// `delays_json` null or NUL-terminated, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_optimize_holding(
    sc: *const HrScenario,
    plan_json: *const c_char,
    delays_json: *const c_char,
    seed: u64,
    generations: size_t,
    out: *mut *mut c_char,
) -> HrStatus {
    guard(|| {
        let sc = scenario(sc)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let plan: TrainPlan = serde_json::from_str(str_arg(plan_json, "plan_json")?)?;
        let dm = demand(sc, opt_json(delays_json, "delays_json")?)?;
        let c = &sc.config;
        let params = ga_params(c.stage2_params(), CellSeeds::derive(seed).stage2, generations);
        let r = optimize_holding(&plan, &c.line, &dm, &c.bounds, &params)?;
        put_string(out, serde_json::to_string(&r.holding)?)
    })
}

/// Evaluates a plan. `holding_json` and `delays_json` may be null.
///
/// # Safety
/// `sc` must be a live handle, the strings null or NUL-terminated as noted,
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_evaluate(
    sc: *const HrScenario,
    plan_json: *const c_char,
    holding_json: *const c_char,
    delays_json: *const c_char,
    out: *mut *mut HrEvaluation,
) -> HrStatus {
    guard(|| {
        let sc = scenario(sc)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let plan: TrainPlan = serde_json::from_str(str_arg(plan_json, "plan_json")?)?;
        let holding: Option<HoldingPlan> = opt_json(holding_json, "holding_json")?;
        let dm = demand(sc, opt_json(delays_json, "delays_json")?)?;
        let inner = evaluate(&plan, &sc.config.line, &dm, holding.as_ref())?;
        put(out, Box::into_raw(Box::new(HrEvaluation { inner })));
        Ok(())
    })
}

/// # Safety
/// `ev` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn hr_evaluation_free(ev: *mut HrEvaluation) {
    if !ev.is_null() {
        drop(Box::from_raw(ev));
    }
}

unsafe fn ev_get(ev: *const HrEvaluation, f: impl Fn(&Evaluation) -> f64) -> c_double {
    ev.as_ref().map_or(f64::NAN, |e| f(&e.inner))
}

/// Total spare capacity. NaN for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_evaluation_spare(ev: *const HrEvaluation) -> c_double {
    ev_get(ev, |e| e.spare)
}

/// Waiting for the first train, passenger-minutes. NaN for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_evaluation_first_wait(ev: *const HrEvaluation) -> c_double {
    ev_get(ev, |e| e.waiting.first)
}

/// Extra waiting caused by being left behind. NaN for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_evaluation_extra_wait(ev: *const HrEvaluation) -> c_double {
    ev_get(ev, |e| e.waiting.extra)
}

/// Passengers left behind by two consecutive trains. NaN for a null handle.
///
/// # Safety
/// `ev` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hr_evaluation_violation(ev: *const HrEvaluation) -> c_double {
    ev_get(ev, |e| e.violation)
}

/// Passengers left behind by train `train` at station `station`, both
/// zero-based.
///
/// # Safety
/// `ev` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hr_evaluation_left_behind(ev: *const HrEvaluation, train: size_t, station: size_t, out: *mut c_double) -> HrStatus {
    guard(|| {
        let e = ev.as_ref().ok_or_else(|| null("evaluation"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let lb = &e.inner.flow.left_behind;
        if train >= lb.rows() || station >= lb.cols() {
            return Err(Failure(HrStatus::OutOfRange, format!("cell ({train}, {station}) outside {}x{}", lb.rows(), lb.cols())));
        }
        put(out, lb[(train, station)]);
        Ok(())
    })
}
