//! C ABI over `metra`.
//!
//! Grids and loaded runs cross the boundary as opaque handles owned by the
//! caller and released with the matching `_free`. Every fallible call returns
//! a `MetraStatus`; on failure `metra_last_error` holds a message for the
//! calling thread until its next failing call. Output buffers are written only
//! on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use metra::env::{EncodingSpec, GridWorld, Mdp, State};
use metra::pca::{pca_optimum, EllipseSpec};
use metra::temporal::all_pairs_temporal_distance;
use metra::trainer::{zero_shot_skill, RunState, ZeroShot};
use metra::Error;
use nalgebra::DMatrix;

/// Distance entry for a state that cannot be reached.
pub const METRA_UNREACHABLE: u32 = u32::MAX;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetraStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidEnv = 3,
    NotEnumerable = 4,
    Numerical = 5,
    Checkpoint = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A grid world with its horizon.
pub struct MetraGrid {
    mdp: Mdp,
}

/// A trained run loaded from a checkpoint.
pub struct MetraRun {
    state: RunState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(MetraStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidEnv(_) => MetraStatus::InvalidEnv,
            Error::NotEnumerable => MetraStatus::NotEnumerable,
            Error::NonFinite { .. } | Error::NotPositiveDefinite | Error::Infeasible(_) | Error::Numerical(_) => {
                MetraStatus::Numerical
            }
            Error::Checkpoint(_) | Error::Json(_) => MetraStatus::Checkpoint,
            Error::Io(_) => MetraStatus::Io,
            _ => MetraStatus::InvalidArgument,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(MetraStatus::NullPointer, format!("{what} is null"))
}

fn too_small(what: &str, need: usize, got: usize) -> Fail {
    Fail(MetraStatus::BufferTooSmall, format!("{what} holds {got} values, {need} needed"))
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> MetraStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MetraStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MetraStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(MetraStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn metra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Open `width` x `height` grid starting at the center cell.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn metra_grid_new(
    width: usize,
    height: usize,
    horizon: usize,
    out: *mut *mut MetraGrid,
) -> MetraStatus {
    guard(|| {
        let g = GridWorld::new(width, height, [], [])?;
        put(out, MetraGrid { mdp: Mdp::grid(g, horizon, EncodingSpec::default())? })
    })
}

/// Grid from an ASCII map: `#` wall, `.` free, `S` start, `>` `<` `^` `v` one-way doors.
///
/// # Safety
/// `map` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn metra_grid_from_ascii(
    map: *const c_char,
    horizon: usize,
    out: *mut *mut MetraGrid,
) -> MetraStatus {
    guard(|| {
        let g = GridWorld::from_ascii(text(map, "map")?)?;
        put(out, MetraGrid { mdp: Mdp::grid(g, horizon, EncodingSpec::default())? })
    })
}

/// # Safety
/// `grid` must come from `metra_grid_new` or `metra_grid_from_ascii` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn metra_grid_free(grid: *mut MetraGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// # Safety
/// `grid` must be a live handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn metra_grid_num_states(grid: *const MetraGrid, out: *mut usize) -> MetraStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = g.mdp.num_states().ok_or(Error::NotEnumerable)?;
        Ok(())
    })
}

/// Cell `(x, y)` of state index `state`.
///
/// # Safety
/// `grid` must be a live handle, `x` and `y` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn metra_grid_cell(
    grid: *const MetraGrid,
    state: usize,
    x: *mut usize,
    y: *mut usize,
) -> MetraStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        let gw = g.mdp.as_grid().ok_or(Error::NotEnumerable)?;
        if state >= gw.num_states() {
            return Err(Fail(MetraStatus::InvalidArgument, format!("state {state} out of range")));
        }
        let (cx, cy) = gw.cell(state);
        *x.as_mut().ok_or_else(|| null("x"))? = cx;
        *y.as_mut().ok_or_else(|| null("y"))? = cy;
        Ok(())
    })
}

/// Row-major `n` x `n` step counts into `out` (`len >= n * n`), `METRA_UNREACHABLE` where no path exists.
///
/// # Safety
/// `grid` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn metra_grid_distances(grid: *const MetraGrid, out: *mut u32, len: usize) -> MetraStatus {
    guard(|| {
        let g = grid.as_ref().ok_or_else(|| null("grid"))?;
        let d = all_pairs_temporal_distance(&g.mdp)?;
        let n = d.num_states();
        if len < n * n {
            return Err(too_small("out", n * n, len));
        }
        let out = slice_mut(out, n * n, "out")?;
        for u in 0..n {
            for v in 0..n {
                out[u * n + v] = d.raw(u, v);
            }
        }
        Ok(())
    })
}

/// Best linear map on the ellipse `x^T A^{-1} x <= 1`: `a` is row-major `m` x `m`,
/// `w_out` receives row-major `m` x `d` (`w_len >= m * d`) and `value_out` the optimum.
///
/// # Safety
/// `a` must hold `m * m` values, `w_out` be valid for `w_len` writes, `value_out` for one.
#[no_mangle]
pub unsafe extern "C" fn metra_pca_optimum(
    a: *const f64,
    m: usize,
    d: usize,
    w_out: *mut f64,
    w_len: usize,
    value_out: *mut f64,
) -> MetraStatus {
    guard(|| {
        let a = slice(a, m * m, "a")?;
        if m == 0 {
            return Err(Fail(MetraStatus::InvalidArgument, "m must be positive".into()));
        }
        if w_len < m * d {
            return Err(too_small("w_out", m * d, w_len));
        }
        let value_out = value_out.as_mut().ok_or_else(|| null("value_out"))?;
        let spec = EllipseSpec::new(DMatrix::from_row_slice(m, m, a), d)?;
        let (w, value) = pca_optimum(&spec)?;
        let out = slice_mut(w_out, m * d, "w_out")?;
        for i in 0..m {
            for j in 0..d {
                out[i * d + j] = w.w()[(i, j)];
            }
        }
        *value_out = value;
        Ok(())
    })
}

/// Loads a run directory or the checkpoint directory inside it.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn metra_checkpoint_load(path: *const c_char, out: *mut *mut MetraRun) -> MetraStatus {
    guard(|| {
        let p = Path::new(text(path, "path")?);
        let dir = if p.join("checkpoint").join("state.json").is_file() {
            p.join("checkpoint")
        } else {
            p.to_path_buf()
        };
        put(out, MetraRun { state: metra::checkpoint::load(&dir)? })
    })
}

/// # Safety
/// `run` must come from `metra_checkpoint_load` and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn metra_run_free(run: *mut MetraRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

fn repr(run: &MetraRun) -> Result<&metra::objective::ReprFn, Fail> {
    run.state
        .phi()
        .filter(|_| !run.state.config.train.variant.conditions_on_skill())
        .ok_or_else(|| Fail(MetraStatus::InvalidArgument, "run has no state representation".into()))
}

/// Dimensions of observations `phi` reads and of the latent space it writes.
///
/// # Safety
/// `run` must be a live handle; `obs_dim` and `latent_dim` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn metra_run_dims(
    run: *const MetraRun,
    obs_dim: *mut usize,
    latent_dim: *mut usize,
) -> MetraStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let phi = repr(r)?;
        *obs_dim.as_mut().ok_or_else(|| null("obs_dim"))? = r.state.mdp.obs_dim();
        *latent_dim.as_mut().ok_or_else(|| null("latent_dim"))? = phi.latent_dim();
        Ok(())
    })
}

/// Observation of the state at `coords`: a free cell `(x, y)` on grids, a point inside the ellipse otherwise.
///
/// # Safety
/// `coords` must hold `n` values and `obs_out` be valid for `obs_len` writes.
#[no_mangle]
pub unsafe extern "C" fn metra_run_observe(
    run: *const MetraRun,
    coords: *const f64,
    n: usize,
    obs_out: *mut f64,
    obs_len: usize,
) -> MetraStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let c = slice(coords, n, "coords")?;
        let mdp = &r.state.mdp;
        let state = if let Some(g) = mdp.as_grid() {
            let cell = match c {
                [x, y] if *x >= 0.0 && *y >= 0.0 && x.fract() == 0.0 && y.fract() == 0.0 => {
                    g.cell_index((*x as usize, *y as usize))
                }
                _ => None,
            };
            State::Cell(cell.ok_or_else(|| Fail(MetraStatus::InvalidArgument, format!("{c:?} is not a free cell")))?)
        } else {
            let pm = mdp.as_point_mass().ok_or(Error::NotEnumerable)?;
            if c.len() != pm.dim() || !pm.contains(c) {
                return Err(Fail(MetraStatus::InvalidArgument, format!("{c:?} is not inside the ellipse")));
            }
            State::Point(c.to_vec())
        };
        let obs = mdp.observe(&state);
        if obs_len < obs.len() {
            return Err(too_small("obs_out", obs.len(), obs_len));
        }
        slice_mut(obs_out, obs.len(), "obs_out")?.copy_from_slice(&obs);
        Ok(())
    })
}

/// `phi(obs)` into `out`.
///
/// # Safety
/// `obs` must hold `obs_len` values and `out` be valid for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn metra_run_phi(
    run: *const MetraRun,
    obs: *const f64,
    obs_len: usize,
    out: *mut f64,
    out_len: usize,
) -> MetraStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let phi = repr(r)?;
        let v = phi.embed(slice(obs, obs_len, "obs")?)?;
        if out_len < v.len() {
            return Err(too_small("out", v.len(), out_len));
        }
        slice_mut(out, v.len(), "out")?.copy_from_slice(&v);
        Ok(())
    })
}

/// Skill pointing from observation `s` to observation `g`. When the two embed
/// to the same point `*reached` is set to 1 and `z_out` is left untouched.
///
/// # Safety
/// `s` and `g` must hold `obs_len` values, `z_out` be valid for `z_len` writes and `reached` for one.
#[no_mangle]
pub unsafe extern "C" fn metra_run_zero_shot(
    run: *const MetraRun,
    s: *const f64,
    g: *const f64,
    obs_len: usize,
    z_out: *mut f64,
    z_len: usize,
    reached: *mut i32,
) -> MetraStatus {
    guard(|| {
        let r = run.as_ref().ok_or_else(|| null("run"))?;
        let phi = repr(r)?;
        let reached = reached.as_mut().ok_or_else(|| null("reached"))?;
        let s = slice(s, obs_len, "s")?;
        let g = slice(g, obs_len, "g")?;
        if z_len < phi.latent_dim() {
            return Err(too_small("z_out", phi.latent_dim(), z_len));
        }
        match zero_shot_skill(phi, s, g, r.state.config.skill.kind)? {
            ZeroShot::GoalReached => *reached = 1,
            ZeroShot::Skill(z) => {
                slice_mut(z_out, z.z.len(), "z_out")?.copy_from_slice(&z.z);
                *reached = 0;
            }
        }
        Ok(())
    })
}
