//! C ABI over the ringbot stack.
//!
//! Handles are opaque pointers created and destroyed here; every fallible
//! call returns an [`RbStatus`] and leaves a thread-local message
//! readable through [`rb_last_error_message`]. The generated header
//! lands in `include/ringbot.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::ptr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ringbot::error::Error;
use ringbot::geometry::{
    camera_to_robot, drop_up_axis, invert_intrinsics, pixel_to_camera, Calibration, PixelDetection,
};
use ringbot::link;
use ringbot::sim::{
    build_observation, init_field, Action, FieldState, SimConfig, StackedObservation, OBS_LEN,
};
use ringbot::vision::{detect_rings, ColorImage, DepthMap, HeuristicDetector, PipelineConfig};

/// Result code for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbStatus {
    Ok = 0,
    /// A pointer was null or a value out of range.
    InvalidArgument = 1,
    /// JSON or packet text failed to parse.
    ParseError = 2,
    /// The operation is not valid in the current state.
    InvalidState = 3,
    /// The provided buffer is too small.
    BufferTooSmall = 4,
    /// Any other failure; see `rb_last_error_message`.
    RuntimeError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_for(err: &Error) -> RbStatus {
    match err {
        Error::Json(_) | Error::MalformedPacket(_) => RbStatus::ParseError,
        Error::InvalidConfig(_) | Error::InvalidIntrinsics(_) | Error::InvalidAction(_)
        | Error::InvalidPacket(_) => RbStatus::InvalidArgument,
        Error::InvalidState(_) => RbStatus::InvalidState,
        _ => RbStatus::RuntimeError,
    }
}

fn fail(err: Error) -> RbStatus {
    let status = status_for(&err);
    set_error(err.to_string());
    status
}

/// Copy the most recent error message for this thread into `buf` as a
/// NUL-terminated string. Returns the full message length (excluding the
/// terminator), which may exceed `buf_len`.
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes, or be null (in which
/// case only the length is returned).
#[no_mangle]
pub unsafe extern "C" fn rb_last_error_message(buf: *mut c_char, buf_len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && buf_len > 0 {
            let n = bytes.len().min(buf_len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rb_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

unsafe fn cstr_arg<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

/// Opaque simulation handle: config, world state, observation stacks,
/// and the noise generator.
pub struct RbSim {
    cfg: SimConfig,
    state: FieldState,
    rng: ChaCha8Rng,
    stacks: [StackedObservation; 2],
}

fn new_sim(cfg: SimConfig) -> Result<Box<RbSim>, Error> {
    cfg.validate()?;
    let state = init_field(&cfg, cfg.layout)?;
    let depth = cfg.stack_depth as usize;
    Ok(Box::new(RbSim {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xB01DFACE),
        state,
        stacks: [StackedObservation::new(depth), StackedObservation::new(depth)],
        cfg,
    }))
}

/// Create a simulation from a JSON config (all fields optional). Pass
/// null for the defaults. Returns null on error.
///
/// # Safety
/// `config_json` must be null or a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rb_sim_new(config_json: *const c_char) -> *mut RbSim {
    let cfg = match cstr_arg(config_json) {
        None => Ok(SimConfig::default()),
        Some(text) => serde_json::from_str::<SimConfig>(text).map_err(Error::from),
    };
    match cfg.and_then(new_sim) {
        Ok(sim) => Box::into_raw(sim),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

/// Destroy a simulation handle. Null is ignored.
///
/// # Safety
/// `sim` must be a pointer from `rb_sim_new` that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn rb_sim_free(sim: *mut RbSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Per-agent reward change, split by source.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbRewardDelta {
    pub ring: f64,
    pub pin: f64,
    pub goal: f64,
    pub position: f64,
}

impl From<ringbot::sim::RewardDelta> for RbRewardDelta {
    fn from(d: ringbot::sim::RewardDelta) -> Self {
        RbRewardDelta { ring: d.ring, pin: d.pin, goal: d.goal, position: d.position }
    }
}

/// Advance the simulation one tick. `actions` points to four doubles:
/// red forward, red turn, blue forward, blue turn. `out_deltas`, when
/// not null, receives two reward deltas (red then blue).
///
/// # Safety
/// `sim` must be a live handle, `actions` must point to four readable
/// doubles, and `out_deltas` must be null or point to two writable
/// [`RbRewardDelta`].
#[no_mangle]
pub unsafe extern "C" fn rb_sim_step(
    sim: *mut RbSim,
    actions: *const f64,
    out_deltas: *mut RbRewardDelta,
) -> RbStatus {
    let Some(sim) = sim.as_mut() else {
        set_error("sim handle is null");
        return RbStatus::InvalidArgument;
    };
    if actions.is_null() {
        set_error("actions pointer is null");
        return RbStatus::InvalidArgument;
    }
    let a = std::slice::from_raw_parts(actions, 4);
    let pair = [Action::new(a[0], a[1]), Action::new(a[2], a[3])];
    match sim.state.step(pair, &sim.cfg) {
        Ok(deltas) => {
            if !out_deltas.is_null() {
                let out = std::slice::from_raw_parts_mut(out_deltas, 2);
                out[0] = deltas[0].into();
                out[1] = deltas[1].into();
            }
            RbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Build the 27-value observation for a robot (0 = red, 1 = blue), push
/// it onto that robot's stack, and copy it to `out`.
///
/// # Safety
/// `sim` must be a live handle and `out` must point to 27 writable
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn rb_sim_observe(sim: *mut RbSim, robot: u32, out: *mut f64) -> RbStatus {
    let Some(sim) = sim.as_mut() else {
        set_error("sim handle is null");
        return RbStatus::InvalidArgument;
    };
    if robot > 1 {
        set_error("robot index must be 0 or 1");
        return RbStatus::InvalidArgument;
    }
    if out.is_null() {
        set_error("out pointer is null");
        return RbStatus::InvalidArgument;
    }
    let obs = build_observation(&sim.state, robot as usize, &sim.cfg, &mut sim.rng);
    sim.stacks[robot as usize].push(&obs);
    std::slice::from_raw_parts_mut(out, OBS_LEN).copy_from_slice(obs.as_slice());
    RbStatus::Ok
}

/// Number of doubles in a flattened observation stack.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn rb_sim_stacked_len(sim: *const RbSim) -> usize {
    sim.as_ref().map_or(0, |s| s.cfg.stack_depth as usize * OBS_LEN)
}

/// Copy the flattened observation stack for a robot, oldest frame first.
/// The stack reflects the observations taken through `rb_sim_observe`.
///
/// # Safety
/// `sim` must be a live handle and `out` must point to
/// `rb_sim_stacked_len(sim)` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rb_sim_observe_stacked(
    sim: *const RbSim,
    robot: u32,
    out: *mut f64,
) -> RbStatus {
    let Some(sim) = sim.as_ref() else {
        set_error("sim handle is null");
        return RbStatus::InvalidArgument;
    };
    if robot > 1 || out.is_null() {
        set_error("bad robot index or null out pointer");
        return RbStatus::InvalidArgument;
    }
    let flat = sim.stacks[robot as usize].flattened();
    std::slice::from_raw_parts_mut(out, flat.len()).copy_from_slice(&flat);
    RbStatus::Ok
}

/// Seconds of game time elapsed, or a negative value for a null handle.
///
/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rb_sim_clock(sim: *const RbSim) -> f64 {
    sim.as_ref().map_or(-1.0, |s| s.state.clock)
}

/// Steps taken so far.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn rb_sim_step_index(sim: *const RbSim) -> u64 {
    sim.as_ref().map_or(0, |s| s.state.step_index as u64)
}

/// 1 when the episode is over, 0 while running, -1 for a null handle.
///
/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rb_sim_is_terminal(sim: *const RbSim) -> i32 {
    match sim.as_ref() {
        None => -1,
        Some(s) => s.state.is_terminal(&s.cfg) as i32,
    }
}

/// Terminal scoring: goals on each half plus position penalties. Only
/// valid once `rb_sim_is_terminal` reports 1.
///
/// # Safety
/// `sim` must be a live handle; `out_deltas` must point to two writable
/// [`RbRewardDelta`].
#[no_mangle]
pub unsafe extern "C" fn rb_sim_finalize(
    sim: *const RbSim,
    out_deltas: *mut RbRewardDelta,
) -> RbStatus {
    let Some(sim) = sim.as_ref() else {
        set_error("sim handle is null");
        return RbStatus::InvalidArgument;
    };
    if out_deltas.is_null() {
        set_error("out pointer is null");
        return RbStatus::InvalidArgument;
    }
    match sim.state.finalize_episode(&sim.cfg) {
        Ok(deltas) => {
            let out = std::slice::from_raw_parts_mut(out_deltas, 2);
            out[0] = deltas[0].into();
            out[1] = deltas[1].into();
            RbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Pose-and-clock packet from the brain side of the link.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbBrainPacket {
    pub x: f64,
    pub z: f64,
    pub heading: f64,
    pub game_time: f64,
    pub iter: u64,
}

/// Velocity command packet from the coprocessor side of the link.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbJetsonPacket {
    pub velocity: f64,
    pub rotation: f64,
    pub iter: u64,
}

unsafe fn write_line(line: &str, buf: *mut c_char, buf_len: usize) -> RbStatus {
    let c = CString::new(line.trim_end_matches('\n')).expect("no interior NUL");
    let bytes = c.as_bytes_with_nul();
    if buf.is_null() || buf_len < bytes.len() + 1 {
        set_error(format!("need {} bytes for the encoded line", bytes.len() + 1));
        return RbStatus::BufferTooSmall;
    }
    // Keep the trailing newline the wire format requires.
    let with_newline = line.as_bytes();
    ptr::copy_nonoverlapping(with_newline.as_ptr(), buf.cast(), with_newline.len());
    *buf.add(with_newline.len()) = 0;
    RbStatus::Ok
}

/// Encode a brain packet as its wire line (newline included,
/// NUL-terminated).
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rb_encode_brain(
    pkt: RbBrainPacket,
    buf: *mut c_char,
    buf_len: usize,
) -> RbStatus {
    match link::BrainPacket::new(pkt.x, pkt.z, pkt.heading, pkt.game_time, pkt.iter) {
        Ok(p) => write_line(&link::encode_brain(&p), buf, buf_len),
        Err(e) => fail(e),
    }
}

/// Decode a brain wire line.
///
/// # Safety
/// `line` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_decode_brain(line: *const c_char, out: *mut RbBrainPacket) -> RbStatus {
    let (Some(text), Some(out)) = (cstr_arg(line), out.as_mut()) else {
        set_error("null line or out pointer");
        return RbStatus::InvalidArgument;
    };
    match link::decode_brain(text) {
        Ok(p) => {
            *out = RbBrainPacket { x: p.x, z: p.z, heading: p.heading, game_time: p.game_time, iter: p.iter };
            RbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Encode a jetson packet as its wire line (newline included,
/// NUL-terminated).
///
/// # Safety
/// `buf` must point to `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn rb_encode_jetson(
    pkt: RbJetsonPacket,
    buf: *mut c_char,
    buf_len: usize,
) -> RbStatus {
    match link::JetsonPacket::new(pkt.velocity, pkt.rotation, pkt.iter) {
        Ok(p) => write_line(&link::encode_jetson(&p), buf, buf_len),
        Err(e) => fail(e),
    }
}

/// Decode a jetson wire line.
///
/// # Safety
/// `line` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_decode_jetson(
    line: *const c_char,
    out: *mut RbJetsonPacket,
) -> RbStatus {
    let (Some(text), Some(out)) = (cstr_arg(line), out.as_mut()) else {
        set_error("null line or out pointer");
        return RbStatus::InvalidArgument;
    };
    match link::decode_jetson(text) {
        Ok(p) => {
            *out = RbJetsonPacket { velocity: p.velocity, rotation: p.rotation, iter: p.iter };
            RbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Back-project a pixel detection to the robot-frame floor position
/// using a calibration JSON (fx, fy, cx, cy, tilt_rad, height_m,
/// forward_offset_m).
///
/// # Safety
/// `calibration_json` must be a valid NUL-terminated string; `out_x`
/// and `out_z` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_localize_pixel(
    u: f64,
    v: f64,
    depth: f64,
    calibration_json: *const c_char,
    out_x: *mut f64,
    out_z: *mut f64,
) -> RbStatus {
    let Some(text) = cstr_arg(calibration_json) else {
        set_error("calibration JSON is null or not UTF-8");
        return RbStatus::InvalidArgument;
    };
    if out_x.is_null() || out_z.is_null() {
        set_error("null out pointer");
        return RbStatus::InvalidArgument;
    }
    let run = || -> Result<(f64, f64), Error> {
        let cal: Calibration = serde_json::from_str(text)?;
        let inv = invert_intrinsics(&cal.intrinsics()?)?;
        let det = PixelDetection::new(u, v, depth)?;
        let p = drop_up_axis(camera_to_robot(pixel_to_camera(&det, &inv), &cal.mount()?));
        Ok((p.x, p.z))
    };
    match run() {
        Ok((x, z)) => {
            *out_x = x;
            *out_z = z;
            RbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// One accepted ring detection from the vision pipeline.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RbDetection {
    pub u: f64,
    pub v: f64,
    /// Meters; 0 when no depth map was supplied.
    pub depth: f64,
    pub score: f64,
}

/// Run the preprocessing pipeline plus the default detector on a
/// row-major 8-bit RGB image. `depth_m` may be null; `config_json` may
/// be null for the field-tested defaults. Writes up to `cap` detections
/// and stores the accepted count in `out_count` (which may exceed `cap`).
///
/// # Safety
/// `rgb` must hold `width * height * 3` bytes; `depth_m`, when not null,
/// must hold `width * height` floats; `out` must hold `cap` writable
/// entries; `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rb_detect_rings(
    rgb: *const u8,
    width: u32,
    height: u32,
    depth_m: *const f32,
    config_json: *const c_char,
    out: *mut RbDetection,
    cap: usize,
    out_count: *mut usize,
) -> RbStatus {
    if rgb.is_null() || out_count.is_null() || (cap > 0 && out.is_null()) {
        set_error("null image or output pointer");
        return RbStatus::InvalidArgument;
    }
    let cfg = match config_json {
        p if p.is_null() => PipelineConfig::default(),
        p => match cstr_arg(p).map(serde_json::from_str::<PipelineConfig>) {
            Some(Ok(cfg)) => cfg,
            _ => {
                set_error("pipeline config JSON failed to parse");
                return RbStatus::ParseError;
            }
        },
    };
    let pixels = (width as usize) * (height as usize);
    let img = match ColorImage::from_raw(
        width,
        height,
        std::slice::from_raw_parts(rgb, pixels * 3).to_vec(),
    ) {
        Ok(img) => img,
        Err(e) => return fail(e),
    };
    let depth = if depth_m.is_null() {
        None
    } else {
        let mut map = DepthMap::new(width, height);
        let vals = std::slice::from_raw_parts(depth_m, pixels);
        for y in 0..height {
            for x in 0..width {
                map.set(x, y, vals[(y * width + x) as usize]);
            }
        }
        Some(map)
    };
    let detector = HeuristicDetector::from_config(&cfg);
    match detect_rings(&img, depth.as_ref(), &cfg, &detector) {
        Ok(report) => {
            *out_count = report.accepted.len();
            let out_slice = std::slice::from_raw_parts_mut(out, cap);
            for (slot, acc) in out_slice.iter_mut().zip(report.accepted.iter()) {
                *slot = RbDetection {
                    u: acc.candidate.centroid_u,
                    v: acc.candidate.centroid_v,
                    depth: acc.detection.map_or(0.0, |d| d.depth),
                    score: acc.score,
                };
            }
            RbStatus::Ok
        }
        Err(e) => fail(e),
    }
}
