/* C interface to the ringbot autonomy stack. */

#ifndef RINGBOT_H
#define RINGBOT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every fallible call.
 */
typedef enum RbStatus {
  RbStatus_Ok = 0,
  /**
   * A pointer was null or a value out of range.
   */
  RbStatus_InvalidArgument = 1,
  /**
   * JSON or packet text failed to parse.
   */
  RbStatus_ParseError = 2,
  /**
   * The operation is not valid in the current state.
   */
  RbStatus_InvalidState = 3,
  /**
   * The provided buffer is too small.
   */
  RbStatus_BufferTooSmall = 4,
  /**
   * Any other failure; see `rb_last_error_message`.
   */
  RbStatus_RuntimeError = 5,
} RbStatus;

/**
 * Opaque simulation handle: config, world state, observation stacks,
 * and the noise generator.
 */
typedef struct RbSim RbSim;

/**
 * Per-agent reward change, split by source.
 */
typedef struct RbRewardDelta {
  double ring;
  double pin;
  double goal;
  double position;
} RbRewardDelta;

/**
 * Pose-and-clock packet from the brain side of the link.
 */
typedef struct RbBrainPacket {
  double x;
  double z;
  double heading;
  double game_time;
  uint64_t iter;
} RbBrainPacket;

/**
 * Velocity command packet from the coprocessor side of the link.
 */
typedef struct RbJetsonPacket {
  double velocity;
  double rotation;
  uint64_t iter;
} RbJetsonPacket;

/**
 * One accepted ring detection from the vision pipeline.
 */
typedef struct RbDetection {
  double u;
  double v;
  /**
   * Meters; 0 when no depth map was supplied.
   */
  double depth;
  double score;
} RbDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the most recent error message for this thread into `buf` as a
 * NUL-terminated string. Returns the full message length (excluding the
 * terminator), which may exceed `buf_len`.
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes, or be null (in which
 * case only the length is returned).
 */
size_t rb_last_error_message(char *buf, size_t buf_len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rb_version(void);

/**
 * Create a simulation from a JSON config (all fields optional). Pass
 * null for the defaults. Returns null on error.
 *
 * # Safety
 * `config_json` must be null or a valid NUL-terminated string.
 */
struct RbSim *rb_sim_new(const char *config_json);

/**
 * Destroy a simulation handle. Null is ignored.
 *
 * # Safety
 * `sim` must be a pointer from `rb_sim_new` that has not been freed.
 */
void rb_sim_free(struct RbSim *sim);

/**
 * Advance the simulation one tick. `actions` points to four doubles:
 * red forward, red turn, blue forward, blue turn. `out_deltas`, when
 * not null, receives two reward deltas (red then blue).
 *
 * # Safety
 * `sim` must be a live handle, `actions` must point to four readable
 * doubles, and `out_deltas` must be null or point to two writable
 * [`RbRewardDelta`].
 */
enum RbStatus rb_sim_step(struct RbSim *sim,
                          const double *actions,
                          struct RbRewardDelta *out_deltas);

/**
 * Build the 27-value observation for a robot (0 = red, 1 = blue), push
 * it onto that robot's stack, and copy it to `out`.
 *
 * # Safety
 * `sim` must be a live handle and `out` must point to 27 writable
 * doubles.
 */
enum RbStatus rb_sim_observe(struct RbSim *sim, uint32_t robot, double *out);

/**
 * Number of doubles in a flattened observation stack.
 *
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
size_t rb_sim_stacked_len(const struct RbSim *sim);

/**
 * Copy the flattened observation stack for a robot, oldest frame first.
 * The stack reflects the observations taken through `rb_sim_observe`.
 *
 * # Safety
 * `sim` must be a live handle and `out` must point to
 * `rb_sim_stacked_len(sim)` writable doubles.
 */
enum RbStatus rb_sim_observe_stacked(const struct RbSim *sim, uint32_t robot, double *out);

/**
 * Seconds of game time elapsed, or a negative value for a null handle.
 *
 * # Safety
 * `sim` must be a live handle or null.
 */
double rb_sim_clock(const struct RbSim *sim);

/**
 * Steps taken so far.
 *
 * # Safety
 * `sim` must be a live handle or null (returns 0).
 */
uint64_t rb_sim_step_index(const struct RbSim *sim);

/**
 * 1 when the episode is over, 0 while running, -1 for a null handle.
 *
 * # Safety
 * `sim` must be a live handle or null.
 */
int32_t rb_sim_is_terminal(const struct RbSim *sim);

/**
 * Terminal scoring: goals on each half plus position penalties. Only
 * valid once `rb_sim_is_terminal` reports 1.
 *
 * # Safety
 * `sim` must be a live handle; `out_deltas` must point to two writable
 * [`RbRewardDelta`].
 */
enum RbStatus rb_sim_finalize(const struct RbSim *sim, struct RbRewardDelta *out_deltas);

/**
 * Encode a brain packet as its wire line (newline included,
 * NUL-terminated).
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes.
 */
enum RbStatus rb_encode_brain(struct RbBrainPacket pkt, char *buf, size_t buf_len);

/**
 * Decode a brain wire line.
 *
 * # Safety
 * `line` must be a valid NUL-terminated string; `out` must be writable.
 */
enum RbStatus rb_decode_brain(const char *line, struct RbBrainPacket *out);

/**
 * Encode a jetson packet as its wire line (newline included,
 * NUL-terminated).
 *
 * # Safety
 * `buf` must point to `buf_len` writable bytes.
 */
enum RbStatus rb_encode_jetson(struct RbJetsonPacket pkt, char *buf, size_t buf_len);

/**
 * Decode a jetson wire line.
 *
 * # Safety
 * `line` must be a valid NUL-terminated string; `out` must be writable.
 */
enum RbStatus rb_decode_jetson(const char *line, struct RbJetsonPacket *out);

/**
 * Back-project a pixel detection to the robot-frame floor position
 * using a calibration JSON (fx, fy, cx, cy, tilt_rad, height_m,
 * forward_offset_m).
 *
 * # Safety
 * `calibration_json` must be a valid NUL-terminated string; `out_x`
 * and `out_z` must be writable.
 */
enum RbStatus rb_localize_pixel(double u,
                                double v,
                                double depth,
                                const char *calibration_json,
                                double *out_x,
                                double *out_z);

/**
 * Run the preprocessing pipeline plus the default detector on a
 * row-major 8-bit RGB image. `depth_m` may be null; `config_json` may
 * be null for the field-tested defaults. Writes up to `cap` detections
 * and stores the accepted count in `out_count` (which may exceed `cap`).
 *
 * # Safety
 * `rgb` must hold `width * height * 3` bytes; `depth_m`, when not null,
 * must hold `width * height` floats; `out` must hold `cap` writable
 * entries; `out_count` must be writable.
 */
enum RbStatus rb_detect_rings(const uint8_t *rgb,
                              uint32_t width,
                              uint32_t height,
                              const float *depth_m,
                              const char *config_json,
                              struct RbDetection *out,
                              size_t cap,
                              size_t *out_count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RINGBOT_H */
