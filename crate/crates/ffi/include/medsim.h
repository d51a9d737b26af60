#ifndef MEDSIM_H
#define MEDSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MedsimShape {
  MEDSIM_SHAPE_SPHERE = 1,
  MEDSIM_SHAPE_BOX = 2,
  MEDSIM_SHAPE_CAPSULE = 3,
} MedsimShape;

typedef enum MedsimStatus {
  MEDSIM_STATUS_OK = 0,
  MEDSIM_STATUS_NULL_ARGUMENT = 1,
  MEDSIM_STATUS_INVALID_UTF8 = 2,
  MEDSIM_STATUS_SCHEMA = 3,
  MEDSIM_STATUS_CYCLE = 4,
  MEDSIM_STATUS_ORDERING = 5,
  MEDSIM_STATUS_DEPENDENCY = 6,
  MEDSIM_STATUS_CODEC = 7,
  MEDSIM_STATUS_RECORDER = 8,
  MEDSIM_STATUS_PHYSICS = 9,
  MEDSIM_STATUS_UNREACHABLE = 10,
  MEDSIM_STATUS_IO = 11,
  MEDSIM_STATUS_INVALID_ARGUMENT = 12,
  MEDSIM_STATUS_BUFFER_TOO_SMALL = 13,
  MEDSIM_STATUS_PANIC = 14,
} MedsimStatus;

typedef struct MedsimPhysicsWorld MedsimPhysicsWorld;

typedef struct MedsimRecorder MedsimRecorder;

typedef struct MedsimRecording MedsimRecording;

typedef struct MedsimScenegraph MedsimScenegraph;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *medsim_last_error(void);

/**
 * Library version as a static string.
 */
const char *medsim_version(void);

void medsim_string_free(char *s);

void medsim_bytes_free(uint8_t *data, size_t len);

/**
 * Motor (8 coefficients) of a pose given as position xyz and unit
 * quaternion wxyz.
 */
enum MedsimStatus medsim_motor_from_pose(const double *position,
                                         const double *rotation,
                                         double *out);

enum MedsimStatus medsim_motor_interpolate(const double *a, const double *b, double t, double *out);

/**
 * Encode an update packet into `buf`. `motors` holds 8 coefficients per
 * id. `written` receives the packet length, also when `buf` is too small.
 */
enum MedsimStatus medsim_encode_update(uint32_t session_id,
                                       uint32_t sender_id,
                                       uint32_t tick,
                                       const uint32_t *ids,
                                       const double *motors,
                                       size_t n,
                                       uint8_t *buf,
                                       size_t cap,
                                       size_t *written);

/**
 * Decode an update packet. Up to `cap` records are copied out; `n` receives
 * the record count in the packet.
 */
enum MedsimStatus medsim_decode_update(const uint8_t *data,
                                       size_t len,
                                       uint32_t *tick,
                                       uint32_t *ids,
                                       double *motors,
                                       size_t cap,
                                       size_t *n);

enum MedsimStatus medsim_scenegraph_from_json(const char *json, struct MedsimScenegraph **out);

void medsim_scenegraph_free(struct MedsimScenegraph *g);

/**
 * Apply one ActionEvent (JSON); `outcome_json` (optional) receives the outcome.
 */
enum MedsimStatus medsim_scenegraph_perform(struct MedsimScenegraph *g,
                                            const char *event_json,
                                            char **outcome_json);

enum MedsimStatus medsim_scenegraph_undo(struct MedsimScenegraph *g, const char *node_id);

/**
 * Active node ids as a JSON array.
 */
enum MedsimStatus medsim_scenegraph_frontier(struct MedsimScenegraph *g, char **out);

enum MedsimStatus medsim_scenegraph_is_finished(struct MedsimScenegraph *g, bool *finished);

/**
 * Session report JSON. `weighted` selects action-weighted totals.
 */
enum MedsimStatus medsim_scenegraph_report(struct MedsimScenegraph *g,
                                           const char *session_id,
                                           uint64_t started_us,
                                           uint64_t finished_us,
                                           bool weighted,
                                           char **out);

enum MedsimStatus medsim_recorder_new(const uint8_t *session_id,
                                      uint32_t tick_rate_hz,
                                      uint16_t user_count,
                                      struct MedsimRecorder **out);

/**
 * Record one frame. `events_json` (optional) is a JSON array of ActionEvents.
 * `written` (optional) tells whether anything was written.
 */
enum MedsimStatus medsim_recorder_frame(struct MedsimRecorder *r,
                                        uint64_t timestamp_us,
                                        const uint32_t *ids,
                                        const double *motors,
                                        size_t n,
                                        const char *events_json,
                                        bool *written);

/**
 * Finish the recording and hand out the file bytes. Always consumes `r`.
 */
enum MedsimStatus medsim_recorder_finish(struct MedsimRecorder *r, uint8_t **data, size_t *len);

void medsim_recorder_free(struct MedsimRecorder *r);

enum MedsimStatus medsim_recording_open(const uint8_t *data,
                                        size_t len,
                                        struct MedsimRecording **out);

void medsim_recording_free(struct MedsimRecording *r);

enum MedsimStatus medsim_recording_span(struct MedsimRecording *r,
                                        uint64_t *start_us,
                                        uint64_t *end_us,
                                        size_t *frames);

/**
 * Scene state at `t_us`, ids ascending. Same buffer contract as
 * [`medsim_decode_update`].
 */
enum MedsimStatus medsim_recording_state_at(struct MedsimRecording *r,
                                            uint64_t t_us,
                                            uint32_t *ids,
                                            double *motors,
                                            size_t cap,
                                            size_t *n);

enum MedsimStatus medsim_physics_world_new(double dt, bool ground, struct MedsimPhysicsWorld **out);

void medsim_physics_world_free(struct MedsimPhysicsWorld *w);

/**
 * Register a body. `dims`: sphere `[r, _, _]`, box half extents, capsule
 * `[r, half_length, _]`. Pose as position xyz and quaternion wxyz.
 */
enum MedsimStatus medsim_physics_register(struct MedsimPhysicsWorld *w,
                                          uint32_t id,
                                          enum MedsimShape shape,
                                          const double *dims,
                                          double mass,
                                          double friction,
                                          double restitution,
                                          bool kinematic,
                                          const double *position,
                                          const double *rotation);

enum MedsimStatus medsim_physics_step(struct MedsimPhysicsWorld *w, uint32_t steps);

enum MedsimStatus medsim_physics_position(struct MedsimPhysicsWorld *w, uint32_t id, double *out);

/**
 * Run a scripted session on ideal links and return the report JSON.
 */
enum MedsimStatus medsim_run_session(const char *scenario_json,
                                     uint32_t clients,
                                     uint64_t seed,
                                     char **report_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEDSIM_H */
