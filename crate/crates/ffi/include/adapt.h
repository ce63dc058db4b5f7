#ifndef ADAPT_H
#define ADAPT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdaptStatus {
  ADAPT_STATUS_OK = 0,
  ADAPT_STATUS_NULL_POINTER = 1,
  ADAPT_STATUS_INVALID_UTF8 = 2,
  ADAPT_STATUS_INVALID_ARGUMENT = 3,
  ADAPT_STATUS_PARSE_ERROR = 4,
  ADAPT_STATUS_WORLD_ERROR = 5,
  ADAPT_STATUS_PANIC = 6,
} AdaptStatus;

/**
 * Choice made by [`adapt_select_datapoint`].
 */
typedef enum AdaptChoice {
  ADAPT_CHOICE_SKIP = 0,
  ADAPT_CHOICE_TEACHER = 1,
  ADAPT_CHOICE_QUESTION = 2,
} AdaptChoice;

/**
 * Opaque object catalog.
 */
typedef struct AdaptCatalog AdaptCatalog;

/**
 * Opaque scene plus the set of entities the agent has discovered.
 */
typedef struct AdaptScene AdaptScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a successful call. The
 * pointer stays valid until the next call on the same thread.
 */
const char *adapt_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void adapt_string_free(char *s);

/**
 * Loads the built-in catalog.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AdaptStatus adapt_catalog_default(struct AdaptCatalog **out);

/**
 * Parses a catalog from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdaptStatus adapt_catalog_from_json(const char *json, struct AdaptCatalog **out);

/**
 * # Safety
 * `catalog` must come from this library and not have been freed. Null is ignored.
 */
void adapt_catalog_free(struct AdaptCatalog *catalog);

/**
 * Generates a scene with inclusion probability `p` in [0, 1].
 *
 * # Safety
 * `catalog` must be a live handle and `out` a valid pointer.
 */
enum AdaptStatus adapt_scene_generate(const struct AdaptCatalog *catalog,
                                      uint64_t seed,
                                      double p,
                                      struct AdaptScene **out);

/**
 * Loads a scene from the JSON produced by [`adapt_scene_to_json`].
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdaptStatus adapt_scene_from_json(const char *json, struct AdaptScene **out);

/**
 * # Safety
 * `scene` must come from this library and not have been freed. Null is ignored.
 */
void adapt_scene_free(struct AdaptScene *scene);

/**
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum AdaptStatus adapt_scene_to_json(const struct AdaptScene *scene, char **out);

/**
 * Hex SHA-256 digest of the scene state.
 *
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum AdaptStatus adapt_scene_digest(const struct AdaptScene *scene, char **out);

/**
 * # Safety
 * `scene` must be a live handle and `out` a valid pointer.
 */
enum AdaptStatus adapt_scene_movable_count(const struct AdaptScene *scene, size_t *out);

/**
 * Executes one action. Failed actions yield a failure observation and leave the scene
 * unchanged; text that does not parse returns `ParseError`.
 *
 * # Safety
 * `scene` must be a live handle, `action` a NUL-terminated string and the out pointers
 * valid. `out_terminal` may be null.
 */
enum AdaptStatus adapt_scene_step(struct AdaptScene *scene,
                                  const char *action,
                                  char **out_observation,
                                  bool *out_terminal);

/**
 * Whether `action` is derivable from the valid-action grammar at the scene's current state.
 *
 * # Safety
 * Handles must be live, `action` a NUL-terminated string and `out` a valid pointer.
 */
enum AdaptStatus adapt_scene_is_valid_action(const struct AdaptScene *scene,
                                             const struct AdaptCatalog *catalog,
                                             const char *action,
                                             bool include_ask,
                                             bool *out);

/**
 * Parses action text and returns its canonical form as JSON.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out_json` a valid pointer.
 */
enum AdaptStatus adapt_parse_action(const char *text, char **out_json);

/**
 * Preference-data selection for one step. Pass NaN for `p_teacher_given_q` when there is no
 * candidate question.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AdaptStatus adapt_select_datapoint(double p_teacher,
                                        double p_student,
                                        double p_teacher_given_q,
                                        double epsilon1,
                                        double epsilon2,
                                        enum AdaptChoice *out);

/**
 * Satisfied over satisfied plus violated, 0 when both are 0.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AdaptStatus adapt_preference_rate(size_t satisfied, size_t violated, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADAPT_H */
