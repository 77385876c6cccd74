#ifndef MAILTOD_H
#define MAILTOD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MtdStatus {
  MTD_OK = 0,
  MTD_NULL_ARGUMENT = 1,
  MTD_INVALID_UTF8 = 2,
  MTD_PARSE_ERROR = 3,
  MTD_SCHEMA_ERROR = 4,
  MTD_UNRESOLVED_SLOT = 5,
  MTD_IO_ERROR = 6,
  MTD_MISMATCHED_IDS = 7,
  MTD_MISMATCHED_TURN_COUNTS = 8,
  MTD_INVALID_ARGUMENT = 9,
  MTD_PANIC = 99,
} MtdStatus;

typedef enum MtdSmMode {
  MTD_SM_PROSE = 0,
  MTD_SM_APPENDIX = 1,
} MtdSmMode;

/**
 * Opaque list of annotation items.
 */
typedef struct MtdItems MtdItems;

/**
 * Opaque slot ontology.
 */
typedef struct MtdOntology MtdOntology;

/**
 * Per-turn scores, each 0 or 1.
 */
typedef struct MtdTurnScores {
  uint8_t em;
  uint8_t sm;
  uint8_t pr;
} MtdTurnScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or NULL if there was none.
 * The caller frees it with [`mtd_string_free`].
 */
char *mtd_last_error(void);

/**
 * Library version, static; do not free.
 */
const char *mtd_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, freed at most once.
 */
void mtd_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum MtdStatus mtd_ontology_default(struct MtdOntology **out);

/**
 * Parses an ontology JSON document (`{"domains": {...}, "act_slots": [...]}`).
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MtdStatus mtd_ontology_from_json(const char *json, struct MtdOntology **out);

/**
 * # Safety
 * `ont` must be NULL or a handle from this library, freed at most once.
 */
void mtd_ontology_free(struct MtdOntology *ont);

/**
 * Resolves `slot` or `domain.slot` to its canonical `domain.slot`.
 *
 * # Safety
 * Pointers must be valid; `slot` NUL-terminated.
 */
enum MtdStatus mtd_ontology_resolve(const struct MtdOntology *ont, const char *slot, char **out);

/**
 * Parses an annotation suffix (the text after `//`).
 *
 * # Safety
 * `text` must be NUL-terminated and `out` a valid pointer.
 */
enum MtdStatus mtd_items_parse(const char *text, struct MtdItems **out);

/**
 * # Safety
 * `items` must be NULL or a handle from this library, freed at most once.
 */
void mtd_items_free(struct MtdItems *items);

/**
 * Number of items; 0 for NULL.
 *
 * # Safety
 * `items` must be NULL or a valid handle.
 */
size_t mtd_items_len(const struct MtdItems *items);

/**
 * Canonical text form of the items.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MtdStatus mtd_items_serialize(const struct MtdItems *items, char **out);

/**
 * Items as a JSON array of `{"act_type","slot","value"?}`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MtdStatus mtd_items_to_json(const struct MtdItems *items, char **out);

/**
 * Checks items against the ontology. Writes the number of violations to
 * `count` and, if `details` is not NULL, a JSON array describing them.
 *
 * # Safety
 * `items`, `ont` and `count` must be valid; `details` may be NULL.
 */
enum MtdStatus mtd_items_validate(const struct MtdItems *items,
                                  const struct MtdOntology *ont,
                                  size_t *count,
                                  char **details);

/**
 * Scores one predicted turn against its gold items.
 *
 * # Safety
 * All pointers must be valid.
 */
enum MtdStatus mtd_score_turn(const struct MtdItems *gold,
                              const struct MtdItems *pred,
                              const struct MtdOntology *ont,
                              enum MtdSmMode mode,
                              bool strict,
                              struct MtdTurnScores *out);

/**
 * Evaluates predictions against gold and writes the JSON report.
 * `gold_path` is a dialogue JSON file or bundle directory; `pred_path` may
 * also be reduced JSONL.
 *
 * # Safety
 * All pointers must be valid; paths NUL-terminated.
 */
enum MtdStatus mtd_evaluate_files(const char *gold_path,
                                  const char *pred_path,
                                  const struct MtdOntology *ont,
                                  enum MtdSmMode mode,
                                  bool strict,
                                  char **out);

/**
 * Splits an annotated line at the first `//`. `suffix` receives NULL when
 * the line has no marker.
 *
 * # Safety
 * `line` must be NUL-terminated; `text` and `suffix` valid pointers.
 */
enum MtdStatus mtd_extract_annotations(const char *line, char **text, char **suffix);

/**
 * Cuts a raw model completion down to the `User:`/`Bot:` lines.
 *
 * # Safety
 * `raw` must be NUL-terminated and `out` valid.
 */
enum MtdStatus mtd_postprocess_dialogue(const char *raw, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MAILTOD_H */
