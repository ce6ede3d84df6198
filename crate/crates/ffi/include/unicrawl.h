#ifndef UNICRAWL_H
#define UNICRAWL_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UnicrawlStatus {
  UNICRAWL_STATUS_OK = 0,
  UNICRAWL_STATUS_NULL_POINTER = 1,
  UNICRAWL_STATUS_INVALID_UTF8 = 2,
  UNICRAWL_STATUS_INVALID_ARGUMENT = 3,
  UNICRAWL_STATUS_PARSE_ERROR = 4,
  UNICRAWL_STATUS_NOT_FOUND = 5,
  UNICRAWL_STATUS_NO_TEXT = 6,
  UNICRAWL_STATUS_PANIC = 7,
} UnicrawlStatus;

/**
 * Documents collected for one deduplication pass.
 */
typedef struct UnicrawlDedup UnicrawlDedup;

/**
 * A parsed WARC record.
 */
typedef struct UnicrawlWarcRecord UnicrawlWarcRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *unicrawl_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void unicrawl_string_free(char *s);

/**
 * Tests a comma-separated `content_languages` value against `target`.
 * `lenient` non-zero accepts any list whose first language is the target.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum UnicrawlStatus unicrawl_language_matches(const char *languages,
                                              const char *target,
                                              int32_t lenient,
                                              bool *out);

/**
 * Writes the HTTP `Range` header value for an index record.
 *
 * # Safety
 * `out` must be writable; free the result with `unicrawl_string_free`.
 */
enum UnicrawlStatus unicrawl_range_header(uint64_t offset, uint64_t length, char **out);

/**
 * Percentage of input bytes a stage removed.
 *
 * # Safety
 * `out` must be writable.
 */
enum UnicrawlStatus unicrawl_reduction_pct(uint64_t bytes_in, uint64_t bytes_out, double *out);

/**
 * New deduplicator. Returns null when `min_dup_len` is below 2.
 */
struct UnicrawlDedup *unicrawl_dedup_new(size_t min_dup_len, size_t min_doc_chars);

/**
 * Queues a document. Documents are kept first-come, so earlier calls win.
 *
 * # Safety
 * `handle` must come from `unicrawl_dedup_new`; strings NUL-terminated.
 */
enum UnicrawlStatus unicrawl_dedup_add(struct UnicrawlDedup *handle,
                                       const char *url,
                                       const char *text);

/**
 * Deduplicates the queued documents, replacing any previous result.
 *
 * # Safety
 * `handle` must come from `unicrawl_dedup_new`.
 */
enum UnicrawlStatus unicrawl_dedup_run(struct UnicrawlDedup *handle);

/**
 * Number of documents kept by the last run.
 *
 * # Safety
 * `handle` must be null or come from `unicrawl_dedup_new`.
 */
size_t unicrawl_dedup_count(const struct UnicrawlDedup *handle);

/**
 * Text and URL of kept document `index`. Either output may be null.
 *
 * # Safety
 * `handle` must come from `unicrawl_dedup_new`; free outputs with
 * `unicrawl_string_free`.
 */
enum UnicrawlStatus unicrawl_dedup_document(const struct UnicrawlDedup *handle,
                                            size_t index,
                                            char **url,
                                            char **text);

/**
 * Byte totals of the last run.
 *
 * # Safety
 * `handle` must come from `unicrawl_dedup_new`; outputs writable.
 */
enum UnicrawlStatus unicrawl_dedup_bytes(const struct UnicrawlDedup *handle,
                                         uint64_t *bytes_in,
                                         uint64_t *bytes_out);

/**
 * # Safety
 * `handle` must be null or come from `unicrawl_dedup_new`, once.
 */
void unicrawl_dedup_free(struct UnicrawlDedup *handle);

/**
 * Parses one WARC record, gzip-compressed or not.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum UnicrawlStatus unicrawl_warc_parse(const uint8_t *data,
                                        size_t len,
                                        struct UnicrawlWarcRecord **out);

/**
 * Value of a WARC header, matched case-insensitively.
 *
 * # Safety
 * `rec` from `unicrawl_warc_parse`; `name` NUL-terminated; `out` writable.
 */
enum UnicrawlStatus unicrawl_warc_header(const struct UnicrawlWarcRecord *rec,
                                         const char *name,
                                         char **out);

/**
 * Borrowed view of the record block. Valid until the record is freed.
 *
 * # Safety
 * `rec` from `unicrawl_warc_parse`; outputs writable.
 */
enum UnicrawlStatus unicrawl_warc_payload(const struct UnicrawlWarcRecord *rec,
                                          const uint8_t **data,
                                          size_t *len);

/**
 * Main text of an HTML response record, using default extraction
 * settings. Returns `NoText` for records that yield no document.
 *
 * # Safety
 * `rec` from `unicrawl_warc_parse`; `out` writable.
 */
enum UnicrawlStatus unicrawl_warc_extract_text(const struct UnicrawlWarcRecord *rec, char **out);

/**
 * # Safety
 * `rec` must be null or come from `unicrawl_warc_parse`, once.
 */
void unicrawl_warc_free(struct UnicrawlWarcRecord *rec);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UNICRAWL_H */
