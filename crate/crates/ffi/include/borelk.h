#ifndef BORELK_H
#define BORELK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum BkStatus {
  BkStatus_Ok = 0,
  BkStatus_InvalidInput = 1,
  BkStatus_Hypothesis = 2,
  BkStatus_Parse = 3,
  BkStatus_Inadmissible = 4,
  BkStatus_Numerical = 5,
  BkStatus_Divergence = 6,
  BkStatus_Io = 7,
  BkStatus_NullPointer = 8,
  BkStatus_BufferTooSmall = 9,
  BkStatus_Panic = 10,
} BkStatus;

/**
 * A run configuration with its cached operators and solutions.
 */
typedef struct BkPipeline BkPipeline;

/**
 * A parsed problem.
 */
typedef struct BkProblem BkProblem;

/**
 * Outcome of one fixed-point solve.
 */
typedef struct BkSolveSummary {
  uint32_t iterations;
  bool converged;
  double max_ratio;
  double norm_f;
  double residual;
  /**
   * Radius of the ball from the smallness ledger, or a negative value when the ledger failed.
   */
  double varpi;
} BkSolveSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *bk_last_error(void);

/**
 * Loads a problem file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BkStatus bk_problem_load(const char *path, struct BkProblem **out);

/**
 * Parses a problem from TOML text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BkStatus bk_problem_parse(const char *text, struct BkProblem **out);

/**
 * Releases a problem; null is ignored.
 *
 * # Safety
 * `problem` must come from `bk_problem_load` or `bk_problem_parse` and not be used afterwards.
 */
void bk_problem_free(struct BkProblem *problem);

/**
 * The order `k` of a problem.
 *
 * # Safety
 * `problem` must be a live handle and `k` a valid pointer.
 */
enum BkStatus bk_problem_order(const struct BkProblem *problem, double *k);

/**
 * Checks the hypotheses on `n_m` equispaced frequencies in `[-m_max, m_max]`.
 * `passed` receives whether every check holds; the names of failed checks
 * are reported through `bk_last_error`.
 *
 * # Safety
 * `problem` must be a live handle and `passed` a valid pointer.
 */
enum BkStatus bk_problem_validate(const struct BkProblem *problem,
                                  double m_max,
                                  uint32_t n_m,
                                  bool *passed);

/**
 * Writes the `δ-1` coefficients `A_{δ,p}` into `out`. `len` receives the
 * count; `BufferTooSmall` is returned when `cap` is short.
 *
 * # Safety
 * `out` must hold `cap` doubles (it may be null when `cap` is 0) and `len` must be valid.
 */
enum BkStatus bk_tahara_coefficients(uint32_t delta,
                                     double k,
                                     double *out,
                                     size_t cap,
                                     size_t *len);

/**
 * Creates a pipeline from a run configuration file.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` a valid pointer.
 */
enum BkStatus bk_pipeline_new(const char *config, struct BkPipeline **out);

/**
 * Releases a pipeline; null is ignored.
 *
 * # Safety
 * `pipeline` must come from `bk_pipeline_new` and not be used afterwards.
 */
void bk_pipeline_free(struct BkPipeline *pipeline);

/**
 * Plans the covering and writes up to `cap` directions; `len` receives their number.
 *
 * # Safety
 * `pipeline` must be a live handle, `out` must hold `cap` doubles and `len` must be valid.
 */
enum BkStatus bk_pipeline_directions(struct BkPipeline *pipeline,
                                     double *out,
                                     size_t cap,
                                     size_t *len);

/**
 * Solves on the direction of sector `sector` at `ε = eps_re + i eps_im`.
 *
 * # Safety
 * `pipeline` must be a live handle and `summary` a valid pointer.
 */
enum BkStatus bk_pipeline_solve(struct BkPipeline *pipeline,
                                uint32_t sector,
                                double eps_re,
                                double eps_im,
                                struct BkSolveSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BORELK_H */
