#ifndef ROTWALK_H
#define ROTWALK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum RwStatus {
  RW_STATUS_OK = 0,
  RW_STATUS_NULL_POINTER = 1,
  RW_STATUS_INVALID_PARAMETER = 2,
  RW_STATUS_DOMAIN = 3,
  RW_STATUS_REGIME = 4,
  RW_STATUS_RANGE = 5,
  RW_STATUS_DEGENERATE_COVARIANCE = 6,
  RW_STATUS_SCHEDULE_REJECTED = 7,
  RW_STATUS_UNDEFINED_SLOPE = 8,
  RW_STATUS_IO = 9,
  RW_STATUS_PANIC = 10,
} RwStatus;

/*
 Opaque dyadic grid of walk values.
 */
typedef struct RwGrid RwGrid;

/*
 Opaque increment law.
 */
typedef struct RwLaw RwLaw;

/*
 Opaque circled tree.
 */
typedef struct RwTree RwTree;

/*
 A complex number laid out as two doubles.
 */
typedef struct RwComplex {
  double re;
  double im;
} RwComplex;

/*
 Monte Carlo estimate with a 95% normal interval.
 */
typedef struct RwTailEstimate {
  double p_hat;
  double stderr;
  double ci_lo;
  double ci_hi;
  uint64_t replicas;
} RwTailEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failing call on this thread. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *rw_last_error_message(void);

/*
 Parses `gaussian:<rho2>`, `circle` or `radial-exp:<rate>`.
 */
enum RwStatus rw_law_parse(const char *spec, struct RwLaw **out);

void rw_law_free(struct RwLaw *law);

/*
 `sqrt(E Re(U)^2)`.
 */
enum RwStatus rw_law_sigma(const struct RwLaw *law, double *out);

/*
 Writes the first `n` increments of stream `(master_seed, replica)`.
 */
enum RwStatus rw_sample_increments(const struct RwLaw *law,
                                   uintptr_t n,
                                   uint64_t master_seed,
                                   uint64_t replica,
                                   struct RwComplex *out);

/*
 `S_n(theta)` for the `n` given increments.
 */
enum RwStatus rw_eval_point(const struct RwComplex *inc,
                            uintptr_t n,
                            double theta,
                            struct RwComplex *out);

/*
 `S_n(i / 2^depth)` for all `i`, by folding and one FFT.
 */
enum RwStatus rw_grid_eval(const struct RwComplex *inc,
                           uintptr_t n,
                           uint32_t depth,
                           struct RwGrid **out);

enum RwStatus rw_grid_len(const struct RwGrid *grid, uintptr_t *out);

enum RwStatus rw_grid_value(const struct RwGrid *grid, uintptr_t i, struct RwComplex *out);

void rw_grid_free(struct RwGrid *grid);

/*
 `phi(n) = sqrt(2 alpha n ln n)`.
 */
enum RwStatus rw_threshold(double alpha, uint64_t n, double *out);

/*
 `D_n(theta) = (1/n) sum_{j=1}^n e^{2 pi i j theta}`.
 */
enum RwStatus rw_dirichlet_kernel(uint64_t n, double theta, struct RwComplex *out);

/*
 Gaussian `P(|B_n| > phi(n)) = n^{-alpha}`.
 */
enum RwStatus rw_single_tail(uint64_t n, double alpha, double *out);

/*
 Gaussian joint tail at angles 0 and `theta`, with its error estimate.
 */
enum RwStatus rw_joint_tail(uint64_t n, double theta, double alpha, double *value, double *error);

enum RwStatus rw_joint_tail_envelope(uint64_t n,
                                     double theta,
                                     double alpha,
                                     double *lo,
                                     double *hi);

/*
 Monte Carlo `P(|S_n| > sigma phi(n))`.
 */
enum RwStatus rw_mc_tail(const struct RwLaw *law,
                         uintptr_t n,
                         double alpha,
                         uint64_t replicas,
                         uint64_t seed,
                         struct RwTailEstimate *out);

/*
 Indicator tree with levels `0..=depth`.
 */
enum RwStatus rw_tree_build(const struct RwLaw *law,
                            double q,
                            uint32_t depth,
                            double alpha,
                            uint64_t master_seed,
                            uint64_t replica,
                            struct RwTree **out);

enum RwStatus rw_tree_depth(const struct RwTree *tree, uint32_t *out);

enum RwStatus rw_tree_count_circled(const struct RwTree *tree, uint32_t level, uint64_t *out);

/*
 Sum of marks over the level-`n` descendants of vertex `(level, index)`.
 */
enum RwStatus rw_tree_subtree_sum(const struct RwTree *tree,
                                  uint32_t level,
                                  uintptr_t index,
                                  uint32_t n,
                                  double *out);

void rw_tree_free(struct RwTree *tree);

/*
 Library version as a static NUL-terminated string.
 */
const char *rw_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROTWALK_H */
