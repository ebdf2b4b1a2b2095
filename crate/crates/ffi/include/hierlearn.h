#ifndef HIERLEARN_H
#define HIERLEARN_H

#include <stddef.h>
#include <stdint.h>

typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_SHAPE = 3,
  HL_STATUS_NUMERIC = 4,
  HL_STATUS_IO = 5,
  HL_STATUS_FORMAT = 6,
  HL_STATUS_PANIC = 7,
} HlStatus;

// Leaf classes in tree order.
typedef enum HlLeaf {
  HL_LEAF_NORMAL = 0,
  HL_LEAF_BENIGN = 1,
  HL_LEAF_IN_SITU = 2,
  HL_LEAF_INVASIVE = 3,
} HlLeaf;

// A single binary network.
typedef struct HlNetwork HlNetwork;

// A three-node tree plus the preprocessing recorded in its manifest.
typedef struct HlTree HlTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call into the library from the same thread.
const char *hl_last_error(void);

// Library version as a static NUL-terminated string.
const char *hl_version(void);

// Loads a network file written by the training tools.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum HlStatus hl_network_load(const char *path, struct HlNetwork **out);

// # Safety
// `net` must come from [`hl_network_load`] or be NULL.
size_t hl_network_input_dim(const struct HlNetwork *net);

// Class probabilities for one input row, written to `out[0..2]`.
//
// # Safety
// `x` must point to `len` doubles and `out` to room for 2.
enum HlStatus hl_network_predict(const struct HlNetwork *net,
                                 const double *x,
                                 size_t len,
                                 double *out);

// # Safety
// `net` must come from [`hl_network_load`] and not be freed twice.
void hl_network_free(struct HlNetwork *net);

// Loads a tree manifest; network paths resolve against its directory.
//
// # Safety
// `manifest` must be a NUL-terminated string and `out` a writable pointer.
enum HlStatus hl_tree_load(const char *manifest, struct HlTree **out);

// Width of the preprocessed input the tree expects.
//
// # Safety
// `tree` must come from [`hl_tree_load`] or be NULL.
size_t hl_tree_input_dim(const struct HlTree *tree);

// Hard routing of one preprocessed input.
//
// # Safety
// `x` must point to `len` doubles and `out` be writable.
enum HlStatus hl_tree_predict_hard(const struct HlTree *tree,
                                   const double *x,
                                   size_t len,
                                   enum HlLeaf *out);

// Chain-rule leaf distribution of one preprocessed input, written to `out[0..4]`.
//
// # Safety
// `x` must point to `len` doubles and `out` to room for 4.
enum HlStatus hl_tree_predict_soft(const struct HlTree *tree,
                                   const double *x,
                                   size_t len,
                                   double *out);

// Applies the manifest's preprocessing to a raw `height × width × channels`
// image (row-major, channels last) and routes it.
//
// # Safety
// `pixels` must point to `height*width*channels` doubles and `out` be writable.
enum HlStatus hl_tree_classify_image(const struct HlTree *tree,
                                     const double *pixels,
                                     size_t height,
                                     size_t width,
                                     size_t channels,
                                     enum HlLeaf *out);

// # Safety
// `tree` must come from [`hl_tree_load`] and not be freed twice.
void hl_tree_free(struct HlTree *tree);

// Chain rule on raw node outputs: `root`, `norbe` and `invis` each point to
// two probabilities; the four leaf probabilities go to `out`.
//
// # Safety
// Inputs must point to 2 doubles each and `out` to room for 4.
enum HlStatus hl_chain(const double *root, const double *norbe, const double *invis, double *out);

// SGDR rate after `iter` updates, starting from a cycle start.
//
// # Safety
// `out` must be writable.
enum HlStatus hl_sgdr_lr(double eta_max,
                         double eta_min,
                         size_t cycle_len,
                         double cycle_mult,
                         size_t iter,
                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIERLEARN_H */
