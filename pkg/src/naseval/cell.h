#ifndef NASEVAL_CELL_H
#define NASEVAL_CELL_H

#include <stdint.h>

/* Sizes of the scratch buffers cell_loss_grad expects, in doubles. */
int64_t cell_work_size(int64_t B, int64_t T, int64_t n, int64_t V, int64_t D, int64_t H, int64_t n_edges);

/* Mean next-token cross-entropy of the discrete recurrent cell.
 *
 * tok is B x (T+1), row-major.  Weights are row-major: E (V x D), Wx (H x D),
 * Wh (H x H), We (n_edges x H x H), Wo (V x H), bo (V).  When want_grad is
 * non-zero the g* buffers are overwritten with the gradient of the loss.
 * work must hold cell_work_size(...) doubles.
 */
double cell_loss_grad(const int64_t *tok, int64_t B, int64_t T,
                      const int64_t *preds, const int64_t *ops, const int64_t *eidx, int64_t n,
                      const double *E, const double *Wx, const double *Wh, const double *We,
                      const double *Wo, const double *bo,
                      int64_t V, int64_t D, int64_t H, int64_t n_edges,
                      double *gE, double *gWx, double *gWh, double *gWe, double *gWo, double *gbo,
                      double *work, int want_grad);

#endif
