# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and semantics as ``_pykernels``.

The recurrent-cell kernel lives in ``cell.c`` (restrict-qualified loops the C
compiler can vectorize); this module wraps it and the pair counter.
"""

import numpy as np
from libc.stdint cimport int64_t


cdef extern from "cell.h":
    int64_t cell_work_size(int64_t B, int64_t T, int64_t n, int64_t V, int64_t D, int64_t H, int64_t n_edges)
    double c_cell_loss_grad "cell_loss_grad" (
        const int64_t *tok, int64_t B, int64_t T,
        const int64_t *preds, const int64_t *ops, const int64_t *eidx, int64_t n,
        const double *E, const double *Wx, const double *Wh, const double *We,
        const double *Wo, const double *bo,
        int64_t V, int64_t D, int64_t H, int64_t n_edges,
        double *gE, double *gWx, double *gWh, double *gWe, double *gWo, double *gbo,
        double *work, int want_grad) nogil


def count_pairs(x, y):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t m = xv.shape[0], i, j
    cdef long long conc = 0, disc = 0, tx = 0, ty = 0, txy = 0
    cdef double dx, dy
    for i in range(m):
        for j in range(i + 1, m):
            dx = xv[i] - xv[j]
            dy = yv[i] - yv[j]
            if dx == 0:
                tx += 1
                if dy == 0:
                    ty += 1
                    txy += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    return int(conc), int(disc), int(tx), int(ty), int(txy)


def cell_loss_grad(tokens, preds, ops, eidx, embed, w_x, w_h, edges, w_out, b_out, grads=None):
    cdef const int64_t[:, ::1] tok = np.ascontiguousarray(tokens, dtype=np.int64)
    cdef const int64_t[::1] pr = np.ascontiguousarray(preds, dtype=np.int64)
    cdef const int64_t[::1] op = np.ascontiguousarray(ops, dtype=np.int64)
    cdef const int64_t[::1] ei = np.ascontiguousarray(eidx, dtype=np.int64)
    cdef const double[:, ::1] E = embed
    cdef const double[:, ::1] Wx = w_x
    cdef const double[:, ::1] Wh = w_h
    cdef const double[:, :, ::1] We = edges
    cdef const double[:, ::1] Wo = w_out
    cdef const double[::1] bo = b_out
    cdef int64_t B = tok.shape[0], T = tok.shape[1] - 1, n = pr.shape[0]
    cdef int64_t V = Wo.shape[0], D = Wx.shape[1], H = Wh.shape[0], ne = We.shape[0]
    if T < 1 or n < 1:
        raise ValueError("need at least one prediction step and one node")
    if E.shape[0] != V or E.shape[1] != D or Wx.shape[0] != H or Wh.shape[1] != H:
        raise ValueError("parameter shapes are inconsistent")
    if We.shape[1] != H or We.shape[2] != H or Wo.shape[1] != H or bo.shape[0] != V:
        raise ValueError("parameter shapes are inconsistent")
    cdef double[::1] work = np.empty(cell_work_size(B, T, n, V, D, H, ne))
    cdef double[:, ::1] gE
    cdef double[:, ::1] gWx
    cdef double[:, ::1] gWh
    cdef double[:, :, ::1] gWe
    cdef double[:, ::1] gWo
    cdef double[::1] gbo
    cdef double loss
    if grads is None:
        with nogil:
            loss = c_cell_loss_grad(&tok[0, 0], B, T, &pr[0], &op[0], &ei[0], n,
                                    &E[0, 0], &Wx[0, 0], &Wh[0, 0], &We[0, 0, 0], &Wo[0, 0], &bo[0],
                                    V, D, H, ne, NULL, NULL, NULL, NULL, NULL, NULL, &work[0], 0)
        return loss
    gE, gWx, gWh, gWe, gWo, gbo = grads
    with nogil:
        loss = c_cell_loss_grad(&tok[0, 0], B, T, &pr[0], &op[0], &ei[0], n,
                                &E[0, 0], &Wx[0, 0], &Wh[0, 0], &We[0, 0, 0], &Wo[0, 0], &bo[0],
                                V, D, H, ne, &gE[0, 0], &gWx[0, 0], &gWh[0, 0], &gWe[0, 0, 0],
                                &gWo[0, 0], &gbo[0], &work[0], 1)
    return loss
