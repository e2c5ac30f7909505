#include <math.h>
#include <string.h>

#include "cell.h"

/* Z (B x H) += X (B x K) . W (K x H); all row-major, no aliasing. */
static inline void mm_acc(int64_t B, int64_t K, int64_t H, const double *restrict X,
                          const double *restrict W, double *restrict Z)
{
    for (int64_t b = 0; b < B; ++b) {
        double *restrict z = Z + b * H;
        const double *restrict x = X + b * K;
        for (int64_t l = 0; l < K; ++l) {
            const double a = x[l];
            const double *restrict w = W + l * H;
            for (int64_t k = 0; k < H; ++k)
                z[k] += w[k] * a;
        }
    }
}

/* G (H x K) += D^T (H x B) . X (B x K) */
static inline void outer_acc(int64_t B, int64_t H, int64_t K, const double *restrict Dm,
                             const double *restrict X, double *restrict G)
{
    for (int64_t b = 0; b < B; ++b) {
        const double *restrict d = Dm + b * H;
        const double *restrict x = X + b * K;
        for (int64_t k = 0; k < H; ++k) {
            const double a = d[k];
            double *restrict g = G + k * K;
            for (int64_t l = 0; l < K; ++l)
                g[l] += a * x[l];
        }
    }
}

static void transpose(int64_t R, int64_t C, const double *restrict A, double *restrict AT)
{
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c)
            AT[c * R + r] = A[r * C + c];
}

static void activate(int64_t code, int64_t m, double *restrict x)
{
    switch (code) {
    case 0:
        break;
    case 1:
        for (int64_t i = 0; i < m; ++i)
            x[i] = 0.5 * (1.0 + tanh(0.5 * x[i]));
        break;
    case 2:
        for (int64_t i = 0; i < m; ++i)
            x[i] = tanh(x[i]);
        break;
    default:
        for (int64_t i = 0; i < m; ++i)
            x[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
}

/* dz = dc * act'(c), derivative written in terms of the activation output */
static void dactivate(int64_t code, int64_t m, const double *restrict dc, const double *restrict c,
                      double *restrict dz)
{
    switch (code) {
    case 0:
        for (int64_t i = 0; i < m; ++i)
            dz[i] = dc[i];
        break;
    case 1:
        for (int64_t i = 0; i < m; ++i)
            dz[i] = dc[i] * (c[i] * (1.0 - c[i]));
        break;
    case 2:
        for (int64_t i = 0; i < m; ++i)
            dz[i] = dc[i] * (1.0 - c[i] * c[i]);
        break;
    default:
        for (int64_t i = 0; i < m; ++i)
            dz[i] = c[i] > 0.0 ? dc[i] : 0.0;
    }
}

static void gather(int64_t B, int64_t D, const int64_t *tok, int64_t stride, const double *restrict E,
                   double *restrict X)
{
    for (int64_t b = 0; b < B; ++b)
        memcpy(X + b * D, E + tok[b * stride] * D, (size_t)D * sizeof(double));
}

int64_t cell_work_size(int64_t B, int64_t T, int64_t n, int64_t V, int64_t D, int64_t H, int64_t n_edges)
{
    return D * H + H * H + n_edges * H * H + H * V /* transposes */
           + T * (n + 1) * B * H                      /* node outputs */
           + (T + 1) * B * H                          /* cell states */
           + T * B * V                                /* logit gradients */
           + B * D                                    /* gathered inputs */
           + V                                        /* softmax scratch */
           + B * H * 3 + (n + 1) * B * H + B * D;     /* backward scratch */
}

double cell_loss_grad(const int64_t *tok, int64_t B, int64_t T,
                      const int64_t *preds, const int64_t *ops, const int64_t *eidx, int64_t n,
                      const double *E, const double *Wx, const double *Wh, const double *We,
                      const double *Wo, const double *bo,
                      int64_t V, int64_t D, int64_t H, int64_t n_edges,
                      double *gE, double *gWx, double *gWh, double *gWe, double *gWo, double *gbo,
                      double *work, int want_grad)
{
    const int64_t BH = B * H, T1 = T + 1;
    double *WxT = work;
    double *WhT = WxT + D * H;
    double *WeT = WhT + H * H;
    double *WoT = WeT + n_edges * H * H;
    double *cs = WoT + H * V;
    double *hs = cs + T * (n + 1) * BH;
    double *dlog = hs + T1 * BH;
    double *X = dlog + T * B * V;
    double *ex = X + B * D;
    double *dh = ex + V;
    double *dh_next = dh + BH;
    double *dz = dh_next + BH;
    double *dc = dz + BH;
    double *dX = dc + (n + 1) * BH;

    transpose(H, D, Wx, WxT);
    transpose(H, H, Wh, WhT);
    for (int64_t i = 0; i < n; ++i) {
        const int64_t e = eidx[i];
        transpose(H, H, We + e * H * H, WeT + e * H * H);
    }
    transpose(V, H, Wo, WoT);
    memset(hs, 0, (size_t)BH * sizeof(double));

    const double inv_n = 1.0 / (double)n;
    double total = 0.0;

    for (int64_t t = 0; t < T; ++t) {
        double *c_t = cs + t * (n + 1) * BH;
        const double *h_prev = hs + t * BH;
        double *h = hs + (t + 1) * BH;

        gather(B, D, tok + t, T1, E, X);
        memset(c_t, 0, (size_t)BH * sizeof(double));
        mm_acc(B, D, H, X, WxT, c_t);
        mm_acc(B, H, H, h_prev, WhT, c_t);
        activate(2, BH, c_t);
        for (int64_t i = 1; i <= n; ++i) {
            double *ci = c_t + i * BH;
            const int64_t e = eidx[i - 1];
            memset(ci, 0, (size_t)BH * sizeof(double));
            mm_acc(B, H, H, c_t + preds[i - 1] * BH, WeT + e * H * H, ci);
            activate(ops[i - 1], BH, ci);
        }
        memset(h, 0, (size_t)BH * sizeof(double));
        for (int64_t i = 1; i <= n; ++i) {
            const double *ci = c_t + i * BH;
            for (int64_t m = 0; m < BH; ++m)
                h[m] += ci[m];
        }
        for (int64_t m = 0; m < BH; ++m)
            h[m] *= inv_n;

        double *L = dlog + t * B * V;
        for (int64_t b = 0; b < B; ++b)
            memcpy(L + b * V, bo, (size_t)V * sizeof(double));
        mm_acc(B, H, V, h, WoT, L);
        for (int64_t b = 0; b < B; ++b) {
            double *lg = L + b * V;
            double mx = lg[0], s = 0.0;
            for (int64_t v = 1; v < V; ++v)
                if (lg[v] > mx)
                    mx = lg[v];
            for (int64_t v = 0; v < V; ++v) {
                lg[v] -= mx;
                ex[v] = exp(lg[v]);
                s += ex[v];
            }
            const int64_t target = tok[b * T1 + t + 1];
            total += log(s) - lg[target];
            if (want_grad) {
                const double inv = 1.0 / s;
                for (int64_t v = 0; v < V; ++v)
                    lg[v] = ex[v] * inv;
                lg[target] -= 1.0;
            }
        }
    }

    const double scale = 1.0 / (double)(B * T);
    const double loss = total * scale;
    if (!want_grad)
        return loss;

    memset(gE, 0, (size_t)(V * D) * sizeof(double));
    memset(gWx, 0, (size_t)(H * D) * sizeof(double));
    memset(gWh, 0, (size_t)(H * H) * sizeof(double));
    memset(gWe, 0, (size_t)(n_edges * H * H) * sizeof(double));
    memset(gWo, 0, (size_t)(V * H) * sizeof(double));
    memset(gbo, 0, (size_t)V * sizeof(double));
    memset(dh_next, 0, (size_t)BH * sizeof(double));
    for (int64_t m = 0; m < T * B * V; ++m)
        dlog[m] *= scale;

    for (int64_t t = T - 1; t >= 0; --t) {
        const double *c_t = cs + t * (n + 1) * BH;
        const double *h_prev = hs + t * BH;
        const double *h = hs + (t + 1) * BH;
        const double *Lg = dlog + t * B * V;

        outer_acc(B, V, H, Lg, h, gWo);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t v = 0; v < V; ++v)
                gbo[v] += Lg[b * V + v];
        memcpy(dh, dh_next, (size_t)BH * sizeof(double));
        mm_acc(B, V, H, Lg, Wo, dh);

        memset(dc, 0, (size_t)BH * sizeof(double));
        for (int64_t i = 1; i <= n; ++i) {
            double *dci = dc + i * BH;
            for (int64_t m = 0; m < BH; ++m)
                dci[m] = dh[m] * inv_n;
        }
        for (int64_t i = n; i >= 1; --i) {
            const int64_t p = preds[i - 1], e = eidx[i - 1];
            dactivate(ops[i - 1], BH, dc + i * BH, c_t + i * BH, dz);
            outer_acc(B, H, H, dz, c_t + p * BH, gWe + e * H * H);
            mm_acc(B, H, H, dz, We + e * H * H, dc + p * BH);
        }
        dactivate(2, BH, dc, c_t, dz);
        gather(B, D, tok + t, T1, E, X);
        outer_acc(B, H, D, dz, X, gWx);
        outer_acc(B, H, H, dz, h_prev, gWh);
        memset(dX, 0, (size_t)(B * D) * sizeof(double));
        mm_acc(B, H, D, dz, Wx, dX);
        for (int64_t b = 0; b < B; ++b) {
            double *g = gE + tok[b * T1 + t] * D;
            const double *d = dX + b * D;
            for (int64_t j = 0; j < D; ++j)
                g[j] += d[j];
        }
        memset(dh_next, 0, (size_t)BH * sizeof(double));
        mm_acc(B, H, H, dz, Wh, dh_next);
    }
    return loss;
}
