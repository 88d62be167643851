"""Numba inner loops for tiled alpha compositing (forward and backward).

Work is partitioned over image tiles; each (tile, gaussian) pair owns one
gradient slot, so parallel tiles never write the same memory and results are
bit-reproducible regardless of thread count. A splat's support is its
3-sigma box — the same bound the tile binning and viewport culling use — so
pixels outside it cost two compares. Everything runs in float64.
"""

import math

import numpy as np
from numba import njit, prange

TILE = 8
ALPHA_MIN = 1.0 / 255.0
ALPHA_MAX = 0.99
T_EPS = 1e-6
# alpha = opacity * exp(-q/2) < 1/255 is guaranteed for any opacity <= 1 once
# q exceeds 2*ln(255); skipping there avoids the exp without changing output.
Q_CUT = 2.0 * np.log(255.0)

_LOG2E = 1.4426950408889634
_LN2_32 = np.log(2.0) / 32.0
_EXP2_TABLE = np.exp2(np.arange(32) / 32.0)


@njit(inline="always")
def _exp_neg_half(q):
    """e^(-q/2) for q in [0, Q_CUT]; table-driven exp2, ~1e-9 relative.

    The compositing weights live far above this error; using the same
    approximation in every pass keeps forward/backward exactly consistent.
    """
    t = -0.5 * q * _LOG2E            # in (-8, 0]
    n = int(math.floor(t))
    f = t - n                        # [0, 1)
    k = int(f * 32.0)
    r = (f - k * (1.0 / 32.0)) * _LN2_32 * 32.0  # = (f - k/32) * ln2
    p = 1.0 + r * (1.0 + r * (0.5 + r * (1.0 / 6.0)))
    return math.ldexp(_EXP2_TABLE[k] * p, n)


@njit(cache=True, parallel=True, fastmath={'nsz', 'contract', 'arcp'})
def composite_forward(tile, width, height, tiles_x, tile_offsets, pair_gauss,
                      mean2d, conic, radius, opacity, color, background,
                      out_img, out_trans, out_stop, out_alpha):
    ntiles = tile_offsets.shape[0] - 1
    for t in prange(ntiles):
        x0 = (t % tiles_x) * tile
        y0 = (t // tiles_x) * tile
        x1 = min(x0 + tile, width)
        y1 = min(y0 + tile, height)
        start = tile_offsets[t]
        end = tile_offsets[t + 1]
        for y in range(y0, y1):
            py = y + 0.5
            for x in range(x0, x1):
                px = x + 0.5
                trans = 1.0
                c0 = 0.0
                c1 = 0.0
                c2 = 0.0
                stop = end
                local = (y - y0) * tile + (x - x0)
                for s in range(start, end):
                    g = pair_gauss[s]
                    dx = px - mean2d[g, 0]
                    dy = py - mean2d[g, 1]
                    r = radius[g]
                    if dx > r or dx < -r or dy > r or dy < -r:
                        continue
                    q = (conic[g, 0] * dx * dx
                         + 2.0 * conic[g, 1] * dx * dy
                         + conic[g, 2] * dy * dy)
                    if q > Q_CUT or q < 0.0:
                        continue
                    alpha = opacity[g] * _exp_neg_half(q)
                    if alpha < ALPHA_MIN:
                        continue
                    clamped = alpha > ALPHA_MAX
                    if clamped:
                        alpha = ALPHA_MAX
                    # cache for the backward pass; sign flags the clamp
                    out_alpha[s, local] = -alpha if clamped else alpha
                    w = alpha * trans
                    c0 += w * color[g, 0]
                    c1 += w * color[g, 1]
                    c2 += w * color[g, 2]
                    trans *= 1.0 - alpha
                    if trans < T_EPS:
                        stop = s + 1
                        break
                out_img[y, x, 0] = c0 + background[0] * trans
                out_img[y, x, 1] = c1 + background[1] * trans
                out_img[y, x, 2] = c2 + background[2] * trans
                out_trans[y, x] = trans
                out_stop[y, x] = stop


@njit(cache=True, parallel=True, fastmath={'nsz', 'contract', 'arcp'})
def composite_backward(tile, width, height, tiles_x, tile_offsets, pair_gauss,
                       mean2d, conic, radius, opacity, color, background,
                       loss_grad, trans_final, stop_idx, alpha_cache,
                       pair_grad):
    ntiles = tile_offsets.shape[0] - 1
    for t in prange(ntiles):
        x0 = (t % tiles_x) * tile
        y0 = (t // tiles_x) * tile
        x1 = min(x0 + tile, width)
        y1 = min(y0 + tile, height)
        start = tile_offsets[t]
        for y in range(y0, y1):
            py = y + 0.5
            for x in range(x0, x1):
                px = x + 0.5
                g0 = loss_grad[y, x, 0]
                g1 = loss_grad[y, x, 1]
                g2 = loss_grad[y, x, 2]
                if g0 == 0.0 and g1 == 0.0 and g2 == 0.0:
                    continue
                trans = trans_final[y, x]
                # suffix accumulator: sum_{j>i} c_j a_j T_j + bg * T_final
                s0 = background[0] * trans
                s1 = background[1] * trans
                s2 = background[2] * trans
                local = (y - y0) * tile + (x - x0)
                for s in range(stop_idx[y, x] - 1, start - 1, -1):
                    stored = alpha_cache[s, local]
                    if stored == 0.0:
                        continue
                    clamped = stored < 0.0
                    alpha = -stored if clamped else stored
                    g = pair_gauss[s]
                    trans /= 1.0 - alpha  # transmittance in front of this splat
                    w = alpha * trans
                    pair_grad[s, 6] += g0 * w
                    pair_grad[s, 7] += g1 * w
                    pair_grad[s, 8] += g2 * w
                    inv_one = 1.0 / (1.0 - alpha)
                    d_alpha = (g0 * (color[g, 0] * trans - s0 * inv_one)
                               + g1 * (color[g, 1] * trans - s1 * inv_one)
                               + g2 * (color[g, 2] * trans - s2 * inv_one))
                    if not clamped:
                        dx = px - mean2d[g, 0]
                        dy = py - mean2d[g, 1]
                        ca = conic[g, 0]
                        cb = conic[g, 1]
                        cc = conic[g, 2]
                        d_q = -0.5 * alpha * d_alpha
                        pair_grad[s, 0] += -2.0 * d_q * (ca * dx + cb * dy)
                        pair_grad[s, 1] += -2.0 * d_q * (cb * dx + cc * dy)
                        pair_grad[s, 2] += d_q * dx * dx
                        pair_grad[s, 3] += d_q * 2.0 * dx * dy
                        pair_grad[s, 4] += d_q * dy * dy
                        pair_grad[s, 5] += d_alpha * (alpha / opacity[g])
                    s0 += color[g, 0] * w
                    s1 += color[g, 1] * w
                    s2 += color[g, 2] * w
