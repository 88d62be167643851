"""Triangle <-> flat-Gaussian parametrization and rotation utilities.

Every flat Gaussian (smallest scale pinned to FLAT_SCALE) corresponds to one
triangle: v1 at the mean, v2/v3 along the two in-plane axes scaled by s2/s3.
The inverse map rebuilds mean, rotation and scales from the vertices with a
single Gram-Schmidt step, so moving vertices is a complete editing interface.

All functions accept both single inputs (shape (3,), (4,), scalars) and
batches (leading N axis).
"""

from __future__ import annotations

import numpy as np

# Scale pinned on the degenerate axis of every flat Gaussian (world units).
# Small enough to be visually flat, large enough that the 3D covariance stays
# invertible in the projection math.
FLAT_SCALE = 1e-7

_DEGENERATE_CROSS = 1e-12


class DegenerateTriangleError(ValueError):
    """Raised when a triangle is too close to a line or point to invert."""


def quat_multiply(a, b):
    """Hamilton product of quaternions in (w, x, y, z) order."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, av = a[..., :1], a[..., 1:]
    bw, bv = b[..., :1], b[..., 1:]
    w = aw * bw - np.sum(av * bv, axis=-1, keepdims=True)
    v = aw * bv + bw * av + np.cross(av, bv)
    return np.concatenate([w, v], axis=-1)


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_matrix(q):
    """Rotation matrix from a (w, x, y, z) quaternion, normalized internally."""
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quat(m):
    """Quaternion (w, x, y, z) from a proper rotation matrix (Shepperd's method)."""
    m = np.asarray(m, dtype=np.float64)
    single = m.ndim == 2
    if single:
        m = m[None]
    t = np.einsum("nii->n", m)
    q = np.empty((m.shape[0], 4), dtype=np.float64)

    # Pick the numerically largest pivot per matrix.
    cand = np.stack([t, m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]], axis=1)
    choice = np.argmax(cand, axis=1)
    for i in range(m.shape[0]):
        a = m[i]
        c = choice[i]
        if c == 0:
            s = np.sqrt(t[i] + 1.0) * 2.0
            q[i] = [0.25 * s, (a[2, 1] - a[1, 2]) / s,
                    (a[0, 2] - a[2, 0]) / s, (a[1, 0] - a[0, 1]) / s]
        elif c == 1:
            s = np.sqrt(1.0 + a[0, 0] - a[1, 1] - a[2, 2]) * 2.0
            q[i] = [(a[2, 1] - a[1, 2]) / s, 0.25 * s,
                    (a[0, 1] + a[1, 0]) / s, (a[0, 2] + a[2, 0]) / s]
        elif c == 2:
            s = np.sqrt(1.0 - a[0, 0] + a[1, 1] - a[2, 2]) * 2.0
            q[i] = [(a[0, 2] - a[2, 0]) / s, (a[0, 1] + a[1, 0]) / s,
                    0.25 * s, (a[1, 2] + a[2, 1]) / s]
        else:
            s = np.sqrt(1.0 - a[0, 0] - a[1, 1] + a[2, 2]) * 2.0
            q[i] = [(a[1, 0] - a[0, 1]) / s, (a[0, 2] + a[2, 0]) / s,
                    (a[1, 2] + a[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return q[0] if single else q


def quat_slerp(qa, qb, s):
    """Spherical interpolation between two unit quaternions, s in [0, 1]."""
    qa = quat_normalize(qa)
    qb = quat_normalize(qb)
    dot = float(np.dot(qa, qb))
    if dot < 0.0:  # take the short arc
        qb = -qb
        dot = -dot
    if dot > 1.0 - 1e-12:
        return quat_normalize(qa + s * (qb - qa))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    return (np.sin((1.0 - s) * theta) * qa + np.sin(s * theta) * qb) / np.sin(theta)


def quaternion_from_phi(phi):
    """Unit quaternion placing a flat disc parallel to the XZ plane, spun by phi.

    The base quaternion rotates the degenerate axis (first rotation column,
    the one carrying FLAT_SCALE) onto e2 = (0,1,0); composing with a spin of
    phi about the world Y axis turns the disc in-plane without tilting it.
    """
    phi = np.asarray(phi, dtype=np.float64)
    h = phi / 2.0
    c, s = np.cos(h), np.sin(h)
    r = np.sqrt(0.5)  # cos(pi/4) = sin(pi/4): the fixed z-quaternion of pi/2
    q = np.stack([c * r, s * r, s * r, c * r], axis=-1)
    return q


def rotation_from_phi(phi):
    """Closed-form rotation matrix equal to quat_to_matrix(quaternion_from_phi).

    Columns: r1 = e2 (degenerate axis), r2 = (-cos phi, 0, sin phi),
    r3 = (sin phi, 0, cos phi).
    """
    phi = np.asarray(phi, dtype=np.float64)
    c, s = np.cos(phi), np.sin(phi)
    z = np.zeros_like(phi)
    one = np.ones_like(phi)
    m = np.stack([
        np.stack([z, -c, s], axis=-1),
        np.stack([one, z, z], axis=-1),
        np.stack([z, s, c], axis=-1),
    ], axis=-2)
    return m


def rotation_from_phi_jac(phi):
    """d/dphi of rotation_from_phi, same shape as the matrix."""
    phi = np.asarray(phi, dtype=np.float64)
    c, s = np.cos(phi), np.sin(phi)
    z = np.zeros_like(phi)
    m = np.stack([
        np.stack([z, s, c], axis=-1),
        np.stack([z, z, z], axis=-1),
        np.stack([z, c, -s], axis=-1),
    ], axis=-2)
    return m


def quat_to_matrix_backward(q_raw, d_m):
    """Gradient of quat_to_matrix through the internal normalization.

    Args:
        q_raw: (..., 4) unnormalized stored quaternions.
        d_m:   (..., 3, 3) gradient w.r.t. the rotation matrix.
    Returns:
        (..., 4) gradient w.r.t. q_raw.
    """
    q_raw = np.asarray(q_raw, dtype=np.float64)
    norm = np.linalg.norm(q_raw, axis=-1, keepdims=True)
    q = q_raw / norm
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]

    # dR/d(unit quaternion components), contracted against d_m.
    g = d_m
    dw = 2 * (-z * g[..., 0, 1] + y * g[..., 0, 2]
              + z * g[..., 1, 0] - x * g[..., 1, 2]
              - y * g[..., 2, 0] + x * g[..., 2, 1])
    dx = 2 * (y * g[..., 0, 1] + z * g[..., 0, 2]
              + y * g[..., 1, 0] - 2 * x * g[..., 1, 1] - w * g[..., 1, 2]
              + z * g[..., 2, 0] + w * g[..., 2, 1] - 2 * x * g[..., 2, 2])
    dy = 2 * (-2 * y * g[..., 0, 0] + x * g[..., 0, 1] + w * g[..., 0, 2]
              + x * g[..., 1, 0] + z * g[..., 1, 2]
              - w * g[..., 2, 0] + z * g[..., 2, 1] - 2 * y * g[..., 2, 2])
    dz = 2 * (-2 * z * g[..., 0, 0] - w * g[..., 0, 1] + x * g[..., 0, 2]
              + w * g[..., 1, 0] - 2 * z * g[..., 1, 1] + y * g[..., 1, 2]
              + x * g[..., 2, 0] + y * g[..., 2, 1])
    d_q = np.stack([dw, dx, dy, dz], axis=-1)

    # Through q = q_raw / |q_raw|:  J = (I - q q^T) / |q_raw|
    d_raw = (d_q - q * np.sum(d_q * q, axis=-1, keepdims=True)) / norm
    return d_raw


def orth_step(v, r1, r2):
    """Single Gram-Schmidt step: normalize v minus its r1/r2 components.

    r1 and r2 must be orthonormal within 1e-6. Raises DegenerateTriangleError
    when v is (numerically) inside span{r1, r2}.
    """
    v = np.asarray(v, dtype=np.float64)
    r1 = np.asarray(r1, dtype=np.float64)
    r2 = np.asarray(r2, dtype=np.float64)
    res = (v
           - np.sum(v * r1, axis=-1, keepdims=True) * r1
           - np.sum(v * r2, axis=-1, keepdims=True) * r2)
    n = np.linalg.norm(res, axis=-1, keepdims=True)
    if np.any(n <= _DEGENERATE_CROSS):
        raise DegenerateTriangleError(
            "vector lies in span{r1, r2}; cannot orthogonalize")
    return res / n


def triangle_from_gaussian(mean, rotation, scales):
    """Vertices of the triangle representing a flat Gaussian.

    v1 = mean, v2 = mean + s2*r2, v3 = mean + s3*r3 with r2/r3 the second and
    third rotation columns. Batched: (N,3), (N,3,3), (N,3) -> (N,3,3) where
    the middle axis indexes v1..v3.
    """
    mean = np.asarray(mean, dtype=np.float64)
    rotation = np.asarray(rotation, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    rtr = np.swapaxes(rotation, -1, -2) @ rotation
    eye = np.eye(3)
    if np.max(np.abs(rtr - eye)) > 1e-5:
        raise ValueError("rotation matrix is not orthonormal (|R^T R - I| > 1e-5)")
    v1 = mean
    v2 = mean + scales[..., 1:2] * rotation[..., :, 1]
    v3 = mean + scales[..., 2:3] * rotation[..., :, 2]
    return np.stack([v1, v2, v3], axis=-2)


def gaussian_from_triangle(vertices):
    """Invert triangle_from_gaussian: (..., 3, 3) vertices -> (mean, R, scales).

    r1 is the unit normal of the triangle (right-hand rule on the edges),
    r2 the unit v2-edge, r3 the Gram-Schmidt completion; s2/s3 the edge
    extents and s1 = FLAT_SCALE. The returned R is always a proper rotation.
    """
    v = np.asarray(vertices, dtype=np.float64)
    single = v.ndim == 2
    if single:
        v = v[None]
    a = v[:, 1] - v[:, 0]
    b = v[:, 2] - v[:, 0]
    n = np.cross(a, b)
    n_norm = np.linalg.norm(n, axis=-1)
    bad = np.nonzero(n_norm <= _DEGENERATE_CROSS)[0]
    if bad.size:
        raise DegenerateTriangleError(
            f"triangle {int(bad[0])} is degenerate (edge cross product "
            f"norm {n_norm[bad[0]]:.3e} <= {_DEGENERATE_CROSS:g})")
    r1 = n / n_norm[:, None]
    s2 = np.linalg.norm(a, axis=-1)
    r2 = a / s2[:, None]
    # b has no r1 component (it lies in the triangle plane), so one projection
    # against r2 completes the Gram-Schmidt step.
    res = b - np.sum(b * r2, axis=-1, keepdims=True) * r2
    res_n = np.linalg.norm(res, axis=-1)
    r3 = res / res_n[:, None]
    s3 = np.sum(b * r3, axis=-1)
    rot = np.stack([r1, r2, r3], axis=-1)
    scales = np.stack([np.full_like(s2, FLAT_SCALE), s2, s3], axis=-1)
    mean = v[:, 0]
    if single:
        return mean[0], rot[0], scales[0]
    return mean, rot, scales


def rotation_between(a, b):
    """Proper rotation Q with Q @ (a/|a|) = b/|b|.

    Uses the Rodrigues form about a x b; for (near-)antiparallel inputs the
    pair is handled as a deterministic pi flip about an axis orthogonal to a
    (projection of e1, else an e2-based axis) composed with the small
    remaining rotation, keeping the post-condition exact.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na <= 1e-12 or nb <= 1e-12:
        raise ValueError("rotation_between requires non-zero vectors")
    ah, bh = a / na, b / nb
    c = float(np.dot(ah, bh))
    if c > -1.0 + 1e-4:
        return _rodrigues_between(ah, bh, c)
    # Antiparallel region: flip pi about a deterministic axis orthogonal to a,
    # then rotate the (now well-conditioned) residual -ah -> bh.
    e = np.array([1.0, 0.0, 0.0])
    if abs(abs(ah[0]) - 1.0) < 1e-6:
        e = np.array([0.0, 1.0, 0.0])
    u = e - np.dot(e, ah) * ah
    u = u / np.linalg.norm(u)
    flip = 2.0 * np.outer(u, u) - np.eye(3)
    m = -ah  # flip @ ah
    c2 = float(np.dot(m, bh))
    return _rodrigues_between(m, bh, c2) @ flip


def _rodrigues_between(ah, bh, c):
    k = np.cross(ah, bh)
    kx = np.array([[0.0, -k[2], k[1]],
                   [k[2], 0.0, -k[0]],
                   [-k[1], k[0], 0.0]])
    return np.eye(3) + kx + kx @ kx / (1.0 + c)
