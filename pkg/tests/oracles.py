"""Independent reference implementations used only by the tests.

None of these share code paths with the package: they are deliberately
naive (explicit loops, direct definitions).
"""

import numba
import numpy as np


def otsu_brute_force(values):
    """Split index maximizing between-class variance, recomputing every split from scratch."""
    v = sorted(float(x) for x in values)
    n = len(v)
    if v[0] == v[-1]:
        return n
    scores = []
    for k in range(1, n):
        low, high = v[:k], v[k:]
        mu_low = sum(low) / len(low)
        mu_high = sum(high) / len(high)
        scores.append((k / n) * ((n - k) / n) * (mu_low - mu_high) ** 2)
    best = max(scores)
    # exact ties in real arithmetic can differ in the last bits; the smallest such split wins
    for k, sb in enumerate(scores, start=1):
        if sb >= best * (1 - 1e-12):
            return k


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    g = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return grad


def rel_err(a, b, floor=1e-8):
    """Max elementwise relative error with an absolute floor for tiny entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def offsets_for(connectivity):
    max_l1 = {6: 1, 18: 2, 26: 3}[connectivity]
    return np.array(
        [
            (dz, dy, dx)
            for dz in (-1, 0, 1)
            for dy in (-1, 0, 1)
            for dx in (-1, 0, 1)
            if 0 < abs(dz) + abs(dy) + abs(dx) <= max_l1
        ],
        dtype=np.int64,
    )


@numba.njit(cache=True)
def _flood_fill(mask, offsets):
    nz, ny, nx = mask.shape
    labels = np.zeros(mask.shape, dtype=np.int32)
    queue = np.empty((nz * ny * nx, 3), dtype=np.int64)
    current = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not mask[z, y, x] or labels[z, y, x] != 0:
                    continue
                current += 1
                labels[z, y, x] = current
                head, tail = 0, 1
                queue[0, 0], queue[0, 1], queue[0, 2] = z, y, x
                while head < tail:
                    cz, cy, cx = queue[head, 0], queue[head, 1], queue[head, 2]
                    head += 1
                    for k in range(offsets.shape[0]):
                        zz = cz + offsets[k, 0]
                        yy = cy + offsets[k, 1]
                        xx = cx + offsets[k, 2]
                        if 0 <= zz < nz and 0 <= yy < ny and 0 <= xx < nx:
                            if mask[zz, yy, xx] and labels[zz, yy, xx] == 0:
                                labels[zz, yy, xx] = current
                                queue[tail, 0], queue[tail, 1], queue[tail, 2] = zz, yy, xx
                                tail += 1
    return labels, current


def flood_fill_label(mask, connectivity):
    return _flood_fill(np.ascontiguousarray(np.asarray(mask, dtype=bool)), offsets_for(connectivity))


def same_partition(labels_a, labels_b):
    """True when two labelings induce the same partition of the foreground."""
    a = labels_a.ravel()
    b = labels_b.ravel()
    if not np.array_equal(a == 0, b == 0):
        return False
    fg = a != 0
    pairs = set(zip(a[fg].tolist(), b[fg].tolist()))
    return len(pairs) == len(set(a[fg].tolist())) == len(set(b[fg].tolist()))


def unmatched_volume_bruteforce(source, other, connectivity, voxel_mm3):
    """Total ml of ``source`` components that share no voxel with ``other``."""
    labels, n = flood_fill_label(source, connectivity)
    other = np.asarray(other, dtype=bool)
    total = 0
    for lab in range(1, n + 1):
        comp = labels == lab
        if not np.any(comp & other):
            total += int(comp.sum())
    return total * voxel_mm3 / 1000.0


def brute_morph(mask, element, op):
    """Min (erosion) or max (dilation) filter by explicit shifting; outside counts as 0."""
    mask = np.asarray(mask, dtype=bool)
    r = element.shape[0] // 2
    padded = np.pad(mask, r, constant_values=False)
    out = np.ones_like(mask) if op == "erode" else np.zeros_like(mask)
    nz, ny, nx = mask.shape
    for dz, dy, dx in zip(*np.nonzero(element)):
        shifted = padded[dz : dz + nz, dy : dy + ny, dx : dx + nx]
        out = (out & shifted) if op == "erode" else (out | shifted)
    return out


def ball_count_bruteforce(radius):
    return sum(
        1
        for z in range(-radius, radius + 1)
        for y in range(-radius, radius + 1)
        for x in range(-radius, radius + 1)
        if z * z + y * y + x * x <= radius * radius
    )
