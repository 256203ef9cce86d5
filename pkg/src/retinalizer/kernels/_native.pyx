# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; semantics must match kernels._reference bit for bit."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def nearest_color_indices(pixels, colors):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] px = np.ascontiguousarray(pixels, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cs = np.ascontiguousarray(colors, dtype=np.float64)
    cdef Py_ssize_t n = px.shape[0]
    cdef Py_ssize_t k = cs.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t i, j
    cdef double dr, dg, db, d, best
    cdef Py_ssize_t best_j
    for i in range(n):
        best = -1.0
        best_j = 0
        for j in range(k):
            dr = px[i, 0] - cs[j, 0]
            dg = px[i, 1] - cs[j, 1]
            db = px[i, 2] - cs[j, 2]
            d = dr * dr
            d += dg * dg
            d += db * db
            if best < 0.0 or d < best:
                best = d
                best_j = j
        out[i] = best_j
    return out


cdef inline int _ring(cnp.uint8_t[:, :] img, Py_ssize_t y, Py_ssize_t x,
                      int* p) nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    # clockwise from north: P2..P9
    p[0] = img[y - 1, x] if y > 0 else 0
    p[1] = img[y - 1, x + 1] if (y > 0 and x + 1 < w) else 0
    p[2] = img[y, x + 1] if x + 1 < w else 0
    p[3] = img[y + 1, x + 1] if (y + 1 < h and x + 1 < w) else 0
    p[4] = img[y + 1, x] if y + 1 < h else 0
    p[5] = img[y + 1, x - 1] if (y + 1 < h and x > 0) else 0
    p[6] = img[y, x - 1] if x > 0 else 0
    p[7] = img[y - 1, x - 1] if (y > 0 and x > 0) else 0
    return 0


def thin_zhang_suen(mask, int max_iter=10000):
    # Only border pixels (foreground with a background 8-neighbor; pixels
    # outside the image count as background) can satisfy the deletion
    # conditions, and a pixel's deletability only changes when one of its
    # neighbors is deleted, so a worklist visits every pixel the full-image
    # scan would delete:
    #   - failing the phase-independent tests (neighbor count, transitions)
    #     drops the pixel until a neighbor dies and re-adds it;
    #   - failing only the phase-specific product keeps it one more phase
    #     (the other phase tests a different product);
    #   - no ring pattern fails only the products in both phases (that needs
    #     all four cardinal neighbors, which forces >= 2 transitions), so
    #     nothing is carried forever.
    # Deletions stay parallel per subphase, so outputs match the reference
    # bit for bit.
    cdef cnp.ndarray[cnp.uint8_t, ndim=2] img = \
        (np.asarray(mask) > 0).astype(np.uint8)
    cdef cnp.uint8_t[:, :] iv = img
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef cnp.int32_t[:] qy = np.empty(h * w, dtype=np.int32)
    cdef cnp.int32_t[:] qx = np.empty(h * w, dtype=np.int32)
    cdef cnp.int32_t[:] ky = np.empty(h * w, dtype=np.int32)
    cdef cnp.int32_t[:] kx = np.empty(h * w, dtype=np.int32)
    cdef cnp.uint8_t[:, :] inq = np.zeros((h, w), dtype=np.uint8)
    cdef Py_ssize_t y, x, yy, xx, i, j, n, m, k
    cdef int it, phase, neigh, trans, changed, dy, dx
    cdef int p[8]

    n = 0
    for y in range(h):
        for x in range(w):
            if iv[y, x] == 0:
                continue
            _ring(iv, y, x, p)
            neigh = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7]
            if neigh < 8:
                qy[n] = <cnp.int32_t> y
                qx[n] = <cnp.int32_t> x
                inq[y, x] = 1
                n += 1

    for it in range(max_iter):
        if n == 0:
            break
        changed = 0
        for phase in range(2):
            k = 0
            m = 0
            for i in range(n):
                y = qy[i]
                x = qx[i]
                _ring(iv, y, x, p)
                neigh = 0
                for j in range(8):
                    neigh += p[j]
                if neigh < 2 or neigh > 6:
                    inq[y, x] = 0
                    continue
                trans = 0
                for j in range(7):
                    if p[j] == 0 and p[j + 1] == 1:
                        trans += 1
                if p[7] == 0 and p[0] == 1:
                    trans += 1
                if trans != 1:
                    inq[y, x] = 0
                    continue
                if phase == 0:
                    if p[0] * p[2] * p[4] != 0 or p[2] * p[4] * p[6] != 0:
                        qy[m] = <cnp.int32_t> y
                        qx[m] = <cnp.int32_t> x
                        m += 1
                        continue
                else:
                    if p[0] * p[2] * p[6] != 0 or p[0] * p[4] * p[6] != 0:
                        qy[m] = <cnp.int32_t> y
                        qx[m] = <cnp.int32_t> x
                        m += 1
                        continue
                ky[k] = <cnp.int32_t> y
                kx[k] = <cnp.int32_t> x
                k += 1
            n = m
            if k == 0:
                continue
            changed = 1
            for j in range(k):
                iv[ky[j], kx[j]] = 0
                inq[ky[j], kx[j]] = 0
            for j in range(k):
                for dy in range(-1, 2):
                    yy = ky[j] + dy
                    if yy < 0 or yy >= h:
                        continue
                    for dx in range(-1, 2):
                        xx = kx[j] + dx
                        if xx < 0 or xx >= w:
                            continue
                        if iv[yy, xx] != 0 and inq[yy, xx] == 0:
                            inq[yy, xx] = 1
                            qy[n] = <cnp.int32_t> yy
                            qx[n] = <cnp.int32_t> xx
                            n += 1
        if not changed:
            break
    return img
