# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of the pure-Python simulation kernel.

Consumes the provided PCG64 bit generator in the same per-transition
order as the Python reference (holding time, stream selection, victim
position), so both kernels emit bit-identical logs for one seed.  The
event loop runs without the GIL; replications on separate threads each
own their generator, so no locking is needed.
"""

from libc.math cimport log1p
from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memcpy, memmove

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

cnp.import_array()

ctypedef cnp.int64_t i64

cdef enum:
    KIND_ARRIVAL = 0
    KIND_ABANDONMENT = 1
    KIND_MATCH = 2


cdef struct Queue:
    i64 *idx
    double *atime
    long head
    long size
    long cap


cdef inline int queue_reserve(Queue *q) noexcept nogil:
    cdef i64 *new_idx
    cdef double *new_atime
    cdef long new_cap
    if q.head + q.size == q.cap:
        if q.head > 0:
            memmove(q.idx, q.idx + q.head, q.size * sizeof(i64))
            memmove(q.atime, q.atime + q.head, q.size * sizeof(double))
            q.head = 0
        if q.size == q.cap:
            new_cap = q.cap * 2
            new_idx = <i64 *> realloc(q.idx, new_cap * sizeof(i64))
            if new_idx == NULL:
                return -1
            q.idx = new_idx
            new_atime = <double *> realloc(q.atime, new_cap * sizeof(double))
            if new_atime == NULL:
                return -1
            q.atime = new_atime
            q.cap = new_cap
    return 0


cdef struct Rows:
    double *time
    signed char *kind
    short *cat
    i64 *aidx
    double *atime
    long n
    long cap


cdef inline int rows_reserve(Rows *r) noexcept nogil:
    cdef long new_cap
    cdef void *p
    if r.n < r.cap:
        return 0
    new_cap = r.cap * 2
    p = realloc(r.time, new_cap * sizeof(double))
    if p == NULL:
        return -1
    r.time = <double *> p
    p = realloc(r.kind, new_cap * sizeof(signed char))
    if p == NULL:
        return -1
    r.kind = <signed char *> p
    p = realloc(r.cat, new_cap * sizeof(short))
    if p == NULL:
        return -1
    r.cat = <short *> p
    p = realloc(r.aidx, new_cap * sizeof(i64))
    if p == NULL:
        return -1
    r.aidx = <i64 *> p
    p = realloc(r.atime, new_cap * sizeof(double))
    if p == NULL:
        return -1
    r.atime = <double *> p
    r.cap = new_cap
    return 0


cdef inline int emit(Rows *r, double t, int kind, int cat, i64 aidx, double atime) noexcept nogil:
    if rows_reserve(r) != 0:
        return -1
    r.time[r.n] = t
    r.kind[r.n] = <signed char> kind
    r.cat[r.n] = <short> cat
    r.aidx[r.n] = aidx
    r.atime[r.n] = atime
    r.n += 1
    return 0


def simulate_core(
    const double[::1] lam,
    const double[::1] delta,
    const i64[::1] q0,
    double horizon,
    object bit_generator,
    bint mortal_initial,
    bint arrivals_enabled,
    i64 max_rows,
):
    """Run the event loop; return (time, kind, category, arrival_index,
    arrival_time, q_final) as numpy arrays."""
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator"
    )
    cdef int K = lam.shape[0]
    cdef Queue *qs = <Queue *> malloc(K * sizeof(Queue))
    cdef long *immortal = <long *> malloc(K * sizeof(long))
    cdef i64 *acount = <i64 *> malloc(K * sizeof(i64))
    cdef Rows rows
    cdef int oom = 0
    cdef int i, j, sel, sel_arrival, last_pos, last_arr, is_match
    cdef long m, pos, abs_pos, tail, init
    cdef double now, lam_tot, ab_tot, total, target, u1, u2, u3, holding, t, rate
    cdef i64 vid
    cdef double vat

    if qs == NULL or immortal == NULL or acount == NULL:
        oom = 1
    if qs != NULL:
        for i in range(K):
            qs[i].idx = NULL
            qs[i].atime = NULL
    rows.n = 0
    rows.cap = 4096
    rows.time = <double *> malloc(rows.cap * sizeof(double))
    rows.kind = <signed char *> malloc(rows.cap * sizeof(signed char))
    rows.cat = <short *> malloc(rows.cap * sizeof(short))
    rows.aidx = <i64 *> malloc(rows.cap * sizeof(i64))
    rows.atime = <double *> malloc(rows.cap * sizeof(double))
    if (
        rows.time == NULL
        or rows.kind == NULL
        or rows.cat == NULL
        or rows.aidx == NULL
        or rows.atime == NULL
    ):
        oom = 1

    if not oom:
        for i in range(K):
            init = <long> q0[i]
            qs[i].cap = init + 8
            qs[i].head = 0
            qs[i].size = init
            qs[i].idx = <i64 *> malloc(qs[i].cap * sizeof(i64))
            qs[i].atime = <double *> malloc(qs[i].cap * sizeof(double))
            if qs[i].idx == NULL or qs[i].atime == NULL:
                oom = 1
                break
            for j in range(init):
                qs[i].idx[j] = j - init + 1
                qs[i].atime[j] = 0.0
            immortal[i] = 0 if mortal_initial else init
            acount[i] = 0

    now = 0.0
    if not oom:
        with nogil:
            while True:
                if max_rows > 0 and rows.n >= max_rows:
                    break
                lam_tot = 0.0
                if arrivals_enabled:
                    for i in range(K):
                        lam_tot += lam[i]
                ab_tot = 0.0
                for i in range(K):
                    ab_tot += delta[i] * (qs[i].size - immortal[i])
                total = lam_tot + ab_tot
                if total <= 0.0:
                    break
                u1 = rng.next_double(rng.state)
                holding = -log1p(-u1) / total
                t = now + holding
                if t > horizon:
                    break
                now = t

                u2 = rng.next_double(rng.state)
                target = u2 * total
                sel = -1
                sel_arrival = 0
                last_pos = -1
                last_arr = 0
                if arrivals_enabled:
                    for i in range(K):
                        rate = lam[i]
                        if rate > 0.0:
                            last_pos = i
                            last_arr = 1
                        target -= rate
                        if target < 0.0 and rate > 0.0:
                            sel = i
                            sel_arrival = 1
                            break
                if sel < 0:
                    for i in range(K):
                        m = qs[i].size - immortal[i]
                        rate = delta[i] * m
                        if rate > 0.0:
                            last_pos = i
                            last_arr = 0
                        target -= rate
                        if target < 0.0 and rate > 0.0:
                            sel = i
                            break
                if sel < 0:
                    if last_pos < 0:
                        break
                    sel = last_pos
                    sel_arrival = last_arr

                if sel_arrival:
                    acount[sel] += 1
                    if emit(&rows, t, KIND_ARRIVAL, sel, acount[sel], t) != 0:
                        oom = 1
                        break
                    is_match = 1
                    for j in range(K):
                        if j != sel and qs[j].size == 0:
                            is_match = 0
                            break
                    if is_match:
                        if emit(&rows, t, KIND_MATCH, -1, 0, t) != 0:
                            oom = 1
                            break
                        for j in range(K):
                            if j != sel:
                                qs[j].head += 1
                                qs[j].size -= 1
                                if immortal[j] > 0:
                                    immortal[j] -= 1
                    else:
                        if queue_reserve(&qs[sel]) != 0:
                            oom = 1
                            break
                        pos = qs[sel].head + qs[sel].size
                        qs[sel].idx[pos] = acount[sel]
                        qs[sel].atime[pos] = t
                        qs[sel].size += 1
                else:
                    m = qs[sel].size - immortal[sel]
                    u3 = rng.next_double(rng.state)
                    pos = <long> (u3 * m)
                    if pos >= m:
                        pos = m - 1
                    abs_pos = qs[sel].head + immortal[sel] + pos
                    vid = qs[sel].idx[abs_pos]
                    vat = qs[sel].atime[abs_pos]
                    tail = qs[sel].head + qs[sel].size - 1 - abs_pos
                    if tail > 0:
                        memmove(
                            qs[sel].idx + abs_pos,
                            qs[sel].idx + abs_pos + 1,
                            tail * sizeof(i64),
                        )
                        memmove(
                            qs[sel].atime + abs_pos,
                            qs[sel].atime + abs_pos + 1,
                            tail * sizeof(double),
                        )
                    qs[sel].size -= 1
                    if emit(&rows, t, KIND_ABANDONMENT, sel, vid, vat) != 0:
                        oom = 1
                        break

    q_final = np.empty(K, dtype=np.int64)
    cdef i64[::1] qf = q_final
    time_arr = np.empty(rows.n, dtype=np.float64)
    kind_arr = np.empty(rows.n, dtype=np.int8)
    cat_arr = np.empty(rows.n, dtype=np.int16)
    aidx_arr = np.empty(rows.n, dtype=np.int64)
    atime_arr = np.empty(rows.n, dtype=np.float64)
    cdef double[::1] tv
    cdef signed char[::1] kv
    cdef short[::1] cv
    cdef i64[::1] av
    cdef double[::1] atv
    if not oom:
        for i in range(K):
            qf[i] = qs[i].size
        if rows.n > 0:
            tv = time_arr
            kv = kind_arr
            cv = cat_arr
            av = aidx_arr
            atv = atime_arr
            memcpy(&tv[0], rows.time, rows.n * sizeof(double))
            memcpy(&kv[0], rows.kind, rows.n * sizeof(signed char))
            memcpy(&cv[0], rows.cat, rows.n * sizeof(short))
            memcpy(&av[0], rows.aidx, rows.n * sizeof(i64))
            memcpy(&atv[0], rows.atime, rows.n * sizeof(double))

    if qs != NULL:
        for i in range(K):
            if qs[i].idx != NULL:
                free(qs[i].idx)
            if qs[i].atime != NULL:
                free(qs[i].atime)
        free(qs)
    if immortal != NULL:
        free(immortal)
    if acount != NULL:
        free(acount)
    if rows.time != NULL:
        free(rows.time)
    if rows.kind != NULL:
        free(rows.kind)
    if rows.cat != NULL:
        free(rows.cat)
    if rows.aidx != NULL:
        free(rows.aidx)
    if rows.atime != NULL:
        free(rows.atime)
    if oom:
        raise MemoryError("simulation kernel out of memory")
    return time_arr, kind_arr, cat_arr, aidx_arr, atime_arr, q_final
