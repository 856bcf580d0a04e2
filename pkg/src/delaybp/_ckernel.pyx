# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled slot loop. Must stay bit-identical to ``_pykernel.run_chunk``."""
from libc.math cimport exp
from libc.stdlib cimport malloc, free

ctypedef long long i64

cdef double EXP_CLAMP = 700.0


def run_chunk(i64[::1] Q, i64[::1] A, i64[::1] D, i64[::1] R, i64[::1] S,
              i64[::1] qsum, i64[::1] qsq,
              const i64[:, ::1] arrivals, const i64[::1] channel, const i64[:, ::1] rates,
              const i64[::1] src_queue, const i64[::1] hop_link, const i64[::1] hop_flow,
              const i64[::1] hop_up, const i64[::1] hop_down,
              const i64[::1] link_ptr, const i64[::1] sched_ptr, const i64[::1] sched_links,
              const i64[::1] queue_flow,
              const double[::1] a1, const double[::1] a2, const double[::1] target,
              i64 t0, i64 stride,
              i64[:, ::1] rec_Q, i64[:, ::1] rec_A, i64[:, ::1] rec_D, i64[:, ::1] rec_R,
              i64[:, ::1] rec_S, i64[:, ::1] rec_qsum, i64[:, ::1] rec_qsq,
              i64[::1] out_sched, i64[:, ::1] out_hop):
    cdef Py_ssize_t n_q = Q.shape[0]
    cdef Py_ssize_t n_f = a1.shape[0]
    cdef Py_ssize_t n_l = link_ptr.shape[0] - 1
    cdef Py_ssize_t n_s = sched_ptr.shape[0] - 1
    cdef Py_ssize_t n_src = src_queue.shape[0]
    cdef Py_ssize_t n_h = hop_link.shape[0]
    cdef Py_ssize_t n_t = channel.shape[0]
    cdef Py_ssize_t c, f, i, l, k, s, p, j, row
    cdef i64 t, up, dn, diff, served, x, h
    cdef double z, v, best, obj, best_obj
    cdef Py_ssize_t best_s, bh, n_moves

    cdef i64* tot = <i64*> malloc(max(n_f, 1) * sizeof(i64))
    cdef double* w = <double*> malloc(max(n_f, 1) * sizeof(double))
    cdef Py_ssize_t* best_hop = <Py_ssize_t*> malloc(max(n_l, 1) * sizeof(Py_ssize_t))
    cdef double* link_val = <double*> malloc(max(n_l, 1) * sizeof(double))
    cdef Py_ssize_t* mv_hop = <Py_ssize_t*> malloc(max(n_l, 1) * sizeof(Py_ssize_t))
    cdef i64* mv_served = <i64*> malloc(max(n_l, 1) * sizeof(i64))
    if not tot or not w or not best_hop or not link_val or not mv_hop or not mv_served:
        free(tot); free(w); free(best_hop); free(link_val); free(mv_hop); free(mv_served)
        raise MemoryError()

    try:
        with nogil:
            for c in range(n_t):
                t = t0 + c + 1
                h = channel[c]

                for f in range(n_f):
                    tot[f] = 0
                for i in range(n_q):
                    tot[queue_flow[i]] += Q[i]
                for f in range(n_f):
                    z = -a2[f] * (<double> tot[f] - target[f])
                    if z > EXP_CLAMP:
                        z = EXP_CLAMP
                    elif z < -EXP_CLAMP:
                        z = -EXP_CLAMP
                    w[f] = 1.0 + a1[f] / (1.0 + exp(z))

                for l in range(n_l):
                    best = 0.0
                    bh = -1
                    for k in range(link_ptr[l], link_ptr[l + 1]):
                        up = hop_up[k]
                        dn = hop_down[k]
                        diff = 0
                        if up >= 0:
                            diff = Q[up]
                        if dn >= 0:
                            diff = diff - Q[dn]
                        if diff <= 0:
                            continue
                        v = w[hop_flow[k]] * <double> diff
                        if v > best:
                            best = v
                            bh = k
                    best_hop[l] = bh
                    link_val[l] = best * <double> rates[h, l]

                best_obj = 0.0
                best_s = -1
                for s in range(n_s):
                    obj = 0.0
                    for p in range(sched_ptr[s], sched_ptr[s + 1]):
                        obj = obj + link_val[sched_links[p]]
                    if obj > best_obj:
                        best_obj = obj
                        best_s = s

                out_sched[c] = best_s
                for l in range(n_l):
                    out_hop[c, l] = -1
                if best_s >= 0:
                    n_moves = 0
                    for p in range(sched_ptr[best_s], sched_ptr[best_s + 1]):
                        l = sched_links[p]
                        if link_val[l] > 0:
                            k = best_hop[l]
                            out_hop[c, l] = k
                            up = hop_up[k]
                            served = rates[h, l]
                            if Q[up] < served:
                                served = Q[up]
                            mv_hop[n_moves] = k
                            mv_served[n_moves] = served
                            n_moves += 1
                    for j in range(n_moves):
                        k = mv_hop[j]
                        served = mv_served[j]
                        up = hop_up[k]
                        Q[up] -= served
                        D[up] += served
                        S[k] += served
                        dn = hop_down[k]
                        if dn >= 0:
                            Q[dn] += served
                            R[dn] += served

                for j in range(n_src):
                    x = arrivals[c, j]
                    i = src_queue[j]
                    Q[i] += x
                    A[i] += x

                for f in range(n_f):
                    tot[f] = 0
                for i in range(n_q):
                    tot[queue_flow[i]] += Q[i]
                for f in range(n_f):
                    qsum[f] += tot[f]
                    qsq[f] += tot[f] * tot[f]

                if t % stride == 0:
                    row = t // stride
                    for i in range(n_q):
                        rec_Q[row, i] = Q[i]
                        rec_A[row, i] = A[i]
                        rec_D[row, i] = D[i]
                        rec_R[row, i] = R[i]
                    for k in range(n_h):
                        rec_S[row, k] = S[k]
                    for f in range(n_f):
                        rec_qsum[row, f] = qsum[f]
                        rec_qsq[row, f] = qsq[f]
    finally:
        free(tot); free(w); free(best_hop); free(link_val); free(mv_hop); free(mv_served)
