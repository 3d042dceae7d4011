# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled sampling kernel; same contract and draw order as ``_pykernel``."""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp
from libc.stdint cimport int32_t, int64_t, uint8_t
from numpy.random cimport bitgen_t

IMPLEMENTATION = "cython"


cdef inline double _sigmoid(double d) noexcept nogil:
    cdef double e
    if d >= 0.0:
        return 1.0 / (1.0 + exp(-d))
    e = exp(d)
    return e / (1.0 + e)


cdef inline void _touch(int64_t *ones, int64_t *last, Py_ssize_t x,
                        uint8_t old, int64_t t) noexcept nogil:
    if old:
        ones[x] += t - 1 - last[x]
    last[x] = t - 1


def run_steps(data, uint8_t[::1] state, int32_t[:, :, ::1] slots,
              int64_t[::1] ones, int64_t[::1] last, int64_t t, int64_t nsteps,
              rng, exact_orbit=None):
    if exact_orbit is not None:
        raise NotImplementedError("exact orbit sampling is only available in the Python kernel")
    cdef const int32_t[::1] vc_ptr_v = data.vc_ptr
    cdef const int32_t[::1] vc_clause_v = data.vc_clause
    cdef const uint8_t[::1] vc_sign_v = data.vc_sign
    cdef const int32_t[::1] cl_ptr_v = data.cl_ptr
    cdef const int32_t[::1] lit_var_v = data.lit_var
    cdef const uint8_t[::1] lit_pos_v = data.lit_pos
    cdef const double[::1] weights_v = data.weights
    cdef const int32_t[::1] free_v = data.free
    cdef const int32_t[::1] ctx_v = data.ctx_vars
    cdef const int32_t[::1] kslots_v = data.kslots
    cdef const int32_t[::1] sup_ptr_v = data.sup_ptr
    cdef const int32_t[::1] sup_v = data.sup
    cdef uint8_t[::1] tmp_v = data.scratch
    cdef int32_t[::1] pscratch_v = data.perm_scratch
    cdef double alpha = data.alpha
    cdef bint orbit_moves = data.orbit_moves
    cdef Py_ssize_t nfree = free_v.shape[0]
    cdef Py_ssize_t nctx = ctx_v.shape[0]
    cdef Py_ssize_t kmax = slots.shape[1]
    cdef Py_ssize_t deg = slots.shape[2]
    if nfree == 0 or nsteps <= 0:
        return t

    # raw pointers keep the inner loops free of memoryview bookkeeping
    cdef const int32_t *vc_ptr = &vc_ptr_v[0]
    cdef const int32_t *vc_clause = &vc_clause_v[0] if vc_clause_v.shape[0] else NULL
    cdef const uint8_t *vc_sign = &vc_sign_v[0] if vc_sign_v.shape[0] else NULL
    cdef const int32_t *cl_ptr = &cl_ptr_v[0]
    cdef const int32_t *lit_var = &lit_var_v[0] if lit_var_v.shape[0] else NULL
    cdef const uint8_t *lit_pos = &lit_pos_v[0] if lit_pos_v.shape[0] else NULL
    cdef const double *weights = &weights_v[0] if weights_v.shape[0] else NULL
    cdef const int32_t *free = &free_v[0]
    cdef const int32_t *ctx = &ctx_v[0] if nctx else NULL
    cdef const int32_t *kslots = &kslots_v[0]
    cdef const int32_t *sup_ptr = &sup_ptr_v[0]
    cdef const int32_t *sup = &sup_v[0] if sup_v.shape[0] else NULL
    cdef uint8_t *tmp = &tmp_v[0]
    cdef int32_t *pscratch = &pscratch_v[0]
    cdef uint8_t *st = &state[0]
    cdef int64_t *on = &ones[0]
    cdef int64_t *la = &last[0]
    cdef int32_t *base = &slots[0, 0, 0] if slots.shape[0] * kmax * deg else NULL

    cdef bitgen_t *bg
    capsule = rng.bit_generator.capsule
    bg = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef Py_ssize_t step, a, b, c, var, i, j, k, x, y, s0, s1
    cdef int32_t *row_i
    cdef int32_t *row_j
    cdef double d, p, w
    cdef bint other
    cdef uint8_t newv, old
    cdef int32_t cl

    with rng.bit_generator.lock:
        for step in range(nsteps):
            t += 1
            if alpha > 0.0 and bg.next_double(bg.state) < alpha:
                var = ctx[<Py_ssize_t>(bg.next_double(bg.state) * nctx)]
            else:
                var = free[<Py_ssize_t>(bg.next_double(bg.state) * nfree)]
            d = 0.0
            for a in range(vc_ptr[var], vc_ptr[var + 1]):
                cl = vc_clause[a]
                other = False
                for b in range(cl_ptr[cl], cl_ptr[cl + 1]):
                    if lit_var[b] != var and st[lit_var[b]] == lit_pos[b]:
                        other = True
                        break
                if not other:
                    w = weights[cl]
                    if vc_sign[a]:
                        d += w
                    else:
                        d -= w
            p = _sigmoid(d)
            newv = 1 if bg.next_double(bg.state) < p else 0
            old = st[var]
            if newv != old:
                _touch(on, la, var, old, t)
                st[var] = newv
            if not orbit_moves:
                continue
            c = 0
            for j in range(nctx):
                c |= (<Py_ssize_t>st[ctx[j]]) << j
            k = kslots[c]
            if k == 0:
                continue
            i = <Py_ssize_t>(bg.next_double(bg.state) * k)
            j = <Py_ssize_t>(bg.next_double(bg.state) * (k - 1))
            if j >= i:
                j += 1
            s0 = sup_ptr[c]
            s1 = sup_ptr[c + 1]
            row_i = base + (c * kmax + i) * deg
            row_j = base + (c * kmax + j) * deg
            # every support point is rewritten below, so settle its accumulator
            # now (harmless when the value ends up unchanged, and branch-free)
            for a in range(s0, s1):
                x = sup[a]
                tmp[x] = st[x]
                on[x] += (t - 1 - la[x]) * st[x]
                la[x] = t - 1
            # the new slot value is written and applied in the same pass
            if bg.next_double(bg.state) < 0.5:
                # slot_i <- slot_i * slot_j reads row_i at arbitrary points
                for a in range(s0, s1):
                    x = sup[a]
                    pscratch[x] = row_i[row_j[x]]
                for a in range(s0, s1):
                    x = sup[a]
                    y = pscratch[x]
                    row_i[x] = y
                    st[y] = tmp[x]
            else:
                # slot_i <- slot_j * slot_i is safe in place
                for a in range(s0, s1):
                    x = sup[a]
                    y = row_j[row_i[x]]
                    row_i[x] = y
                    st[y] = tmp[x]
    return t
