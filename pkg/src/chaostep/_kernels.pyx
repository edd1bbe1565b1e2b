# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled path-stepping kernels.

Expression-for-expression match with _kernels_py.py; the build disables
FP contraction so results are bit-identical with the numpy fallback.
"""


def affine_step(double[:, ::1] x, double[:, ::1] y,
                double[::1] a, double[::1] b,
                double[::1] c, double[::1] d,
                double s, double dt):
    """Advance paths one step in place; see _kernels_py.affine_step."""
    cdef Py_ssize_t i, j
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef double t1, t2
    for i in range(m):
        for j in range(n):
            t1 = ((a[j] + b[j] * x[i, j]) * y[i, j]) * s
            t2 = (c[j] + d[j] * x[i, j]) * dt
            x[i, j] = (x[i, j] + t1) + t2


def advance_paths_affine(double[:, ::1] x, double[:, :, ::1] ys,
                         double[::1] a, double[::1] b,
                         double[::1] c, double[::1] d,
                         double s, double dt):
    """Run all steps of ys (steps, paths, dim) through affine_step."""
    cdef Py_ssize_t k
    for k in range(ys.shape[0]):
        affine_step(x, ys[k], a, b, c, d, s, dt)
