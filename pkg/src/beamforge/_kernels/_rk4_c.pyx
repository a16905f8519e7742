# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled RK4 kernels (hot path).

Same stage arithmetic as _rk4_py, per sample, so both backends agree.
Loops run without the GIL so caller-level thread pools parallelize.
"""

from libc.math cimport exp


def harmonic_segment(double[::1] z, double[::1] p,
                     double[::1] k_half, double[::1] g_half,
                     Py_ssize_t j0, Py_ssize_t j1, double h, double mass):
    """Advance (z, p) in place under the force g(t) - k(t) z."""
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i, j
    cdef double ka, ga, kb, gb, kc, gc
    cdef double zi, pi, k1z, k1p, k2z, k2p, k3z, k3p, k4z, k4p

    with nogil:
        for i in range(n):
            zi = z[i]
            pi = p[i]
            for j in range(j0, j1):
                ka = k_half[2 * j]
                ga = g_half[2 * j]
                kb = k_half[2 * j + 1]
                gb = g_half[2 * j + 1]
                kc = k_half[2 * j + 2]
                gc = g_half[2 * j + 2]

                k1z = pi / mass
                k1p = ga - ka * zi
                k2z = (pi + half * k1p) / mass
                k2p = gb - kb * (zi + half * k1z)
                k3z = (pi + half * k2p) / mass
                k3p = gb - kb * (zi + half * k2z)
                k4z = (pi + h * k3p) / mass
                k4p = gc - kc * (zi + h * k3z)

                zi = zi + sixth * (((k1z + 2.0 * k2z) + 2.0 * k3z) + k4z)
                pi = pi + sixth * (((k1p + 2.0 * k2p) + 2.0 * k3p) + k4p)
            z[i] = zi
            p[i] = pi


cdef inline double _gauss_force(double zz, double u1, double u2,
                                double c1, double c2, double w1, double w2,
                                double q1, double q2) nogil:
    cdef double d1 = zz - c1
    cdef double d2 = zz - c2
    return q1 * u1 * d1 * exp(w1 * (d1 * d1)) + q2 * u2 * d2 * exp(w2 * (d2 * d2))


def gauss_segment(double[::1] z, double[::1] p, unsigned char[::1] escaped,
                  double[::1] U1_half, double[::1] U2_half,
                  double amp1, double c1, double s1,
                  double amp2, double c2, double s2, double charge,
                  double z_lo, double z_hi,
                  Py_ssize_t j0, Py_ssize_t j1, double h, double mass):
    """Advance (z, p) in place under the two-Gaussian electrode potential;
    freeze and flag samples leaving [z_lo, z_hi]."""
    cdef double half = 0.5 * h
    cdef double sixth = h / 6.0
    cdef double w1 = -0.5 / (s1 * s1)
    cdef double w2 = -0.5 / (s2 * s2)
    cdef double q1 = charge * amp1 / (s1 * s1)
    cdef double q2 = charge * amp2 / (s2 * s2)
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t i, j
    cdef double u1a, u2a, u1b, u2b, u1c, u2c
    cdef double zi, pi, k1z, k1p, k2z, k2p, k3z, k3p, k4z, k4p

    with nogil:
        for i in range(n):
            if escaped[i]:
                continue
            zi = z[i]
            pi = p[i]
            for j in range(j0, j1):
                u1a = U1_half[2 * j]
                u2a = U2_half[2 * j]
                u1b = U1_half[2 * j + 1]
                u2b = U2_half[2 * j + 1]
                u1c = U1_half[2 * j + 2]
                u2c = U2_half[2 * j + 2]

                k1z = pi / mass
                k1p = _gauss_force(zi, u1a, u2a, c1, c2, w1, w2, q1, q2)
                k2z = (pi + half * k1p) / mass
                k2p = _gauss_force(zi + half * k1z, u1b, u2b, c1, c2, w1, w2, q1, q2)
                k3z = (pi + half * k2p) / mass
                k3p = _gauss_force(zi + half * k2z, u1b, u2b, c1, c2, w1, w2, q1, q2)
                k4z = (pi + h * k3p) / mass
                k4p = _gauss_force(zi + h * k3z, u1c, u2c, c1, c2, w1, w2, q1, q2)

                zi = zi + sixth * (((k1z + 2.0 * k2z) + 2.0 * k3z) + k4z)
                pi = pi + sixth * (((k1p + 2.0 * k2p) + 2.0 * k3p) + k4p)
                if zi < z_lo or zi > z_hi:
                    escaped[i] = 1
                    break
            z[i] = zi
            p[i] = pi
