"""Pure-numpy RK4 kernels (fallback backend).

Vectorized over samples; per-sample arithmetic mirrors the compiled kernels
operation for operation so both backends agree to the last bit for the
harmonic force (the Gaussian force differs only in exp rounding).

Time tables are sampled on half steps: step j of [j0, j1) reads entries
2j, 2j+1, 2j+2. h is the full step, mass the ion mass (SI).
"""

import numpy as np


def harmonic_segment(z, p, k_half, g_half, j0, j1, h, mass):
    """Advance (z, p) in place under the force g(t) - k(t) z."""
    half = 0.5 * h
    sixth = h / 6.0
    for j in range(j0, j1):
        ka, ga = k_half[2 * j], g_half[2 * j]
        kb, gb = k_half[2 * j + 1], g_half[2 * j + 1]
        kc, gc = k_half[2 * j + 2], g_half[2 * j + 2]

        k1z = p / mass
        k1p = ga - ka * z
        k2z = (p + half * k1p) / mass
        k2p = gb - kb * (z + half * k1z)
        k3z = (p + half * k2p) / mass
        k3p = gb - kb * (z + half * k2z)
        k4z = (p + h * k3p) / mass
        k4p = gc - kc * (z + h * k3z)

        z += sixth * (((k1z + 2.0 * k2z) + 2.0 * k3z) + k4z)
        p += sixth * (((k1p + 2.0 * k2p) + 2.0 * k3p) + k4p)


def gauss_segment(z, p, escaped, U1_half, U2_half,
                  amp1, c1, s1, amp2, c2, s2, charge,
                  z_lo, z_hi, j0, j1, h, mass):
    """Advance (z, p) in place under V(z, t) = q [phi1(z) U1(t) + phi2(z) U2(t)]
    with Gaussian shape functions phi_i = A_i exp(-(z - c_i)^2 / (2 s_i^2)).

    Samples flagged in escaped (uint8) are frozen. After each step, samples
    outside [z_lo, z_hi] are flagged and stop evolving.
    """
    half = 0.5 * h
    sixth = h / 6.0
    w1 = -0.5 / (s1 * s1)
    w2 = -0.5 / (s2 * s2)
    q1 = charge * amp1 / (s1 * s1)
    q2 = charge * amp2 / (s2 * s2)
    active = escaped == 0

    def force(zz, u1, u2):
        d1 = zz - c1
        d2 = zz - c2
        return q1 * u1 * d1 * np.exp(w1 * (d1 * d1)) + q2 * u2 * d2 * np.exp(w2 * (d2 * d2))

    for j in range(j0, j1):
        u1a, u2a = U1_half[2 * j], U2_half[2 * j]
        u1b, u2b = U1_half[2 * j + 1], U2_half[2 * j + 1]
        u1c, u2c = U1_half[2 * j + 2], U2_half[2 * j + 2]

        k1z = p / mass
        k1p = force(z, u1a, u2a)
        k2z = (p + half * k1p) / mass
        k2p = force(z + half * k1z, u1b, u2b)
        k3z = (p + half * k2p) / mass
        k3p = force(z + half * k2z, u1b, u2b)
        k4z = (p + h * k3p) / mass
        k4p = force(z + h * k3z, u1c, u2c)

        znew = z + sixth * (((k1z + 2.0 * k2z) + 2.0 * k3z) + k4z)
        pnew = p + sixth * (((k1p + 2.0 * k2p) + 2.0 * k3p) + k4p)
        np.copyto(z, znew, where=active)
        np.copyto(p, pnew, where=active)
        active &= (z >= z_lo) & (z <= z_hi)

    np.copyto(escaped, (~active).astype(np.uint8))
