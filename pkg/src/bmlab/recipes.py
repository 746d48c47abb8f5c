"""Body pairs at a prescribed volume ratio R across dimensions.

R(K, T) = Vol((K + T) / 2) / sqrt(Vol K Vol T) is scale invariant, so each
recipe fixes K in isotropic position and solves for a one-parameter
deformation T of K.

box_scale
    K = [-sqrt3, sqrt3]^n and T = s K, giving R = ((1 + s) / (2 sqrt s))^n,
    so sqrt(s) = q + sqrt(q^2 - 1) with q = R^(1/n).

ellipsoid_stretch
    K = the isotropic ball and T = K stretched by t along the first axis.
    (K + T)/2 is a body of revolution whose meridian is the average of a
    disk and an ellipse with semi-axes (t, 1). Its volume is an integral
    over the meridian boundary, parametrized by the outward normal angle.

box_fixed_ratio
    T = s K with s given: R = ((1 + s) / (2 sqrt s))^n grows with n, so
    this recipe misses any fixed target and serves as a negative control.
"""

import math

import numpy as np
from scipy import integrate, optimize, special

from .bodies import Box, Ellipsoid, isotropic_ball, isotropic_cube
from .errors import InvalidInputError, RecipeError

R_TOLERANCE = 0.02


def box_ratio(s, n):
    return ((1.0 + s) / (2.0 * math.sqrt(s))) ** n


def box_scale_for(R, n):
    q = R ** (1.0 / n)
    return (q + math.sqrt(q * q - 1.0)) ** 2


def ellipsoid_stretch_ratio(t, n):
    """R for the unit ball against the ball stretched by t along one axis."""
    if t == 1.0:
        return 1.0
    t2 = t * t

    def integrand(phi):
        c, sn = math.cos(phi), math.sin(phi)
        s = math.sqrt(t2 * c * c + sn * sn)
        rho = 0.5 * sn * (1.0 + 1.0 / s)
        dx = 0.5 * (sn * (1.0 + t2 / s) + t2 * c * c * sn * (1.0 - t2) / s ** 3)
        return math.exp((n - 1) * math.log(rho)) * dx if rho > 0 else 0.0

    half, _ = integrate.quad(integrand, 0.0, math.pi / 2, limit=200, epsabs=0.0, epsrel=1e-12)
    # omega_{n-1} / omega_n
    log_ratio = special.gammaln(n / 2 + 1) - special.gammaln((n - 1) / 2 + 1) - 0.5 * math.log(math.pi)
    return 2.0 * half * math.exp(log_ratio) / math.sqrt(t)


def ellipsoid_stretch_for(R, n):
    f = lambda t: ellipsoid_stretch_ratio(t, n) - R
    hi = 2.0
    while f(hi) < 0:
        hi *= 2.0
        if hi > 1e6:
            raise RecipeError(f"no stretch reaches R={R} in n={n}")
    return optimize.brentq(f, 1.0, hi, xtol=1e-14, rtol=1e-14)


def stretched(K, t):
    A = np.array(K.A, copy=True)
    A[0] *= t
    return Ellipsoid(A)


def fixed_R_pair(recipe, n, R, param=None):
    """(K, T, R_actual) for the named recipe; RecipeError if R_actual misses R by > 2%."""
    if R < 1:
        raise InvalidInputError("target R must be >= 1")
    if recipe == "box_scale":
        K = isotropic_cube(n)
        s = box_scale_for(R, n)
        T = Box(K.a * s)
        actual = box_ratio(s, n)
    elif recipe == "ellipsoid_stretch":
        K = isotropic_ball(n)
        t = ellipsoid_stretch_for(R, n)
        T = stretched(K, t)
        actual = ellipsoid_stretch_ratio(t, n)
    elif recipe == "box_fixed_ratio":
        if param is None:
            raise InvalidInputError("box_fixed_ratio needs the per-axis ratio")
        K = isotropic_cube(n)
        T = Box(K.a * param)
        actual = box_ratio(param, n)
    elif recipe == "identical":
        K = isotropic_cube(n)
        T = K
        actual = 1.0
    else:
        raise InvalidInputError(f"unknown recipe {recipe!r}")
    if abs(actual / R - 1.0) > R_TOLERANCE:
        raise RecipeError(f"recipe {recipe!r} gives R={actual:.6g} in n={n}, target {R}")
    return K, T, actual


RECIPES = ("box_scale", "ellipsoid_stretch", "box_fixed_ratio", "identical")
