"""Pseudospectral simulator for the defocusing energy-critical stochastic
nonlinear wave equation

    u_tt - Laplace(u) + |u|^(p-1) u = phi xi,    p = 1 + 4/(d-2),

on the torus T^d = (R / 2 pi Z)^d, driven by space-time white noise colored
by a Fourier multiplier phi.

Conventions (fixed once, used everywhere)
-----------------------------------------
* Frequencies are integer vectors n in Z^d, |n| Euclidean, <n> = (1+|n|^2)^(1/2).
* Basis functions are the orthonormal exponentials e_n = exp(i n.x)/(2 pi)^(d/2),
  so the l^2 norm of the coefficients *is* the L^2(T^d) norm and
  ||f||_{H^s}^2 = sum <n>^(2s) |f_n|^2 with no 2-pi bookkeeping.
* The driving cylindrical noise attaches to each exponential mode a complex
  Brownian motion whose real and imaginary parts are independent standard
  Brownian motions (conjugate-coupled across +-n so the forcing is real; the
  zero mode is real with the matching total variance 2t).  Under this
  normalization the ensemble-mean energy of the truncated system grows at
  exactly rate sum phi_n^2 per unit time, which is the identity the Ito-drift
  diagnostic verifies.
"""

from snlw.spectral import (
    FourierGrid,
    SpectralField,
    SpectralState,
    BlowupError,
    sobolev_norm,
    to_physical,
    from_physical,
    nonlinearity,
)
from snlw.noise import (
    NoiseMultiplier,
    ConvolutionState,
    NoiseStream,
    hs_norm,
    mode_covariance,
    step_convolution,
)
from snlw.solver import SolverConfig, TrajectoryRecord, linear_propagate, step, simulate
from snlw.lwp import XNorm, PicardReport, x_norm, picard_solve, adaptive_partition, detect_blowup
from snlw.energy import energy, ito_drift_check, gronwall_envelope, perturbation_scaling

__version__ = "0.1.0"
