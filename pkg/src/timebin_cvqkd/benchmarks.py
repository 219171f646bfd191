"""Reference operating points used by the reproduction harness.

These constants are the optimized source intensities, post-selection
thresholds and decoy levels of the protocol benchmark runs that the
``reproduce`` subcommands regenerate, together with the Z-basis error rates
quoted for them.
"""

#: Ideal-channel operating points: distance_km -> {i: (mu, tau, e_z)} for the
#: i-photon protocol; missing i means no positive rate was quoted there.
IDEAL_POINTS = {
    0.0: {1: (0.356, 1.437, 0.3095), 2: (1.487, 1.641, 0.1052),
          3: (2.395, 1.845, 0.0531), 4: (2.395, 1.845, 0.0531)},
    10.0: {1: (0.137, 3.476, 0.2980), 2: (0.924, 2.253, 0.1484),
           3: (1.887, 2.457, 0.0566), 4: (2.395, 2.457, 0.0417)},
    20.0: {2: (0.728, 3.068, 0.1548), 3: (1.487, 3.068, 0.0691),
           4: (1.887, 3.272, 0.0385)},
    40.0: {2: (0.356, 4.495, 0.2852), 3: (0.728, 4.495, 0.1707),
           4: (1.172, 4.699, 0.0881)},
}

#: Practical-setup operating points of the two-photon decoy protocol:
#: (distance_km, mu, tau, nu1, nu2); the fourth intensity is vacuum.
PRACTICAL_POINTS = (
    (0.0, 1.487, 1.641, 1.737e-1, 1.000e-4),
    (5.0, 1.172, 2.049, 3.406e-3, 2.740e-4),
    (10.0, 0.924, 2.457, 2.993e-2, 1.000e-4),
    (15.0, 0.924, 3.068, 1.861e-2, 1.000e-4),
    (20.0, 0.728, 3.476, 1.355e-2, 2.441e-4),
    (25.0, 0.728, 4.291, 1.355e-2, 1.562e-4),
)

#: Practical-setup channel assumptions.
PRACTICAL_XI = 1e-3
PRACTICAL_DELTA_DEG = 5.0

#: Fixed decoy levels of the noiseless benchmark curves.
NOISELESS_DECOYS = (1.2e-4, 1.0e-4)

#: Asymptotic zero-distance rate quoted for the protocol with unbounded
#: photon-number components.
UNBOUNDED_COMPONENT_RATE_0KM = 0.31

ATTENUATION_DB_PER_KM = 0.2
