"""Frozen oracle values; regenerate with scripts/compute_oracles.py."""

LAM = -7.0
MU = 0.1
Z_FUNNEL = -7.935889894354068

# fixed-step RK4 (h=1e-5) with half-step worst-case shifts
M_J = {-9.0: -8.598060510964357, -8.5: -8.192070380330362, -8.0: -7.7823882841206435, -7.5: -7.369211315705039, -7.0: -6.952724222900242}
M_J_HALF_STEP_SHIFT = 1.0658141036401503e-13
M_A_PLUS = {-9.0: -8.551549220651017, -8.5: -8.233437982392303, -8.0: -7.938839312634695, -7.5: -7.673872713664301, -7.0: -7.447265913183228}
M_A_PLUS_HALF_STEP_SHIFT = 2.362554596402333e-13

SECTION_CROSS_STATE = (1.1, -7.938839312634695)
SECTION_CROSS_TIME = 0.1930248219081232

CANARD_POINTS = {0.5: (0.5474835145085136, -8.204640111292457), 1.0: (0.0639970169603139, -8.118227407207428), 1.5: (-0.3616618585291608, -7.856514348601891)}
CANARD_END_Z = -7.6178165823589215
CANARD_ARCLENGTH = 2.1916005558121903
CANARD_KNEE_Z = -8.214838276391232
CANARD_RICHARDSON_SHIFT = 4.924770425906999e-07

M_F_AT_ARC = {0.5: -7.942580681953872, 1.0: -7.883363535773247, 1.5: -7.720234859056419}
M_B_AT_ARC = {0.5: -8.28656052085109, 1.0: -8.191650949384076, 1.5: -7.938447227442103}

MARGIN_DIRECT = 0.1164541708557092

# QR (numpy.linalg.lstsq) quadratic coefficients of m_a_plus
M_A_PLUS_QR_COEFFS = (-7.353035932824794, -0.4095879006776221, -0.060349244561109516)
