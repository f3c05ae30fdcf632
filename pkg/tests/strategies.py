"""Hypothesis strategies for in-support parameters and designs."""

from hypothesis import assume
from hypothesis import strategies as st

from accelrb.model import ExperimentDesign, Mode, ModelParams


@st.composite
def params(draw, p_lo=0.5, interior=True):
    eps = 1e-3 if interior else 0.0
    pt = draw(st.floats(p_lo, 1.0 - eps))
    pr = draw(st.floats(p_lo, 1.0 - eps))
    B = draw(st.floats(eps, 1.0 - eps))
    A = draw(st.floats(max(-B, -1.0) + eps, min(1.0 - B, 1.0) - eps))
    assume(abs(A) > 1e-3 or not interior)
    return ModelParams(pt, pr, A, B)


@st.composite
def designs(draw, m_max=200):
    m = draw(st.integers(1, m_max))
    mode = draw(st.sampled_from([Mode.REFERENCE, Mode.INTERLEAVED]))
    return ExperimentDesign(m, mode)
