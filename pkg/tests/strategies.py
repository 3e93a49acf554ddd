"""Shared hypothesis strategies."""

import numpy as np
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

sides = st.integers(min_value=2, max_value=9)


@st.composite
def images(draw, channels=3, lo=0.0, hi=2.0, h=None, w=None):
    h = h or draw(sides)
    w = w or draw(sides)
    elems = st.floats(lo, hi, allow_nan=False, allow_infinity=False, width=64)
    return draw(arrays(np.float64, (h, w, channels), elements=elems))


@st.composite
def image_pairs(draw, channels=3, lo=0.0, hi=2.0):
    h, w = draw(sides), draw(sides)
    return draw(images(channels, lo, hi, h, w)), draw(images(channels, lo, hi, h, w))
