"""phi-divergence regularized infinity-Wasserstein distributionally robust optimization.

Submodules: :mod:`divergence`, :mod:`inner`, :mod:`density`, :mod:`mlmc`,
:mod:`train`, :mod:`regfx`, :mod:`apps` and the ``phidro`` command line
(:mod:`cli`).
"""

__version__ = "0.1.0"
