"""Builds the optional compiled trajectory kernel.

The package works without it: routesignal.backend falls back to the pure
Python loop when the extension is missing or ROUTESIGNAL_PURE=1 is set.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "routesignal._kernels",
                ["src/routesignal/_kernels.pyx"],
                # keep Cython and pure-Python trajectories bit-identical:
                # no fp contraction, no fast-math reassociation
                extra_compile_args=["-O2", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
