import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = []
if cythonize is not None:
    ext = Extension(
        "coarseqest._backend._speedups",
        ["src/coarseqest/_backend/_speedups.pyx"],
        include_dirs=[numpy.get_include()],
        # -ffp-contract=off: the pure-python backend must reproduce the
        # kernel bit-for-bit; fused multiply-adds would break that.
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    # If no C toolchain is available the package still works on the
    # pure-python backend selected at import time.
    ext.optional = True
    extensions = cythonize(
        [ext],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )

setup(ext_modules=extensions)
