"""Build the optional compiled tracing kernel; the package works without it."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("DETREFLECT_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("detreflect._ctrace", ["src/detreflect/_ctrace.pyx"],
                       include_dirs=[numpy.get_include()],
                       extra_compile_args=["-O3", "-fno-builtin-sin", "-fno-builtin-cos"],  # no sincos fusion
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
            compiler_directives={"language_level": 3},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
