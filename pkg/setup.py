import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# The compiled core is optional: if the build fails on an exotic toolchain the
# package falls back to the numpy implementation selected in bregmin._accel.
extensions = [
    Extension(
        "bregmin._accel._core",
        ["src/bregmin/_accel/_core.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
