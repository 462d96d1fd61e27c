import os

from setuptools import setup

# The compiled kernel core is optional: the package falls back to the pure
# numpy kernels when the extension is unavailable. NDG_NO_EXT=1 skips the
# build entirely.
ext_modules = []
if os.environ.get("NDG_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "ndgait._kernels._core",
                    ["src/ndgait/_kernels/_core.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except Exception as exc:  # noqa: BLE001 - any failure means "no extension"
        print(f"ndgait: skipping compiled kernels ({exc}); numpy fallback will be used")
        ext_modules = []

setup(ext_modules=ext_modules)
