from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    # Pure-Python install: regionwalk.eigen falls back to the numpy kernel.
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "regionwalk._jacobi",
                ["src/regionwalk/_jacobi.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
