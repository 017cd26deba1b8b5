from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension
except ImportError:
    # no Cython: install the pure-Python fallback only
    pass
else:
    ext_modules = cythonize(
        [Extension("metricdst._kernels", ["src/metricdst/_kernels.pyx"],
                   extra_compile_args=["-O3"])],
        language_level=3,
    )

setup(ext_modules=ext_modules)
