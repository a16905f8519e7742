"""Build script: compiles the RK4 integrator kernels to a C extension.

The package works without the extension (a numpy fallback is selected at
import time), so a missing or broken C toolchain only costs speed.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Degrade to the pure-numpy kernels if compilation fails."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"warning: C extension build failed ({exc}); "
                  "beamforge will use the numpy kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "beamforge will use the numpy kernels")


ext = Extension(
    "beamforge._kernels._rk4_c",
    ["src/beamforge/_kernels/_rk4_c.pyx"],
    # no FMA contraction: keeps the compiled kernels arithmetically
    # identical to the numpy fallback, operation for operation
    extra_compile_args=["-O3", "-ffp-contract=off"],
)

try:
    from Cython.Build import cythonize
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    print("warning: Cython not available; beamforge will use the numpy kernels")
    ext_modules = []

setup(
    ext_modules=ext_modules,
    cmdclass={"build_ext": optional_build_ext},
)
