"""Builds the optional compiled kernel core; the package works without it."""
import os

from setuptools import setup
from setuptools.command.build_ext import build_ext

# OSAAS_PROBE_NATIVE=1 tunes the kernels for the build machine's CPU
COMPILE_ARGS = ["-O3"] + (["-march=native"] if os.environ.get("OSAAS_PROBE_NATIVE") == "1" else [])

ext_modules = []
if os.environ.get("OSAAS_PROBE_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "osaas_probe.kernels._ckernels",
                    ["src/osaas_probe/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=COMPILE_ARGS,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or failed
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc}); using numpy fallback")


setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
