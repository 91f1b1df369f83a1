"""Build script: compiles the optional raycast kernel, falling back to pure Python.

The compiled extension is a performance add-on only; every code path has a
numpy fallback selected at import time (see capnav.kernels). Set
CAPNAV_SKIP_EXT=1 to skip the compile step entirely.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """build_ext that downgrades compiler failures to a warning."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"capnav: skipping compiled kernels ({exc}); pure-python fallback will be used")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"capnav: failed to build {ext.name} ({exc}); pure-python fallback will be used")


ext_modules = []
if os.environ.get("CAPNAV_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            ["src/capnav/_raycast.pyx"],
            language_level="3",
        )
    except Exception as exc:
        print(f"capnav: Cython unavailable ({exc}); pure-python fallback will be used")

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
