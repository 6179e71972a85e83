"""Builds the optional compiled loop kernel.

The package works without it (a pure-Python kernel is selected at import
time); the extension just makes long closed-loop runs much faster.  Any
build failure (no Cython, no C compiler) downgrades to a pure-Python
install instead of failing.
"""

import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible; warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing toolchain
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # compiler error
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            f"warning: compiled kernel not built ({exc}); "
            "falling back to the pure-Python kernel",
            file=sys.stderr,
        )


ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "thermobalance._stepper_cy",
                ["src/thermobalance/_stepper_cy.pyx"],
            )
        ],
        language_level="3",
    )
except ImportError:
    print("warning: Cython not available; skipping the compiled kernel", file=sys.stderr)

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
