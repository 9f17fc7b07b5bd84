"""Import smoke tests.

Worker processes import modules by name, so every module must import on its own
without side effects from the command line.
"""

import importlib
import pkgutil

import pytest

import c2lt3d


def _all_submodules():
    return sorted(
        info.name
        for info in pkgutil.walk_packages(c2lt3d.__path__, prefix="c2lt3d.")
    )


@pytest.mark.parametrize("module_name", _all_submodules())
def test_module_imports(module_name):
    importlib.import_module(module_name)
