#!/usr/bin/env python3
# Package metadata lives in pyproject.toml. This shim keeps legacy
# `python setup.py ...` invocations working and must not repeat that metadata.
from setuptools import setup

setup()
