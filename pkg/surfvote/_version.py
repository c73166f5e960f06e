# This module is imported from __init__.py and executed from setup.py
# master (development) branch format must be in MAJOR.MINOR-dev
# release branches format must be MAJOR.MINOR.PATCH
__version__ = "0.1-dev"
