# flake8: noqa
#
# ddlab documentation build configuration file.
#
# This file is execfile()d with the current directory set to its containing dir.

from __future__ import annotations

import os
import re
import sys

# Get the project root dir, which is the parent dir of this
cwd = os.getcwd()
project_root = os.path.dirname(cwd)

# Insert the source dir first so autodoc documents this checkout
sys.path.insert(0, os.path.join(project_root, "src"))

# -- General configuration -----------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.mathjax",
]

templates_path = ["_templates"]
source_suffix = ".rst"
master_doc = "index"

project = "ddlab"
copyright = "ddlab contributors"


def _get_version() -> str:
    # setup.cfg reads the version from the package, so do the same
    init_path = os.path.join(project_root, "src", "ddlab", "__init__.py")
    with open(init_path) as init_fp:
        versions = re.findall(r'^__version__ = "([^"]+)"', init_fp.read(), re.M)

    assert len(versions) == 1
    return versions[0]


version = _get_version()
# The full version, including alpha/beta/rc tags.
release = version

exclude_patterns = [
    "_build",
    "venv",
]

pygments_style = "sphinx"

autodoc_member_order = "bysource"


# -- Options for HTML output ---------------------------------------------------

html_theme = "furo"

htmlhelp_basename = "ddlabdoc"


# -- Options for manual page output --------------------------------------------

man_pages = [("usage", "ddlab", "ddlab Documentation", ["ddlab contributors"], 1)]
