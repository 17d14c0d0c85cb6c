"Sphinx configuration for the locolm API reference"

import os
import sys
sys.path.insert(0, os.path.abspath('../..'))

project = 'locolm'
copyright = '2026, locolm developers'
author = 'locolm developers'
release = '0.0.1'

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.napoleon",
    # the divergence and dispersion statistics are written with :math:
    "sphinx.ext.mathjax",
    "sphinx.ext.doctest",
]

exclude_patterns = []

html_theme = 'alabaster'
html_theme_options = {
    "description": "language models conditioned on the place of a post",
    "page_width": "70em",
}

autodoc_member_order = "bysource"
autodoc_typehints = "description"
napoleon_google_docstring = True
napoleon_numpy_docstring = False
nitpicky = False
